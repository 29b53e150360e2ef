//! Nonlinear-instability bookkeeping for a finite combination of normal modes
//! sharing one wavevector: admissibility of the coefficients, the growth
//! envelope `F_N(t) = Σ_{j≥j_m} |C_j| e^{λ_j t}`, the escape time `T^δ`,
//! initial-data constants and the mode-sum lower bound.
//!
//! Modes enter as quadrature samples of their vertical profiles; the
//! horizontal factors `cos(k·x')`, `sin(k·x')` over the period cell
//! `(2πL)²` contribute a factor `(2πL)²/2` to every L² product.

use serde::{Deserialize, Serialize};

use crate::dispersion::WaveVector;
use crate::error::{Error, Result};
use crate::modes::{ModeDocument, ModeSamples, NormalMode};
use crate::profile::{DensityProfile, PhysicalParams};

/// Relative slack accepted by [`max_lambda_inequality`].
pub const MAX_LAMBDA_TOL: f64 = 1e-8;
/// Relative tolerance on the escape equation `δF_N(T) = ε₀`.
pub const ESCAPE_TOL: f64 = 1e-12;
const SAME_K_TOL: f64 = 1e-12;

/// Vertical profiles of one normal mode at quadrature points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeProfile {
    pub wavevector: WaveVector,
    pub lambda: f64,
    pub j: usize,
    #[serde(rename = "L")]
    pub length: f64,
    pub samples: ModeSamples,
}

impl ModeProfile {
    pub fn from_mode(mode: &NormalMode) -> Self {
        Self {
            wavevector: mode.wavevector,
            lambda: mode.lambda,
            j: mode.j,
            length: mode.params.length,
            samples: mode.quadrature_samples(),
        }
    }

    pub fn from_document(doc: &ModeDocument) -> Result<Self> {
        let m = &doc.metadata;
        let n = doc.quadrature.x.len();
        let s = &doc.quadrature;
        let cols = [
            &s.w, &s.eta, &s.deta, &s.d2eta, &s.v1, &s.dv1, &s.v2, &s.dv2, &s.phi, &s.dphi, &s.d2phi, &s.d3phi,
        ];
        if n == 0 || cols.iter().any(|c| c.len() != n) {
            return Err(Error::DimensionMismatch("mode document quadrature columns differ in length".into()));
        }
        Ok(Self {
            wavevector: WaveVector::new(m.k1, m.k2)?,
            lambda: m.lambda,
            j: m.j,
            length: m.length,
            samples: doc.quadrature.clone(),
        })
    }

    pub fn k(&self) -> f64 {
        self.wavevector.magnitude()
    }

    /// The same mode with every profile multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        let s = &mut out.samples;
        for col in [
            &mut s.eta, &mut s.deta, &mut s.d2eta, &mut s.v1, &mut s.dv1, &mut s.v2, &mut s.dv2, &mut s.phi,
            &mut s.dphi, &mut s.d2phi, &mut s.d3phi,
        ] {
            col.iter_mut().for_each(|v| *v *= c);
        }
        out
    }

    fn horizontal_factor(&self) -> f64 {
        let p = 2.0 * std::f64::consts::PI * self.length;
        0.5 * p * p
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeNorms {
    /// `‖u_j‖_{L²(Ω)}`
    pub velocity: f64,
    /// `‖θ_j‖_{L²(Ω)}`
    pub density: f64,
}

fn check_shared(modes: &[ModeProfile]) -> Result<()> {
    let Some(first) = modes.first() else {
        return Ok(());
    };
    let scale = first.k().max(1.0);
    for m in &modes[1..] {
        let dk = (m.wavevector.k1 - first.wavevector.k1)
            .abs()
            .max((m.wavevector.k2 - first.wavevector.k2).abs());
        if dk > SAME_K_TOL * scale {
            return Err(Error::MismatchedWavevectors);
        }
        if m.length != first.length {
            return Err(Error::InvalidParameter("modes have different periods L".into()));
        }
        if m.samples.x != first.samples.x || m.samples.w != first.samples.w {
            return Err(Error::DimensionMismatch("modes sampled on different quadratures".into()));
        }
    }
    Ok(())
}

/// L² norms over the period cell of every mode.
pub fn mode_l2_norms(modes: &[ModeProfile]) -> Result<Vec<ModeNorms>> {
    check_shared(modes)?;
    Ok(modes
        .iter()
        .map(|m| {
            let s = &m.samples;
            let c = m.horizontal_factor();
            let u: f64 = (0..s.w.len())
                .map(|i| s.w[i] * (s.v1[i] * s.v1[i] + s.v2[i] * s.v2[i] + s.phi[i] * s.phi[i]))
                .sum();
            let t: f64 = (0..s.w.len()).map(|i| s.w[i] * s.eta[i] * s.eta[i]).sum();
            ModeNorms {
                velocity: (c * u).sqrt(),
                density: (c * t).sqrt(),
            }
        })
        .collect())
}

/// Velocity Gram matrix `G_ij = ∫_Ω u_i·u_j`.
pub fn velocity_gram(modes: &[ModeProfile]) -> Result<Vec<Vec<f64>>> {
    check_shared(modes)?;
    let n = modes.len();
    let mut g = vec![vec![0.0; n]; n];
    for a in 0..n {
        for b in a..n {
            let (p, q) = (&modes[a].samples, &modes[b].samples);
            let v: f64 = (0..p.w.len())
                .map(|i| p.w[i] * (p.v1[i] * q.v1[i] + p.v2[i] * q.v2[i] + p.phi[i] * q.phi[i]))
                .sum();
            g[a][b] = modes[a].horizontal_factor() * v;
            g[b][a] = g[a][b];
        }
    }
    Ok(g)
}

/// Outcome of the coefficient conditions. Indices are 1-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Admissibility {
    pub admissible: bool,
    /// Some `C_j` with `j ≤ M` is nonzero.
    pub first_condition: bool,
    pub second_condition: bool,
    pub j_m: Option<usize>,
    #[serde(rename = "M")]
    pub m: usize,
    /// `½|C_{j_m}|·‖u_{j_m}‖`
    pub lead: f64,
    /// `Σ_{j>j_m} |C_j|·‖u_j‖`
    pub tail: f64,
}

/// Modes `1..N` at one wavevector with coefficients `C_1..C_N`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeCombination {
    modes: Vec<ModeProfile>,
    coefficients: Vec<f64>,
    lambda_max: f64,
    norms: Vec<ModeNorms>,
    m: usize,
    j_m: Option<usize>,
}

impl ModeCombination {
    /// `modes` ordered by strictly decreasing λ; `lambda_max` is Λ.
    pub fn new(modes: Vec<ModeProfile>, coefficients: Vec<f64>, lambda_max: f64) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::InvalidParameter("a combination needs at least one mode".into()));
        }
        if modes.len() != coefficients.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} modes but {} coefficients",
                modes.len(),
                coefficients.len()
            )));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("coefficients must be finite".into()));
        }
        if !(lambda_max > 0.0 && lambda_max.is_finite()) {
            return Err(Error::InvalidParameter(format!("Lambda must be positive, got {lambda_max}")));
        }
        if modes.iter().any(|m| !(m.lambda > 0.0)) {
            return Err(Error::InvalidParameter("mode growth rates must be positive".into()));
        }
        if modes.windows(2).any(|w| !(w[0].lambda > w[1].lambda)) {
            return Err(Error::InvalidParameter("mode growth rates must be strictly decreasing".into()));
        }
        if modes[0].lambda > lambda_max * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "lambda_1 = {} exceeds Lambda = {lambda_max}",
                modes[0].lambda
            )));
        }
        let norms = mode_l2_norms(&modes)?;
        let m = modes.iter().filter(|p| p.lambda > 2.0 * lambda_max / 3.0).count();
        let j_m = (0..m).find(|&j| coefficients[j] != 0.0);
        Ok(Self {
            modes,
            coefficients,
            lambda_max,
            norms,
            m,
            j_m,
        })
    }

    pub fn modes(&self) -> &[ModeProfile] {
        &self.modes
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn norms(&self) -> &[ModeNorms] {
        &self.norms
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.lambda).collect()
    }

    /// Count of modes with `λ_j > 2Λ/3`.
    pub fn m(&self) -> usize {
        self.m
    }

    /// 1-based index of the first nonzero coefficient among `j ≤ M`.
    pub fn j_m(&self) -> Option<usize> {
        self.j_m.map(|j| j + 1)
    }

    fn start(&self) -> usize {
        self.j_m.unwrap_or(0)
    }

    pub fn check_admissible(&self) -> Admissibility {
        let first_condition = self.j_m.is_some();
        let (lead, tail) = match self.j_m {
            Some(jm) => (
                0.5 * self.coefficients[jm].abs() * self.norms[jm].velocity,
                (jm + 1..self.modes.len())
                    .map(|j| self.coefficients[j].abs() * self.norms[j].velocity)
                    .sum(),
            ),
            None => (0.0, 0.0),
        };
        let second_condition = first_condition && lead > tail;
        Admissibility {
            admissible: first_condition && second_condition,
            first_condition,
            second_condition,
            j_m: self.j_m(),
            m: self.m,
            lead,
            tail,
        }
    }

    /// `F_N(t) = Σ_{j≥j_m} |C_j| e^{λ_j t}`.
    pub fn envelope_f(&self, t: f64) -> f64 {
        (self.start()..self.modes.len())
            .map(|j| self.coefficients[j].abs() * (self.modes[j].lambda * t).exp())
            .sum()
    }

    fn envelope_df(&self, t: f64) -> f64 {
        (self.start()..self.modes.len())
            .map(|j| {
                let l = self.modes[j].lambda;
                self.coefficients[j].abs() * l * (l * t).exp()
            })
            .sum()
    }

    /// Unique `T ≥ 0` with `δ·F_N(T) = ε₀`.
    pub fn escape_time(&self, delta: f64, epsilon0: f64) -> Result<f64> {
        if !(delta > 0.0 && delta.is_finite() && epsilon0 > 0.0 && epsilon0.is_finite()) {
            return Err(Error::InvalidParameter("delta and epsilon0 must be positive".into()));
        }
        let f0 = self.envelope_f(0.0);
        if !(f0 > 0.0) {
            return Err(Error::InvalidParameter("envelope is identically zero".into()));
        }
        if delta * f0 > epsilon0 {
            return Err(Error::AlreadyEscaped {
                value: delta * f0,
                epsilon0,
            });
        }
        let target = (epsilon0 / delta).ln();
        let h = |t: f64| self.envelope_f(t).ln() - target;
        if h(0.0) >= 0.0 {
            return Ok(0.0);
        }
        // F(t) ≥ F(0)·e^{λ_min t} bounds the root.
        let lambda_min = (self.start()..self.modes.len())
            .filter(|&j| self.coefficients[j] != 0.0)
            .map(|j| self.modes[j].lambda)
            .fold(f64::INFINITY, f64::min);
        let (mut lo, mut hi) = (0.0, (target - f0.ln()) / lambda_min);
        while h(hi) < 0.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if h(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-14 * hi {
                break;
            }
        }
        let mut t = 0.5 * (lo + hi);
        for _ in 0..4 {
            let step = h(t) * self.envelope_f(t) / self.envelope_df(t);
            t -= step;
            if step.abs() <= 1e-16 * t.abs() {
                break;
            }
        }
        Ok(t)
    }

    /// `‖u^N(t)‖²` from the velocity Gram matrix.
    pub fn velocity_norm_sq(&self, t: f64) -> Result<f64> {
        let g = velocity_gram(&self.modes)?;
        Ok(self.norm_sq_with(&g, t))
    }

    fn norm_sq_with(&self, g: &[Vec<f64>], t: f64) -> f64 {
        let a: Vec<f64> = (0..self.modes.len())
            .map(|j| self.coefficients[j] * (self.modes[j].lambda * t).exp())
            .collect();
        let mut s = 0.0;
        for i in 0..a.len() {
            for j in 0..a.len() {
                s += a[i] * a[j] * g[i][j];
            }
        }
        s.max(0.0)
    }

    /// `‖u^N(t)‖²` by quadrature of the summed profile.
    pub fn velocity_norm_sq_direct(&self, t: f64) -> f64 {
        let a: Vec<f64> = (0..self.modes.len())
            .map(|j| self.coefficients[j] * (self.modes[j].lambda * t).exp())
            .collect();
        let sum = |f: &dyn Fn(&ModeSamples) -> &Vec<f64>, i: usize| -> f64 {
            self.modes.iter().zip(&a).map(|(m, c)| c * f(&m.samples)[i]).sum()
        };
        let w = &self.modes[0].samples.w;
        let v: f64 = (0..w.len())
            .map(|i| {
                let (v1, v2, p) = (sum(&|s| &s.v1, i), sum(&|s| &s.v2, i), sum(&|s| &s.phi, i));
                w[i] * (v1 * v1 + v2 * v2 + p * p)
            })
            .sum();
        self.modes[0].horizontal_factor() * v
    }

    /// `C₅ = ½|C_{j_m}|·‖u_{j_m}‖ / Σ_{j≥j_m}|C_j|`; 0 without a leading mode.
    pub fn c5(&self) -> f64 {
        match self.j_m {
            Some(jm) => {
                let denom: f64 = self.coefficients[jm..].iter().map(|c| c.abs()).sum();
                0.5 * self.coefficients[jm].abs() * self.norms[jm].velocity / denom
            }
            None => 0.0,
        }
    }

    /// Checks `‖u^N(t)‖ ≥ C₅·F_N(t)` on `t_grid`.
    pub fn lower_bound_check(&self, t_grid: &[f64]) -> Result<LowerBoundCheck> {
        let g = velocity_gram(&self.modes)?;
        let c5 = self.c5();
        let mut empirical = f64::INFINITY;
        let mut holds = true;
        for &t in t_grid {
            let norm = self.norm_sq_with(&g, t).sqrt();
            let f = self.envelope_f(t);
            if f > 0.0 {
                empirical = empirical.min(norm / f);
            }
            if norm < c5 * f * (1.0 - 1e-12) {
                holds = false;
            }
        }
        Ok(LowerBoundCheck {
            holds,
            c5,
            empirical_constant: if empirical.is_finite() { empirical } else { 0.0 },
        })
    }

    /// `(C₁, C₂)` of the data `Σ C_j (θ_j, u_j)` at `t = 0`; C₁ is a discrete
    /// H³ surrogate (see [`h3_surrogate`]).
    pub fn initial_data_constants(&self) -> (f64, f64) {
        let s0 = &self.modes[0].samples;
        let n = s0.w.len();
        let comb = |f: &dyn Fn(&ModeSamples) -> &Vec<f64>| -> Vec<f64> {
            (0..n)
                .map(|i| self.modes.iter().zip(&self.coefficients).map(|(m, c)| c * f(&m.samples)[i]).sum())
                .collect()
        };
        let k = self.modes[0].wavevector;
        let kk = k.magnitude().powi(2);
        let d3 = comb(&|s| &s.d3phi);
        let eta = [comb(&|s| &s.eta), comb(&|s| &s.deta), comb(&|s| &s.d2eta)];
        let v1 = [comb(&|s| &s.v1), comb(&|s| &s.dv1), d3.iter().map(|v| -k.k1 * v / kk).collect()];
        let v2 = [comb(&|s| &s.v2), comb(&|s| &s.dv2), d3.iter().map(|v| -k.k2 * v / kk).collect()];
        let phi = [comb(&|s| &s.phi), comb(&|s| &s.dphi), comb(&|s| &s.d2phi), d3];
        let c = self.modes[0].horizontal_factor();
        let km = k.magnitude();
        let l2 = |f: &[f64]| -> f64 { (0..n).map(|i| s0.w[i] * f[i] * f[i]).sum() };
        let c2 = c * (l2(&eta[0]) + l2(&v1[0]) + l2(&v2[0]) + l2(&phi[0]));
        let c1 = c
            * (h3_surrogate(&eta, km, &l2)
                + h3_surrogate(&v1, km, &l2)
                + h3_surrogate(&v2, km, &l2)
                + h3_surrogate(&phi, km, &l2));
        (c1.sqrt(), c2.sqrt())
    }

    /// `max_{M<j≤N} |C_j| / |C_{j_m}|`, 0 when there is no such j.
    pub fn tail_ratio(&self) -> f64 {
        match self.j_m {
            Some(jm) => self.coefficients[self.m..]
                .iter()
                .map(|c| c.abs() / self.coefficients[jm].abs())
                .fold(0.0, f64::max),
            None => 0.0,
        }
    }
}

/// `Σ_{m≤3} Σ_{i≤min(m,p)} k^{2(m−i)} ∫|f^{(i)}|²` for vertical derivatives
/// `f^{(0..=p)}`: horizontal derivatives contribute powers of `k`, vertical
/// ones are truncated at the highest order available for the field.
pub fn h3_surrogate(derivs: &[Vec<f64>], k: f64, l2: &dyn Fn(&[f64]) -> f64) -> f64 {
    let norms: Vec<f64> = derivs.iter().map(|d| l2(d)).collect();
    let mut s = 0.0;
    for m in 0..=3usize {
        for (i, n) in norms.iter().enumerate().take(m + 1) {
            s += k.powi(2 * (m - i) as i32) * n;
        }
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundCheck {
    pub holds: bool,
    pub c5: f64,
    /// `min_t ‖u^N(t)‖ / F_N(t)` on the grid.
    pub empirical_constant: f64,
}

/// Both sides of the maximal-growth inequality for one mode:
/// `∫(gρ₀′|w₃|² − σρ₀′²|∇w₃|²) ≤ Λ²∫ρ₀|w|² + Λμ∫|∇w|²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxLambdaCheck {
    pub holds: bool,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs`
    pub slack: f64,
}

pub fn max_lambda_inequality(
    mode: &ModeProfile,
    lambda_max: f64,
    params: &PhysicalParams,
    profile: &DensityProfile,
) -> MaxLambdaCheck {
    let s = &mode.samples;
    let kk = mode.k().powi(2);
    let mut lhs = 0.0;
    let mut mass = 0.0;
    let mut grad = 0.0;
    for i in 0..s.w.len() {
        let [r, d1, _, _] = profile.derivatives(s.x[i]);
        let (p, dp) = (s.phi[i], s.dphi[i]);
        let grad_w3 = kk * p * p + dp * dp;
        lhs += s.w[i] * (params.g * d1 * p * p - params.sigma * d1 * d1 * grad_w3);
        let w2 = s.v1[i] * s.v1[i] + s.v2[i] * s.v2[i] + p * p;
        mass += s.w[i] * r * w2;
        grad += s.w[i] * (kk * w2 + s.dv1[i] * s.dv1[i] + s.dv2[i] * s.dv2[i] + dp * dp);
    }
    let c = mode.horizontal_factor();
    let lhs = c * lhs;
    let rhs = c * (lambda_max * lambda_max * mass + lambda_max * params.mu * grad);
    let slack = rhs - lhs;
    MaxLambdaCheck {
        holds: slack >= -MAX_LAMBDA_TOL * rhs.abs(),
        lhs,
        rhs,
        slack,
    }
}

/// Stand-ins for the constants of the a priori estimates, which carry no
/// computable values; supplied by the user.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonConstants {
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub delta0: f64,
}

/// `min(C₂δ₀/C₃, C₂²/(2C₄(1+(N−M)C̃)³), C₅²/(4C₄(1+(N−M)C̃)³))`.
pub fn epsilon_threshold(k: &EpsilonConstants, n: usize, m: usize, tail_ratio: f64) -> Result<f64> {
    let vals = [k.c2, k.c3, k.c4, k.c5, k.delta0];
    if vals.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidParameter("epsilon constants must be positive".into()));
    }
    if m > n {
        return Err(Error::InvalidParameter("M cannot exceed N".into()));
    }
    let growth = (1.0 + (n - m) as f64 * tail_ratio).powi(3);
    Ok((k.c2 * k.delta0 / k.c3)
        .min(k.c2 * k.c2 / (2.0 * k.c4 * growth))
        .min(k.c5 * k.c5 / (4.0 * k.c4 * growth)))
}

/// Exported plan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstabilityPlan {
    pub k1: f64,
    pub k2: f64,
    #[serde(rename = "Lambda")]
    pub lambda_max: f64,
    pub delta: f64,
    pub epsilon0: f64,
    #[serde(rename = "T_delta")]
    pub t_delta: f64,
    pub coefficients: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub velocity_norms: Vec<f64>,
    pub density_norms: Vec<f64>,
    pub admissibility: Admissibility,
    #[serde(rename = "C1")]
    pub c1: f64,
    #[serde(rename = "C2")]
    pub c2: f64,
    #[serde(rename = "C5")]
    pub c5: f64,
    pub lower_bound: LowerBoundCheck,
    pub max_lambda: Vec<MaxLambdaCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_within_threshold: Option<bool>,
}

impl InstabilityPlan {
    /// `δ·F_N(T^δ)` recomputed from the stored fields.
    pub fn escape_value(&self) -> f64 {
        let start = self.admissibility.j_m.map(|j| j - 1).unwrap_or(0);
        self.delta
            * (start..self.lambdas.len())
                .map(|j| self.coefficients[j].abs() * (self.lambdas[j] * self.t_delta).exp())
                .sum::<f64>()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plans serialise")
    }
}

/// Number of grid points used for the lower-bound check on `[0, T^δ]`.
pub const PLAN_GRID: usize = 201;

pub fn build_plan(
    comb: &ModeCombination,
    delta: f64,
    epsilon0: f64,
    params: &PhysicalParams,
    profile: &DensityProfile,
    constants: Option<&EpsilonConstants>,
) -> Result<InstabilityPlan> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("delta must lie in (0, 1), got {delta}")));
    }
    let admissibility = comb.check_admissible();
    let t_delta = comb.escape_time(delta, epsilon0)?;
    let grid: Vec<f64> = (0..PLAN_GRID).map(|i| t_delta * i as f64 / (PLAN_GRID - 1) as f64).collect();
    let lower_bound = comb.lower_bound_check(&grid)?;
    let (c1, c2) = comb.initial_data_constants();
    let threshold = constants
        .map(|k| epsilon_threshold(k, comb.modes().len(), comb.m(), comb.tail_ratio()))
        .transpose()?;
    let first = &comb.modes()[0];
    Ok(InstabilityPlan {
        k1: first.wavevector.k1,
        k2: first.wavevector.k2,
        lambda_max: comb.lambda_max(),
        delta,
        epsilon0,
        t_delta,
        coefficients: comb.coefficients().to_vec(),
        lambdas: comb.lambdas(),
        velocity_norms: comb.norms().iter().map(|n| n.velocity).collect(),
        density_norms: comb.norms().iter().map(|n| n.density).collect(),
        admissibility,
        c1,
        c2,
        c5: comb.c5(),
        lower_bound,
        max_lambda: comb
            .modes()
            .iter()
            .map(|m| max_lambda_inequality(m, comb.lambda_max(), params, profile))
            .collect(),
        epsilon_threshold: threshold,
        epsilon_within_threshold: threshold.map(|t| epsilon0 < t),
    })
}
