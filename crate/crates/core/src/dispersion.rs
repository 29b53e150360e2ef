//! Characteristic values from the fixed point `γ_j(k, λ, σ) = λ`, the
//! unstable lattice set S, the maximal growth rate Λ and dispersion tables.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::inverse_iteration;
use crate::mesh::Mesh;
use crate::profile::{lambda_upper_bound, DensityProfile, PhysicalParams, SCAN_POINTS};
use crate::spectrum::{sigma_critical_k, OperatorBlocks};

pub const DEFAULT_FIXED_POINT_TOL: f64 = 1e-10;
const MAX_BISECTIONS: usize = 200;

/// A horizontal wavevector in `(L⁻¹ℤ)²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveVector {
    pub k1: f64,
    pub k2: f64,
}

impl WaveVector {
    pub fn new(k1: f64, k2: f64) -> Result<Self> {
        if !k1.is_finite() || !k2.is_finite() || (k1 == 0.0 && k2 == 0.0) {
            return Err(Error::InvalidParameter("wavevector must be finite and nonzero".into()));
        }
        Ok(Self { k1, k2 })
    }

    /// `(n1, n2)/L`.
    pub fn from_lattice(n1: i64, n2: i64, length: f64) -> Result<Self> {
        Self::new(n1 as f64 / length, n2 as f64 / length)
    }

    /// The wavevector `(k, 0)`.
    pub fn along_x1(k: f64) -> Result<Self> {
        Self::new(k, 0.0)
    }

    pub fn magnitude(&self) -> f64 {
        self.k1.hypot(self.k2)
    }
}

/// A solved root of `γ_j(k, λ) = λ` with its eigenvector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicValue {
    pub lambda: f64,
    /// 1-based index.
    pub j: usize,
    pub k: f64,
    pub sigma: f64,
    /// Clamped Hermite coefficients, `∫φ² = 1`, first significant dof positive.
    pub phi: Vec<f64>,
    pub gamma_residual: f64,
}

/// Bisection settings for the fixed-point solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FixedPointOptions {
    /// Required bound on `|γ_j(λ) − λ|` at the returned root.
    pub tol: f64,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_FIXED_POINT_TOL,
        }
    }
}

/// λ_j at wavenumber magnitude `k`, or `None` if `γ_j(k, 0⁺) ≤ 0`.
pub fn solve_lambda_j(
    mesh: &Mesh,
    profile: &DensityProfile,
    params: &PhysicalParams,
    k: f64,
    j: usize,
) -> Result<Option<CharacteristicValue>> {
    let blocks = OperatorBlocks::assemble(mesh, profile, params, k)?;
    let solver = FixedPointSolver::new(mesh, &blocks, lambda_upper_bound(profile, params))?;
    solver.solve(j, FixedPointOptions::default())
}

/// All roots λ₁ > λ₂ > … up to `j_max` at magnitude `k`; stops at the first
/// missing index.
pub fn solve_lambdas(
    mesh: &Mesh,
    profile: &DensityProfile,
    params: &PhysicalParams,
    k: f64,
    j_max: usize,
    options: FixedPointOptions,
) -> Result<Vec<CharacteristicValue>> {
    let blocks = OperatorBlocks::assemble(mesh, profile, params, k)?;
    let solver = FixedPointSolver::new(mesh, &blocks, lambda_upper_bound(profile, params))?;
    let mut out = Vec::new();
    for j in 1..=j_max {
        match solver.solve(j, options)? {
            Some(cv) => out.push(cv),
            None => break,
        }
    }
    Ok(out)
}

/// Fixed-point solves sharing one assembly.
pub struct FixedPointSolver<'a> {
    blocks: &'a OperatorBlocks,
    mass: crate::linalg::SymMatrix,
    upper: f64,
}

impl<'a> FixedPointSolver<'a> {
    pub fn new(mesh: &Mesh, blocks: &'a OperatorBlocks, upper: f64) -> Result<Self> {
        Ok(Self {
            blocks,
            mass: mesh.assemble_sym(|_| 1.0, 0)?,
            upper,
        })
    }

    /// Number of positive γ at `λ = 0⁺`: the candidate count N.
    pub fn candidate_count(&self) -> usize {
        self.blocks.count_gamma_above(0.0)
    }

    /// `γ_j(λ) > λ`, decided by inertia of `Q − λ²A − λμD`.
    fn above(&self, lambda: f64, j: usize) -> bool {
        self.blocks.count_gamma_above(lambda) >= j
    }

    /// `γ_j(λ) − λ` with γ_j as a Rayleigh quotient, plus its vector.
    fn rayleigh_residual(&self, lambda: f64, j: usize) -> Result<(f64, Vec<f64>)> {
        let p = self.blocks.p(lambda);
        let gamma = crate::linalg::kth_largest_eigenvalue(&self.blocks.q, &p, j)?;
        let phi = inverse_iteration(&self.blocks.q, &p, gamma, &[])?;
        let rq = self.blocks.q.quad_form(&phi) / p.quad_form(&phi);
        Ok((rq - lambda, phi))
    }

    pub fn solve(&self, j: usize, options: FixedPointOptions) -> Result<Option<CharacteristicValue>> {
        if j == 0 {
            return Err(Error::InvalidParameter("mode index j is 1-based".into()));
        }
        if j > self.blocks.order() || !self.above(0.0, j) {
            return Ok(None);
        }
        if self.above(self.upper, j) {
            return Err(Error::NotBracketed {
                k: self.blocks.k,
                j,
                upper: self.upper,
            });
        }
        let (mut lo, mut hi) = (0.0, self.upper);
        for _ in 0..MAX_BISECTIONS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.above(mid, j) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // inertia near the crossing is noisy at the 1e-10 level; polish with
        // Rayleigh quotients, which are accurate to rounding
        let mut lambda = 0.5 * (lo + hi);
        let (mut f, mut phi) = self.rayleigh_residual(lambda, j)?;
        let mut h = (1e-7 * lambda).max(1e-14);
        for _ in 0..4 {
            if f == 0.0 {
                break;
            }
            let (f1, _) = self.rayleigh_residual(lambda + h, j)?;
            let slope = (f1 - f) / h;
            if !(slope < 0.0 && slope.is_finite()) {
                break;
            }
            let next = lambda - f / slope;
            if !(next > 0.0 && next < self.upper) {
                break;
            }
            let (fn_, phin) = self.rayleigh_residual(next, j)?;
            if fn_.abs() >= f.abs() {
                break;
            }
            h = (next - lambda).abs().max(1e-14 * next);
            lambda = next;
            f = fn_;
            phi = phin;
        }
        let gamma_residual = f.abs();
        if gamma_residual > options.tol {
            return Err(Error::FixedPointResidual {
                k: self.blocks.k,
                j,
                residual: gamma_residual,
            });
        }
        normalize_mode(&mut phi, &self.mass);
        Ok(Some(CharacteristicValue {
            lambda,
            j,
            k: self.blocks.k,
            sigma: self.blocks.sigma,
            phi,
            gamma_residual,
        }))
    }
}

/// Scales to `cᵀMc = 1` and flips so the first significant entry is positive.
pub fn normalize_mode(c: &mut [f64], mass: &crate::linalg::SymMatrix) {
    let n = mass.quad_form(c).sqrt();
    if n > 0.0 {
        c.iter_mut().for_each(|v| *v /= n);
    }
    let big = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if let Some(first) = c.iter().find(|v| v.abs() > 1e-8 * big) {
        if *first < 0.0 {
            c.iter_mut().for_each(|v| *v = -*v);
        }
    }
}

/// One lattice magnitude in S.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetMember {
    /// Representative `(n1, n2)` with `n1 ≥ n2 ≥ 0`.
    pub lattice: (i64, i64),
    pub wavevector: WaveVector,
    pub k: f64,
    pub sigma_c_k: f64,
    /// `None` when the clamped discretisation finds no root although
    /// `σ < σ_c(k)` (λ₁ below mesh resolution near the stability edge).
    pub lambda_1: Option<f64>,
}

/// S, Λ and S_Λ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnstableSet {
    pub members: Vec<SetMember>,
    #[serde(rename = "Lambda")]
    pub lambda_max: Option<f64>,
    /// Index into `members` of the Λ-achieving magnitude.
    pub argmax: Option<usize>,
    /// Indices into `members` with `λ₁ > (2/3)Λ`.
    pub s_lambda: Vec<usize>,
    pub k_max: f64,
    /// `σ_c(k) > σ` still holds just beyond `k_max`.
    pub truncated: bool,
}

impl UnstableSet {
    pub fn is_stable(&self) -> bool {
        self.members.is_empty()
    }
}

/// `k_max` beyond which `σ ≥ σ_c(k)` is guaranteed, plus one lattice step:
/// `σ_c(k) ≤ g·max ρ₀′ / (k²·min ρ₀′²)`.
pub fn default_k_max(profile: &DensityProfile, params: &PhysicalParams) -> Result<f64> {
    if params.sigma == 0.0 {
        return Err(Error::InvalidParameter(
            "sigma = 0 makes every wavenumber unstable; give k_max explicitly".into(),
        ));
    }
    let (mut dmin, mut dmax) = (f64::INFINITY, 0.0f64);
    for i in 0..SCAN_POINTS {
        let d = profile.d1(i as f64 / (SCAN_POINTS - 1) as f64);
        dmin = dmin.min(d);
        dmax = dmax.max(d);
    }
    Ok((params.g * dmax / (params.sigma * dmin * dmin)).sqrt() + 1.0 / params.length)
}

/// Distinct values `m = n1² + n2² ≤ m_max` with a representative pair.
pub fn lattice_magnitudes(m_max: u64) -> Vec<(u64, (i64, i64))> {
    let mut out = Vec::new();
    for m in 1..=m_max {
        let mut n1 = (m as f64).sqrt() as u64 + 1;
        while n1 * n1 > m {
            n1 -= 1;
        }
        loop {
            let rest = m - n1 * n1;
            let mut n2 = (rest as f64).sqrt() as u64;
            while n2 * n2 > rest {
                n2 -= 1;
            }
            while (n2 + 1) * (n2 + 1) <= rest {
                n2 += 1;
            }
            if n2 * n2 == rest && n2 <= n1 {
                out.push((m, (n1 as i64, n2 as i64)));
                break;
            }
            if n1 == 0 || n1 * n1 * 2 < m {
                break;
            }
            n1 -= 1;
        }
    }
    out
}

/// Enumerates S up to `k_max` (default from [`default_k_max`]).
pub fn unstable_set(
    mesh: &Mesh,
    profile: &DensityProfile,
    params: &PhysicalParams,
    k_max: Option<f64>,
) -> Result<UnstableSet> {
    unstable_set_with(mesh, profile, params, k_max, FixedPointOptions::default())
}

/// [`unstable_set`] with explicit fixed-point settings.
pub fn unstable_set_with(
    mesh: &Mesh,
    profile: &DensityProfile,
    params: &PhysicalParams,
    k_max: Option<f64>,
    options: FixedPointOptions,
) -> Result<UnstableSet> {
    let k_max = match k_max {
        Some(k) if k > 0.0 && k.is_finite() => k,
        Some(k) => return Err(Error::InvalidParameter(format!("k_max must be positive, got {k}"))),
        None => default_k_max(profile, params)?,
    };
    let l = params.length;
    let m_max = ((k_max * l).powi(2) + 1e-9).floor() as u64;
    let candidates = lattice_magnitudes(m_max);
    let sigma = params.sigma;

    // σ_c(k) decreases in k, so S is a prefix; evaluate in parallel chunks
    // and stop after the first chunk that leaves it.
    let mut members = Vec::new();
    let mut left_set = false;
    for chunk in candidates.chunks(rayon::current_num_threads().max(1) * 2) {
        let evaluated: Vec<(u64, (i64, i64), f64)> = chunk
            .par_iter()
            .map(|&(m, pair)| {
                let k = (m as f64).sqrt() / l;
                sigma_critical_k(mesh, profile, params.g, k).map(|c| (m, pair, c.value))
            })
            .collect::<Result<_>>()?;
        for (m, pair, sc) in evaluated {
            if sigma < sc {
                members.push((m, pair, sc));
            } else {
                left_set = true;
            }
        }
        if left_set {
            break;
        }
    }
    let truncated = if left_set {
        false
    } else {
        let next = lattice_magnitudes(m_max + 64)
            .into_iter()
            .find(|(m, _)| *m > m_max)
            .map(|(m, _)| (m as f64).sqrt() / l);
        match next {
            Some(k) => sigma < sigma_critical_k(mesh, profile, params.g, k)?.value,
            None => false,
        }
    };

    let upper = lambda_upper_bound(profile, params);
    let mut solved: Vec<SetMember> = members
        .par_iter()
        .map(|&(m, (n1, n2), sc)| {
            let k = (m as f64).sqrt() / l;
            let blocks = OperatorBlocks::assemble(mesh, profile, params, k)?;
            let solver = FixedPointSolver::new(mesh, &blocks, upper)?;
            let lambda_1 = solver.solve(1, options)?.map(|cv| cv.lambda);
            Ok(SetMember {
                lattice: (n1, n2),
                wavevector: WaveVector::from_lattice(n1, n2, l)?,
                k,
                sigma_c_k: sc,
                lambda_1,
            })
        })
        .collect::<Result<_>>()?;
    solved.sort_by(|a, b| a.k.total_cmp(&b.k));

    let argmax = solved
        .iter()
        .enumerate()
        .filter_map(|(i, m)| m.lambda_1.map(|v| (i, v)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i);
    let lambda_max = argmax.and_then(|i| solved[i].lambda_1);
    let s_lambda = match lambda_max {
        Some(big) => solved
            .iter()
            .enumerate()
            .filter(|(_, m)| m.lambda_1.is_some_and(|v| v > 2.0 * big / 3.0))
            .map(|(i, _)| i)
            .collect(),
        None => Vec::new(),
    };
    Ok(UnstableSet {
        members: solved,
        lambda_max,
        argmax,
        s_lambda,
        k_max,
        truncated,
    })
}

/// One row of a dispersion table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispersionRow {
    pub k: f64,
    pub sigma_c_k: f64,
    /// `λ_1..λ_{j_max}`; `None` where no root exists.
    pub lambdas: Vec<Option<f64>>,
}

/// λ_j(k) for each `k` in `k_list` (order preserved), computed in parallel.
pub fn dispersion_curve(
    mesh: &Mesh,
    profile: &DensityProfile,
    params: &PhysicalParams,
    k_list: &[f64],
    j_max: usize,
) -> Result<Vec<DispersionRow>> {
    dispersion_curve_with(mesh, profile, params, k_list, j_max, FixedPointOptions::default())
}

/// [`dispersion_curve`] with explicit fixed-point settings.
pub fn dispersion_curve_with(
    mesh: &Mesh,
    profile: &DensityProfile,
    params: &PhysicalParams,
    k_list: &[f64],
    j_max: usize,
    options: FixedPointOptions,
) -> Result<Vec<DispersionRow>> {
    if let Some(k) = k_list.iter().find(|k| !(**k > 0.0 && k.is_finite())) {
        return Err(Error::InvalidParameter(format!("k must be positive, got {k}")));
    }
    k_list
        .par_iter()
        .map(|&k| {
            let sigma_c_k = sigma_critical_k(mesh, profile, params.g, k)?.value;
            let found = solve_lambdas(mesh, profile, params, k, j_max, options)?;
            let mut lambdas: Vec<Option<f64>> = found.iter().map(|cv| Some(cv.lambda)).collect();
            lambdas.resize(j_max, None);
            Ok(DispersionRow { k, sigma_c_k, lambdas })
        })
        .collect()
}
