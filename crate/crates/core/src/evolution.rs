//! Time integration of the single-wavenumber linear dynamics
//! `Aφ̈ + μDφ̇ = Rφ`, obtained from the fourth-order mode equation by λ ↦ ∂ₜ.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{BandLu, SymMatrix};
use crate::mesh::Mesh;
use crate::profile::{DensityProfile, PhysicalParams};
use crate::spectrum::OperatorBlocks;

/// Multiplier in `C·e^{Λt}` for the sharp growth check.
pub const SHARP_RATE_CONSTANT: f64 = 10.0;

#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionOperators {
    pub k: f64,
    pub mu: f64,
    /// `k²M(ρ₀) + K(ρ₀)`
    pub a: SymMatrix,
    /// `H(1) + 2k²K(1) + k⁴M(1)`
    pub d: SymMatrix,
    /// Equal to `Q` at the run's σ.
    pub r: SymMatrix,
    /// `M(1)`, for L² norms of φ and χ.
    pub mass: SymMatrix,
}

pub fn assemble_evolution(
    mesh: &Mesh,
    profile: &DensityProfile,
    params: &PhysicalParams,
    k: f64,
) -> Result<EvolutionOperators> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::InvalidParameter(format!("k must be positive, got {k}")));
    }
    let blocks = OperatorBlocks::assemble(mesh, profile, params, k)?;
    Ok(EvolutionOperators::from_blocks(blocks, mesh.assemble_sym(|_| 1.0, 0)?))
}

impl EvolutionOperators {
    pub fn from_blocks(blocks: OperatorBlocks, mass: SymMatrix) -> Self {
        Self {
            k: blocks.k,
            mu: blocks.mu,
            a: blocks.a,
            d: blocks.d,
            r: blocks.q,
            mass,
        }
    }

    pub fn order(&self) -> usize {
        self.a.order()
    }

    /// `χᵀAχ − φᵀRφ`
    pub fn energy(&self, state: &ModeState) -> f64 {
        self.a.quad_form(&state.chi) - self.r.quad_form(&state.phi)
    }

    pub fn l2_norm(&self, v: &[f64]) -> f64 {
        self.mass.quad_form(v).max(0.0).sqrt()
    }

    /// Factors the midpoint system for a fixed step.
    pub fn stepper(&self, dt: f64) -> Result<Stepper<'_>> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        let h = 0.5 * dt * self.mu;
        let q = 0.25 * dt * dt;
        let lhs = SymMatrix::combine(&[(1.0, &self.a), (h, &self.d), (-q, &self.r)]);
        let rhs = SymMatrix::combine(&[(1.0, &self.a), (-h, &self.d), (q, &self.r)]);
        Ok(Stepper {
            ops: self,
            dt,
            lu: lhs.to_band().lu()?,
            rhs,
        })
    }
}

/// `(φ, χ = ∂ₜφ)` at time `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeState {
    pub phi: Vec<f64>,
    pub chi: Vec<f64>,
    pub t: f64,
}

impl ModeState {
    pub fn zero(n: usize) -> Self {
        Self {
            phi: vec![0.0; n],
            chi: vec![0.0; n],
            t: 0.0,
        }
    }

    /// φ = `phi`, χ = λ·`phi`.
    pub fn eigen(phi: &[f64], lambda: f64) -> Self {
        Self {
            phi: phi.to_vec(),
            chi: phi.iter().map(|v| lambda * v).collect(),
            t: 0.0,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            phi: self.phi.iter().map(|v| c * v).collect(),
            chi: self.chi.iter().map(|v| c * v).collect(),
            t: self.t,
        }
    }

    fn is_finite(&self) -> bool {
        self.phi.iter().chain(&self.chi).all(|v| v.is_finite())
    }
}

/// Implicit midpoint with a factored system:
/// `(A + (dtμ/2)D − (dt²/4)R)χ₁ = (A − (dtμ/2)D + (dt²/4)R)χ₀ + dt·Rφ₀`,
/// `φ₁ = φ₀ + (dt/2)(χ₀ + χ₁)`.
pub struct Stepper<'a> {
    ops: &'a EvolutionOperators,
    dt: f64,
    lu: BandLu,
    rhs: SymMatrix,
}

impl Stepper<'_> {
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, state: &ModeState) -> Result<ModeState> {
        let mut b = self.rhs.matvec(&state.chi);
        let rphi = self.ops.r.matvec(&state.phi);
        b.iter_mut().zip(&rphi).for_each(|(x, r)| *x += self.dt * r);
        let chi = self.lu.solve(&b);
        let phi = state
            .phi
            .iter()
            .zip(state.chi.iter().zip(&chi))
            .map(|(p, (c0, c1))| p + 0.5 * self.dt * (c0 + c1))
            .collect();
        let next = ModeState {
            phi,
            chi,
            t: state.t + self.dt,
        };
        if !next.is_finite() {
            return Err(Error::NonFinite { x: next.t, value: f64::NAN });
        }
        Ok(next)
    }
}

/// One implicit-midpoint step (factors the system each call; use
/// [`EvolutionOperators::stepper`] for runs).
pub fn step(ops: &EvolutionOperators, state: &ModeState, dt: f64) -> Result<ModeState> {
    ops.stepper(dt)?.step(state)
}

/// A recorded sample of a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub norm_phi: f64,
    pub norm_chi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    pub final_state: ModeState,
    /// Largest `|ΔE + 2μ·dt·χ_mᵀDχ_m|` per step relative to `max(|E|)`,
    /// divided by dt (drift per unit time).
    pub energy_drift: f64,
}

/// Integrates from `init` to `t_end`, recording every `record_every` steps.
pub fn trajectory(
    ops: &EvolutionOperators,
    init: &ModeState,
    dt: f64,
    t_end: f64,
    record_every: usize,
) -> Result<Trajectory> {
    if !(t_end > init.t) {
        return Err(Error::InvalidParameter("t_end must exceed the initial time".into()));
    }
    let stepper = ops.stepper(dt)?;
    let every = record_every.max(1);
    let steps = ((t_end - init.t) / dt).round().max(1.0) as usize;
    let sample = |s: &ModeState| TrajectorySample {
        t: s.t,
        norm_phi: ops.l2_norm(&s.phi),
        norm_chi: ops.l2_norm(&s.chi),
    };
    let mut samples = vec![sample(init)];
    let mut state = init.clone();
    let mut energy = ops.energy(&state);
    let mut scale = energy.abs();
    let mut worst = 0.0f64;
    for i in 1..=steps {
        let next = stepper.step(&state)?;
        let e1 = ops.energy(&next);
        let mid: Vec<f64> = state.chi.iter().zip(&next.chi).map(|(a, b)| 0.5 * (a + b)).collect();
        let dissipation = 2.0 * ops.mu * dt * ops.d.quad_form(&mid);
        scale = scale.max(e1.abs()).max(dissipation.abs());
        worst = worst.max((e1 - energy + dissipation).abs() / scale.max(f64::MIN_POSITIVE));
        energy = e1;
        state = next;
        if i % every == 0 || i == steps {
            samples.push(sample(&state));
        }
    }
    Ok(Trajectory {
        samples,
        final_state: state,
        energy_drift: worst / dt,
    })
}

/// Default step `1e-2 / max(λ₁, 1)`.
pub fn default_dt(lambda_1: Option<f64>) -> f64 {
    1e-2 / lambda_1.unwrap_or(1.0).max(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthEstimate {
    pub lambda_est: f64,
    pub window: (f64, f64),
    pub r_squared: f64,
}

/// Least-squares slope of `log‖φ‖` over the trailing half of the samples.
pub fn measure_growth(samples: &[TrajectorySample]) -> Result<GrowthEstimate> {
    if samples.len() < 20 {
        return Err(Error::InvalidParameter(format!(
            "growth fit needs at least 10 samples past the transient, got {} in total",
            samples.len()
        )));
    }
    let tail = &samples[samples.len() / 2..];
    fit_log_slope(tail)
}

/// Least-squares slope of `log‖φ‖` over samples with `t ∈ [t0, t1]`.
pub fn measure_growth_window(samples: &[TrajectorySample], t0: f64, t1: f64) -> Result<GrowthEstimate> {
    let slack = 1e-9 * t1.abs().max(1.0);
    let window: Vec<TrajectorySample> = samples
        .iter()
        .copied()
        .filter(|s| s.t >= t0 - slack && s.t <= t1 + slack)
        .collect();
    if window.len() < 10 {
        return Err(Error::InvalidParameter(format!(
            "window [{t0}, {t1}] holds {} samples, need 10",
            window.len()
        )));
    }
    fit_log_slope(&window)
}

fn fit_log_slope(samples: &[TrajectorySample]) -> Result<GrowthEstimate> {
    if samples.iter().any(|s| !(s.norm_phi > 0.0)) {
        return Err(Error::InvalidParameter("cannot fit growth to a vanishing norm".into()));
    }
    let n = samples.len() as f64;
    let ts: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.norm_phi.ln()).collect();
    let tm = ts.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let stt: f64 = ts.iter().map(|t| (t - tm).powi(2)).sum();
    let sty: f64 = ts.iter().zip(&ys).map(|(t, y)| (t - tm) * (y - ym)).sum();
    let slope = sty / stt;
    let intercept = ym - slope * tm;
    let ss_tot: f64 = ys.iter().map(|y| (y - ym).powi(2)).sum();
    let ss_res: f64 = ts.iter().zip(&ys).map(|(t, y)| (y - intercept - slope * t).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) } else { 1.0 };
    Ok(GrowthEstimate {
        lambda_est: slope,
        window: (ts[0], ts[ts.len() - 1]),
        r_squared,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharpRateCheck {
    pub holds: bool,
    /// `max ‖φ(t)‖ / (e^{Λt}‖φ(0)‖)` over the run; 0 for zero initial data.
    pub max_ratio: f64,
}

/// Checks `‖φ(t)‖ ≤ C·e^{Λt}·‖φ(0)‖` with `C = 10`.
pub fn sharp_rate_check(samples: &[TrajectorySample], lambda_max: f64) -> SharpRateCheck {
    let Some(first) = samples.first() else {
        return SharpRateCheck {
            holds: true,
            max_ratio: 0.0,
        };
    };
    if !(first.norm_phi > 0.0) {
        return SharpRateCheck {
            holds: true,
            max_ratio: 0.0,
        };
    }
    let t0 = first.t;
    let max_ratio = samples
        .iter()
        .map(|s| s.norm_phi / ((lambda_max * (s.t - t0)).exp() * first.norm_phi))
        .fold(0.0, f64::max);
    SharpRateCheck {
        holds: max_ratio <= SHARP_RATE_CONSTANT,
        max_ratio,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispersion::solve_lambda_j;
    use crate::mesh::build_mesh;
    use crate::spectrum::{assemble_p, assemble_q};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn setup(sigma: f64) -> (Mesh, DensityProfile, PhysicalParams) {
        (
            build_mesh(32).unwrap(),
            DensityProfile::linear(1.0, 1.0).unwrap(),
            PhysicalParams::new(1.0, 0.1, sigma, 1.0).unwrap(),
        )
    }

    #[test]
    fn blocks_match_spectrum_operators() {
        let (mesh, prof, p) = setup(0.02);
        let ops = assemble_evolution(&mesh, &prof, &p, PI).unwrap();
        assert_eq!(ops.r, assemble_q(&mesh, &prof, &p, PI).unwrap());
        let lambda = 0.37;
        let pm = assemble_p(&mesh, &prof, &p, PI, lambda).unwrap();
        assert_eq!(SymMatrix::combine(&[(lambda, &ops.a), (p.mu, &ops.d)]), pm);
    }

    #[test]
    fn eigenpair_satisfies_quadratic_pencil() {
        let (mesh, prof, p) = setup(0.02);
        let cv = solve_lambda_j(&mesh, &prof, &p, PI, 1).unwrap().unwrap();
        let ops = assemble_evolution(&mesh, &prof, &p, PI).unwrap();
        let l = cv.lambda;
        let r: Vec<f64> = {
            let a = ops.a.matvec(&cv.phi);
            let d = ops.d.matvec(&cv.phi);
            let q = ops.r.matvec(&cv.phi);
            (0..a.len()).map(|i| l * l * a[i] + l * p.mu * d[i] - q[i]).collect()
        };
        let rn = crate::linalg::norm2(&r) / ops.d.norm2_estimate();
        assert!(rn <= 1e-10, "{rn}");
    }

    #[test]
    fn zero_state_stays_zero() {
        let (mesh, prof, p) = setup(0.02);
        let ops = assemble_evolution(&mesh, &prof, &p, PI).unwrap();
        let z = ModeState::zero(ops.order());
        let next = step(&ops, &z, 0.1).unwrap();
        assert!(next.phi.iter().chain(&next.chi).all(|&v| v == 0.0));
        assert_eq!(next.t, 0.1);
    }

    #[test]
    fn step_is_linear() {
        let (mesh, prof, p) = setup(0.02);
        let ops = assemble_evolution(&mesh, &prof, &p, PI).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = ops.order();
        let s = ModeState {
            phi: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            chi: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            t: 0.0,
        };
        let st = ops.stepper(0.05).unwrap();
        let a = st.step(&s.scaled(3.5)).unwrap();
        let b = st.step(&s).unwrap().scaled(3.5);
        let diff = a.phi.iter().zip(&b.phi).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let size = a.phi.iter().map(|x| x.abs()).fold(0.0, f64::max);
        assert!(diff <= 1e-12 * size);
    }

    #[test]
    fn eigen_initialised_growth() {
        let (mesh, prof, p) = setup(0.02);
        let cv = solve_lambda_j(&mesh, &prof, &p, PI, 1).unwrap().unwrap();
        let ops = assemble_evolution(&mesh, &prof, &p, PI).unwrap();
        let l = cv.lambda;
        let dt = 1e-3 / l;
        let traj = trajectory(&ops, &ModeState::eigen(&cv.phi, l), dt, 2.0 / l, 10).unwrap();
        let last = traj.samples.last().unwrap();
        let ratio = last.norm_phi / traj.samples[0].norm_phi;
        let expect = (l * last.t).exp();
        assert!((ratio / expect - 1.0).abs() < 1e-3, "{ratio} vs {expect}");
        let g = measure_growth(&traj.samples).unwrap();
        assert!((g.lambda_est / l - 1.0).abs() < 1e-3);
        assert!(traj.energy_drift < 1e-8, "{}", traj.energy_drift);
    }

    #[test]
    fn random_data_grows_no_faster_than_lambda_one() {
        let (mesh, prof, p) = setup(0.02);
        let cv = solve_lambda_j(&mesh, &prof, &p, PI, 1).unwrap().unwrap();
        let ops = assemble_evolution(&mesh, &prof, &p, PI).unwrap();
        let f = |x: f64| (x * (1.0 - x)).powi(2) * (1.0 + 3.0 * x * x);
        let fp = |x: f64| {
            let u = x * (1.0 - x);
            2.0 * u * (1.0 - 2.0 * x) * (1.0 + 3.0 * x * x) + u * u * 6.0 * x
        };
        let phi = mesh.project(f, fp).unwrap();
        let init = ModeState {
            chi: vec![0.0; phi.len()],
            phi,
            t: 0.0,
        };
        let l = cv.lambda;
        let traj = trajectory(&ops, &init, 1e-2 / l.max(1.0), 6.0 / l, 20).unwrap();
        let g = measure_growth(&traj.samples).unwrap();
        assert!(g.lambda_est <= l + 1e-3, "{} vs {l}", g.lambda_est);
        let chk = sharp_rate_check(&traj.samples, l);
        assert!(chk.holds, "{}", chk.max_ratio);
    }

    #[test]
    fn stable_regime_does_not_grow() {
        let (mesh, prof, p) = setup(0.08);
        let ops = assemble_evolution(&mesh, &prof, &p, PI).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let phi: Vec<f64> = (0..ops.order()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let init = ModeState {
            chi: vec![0.0; phi.len()],
            phi,
            t: 0.0,
        };
        let traj = trajectory(&ops, &init, 0.01, 10.0, 10).unwrap();
        let n0 = traj.samples[0].norm_phi;
        assert!(traj.samples.iter().all(|s| s.norm_phi <= 2.0 * n0));
    }

    #[test]
    fn energy_identity_holds_per_step() {
        let (mesh, prof, p) = setup(0.01);
        let ops = assemble_evolution(&mesh, &prof, &p, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = ops.order();
        let init = ModeState {
            phi: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            chi: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            t: 0.0,
        };
        let traj = trajectory(&ops, &init, 0.02, 2.0, 5).unwrap();
        assert!(traj.energy_drift < 1e-8, "{}", traj.energy_drift);
    }

    #[test]
    fn halving_dt_converges_quadratically() {
        let (mesh, prof, p) = setup(0.02);
        let cv = solve_lambda_j(&mesh, &prof, &p, PI, 1).unwrap().unwrap();
        let ops = assemble_evolution(&mesh, &prof, &p, PI).unwrap();
        let init = ModeState {
            phi: cv.phi.clone(),
            chi: vec![0.0; cv.phi.len()],
            t: 0.0,
        };
        let end = |dt: f64| trajectory(&ops, &init, dt, 4.0, 1000).unwrap().samples.last().unwrap().norm_phi;
        let (a, b, c) = (end(0.2), end(0.1), end(0.05));
        let ratio = (a - b).abs() / (b - c).abs();
        assert!(ratio > 3.5 && ratio < 4.5, "{ratio}");
    }

    #[test]
    fn synthetic_exponential_fit() {
        let s: Vec<TrajectorySample> = (0..100)
            .map(|i| {
                let t = i as f64 * 0.1;
                TrajectorySample {
                    t,
                    norm_phi: (0.5 * t).exp(),
                    norm_chi: 0.0,
                }
            })
            .collect();
        let g = measure_growth(&s).unwrap();
        assert!((g.lambda_est - 0.5).abs() < 1e-12);
        assert!((g.r_squared - 1.0).abs() < 1e-12);
        assert!(measure_growth(&s[..5]).is_err());
    }

    #[test]
    fn sharp_rate_edge_cases() {
        let zero = vec![TrajectorySample {
            t: 0.0,
            norm_phi: 0.0,
            norm_chi: 0.0,
        }];
        assert_eq!(sharp_rate_check(&zero, 1.0).max_ratio, 0.0);
        let slow: Vec<TrajectorySample> = (0..50)
            .map(|i| TrajectorySample {
                t: i as f64,
                norm_phi: (0.1 * i as f64).exp(),
                norm_chi: 0.0,
            })
            .collect();
        let chk = sharp_rate_check(&slow, 0.3);
        assert!(chk.holds);
        let tail = slow.last().unwrap();
        assert!(tail.norm_phi / (0.3 * tail.t).exp() < 1e-3);
    }

    #[test]
    fn rejects_nonpositive_dt() {
        let (mesh, prof, p) = setup(0.02);
        let ops = assemble_evolution(&mesh, &prof, &p, PI).unwrap();
        assert!(ops.stepper(0.0).is_err());
        assert!(assemble_evolution(&mesh, &prof, &p, 0.0).is_err());
    }
}
