//! The operators `P` (from `B_{k,λ}`) and `Q`, the γ-spectrum `Qϑ = γPϑ`,
//! and the critical capillary numbers σ_c and σ_c(k).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    banded_generalized_eig, count_eigenvalues_above, inverse_iteration, kth_largest_eigenvalue,
    sym_generalized_eig, sym_generalized_eig_tol, SymMatrix,
};
use crate::mesh::{Constraint, Mesh};
use crate::profile::{DensityProfile, PhysicalParams};

/// Relative gap under which neighbouring γ values are reported as tied.
pub const TIE_TOL: f64 = 1e-10;
/// Relative threshold for counting positive γ.
pub const POSITIVITY_TOL: f64 = 1e-12;

/// The three blocks every per-wavenumber computation is built from:
/// `P(λ) = λA + μD` and `Q`.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorBlocks {
    pub k: f64,
    pub mu: f64,
    pub sigma: f64,
    /// `k²M(ρ₀) + K(ρ₀)`
    pub a: SymMatrix,
    /// `H(1) + 2k²K(1) + k⁴M(1)`
    pub d: SymMatrix,
    /// `g k² M(ρ₀′) − σk² K(ρ₀′²) − σk⁴ M(ρ₀′²)`
    pub q: SymMatrix,
}

impl OperatorBlocks {
    pub fn assemble(mesh: &Mesh, profile: &DensityProfile, params: &PhysicalParams, k: f64) -> Result<Self> {
        if !(k >= 0.0 && k.is_finite()) {
            return Err(Error::InvalidParameter(format!("k must be nonnegative, got {k}")));
        }
        let k2 = k * k;
        let rho = |x: f64| profile.rho(x);
        let a = SymMatrix::combine(&[
            (k2, &mesh.assemble_sym(rho, 0)?),
            (1.0, &mesh.assemble_sym(rho, 1)?),
        ]);
        let one = |_: f64| 1.0;
        let d = SymMatrix::combine(&[
            (1.0, &mesh.assemble_sym(one, 2)?),
            (2.0 * k2, &mesh.assemble_sym(one, 1)?),
            (k2 * k2, &mesh.assemble_sym(one, 0)?),
        ]);
        let q = assemble_q(mesh, profile, params, k)?;
        Ok(Self {
            k,
            mu: params.mu,
            sigma: params.sigma,
            a,
            d,
            q,
        })
    }

    pub fn order(&self) -> usize {
        self.a.order()
    }

    pub fn p(&self, lambda: f64) -> SymMatrix {
        SymMatrix::combine(&[(lambda, &self.a), (self.mu, &self.d)])
    }

    /// `Q − λP(λ)`; its inertia counts the γ above λ.
    pub fn shifted(&self, lambda: f64) -> SymMatrix {
        SymMatrix::combine(&[(1.0, &self.q), (-lambda * lambda, &self.a), (-lambda * self.mu, &self.d)])
    }

    /// Number of γ(λ) strictly greater than `lambda`.
    pub fn count_gamma_above(&self, lambda: f64) -> usize {
        if lambda == 0.0 {
            return self.q.inertia().positive;
        }
        self.shifted(lambda).inertia().positive
    }

    /// γ_j at `lambda` by inertia bisection (`j` is 1-based).
    pub fn gamma_j(&self, lambda: f64, j: usize) -> Result<f64> {
        kth_largest_eigenvalue(&self.q, &self.p(lambda), j)
    }

    /// `(λ²φᵀAφ + λμφᵀDφ, φᵀQφ)`: the two sides of the variational balance.
    pub fn variational_balance(&self, lambda: f64, phi: &[f64]) -> (f64, f64) {
        let lhs = lambda * lambda * self.a.quad_form(phi) + lambda * self.mu * self.d.quad_form(phi);
        (lhs, self.q.quad_form(phi))
    }
}

/// `P = λ[k²M(ρ₀) + K(ρ₀)] + μ[H(1) + 2k²K(1) + k⁴M(1)]`.
pub fn assemble_p(
    mesh: &Mesh,
    profile: &DensityProfile,
    params: &PhysicalParams,
    k: f64,
    lambda: f64,
) -> Result<SymMatrix> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda must be nonnegative, got {lambda}")));
    }
    Ok(OperatorBlocks::assemble(mesh, profile, params, k)?.p(lambda))
}

/// `Q = g k² M(ρ₀′) − σk² K(ρ₀′²) − σk⁴ M(ρ₀′²)`.
pub fn assemble_q(mesh: &Mesh, profile: &DensityProfile, params: &PhysicalParams, k: f64) -> Result<SymMatrix> {
    if !(k >= 0.0 && k.is_finite()) {
        return Err(Error::InvalidParameter(format!("k must be nonnegative, got {k}")));
    }
    let k2 = k * k;
    let d1 = |x: f64| profile.d1(x);
    let d1sq = |x: f64| profile.d1(x).powi(2);
    let mut terms = vec![(params.g * k2, mesh.assemble_sym(d1, 0)?)];
    if params.sigma != 0.0 {
        terms.push((-params.sigma * k2, mesh.assemble_sym(d1sq, 1)?));
        terms.push((-params.sigma * k2 * k2, mesh.assemble_sym(d1sq, 0)?));
    }
    let refs: Vec<(f64, &SymMatrix)> = terms.iter().map(|(c, m)| (*c, m)).collect();
    Ok(SymMatrix::combine(&refs))
}

/// `P` and `Q` at one `(k, λ, σ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorPair {
    pub p: SymMatrix,
    pub q: SymMatrix,
    pub k: f64,
    pub lambda: f64,
    pub sigma: f64,
}

impl OperatorPair {
    pub fn new(mesh: &Mesh, profile: &DensityProfile, params: &PhysicalParams, k: f64, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda must be nonnegative, got {lambda}")));
        }
        let blocks = OperatorBlocks::assemble(mesh, profile, params, k)?;
        Ok(Self::from_blocks(&blocks, lambda))
    }

    pub fn from_blocks(blocks: &OperatorBlocks, lambda: f64) -> Self {
        Self {
            p: blocks.p(lambda),
            q: blocks.q.clone(),
            k: blocks.k,
            lambda,
            sigma: blocks.sigma,
        }
    }
}

/// Top of the γ-spectrum, descending.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub gammas: Vec<f64>,
    /// P-orthonormal eigenvectors on the active dofs.
    pub vectors: Vec<Vec<f64>>,
    /// Number of γ above `1e-12·max(1, |γ₁|)` among those computed.
    pub n_positive: usize,
    /// Indices `i` (0-based) with `|γᵢ − γᵢ₊₁| < 1e-10·|γ₁|`.
    pub ties: Vec<usize>,
}

/// Generalised eigenpairs of `(Q, P)` by Cholesky reduction and Jacobi.
/// `count` is clamped to the space dimension.
pub fn gamma_spectrum(pair: &OperatorPair, count: usize) -> Result<SpectrumResult> {
    let count = count.min(pair.q.order());
    let eig = sym_generalized_eig(&pair.q, &pair.p, count)?;
    Ok(summarize(eig.values, eig.vectors))
}

/// [`gamma_spectrum`] with an explicit Jacobi tolerance.
pub fn gamma_spectrum_tol(pair: &OperatorPair, count: usize, tol: f64) -> Result<SpectrumResult> {
    let count = count.min(pair.q.order());
    let eig = sym_generalized_eig_tol(&pair.q, &pair.p, count, tol)?;
    Ok(summarize(eig.values, eig.vectors))
}

/// As [`gamma_spectrum`] but by inertia bisection; suited to large meshes
/// and few eigenvalues.
pub fn gamma_spectrum_banded(pair: &OperatorPair, count: usize) -> Result<SpectrumResult> {
    let count = count.min(pair.q.order());
    let eig = banded_generalized_eig(&pair.q, &pair.p, count)?;
    Ok(summarize(eig.values, eig.vectors))
}

fn summarize(gammas: Vec<f64>, vectors: Vec<Vec<f64>>) -> SpectrumResult {
    let g1 = gammas.first().copied().unwrap_or(0.0).abs();
    let threshold = POSITIVITY_TOL * g1.max(1.0);
    let n_positive = gammas.iter().filter(|&&g| g > threshold).count();
    let ties = gammas
        .windows(2)
        .enumerate()
        .filter(|(_, w)| (w[0] - w[1]).abs() < TIE_TOL * g1)
        .map(|(i, _)| i)
        .collect();
    SpectrumResult {
        gammas,
        vectors,
        n_positive,
        ties,
    }
}

/// σ_c or σ_c(k) and the maximiser. The maximiser lives on the value-only
/// (Dirichlet) Hermite space of the same mesh.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalCapillary {
    pub value: f64,
    pub maximizer: Vec<f64>,
}

/// σ_c = sup g∫ρ₀′ϑ² / ∫(ρ₀′)²(ϑ′)² over H₀¹.
pub fn sigma_critical(mesh: &Mesh, profile: &DensityProfile, g: f64) -> Result<CriticalCapillary> {
    critical(mesh, profile, g, 0.0)
}

/// σ_c(k) = sup g∫ρ₀′ϑ² / ∫(ρ₀′)²(k²ϑ² + (ϑ′)²) over H₀¹.
pub fn sigma_critical_k(mesh: &Mesh, profile: &DensityProfile, g: f64, k: f64) -> Result<CriticalCapillary> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::InvalidParameter(format!("k must be positive, got {k}")));
    }
    critical(mesh, profile, g, k)
}

fn critical(mesh: &Mesh, profile: &DensityProfile, g: f64, k: f64) -> Result<CriticalCapillary> {
    if !(g > 0.0 && g.is_finite()) {
        return Err(Error::InvalidParameter("g must be positive".into()));
    }
    let space = mesh.with_constraint(Constraint::Dirichlet);
    let d1sq = |x: f64| profile.d1(x).powi(2);
    let num = space.assemble_sym(|x| g * profile.d1(x), 0)?;
    let mut den = space.assemble_sym(d1sq, 1)?;
    if k > 0.0 {
        den = SymMatrix::combine(&[(1.0, &den), (k * k, &space.assemble_sym(d1sq, 0)?)]);
    }
    let value = kth_largest_eigenvalue(&num, &den, 1)?;
    let mut maximizer = inverse_iteration(&num, &den, value, &[])?;
    if maximizer.iter().sum::<f64>() < 0.0 {
        maximizer.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(CriticalCapillary { value, maximizer })
}

/// Whether some γ at `λ = 0` is positive, i.e. `σ < σ_c(k)` on this mesh.
pub fn is_unstable_at(blocks: &OperatorBlocks) -> bool {
    count_eigenvalues_above(&blocks.q, &blocks.p(0.0), 0.0) > 0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cholesky;
    use crate::mesh::build_mesh;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn linear() -> DensityProfile {
        DensityProfile::linear(1.0, 1.0).unwrap()
    }

    fn params(g: f64, mu: f64, sigma: f64) -> PhysicalParams {
        PhysicalParams::new(g, mu, sigma, 1.0).unwrap()
    }

    /// Composite Simpson on each element, independent of the assembly rule.
    fn simpson(mesh: &Mesh, f: impl Fn(f64) -> f64) -> f64 {
        let sub = 32;
        let mut total = 0.0;
        for e in 0..mesh.n_elements() {
            let a = mesh.nodes()[e];
            let h = mesh.h() / sub as f64;
            let mut s = f(a) + f(a + mesh.h());
            for i in 1..sub {
                s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
            }
            total += s * h / 3.0;
        }
        total
    }

    #[test]
    fn bending_block_is_positive_definite() {
        let mesh = build_mesh(16).unwrap();
        let p = assemble_p(&mesh, &linear(), &params(1.0, 1.0, 0.0), 0.0, 0.0).unwrap();
        let h = mesh.assemble_sym(|_| 1.0, 2).unwrap();
        assert_eq!(p, h);
        assert!(cholesky(&p).is_ok());
    }

    #[test]
    fn p_is_positive_definite_over_ranges() {
        let prof = DensityProfile::exponential(1.0, 1.5).unwrap();
        for n in [8, 32, 128, 256] {
            let mesh = build_mesh(n).unwrap();
            for &k in &[0.0, 0.5, 3.0, 20.0] {
                for &lambda in &[0.0, 0.1, 2.0] {
                    let p = assemble_p(&mesh, &prof, &params(1.0, 0.05, 0.0), k, lambda).unwrap();
                    assert!(cholesky(&p).is_ok(), "n {n} k {k} lambda {lambda}");
                }
            }
        }
    }

    #[test]
    fn p_quadratic_form_matches_scalar_oracle() {
        let mesh = build_mesh(32).unwrap();
        let prof = linear();
        let (k, lambda, mu) = (PI, 1.0, 0.1);
        let p = assemble_p(&mesh, &prof, &params(1.0, mu, 0.0), k, lambda).unwrap();
        let c = mesh
            .project(|x| (x * (1.0 - x)).powi(2), |x| 2.0 * x * (1.0 - x) * (1.0 - 2.0 * x))
            .unwrap();
        let k2 = k * k;
        let oracle = simpson(&mesh, |x| {
            let (t, t1, t2) = (mesh.evaluate(&c, x, 0), mesh.evaluate(&c, x, 1), mesh.evaluate(&c, x, 2));
            lambda * (1.0 + x) * (k2 * t * t + t1 * t1) + mu * (t2 * t2 + 2.0 * k2 * t1 * t1 + k2 * k2 * t * t)
        });
        let got = p.quad_form(&c);
        assert!((got - oracle).abs() <= 1e-10 * oracle.abs(), "{got} vs {oracle}");
    }

    #[test]
    fn q_quadratic_form_matches_scalar_oracle() {
        let mesh = build_mesh(32).unwrap();
        let prof = DensityProfile::exponential(1.0, 1.0).unwrap();
        let (g, sigma, k) = (2.0, 0.03, 1.7);
        let q = assemble_q(&mesh, &prof, &params(g, 1.0, sigma), k).unwrap();
        let c = mesh
            .project(|x| (PI * x).sin().powi(2), |x| PI * (2.0 * PI * x).sin())
            .unwrap();
        let k2 = k * k;
        let oracle = simpson(&mesh, |x| {
            let (t, t1) = (mesh.evaluate(&c, x, 0), mesh.evaluate(&c, x, 1));
            let d = x.exp();
            g * k2 * d * t * t - sigma * k2 * d * d * t1 * t1 - sigma * k2 * k2 * d * d * t * t
        });
        let got = q.quad_form(&c);
        assert!((got - oracle).abs() <= 1e-10 * oracle.abs(), "{got} vs {oracle}");
    }

    #[test]
    fn q_without_capillarity_is_positive_definite() {
        let mesh = build_mesh(16).unwrap();
        let q = assemble_q(&mesh, &linear(), &params(1.0, 1.0, 0.0), 2.0).unwrap();
        assert!(cholesky(&q).is_ok());
    }

    #[test]
    fn q_without_gravity_is_negative_definite() {
        let mesh = build_mesh(16).unwrap();
        // g = 0 is outside the physical range; assembly does not need it
        let p = PhysicalParams {
            g: 0.0,
            mu: 0.1,
            sigma: 0.5,
            length: 1.0,
        };
        let q = assemble_q(&mesh, &linear(), &p, 2.0).unwrap();
        assert!(cholesky(&q.scaled(-1.0)).is_ok());
        let pair = OperatorPair::new(&mesh, &linear(), &p, 2.0, 0.3).unwrap();
        let s = gamma_spectrum(&pair, 5).unwrap();
        assert_eq!(s.n_positive, 0);
        assert!(s.gammas.iter().all(|&g| g <= 0.0));
    }

    #[test]
    fn gamma_one_dominates_random_rayleigh_quotients() {
        let mesh = build_mesh(24).unwrap();
        let pair = OperatorPair::new(&mesh, &linear(), &params(1.0, 0.1, 0.02), PI, 0.3).unwrap();
        let s = gamma_spectrum(&pair, 3).unwrap();
        let g1 = s.gammas[0];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let v: Vec<f64> = (0..pair.q.order()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let rq = pair.q.quad_form(&v) / pair.p.quad_form(&v);
            assert!(rq <= g1 + 1e-10);
        }
        // the eigenvector attains it
        let v = &s.vectors[0];
        assert!((pair.q.quad_form(v) / pair.p.quad_form(v) - g1).abs() < 1e-12 * g1.abs().max(1.0));
    }

    #[test]
    fn gamma_one_is_mesh_converged() {
        let p = params(1.0, 0.1, 0.02);
        let g = |n| {
            let pair = OperatorPair::new(&build_mesh(n).unwrap(), &linear(), &p, PI, 0.3).unwrap();
            gamma_spectrum_banded(&pair, 1).unwrap().gammas[0]
        };
        // Hermite cubics give O(h⁴) for this fourth-order problem; at n = 64
        // the discretisation error is ~1e-7 relative, so check rate and size.
        let (a, b, c) = (g(32), g(64), g(128));
        assert!((b - c).abs() <= 2e-7 * c.abs(), "{b} vs {c}");
        assert!((a - b).abs() / (b - c).abs() >= 12.0);
    }

    #[test]
    fn jacobi_and_banded_spectra_agree() {
        let mesh = build_mesh(20).unwrap();
        let pair = OperatorPair::new(&mesh, &linear(), &params(1.0, 0.1, 0.02), 2.0, 0.2).unwrap();
        let a = gamma_spectrum(&pair, 4).unwrap();
        let b = gamma_spectrum_banded(&pair, 4).unwrap();
        for (x, y) in a.gammas.iter().zip(&b.gammas) {
            assert!((x - y).abs() < 1e-11 * a.gammas[0].abs().max(1.0), "{x} vs {y}");
        }
        assert_eq!(a.n_positive, b.n_positive);
    }

    #[test]
    fn spectrum_scales_with_q() {
        let mesh = build_mesh(16).unwrap();
        let pair = OperatorPair::new(&mesh, &linear(), &params(1.0, 0.1, 0.02), 2.0, 0.2).unwrap();
        let s1 = gamma_spectrum(&pair, 6).unwrap();
        for &c in &[0.25, 3.0, 1e3] {
            let scaled = OperatorPair {
                q: pair.q.scaled(c),
                ..pair.clone()
            };
            let s2 = gamma_spectrum(&scaled, 6).unwrap();
            for (a, b) in s1.gammas.iter().zip(&s2.gammas) {
                assert!((c * a - b).abs() <= 1e-12 * (c * s1.gammas[0]).abs(), "{} vs {b}", c * a);
            }
            // the leading vector is unchanged up to sign
            let (u, v) = (&s1.vectors[0], &s2.vectors[0]);
            let cos = pair.p.bilinear(u, v).abs();
            assert!((cos - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn positive_count_is_stable_under_refinement() {
        let p = params(1.0, 0.1, 0.005);
        let count = |n| {
            OperatorBlocks::assemble(&build_mesh(n).unwrap(), &linear(), &p, 1.0)
                .unwrap()
                .count_gamma_above(0.01)
        };
        let (a, b) = (count(32), count(64));
        assert_eq!(a, b);
        assert!(a >= 1);
    }

    #[test]
    fn inertia_count_matches_spectrum() {
        let mesh = build_mesh(16).unwrap();
        let p = params(1.0, 0.1, 0.005);
        let blocks = OperatorBlocks::assemble(&mesh, &linear(), &p, 1.0).unwrap();
        for &lambda in &[0.0, 0.01, 0.1, 0.3] {
            let s = gamma_spectrum(&OperatorPair::from_blocks(&blocks, lambda), blocks.order()).unwrap();
            let expect = s.gammas.iter().filter(|&&g| g > lambda).count();
            assert_eq!(blocks.count_gamma_above(lambda), expect, "lambda {lambda}");
        }
    }

    #[test]
    fn sigma_critical_closed_forms() {
        let mesh = build_mesh(64).unwrap();
        let s = sigma_critical(&mesh, &linear(), 1.0).unwrap();
        assert!((s.value - 1.0 / (PI * PI)).abs() < 1e-8, "{}", s.value);
        let s = sigma_critical(&mesh, &linear(), 9.8).unwrap();
        assert!((s.value - 9.8 / (PI * PI)).abs() < 1e-7);
        for &k in &[1.0, PI, 5.0] {
            let s = sigma_critical_k(&mesh, &linear(), 1.0, k).unwrap();
            assert!((s.value - 1.0 / (k * k + PI * PI)).abs() < 1e-8, "k {k}: {}", s.value);
        }
    }

    #[test]
    fn sigma_critical_is_a_lower_bound_converging() {
        let exact = 1.0 / (PI * PI);
        let mut prev = 0.0;
        for n in [4, 8, 16] {
            let v = sigma_critical(&build_mesh(n).unwrap(), &linear(), 1.0).unwrap().value;
            assert!(v <= exact + 1e-15);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn sigma_critical_exponential_refines() {
        let e = DensityProfile::exponential(1.0, 1.0).unwrap();
        let a = sigma_critical(&build_mesh(128).unwrap(), &e, 1.0).unwrap().value;
        let b = sigma_critical(&build_mesh(256).unwrap(), &e, 1.0).unwrap().value;
        assert!(a > 0.0 && a.is_finite());
        assert!((a - b).abs() <= 1e-8 * b);
    }

    #[test]
    fn sigma_critical_k_limits_and_monotonicity() {
        let mesh = build_mesh(64).unwrap();
        for prof in [linear(), DensityProfile::exponential(0.5, 2.0).unwrap()] {
            let s0 = sigma_critical(&mesh, &prof, 1.0).unwrap().value;
            let s = |k| sigma_critical_k(&mesh, &prof, 1.0, k).unwrap().value;
            assert!((s(0.01) - s0).abs() < 1e-3);
            assert!(s(1.0) > s(2.0) && s(2.0) > s(4.0));
            assert!(s(1.0) < s0);
        }
    }

    #[test]
    fn sigma_critical_k_rejects_zero_k() {
        assert!(sigma_critical_k(&build_mesh(8).unwrap(), &linear(), 1.0, 0.0).is_err());
    }

    #[test]
    fn maximizer_attains_the_quotient() {
        let mesh = build_mesh(32).unwrap();
        let prof = DensityProfile::exponential(1.0, 1.0).unwrap();
        let s = sigma_critical(&mesh, &prof, 1.0).unwrap();
        let space = mesh.with_constraint(Constraint::Dirichlet);
        let v = &s.maximizer;
        let num = space.integrate(|x| x.exp() * space.evaluate(v, x, 0).powi(2)).unwrap();
        let den = space.integrate(|x| (2.0 * x).exp() * space.evaluate(v, x, 1).powi(2)).unwrap();
        assert!((num / den - s.value).abs() < 1e-10 * s.value);
    }

    #[test]
    fn ties_are_flagged() {
        let s = summarize(vec![2.0, 2.0, 1.0, -1.0], vec![]);
        assert_eq!(s.ties, vec![0]);
        assert_eq!(s.n_positive, 3);
    }
}
