//! Reconstruction of the normal mode (η, v₁, v₂, φ, π) from a solved
//! characteristic value, residual checks against the mode system, and export.
//!
//! Representation: φ is the clamped Hermite cubic from the fixed-point solve;
//! φ‴ is the L² projection of the weak derivative of the element-wise φ″ onto
//! continuous piecewise quadratics (P2); v₁, v₂ live in P2 with zero end
//! values. Since φ′ is itself a P2 function vanishing at the ends, the
//! discrete horizontal momentum equations are then satisfied exactly by
//! vᵢ = −kᵢφ′/k², and the discrete system is consistent to rounding.

use serde::{Deserialize, Serialize};

use crate::dispersion::{CharacteristicValue, WaveVector};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, norm2};
use crate::mesh::{hermite_shape, Mesh, QuadPoint};
use crate::profile::{DensityProfile, PhysicalParams};
use crate::spectrum::OperatorBlocks;

/// Residual diagnostics of a reconstructed mode. Weak residuals are
/// `‖r‖₂ / max_term ‖term‖₂` over the discrete test space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeResiduals {
    /// `max |λη + ρ₀′φ|`
    pub eta_identity: f64,
    /// `max |k₁v₁ + k₂v₂ + φ′| / max |φ′|` over quadrature points and nodes.
    pub divergence: f64,
    /// Horizontal momentum lines for v₁ and v₂.
    pub horizontal: [f64; 2],
    /// Vertical momentum line.
    pub vertical: f64,
    /// Relative residual of the fourth-order equation.
    pub ode: f64,
    /// Largest end value of φ, φ′, v₁, v₂ over `‖φ‖∞`.
    pub boundary: f64,
}

/// Pointwise profile data at the composite quadrature points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSamples {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    pub eta: Vec<f64>,
    pub deta: Vec<f64>,
    pub d2eta: Vec<f64>,
    pub v1: Vec<f64>,
    pub dv1: Vec<f64>,
    pub v2: Vec<f64>,
    pub dv2: Vec<f64>,
    pub phi: Vec<f64>,
    pub dphi: Vec<f64>,
    pub d2phi: Vec<f64>,
    pub d3phi: Vec<f64>,
}

/// A normal mode at one wavevector.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalMode {
    pub wavevector: WaveVector,
    pub lambda: f64,
    pub j: usize,
    pub params: PhysicalParams,
    /// Clamped Hermite coefficients of φ.
    pub phi: Vec<f64>,
    /// P2 coefficients (interior dofs) of v₁ and v₂.
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    /// P2 coefficients (all dofs) of the projected φ‴.
    pub phi3: Vec<f64>,
    pub residuals: ModeResiduals,
    mesh: Mesh,
    profile: DensityProfile,
}

/// Builds the full mode from `cv`, which must come from a solve on `mesh`
/// (clamped) at `k = |wavevector|` with the same `params`.
pub fn reconstruct_mode(
    cv: &CharacteristicValue,
    wavevector: WaveVector,
    mesh: &Mesh,
    profile: &DensityProfile,
    params: &PhysicalParams,
) -> Result<NormalMode> {
    let k = wavevector.magnitude();
    if !(k > 0.0) {
        return Err(Error::InvalidParameter("k = 0 has no normal mode".into()));
    }
    if !(cv.lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {}", cv.lambda)));
    }
    if (cv.k - k).abs() > 1e-12 * k {
        return Err(Error::MismatchedWavevectors);
    }
    if cv.sigma != params.sigma {
        return Err(Error::InvalidParameter(format!(
            "characteristic value solved at sigma = {}, params give {}",
            cv.sigma, params.sigma
        )));
    }
    if cv.phi.len() != mesh.active_dof_count() {
        return Err(Error::DimensionMismatch(format!(
            "phi has {} coefficients, mesh has {} active dofs",
            cv.phi.len(),
            mesh.active_dof_count()
        )));
    }
    let lambda = cv.lambda;
    let (mu, sigma) = (params.mu, params.sigma);
    let k2 = k * k;
    let phi = cv.phi.clone();
    let qp = mesh.quad_points();
    let dphi = mesh.at_quad_points(&phi, 1);
    let d2phi = mesh.at_quad_points(&phi, 2);
    let phi_v = mesh.at_quad_points(&phi, 0);

    // φ‴: ∫gψ = [φ″ψ]₀¹ − ∫φ″ψ′ over all of P2
    let full = mesh.p2(false);
    let mass = full.assemble_sym(|_| 1.0, 0)?;
    let mut rhs = full.load_from_samples(&d2phi, 1)?;
    rhs.iter_mut().for_each(|v| *v = -*v);
    let n = mesh.n_elements();
    let full_coeffs = mesh.expand(&phi);
    let end_d2 = |e: usize, s: f64| {
        let sh = hermite_shape(s, mesh.h())[2];
        mesh.element_dofs(e).iter().enumerate().map(|(l, &g)| full_coeffs[g] * sh[l]).sum::<f64>()
    };
    rhs[0] -= end_d2(0, 0.0);
    rhs[2 * n] += end_d2(n - 1, 1.0);
    let phi3 = cholesky(&mass)?.solve(&rhs);
    let d3phi = full.at_quad_points(&phi3, 0);

    let mode_pi = |p: &QuadPoint, i: usize| {
        let [r, d1, d2, _] = profile.derivatives(p.x);
        (-lambda * lambda * r * dphi[i] - lambda * mu * (k2 * dphi[i] - d3phi[i]) + sigma * k2 * d1 * d2 * phi_v[i])
            / (lambda * k2)
    };
    let pi: Vec<f64> = qp.iter().enumerate().map(|(i, p)| mode_pi(p, i)).collect();

    // λμw″ − (λ²ρ₀ + λμk²)w = σρ₀′ρ₀″φ − λπ, w = 0 at the ends; vₐ = kₐw
    let inner = mesh.p2(true);
    let stiff = inner.assemble_sym(|_| lambda * mu, 1)?;
    let react = inner.assemble_sym(|x| lambda * lambda * profile.rho(x) + lambda * mu * k2, 0)?;
    let op = crate::linalg::SymMatrix::combine(&[(1.0, &stiff), (1.0, &react)]);
    let source: Vec<f64> = qp
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let [_, d1, d2, _] = profile.derivatives(p.x);
            -(sigma * d1 * d2 * phi_v[i] - lambda * pi[i])
        })
        .collect();
    let w = cholesky(&op)?.solve(&inner.load_from_samples(&source, 0)?);

    // φ′ as a P2 function on interior dofs: nodal slopes and midpoint values
    let dphi_p2: Vec<f64> = (1..2 * n)
        .map(|g| {
            if g % 2 == 0 {
                full_coeffs[g + 1]
            } else {
                mesh.evaluate_in(&phi, g / 2, 0.5, 1)
            }
        })
        .collect();
    let (k1, k2c) = (wavevector.k1, wavevector.k2);
    let (v1, v2) = if k2c != 0.0 {
        let v1: Vec<f64> = w.iter().map(|x| k1 * x).collect();
        let v2 = v1.iter().zip(&dphi_p2).map(|(a, d)| -(k1 * a + d) / k2c).collect();
        (v1, v2)
    } else {
        let v2: Vec<f64> = w.iter().map(|x| k2c * x).collect();
        let v1 = v2.iter().zip(&dphi_p2).map(|(a, d)| -(k2c * a + d) / k1).collect();
        (v1, v2)
    };

    let mut mode = NormalMode {
        wavevector,
        lambda,
        j: cv.j,
        params: *params,
        phi,
        v1,
        v2,
        phi3,
        residuals: ModeResiduals {
            eta_identity: 0.0,
            divergence: 0.0,
            horizontal: [0.0; 2],
            vertical: 0.0,
            ode: 0.0,
            boundary: 0.0,
        },
        mesh: mesh.clone(),
        profile: profile.clone(),
    };
    mode.residuals = mode.compute_residuals()?;
    Ok(mode)
}

fn relative(r: &[f64], terms: &[Vec<f64>]) -> f64 {
    let scale = terms.iter().map(|t| norm2(t)).fold(0.0, f64::max);
    if scale == 0.0 {
        0.0
    } else {
        norm2(r) / scale
    }
}

fn sum_terms(terms: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; terms[0].len()];
    for t in terms {
        out.iter_mut().zip(t).for_each(|(o, v)| *o += v);
    }
    out
}

impl NormalMode {
    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn profile(&self) -> &DensityProfile {
        &self.profile
    }

    pub fn k(&self) -> f64 {
        self.wavevector.magnitude()
    }

    pub fn phi_at(&self, x: f64, order: usize) -> f64 {
        self.mesh.evaluate(&self.phi, x, order)
    }

    pub fn phi3_at(&self, x: f64) -> f64 {
        let (e, s) = self.mesh.locate(x);
        self.mesh.p2(false).evaluate_in(&self.phi3, e, s, 0)
    }

    pub fn v1_at(&self, x: f64, order: usize) -> f64 {
        let (e, s) = self.mesh.locate(x);
        self.mesh.p2(true).evaluate_in(&self.v1, e, s, order)
    }

    pub fn v2_at(&self, x: f64, order: usize) -> f64 {
        let (e, s) = self.mesh.locate(x);
        self.mesh.p2(true).evaluate_in(&self.v2, e, s, order)
    }

    /// Derivatives 0..=2 of η = −ρ₀′φ/λ.
    pub fn eta_at(&self, x: f64, order: usize) -> f64 {
        let [_, d1, d2, d3] = self.profile.derivatives(x);
        let p: [f64; 3] = [0, 1, 2].map(|o| self.phi_at(x, o));
        let v = match order {
            0 => d1 * p[0],
            1 => d2 * p[0] + d1 * p[1],
            2 => d3 * p[0] + 2.0 * d2 * p[1] + d1 * p[2],
            _ => panic!("eta derivative order {order} not available"),
        };
        -v / self.lambda
    }

    pub fn pi_at(&self, x: f64) -> f64 {
        let [r, d1, d2, _] = self.profile.derivatives(x);
        let (l, mu, s) = (self.lambda, self.params.mu, self.params.sigma);
        let k2 = self.k().powi(2);
        let (p, dp) = (self.phi_at(x, 0), self.phi_at(x, 1));
        (-l * l * r * dp - l * mu * (k2 * dp - self.phi3_at(x)) + s * k2 * d1 * d2 * p) / (l * k2)
    }

    /// Profile values at every quadrature point.
    pub fn quadrature_samples(&self) -> ModeSamples {
        let qp = self.mesh.quad_points();
        let inner = self.mesh.p2(true);
        let at = |o| self.mesh.at_quad_points(&self.phi, o);
        let (phi, dphi, d2phi) = (at(0), at(1), at(2));
        let d3phi = self.mesh.p2(false).at_quad_points(&self.phi3, 0);
        let mut eta = Vec::with_capacity(qp.len());
        let mut deta = Vec::with_capacity(qp.len());
        let mut d2eta = Vec::with_capacity(qp.len());
        for (i, p) in qp.iter().enumerate() {
            let [_, d1, d2, d3] = self.profile.derivatives(p.x);
            eta.push(-d1 * phi[i] / self.lambda);
            deta.push(-(d2 * phi[i] + d1 * dphi[i]) / self.lambda);
            d2eta.push(-(d3 * phi[i] + 2.0 * d2 * dphi[i] + d1 * d2phi[i]) / self.lambda);
        }
        ModeSamples {
            x: qp.iter().map(|p| p.x).collect(),
            w: qp.iter().map(|p| p.weight).collect(),
            eta,
            deta,
            d2eta,
            v1: inner.at_quad_points(&self.v1, 0),
            dv1: inner.at_quad_points(&self.v1, 1),
            v2: inner.at_quad_points(&self.v2, 0),
            dv2: inner.at_quad_points(&self.v2, 1),
            phi,
            dphi,
            d2phi,
            d3phi,
        }
    }

    fn compute_residuals(&self) -> Result<ModeResiduals> {
        let s = self.quadrature_samples();
        let qp = self.mesh.quad_points();
        let (l, mu, sigma, g) = (self.lambda, self.params.mu, self.params.sigma, self.params.g);
        let (k1, k2) = (self.wavevector.k1, self.wavevector.k2);
        let kk = self.k().powi(2);
        let n = qp.len();
        let prof: Vec<[f64; 4]> = qp.iter().map(|p| self.profile.derivatives(p.x)).collect();
        let pi: Vec<f64> = qp.iter().map(|p| self.pi_at(p.x)).collect();

        let eta_identity = (0..n)
            .map(|i| (l * s.eta[i] + prof[i][1] * s.phi[i]).abs())
            .fold(0.0, f64::max);

        let mut div = 0.0f64;
        let mut dmax = 0.0f64;
        for i in 0..n {
            div = div.max((k1 * s.v1[i] + k2 * s.v2[i] + s.dphi[i]).abs());
            dmax = dmax.max(s.dphi[i].abs());
        }
        for &x in self.mesh.nodes() {
            div = div.max((k1 * self.v1_at(x, 0) + k2 * self.v2_at(x, 0) + self.phi_at(x, 1)).abs());
            dmax = dmax.max(self.phi_at(x, 1).abs());
        }
        let divergence = if dmax > 0.0 { div / dmax } else { 0.0 };

        let inner = self.mesh.p2(true);
        let col = |f: &dyn Fn(usize) -> f64| (0..n).map(f).collect::<Vec<f64>>();
        let mut horizontal = [0.0; 2];
        for (line, (ki, v, dv)) in [(k1, &s.v1, &s.dv1), (k2, &s.v2, &s.dv2)].into_iter().enumerate() {
            let terms = vec![
                inner.load_from_samples(&col(&|i| l * prof[i][0] * v[i]), 0)?,
                inner.load_from_samples(&col(&|i| -ki * pi[i]), 0)?,
                inner.load_from_samples(&col(&|i| mu * kk * v[i]), 0)?,
                inner.load_from_samples(&col(&|i| -sigma * ki * prof[i][2] * s.eta[i]), 0)?,
                inner.load_from_samples(&col(&|i| mu * dv[i]), 1)?,
            ];
            horizontal[line] = relative(&sum_terms(&terms), &terms);
        }

        let m = &self.mesh;
        let terms = vec![
            m.load_from_samples(&col(&|i| l * prof[i][0] * s.phi[i]), 0)?,
            m.load_from_samples(&col(&|i| -pi[i]), 1)?,
            m.load_from_samples(&col(&|i| mu * kk * s.phi[i]), 0)?,
            m.load_from_samples(&col(&|i| mu * s.dphi[i]), 1)?,
            m.load_from_samples(&col(&|i| -sigma * kk * prof[i][1] * s.eta[i]), 0)?,
            m.load_from_samples(&col(&|i| -sigma * prof[i][1] * s.deta[i]), 1)?,
            m.load_from_samples(&col(&|i| g * s.eta[i]), 0)?,
        ];
        let vertical = relative(&sum_terms(&terms), &terms);

        let ode = eigen_residual(&OperatorBlocks::assemble(m, &self.profile, &self.params, self.k())?, l, &self.phi);

        let phi_inf = (0..=4 * m.n_elements())
            .map(|i| self.phi_at(i as f64 / (4 * m.n_elements()) as f64, 0).abs())
            .fold(0.0, f64::max);
        let ends = [0.0, 1.0]
            .iter()
            .flat_map(|&x| [self.phi_at(x, 0), self.phi_at(x, 1), self.v1_at(x, 0), self.v2_at(x, 0)])
            .fold(0.0f64, |a, v| a.max(v.abs()));
        let boundary = if phi_inf > 0.0 { ends / phi_inf } else { 0.0 };

        Ok(ModeResiduals {
            eta_identity,
            divergence,
            horizontal,
            vertical,
            ode,
            boundary,
        })
    }

    /// Uniformly sampled profiles plus metadata and the quadrature block.
    pub fn export(&self, samples: usize) -> Result<ModeDocument> {
        if samples < 2 {
            return Err(Error::InvalidParameter("export needs at least 2 samples".into()));
        }
        let x3: Vec<f64> = (0..samples).map(|i| i as f64 / (samples - 1) as f64).collect();
        let uniform = UniformSamples {
            eta: x3.iter().map(|&x| self.eta_at(x, 0)).collect(),
            v1: x3.iter().map(|&x| self.v1_at(x, 0)).collect(),
            v2: x3.iter().map(|&x| self.v2_at(x, 0)).collect(),
            phi: x3.iter().map(|&x| self.phi_at(x, 0)).collect(),
            dphi: x3.iter().map(|&x| self.phi_at(x, 1)).collect(),
            pi: x3.iter().map(|&x| self.pi_at(x)).collect(),
            x3,
        };
        let mut doc = ModeDocument {
            metadata: ModeMetadata {
                k1: self.wavevector.k1,
                k2: self.wavevector.k2,
                k: self.k(),
                lambda: self.lambda,
                j: self.j,
                sigma: self.params.sigma,
                g: self.params.g,
                mu: self.params.mu,
                length: self.params.length,
                lambda_max: None,
                n_elements: self.mesh.n_elements(),
                quad_points: self.mesh.quadrature().len(),
                residuals: self.residuals.clone(),
                sample_divergence: 0.0,
                provenance: None,
            },
            samples: uniform,
            quadrature: self.quadrature_samples(),
        };
        doc.metadata.sample_divergence = doc.divergence_residual();
        Ok(doc)
    }
}

/// `‖λ²Aφ + λμDφ − Qφ‖ / ((λ²‖A‖ + λμ‖D‖ + ‖Q‖)·‖φ‖)` with 2-norm estimates.
pub fn eigen_residual(blocks: &OperatorBlocks, lambda: f64, phi: &[f64]) -> f64 {
    let a = blocks.a.matvec(phi);
    let d = blocks.d.matvec(phi);
    let q = blocks.q.matvec(phi);
    let r: Vec<f64> = (0..phi.len())
        .map(|i| lambda * lambda * a[i] + lambda * blocks.mu * d[i] - q[i])
        .collect();
    let scale = lambda * lambda * blocks.a.norm2_estimate()
        + lambda * blocks.mu * blocks.d.norm2_estimate()
        + blocks.q.norm2_estimate();
    let pn = norm2(phi);
    if scale == 0.0 || pn == 0.0 {
        return 0.0;
    }
    norm2(&r) / (scale * pn)
}

/// Relative residual of the fourth-order equation at a solved root.
pub fn ode_residual(
    cv: &CharacteristicValue,
    mesh: &Mesh,
    profile: &DensityProfile,
    params: &PhysicalParams,
) -> Result<f64> {
    let blocks = OperatorBlocks::assemble(mesh, profile, params, cv.k)?;
    Ok(eigen_residual(&blocks, cv.lambda, &cv.phi))
}

/// Tool name, version and config hash embedded in exported documents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeMetadata {
    pub k1: f64,
    pub k2: f64,
    pub k: f64,
    pub lambda: f64,
    pub j: usize,
    pub sigma: f64,
    pub g: f64,
    pub mu: f64,
    #[serde(rename = "L")]
    pub length: f64,
    /// Maximal growth rate Λ of the run, when known.
    #[serde(rename = "Lambda", default, skip_serializing_if = "Option::is_none")]
    pub lambda_max: Option<f64>,
    pub n_elements: usize,
    pub quad_points: usize,
    pub residuals: ModeResiduals,
    /// Divergence residual over the uniform samples of this document.
    pub sample_divergence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformSamples {
    pub x3: Vec<f64>,
    pub eta: Vec<f64>,
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    pub phi: Vec<f64>,
    pub dphi: Vec<f64>,
    pub pi: Vec<f64>,
}

/// Exported mode: metadata, uniform samples and quadrature-point data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeDocument {
    pub metadata: ModeMetadata,
    pub samples: UniformSamples,
    pub quadrature: ModeSamples,
}

impl ModeDocument {
    /// `max |k₁v₁ + k₂v₂ + φ′| / max |φ′|` over the uniform samples.
    pub fn divergence_residual(&self) -> f64 {
        let s = &self.samples;
        let (k1, k2) = (self.metadata.k1, self.metadata.k2);
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for i in 0..s.x3.len() {
            num = num.max((k1 * s.v1[i] + k2 * s.v2[i] + s.dphi[i]).abs());
            den = den.max(s.dphi[i].abs());
        }
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("mode documents serialise")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Convenience: the document of `mode` with `samples` uniform points.
pub fn export_mode(mode: &NormalMode, samples: usize) -> Result<ModeDocument> {
    mode.export(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispersion::{solve_lambda_j, solve_lambdas, FixedPointOptions};
    use crate::mesh::build_mesh;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn setup(n: usize) -> (Mesh, DensityProfile, PhysicalParams) {
        (
            build_mesh(n).unwrap(),
            DensityProfile::linear(1.0, 1.0).unwrap(),
            PhysicalParams::new(1.0, 0.1, 0.02, 1.0).unwrap(),
        )
    }

    fn mode(n: usize, wv: WaveVector) -> NormalMode {
        let (mesh, prof, p) = setup(n);
        let cv = solve_lambda_j(&mesh, &prof, &p, wv.magnitude(), 1).unwrap().unwrap();
        reconstruct_mode(&cv, wv, &mesh, &prof, &p).unwrap()
    }

    #[test]
    fn residuals_vanish_for_oblique_wavevector() {
        let m = mode(64, WaveVector::new(2.0, 1.5).unwrap());
        let r = &m.residuals;
        assert!(r.eta_identity <= 1e-15, "{r:?}");
        assert!(r.divergence <= 1e-10, "{r:?}");
        assert!(r.horizontal[0] <= 1e-7 && r.horizontal[1] <= 1e-7, "{r:?}");
        assert!(r.vertical <= 1e-7, "{r:?}");
        assert!(r.ode <= 1e-10, "{r:?}");
        assert!(r.boundary <= 1e-12, "{r:?}");
    }

    #[test]
    fn axis_aligned_wavevectors() {
        for wv in [WaveVector::new(PI, 0.0).unwrap(), WaveVector::new(0.0, PI).unwrap()] {
            let m = mode(48, wv);
            let r = &m.residuals;
            assert!(r.divergence <= 1e-10 && r.horizontal.iter().all(|&h| h <= 1e-7), "{r:?}");
            // the component along the zero wavenumber vanishes
            if wv.k1 == 0.0 {
                assert!(m.v1.iter().all(|&v| v == 0.0));
            } else {
                assert!(m.v2.iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn horizontal_velocity_matches_divergence_closed_form() {
        let wv = WaveVector::new(1.0, 2.0).unwrap();
        let m = mode(32, wv);
        let kk = wv.magnitude().powi(2);
        for &x in &[0.1, 0.37, 0.5, 0.9] {
            let expect = -wv.k1 * m.phi_at(x, 1) / kk;
            assert!((m.v1_at(x, 0) - expect).abs() < 1e-10 * m.phi_at(x, 1).abs().max(1.0));
        }
    }

    #[test]
    fn third_derivative_projection_converges() {
        // for a smooth clamped field the projected φ‴ converges to the exact one
        let f = |x: f64| (x * (1.0 - x)).powi(2) * (1.0 + x);
        let fp = |x: f64| {
            let u = x * (1.0 - x);
            2.0 * u * (1.0 - 2.0 * x) * (1.0 + x) + u * u
        };
        let f3 = |x: f64| {
            let h = 1e-3;
            (f(x + 2.0 * h) - 2.0 * f(x + h) + 2.0 * f(x - h) - f(x - 2.0 * h)) / (2.0 * h * h * h)
        };
        let mut prev = f64::NAN;
        for n in [8, 16, 32] {
            let mesh = build_mesh(n).unwrap();
            let c = mesh.project(f, fp).unwrap();
            let cv = CharacteristicValue {
                lambda: 1.0,
                j: 1,
                k: 1.0,
                sigma: 0.0,
                phi: c,
                gamma_residual: 0.0,
            };
            let prof = DensityProfile::linear(1.0, 1.0).unwrap();
            let p = PhysicalParams::new(1.0, 1.0, 0.0, 1.0).unwrap();
            let m = reconstruct_mode(&cv, WaveVector::new(1.0, 0.0).unwrap(), &mesh, &prof, &p).unwrap();
            let err = (1..20)
                .map(|i| {
                    let x = 0.25 + 0.5 * i as f64 / 20.0;
                    (m.phi3_at(x) - f3(x)).abs()
                })
                .fold(0.0, f64::max);
            if prev.is_finite() {
                assert!(prev / err > 3.0, "{prev} -> {err}");
            }
            prev = err;
        }
    }

    #[test]
    fn higher_modes_reconstruct() {
        let (mesh, prof, _) = setup(48);
        let p = PhysicalParams::new(1.0, 0.1, 0.002, 1.0).unwrap();
        let cvs = solve_lambdas(&mesh, &prof, &p, 2.0, 3, FixedPointOptions::default()).unwrap();
        assert_eq!(cvs.len(), 3);
        for cv in &cvs {
            let m = reconstruct_mode(cv, WaveVector::new(2.0, 0.0).unwrap(), &mesh, &prof, &p).unwrap();
            assert!(m.residuals.vertical <= 1e-7, "j {}: {:?}", cv.j, m.residuals);
            assert!(m.residuals.ode <= 1e-10, "j {}: {:?}", cv.j, m.residuals);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let (mesh, prof, p) = setup(16);
        let cv = solve_lambda_j(&mesh, &prof, &p, PI, 1).unwrap().unwrap();
        assert!(reconstruct_mode(&cv, WaveVector::new(1.0, 0.0).unwrap(), &mesh, &prof, &p).is_err());
        let mut neg = cv.clone();
        neg.lambda = 0.0;
        assert!(reconstruct_mode(&neg, WaveVector::new(PI, 0.0).unwrap(), &mesh, &prof, &p).is_err());
    }

    #[test]
    fn ode_residual_detects_noise() {
        let (mesh, prof, p) = setup(64);
        let cv = solve_lambda_j(&mesh, &prof, &p, PI, 1).unwrap().unwrap();
        assert!(ode_residual(&cv, &mesh, &prof, &p).unwrap() <= 1e-10);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut noisy = cv.clone();
        noisy.phi.iter_mut().for_each(|v| *v *= 1.0 + 0.01 * rng.gen_range(-1.0..1.0));
        assert!(ode_residual(&noisy, &mesh, &prof, &p).unwrap() > 1e-4);
    }

    #[test]
    fn ode_residual_under_refinement() {
        for n in [64, 128] {
            let (mesh, prof, p) = setup(n);
            let cv = solve_lambda_j(&mesh, &prof, &p, PI, 1).unwrap().unwrap();
            assert!(ode_residual(&cv, &mesh, &prof, &p).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn export_round_trip() {
        let m = mode(32, WaveVector::new(2.0, 2.0).unwrap());
        let doc = m.export(2).unwrap();
        assert_eq!(doc.samples.x3, vec![0.0, 1.0]);
        for col in [&doc.samples.phi, &doc.samples.v1, &doc.samples.v2] {
            assert!(col.iter().all(|&v| v == 0.0));
        }
        assert_eq!(doc.metadata.lambda, m.lambda);
        let doc = m.export(101).unwrap();
        let back = ModeDocument::from_json(&doc.to_json()).unwrap();
        assert_eq!(back, doc);
        assert!((back.divergence_residual() - doc.metadata.sample_divergence).abs() <= 1e-12);
        assert!(export_mode(&m, 1).is_err());
    }

    #[test]
    fn normalisation_and_sign() {
        let m = mode(32, WaveVector::new(PI, 0.0).unwrap());
        let l2 = m.mesh().integrate(|x| m.phi_at(x, 0).powi(2)).unwrap();
        assert!((l2 - 1.0).abs() < 1e-12);
        let first = m.phi.iter().find(|v| v.abs() > 1e-8).unwrap();
        assert!(*first > 0.0);
    }
}
