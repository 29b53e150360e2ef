//! Uniform Hermite-cubic discretisation of (0, 1), quadrature, and assembly of
//! weighted bilinear forms `∫ w · Dᵃu · Dᵇv`.
//!
//! Global dof numbering: node `i` carries its value at `2i` and its slope at
//! `2i + 1`. Constrained dofs are removed and the rest renumbered in order,
//! so every assembled matrix has half-bandwidth 3.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{BandMatrix, SymMatrix};

pub const DEFAULT_QUAD_POINTS: usize = 4;
pub const HERMITE_BANDWIDTH: usize = 3;
pub const P2_BANDWIDTH: usize = 2;

/// Which endpoint dofs are removed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    /// Value and slope vanish at both ends (H₀²).
    Clamped,
    /// Only the value vanishes at both ends (H₀¹); end slopes stay free.
    Dirichlet,
}

/// Gauss-Legendre rule mapped to the reference element [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `n`-point Gauss-Legendre rule on [0, 1]; nodes by Newton iteration on Pₙ.
pub fn gauss_legendre(n: usize) -> Result<QuadratureRule> {
    if n == 0 || n > 64 {
        return Err(Error::InvalidParameter(format!(
            "quadrature order must be in 1..=64, got {n}"
        )));
    }
    let mut points = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for m in 2..=n {
                let mf = m as f64;
                let p2 = ((2.0 * mf - 1.0) * x * p1 - (mf - 1.0) * p0) / mf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * pn - pnm1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // map [-1, 1] -> [0, 1]; ascending order
        points[i] = 0.5 * (1.0 - x);
        points[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    if n % 2 == 1 {
        points[n / 2] = 0.5;
    }
    Ok(QuadratureRule { points, weights })
}

/// Derivatives 0..=3 of the four Hermite shape functions at reference
/// coordinate `s` on an element of length `h`, with respect to x.
/// Local order: value left, slope left, value right, slope right.
pub fn hermite_shape(s: f64, h: f64) -> [[f64; 4]; 4] {
    let s2 = s * s;
    let s3 = s2 * s;
    [
        [1.0 - 3.0 * s2 + 2.0 * s3, h * (s - 2.0 * s2 + s3), 3.0 * s2 - 2.0 * s3, h * (-s2 + s3)],
        [
            (-6.0 * s + 6.0 * s2) / h,
            1.0 - 4.0 * s + 3.0 * s2,
            (6.0 * s - 6.0 * s2) / h,
            -2.0 * s + 3.0 * s2,
        ],
        [
            (-6.0 + 12.0 * s) / (h * h),
            (-4.0 + 6.0 * s) / h,
            (6.0 - 12.0 * s) / (h * h),
            (-2.0 + 6.0 * s) / h,
        ],
        [12.0 / (h * h * h), 6.0 / (h * h), -12.0 / (h * h * h), 6.0 / (h * h)],
    ]
}

/// Derivatives 0..=2 of the three quadratic Lagrange shape functions
/// (left node, midpoint, right node) at `s` on an element of length `h`.
pub fn p2_shape(s: f64, h: f64) -> [[f64; 3]; 3] {
    [
        [(1.0 - s) * (1.0 - 2.0 * s), 4.0 * s * (1.0 - s), s * (2.0 * s - 1.0)],
        [(4.0 * s - 3.0) / h, (4.0 - 8.0 * s) / h, (4.0 * s - 1.0) / h],
        [4.0 / (h * h), -8.0 / (h * h), 4.0 / (h * h)],
    ]
}

/// A point of the composite quadrature.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadPoint {
    pub element: usize,
    /// Reference coordinate in [0, 1].
    pub s: f64,
    pub x: f64,
    /// Weight including the element length.
    pub weight: f64,
}

/// Uniform mesh of (0, 1) with Hermite cubic elements.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    n_elements: usize,
    nodes: Vec<f64>,
    h: f64,
    quadrature: QuadratureRule,
    constraint: Constraint,
    global_to_active: Vec<Option<usize>>,
    active_to_global: Vec<usize>,
}

/// Clamped mesh with the default quadrature.
pub fn build_mesh(n_elements: usize) -> Result<Mesh> {
    Mesh::new(n_elements, DEFAULT_QUAD_POINTS, Constraint::Clamped)
}

impl Mesh {
    pub fn new(n_elements: usize, quad_points: usize, constraint: Constraint) -> Result<Self> {
        if n_elements < 2 {
            return Err(Error::TooFewElements(n_elements));
        }
        let quadrature = gauss_legendre(quad_points)?;
        let nodes: Vec<f64> = (0..=n_elements).map(|i| i as f64 / n_elements as f64).collect();
        let dof_count = 2 * (n_elements + 1);
        let constrained = constrained_dofs(n_elements, constraint);
        let mut global_to_active = vec![None; dof_count];
        let mut active_to_global = Vec::with_capacity(dof_count);
        for (g, slot) in global_to_active.iter_mut().enumerate() {
            if !constrained.contains(&g) {
                *slot = Some(active_to_global.len());
                active_to_global.push(g);
            }
        }
        Ok(Self {
            n_elements,
            nodes,
            h: 1.0 / n_elements as f64,
            quadrature,
            constraint,
            global_to_active,
            active_to_global,
        })
    }

    /// Same nodes and quadrature under a different constraint.
    pub fn with_constraint(&self, constraint: Constraint) -> Self {
        Self::new(self.n_elements, self.quadrature.len(), constraint).expect("mesh already validated")
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn quadrature(&self) -> &QuadratureRule {
        &self.quadrature
    }

    pub fn constraint(&self) -> Constraint {
        self.constraint
    }

    /// Dofs before constraint elimination.
    pub fn dof_count(&self) -> usize {
        2 * (self.n_elements + 1)
    }

    pub fn active_dof_count(&self) -> usize {
        self.active_to_global.len()
    }

    pub fn constrained_dofs(&self) -> Vec<usize> {
        constrained_dofs(self.n_elements, self.constraint)
    }

    pub fn active_index(&self, global: usize) -> Option<usize> {
        self.global_to_active[global]
    }

    pub fn global_index(&self, active: usize) -> usize {
        self.active_to_global[active]
    }

    pub fn element_dofs(&self, e: usize) -> [usize; 4] {
        [2 * e, 2 * e + 1, 2 * e + 2, 2 * e + 3]
    }

    /// All composite quadrature points in increasing `x`.
    pub fn quad_points(&self) -> Vec<QuadPoint> {
        let q = &self.quadrature;
        let mut out = Vec::with_capacity(self.n_elements * q.len());
        for e in 0..self.n_elements {
            for (s, w) in q.points.iter().zip(&q.weights) {
                out.push(QuadPoint {
                    element: e,
                    s: *s,
                    x: self.nodes[e] + s * self.h,
                    weight: w * self.h,
                });
            }
        }
        out
    }

    /// Element containing `x` and the reference coordinate there.
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let x = x.clamp(0.0, 1.0);
        let e = ((x * self.n_elements as f64).floor() as usize).min(self.n_elements - 1);
        (e, (x - self.nodes[e]) / self.h)
    }

    /// Full-length coefficient vector with zeros at constrained dofs.
    pub fn expand(&self, active: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.dof_count()];
        for (a, &g) in self.active_to_global.iter().enumerate() {
            full[g] = active[a];
        }
        full
    }

    /// Restriction of a full-length vector to active dofs.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.active_to_global.iter().map(|&g| full[g]).collect()
    }

    /// `Dᵒʳᵈᵉʳ` of the field with active coefficients `coeffs` at `x`.
    pub fn evaluate(&self, coeffs: &[f64], x: f64, order: usize) -> f64 {
        let (e, s) = self.locate(x);
        self.evaluate_in(coeffs, e, s, order)
    }

    pub fn evaluate_in(&self, coeffs: &[f64], e: usize, s: f64, order: usize) -> f64 {
        let shape = hermite_shape(s, self.h);
        self.element_dofs(e)
            .iter()
            .enumerate()
            .filter_map(|(l, &g)| self.global_to_active[g].map(|a| coeffs[a] * shape[order][l]))
            .sum()
    }

    /// Values of `Dᵒʳᵈᵉʳ` of the field at every quadrature point.
    pub fn at_quad_points(&self, coeffs: &[f64], order: usize) -> Vec<f64> {
        self.quad_points()
            .iter()
            .map(|p| self.evaluate_in(coeffs, p.element, p.s, order))
            .collect()
    }

    /// Element-wise Gauss quadrature of `f` over (0, 1).
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> Result<f64> {
        let mut sum = 0.0;
        for p in self.quad_points() {
            let v = f(p.x);
            if !v.is_finite() {
                return Err(Error::NonFinite { x: p.x, value: v });
            }
            sum += p.weight * v;
        }
        Ok(sum)
    }

    /// Symmetric form `∫ w · Dᵒu · Dᵒv` over the active dofs.
    pub fn assemble_sym(&self, weight: impl Fn(f64) -> f64, order: usize) -> Result<SymMatrix> {
        check_order(order)?;
        let mut m = SymMatrix::zeros(self.active_dof_count(), HERMITE_BANDWIDTH);
        for p in self.quad_points() {
            let w = weight(p.x);
            if !w.is_finite() {
                return Err(Error::NonFinite { x: p.x, value: w });
            }
            if w == 0.0 {
                continue;
            }
            let d = hermite_shape(p.s, self.h)[order];
            let dofs = self.element_dofs(p.element);
            for i in 0..4 {
                let Some(ai) = self.global_to_active[dofs[i]] else { continue };
                for j in 0..=i {
                    let Some(aj) = self.global_to_active[dofs[j]] else { continue };
                    m.add(ai, aj, p.weight * w * d[i] * d[j]);
                }
            }
        }
        Ok(m)
    }

    /// General form `∫ w · Dᵃu_j · Dᵇu_i`; row `i` is the test function.
    pub fn assemble_form(
        &self,
        weight: impl Fn(f64) -> f64,
        left_order: usize,
        right_order: usize,
    ) -> Result<WeightedForm> {
        check_order(left_order)?;
        check_order(right_order)?;
        let n = self.active_dof_count();
        let mut m = BandMatrix::zeros(n, HERMITE_BANDWIDTH, HERMITE_BANDWIDTH);
        for p in self.quad_points() {
            let w = weight(p.x);
            if !w.is_finite() {
                return Err(Error::NonFinite { x: p.x, value: w });
            }
            let shape = hermite_shape(p.s, self.h);
            let (trial, test) = (shape[left_order], shape[right_order]);
            let dofs = self.element_dofs(p.element);
            for i in 0..4 {
                let Some(ai) = self.global_to_active[dofs[i]] else { continue };
                for j in 0..4 {
                    let Some(aj) = self.global_to_active[dofs[j]] else { continue };
                    m.add(ai, aj, p.weight * w * trial[j] * test[i]);
                }
            }
        }
        Ok(WeightedForm {
            left_order,
            right_order,
            matrix: m,
        })
    }

    /// Load vector `∫ f · Dᵒψ_i`.
    pub fn load(&self, f: impl Fn(f64) -> f64, order: usize) -> Result<Vec<f64>> {
        let values: Vec<f64> = self.quad_points().iter().map(|p| f(p.x)).collect();
        self.load_from_samples(&values, order)
    }

    /// Load vector from integrand values given at the quadrature points.
    pub fn load_from_samples(&self, values: &[f64], order: usize) -> Result<Vec<f64>> {
        check_order(order)?;
        let mut out = vec![0.0; self.active_dof_count()];
        for (p, &v) in self.quad_points().iter().zip(values) {
            if !v.is_finite() {
                return Err(Error::NonFinite { x: p.x, value: v });
            }
            let d = hermite_shape(p.s, self.h)[order];
            for (l, &g) in self.element_dofs(p.element).iter().enumerate() {
                if let Some(a) = self.global_to_active[g] {
                    out[a] += p.weight * v * d[l];
                }
            }
        }
        Ok(out)
    }

    /// Hermite interpolant of `(f, f′)` on active dofs.
    pub fn project(&self, f: impl Fn(f64) -> f64, f_prime: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
        const TOL: f64 = 1e-12;
        let ends = [(0.0, "x3 = 0"), (1.0, "x3 = 1")];
        for (x, at) in ends {
            let v = f(x);
            if v.abs() > TOL {
                return Err(Error::IncompatibleBoundary(format!("f = {v} at {at}")));
            }
            if self.constraint == Constraint::Clamped {
                let d = f_prime(x);
                if d.abs() > TOL {
                    return Err(Error::IncompatibleBoundary(format!("f' = {d} at {at}")));
                }
            }
        }
        let mut full = vec![0.0; self.dof_count()];
        for (i, &x) in self.nodes.iter().enumerate() {
            full[2 * i] = f(x);
            full[2 * i + 1] = f_prime(x);
        }
        for (g, v) in full.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { x: self.nodes[g / 2], value: *v });
            }
        }
        Ok(self.restrict(&full))
    }

    /// Continuous piecewise-quadratic space on the same nodes.
    pub fn p2(&self, interior_only: bool) -> P2Space<'_> {
        P2Space {
            mesh: self,
            interior_only,
        }
    }
}

fn constrained_dofs(n_elements: usize, constraint: Constraint) -> Vec<usize> {
    let last = 2 * n_elements;
    match constraint {
        Constraint::Clamped => vec![0, 1, last, last + 1],
        Constraint::Dirichlet => vec![0, last],
    }
}

fn check_order(order: usize) -> Result<()> {
    if order > 2 {
        return Err(Error::InvalidParameter(format!(
            "derivative order must be 0, 1 or 2, got {order}"
        )));
    }
    Ok(())
}

/// An assembled `∫ w · Dᵃu · Dᵇv`. Not symmetrised when `a ≠ b`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedForm {
    pub left_order: usize,
    pub right_order: usize,
    pub matrix: BandMatrix,
}

impl WeightedForm {
    /// Value of the form at trial `u`, test `v`.
    pub fn apply(&self, u: &[f64], v: &[f64]) -> f64 {
        self.matrix.matvec(u).iter().zip(v).map(|(a, b)| a * b).sum()
    }
}

/// C⁰ piecewise quadratics on the mesh nodes. Dof `2i` is node `i`, dof
/// `2i + 1` the midpoint of element `i`. With `interior_only` the two end
/// values are removed.
#[derive(Clone, Copy, Debug)]
pub struct P2Space<'a> {
    mesh: &'a Mesh,
    interior_only: bool,
}

impl P2Space<'_> {
    pub fn dof_count(&self) -> usize {
        let full = 2 * self.mesh.n_elements + 1;
        if self.interior_only {
            full - 2
        } else {
            full
        }
    }

    fn active(&self, global: usize) -> Option<usize> {
        if !self.interior_only {
            return Some(global);
        }
        let last = 2 * self.mesh.n_elements;
        (global != 0 && global != last).then(|| global - 1)
    }

    fn element_dofs(e: usize) -> [usize; 3] {
        [2 * e, 2 * e + 1, 2 * e + 2]
    }

    /// `∫ w · Dᵒu · Dᵒv`.
    pub fn assemble_sym(&self, weight: impl Fn(f64) -> f64, order: usize) -> Result<SymMatrix> {
        check_order(order)?;
        let mut m = SymMatrix::zeros(self.dof_count(), P2_BANDWIDTH);
        for p in self.mesh.quad_points() {
            let w = weight(p.x);
            if !w.is_finite() {
                return Err(Error::NonFinite { x: p.x, value: w });
            }
            let d = p2_shape(p.s, self.mesh.h)[order];
            let dofs = Self::element_dofs(p.element);
            for i in 0..3 {
                let Some(ai) = self.active(dofs[i]) else { continue };
                for j in 0..=i {
                    let Some(aj) = self.active(dofs[j]) else { continue };
                    m.add(ai, aj, p.weight * w * d[i] * d[j]);
                }
            }
        }
        Ok(m)
    }

    /// `∫ f · Dᵒψ_i` from integrand values at the mesh quadrature points.
    pub fn load_from_samples(&self, values: &[f64], order: usize) -> Result<Vec<f64>> {
        check_order(order)?;
        let mut out = vec![0.0; self.dof_count()];
        for (p, &v) in self.mesh.quad_points().iter().zip(values) {
            if !v.is_finite() {
                return Err(Error::NonFinite { x: p.x, value: v });
            }
            let d = p2_shape(p.s, self.mesh.h)[order];
            for (l, &g) in Self::element_dofs(p.element).iter().enumerate() {
                if let Some(a) = self.active(g) {
                    out[a] += p.weight * v * d[l];
                }
            }
        }
        Ok(out)
    }

    /// Point values `[end at 0, ..., end at 1]` of a field given on active dofs.
    pub fn expand(&self, coeffs: &[f64]) -> Vec<f64> {
        if !self.interior_only {
            return coeffs.to_vec();
        }
        let mut full = Vec::with_capacity(coeffs.len() + 2);
        full.push(0.0);
        full.extend_from_slice(coeffs);
        full.push(0.0);
        full
    }

    pub fn evaluate_in(&self, coeffs: &[f64], e: usize, s: f64, order: usize) -> f64 {
        let d = p2_shape(s, self.mesh.h)[order];
        Self::element_dofs(e)
            .iter()
            .enumerate()
            .filter_map(|(l, &g)| self.active(g).map(|a| coeffs[a] * d[l]))
            .sum()
    }

    pub fn at_quad_points(&self, coeffs: &[f64], order: usize) -> Vec<f64> {
        self.mesh
            .quad_points()
            .iter()
            .map(|p| self.evaluate_in(coeffs, p.element, p.s, order))
            .collect()
    }
}
