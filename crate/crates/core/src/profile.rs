//! Equilibrium density profiles ρ₀ on (0, 1) and the physical parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{solve_banded, BandMatrix};

/// Samples used by the positivity and monotonicity scans.
pub const SCAN_POINTS: usize = 1024;

/// Gravity, viscosity, capillary coefficient and horizontal period scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub g: f64,
    pub mu: f64,
    pub sigma: f64,
    /// Horizontal period scale `L`; the torus has side `2πL`.
    #[serde(rename = "L")]
    pub length: f64,
}

impl PhysicalParams {
    pub fn new(g: f64, mu: f64, sigma: f64, length: f64) -> Result<Self> {
        let p = Self { g, mu, sigma, length };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.g > 0.0 && self.g.is_finite()) {
            return Err(Error::InvalidParameter("g must be positive".into()));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::InvalidParameter("mu must be positive".into()));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter("sigma must be nonnegative".into()));
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(Error::InvalidParameter("L must be positive".into()));
        }
        Ok(())
    }

    pub fn with_sigma(&self, sigma: f64) -> Self {
        Self { sigma, ..*self }
    }
}

/// How ρ₀ is described.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileKind {
    /// ρ₀ = a + b·x₃
    Linear { a: f64, b: f64 },
    /// ρ₀ = a·exp(b·x₃)
    Exponential { a: f64, b: f64 },
    /// Not-a-knot cubic spline through (x, ρ₀) pairs spanning [0, 1].
    Tabulated { knots: Vec<f64>, values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq)]
struct CubicSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    // second derivatives at the knots
    moments: Vec<f64>,
}

impl CubicSpline {
    fn not_a_knot(knots: &[f64], values: &[f64]) -> Result<Self> {
        let n = knots.len();
        if n < 4 || values.len() != n {
            return Err(Error::InvalidParameter(
                "tabulated profile needs at least 4 (x, rho0) pairs".into(),
            ));
        }
        if knots[0] != 0.0 || knots[n - 1] != 1.0 {
            return Err(Error::InvalidParameter("tabulated profile must span [0, 1]".into()));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("tabulated knots must be strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("tabulated values must be finite".into()));
        }
        let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        let mut m = BandMatrix::zeros(n, 2, 2);
        let mut rhs = vec![0.0; n];
        m.set(0, 0, -h[1]);
        m.set(0, 1, h[0] + h[1]);
        m.set(0, 2, -h[0]);
        for i in 1..n - 1 {
            m.set(i, i - 1, h[i - 1]);
            m.set(i, i, 2.0 * (h[i - 1] + h[i]));
            m.set(i, i + 1, h[i]);
            rhs[i] = 6.0 * ((values[i + 1] - values[i]) / h[i] - (values[i] - values[i - 1]) / h[i - 1]);
        }
        m.set(n - 1, n - 3, -h[n - 2]);
        m.set(n - 1, n - 2, h[n - 3] + h[n - 2]);
        m.set(n - 1, n - 1, -h[n - 3]);
        let moments = solve_banded(&m, &rhs)?;
        Ok(Self {
            knots: knots.to_vec(),
            values: values.to_vec(),
            moments,
        })
    }

    fn derivatives(&self, x: f64) -> [f64; 4] {
        let n = self.knots.len();
        let i = match self.knots.binary_search_by(|k| k.total_cmp(&x)) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        };
        let (x0, x1) = (self.knots[i], self.knots[i + 1]);
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.moments[i], self.moments[i + 1]);
        let h = x1 - x0;
        let a = x1 - x;
        let b = x - x0;
        let c0 = y0 / h - m0 * h / 6.0;
        let c1 = y1 / h - m1 * h / 6.0;
        [
            m0 * a * a * a / (6.0 * h) + m1 * b * b * b / (6.0 * h) + c0 * a + c1 * b,
            -m0 * a * a / (2.0 * h) + m1 * b * b / (2.0 * h) - c0 + c1,
            (m0 * a + m1 * b) / h,
            (m1 - m0) / h,
        ]
    }
}

/// An admissible equilibrium profile: ρ₀ > 0 and ρ₀′ > 0 on [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct DensityProfile {
    kind: ProfileKind,
    spline: Option<CubicSpline>,
    // kept apart from `kind` so ρ₀′/ρ₀ is bit-identical under rescaling
    scale: f64,
}

impl DensityProfile {
    pub fn linear(a: f64, b: f64) -> Result<Self> {
        make_profile(ProfileKind::Linear { a, b })
    }

    pub fn exponential(a: f64, b: f64) -> Result<Self> {
        make_profile(ProfileKind::Exponential { a, b })
    }

    pub fn tabulated(table: &[(f64, f64)]) -> Result<Self> {
        let (knots, values) = table.iter().copied().unzip();
        make_profile(ProfileKind::Tabulated { knots, values })
    }

    /// The unscaled shape; ρ₀ is `scale()` times it.
    pub fn kind(&self) -> &ProfileKind {
        &self.kind
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `[ρ₀, ρ₀′, ρ₀″, ρ₀‴]` at `x`. For tabulated profiles ρ₀‴ is piecewise
    /// constant.
    pub fn derivatives(&self, x: f64) -> [f64; 4] {
        let d = self.shape_derivatives(x);
        if self.scale == 1.0 {
            d
        } else {
            d.map(|v| self.scale * v)
        }
    }

    fn shape_derivatives(&self, x: f64) -> [f64; 4] {
        match &self.kind {
            ProfileKind::Linear { a, b } => [a + b * x, *b, 0.0, 0.0],
            ProfileKind::Exponential { a, b } => {
                let r = a * (b * x).exp();
                [r, b * r, b * b * r, b * b * b * r]
            }
            ProfileKind::Tabulated { .. } => self
                .spline
                .as_ref()
                .expect("tabulated profile carries its spline")
                .derivatives(x),
        }
    }

    pub fn rho(&self, x: f64) -> f64 {
        self.derivatives(x)[0]
    }

    pub fn d1(&self, x: f64) -> f64 {
        self.derivatives(x)[1]
    }

    pub fn d2(&self, x: f64) -> f64 {
        self.derivatives(x)[2]
    }

    pub fn d3(&self, x: f64) -> f64 {
        self.derivatives(x)[3]
    }

    /// Returns a copy with ρ₀ multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidParameter(format!("profile scale must be positive, got {c}")));
        }
        Ok(Self {
            scale: self.scale * c,
            ..self.clone()
        })
    }

    /// Minimum of `f` over [0, 1]: uniform scan then golden-section polish.
    fn scan_min(&self, f: impl Fn(f64) -> f64) -> (f64, f64) {
        let n = SCAN_POINTS;
        let xs = |i: usize| i as f64 / (n - 1) as f64;
        let (mut best_i, mut best) = (0, f(0.0));
        for i in 1..n {
            let v = f(xs(i));
            if v < best {
                best = v;
                best_i = i;
            }
        }
        let lo = xs(best_i.saturating_sub(1));
        let hi = xs((best_i + 1).min(n - 1));
        let (xp, vp) = golden_section_min(&f, lo, hi, 1e-12);
        if vp < best {
            (xp, vp)
        } else {
            (xs(best_i), best)
        }
    }
}

/// Validates parameters and builds the profile.
pub fn make_profile(kind: ProfileKind) -> Result<DensityProfile> {
    let spline = match &kind {
        ProfileKind::Linear { a, b } | ProfileKind::Exponential { a, b } => {
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::InvalidParameter("profile parameters must be finite".into()));
            }
            None
        }
        ProfileKind::Tabulated { knots, values } => Some(CubicSpline::not_a_knot(knots, values)?),
    };
    let profile = DensityProfile { kind, spline, scale: 1.0 };
    let (x, v) = profile.scan_min(|x| profile.d1(x));
    if !(v > 0.0) {
        return Err(Error::ProfileNotIncreasing { x, value: v });
    }
    let (x, v) = profile.scan_min(|x| profile.rho(x));
    if !(v > 0.0) {
        return Err(Error::ProfileNotPositive { x, value: v });
    }
    Ok(profile)
}

/// Golden-section search for a minimum of `f` on `[a, b]`.
pub(crate) fn golden_section_min(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// `L₀ = 1 / max(ρ₀′/ρ₀)` and where that maximum is attained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicLength {
    pub l0: f64,
    pub argmax_x3: f64,
}

pub fn characteristic_length(profile: &DensityProfile) -> CharacteristicLength {
    let (x, v) = profile.scan_min(|x| {
        let [r, d, _, _] = profile.shape_derivatives(x);
        -(d / r)
    });
    CharacteristicLength {
        l0: 1.0 / (-v),
        argmax_x3: x,
    }
}

/// The uniform bound `√(g/L₀)` on every characteristic value.
pub fn lambda_upper_bound(profile: &DensityProfile, params: &PhysicalParams) -> f64 {
    (params.g / characteristic_length(profile).l0).sqrt()
}
