//! Run configuration: TOML with line-numbered diagnostics.

use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};

use nskrt_core::evolution::default_dt;
use nskrt_core::instability::EpsilonConstants;
use nskrt_core::mesh::{gauss_legendre, DEFAULT_QUAD_POINTS};
use nskrt_core::{make_profile, DensityProfile, PhysicalParams, ProfileKind, WaveVector};
use serde::Deserialize;
use sha2::{Digest, Sha256};
use toml::Spanned;

pub const DEFAULT_N_ELEMENTS: usize = 128;
pub const DEFAULT_J_MAX: usize = 4;
pub const DEFAULT_FIXED_POINT_TOL: f64 = 1e-10;
pub const DEFAULT_EIG_TOL: f64 = 1e-13;
pub const DEFAULT_N_K: usize = 64;
pub const DEFAULT_SAMPLES: usize = 201;

/// A configuration problem; exits with status 2.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(src: &str, span: Option<Range<usize>>, message: impl Into<String>) -> Self {
        Self {
            line: span.map(|s| line_of(src, s.start)),
            message: message.into(),
        }
    }

    pub fn new(message: impl Into<String>) -> Self {
        Self {
            line: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "config error at line {l}: {}", self.message),
            None => write!(f, "config error: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    g: Spanned<f64>,
    mu: Spanned<f64>,
    sigma: Spanned<f64>,
    #[serde(rename = "L")]
    length: Spanned<f64>,
    profile: Option<Spanned<RawProfile>>,
    #[serde(default)]
    mesh: RawMesh,
    #[serde(default)]
    dispersion: RawDispersion,
    #[serde(default)]
    tolerances: RawTolerances,
    #[serde(default)]
    mode: RawMode,
    #[serde(default)]
    evolution: RawEvolution,
    #[serde(default)]
    instability: RawInstability,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProfile {
    kind: Spanned<String>,
    a: Option<Spanned<f64>>,
    b: Option<Spanned<f64>>,
    /// `[a, b]`, an alternative to the separate keys
    params: Option<Spanned<Vec<f64>>>,
    table: Option<Spanned<Vec<[f64; 2]>>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawMesh {
    n_elements: Option<Spanned<i64>>,
    quad_points: Option<Spanned<i64>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawDispersion {
    k_max: Option<Spanned<f64>>,
    j_max: Option<Spanned<i64>>,
    k: Option<Spanned<Vec<f64>>>,
    n_k: Option<Spanned<i64>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawTolerances {
    fixed_point_tol: Option<Spanned<f64>>,
    eig_tol: Option<Spanned<f64>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawMode {
    k1: Option<Spanned<f64>>,
    k2: Option<Spanned<f64>>,
    j: Option<Spanned<i64>>,
    lambda: Option<Spanned<f64>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawDt {
    Fixed(f64),
    Named(String),
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawEvolution {
    dt: Option<Spanned<RawDt>>,
    t_end: Option<Spanned<f64>>,
    initial: Option<Spanned<String>>,
    seed: Option<Spanned<i64>>,
    record_every: Option<Spanned<i64>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawInstability {
    modes: Option<Vec<String>>,
    coefficients: Option<Spanned<Vec<f64>>>,
    delta: Option<Spanned<f64>>,
    epsilon0: Option<Spanned<f64>>,
    #[serde(rename = "Lambda")]
    lambda_max: Option<Spanned<f64>>,
    constants: Option<Spanned<RawConstants>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstants {
    c2: f64,
    c3: f64,
    c4: f64,
    c5: f64,
    delta0: f64,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<String>,
    samples: Option<Spanned<i64>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TimeStep {
    Auto,
    Fixed(f64),
}

impl TimeStep {
    pub fn resolve(&self, lambda_1: Option<f64>) -> f64 {
        match *self {
            TimeStep::Auto => default_dt(lambda_1),
            TimeStep::Fixed(dt) => dt,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitialData {
    /// φ = φⱼ, χ = λⱼφⱼ
    Eigen,
    /// Smooth clamped bump with random coefficients, χ = 0.
    Random,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionConfig {
    pub dt: TimeStep,
    pub t_end: Option<f64>,
    pub initial: InitialData,
    pub seed: u64,
    pub record_every: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InstabilityConfig {
    pub modes: Option<Vec<PathBuf>>,
    pub coefficients: Option<Vec<f64>>,
    pub delta: f64,
    pub epsilon0: f64,
    pub lambda_max: Option<f64>,
    pub constants: Option<EpsilonConstants>,
}

/// Validated configuration with defaults filled.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub params: PhysicalParams,
    pub profile_kind: ProfileKind,
    pub profile: DensityProfile,
    pub n_elements: usize,
    pub quad_points: usize,
    pub k_max: Option<f64>,
    pub j_max: usize,
    pub k_list: Option<Vec<f64>>,
    pub n_k: usize,
    pub fixed_point_tol: f64,
    pub eig_tol: f64,
    /// Target wavevector for `modes`, `evolve` and `gamma-spectrum`.
    pub wavevector: Option<WaveVector>,
    pub j: usize,
    pub lambda: Option<f64>,
    pub evolution: EvolutionConfig,
    pub instability: InstabilityConfig,
    pub out_dir: Option<PathBuf>,
    pub samples: usize,
    /// SHA-256 of the config text and any overrides.
    pub hash: String,
}

/// Command-line overrides of config values.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub k: Option<f64>,
    pub j: Option<usize>,
    pub lambda: Option<f64>,
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = parse_config_str(&text)?;
    if let Some(base) = path.parent() {
        if let Some(m) = cfg.instability.modes.as_mut() {
            for p in m.iter_mut().filter(|p| p.is_relative()) {
                *p = base.join(&*p);
            }
        }
        if let Some(d) = cfg.out_dir.as_mut().filter(|d| d.is_relative()) {
            *d = base.join(&*d);
        }
    }
    Ok(cfg)
}

fn positive(src: &str, v: &Spanned<f64>, what: &str) -> Result<f64, ConfigError> {
    let x = *v.get_ref();
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(ConfigError::at(src, Some(v.span()), format!("{what} must be positive, got {x}")))
    }
}

fn count(src: &str, v: &Spanned<i64>, what: &str, min: i64) -> Result<usize, ConfigError> {
    let x = *v.get_ref();
    if x >= min {
        Ok(x as usize)
    } else {
        Err(ConfigError::at(src, Some(v.span()), format!("{what} must be at least {min}, got {x}")))
    }
}

pub fn parse_config_str(src: &str) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(src).map_err(|e| ConfigError::at(src, e.span(), e.message().trim()))?;

    let params = PhysicalParams::new(*raw.g.get_ref(), *raw.mu.get_ref(), *raw.sigma.get_ref(), *raw.length.get_ref())
        .map_err(|e| {
            let msg = e.to_string();
            let span = [("g ", &raw.g), ("mu ", &raw.mu), ("sigma ", &raw.sigma), ("L ", &raw.length)]
                .iter()
                .find(|(k, _)| msg.contains(k))
                .map(|(_, v)| v.span());
            ConfigError::at(src, span, msg.trim_start_matches("invalid parameter: "))
        })?;

    let prof = raw
        .profile
        .ok_or_else(|| ConfigError::new("missing [profile] section"))?;
    let prof_span = prof.span();
    let prof = prof.into_inner();
    let need = |v: &Option<Spanned<f64>>, name: &str| {
        v.as_ref().map(|s| *s.get_ref()).ok_or_else(|| {
            ConfigError::at(src, Some(prof.kind.span()), format!("[profile] kind = \"{}\" needs `{name}`", prof.kind.get_ref()))
        })
    };
    let ab = || -> Result<(f64, f64), ConfigError> {
        match &prof.params {
            Some(p) if prof.a.is_some() || prof.b.is_some() => {
                Err(ConfigError::at(src, Some(p.span()), "[profile] give either `params` or `a`/`b`, not both"))
            }
            Some(p) => match p.get_ref().as_slice() {
                [a, b] => Ok((*a, *b)),
                v => Err(ConfigError::at(
                    src,
                    Some(p.span()),
                    format!("[profile] `params` needs two values [a, b], got {}", v.len()),
                )),
            },
            None => Ok((need(&prof.a, "a")?, need(&prof.b, "b")?)),
        }
    };
    let profile_kind = match prof.kind.get_ref().as_str() {
        "linear" => {
            let (a, b) = ab()?;
            ProfileKind::Linear { a, b }
        }
        "exponential" => {
            let (a, b) = ab()?;
            ProfileKind::Exponential { a, b }
        }
        "tabulated" => {
            let t = prof.table.as_ref().ok_or_else(|| {
                ConfigError::at(src, Some(prof.kind.span()), "[profile] kind = \"tabulated\" needs `table`")
            })?;
            ProfileKind::Tabulated {
                knots: t.get_ref().iter().map(|r| r[0]).collect(),
                values: t.get_ref().iter().map(|r| r[1]).collect(),
            }
        }
        other => {
            return Err(ConfigError::at(
                src,
                Some(prof.kind.span()),
                format!("unknown profile kind `{other}` (expected linear, exponential or tabulated)"),
            ))
        }
    };
    let profile = make_profile(profile_kind.clone())
        .map_err(|e| ConfigError::at(src, Some(prof_span.clone()), format!("[profile]: {e}")))?;

    let n_elements = raw
        .mesh
        .n_elements
        .as_ref()
        .map(|v| count(src, v, "n_elements", 2))
        .transpose()?
        .unwrap_or(DEFAULT_N_ELEMENTS);
    let quad_points = match raw.mesh.quad_points.as_ref() {
        Some(v) => {
            let q = count(src, v, "quad_points", 1)?;
            gauss_legendre(q).map_err(|e| ConfigError::at(src, Some(v.span()), e.to_string()))?;
            q
        }
        None => DEFAULT_QUAD_POINTS,
    };

    let d = &raw.dispersion;
    let k_max = d.k_max.as_ref().map(|v| positive(src, v, "k_max")).transpose()?;
    let j_max = d.j_max.as_ref().map(|v| count(src, v, "j_max", 1)).transpose()?.unwrap_or(DEFAULT_J_MAX);
    let n_k = d.n_k.as_ref().map(|v| count(src, v, "n_k", 1)).transpose()?.unwrap_or(DEFAULT_N_K);
    let k_list = match d.k.as_ref() {
        Some(v) => {
            if v.get_ref().is_empty() || v.get_ref().iter().any(|k| !(*k > 0.0 && k.is_finite())) {
                return Err(ConfigError::at(src, Some(v.span()), "k values must be positive and nonempty"));
            }
            Some(v.get_ref().clone())
        }
        None => None,
    };

    let t = &raw.tolerances;
    let fixed_point_tol = t
        .fixed_point_tol
        .as_ref()
        .map(|v| positive(src, v, "fixed_point_tol"))
        .transpose()?
        .unwrap_or(DEFAULT_FIXED_POINT_TOL);
    let eig_tol = t.eig_tol.as_ref().map(|v| positive(src, v, "eig_tol")).transpose()?.unwrap_or(DEFAULT_EIG_TOL);

    let m = &raw.mode;
    let wavevector = match (m.k1.as_ref(), m.k2.as_ref()) {
        (None, None) => None,
        (k1, k2) => {
            let (a, b) = (k1.map(|v| *v.get_ref()).unwrap_or(0.0), k2.map(|v| *v.get_ref()).unwrap_or(0.0));
            Some(WaveVector::new(a, b).map_err(|e| {
                ConfigError::at(src, k1.or(k2).map(|v| v.span()), e.to_string())
            })?)
        }
    };
    let j = m.j.as_ref().map(|v| count(src, v, "j", 1)).transpose()?.unwrap_or(1);
    let lambda = match m.lambda.as_ref() {
        Some(v) if *v.get_ref() >= 0.0 && v.get_ref().is_finite() => Some(*v.get_ref()),
        Some(v) => return Err(ConfigError::at(src, Some(v.span()), "lambda must be nonnegative")),
        None => None,
    };

    let e = &raw.evolution;
    let dt = match e.dt.as_ref() {
        None => TimeStep::Auto,
        Some(v) => match v.get_ref() {
            RawDt::Named(s) if s == "auto" => TimeStep::Auto,
            RawDt::Fixed(x) if *x > 0.0 && x.is_finite() => TimeStep::Fixed(*x),
            _ => return Err(ConfigError::at(src, Some(v.span()), "dt must be \"auto\" or a positive number")),
        },
    };
    let t_end = e.t_end.as_ref().map(|v| positive(src, v, "t_end")).transpose()?;
    let initial = match e.initial.as_ref() {
        None => InitialData::Eigen,
        Some(v) => match v.get_ref().as_str() {
            "eigen" => InitialData::Eigen,
            "random" => InitialData::Random,
            other => {
                return Err(ConfigError::at(
                    src,
                    Some(v.span()),
                    format!("unknown initial data `{other}` (expected eigen or random)"),
                ))
            }
        },
    };
    let seed = e.seed.as_ref().map(|v| count(src, v, "seed", 0)).transpose()?.unwrap_or(0) as u64;
    let record_every = e.record_every.as_ref().map(|v| count(src, v, "record_every", 1)).transpose()?.unwrap_or(10);

    let i = &raw.instability;
    let delta = match i.delta.as_ref() {
        Some(v) if *v.get_ref() > 0.0 && *v.get_ref() < 1.0 => *v.get_ref(),
        Some(v) => return Err(ConfigError::at(src, Some(v.span()), "delta must lie in (0, 1)")),
        None => 1e-3,
    };
    let epsilon0 = i.epsilon0.as_ref().map(|v| positive(src, v, "epsilon0")).transpose()?.unwrap_or(0.1);
    let lambda_max = i.lambda_max.as_ref().map(|v| positive(src, v, "Lambda")).transpose()?;
    let coefficients = match i.coefficients.as_ref() {
        Some(v) if v.get_ref().is_empty() || v.get_ref().iter().any(|c| !c.is_finite()) => {
            return Err(ConfigError::at(src, Some(v.span()), "coefficients must be finite and nonempty"))
        }
        Some(v) => Some(v.get_ref().clone()),
        None => None,
    };
    if let (Some(c), Some(m)) = (coefficients.as_ref(), i.modes.as_ref()) {
        if c.len() != m.len() {
            return Err(ConfigError::at(
                src,
                i.coefficients.as_ref().map(|v| v.span()),
                format!("{} coefficients for {} modes", c.len(), m.len()),
            ));
        }
    }
    let constants = match i.constants.as_ref() {
        Some(v) => {
            let c = v.get_ref();
            let k = EpsilonConstants {
                c2: c.c2,
                c3: c.c3,
                c4: c.c4,
                c5: c.c5,
                delta0: c.delta0,
            };
            if [k.c2, k.c3, k.c4, k.c5, k.delta0].iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                return Err(ConfigError::at(src, Some(v.span()), "constants must be positive"));
            }
            Some(k)
        }
        None => None,
    };

    let samples = raw
        .output
        .samples
        .as_ref()
        .map(|v| count(src, v, "samples", 2))
        .transpose()?
        .unwrap_or(DEFAULT_SAMPLES);

    Ok(RunConfig {
        params,
        profile_kind,
        profile,
        n_elements,
        quad_points,
        k_max,
        j_max,
        k_list,
        n_k,
        fixed_point_tol,
        eig_tol,
        wavevector,
        j,
        lambda,
        evolution: EvolutionConfig {
            dt,
            t_end,
            initial,
            seed,
            record_every,
        },
        instability: InstabilityConfig {
            modes: i.modes.as_ref().map(|m| m.iter().map(PathBuf::from).collect()),
            coefficients,
            delta,
            epsilon0,
            lambda_max,
            constants,
        },
        out_dir: raw.output.dir.map(PathBuf::from),
        samples,
        hash: hex::encode(Sha256::digest(src.as_bytes())),
    })
}

impl RunConfig {
    /// Applies overrides; the hash then covers them too.
    pub fn apply(&mut self, o: &Overrides) -> Result<(), ConfigError> {
        let mut extra = String::new();
        if let Some(k) = o.k {
            if !(k > 0.0 && k.is_finite()) {
                return Err(ConfigError::new("--k must be positive"));
            }
            self.wavevector = Some(WaveVector::along_x1(k).map_err(|e| ConfigError::new(format!("--k: {e}")))?);
            extra.push_str(&format!("\nk={k:e}"));
        }
        if let Some(j) = o.j {
            if j == 0 {
                return Err(ConfigError::new("--j must be at least 1"));
            }
            self.j = j;
            extra.push_str(&format!("\nj={j}"));
        }
        if let Some(l) = o.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(ConfigError::new("--lambda must be nonnegative"));
            }
            self.lambda = Some(l);
            extra.push_str(&format!("\nlambda={l:e}"));
        }
        if !extra.is_empty() {
            self.hash = hex::encode(Sha256::digest(format!("{}{extra}", self.hash).as_bytes()));
        }
        Ok(())
    }
}
