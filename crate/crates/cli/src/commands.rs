//! Subcommand implementations. Each returns the text for stdout and writes
//! its artifacts under the output directory.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use nskrt_core::dispersion::{default_k_max, dispersion_curve_with, unstable_set_with};
use nskrt_core::evolution::{measure_growth, sharp_rate_check, trajectory, GrowthEstimate, SharpRateCheck};
use nskrt_core::instability::{build_plan, ModeCombination, ModeProfile};
use nskrt_core::mesh::Constraint;
use nskrt_core::spectrum::{gamma_spectrum_tol, OperatorPair};
use nskrt_core::{
    assemble_evolution, characteristic_length, lambda_upper_bound, reconstruct_mode, sigma_critical,
    sigma_critical_k, solve_lambdas, CharacteristicValue, FixedPointOptions, Mesh, ModeDocument, ModeState,
    UnstableSet, WaveVector,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ConfigError, InitialData, RunConfig};
use crate::output::{csv, json, num, opt_num, provenance, write};

/// What a subcommand produced.
#[derive(Debug, Default)]
pub struct Report {
    pub stdout: String,
    pub warnings: Vec<String>,
    pub files: Vec<PathBuf>,
    /// False when a `check` property failed.
    pub ok: bool,
}

impl Report {
    fn new() -> Self {
        Self {
            ok: true,
            ..Self::default()
        }
    }
}

pub fn mesh(cfg: &RunConfig) -> Result<Mesh> {
    Mesh::new(cfg.n_elements, cfg.quad_points, Constraint::Clamped).context("mesh::new")
}

pub fn options(cfg: &RunConfig) -> FixedPointOptions {
    FixedPointOptions {
        tol: cfg.fixed_point_tol,
    }
}

fn k_max(cfg: &RunConfig) -> Result<f64> {
    match cfg.k_max {
        Some(k) => Ok(k),
        None => default_k_max(&cfg.profile, &cfg.params).map_err(|e| {
            anyhow!(ConfigError::new(format!("[dispersion] k_max is required here: {e}")))
        }),
    }
}

/// Explicit k list, else `n_k` uniform points on `(0, k_max]`.
pub fn k_grid(cfg: &RunConfig) -> Result<Vec<f64>> {
    if let Some(ks) = &cfg.k_list {
        return Ok(ks.clone());
    }
    let km = k_max(cfg)?;
    Ok((1..=cfg.n_k).map(|i| km * i as f64 / cfg.n_k as f64).collect())
}

fn the_set(cfg: &RunConfig, mesh: &Mesh) -> Result<UnstableSet> {
    unstable_set_with(mesh, &cfg.profile, &cfg.params, Some(k_max(cfg)?), options(cfg))
        .context("dispersion::unstable_set")
}

/// Configured wavevector, else the Λ-achieving lattice wavevector.
fn target(cfg: &RunConfig, mesh: &Mesh) -> Result<(WaveVector, Option<UnstableSet>)> {
    let set = if cfg.params.sigma > 0.0 || cfg.k_max.is_some() {
        Some(the_set(cfg, mesh)?)
    } else {
        None
    };
    if let Some(w) = cfg.wavevector {
        return Ok((w, set));
    }
    let s = set.as_ref().ok_or_else(|| {
        anyhow!(ConfigError::new("no wavevector given: set [mode] k1/k2 or pass --k"))
    })?;
    let i = s
        .argmax
        .ok_or_else(|| anyhow!("dispersion::unstable_set: stable at this sigma; give a wavevector with --k"))?;
    Ok((s.members[i].wavevector, set))
}

pub fn sigma_critical_cmd(cfg: &RunConfig, out: &Path) -> Result<Report> {
    let mesh = mesh(cfg)?;
    let sc = sigma_critical(&mesh, &cfg.profile, cfg.params.g).context("spectrum::sigma_critical")?;
    let ks = k_grid(cfg)?;
    let mut rows = Vec::with_capacity(ks.len());
    let mut rep = Report::new();
    writeln!(rep.stdout, "sigma_c = {}", num(sc.value))?;
    writeln!(rep.stdout, "k,sigma_c_k")?;
    for &k in &ks {
        let v = sigma_critical_k(&mesh, &cfg.profile, cfg.params.g, k)
            .with_context(|| format!("spectrum::sigma_critical_k at k = {k}"))?
            .value;
        writeln!(rep.stdout, "{},{}", num(k), num(v))?;
        rows.push(vec![num(k), num(v)]);
    }
    let text = csv(&cfg.hash, &["k".into(), "sigma_c_k".into()], &rows);
    rep.files.push(write(out, "sigma_critical.csv", &text)?);
    Ok(rep)
}

pub fn gamma_spectrum_cmd(cfg: &RunConfig, out: &Path) -> Result<Report> {
    let mesh = mesh(cfg)?;
    let w = cfg
        .wavevector
        .ok_or_else(|| anyhow!(ConfigError::new("gamma-spectrum needs a wavevector: [mode] k1/k2 or --k")))?;
    let lambda = cfg
        .lambda
        .ok_or_else(|| anyhow!(ConfigError::new("gamma-spectrum needs lambda: [mode] lambda or --lambda")))?;
    let pair = OperatorPair::new(&mesh, &cfg.profile, &cfg.params, w.magnitude(), lambda)
        .context("spectrum::assemble_p")?;
    let spec = gamma_spectrum_tol(&pair, cfg.j_max, cfg.eig_tol).context("spectrum::gamma_spectrum")?;
    let mut rep = Report::new();
    writeln!(
        rep.stdout,
        "k = {}, lambda = {}, sigma = {}: {} positive",
        num(w.magnitude()),
        num(lambda),
        num(cfg.params.sigma),
        spec.n_positive
    )?;
    let rows: Vec<Vec<String>> = spec
        .gammas
        .iter()
        .enumerate()
        .map(|(i, g)| vec![(i + 1).to_string(), num(*g)])
        .collect();
    for r in &rows {
        writeln!(rep.stdout, "gamma_{} = {}", r[0], r[1])?;
    }
    if !spec.ties.is_empty() {
        rep.warnings.push(format!("near-degenerate gamma pairs at indices {:?}", spec.ties));
    }
    rep.files.push(write(out, "gamma_spectrum.csv", &csv(&cfg.hash, &["j".into(), "gamma".into()], &rows))?);
    Ok(rep)
}

#[derive(Serialize)]
struct DispersionSummary<'a> {
    sigma: f64,
    sigma_c: f64,
    stable: bool,
    lambda_bound: f64,
    #[serde(rename = "L0")]
    l0: f64,
    unstable_set: &'a UnstableSet,
}

pub fn dispersion_cmd(cfg: &RunConfig, out: &Path) -> Result<Report> {
    let mesh = mesh(cfg)?;
    let ks = k_grid(cfg)?;
    let rows = dispersion_curve_with(&mesh, &cfg.profile, &cfg.params, &ks, cfg.j_max, options(cfg))
        .context("dispersion::dispersion_curve")?;
    let mut header = vec!["k".to_string(), "sigma_c_k".to_string()];
    header.extend((1..=cfg.j_max).map(|j| format!("lambda_{j}")));
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![num(r.k), num(r.sigma_c_k)];
            v.extend(r.lambdas.iter().map(|l| opt_num(*l)));
            v
        })
        .collect();
    let mut rep = Report::new();
    rep.files.push(write(out, "dispersion.csv", &csv(&cfg.hash, &header, &table))?);

    let sc = sigma_critical(&mesh, &cfg.profile, cfg.params.g).context("spectrum::sigma_critical")?;
    let set = the_set(cfg, &mesh)?;
    let summary = DispersionSummary {
        sigma: cfg.params.sigma,
        sigma_c: sc.value,
        stable: set.is_stable(),
        lambda_bound: lambda_upper_bound(&cfg.profile, &cfg.params),
        l0: characteristic_length(&cfg.profile).l0,
        unstable_set: &set,
    };
    rep.files.push(write(out, "unstable_set.json", &json(&cfg.hash, &summary)?)?);
    writeln!(rep.stdout, "sigma = {}, sigma_c = {}", num(cfg.params.sigma), num(sc.value))?;
    if set.is_stable() {
        writeln!(rep.stdout, "S is empty: stable at this σ")?;
    } else {
        writeln!(rep.stdout, "|S| = {} (k <= {})", set.members.len(), num(set.k_max))?;
        if let (Some(l), Some(i)) = (set.lambda_max, set.argmax) {
            let m = &set.members[i];
            writeln!(rep.stdout, "Lambda = {} at n = ({}, {}), k = {}", num(l), m.lattice.0, m.lattice.1, num(m.k))?;
        }
        writeln!(rep.stdout, "|S_Lambda| = {}", set.s_lambda.len())?;
        if set.truncated {
            rep.warnings.push("unstable set truncated at k_max".into());
        }
        let missing = set.members.iter().filter(|m| m.lambda_1.is_none()).count();
        if missing > 0 {
            rep.warnings.push(format!("{missing} members of S have no resolved lambda_1 on this mesh"));
        }
    }
    Ok(rep)
}

fn solve_at(cfg: &RunConfig, mesh: &Mesh, w: WaveVector, count: usize) -> Result<Vec<CharacteristicValue>> {
    solve_lambdas(mesh, &cfg.profile, &cfg.params, w.magnitude(), count, options(cfg))
        .with_context(|| format!("dispersion::solve_lambdas at k = {}", w.magnitude()))
}

pub fn modes_cmd(cfg: &RunConfig, out: &Path) -> Result<Report> {
    let mesh = mesh(cfg)?;
    let (w, set) = target(cfg, &mesh)?;
    let lambda_max = set.as_ref().and_then(|s| s.lambda_max);
    let cvs = solve_at(cfg, &mesh, w, cfg.j)?;
    let mut rep = Report::new();
    if cvs.len() < cfg.j {
        rep.warnings.push(format!(
            "requested {} modes at k = {}, found {}",
            cfg.j,
            num(w.magnitude()),
            cvs.len()
        ));
    }
    writeln!(rep.stdout, "k = ({}, {}), |k| = {}", num(w.k1), num(w.k2), num(w.magnitude()))?;
    for cv in &cvs {
        let mode = reconstruct_mode(cv, w, &mesh, &cfg.profile, &cfg.params).context("modes::reconstruct_mode")?;
        let mut doc = mode.export(cfg.samples).context("modes::export_mode")?;
        doc.metadata.lambda_max = lambda_max;
        doc.metadata.provenance = Some(provenance(&cfg.hash));
        let r = &doc.metadata.residuals;
        writeln!(
            rep.stdout,
            "j = {}: lambda = {}, divergence = {:.3e}, vertical = {:.3e}, boundary = {:.3e}",
            cv.j, num(cv.lambda), r.divergence, r.vertical, r.boundary
        )?;
        let mut text = doc.to_json();
        text.push('\n');
        rep.files.push(write(out, &format!("mode_j{}.json", cv.j), &text)?);
    }
    Ok(rep)
}

#[derive(Serialize)]
struct EvolutionSummary {
    k1: f64,
    k2: f64,
    dt: f64,
    t_end: f64,
    initial: &'static str,
    lambda_j: Option<f64>,
    #[serde(rename = "Lambda")]
    lambda_max: Option<f64>,
    growth: Option<GrowthEstimate>,
    sharp_rate: Option<SharpRateCheck>,
    energy_drift: f64,
}

/// Coefficients `aₘ` of `Σ aₘ(1 − cos 2πmx)`, a smooth clamped-compatible field.
fn random_field(seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn evolve_cmd(cfg: &RunConfig, out: &Path) -> Result<Report> {
    let mesh = mesh(cfg)?;
    let (w, set) = target(cfg, &mesh)?;
    let k = w.magnitude();
    let cvs = solve_at(cfg, &mesh, w, cfg.j)?;
    let root = cvs.get(cfg.j - 1);
    let ops = assemble_evolution(&mesh, &cfg.profile, &cfg.params, k).context("evolution::assemble_evolution")?;
    let (init, label) = match cfg.evolution.initial {
        InitialData::Eigen => {
            let cv = root.ok_or_else(|| {
                anyhow!(
                    "evolution: no characteristic value lambda_{} at k = {}; use initial = \"random\"",
                    cfg.j,
                    num(k)
                )
            })?;
            (ModeState::eigen(&cv.phi, cv.lambda), "eigen")
        }
        InitialData::Random => {
            let a = random_field(cfg.evolution.seed);
            let f = |x: f64| a.iter().enumerate().map(|(m, c)| c * (1.0 - (2.0 * PI * (m + 1) as f64 * x).cos())).sum();
            let fp = |x: f64| {
                a.iter()
                    .enumerate()
                    .map(|(m, c)| {
                        let w = 2.0 * PI * (m + 1) as f64;
                        c * w * (w * x).sin()
                    })
                    .sum()
            };
            let phi = mesh.project(f, fp).context("mesh::project")?;
            (
                ModeState {
                    chi: vec![0.0; phi.len()],
                    phi,
                    t: 0.0,
                },
                "random",
            )
        }
    };
    let lambda_j = root.map(|c| c.lambda);
    let dt = cfg.evolution.dt.resolve(lambda_j);
    let t_end = cfg.evolution.t_end.unwrap_or(match lambda_j {
        Some(l) => 3.0 / l,
        None => 10.0,
    });
    let traj = trajectory(&ops, &init, dt, t_end, cfg.evolution.record_every).context("evolution::trajectory")?;
    let rows: Vec<Vec<String>> = traj
        .samples
        .iter()
        .map(|s| vec![num(s.t), num(s.norm_phi), num(s.norm_chi)])
        .collect();
    let mut rep = Report::new();
    rep.files.push(write(
        out,
        "trajectory.csv",
        &csv(&cfg.hash, &["t".into(), "norm_phi".into(), "norm_chi".into()], &rows),
    )?);
    let growth = match measure_growth(&traj.samples) {
        Ok(g) => Some(g),
        Err(e) => {
            rep.warnings.push(format!("evolution::measure_growth: {e}"));
            None
        }
    };
    let lambda_max = set.as_ref().and_then(|s| s.lambda_max);
    let sharp = lambda_max.map(|l| sharp_rate_check(&traj.samples, l));
    let summary = EvolutionSummary {
        k1: w.k1,
        k2: w.k2,
        dt,
        t_end,
        initial: label,
        lambda_j,
        lambda_max,
        growth,
        sharp_rate: sharp,
        energy_drift: traj.energy_drift,
    };
    rep.files.push(write(out, "growth.json", &json(&cfg.hash, &summary)?)?);
    writeln!(rep.stdout, "k = {}, dt = {}, t_end = {}, {} samples", num(k), num(dt), num(t_end), rows.len())?;
    if let Some(l) = lambda_j {
        writeln!(rep.stdout, "lambda_{} = {}", cfg.j, num(l))?;
    }
    if let Some(g) = growth {
        writeln!(rep.stdout, "measured growth = {} (r^2 = {:.6})", num(g.lambda_est), g.r_squared)?;
    }
    if let Some(s) = sharp {
        writeln!(rep.stdout, "max ||phi(t)|| / (e^(Lambda t) ||phi(0)||) = {}", num(s.max_ratio))?;
    }
    Ok(rep)
}

fn load_mode(path: &Path) -> Result<ModeDocument> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("instability: reading {}", path.display()))?;
    ModeDocument::from_json(&text).with_context(|| format!("instability: parsing {}", path.display()))
}

pub fn instability_plan_cmd(cfg: &RunConfig, out: &Path) -> Result<Report> {
    let ic = &cfg.instability;
    let coefficients = ic.coefficients.clone().unwrap_or_else(|| vec![1.0]);
    let paths: Vec<PathBuf> = match &ic.modes {
        Some(p) => p.clone(),
        None => (1..=coefficients.len()).map(|j| out.join(format!("mode_j{j}.json"))).collect(),
    };
    if paths.len() != coefficients.len() {
        bail!(ConfigError::new(format!("{} coefficients for {} modes", coefficients.len(), paths.len())));
    }
    let docs = paths.iter().map(|p| load_mode(p)).collect::<Result<Vec<_>>>()?;
    for (d, p) in docs.iter().zip(&paths) {
        let m = &d.metadata;
        let same = m.g == cfg.params.g && m.mu == cfg.params.mu && m.sigma == cfg.params.sigma && m.length == cfg.params.length;
        if !same {
            bail!("instability: {} was computed with different g, mu, sigma or L than this config", p.display());
        }
    }
    let profiles = docs.iter().map(ModeProfile::from_document).collect::<nskrt_core::Result<Vec<_>>>()?;
    let lambda_max = match ic.lambda_max.or_else(|| docs.iter().find_map(|d| d.metadata.lambda_max)) {
        Some(l) => l,
        None => {
            let mesh = mesh(cfg)?;
            the_set(cfg, &mesh)?
                .lambda_max
                .ok_or_else(|| anyhow!("instability: stable at this sigma, Lambda undefined"))?
        }
    };
    let comb = ModeCombination::new(profiles, coefficients, lambda_max).context("instability::ModeCombination")?;
    let plan = build_plan(&comb, ic.delta, ic.epsilon0, &cfg.params, &cfg.profile, ic.constants.as_ref())
        .context("instability::build_plan")?;
    let mut rep = Report::new();
    let a = &plan.admissibility;
    writeln!(rep.stdout, "Lambda = {}, M = {}, j_m = {:?}", num(plan.lambda_max), a.m, a.j_m)?;
    writeln!(
        rep.stdout,
        "admissible = {} (first = {}, second: {} > {})",
        a.admissible,
        a.first_condition,
        num(a.lead),
        num(a.tail)
    )?;
    writeln!(rep.stdout, "T_delta = {}", num(plan.t_delta))?;
    writeln!(
        rep.stdout,
        "C1 = {}, C2 = {}, C5 = {} (empirical {})",
        num(plan.c1),
        num(plan.c2),
        num(plan.c5),
        num(plan.lower_bound.empirical_constant)
    )?;
    if !a.admissible {
        rep.warnings.push("coefficients violate the admissibility conditions".into());
    }
    if let Some(false) = plan.epsilon_within_threshold {
        rep.warnings.push("epsilon0 exceeds the threshold implied by the supplied constants".into());
    }
    rep.files.push(write(out, "plan.json", &json(&cfg.hash, &plan)?)?);
    Ok(rep)
}
