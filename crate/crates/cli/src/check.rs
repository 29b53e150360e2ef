//! `check`: the invariant suite on the configured profile and parameters.

use std::fmt;

use anyhow::{Context, Result};
use nskrt_core::dispersion::{dispersion_curve_with, unstable_set_with};
use nskrt_core::evolution::{measure_growth_window, sharp_rate_check, trajectory};
use nskrt_core::instability::{max_lambda_inequality, mode_l2_norms, ModeCombination, ModeProfile};
use nskrt_core::mesh::Constraint;
use nskrt_core::spectrum::OperatorBlocks;
use nskrt_core::{
    assemble_evolution, lambda_upper_bound, reconstruct_mode, sigma_critical, sigma_critical_k, solve_lambdas,
    CharacteristicValue, Mesh, ModeState, PhysicalParams, WaveVector,
};

use crate::commands::{k_grid, mesh, options, Report};
use crate::config::RunConfig;
use crate::output::{TOOL, VERSION};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        })
    }
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
}

fn outcome(name: &'static str, ok: bool, detail: String) -> Outcome {
    Outcome {
        name,
        status: if ok { Status::Pass } else { Status::Fail },
        detail,
    }
}

fn skip(name: &'static str, why: &str) -> Outcome {
    Outcome {
        name,
        status: Status::Skip,
        detail: why.into(),
    }
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    mesh: Mesh,
    wave: WaveVector,
    roots: Vec<CharacteristicValue>,
    bound: f64,
    lambda_max: Option<f64>,
}

pub fn check_cmd(cfg: &RunConfig) -> Result<Report> {
    let results = run_suite(cfg)?;
    let mut rep = Report {
        ok: true,
        ..Report::default()
    };
    rep.stdout.push_str(&format!("# {TOOL} {VERSION} config_hash={}\n", cfg.hash));
    for o in &results {
        rep.stdout.push_str(&format!("{} {}: {}\n", o.status, o.name, o.detail));
        if o.status == Status::Fail {
            rep.ok = false;
        }
    }
    let failed = results.iter().filter(|o| o.status == Status::Fail).count();
    rep.stdout.push_str(&format!("{} properties, {failed} failed\n", results.len()));
    Ok(rep)
}

pub fn run_suite(cfg: &RunConfig) -> Result<Vec<Outcome>> {
    let mesh = mesh(cfg)?;
    let set = if cfg.params.sigma > 0.0 || cfg.k_max.is_some() {
        Some(
            unstable_set_with(&mesh, &cfg.profile, &cfg.params, cfg.k_max, options(cfg))
                .context("dispersion::unstable_set")?,
        )
    } else {
        None
    };
    let wave = match (cfg.wavevector, set.as_ref().and_then(|s| s.argmax)) {
        (Some(w), _) => w,
        (None, Some(i)) => set.as_ref().unwrap().members[i].wavevector,
        (None, None) => WaveVector::along_x1(std::f64::consts::PI)?,
    };
    let roots = solve_lambdas(&mesh, &cfg.profile, &cfg.params, wave.magnitude(), cfg.j_max, options(cfg))
        .context("dispersion::solve_lambdas")?;
    let lambda_max = set
        .as_ref()
        .and_then(|s| s.lambda_max)
        .into_iter()
        .chain(roots.first().map(|c| c.lambda))
        .reduce(f64::max);
    let ctx = Ctx {
        cfg,
        mesh,
        wave,
        roots,
        bound: lambda_upper_bound(&cfg.profile, &cfg.params),
        lambda_max,
    };
    Ok(vec![
        sigma_critical_props(&ctx)?,
        gamma_monotone(&ctx)?,
        fixed_point(&ctx)?,
        growth_bound(&ctx)?,
        variational(&ctx)?,
        mode_residuals(&ctx)?,
        evolution_growth(&ctx)?,
        evolution_sharp_rate(&ctx)?,
        evolution_stable(&ctx)?,
        instability(&ctx)?,
        max_lambda(&ctx)?,
        convergence(&ctx)?,
    ])
}

fn sigma_critical_props(c: &Ctx) -> Result<Outcome> {
    let g = c.cfg.params.g;
    let sc = sigma_critical(&c.mesh, &c.cfg.profile, g)?.value;
    let ks = [0.01, 1.0, std::f64::consts::PI, 5.0];
    let vals = ks
        .iter()
        .map(|&k| Ok(sigma_critical_k(&c.mesh, &c.cfg.profile, g, k)?.value))
        .collect::<Result<Vec<f64>>>()?;
    let decreasing = vals.windows(2).all(|w| w[1] < w[0]);
    let below = vals.iter().all(|v| *v <= sc * (1.0 + 1e-12));
    let limit = (vals[0] - sc).abs() <= 1e-3 * sc;
    Ok(outcome(
        "sigma_critical",
        sc > 0.0 && decreasing && below && limit,
        format!("sigma_c = {sc:.10e}, sigma_c(0.01) = {:.10e}, decreasing = {decreasing}", vals[0]),
    ))
}

fn blocks(c: &Ctx) -> Result<OperatorBlocks> {
    Ok(OperatorBlocks::assemble(&c.mesh, &c.cfg.profile, &c.cfg.params, c.wave.magnitude())?)
}

fn gamma_monotone(c: &Ctx) -> Result<Outcome> {
    let b = blocks(c)?;
    match c.roots.first() {
        Some(cv) => {
            let g = [0.2, 0.4, 0.6, 0.8, 1.0]
                .iter()
                .map(|f| Ok(b.gamma_j(f * cv.lambda, 1)?))
                .collect::<Result<Vec<f64>>>()?;
            let ok = g.windows(2).all(|w| w[1] < w[0]);
            let shown: Vec<String> = g.iter().map(|v| format!("{v:.6e}")).collect();
            Ok(outcome("gamma_decreasing", ok, format!("gamma_1 on (0, lambda_1]: {}", shown.join(" > "))))
        }
        None => {
            let g0 = b.gamma_j(0.0, 1)?;
            Ok(outcome(
                "gamma_decreasing",
                g0 <= 0.0,
                format!("no root at |k| = {:.6e}; gamma_1(0) = {g0:.6e} must be <= 0", c.wave.magnitude()),
            ))
        }
    }
}

fn fixed_point(c: &Ctx) -> Result<Outcome> {
    if c.roots.is_empty() {
        return Ok(skip("fixed_point", "no characteristic value at this wavevector"));
    }
    let b = blocks(c)?;
    let mut worst = 0.0f64;
    for cv in &c.roots {
        worst = worst.max((b.gamma_j(cv.lambda, cv.j)? - cv.lambda).abs());
    }
    let in_range = c.roots.iter().all(|cv| cv.lambda > 0.0 && cv.lambda <= c.bound + 1e-12);
    let ordered = c.roots.windows(2).all(|w| w[0].lambda > w[1].lambda);
    Ok(outcome(
        "fixed_point",
        worst <= 1e-9 && in_range && ordered,
        format!("{} roots, max |gamma_j(lambda_j) - lambda_j| = {worst:.3e}", c.roots.len()),
    ))
}

fn growth_bound(c: &Ctx) -> Result<Outcome> {
    let ks = k_grid(c.cfg).unwrap_or_else(|_| vec![0.5, 1.0, 2.0, 4.0, 8.0]);
    let rows = dispersion_curve_with(&c.mesh, &c.cfg.profile, &c.cfg.params, &ks, c.cfg.j_max, options(c.cfg))?;
    let mut top = 0.0f64;
    let mut ordered = true;
    for r in &rows {
        let ls: Vec<f64> = r.lambdas.iter().flatten().copied().collect();
        ordered &= ls.windows(2).all(|w| w[0] > w[1]);
        top = ls.iter().copied().fold(top, f64::max);
    }
    Ok(outcome(
        "growth_bound",
        top <= c.bound + 1e-12 && ordered,
        format!("max lambda over {} wavenumbers = {top:.10e} <= sqrt(g/L0) = {:.10e}", ks.len(), c.bound),
    ))
}

fn variational(c: &Ctx) -> Result<Outcome> {
    if c.roots.is_empty() {
        return Ok(skip("variational_identity", "no characteristic value at this wavevector"));
    }
    let b = blocks(c)?;
    let worst = c
        .roots
        .iter()
        .map(|cv| {
            let (l, r) = b.variational_balance(cv.lambda, &cv.phi);
            (l - r).abs() / l.abs().max(r.abs())
        })
        .fold(0.0, f64::max);
    Ok(outcome("variational_identity", worst <= 1e-8, format!("max relative imbalance {worst:.3e}")))
}

fn mode_residuals(c: &Ctx) -> Result<Outcome> {
    if c.roots.is_empty() {
        return Ok(skip("mode_residuals", "no characteristic value at this wavevector"));
    }
    let (mut div, mut hor, mut ver, mut bnd) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for cv in &c.roots {
        let m = reconstruct_mode(cv, c.wave, &c.mesh, &c.cfg.profile, &c.cfg.params)?;
        let r = &m.residuals;
        div = div.max(r.divergence);
        hor = hor.max(r.horizontal[0]).max(r.horizontal[1]);
        ver = ver.max(r.vertical);
        bnd = bnd.max(r.boundary);
    }
    Ok(outcome(
        "mode_residuals",
        div <= 1e-10 && hor <= 1e-7 && ver <= 1e-7 && bnd <= 1e-12,
        format!("divergence {div:.2e}, horizontal {hor:.2e}, vertical {ver:.2e}, boundary {bnd:.2e}"),
    ))
}

fn evolution_growth(c: &Ctx) -> Result<Outcome> {
    let Some(cv) = c.roots.first() else {
        return Ok(skip("evolution_growth", "no characteristic value at this wavevector"));
    };
    let ops = assemble_evolution(&c.mesh, &c.cfg.profile, &c.cfg.params, c.wave.magnitude())?;
    let l = cv.lambda;
    let traj = trajectory(&ops, &ModeState::eigen(&cv.phi, l), 1e-3 / l, 3.0 / l, 10)?;
    let g = measure_growth_window(&traj.samples, 1.0 / l, 3.0 / l)?;
    let rel = (g.lambda_est / l - 1.0).abs();
    Ok(outcome(
        "evolution_growth",
        rel <= 1e-3,
        format!("measured {:.10e} vs lambda_1 {l:.10e} (relative {rel:.2e})", g.lambda_est),
    ))
}

fn random_init(mesh: &Mesh) -> Result<ModeState> {
    use std::f64::consts::PI;
    let a = [0.8, -0.35, 0.5, 0.2, -0.6, 0.1];
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
    let phi = mesh.project(f, fp)?;
    Ok(ModeState {
        chi: vec![0.0; phi.len()],
        phi,
        t: 0.0,
    })
}

fn evolution_sharp_rate(c: &Ctx) -> Result<Outcome> {
    let Some(lmax) = c.lambda_max else {
        return Ok(skip("evolution_sharp_rate", "Lambda undefined (stable)"));
    };
    let ops = assemble_evolution(&c.mesh, &c.cfg.profile, &c.cfg.params, c.wave.magnitude())?;
    let traj = trajectory(&ops, &random_init(&c.mesh)?, 1e-2 / lmax.max(1.0), 5.0 / lmax, 10)?;
    let chk = sharp_rate_check(&traj.samples, lmax);
    Ok(outcome(
        "evolution_sharp_rate",
        chk.holds,
        format!("max ||phi(t)|| / (e^(Lambda t) ||phi(0)||) = {:.4e} <= 10", chk.max_ratio),
    ))
}

fn evolution_stable(c: &Ctx) -> Result<Outcome> {
    let k = c.wave.magnitude();
    let dirichlet = c.mesh.with_constraint(Constraint::Dirichlet);
    let sck = sigma_critical_k(&dirichlet, &c.cfg.profile, c.cfg.params.g, k)?.value;
    let p = &c.cfg.params;
    let stable = PhysicalParams::new(p.g, p.mu, 1.5 * sck, p.length)?;
    let ops = assemble_evolution(&c.mesh, &c.cfg.profile, &stable, k)?;
    let traj = trajectory(&ops, &random_init(&c.mesh)?, 1e-2, 10.0, 10)?;
    let n0 = traj.samples[0].norm_phi;
    let peak = traj.samples.iter().map(|s| s.norm_phi).fold(0.0, f64::max);
    Ok(outcome(
        "evolution_stable",
        peak <= 2.0 * n0,
        format!("sigma = 1.5 sigma_c(k): max ||phi|| / ||phi(0)|| = {:.4} on [0, 10]", peak / n0),
    ))
}

fn instability(c: &Ctx) -> Result<Outcome> {
    let (Some(lmax), Some(first)) = (c.lambda_max, c.roots.first()) else {
        return Ok(skip("instability_bookkeeping", "needs a characteristic value"));
    };
    let modes = c
        .roots
        .iter()
        .map(|cv| Ok(ModeProfile::from_mode(&reconstruct_mode(cv, c.wave, &c.mesh, &c.cfg.profile, &c.cfg.params)?)))
        .collect::<Result<Vec<_>>>()?;
    let single = ModeCombination::new(modes[..1].to_vec(), vec![1.0], lmax)?;
    let (delta, eps) = (1e-6, 0.1);
    let t = single.escape_time(delta, eps)?;
    let closed = (eps / delta).ln() / first.lambda;
    let escape_ok = (t / closed - 1.0).abs() <= 1e-10;
    let mut ok = escape_ok && single.check_admissible().admissible;
    let mut detail = format!("escape time relative error {:.2e}", (t / closed - 1.0).abs());
    if modes.len() >= 2 {
        let two = modes[..2].to_vec();
        let zero = ModeCombination::new(two.clone(), vec![0.0, 0.0], lmax)?;
        let norms = mode_l2_norms(&two)?;
        let c2 = norms[0].velocity / norms[1].velocity;
        let bad = ModeCombination::new(two.clone(), vec![1.0, c2], lmax)?;
        let good = ModeCombination::new(two, vec![1.0, 0.3 * c2], lmax)?;
        let classified = !zero.check_admissible().admissible
            && !bad.check_admissible().admissible
            && good.check_admissible().admissible;
        let td = good.escape_time(1e-4, 0.1)?;
        let grid: Vec<f64> = (0..=200).map(|i| td * i as f64 / 200.0).collect();
        let lb = good.lower_bound_check(&grid)?;
        ok &= classified && lb.holds;
        detail.push_str(&format!(
            ", admissibility classified = {classified}, lower bound holds = {} (C5 = {:.3e}, empirical {:.3e})",
            lb.holds, lb.c5, lb.empirical_constant
        ));
    } else {
        detail.push_str(", one root only: two-mode checks skipped");
    }
    Ok(outcome("instability_bookkeeping", ok, detail))
}

fn max_lambda(c: &Ctx) -> Result<Outcome> {
    let Some(lmax) = c.lambda_max else {
        return Ok(skip("max_lambda_inequality", "Lambda undefined (stable)"));
    };
    if c.roots.is_empty() {
        return Ok(skip("max_lambda_inequality", "no characteristic value at this wavevector"));
    }
    let mut worst = f64::INFINITY;
    let mut ok = true;
    for cv in &c.roots {
        let m = reconstruct_mode(cv, c.wave, &c.mesh, &c.cfg.profile, &c.cfg.params)?;
        let chk = max_lambda_inequality(&ModeProfile::from_mode(&m), lmax, &c.cfg.params, &c.cfg.profile);
        ok &= chk.holds;
        worst = worst.min(chk.slack / chk.rhs);
    }
    Ok(outcome("max_lambda_inequality", ok, format!("min slack / rhs = {worst:.3e}")))
}

fn convergence(c: &Ctx) -> Result<Outcome> {
    let k = c.wave.magnitude();
    let lam = |n: usize| -> Result<Option<f64>> {
        let m = Mesh::new(n, c.cfg.quad_points, Constraint::Clamped)?;
        Ok(solve_lambdas(&m, &c.cfg.profile, &c.cfg.params, k, 1, options(c.cfg))?
            .first()
            .map(|cv| cv.lambda))
    };
    let (Some(a), Some(b), Some(d)) = (lam(16)?, lam(32)?, lam(64)?) else {
        return Ok(skip("convergence_order", "no characteristic value on the coarse meshes"));
    };
    let (e1, e2) = ((a - b).abs(), (b - d).abs());
    // Differences at rounding level carry no rate information.
    let ok = e2 <= 1e-13 * d.abs() || e1 / e2 >= 6.0;
    Ok(outcome(
        "convergence_order",
        ok,
        format!("lambda_1 differences {e1:.3e}, {e2:.3e}, ratio {:.2}", e1 / e2),
    ))
}
