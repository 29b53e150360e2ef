//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.

use std::f64::consts::PI;
use std::time::Instant;

use nskrt_core::dispersion::{default_k_max, dispersion_curve, FixedPointOptions};
use nskrt_core::evolution::{measure_growth_window, sharp_rate_check, trajectory};
use nskrt_core::instability::{max_lambda_inequality, mode_l2_norms, ModeCombination, ModeProfile};
use nskrt_core::mesh::{Constraint, Mesh};
use nskrt_core::{
    assemble_evolution, build_mesh, lambda_upper_bound, reconstruct_mode, sigma_critical, sigma_critical_k,
    solve_lambdas, unstable_set, CharacteristicValue, DensityProfile, ModeState, OperatorBlocks, PhysicalParams,
    WaveVector,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Res<T> = std::result::Result<T, Box<dyn std::error::Error>>;
type Criterion = fn() -> Res<(bool, String)>;

fn linear() -> DensityProfile {
    DensityProfile::linear(1.0, 1.0).unwrap()
}

fn base_params() -> PhysicalParams {
    PhysicalParams::new(1.0, 0.1, 0.02, 1.0).unwrap()
}

fn roots(mesh: &Mesh, p: &DensityProfile, pp: &PhysicalParams, k: f64, j: usize) -> Res<Vec<CharacteristicValue>> {
    Ok(solve_lambdas(mesh, p, pp, k, j, FixedPointOptions::default())?)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn closed_form_sigma_c() -> Res<(bool, String)> {
    let t = Instant::now();
    let sc = sigma_critical(&build_mesh(256)?, &linear(), 1.0)?.value;
    let err = (sc - 1.0 / (PI * PI)).abs();
    let secs = t.elapsed().as_secs_f64();
    Ok((err <= 1e-6 && secs < 5.0, format!("sigma_c = {sc:.12e}, |error| = {err:.2e}, {secs:.3} s")))
}

fn closed_form_sigma_c_k() -> Res<(bool, String)> {
    let mesh = build_mesh(256)?;
    let p = linear();
    let sc = sigma_critical(&mesh, &p, 1.0)?.value;
    let mut worst = 0.0f64;
    for k in [1.0, PI, 5.0] {
        let v = sigma_critical_k(&mesh, &p, 1.0, k)?.value;
        worst = worst.max((v - 1.0 / (k * k + PI * PI)).abs());
    }
    let ks = [0.01, 0.5, 1.0, 2.0, PI, 5.0, 8.0];
    let vals = ks.iter().map(|&k| Ok(sigma_critical_k(&mesh, &p, 1.0, k)?.value)).collect::<Res<Vec<f64>>>()?;
    let decreasing = vals.windows(2).all(|w| w[1] < w[0]);
    let limit = (vals[0] - sc).abs();
    Ok((
        worst <= 1e-6 && decreasing && limit <= 1e-3,
        format!("max |error| = {worst:.2e}, decreasing = {decreasing}, |sigma_c(0.01) - sigma_c| = {limit:.2e}"),
    ))
}

fn fixed_point_consistency() -> Res<(bool, String)> {
    let t = Instant::now();
    let (p, pp) = (linear(), base_params());
    let mut lambdas = Vec::new();
    let mut worst = 0.0f64;
    for n in [64, 128] {
        let mesh = build_mesh(n)?;
        let cv = roots(&mesh, &p, &pp, PI, 1)?.into_iter().next().ok_or("no root at k = pi")?;
        let blocks = OperatorBlocks::assemble(&mesh, &p, &pp, PI)?;
        worst = worst.max((blocks.gamma_j(cv.lambda, 1)? - cv.lambda).abs());
        lambdas.push(cv.lambda);
    }
    let agree = rel(lambdas[0], lambdas[1]);
    let in_range = lambdas.iter().all(|&l| l > 0.0 && l <= 1.0);
    let secs = t.elapsed().as_secs_f64();
    Ok((
        worst <= 1e-9 && in_range && agree <= 1e-6 && secs < 10.0,
        format!(
            "lambda_1 = {:.12e}, residual {worst:.2e}, n=64 vs 128 relative {agree:.2e}, {secs:.3} s",
            lambdas[1]
        ),
    ))
}

fn monotonicity() -> Res<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mesh = build_mesh(48)?;
    let mut failures = 0;
    let mut roots_seen = 0;
    for _ in 0..20 {
        let a = rng.gen_range(0.5..2.0);
        let b = rng.gen_range(0.2..1.5);
        let p = if rng.gen_bool(0.5) {
            DensityProfile::linear(a, b)?
        } else {
            DensityProfile::exponential(a, b)?
        };
        let k = rng.gen_range(0.5..6.0);
        let mu = rng.gen_range(0.01..0.2);
        let sck = sigma_critical_k(&mesh, &p, 1.0, k)?.value;
        let sigma = rng.gen_range(0.05..0.8) * sck;
        let pp = PhysicalParams::new(1.0, mu, sigma, 1.0)?;
        let blocks = OperatorBlocks::assemble(&mesh, &p, &pp, k)?;
        let bound = lambda_upper_bound(&p, &pp);
        let g = [0.05, 0.1, 0.2, 0.4, 0.8]
            .iter()
            .map(|f| Ok(blocks.gamma_j(f * bound, 1)?))
            .collect::<Res<Vec<f64>>>()?;
        let cvs = roots(&mesh, &p, &pp, k, 3)?;
        roots_seen += cvs.len();
        let ordered = cvs.windows(2).all(|w| w[0].lambda > w[1].lambda);
        if !g.windows(2).all(|w| w[1] < w[0]) || !ordered || cvs.is_empty() {
            failures += 1;
        }
    }
    Ok((failures == 0, format!("20 draws, {failures} violations, {roots_seen} roots ordered")))
}

fn growth_bound() -> Res<(bool, String)> {
    let mesh = build_mesh(64)?;
    let pp = base_params();
    let mut worst = f64::NEG_INFINITY;
    let mut count = 0;
    for p in [linear(), DensityProfile::exponential(1.0, 1.0)?] {
        let bound = lambda_upper_bound(&p, &pp);
        let k_max = default_k_max(&p, &pp)?;
        let ks: Vec<f64> = (1..=64).map(|i| k_max * i as f64 / 64.0).collect();
        for row in dispersion_curve(&mesh, &p, &pp, &ks, 4)? {
            for l in row.lambdas.iter().flatten() {
                worst = worst.max(l - bound);
                count += 1;
            }
        }
    }
    Ok((worst <= 1e-12, format!("{count} roots, max lambda - sqrt(g/L0) = {worst:.3e}")))
}

fn sample_roots(mesh: &Mesh) -> Res<Vec<(WaveVector, CharacteristicValue)>> {
    let (p, pp) = (linear(), base_params());
    let mut out = Vec::new();
    for (k1, k2) in [(1.0, 0.0), (2.0, 1.0), (PI, 0.0), (3.0, 4.0)] {
        let w = WaveVector::new(k1, k2)?;
        for cv in roots(mesh, &p, &pp, w.magnitude(), 3)? {
            out.push((w, cv));
        }
    }
    Ok(out)
}

fn variational_identity() -> Res<(bool, String)> {
    let mesh = build_mesh(128)?;
    let (p, pp) = (linear(), base_params());
    let mut worst = 0.0f64;
    let all = sample_roots(&mesh)?;
    for (w, cv) in &all {
        let blocks = OperatorBlocks::assemble(&mesh, &p, &pp, w.magnitude())?;
        let (l, r) = blocks.variational_balance(cv.lambda, &cv.phi);
        worst = worst.max((l - r).abs() / l.abs().max(r.abs()));
    }
    Ok((worst <= 1e-8 && !all.is_empty(), format!("{} eigenpairs, max relative imbalance {worst:.2e}", all.len())))
}

fn mode_reconstruction() -> Res<(bool, String)> {
    let mesh = build_mesh(128)?;
    let (p, pp) = (linear(), base_params());
    let (mut div, mut hor, mut ver, mut bnd) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let all = sample_roots(&mesh)?;
    for (w, cv) in &all {
        let r = reconstruct_mode(cv, *w, &mesh, &p, &pp)?.residuals;
        div = div.max(r.divergence);
        hor = hor.max(r.horizontal[0]).max(r.horizontal[1]);
        ver = ver.max(r.vertical);
        bnd = bnd.max(r.boundary);
    }
    Ok((
        div <= 1e-10 && hor <= 1e-7 && ver <= 1e-7 && bnd <= 1e-12,
        format!("{} modes: divergence {div:.2e}, horizontal {hor:.2e}, vertical {ver:.2e}, boundary {bnd:.2e}", all.len()),
    ))
}

fn random_state(mesh: &Mesh, seed: u64) -> Res<ModeState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let f = |x: f64| {
        a.iter()
            .enumerate()
            .map(|(m, c)| c * (1.0 - (2.0 * PI * (m + 1) as f64 * x).cos()))
            .sum::<f64>()
    };
    let fp = |x: f64| {
        a.iter()
            .enumerate()
            .map(|(m, c)| {
                let w = 2.0 * PI * (m + 1) as f64;
                c * w * (w * x).sin()
            })
            .sum::<f64>()
    };
    let phi = mesh.project(f, fp)?;
    Ok(ModeState {
        chi: vec![0.0; phi.len()],
        phi,
        t: 0.0,
    })
}

fn evolution_cross_check() -> Res<(bool, String)> {
    let mesh = build_mesh(64)?;
    let (p, pp) = (linear(), base_params());

    let t = Instant::now();
    let cv = roots(&mesh, &p, &pp, PI, 1)?.into_iter().next().ok_or("no root at k = pi")?;
    let l = cv.lambda;
    let ops = assemble_evolution(&mesh, &p, &pp, PI)?;
    let traj = trajectory(&ops, &ModeState::eigen(&cv.phi, l), 1e-3 / l, 3.0 / l, 10)?;
    let growth = rel(measure_growth_window(&traj.samples, 1.0 / l, 3.0 / l)?.lambda_est, l);
    let eigen_secs = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let lmax = unstable_set(&mesh, &p, &pp, None)?.lambda_max.ok_or("empty unstable set")?;
    let mut ratio = 0.0f64;
    for (seed, k) in [(1, PI), (2, 2.0), (3, 5.0)] {
        let ops = assemble_evolution(&mesh, &p, &pp, k)?;
        let traj = trajectory(&ops, &random_state(&mesh, seed)?, 1e-2 / lmax.max(1.0), 5.0 / lmax, 10)?;
        ratio = ratio.max(sharp_rate_check(&traj.samples, lmax).max_ratio);
    }
    let random_secs = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let dirichlet = mesh.with_constraint(Constraint::Dirichlet);
    let mut stable_peak = 0.0f64;
    for k in [1.0, PI] {
        let sck = sigma_critical_k(&dirichlet, &p, pp.g, k)?.value;
        let stable = PhysicalParams::new(pp.g, pp.mu, 1.5 * sck, pp.length)?;
        let ops = assemble_evolution(&mesh, &p, &stable, k)?;
        let traj = trajectory(&ops, &random_state(&mesh, 7)?, 1e-2, 10.0, 10)?;
        let n0 = traj.samples[0].norm_phi;
        stable_peak = stable_peak.max(traj.samples.iter().map(|s| s.norm_phi / n0).fold(0.0, f64::max));
    }
    let stable_secs = t.elapsed().as_secs_f64();

    let slowest = eigen_secs.max(random_secs).max(stable_secs);
    Ok((
        growth <= 1e-3 && ratio <= 10.0 && stable_peak <= 2.0 && slowest < 60.0,
        format!(
            "growth relative {growth:.2e}, max ||phi||/(e^(Lambda t)||phi0||) = {ratio:.4}, \
             stable max ||phi||/||phi0|| = {stable_peak:.4}, slowest run {slowest:.2} s"
        ),
    ))
}

fn instability_bookkeeping() -> Res<(bool, String)> {
    let mesh = build_mesh(128)?;
    let (p, pp) = (linear(), base_params());
    let set = unstable_set(&mesh, &p, &pp, None)?;
    let lmax = set.lambda_max.ok_or("empty unstable set")?;
    let w = set.members[set.argmax.ok_or("no argmax")?].wavevector;
    let modes = roots(&mesh, &p, &pp, w.magnitude(), 3)?
        .iter()
        .map(|cv| Ok(ModeProfile::from_mode(&reconstruct_mode(cv, w, &mesh, &p, &pp)?)))
        .collect::<Res<Vec<_>>>()?;
    if modes.len() < 2 {
        return Err("need two modes at the maximising wavevector".into());
    }

    let single = ModeCombination::new(modes[..1].to_vec(), vec![1.0], lmax)?;
    let (delta, eps): (f64, f64) = (1e-6, 0.1);
    let closed = (eps / delta).ln() / modes[0].lambda;
    let escape = rel(single.escape_time(delta, eps)?, closed);

    let two = modes[..2].to_vec();
    let norms = mode_l2_norms(&two)?;
    let c = norms[0].velocity / norms[1].velocity;
    let zero = ModeCombination::new(two.clone(), vec![0.0, 0.0], lmax)?;
    let equal = ModeCombination::new(two.clone(), vec![1.0, c], lmax)?;
    let classified =
        single.check_admissible().admissible && !zero.check_admissible().admissible && !equal.check_admissible().admissible;

    let good = ModeCombination::new(two, vec![1.0, 0.25 * c], lmax)?;
    let td = good.escape_time(1e-4, 0.1)?;
    let grid: Vec<f64> = (0..=400).map(|i| td * i as f64 / 400.0).collect();
    let lb = good.lower_bound_check(&grid)?;

    // every solved mode over a few members of S, including the maximiser
    let mut worst = f64::INFINITY;
    let mut checked = 0;
    for m in set.members.iter().take(6).chain(std::iter::once(&set.members[set.argmax.unwrap()])) {
        for cv in roots(&mesh, &p, &pp, m.k, 3)? {
            let mode = ModeProfile::from_mode(&reconstruct_mode(&cv, m.wavevector, &mesh, &p, &pp)?);
            let chk = max_lambda_inequality(&mode, lmax, &pp, &p);
            worst = worst.min(chk.slack / chk.rhs);
            checked += 1;
        }
    }
    Ok((
        escape <= 1e-10 && classified && good.check_admissible().admissible && lb.holds && worst >= -1e-8,
        format!(
            "escape relative {escape:.2e}, examples classified = {classified}, lower bound holds = {} \
             (C5 = {:.3e}, empirical {:.3e}), min max-lambda slack/rhs over {checked} modes = {worst:.2e}",
            lb.holds, lb.c5, lb.empirical_constant
        ),
    ))
}

fn convergence_order() -> Res<(bool, String)> {
    let (p, pp) = (linear(), base_params());
    let lam = |n: usize| -> Res<f64> {
        Ok(roots(&build_mesh(n)?, &p, &pp, PI, 1)?.first().ok_or("no root")?.lambda)
    };
    let (a, b, c) = (lam(16)?, lam(32)?, lam(64)?);
    let (e1, e2) = ((a - b).abs(), (b - c).abs());
    Ok((e1 / e2 >= 6.0, format!("differences {e1:.3e}, {e2:.3e}, ratio {:.2}", e1 / e2)))
}

fn main() {
    let criteria: [(&str, Criterion); 10] = [
        ("closed-form sigma_c", closed_form_sigma_c),
        ("closed-form sigma_c(k)", closed_form_sigma_c_k),
        ("fixed-point consistency", fixed_point_consistency),
        ("monotonicity", monotonicity),
        ("growth bound", growth_bound),
        ("variational identity", variational_identity),
        ("mode reconstruction", mode_reconstruction),
        ("evolution cross-check", evolution_cross_check),
        ("instability bookkeeping", instability_bookkeeping),
        ("convergence order", convergence_order),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let (ok, detail) = run().unwrap_or_else(|e| (false, format!("error: {e}")));
        if !ok {
            failed += 1;
        }
        println!("{} {:>2} {name}: {detail}", if ok { "PASS" } else { "FAIL" }, i + 1);
    }
    println!("{} criteria, {failed} failed", criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
