//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with a
//! nonzero status if any criterion fails. Positional arguments select
//! criteria by tag (for example `c4 c9`).

use std::f64::consts::PI;
use std::io::Write;
use std::time::{Duration, Instant};

use dysonlab::config::{closed_c2_1d, open_c2_1d};
use dysonlab::dynamics::{simulate_1d, Perturbation, SdeConfig};
use dysonlab::ensembles::{default_step_size, run_chains_1d, run_chains_2d, ChainConfig};
use dysonlab::equilibrium::{circular_law, limit_singular_stat, semicircle};
use dysonlab::game::{
    compare_loops, deviation_experiment, epsilon_nash_2d, ergodic_constants, mc_global_cost,
    mc_player_cost, Model,
};
use dysonlab::nash::{
    identity_suite_1d, identity_suite_2d, residual_hjb_1d, residual_hjb_2d, residual_master_1d,
    residual_master_2d, residual_nash_1d, residual_nash_2d,
};
use dysonlab::rng::{replica_seed, stream};
use dysonlab::stats::{h2_stat_1d, nash_term_stats_1d, per_index_stat_2d, Estimate, IndexRule};
use dysonlab::{Config1D, Config2D, GameParams, Point2};
use rand::Rng;
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}

type Check = fn() -> dysonlab::Result<Outcome>;

fn random_line(rng: &mut impl Rng) -> Config1D {
    loop {
        let n = rng.random_range(3..=25);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        if let Ok(c) = Config1D::from_unsorted(x) {
            return c;
        }
    }
}

fn random_plane(rng: &mut impl Rng) -> Config2D {
    loop {
        let n = rng.random_range(3..=25);
        let z: Vec<Point2> = (0..n)
            .map(|_| {
                Point2::from_polar(
                    2.0 * rng.random::<f64>().sqrt(),
                    rng.random_range(0.0..2.0 * PI),
                )
            })
            .collect();
        if let Ok(c) = Config2D::new(z) {
            return c;
        }
    }
}

fn c1_identities() -> dysonlab::Result<Outcome> {
    let mut rng = stream(7, &[1]);
    let mut worst1: f64 = 0.0;
    let mut worst2: f64 = 0.0;
    for _ in 0..1000 {
        worst1 = worst1.max(identity_suite_1d(&random_line(&mut rng)).max_error());
        worst2 = worst2.max(identity_suite_2d(&random_plane(&mut rng)).max_error());
    }
    Ok(Outcome::new(
        worst1 <= 1e-12 && worst2 <= 1e-12,
        format!("max rel err line {worst1:.2e}, plane {worst2:.2e} (tol 1e-12)"),
    ))
}

fn c2_residuals() -> dysonlab::Result<Outcome> {
    let mut rng = stream(7, &[2]);
    let mut worst = [0.0f64; 4];
    for _ in 0..1000 {
        let x = random_line(&mut rng);
        let n = x.len();
        let beta = rng.random_range(1.5..5.0);
        let sigma = rng.random_range(0.3..1.0);
        let i = rng.random_range(0..n);
        let closed = GameParams::closed_loop_1d(n, beta, sigma)?;
        let open = GameParams::open_loop_1d(n, beta, sigma)?;
        worst[0] = worst[0].max(residual_nash_1d(&x, i, &closed)?.relative.abs());
        worst[1] = worst[1].max(residual_hjb_1d(&x, &open).relative.abs());

        let z = random_plane(&mut rng);
        let n = z.len();
        let i = rng.random_range(0..n);
        let closed = GameParams::closed_loop_2d(n, beta, sigma)?;
        let open = GameParams::open_loop_2d(n, beta, sigma)?;
        worst[2] = worst[2].max(residual_nash_2d(&z, i, &closed)?.relative.abs());
        worst[3] = worst[3].max(residual_hjb_2d(&z, &open).relative.abs());
    }
    Ok(Outcome::new(
        worst.iter().all(|w| *w <= 1e-10),
        format!(
            "nash_1d {:.2e}, hjb_1d {:.2e}, nash_2d {:.2e}, hjb_2d {:.2e} (tol 1e-10)",
            worst[0], worst[1], worst[2], worst[3]
        ),
    ))
}

fn c3_master() -> dysonlab::Result<Outcome> {
    let mut master: f64 = 0.0;
    let mut product: f64 = 0.0;
    let mut info: f64 = 0.0;
    for beta in [4.0 / 3.0, 2.0, 4.0] {
        let mu = semicircle(beta)?;
        let (a, b) = mu.support();
        for k in 1..=50 {
            let x = a + (b - a) * k as f64 / 51.0;
            master = master.max(residual_master_1d(x, &mu, beta)?.residual.abs());
            let m = mu.density(x);
            let hm = mu.hilbert(x);
            let hmhm = mu.pv_integral(x, |y| mu.hilbert(y), 256);
            product = product.max((PI * PI * m * m - hm * hm + 2.0 * hmhm).abs());
        }
        let lhs = mu.integrate(|x| mu.hilbert(x).powi(2));
        info = info.max((lhs - PI * PI / 3.0 * mu.density_cubed_integral()).abs());
    }
    let law = circular_law(2.0)?;
    let r = law.support_radius();
    let mut planar: f64 = 0.0;
    for k in 0..20 {
        let z = Point2::from_polar(r * (0.05 + 0.85 * k as f64 / 19.0), 2.399963 * k as f64);
        planar = planar.max(residual_master_2d(z, &law, 2.0)?.residual.abs());
    }
    Ok(Outcome::new(
        master <= 1e-4 && planar <= 1e-3 && product <= 1e-4 && info <= 1e-4,
        format!(
            "master_1d {master:.2e}, master_2d {planar:.2e}, product rule {product:.2e}, free information {info:.2e}"
        ),
    ))
}

fn c4_ergodic_cost() -> dysonlab::Result<Outcome> {
    let closed = GameParams::closed_loop_1d(8, 2.0, 1.0)?;
    let open = GameParams::open_loop_1d(8, 2.0, 1.0)?;
    let sde = SdeConfig::new(1e-4, 50.0, 250.0, 0).with_stride(usize::MAX);
    let player = mc_player_cost(&closed, Model::Closed1D, &sde, 3)?;
    let global = mc_global_cost(&open, Model::Open1D, &sde)?;
    let lp = ergodic_constants(&closed, Model::Closed1D);
    let lg = ergodic_constants(&open, Model::Open1D);
    let zp = (player.mean - lp) / player.std_error;
    let zg = (global.mean - lg) / global.std_error;
    Ok(Outcome::new(
        zp.abs() <= 3.0 && zg.abs() <= 3.0,
        format!(
            "player {:.5} +- {:.5} vs {lp:.5} (z {zp:.2}); global {:.5} +- {:.5} vs {lg:.5} (z {zg:.2})",
            player.mean, player.std_error, global.mean, global.std_error
        ),
    ))
}

fn pooled(series: Vec<Vec<f64>>, iacts: &[f64]) -> dysonlab::Result<Estimate> {
    Estimate::from_chains(&series, iacts)
}

fn bulk_chains(
    beta: f64,
    n: usize,
    keep: usize,
) -> dysonlab::Result<Vec<dysonlab::ensembles::ChainOutput<Config1D>>> {
    let p = GameParams::closed_loop_1d(n, beta, 1.0)?;
    let chain = ChainConfig::new(default_step_size(&p), 5000, keep, 2, 1);
    run_chains_1d(&p, &chain, 4)
}

fn c5_singular_limit() -> dysonlab::Result<Outcome> {
    let mut pass = true;
    let mut detail = Vec::new();
    for (beta, keep) in [(2.0, 25_000), (4.0, 10_000)] {
        let n = 200;
        let i = n / 2 - 1;
        let outs = bulk_chains(beta, n, keep)?;
        let iacts: Vec<f64> = outs.iter().map(|o| o.diag.iact_estimate).collect();
        let e = pooled(
            outs.iter()
                .map(|o| o.samples.iter().map(|c| h2_stat_1d(c, i)).collect())
                .collect(),
            &iacts,
        )?;
        let target = 2.0 / (3.0 * (beta - 1.0));
        let lib = limit_singular_stat(beta, 1.0, &semicircle(beta)?, 0.5)?;
        let rel = (e.mean - target) / target;
        pass &= rel.abs() <= 0.15 && (lib - target).abs() <= 1e-10;
        detail.push(format!(
            "beta {beta}: {:.4} vs {target:.4} ({:+.1}%)",
            e.mean,
            100.0 * rel
        ));
    }
    let n = 100;
    let outs = bulk_chains(2.0, n, 10_000)?;
    let iacts: Vec<f64> = outs.iter().map(|o| o.diag.iact_estimate).collect();
    let avg = |c: &Config1D| (0..n).map(|k| h2_stat_1d(c, k)).sum::<f64>() / n as f64;
    let e = pooled(
        outs.iter()
            .map(|o| o.samples.iter().map(avg).collect())
            .collect(),
        &iacts,
    )?;
    let rel = (e.mean - 0.5) / 0.5;
    pass &= rel.abs() <= 0.10;
    detail.push(format!(
        "index average N=100: {:.4} vs 0.5 ({:+.1}%)",
        e.mean,
        100.0 * rel
    ));
    Ok(Outcome::new(pass, detail.join("; ")))
}

fn c6_nash_terms() -> dysonlab::Result<Outcome> {
    let n = 200;
    let i = n / 2 - 1;
    let p = GameParams::closed_loop_1d(n, 2.0, 1.0)?;
    let outs = bulk_chains(2.0, n, 25_000)?;
    let all: Vec<Config1D> = outs.into_iter().flat_map(|o| o.samples).collect();
    let s = nash_term_stats_1d(&all, i, &p)?;
    let mut pass = s.max_relative_residual <= 1e-10;
    let mut detail = Vec::new();
    for (name, est) in &s.terms {
        let limit = s.limits[name];
        let rel = (est.mean - limit) / limit.abs();
        pass &= rel.abs() <= 0.15;
        detail.push(format!(
            "{name} {:.4} vs {limit:.4} ({:+.1}%)",
            est.mean,
            100.0 * rel
        ));
    }
    detail.push(format!(
        "max relative residual {:.1e}",
        s.max_relative_residual
    ));
    Ok(Outcome::new(pass, detail.join("; ")))
}

fn c7_moment_flow() -> dysonlab::Result<Outcome> {
    let n = 500;
    let replicas = 8;
    let dt: f64 = 1e-3;
    let p = GameParams::closed_loop_1d(n, 2.0, 1.0)?;
    let wide = semicircle(8.0)?;
    let init = Config1D::new(
        (0..n)
            .map(|k| wide.quantile((k as f64 + 0.5) / n as f64))
            .collect::<Result<_, _>>()?,
    )?;
    let m2 = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let m0 = m2(init.points());
    let stride = (0.5 / dt).round() as usize;
    let runs: Vec<Vec<f64>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let sde = SdeConfig::new(dt, 0.0, 4.0, replica_seed(11, r))
                .with_stride(stride)
                .with_gap_contraction(None);
            let t = simulate_1d(&init, &p, &sde, &[])?;
            Ok(t.states.iter().map(|c| m2(c.points())).collect())
        })
        .collect::<dysonlab::Result<_>>()?;
    let mut pass = true;
    let mut detail = Vec::new();
    for t in [0.5f64, 1.0, 2.0, 4.0] {
        let k = (t / 0.5) as usize;
        let v: Vec<f64> = runs.iter().map(|r| r[k]).collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
        let limit = 1.0 + (m0 - 1.0) * (-t).exp();
        let z = (mean - limit) / sd;
        pass &= z.abs() <= 3.0;
        detail.push(format!("t={t}: {mean:.4} vs {limit:.4} ({z:+.2} sd)"));
    }
    Ok(Outcome::new(pass, detail.join("; ")))
}

fn c8_planar_limits() -> dysonlab::Result<Outcome> {
    let rule = IndexRule::Spiral {
        q: 0.25,
        theta: 0.0,
    };
    let beta = 2.0;
    let mut h2 = Vec::new();
    let mut eps = Vec::new();
    let mut last = (0.0, 0.0);
    for n in [50, 100, 200] {
        let p = GameParams::closed_loop_2d(n, beta, 1.0)?;
        let chain = ChainConfig::new(default_step_size(&p), 3000, 1000, 5, 5);
        let samples: Vec<Config2D> = run_chains_2d(&p, &chain, 2)?
            .into_iter()
            .flat_map(|o| o.samples)
            .collect();
        let sel = rule.select(n)?;
        let s = per_index_stat_2d(&samples, sel.index)?;
        h2.push(s.h2.mean);
        eps.push(epsilon_nash_2d(&p.clone().with_costs(p.c1, 2.0), &samples)?);
        let u = sel.location.expect("spiral rule yields a location");
        last = (
            s.circ.mean,
            circular_law(beta)?.circumcircle_limit(u * beta.sqrt())?,
        );
    }
    let decreasing = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    let rel = (last.0 - last.1) / last.1;
    Ok(Outcome::new(
        decreasing(&h2) && decreasing(&eps) && rel.abs() <= 0.10,
        format!(
            "h2 {:.4} > {:.4} > {:.4}; eps {:.4} > {:.4} > {:.4}; circ N=200 {:.4} vs {:.4} ({:+.1}%)",
            h2[0],
            h2[1],
            h2[2],
            eps[0],
            eps[1],
            eps[2],
            last.0,
            last.1,
            100.0 * rel
        ),
    ))
}

fn c9_loop_comparison() -> dysonlab::Result<Outcome> {
    let grid: Vec<f64> = (0..=110).map(|k| -0.1 + 0.01 * k as f64).collect();
    let cmp = compare_loops(&grid, 1.0, None, 0.0)?;
    let dir = tempfile::tempdir().map_err(dysonlab::Error::from)?;
    let files = [
        "betas.csv",
        "avg_costs.csv",
        "player_costs.csv",
        "densities.csv",
    ];
    let open =
        |name: &str| std::fs::File::create(dir.path().join(name)).map_err(dysonlab::Error::from);
    cmp.write_betas_csv(open(files[0])?)?;
    cmp.write_avg_costs_csv(open(files[1])?)?;
    cmp.write_player_costs_csv(open(files[2])?, 41)?;
    cmp.write_densities_csv(open(files[3])?, 81)?;
    let emitted = files.iter().all(|f| {
        std::fs::read_to_string(dir.path().join(f))
            .map(|s| s.lines().count() > 1)
            .unwrap_or(false)
    });

    let zero = grid
        .iter()
        .position(|c| c.abs() < 1e-12)
        .expect("grid contains zero");
    let (bc0, bo0) = (
        cmp.beta_closed[zero].unwrap_or(f64::NAN),
        cmp.beta_open[zero].unwrap_or(f64::NAN),
    );
    let (rc0, ro0) = cmp.semicircle_radii[zero];
    let mut pass = emitted
        && (bc0 - 4.0 / 3.0).abs() <= 1e-12
        && (bo0 - 2.0).abs() <= 1e-12
        && (rc0.unwrap_or(f64::NAN) - (8.0f64 / 3.0).sqrt()).abs() <= 1e-12
        && (ro0.unwrap_or(f64::NAN) - 2.0).abs() <= 1e-12;
    let mut root_residual: f64 = 0.0;
    let mut ordered = true;
    let mut cheaper = true;
    for (k, &c2) in grid.iter().enumerate() {
        if let (Some(bc), Some(bo)) = (cmp.beta_closed[k], cmp.beta_open[k]) {
            root_residual = root_residual
                .max((closed_c2_1d(bc, 1.0) - c2).abs())
                .max((open_c2_1d(bo, 1.0) - c2).abs());
            ordered &= bo > bc;
            if let Some(lo) = cmp.lambda_open_avg[k] {
                cheaper &= lo < bc / 4.0;
            }
        }
    }
    pass &= root_residual <= 1e-12 && ordered && cheaper;
    Ok(Outcome::new(
        pass,
        format!(
            "csvs {}; beta(0) = {bc0} / {bo0}; radii {:.6} / {:.6}; root residual {root_residual:.1e}; open > closed {ordered}; open avg cost below closed {cheaper}",
            if emitted { "ok" } else { "missing" },
            rc0.unwrap_or(f64::NAN),
            ro0.unwrap_or(f64::NAN)
        ),
    ))
}

fn c10_deviations() -> dysonlab::Result<Outcome> {
    let p = GameParams::closed_loop_1d(8, 2.0, 1.0)?;
    let sde = SdeConfig::new(1e-3, 10.0, 4000.0, 7).with_stride(usize::MAX);
    let mut pass = true;
    let mut detail = Vec::new();
    for pert in [
        Perturbation::Additive(0.2),
        Perturbation::Scale(0.5),
        Perturbation::BetaShift(-0.5),
    ] {
        let d = deviation_experiment(&p, Model::Closed1D, &sde, 3, pert)?;
        pass &= d.mean - 3.0 * d.std_error >= 0.0;
        detail.push(format!("{pert:?}: {:.4} +- {:.4}", d.mean, d.std_error));
    }
    Ok(Outcome::new(pass, detail.join("; ")))
}

fn main() {
    let checks: [(&str, &str, Duration, Check); 10] = [
        (
            "c1",
            "identity suite",
            Duration::from_secs(5),
            c1_identities,
        ),
        (
            "c2",
            "residual-zero certification",
            Duration::from_secs(30),
            c2_residuals,
        ),
        (
            "c3",
            "master equations",
            Duration::from_secs(120),
            c3_master,
        ),
        (
            "c4",
            "ergodic cost",
            Duration::from_secs(120),
            c4_ergodic_cost,
        ),
        (
            "c5",
            "inverse-square gap limit",
            Duration::from_secs(600),
            c5_singular_limit,
        ),
        ("c6", "Nash terms", Duration::from_secs(600), c6_nash_terms),
        (
            "c7",
            "second-moment flow",
            Duration::from_secs(180),
            c7_moment_flow,
        ),
        (
            "c8",
            "planar limits",
            Duration::from_secs(1200),
            c8_planar_limits,
        ),
        (
            "c9",
            "loop comparison",
            Duration::from_secs(10),
            c9_loop_comparison,
        ),
        (
            "c10",
            "deviation probes",
            Duration::from_secs(300),
            c10_deviations,
        ),
    ];
    let selected: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    let mut err = std::io::stderr();
    for (tag, name, budget, check) in checks {
        if !selected.is_empty() && !selected.iter().any(|s| s == tag) {
            continue;
        }
        let start = Instant::now();
        let outcome = check().unwrap_or_else(|e| Outcome::new(false, format!("error: {e}")));
        let elapsed = start.elapsed();
        let pass = outcome.pass && elapsed <= budget;
        failed += usize::from(!pass);
        let _ = writeln!(
            err,
            "{} {tag:>3} {name}: {} [{:.1} s of {} s]",
            if pass { "PASS" } else { "FAIL" },
            outcome.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed > 0 {
        let _ = writeln!(err, "{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
