use std::collections::BTreeMap;
use std::f64::consts::TAU;

use dysonlab::config::format_f64;
use dysonlab::dynamics::{ergodic_average, simulate_1d, simulate_2d, ErgodicEstimate, SdeConfig};
use dysonlab::ensembles::{
    disc_start_2d, ginibre_predicted_location, planar_scale, quantile_start_1d, run_chains_1d,
    run_chains_2d, write_samples_1d_csv, write_samples_2d_csv,
};
use dysonlab::equilibrium::{circular_law, equilibrium_measure};
use dysonlab::game::{
    circumcircle_sum, compare_loops as compare, deviation_experiment, ergodic_constants,
    global_integrand_1d, global_integrand_2d, player_integrand_1d, player_integrand_2d,
};
use dysonlab::nash::{
    identity_suite_1d, identity_suite_2d, residual_hjb_1d, residual_hjb_2d, residual_master_1d,
    residual_master_2d, residual_nash_1d, residual_nash_2d,
};
use dysonlab::rng::{derive_seed, replica_seed, stream};
use dysonlab::stats::{convergence_study, h2_stat_2d};
use dysonlab::transforms::circumcircle;
use dysonlab::{Config1D, Config2D, GameParams, Point2};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::output::Outputs;
use crate::CliError;

const IDENTITY_TOL: f64 = 1e-12;
const RESIDUAL_TOL: f64 = 1e-10;
const MASTER_1D_TOL: f64 = 1e-4;
const MASTER_2D_TOL: f64 = 1e-3;

fn random_line(rng: &mut impl Rng, n: usize) -> Config1D {
    loop {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        if let Ok(c) = Config1D::from_unsorted(x) {
            return c;
        }
    }
}

fn random_plane(rng: &mut impl Rng, n: usize) -> Config2D {
    loop {
        let z: Vec<Point2> = (0..n)
            .map(|_| {
                Point2::from_polar(2.0 * rng.random::<f64>().sqrt(), rng.random_range(0.0..TAU))
            })
            .collect();
        if let Ok(c) = Config2D::new(z) {
            return c;
        }
    }
}

fn merge_max(into: &mut BTreeMap<String, f64>, from: &BTreeMap<String, f64>) {
    for (k, v) in from {
        let e = into.entry(k.clone()).or_insert(0.0);
        *e = e.max(*v);
    }
}

fn print_json(v: &serde_json::Value) {
    use std::io::Write;
    let _ = writeln!(
        std::io::stdout(),
        "{}",
        serde_json::to_string_pretty(v).unwrap_or_default()
    );
}

pub fn verify_identities(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<(), CliError> {
    let max_n = cfg.run.max_n;
    let reports: Vec<_> = (0..cfg.run.configs as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(cfg.seed, &[0x1D, k]);
            let n = rng.random_range(3..=max_n);
            let line = identity_suite_1d(&random_line(&mut rng, n));
            let n = rng.random_range(3..=max_n);
            let plane = identity_suite_2d(&random_plane(&mut rng, n));
            (line.errors, plane.errors)
        })
        .collect();
    let (mut line, mut plane) = (BTreeMap::new(), BTreeMap::new());
    for (l, p) in &reports {
        merge_max(&mut line, l);
        merge_max(&mut plane, p);
    }
    let worst = line
        .values()
        .chain(plane.values())
        .copied()
        .fold(0.0, f64::max);
    let pass = worst <= IDENTITY_TOL;
    let report = json!({
        "configs": cfg.run.configs,
        "max_n": max_n,
        "tolerance": IDENTITY_TOL,
        "line": line,
        "plane": plane,
        "max_relative_error": worst,
        "pass": pass,
    });
    out.json("identities.json", &report)?;
    print_json(&report);
    if pass {
        Ok(())
    } else {
        Err(CliError::acceptance(format!(
            "identity error {worst:e} exceeds {IDENTITY_TOL:e}"
        )))
    }
}

#[derive(Serialize)]
struct Suite {
    max_relative: f64,
    tolerance: f64,
    pass: bool,
}

fn suite(max_relative: f64, tolerance: f64) -> Suite {
    Suite {
        max_relative,
        tolerance,
        pass: max_relative <= tolerance,
    }
}

pub fn verify_nash(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<(), CliError> {
    let p = &cfg.params;
    if cfg.c2_auto_filled {
        eprintln!(
            "c2 auto-filled to {} from the closed-loop relation",
            format_f64(p.c2)
        );
    }
    let (n, beta, sigma) = (p.n_players, p.beta, p.sigma);
    let open_1d = GameParams::open_loop_1d(n, beta, sigma)?;
    let closed_2d = GameParams::closed_loop_2d(n, beta, sigma)?;
    let open_2d = GameParams::open_loop_2d(n, beta, sigma)?;
    let rows: Vec<[f64; 4]> = (0..cfg.run.configs as u64)
        .into_par_iter()
        .map(|k| -> dysonlab::Result<[f64; 4]> {
            let mut rng = stream(cfg.seed, &[0x4E, k]);
            let x = random_line(&mut rng, n);
            let z = random_plane(&mut rng, n);
            let i = rng.random_range(0..n);
            Ok([
                residual_nash_1d(&x, i, p)?.relative.abs(),
                residual_hjb_1d(&x, &open_1d).relative.abs(),
                residual_nash_2d(&z, i, &closed_2d)?.relative.abs(),
                residual_hjb_2d(&z, &open_2d).relative.abs(),
            ])
        })
        .collect::<dysonlab::Result<_>>()?;
    let col = |j: usize| rows.iter().map(|r| r[j]).fold(0.0, f64::max);
    let mut suites = BTreeMap::new();
    suites.insert("nash_1d", suite(col(0), RESIDUAL_TOL));
    suites.insert("hjb_1d", suite(col(1), RESIDUAL_TOL));
    suites.insert("nash_2d", suite(col(2), RESIDUAL_TOL));
    suites.insert("hjb_2d", suite(col(3), RESIDUAL_TOL));

    let mu = equilibrium_measure(&p.potential, beta)?;
    let (a, b) = mu.support();
    let mut master: f64 = 0.0;
    for k in 1..=50 {
        let x = a + (b - a) * k as f64 / 51.0;
        master = master.max(residual_master_1d(x, &mu, beta)?.residual.abs());
    }
    suites.insert("master_1d", suite(master, MASTER_1D_TOL));
    if p.potential.is_quadratic() {
        let law = circular_law(beta)?;
        let r = law.support_radius();
        let mut planar: f64 = 0.0;
        for k in 0..20 {
            let z = Point2::from_polar(r * (0.05 + 0.85 * k as f64 / 19.0), 2.399963 * k as f64);
            planar = planar.max(residual_master_2d(z, &law, beta)?.residual.abs());
        }
        suites.insert("master_2d", suite(planar, MASTER_2D_TOL));
    }
    let pass = suites.values().all(|s| s.pass);
    let report = json!({
        "params": p,
        "c2": p.c2,
        "c2_auto_filled": cfg.c2_auto_filled,
        "configs": cfg.run.configs,
        "suites": suites,
        "pass": pass,
    });
    out.json("residuals.json", &report)?;
    print_json(&report);
    if pass {
        Ok(())
    } else {
        let failed: Vec<_> = suites
            .iter()
            .filter(|(_, s)| !s.pass)
            .map(|(k, _)| *k)
            .collect();
        Err(CliError::acceptance(format!(
            "residual suites above tolerance: {}",
            failed.join(", ")
        )))
    }
}

#[derive(Serialize)]
struct ReplicaCosts {
    seed: u64,
    player_cost: ErgodicEstimate,
    global_cost: ErgodicEstimate,
    refined_steps: u64,
}

fn pooled(estimates: &[&ErgodicEstimate]) -> serde_json::Value {
    let r = estimates.len() as f64;
    let mean = estimates.iter().map(|e| e.mean).sum::<f64>() / r;
    let se = estimates
        .iter()
        .map(|e| e.std_error * e.std_error)
        .sum::<f64>()
        .sqrt()
        / r;
    json!({ "mean": mean, "std_error": se })
}

pub fn simulate(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<(), CliError> {
    let p = &cfg.params;
    let i = cfg.run.player;
    let runs: Vec<(ReplicaCosts, Vec<u8>)> = (0..cfg.run.replicas as u64)
        .into_par_iter()
        .map(|r| -> dysonlab::Result<(ReplicaCosts, Vec<u8>)> {
            let seed = replica_seed(cfg.seed, r);
            let sde = SdeConfig {
                seed,
                ..cfg.sde.clone()
            };
            let mut csv = Vec::new();
            let (player_cost, global_cost, refined_steps) = if cfg.model.is_planar() {
                let ig = [player_integrand_2d(p, i), global_integrand_2d(p)];
                let t = simulate_2d(&disc_start_2d(p)?, p, &sde, &ig)?;
                t.write_csv(&mut csv)?;
                (
                    ergodic_average(&t, "player_cost")?,
                    ergodic_average(&t, "global_cost")?,
                    t.refined_steps,
                )
            } else {
                let ig = [player_integrand_1d(p, i), global_integrand_1d(p)];
                let t = simulate_1d(&quantile_start_1d(p)?, p, &sde, &ig)?;
                t.write_csv(&mut csv)?;
                (
                    ergodic_average(&t, "player_cost")?,
                    ergodic_average(&t, "global_cost")?,
                    t.refined_steps,
                )
            };
            Ok((
                ReplicaCosts {
                    seed,
                    player_cost,
                    global_cost,
                    refined_steps,
                },
                csv,
            ))
        })
        .collect::<dysonlab::Result<_>>()?;
    for (r, (_, csv)) in runs.iter().enumerate() {
        out.text(
            &format!("trajectory_r{r}.csv"),
            std::str::from_utf8(csv).map_err(CliError::internal)?,
        )?;
    }
    let replicas: Vec<&ReplicaCosts> = runs.iter().map(|(c, _)| c).collect();
    let lambda = ergodic_constants(p, cfg.model);
    let target = if cfg.model.is_open() {
        "global_cost"
    } else {
        "player_cost"
    };
    let player = pooled(&replicas.iter().map(|c| &c.player_cost).collect::<Vec<_>>());
    let global = pooled(&replicas.iter().map(|c| &c.global_cost).collect::<Vec<_>>());
    let compared = if cfg.model.is_open() {
        &global
    } else {
        &player
    };
    let z = (compared["mean"].as_f64().unwrap_or(f64::NAN) - lambda)
        / compared["std_error"].as_f64().unwrap_or(f64::NAN);
    let mut report = json!({
        "model": cfg.model,
        "player": i,
        "replicas": replicas,
        "player_cost": player,
        "global_cost": global,
        "ergodic_constant": { "value": lambda, "compared_with": target, "z_score": z },
    });
    if let Some(pert) = cfg.run.perturbation {
        let d = deviation_experiment(p, cfg.model, &cfg.sde, i, pert)?;
        report["deviation"] = json!({ "perturbation": pert, "cost_change": d });
    }
    out.json("ergodic.json", &report)?;
    print_json(&report);
    Ok(())
}

pub fn sample(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<(), CliError> {
    let p = &cfg.params;
    let mut diagnostics = Vec::new();
    if cfg.run.dimension == 1 {
        for (c, o) in run_chains_1d(p, &cfg.chain, cfg.n_chains)?
            .into_iter()
            .enumerate()
        {
            let mut w = out.create(&format!("samples_chain{c}.csv"))?;
            write_samples_1d_csv(&o.samples, &mut w)?;
            diagnostics.push(o.diag);
        }
    } else {
        for (c, o) in run_chains_2d(p, &cfg.chain, cfg.n_chains)?
            .into_iter()
            .enumerate()
        {
            let mut w = out.create(&format!("samples_chain{c}.csv"))?;
            write_samples_2d_csv(&o.samples, &mut w)?;
            diagnostics.push(o.diag);
        }
    }
    let report = json!({ "dimension": cfg.run.dimension, "chains": diagnostics });
    out.json("diagnostics.json", &report)?;
    print_json(&report);
    Ok(())
}

pub fn stats(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<(), CliError> {
    let table = convergence_study(
        cfg.run.estimator,
        &cfg.grid.n_values,
        cfg.grid.index_rule,
        &cfg.params,
        &cfg.chain,
        cfg.n_chains,
    )?;
    table.write_csv(out.create("convergence.csv")?)?;
    table.write_json(out.create("convergence.json")?)?;
    let summary: Vec<_> = table
        .rows
        .iter()
        .map(|r| json!({ "n": r.n, "index": r.index, "mean": r.estimate.mean, "std_error": r.estimate.std_error, "limit": r.limit }))
        .collect();
    print_json(
        &json!({ "estimator": table.estimator, "rows": summary, "limit": table.limit, "failures": table.failures }),
    );
    if table.failures.is_empty() {
        Ok(())
    } else {
        let msg: Vec<_> = table
            .failures
            .iter()
            .map(|(n, e)| format!("N = {n}: {e}"))
            .collect();
        Err(CliError::numerical(msg.join("; ")))
    }
}

const GNUPLOT: &str = "\
set datafile separator ','
set key autotitle columnhead
set multiplot layout 2,2
set xlabel 'c2'
plot 'betas.csv' using 1:2 with lines, '' using 1:3 with lines, '' using 1:4 with lines
plot 'avg_costs.csv' using 1:2 with lines, '' using 1:3 with lines
set xlabel 'q'
plot 'player_costs.csv' using 1:3 with lines, '' using 1:5 with lines
set xlabel 'x'
plot 'densities.csv' using 2:(strcol(1) eq 'closed' ? $3 : 1/0) with lines title 'closed', \
     '' using 2:(strcol(1) eq 'open' ? $3 : 1/0) with lines title 'open'
unset multiplot
";

pub fn compare_loops(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<(), CliError> {
    let g = &cfg.grid;
    let cmp = compare(&g.c2_values, cfg.params.sigma, g.finite_n, g.panel_c2)?;
    cmp.write_betas_csv(out.create("betas.csv")?)?;
    cmp.write_avg_costs_csv(out.create("avg_costs.csv")?)?;
    cmp.write_player_costs_csv(out.create("player_costs.csv")?, g.panel_points)?;
    cmp.write_densities_csv(out.create("densities.csv")?, g.panel_points)?;
    out.text("plot.gp", GNUPLOT)?;
    let k = (0..g.c2_values.len())
        .min_by(|&a, &b| g.c2_values[a].abs().total_cmp(&g.c2_values[b].abs()))
        .unwrap_or(0);
    print_json(&json!({
        "c2": g.c2_values[k],
        "beta_closed": cmp.beta_closed[k],
        "beta_open": cmp.beta_open[k],
        "radius_closed": cmp.semicircle_radii[k].0,
        "radius_open": cmp.semicircle_radii[k].1,
    }));
    Ok(())
}

/// Indices of the `k` particles nearest to particle `i`.
fn nearest(z: &[Point2], i: usize, k: usize) -> Vec<usize> {
    let mut others: Vec<usize> = (0..z.len()).filter(|&j| j != i).collect();
    others.sort_by(|&a, &b| (z[a] - z[i]).norm_sq().total_cmp(&(z[b] - z[i]).norm_sq()));
    others.truncate(k);
    others
}

pub fn coulomb_relax(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<(), CliError> {
    let p = &cfg.params;
    let n = p.n_players;
    let i = cfg.run.player;
    let half = cfg.run.start_width * p.beta.sqrt();
    let mut rng = stream(cfg.seed, &[0xC0]);
    let start: Vec<Point2> = (0..n)
        .map(|_| Point2::new(rng.random_range(-half..half), rng.random_range(-half..half)))
        .collect();
    let mut state = Config2D::new(start)?;

    let mut snaps = csv::Writer::from_writer(out.create("snapshots.csv")?);
    snaps
        .write_record(["snapshot", "t", "particle", "x", "y"])
        .map_err(CliError::internal)?;
    let mut circles = csv::Writer::from_writer(out.create("circles.csv")?);
    circles
        .write_record([
            "snapshot", "t", "player", "j", "k", "center_x", "center_y", "radius",
        ])
        .map_err(CliError::internal)?;
    let mut summary = Vec::new();
    let mut now = 0.0;
    for (s, &t) in cfg.run.snapshot_times.iter().enumerate() {
        if t > now {
            let span = t - now;
            let sde = SdeConfig {
                burn_in: span,
                horizon: span,
                seed: derive_seed(cfg.seed, &[s as u64]),
                record_stride: 1,
                ..cfg.sde.clone()
            };
            sde.validate()?;
            let traj = simulate_2d(&state, p, &sde, &[])?;
            state = traj
                .states
                .last()
                .cloned()
                .ok_or_else(|| CliError::numerical("empty trajectory"))?;
            now = t;
        }
        let z = state.points();
        for (k, q) in z.iter().enumerate() {
            snaps
                .write_record([
                    s.to_string(),
                    format_f64(t),
                    k.to_string(),
                    format_f64(q.x),
                    format_f64(q.y),
                ])
                .map_err(CliError::internal)?;
        }
        let near = nearest(z, i, cfg.run.overlay);
        for (a, &j) in near.iter().enumerate() {
            for &k in &near[a + 1..] {
                if let Some((c, r)) = circumcircle(z[i], z[j], z[k]) {
                    circles
                        .write_record([
                            s.to_string(),
                            format_f64(t),
                            i.to_string(),
                            j.to_string(),
                            k.to_string(),
                            format_f64(c.x),
                            format_f64(c.y),
                            format_f64(r),
                        ])
                        .map_err(CliError::internal)?;
                }
            }
        }
        summary.push(json!({
            "t": t,
            "second_moment": z.iter().map(|q| q.norm_sq()).sum::<f64>() / n as f64,
            "max_radius": z.iter().map(|q| q.norm()).fold(0.0, f64::max),
            "player_h2": h2_stat_2d(&state, i),
            "player_circumcircle": circumcircle_sum(z, i),
        }));
    }
    snaps.flush()?;
    circles.flush()?;
    let report = json!({
        "player": i,
        "support_radius": p.beta.sqrt(),
        "equilibrium_second_moment": p.beta / 2.0,
        "snapshots": summary,
    });
    out.json("relax.json", &report)?;
    print_json(&report);
    Ok(())
}

pub fn ginibre_locations(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<(), CliError> {
    let n = cfg.params.n_players;
    let scale = planar_scale(&cfg.params);
    let covered = {
        let r = (n as f64).sqrt().floor() as usize;
        r * r
    };
    let mut w = csv::Writer::from_writer(out.create("locations.csv")?);
    w.write_record([
        "k", "shell", "x", "y", "radius", "angle", "scaled_x", "scaled_y",
    ])
    .map_err(CliError::internal)?;
    for k in 1..=covered {
        let u = ginibre_predicted_location(k, n)?;
        let shell = (k as f64).sqrt().ceil() as usize;
        let angle = TAU * (k - (shell - 1) * (shell - 1)) as f64 / (2 * shell - 1) as f64;
        w.write_record([
            k.to_string(),
            shell.to_string(),
            format_f64(u.x),
            format_f64(u.y),
            format_f64(u.norm()),
            format_f64(angle),
            format_f64(u.x * scale),
            format_f64(u.y * scale),
        ])
        .map_err(CliError::internal)?;
    }
    w.flush()?;
    print_json(&json!({ "n": n, "covered": covered, "frame_scale": scale }));
    Ok(())
}
