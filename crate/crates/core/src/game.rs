//! Cost functions, ergodic constants, the closed- versus open-loop
//! comparison and Monte Carlo cost experiments.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::config::{format_f64, Config1D, Config2D, GameParams};
use crate::dynamics::{
    ergodic_average, paired_difference, simulate_with, CoulombFeedback, DeviatingFeedback,
    DysonFeedback, ErgodicEstimate, Integrand, Perturbation, SdeConfig,
};
use crate::ensembles::{disc_start_2d, quantile_start_1d};
use crate::equilibrium::semicircle;
use crate::error::{Error, Result};
use crate::point::Point2;
use crate::transforms::{
    all_h1_h2_1d, all_h1_h2_2d, check_index, inv_sq_circumdiameter_raw, pair_sums_1d_raw,
    pair_sums_2d_raw,
};

/// Which of the four solvable games a computation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Closed1D,
    Open1D,
    Closed2D,
    Open2D,
}

impl Model {
    pub fn is_planar(self) -> bool {
        matches!(self, Model::Closed2D | Model::Open2D)
    }

    pub fn is_open(self) -> bool {
        matches!(self, Model::Open1D | Model::Open2D)
    }
}

impl std::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closed1d" | "closed_1d" => Ok(Model::Closed1D),
            "open1d" | "open_1d" => Ok(Model::Open1D),
            "closed2d" | "closed_2d" => Ok(Model::Closed2D),
            "open2d" | "open_2d" => Ok(Model::Open2D),
            other => Err(Error::UnknownName(other.to_string())),
        }
    }
}

pub(crate) fn state_cost_1d_raw(x: &[f64], i: usize, params: &GameParams, h2: f64) -> f64 {
    let n1 = (x.len() - 1) as f64;
    x[i] * x[i] / 8.0 + params.c2 * h2 / n1
}

pub(crate) fn state_cost_2d_raw(z: &[Point2], i: usize, params: &GameParams, h2: f64) -> f64 {
    let n1 = (z.len() - 1) as f64;
    let circ = if params.c1 == 0.0 {
        0.0
    } else {
        params.c1 * circumcircle_sum(z, i)
    };
    z[i].norm_sq() / 8.0 + circ + params.c2 * h2 / n1
}

/// `(1/(N-1)^2) sum_{j != i} sum_{k != i, j} 2 / D^2(z_i - z_j, z_i - z_k)`.
pub fn circumcircle_sum(z: &[Point2], i: usize) -> f64 {
    let n = z.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for j in 0..n {
        if j == i {
            continue;
        }
        let a = z[i] - z[j];
        for k in (j + 1)..n {
            if k == i {
                continue;
            }
            s += inv_sq_circumdiameter_raw(a, z[i] - z[k]);
        }
    }
    let n1 = (n - 1) as f64;
    2.0 * s / (n1 * n1)
}

/// Player `i`'s state cost on the line.
pub fn state_cost_1d(config: &Config1D, i: usize, params: &GameParams) -> Result<f64> {
    check_index(i, config.len())?;
    let x = config.points();
    Ok(state_cost_1d_raw(x, i, params, pair_sums_1d_raw(x, i).h2))
}

/// State cost plus the quadratic control cost `control^2 / 2`.
pub fn running_cost_1d(
    config: &Config1D,
    i: usize,
    control: f64,
    params: &GameParams,
) -> Result<f64> {
    Ok(state_cost_1d(config, i, params)? + 0.5 * control * control)
}

/// Potential of the 1D game: `|x|^2/8 + (C2/2) sum_i h2_i / (N-1)`.
pub fn global_cost_1d(config: &Config1D, params: &GameParams) -> f64 {
    let x = config.points();
    let (_, h2) = all_h1_h2_1d(x);
    let n1 = (x.len() - 1) as f64;
    x.iter().map(|v| v * v).sum::<f64>() / 8.0 + 0.5 * params.c2 * h2.iter().sum::<f64>() / n1
}

/// Player `i`'s state cost in the plane.
pub fn state_cost_2d(config: &Config2D, i: usize, params: &GameParams) -> Result<f64> {
    check_index(i, config.len())?;
    let z = config.points();
    Ok(state_cost_2d_raw(z, i, params, pair_sums_2d_raw(z, i).h2))
}

/// Potential of the planar game, with the circumcircle sum weighted by `C1/3`.
pub fn global_cost_2d(config: &Config2D, params: &GameParams) -> f64 {
    let z = config.points();
    let (_, h2) = all_h1_h2_2d(z);
    let n1 = (z.len() - 1) as f64;
    let circ: f64 = if params.c1 == 0.0 {
        0.0
    } else {
        (0..z.len()).map(|i| circumcircle_sum(z, i)).sum()
    };
    z.iter().map(|p| p.norm_sq()).sum::<f64>() / 8.0
        + params.c1 * circ / 3.0
        + 0.5 * params.c2 * h2.iter().sum::<f64>() / n1
}

/// Ergodic constant of the equilibrium value functions.
pub fn ergodic_constants(params: &GameParams, model: Model) -> f64 {
    let n1 = (params.n_players - 1) as f64;
    let (b, s2) = (params.beta, params.sigma_sq());
    match model {
        Model::Closed1D => b / 4.0 + s2 / (4.0 * n1),
        Model::Open1D => b / 8.0 + s2 / (4.0 * n1),
        Model::Closed2D => b / 4.0 + s2 / (2.0 * n1),
        Model::Open2D => b / 8.0 + s2 / (2.0 * n1),
    }
}

/// Larger roots in `beta` of the closed- and open-loop coefficient relations;
/// `None` where the discriminant is negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaRoots {
    pub closed: Option<f64>,
    pub open: Option<f64>,
}

pub fn beta_roots(c2: f64, sigma: f64) -> Result<BetaRoots> {
    if !(sigma > 0.0) || !c2.is_finite() {
        return Err(Error::domain("beta_roots needs sigma > 0 and finite c2"));
    }
    let s4 = sigma.powi(4);
    let dc = s4 + 6.0 * c2;
    let dopen = s4 + 4.0 * c2;
    Ok(BetaRoots {
        closed: (dc >= 0.0).then(|| 2.0 / 3.0 * (sigma * sigma + dc.sqrt())),
        open: (dopen >= 0.0).then(|| sigma * sigma + dopen.sqrt()),
    })
}

fn open_beta(c2: f64, sigma: f64) -> Result<f64> {
    let beta = beta_roots(c2, sigma)?
        .open
        .ok_or_else(|| Error::domain(format!("no open-loop root for c2 = {c2}")))?;
    if !(beta > sigma * sigma) {
        return Err(Error::domain(format!(
            "open-loop root {beta} does not exceed sigma^2"
        )));
    }
    Ok(beta)
}

fn finite_n_correction(sigma: f64, n: Option<usize>) -> f64 {
    n.map_or(0.0, |n| sigma * sigma / (4.0 * (n as f64 - 1.0)))
}

/// Large-N average per-player cost of the open-loop equilibrium; `n = None`
/// drops the `sigma^2 / (4 (N - 1))` term.
pub fn avg_open_cost(c2: f64, sigma: f64, n: Option<usize>) -> Result<f64> {
    let beta = open_beta(c2, sigma)?;
    Ok(beta / 8.0 + finite_n_correction(sigma, n) + c2 / (4.0 * (beta - sigma * sigma)))
}

/// Mean-field approximation of the open-loop cost of a player sitting at
/// `x`, for the equilibrium at `beta_open(c2)`.
pub fn open_player_cost_proxy(c2: f64, sigma: f64, x: f64) -> Result<f64> {
    let beta = open_beta(c2, sigma)?;
    let mu = semicircle(beta)?;
    let m = mu.density(x);
    let s2 = sigma * sigma;
    let coeff = PI * PI * beta * beta * s2 / (24.0 * (beta - s2))
        + c2 * PI * PI * beta / (3.0 * (beta - s2));
    Ok(x * x / 8.0 + coeff * m * m)
}

/// Closed- versus open-loop comparison over a grid of singular-cost
/// coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopComparison {
    pub sigma: f64,
    pub n_players: Option<usize>,
    pub c2_grid: Vec<f64>,
    pub beta_closed: Vec<Option<f64>>,
    pub beta_open: Vec<Option<f64>>,
    pub beta_open_2c2: Vec<Option<f64>>,
    pub lambda_closed_avg: Vec<Option<f64>>,
    pub lambda_open_avg: Vec<Option<f64>>,
    pub semicircle_radii: Vec<(Option<f64>, Option<f64>)>,
    /// Coefficient used for the per-player cost and density panels.
    pub panel_c2: f64,
}

pub fn compare_loops(
    c2_grid: &[f64],
    sigma: f64,
    n: Option<usize>,
    panel_c2: f64,
) -> Result<LoopComparison> {
    if let Some(n) = n {
        if n < 2 {
            return Err(Error::InvalidConfig("n_players must be at least 2".into()));
        }
    }
    let mut out = LoopComparison {
        sigma,
        n_players: n,
        c2_grid: c2_grid.to_vec(),
        beta_closed: Vec::new(),
        beta_open: Vec::new(),
        beta_open_2c2: Vec::new(),
        lambda_closed_avg: Vec::new(),
        lambda_open_avg: Vec::new(),
        semicircle_radii: Vec::new(),
        panel_c2,
    };
    for &c2 in c2_grid {
        let r = beta_roots(c2, sigma)?;
        out.beta_closed.push(r.closed);
        out.beta_open.push(r.open);
        out.beta_open_2c2.push(beta_roots(2.0 * c2, sigma)?.open);
        out.lambda_closed_avg
            .push(r.closed.map(|b| b / 4.0 + finite_n_correction(sigma, n)));
        out.lambda_open_avg.push(avg_open_cost(c2, sigma, n).ok());
        let radius = |b: Option<f64>| b.filter(|b| *b > 0.0).map(|b| (2.0 * b).sqrt());
        out.semicircle_radii
            .push((radius(r.closed), radius(r.open)));
    }
    Ok(out)
}

fn opt(v: Option<f64>) -> String {
    v.map(format_f64).unwrap_or_default()
}

impl LoopComparison {
    /// Columns `c2,beta_closed,beta_open,beta_open_2c2,radius_closed,radius_open`.
    pub fn write_betas_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record([
            "c2",
            "beta_closed",
            "beta_open",
            "beta_open_2c2",
            "radius_closed",
            "radius_open",
        ])?;
        for k in 0..self.c2_grid.len() {
            wtr.write_record([
                format_f64(self.c2_grid[k]),
                opt(self.beta_closed[k]),
                opt(self.beta_open[k]),
                opt(self.beta_open_2c2[k]),
                opt(self.semicircle_radii[k].0),
                opt(self.semicircle_radii[k].1),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Columns `c2,lambda_closed_avg,lambda_open_avg`.
    pub fn write_avg_costs_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["c2", "lambda_closed_avg", "lambda_open_avg"])?;
        for k in 0..self.c2_grid.len() {
            wtr.write_record([
                format_f64(self.c2_grid[k]),
                opt(self.lambda_closed_avg[k]),
                opt(self.lambda_open_avg[k]),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Per-player costs at `panel_c2` against the quantile level `q`: columns
    /// `q,x_closed,cost_closed,x_open,cost_open`.
    pub fn write_player_costs_csv<W: Write>(&self, w: W, points: usize) -> Result<()> {
        let r = beta_roots(self.panel_c2, self.sigma)?;
        let bc = r
            .closed
            .filter(|b| *b > 0.0)
            .ok_or_else(|| Error::domain("closed root undefined at panel_c2"))?;
        let bo = open_beta(self.panel_c2, self.sigma)?;
        let (mc, mo) = (semicircle(bc)?, semicircle(bo)?);
        let closed_cost = bc / 4.0 + finite_n_correction(self.sigma, self.n_players);
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["q", "x_closed", "cost_closed", "x_open", "cost_open"])?;
        for k in 0..points {
            let q = (k as f64 + 0.5) / points as f64;
            let xo = mo.quantile(q)?;
            wtr.write_record([
                format_f64(q),
                format_f64(mc.quantile(q)?),
                format_f64(closed_cost),
                format_f64(xo),
                format_f64(open_player_cost_proxy(self.panel_c2, self.sigma, xo)?),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Equilibrium densities at `panel_c2`: columns `loop,x,density`.
    pub fn write_densities_csv<W: Write>(&self, w: W, points: usize) -> Result<()> {
        let r = beta_roots(self.panel_c2, self.sigma)?;
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["loop", "x", "density"])?;
        for (name, beta) in [("closed", r.closed), ("open", r.open)] {
            let beta = beta
                .filter(|b| *b > 0.0)
                .ok_or_else(|| Error::domain(format!("{name} root undefined")))?;
            for (x, m) in semicircle(beta)?.density_table(points) {
                wtr.write_record([name.to_string(), format_f64(x), format_f64(m)])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Running cost of player `i`, named `player_cost`.
pub fn player_integrand_1d<'a>(params: &'a GameParams, i: usize) -> Integrand<'a, f64> {
    Integrand::new("player_cost", move |x: &[f64], drift: &[f64]| {
        let h2 = pair_sums_1d_raw(x, i).h2;
        state_cost_1d_raw(x, i, params, h2) + 0.5 * drift[i] * drift[i]
    })
}

pub fn player_integrand_2d<'a>(params: &'a GameParams, i: usize) -> Integrand<'a, Point2> {
    Integrand::new("player_cost", move |z: &[Point2], drift: &[Point2]| {
        let h2 = pair_sums_2d_raw(z, i).h2;
        state_cost_2d_raw(z, i, params, h2) + 0.5 * drift[i].norm_sq()
    })
}

/// Potential running cost per player, `(F^N + |drift|^2 / 2) / N`, named
/// `global_cost`.
pub fn global_integrand_1d(params: &GameParams) -> Integrand<'_, f64> {
    let n = params.n_players as f64;
    Integrand::new("global_cost", move |x: &[f64], d: &[f64]| {
        let c = Config1D::new_unchecked(x.to_vec());
        (global_cost_1d(&c, params) + 0.5 * d.iter().map(|v| v * v).sum::<f64>()) / n
    })
}

pub fn global_integrand_2d(params: &GameParams) -> Integrand<'_, Point2> {
    let n = params.n_players as f64;
    Integrand::new("global_cost", move |z: &[Point2], d: &[Point2]| {
        let c = Config2D::new_unchecked(z.to_vec());
        (global_cost_2d(&c, params) + 0.5 * d.iter().map(|v| v.norm_sq()).sum::<f64>()) / n
    })
}

/// Noise amplitude `sigma / sqrt(N - 1)` of every particle.
pub fn amplitude(params: &GameParams) -> f64 {
    params.sigma / ((params.n_players - 1) as f64).sqrt()
}

/// Time-averaged running cost of player `i` along the equilibrium dynamics,
/// started from equilibrium quantiles (line) or a disc layout (plane).
pub fn mc_player_cost(
    params: &GameParams,
    model: Model,
    sde: &SdeConfig,
    i: usize,
) -> Result<ErgodicEstimate> {
    params.validate()?;
    check_index(i, params.n_players)?;
    if model.is_planar() {
        let init = disc_start_2d(params)?;
        let fb = CoulombFeedback::new(params);
        let ig = [player_integrand_2d(params, i)];
        let t = simulate_with(init.into_points(), &fb, amplitude(params), sde, &ig)?;
        ergodic_average(&t, "player_cost")
    } else {
        let init = quantile_start_1d(params)?;
        let fb = DysonFeedback::new(params);
        let ig = [player_integrand_1d(params, i)];
        let t = simulate_with(init.into_points(), &fb, amplitude(params), sde, &ig)?;
        ergodic_average(&t, "player_cost")
    }
}

/// Time-averaged potential cost per player, `(F^N + |drift|^2 / 2) / N`.
pub fn mc_global_cost(
    params: &GameParams,
    model: Model,
    sde: &SdeConfig,
) -> Result<ErgodicEstimate> {
    params.validate()?;
    if model.is_planar() {
        let init = disc_start_2d(params)?;
        let fb = CoulombFeedback::new(params);
        let ig = [global_integrand_2d(params)];
        let t = simulate_with(init.into_points(), &fb, amplitude(params), sde, &ig)?;
        ergodic_average(&t, "global_cost")
    } else {
        let init = quantile_start_1d(params)?;
        let fb = DysonFeedback::new(params);
        let ig = [global_integrand_1d(params)];
        let t = simulate_with(init.into_points(), &fb, amplitude(params), sde, &ig)?;
        ergodic_average(&t, "global_cost")
    }
}

/// Paired estimate of player `i`'s cost change when it switches from the
/// equilibrium feedback to a perturbed one, all others unchanged. Both runs
/// share the same noise.
pub fn deviation_experiment(
    params: &GameParams,
    model: Model,
    sde: &SdeConfig,
    i: usize,
    perturbation: Perturbation,
) -> Result<ErgodicEstimate> {
    params.validate()?;
    check_index(i, params.n_players)?;
    if model.is_planar() {
        return Err(Error::domain(
            "deviation experiments are implemented on the line only",
        ));
    }
    let init = quantile_start_1d(params)?.into_points();
    let base = DysonFeedback::new(params);
    let dev = DeviatingFeedback {
        base: base.clone(),
        player: i,
        perturbation,
    };
    let ig = [player_integrand_1d(params, i)];
    let eq = simulate_with(init.clone(), &base, amplitude(params), sde, &ig)?;
    let alt = simulate_with(init, &dev, amplitude(params), sde, &ig)?;
    paired_difference(&eq, &alt, "player_cost")
}

/// Zero-based bulk index used for planar single-player statistics: the
/// player whose predicted location sits at half the support radius.
pub fn bulk_index_2d(n: usize) -> usize {
    n.div_ceil(4).saturating_sub(1)
}

/// Gap between the costs with coefficient `C2` and the closed-loop
/// coefficient `3 beta^2 / 8`, estimated from ensemble samples at the bulk
/// index.
pub fn epsilon_nash_2d(params: &GameParams, samples: &[Config2D]) -> Result<f64> {
    let threshold = 3.0 * params.beta * params.beta / 8.0;
    if params.c2 < threshold {
        return Err(Error::domain(format!(
            "epsilon-Nash bound needs c2 >= {threshold}, got {}",
            params.c2
        )));
    }
    if samples.is_empty() {
        return Err(Error::domain("no samples"));
    }
    let mut s = 0.0;
    for c in samples {
        let z = c.points();
        let i = bulk_index_2d(z.len());
        s += pair_sums_2d_raw(z, i).h2 / (z.len() - 1) as f64;
    }
    Ok((params.c2 - threshold) * s / samples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cfg(v: &[f64]) -> Config1D {
        Config1D::new(v.to_vec()).unwrap()
    }

    #[test]
    fn state_cost_examples() {
        let c = cfg(&[-1.0, 0.0, 1.0]);
        let p = GameParams::new(3, 2.0, 1.0).unwrap();
        assert_eq!(state_cost_1d(&c, 1, &p).unwrap(), 0.0);
        // C2 / (N-1)^2 * (1 + 1)
        let p = p.with_costs(0.0, 0.5);
        assert_relative_eq!(
            state_cost_1d(&c, 1, &p).unwrap(),
            0.25,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            running_cost_1d(&c, 1, 2.0, &p).unwrap(),
            2.25,
            max_relative = 1e-15
        );
        assert!(matches!(state_cost_1d(&c, 3, &p), Err(Error::Index { .. })));
    }

    #[test]
    fn planar_cost_examples() {
        let p = GameParams::new(3, 2.0, 1.0).unwrap().with_costs(0.5, 0.0);
        let c = Config2D::new(vec![
            Point2::ZERO,
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
        ])
        .unwrap();
        assert_relative_eq!(
            state_cost_2d(&c, 0, &p).unwrap(),
            0.25,
            max_relative = 1e-14
        );
        let line = Config2D::new(
            (0..5)
                .map(|k| Point2::new(k as f64, 2.0 * k as f64))
                .collect(),
        )
        .unwrap();
        for i in 0..5 {
            assert_eq!(circumcircle_sum(line.points(), i), 0.0);
        }
    }

    /// Direct double loop over ordered pairs.
    fn circ_oracle(z: &[Point2], i: usize) -> f64 {
        let n1 = (z.len() - 1) as f64;
        let mut s = 0.0;
        for j in 0..z.len() {
            for k in 0..z.len() {
                if j != i && k != i && k != j {
                    let (a, b) = (z[i] - z[j], z[i] - z[k]);
                    // 1/D^2 = sin^2(angle) / |a - b|^2
                    let sin = a.cross(b) / (a.norm() * b.norm());
                    s += 2.0 * sin * sin / (a - b).norm_sq();
                }
            }
        }
        s / (n1 * n1)
    }

    #[test]
    fn ergodic_constant_values() {
        let p = GameParams::new(5, 2.0, 1.0).unwrap();
        assert_relative_eq!(
            ergodic_constants(&p, Model::Closed1D),
            0.5625,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            ergodic_constants(&p, Model::Closed2D),
            0.625,
            max_relative = 1e-15
        );
        let big = GameParams::new(1_000_000_001, 2.0, 1.0).unwrap();
        assert!((ergodic_constants(&big, Model::Open1D) - 0.25).abs() < 1e-9);
    }

    #[test]
    fn roots() {
        let r = beta_roots(0.0, 1.0).unwrap();
        assert_relative_eq!(r.closed.unwrap(), 4.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(r.open.unwrap(), 2.0, max_relative = 1e-15);
        let b = r.closed.unwrap();
        assert!((b * (1.5 * b - 2.0) / 4.0).abs() < 1e-15);
        // quadratic-formula oracle for b^2 - 2 b - 4 = 0
        let open = beta_roots(1.0, 1.0).unwrap().open.unwrap();
        assert_relative_eq!(
            open,
            (2.0 + (4.0f64 + 16.0).sqrt()) / 2.0,
            max_relative = 1e-15
        );
        assert_relative_eq!(open, 3.236_067_977_499_79, max_relative = 1e-15);
        let neg = beta_roots(-0.2, 1.0).unwrap();
        assert!(neg.closed.is_none() && neg.open.is_some());
        assert!(beta_roots(-0.3, 1.0).unwrap().open.is_none());
    }

    #[test]
    fn average_open_cost() {
        let v = avg_open_cost(0.0, 1.0, Some(11)).unwrap();
        assert_relative_eq!(v, 0.25 + 1.0 / 40.0, max_relative = 1e-15);
        assert!(avg_open_cost(0.0, 1.0, Some(1000)).unwrap() < 1.0 / 3.0);
        assert!(avg_open_cost(-0.25, 1.0, None).is_err());
    }

    #[test]
    fn proxy_averages_to_mean_cost() {
        for c2 in [-0.1, 0.0, 0.4, 1.0] {
            let beta = beta_roots(c2, 1.0).unwrap().open.unwrap();
            let mu = semicircle(beta).unwrap();
            let avg = mu.integrate_with(|x| open_player_cost_proxy(c2, 1.0, x).unwrap(), 200);
            assert_relative_eq!(
                avg,
                avg_open_cost(c2, 1.0, None).unwrap(),
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn loop_comparison() {
        let grid: Vec<f64> = (0..=22).map(|k| -0.1 + 0.05 * k as f64).collect();
        let lc = compare_loops(&grid, 1.0, None, 0.0).unwrap();
        let k0 = grid.iter().position(|c| c.abs() < 1e-12).unwrap();
        assert_relative_eq!(
            lc.semicircle_radii[k0].0.unwrap(),
            (8.0f64 / 3.0).sqrt(),
            max_relative = 1e-15
        );
        assert_relative_eq!(
            lc.semicircle_radii[k0].1.unwrap(),
            2.0,
            max_relative = 1e-15
        );
        for k in 0..grid.len() {
            let (bc, bo) = (lc.beta_closed[k].unwrap(), lc.beta_open[k].unwrap());
            assert!(bo > bc);
            assert!(lc.lambda_open_avg[k].unwrap() < bc / 4.0);
        }
        let mut buf = Vec::new();
        lc.write_player_costs_csv(&mut buf, 20).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 21);
        assert!(text.starts_with("q,x_closed,cost_closed,x_open,cost_open"));
    }

    #[test]
    fn epsilon_bound() {
        let p = GameParams::closed_loop_2d(4, 2.0, 1.0).unwrap();
        let c = Config2D::new(vec![
            Point2::new(0.1, 0.0),
            Point2::new(-0.5, 0.4),
            Point2::new(0.7, 0.7),
            Point2::new(0.2, -0.9),
        ])
        .unwrap();
        assert_eq!(epsilon_nash_2d(&p, std::slice::from_ref(&c)).unwrap(), 0.0);
        let a = epsilon_nash_2d(&p.clone().with_costs(0.5, 2.0), std::slice::from_ref(&c)).unwrap();
        let b = epsilon_nash_2d(&p.clone().with_costs(0.5, 2.5), std::slice::from_ref(&c)).unwrap();
        assert_relative_eq!(b, 2.0 * a, max_relative = 1e-14);
        assert!(epsilon_nash_2d(&p.with_costs(0.5, 1.0), &[c]).is_err());
    }

    #[test]
    fn zero_noise_cost_at_fixed_point() {
        // the pair (-1, 1) is stationary at beta = 2 without noise; its cost
        // with the closed-loop coefficient is 1/8 + C2 / 4 with C2 -> 3/2
        let p = GameParams::closed_loop_1d(2, 2.0, 1e-6).unwrap();
        let c = cfg(&[-1.0, 1.0]);
        let cost = running_cost_1d(&c, 1, 0.0, &p).unwrap();
        assert_relative_eq!(cost, 1.0 / 8.0 + p.c2 / 4.0, max_relative = 1e-14);
        assert!((cost - 0.5).abs() < 1e-9);
    }

    #[test]
    fn zero_perturbation_is_exact() {
        let p = GameParams::closed_loop_1d(5, 2.0, 1.0).unwrap();
        let sde = SdeConfig::new(1e-3, 0.2, 2.0, 4);
        for pert in [
            Perturbation::Additive(0.0),
            Perturbation::Scale(1.0),
            Perturbation::BetaShift(0.0),
        ] {
            let d = deviation_experiment(&p, Model::Closed1D, &sde, 2, pert).unwrap();
            assert_eq!(d.mean, 0.0);
            assert_eq!(d.std_error, 0.0);
        }
    }

    fn arb_config(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-3.0f64..3.0, n).prop_filter_map("distinct", |mut v| {
            v.sort_by(f64::total_cmp);
            (crate::config::min_gap_sorted(&v) > 1e-3).then_some(v)
        })
    }

    fn arb_points(n: usize) -> impl Strategy<Value = Vec<Point2>> {
        prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), n).prop_filter_map("distinct", |v| {
            let p: Vec<Point2> = v.into_iter().map(|(x, y)| Point2::new(x, y)).collect();
            (crate::config::min_distance(&p) > 1e-2).then_some(p)
        })
    }

    proptest! {
        #[test]
        fn potential_game_1d(x in arb_config(7), i in 0usize..7, step in -0.5f64..0.5, c2 in -1.0f64..2.0) {
            let p = GameParams::new(7, 2.0, 1.0).unwrap().with_costs(0.0, c2);
            let mut y = x.clone();
            y[i] += step * 1e-2;
            prop_assume!(y.windows(2).all(|w| w[0] < w[1]));
            let (a, b) = (Config1D::new(x).unwrap(), Config1D::new(y).unwrap());
            let dg = global_cost_1d(&b, &p) - global_cost_1d(&a, &p);
            let di = state_cost_1d(&b, i, &p).unwrap() - state_cost_1d(&a, i, &p).unwrap();
            let scale = global_cost_1d(&a, &p).abs().max(1.0);
            prop_assert!((dg - di).abs() <= 1e-12 * scale, "{dg} {di}");
        }

        #[test]
        fn potential_game_2d(z in arb_points(6), i in 0usize..6, dx in -0.5f64..0.5, dy in -0.5f64..0.5, c in 0.1f64..2.0) {
            let p = GameParams::new(6, 2.0, 1.0).unwrap().with_costs(c, 2.0 * c);
            let mut w = z.clone();
            w[i] += Point2::new(dx, dy) * 1e-2;
            prop_assume!(crate::config::min_distance(&w) > 1e-3);
            let (a, b) = (Config2D::new(z).unwrap(), Config2D::new(w).unwrap());
            let dg = global_cost_2d(&b, &p) - global_cost_2d(&a, &p);
            let di = state_cost_2d(&b, i, &p).unwrap() - state_cost_2d(&a, i, &p).unwrap();
            let scale = global_cost_2d(&a, &p).abs().max(1.0);
            prop_assert!((dg - di).abs() <= 1e-12 * scale, "{dg} {di}");
        }

        #[test]
        fn circumcircle_matches_loop(z in arb_points(7), i in 0usize..7) {
            let a = circumcircle_sum(&z, i);
            prop_assert!((a - circ_oracle(&z, i)).abs() <= 1e-12 * a.max(1.0));
        }

        #[test]
        fn roots_solve_quadratics(c2 in -0.16f64..5.0, sigma in 0.5f64..2.0) {
            let s2 = sigma * sigma;
            prop_assume!(c2 > -s2 * s2 / 6.0);
            let r = beta_roots(c2, sigma).unwrap();
            let (bc, bo) = (r.closed.unwrap(), r.open.unwrap());
            let scale = c2.abs().max(1.0) * s2.max(1.0);
            prop_assert!((bc * (1.5 * bc - 2.0 * s2) / 4.0 - c2).abs() <= 1e-12 * scale);
            prop_assert!((bo * (bo - 2.0 * s2) / 4.0 - c2).abs() <= 1e-12 * scale);
            prop_assert!(bo > bc);
        }
    }
}
