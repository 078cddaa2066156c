//! Ensemble statistics at a single index and convergence studies in `N`.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{format_f64, Config1D, Config2D, GameParams};
use crate::ensembles::{
    ginibre_predicted_location, iact, run_chains_1d, run_chains_2d, ChainConfig, ChainOutput,
};
use crate::equilibrium::{
    averaged_singular_stat, circular_law, equilibrium_measure, limit_singular_stat,
};
use crate::error::{Error, Result};
use crate::game::circumcircle_sum;
use crate::nash::nash_1d_terms;
use crate::point::Point2;
use crate::transforms::{check_index, pair_sums_1d_raw, pair_sums_2d_raw};

/// Sample mean with an autocorrelation-aware standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_samples: usize,
    /// Effective sample size used for the standard error.
    pub ess: f64,
}

impl Estimate {
    /// Mean and standard error of `values` with `ess = len / iact`.
    pub fn from_values(values: &[f64], iact: f64) -> Result<Self> {
        Estimate::from_chains(&[values.to_vec()], &[iact])
    }

    /// Pool several chains; each chain's effective size uses the larger of
    /// the supplied IACT and the IACT of its own series.
    pub fn from_chains(series: &[Vec<f64>], iacts: &[f64]) -> Result<Self> {
        let n: usize = series.iter().map(Vec::len).sum();
        if n == 0 {
            return Err(Error::domain("no samples"));
        }
        let first = series
            .iter()
            .find_map(|s| s.first().copied())
            .unwrap_or(0.0);
        let sum: f64 = series.iter().flatten().map(|v| v - first).sum();
        let shifted_mean = sum / n as f64;
        let var = if n > 1 {
            series
                .iter()
                .flatten()
                .map(|v| (v - first - shifted_mean).powi(2))
                .sum::<f64>()
                / (n - 1) as f64
        } else {
            f64::NAN
        };
        let ess: f64 = series
            .iter()
            .zip(iacts.iter().chain(std::iter::repeat(&1.0)))
            .filter(|(s, _)| !s.is_empty())
            .map(|(s, t)| s.len() as f64 / t.max(iact(s)).max(1.0))
            .sum();
        Ok(Estimate {
            mean: first + shifted_mean,
            std_error: (var / ess).sqrt(),
            n_samples: n,
            ess,
        })
    }
}

/// `h2_i / (N - 1)` on the line.
pub fn h2_stat_1d(config: &Config1D, i: usize) -> f64 {
    pair_sums_1d_raw(config.points(), i).h2 / (config.len() - 1) as f64
}

/// `h2_i / (N - 1)` in the plane.
pub fn h2_stat_2d(config: &Config2D, i: usize) -> f64 {
    pair_sums_2d_raw(config.points(), i).h2 / (config.len() - 1) as f64
}

fn check_all<C>(samples: &[C], i: usize, len: impl Fn(&C) -> usize) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::domain("no samples"));
    }
    samples.iter().try_for_each(|c| check_index(i, len(c)))
}

pub fn per_index_stat_1d(samples: &[Config1D], i: usize) -> Result<Estimate> {
    check_all(samples, i, Config1D::len)?;
    let v: Vec<f64> = samples.par_iter().map(|c| h2_stat_1d(c, i)).collect();
    Estimate::from_values(&v, 1.0)
}

/// Index average `(1/N) sum_i h2_i / (N - 1)`.
pub fn index_averaged_stat_1d(samples: &[Config1D]) -> Result<Estimate> {
    check_all(samples, 0, Config1D::len)?;
    let v: Vec<f64> = samples.par_iter().map(index_average_1d).collect();
    Estimate::from_values(&v, 1.0)
}

fn index_average_1d(c: &Config1D) -> f64 {
    let n = c.len();
    (0..n).map(|i| h2_stat_1d(c, i)).sum::<f64>() / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarStats {
    pub h2: Estimate,
    pub circ: Estimate,
}

/// Means of the inverse-squared-gap and circumcircle statistics at index `i`.
pub fn per_index_stat_2d(samples: &[Config2D], i: usize) -> Result<PlanarStats> {
    check_all(samples, i, Config2D::len)?;
    let v: Vec<(f64, f64)> = samples
        .par_iter()
        .map(|c| (h2_stat_2d(c, i), circumcircle_sum(c.points(), i)))
        .collect();
    let (h2, circ): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
    Ok(PlanarStats {
        h2: Estimate::from_values(&h2, 1.0)?,
        circ: Estimate::from_values(&circ, 1.0)?,
    })
}

/// Monte Carlo means of the three terms of player `i`'s Nash equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashTermStats {
    pub index: usize,
    /// `self` = `(d_i v_i)^2`, `interaction` = `sum_{k != i} d_k v_k d_k v_i`,
    /// `diffusion` = `-(sigma^2 / (2 (N-1))) Laplacian v_i`.
    pub terms: BTreeMap<String, Estimate>,
    /// Large-N limits at the quantile level of the index.
    pub limits: BTreeMap<String, f64>,
    /// Largest absolute Nash residual over the samples.
    pub max_residual: f64,
    /// Largest residual relative to the largest term, over the samples.
    pub max_relative_residual: f64,
}

/// Large-N limits of the three Nash terms at quantile level `q`; the mean-field
/// gradient vanishes on the support.
pub fn nash_term_limits_1d(params: &GameParams, q: f64) -> Result<BTreeMap<String, f64>> {
    let mu = equilibrium_measure(&params.potential, params.beta)?;
    let s2 = params.sigma_sq();
    let stat = limit_singular_stat(params.beta, params.sigma, &mu, q)?;
    let local = params.beta * s2 / 4.0 * stat;
    Ok(BTreeMap::from([
        ("self".to_string(), local),
        ("interaction".to_string(), local),
        ("diffusion".to_string(), -2.0 * local),
    ]))
}

pub fn nash_term_stats_1d(
    samples: &[Config1D],
    i: usize,
    params: &GameParams,
) -> Result<NashTermStats> {
    check_all(samples, i, Config1D::len)?;
    let n = samples[0].len();
    let rows: Vec<[f64; 5]> = samples
        .par_iter()
        .map(|c| {
            let x = c.points();
            let own = own_gradients(x, params.beta);
            let r = nash_1d_terms(x, i, params, &own);
            [
                2.0 * r.term("self"),
                r.term("interaction"),
                r.term("diffusion"),
                r.residual,
                r.relative,
            ]
        })
        .collect();
    let col = |k: usize| rows.iter().map(|r| r[k]).collect::<Vec<f64>>();
    let mut terms = BTreeMap::new();
    for (k, name) in ["self", "interaction", "diffusion"].into_iter().enumerate() {
        terms.insert(name.to_string(), Estimate::from_values(&col(k), 1.0)?);
    }
    let q = (i + 1) as f64 / n as f64;
    Ok(NashTermStats {
        index: i,
        terms,
        limits: nash_term_limits_1d(params, q)?,
        max_residual: rows.iter().map(|r| r[3].abs()).fold(0.0, f64::max),
        max_relative_residual: rows.iter().map(|r| r[4].abs()).fold(0.0, f64::max),
    })
}

fn own_gradients(x: &[f64], beta: f64) -> Vec<f64> {
    let n1 = (x.len() - 1) as f64;
    (0..x.len())
        .map(|k| {
            let h1: f64 = (0..x.len())
                .filter(|&j| j != k)
                .map(|j| 1.0 / (x[k] - x[j]))
                .sum::<f64>()
                / n1;
            x[k] / 2.0 - beta / 2.0 * h1
        })
        .collect()
}

/// How the tracked index depends on `N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IndexRule {
    /// One-based index `ceil(q N)` on the line.
    Fraction { q: f64 },
    /// Spiral-ordered planar index with `k / N -> q` and
    /// `ceil(sqrt k) - sqrt k -> theta`.
    Spiral { q: f64, theta: f64 },
}

/// Index chosen by a rule at a given `N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectedIndex {
    /// Zero-based index.
    pub index: usize,
    pub q: f64,
    /// Predicted location in the unit-disc frame (planar rules only).
    pub location: Option<Point2>,
}

impl IndexRule {
    pub fn describe(&self) -> String {
        match self {
            IndexRule::Fraction { q } => format!("i = ceil({q} N)"),
            IndexRule::Spiral { q, theta } => {
                format!("spiral index with k/N <= {q}, phase matching theta = {theta}")
            }
        }
    }

    pub fn select(&self, n: usize) -> Result<SelectedIndex> {
        match *self {
            IndexRule::Fraction { q } => {
                if !(0.0..=1.0).contains(&q) {
                    return Err(Error::domain(format!("q must lie in [0, 1], got {q}")));
                }
                let k = ((q * n as f64).ceil() as usize).clamp(1, n);
                Ok(SelectedIndex {
                    index: k - 1,
                    q: k as f64 / n as f64,
                    location: None,
                })
            }
            IndexRule::Spiral { q, theta } => {
                if !(0.0..1.0).contains(&q) || !(0.0..1.0).contains(&theta) {
                    return Err(Error::domain("spiral rule needs q, theta in [0, 1)"));
                }
                let k = spiral_index(q, theta, n);
                Ok(SelectedIndex {
                    index: k - 1,
                    q: k as f64 / n as f64,
                    location: Some(ginibre_predicted_location(k, n)?),
                })
            }
        }
    }

    /// Limit point of the selected locations in the unit-disc frame:
    /// radius `sqrt q`, argument `-2 pi theta`.
    pub fn limit_location(&self) -> Option<Point2> {
        match *self {
            IndexRule::Fraction { .. } => None,
            IndexRule::Spiral { q, theta } => Some(Point2::from_polar(q.sqrt(), -TAU * theta)),
        }
    }
}

/// Largest one-based `k <= max(q N, 1)` inside the covered range whose phase
/// `(k - (s-1)^2) / (2s - 1)` is closest to `1 - theta` within its shell `s`.
fn spiral_index(q: f64, theta: f64, n: usize) -> usize {
    let root = (n as f64).sqrt().floor() as usize;
    let cap = ((q * n as f64).floor() as usize).clamp(1, root * root);
    let mut s = (cap as f64).sqrt().ceil() as usize;
    while s > 1 {
        let width = 2 * s - 1;
        let j = (((1.0 - theta) * width as f64).round() as usize).clamp(1, width);
        let k = (s - 1) * (s - 1) + j;
        if k <= cap {
            return k;
        }
        s -= 1;
    }
    1
}

/// Statistics available to [`convergence_study`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// `h2_i / (N - 1)` on the line.
    H2,
    /// Index average of `h2_i / (N - 1)` on the line.
    H2Average,
    /// `h2_i / (N - 1)` in the plane.
    H2Planar,
    /// Circumcircle double sum in the plane.
    Circumcircle,
    /// The constant 1 (pipeline check).
    Constant,
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "h2" => Ok(Estimator::H2),
            "h2_avg" => Ok(Estimator::H2Average),
            "h2_2d" => Ok(Estimator::H2Planar),
            "circ_2d" => Ok(Estimator::Circumcircle),
            "const" => Ok(Estimator::Constant),
            other => Err(Error::UnknownName(other.to_string())),
        }
    }
}

impl Estimator {
    pub fn is_planar(self) -> bool {
        matches!(self, Estimator::H2Planar | Estimator::Circumcircle)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub index: usize,
    pub q: f64,
    pub location: Option<Point2>,
    pub estimate: Estimate,
    /// Limit evaluated at this row's achieved location.
    pub limit: Option<f64>,
}

impl ConvergenceRow {
    pub fn gap(&self) -> Option<f64> {
        self.limit.map(|l| self.estimate.mean - l)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub estimator: Estimator,
    pub n_values: Vec<usize>,
    pub rows: Vec<ConvergenceRow>,
    pub limit: Option<f64>,
    pub index_rule: String,
    /// Sampler failures, by `N`.
    pub failures: Vec<(usize, String)>,
}

impl ConvergenceTable {
    /// Columns `n,index,q,location_x,location_y,mean,se,limit,gap`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record([
            "n",
            "index",
            "q",
            "location_x",
            "location_y",
            "mean",
            "se",
            "limit",
            "gap",
        ])?;
        let opt = |v: Option<f64>| v.map(format_f64).unwrap_or_default();
        for r in &self.rows {
            wtr.write_record([
                r.n.to_string(),
                r.index.to_string(),
                format_f64(r.q),
                opt(r.location.map(|p| p.x)),
                opt(r.location.map(|p| p.y)),
                format_f64(r.estimate.mean),
                format_f64(r.estimate.std_error),
                opt(r.limit),
                opt(r.gap()),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }
}

fn pooled<C: Sync>(outs: &[ChainOutput<C>], f: impl Fn(&C) -> f64 + Sync) -> Result<Estimate> {
    let series: Vec<Vec<f64>> = outs
        .iter()
        .map(|o| o.samples.par_iter().map(&f).collect())
        .collect();
    let iacts: Vec<f64> = outs.iter().map(|o| o.diag.iact_estimate).collect();
    Estimate::from_chains(&series, &iacts)
}

fn limit_for(
    estimator: Estimator,
    params: &GameParams,
    sel: &SelectedIndex,
    rule: &IndexRule,
    at_limit: bool,
) -> Result<Option<f64>> {
    Ok(match estimator {
        Estimator::Constant => Some(1.0),
        Estimator::H2Planar => Some(0.0),
        Estimator::H2 => {
            let q = match rule {
                IndexRule::Fraction { q } if at_limit => *q,
                _ => sel.q,
            };
            let mu = equilibrium_measure(&params.potential, params.beta)?;
            Some(limit_singular_stat(params.beta, params.sigma, &mu, q)?)
        }
        Estimator::H2Average => {
            let mu = equilibrium_measure(&params.potential, params.beta)?;
            Some(averaged_singular_stat(params.beta, params.sigma, &mu)?)
        }
        Estimator::Circumcircle => {
            if !params.potential.is_quadratic() {
                return Ok(None);
            }
            let u = if at_limit {
                rule.limit_location()
            } else {
                sel.location
            };
            match u {
                Some(u) => {
                    Some(circular_law(params.beta)?.circumcircle_limit(u * params.beta.sqrt())?)
                }
                None => None,
            }
        }
    })
}

/// Run `n_chains` chains at each `N` (with the other parameters fixed),
/// evaluate the estimator at the index chosen by `rule` and tabulate the
/// result against its limit.
pub fn convergence_study(
    estimator: Estimator,
    n_values: &[usize],
    rule: IndexRule,
    params: &GameParams,
    chain: &ChainConfig,
    n_chains: usize,
) -> Result<ConvergenceTable> {
    if n_values.windows(2).any(|w| w[0] >= w[1]) || n_values.is_empty() {
        return Err(Error::InvalidConfig(
            "n_values must be non-empty and strictly increasing".into(),
        ));
    }
    if n_chains == 0 {
        return Err(Error::InvalidConfig("need at least one chain".into()));
    }
    if estimator.is_planar() != matches!(rule, IndexRule::Spiral { .. })
        && estimator != Estimator::Constant
    {
        return Err(Error::InvalidConfig(
            "planar estimators need a spiral rule and line estimators a fraction rule".into(),
        ));
    }
    let planar = matches!(rule, IndexRule::Spiral { .. });
    let results: Vec<std::result::Result<ConvergenceRow, (usize, String)>> = n_values
        .par_iter()
        .map(|&n| {
            let run = || -> Result<ConvergenceRow> {
                let p = GameParams {
                    n_players: n,
                    ..params.clone()
                };
                p.validate()?;
                let sel = rule.select(n)?;
                let i = sel.index;
                let estimate = if estimator == Estimator::Constant {
                    Estimate::from_values(&vec![1.0; chain.n_keep * n_chains], 1.0)?
                } else if planar {
                    let outs = run_chains_2d(&p, chain, n_chains)?;
                    match estimator {
                        Estimator::H2Planar => pooled(&outs, |c| h2_stat_2d(c, i))?,
                        _ => pooled(&outs, |c| circumcircle_sum(c.points(), i))?,
                    }
                } else {
                    let outs = run_chains_1d(&p, chain, n_chains)?;
                    match estimator {
                        Estimator::H2 => pooled(&outs, |c| h2_stat_1d(c, i))?,
                        _ => pooled(&outs, index_average_1d)?,
                    }
                };
                let limit = limit_for(estimator, &p, &sel, &rule, false)?;
                Ok(ConvergenceRow {
                    n,
                    index: i,
                    q: sel.q,
                    location: sel.location,
                    estimate,
                    limit,
                })
            };
            run().map_err(|e| (n, e.to_string()))
        })
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err(f) => failures.push(f),
        }
    }
    let sel = rule.select(*n_values.last().unwrap_or(&2))?;
    let limit = limit_for(estimator, params, &sel, &rule, true)
        .ok()
        .flatten();
    Ok(ConvergenceTable {
        estimator,
        n_values: n_values.to_vec(),
        rows,
        limit,
        index_rule: rule.describe(),
        failures,
    })
}
