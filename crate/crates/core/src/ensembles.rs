//! Metropolis-adjusted Langevin samplers for the invariant log-gas ensembles
//! on the line and in the plane.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{min_gap_sorted, Config1D, Config2D, GameParams};
use crate::equilibrium::equilibrium_measure;
use crate::error::{Error, Result};
use crate::point::{Coord, Point2};
use crate::rng::{replica_seed, stream};

/// Proposals per window of the acceptance-collapse check.
pub const COLLAPSE_WINDOW: u64 = 10_000;
/// Minimum acceptance rate over a collapse window.
pub const COLLAPSE_RATE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub step_size: f64,
    pub n_burn: usize,
    pub n_keep: usize,
    #[serde(default = "default_thin")]
    pub thin: usize,
    pub seed: u64,
    #[serde(default = "default_target")]
    pub target_acceptance: f64,
}

fn default_thin() -> usize {
    1
}

fn default_target() -> f64 {
    0.57
}

impl ChainConfig {
    pub fn new(step_size: f64, n_burn: usize, n_keep: usize, thin: usize, seed: u64) -> Self {
        ChainConfig {
            step_size,
            n_burn,
            n_keep,
            thin,
            seed,
            target_acceptance: default_target(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "step_size must be positive, got {}",
                self.step_size
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidConfig("thin must be at least 1".into()));
        }
        if self.n_keep == 0 {
            return Err(Error::InvalidConfig("n_keep must be at least 1".into()));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::InvalidConfig(
                "target_acceptance must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// A starting step size of the order of the local particle spacing.
pub fn default_step_size(params: &GameParams) -> f64 {
    2.0 * params.sigma / (params.n_players as f64).powf(7.0 / 6.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    /// Acceptance rate after burn-in.
    pub acceptance_rate: f64,
    /// Integrated autocorrelation time of the log-density along kept samples.
    pub iact_estimate: f64,
    pub ess: f64,
    /// Step size frozen at the end of burn-in.
    pub step_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput<C> {
    pub samples: Vec<C>,
    pub diag: ChainDiagnostics,
}

/// Sum of `ln(f(k))` over `k` evaluated through chunked products.
#[inline]
fn sum_ln(mut terms: impl Iterator<Item = f64>) -> f64 {
    let mut total = 0.0;
    loop {
        let mut prod = 1.0;
        let mut any = false;
        for _ in 0..8 {
            match terms.next() {
                Some(t) => {
                    prod *= t;
                    any = true;
                }
                None => break,
            }
        }
        if !any {
            return total;
        }
        total += prod.ln();
    }
}

/// `(beta / sigma^2) sum_{k<l} ln(x_l - x_k) - ((N - 1) / sigma^2) sum_i V(x_i)`.
pub fn log_density_1d(config: &Config1D, params: &GameParams) -> f64 {
    log_density_grad_1d(config.points(), params, None)
}

/// Planar analogue of [`log_density_1d`] with `ln |z_k - z_l|`.
pub fn log_density_2d(config: &Config2D, params: &GameParams) -> f64 {
    log_density_grad_2d(config.points(), params, None)
}

fn log_density_grad_1d(x: &[f64], params: &GameParams, grad: Option<&mut [f64]>) -> f64 {
    let n = x.len();
    let s2 = params.sigma_sq();
    let n1 = (n - 1) as f64;
    let mut lg = 0.0;
    for l in 1..n {
        lg += sum_ln((0..l).map(|k| x[l] - x[k]));
    }
    let pot: f64 = x.iter().map(|&v| params.potential.value(v)).sum();
    if let Some(g) = grad {
        for i in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                if k != i {
                    s += 1.0 / (x[i] - x[k]);
                }
            }
            g[i] = (params.beta * s - n1 * params.potential.grad(x[i])) / s2;
        }
    }
    (params.beta * lg - n1 * pot) / s2
}

fn log_density_grad_2d(z: &[Point2], params: &GameParams, grad: Option<&mut [Point2]>) -> f64 {
    let n = z.len();
    let s2 = params.sigma_sq();
    let n1 = (n - 1) as f64;
    let mut lg = 0.0;
    for l in 1..n {
        lg += 0.5 * sum_ln((0..l).map(|k| (z[l] - z[k]).norm_sq()));
    }
    let pot: f64 = z.iter().map(|&v| params.potential.value_2d(v)).sum();
    if let Some(g) = grad {
        for i in 0..n {
            let mut s = Point2::ZERO;
            for k in 0..n {
                if k != i {
                    let d = z[i] - z[k];
                    s += d / d.norm_sq();
                }
            }
            g[i] = (s * params.beta - params.potential.grad_2d(z[i]) * n1) / s2;
        }
    }
    (params.beta * lg - n1 * pot) / s2
}

trait Target<P>: Sync {
    fn eval(&self, x: &[P], grad: &mut [P]) -> f64;
    fn admissible(&self, x: &[P]) -> bool;
}

struct Line<'a>(&'a GameParams);
struct Plane<'a>(&'a GameParams);

impl Target<f64> for Line<'_> {
    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        log_density_grad_1d(x, self.0, Some(grad))
    }

    fn admissible(&self, x: &[f64]) -> bool {
        x.iter().all(|v| v.is_finite()) && min_gap_sorted(x) > 0.0
    }
}

impl Target<Point2> for Plane<'_> {
    fn eval(&self, z: &[Point2], grad: &mut [Point2]) -> f64 {
        log_density_grad_2d(z, self.0, Some(grad))
    }

    fn admissible(&self, z: &[Point2]) -> bool {
        z.iter().all(|p| p.is_finite())
    }
}

fn mala<P: Coord, T: Target<P>>(
    target: &T,
    init: Vec<P>,
    chain: &ChainConfig,
) -> Result<(Vec<Vec<P>>, ChainDiagnostics)> {
    chain.validate()?;
    let n = init.len();
    let mut rng = stream(chain.seed, &[0x4D41_4C41]);
    let mut x = init;
    let mut gx = vec![P::zero(); n];
    let mut lx = target.eval(&x, &mut gx);
    if !lx.is_finite() {
        return Err(Error::Sampler("initial state has zero density".into()));
    }
    let mut y = vec![P::zero(); n];
    let mut gy = vec![P::zero(); n];
    let mut xi = vec![0.0; P::DIM];
    let mut log_eps = chain.step_size.ln();

    let total = chain.n_burn + chain.n_keep * chain.thin;
    let mut samples = Vec::with_capacity(chain.n_keep);
    let mut energies = Vec::with_capacity(chain.n_keep);
    let (mut accepted, mut proposed) = (0u64, 0u64);
    let (mut win_acc, mut win_len) = (0u64, 0u64);

    for t in 0..total {
        let eps = log_eps.exp();
        let h = 0.5 * eps * eps;
        for k in 0..n {
            for v in xi.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            y[k] = x[k] + gx[k] * h + P::from_slice(&xi) * eps;
        }
        let mut alpha = 0.0;
        if target.admissible(&y) {
            let ly = target.eval(&y, &mut gy);
            if ly.is_finite() {
                let mut fwd = 0.0;
                let mut bwd = 0.0;
                for k in 0..n {
                    fwd += (y[k] - x[k] - gx[k] * h).norm_sq();
                    bwd += (x[k] - y[k] - gy[k] * h).norm_sq();
                }
                let log_ratio = ly - lx + (fwd - bwd) / (2.0 * eps * eps);
                alpha = log_ratio.min(0.0).exp();
            }
        }
        let u: f64 = rng.random();
        let accept = u < alpha;
        if accept {
            std::mem::swap(&mut x, &mut y);
            std::mem::swap(&mut gx, &mut gy);
            lx = target.eval(&x, &mut gx);
        }
        if t < chain.n_burn {
            let rate = 1.0 / (t as f64 + 10.0).powf(0.6);
            log_eps += rate * (alpha - chain.target_acceptance);
        } else {
            proposed += 1;
            win_len += 1;
            if accept {
                accepted += 1;
                win_acc += 1;
            }
            if win_len == COLLAPSE_WINDOW {
                if (win_acc as f64) < COLLAPSE_RATE * COLLAPSE_WINDOW as f64 {
                    return Err(Error::Sampler(format!(
                        "acceptance collapsed to {:.4} over {COLLAPSE_WINDOW} proposals",
                        win_acc as f64 / COLLAPSE_WINDOW as f64
                    )));
                }
                win_acc = 0;
                win_len = 0;
            }
            if (t - chain.n_burn + 1) % chain.thin == 0 {
                samples.push(x.clone());
                energies.push(lx);
            }
        }
    }
    let iact = iact(&energies);
    let diag = ChainDiagnostics {
        acceptance_rate: accepted as f64 / proposed.max(1) as f64,
        iact_estimate: iact,
        ess: samples.len() as f64 / iact,
        step_size: log_eps.exp(),
    };
    Ok((samples, diag))
}

/// Integrated autocorrelation time by Geyer's initial positive sequence,
/// clamped below at 1.
pub fn iact(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 4 {
        return 1.0;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let c0 = c.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        return 1.0;
    }
    let acf = |k: usize| {
        c[..n - k]
            .iter()
            .zip(&c[k..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / (n as f64 * c0)
    };
    let mut tau = -1.0;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair = acf(2 * m) + acf(2 * m + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        m += 1;
    }
    tau.max(1.0)
}

/// Equilibrium quantiles `gamma^{(k + 1/2) / N}` as a starting state.
pub fn quantile_start_1d(params: &GameParams) -> Result<Config1D> {
    let mu = equilibrium_measure(&params.potential, params.beta)?;
    let n = params.n_players;
    let pts = (0..n)
        .map(|k| mu.quantile((k as f64 + 0.5) / n as f64))
        .collect::<Result<Vec<_>>>()?;
    Config1D::new(pts)
}

/// Scale mapping the circular law of the ensemble onto the unit disc.
pub fn planar_scale(params: &GameParams) -> f64 {
    let n = params.n_players as f64;
    (params.beta * n / (n - 1.0)).sqrt()
}

/// Predicted location of the `k`-th point (one-based) of the spiral-ordered
/// Ginibre ensemble of size `n`, in the unit-disc frame.
pub fn ginibre_predicted_location(k: usize, n: usize) -> Result<Point2> {
    let root = (n as f64).sqrt().floor() as usize;
    if k == 0 || k > root * root {
        return Err(Error::domain(format!(
            "index {k} outside the covered range 1..={}",
            root * root
        )));
    }
    let s = (k as f64).sqrt().ceil() as usize;
    let radius = (s - 1) as f64 / (n as f64).sqrt();
    let angle = TAU * (k - (s - 1) * (s - 1)) as f64 / (2 * s - 1) as f64;
    Ok(Point2::from_polar(radius, angle))
}

/// Unit-disc layout: Ginibre predicted locations where defined, a Fibonacci
/// spiral beyond.
pub fn unit_disc_layout(n: usize) -> Vec<Point2> {
    let golden = TAU * (1.0 - 1.0 / 1.618_033_988_749_895);
    (1..=n)
        .map(|k| {
            ginibre_predicted_location(k, n).unwrap_or_else(|_| {
                Point2::from_polar(((k as f64 - 0.5) / n as f64).sqrt(), golden * k as f64)
            })
        })
        .collect()
}

/// Starting state in the plane: the unit-disc layout scaled to the ensemble.
pub fn disc_start_2d(params: &GameParams) -> Result<Config2D> {
    let scale = planar_scale(params);
    let pts = unit_disc_layout(params.n_players)
        .into_iter()
        .map(|p| p * scale)
        .collect();
    Config2D::spiral_sorted(pts, scale)
}

pub fn mala_chain_1d(params: &GameParams, chain: &ChainConfig) -> Result<ChainOutput<Config1D>> {
    params.validate()?;
    let init = quantile_start_1d(params)?.into_points();
    let (samples, diag) = mala(&Line(params), init, chain)?;
    Ok(ChainOutput {
        samples: samples.into_iter().map(Config1D::new_unchecked).collect(),
        diag,
    })
}

/// Planar chain; every kept sample is spiral-sorted in the unit-disc frame.
pub fn mala_chain_2d(params: &GameParams, chain: &ChainConfig) -> Result<ChainOutput<Config2D>> {
    params.validate()?;
    let init = disc_start_2d(params)?.into_points();
    let (samples, diag) = mala(&Plane(params), init, chain)?;
    let scale = planar_scale(params);
    let samples = samples
        .into_iter()
        .map(|z| Config2D::spiral_sorted(z, scale))
        .collect::<Result<Vec<_>>>()?;
    Ok(ChainOutput { samples, diag })
}

/// Independent chains with seeds derived from `chain.seed`, run in parallel.
pub fn run_chains_1d(
    params: &GameParams,
    chain: &ChainConfig,
    n_chains: usize,
) -> Result<Vec<ChainOutput<Config1D>>> {
    (0..n_chains as u64)
        .into_par_iter()
        .map(|r| {
            mala_chain_1d(
                params,
                &ChainConfig {
                    seed: replica_seed(chain.seed, r),
                    ..chain.clone()
                },
            )
        })
        .collect()
}

pub fn run_chains_2d(
    params: &GameParams,
    chain: &ChainConfig,
    n_chains: usize,
) -> Result<Vec<ChainOutput<Config2D>>> {
    (0..n_chains as u64)
        .into_par_iter()
        .map(|r| {
            mala_chain_2d(
                params,
                &ChainConfig {
                    seed: replica_seed(chain.seed, r),
                    ..chain.clone()
                },
            )
        })
        .collect()
}

/// Kept samples as CSV rows `(sample, particle, x)`.
pub fn write_samples_1d_csv<W: std::io::Write>(samples: &[Config1D], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["sample", "particle", "x"])?;
    for (s, c) in samples.iter().enumerate() {
        for (k, x) in c.points().iter().enumerate() {
            wtr.write_record([s.to_string(), k.to_string(), crate::config::format_f64(*x)])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Kept samples as CSV rows `(sample, particle, x, y)`.
pub fn write_samples_2d_csv<W: std::io::Write>(samples: &[Config2D], w: W) -> Result<()> {
    use crate::config::format_f64;
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["sample", "particle", "x", "y"])?;
    for (s, c) in samples.iter().enumerate() {
        for (k, p) in c.points().iter().enumerate() {
            wtr.write_record([
                s.to_string(),
                k.to_string(),
                format_f64(p.x),
                format_f64(p.y),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}
