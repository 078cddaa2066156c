//! Closed-form value functions and residuals of the Nash systems, the
//! open-loop HJB equations and the master equations.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::config::{Config1D, Config2D, GameParams};
use crate::equilibrium::{EquilibriumMeasure1D, EquilibriumMeasure2D};
use crate::error::{Error, Result};
use crate::game::{
    circumcircle_sum, ergodic_constants, global_cost_1d, global_cost_2d, state_cost_1d_raw,
    state_cost_2d_raw, Model,
};
use crate::point::Point2;
use crate::transforms::{
    all_h1_h2_1d, all_h1_h2_2d, check_index, circumcircle_three_term, inv_sq_circumdiameter_raw,
    pair_sums_1d_raw, pair_sums_2d_raw,
};

/// Value of player `i` and its derivatives in every coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueGrad1D {
    pub index: usize,
    pub value: f64,
    /// `d v_i / d x_k` for every `k`; entry `index` is the own derivative.
    pub gradient: Vec<f64>,
    pub laplacian: f64,
}

impl ValueGrad1D {
    pub fn self_grad(&self) -> f64 {
        self.gradient[self.index]
    }

    /// Derivative in an opponent's coordinate.
    pub fn cross_grad(&self, k: usize) -> f64 {
        debug_assert_ne!(k, self.index);
        self.gradient[k]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueGrad2D {
    pub index: usize,
    pub value: f64,
    pub gradient: Vec<Point2>,
    pub laplacian: f64,
}

impl ValueGrad2D {
    pub fn self_grad(&self) -> Point2 {
        self.gradient[self.index]
    }
}

/// Residual of an equation assembled from named terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub residual: f64,
    /// Largest absolute term.
    pub scale: f64,
    pub relative: f64,
    pub terms: BTreeMap<String, f64>,
}

impl ResidualReport {
    pub fn from_terms(terms: &[(&str, f64)]) -> Self {
        let residual: f64 = terms.iter().map(|(_, v)| v).sum();
        let scale = terms.iter().map(|(_, v)| v.abs()).fold(0.0, f64::max);
        let relative = if scale > 0.0 {
            residual / scale
        } else {
            residual
        };
        ResidualReport {
            residual,
            scale,
            relative,
            terms: terms.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    pub fn term(&self, name: &str) -> f64 {
        self.terms.get(name).copied().unwrap_or(0.0)
    }
}

/// `v_i(x) = x_i^2 / 4 - (beta / 2) h0_i` and its derivatives.
pub fn value_grads_1d(config: &Config1D, i: usize, beta: f64) -> Result<ValueGrad1D> {
    let x = config.points();
    check_index(i, x.len())?;
    let n = x.len();
    let s = pair_sums_1d_raw(x, i);
    let w = beta / (2.0 * (n - 1) as f64);
    let mut gradient: Vec<f64> = x.iter().map(|&xk| w / (x[i] - xk)).collect();
    gradient[i] = x[i] / 2.0 - beta / 2.0 * s.h1;
    Ok(ValueGrad1D {
        index: i,
        value: x[i] * x[i] / 4.0 - beta / 2.0 * s.h0,
        gradient,
        laplacian: 0.5 + beta * s.h2,
    })
}

/// Planar analogue: `v_i(z) = |z_i|^2 / 4 - (beta / 2) h0_i`, harmonic off the
/// diagonal apart from the quadratic part, so the Laplacian is 1.
pub fn value_grads_2d(config: &Config2D, i: usize, beta: f64) -> Result<ValueGrad2D> {
    let z = config.points();
    check_index(i, z.len())?;
    let n = z.len();
    let s = pair_sums_2d_raw(z, i);
    let w = beta / (2.0 * (n - 1) as f64);
    let mut gradient: Vec<Point2> = z
        .iter()
        .enumerate()
        .map(|(k, &zk)| {
            if k == i {
                Point2::ZERO
            } else {
                let d = z[i] - zk;
                d * (w / d.norm_sq())
            }
        })
        .collect();
    gradient[i] = z[i] / 2.0 - s.h1 * (beta / 2.0);
    Ok(ValueGrad2D {
        index: i,
        value: z[i].norm_sq() / 4.0 - beta / 2.0 * s.h0,
        gradient,
        laplacian: 1.0,
    })
}

/// Own-coordinate derivatives `d_k v_k` for all players at once.
fn own_grads_1d(x: &[f64], beta: f64) -> Vec<f64> {
    let (h1, _) = all_h1_h2_1d(x);
    x.iter()
        .zip(h1)
        .map(|(xk, h)| xk / 2.0 - beta / 2.0 * h)
        .collect()
}

fn own_grads_2d(z: &[Point2], beta: f64) -> Vec<Point2> {
    let (h1, _) = all_h1_h2_2d(z);
    z.iter()
        .zip(h1)
        .map(|(&zk, h)| zk / 2.0 - h * (beta / 2.0))
        .collect()
}

/// Player `i`'s equation of the closed-loop Nash system at the closed-form
/// values for `params.beta` and the cost coefficients in `params`.
pub fn residual_nash_1d(
    config: &Config1D,
    i: usize,
    params: &GameParams,
) -> Result<ResidualReport> {
    let x = config.points();
    check_index(i, x.len())?;
    let own = own_grads_1d(x, params.beta);
    Ok(nash_1d_terms(x, i, params, &own))
}

pub(crate) fn nash_1d_terms(
    x: &[f64],
    i: usize,
    params: &GameParams,
    own: &[f64],
) -> ResidualReport {
    let n = x.len();
    let beta = params.beta;
    let w = beta / (2.0 * (n - 1) as f64);
    let s = pair_sums_1d_raw(x, i);
    let laplacian = 0.5 + beta * s.h2;
    let mut interaction = 0.0;
    for k in 0..n {
        if k != i {
            interaction += own[k] * w / (x[i] - x[k]);
        }
    }
    let lambda = ergodic_constants(params, Model::Closed1D);
    ResidualReport::from_terms(&[
        (
            "diffusion",
            -params.sigma_sq() / (2.0 * (n - 1) as f64) * laplacian,
        ),
        ("interaction", interaction),
        ("self", 0.5 * own[i] * own[i]),
        ("cost", -state_cost_1d_raw(x, i, params, s.h2)),
        ("lambda", lambda),
    ])
}

/// Potential of the open-loop problem,
/// `W(x) = |x|^2 / 4 - beta / (2 (N - 1)) sum_{k < l} log |x_l - x_k|`,
/// with gradient and Laplacian.
pub fn potential_w_1d(config: &Config1D, beta: f64) -> (f64, Vec<f64>, f64) {
    let x = config.points();
    let n = x.len();
    let w = beta / (2.0 * (n - 1) as f64);
    let mut logs = 0.0;
    for k in 0..n {
        for l in k + 1..n {
            logs += (x[l] - x[k]).ln();
        }
    }
    let (h1, h2) = all_h1_h2_1d(x);
    let value = x.iter().map(|v| v * v).sum::<f64>() / 4.0 - w * logs;
    let grad = x
        .iter()
        .zip(&h1)
        .map(|(xi, h)| xi / 2.0 - beta / 2.0 * h)
        .collect();
    let lap = n as f64 / 2.0 + beta / 2.0 * h2.iter().sum::<f64>();
    (value, grad, lap)
}

pub fn potential_w_2d(config: &Config2D, beta: f64) -> (f64, Vec<Point2>, f64) {
    let z = config.points();
    let n = z.len();
    let w = beta / (2.0 * (n - 1) as f64);
    let mut logs = 0.0;
    for k in 0..n {
        for l in k + 1..n {
            logs += 0.5 * (z[l] - z[k]).norm_sq().ln();
        }
    }
    let value = z.iter().map(|p| p.norm_sq()).sum::<f64>() / 4.0 - w * logs;
    (value, own_grads_2d(z, beta), n as f64)
}

/// Open-loop ergodic HJB equation (per-player normalisation) at `W_beta`.
pub fn residual_hjb_1d(config: &Config1D, params: &GameParams) -> ResidualReport {
    let n = config.len() as f64;
    let (_, grad, lap) = potential_w_1d(config, params.beta);
    let grad_sq: f64 = grad.iter().map(|g| g * g).sum();
    ResidualReport::from_terms(&[
        (
            "diffusion",
            -params.sigma_sq() / (2.0 * n * (n - 1.0)) * lap,
        ),
        ("hamiltonian", grad_sq / (2.0 * n)),
        ("cost", -global_cost_1d(config, params) / n),
        ("lambda", ergodic_constants(params, Model::Open1D)),
    ])
}

/// Player `i`'s equation of the planar closed-loop Nash system.
pub fn residual_nash_2d(
    config: &Config2D,
    i: usize,
    params: &GameParams,
) -> Result<ResidualReport> {
    let z = config.points();
    check_index(i, z.len())?;
    let own = own_grads_2d(z, params.beta);
    Ok(nash_2d_terms(z, i, params, &own))
}

pub(crate) fn nash_2d_terms(
    z: &[Point2],
    i: usize,
    params: &GameParams,
    own: &[Point2],
) -> ResidualReport {
    let n = z.len();
    let w = params.beta / (2.0 * (n - 1) as f64);
    let mut interaction = 0.0;
    for k in 0..n {
        if k != i {
            let d = z[i] - z[k];
            interaction += own[k].dot(d) * (w / d.norm_sq());
        }
    }
    let s = pair_sums_2d_raw(z, i);
    ResidualReport::from_terms(&[
        ("diffusion", -params.sigma_sq() / (2.0 * (n - 1) as f64)),
        ("interaction", interaction),
        ("self", 0.5 * own[i].norm_sq()),
        ("cost", -state_cost_2d_raw(z, i, params, s.h2)),
        ("lambda", ergodic_constants(params, Model::Closed2D)),
    ])
}

pub fn residual_hjb_2d(config: &Config2D, params: &GameParams) -> ResidualReport {
    let n = config.len() as f64;
    let (_, grad, lap) = potential_w_2d(config, params.beta);
    let grad_sq: f64 = grad.iter().map(|g| g.norm_sq()).sum();
    ResidualReport::from_terms(&[
        (
            "diffusion",
            -params.sigma_sq() / (2.0 * n * (n - 1.0)) * lap,
        ),
        ("hamiltonian", grad_sq / (2.0 * n)),
        ("cost", -global_cost_2d(config, params) / n),
        ("lambda", ergodic_constants(params, Model::Open2D)),
    ])
}

/// Default number of principal-value nodes for the master equations.
pub const MASTER_PV_NODES: usize = 128;

/// Master equation of the mean-field limit at `(x, mu)`.
pub fn residual_master_1d(x: f64, mu: &EquilibriumMeasure1D, beta: f64) -> Result<ResidualReport> {
    residual_master_1d_with(x, mu, beta, MASTER_PV_NODES)
}

pub fn residual_master_1d_with(
    x: f64,
    mu: &EquilibriumMeasure1D,
    beta: f64,
    nodes: usize,
) -> Result<ResidualReport> {
    let (a, b) = mu.support();
    if !(x > a && x < b) {
        return Err(Error::domain(format!(
            "x = {x} is not interior to [{a}, {b}]"
        )));
    }
    let dx_u = |z: f64| z / 2.0 - beta / 2.0 * mu.hilbert(z);
    let interaction = beta / 2.0 * mu.pv_integral(x, dx_u, nodes);
    let m = mu.density(x);
    let report = ResidualReport::from_terms(&[
        ("interaction", interaction),
        ("self", 0.5 * dx_u(x).powi(2)),
        ("cost", -x * x / 8.0 - PI * PI * beta * beta / 8.0 * m * m),
        ("lambda", beta / 4.0),
    ]);
    if report.residual.is_finite() {
        Ok(report)
    } else {
        Err(Error::Quadrature {
            estimate: report.residual,
            gap: f64::NAN,
        })
    }
}

/// Integrated Hamilton-Jacobi form on the space of measures at `mu`.
pub fn residual_master_hj_1d(mu: &EquilibriumMeasure1D, beta: f64) -> ResidualReport {
    let dx_u = |z: f64| z / 2.0 - beta / 2.0 * mu.hilbert(z);
    ResidualReport::from_terms(&[
        ("hamiltonian", 0.5 * mu.integrate(|z| dx_u(z).powi(2))),
        ("cost", -mu.integrate(|z| z * z / 8.0)),
        (
            "local",
            -PI * PI * beta * beta / 24.0 * mu.density_cubed_integral(),
        ),
        ("lambda", beta / 8.0),
    ])
}

/// Planar master equation at `(z, mu)`.
pub fn residual_master_2d(
    z: Point2,
    mu: &EquilibriumMeasure2D,
    beta: f64,
) -> Result<ResidualReport> {
    if mu.density(z) <= 0.0 {
        return Err(Error::domain("z is not in the support"));
    }
    let grad_u = |w: Point2| w / 2.0 - mu.coulomb_field(w) * (beta / 2.0);
    let interaction = beta / 2.0 * mu.singular_field_integral(z, grad_u, 3);
    let circ = mu.circumcircle_limit(z)?;
    Ok(ResidualReport::from_terms(&[
        ("interaction", interaction),
        ("self", 0.5 * grad_u(z).norm_sq()),
        ("cost", -z.norm_sq() / 8.0 - beta * beta / 8.0 * circ),
        ("lambda", beta / 4.0),
    ]))
}

/// Maximum relative error of each algebraic identity at a configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub errors: BTreeMap<String, f64>,
}

impl IdentityReport {
    pub fn max_error(&self) -> f64 {
        self.errors.values().copied().fold(0.0, f64::max)
    }
}

fn rel(a: f64, b: f64, scale: f64) -> f64 {
    let s = scale.max(a.abs()).max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

/// `sum_i sum_{k != i} |term(i, k)| / (N - 1)`, the scale of the rounding
/// error in the first-moment sums.
fn first_moment_magnitude(n: usize, term: impl Fn(usize, usize) -> f64) -> f64 {
    let s: f64 = (0..n)
        .flat_map(|i| (0..n).filter(move |&k| k != i).map(move |k| (i, k)))
        .map(|(i, k)| term(i, k))
        .sum();
    s / (n - 1) as f64
}

/// 1D identities by explicit loops:
/// `sum_i x_i h1_i = N / 2`, `sum_i h2_i / (N - 1) = sum_i h1_i^2`, and the
/// three-way double-sum identity for every `i`.
pub fn identity_suite_1d(config: &Config1D) -> IdentityReport {
    let x = config.points();
    let n = x.len();
    let sums: Vec<_> = (0..n).map(|i| pair_sums_1d_raw(x, i)).collect();
    let mut errors = BTreeMap::new();

    let lhs: f64 = x.iter().zip(&sums).map(|(xi, s)| xi * s.h1).sum();
    let magnitude = first_moment_magnitude(n, |i, k| x[i].abs() / (x[i] - x[k]).abs());
    errors.insert(
        "first_moment".to_string(),
        rel(lhs, n as f64 / 2.0, magnitude),
    );

    let lhs: f64 = sums.iter().map(|s| s.h2).sum::<f64>() / (n - 1) as f64;
    let rhs: f64 = sums.iter().map(|s| s.h1 * s.h1).sum();
    errors.insert("square_of_mean".to_string(), rel(lhs, rhs, 0.0));

    // Errors are measured against the sum of absolute terms: the left-hand
    // sum cancels heavily, so its rounding error scales with that sum.
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        let mut magnitude: f64 = 0.0;
        for k in 0..n {
            if k == i {
                continue;
            }
            for l in 0..n {
                if l == i || l == k {
                    continue;
                }
                let (ik, il, kl) = (
                    1.0 / (x[i] - x[k]),
                    1.0 / (x[i] - x[l]),
                    1.0 / (x[k] - x[l]),
                );
                a += 2.0 * kl * ik;
                b += kl * (ik - il);
                c += ik * il;
                magnitude +=
                    (2.0 * kl * ik).abs() + (kl * ik).abs() + (kl * il).abs() + (ik * il).abs();
            }
        }
        worst = worst.max(rel(a, b, magnitude)).max(rel(b, c, magnitude));
    }
    errors.insert("double_sum".to_string(), worst);
    IdentityReport { errors }
}

/// Planar identities: the first-moment identity, the square-of-mean identity
/// with its circumcircle correction, and the three-term circumcircle identity
/// on every ordered triple.
pub fn identity_suite_2d(config: &Config2D) -> IdentityReport {
    let z = config.points();
    let n = z.len();
    let sums: Vec<_> = (0..n).map(|i| pair_sums_2d_raw(z, i)).collect();
    let mut errors = BTreeMap::new();

    let lhs: f64 = z.iter().zip(&sums).map(|(zi, s)| zi.dot(s.h1)).sum();
    let magnitude = first_moment_magnitude(n, |i, k| z[i].norm() / (z[i] - z[k]).norm());
    errors.insert(
        "first_moment".to_string(),
        rel(lhs, n as f64 / 2.0, magnitude),
    );

    let lhs: f64 = sums.iter().map(|s| s.h1.norm_sq()).sum();
    let circ: f64 = (0..n).map(|i| circumcircle_sum(z, i)).sum();
    let rhs = sums.iter().map(|s| s.h2).sum::<f64>() / (n - 1) as f64 + circ / 3.0;
    errors.insert("square_of_mean".to_string(), rel(lhs, rhs, 0.0));

    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                if i == j || j == k || i == k {
                    continue;
                }
                let (zi, zj, zk) = (z[i], z[j], z[k]);
                let three = circumcircle_three_term(zi, zj, zk);
                let direct = inv_sq_circumdiameter_raw(zi - zj, zi - zk);
                let h = |v: Point2| v / v.norm_sq();
                let (a, b) = (h(zi - zj), h(zi - zk));
                let scale = a
                    .dot(b)
                    .abs()
                    .max(a.dot(h(zj - zk)).abs())
                    .max(b.dot(h(zk - zj)).abs());
                worst = worst.max(rel(three, direct, scale));
            }
        }
    }
    errors.insert("circumcircle".to_string(), worst);
    IdentityReport { errors }
}
