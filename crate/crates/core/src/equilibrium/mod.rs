//! Equilibrium measures of the log-gases and the limit constants built from them.

mod one_d;
mod potential;
pub mod quadrature;
mod two_d;

use std::f64::consts::PI;

pub use one_d::{semicircle, solve_one_cut, solve_one_cut_with, EquilibriumMeasure1D};
pub use potential::{CustomPotential, PotentialSpec};
pub use two_d::{circular_law, DensityGrid, EquilibriumMeasure2D, REFINE_TOL};

use crate::error::{Error, Result};

/// Equilibrium measure for `V` at repulsion `beta`: the semicircle in the
/// quadratic case, the one-cut solver otherwise.
pub fn equilibrium_measure(potential: &PotentialSpec, beta: f64) -> Result<EquilibriumMeasure1D> {
    if potential.is_quadratic() {
        semicircle(beta)
    } else {
        solve_one_cut(potential, beta)
    }
}

/// Large-N limit of the mean inverse-squared-gap statistic of the particle at
/// quantile level `q`: `pi^2 beta / (3 (beta - sigma^2)) m(gamma^q)^2`.
pub fn limit_singular_stat(
    beta: f64,
    sigma: f64,
    mu: &EquilibriumMeasure1D,
    q: f64,
) -> Result<f64> {
    let s2 = sigma * sigma;
    if !(sigma > 0.0) || !(beta > s2) {
        return Err(Error::domain(format!(
            "limit requires beta > sigma^2 > 0, got beta = {beta}, sigma = {sigma}"
        )));
    }
    let m = mu.density(mu.quantile(q)?);
    Ok(PI * PI * beta / (3.0 * (beta - s2)) * m * m)
}

/// Index average of [`limit_singular_stat`]: `1 / (2 (beta - sigma^2))` for the
/// quadratic potential.
pub fn averaged_singular_stat(beta: f64, sigma: f64, mu: &EquilibriumMeasure1D) -> Result<f64> {
    let s2 = sigma * sigma;
    if !(sigma > 0.0) || !(beta > s2) {
        return Err(Error::domain("limit requires beta > sigma^2 > 0"));
    }
    Ok(PI * PI * beta / (3.0 * (beta - s2)) * mu.density_cubed_integral())
}
