//! Leave-one-out singular sums, circumcircle geometry, the spiral order and
//! one-dimensional Wasserstein distances.
//!
//! Particle indices are zero-based throughout the crate.

use std::cmp::Ordering;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::config::{Config1D, Config2D};
use crate::error::{Error, Result};
use crate::point::Point2;

/// Leave-one-out averages over the other `N - 1` particles:
/// `h0 = mean log|x_i - x_k|`, `h1 = mean 1/(x_i - x_k)` (a vector in the
/// plane) and `h2 = mean 1/|x_i - x_k|^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSums<T> {
    pub h0: f64,
    pub h1: T,
    pub h2: f64,
}

pub type PairSums1D = PairSums<f64>;
pub type PairSums2D = PairSums<Point2>;

pub(crate) fn check_index(i: usize, n: usize) -> Result<()> {
    if i < n {
        Ok(())
    } else {
        Err(Error::Index { index: i, len: n })
    }
}

pub fn pair_sums_1d(config: &Config1D, i: usize) -> Result<PairSums1D> {
    let x = config.points();
    check_index(i, x.len())?;
    Ok(pair_sums_1d_raw(x, i))
}

pub(crate) fn pair_sums_1d_raw(x: &[f64], i: usize) -> PairSums1D {
    let xi = x[i];
    let (mut h0, mut h1, mut h2) = (0.0, 0.0, 0.0);
    for (k, &xk) in x.iter().enumerate() {
        if k == i {
            continue;
        }
        let d = xi - xk;
        let inv = 1.0 / d;
        h0 += d.abs().ln();
        h1 += inv;
        h2 += inv * inv;
    }
    let w = 1.0 / (x.len() - 1) as f64;
    PairSums {
        h0: h0 * w,
        h1: h1 * w,
        h2: h2 * w,
    }
}

pub fn pair_sums_2d(config: &Config2D, i: usize) -> Result<PairSums2D> {
    let z = config.points();
    check_index(i, z.len())?;
    Ok(pair_sums_2d_raw(z, i))
}

pub(crate) fn pair_sums_2d_raw(z: &[Point2], i: usize) -> PairSums2D {
    let zi = z[i];
    let (mut h0, mut h1, mut h2) = (0.0, Point2::ZERO, 0.0);
    for (k, &zk) in z.iter().enumerate() {
        if k == i {
            continue;
        }
        let d = zi - zk;
        let r2 = d.norm_sq();
        h0 += 0.5 * r2.ln();
        h1 += d / r2;
        h2 += 1.0 / r2;
    }
    let w = 1.0 / (z.len() - 1) as f64;
    PairSums {
        h0: h0 * w,
        h1: h1 * w,
        h2: h2 * w,
    }
}

/// `h1` and `h2` for every particle in one pass over the pairs.
pub(crate) fn all_h1_h2_1d(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let mut h1 = vec![0.0; n];
    let mut h2 = vec![0.0; n];
    for i in 0..n {
        for k in i + 1..n {
            let inv = 1.0 / (x[i] - x[k]);
            let sq = inv * inv;
            h1[i] += inv;
            h1[k] -= inv;
            h2[i] += sq;
            h2[k] += sq;
        }
    }
    let w = 1.0 / (n - 1) as f64;
    h1.iter_mut().for_each(|v| *v *= w);
    h2.iter_mut().for_each(|v| *v *= w);
    (h1, h2)
}

pub(crate) fn all_h1_h2_2d(z: &[Point2]) -> (Vec<Point2>, Vec<f64>) {
    let n = z.len();
    let mut h1 = vec![Point2::ZERO; n];
    let mut h2 = vec![0.0; n];
    for i in 0..n {
        for k in i + 1..n {
            let d = z[i] - z[k];
            let inv = 1.0 / d.norm_sq();
            let v = d * inv;
            h1[i] += v;
            h1[k] -= v;
            h2[i] += inv;
            h2[k] += inv;
        }
    }
    let w = 1.0 / (n - 1) as f64;
    h1.iter_mut().for_each(|v| *v = *v * w);
    h2.iter_mut().for_each(|v| *v *= w);
    (h1, h2)
}

/// `2 / D^2` where `D` is the circumdiameter of the triangle `(0, xi, eta)`.
///
/// Evaluated as `2 cross(xi, eta)^2 / (|xi|^2 |eta|^2 |xi - eta|^2)`; collinear
/// triangles give exactly 0.
pub fn inv_sq_circumdiameter(xi: Point2, eta: Point2) -> Result<f64> {
    let d = xi - eta;
    if xi == Point2::ZERO || eta == Point2::ZERO || d == Point2::ZERO {
        return Err(Error::domain("degenerate triangle: coincident vertices"));
    }
    Ok(inv_sq_circumdiameter_raw(xi, eta))
}

#[inline]
pub(crate) fn inv_sq_circumdiameter_raw(xi: Point2, eta: Point2) -> f64 {
    let c = xi.cross(eta);
    2.0 * c * c / (xi.norm_sq() * eta.norm_sq() * (xi - eta).norm_sq())
}

/// The three-term expression built from `h1(v) = v / |v|^2` that equals the
/// inverse squared circumdiameter of `(z, w, u)`:
/// `<a, b> - <a, h1(w - u)> - <b, h1(u - w)>` with `a = h1(z - w)`, `b = h1(z - u)`.
pub fn circumcircle_three_term(z: Point2, w: Point2, u: Point2) -> f64 {
    let h = |v: Point2| v / v.norm_sq();
    let a = h(z - w);
    let b = h(z - u);
    a.dot(b) - a.dot(h(w - u)) - b.dot(h(u - w))
}

/// Centre and radius of the circle through three points; `None` when they are
/// collinear.
pub fn circumcircle(a: Point2, b: Point2, c: Point2) -> Option<(Point2, f64)> {
    let (u, v) = (b - a, c - a);
    let d = 2.0 * u.cross(v);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    let offset = Point2::new(
        v.y * u.norm_sq() - u.y * v.norm_sq(),
        u.x * v.norm_sq() - v.x * u.norm_sq(),
    ) / d;
    Some((a + offset, offset.norm()))
}

/// Argument remapped to `(0, 2 pi]`.
pub fn arg_0_2pi(p: Point2) -> f64 {
    let a = p.y.atan2(p.x);
    if a <= 0.0 {
        a + TAU
    } else {
        a
    }
}

fn shell(p: Point2, n: usize) -> f64 {
    ((n as f64).sqrt() * p.norm()).floor()
}

/// Strict spiral order: the origin first, then shells `floor(sqrt(n) |.|)`,
/// then argument in `(0, 2 pi]`, then larger modulus first.
pub fn spiral_less(w: Point2, z: Point2, n: usize) -> bool {
    if w == z {
        return false;
    }
    if w == Point2::ZERO {
        return true;
    }
    if z == Point2::ZERO {
        return false;
    }
    let (sw, sz) = (shell(w, n), shell(z, n));
    if sw != sz {
        return sw < sz;
    }
    let (aw, az) = (arg_0_2pi(w), arg_0_2pi(z));
    if aw != az {
        return aw < az;
    }
    w.norm() >= z.norm()
}

/// Total order induced by [`spiral_less`].
pub fn spiral_cmp(w: Point2, z: Point2, n: usize) -> Ordering {
    if spiral_less(w, z, n) {
        Ordering::Less
    } else if spiral_less(z, w, n) {
        Ordering::Greater
    } else {
        Ordering::Equal
    }
}

/// Order-`p` Wasserstein distance between two equally weighted sorted samples.
pub fn wasserstein_1d(p: f64, xs: &[f64], ys: &[f64]) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::domain(format!("order must be at least 1, got {p}")));
    }
    if xs.len() != ys.len() {
        return Err(Error::domain(format!(
            "sample sizes differ: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.is_empty() {
        return Err(Error::domain("empty samples"));
    }
    if !is_sorted(xs) || !is_sorted(ys) {
        return Err(Error::domain("samples must be sorted ascending"));
    }
    let n = xs.len() as f64;
    let s: f64 = xs.iter().zip(ys).map(|(a, b)| (a - b).abs().powf(p)).sum();
    Ok((s / n).powf(1.0 / p))
}

fn is_sorted(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] <= w[1])
}
