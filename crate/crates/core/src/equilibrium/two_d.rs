use std::f64::consts::{PI, TAU};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::quadrature::{gauss_legendre, gauss_legendre_on};
use crate::config::format_f64;
use crate::error::{Error, Result};
use crate::point::Point2;
use crate::transforms::inv_sq_circumdiameter_raw;

/// Relative gap between successive refinement levels that ends a quadrature.
pub const REFINE_TOL: f64 = 1e-4;

/// Planar equilibrium measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EquilibriumMeasure2D {
    /// Uniform density on the disc of the given radius about the origin.
    UniformBall { radius: f64 },
    /// Piecewise-constant density on a rectangular grid of cells.
    Grid(DensityGrid),
}

/// Cell values of a piecewise-constant density, row-major in `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub origin: Point2,
    pub dx: f64,
    pub dy: f64,
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
}

impl DensityGrid {
    /// Sample `f` at cell centres and normalise to unit mass.
    pub fn from_fn(
        origin: Point2,
        dx: f64,
        dy: f64,
        nx: usize,
        ny: usize,
        f: impl Fn(Point2) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let c = origin + Point2::new((i as f64 + 0.5) * dx, (j as f64 + 0.5) * dy);
                values.push(f(c));
            }
        }
        let mass: f64 = values.iter().sum::<f64>() * dx * dy;
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::domain("grid density has no mass"));
        }
        values.iter_mut().for_each(|v| *v /= mass);
        DensityGrid::new(origin, dx, dy, nx, ny, values)
    }

    pub fn new(
        origin: Point2,
        dx: f64,
        dy: f64,
        nx: usize,
        ny: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if nx == 0 || ny == 0 || values.len() != nx * ny {
            return Err(Error::domain(
                "grid dimensions do not match the value table",
            ));
        }
        if !(dx > 0.0 && dy > 0.0) {
            return Err(Error::domain("grid spacing must be positive"));
        }
        if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::domain("grid density must be finite and nonnegative"));
        }
        let g = DensityGrid {
            origin,
            dx,
            dy,
            nx,
            ny,
            values,
        };
        let mass = g.mass();
        if (mass - 1.0).abs() > 1e-6 {
            return Err(Error::domain(format!(
                "grid density has mass {mass}, expected 1"
            )));
        }
        Ok(g)
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.dx * self.dy
    }

    fn density(&self, z: Point2) -> f64 {
        let u = (z.x - self.origin.x) / self.dx;
        let v = (z.y - self.origin.y) / self.dy;
        if u < 0.0 || v < 0.0 {
            return 0.0;
        }
        let (i, j) = (u as usize, v as usize);
        if i >= self.nx || j >= self.ny {
            return 0.0;
        }
        self.values[j * self.nx + i]
    }

    /// Weighted nodes of a `g x g` Gauss rule in every occupied cell.
    fn nodes(&self, g: usize) -> Vec<(Point2, f64)> {
        let (x, w) = gauss_legendre(g);
        let mut out = Vec::new();
        for j in 0..self.ny {
            for i in 0..self.nx {
                let m = self.values[j * self.nx + i];
                if m == 0.0 {
                    continue;
                }
                let c = self.origin
                    + Point2::new((i as f64 + 0.5) * self.dx, (j as f64 + 0.5) * self.dy);
                for (a, wa) in x.iter().zip(&w) {
                    for (b, wb) in x.iter().zip(&w) {
                        let p = c + Point2::new(0.5 * self.dx * a, 0.5 * self.dy * b);
                        out.push((p, m * wa * wb * 0.25 * self.dx * self.dy));
                    }
                }
            }
        }
        out
    }
}

/// Uniform measure on the disc of radius `sqrt(beta)`, the equilibrium
/// measure of `V(z) = |z|^2 / 2` for the logarithmic interaction at strength
/// `beta`.
pub fn circular_law(beta: f64) -> Result<EquilibriumMeasure2D> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::domain(format!("beta must be positive, got {beta}")));
    }
    Ok(EquilibriumMeasure2D::UniformBall {
        radius: beta.sqrt(),
    })
}

impl EquilibriumMeasure2D {
    pub fn uniform_ball(radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::domain(format!(
                "radius must be positive, got {radius}"
            )));
        }
        Ok(EquilibriumMeasure2D::UniformBall { radius })
    }

    pub fn density(&self, z: Point2) -> f64 {
        match self {
            EquilibriumMeasure2D::UniformBall { radius } => {
                if z.norm() <= *radius {
                    1.0 / (PI * radius * radius)
                } else {
                    0.0
                }
            }
            EquilibriumMeasure2D::Grid(g) => g.density(z),
        }
    }

    /// Radius of a disc about the origin containing the support.
    pub fn support_radius(&self) -> f64 {
        match self {
            EquilibriumMeasure2D::UniformBall { radius } => *radius,
            EquilibriumMeasure2D::Grid(g) => {
                let corners = [
                    g.origin,
                    g.origin + Point2::new(g.nx as f64 * g.dx, 0.0),
                    g.origin + Point2::new(0.0, g.ny as f64 * g.dy),
                    g.origin + Point2::new(g.nx as f64 * g.dx, g.ny as f64 * g.dy),
                ];
                corners.iter().map(|c| c.norm()).fold(0.0, f64::max)
            }
        }
    }

    /// `int f dmu`.
    pub fn integrate(&self, f: impl Fn(Point2) -> f64) -> f64 {
        match self {
            EquilibriumMeasure2D::UniformBall { radius } => {
                let m = 1.0 / (PI * radius * radius);
                let nth = 128;
                let mut s = 0.0;
                for k in 0..nth {
                    let th = TAU * k as f64 / nth as f64;
                    for (r, w) in gauss_legendre_on(48, 0.0, *radius) {
                        s += w * r * f(Point2::from_polar(r, th));
                    }
                }
                s * m * TAU / nth as f64
            }
            EquilibriumMeasure2D::Grid(g) => g.nodes(3).into_iter().map(|(p, w)| w * f(p)).sum(),
        }
    }

    pub fn mass(&self) -> f64 {
        match self {
            EquilibriumMeasure2D::UniformBall { .. } => self.integrate(|_| 1.0),
            EquilibriumMeasure2D::Grid(g) => g.mass(),
        }
    }

    /// Coulomb field `H mu(z) = int (z - w) / |z - w|^2 dmu(w)`.
    pub fn coulomb_field(&self, z: Point2) -> Point2 {
        match self {
            EquilibriumMeasure2D::UniformBall { radius } => {
                let r2 = z.norm_sq();
                if r2 <= radius * radius {
                    z / (radius * radius)
                } else {
                    z / r2
                }
            }
            EquilibriumMeasure2D::Grid(g) => g
                .nodes(4)
                .into_iter()
                .filter(|(p, _)| *p != z)
                .map(|(p, w)| (z - p) * (w / (z - p).norm_sq()))
                .fold(Point2::ZERO, |a, b| a + b),
        }
    }

    /// Distance from an interior point `z` to the edge of the disc along `dir`.
    fn ray_length(radius: f64, z: Point2, dir: Point2) -> f64 {
        let b = z.dot(dir);
        let c = z.norm_sq() - radius * radius;
        (-b + (b * b - c).max(0.0).sqrt()).max(0.0)
    }

    /// `int <k(z - w), f(w)> dmu(w)` with `k(v) = v / |v|^2`, by polar
    /// quadrature centred at `z` (the Jacobian cancels the singularity).
    pub fn singular_field_integral(
        &self,
        z: Point2,
        f: impl Fn(Point2) -> Point2,
        level: usize,
    ) -> f64 {
        match self {
            EquilibriumMeasure2D::UniformBall { radius } => {
                let m = 1.0 / (PI * radius * radius);
                let nth = 16 << level;
                let nr = 8 + 8 * level;
                let mut s = 0.0;
                for k in 0..nth {
                    let e = Point2::from_polar(1.0, TAU * (k as f64 + 0.5) / nth as f64);
                    let len = Self::ray_length(*radius, z, e);
                    for (r, w) in gauss_legendre_on(nr, 0.0, len) {
                        // (z - w) / |z - w|^2 * r = -e
                        s -= w * e.dot(f(z + e * r));
                    }
                }
                s * m * TAU / nth as f64
            }
            EquilibriumMeasure2D::Grid(g) => g
                .nodes(2 + level)
                .into_iter()
                .filter(|(p, _)| *p != z)
                .map(|(p, w)| w * ((z - p) / (z - p).norm_sq()).dot(f(p)))
                .sum(),
        }
    }

    /// Coulomb field by polar quadrature, independent of the closed form.
    pub fn coulomb_field_quadrature(&self, z: Point2, level: usize) -> Point2 {
        let fx = self.singular_field_integral(z, |_| Point2::new(1.0, 0.0), level);
        let fy = self.singular_field_integral(z, |_| Point2::new(0.0, 1.0), level);
        Point2::new(fx, fy)
    }

    /// `int int 2 / D^2(gamma - w, gamma - u) dmu(w) dmu(u)`, refined until two
    /// successive levels agree to [`REFINE_TOL`].
    pub fn circumcircle_limit(&self, gamma: Point2) -> Result<f64> {
        self.circumcircle_limit_with(gamma, REFINE_TOL)
    }

    pub fn circumcircle_limit_with(&self, gamma: Point2, tol: f64) -> Result<f64> {
        if !gamma.is_finite() {
            return Err(Error::domain("gamma must be finite"));
        }
        if let EquilibriumMeasure2D::UniformBall { radius } = self {
            if gamma.norm() > radius * (1.0 + 1e-12) {
                return Err(Error::domain("gamma lies outside the support"));
            }
        }
        let levels: Box<dyn Fn(usize) -> f64> = match self {
            EquilibriumMeasure2D::UniformBall { radius } => {
                let r = *radius;
                Box::new(move |l| ball_circumcircle(r, gamma, 8 << l, 8 << l))
            }
            EquilibriumMeasure2D::Grid(g) => Box::new(move |l| grid_circumcircle(g, gamma, l + 1)),
        };
        let max_level = match self {
            EquilibriumMeasure2D::UniformBall { .. } => 7,
            EquilibriumMeasure2D::Grid(g) => {
                // keep the pair count of the finest level below ~1e8
                let cells = g.values.iter().filter(|v| **v > 0.0).count().max(1) as f64;
                (1..12)
                    .take_while(|l| cells * ((l + 1) * (l + 1)) as f64 <= 1e4)
                    .count()
                    .max(2)
            }
        };
        let mut prev = levels(0);
        let mut gap = f64::INFINITY;
        for l in 1..=max_level {
            let cur = levels(l);
            gap = (cur - prev).abs();
            if gap <= tol * cur.abs() || (cur == 0.0 && prev == 0.0) {
                return Ok(cur);
            }
            prev = cur;
        }
        Err(Error::Quadrature {
            estimate: prev,
            gap,
        })
    }

    /// Density table `(x, y, m)` on an `n x n` grid covering the support.
    pub fn write_density_csv<W: Write>(&self, w: W, n: usize) -> Result<()> {
        let r = self.support_radius();
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["x", "y", "m"])?;
        let n = n.max(2);
        for j in 0..n {
            for i in 0..n {
                let p = Point2::new(
                    -r + 2.0 * r * i as f64 / (n - 1) as f64,
                    -r + 2.0 * r * j as f64 / (n - 1) as f64,
                );
                wtr.write_record([
                    format_f64(p.x),
                    format_f64(p.y),
                    format_f64(self.density(p)),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// `int_0^T 2t / (t^2 - 2ct + 1) dt` with `c = cos(delta)`, `s = |sin(delta)| > 0`.
fn ray_pair_primitive(t: f64, c: f64, s: f64) -> f64 {
    let q = (t - c) * (t - c) + s * s;
    q.ln() + 2.0 * c / s * (((t - c) / s).atan() + (c / s).atan())
}

/// Integral of the polar-form integrand
/// `2 r1 r2 sin^2(delta) / (r1^2 + r2^2 - 2 r1 r2 cos(delta))`
/// over the rectangle `[0, rho1] x [0, rho2]`, in closed form.
pub(crate) fn ray_pair_kernel(rho1: f64, rho2: f64, delta: f64) -> f64 {
    let (s, c) = delta.sin_cos();
    let s = s.abs();
    if s < 1e-300 || rho1 <= 0.0 || rho2 <= 0.0 {
        return 0.0;
    }
    let t = rho2 / rho1;
    0.5 * s
        * s
        * (rho1 * rho1 * ray_pair_primitive(t, c, s)
            + rho2 * rho2 * ray_pair_primitive(1.0 / t, c, s))
}

/// Disc case: with polar coordinates centred at `gamma` the radial double
/// integral is closed-form, leaving a smooth integral over the two directions.
fn ball_circumcircle(radius: f64, gamma: Point2, n_phi: usize, n_delta: usize) -> f64 {
    let m = 1.0 / (PI * radius * radius);
    let ray =
        |phi: f64| EquilibriumMeasure2D::ray_length(radius, gamma, Point2::from_polar(1.0, phi));
    let half: Vec<(f64, f64)> = gauss_legendre_on(n_delta, 0.0, PI).collect();
    let mut total = 0.0;
    for k in 0..n_phi {
        let phi = TAU * k as f64 / n_phi as f64;
        let rho1 = ray(phi);
        let mut inner = 0.0;
        for &(d, w) in &half {
            inner += w
                * (ray_pair_kernel(rho1, ray(phi - d), d) + ray_pair_kernel(rho1, ray(phi + d), d));
        }
        total += inner;
    }
    total * TAU / n_phi as f64 * m * m
}

/// Grid case: tensor Gauss nodes in every cell, coincident nodes dropped.
fn grid_circumcircle(g: &DensityGrid, gamma: Point2, order: usize) -> f64 {
    let nodes: Vec<(Point2, f64)> = g
        .nodes(order)
        .into_iter()
        .filter(|(p, _)| *p != gamma)
        .map(|(p, w)| (gamma - p, w))
        .collect();
    let mut s = 0.0;
    for (a, &(xa, wa)) in nodes.iter().enumerate() {
        let mut row = 0.0;
        for &(xb, wb) in &nodes[a + 1..] {
            if xa != xb {
                row += wb * inv_sq_circumdiameter_raw(xa, xb);
            }
        }
        s += 2.0 * wa * row;
    }
    s
}
