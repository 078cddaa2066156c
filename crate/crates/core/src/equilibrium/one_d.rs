use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::potential::PotentialSpec;
use super::quadrature::{chebyshev_u_rule, clenshaw_t, clenshaw_u, pv_sqrt_weight};
use crate::config::format_f64;
use crate::error::{Error, Result};

/// Nodes used by the default quadratures over a one-cut measure.
const DEFAULT_NODES: usize = 256;

/// One-interval equilibrium measure on `[center - r, center + r]`.
///
/// The density is stored as `m(center + r t) = sqrt(1 - t^2) sum_k e_k U_k(t)`,
/// which vanishes like a square root at both edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumMeasure1D {
    beta: f64,
    center: f64,
    half_width: f64,
    coeffs: Vec<f64>,
}

/// Wigner semicircle on `[-sqrt(2 beta), sqrt(2 beta)]`, the equilibrium
/// measure of the quadratic potential.
pub fn semicircle(beta: f64) -> Result<EquilibriumMeasure1D> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::domain(format!("beta must be positive, got {beta}")));
    }
    let r = (2.0 * beta).sqrt();
    Ok(EquilibriumMeasure1D {
        beta,
        center: 0.0,
        half_width: r,
        coeffs: vec![r / (PI * beta)],
    })
}

/// Equilibrium measure of a uniformly convex potential.
pub fn solve_one_cut(potential: &PotentialSpec, beta: f64) -> Result<EquilibriumMeasure1D> {
    solve_one_cut_with(potential, beta, 128)
}

/// [`solve_one_cut`] with an explicit number of Chebyshev sample nodes for `V'`.
pub fn solve_one_cut_with(
    potential: &PotentialSpec,
    beta: f64,
    nodes: usize,
) -> Result<EquilibriumMeasure1D> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::domain(format!("beta must be positive, got {beta}")));
    }
    potential.validate()?;
    let nodes = nodes.max(16);
    let (center, half_width) = solve_endpoints(potential, beta, nodes)?;
    let d = chebyshev_coeffs(|t| potential.grad(center + half_width * t), nodes);
    let last = d
        .iter()
        .rposition(|c| c.abs() > 1e-15 * d[1].abs())
        .unwrap_or(1);
    let coeffs: Vec<f64> = d[1..=last.max(1)].iter().map(|c| c / (beta * PI)).collect();
    let mu = EquilibriumMeasure1D {
        beta,
        center,
        half_width,
        coeffs,
    };
    mu.check_nonnegative()?;
    Ok(mu)
}

/// Chebyshev coefficients `f(t) = sum d_n T_n(t)` from `n` first-kind nodes.
fn chebyshev_coeffs(f: impl Fn(f64) -> f64, n: usize) -> Vec<f64> {
    let vals: Vec<f64> = (0..n)
        .map(|j| f((PI * (j as f64 + 0.5) / n as f64).cos()))
        .collect();
    (0..n)
        .map(|k| {
            let s: f64 = vals
                .iter()
                .enumerate()
                .map(|(j, v)| v * (PI * k as f64 * (j as f64 + 0.5) / n as f64).cos())
                .sum();
            if k == 0 {
                s / n as f64
            } else {
                2.0 * s / n as f64
            }
        })
        .collect()
}

/// Newton iteration on `(center, r)` for the two edge conditions:
/// `V'` has no `T_0` component and `r d_1 = 2 beta` (unit mass).
fn solve_endpoints(v: &PotentialSpec, beta: f64, nodes: usize) -> Result<(f64, f64)> {
    let thetas: Vec<f64> = (0..nodes)
        .map(|j| PI * (j as f64 + 0.5) / nodes as f64)
        .collect();
    let residual = |c: f64, r: f64| -> [f64; 2] {
        let (mut d0, mut d1) = (0.0, 0.0);
        for &th in &thetas {
            let g = v.grad(c + r * th.cos());
            d0 += g;
            d1 += g * th.cos();
        }
        d0 /= nodes as f64;
        d1 *= 2.0 / nodes as f64;
        [d0, r * d1 - 2.0 * beta]
    };

    let mut c = stationary_point(v)?;
    let mut r = (2.0 * beta / v.hess(c)).sqrt();
    let mut f = residual(c, r);
    let scale = 2.0 * beta;
    const MAX_ITER: usize = 100;
    for _ in 0..MAX_ITER {
        let norm = f[0].abs().max(f[1].abs());
        if norm <= 1e-14 * scale {
            return Ok((c, r));
        }
        let (mut j00, mut j01, mut j11, mut d1) = (0.0, 0.0, 0.0, 0.0);
        for &th in &thetas {
            let ct = th.cos();
            let h = v.hess(c + r * ct);
            j00 += h;
            j01 += h * ct;
            j11 += h * ct * ct;
            d1 += v.grad(c + r * ct) * ct;
        }
        let m = nodes as f64;
        let (a, b) = (j00 / m, j01 / m);
        let (cc, dd) = (2.0 * r * j01 / m, 2.0 * d1 / m + 2.0 * r * j11 / m);
        let det = a * dd - b * cc;
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let dc = (f[0] * dd - b * f[1]) / det;
        let dr = (a * f[1] - cc * f[0]) / det;
        let mut step = 1.0;
        loop {
            let (c1, r1) = (c - step * dc, r - step * dr);
            if r1 > 0.0 {
                let f1 = residual(c1, r1);
                if f1[0].abs().max(f1[1].abs()) < norm || step < 1e-6 {
                    c = c1;
                    r = r1;
                    f = f1;
                    break;
                }
            }
            step *= 0.5;
            if step < 1e-12 {
                return Err(Error::Solver {
                    iterations: MAX_ITER,
                    residual: norm,
                });
            }
        }
    }
    let norm = f[0].abs().max(f[1].abs());
    if norm <= 1e-12 * scale {
        Ok((c, r))
    } else {
        Err(Error::Solver {
            iterations: MAX_ITER,
            residual: norm,
        })
    }
}

/// Root of `V'` by safeguarded Newton.
fn stationary_point(v: &PotentialSpec) -> Result<f64> {
    let (mut lo, mut hi) = (-1.0, 1.0);
    let mut expand = 0;
    while v.grad(lo) > 0.0 {
        lo *= 2.0;
        expand += 1;
        if expand > 200 {
            return Err(Error::Solver {
                iterations: expand,
                residual: v.grad(lo),
            });
        }
    }
    while v.grad(hi) < 0.0 {
        hi *= 2.0;
        expand += 1;
        if expand > 200 {
            return Err(Error::Solver {
                iterations: expand,
                residual: v.grad(hi),
            });
        }
    }
    let mut x = 0.0f64.clamp(lo, hi);
    for _ in 0..200 {
        let g = v.grad(x);
        if g == 0.0 {
            return Ok(x);
        }
        if g > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let nx = x - g / v.hess(x);
        x = if nx > lo && nx < hi {
            nx
        } else {
            0.5 * (lo + hi)
        };
        if (hi - lo).abs() < 1e-15 * (1.0 + x.abs()) || g.abs() < 1e-15 {
            return Ok(x);
        }
    }
    Ok(x)
}

impl EquilibriumMeasure1D {
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Support endpoints `(a, b)`.
    pub fn support(&self) -> (f64, f64) {
        (self.center - self.half_width, self.center + self.half_width)
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    #[inline]
    fn to_unit(&self, x: f64) -> f64 {
        (x - self.center) / self.half_width
    }

    /// Smooth factor `g(t)` with `m = sqrt(1 - t^2) g(t)`.
    #[inline]
    fn profile(&self, t: f64) -> f64 {
        clenshaw_u(&self.coeffs, t)
    }

    pub fn density(&self, x: f64) -> f64 {
        let t = self.to_unit(x);
        if t.abs() >= 1.0 {
            return 0.0;
        }
        (1.0 - t * t).sqrt() * self.profile(t)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let t = self.to_unit(x);
        if t <= -1.0 {
            return 0.0;
        }
        if t >= 1.0 {
            return 1.0;
        }
        let th = t.acos();
        let g = |j: usize| -> f64 {
            if j == 0 {
                PI - th
            } else {
                -(j as f64 * th).sin() / j as f64
            }
        };
        let s: f64 = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, e)| e * (g(k) - g(k + 2)))
            .sum();
        (0.5 * self.half_width * s).clamp(0.0, 1.0)
    }

    /// `gamma^q`: the point with `cdf = q`.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::domain(format!(
                "quantile level must lie in [0, 1], got {q}"
            )));
        }
        let (a, b) = self.support();
        if q == 0.0 {
            return Ok(a);
        }
        if q == 1.0 {
            return Ok(b);
        }
        const TOL: f64 = 1e-12;
        let (mut lo, mut hi) = (a, b);
        let mut x = self.mean();
        for it in 0..260 {
            let f = self.cdf(x) - q;
            if f.abs() <= TOL {
                return Ok(x);
            }
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let m = self.density(x);
            let newton = x - f / m;
            x = if it < 60 && m > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo < 1e-15 * (b - a) {
                return Ok(x);
            }
        }
        Ok(x)
    }

    /// Hilbert transform `p.v. int m(y) / (x - y) dy` from the closed-form
    /// series on the support and by direct quadrature off it.
    pub fn hilbert(&self, x: f64) -> f64 {
        let t = self.to_unit(x);
        if t.abs() < 1.0 {
            let mut tc = vec![0.0; self.coeffs.len() + 1];
            for (k, e) in self.coeffs.iter().enumerate() {
                tc[k + 1] = PI * e;
            }
            clenshaw_t(&tc, t)
        } else {
            let s: f64 = chebyshev_u_rule(DEFAULT_NODES)
                .map(|(s, w)| w * self.profile(s) / (t - s))
                .sum();
            s
        }
    }

    /// Hilbert transform computed by principal-value quadrature with `n` nodes.
    pub fn hilbert_pv(&self, x: f64, n: usize) -> f64 {
        self.pv_integral(x, |_| 1.0, n)
    }

    /// `p.v. int f(y) m(y) / (x - y) dy` for smooth `f` and interior `x`.
    pub fn pv_integral(&self, x: f64, f: impl Fn(f64) -> f64, n: usize) -> f64 {
        let t = self.to_unit(x);
        pv_sqrt_weight(
            |s| self.profile(s) * f(self.center + self.half_width * s),
            t,
            n,
        )
    }

    /// `int f dmu` by the second-kind Chebyshev rule with `n` nodes.
    pub fn integrate_with(&self, f: impl Fn(f64) -> f64, n: usize) -> f64 {
        let r = self.half_width;
        chebyshev_u_rule(n)
            .map(|(s, w)| w * r * self.profile(s) * f(self.center + r * s))
            .sum()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.integrate_with(f, DEFAULT_NODES)
    }

    pub fn mass(&self) -> f64 {
        self.integrate(|_| 1.0)
    }

    pub fn mean(&self) -> f64 {
        self.integrate(|x| x)
    }

    /// `int m(x)^3 dx`.
    pub fn density_cubed_integral(&self) -> f64 {
        self.integrate(|x| self.density(x).powi(2))
    }

    /// Sup over an interior grid of `|beta H mu - V'|`.
    pub fn euler_lagrange_residual(
        &self,
        potential: &PotentialSpec,
        points: usize,
        pv_nodes: usize,
    ) -> f64 {
        let (a, b) = self.support();
        (1..points)
            .map(|k| a + (b - a) * k as f64 / points as f64)
            .map(|x| (self.beta * self.hilbert_pv(x, pv_nodes) - potential.grad(x)).abs())
            .fold(0.0, f64::max)
    }

    fn check_nonnegative(&self) -> Result<()> {
        let n = 2000;
        for k in 1..n {
            let t = -1.0 + 2.0 * k as f64 / n as f64;
            let g = self.profile(t);
            if g < -1e-10 * self.coeffs[0].abs() {
                return Err(Error::domain(format!(
                    "density turns negative at x = {}; the support is not a single interval",
                    self.center + self.half_width * t
                )));
            }
        }
        Ok(())
    }

    /// Equispaced density table `(x, m(x))` over the support.
    pub fn density_table(&self, points: usize) -> Vec<(f64, f64)> {
        let (a, b) = self.support();
        let points = points.max(2);
        (0..points)
            .map(|k| {
                let x = a + (b - a) * k as f64 / (points - 1) as f64;
                (x, self.density(x))
            })
            .collect()
    }

    pub fn write_density_csv<W: Write>(&self, w: W, points: usize) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["x", "m"])?;
        for (x, m) in self.density_table(points) {
            wtr.write_record([format_f64(x), format_f64(m)])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn semicircle_at_two() {
        let mu = semicircle(2.0).unwrap();
        assert_relative_eq!(mu.density(0.0), 1.0 / PI, max_relative = 1e-15);
        assert_eq!(mu.support(), (-2.0, 2.0));
        assert!(mu.quantile(0.5).unwrap().abs() < 1e-12);
        assert!(semicircle(0.0).is_err());
        assert!(semicircle(-1.0).is_err());
    }

    #[test]
    fn semicircle_second_moment() {
        // closed-form density integrated on a fine midpoint grid
        let n = 200_000;
        let h = 4.0 / n as f64;
        let m2: f64 = (0..n)
            .map(|k| {
                let x = -2.0 + (k as f64 + 0.5) * h;
                x * x * (4.0 - x * x).sqrt() / (2.0 * PI) * h
            })
            .sum();
        assert_relative_eq!(m2, 1.0, max_relative = 1e-6);
        let mu = semicircle(2.0).unwrap();
        assert_relative_eq!(mu.integrate(|x| x * x), 1.0, max_relative = 1e-13);
    }

    #[test]
    fn density_matches_closed_form() {
        for &beta in &[0.5, 4.0 / 3.0, 2.0, 4.0] {
            let mu = semicircle(beta).unwrap();
            for k in -9..=9 {
                let x = k as f64 / 10.0 * (2.0 * beta).sqrt();
                let exact = (2.0 * beta - x * x).sqrt() / (PI * beta);
                assert_relative_eq!(mu.density(x), exact, max_relative = 1e-13, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn cdf_quantile_round_trip() {
        let mu = semicircle(2.0).unwrap();
        for k in 0..=100 {
            let q = k as f64 / 100.0;
            let x = mu.quantile(q).unwrap();
            assert!((mu.cdf(x) - q).abs() <= 1e-10, "q = {q}");
        }
        assert!(mu.quantile(1.5).is_err());
    }

    #[test]
    fn hilbert_routes_agree() {
        let mu = semicircle(3.0).unwrap();
        for k in -9..=9 {
            let x = k as f64 * 0.25;
            assert_relative_eq!(mu.hilbert(x), x / 3.0, epsilon = 1e-14);
            assert_relative_eq!(mu.hilbert_pv(x, 64), x / 3.0, epsilon = 1e-12);
        }
        // outside the support H mu(x) = (x - sqrt(x^2 - 2 beta)) / beta
        let x = 3.5;
        assert_relative_eq!(
            mu.hilbert(x),
            (x - (x * x - 6.0f64).sqrt()) / 3.0,
            max_relative = 1e-10
        );
    }

    #[test]
    fn quadratic_one_cut_is_semicircle() {
        let mu = solve_one_cut(&PotentialSpec::Quadratic, 2.0).unwrap();
        let sc = semicircle(2.0).unwrap();
        for k in 1..100 {
            let x = -2.0 + 4.0 * k as f64 / 100.0;
            assert!((mu.density(x) - sc.density(x)).abs() <= 1e-6);
        }
        assert!(mu.center().abs() < 1e-14);
        assert_relative_eq!(mu.half_width(), 2.0, max_relative = 1e-13);
    }

    #[test]
    fn quartic_one_cut_matches_edge_equation() {
        // V' = x + 4 a x^3: mass condition r^2 + 3 a r^4 = 2 beta
        let a = 0.1;
        let beta = 2.0;
        let v = PotentialSpec::Quartic { quartic: a };
        let mu = solve_one_cut(&v, beta).unwrap();
        let r2 = (-1.0 + (1.0 + 24.0 * a * beta).sqrt()) / (6.0 * a);
        assert_relative_eq!(mu.half_width(), r2.sqrt(), max_relative = 1e-12);
        assert!(mu.half_width() < 2.0);
        let fine = solve_one_cut_with(&v, beta, 256).unwrap();
        assert_relative_eq!(mu.half_width(), fine.half_width(), max_relative = 1e-13);
        assert_relative_eq!(mu.mass(), 1.0, max_relative = 1e-8);
        assert!(mu.euler_lagrange_residual(&v, 50, 128) < 1e-6);
        let (lo, hi) = mu.support();
        assert!(mu.density(lo).abs() < 1e-12 && mu.density(hi).abs() < 1e-12);
    }

    #[test]
    fn asymmetric_custom_potential() {
        let v = PotentialSpec::custom(
            "shifted",
            |x| 0.5 * (x - 1.0).powi(2) + 0.05 * x.powi(4),
            |x| (x - 1.0) + 0.2 * x.powi(3),
            |x| 1.0 + 0.6 * x * x,
            1.0,
        )
        .unwrap();
        let mu = solve_one_cut(&v, 1.5).unwrap();
        assert_relative_eq!(mu.mass(), 1.0, max_relative = 1e-8);
        assert!(mu.euler_lagrange_residual(&v, 50, 128) < 1e-6);
        let q = mu.quantile(0.3).unwrap();
        assert!((mu.cdf(q) - 0.3).abs() < 1e-10);
    }
}
