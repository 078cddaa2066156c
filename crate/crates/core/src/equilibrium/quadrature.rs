//! Gauss rules and the principal-value rule used by the equilibrium measures.

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss-Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> {
    let (x, w) = gauss_legendre(n);
    let (h, c) = (0.5 * (b - a), 0.5 * (b + a));
    x.into_iter().zip(w).map(move |(x, w)| (c + h * x, h * w))
}

/// Gauss-Chebyshev rule of the second kind: `int sqrt(1-t^2) f(t) dt` on `[-1, 1]`.
pub fn chebyshev_u_rule(n: usize) -> impl Iterator<Item = (f64, f64)> {
    let h = PI / (n as f64 + 1.0);
    (1..=n).map(move |j| {
        let th = j as f64 * h;
        (th.cos(), h * th.sin().powi(2))
    })
}

/// `p.v. int_{-1}^{1} sqrt(1-s^2) g(s) / (t - s) ds` for smooth `g` and `|t| < 1`.
///
/// The singular part is subtracted off: the remainder `(g(s) - g(t)) / (t - s)`
/// is smooth and integrated with the second-kind Chebyshev rule, and the
/// subtracted term is `g(t) * pi * t` exactly.
pub fn pv_sqrt_weight(g: impl Fn(f64) -> f64, t: f64, n: usize) -> f64 {
    let n = if chebyshev_u_rule(n).any(|(s, _)| (s - t).abs() < 1e-9) {
        n + 1
    } else {
        n
    };
    let gt = g(t);
    let smooth: f64 = chebyshev_u_rule(n)
        .map(|(s, w)| w * (g(s) - gt) / (t - s))
        .sum();
    smooth + gt * PI * t
}

/// Sum `sum_k c_k U_k(t)` by Clenshaw recurrence.
pub fn clenshaw_u(coeffs: &[f64], t: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &c in coeffs.iter().rev() {
        let b0 = c + 2.0 * t * b1 - b2;
        b2 = b1;
        b1 = b0;
    }
    b1
}

/// Sum `sum_k c_k T_k(t)` by Clenshaw recurrence.
pub fn clenshaw_t(coeffs: &[f64], t: f64) -> f64 {
    if coeffs.is_empty() {
        return 0.0;
    }
    let (mut b1, mut b2) = (0.0, 0.0);
    for &c in coeffs[1..].iter().rev() {
        let b0 = c + 2.0 * t * b1 - b2;
        b2 = b1;
        b1 = b0;
    }
    coeffs[0] + t * b1 - b2
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(7);
        let s: f64 = w.iter().sum();
        assert_relative_eq!(s, 2.0, max_relative = 1e-14);
        let m12: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(12)).sum();
        assert_relative_eq!(m12, 2.0 / 13.0, max_relative = 1e-13);
        let odd: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(5)).sum();
        assert!(odd.abs() < 1e-15);
    }

    #[test]
    fn legendre_large_order() {
        let s: f64 = gauss_legendre_on(200, 0.0, PI)
            .map(|(x, w)| w * x.sin())
            .sum();
        assert_relative_eq!(s, 2.0, max_relative = 1e-13);
    }

    #[test]
    fn chebyshev_rule_semicircle_area() {
        let s: f64 = chebyshev_u_rule(5).map(|(_, w)| w).sum();
        assert_relative_eq!(s, PI / 2.0, max_relative = 1e-14);
        let m2: f64 = chebyshev_u_rule(5).map(|(t, w)| w * t * t).sum();
        assert_relative_eq!(m2, PI / 8.0, max_relative = 1e-14);
    }

    #[test]
    fn pv_matches_chebyshev_t_identity() {
        // p.v. int sqrt(1-s^2) U_{n-1}(s) / (t - s) ds = pi T_n(t)
        for n in 1..6 {
            let mut c = vec![0.0; n];
            c[n - 1] = 1.0;
            let mut tc = vec![0.0; n + 1];
            tc[n] = 1.0;
            for &t in &[-0.73, -0.1, 0.0, 0.42, 0.91] {
                let v = pv_sqrt_weight(|s| clenshaw_u(&c, s), t, 40);
                assert_relative_eq!(v, PI * clenshaw_t(&tc, t), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn clenshaw_matches_trig_forms() {
        let th: f64 = 0.7;
        let t = th.cos();
        assert_relative_eq!(
            clenshaw_u(&[0.0, 0.0, 0.0, 1.0], t),
            (4.0 * th).sin() / th.sin(),
            max_relative = 1e-14
        );
        assert_relative_eq!(
            clenshaw_t(&[0.0, 0.0, 0.0, 1.0], t),
            (3.0 * th).cos(),
            max_relative = 1e-14
        );
    }
}
