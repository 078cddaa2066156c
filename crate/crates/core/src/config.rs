//! Particle configurations and model coefficients.

use std::cmp::Ordering;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::equilibrium::PotentialSpec;
use crate::error::{Error, Result};
use crate::point::Point2;
use crate::transforms::spiral_cmp;

/// A strictly increasing tuple of `N >= 2` reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Config1D {
    points: Vec<f64>,
}

impl Config1D {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 particles, got {}",
                points.len()
            )));
        }
        if let Some(k) = points.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "coordinate {k} is not finite"
            )));
        }
        if let Some(k) = points.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(format!(
                "not strictly increasing at positions {k} and {}",
                k + 1
            )));
        }
        Ok(Config1D { points })
    }

    /// Sort and validate; fails on ties.
    pub fn from_unsorted(mut points: Vec<f64>) -> Result<Self> {
        points.sort_by(f64::total_cmp);
        Config1D::new(points)
    }

    pub(crate) fn new_unchecked(points: Vec<f64>) -> Self {
        debug_assert!(points.windows(2).all(|w| w[0] < w[1]));
        Config1D { points }
    }

    #[inline]
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn into_points(self) -> Vec<f64> {
        self.points
    }

    /// Smallest consecutive gap.
    pub fn min_gap(&self) -> f64 {
        min_gap_sorted(&self.points)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["x"])?;
        for x in &self.points {
            wtr.write_record([format_f64(*x)])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut pts = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let field = rec.get(0).ok_or_else(|| Error::Io("empty row".into()))?;
            pts.push(parse_f64(field)?);
        }
        Config1D::new(pts)
    }
}

impl TryFrom<Vec<f64>> for Config1D {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Config1D::new(v)
    }
}

impl From<Config1D> for Vec<f64> {
    fn from(c: Config1D) -> Self {
        c.points
    }
}

pub(crate) fn min_gap_sorted(xs: &[f64]) -> f64 {
    xs.windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
}

/// `N >= 2` pairwise distinct planar points, optionally in spiral order.
///
/// The spiral order is taken in a rescaled frame `z / spiral_scale`, so that
/// shells match the unit-disc convention of the ordering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Config2DRepr", into = "Config2DRepr")]
pub struct Config2D {
    points: Vec<Point2>,
    spiral_scale: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct Config2DRepr {
    points: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    spiral_scale: Option<f64>,
}

impl TryFrom<Config2DRepr> for Config2D {
    type Error = Error;
    fn try_from(r: Config2DRepr) -> Result<Self> {
        let pts = r.points.into_iter().map(Point2::from).collect();
        let c = Config2D::new(pts)?;
        match r.spiral_scale {
            Some(s) => {
                let sorted = Config2D::spiral_sorted(c.points.clone(), s)?;
                if sorted.points != c.points {
                    return Err(Error::InvalidConfig(
                        "points are not in spiral order".into(),
                    ));
                }
                Ok(sorted)
            }
            None => Ok(c),
        }
    }
}

impl From<Config2D> for Config2DRepr {
    fn from(c: Config2D) -> Self {
        Config2DRepr {
            points: c.points.into_iter().map(Into::into).collect(),
            spiral_scale: c.spiral_scale,
        }
    }
}

impl Config2D {
    pub fn new(points: Vec<Point2>) -> Result<Self> {
        validate_2d(&points)?;
        Ok(Config2D {
            points,
            spiral_scale: None,
        })
    }

    /// Sort by the spiral order of `z / scale` and mark the result as ordered.
    pub fn spiral_sorted(points: Vec<Point2>, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::domain(format!(
                "spiral scale must be positive, got {scale}"
            )));
        }
        validate_2d(&points)?;
        let mut points = points;
        sort_spiral(&mut points, scale);
        Ok(Config2D {
            points,
            spiral_scale: Some(scale),
        })
    }

    pub(crate) fn new_unchecked(points: Vec<Point2>) -> Self {
        Config2D {
            points,
            spiral_scale: None,
        }
    }

    #[inline]
    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_ordered(&self) -> bool {
        self.spiral_scale.is_some()
    }

    pub fn spiral_scale(&self) -> Option<f64> {
        self.spiral_scale
    }

    pub fn into_points(self) -> Vec<Point2> {
        self.points
    }

    /// Smallest pairwise distance (quadratic cost).
    pub fn min_distance(&self) -> f64 {
        min_distance(&self.points)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["x", "y"])?;
        for p in &self.points {
            wtr.write_record([format_f64(p.x), format_f64(p.y)])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut pts = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() < 2 {
                return Err(Error::Io("expected two columns".into()));
            }
            pts.push(Point2::new(parse_f64(&rec[0])?, parse_f64(&rec[1])?));
        }
        Config2D::new(pts)
    }
}

fn validate_2d(points: &[Point2]) -> Result<()> {
    if points.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 particles, got {}",
            points.len()
        )));
    }
    if let Some(k) = points.iter().position(|p| !p.is_finite()) {
        return Err(Error::InvalidConfig(format!("point {k} is not finite")));
    }
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&a, &b| lex_cmp(points[a], points[b]));
    for w in idx.windows(2) {
        if points[w[0]] == points[w[1]] {
            return Err(Error::InvalidConfig(format!(
                "points {} and {} coincide",
                w[0].min(w[1]),
                w[0].max(w[1])
            )));
        }
    }
    Ok(())
}

fn lex_cmp(a: Point2, b: Point2) -> Ordering {
    a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y))
}

pub(crate) fn sort_spiral(points: &mut [Point2], scale: f64) {
    let n = points.len();
    points.sort_by(|a, b| spiral_cmp(*a / scale, *b / scale, n));
}

pub(crate) fn min_distance(points: &[Point2]) -> f64 {
    let mut best = f64::INFINITY;
    for (k, &p) in points.iter().enumerate() {
        for &q in &points[k + 1..] {
            best = best.min((p - q).norm_sq());
        }
    }
    best.sqrt()
}

/// Model coefficients shared by the games, dynamics and ensembles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameParams {
    pub n_players: usize,
    pub beta: f64,
    pub sigma: f64,
    /// Coefficient of the circumcircle cost (planar games only).
    #[serde(default)]
    pub c1: f64,
    /// Coefficient of the inverse-squared-gap cost.
    #[serde(default)]
    pub c2: f64,
    #[serde(default)]
    pub potential: PotentialSpec,
}

/// Relative tolerance for the coefficient-consistency predicates.
pub const CONSISTENCY_TOL: f64 = 1e-12;

impl GameParams {
    pub fn new(n_players: usize, beta: f64, sigma: f64) -> Result<Self> {
        let p = GameParams {
            n_players,
            beta,
            sigma,
            c1: 0.0,
            c2: 0.0,
            potential: PotentialSpec::Quadratic,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_costs(mut self, c1: f64, c2: f64) -> Self {
        self.c1 = c1;
        self.c2 = c2;
        self
    }

    pub fn with_potential(mut self, potential: PotentialSpec) -> Self {
        self.potential = potential;
        self
    }

    /// Coefficients solving the closed-loop 1D Nash system at this `beta`.
    pub fn closed_loop_1d(n: usize, beta: f64, sigma: f64) -> Result<Self> {
        Ok(GameParams::new(n, beta, sigma)?.with_costs(0.0, closed_c2_1d(beta, sigma)))
    }

    /// Coefficients making the 1D open-loop potential game solvable at this `beta`.
    pub fn open_loop_1d(n: usize, beta: f64, sigma: f64) -> Result<Self> {
        Ok(GameParams::new(n, beta, sigma)?.with_costs(0.0, open_c2_1d(beta, sigma)))
    }

    pub fn closed_loop_2d(n: usize, beta: f64, sigma: f64) -> Result<Self> {
        Ok(GameParams::new(n, beta, sigma)?.with_costs(beta * beta / 8.0, 3.0 * beta * beta / 8.0))
    }

    pub fn open_loop_2d(n: usize, beta: f64, sigma: f64) -> Result<Self> {
        Ok(GameParams::new(n, beta, sigma)?.with_costs(beta * beta / 8.0, beta * beta / 4.0))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_players < 2 {
            return Err(Error::InvalidConfig(format!(
                "n_players must be at least 2, got {}",
                self.n_players
            )));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        for (name, v) in [("beta", self.beta), ("c1", self.c1), ("c2", self.c2)] {
            if !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be finite")));
            }
        }
        self.potential.validate()
    }

    #[inline]
    pub fn sigma_sq(&self) -> f64 {
        self.sigma * self.sigma
    }

    pub fn is_closed_loop_1d(&self) -> bool {
        close(self.c2, closed_c2_1d(self.beta, self.sigma))
    }

    pub fn is_open_loop_1d(&self) -> bool {
        close(self.c2, open_c2_1d(self.beta, self.sigma))
    }

    pub fn is_closed_loop_2d(&self) -> bool {
        let b2 = self.beta * self.beta;
        close(self.c1, b2 / 8.0) && close(self.c2, 3.0 * b2 / 8.0)
    }

    pub fn is_open_loop_2d(&self) -> bool {
        let b2 = self.beta * self.beta;
        close(self.c1, b2 / 8.0) && close(self.c2, b2 / 4.0)
    }
}

/// `C2 = beta (3 beta / 2 - 2 sigma^2) / 4`.
pub fn closed_c2_1d(beta: f64, sigma: f64) -> f64 {
    beta * (1.5 * beta - 2.0 * sigma * sigma) / 4.0
}

/// `C2 = beta (beta - 2 sigma^2) / 4`.
pub fn open_c2_1d(beta: f64, sigma: f64) -> f64 {
    beta * (beta - 2.0 * sigma * sigma) / 4.0
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= CONSISTENCY_TOL * a.abs().max(b.abs()).max(1.0)
}

/// Format with 17 significant digits, the precision used in every CSV.
pub fn format_f64(x: f64) -> String {
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.16e}")
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| Error::Io(format!("cannot parse `{s}`: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unordered_and_short() {
        assert!(Config1D::new(vec![0.0]).is_err());
        assert!(Config1D::new(vec![0.0, 0.0]).is_err());
        assert!(Config1D::new(vec![1.0, 0.0]).is_err());
        assert!(Config1D::new(vec![0.0, f64::NAN]).is_err());
        assert!(Config1D::new(vec![-1.0, 0.0, 1.0]).is_ok());
    }

    #[test]
    fn rejects_coincident_planar_points() {
        let p = Point2::new(0.5, 0.25);
        assert!(Config2D::new(vec![p, Point2::ZERO, p]).is_err());
        assert!(Config2D::new(vec![p, Point2::ZERO]).is_ok());
    }

    #[test]
    fn csv_round_trip() {
        let c = Config1D::new(vec![-1.5, 0.1, 2.0 / 3.0]).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert_eq!(Config1D::read_csv(&buf[..]).unwrap(), c);

        let c2 = Config2D::new(vec![Point2::new(0.1, -0.2), Point2::new(1.0 / 3.0, 4.0)]).unwrap();
        let mut buf = Vec::new();
        c2.write_csv(&mut buf).unwrap();
        assert_eq!(Config2D::read_csv(&buf[..]).unwrap(), c2);
    }

    #[test]
    fn json_round_trip() {
        let c = Config1D::new(vec![-1.0, 0.0, 1.0]).unwrap();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(s, "[-1.0,0.0,1.0]");
        assert_eq!(serde_json::from_str::<Config1D>(&s).unwrap(), c);
        assert!(serde_json::from_str::<Config1D>("[1.0,0.0]").is_err());

        let pts = vec![
            Point2::new(0.9, 0.0),
            Point2::new(0.0, 0.0),
            Point2::new(0.3, 0.1),
        ];
        let c2 = Config2D::spiral_sorted(pts, 1.0).unwrap();
        let s = serde_json::to_string(&c2).unwrap();
        assert_eq!(serde_json::from_str::<Config2D>(&s).unwrap(), c2);
    }

    #[test]
    fn consistency_predicates() {
        let p = GameParams::closed_loop_1d(5, 2.0, 1.0).unwrap();
        assert!(p.is_closed_loop_1d());
        assert!(!p.is_open_loop_1d());
        assert_eq!(p.c2, 0.5);
        let p = GameParams::closed_loop_2d(5, 2.0, 1.0).unwrap();
        assert!(p.is_closed_loop_2d());
        assert_eq!((p.c1, p.c2), (0.5, 1.5));
        assert!(GameParams::open_loop_2d(5, 2.0, 1.0)
            .unwrap()
            .is_open_loop_2d());
        assert!(GameParams::new(5, 2.0, 0.0).is_err());
        assert!(GameParams::new(1, 2.0, 1.0).is_err());
    }

    #[test]
    fn format_uses_seventeen_digits() {
        assert_eq!(format_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(format_f64(1.0 / 3.0).parse::<f64>().unwrap(), 1.0 / 3.0);
    }
}
