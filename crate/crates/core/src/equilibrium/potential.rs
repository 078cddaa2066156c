use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::point::Point2;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied uniformly convex confining potential on the line.
///
/// In the plane the same profile is used radially, `V(z) = v(|z|)`.
#[derive(Clone)]
pub struct CustomPotential {
    pub name: String,
    pub value: ScalarFn,
    pub grad: ScalarFn,
    pub hess: ScalarFn,
    pub convexity: f64,
}

impl fmt::Debug for CustomPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomPotential")
            .field("name", &self.name)
            .field("convexity", &self.convexity)
            .finish_non_exhaustive()
    }
}

impl PartialEq for CustomPotential {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && Arc::ptr_eq(&self.value, &other.value)
            && Arc::ptr_eq(&self.grad, &other.grad)
            && Arc::ptr_eq(&self.hess, &other.hess)
    }
}

/// Confining potential `V`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    /// `V(x) = x^2 / 2`.
    #[default]
    Quadratic,
    /// `V(x) = x^2 / 2 + quartic * x^4` with `quartic >= 0`.
    Quartic { quartic: f64 },
    #[serde(skip)]
    Custom(CustomPotential),
}

impl PotentialSpec {
    pub fn custom(
        name: impl Into<String>,
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        grad: impl Fn(f64) -> f64 + Send + Sync + 'static,
        hess: impl Fn(f64) -> f64 + Send + Sync + 'static,
        convexity: f64,
    ) -> Result<Self> {
        let p = PotentialSpec::Custom(CustomPotential {
            name: name.into(),
            value: Arc::new(value),
            grad: Arc::new(grad),
            hess: Arc::new(hess),
            convexity,
        });
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PotentialSpec::Quadratic => Ok(()),
            PotentialSpec::Quartic { quartic } => {
                if quartic.is_finite() && *quartic >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::domain(format!(
                        "quartic coefficient must be >= 0, got {quartic}"
                    )))
                }
            }
            PotentialSpec::Custom(c) => {
                if !(c.convexity > 0.0) {
                    return Err(Error::domain("convexity constant must be positive"));
                }
                for k in 0..=200 {
                    let x = -10.0 + 0.1 * k as f64;
                    let h = (c.hess)(x);
                    if !(h >= c.convexity * (1.0 - 1e-12)) {
                        return Err(Error::domain(format!(
                            "V''({x}) = {h} is below the convexity constant {}",
                            c.convexity
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self, PotentialSpec::Quadratic)
    }

    /// Uniform lower bound on `V''`.
    pub fn convexity(&self) -> f64 {
        match self {
            PotentialSpec::Quadratic | PotentialSpec::Quartic { .. } => 1.0,
            PotentialSpec::Custom(c) => c.convexity,
        }
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        match self {
            PotentialSpec::Quadratic => 0.5 * x * x,
            PotentialSpec::Quartic { quartic } => 0.5 * x * x + quartic * x.powi(4),
            PotentialSpec::Custom(c) => (c.value)(x),
        }
    }

    #[inline]
    pub fn grad(&self, x: f64) -> f64 {
        match self {
            PotentialSpec::Quadratic => x,
            PotentialSpec::Quartic { quartic } => x + 4.0 * quartic * x.powi(3),
            PotentialSpec::Custom(c) => (c.grad)(x),
        }
    }

    #[inline]
    pub fn hess(&self, x: f64) -> f64 {
        match self {
            PotentialSpec::Quadratic => 1.0,
            PotentialSpec::Quartic { quartic } => 1.0 + 12.0 * quartic * x * x,
            PotentialSpec::Custom(c) => (c.hess)(x),
        }
    }

    #[inline]
    pub fn value_2d(&self, z: Point2) -> f64 {
        match self {
            PotentialSpec::Quadratic => 0.5 * z.norm_sq(),
            PotentialSpec::Quartic { quartic } => {
                let r2 = z.norm_sq();
                0.5 * r2 + quartic * r2 * r2
            }
            PotentialSpec::Custom(c) => (c.value)(z.norm()),
        }
    }

    #[inline]
    pub fn grad_2d(&self, z: Point2) -> Point2 {
        match self {
            PotentialSpec::Quadratic => z,
            PotentialSpec::Quartic { quartic } => z * (1.0 + 4.0 * quartic * z.norm_sq()),
            PotentialSpec::Custom(c) => {
                let r = z.norm();
                if r == 0.0 {
                    Point2::ZERO
                } else {
                    z * ((c.grad)(r) / r)
                }
            }
        }
    }

    /// Laplacian of the planar potential.
    pub fn laplacian_2d(&self, z: Point2) -> f64 {
        match self {
            PotentialSpec::Quadratic => 2.0,
            PotentialSpec::Quartic { quartic } => 2.0 + 16.0 * quartic * z.norm_sq(),
            PotentialSpec::Custom(c) => {
                let r = z.norm();
                if r == 0.0 {
                    2.0 * (c.hess)(0.0)
                } else {
                    (c.hess)(r) + (c.grad)(r) / r
                }
            }
        }
    }
}
