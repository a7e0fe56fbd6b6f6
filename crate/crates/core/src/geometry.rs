//! Bounded spatial domains and backward free-streaming queries.
//!
//! Positions are always carried as three components. A slab only reads the
//! first one, a disk the first two; velocities stay three-dimensional in
//! every geometry.

use crate::{dot3, norm3, BgkError, Result, Vec3};

/// Distance from the boundary below which a point counts as lying on it.
pub const BOUNDARY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    /// `x1` in `[0, length]`, walls at both ends.
    Slab { length: f64 },
    /// Planar disk of the given radius in the `(x1, x2)` plane.
    Disk { radius: f64 },
    /// Ball of the given radius.
    Ball { radius: f64 },
}

/// Result of a backward ray query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exit {
    /// The ray `x - s v` leaves the domain at `s = time`, at `point`.
    Hit { time: f64, point: Vec3 },
    /// The ray never reaches the boundary (grazing or zero velocity).
    NoExit,
}

impl Exit {
    pub fn time(&self) -> Option<f64> {
        match self {
            Exit::Hit { time, .. } => Some(*time),
            Exit::NoExit => None,
        }
    }
}

impl Domain {
    pub fn slab(length: f64) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(BgkError::Config(format!("slab length must be positive, got {length}")));
        }
        Ok(Domain::Slab { length })
    }

    pub fn disk(radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(BgkError::Config(format!("disk radius must be positive, got {radius}")));
        }
        Ok(Domain::Disk { radius })
    }

    pub fn ball(radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(BgkError::Config(format!("ball radius must be positive, got {radius}")));
        }
        Ok(Domain::Ball { radius })
    }

    /// Number of position components the domain actually uses.
    pub fn dimension(&self) -> usize {
        match self {
            Domain::Slab { .. } => 1,
            Domain::Disk { .. } => 2,
            Domain::Ball { .. } => 3,
        }
    }

    /// Lebesgue measure of the domain (length, area or volume).
    pub fn measure(&self) -> f64 {
        match *self {
            Domain::Slab { length } => length,
            Domain::Disk { radius } => std::f64::consts::PI * radius * radius,
            Domain::Ball { radius } => 4.0 / 3.0 * std::f64::consts::PI * radius.powi(3),
        }
    }

    /// Zeroes the components the domain ignores.
    fn active(&self, x: &Vec3) -> Vec3 {
        match self {
            Domain::Slab { .. } => [x[0], 0.0, 0.0],
            Domain::Disk { .. } => [x[0], x[1], 0.0],
            Domain::Ball { .. } => *x,
        }
    }

    /// Signed boundary function: negative inside, zero on the boundary.
    pub fn level(&self, x: &Vec3) -> f64 {
        match *self {
            Domain::Slab { length } => (-x[0]).max(x[0] - length),
            Domain::Disk { radius } | Domain::Ball { radius } => norm3(&self.active(x)) - radius,
        }
    }

    /// True iff `x` is strictly interior.
    pub fn contains(&self, x: &Vec3) -> bool {
        self.level(x) < 0.0
    }

    pub fn outward_normal(&self, xb: &Vec3) -> Result<Vec3> {
        match *self {
            Domain::Slab { length } => {
                if xb[0].abs() <= BOUNDARY_TOLERANCE {
                    Ok([-1.0, 0.0, 0.0])
                } else if (xb[0] - length).abs() <= BOUNDARY_TOLERANCE {
                    Ok([1.0, 0.0, 0.0])
                } else {
                    Err(BgkError::Domain(format!("x1 = {} is not on a slab wall", xb[0])))
                }
            }
            Domain::Disk { radius } | Domain::Ball { radius } => {
                let p = self.active(xb);
                let r = norm3(&p);
                if (r - radius).abs() > BOUNDARY_TOLERANCE {
                    return Err(BgkError::Domain(format!(
                        "|x| = {r} is not on the boundary of radius {radius}"
                    )));
                }
                Ok([p[0] / r, p[1] / r, p[2] / r])
            }
        }
    }

    /// Backward exit time `t_b = sup{s >= 0 : x - s v in domain}` and the
    /// exit point `x - t_b v`.
    ///
    /// A boundary point whose backward ray immediately leaves the domain
    /// (`n . v < 0`) exits at `t_b = 0`. Grazing rays and zero velocities
    /// return [`Exit::NoExit`].
    pub fn backward_exit(&self, x: &Vec3, v: &Vec3) -> Exit {
        match *self {
            Domain::Slab { length } => {
                let (x1, v1) = (x[0], v[0]);
                if v1 > 0.0 {
                    Exit::Hit { time: (x1 / v1).max(0.0), point: [0.0, 0.0, 0.0] }
                } else if v1 < 0.0 {
                    Exit::Hit { time: ((length - x1) / -v1).max(0.0), point: [length, 0.0, 0.0] }
                } else {
                    Exit::NoExit
                }
            }
            Domain::Disk { radius } | Domain::Ball { radius } => {
                let p = self.active(x);
                let w = self.active(v);
                let a = dot3(&w, &w);
                if a == 0.0 {
                    return Exit::NoExit;
                }
                // |p - s w|^2 = R^2  <=>  a s^2 - 2 b s + c = 0
                let b = dot3(&p, &w);
                let c = dot3(&p, &p) - radius * radius;
                let disc = (b * b - a * c).max(0.0);
                let root = disc.sqrt();
                let on_boundary = c.abs() <= 2.0 * radius * BOUNDARY_TOLERANCE;
                let time = if on_boundary {
                    if b > 0.0 {
                        2.0 * b / a
                    } else if b < 0.0 {
                        0.0
                    } else {
                        return Exit::NoExit;
                    }
                } else if b >= 0.0 {
                    (b + root) / a
                } else {
                    // numerically stable form of the positive root
                    c / (b - root)
                };
                let mut point = [p[0] - time * w[0], p[1] - time * w[1], p[2] - time * w[2]];
                let r = norm3(&point);
                if r > 0.0 {
                    for comp in point.iter_mut() {
                        *comp *= radius / r;
                    }
                }
                Exit::Hit { time: time.max(0.0), point }
            }
        }
    }

    /// Maps a point drawn uniformly from the unit cube `[0,1)^3` to a
    /// uniformly distributed interior point (rejection-free for the slab,
    /// polar/spherical inversion otherwise).
    pub fn uniform_point(&self, u: [f64; 3]) -> Vec3 {
        match *self {
            Domain::Slab { length } => [u[0] * length, 0.0, 0.0],
            Domain::Disk { radius } => {
                let r = radius * u[0].sqrt();
                let phi = 2.0 * std::f64::consts::PI * u[1];
                [r * phi.cos(), r * phi.sin(), 0.0]
            }
            Domain::Ball { radius } => {
                let r = radius * u[0].cbrt();
                let cos_t = 1.0 - 2.0 * u[1];
                let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
                let phi = 2.0 * std::f64::consts::PI * u[2];
                [r * sin_t * phi.cos(), r * sin_t * phi.sin(), r * cos_t]
            }
        }
    }
}
