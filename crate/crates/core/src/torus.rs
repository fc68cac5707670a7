//! Flat unit torus `[0,1)²` and plane vectors.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use rand::Rng;
use serde::{Deserialize, Serialize};

/// A point of the unit torus. Both coordinates always lie in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    u: f64,
    v: f64,
}

#[inline]
fn wrap_unit(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    // rem_euclid rounds tiny negatives up to exactly 1.0
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Minimal-image representative of a coordinate difference, in `[-1/2, 1/2]`.
#[inline]
pub(crate) fn minimal_image(d: f64) -> f64 {
    d - d.round()
}

impl TorusPoint {
    /// Builds a point, wrapping arbitrary real coordinates onto the torus.
    pub fn new(u: f64, v: f64) -> Self {
        Self {
            u: wrap_unit(u),
            v: wrap_unit(v),
        }
    }

    pub fn origin() -> Self {
        Self { u: 0.0, v: 0.0 }
    }

    /// Uniform sample on the torus.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::new(rng.random::<f64>(), rng.random::<f64>())
    }

    #[inline]
    pub fn u(&self) -> f64 {
        self.u
    }

    #[inline]
    pub fn v(&self) -> f64 {
        self.v
    }

    /// Translate by a plane vector, wrapping around.
    pub fn shifted(&self, by: Vec2) -> Self {
        Self::new(self.u + by.x, self.v + by.y)
    }

    /// Minimal-image separation vector `self - other`, each component in `[-1/2, 1/2]`.
    ///
    /// `a.separation(b) == -b.separation(a)` holds bit-for-bit.
    #[inline]
    pub fn separation(&self, other: &TorusPoint) -> Vec2 {
        Vec2::new(
            minimal_image(self.u - other.u),
            minimal_image(self.v - other.v),
        )
    }

    /// Flat torus distance, at most `√2/2`.
    #[inline]
    pub fn distance(&self, other: &TorusPoint) -> f64 {
        self.separation(other).norm()
    }
}

/// Torus distance `min_k |x - y + k|`.
pub fn torus_distance(x: TorusPoint, y: TorusPoint) -> f64 {
    x.distance(&y)
}

/// A vector of the plane (velocities, gradients, separations).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Rotation by -90 degrees applied to a gradient: `(∂₂, -∂₁)`.
    #[inline]
    pub fn perp(self) -> Vec2 {
        Vec2::new(self.y, -self.x)
    }

    /// `self × other` (z-component of the cross product).
    #[inline]
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    #[inline]
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    #[inline]
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    #[inline]
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    #[inline]
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    #[inline]
    fn mul(self, v: Vec2) -> Vec2 {
        Vec2::new(self * v.x, self * v.y)
    }
}
