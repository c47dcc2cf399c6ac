//! Minimal 3-vector algebra and spherical-angle conventions.
//!
//! Azimuth is measured counter-clockwise from +x in the xy-plane, elevation
//! from the xy-plane towards +z, both in degrees at the API surface.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    /// Unit vector from azimuth and elevation in degrees.
    pub fn from_angles_deg(azimuth: f64, elevation: f64) -> Self {
        let (az, el) = (azimuth.to_radians(), elevation.to_radians());
        Self::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `None` for the zero vector (or anything non-finite).
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self * (1.0 / n))
    }

    /// Elevation above the xy-plane in radians; assumes a unit vector.
    pub fn elevation(self) -> f64 {
        self.z.clamp(-1.0, 1.0).asin()
    }

    pub fn azimuth(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn elevation_deg(self) -> f64 {
        self.elevation().to_degrees()
    }

    pub fn azimuth_deg(self) -> f64 {
        self.azimuth().to_degrees()
    }

    /// Angle between two directions in degrees. Inputs need not be unit.
    pub fn angle_deg(self, other: Vec3) -> f64 {
        // atan2 form stays accurate for nearly parallel vectors.
        self.cross(other).norm().atan2(self.dot(other)).to_degrees()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        v.to_array()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Median of a slice; averages the two middle values for even lengths.
pub(crate) fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    })
}

/// Componentwise median of directions, renormalized to unit length.
pub(crate) fn median_direction(dirs: &[Vec3]) -> Option<Vec3> {
    let mut xs: Vec<f64> = dirs.iter().map(|d| d.x).collect();
    let mut ys: Vec<f64> = dirs.iter().map(|d| d.y).collect();
    let mut zs: Vec<f64> = dirs.iter().map(|d| d.z).collect();
    Vec3::new(median(&mut xs)?, median(&mut ys)?, median(&mut zs)?).normalized()
}
