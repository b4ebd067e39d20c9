use std::f64::consts::PI;
use std::fmt;

use super::SphereError;

/// Radians per arcsecond.
pub const ARCSEC: f64 = PI / (180.0 * 3600.0);

/// A direction on the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkyPosition {
    x: f64,
    y: f64,
    z: f64,
}

impl SkyPosition {
    pub const X: SkyPosition = SkyPosition { x: 1.0, y: 0.0, z: 0.0 };
    pub const Y: SkyPosition = SkyPosition { x: 0.0, y: 1.0, z: 0.0 };
    pub const Z: SkyPosition = SkyPosition { x: 0.0, y: 0.0, z: 1.0 };

    /// Normalizes `(x, y, z)`. Returns `None` for the zero vector or
    /// non-finite input.
    pub fn from_vector(x: f64, y: f64, z: f64) -> Option<Self> {
        let norm = (x * x + y * y + z * z).sqrt();
        if !norm.is_finite() || norm <= f64::MIN_POSITIVE {
            return None;
        }
        Some(SkyPosition { x: x / norm, y: y / norm, z: z / norm })
    }

    pub fn from_array(v: [f64; 3]) -> Option<Self> {
        Self::from_vector(v[0], v[1], v[2])
    }

    pub fn from_radec(ra_deg: f64, dec_deg: f64) -> Result<Self, SphereError> {
        radec_to_unit(ra_deg, dec_deg)
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(&self, other: &SkyPosition) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(&self, other: &SkyPosition) -> [f64; 3] {
        cross(self.to_array(), other.to_array())
    }

    pub fn antipode(&self) -> SkyPosition {
        SkyPosition { x: -self.x, y: -self.y, z: -self.z }
    }

    /// Right ascension in [0, 360) and declination in [-90, 90], degrees.
    pub fn to_radec(&self) -> (f64, f64) {
        let ra = self.y.atan2(self.x).to_degrees();
        let ra = if ra < 0.0 { ra + 360.0 } else { ra };
        let ra = if ra >= 360.0 { 0.0 } else { ra };
        let dec = self.z.atan2((self.x * self.x + self.y * self.y).sqrt()).to_degrees();
        (ra, dec)
    }

    /// Local east and north unit vectors of the tangent plane at this
    /// position. At the poles east is taken along +y.
    pub fn tangent_basis(&self) -> ([f64; 3], [f64; 3]) {
        let rho = (self.x * self.x + self.y * self.y).sqrt();
        let east = if rho < 1e-15 {
            [0.0, 1.0, 0.0]
        } else {
            [-self.y / rho, self.x / rho, 0.0]
        };
        let north = cross(self.to_array(), east);
        (east, north)
    }
}

impl fmt::Display for SkyPosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (ra, dec) = self.to_radec();
        write!(f, "({ra:.9}, {dec:.9})")
    }
}

/// Standard celestial convention: `x = cos dec cos ra`, `y = cos dec sin ra`,
/// `z = sin dec`. RA is taken modulo 360.
pub fn radec_to_unit(ra_deg: f64, dec_deg: f64) -> Result<SkyPosition, SphereError> {
    if !ra_deg.is_finite() || !dec_deg.is_finite() {
        return Err(SphereError::Domain(format!("non-finite coordinates ({ra_deg}, {dec_deg})")));
    }
    if !(-90.0..=90.0).contains(&dec_deg) {
        return Err(SphereError::Domain(format!("declination {dec_deg} outside [-90, 90]")));
    }
    let ra = ra_deg.rem_euclid(360.0).to_radians();
    let dec = dec_deg.to_radians();
    let (sin_ra, cos_ra) = ra.sin_cos();
    let (sin_dec, cos_dec) = dec.sin_cos();
    Ok(SkyPosition::from_vector(cos_dec * cos_ra, cos_dec * sin_ra, sin_dec)
        .expect("trigonometric vector is non-zero"))
}

/// Angle between two directions, `atan2(|p x q|, p . q)`.
pub fn angular_distance(p: &SkyPosition, q: &SkyPosition) -> f64 {
    norm(p.cross(q)).atan2(p.dot(q))
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}
