//! Probabilistic cross-match arithmetic.
//!
//! A candidate tuple is summarized by inverse-variance accumulators
//! `a = sum 1/sigma_i^2` and `a_vec = sum p_i/sigma_i^2`. The constrained
//! maximum-likelihood position is `a_vec / |a_vec|` and the log likelihood
//! there is `-a + |a_vec|`. Tuples are thresholded on
//! `chi = sqrt(2 (a - |a_vec|))`, which for arcsecond errors is the root of
//! the summed squared sigma-normalized offsets from the best position.
//!
//! At arcsecond scale `a` is ~1e12 while `a - |a_vec|` is O(1), so the
//! difference cannot be formed by subtraction. [`Accumulators`] carries it as
//! a separate running term updated without cancellation.

use crate::query::AreaClause;
use crate::sphere::{SkyPosition, SphereIndex};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum XmatchError {
    #[error("tuple has no members")]
    EmptyTuple,
    #[error("tuple members cancel; best position undefined")]
    DegenerateTuple,
    #[error("invalid astrometric error {0} rad")]
    InvalidNoise(f64),
}

/// Circular astrometric error of one archive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArchiveNoise {
    sigma_rad: f64,
}

impl ArchiveNoise {
    pub const MAX_SIGMA_RAD: f64 = 0.1;

    pub fn new(sigma_rad: f64) -> Result<Self, XmatchError> {
        if sigma_rad > 0.0 && sigma_rad < Self::MAX_SIGMA_RAD {
            Ok(ArchiveNoise { sigma_rad })
        } else {
            Err(XmatchError::InvalidNoise(sigma_rad))
        }
    }

    pub fn from_arcsec(sigma_arcsec: f64) -> Result<Self, XmatchError> {
        Self::new(sigma_arcsec * crate::sphere::ARCSEC)
    }

    pub fn sigma_rad(&self) -> f64 {
        self.sigma_rad
    }

    pub fn sigma_arcsec(&self) -> f64 {
        self.sigma_rad / crate::sphere::ARCSEC
    }

    pub fn weight(&self) -> f64 {
        1.0 / (self.sigma_rad * self.sigma_rad)
    }
}

/// Running inverse-variance sums for a partial cross match.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Accumulators {
    pub a: f64,
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
    pub n: u32,
    /// `a - |a_vec|`, maintained incrementally.
    excess: f64,
}

impl Default for Accumulators {
    fn default() -> Self {
        Self::EMPTY
    }
}

impl Accumulators {
    pub const EMPTY: Accumulators = Accumulators { a: 0.0, ax: 0.0, ay: 0.0, az: 0.0, n: 0, excess: 0.0 };

    /// Reassembles accumulators received over the wire.
    pub fn from_parts(a: f64, ax: f64, ay: f64, az: f64, n: u32, excess: f64) -> Self {
        Accumulators { a, ax, ay, az, n, excess }
    }

    pub fn single(pos: &SkyPosition, noise: ArchiveNoise) -> Self {
        Self::EMPTY.fold(pos, noise)
    }

    pub fn vector_norm(&self) -> f64 {
        (self.ax * self.ax + self.ay * self.ay + self.az * self.az).sqrt()
    }

    /// `a - |a_vec|`; never negative.
    pub fn excess(&self) -> f64 {
        self.excess
    }

    /// Adds one observation.
    ///
    /// With `E = a - |v|` and `u = v/|v|`, expanding `a'^2 - |v'|^2` gives
    /// `E' (a' + |v'|) = E (a + |v| + 2w) + w |v| |u - p|^2`, every term of
    /// which is non-negative.
    pub fn fold(&self, pos: &SkyPosition, noise: ArchiveNoise) -> Accumulators {
        let w = noise.weight();
        let [px, py, pz] = pos.to_array();
        let a = self.a + w;
        let (ax, ay, az) = (self.ax + w * px, self.ay + w * py, self.az + w * pz);
        let excess = if self.n == 0 {
            0.0
        } else {
            let v = self.vector_norm();
            let chord_sq = if v > 0.0 {
                let (dx, dy, dz) = (self.ax / v - px, self.ay / v - py, self.az / v - pz);
                dx * dx + dy * dy + dz * dz
            } else {
                0.0
            };
            let v_new = (ax * ax + ay * ay + az * az).sqrt();
            (self.excess * (self.a + v + 2.0 * w) + w * v * chord_sq) / (a + v_new)
        };
        Accumulators { a, ax, ay, az, n: self.n + 1, excess }
    }

    pub fn log_likelihood(&self) -> Result<f64, XmatchError> {
        if self.n == 0 {
            return Err(XmatchError::EmptyTuple);
        }
        Ok(-self.excess)
    }

    pub fn chi(&self) -> Result<f64, XmatchError> {
        if self.n == 0 {
            return Err(XmatchError::EmptyTuple);
        }
        Ok((2.0 * self.excess).sqrt())
    }

    /// The one threshold test shared by the engine and the oracle.
    pub fn accepts(&self, theta: f64) -> bool {
        self.n > 0 && (2.0 * self.excess).sqrt() <= theta && !self.is_degenerate()
    }

    fn is_degenerate(&self) -> bool {
        self.vector_norm() <= 1e-9 * self.a
    }

    pub fn best_position(&self) -> Result<SkyPosition, XmatchError> {
        if self.n == 0 {
            return Err(XmatchError::EmptyTuple);
        }
        if self.is_degenerate() {
            return Err(XmatchError::DegenerateTuple);
        }
        SkyPosition::from_vector(self.ax, self.ay, self.az).ok_or(XmatchError::DegenerateTuple)
    }

    /// Search radius around the best position for objects of an archive with
    /// error `noise`: `theta (sigma_i + 1/sqrt(a))`.
    ///
    /// Appending an object at distance `d` raises `chi^2` by about
    /// `d^2 / (sigma_i^2 + 1/a)`, so any object that keeps `chi <= theta`
    /// lies within `theta sqrt(sigma_i^2 + 1/a)`, which this bounds.
    pub fn candidate_radius(&self, noise: ArchiveNoise, theta: f64) -> f64 {
        if self.a <= 0.0 {
            return f64::INFINITY;
        }
        theta * (noise.sigma_rad() + 1.0 / self.a.sqrt())
    }

    /// Drop-out test: true when no object of `index` inside `area` could be
    /// appended while keeping `chi <= theta`.
    pub fn survives_dropout(&self, index: &SphereIndex, noise: ArchiveNoise, theta: f64, area: &AreaClause) -> bool {
        let (area_center, area_radius) = area.circle();
        let in_area = |i: usize| crate::sphere::angular_distance(&index.position(i), &area_center) <= area_radius;
        let candidates = match self.best_position() {
            Ok(best) => index.range_search(&best, self.candidate_radius(noise, theta), Some(&in_area)),
            Err(_) => (0..index.len()).filter(|&i| in_area(i)).collect(),
        };
        !candidates.into_iter().any(|i| self.fold(&index.position(i), noise).accepts(theta))
    }
}

/// Fold a sequence of observations from the empty accumulator.
pub fn fold_all<'a>(obs: impl IntoIterator<Item = (&'a SkyPosition, ArchiveNoise)>) -> Accumulators {
    obs.into_iter().fold(Accumulators::EMPTY, |acc, (p, s)| acc.fold(p, s))
}

/// One member of a candidate tuple.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Member {
    pub archive: String,
    pub object_id: i64,
}

/// A partial cross match travelling along the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateTuple {
    pub members: Vec<Member>,
    pub acc: Accumulators,
    /// Values for the partial result set's carried-column schema, in order.
    pub carried: Vec<Value>,
}

impl CandidateTuple {
    /// Members sorted by archive name, for order-insensitive comparison.
    pub fn canonical_members(&self) -> Vec<Member> {
        let mut m = self.members.clone();
        m.sort();
        m
    }
}
