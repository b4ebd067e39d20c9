//! Unit-sphere geometry and the HTM quad-tree index used for AREA and
//! candidate range searches.

mod htm;
mod index;
mod position;

pub use htm::{cover_circle, depth_of, leaf_id, Cover, Trixel, MAX_DEPTH};
pub use index::{SphereIndex, DEFAULT_DEPTH};
pub use position::{angular_distance, radec_to_unit, SkyPosition, ARCSEC};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SphereError {
    #[error("domain error: {0}")]
    Domain(String),
}
