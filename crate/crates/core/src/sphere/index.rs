use std::collections::BTreeMap;
use std::f64::consts::PI;

use super::htm::{cover_circle, depth_of, leaf_id, MAX_DEPTH};
use super::position::{angular_distance, SkyPosition};
use super::SphereError;

pub const DEFAULT_DEPTH: u8 = 8;

/// Leaf-bucketed HTM index over a fixed set of positions. Object references
/// are indices into the position list the index was built from.
#[derive(Debug, Clone)]
pub struct SphereIndex {
    depth: u8,
    positions: Vec<SkyPosition>,
    buckets: BTreeMap<u64, Vec<u32>>,
}

impl SphereIndex {
    pub fn build(positions: Vec<SkyPosition>, depth: u8) -> Result<Self, SphereError> {
        if depth > MAX_DEPTH {
            return Err(SphereError::Domain(format!("depth {depth} exceeds {MAX_DEPTH}")));
        }
        if positions.len() > u32::MAX as usize {
            return Err(SphereError::Domain("too many objects for one index".into()));
        }
        let mut buckets: BTreeMap<u64, Vec<u32>> = BTreeMap::new();
        for (i, p) in positions.iter().enumerate() {
            buckets.entry(leaf_id(p, depth)).or_default().push(i as u32);
        }
        Ok(SphereIndex { depth, positions, buckets })
    }

    pub fn empty(depth: u8) -> Self {
        SphereIndex { depth, positions: Vec::new(), buckets: BTreeMap::new() }
    }

    pub fn depth(&self) -> u8 {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, object: usize) -> SkyPosition {
        self.positions[object]
    }

    pub fn positions(&self) -> &[SkyPosition] {
        &self.positions
    }

    pub fn buckets(&self) -> impl Iterator<Item = (u64, &[u32])> {
        self.buckets.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    /// Objects within `radius` of `center` that pass `filter`, in ascending
    /// object order. Objects in fully covered trixels skip the distance test.
    pub fn range_search(
        &self,
        center: &SkyPosition,
        radius: f64,
        filter: Option<&dyn Fn(usize) -> bool>,
    ) -> Vec<usize> {
        let keep = |i: usize| filter.is_none_or(|f| f(i));
        if self.positions.is_empty() || radius.is_nan() || radius < 0.0 {
            return Vec::new();
        }
        if radius >= PI {
            return (0..self.positions.len()).filter(|&i| keep(i)).collect();
        }
        let cover = cover_circle(center, radius.max(f64::MIN_POSITIVE), self.depth)
            .expect("radius and depth validated above");

        let mut out = Vec::new();
        for &id in &cover.full {
            let d = depth_of(id).expect("cover ids are well formed");
            let shift = 2 * u32::from(self.depth - d);
            for (_, objs) in self.buckets.range(id << shift..(id + 1) << shift) {
                out.extend(objs.iter().map(|&i| i as usize).filter(|&i| keep(i)));
            }
        }
        for id in &cover.partial {
            if let Some(objs) = self.buckets.get(id) {
                out.extend(objs.iter().map(|&i| i as usize).filter(|&i| {
                    angular_distance(&self.positions[i], center) <= radius && keep(i)
                }));
            }
        }
        out.sort_unstable();
        out
    }
}
