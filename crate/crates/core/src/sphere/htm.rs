//! Hierarchical triangular mesh over the octahedron.
//!
//! Trixel ids follow the usual HTM bit layout: a leading marker bit, three
//! bits naming the root triangle (`S0..S3 = 8..11`, `N0..N3 = 12..15` once
//! the marker is included), then two bits per subdivision level naming the
//! child. The depth of an id is therefore `(bit_length - 4) / 2`, and all
//! descendants of a trixel at depth `d` occupy one contiguous id range at
//! any deeper level.

use std::f64::consts::{FRAC_PI_2, PI};

use super::position::{angular_distance, cross, dot, norm, SkyPosition};
use super::SphereError;

/// Deepest supported subdivision level; ids stay within 64 bits.
pub const MAX_DEPTH: u8 = 25;

/// Slack applied when classifying trixels against a circle. Inside-tests
/// shrink the circle by this many radians and intersection tests grow it,
/// so floating error can only produce extra partial trixels.
const CLASSIFY_MARGIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trixel {
    pub id: u64,
    pub depth: u8,
    pub vertices: [SkyPosition; 3],
}

/// Result of covering a circle with trixels.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Cover {
    /// Trixels entirely inside the circle; may be shallower than the
    /// requested depth.
    pub full: Vec<u64>,
    /// Trixels at the requested depth that intersect the circle boundary.
    pub partial: Vec<u64>,
}

impl Cover {
    pub fn contains(&self, id: u64) -> bool {
        self.full.contains(&id) || self.partial.contains(&id)
    }

    /// True if `leaf` (at `leaf_depth`) is one of the listed trixels or a
    /// descendant of one.
    pub fn covers_leaf(&self, leaf: u64, leaf_depth: u8) -> bool {
        self.full.iter().chain(&self.partial).any(|&id| match depth_of(id) {
            Some(d) if d <= leaf_depth => leaf >> (2 * (leaf_depth - d)) == id,
            _ => false,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Relation {
    Disjoint,
    Partial,
    Inside,
}

fn octahedron() -> [SkyPosition; 6] {
    [
        SkyPosition::Z,
        SkyPosition::X,
        SkyPosition::Y,
        SkyPosition::X.antipode(),
        SkyPosition::Y.antipode(),
        SkyPosition::Z.antipode(),
    ]
}

impl Trixel {
    /// The eight root triangles, ids 8..=15, vertices counter-clockwise seen
    /// from outside the sphere.
    pub fn roots() -> [Trixel; 8] {
        let v = octahedron();
        let tri = |id: u64, a: usize, b: usize, c: usize| Trixel {
            id,
            depth: 0,
            vertices: [v[a], v[b], v[c]],
        };
        [
            tri(8, 1, 5, 2),
            tri(9, 2, 5, 3),
            tri(10, 3, 5, 4),
            tri(11, 4, 5, 1),
            tri(12, 1, 0, 4),
            tri(13, 4, 0, 3),
            tri(14, 3, 0, 2),
            tri(15, 2, 0, 1),
        ]
    }

    /// 4-way midpoint split. Child `k` has id `self.id << 2 | k`.
    pub fn children(&self) -> [Trixel; 4] {
        let [v0, v1, v2] = self.vertices;
        let mid = |a: SkyPosition, b: SkyPosition| {
            SkyPosition::from_vector(a.x() + b.x(), a.y() + b.y(), a.z() + b.z())
                .expect("trixel edge is shorter than a half circle")
        };
        let w0 = mid(v1, v2);
        let w1 = mid(v0, v2);
        let w2 = mid(v0, v1);
        let child = |k: u64, vertices| Trixel { id: self.id << 2 | k, depth: self.depth + 1, vertices };
        [child(0, [v0, w2, w1]), child(1, [v1, w0, w2]), child(2, [v2, w1, w0]), child(3, [w0, w1, w2])]
    }

    pub fn from_id(id: u64) -> Result<Trixel, SphereError> {
        let depth = depth_of(id).ok_or_else(|| SphereError::Domain(format!("invalid trixel id {id}")))?;
        let root = (id >> (2 * depth as u32)) as usize;
        let mut t = Trixel::roots()[root - 8];
        for level in (0..depth).rev() {
            let k = ((id >> (2 * level as u32)) & 3) as usize;
            t = t.children()[k];
        }
        Ok(t)
    }

    /// Signed margins of `p` against the three edge planes, each normalized
    /// so it approximates the angular distance to that edge's great circle.
    fn edge_margins(&self, p: &SkyPosition) -> [f64; 3] {
        let [a, b, c] = self.vertices;
        let m = |u: &SkyPosition, v: &SkyPosition| {
            let n = u.cross(v);
            dot(n, p.to_array()) / norm(n)
        };
        [m(&a, &b), m(&b, &c), m(&c, &a)]
    }

    fn min_margin(&self, p: &SkyPosition) -> f64 {
        let m = self.edge_margins(p);
        m[0].min(m[1]).min(m[2])
    }

    pub fn contains(&self, p: &SkyPosition) -> bool {
        self.min_margin(p) >= -1e-15
    }

    /// Spherical excess (steradians).
    pub fn area(&self) -> f64 {
        let [a, b, c] = self.vertices;
        let triple = dot(a.to_array(), b.cross(&c)).abs();
        2.0 * triple.atan2(1.0 + a.dot(&b) + b.dot(&c) + c.dot(&a))
    }

    fn classify(&self, center: &SkyPosition, radius: f64) -> Relation {
        let inner = radius - CLASSIFY_MARGIN;
        let all_inside = self.vertices.iter().all(|v| angular_distance(v, center) <= inner);
        if all_inside {
            // A cap wider than a hemisphere is not convex; the triangle is
            // only inside if it also avoids the complementary cap.
            if radius <= FRAC_PI_2
                || !self.intersects(&center.antipode(), PI - radius + CLASSIFY_MARGIN)
            {
                return Relation::Inside;
            }
        }
        if self.intersects(center, radius + CLASSIFY_MARGIN) {
            Relation::Partial
        } else {
            Relation::Disjoint
        }
    }

    fn intersects(&self, center: &SkyPosition, radius: f64) -> bool {
        if self.vertices.iter().any(|v| angular_distance(v, center) <= radius) {
            return true;
        }
        if self.contains(center) {
            return true;
        }
        let [a, b, c] = self.vertices;
        [(a, b), (b, c), (c, a)].iter().any(|(u, v)| arc_distance(center, u, v) <= radius)
    }
}

/// Angular distance from `p` to the minor great-circle arc `a`-`b`.
fn arc_distance(p: &SkyPosition, a: &SkyPosition, b: &SkyPosition) -> f64 {
    let endpoints = || angular_distance(p, a).min(angular_distance(p, b));
    let n = a.cross(b);
    let n_len = norm(n);
    if n_len < 1e-300 {
        return endpoints();
    }
    let n = [n[0] / n_len, n[1] / n_len, n[2] / n_len];
    let pv = p.to_array();
    let off_plane = dot(pv, n);
    let q = [pv[0] - off_plane * n[0], pv[1] - off_plane * n[1], pv[2] - off_plane * n[2]];
    let q_len = norm(q);
    if q_len < 1e-300 {
        // `p` is a pole of the arc's great circle.
        return FRAC_PI_2;
    }
    let on_arc = dot(cross(a.to_array(), q), n) >= 0.0 && dot(cross(q, b.to_array()), n) >= 0.0;
    if on_arc {
        off_plane.abs().atan2(q_len)
    } else {
        endpoints()
    }
}

/// Depth encoded by a trixel id, or `None` if the id is not well formed.
pub fn depth_of(id: u64) -> Option<u8> {
    if id < 8 {
        return None;
    }
    let bits = 64 - id.leading_zeros();
    if bits < 4 || !(bits - 4).is_multiple_of(2) {
        return None;
    }
    let depth = ((bits - 4) / 2) as u8;
    (depth <= MAX_DEPTH).then_some(depth)
}

/// Id of the depth-`depth` trixel containing `p`. Points on shared edges go
/// to the trixel where they sit deepest inside (first one on exact ties).
pub fn leaf_id(p: &SkyPosition, depth: u8) -> u64 {
    let best = |cands: &[Trixel]| {
        let mut best = cands[0];
        let mut best_margin = best.min_margin(p);
        for t in &cands[1..] {
            let m = t.min_margin(p);
            if m > best_margin {
                best = *t;
                best_margin = m;
            }
        }
        best
    };
    let mut t = best(&Trixel::roots());
    for _ in 0..depth {
        t = best(&t.children());
    }
    t.id
}

/// Trixels that are entirely inside or that intersect the circle of angular
/// `radius` around `center`, descending to `depth`.
pub fn cover_circle(center: &SkyPosition, radius: f64, depth: u8) -> Result<Cover, SphereError> {
    if !(radius > 0.0 && radius < PI) {
        return Err(SphereError::Domain(format!("radius {radius} outside (0, pi)")));
    }
    if depth > MAX_DEPTH {
        return Err(SphereError::Domain(format!("depth {depth} exceeds {MAX_DEPTH}")));
    }
    let mut cover = Cover::default();
    let mut stack: Vec<Trixel> = Trixel::roots().iter().rev().copied().collect();
    while let Some(t) = stack.pop() {
        match t.classify(center, radius) {
            Relation::Disjoint => {}
            Relation::Inside => cover.full.push(t.id),
            Relation::Partial if t.depth == depth => cover.partial.push(t.id),
            Relation::Partial => stack.extend(t.children().iter().rev()),
        }
    }
    Ok(cover)
}
