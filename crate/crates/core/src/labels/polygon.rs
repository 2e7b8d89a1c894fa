use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Origin of an annotation. All provenances are rasterized identically; the
/// tag only drives label-fusion priority downstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Provenance {
    Manual,
    Osm,
    Pseudo,
}

impl Provenance {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "manual" => Some(Provenance::Manual),
            "osm" | "openstreetmap" | "auxiliary" => Some(Provenance::Osm),
            "pseudo" | "teacher" => Some(Provenance::Pseudo),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Manual => "manual",
            Provenance::Osm => "osm",
            Provenance::Pseudo => "pseudo",
        }
    }

    /// Default fusion priority (higher wins).
    pub fn default_priority(self) -> i32 {
        match self {
            Provenance::Manual => 3,
            Provenance::Osm => 2,
            Provenance::Pseudo => 1,
        }
    }
}

/// An annotated polygon in world coordinates (meters). Rings are stored
/// open: the closing vertex is implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelPolygon {
    pub exterior: Vec<[f64; 2]>,
    pub holes: Vec<Vec<[f64; 2]>>,
    pub class: u8,
    pub provenance: Provenance,
}

impl LabelPolygon {
    /// A polygon without holes. A repeated closing vertex is dropped.
    pub fn new(exterior: Vec<[f64; 2]>, class: u8, provenance: Provenance) -> Self {
        LabelPolygon {
            exterior: open_ring(exterior),
            holes: Vec::new(),
            class,
            provenance,
        }
    }

    pub fn with_holes(mut self, holes: Vec<Vec<[f64; 2]>>) -> Self {
        self.holes = holes.into_iter().map(open_ring).collect();
        self
    }

    /// Axis-aligned rectangle `[x0,x1] x [y0,y1]`.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64, class: u8, provenance: Provenance) -> Self {
        LabelPolygon::new(
            alloc::vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]],
            class,
            provenance,
        )
    }

    pub fn rings(&self) -> impl Iterator<Item = &[[f64; 2]]> {
        core::iter::once(self.exterior.as_slice()).chain(self.holes.iter().map(Vec::as_slice))
    }

    /// Exterior area minus hole areas.
    pub fn area(&self) -> f64 {
        let holes: f64 = self.holes.iter().map(|h| ring_area(h).abs()).sum();
        ring_area(&self.exterior).abs() - holes
    }

    /// `(min_x, min_y, max_x, max_y)` of the exterior ring.
    pub fn bbox(&self) -> (f64, f64, f64, f64) {
        let mut b = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.exterior {
            b.0 = b.0.min(p[0]);
            b.1 = b.1.min(p[1]);
            b.2 = b.2.max(p[0]);
            b.3 = b.3.max(p[1]);
        }
        b
    }

    /// Checks the ring invariants: finite coordinates, at least three
    /// distinct vertices, nonzero area, no self-intersection, class != 0.
    pub fn validate(&self) -> Result<()> {
        if self.class == 0 {
            return Err(Error::InvalidArgument("polygon class must not be Unlabeled".into()));
        }
        for (i, ring) in self.rings().enumerate() {
            let what = if i == 0 { "exterior" } else { "hole" };
            if ring.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
                return Err(Error::DegeneratePolygon(format!("{what} ring has non-finite coordinates")));
            }
            let mut distinct: Vec<[f64; 2]> = Vec::new();
            for p in ring {
                if !distinct.contains(p) {
                    distinct.push(*p);
                }
            }
            if distinct.len() < 3 {
                return Err(Error::DegeneratePolygon(format!(
                    "{what} ring has {} distinct vertices",
                    distinct.len()
                )));
            }
            if ring_area(ring) == 0.0 {
                return Err(Error::DegeneratePolygon(format!("{what} ring has zero area")));
            }
            if let Some((a, b)) = self_intersection(ring) {
                return Err(Error::DegeneratePolygon(format!(
                    "{what} ring self-intersects (edges {a} and {b})"
                )));
            }
        }
        if !(self.area() > 0.0) {
            return Err(Error::DegeneratePolygon("holes cover the whole exterior".into()));
        }
        Ok(())
    }
}

fn open_ring(mut ring: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    if ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
    ring
}

/// Signed shoelace area.
pub(crate) fn ring_area(ring: &[[f64; 2]]) -> f64 {
    let n = ring.len();
    let mut s = 0.0;
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        s += a[0] * b[1] - b[0] * a[1];
    }
    s / 2.0
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn on_segment(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

fn segments_intersect(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

/// First pair of non-adjacent intersecting edges, or adjacent edges that
/// fold back onto each other.
fn self_intersection(ring: &[[f64; 2]]) -> Option<(usize, usize)> {
    let n = ring.len();
    let edge = |i: usize| (ring[i], ring[(i + 1) % n]);
    for i in 0..n {
        let (a1, a2) = edge(i);
        if a1 == a2 {
            continue;
        }
        for j in i + 1..n {
            let (b1, b2) = edge(j);
            if b1 == b2 {
                continue;
            }
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                // Shared vertex is fine; collinear overlap is not.
                let (shared, other_a, other_b) = if j == i + 1 { (a2, a1, b2) } else { (a1, a2, b1) };
                if orient(shared, other_a, other_b) == 0.0 {
                    let da = [other_a[0] - shared[0], other_a[1] - shared[1]];
                    let db = [other_b[0] - shared[0], other_b[1] - shared[1]];
                    if da[0] * db[0] + da[1] * db[1] > 0.0 {
                        return Some((i, j));
                    }
                }
                continue;
            }
            if segments_intersect(a1, a2, b1, b2) {
                return Some((i, j));
            }
        }
    }
    None
}
