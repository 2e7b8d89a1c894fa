//! Hard-negative rings around Building and Road annotations.
//!
//! Buffers are square (Chebyshev): the polygon is burned on the target grid,
//! dilated by `round(distance / res)` pixels (at least one), and the source
//! pixels are removed. The ring is returned as axis-aligned rectangles whose
//! edges lie on pixel edges, so burning them back onto the same grid
//! reproduces the ring pixels exactly.

use alloc::vec;
use alloc::vec::Vec;

use super::rasterize::{row_bounds, row_spans, Skipped};
use super::{ClassScheme, LabelPolygon};
use crate::math::{ceil, floor, round};
use crate::raster::Grid;
use crate::{Error, Result};

pub const BUILDING_BUFFER_M: f64 = 3.0;
pub const ROAD_BUFFER_M: f64 = 5.0;

/// Rings produced by [`make_negatives`] plus the polygons that could not be
/// buffered.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NegativeSet {
    pub rings: Vec<LabelPolygon>,
    pub skipped: Vec<Skipped>,
}

/// Building → 3 m and Road → 5 m, for whichever of the two `scheme` has.
pub fn default_negative_distances(scheme: &ClassScheme) -> Vec<(u8, f64)> {
    let mut out = Vec::new();
    if let Some(b) = scheme.index_of("Building") {
        out.push((b, BUILDING_BUFFER_M));
    }
    if let Some(r) = scheme.index_of("Road") {
        out.push((r, ROAD_BUFFER_M));
    }
    out
}

/// `buffer(poly, distance) \ poly` on `grid`, tagged with class `negative`.
pub fn buffer_ring(poly: &LabelPolygon, distance: f64, grid: &Grid, negative: u8) -> Result<Vec<LabelPolygon>> {
    grid.validate()?;
    if !(distance > 0.0) || !distance.is_finite() {
        return Err(Error::InvalidArgument(alloc::format!(
            "buffer distance must be positive, got {distance}"
        )));
    }
    poly.validate()?;
    let d = (round(distance / grid.res) as usize).max(1);

    let (r_lo, r_hi) = row_bounds(poly, grid);
    let (c_lo, c_hi) = col_bounds(poly, grid);
    let rows = r_lo.saturating_sub(d)..(r_hi + d).min(grid.height);
    let cols = c_lo.saturating_sub(d)..(c_hi + d).min(grid.width);
    if rows.is_empty() || cols.is_empty() {
        return Ok(Vec::new());
    }
    let (h, w) = (rows.len(), cols.len());

    let mut src = vec![false; h * w];
    let mut xs = Vec::new();
    let mut spans = Vec::new();
    for row in r_lo..r_hi {
        row_spans(poly, grid, row, &mut xs, &mut spans);
        for &(a, b) in &spans {
            let a = a.max(cols.start);
            let b = b.min(cols.end);
            for c in a..b {
                src[(row - rows.start) * w + (c - cols.start)] = true;
            }
        }
    }

    let dilated = dilate(&src, w, h, d);
    let ring: Vec<bool> = dilated.iter().zip(&src).map(|(&a, &b)| a && !b).collect();
    Ok(vectorize(&ring, w, h)
        .into_iter()
        .map(|(c0, c1, r0, r1)| {
            let x0 = grid.origin_x + (cols.start + c0) as f64 * grid.res;
            let x1 = grid.origin_x + (cols.start + c1) as f64 * grid.res;
            let y_top = grid.origin_y - (rows.start + r0) as f64 * grid.res;
            let y_bot = grid.origin_y - (rows.start + r1) as f64 * grid.res;
            LabelPolygon::rect(x0, y_bot, x1, y_top, negative, poly.provenance)
        })
        .collect())
}

/// Negative rings for every polygon whose class has a buffer distance.
/// Polygons that fail to buffer are reported and skipped.
pub fn make_negatives(
    polys: &[LabelPolygon],
    distances: &[(u8, f64)],
    grid: &Grid,
    negative: u8,
) -> NegativeSet {
    let mut out = NegativeSet::default();
    for (index, poly) in polys.iter().enumerate() {
        let Some(&(_, dist)) = distances.iter().find(|(c, _)| *c == poly.class) else {
            continue;
        };
        match buffer_ring(poly, dist, grid, negative) {
            Ok(rings) => out.rings.extend(rings),
            Err(reason) => out.skipped.push(Skipped { index, reason }),
        }
    }
    out
}

fn col_bounds(poly: &LabelPolygon, grid: &Grid) -> (usize, usize) {
    let (min_x, _, max_x, _) = poly.bbox();
    let lo = floor((min_x - grid.origin_x) / grid.res - 0.5) - 1.0;
    let hi = ceil((max_x - grid.origin_x) / grid.res - 0.5) + 2.0;
    let clamp = |v: f64| {
        if v <= 0.0 {
            0
        } else if v >= grid.width as f64 {
            grid.width
        } else {
            v as usize
        }
    };
    (clamp(lo), clamp(hi))
}

/// Separable square dilation with radius `d` pixels.
fn dilate(src: &[bool], w: usize, h: usize, d: usize) -> Vec<bool> {
    let pass = |get: &dyn Fn(usize) -> bool, n: usize| -> Vec<bool> {
        let mut prefix = vec![0u32; n + 1];
        for i in 0..n {
            prefix[i + 1] = prefix[i] + get(i) as u32;
        }
        (0..n)
            .map(|i| {
                let a = i.saturating_sub(d);
                let b = (i + d + 1).min(n);
                prefix[b] > prefix[a]
            })
            .collect()
    };
    let mut horiz = vec![false; w * h];
    for r in 0..h {
        let line = pass(&|c| src[r * w + c], w);
        horiz[r * w..(r + 1) * w].copy_from_slice(&line);
    }
    let mut out = vec![false; w * h];
    for c in 0..w {
        let line = pass(&|r| horiz[r * w + c], h);
        for (r, v) in line.into_iter().enumerate() {
            out[r * w + c] = v;
        }
    }
    out
}

/// Row runs merged vertically into rectangles `(c0, c1, r0, r1)`, half-open.
fn vectorize(cells: &[bool], w: usize, h: usize) -> Vec<(usize, usize, usize, usize)> {
    let mut done = Vec::new();
    let mut open: Vec<(usize, usize, usize)> = Vec::new(); // (c0, c1, r0)
    for r in 0..=h {
        let mut runs = Vec::new();
        if r < h {
            let line = &cells[r * w..(r + 1) * w];
            let mut c = 0;
            while c < w {
                if line[c] {
                    let s = c;
                    while c < w && line[c] {
                        c += 1;
                    }
                    runs.push((s, c));
                } else {
                    c += 1;
                }
            }
        }
        let mut next = Vec::with_capacity(runs.len());
        for &(c0, c1) in &runs {
            match open.iter().position(|&(a, b, _)| a == c0 && b == c1) {
                Some(i) => next.push(open.swap_remove(i)),
                None => next.push((c0, c1, r)),
            }
        }
        for (c0, c1, r0) in open.drain(..) {
            done.push((c0, c1, r0, r));
        }
        open = next;
    }
    done.sort_unstable_by_key(|&(c0, _, r0, _)| (r0, c0));
    done
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::{rasterize, Provenance, SourceTag};

    fn scheme() -> ClassScheme {
        ClassScheme::new("t", SourceTag::Teacher, &["Crop", "Building", "Road", "Negative"]).unwrap()
    }

    fn ring_area(rings: &[LabelPolygon]) -> f64 {
        rings.iter().map(LabelPolygon::area).sum()
    }

    #[test]
    fn square_ring_area() {
        // 10 m square at 0.1 m pixels, 3 m Chebyshev buffer: 16^2 - 10^2.
        let grid = Grid::new(-10.0, 20.0, 0.1, 300, 300).unwrap();
        let sq = LabelPolygon::rect(0.0, 0.0, 10.0, 10.0, 2, Provenance::Manual);
        let rings = buffer_ring(&sq, 3.0, &grid, 4).unwrap();
        assert!(rings.iter().all(|r| r.class == 4));
        assert!((ring_area(&rings) - 156.0).abs() < 1e-6, "{}", ring_area(&rings));
        // Same count via the burned mask.
        let s = scheme();
        let m = rasterize(&rings, &grid, &s).unwrap().mask;
        assert_eq!(m.labeled_count(), 15_600);
    }

    #[test]
    fn ring_is_disjoint_from_source() {
        let grid = Grid::new(0.0, 50.0, 0.5, 100, 100).unwrap();
        let poly = LabelPolygon::new(
            alloc::vec![[10.0, 10.0], [30.0, 12.0], [20.0, 20.0], [28.0, 35.0], [12.0, 30.0]],
            3,
            Provenance::Osm,
        );
        let s = scheme();
        let rings = buffer_ring(&poly, 5.0, &grid, 4).unwrap();
        let src = rasterize(&[poly], &grid, &s).unwrap().mask;
        let ring = rasterize(&rings, &grid, &s).unwrap().mask;
        let shared = src.values.iter().zip(&ring.values).filter(|(a, b)| **a != 0 && **b != 0).count();
        assert_eq!(shared, 0);
        assert!(ring.labeled_count() > 0);
    }

    #[test]
    fn disjoint_squares_give_disjoint_rings() {
        let grid = Grid::new(0.0, 40.0, 1.0, 60, 40).unwrap();
        let a = LabelPolygon::rect(5.0, 5.0, 10.0, 10.0, 2, Provenance::Manual);
        let b = LabelPolygon::rect(40.0, 5.0, 45.0, 10.0, 2, Provenance::Manual);
        let ra = buffer_ring(&a, 3.0, &grid, 4).unwrap();
        let rb = buffer_ring(&b, 3.0, &grid, 4).unwrap();
        let s = scheme();
        let ma = rasterize(&ra, &grid, &s).unwrap().mask;
        let mb = rasterize(&rb, &grid, &s).unwrap().mask;
        assert!(ma.values.iter().zip(&mb.values).all(|(x, y)| *x == 0 || *y == 0));
        assert_eq!(ma.labeled_count(), 11 * 11 - 25);
    }

    #[test]
    fn degenerate_is_rejected() {
        let grid = Grid::new(0.0, 10.0, 1.0, 10, 10).unwrap();
        let flat = LabelPolygon::new(alloc::vec![[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]], 2, Provenance::Manual);
        assert!(matches!(
            buffer_ring(&flat, 3.0, &grid, 4),
            Err(Error::DegeneratePolygon(_))
        ));
        let sq = LabelPolygon::rect(1.0, 1.0, 3.0, 3.0, 2, Provenance::Manual);
        assert!(buffer_ring(&sq, 0.0, &grid, 4).is_err());
    }

    #[test]
    fn make_negatives_uses_class_distances() {
        let s = scheme();
        let grid = Grid::new(0.0, 40.0, 1.0, 40, 40).unwrap();
        let dists = default_negative_distances(&s);
        assert_eq!(dists, alloc::vec![(2, 3.0), (3, 5.0)]);
        assert!(make_negatives(&[], &dists, &grid, 4).rings.is_empty());

        let building = LabelPolygon::rect(10.0, 10.0, 14.0, 14.0, 2, Provenance::Manual);
        let out = make_negatives(&[building], &dists, &grid, 4);
        let m = rasterize(&out.rings, &grid, &s).unwrap().mask;
        assert_eq!(m.labeled_count(), 10 * 10 - 16);

        let crop = LabelPolygon::rect(10.0, 10.0, 14.0, 14.0, 1, Provenance::Manual);
        assert!(make_negatives(&[crop], &dists, &grid, 4).rings.is_empty());
    }

    #[test]
    fn make_negatives_reports_and_continues() {
        let s = scheme();
        let grid = Grid::new(0.0, 40.0, 1.0, 40, 40).unwrap();
        let bad = LabelPolygon::new(alloc::vec![[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]], 3, Provenance::Manual);
        let road = LabelPolygon::rect(10.0, 10.0, 30.0, 12.0, 3, Provenance::Osm);
        let out = make_negatives(&[bad, road], &default_negative_distances(&s), &grid, 4);
        assert_eq!(out.skipped.len(), 1);
        assert_eq!(out.skipped[0].index, 0);
        assert!(!out.rings.is_empty());
        assert!(out.rings.iter().all(|r| r.provenance == Provenance::Osm));
    }

    #[test]
    fn vectorize_merges_identical_runs() {
        let cells = [true, true, false, true, true, false, false, true, true];
        let rects = vectorize(&cells, 3, 3);
        assert_eq!(rects, alloc::vec![(0, 2, 0, 2), (1, 3, 2, 3)]);
    }
}
