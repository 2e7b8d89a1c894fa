//! Scanline burning of label polygons with the pixel-center rule.
//!
//! A pixel takes class `c` when its center lies inside a class-`c` polygon
//! under the even-odd rule (holes included). Edge crossings use the
//! half-open test `(y0 > y) != (y1 > y)`, so a center lying exactly on a
//! horizontal edge or vertex is classified consistently between rows.

use alloc::vec::Vec;
use core::ops::Range;

use super::{ClassScheme, LabelPolygon};
use crate::math::{ceil, floor};
use crate::raster::{Grid, MaskRaster};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Skipped {
    /// Position in the input polygon list.
    pub index: usize,
    pub reason: Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rasterization {
    pub mask: MaskRaster,
    pub skipped: Vec<Skipped>,
}

/// Burns `polys` into a fresh mask on `grid`.
///
/// Negative-class polygons are burned first, then every other polygon in
/// input order, so real classes overwrite hard-negative rings and later
/// polygons overwrite earlier ones. Invalid geometries are skipped and
/// reported; a class index outside `scheme` is an error.
pub fn rasterize(polys: &[LabelPolygon], grid: &Grid, scheme: &ClassScheme) -> Result<Rasterization> {
    let (order, skipped) = burn_order(polys, scheme)?;
    let values = burn_rows(polys, &order, grid, 0..grid.height);
    Ok(Rasterization {
        mask: MaskRaster::new(*grid, values)?,
        skipped,
    })
}

/// Row band `rows` of [`rasterize`]'s output, for tile-parallel burning.
pub fn rasterize_rows(
    polys: &[LabelPolygon],
    grid: &Grid,
    scheme: &ClassScheme,
    rows: Range<usize>,
) -> Result<Vec<u8>> {
    grid.validate()?;
    let (order, _) = burn_order(polys, scheme)?;
    Ok(burn_rows(polys, &order, grid, rows.start..rows.end.min(grid.height)))
}

fn burn_order(polys: &[LabelPolygon], scheme: &ClassScheme) -> Result<(Vec<usize>, Vec<Skipped>)> {
    let mut skipped = Vec::new();
    let mut valid = Vec::with_capacity(polys.len());
    for (i, p) in polys.iter().enumerate() {
        if !scheme.contains(p.class) {
            return Err(Error::UnknownClass(alloc::format!(
                "polygon {i} has class index {} outside scheme `{}`",
                p.class, scheme.name
            )));
        }
        match p.validate() {
            Ok(()) => valid.push(i),
            Err(reason) => skipped.push(Skipped { index: i, reason }),
        }
    }
    let neg = scheme.negative_index();
    let is_neg = |i: &usize| neg == Some(polys[*i].class);
    let mut order: Vec<usize> = valid.iter().copied().filter(is_neg).collect();
    order.extend(valid.iter().copied().filter(|i| !is_neg(i)));
    Ok((order, skipped))
}

fn burn_rows(polys: &[LabelPolygon], order: &[usize], grid: &Grid, rows: Range<usize>) -> Vec<u8> {
    let w = grid.width;
    let mut out = alloc::vec![0u8; w * rows.len()];
    let mut xs = Vec::new();
    let mut spans = Vec::new();
    for &i in order {
        let poly = &polys[i];
        let (r_lo, r_hi) = row_bounds(poly, grid);
        let start = r_lo.max(rows.start);
        let end = r_hi.min(rows.end);
        for row in start..end {
            row_spans(poly, grid, row, &mut xs, &mut spans);
            let line = &mut out[(row - rows.start) * w..(row - rows.start + 1) * w];
            for &(a, b) in &spans {
                line[a..b].fill(poly.class);
            }
        }
    }
    out
}

/// Conservative row range `[lo, hi)` that can contain centers of `poly`.
pub(crate) fn row_bounds(poly: &LabelPolygon, grid: &Grid) -> (usize, usize) {
    let (_, min_y, _, max_y) = poly.bbox();
    let lo = floor((grid.origin_y - max_y) / grid.res - 0.5) - 1.0;
    let hi = ceil((grid.origin_y - min_y) / grid.res - 0.5) + 2.0;
    let clamp = |v: f64| {
        if v <= 0.0 {
            0
        } else if v >= grid.height as f64 {
            grid.height
        } else {
            v as usize
        }
    };
    (clamp(lo), clamp(hi))
}

/// Column spans `[a, b)` of `row` whose pixel centers lie inside `poly`.
pub(crate) fn row_spans(
    poly: &LabelPolygon,
    grid: &Grid,
    row: usize,
    xs: &mut Vec<f64>,
    spans: &mut Vec<(usize, usize)>,
) {
    xs.clear();
    spans.clear();
    let y = grid.center_y(row);
    for ring in poly.rings() {
        let n = ring.len();
        let mut j = n - 1;
        for i in 0..n {
            let (xi, yi) = (ring[i][0], ring[i][1]);
            let (xj, yj) = (ring[j][0], ring[j][1]);
            if (yi > y) != (yj > y) {
                xs.push((xj - xi) * (y - yi) / (yj - yi) + xi);
            }
            j = i;
        }
    }
    xs.sort_by(f64::total_cmp);
    // A center `cx` is inside iff an odd number of crossings lie strictly to
    // its right, i.e. xs[2k] <= cx < xs[2k+1] for some k.
    for pair in xs.chunks_exact(2) {
        let a = first_col_at_or_after(grid, pair[0]);
        let b = first_col_at_or_after(grid, pair[1]);
        if a < b {
            spans.push((a, b));
        }
    }
}

/// Smallest column whose center x is `>= x` (`width` if none).
fn first_col_at_or_after(grid: &Grid, x: f64) -> usize {
    let est = ceil((x - grid.origin_x) / grid.res - 0.5);
    let mut c = if est <= 0.0 {
        0
    } else if est >= grid.width as f64 {
        grid.width
    } else {
        est as usize
    };
    while c > 0 && grid.center_x(c - 1) >= x {
        c -= 1;
    }
    while c < grid.width && grid.center_x(c) < x {
        c += 1;
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::{Provenance, SourceTag};
    use alloc::vec;

    fn scheme() -> ClassScheme {
        ClassScheme::new("t", SourceTag::Teacher, &["A", "B", "C", "Building", "Road", "Negative"]).unwrap()
    }

    #[test]
    fn square_covers_its_pixels() {
        let g = Grid::new(0.0, 4.0, 1.0, 4, 4).unwrap();
        let p = LabelPolygon::rect(0.0, 2.0, 2.0, 4.0, 3, Provenance::Manual);
        let r = rasterize(&[p], &g, &scheme()).unwrap();
        assert_eq!(
            r.mask.values,
            vec![3, 3, 0, 0, 3, 3, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]
        );
    }

    #[test]
    fn no_polygons_gives_empty_mask() {
        let g = Grid::new(0.0, 4.0, 1.0, 4, 4).unwrap();
        assert_eq!(rasterize(&[], &g, &scheme()).unwrap().mask.labeled_count(), 0);
    }

    #[test]
    fn hole_is_left_unlabeled() {
        let g = Grid::new(0.0, 5.0, 1.0, 5, 5).unwrap();
        let p = LabelPolygon::rect(0.0, 0.0, 5.0, 5.0, 1, Provenance::Manual)
            .with_holes(vec![vec![[2.0, 2.0], [3.0, 2.0], [3.0, 3.0], [2.0, 3.0]]]);
        let m = rasterize(&[p], &g, &scheme()).unwrap().mask;
        assert_eq!(m.labeled_count(), 24);
        assert_eq!(m.get(2, 2), 0);
    }

    #[test]
    fn negatives_burn_first() {
        let g = Grid::new(0.0, 4.0, 1.0, 4, 4).unwrap();
        let building = LabelPolygon::rect(0.0, 0.0, 2.0, 4.0, 4, Provenance::Manual);
        let ring = LabelPolygon::rect(0.0, 0.0, 4.0, 4.0, 6, Provenance::Manual);
        let m = rasterize(&[building, ring], &g, &scheme()).unwrap().mask;
        assert_eq!(m.get(0, 0), 4);
        assert_eq!(m.get(3, 0), 6);
    }

    #[test]
    fn later_polygons_win() {
        let g = Grid::new(0.0, 2.0, 1.0, 2, 2).unwrap();
        let a = LabelPolygon::rect(0.0, 0.0, 2.0, 2.0, 1, Provenance::Manual);
        let b = LabelPolygon::rect(0.0, 0.0, 1.0, 1.0, 2, Provenance::Osm);
        let m = rasterize(&[a, b], &g, &scheme()).unwrap().mask;
        assert_eq!(m.values, vec![1, 1, 2, 1]);
    }

    #[test]
    fn degenerate_polygons_are_skipped() {
        let g = Grid::new(0.0, 2.0, 1.0, 2, 2).unwrap();
        let bad = LabelPolygon::new(vec![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]], 1, Provenance::Manual);
        let good = LabelPolygon::rect(0.0, 0.0, 2.0, 2.0, 2, Provenance::Manual);
        let r = rasterize(&[bad, good], &g, &scheme()).unwrap();
        assert_eq!(r.skipped.len(), 1);
        assert_eq!(r.skipped[0].index, 0);
        assert_eq!(r.mask.labeled_count(), 4);
    }

    #[test]
    fn class_outside_scheme_is_error() {
        let g = Grid::new(0.0, 2.0, 1.0, 2, 2).unwrap();
        let p = LabelPolygon::rect(0.0, 0.0, 2.0, 2.0, 40, Provenance::Manual);
        assert!(rasterize(&[p], &g, &scheme()).is_err());
    }

    #[test]
    fn row_bands_match_whole() {
        let g = Grid::new(0.0, 10.0, 1.0, 10, 10).unwrap();
        let p = LabelPolygon::new(vec![[1.2, 0.3], [9.1, 4.4], [3.3, 9.7], [5.0, 5.0]], 2, Provenance::Manual);
        let polys = [p];
        let whole = rasterize(&polys, &g, &scheme()).unwrap().mask.values;
        let mut bands = rasterize_rows(&polys, &g, &scheme(), 0..4).unwrap();
        bands.extend(rasterize_rows(&polys, &g, &scheme(), 4..10).unwrap());
        assert_eq!(whole, bands);
    }
}
