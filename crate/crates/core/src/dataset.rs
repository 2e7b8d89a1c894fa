//! Train/test splitting, patch sampling, augmentation and class weights.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::RngCore;

use crate::labels::ClassScheme;
use crate::math::{floor, sin_cos};
use crate::raster::{BandRaster, Extent, Grid, MaskRaster};
use crate::rng;
use crate::{Error, Result};

/// Random anchors tried per patch before falling back to an exhaustive scan
/// of anchors that contain a labeled pixel.
pub const PATCH_RETRY_CAP: usize = 64;

/// Vertical (column-wise) train/test split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { train_fraction: 0.7 }
    }
}

impl SplitSpec {
    pub fn apply(&self, grid: &Grid) -> Result<(Extent, Extent)> {
        vertical_split(grid, self.train_fraction)
    }
}

/// Columns `[0, split)` for training and `[split, width)` for testing, with
/// `split = floor(train_fraction * width)` kept inside `[1, width-1]` so both
/// sides are non-empty.
pub fn vertical_split(grid: &Grid, train_fraction: f64) -> Result<(Extent, Extent)> {
    grid.validate()?;
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0,1), got {train_fraction}"
        )));
    }
    if grid.width < 2 {
        return Err(Error::InvalidArgument("a vertical split needs width >= 2".into()));
    }
    let split = (floor(train_fraction * grid.width as f64) as usize).clamp(1, grid.width - 1);
    Ok((
        Extent::new(0, 0, split, grid.height),
        Extent::new(split, 0, grid.width - split, grid.height),
    ))
}

/// Co-located image and mask windows.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub image: BandRaster,
    pub mask: MaskRaster,
    /// `(col, row)` of the window's top-left pixel in the parent grid.
    pub anchor: (usize, usize),
}

impl Patch {
    pub fn size(&self) -> usize {
        self.mask.grid.width
    }
}

/// Draws `count` patches of `size`×`size` inside `extent`, each containing at
/// least one labeled pixel. Patch `i` depends only on `(seed, i)`.
pub fn sample_patches(
    image: &BandRaster,
    mask: &MaskRaster,
    extent: &Extent,
    size: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<Patch>> {
    let sampler = PatchSampler::new(image, mask, extent, size)?;
    (0..count)
        .map(|i| sampler.sample(&mut rng::stream(seed, i as u64)))
        .collect()
}

/// Reusable sampler over one (image, mask, extent).
pub struct PatchSampler<'a> {
    image: &'a BandRaster,
    mask: &'a MaskRaster,
    extent: Extent,
    size: usize,
    /// Summed-area table of labeled pixels over the extent, (rows+1)x(cols+1).
    integral: Vec<u32>,
    labeled_anchors: Vec<(usize, usize)>,
}

impl<'a> PatchSampler<'a> {
    pub fn new(image: &'a BandRaster, mask: &'a MaskRaster, extent: &Extent, size: usize) -> Result<Self> {
        if image.grid != mask.grid {
            return Err(Error::GridMismatch("image and mask grids differ".into()));
        }
        mask.grid.check_extent(extent)?;
        if size == 0 || size > extent.cols || size > extent.rows {
            return Err(Error::InvalidArgument(format!(
                "patch size {size} does not fit a {}x{} extent",
                extent.cols, extent.rows
            )));
        }
        let (cols, rows) = (extent.cols, extent.rows);
        let mut integral = vec![0u32; (rows + 1) * (cols + 1)];
        for r in 0..rows {
            let line = mask.row(extent.row0 + r);
            let mut acc = 0u32;
            for c in 0..cols {
                acc += (line[extent.col0 + c] != 0) as u32;
                integral[(r + 1) * (cols + 1) + c + 1] = integral[r * (cols + 1) + c + 1] + acc;
            }
        }
        if integral[rows * (cols + 1) + cols] == 0 {
            return Err(Error::NoLabels("extent contains no labeled pixels".into()));
        }
        let mut sampler = PatchSampler {
            image,
            mask,
            extent: *extent,
            size,
            integral,
            labeled_anchors: Vec::new(),
        };
        let (nx, ny) = sampler.anchor_range();
        for r in 0..ny {
            for c in 0..nx {
                if sampler.labeled_in(c, r) > 0 {
                    sampler.labeled_anchors.push((c, r));
                }
            }
        }
        Ok(sampler)
    }

    fn anchor_range(&self) -> (usize, usize) {
        (self.extent.cols - self.size + 1, self.extent.rows - self.size + 1)
    }

    /// Labeled pixels in the window anchored at extent-relative `(c, r)`.
    fn labeled_in(&self, c: usize, r: usize) -> u32 {
        let w = self.extent.cols + 1;
        let s = self.size;
        self.integral[(r + s) * w + c + s] + self.integral[r * w + c]
            - self.integral[r * w + c + s]
            - self.integral[(r + s) * w + c]
    }

    pub fn sample<R: RngCore>(&self, rng: &mut R) -> Result<Patch> {
        let (nx, ny) = self.anchor_range();
        let mut chosen = None;
        for _ in 0..PATCH_RETRY_CAP {
            let c = rng::below(rng, nx);
            let r = rng::below(rng, ny);
            if self.labeled_in(c, r) > 0 {
                chosen = Some((c, r));
                break;
            }
        }
        let (c, r) = match chosen {
            Some(a) => a,
            None => self.labeled_anchors[rng::below(rng, self.labeled_anchors.len())],
        };
        let window = Extent::new(self.extent.col0 + c, self.extent.row0 + r, self.size, self.size);
        Ok(Patch {
            image: self.image.window(&window)?,
            mask: self.mask.window(&window)?,
            anchor: (window.col0, window.row0),
        })
    }
}

/// Which geometric transforms to apply, in the fixed order
/// rot90 → rot225 → horizontal flip → vertical flip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Augmentation {
    pub rot90: bool,
    pub rot225: bool,
    pub hflip: bool,
    pub vflip: bool,
}

impl Augmentation {
    pub const PROBABILITY: f64 = 0.5;

    /// Four independent coin flips, one per transform, in application order.
    pub fn draw<R: RngCore>(rng: &mut R) -> Self {
        Augmentation {
            rot90: rng::coin(rng, Self::PROBABILITY),
            rot225: rng::coin(rng, Self::PROBABILITY),
            hflip: rng::coin(rng, Self::PROBABILITY),
            vflip: rng::coin(rng, Self::PROBABILITY),
        }
    }

    pub fn apply(&self, patch: &Patch) -> Result<Patch> {
        let n = patch.mask.grid.width;
        if patch.mask.grid.height != n || patch.image.grid != patch.mask.grid {
            return Err(Error::InvalidArgument("augmentation needs a square patch".into()));
        }
        let mut out = patch.clone();
        if self.rot90 {
            out = remap_patch(&out, |c, r| Some((n - 1 - r, c)));
        }
        if self.rot225 {
            let (s, co) = sin_cos(225f64.to_radians());
            let half = n as f64 / 2.0;
            out = remap_patch(&out, |c, r| {
                let x = c as f64 + 0.5 - half;
                let y = r as f64 + 0.5 - half;
                let sx = floor(co * x - s * y + half);
                let sy = floor(s * x + co * y + half);
                if sx >= 0.0 && sy >= 0.0 && sx < n as f64 && sy < n as f64 {
                    Some((sx as usize, sy as usize))
                } else {
                    None
                }
            });
        }
        if self.hflip {
            out = remap_patch(&out, |c, r| Some((n - 1 - c, r)));
        }
        if self.vflip {
            out = remap_patch(&out, |c, r| Some((c, n - 1 - r)));
        }
        Ok(out)
    }
}

/// Random augmentation of a square patch.
pub fn augment<R: RngCore>(patch: &Patch, rng: &mut R) -> Result<Patch> {
    Augmentation::draw(rng).apply(patch)
}

/// Builds a new patch where output pixel `(c, r)` copies source pixel
/// `source(c, r)`, or 0 when `None`. Rotations are counter-clockwise.
fn remap_patch(patch: &Patch, source: impl Fn(usize, usize) -> Option<(usize, usize)>) -> Patch {
    let grid = patch.mask.grid;
    let n = grid.width;
    let mut mask = MaskRaster::zeros(grid);
    let mut image = BandRaster::zeros(grid, patch.image.bands);
    image.nodata = patch.image.nodata;
    for r in 0..n {
        for c in 0..n {
            if let Some((sc, sr)) = source(c, r) {
                mask.set(c, r, patch.mask.get(sc, sr));
                for b in 0..patch.image.bands {
                    image.set(b, c, r, patch.image.get(b, sc, sr));
                }
            }
        }
    }
    Patch {
        image,
        mask,
        anchor: patch.anchor,
    }
}

/// How per-class loss weights are derived from label counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightStrategy {
    /// `total / (classes_present * count_c)`; absent classes get 1.
    #[default]
    InverseFrequency,
    Uniform,
}

impl WeightStrategy {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inverse-frequency" | "inverse_frequency" | "balanced" => Some(WeightStrategy::InverseFrequency),
            "uniform" | "none" => Some(WeightStrategy::Uniform),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            WeightStrategy::InverseFrequency => "inverse-frequency",
            WeightStrategy::Uniform => "uniform",
        }
    }
}

/// Per-class loss weights indexed by class; index 0 is always exactly 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights(pub Vec<f64>);

impl ClassWeights {
    pub fn uniform(classes: usize) -> Self {
        let mut w = vec![1.0; classes];
        w[0] = 0.0;
        ClassWeights(w)
    }

    #[inline]
    pub fn get(&self, class: u8) -> f64 {
        self.0.get(class as usize).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn class_weights(mask: &MaskRaster, scheme: &ClassScheme, strategy: WeightStrategy) -> Result<ClassWeights> {
    scheme.check_mask(mask)?;
    let mut counts = vec![0u64; scheme.len()];
    for &v in &mask.values {
        counts[v as usize] += 1;
    }
    weights_from_counts(&counts, strategy)
}

/// Weights from per-class pixel counts (`counts[0]`, the unlabeled count, is
/// ignored).
pub fn weights_from_counts(counts: &[u64], strategy: WeightStrategy) -> Result<ClassWeights> {
    let total: u64 = counts.iter().skip(1).sum();
    if total == 0 {
        return Err(Error::NoLabels("class weights need at least one labeled pixel".into()));
    }
    match strategy {
        WeightStrategy::Uniform => Ok(ClassWeights::uniform(counts.len())),
        WeightStrategy::InverseFrequency => {
            let present = counts[1..].iter().filter(|&&n| n > 0).count() as f64;
            let mut w = Vec::with_capacity(counts.len());
            w.push(0.0);
            for &n in &counts[1..] {
                w.push(if n > 0 {
                    total as f64 / (present * n as f64)
                } else {
                    1.0
                });
            }
            Ok(ClassWeights(w))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::SourceTag;

    fn grid(w: usize, h: usize) -> Grid {
        Grid::new(0.0, h as f64, 1.0, w, h).unwrap()
    }

    #[test]
    fn split_examples() {
        let (tr, te) = vertical_split(&grid(10, 3), 0.7).unwrap();
        assert_eq!((tr.col0, tr.cols, te.col0, te.cols), (0, 7, 7, 3));
        let (tr, te) = vertical_split(&grid(4, 1), 0.5).unwrap();
        assert_eq!((tr.cols, te.col0, te.cols), (2, 2, 2));
        let (tr, te) = vertical_split(&grid(1000, 1), 0.999).unwrap();
        assert_eq!((tr.cols, te.col0, te.cols), (999, 999, 1));
    }

    #[test]
    fn split_rejects_narrow_grid_and_bad_fraction() {
        assert!(vertical_split(&grid(1, 5), 0.7).is_err());
        assert!(vertical_split(&grid(5, 5), 0.0).is_err());
        assert!(vertical_split(&grid(5, 5), 1.0).is_err());
    }

    fn scene(w: usize, h: usize) -> (BandRaster, MaskRaster) {
        let g = grid(w, h);
        let mut img = BandRaster::zeros(g, 2);
        for (i, v) in img.values.iter_mut().enumerate() {
            *v = i as f32;
        }
        (img, MaskRaster::zeros(g))
    }

    #[test]
    fn patches_contain_the_single_label() {
        let (img, mut mask) = scene(20, 20);
        mask.set(13, 4, 2);
        let ext = Extent::new(0, 0, 20, 20);
        let patches = sample_patches(&img, &mask, &ext, 5, 40, 11).unwrap();
        for p in &patches {
            let (c, r) = p.anchor;
            assert!((c..c + 5).contains(&13) && (r..r + 5).contains(&4), "{:?}", p.anchor);
            assert_eq!(p.mask.labeled_count(), 1);
            assert_eq!(p.image.get(1, 13 - c, 4 - r), img.get(1, 13, 4));
        }
    }

    #[test]
    fn patches_are_deterministic() {
        let (img, mut mask) = scene(16, 16);
        for i in (0..256).step_by(7) {
            mask.values[i] = 1;
        }
        let ext = Extent::new(2, 1, 12, 14);
        let a = sample_patches(&img, &mask, &ext, 4, 10, 5).unwrap();
        let b = sample_patches(&img, &mask, &ext, 4, 10, 5).unwrap();
        assert_eq!(a, b);
        for p in &a {
            assert!(p.anchor.0 >= 2 && p.anchor.0 + 4 <= 14);
        }
    }

    #[test]
    fn sampler_errors() {
        let (img, mask) = scene(8, 8);
        let ext = Extent::new(0, 0, 8, 8);
        assert!(matches!(
            sample_patches(&img, &mask, &ext, 4, 1, 0),
            Err(Error::NoLabels(_))
        ));
        let mut mask = mask;
        mask.values[0] = 1;
        assert!(sample_patches(&img, &mask, &ext, 9, 1, 0).is_err());
    }

    fn small_patch() -> Patch {
        let g = grid(2, 2);
        let mask = MaskRaster::new(g, vec![1, 2, 3, 4]).unwrap();
        let image = BandRaster::new(g, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        Patch {
            image,
            mask,
            anchor: (0, 0),
        }
    }

    #[test]
    fn identity_when_all_off() {
        let p = small_patch();
        assert_eq!(Augmentation::default().apply(&p).unwrap(), p);
    }

    #[test]
    fn rot90_is_counter_clockwise() {
        let aug = Augmentation {
            rot90: true,
            ..Default::default()
        };
        let out = aug.apply(&small_patch()).unwrap();
        assert_eq!(out.mask.values, vec![2, 4, 1, 3]);
        assert_eq!(out.image.values, vec![2.0, 4.0, 1.0, 3.0]);
    }

    #[test]
    fn hflip_twice_is_identity() {
        let aug = Augmentation {
            hflip: true,
            ..Default::default()
        };
        let p = small_patch();
        let once = aug.apply(&p).unwrap();
        assert_eq!(once.mask.values, vec![2, 1, 4, 3]);
        assert_eq!(aug.apply(&once).unwrap(), p);
    }

    #[test]
    fn rot225_keeps_center_and_blanks_corners() {
        let g = grid(9, 9);
        let mask = MaskRaster::filled(g, 5);
        let image = BandRaster::new(g, 1, vec![1.0; 81]).unwrap();
        let p = Patch {
            image,
            mask,
            anchor: (0, 0),
        };
        let aug = Augmentation {
            rot225: true,
            ..Default::default()
        };
        let out = aug.apply(&p).unwrap();
        assert_eq!(out.mask.get(4, 4), 5);
        assert_eq!(out.mask.get(0, 0), 0);
        assert_eq!(out.image.get(0, 0, 0), 0.0);
        assert!(out.mask.values.iter().all(|&v| v == 0 || v == 5));
    }

    #[test]
    fn augment_rejects_non_square() {
        let g = grid(3, 2);
        let p = Patch {
            image: BandRaster::zeros(g, 1),
            mask: MaskRaster::zeros(g),
            anchor: (0, 0),
        };
        assert!(Augmentation::default().apply(&p).is_err());
    }

    #[test]
    fn weights_examples() {
        let s = ClassScheme::new("w", SourceTag::External, &["A", "B", "C"]).unwrap();
        let g = grid(10, 10);
        let mut m = MaskRaster::zeros(g);
        for i in 0..100 {
            m.values[i] = if i < 90 { 1 } else { 2 };
        }
        let w = class_weights(&m, &s, WeightStrategy::InverseFrequency).unwrap();
        assert_eq!(w.0[0], 0.0);
        assert!((w.0[1] - 100.0 / 180.0).abs() < 1e-12);
        assert!((w.0[2] - 5.0).abs() < 1e-12);
        assert_eq!(w.0[3], 1.0);

        let mut m = MaskRaster::zeros(g);
        for i in 0..50 {
            m.values[i] = 1 + (i % 2) as u8;
        }
        let w = class_weights(&m, &s, WeightStrategy::InverseFrequency).unwrap();
        assert_eq!(&w.0[1..3], &[1.0, 1.0]);

        let single = MaskRaster::filled(g, 3);
        assert_eq!(class_weights(&single, &s, WeightStrategy::InverseFrequency).unwrap().0[3], 1.0);
        assert!(class_weights(&MaskRaster::zeros(g), &s, WeightStrategy::InverseFrequency).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn split_partitions_columns(w in 2usize..5000, f in 0.001f64..0.999) {
                let g = Grid::new(0.0, 0.0, 1.0, w, 1).unwrap();
                let (tr, te) = vertical_split(&g, f).unwrap();
                prop_assert_eq!(tr.col0, 0);
                prop_assert_eq!(tr.col0 + tr.cols, te.col0);
                prop_assert_eq!(te.col0 + te.cols, w);
                prop_assert!(tr.cols >= 1 && te.cols >= 1);
            }

            #[test]
            fn augment_preserves_shape_and_classes(
                vals in proptest::collection::vec(prop_oneof![Just(0u8), 1u8..4], 49),
                seed in any::<u64>(),
            ) {
                let g = Grid::new(0.0, 7.0, 1.0, 7, 7).unwrap();
                let mask = MaskRaster::new(g, vals.clone()).unwrap();
                let image = BandRaster::new(g, 1, vals.iter().map(|&v| v as f32).collect()).unwrap();
                let p = Patch { image, mask, anchor: (0, 0) };
                let out = augment(&p, &mut rng::seeded(seed)).unwrap();
                prop_assert_eq!(out.mask.grid, g);
                prop_assert_eq!(out.image.values.len(), 49);
                for v in &out.mask.values {
                    prop_assert!(*v == 0 || vals.contains(v));
                }
            }

            #[test]
            fn inverse_frequency_preserves_weighted_count(
                vals in proptest::collection::vec(0u8..5, 1..200),
            ) {
                prop_assume!(vals.iter().any(|&v| v != 0));
                let s = ClassScheme::new("w", SourceTag::External, &["A", "B", "C", "D"]).unwrap();
                let g = Grid::new(0.0, 0.0, 1.0, vals.len(), 1).unwrap();
                let m = MaskRaster::new(g, vals.clone()).unwrap();
                let w = class_weights(&m, &s, WeightStrategy::InverseFrequency).unwrap();
                let weighted: f64 = vals.iter().map(|&v| w.get(v)).sum();
                let labeled = vals.iter().filter(|&&v| v != 0).count() as f64;
                prop_assert!((weighted - labeled).abs() < 1e-9 * labeled.max(1.0));
            }
        }
    }
}
