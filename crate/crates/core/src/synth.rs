//! Seeded synthetic scenes: an image, its dense truth, and sparse polygon
//! labels drawn from that truth.
//!
//! Truth is a Voronoi partition of the grid into class regions, overlaid
//! with rectangular buildings and straight roads when the scheme has such
//! classes. Every class gets a spectral mean on the vertices of a cubic
//! lattice in band space; pixel values are that mean plus Gaussian noise
//! whose standard deviation is `(1 - separability) * spacing`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::labels::{ClassScheme, LabelPolygon, Provenance};
use crate::raster::{downsample_majority, BandRaster, Grid, MaskRaster};
use crate::rng::{self, PipelineRng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub bands: usize,
    /// In `(0, 1]`; 1 means noise-free class means.
    pub separability: f64,
    /// Target fraction of pixels covered by sparse labels.
    pub label_fraction: f64,
    /// Minimum distance between two class means.
    pub spacing: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            bands: 4,
            separability: 0.9,
            label_fraction: 0.05,
            spacing: 1.0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bands == 0 {
            return Err(Error::InvalidArgument("a scene needs at least one band".into()));
        }
        if !(self.separability > 0.0 && self.separability <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "separability must lie in (0,1], got {}",
                self.separability
            )));
        }
        if !(0.0..1.0).contains(&self.label_fraction) {
            return Err(Error::InvalidArgument(format!(
                "label fraction must lie in [0,1), got {}",
                self.label_fraction
            )));
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(Error::InvalidArgument("mean spacing must be positive".into()));
        }
        Ok(())
    }

    pub fn noise_std(&self) -> f64 {
        (1.0 - self.separability) * self.spacing
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image: BandRaster,
    pub truth: MaskRaster,
    pub labels: Vec<LabelPolygon>,
    /// Spectral mean of every scheme class, indexed by class (row 0 and the
    /// Negative class are unused and zero).
    pub means: Vec<Vec<f64>>,
}

/// Classes a scene draws: every scheme class except Negative.
pub fn scene_classes(scheme: &ClassScheme) -> Vec<u8> {
    (1..scheme.len() as u8).filter(|&c| Some(c) != scheme.negative_index()).collect()
}

/// `count` distinct points on a `L^bands` lattice with step `spacing`, `L`
/// the smallest side giving enough vertices. Point `i` has the base-`L`
/// digits of `i` as coordinates, so any two points differ by at least one
/// step along some axis.
pub fn lattice_means(count: usize, bands: usize, spacing: f64) -> Vec<Vec<f64>> {
    let mut side = 2usize;
    while side.checked_pow(bands as u32).is_some_and(|v| v < count) {
        side += 1;
    }
    (0..count)
        .map(|i| {
            let mut rest = i;
            (0..bands)
                .map(|_| {
                    let d = rest % side;
                    rest /= side;
                    d as f64 * spacing
                })
                .collect()
        })
        .collect()
}

pub fn gen_scene(seed: u64, grid: &Grid, scheme: &ClassScheme, config: &SceneConfig) -> Result<Scene> {
    grid.validate()?;
    config.validate()?;
    let classes = scene_classes(scheme);
    if classes.len() < 2 {
        return Err(Error::InvalidScheme(format!(
            "scheme `{}` needs at least two non-negative classes for a scene",
            scheme.name
        )));
    }
    let truth = gen_truth(&mut rng::stream(seed, 0), grid, scheme, &classes);

    let mut means = vec![vec![0.0; config.bands]; scheme.len()];
    for (c, m) in classes.iter().zip(lattice_means(classes.len(), config.bands, config.spacing)) {
        means[*c as usize] = m;
    }
    let image = render(&mut rng::stream(seed, 1), &truth, &means, config);
    let labels = sample_labels(&mut rng::stream(seed, 2), &truth, &classes, config.label_fraction);
    Ok(Scene {
        image,
        truth,
        labels,
        means,
    })
}

fn gen_truth(g: &mut PipelineRng, grid: &Grid, scheme: &ClassScheme, classes: &[u8]) -> MaskRaster {
    let (w, h) = (grid.width, grid.height);
    let building = scheme.index_of("Building").or_else(|| scheme.index_of("Built-up"));
    let road = scheme.index_of("Road");
    // Buildings and roads are drawn as shapes, not regions, unless nothing
    // else is left to fill the background.
    let mut regional: Vec<u8> = classes.iter().copied().filter(|&c| Some(c) != building && Some(c) != road).collect();
    if regional.is_empty() {
        regional = classes.to_vec();
    }
    // Round-robin classes give every class many regions.
    let sites = (w * h / 512).clamp(2 * regional.len(), 4096);
    let pts: Vec<(f64, f64, u8)> = (0..sites)
        .map(|i| (rng::unit(g) * w as f64, rng::unit(g) * h as f64, regional[i % regional.len()]))
        .collect();
    let mut truth = MaskRaster::zeros(*grid);
    for r in 0..h {
        let y = r as f64 + 0.5;
        for c in 0..w {
            let x = c as f64 + 0.5;
            let mut best = (f64::INFINITY, 0u8);
            for &(px, py, class) in &pts {
                let d = (px - x) * (px - x) + (py - y) * (py - y);
                if d < best.0 {
                    best = (d, class);
                }
            }
            truth.set(c, r, best.1);
        }
    }

    if let Some(b) = building {
        let n = (w * h / 2048).max(1);
        for _ in 0..n {
            let bw = 6 + rng::below(g, 11);
            let bh = 6 + rng::below(g, 11);
            if bw >= w || bh >= h {
                continue;
            }
            let c0 = rng::below(g, w - bw);
            let r0 = rng::below(g, h - bh);
            for r in r0..r0 + bh {
                for c in c0..c0 + bw {
                    truth.set(c, r, b);
                }
            }
        }
    }
    if let Some(road) = road {
        let n = ((w + h) / 256).max(1);
        for _ in 0..n {
            let thick = 3 + rng::below(g, 3);
            if rng::coin(g, 0.5) && h > thick {
                let r0 = rng::below(g, h - thick);
                for r in r0..r0 + thick {
                    for c in 0..w {
                        truth.set(c, r, road);
                    }
                }
            } else if w > thick {
                let c0 = rng::below(g, w - thick);
                for r in 0..h {
                    for c in c0..c0 + thick {
                        truth.set(c, r, road);
                    }
                }
            }
        }
    }
    truth
}

fn render(g: &mut PipelineRng, truth: &MaskRaster, means: &[Vec<f64>], config: &SceneConfig) -> BandRaster {
    let sigma = config.noise_std();
    let mut image = BandRaster::zeros(truth.grid, config.bands);
    let n = truth.grid.len();
    for (i, &class) in truth.values.iter().enumerate() {
        for b in 0..config.bands {
            let noise = if sigma > 0.0 { sigma * rng::normal(g) } else { 0.0 };
            image.values[b * n + i] = (means[class as usize][b] + noise) as f32;
        }
    }
    image
}

/// Pixel-aligned rectangles, each lying entirely inside one truth region,
/// added class by class in turn until `fraction` of the grid is covered.
fn sample_labels(g: &mut PipelineRng, truth: &MaskRaster, classes: &[u8], fraction: f64) -> Vec<LabelPolygon> {
    let grid = truth.grid;
    let (w, h) = (grid.width, grid.height);
    let target = (fraction * grid.len() as f64) as usize;
    let mut taken = vec![false; grid.len()];
    let mut covered = 0usize;
    let mut polys = Vec::new();
    let mut misses = 0usize;
    let mut turn = 0usize;
    while covered < target && misses < 64 * classes.len() {
        let want = classes[turn % classes.len()];
        turn += 1;
        // Find a free pixel of the wanted class.
        let mut seed_px = None;
        for _ in 0..256 {
            let (c, r) = (rng::below(g, w), rng::below(g, h));
            if truth.get(c, r) == want && !taken[r * w + c] {
                seed_px = Some((c, r));
                break;
            }
        }
        let Some((c, r)) = seed_px else {
            misses += 1;
            continue;
        };
        let rw = 2 + rng::below(g, 7);
        let rh = 2 + rng::below(g, 7);
        let c0 = c.saturating_sub(rw / 2);
        let r0 = r.saturating_sub(rh / 2);
        let c1 = (c0 + rw).min(w);
        let r1 = (r0 + rh).min(h);
        let fits = (r0..r1).all(|y| (c0..c1).all(|x| truth.get(x, y) == want && !taken[y * w + x]));
        if !fits {
            misses += 1;
            continue;
        }
        for y in r0..r1 {
            for x in c0..c1 {
                taken[y * w + x] = true;
            }
        }
        covered += (r1 - r0) * (c1 - c0);
        polys.push(LabelPolygon::rect(
            grid.origin_x + c0 as f64 * grid.res,
            grid.origin_y - r1 as f64 * grid.res,
            grid.origin_x + c1 as f64 * grid.res,
            grid.origin_y - r0 as f64 * grid.res,
            want,
            Provenance::Manual,
        ));
    }
    polys
}

/// A high-resolution scene and its `factor`-times coarser counterpart.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenePair {
    pub hi: Scene,
    pub lo_image: BandRaster,
    pub lo_truth: MaskRaster,
    pub factor: usize,
}

/// Low-resolution truth is the majority reduction of the high-resolution
/// truth (coverage 0.5); the low-resolution image is the block mean.
pub fn gen_pair(
    seed: u64,
    hi_grid: &Grid,
    factor: usize,
    scheme: &ClassScheme,
    config: &SceneConfig,
) -> Result<ScenePair> {
    if factor < 2 {
        return Err(Error::InvalidArgument("pair factor must be >= 2".into()));
    }
    hi_grid.validate()?;
    if !hi_grid.width.is_multiple_of(factor) || !hi_grid.height.is_multiple_of(factor) {
        return Err(Error::InvalidGrid(format!(
            "{}x{} grid is not divisible by factor {factor}",
            hi_grid.width, hi_grid.height
        )));
    }
    let hi = gen_scene(seed, hi_grid, scheme, config)?;
    let lo_truth = downsample_majority(&hi.truth, factor, 0.5)?;
    let lo_image = block_mean(&hi.image, factor, lo_truth.grid);
    Ok(ScenePair {
        hi,
        lo_image,
        lo_truth,
        factor,
    })
}

fn block_mean(src: &BandRaster, factor: usize, grid: Grid) -> BandRaster {
    let mut out = BandRaster::zeros(grid, src.bands);
    let norm = (factor * factor) as f64;
    for b in 0..src.bands {
        for r in 0..grid.height {
            for c in 0..grid.width {
                let mut sum = 0.0f64;
                for y in r * factor..(r + 1) * factor {
                    for x in c * factor..(c + 1) * factor {
                        sum += src.get(b, x, y) as f64;
                    }
                }
                out.set(b, c, r, (sum / norm) as f32);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::{rasterize, SourceTag};

    fn scheme() -> ClassScheme {
        ClassScheme::new(
            "s",
            SourceTag::Teacher,
            &["Bare Ground", "Building", "Road", "Crop", "Trees", "Water", "Negative"],
        )
        .unwrap()
    }

    fn grid(n: usize) -> Grid {
        Grid::new(500.0, 800.0, 1.0, n, n).unwrap()
    }

    #[test]
    fn lattice_points_are_spaced() {
        let m = lattice_means(6, 4, 1.0);
        for i in 0..6 {
            for j in 0..i {
                let d2: f64 = m[i].iter().zip(&m[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                assert!(d2 >= 1.0);
            }
        }
        assert_eq!(lattice_means(5, 1, 2.0), vec![vec![0.0], vec![2.0], vec![4.0], vec![6.0], vec![8.0]]);
    }

    #[test]
    fn deterministic() {
        let cfg = SceneConfig::default();
        let a = gen_scene(7, &grid(64), &scheme(), &cfg).unwrap();
        let b = gen_scene(7, &grid(64), &scheme(), &cfg).unwrap();
        assert_eq!(a, b);
        let c = gen_scene(8, &grid(64), &scheme(), &cfg).unwrap();
        assert_ne!(a.truth, c.truth);
    }

    #[test]
    fn nearest_mean_recovers_truth_at_full_separability() {
        let cfg = SceneConfig {
            separability: 1.0,
            ..SceneConfig::default()
        };
        let s = scheme();
        let scene = gen_scene(3, &grid(96), &s, &cfg).unwrap();
        let classes = scene_classes(&s);
        let n = scene.truth.grid.len();
        let mut hits = 0;
        for i in 0..n {
            let px: Vec<f64> = (0..cfg.bands).map(|b| scene.image.values[b * n + i] as f64).collect();
            let best = classes
                .iter()
                .min_by(|&&a, &&b| {
                    let da: f64 = px.iter().zip(&scene.means[a as usize]).map(|(x, m)| (x - m) * (x - m)).sum();
                    let db: f64 = px.iter().zip(&scene.means[b as usize]).map(|(x, m)| (x - m) * (x - m)).sum();
                    da.total_cmp(&db)
                })
                .unwrap();
            hits += (*best == scene.truth.values[i]) as usize;
        }
        assert!(hits as f64 / n as f64 >= 0.99);
    }

    #[test]
    fn labels_are_sparse_and_consistent_with_truth() {
        let s = scheme();
        let scene = gen_scene(11, &grid(128), &s, &SceneConfig::default()).unwrap();
        let mask = rasterize(&scene.labels, &scene.truth.grid, &s).unwrap().mask;
        for (m, t) in mask.values.iter().zip(&scene.truth.values) {
            assert!(*m == 0 || m == t);
        }
        let frac = mask.labeled_count() as f64 / mask.values.len() as f64;
        assert!((0.04..0.07).contains(&frac), "coverage {frac}");
        let neg = s.negative_index().unwrap();
        assert!(scene.truth.values.iter().all(|&v| v != neg && v != 0));
    }

    #[test]
    fn pair_geometry_and_majority() {
        let s = scheme();
        let p = gen_pair(5, &grid(64), 4, &s, &SceneConfig::default()).unwrap();
        let (hi, lo) = (p.hi.truth.grid, p.lo_truth.grid);
        assert_eq!((hi.origin_x, hi.origin_y, hi.max_x(), hi.min_y()), (lo.origin_x, lo.origin_y, lo.max_x(), lo.min_y()));
        for r in 0..lo.height {
            for c in 0..lo.width {
                let mut counts = [0usize; 8];
                for y in r * 4..r * 4 + 4 {
                    for x in c * 4..c * 4 + 4 {
                        counts[p.hi.truth.get(x, y) as usize] += 1;
                    }
                }
                let best = (1..8).fold(1, |b, k| if counts[k] > counts[b] { k } else { b });
                assert_eq!(p.lo_truth.get(c, r) as usize, best);
            }
        }
        assert!(gen_pair(5, &grid(64), 1, &s, &SceneConfig::default()).is_err());
        assert!(gen_pair(5, &grid(66), 4, &s, &SceneConfig::default()).is_err());
    }

    #[test]
    fn constant_scene_reduces_to_constant() {
        let g = grid(8);
        let image = BandRaster::new(g, 2, vec![0.25; 128]).unwrap();
        let lo = g.coarsen(2).unwrap();
        let m = block_mean(&image, 2, lo);
        assert!(m.values.iter().all(|&v| v == 0.25));
        let t = downsample_majority(&MaskRaster::filled(g, 3), 2, 0.5).unwrap();
        assert!(t.values.iter().all(|&v| v == 3));
    }
}
