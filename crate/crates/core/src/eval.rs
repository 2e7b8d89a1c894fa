//! Map evaluation: negative relabeling, confusion matrices, one-vs-all
//! metrics, agreement between maps and per-class area coverage.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::labels::{ClassScheme, RemapTable};
use crate::math::sqrt;
use crate::model::{argmax, ProbRaster};
use crate::raster::MaskRaster;
use crate::{Error, Result};

/// Final class for one probability vector (plane `p` is class `p + 1`):
/// the argmax, or the runner-up when the argmax is `negative`. Ties go to
/// the lowest class index.
pub fn relabel_pixel(probs: &[f64], negative: u8) -> u8 {
    let (best, _) = argmax(probs);
    if best + 1 != negative as usize {
        return best as u8 + 1;
    }
    let mut second: Option<usize> = None;
    for (i, &v) in probs.iter().enumerate() {
        if i + 1 == negative as usize {
            continue;
        }
        if second.is_none_or(|s| v > probs[s]) {
            second = Some(i);
        }
    }
    second.map_or(0, |s| s as u8 + 1)
}

/// Hard class map from model probabilities with the Negative class resolved
/// to each pixel's second most probable class.
pub fn relabel_negative(probs: &ProbRaster, scheme: &ClassScheme) -> Result<MaskRaster> {
    let neg = scheme
        .negative_index()
        .ok_or_else(|| Error::NoNegativeClass(scheme.name.clone()))?;
    if probs.classes != scheme.num_classes() {
        return Err(Error::InvalidArgument(format!(
            "{} probability planes for a {}-class scheme",
            probs.classes,
            scheme.num_classes()
        )));
    }
    let values = probs.pixels().map(|p| relabel_pixel(p, neg)).collect();
    MaskRaster::new(probs.grid, values)
}

/// Truth × prediction counts over pixels with nonzero truth, indexed by raw
/// class value. Column 0 counts labeled pixels left unpredicted; row 0 is
/// always empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    /// Number of classes `K`; the matrix is `(K+1)×(K+1)`.
    pub classes: usize,
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![0; (classes + 1) * (classes + 1)],
        }
    }

    #[inline]
    pub fn get(&self, truth: u8, pred: u8) -> u64 {
        self.counts[truth as usize * (self.classes + 1) + pred as usize]
    }

    /// Adds the pixels of two aligned value slices. Values must already be
    /// known to lie in `0..=K`.
    pub fn accumulate(&mut self, truth: &[u8], pred: &[u8]) {
        let n = self.classes + 1;
        for (&t, &p) in truth.iter().zip(pred) {
            if t != 0 {
                self.counts[t as usize * n + p as usize] += 1;
            }
        }
    }

    /// Sums counts from another tile.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::InvalidArgument("confusion matrices differ in size".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, truth: u8) -> u64 {
        (0..=self.classes).map(|p| self.get(truth, p as u8)).sum()
    }

    pub fn col_sum(&self, pred: u8) -> u64 {
        (1..=self.classes).map(|t| self.get(t as u8, pred)).sum()
    }

    pub fn trace(&self) -> u64 {
        (1..=self.classes).map(|c| self.get(c as u8, c as u8)).sum()
    }
}

pub fn confusion(pred: &MaskRaster, truth: &MaskRaster, scheme: &ClassScheme) -> Result<ConfusionMatrix> {
    if pred.grid != truth.grid {
        return Err(Error::GridMismatch("prediction and truth grids differ".into()));
    }
    scheme.check_mask(truth)?;
    scheme.check_mask(pred)?;
    let mut cm = ConfusionMatrix::new(scheme.num_classes());
    cm.accumulate(&truth.values, &pred.values);
    Ok(cm)
}

/// Which pixels a report was computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalSet {
    #[default]
    Whole,
    Test,
    External,
}

impl EvalSet {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "whole" => Some(EvalSet::Whole),
            "test" => Some(EvalSet::Test),
            "external" => Some(EvalSet::External),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EvalSet::Whole => "whole",
            EvalSet::Test => "test",
            EvalSet::External => "external",
        }
    }
}

/// One-vs-all counts and scores for a single class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub class: u8,
    pub name: String,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `None` when TP+FP+FN = 0.
    pub iou: Option<f64>,
}

impl ClassMetrics {
    /// Truth pixels of this class.
    pub fn support(&self) -> u64 {
        self.tp + self.fn_
    }

    fn compute(cm: &ConfusionMatrix, class: u8, name: String) -> Self {
        let total = cm.total();
        let tp = cm.get(class, class);
        let fp = cm.col_sum(class) - tp;
        let fn_ = cm.row_sum(class) - tp;
        let tn = total - tp - fp - fn_;
        let ratio = |n: u64, d: u64| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        let union = tp + fp + fn_;
        ClassMetrics {
            class,
            name,
            tp,
            fp,
            fn_,
            tn,
            accuracy: ratio(tp + tn, total),
            precision,
            recall,
            f1,
            iou: (union > 0).then(|| tp as f64 / union as f64),
        }
    }
}

/// Mean and population standard deviation across classes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Summary::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Summary { mean, std: sqrt(var) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub set: EvalSet,
    pub scheme: String,
    /// Labeled truth pixels evaluated.
    pub total: u64,
    /// Every scheme class, in index order.
    pub per_class: Vec<ClassMetrics>,
    /// Classes without truth pixels; they are left out of the macro averages.
    pub absent: Vec<String>,
    pub accuracy: Summary,
    pub precision: Summary,
    pub recall: Summary,
    pub f1: Summary,
    pub iou: Summary,
}

impl MetricsReport {
    pub fn present(&self) -> impl Iterator<Item = &ClassMetrics> {
        self.per_class.iter().filter(|m| m.support() > 0)
    }
}

/// One-vs-all metrics per class, macro-averaged over the classes that occur
/// in the truth.
pub fn metrics(cm: &ConfusionMatrix, scheme: &ClassScheme, set: EvalSet) -> Result<MetricsReport> {
    if cm.classes != scheme.num_classes() {
        return Err(Error::InvalidArgument(format!(
            "{}-class confusion matrix for a {}-class scheme",
            cm.classes,
            scheme.num_classes()
        )));
    }
    let total = cm.total();
    if total == 0 {
        return Err(Error::NoLabels("confusion matrix is empty".into()));
    }
    let per_class: Vec<ClassMetrics> = (1..=cm.classes as u8)
        .map(|c| ClassMetrics::compute(cm, c, String::from(scheme.name_of(c).unwrap_or("?"))))
        .collect();
    let absent = per_class
        .iter()
        .filter(|m| m.support() == 0)
        .map(|m| m.name.clone())
        .collect();
    let present: Vec<&ClassMetrics> = per_class.iter().filter(|m| m.support() > 0).collect();
    let pick = |f: &dyn Fn(&ClassMetrics) -> f64| Summary::of(&present.iter().map(|m| f(m)).collect::<Vec<_>>());
    // Present classes always have TP+FN > 0, so their IoU is defined.
    let iou = pick(&|m| m.iou.unwrap_or(0.0));
    Ok(MetricsReport {
        set,
        scheme: scheme.name.clone(),
        total,
        accuracy: pick(&|m| m.accuracy),
        precision: pick(&|m| m.precision),
        recall: pick(&|m| m.recall),
        f1: pick(&|m| m.f1),
        iou,
        per_class,
        absent,
    })
}

/// Pixel counts behind an agreement rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AgreementCounts {
    pub agree: u64,
    /// Pixels valid in both maps.
    pub valid: u64,
}

impl AgreementCounts {
    /// Counts over two aligned, already harmonized value slices. A pixel is
    /// valid when neither map holds 0 or a value listed in `excluded`.
    pub fn count(a: &[u8], b: &[u8], excluded: &[u8]) -> Self {
        let mut out = AgreementCounts::default();
        for (&x, &y) in a.iter().zip(b) {
            if x == 0 || y == 0 || excluded.contains(&x) || excluded.contains(&y) {
                continue;
            }
            out.valid += 1;
            out.agree += (x == y) as u64;
        }
        out
    }

    pub fn merge(&mut self, other: AgreementCounts) {
        self.agree += other.agree;
        self.valid += other.valid;
    }

    /// `None` when no pixel is valid in both maps.
    pub fn rate(&self) -> Option<f64> {
        (self.valid > 0).then(|| self.agree as f64 / self.valid as f64)
    }
}

/// Maps harmonized into one scheme, ready for pairwise comparison.
fn harmonize(map: &MaskRaster, table: &RemapTable) -> Result<MaskRaster> {
    table.apply(map)
}

fn check_common_target(tables: &[&RemapTable]) -> Result<()> {
    let first = &tables[0].target;
    for t in &tables[1..] {
        if t.target.names() != first.names() {
            return Err(Error::InvalidScheme(format!(
                "remap targets `{}` and `{}` differ",
                first.name, t.target.name
            )));
        }
    }
    Ok(())
}

/// Classes that never count toward agreement: the target scheme's `Others`.
pub fn excluded_classes(target: &ClassScheme) -> Vec<u8> {
    target.others_index().into_iter().collect()
}

/// Fraction of mutually valid pixels on which `a` and `b` agree after each is
/// harmonized into the common target scheme. Unlabeled and `Others` pixels
/// in either map are excluded; `None` when nothing is mutually valid.
pub fn agreement(a: &MaskRaster, b: &MaskRaster, harmonize_with: (&RemapTable, &RemapTable)) -> Result<Option<f64>> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch("maps must share a grid; resample first".into()));
    }
    check_common_target(&[harmonize_with.0, harmonize_with.1])?;
    let ha = harmonize(a, harmonize_with.0)?;
    let hb = harmonize(b, harmonize_with.1)?;
    let excluded = excluded_classes(&harmonize_with.0.target);
    Ok(AgreementCounts::count(&ha.values, &hb.values, &excluded).rate())
}

/// Symmetric pairwise agreement with a unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AgreementMatrix {
    pub ids: Vec<String>,
    /// Row-major `n×n`; `None` where two maps share no valid pixel.
    pub values: Vec<Option<f64>>,
}

impl AgreementMatrix {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i * self.ids.len() + j]
    }

    /// Builds the matrix from upper-triangle counts, `counts[k]` belonging to
    /// the `k`-th pair `(i, j)`, `i < j`, in row-major order.
    pub fn from_counts(ids: Vec<String>, counts: &[AgreementCounts]) -> Result<Self> {
        let n = ids.len();
        if counts.len() != n * n.saturating_sub(1) / 2 {
            return Err(Error::InvalidArgument("agreement counts do not match map count".into()));
        }
        let mut values = vec![None; n * n];
        let mut k = 0;
        for i in 0..n {
            values[i * n + i] = Some(1.0);
            for j in i + 1..n {
                let r = counts[k].rate();
                values[i * n + j] = r;
                values[j * n + i] = r;
                k += 1;
            }
        }
        Ok(AgreementMatrix { ids, values })
    }
}

/// Upper-triangle pairs `(i, j)`, `i < j`, in the order
/// [`AgreementMatrix::from_counts`] expects.
pub fn pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

/// Harmonizes every map once and returns them with the shared exclusion list.
pub fn harmonize_all(maps: &[(String, &MaskRaster, &RemapTable)]) -> Result<(Vec<MaskRaster>, Vec<u8>)> {
    if maps.len() < 2 {
        return Err(Error::InvalidArgument("an agreement matrix needs at least two maps".into()));
    }
    let grid = maps[0].1.grid;
    if let Some((id, _, _)) = maps.iter().find(|(_, m, _)| m.grid != grid) {
        return Err(Error::GridMismatch(format!("map `{id}` is not on the common grid")));
    }
    let tables: Vec<&RemapTable> = maps.iter().map(|m| m.2).collect();
    check_common_target(&tables)?;
    let harmonized = maps
        .iter()
        .map(|(_, m, t)| harmonize(m, t))
        .collect::<Result<Vec<_>>>()?;
    Ok((harmonized, excluded_classes(&tables[0].target)))
}

pub fn agreement_matrix(maps: &[(String, &MaskRaster, &RemapTable)]) -> Result<AgreementMatrix> {
    let (harmonized, excluded) = harmonize_all(maps)?;
    let counts: Vec<AgreementCounts> = pairs(maps.len())
        .into_iter()
        .map(|(i, j)| AgreementCounts::count(&harmonized[i].values, &harmonized[j].values, &excluded))
        .collect();
    AgreementMatrix::from_counts(maps.iter().map(|m| m.0.clone()).collect(), &counts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AreaRow {
    pub class: u8,
    pub name: String,
    pub pixels: u64,
    pub area_m2: f64,
    pub area_km2: f64,
    pub percent: f64,
}

impl AreaRow {
    fn new(class: u8, name: String, pixels: u64, res: f64, grid_pixels: u64) -> Self {
        let area_m2 = pixels as f64 * res * res;
        AreaRow {
            class,
            name,
            pixels,
            area_m2,
            area_km2: area_m2 / 1e6,
            percent: 100.0 * pixels as f64 / grid_pixels as f64,
        }
    }
}

/// Per-class area coverage of a map.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaTable {
    pub scheme: String,
    /// One row per scheme class, in index order.
    pub rows: Vec<AreaRow>,
    /// Sum over all classes (index 0 excluded).
    pub all: AreaRow,
    pub unlabeled: AreaRow,
    pub grid_area_m2: f64,
}

pub fn area_coverage(map: &MaskRaster, scheme: &ClassScheme) -> Result<AreaTable> {
    scheme.check_mask(map)?;
    let mut counts = vec![0u64; scheme.len()];
    for &v in &map.values {
        counts[v as usize] += 1;
    }
    let res = map.grid.res;
    let n = map.grid.len() as u64;
    let rows: Vec<AreaRow> = (1..scheme.len())
        .map(|c| AreaRow::new(c as u8, String::from(&scheme.names()[c]), counts[c], res, n))
        .collect();
    Ok(AreaTable {
        scheme: scheme.name.clone(),
        all: AreaRow::new(0, String::from("All"), counts[1..].iter().sum(), res, n),
        unlabeled: AreaRow::new(0, String::from("Unlabeled"), counts[0], res, n),
        rows,
        grid_area_m2: map.grid.area(),
    })
}
