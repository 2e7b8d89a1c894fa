//! Class schemes, label polygons, hard-negative rings, rasterization and
//! class remapping.

mod buffer;
mod polygon;
mod rasterize;

pub use buffer::{buffer_ring, default_negative_distances, make_negatives, NegativeSet};
pub use polygon::{LabelPolygon, Provenance};
pub use rasterize::{rasterize, rasterize_rows, Rasterization, Skipped};

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::raster::MaskRaster;
use crate::{Error, Result};

pub const UNLABELED: &str = "Unlabeled";
pub const NEGATIVE: &str = "Negative";
pub const OTHERS: &str = "Others";

/// Where a scheme comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceTag {
    Teacher,
    Student,
    Gdw,
    Esa,
    Esri,
    External,
}

impl SourceTag {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "teacher" => Some(SourceTag::Teacher),
            "student" => Some(SourceTag::Student),
            "gdw" => Some(SourceTag::Gdw),
            "esa" => Some(SourceTag::Esa),
            "esri" => Some(SourceTag::Esri),
            "external" => Some(SourceTag::External),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SourceTag::Teacher => "teacher",
            SourceTag::Student => "student",
            SourceTag::Gdw => "gdw",
            SourceTag::Esa => "esa",
            SourceTag::Esri => "esri",
            SourceTag::External => "external",
        }
    }
}

/// Ordered class list. Index 0 is always `Unlabeled`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassScheme {
    pub name: String,
    pub source: SourceTag,
    names: Vec<String>,
    negative: Option<u8>,
}

impl ClassScheme {
    /// `classes` excludes the reserved `Unlabeled` entry, which is prepended.
    /// A class literally named `Negative` becomes the negative class.
    pub fn new<S: AsRef<str>>(name: &str, source: SourceTag, classes: &[S]) -> Result<Self> {
        if classes.len() > 254 {
            return Err(Error::InvalidScheme(format!(
                "{} classes do not fit a one-byte mask",
                classes.len()
            )));
        }
        let mut names = Vec::with_capacity(classes.len() + 1);
        names.push(UNLABELED.to_string());
        for c in classes {
            let c = c.as_ref().trim();
            if c.is_empty() {
                return Err(Error::InvalidScheme("empty class name".into()));
            }
            if names.iter().any(|n| n.eq_ignore_ascii_case(c)) {
                return Err(Error::InvalidScheme(format!("duplicate class `{c}` in `{name}`")));
            }
            names.push(c.to_string());
        }
        let negative = names
            .iter()
            .position(|n| n.eq_ignore_ascii_case(NEGATIVE))
            .map(|i| i as u8);
        Ok(ClassScheme {
            name: name.to_string(),
            source,
            names,
            negative,
        })
    }

    /// Number of entries including `Unlabeled`.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.len() <= 1
    }

    /// Number of real classes (excluding `Unlabeled`).
    pub fn num_classes(&self) -> usize {
        self.names.len() - 1
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name_of(&self, index: u8) -> Option<&str> {
        self.names.get(index as usize).map(String::as_str)
    }

    /// Case-insensitive class lookup.
    pub fn index_of(&self, name: &str) -> Option<u8> {
        let name = name.trim();
        self.names
            .iter()
            .position(|n| n.eq_ignore_ascii_case(name))
            .map(|i| i as u8)
    }

    pub fn require(&self, name: &str) -> Result<u8> {
        self.index_of(name)
            .ok_or_else(|| Error::UnknownClass(format!("{name} (scheme `{}`)", self.name)))
    }

    pub fn negative_index(&self) -> Option<u8> {
        self.negative
    }

    pub fn others_index(&self) -> Option<u8> {
        self.index_of(OTHERS)
    }

    pub fn contains(&self, index: u8) -> bool {
        (index as usize) < self.names.len()
    }

    /// Checks every mask value is a valid index of this scheme.
    pub fn check_mask(&self, mask: &MaskRaster) -> Result<()> {
        let w = mask.grid.width;
        match mask.values.iter().position(|&v| !self.contains(v)) {
            None => Ok(()),
            Some(i) => Err(Error::ClassOutOfScheme {
                value: mask.values[i],
                col: i % w,
                row: i / w,
                scheme: self.name.clone(),
            }),
        }
    }

    /// High-resolution teacher scheme: Built-up split into Building and Road,
    /// plus the hard-negative class.
    pub fn teacher() -> Self {
        Self::new(
            "teacher",
            SourceTag::Teacher,
            &[
                "Bare Ground",
                "Building",
                "Road",
                "Crop",
                "Flooded Vegetation",
                "Grass",
                "Shrub & Scrub",
                "Trees",
                "Water",
                NEGATIVE,
            ],
        )
        .expect("static scheme")
    }

    /// Low-resolution student scheme. It lists both Built-up and Road; the
    /// Building/Road split is otherwise described as teacher-only, so maps
    /// in this scheme are merged back to Built-up before evaluation.
    pub fn student() -> Self {
        Self::new(
            "student",
            SourceTag::Student,
            &[
                "Bare Ground",
                "Built-up",
                "Crop",
                "Grass",
                "Road",
                "Shrub & Scrub",
                "Trees",
                "Water",
            ],
        )
        .expect("static scheme")
    }

    /// Common comparison scheme. Flooded Vegetation is excluded; classes a
    /// product cannot express land in `Others`.
    pub fn evaluation() -> Self {
        Self::new(
            "evaluation",
            SourceTag::External,
            &[
                "Bare Ground",
                "Built-up",
                "Crop",
                "Grass",
                "Shrub & Scrub",
                "Trees",
                "Water",
                OTHERS,
            ],
        )
        .expect("static scheme")
    }

    pub fn gdw() -> Self {
        Self::new(
            "gdw",
            SourceTag::Gdw,
            &[
                "Water",
                "Trees",
                "Grass",
                "Flooded Vegetation",
                "Crops",
                "Shrub & Scrub",
                "Built Area",
                "Bare Ground",
                "Snow & Ice",
            ],
        )
        .expect("static scheme")
    }

    pub fn esa() -> Self {
        Self::new(
            "esa",
            SourceTag::Esa,
            &[
                "Tree cover",
                "Shrubland",
                "Grassland",
                "Cropland",
                "Built-up",
                "Bare / sparse vegetation",
                "Snow and Ice",
                "Permanent water bodies",
                "Herbaceous Wetland",
                "Mangroves",
                "Moss and Lichen",
            ],
        )
        .expect("static scheme")
    }

    pub fn esri() -> Self {
        Self::new(
            "esri",
            SourceTag::Esri,
            &[
                "Water",
                "Trees",
                "Grass",
                "Flooded Vegetation",
                "Crops",
                "Scrub/Shrub",
                "Built Area",
                "Bare Ground",
                "Snow/Ice",
                "Clouds",
                "Herbaceous Wetland",
                "Mangroves",
                "Moss and Lichen",
                "Shadow",
            ],
        )
        .expect("static scheme")
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "teacher" => Some(Self::teacher()),
            "student" => Some(Self::student()),
            "evaluation" | "eval" => Some(Self::evaluation()),
            "gdw" => Some(Self::gdw()),
            "esa" => Some(Self::esa()),
            "esri" => Some(Self::esri()),
            _ => None,
        }
    }

    pub const BUILTIN_NAMES: [&'static str; 6] = ["teacher", "student", "evaluation", "gdw", "esa", "esri"];
}

/// Total mapping from one scheme's classes onto another's.
#[derive(Debug, Clone, PartialEq)]
pub struct RemapTable {
    pub source: ClassScheme,
    pub target: ClassScheme,
    map: Vec<u8>,
}

impl RemapTable {
    /// Builds a table from `(source name, target name)` pairs. Source classes
    /// not listed go to `fallback` (usually `Others`); without a fallback every
    /// source class must be listed. The target name `Unlabeled` maps to 0.
    pub fn from_names<A: AsRef<str>, B: AsRef<str>>(
        source: ClassScheme,
        target: ClassScheme,
        pairs: &[(A, B)],
        fallback: Option<&str>,
    ) -> Result<Self> {
        let mut map: Vec<Option<u8>> = alloc::vec![None; source.len()];
        map[0] = Some(0);
        for (s, t) in pairs {
            let si = source.require(s.as_ref())?;
            let ti = target.require(t.as_ref())?;
            if si == 0 && ti != 0 {
                return Err(Error::InvalidScheme("Unlabeled must map to Unlabeled".into()));
            }
            map[si as usize] = Some(ti);
        }
        let fallback = fallback.map(|f| target.require(f)).transpose()?;
        let mut out = Vec::with_capacity(map.len());
        for (i, m) in map.into_iter().enumerate() {
            match m.or(fallback) {
                Some(t) => out.push(t),
                None => {
                    return Err(Error::InvalidScheme(format!(
                        "remap {} -> {} leaves `{}` unmapped",
                        source.name, target.name, source.names[i]
                    )))
                }
            }
        }
        Ok(RemapTable {
            source,
            target,
            map: out,
        })
    }

    pub fn identity(scheme: &ClassScheme) -> Self {
        RemapTable {
            source: scheme.clone(),
            target: scheme.clone(),
            map: (0..scheme.len() as u8).collect(),
        }
    }

    /// Target index for source index `v`.
    pub fn lookup(&self, v: u8) -> Option<u8> {
        self.map.get(v as usize).copied()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> + '_ {
        self.map.iter().enumerate().skip(1).map(|(s, &t)| {
            (
                self.source.names[s].as_str(),
                self.target.names[t as usize].as_str(),
            )
        })
    }

    pub fn apply(&self, mask: &MaskRaster) -> Result<MaskRaster> {
        let w = mask.grid.width;
        let mut values = Vec::with_capacity(mask.values.len());
        for (i, &v) in mask.values.iter().enumerate() {
            match self.lookup(v) {
                Some(t) => values.push(t),
                None => {
                    return Err(Error::ClassOutOfScheme {
                        value: v,
                        col: i % w,
                        row: i / w,
                        scheme: self.source.name.clone(),
                    })
                }
            }
        }
        Ok(MaskRaster {
            grid: mask.grid,
            values,
        })
    }
}

/// Fraction of labeled (nonzero) pixels.
pub fn sparsity(mask: &MaskRaster) -> f64 {
    if mask.values.is_empty() {
        return 0.0;
    }
    mask.labeled_count() as f64 / mask.values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Grid;
    use alloc::vec;

    #[test]
    fn scheme_reserves_unlabeled() {
        for name in ClassScheme::BUILTIN_NAMES {
            let s = ClassScheme::builtin(name).unwrap();
            assert_eq!(s.name_of(0), Some(UNLABELED));
        }
        assert_eq!(ClassScheme::teacher().negative_index(), Some(10));
        assert_eq!(ClassScheme::student().negative_index(), None);
        assert_eq!(ClassScheme::evaluation().others_index(), Some(8));
    }

    #[test]
    fn scheme_rejects_duplicates() {
        assert!(ClassScheme::new("x", SourceTag::External, &["Crop", "crop"]).is_err());
        assert!(ClassScheme::new("x", SourceTag::External, &["Unlabeled"]).is_err());
    }

    #[test]
    fn lookup_is_case_insensitive() {
        let s = ClassScheme::teacher();
        assert_eq!(s.index_of("shrub & scrub"), Some(7));
        assert_eq!(s.index_of("BUILDING"), Some(2));
    }

    #[test]
    fn built_up_merge() {
        let teacher = ClassScheme::teacher();
        let eval = ClassScheme::evaluation();
        let t = RemapTable::from_names(
            teacher.clone(),
            eval.clone(),
            &[
                ("Bare Ground", "Bare Ground"),
                ("Building", "Built-up"),
                ("Road", "Built-up"),
                ("Crop", "Crop"),
                ("Grass", "Grass"),
                ("Shrub & Scrub", "Shrub & Scrub"),
                ("Trees", "Trees"),
                ("Water", "Water"),
            ],
            Some(OTHERS),
        )
        .unwrap();
        let g = Grid::new(0.0, 0.0, 1.0, 3, 1).unwrap();
        let m = MaskRaster::new(g, vec![2, 3, 4]).unwrap();
        let out = t.apply(&m).unwrap();
        let bu = eval.index_of("Built-up").unwrap();
        assert_eq!(out.values, vec![bu, bu, eval.index_of("Crop").unwrap()]);
        assert_eq!(t.lookup(teacher.index_of("Flooded Vegetation").unwrap()), eval.others_index());
    }

    #[test]
    fn excluded_esa_classes_become_others() {
        let t = RemapTable::from_names(
            ClassScheme::esa(),
            ClassScheme::evaluation(),
            &[("Cropland", "Crop")],
            Some(OTHERS),
        )
        .unwrap();
        let mangroves = ClassScheme::esa().index_of("Mangroves").unwrap();
        assert_eq!(t.lookup(mangroves), ClassScheme::evaluation().others_index());
    }

    #[test]
    fn remap_must_be_total() {
        let r = RemapTable::from_names(
            ClassScheme::esa(),
            ClassScheme::evaluation(),
            &[("Cropland", "Crop")],
            None,
        );
        assert!(r.is_err());
    }

    #[test]
    fn remap_rejects_out_of_scheme_value() {
        let s = ClassScheme::student();
        let t = RemapTable::identity(&s);
        let g = Grid::new(0.0, 0.0, 1.0, 2, 2).unwrap();
        let m = MaskRaster::new(g, vec![0, 1, 2, 200]).unwrap();
        match t.apply(&m) {
            Err(Error::ClassOutOfScheme { value, col, row, .. }) => {
                assert_eq!((value, col, row), (200, 1, 1));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn identity_remap_is_noop() {
        let s = ClassScheme::student();
        let g = Grid::new(0.0, 0.0, 1.0, 3, 3).unwrap();
        let m = MaskRaster::new(g, vec![0, 1, 2, 3, 4, 5, 6, 7, 8]).unwrap();
        assert_eq!(RemapTable::identity(&s).apply(&m).unwrap(), m);
    }

    #[test]
    fn sparsity_counts() {
        let g = Grid::new(0.0, 0.0, 1.0, 4, 4).unwrap();
        assert_eq!(sparsity(&MaskRaster::zeros(g)), 0.0);
        assert_eq!(sparsity(&MaskRaster::filled(g, 1)), 1.0);
        let mut m = MaskRaster::zeros(g);
        for i in 0..9 {
            m.values[i] = 1;
        }
        assert_eq!(sparsity(&m), 0.5625);
    }
}
