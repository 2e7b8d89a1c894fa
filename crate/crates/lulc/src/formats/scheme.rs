//! Class schemes and remap tables on disk.
//!
//! A scheme file lists its classes without the reserved `Unlabeled` entry:
//! `{"name": "...", "source": "teacher", "classes": ["Crop", ...]}`. A remap
//! file names its source and target schemes and maps class names:
//! `{"source": "esa", "target": "evaluation", "map": {"Mangroves": "Others"},
//! "fallback": "Others"}`; `fallback` is optional.

use std::collections::BTreeMap;
use std::path::Path;

use lulc_core::labels::SourceTag;
use lulc_core::{ClassScheme, RemapTable};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeFile {
    pub name: String,
    #[serde(default = "external")]
    pub source: String,
    pub classes: Vec<String>,
}

fn external() -> String {
    "external".into()
}

impl SchemeFile {
    pub fn from_scheme(s: &ClassScheme) -> Self {
        SchemeFile {
            name: s.name.clone(),
            source: s.source.as_str().into(),
            classes: s.names()[1..].to_vec(),
        }
    }

    pub fn to_scheme(&self) -> lulc_core::Result<ClassScheme> {
        let source = SourceTag::parse(&self.source)
            .ok_or_else(|| lulc_core::Error::InvalidScheme(format!("unknown source tag `{}`", self.source)))?;
        ClassScheme::new(&self.name, source, &self.classes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemapFile {
    pub source: String,
    pub target: String,
    pub map: BTreeMap<String, String>,
    #[serde(default)]
    pub fallback: Option<String>,
}

const DEFAULT_TABLES: [(&str, &str); 6] = [
    ("gdw-evaluation.json", include_str!("../../data/remap/gdw-evaluation.json")),
    ("esa-evaluation.json", include_str!("../../data/remap/esa-evaluation.json")),
    ("esri-evaluation.json", include_str!("../../data/remap/esri-evaluation.json")),
    ("teacher-student.json", include_str!("../../data/remap/teacher-student.json")),
    ("teacher-evaluation.json", include_str!("../../data/remap/teacher-evaluation.json")),
    ("student-evaluation.json", include_str!("../../data/remap/student-evaluation.json")),
];

/// Known schemes and remap tables: the built-ins plus whatever the user
/// loads. User entries shadow built-ins of the same name.
#[derive(Debug, Clone)]
pub struct Registry {
    schemes: Vec<ClassScheme>,
    tables: Vec<RemapTable>,
}

impl Default for Registry {
    fn default() -> Self {
        Self::new()
    }
}

impl Registry {
    pub fn new() -> Self {
        let schemes: Vec<ClassScheme> = ClassScheme::BUILTIN_NAMES
            .iter()
            .map(|n| ClassScheme::builtin(n).expect("builtin scheme"))
            .collect();
        let mut reg = Registry {
            schemes,
            tables: Vec::new(),
        };
        for (name, text) in DEFAULT_TABLES {
            let file: RemapFile = serde_json::from_str(text).expect("bundled remap table parses");
            let table = reg.build_table(&file).unwrap_or_else(|e| panic!("bundled table {name}: {e}"));
            reg.tables.push(table);
        }
        reg
    }

    pub fn scheme(&self, name: &str) -> Option<&ClassScheme> {
        self.schemes.iter().rev().find(|s| s.name.eq_ignore_ascii_case(name))
    }

    /// Resolves a `--scheme` style argument: a registered name, or a path to a
    /// scheme file (which is then registered).
    pub fn resolve_scheme(&mut self, arg: &str) -> Result<ClassScheme> {
        if let Some(s) = self.scheme(arg) {
            return Ok(s.clone());
        }
        let path = Path::new(arg);
        if !path.exists() {
            return Err(Error::usage(format!(
                "`{arg}` is neither a known scheme ({}) nor a scheme file",
                self.schemes.iter().map(|s| s.name.as_str()).collect::<Vec<_>>().join(", ")
            )));
        }
        let file: SchemeFile = super::read_json(path)?;
        let scheme = file.to_scheme().map_err(|e| Error::format(path, e))?;
        self.schemes.push(scheme.clone());
        Ok(scheme)
    }

    fn build_table(&self, file: &RemapFile) -> lulc_core::Result<RemapTable> {
        let find = |n: &str| {
            self.scheme(n)
                .cloned()
                .ok_or_else(|| lulc_core::Error::InvalidScheme(format!("remap refers to unknown scheme `{n}`")))
        };
        let pairs: Vec<(&str, &str)> = file.map.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        RemapTable::from_names(find(&file.source)?, find(&file.target)?, &pairs, file.fallback.as_deref())
    }

    /// Loads a remap file; its schemes must already be registered.
    pub fn load_table(&mut self, path: &Path) -> Result<RemapTable> {
        let file: RemapFile = super::read_json(path)?;
        let table = self.build_table(&file).map_err(|e| Error::format(path, e))?;
        self.tables.push(table.clone());
        Ok(table)
    }

    /// Table from `source` to `target`: identity when both list the same
    /// classes, otherwise the most recently registered matching table.
    pub fn table(&self, source: &ClassScheme, target: &ClassScheme) -> Result<RemapTable> {
        if source.names() == target.names() {
            return Ok(RemapTable::identity(source));
        }
        self.tables
            .iter()
            .rev()
            .find(|t| t.source.names() == source.names() && t.target.names() == target.names())
            .cloned()
            .ok_or_else(|| {
                Error::usage(format!(
                    "no remap table from `{}` to `{}`; pass one with --remap",
                    source.name, target.name
                ))
            })
    }
}

pub fn write_remap(path: &Path, table: &RemapTable) -> Result<()> {
    let file = RemapFile {
        source: table.source.name.clone(),
        target: table.target.name.clone(),
        map: table.entries().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
        fallback: None,
    };
    super::write_json(path, &file)
}
