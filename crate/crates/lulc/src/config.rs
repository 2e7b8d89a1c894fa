//! Pipeline configuration file (TOML).
//!
//! Every key is optional; flags on the command line override file values,
//! which override built-in defaults. Unknown keys are rejected.
//!
//! ```toml
//! seed = 7
//! threads = 4
//!
//! [paths]
//! image = "scene/hi_image.tif"
//! labels = "scene/labels.geojson"
//! mask = "work/teacher_mask.lcrs"
//! output_dir = "work"
//!
//! [scheme]
//! name = "teacher"          # built-in name or path to a scheme JSON
//!
//! [split]
//! train_fraction = 0.7
//!
//! [model]
//! radius = 1
//! hidden = [32]
//!
//! [train]
//! learning_rate = 0.2
//! batch_size = 8
//! min_epochs = 10
//! max_epochs = 30
//! patch_size = 32
//! steps_per_epoch = 8
//! rounds = 1
//! patience = 5
//! weight_strategy = "inverse_frequency"
//! augment = true
//!
//! [distill]
//! factor = 4
//! min_coverage = 0.5
//! tau = 0.9                 # pseudo-label confidence threshold
//! student_scheme = "student"
//! remap = "teacher-student.json"
//! priorities = { manual = 3, osm = 2, pseudo = 1 }
//!
//! [evaluate]
//! set = "test"
//! target = "evaluation"
//! remap = ["esa-evaluation.json"]
//! extent = "work/test_extent.json"
//!
//! [synth]
//! size = 256
//! res = 1.0
//! factor = 4
//! bands = 4
//! scheme = "teacher"
//! separability = 0.9
//! label_fraction = 0.05
//! ```

use std::path::{Path, PathBuf};

use lulc_core::dataset::WeightStrategy;
use lulc_core::model::TrainConfig;
use serde::Deserialize;

use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub scheme: SchemeSection,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub distill: DistillSection,
    #[serde(default)]
    pub evaluate: EvaluateSection,
    #[serde(default)]
    pub synth: SynthSection,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub image: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub mask: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    pub name: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub train_fraction: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub radius: Option<usize>,
    pub hidden: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub min_epochs: Option<usize>,
    pub max_epochs: Option<usize>,
    pub patch_size: Option<usize>,
    pub steps_per_epoch: Option<usize>,
    pub rounds: Option<usize>,
    pub patience: Option<usize>,
    pub weight_strategy: Option<String>,
    pub augment: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Priorities {
    pub manual: Option<i32>,
    pub osm: Option<i32>,
    pub pseudo: Option<i32>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillSection {
    pub factor: Option<usize>,
    pub min_coverage: Option<f64>,
    pub tau: Option<f64>,
    pub student_scheme: Option<String>,
    pub remap: Option<PathBuf>,
    #[serde(default)]
    pub priorities: Priorities,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateSection {
    pub set: Option<String>,
    pub target: Option<String>,
    pub remap: Option<Vec<PathBuf>>,
    pub extent: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub size: Option<usize>,
    pub res: Option<f64>,
    pub factor: Option<usize>,
    pub bands: Option<usize>,
    pub scheme: Option<String>,
    pub separability: Option<f64>,
    pub label_fraction: Option<f64>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| Error::usage(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Range checks and existence of referenced input files.
    pub fn validate(&self) -> Result<()> {
        let open = |name: &str, v: Option<f64>| match v {
            Some(f) if !(f > 0.0 && f < 1.0) => Err(Error::usage(format!("{name} must lie in (0, 1), got {f}"))),
            _ => Ok(()),
        };
        open("split.train_fraction", self.split.train_fraction)?;
        open("synth.label_fraction", self.synth.label_fraction)?;
        let closed = |name: &str, v: Option<f64>| match v {
            Some(f) if !(0.0..=1.0).contains(&f) => Err(Error::usage(format!("{name} must lie in [0, 1], got {f}"))),
            _ => Ok(()),
        };
        closed("distill.min_coverage", self.distill.min_coverage)?;
        closed("distill.tau", self.distill.tau)?;
        closed("synth.separability", self.synth.separability)?;
        if self.threads == Some(0) {
            return Err(Error::usage("threads must be >= 1"));
        }
        if let Some(s) = &self.train.weight_strategy {
            parse_weight_strategy(s)?;
        }
        let inputs = [
            ("paths.image", self.paths.image.as_ref()),
            ("paths.labels", self.paths.labels.as_ref()),
            ("paths.mask", self.paths.mask.as_ref()),
            ("distill.remap", self.distill.remap.as_ref()),
        ];
        for (key, path) in inputs {
            if let Some(p) = path {
                require_file(key, p)?;
            }
        }
        for p in self.evaluate.remap.iter().flatten() {
            require_file("evaluate.remap", p)?;
        }
        Ok(())
    }

    /// `TrainConfig` from the `[train]` section, `distill.tau` and `seed`
    /// over the library defaults.
    pub fn train_config(&self) -> Result<TrainConfig> {
        let d = TrainConfig::default();
        let t = &self.train;
        Ok(TrainConfig {
            learning_rate: t.learning_rate.unwrap_or(d.learning_rate),
            batch_size: t.batch_size.unwrap_or(d.batch_size),
            min_epochs: t.min_epochs.unwrap_or(d.min_epochs),
            max_epochs: t.max_epochs.unwrap_or(d.max_epochs),
            patch_size: t.patch_size.unwrap_or(d.patch_size),
            steps_per_epoch: t.steps_per_epoch.unwrap_or(d.steps_per_epoch),
            rounds: t.rounds.unwrap_or(d.rounds),
            patience: t.patience.unwrap_or(d.patience),
            seed: self.seed.unwrap_or(d.seed),
            weight_strategy: match &t.weight_strategy {
                Some(s) => parse_weight_strategy(s)?,
                None => d.weight_strategy,
            },
            augment: t.augment.unwrap_or(d.augment),
            pseudo_label_threshold: self.distill.tau.unwrap_or(d.pseudo_label_threshold),
        })
    }
}

pub fn parse_weight_strategy(s: &str) -> Result<WeightStrategy> {
    WeightStrategy::parse(s).ok_or_else(|| Error::usage(format!("unknown weight strategy `{s}`")))
}

pub fn require_file(what: &str, path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::usage(format!("{what}: `{}` does not exist", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_all_defaults() {
        let cfg: PipelineConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        assert_eq!(cfg.train_config().unwrap(), TrainConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<PipelineConfig>("[train]\nlearning_rat = 0.1\n").is_err());
        assert!(toml::from_str::<PipelineConfig>("colour = 1\n").is_err());
    }

    #[test]
    fn sections_feed_train_config() {
        let cfg: PipelineConfig =
            toml::from_str("seed = 9\n[train]\nmax_epochs = 3\nmin_epochs = 1\n[distill]\ntau = 0.5\n").unwrap();
        let t = cfg.train_config().unwrap();
        assert_eq!((t.seed, t.max_epochs, t.min_epochs), (9, 3, 1));
        assert_eq!(t.pseudo_label_threshold, 0.5);
    }

    #[test]
    fn fractions_and_paths_are_checked() {
        let bad: PipelineConfig = toml::from_str("[split]\ntrain_fraction = 1.0\n").unwrap();
        assert_eq!(bad.validate().unwrap_err().exit_code(), 1);
        let missing: PipelineConfig = toml::from_str("[paths]\nimage = \"/nonexistent/x.tif\"\n").unwrap();
        assert!(missing.validate().unwrap_err().to_string().contains("paths.image"));
    }
}
