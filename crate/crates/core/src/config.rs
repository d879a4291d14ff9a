//! Experiment configuration: one JSON document describing the parameter
//! space, generator, discriminator, estimator, loop and target source.
//!
//! Every section is optional and falls back to its defaults; unknown keys
//! are rejected. Relative paths inside the document resolve against the
//! directory of the config file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{load_dataset, resolve};
use crate::error::{Error, Result};
use crate::kde::KdeConfig;
use crate::priors::{uniform_prior, JointPrior, ParameterSpace, DEFAULT_BINS};
use crate::seed::{derive_seed, stream};
use crate::tuning::{DiscriminatorConfig, Generator, LoopConfig, TargetSet, TuningConfig};

/// Shape of one dimension's target table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TableSpec {
    /// Explicit nonnegative values, one per bin.
    Values(Vec<f64>),
    /// `floor + (1 - floor) * exp(-(c - center)^2 / (2 width^2))` over the
    /// normalized bin centres `c`.
    Bump { center: f64, width: f64, floor: f64 },
}

impl TableSpec {
    pub fn build(&self, bins: usize) -> Result<Vec<f64>> {
        match self {
            TableSpec::Values(v) => {
                if v.len() != bins {
                    return Err(Error::Config(format!("table has {} values, expected {bins}", v.len())));
                }
                Ok(v.clone())
            }
            TableSpec::Bump { center, width, floor } => {
                if !(*width > 0.0 && width.is_finite()) {
                    return Err(Error::Config(format!("bump width must be positive, got {width}")));
                }
                if !(0.0..=1.0).contains(floor) || !center.is_finite() {
                    return Err(Error::Config("bump floor must lie in [0, 1] and centre be finite".into()));
                }
                Ok((0..bins)
                    .map(|i| {
                        let c = (i as f64 + 0.5) / bins as f64;
                        floor + (1.0 - floor) * (-(c - center).powi(2) / (2.0 * width * width)).exp()
                    })
                    .collect())
            }
        }
    }
}

/// Where the target features come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    /// Render `count` samples from known tables `Q`. Dimensions not listed
    /// are uniform.
    Synthetic {
        count: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default)]
        tables: BTreeMap<String, TableSpec>,
    },
    /// A dataset directory in the documented PGM/CSV format.
    Directory { path: PathBuf },
}

impl Default for TargetSpec {
    fn default() -> Self {
        TargetSpec::Synthetic {
            count: 1000,
            seed: None,
            tables: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Bins per parameter dimension.
    pub bins: usize,
    pub generator: Generator,
    pub discriminator: DiscriminatorConfig,
    pub kde: KdeConfig,
    pub tuning: LoopConfig,
    pub target: TargetSpec,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            bins: DEFAULT_BINS,
            generator: Generator::default(),
            discriminator: DiscriminatorConfig::default(),
            kde: KdeConfig::default(),
            tuning: LoopConfig::default(),
            target: TargetSpec::default(),
            output_dir: PathBuf::from("advtune-out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file. Errors name the path.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn space(&self) -> ParameterSpace {
        ParameterSpace::scene(self.bins)
    }

    pub fn tuning_config(&self) -> TuningConfig {
        TuningConfig {
            seed: self.seed,
            space: self.space(),
            generator: self.generator,
            discriminator: self.discriminator.clone(),
            kde: self.kde,
            tuning: self.tuning,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bins < 2 {
            return Err(Error::Config(format!("bins must be at least 2, got {}", self.bins)));
        }
        self.tuning_config().validate()?;
        if let TargetSpec::Synthetic { count, tables, .. } = &self.target {
            if *count == 0 {
                return Err(Error::Config("synthetic target count must be positive".into()));
            }
            let space = self.space();
            for name in tables.keys() {
                if space.index_of(name).is_none() {
                    return Err(Error::Config(format!("unknown parameter dimension {name:?}")));
                }
            }
            self.known_prior()?;
        }
        Ok(())
    }

    /// The synthetic target's tables, or `None` for a directory target.
    pub fn known_prior(&self) -> Result<Option<JointPrior>> {
        let TargetSpec::Synthetic { tables, .. } = &self.target else {
            return Ok(None);
        };
        let space = self.space();
        let mut raw: Vec<Vec<f64>> = uniform_prior(&space).tables.into_iter().map(|t| t.values).collect();
        for (name, spec) in tables {
            let d = space
                .index_of(name)
                .ok_or_else(|| Error::Config(format!("unknown parameter dimension {name:?}")))?;
            raw[d] = spec.build(space.dims[d].bins)?;
        }
        JointPrior::from_tables(space, raw).map(Some)
    }

    /// Builds the target set. `base` resolves relative dataset paths.
    pub fn build_target(&self, base: &Path) -> Result<TargetSet> {
        match &self.target {
            TargetSpec::Synthetic { count, seed, .. } => {
                let q = self.known_prior()?.expect("synthetic target has tables");
                let seed = seed.unwrap_or_else(|| derive_seed(self.seed, stream::TARGET, 0));
                TargetSet::synthetic(&q, &self.generator, *count, seed)
            }
            TargetSpec::Directory { path } => {
                let dataset = load_dataset(&resolve(base, path))?;
                if dataset.is_empty() {
                    return Err(Error::EmptyDataset);
                }
                Ok(TargetSet {
                    features: dataset.feature_vectors(),
                    known_prior: None,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected_at_every_level() {
        for doc in [
            r#"{"sed": 1}"#,
            r#"{"tuning": {"nv": 10}}"#,
            r#"{"generator": {"render": {"colour": 1}}}"#,
            r#"{"target": {"kind": "synthetic", "count": 5, "extra": 1}}"#,
            r#"{"target": {"kind": "synthetic", "count": 5, "tables": {"light_intensity": {"bump": {"center": 0.5, "width": 0.1, "floor": 0, "x": 1}}}}}"#,
        ] {
            assert!(matches!(ExperimentConfig::from_json(doc), Err(Error::Config(_))), "{doc}");
        }
    }

    #[test]
    fn invalid_values_are_rejected() {
        for doc in [
            r#"{"bins": 1}"#,
            r#"{"tuning": {"n_v": 5}}"#,
            r#"{"tuning": {"max_iterations": 101}}"#,
            r#"{"discriminator": {"train": {"learning_rate": 0}}}"#,
            r#"{"target": {"kind": "synthetic", "count": 0}}"#,
            r#"{"target": {"kind": "synthetic", "count": 5, "tables": {"nope": {"values": [1, 1]}}}}"#,
            r#"{"bins": 4, "target": {"kind": "synthetic", "count": 5, "tables": {"light_intensity": {"values": [1, 1]}}}}"#,
            r#"{"bins": 2, "target": {"kind": "synthetic", "count": 5, "tables": {"light_intensity": {"values": [0, 0]}}}}"#,
        ] {
            assert!(ExperimentConfig::from_json(doc).is_err(), "{doc}");
        }
    }

    #[test]
    fn echoed_config_round_trips() {
        let doc = r#"{
            "seed": 3, "bins": 8,
            "tuning": {"n_v": 20, "max_iterations": 2},
            "target": {"kind": "synthetic", "count": 30, "tables": {
                "light_intensity": {"bump": {"center": 0.75, "width": 0.1, "floor": 0.1}},
                "camera_height": {"values": [1, 1, 0.5, 0.5, 0.2, 0.2, 0.1, 0.1]}
            }}
        }"#;
        let cfg = ExperimentConfig::from_json(doc).unwrap();
        let again = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(again, cfg);
        let q = cfg.known_prior().unwrap().unwrap();
        assert_eq!(q.tables[6].values[2], 0.5);
        let light = &q.tables[0].values;
        assert_eq!(light.iter().cloned().fold(0.0, f64::max), 1.0);
        assert!(light[0] < light[6]);
        assert_eq!(q.tables[1], uniform_prior(&cfg.space()).tables[1]);
    }

    #[test]
    fn bump_matches_formula() {
        let t = TableSpec::Bump {
            center: 0.5,
            width: 0.25,
            floor: 0.2,
        }
        .build(4)
        .unwrap();
        for (i, v) in t.iter().enumerate() {
            let c = (i as f64 + 0.5) / 4.0;
            let expected = 0.2 + 0.8 * (-(c - 0.5) * (c - 0.5) / (2.0 * 0.0625)).exp();
            assert!((v - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn missing_file_error_names_path() {
        let err = ExperimentConfig::load(Path::new("/definitely/not/here.json")).unwrap_err();
        assert!(err.to_string().contains("/definitely/not/here.json"));
        assert_eq!(err.kind(), "io_error");
    }
}
