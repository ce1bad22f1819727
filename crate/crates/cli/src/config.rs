//! Settings resolution: built-in defaults, then the `--config` file, then
//! command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use repsense_core::synth::CorpusSpec;
use repsense_core::{MetricConfig, SegmentationConfig};
use repsense_model::ModelConfig;
use repsense_train::TrainConfig;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::args::{ModelFlags, Preset};
use crate::exit::UsageError;

const TOP_LEVEL_KEYS: [&str; 8] = ["seed", "out_dir", "preset", "synth", "segmentation", "metrics", "model", "train"];

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub synth: CorpusSpec,
    pub segmentation: SegmentationConfig,
    pub metrics: MetricConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

/// Parsed `--config` contents, still untyped.
#[derive(Debug, Clone, Default)]
pub struct FileConfig(Map<String, Value>);

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let value: Value = if is_json {
            serde_json::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())))?
        };
        Self::from_value(value)
    }

    pub fn from_value(value: Value) -> Result<Self> {
        let Value::Object(map) = value else {
            return Err(UsageError("config file must hold a table".into()).into());
        };
        if let Some(key) = map.keys().find(|k| !TOP_LEVEL_KEYS.contains(&k.as_str())) {
            return Err(UsageError(format!("unknown config key '{key}' (expected one of {})", TOP_LEVEL_KEYS.join(", "))).into());
        }
        Ok(Self(map))
    }

    fn get<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| UsageError(format!("config key '{key}': {e}")).into()),
        }
    }

    fn section<T: Serialize + DeserializeOwned>(&self, key: &str, base: T) -> Result<T> {
        match self.0.get(key) {
            None => Ok(base),
            Some(patch) => overlay(base, patch, key),
        }
    }
}

/// Replaces the fields of `base` named in `patch`, recursing into nested
/// tables. Keys `base` does not have are rejected.
pub fn overlay<T: Serialize + DeserializeOwned>(base: T, patch: &Value, path: &str) -> Result<T> {
    let mut value = serde_json::to_value(base)?;
    merge(&mut value, patch, path)?;
    serde_json::from_value(value).map_err(|e| UsageError(format!("config section '{path}': {e}")).into())
}

fn merge(base: &mut Value, patch: &Value, path: &str) -> Result<()> {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                let here = format!("{path}.{k}");
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v, &here)?,
                    None => return Err(UsageError(format!("unknown config key '{here}'")).into()),
                }
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v.clone();
            Ok(())
        }
    }
}

impl Preset {
    pub fn config(self) -> ModelConfig {
        match self {
            Preset::Default => ModelConfig::default(),
            Preset::Desk => ModelConfig::desk(),
            Preset::Tiny => ModelConfig::tiny(),
        }
    }
}

impl Settings {
    /// Defaults overlaid with the file. The model starts from the `desk`
    /// preset unless the file or a flag names another.
    pub fn resolve(file: &FileConfig, seed_flag: Option<u64>, out_dir_flag: Option<PathBuf>, preset_flag: Option<Preset>) -> Result<Self> {
        let file_seed: Option<u64> = file.get("seed")?;
        let seed = seed_flag.or(file_seed);
        let preset = preset_flag.or(file.get("preset")?).unwrap_or(Preset::Desk);
        let out_dir = out_dir_flag
            .or(file.get("out_dir")?)
            .unwrap_or_else(|| PathBuf::from("."));

        let mut synth = file.section("synth", CorpusSpec::default())?;
        let segmentation = file.section("segmentation", SegmentationConfig::default())?;
        let metrics = file.section("metrics", MetricConfig::default())?;
        let model = file.section("model", preset.config())?;
        let mut train = file.section("train", TrainConfig::default())?;
        // A global seed, from either source, wins over per-section seeds.
        if let Some(s) = seed {
            synth.seed = s;
            train.seed = s;
        }
        segmentation.validate().map_err(|e| UsageError(e.to_string()))?;
        metrics.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(Self {
            seed: seed.unwrap_or(train.seed),
            out_dir,
            synth,
            segmentation,
            metrics,
            model,
            train,
        })
    }

    pub fn apply_model_flags(&mut self, flags: &ModelFlags) {
        let t = &mut self.train;
        if let Some(v) = flags.epochs {
            t.epochs = v;
        }
        if let Some(v) = flags.lr {
            t.lr = v;
        }
        if let Some(v) = flags.alpha {
            t.alpha = v;
        }
        if let Some(v) = flags.batch_size {
            t.batch_size = v;
        }
        if let Some(v) = flags.pair_fraction {
            t.pair_fraction = v;
        }
        if let Some(v) = flags.patience {
            t.patience = v;
        }
        let m = &mut self.model;
        m.use_attention &= !flags.no_attention;
        m.use_spatial &= !flags.no_spatial;
        m.use_temporal &= !flags.no_temporal;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn file_overrides_defaults_and_flags_override_file() {
        let file = FileConfig::from_value(json!({
            "seed": 5,
            "synth": {"n_subjects": 4, "seed": 99},
            "metrics": {"lowpass": {"cutoff_hz": 4.0}},
            "model": {"d_model": 32},
        }))
        .unwrap();
        let s = Settings::resolve(&file, None, None, None).unwrap();
        assert_eq!(s.synth.n_subjects, 4);
        assert_eq!(s.synth.seed, 5);
        assert_eq!(s.train.seed, 5);
        assert_eq!(s.metrics.lowpass.cutoff_hz, 4.0);
        assert_eq!(s.metrics.lowpass.order, MetricConfig::default().lowpass.order);
        assert_eq!(s.model.d_model, 32);
        assert_eq!(s.model.l_max, ModelConfig::desk().l_max);

        let s = Settings::resolve(&file, Some(8), Some("x".into()), Some(Preset::Tiny)).unwrap();
        assert_eq!((s.seed, s.synth.seed), (8, 8));
        assert_eq!(s.out_dir, PathBuf::from("x"));
        assert_eq!(s.model.l_max, ModelConfig::tiny().l_max);
        assert_eq!(s.model.d_model, 32);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(FileConfig::from_value(json!({"sed": 1})).is_err());
        let file = FileConfig::from_value(json!({"train": {"epoch": 3}})).unwrap();
        let err = Settings::resolve(&file, None, None, None).unwrap_err();
        assert!(err.to_string().contains("train.epoch"), "{err}");
        let file = FileConfig::from_value(json!({"train": {"epochs": "many"}})).unwrap();
        assert!(Settings::resolve(&file, None, None, None).is_err());
    }

    #[test]
    fn toml_and_json_files_agree() {
        let dir = tempfile::tempdir().unwrap();
        let toml_path = dir.path().join("c.toml");
        let json_path = dir.path().join("c.json");
        std::fs::write(&toml_path, "seed = 3\n[train]\nepochs = 4\nlr = 0.01\n").unwrap();
        std::fs::write(&json_path, r#"{"seed": 3, "train": {"epochs": 4, "lr": 0.01}}"#).unwrap();
        let a = Settings::resolve(&FileConfig::load(&toml_path).unwrap(), None, None, None).unwrap();
        let b = Settings::resolve(&FileConfig::load(&json_path).unwrap(), None, None, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.train.epochs, 4);
    }
}
