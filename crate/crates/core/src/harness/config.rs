//! Flat `key = value` run configuration.
//!
//! One file drives dataset generation, model construction, and training.
//! Lines hold one assignment each; `#` starts a comment; unknown or
//! duplicate keys are hard errors so typos cannot silently fall back to
//! defaults. `head_dim` and `mlp_hidden` derive from `width`/`heads` when
//! omitted. The config hash covers every canonical key except `seed`, so
//! one configuration keeps its identity across seeds.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::dst_attention::{AttentionConfig, AttnDir, MaskMode};
use crate::error::{Error, Result};
use crate::harness::dataset::GenConfig;
use crate::harness::Fnv1a;
use crate::model::{default_mlp_hidden, ModelConfig};
use crate::positional::{RopeConfig, RopeScheme};

/// Optimization settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSettings {
    pub lr: f64,
    pub steps: usize,
    pub batch_size: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings { lr: 3e-3, steps: 1300, batch_size: 16 }
    }
}

impl TrainSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("lr must be positive and finite, got {}", self.lr)));
        }
        if self.steps == 0 || self.batch_size == 0 {
            return Err(Error::Config("steps and batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Model-shape settings that are not implied by the dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSettings {
    pub blocks: usize,
    pub width: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub mlp_hidden: usize,
    pub rope_base: f64,
    pub mask_mode: MaskMode,
    pub temporal_attn: AttnDir,
    pub spatial_attn: AttnDir,
    pub disentangle: bool,
    pub rope_scheme: RopeScheme,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            blocks: 2,
            width: 32,
            heads: 4,
            head_dim: 8,
            mlp_hidden: default_mlp_hidden(32, 4),
            rope_base: RopeConfig::DEFAULT_BASE,
            mask_mode: MaskMode::Dst,
            temporal_attn: AttnDir::Causal,
            spatial_attn: AttnDir::Bidirectional,
            disentangle: true,
            rope_scheme: RopeScheme::Harmonic,
        }
    }
}

/// Everything a run needs: dataset recipe, model shape, optimization, seed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub gen: GenConfig,
    pub model: ModelSettings,
    pub train: TrainSettings,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            gen: GenConfig::default(),
            model: ModelSettings::default(),
            train: TrainSettings::default(),
            seed: 7,
        }
    }
}

const KEYS: &[&str] = &[
    "action_amp",
    "action_classes",
    "batch_size",
    "blocks",
    "disentangle",
    "enc_dim",
    "frames",
    "grid_h",
    "grid_w",
    "head_dim",
    "heads",
    "lr",
    "mask_mode",
    "mlp_hidden",
    "noise_std",
    "none_question_rate",
    "rope_base",
    "rope_scheme",
    "scene_amp",
    "scene_classes",
    "seed",
    "spatial_attn",
    "steps",
    "temporal_attn",
    "test_samples",
    "train_samples",
    "width",
];

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map: BTreeMap<&str, &str> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value', got '{line}'", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if !KEYS.contains(&key) {
                return Err(Error::Config(format!("line {}: unknown key '{key}'", lineno + 1)));
            }
            if value.is_empty() {
                return Err(Error::Config(format!("line {}: key '{key}' has empty value", lineno + 1)));
            }
            if map.insert(key, value).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key '{key}'", lineno + 1)));
            }
        }
        Self::from_map(&map)
    }

    fn from_map(map: &BTreeMap<&str, &str>) -> Result<Self> {
        fn req<T, E: std::fmt::Display>(
            key: &str,
            value: &str,
            r: std::result::Result<T, E>,
        ) -> Result<T> {
            r.map_err(|e| Error::Config(format!("key '{key}': bad value '{value}': {e}")))
        }
        let get_usize = |key: &str, default: usize| -> Result<usize> {
            match map.get(key) {
                Some(v) => req(key, v, v.parse::<usize>()),
                None => Ok(default),
            }
        };
        let get_f64 = |key: &str, default: f64| -> Result<f64> {
            match map.get(key) {
                Some(v) => req(key, v, v.parse::<f64>()),
                None => Ok(default),
            }
        };
        let get_bool = |key: &str, default: bool| -> Result<bool> {
            match map.get(key) {
                Some(&"true") => Ok(true),
                Some(&"false") => Ok(false),
                Some(v) => Err(Error::Config(format!("key '{key}': bad value '{v}': want true|false"))),
                None => Ok(default),
            }
        };

        let d = RunConfig::default();
        let gen = GenConfig {
            scene_classes: get_usize("scene_classes", d.gen.scene_classes)?,
            action_classes: get_usize("action_classes", d.gen.action_classes)?,
            frames: get_usize("frames", d.gen.frames)?,
            grid_h: get_usize("grid_h", d.gen.grid_h)?,
            grid_w: get_usize("grid_w", d.gen.grid_w)?,
            enc_dim: get_usize("enc_dim", d.gen.enc_dim)?,
            train_samples: get_usize("train_samples", d.gen.train_samples)?,
            test_samples: get_usize("test_samples", d.gen.test_samples)?,
            scene_amp: get_f64("scene_amp", d.gen.scene_amp)?,
            action_amp: get_f64("action_amp", d.gen.action_amp)?,
            noise_std: get_f64("noise_std", d.gen.noise_std)?,
            none_question_rate: get_f64("none_question_rate", d.gen.none_question_rate)?,
        };

        let blocks = get_usize("blocks", d.model.blocks)?;
        let width = get_usize("width", d.model.width)?;
        let heads = get_usize("heads", d.model.heads)?;
        if heads == 0 {
            return Err(Error::Config("heads must be positive".into()));
        }
        let head_dim = match map.get("head_dim") {
            Some(v) => req("head_dim", v, v.parse::<usize>())?,
            None => {
                if width % heads != 0 {
                    return Err(Error::Config(format!(
                        "cannot derive head_dim: width {width} not divisible by heads {heads}"
                    )));
                }
                width / heads
            }
        };
        let mlp_hidden = get_usize("mlp_hidden", default_mlp_hidden(width, heads))?;
        let model = ModelSettings {
            blocks,
            width,
            heads,
            head_dim,
            mlp_hidden,
            rope_base: get_f64("rope_base", d.model.rope_base)?,
            mask_mode: match map.get("mask_mode") {
                Some(v) => MaskMode::parse(v).map_err(|e| Error::Config(e.to_string()))?,
                None => d.model.mask_mode,
            },
            temporal_attn: match map.get("temporal_attn") {
                Some(v) => AttnDir::parse(v).map_err(|e| Error::Config(e.to_string()))?,
                None => d.model.temporal_attn,
            },
            spatial_attn: match map.get("spatial_attn") {
                Some(v) => AttnDir::parse(v).map_err(|e| Error::Config(e.to_string()))?,
                None => d.model.spatial_attn,
            },
            disentangle: get_bool("disentangle", d.model.disentangle)?,
            rope_scheme: match map.get("rope_scheme") {
                Some(v) => RopeScheme::parse(v).map_err(|e| Error::Config(e.to_string()))?,
                None => d.model.rope_scheme,
            },
        };

        let train = TrainSettings {
            lr: get_f64("lr", d.train.lr)?,
            steps: get_usize("steps", d.train.steps)?,
            batch_size: get_usize("batch_size", d.train.batch_size)?,
        };
        let seed = match map.get("seed") {
            Some(v) => req("seed", v, v.parse::<u64>())?,
            None => d.seed,
        };

        let cfg = RunConfig { gen, model, train, seed };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.gen.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.train.validate()?;
        self.model_config()?.validate().map_err(|e| Error::Config(e.to_string()))
    }

    /// Assemble the full model configuration; vocabulary size and input
    /// shapes come from the dataset recipe.
    pub fn model_config(&self) -> Result<ModelConfig> {
        let vocab = self.gen.vocab().map_err(|e| Error::Config(e.to_string()))?;
        Ok(ModelConfig {
            blocks: self.model.blocks,
            width: self.model.width,
            heads: self.model.heads,
            head_dim: self.model.head_dim,
            vocab: vocab.size(),
            mlp_hidden: self.model.mlp_hidden,
            enc_dim: self.gen.enc_dim,
            attention: AttentionConfig {
                heads: self.model.heads,
                head_dim: self.model.head_dim,
                mask_mode: self.model.mask_mode,
                temporal_attn: self.model.temporal_attn,
                spatial_attn: self.model.spatial_attn,
                disentangle: self.model.disentangle,
                rope_scheme: self.model.rope_scheme,
            },
            rope: RopeConfig::new(self.model.head_dim, self.model.rope_base)
                .map_err(|e| Error::Config(e.to_string()))?,
            frames: self.gen.frames,
            grid_h: self.gen.grid_h,
            grid_w: self.gen.grid_w,
            seed: self.seed,
        })
    }

    /// Every key in sorted order, one per line.
    pub fn to_canonical_string(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", self.value_of(key));
        }
        out
    }

    fn value_of(&self, key: &str) -> String {
        match key {
            "action_amp" => self.gen.action_amp.to_string(),
            "action_classes" => self.gen.action_classes.to_string(),
            "batch_size" => self.train.batch_size.to_string(),
            "blocks" => self.model.blocks.to_string(),
            "disentangle" => self.model.disentangle.to_string(),
            "enc_dim" => self.gen.enc_dim.to_string(),
            "frames" => self.gen.frames.to_string(),
            "grid_h" => self.gen.grid_h.to_string(),
            "grid_w" => self.gen.grid_w.to_string(),
            "head_dim" => self.model.head_dim.to_string(),
            "heads" => self.model.heads.to_string(),
            "lr" => self.train.lr.to_string(),
            "mask_mode" => self.model.mask_mode.as_str().to_string(),
            "mlp_hidden" => self.model.mlp_hidden.to_string(),
            "noise_std" => self.gen.noise_std.to_string(),
            "none_question_rate" => self.gen.none_question_rate.to_string(),
            "rope_base" => self.model.rope_base.to_string(),
            "rope_scheme" => self.model.rope_scheme.as_str().to_string(),
            "scene_amp" => self.gen.scene_amp.to_string(),
            "scene_classes" => self.gen.scene_classes.to_string(),
            "seed" => self.seed.to_string(),
            "spatial_attn" => self.model.spatial_attn.as_str().to_string(),
            "steps" => self.train.steps.to_string(),
            "temporal_attn" => self.model.temporal_attn.as_str().to_string(),
            "test_samples" => self.gen.test_samples.to_string(),
            "train_samples" => self.gen.train_samples.to_string(),
            "width" => self.model.width.to_string(),
            other => unreachable!("unlisted key {other}"),
        }
    }

    /// Hash of the canonical form minus `seed`.
    pub fn config_hash(&self) -> u64 {
        let mut h = Fnv1a::new();
        for key in KEYS {
            if *key == "seed" {
                continue;
            }
            h.write(key.as_bytes());
            h.write(b"=");
            h.write(self.value_of(key).as_bytes());
            h.write(b"\n");
        }
        h.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_canonical_string();
        let back = RunConfig::parse(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.config_hash(), back.config_hash());
    }

    #[test]
    fn unknown_key_is_a_hard_error() {
        let err = RunConfig::parse("widht = 32\n").unwrap_err();
        assert!(err.to_string().contains("unknown key 'widht'"), "{err}");
    }

    #[test]
    fn duplicate_key_is_a_hard_error() {
        let err = RunConfig::parse("width = 32\nwidth = 16\n").unwrap_err();
        assert!(err.to_string().contains("duplicate key"), "{err}");
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let cfg = RunConfig::parse("# a comment\n\nseed = 13  # trailing\n").unwrap();
        assert_eq!(cfg.seed, 13);
        assert_eq!(cfg.gen, GenConfig::default());
    }

    #[test]
    fn head_dim_and_mlp_hidden_derive_from_width() {
        let cfg = RunConfig::parse("width = 48\nheads = 4\n").unwrap();
        assert_eq!(cfg.model.head_dim, 12);
        assert_eq!(cfg.model.mlp_hidden, default_mlp_hidden(48, 4));
        let err = RunConfig::parse("width = 30\nheads = 4\n").unwrap_err();
        assert!(err.to_string().contains("not divisible"), "{err}");
    }

    #[test]
    fn seed_does_not_change_config_hash() {
        let a = RunConfig::parse("seed = 1\n").unwrap();
        let b = RunConfig::parse("seed = 999\n").unwrap();
        assert_eq!(a.config_hash(), b.config_hash());
        let c = RunConfig::parse("noise_std = 0.4\n").unwrap();
        assert_ne!(a.config_hash(), c.config_hash());
    }

    #[test]
    fn invalid_combinations_rejected() {
        // Width must stay heads x head_dim.
        let err = RunConfig::parse("width = 32\nheads = 4\nhead_dim = 4\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        // Balanced rotation needs enough spatial tokens.
        let err = RunConfig::parse("grid_h = 2\ngrid_w = 2\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn enum_values_parse() {
        let cfg = RunConfig::parse(
            "mask_mode = full_causal\nrope_scheme = distinct\ntemporal_attn = bidirectional\ndisentangle = false\n",
        )
        .unwrap();
        assert_eq!(cfg.model.mask_mode, MaskMode::FullCausal);
        assert_eq!(cfg.model.rope_scheme, RopeScheme::Distinct);
        assert_eq!(cfg.model.temporal_attn, AttnDir::Bidirectional);
        assert!(!cfg.model.disentangle);
        let err = RunConfig::parse("mask_mode = dts\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn model_config_matches_dataset_vocab() {
        let cfg = RunConfig::parse("scene_classes = 5\naction_classes = 5\n").unwrap();
        let mc = cfg.model_config().unwrap();
        assert_eq!(mc.vocab, 8 + 5 + 5);
        assert_eq!(mc.enc_dim, cfg.gen.enc_dim);
    }
}
