use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::data::GeneratorSpec;
use crate::dcca::DccaOptions;
use crate::unseen::InternalLabels;
use crate::{Error, Result};

/// A config value that round-trips through its text form.
pub trait ConfigValue: Sized {
    fn parse_value(s: &str) -> core::result::Result<Self, String>;
    fn format_value(&self) -> String;
}

macro_rules! plain_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> core::result::Result<Self, String> {
                s.parse().map_err(|e| format!("{e}"))
            }
            fn format_value(&self) -> String {
                self.to_string()
            }
        }
    )*};
}
plain_value!(usize, u64, f64, bool, String);

impl<T: ConfigValue> ConfigValue for Vec<T> {
    fn parse_value(s: &str) -> core::result::Result<Self, String> {
        s.split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(T::parse_value)
            .collect()
    }
    fn format_value(&self) -> String {
        self.iter().map(T::format_value).collect::<Vec<_>>().join(",")
    }
}

impl ConfigValue for InternalLabels {
    fn parse_value(s: &str) -> core::result::Result<Self, String> {
        match s {
            "zero" => Ok(InternalLabels::Zero),
            "inherit" => Ok(InternalLabels::InheritAllSeen),
            other => Err(format!("expected zero or inherit, got {other:?}")),
        }
    }
    fn format_value(&self) -> String {
        match self {
            InternalLabels::Zero => "zero".into(),
            InternalLabels::InheritAllSeen => "inherit".into(),
        }
    }
}

macro_rules! config {
    ($( $(#[$doc:meta])* $name:ident : $t:ty = $default:expr ),* $(,)?) => {
        /// Every tunable of an experiment, settable by name.
        #[derive(Debug, Clone, PartialEq)]
        pub struct ExperimentConfig {
            $( $(#[$doc])* pub $name: $t, )*
        }

        impl Default for ExperimentConfig {
            fn default() -> Self {
                ExperimentConfig { $( $name: $default, )* }
            }
        }

        impl ExperimentConfig {
            /// Config keys in canonical order.
            pub const KEYS: &'static [&'static str] = &[$( stringify!($name) ),*];

            /// Sets one key from its text form.
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                let value = value.trim();
                match key {
                    $( stringify!($name) => {
                        self.$name = <$t as ConfigValue>::parse_value(value)
                            .map_err(|e| Error::Invalid(format!("config key {key}: {e}")))?;
                    } )*
                    other => return Err(Error::Invalid(format!("unknown config key {other:?}"))),
                }
                Ok(())
            }

            /// Text form of one key.
            pub fn get(&self, key: &str) -> Option<String> {
                match key {
                    $( stringify!($name) => Some(self.$name.format_value()), )*
                    _ => None,
                }
            }
        }
    };
}

config! {
    task: String = "synthetic".into(),
    /// Hidden width of every encoder.
    hidden: usize = 32,
    rgcn_layers: usize = 3,
    block_size: usize = 30,
    mlp_layers: usize = 2,
    dropout: f64 = 0.2,
    dcca_lr: f64 = 1e-3,
    dcca_batch: usize = 1024,
    task_lr: f64 = 1e-3,
    task_batch: usize = 256,
    /// Correlated dimensions `L`.
    dims: usize = 20,
    reg_code: f64 = 1e-4,
    reg_text: f64 = 1e-4,
    center: bool = true,
    bidirectional: bool = true,
    dcca_epochs: usize = 100,
    task_epochs: usize = 100,
    patience: usize = 10,
    seed: u64 = 0,
    /// Seeds of a multi-run experiment.
    seeds: Vec<u64> = alloc::vec![0],
    /// Number of code folds in unseen mode.
    k: usize = 5,
    internal_labels: InternalLabels = InternalLabels::Zero,
    /// Ontology generator: children per level.
    branching: Vec<usize> = alloc::vec![8, 4, 4],
    ontology_seed: u64 = 0,
    records: usize = 8000,
    data_seed: u64 = 0,
    classes: usize = 4,
    codes_min: usize = 3,
    codes_max: usize = 8,
    hot_level: usize = 2,
    code_noise: f64 = 0.3,
    tokens_min: usize = 60,
    tokens_max: usize = 200,
    vocab_size: usize = 2000,
    topic_concentration: f64 = 0.5,
    token_noise: f64 = 0.3,
    /// Per-class label logits; empty means evenly spaced on `[-2, 2]`.
    label_logits: Vec<f64> = Vec::new(),
    /// Record wall time in metrics (breaks byte-for-byte reproducibility).
    record_time: bool = false,
}

impl ExperimentConfig {
    /// Parses and validates `key = value` lines; `#` starts a comment.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies `key = value` lines on top of the current values without
    /// validating the result.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Invalid(format!("config line {}: expected key = value", i + 1)))?;
            self.set(k.trim(), v)
                .map_err(|e| e.context(format!("config line {}", i + 1)))?;
        }
        Ok(())
    }

    /// Canonical `key = value` text, one line per key.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for k in Self::KEYS {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&self.get(k).unwrap_or_default());
            out.push('\n');
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden", self.hidden),
            ("rgcn_layers", self.rgcn_layers),
            ("block_size", self.block_size),
            ("mlp_layers", self.mlp_layers),
            ("dcca_batch", self.dcca_batch),
            ("task_batch", self.task_batch),
            ("dims", self.dims),
            ("dcca_epochs", self.dcca_epochs),
            ("task_epochs", self.task_epochs),
            ("patience", self.patience),
            ("records", self.records),
            ("classes", self.classes),
            ("vocab_size", self.vocab_size),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Invalid(format!("config key {k} must be positive")));
        }
        for (k, v) in [
            ("dcca_lr", self.dcca_lr),
            ("task_lr", self.task_lr),
            ("reg_code", self.reg_code),
            ("reg_text", self.reg_text),
        ] {
            if !(v > 0.0) {
                return Err(Error::Invalid(format!("config key {k} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Invalid("dropout outside [0, 1)".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Invalid("seeds is empty".into()));
        }
        if self.k < 2 {
            return Err(Error::Invalid("k must be at least 2".into()));
        }
        if self.branching.is_empty() || self.branching.contains(&0) {
            return Err(Error::Invalid("branching needs positive entries".into()));
        }
        let width = 2 * self.hidden;
        if self.dims > width {
            return Err(Error::Invalid(format!(
                "dims {} exceeds embedding width {width}",
                self.dims
            )));
        }
        self.generator_spec().validate()
    }

    pub fn dcca_options(&self) -> DccaOptions {
        DccaOptions {
            reg_code: self.reg_code,
            reg_text: self.reg_text,
            dims: self.dims,
            center: self.center,
        }
    }

    pub fn generator_spec(&self) -> GeneratorSpec {
        let base = GeneratorSpec::with_classes(self.classes);
        GeneratorSpec {
            codes_min: self.codes_min,
            codes_max: self.codes_max,
            hot_level: self.hot_level,
            code_noise: self.code_noise,
            tokens_min: self.tokens_min,
            tokens_max: self.tokens_max,
            vocab_size: self.vocab_size,
            topic_concentration: self.topic_concentration,
            token_noise: self.token_noise,
            label_logits: if self.label_logits.is_empty() {
                base.label_logits.clone()
            } else {
                self.label_logits.clone()
            },
            seed: self.data_seed,
            ..base
        }
    }
}
