use std::fmt;
use std::path::Path;
use std::str::FromStr;

use diffcore::AdamConfig;
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Base {
    Mpnn,
    TripletGmpnn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    Max,
    Sum,
    Mean,
    Lstm,
}

macro_rules! str_enum {
    ($ty:ty, $($v:path => $s:literal),+) => {
        impl $ty {
            pub fn id(self) -> &'static str {
                match self { $($v => $s),+ }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.id())
            }
        }
        impl FromStr for $ty {
            type Err = ModelError;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($s => Ok($v),)+
                    _ => Err(ModelError::Config(format!(
                        "unknown {} `{s}` (expected one of: {})",
                        stringify!($ty).to_lowercase(),
                        [$($s),+].join(", ")
                    ))),
                }
            }
        }
    };
}

str_enum!(Base, Base::Mpnn => "mpnn", Base::TripletGmpnn => "triplet_gmpnn");
str_enum!(Aggregator, Aggregator::Max => "max", Aggregator::Sum => "sum", Aggregator::Mean => "mean", Aggregator::Lstm => "lstm");

/// Architecture switches. Serialized as JSON; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    /// Message width; 0 means "same as `hidden_dim`".
    pub message_dim: usize,
    pub base: Base,
    pub aggregator: Aggregator,
    /// 0 = canonical `pos` order; k >= 1 averages over k sampled orders.
    pub janossy_k: usize,
    /// Average over every ordering instead of sampling (test-only, N <= 5).
    pub janossy_exhaustive: bool,
    pub use_pos: bool,
    pub teacher_forcing_p: f64,
    /// Linear+relu layers in the message function.
    pub msg_layers: usize,
    /// Linear+relu layers in the update function.
    pub update_layers: usize,
    pub triplet_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            message_dim: 0,
            base: Base::TripletGmpnn,
            aggregator: Aggregator::Lstm,
            janossy_k: 0,
            janossy_exhaustive: false,
            use_pos: true,
            teacher_forcing_p: 0.5,
            msg_layers: 1,
            update_layers: 1,
            triplet_dim: 8,
        }
    }
}

impl ModelConfig {
    pub fn message_width(&self) -> usize {
        if self.message_dim == 0 {
            self.hidden_dim
        } else {
            self.message_dim
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.hidden_dim == 0 {
            return bad("hidden_dim must be positive");
        }
        if self.janossy_k > 0 && self.aggregator != Aggregator::Lstm {
            return bad("janossy_k >= 1 requires aggregator = lstm");
        }
        if self.janossy_exhaustive && self.janossy_k == 0 {
            return bad("janossy_exhaustive requires janossy_k >= 1");
        }
        if !(0.0..=1.0).contains(&self.teacher_forcing_p) {
            return bad("teacher_forcing_p must lie in [0, 1]");
        }
        if self.msg_layers == 0 || self.update_layers == 0 {
            return bad("msg_layers and update_layers must be at least 1");
        }
        if self.base == Base::TripletGmpnn && self.triplet_dim == 0 {
            return bad("triplet_dim must be positive");
        }
        Ok(())
    }

    /// Short label used in tables, e.g. `triplet_gmpnn/lstm`.
    pub fn label(&self) -> String {
        let mut s = format!("{}/{}", self.base, self.aggregator);
        if self.janossy_k > 0 {
            s.push_str(&format!("/janossy{}", self.janossy_k));
        }
        if !self.use_pos {
            s.push_str("/nope");
        }
        s
    }
}

/// Contents of a `--config` file: model switches plus optimizer settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigFile {
    pub model: ModelConfig,
    pub optimizer: AdamConfig,
}

impl ConfigFile {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: ConfigFile = serde_json::from_str(s)?;
        cfg.model.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ConfigFile::from_json(r#"{"model": {"hidden": 3}}"#).is_err());
        assert!(ConfigFile::from_json(r#"{"optimiser": {}}"#).is_err());
        let ok = ConfigFile::from_json(r#"{"model": {"aggregator": "max", "hidden_dim": 16}, "optimizer": {"lr": 0.01, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8}}"#).unwrap();
        assert_eq!(ok.model.aggregator, Aggregator::Max);
        assert_eq!(ok.model.message_width(), 16);
        assert_eq!(ok.optimizer.lr, 0.01);
    }

    #[test]
    fn janossy_requires_lstm() {
        let cfg = ModelConfig {
            aggregator: Aggregator::Max,
            janossy_k: 2,
            ..ModelConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(ModelConfig::default().validate().is_ok());
    }

    #[test]
    fn names_parse() {
        assert_eq!("triplet_gmpnn".parse::<Base>().unwrap(), Base::TripletGmpnn);
        assert_eq!("lstm".parse::<Aggregator>().unwrap(), Aggregator::Lstm);
        assert!("attention".parse::<Aggregator>().is_err());
    }
}
