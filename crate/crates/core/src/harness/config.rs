use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attribution::{AttributionMethod, ChannelStrategy};
use crate::backbone::ModelSpec;
use crate::error::{Error, Result};
use crate::prior::DEFAULT_SIGMA;

/// Attribution method used by the training objective. `None` trains on
/// cross-entropy alone.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    None,
    Attr(AttributionMethod),
}

impl Method {
    pub fn attribution(self) -> Option<AttributionMethod> {
        match self {
            Method::None => None,
            Method::Attr(m) => Some(m),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::None => f.write_str("none"),
            Method::Attr(m) => write!(f, "{m}"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" | "baseline" => Ok(Method::None),
            other => other.parse().map(Method::Attr),
        }
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.to_string()
    }
}

/// One training run. Unset fields in a config file take these defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub config_id: String,
    /// `toy` or `tiny`.
    pub model: String,
    /// Tapped layer; empty selects the last convolutional map.
    pub tap: String,
    pub method: Method,
    pub strategy: ChannelStrategy,
    pub lambda: f64,
    pub sigma: f64,
    pub lr: f64,
    pub lr_power: f64,
    /// Schedule horizon; 0 means `epochs × batches per epoch`.
    pub total_steps: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub train: PathBuf,
    pub test: Option<PathBuf>,
    pub augment: bool,
    pub val_fraction: f64,
    pub balanced_sampler: bool,
    pub eval_batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            config_id: "pal".into(),
            model: "toy".into(),
            tap: String::new(),
            method: Method::Attr(AttributionMethod::GradInput),
            strategy: ChannelStrategy::mean_of_half(),
            lambda: 1.0,
            sigma: DEFAULT_SIGMA,
            lr: 2e-3,
            lr_power: 0.9,
            total_steps: 0,
            batch_size: 16,
            epochs: 4,
            seed: 0,
            train: PathBuf::from("data/train.json"),
            test: Some(PathBuf::from("data/test.json")),
            augment: true,
            val_fraction: 0.1,
            balanced_sampler: false,
            eval_batch_size: 50,
        }
    }
}

impl TrainConfig {
    pub fn baseline() -> Self {
        TrainConfig {
            config_id: "baseline".into(),
            method: Method::None,
            ..Self::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: TrainConfig =
            serde_json::from_str(&text).map_err(|e| Error::format(path, format!("bad config: {e}")))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.train = base.join(&cfg.train);
        cfg.test = cfg.test.map(|t| base.join(t));
        Ok(cfg)
    }

    pub fn spec(&self) -> Result<ModelSpec> {
        ModelSpec::by_id(&self.model)
    }

    /// The tap layer name, resolving the empty default.
    pub fn tap_layer(&self) -> Result<String> {
        let spec = self.spec()?;
        if self.tap.is_empty() {
            return Ok(spec.last_conv_tap());
        }
        spec.tap(&self.tap)?;
        Ok(self.tap.clone())
    }

    pub fn validate(&self) -> Result<()> {
        let spec = self.spec()?;
        let tap = spec.tap(&self.tap_layer()?)?;
        if self.method != Method::None {
            self.strategy.constrained(tap.channels)?;
        }
        if self.batch_size == 0 || self.epochs == 0 || self.eval_batch_size == 0 {
            return Err(Error::invalid("batch sizes and epochs must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::invalid("sigma must be positive"));
        }
        if !(0.0..0.5).contains(&self.val_fraction) {
            return Err(Error::invalid("val_fraction must be in [0, 0.5)"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_and_defaults() {
        let cfg: TrainConfig = serde_json::from_str(r#"{"method": "grad", "strategy": "mean", "lambda": 0.5}"#).unwrap();
        assert_eq!(cfg.method, Method::Attr(AttributionMethod::Grad));
        assert_eq!(cfg.strategy, ChannelStrategy::Mean);
        assert_eq!(cfg.batch_size, 16);
        let back: TrainConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"lamda": 1}"#).is_err());
    }

    #[test]
    fn tap_must_exist() {
        let cfg = TrainConfig {
            tap: "conv9".into(),
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert_eq!(TrainConfig::default().tap_layer().unwrap(), "conv4");
    }
}
