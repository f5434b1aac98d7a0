//! Run configuration: a JSON file with flat dotted keys, overridable by CLI
//! flags. The flattened map is kept verbatim for the manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde_json::Value;

use fixv2w_core::candidates::CandidateStrategy;
use fixv2w_core::embed::{Norm, TrainingConfig};

use crate::CliError;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub feed: Option<PathBuf>,
    pub history: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    pub kev: Option<PathBuf>,
    pub exploitdb: Option<PathBuf>,
    pub top25: Option<PathBuf>,
    pub train_date: NaiveDate,
    pub validate_date: NaiveDate,
    pub training: TrainingConfig,
    pub strategy_discouraged: CandidateStrategy,
    pub strategy_prohibited: CandidateStrategy,
    pub min_candidates: usize,
    pub cutoff: usize,
    pub top_n: usize,
    pub out_dir: PathBuf,
    pub threads: usize,
    /// Flattened key -> value view of the effective configuration.
    pub flat: BTreeMap<String, Value>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            feed: None,
            history: None,
            catalog: None,
            kev: None,
            exploitdb: None,
            top25: None,
            train_date: NaiveDate::from_ymd_opt(2021, 8, 4).unwrap(),
            validate_date: NaiveDate::from_ymd_opt(2024, 12, 17).unwrap(),
            training: TrainingConfig::default(),
            strategy_discouraged: CandidateStrategy::Family,
            strategy_prohibited: CandidateStrategy::Members,
            min_candidates: 10,
            cutoff: 10,
            top_n: 2,
            out_dir: PathBuf::from("out"),
            threads: 0,
            flat: BTreeMap::new(),
        }
    }
}

pub const KNOWN_KEYS: &[&str] = &[
    "data.feed",
    "data.history",
    "data.catalog",
    "data.kev",
    "data.exploitdb",
    "data.top25",
    "snapshot.train",
    "snapshot.validate",
    "train.dim",
    "train.epochs",
    "train.batch_size",
    "train.learning_rate",
    "train.negatives_per_positive",
    "train.regularizer_weight",
    "train.regularizer_order",
    "train.norm_p",
    "train.normalize_entities",
    "strategy.discouraged",
    "strategy.prohibited",
    "candidates.min",
    "eval.cutoff",
    "fix.top_n",
    "out.dir",
    "seed",
    "threads",
];

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let mut config = Self::default();
        if let Some(path) = path {
            let bytes = std::fs::read(path)
                .map_err(|e| CliError::Config(format!("cannot read config {path:?}: {e}")))?;
            let doc: Value = serde_json::from_slice(&bytes)
                .map_err(|e| CliError::Config(format!("config {path:?} is not valid JSON: {e}")))?;
            let Value::Object(map) = doc else {
                return Err(CliError::Config("config root must be a JSON object".into()));
            };
            for (key, value) in map {
                config.apply(&key, value)?;
            }
        }
        Ok(config)
    }

    /// Apply one flat dotted key. Unknown keys are a configuration error.
    pub fn apply(&mut self, key: &str, value: Value) -> Result<(), CliError> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(CliError::Config(format!(
                "unknown config key {key:?} (known keys: {})",
                KNOWN_KEYS.join(", ")
            )));
        }
        let bad = |key: &str, value: &Value, want: &str| {
            CliError::Config(format!("config key {key:?} expects {want}, got {value}"))
        };
        match key {
            "data.feed" => self.feed = Some(path_value(key, &value)?),
            "data.history" => self.history = Some(path_value(key, &value)?),
            "data.catalog" => self.catalog = Some(path_value(key, &value)?),
            "data.kev" => self.kev = Some(path_value(key, &value)?),
            "data.exploitdb" => self.exploitdb = Some(path_value(key, &value)?),
            "data.top25" => self.top25 = Some(path_value(key, &value)?),
            "snapshot.train" => self.train_date = date_value(key, &value)?,
            "snapshot.validate" => self.validate_date = date_value(key, &value)?,
            "train.dim" => self.training.dim = usize_value(key, &value)?,
            "train.epochs" => self.training.epochs = usize_value(key, &value)?,
            "train.batch_size" => self.training.batch_size = usize_value(key, &value)?,
            "train.learning_rate" => {
                self.training.learning_rate =
                    value.as_f64().ok_or_else(|| bad(key, &value, "a number"))?
            }
            "train.negatives_per_positive" => {
                self.training.negatives_per_positive = usize_value(key, &value)?
            }
            "train.regularizer_weight" => {
                self.training.regularizer_weight =
                    value.as_f64().ok_or_else(|| bad(key, &value, "a number"))?
            }
            "train.regularizer_order" => {
                self.training.regularizer_order = usize_value(key, &value)? as u32
            }
            "train.norm_p" => {
                self.training.norm = Norm::from_p(usize_value(key, &value)? as u32)
                    .map_err(|e| CliError::Config(e.to_string()))?
            }
            "train.normalize_entities" => {
                self.training.normalize_entities =
                    value.as_bool().ok_or_else(|| bad(key, &value, "a boolean"))?
            }
            "strategy.discouraged" => self.strategy_discouraged = strategy_value(key, &value)?,
            "strategy.prohibited" => self.strategy_prohibited = strategy_value(key, &value)?,
            "candidates.min" => self.min_candidates = usize_value(key, &value)?,
            "eval.cutoff" => self.cutoff = usize_value(key, &value)?,
            "fix.top_n" => self.top_n = usize_value(key, &value)?,
            "out.dir" => self.out_dir = path_value(key, &value)?,
            "seed" => {
                self.training.seed = value.as_u64().ok_or_else(|| bad(key, &value, "an integer"))?
            }
            "threads" => self.threads = usize_value(key, &value)?,
            _ => unreachable!("key checked against KNOWN_KEYS"),
        }
        self.flat.insert(key.to_string(), value);
        Ok(())
    }

    /// Dates sane, referenced files present.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.train_date >= self.validate_date {
            return Err(CliError::Config(format!(
                "snapshot.train ({}) must precede snapshot.validate ({})",
                self.train_date, self.validate_date
            )));
        }
        if !(1..=3).contains(&self.top_n) {
            return Err(CliError::Config(format!("fix.top_n must be 1, 2, or 3, got {}", self.top_n)));
        }
        for (key, path) in [
            ("data.feed", &self.feed),
            ("data.history", &self.history),
            ("data.catalog", &self.catalog),
            ("data.kev", &self.kev),
            ("data.exploitdb", &self.exploitdb),
            ("data.top25", &self.top25),
        ] {
            if let Some(path) = path {
                if !path.exists() {
                    return Err(CliError::Config(format!("{key} points at a missing file: {path:?}")));
                }
            }
        }
        self.training.validate().map_err(|e| CliError::Config(e.to_string()))
    }

    /// The effective configuration as a flat map, including defaults the
    /// config file never mentioned. Feeds the manifest.
    pub fn effective_flat(&self) -> BTreeMap<String, Value> {
        let mut map = self.flat.clone();
        let path = |p: &Option<PathBuf>| {
            p.as_ref().map(|p| Value::String(p.display().to_string())).unwrap_or(Value::Null)
        };
        let mut put = |key: &str, value: Value| {
            map.entry(key.to_string()).or_insert(value);
        };
        put("data.feed", path(&self.feed));
        put("data.history", path(&self.history));
        put("data.catalog", path(&self.catalog));
        put("data.kev", path(&self.kev));
        put("data.exploitdb", path(&self.exploitdb));
        put("data.top25", path(&self.top25));
        put("snapshot.train", Value::String(self.train_date.to_string()));
        put("snapshot.validate", Value::String(self.validate_date.to_string()));
        put("train.dim", self.training.dim.into());
        put("train.epochs", self.training.epochs.into());
        put("train.batch_size", self.training.batch_size.into());
        put("train.learning_rate", serde_json::json!(self.training.learning_rate));
        put("train.negatives_per_positive", self.training.negatives_per_positive.into());
        put("train.regularizer_weight", serde_json::json!(self.training.regularizer_weight));
        put("train.regularizer_order", self.training.regularizer_order.into());
        put(
            "train.norm_p",
            match self.training.norm {
                Norm::L1 => 1.into(),
                Norm::L2 => 2.into(),
            },
        );
        put("train.normalize_entities", self.training.normalize_entities.into());
        put("strategy.discouraged", Value::String(self.strategy_discouraged.to_string()));
        put("strategy.prohibited", Value::String(self.strategy_prohibited.to_string()));
        put("candidates.min", self.min_candidates.into());
        put("eval.cutoff", self.cutoff.into());
        put("fix.top_n", self.top_n.into());
        put("out.dir", Value::String(self.out_dir.display().to_string()));
        put("seed", self.training.seed.into());
        put("threads", self.threads.into());
        map
    }
}

fn path_value(key: &str, value: &Value) -> Result<PathBuf, CliError> {
    value
        .as_str()
        .map(PathBuf::from)
        .ok_or_else(|| CliError::Config(format!("config key {key:?} expects a path string")))
}

fn date_value(key: &str, value: &Value) -> Result<NaiveDate, CliError> {
    value
        .as_str()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| CliError::Config(format!("config key {key:?} expects a YYYY-MM-DD date")))
}

fn usize_value(key: &str, value: &Value) -> Result<usize, CliError> {
    value
        .as_u64()
        .map(|v| v as usize)
        .ok_or_else(|| CliError::Config(format!("config key {key:?} expects a non-negative integer")))
}

fn strategy_value(key: &str, value: &Value) -> Result<CandidateStrategy, CliError> {
    value
        .as_str()
        .ok_or_else(|| CliError::Config(format!("config key {key:?} expects a strategy name")))?
        .parse()
        .map_err(CliError::Config)
}
