//! Experiment config files: `key = value` lines, `#` comments.
//!
//! ```text
//! model.layers = 2,64,64,2
//! schedule.kind = cyclic_cosine
//! schedule.alpha0 = 0.2
//! schedule.cycles = 6
//! train.mode = snapshot
//! train.epochs = 120
//! data.source = spirals
//! data.params = n=2000,turns=1.5,noise=0.08,seed=0,train_fraction=0.5
//! output.dir = runs/snapshot
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use snapens::data::{self, Dataset};
use snapens::schedule::{ScheduleKind, ScheduleSpec};
use snapens::{ModelSpec, TrainConfig, TrainMode};

use crate::CliError;

const KNOWN_KEYS: &[&str] = &[
    "model.layers",
    "model.dropout",
    "schedule.kind",
    "schedule.alpha0",
    "schedule.cycles",
    "schedule.step_fractions",
    "train.mode",
    "train.epochs",
    "train.batch_size",
    "train.momentum",
    "train.weight_decay",
    "train.seed",
    "train.snapshot_count",
    "data.source",
    "data.params",
    "output.dir",
];

pub const DEFAULT_ALPHA0: f64 = 0.1;
pub const DEFAULT_BATCH_SIZE: usize = 64;
pub const DEFAULT_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Spirals,
    Moons,
    Blobs,
    Csv,
    Idx,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub source: DataSource,
    pub params: BTreeMap<String, String>,
    /// Directory that relative file paths in `params` resolve against.
    pub base_dir: PathBuf,
}

/// A parsed config. The schedule length depends on the training-set size,
/// so the final [`TrainConfig`] is built once data is loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub schedule_kind: ScheduleKind,
    pub alpha0: f64,
    pub mode: TrainMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub snapshot_count: Option<usize>,
    pub data: DataConfig,
    pub output_dir: PathBuf,
}

fn bad(key: &str, message: impl Into<String>) -> CliError {
    CliError::config(key, message)
}

fn parse_value<V: std::str::FromStr>(key: &str, raw: &str) -> Result<V, CliError> {
    raw.parse()
        .map_err(|_| bad(key, format!("cannot parse `{raw}`")))
}

struct Entries(BTreeMap<String, String>);

impl Entries {
    fn required(&self, key: &str) -> Result<&str, CliError> {
        self.0
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| bad(key, "missing required key"))
    }

    fn optional<V: std::str::FromStr>(&self, key: &str, default: V) -> Result<V, CliError> {
        match self.0.get(key) {
            Some(raw) => parse_value(key, raw),
            None => Ok(default),
        }
    }
}

fn parse_entries(text: &str) -> Result<Entries, CliError> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("config line {}: expected `key = value`", lineno + 1)))?;
        let key = key.trim();
        if !KNOWN_KEYS.contains(&key) {
            return Err(bad(key, "unknown key"));
        }
        if map.insert(key.to_string(), value.trim().to_string()).is_some() {
            return Err(bad(key, "given twice"));
        }
    }
    Ok(Entries(map))
}

/// `a=1,b=2` into a map.
pub fn parse_params(key: &str, raw: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for item in raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| bad(key, format!("`{item}` is not name=value")))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn parse_step_fractions(raw: &str) -> Result<Vec<(f64, f64)>, CliError> {
    let key = "schedule.step_fractions";
    raw.split(',')
        .map(|pair| {
            let (f, m) = pair
                .trim()
                .split_once(':')
                .ok_or_else(|| bad(key, format!("`{pair}` is not fraction:multiplier")))?;
            Ok((parse_value(key, f.trim())?, parse_value(key, m.trim())?))
        })
        .collect()
}

pub fn parse_config(text: &str, base_dir: &Path) -> Result<RunConfig, CliError> {
    let e = parse_entries(text)?;

    let layers = e
        .required("model.layers")?
        .split(',')
        .map(|s| parse_value::<usize>("model.layers", s.trim()))
        .collect::<Result<Vec<_>, _>>()?;
    let dropout: f64 = e.optional("model.dropout", 0.0)?;
    let model = ModelSpec::new(layers, dropout).map_err(|err| bad("model.layers", err.to_string()))?;

    let mode_raw = e.required("train.mode")?;
    let mode = TrainMode::parse(mode_raw).ok_or_else(|| bad("train.mode", format!("unknown mode `{mode_raw}`")))?;

    let kind_raw = e.required("schedule.kind")?;
    let schedule_kind = match kind_raw {
        "cyclic_cosine" => {
            let cycles = parse_value("schedule.cycles", e.required("schedule.cycles")?)?;
            ScheduleKind::CyclicCosine { cycles }
        }
        "step" => match e.0.get("schedule.step_fractions") {
            Some(raw) => ScheduleKind::Step {
                drops: parse_step_fractions(raw)?,
            },
            None => ScheduleKind::default_step(),
        },
        "constant" => ScheduleKind::Constant,
        other => return Err(bad("schedule.kind", format!("unknown schedule `{other}`"))),
    };
    if !matches!(schedule_kind, ScheduleKind::CyclicCosine { .. }) && e.0.contains_key("schedule.cycles") {
        return Err(bad("schedule.cycles", "only valid with schedule.kind = cyclic_cosine"));
    }
    match mode {
        TrainMode::Snapshot | TrainMode::SingleCycle if !matches!(schedule_kind, ScheduleKind::CyclicCosine { .. }) => {
            return Err(bad("schedule.kind", format!("mode {} needs cyclic_cosine", mode.name())));
        }
        TrainMode::NoCycle if !matches!(schedule_kind, ScheduleKind::Step { .. }) => {
            return Err(bad("schedule.kind", "mode nocycle needs step"));
        }
        _ => {}
    }
    let snapshot_count = match mode {
        TrainMode::NoCycle => Some(parse_value("train.snapshot_count", e.required("train.snapshot_count")?)?),
        _ if e.0.contains_key("train.snapshot_count") => {
            return Err(bad("train.snapshot_count", "only valid with train.mode = nocycle"));
        }
        _ => None,
    };

    let source_raw = e.required("data.source")?;
    let source = match source_raw {
        "spirals" => DataSource::Spirals,
        "moons" => DataSource::Moons,
        "blobs" => DataSource::Blobs,
        "csv" => DataSource::Csv,
        "idx" => DataSource::Idx,
        other => return Err(bad("data.source", format!("unknown source `{other}`"))),
    };
    let params = match e.0.get("data.params") {
        Some(raw) => parse_params("data.params", raw)?,
        None => BTreeMap::new(),
    };

    Ok(RunConfig {
        model,
        schedule_kind,
        alpha0: e.optional("schedule.alpha0", DEFAULT_ALPHA0)?,
        mode,
        epochs: parse_value("train.epochs", e.required("train.epochs")?)?,
        batch_size: e.optional("train.batch_size", DEFAULT_BATCH_SIZE)?,
        momentum: e.optional("train.momentum", DEFAULT_MOMENTUM)?,
        weight_decay: e.optional("train.weight_decay", 0.0)?,
        seed: e.optional("train.seed", 0)?,
        snapshot_count,
        data: DataConfig {
            source,
            params,
            base_dir: base_dir.to_path_buf(),
        },
        output_dir: base_dir.join(e.required("output.dir")?),
    })
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, base)
}

impl RunConfig {
    /// Final training config for a training set of `n` examples.
    pub fn train_config(&self, n: usize) -> Result<TrainConfig, CliError> {
        if self.epochs == 0 {
            return Err(bad("train.epochs", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(bad("train.batch_size", "must be positive"));
        }
        let total = TrainConfig::total_iterations(self.epochs, self.batch_size, n);
        let schedule = ScheduleSpec::new(self.schedule_kind.clone(), self.alpha0, total).map_err(|err| {
            let key = match self.schedule_kind {
                ScheduleKind::CyclicCosine { .. } => "schedule.cycles",
                ScheduleKind::Step { .. } => "schedule.step_fractions",
                ScheduleKind::Constant => "schedule.alpha0",
            };
            bad(key, err.to_string())
        })?;
        let config = TrainConfig {
            model: self.model.clone(),
            schedule,
            mode: self.mode,
            epochs: self.epochs,
            batch_size: self.batch_size,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            seed: self.seed,
            snapshot_count: self.snapshot_count,
        };
        config.validate()?;
        Ok(config)
    }
}

impl DataConfig {
    fn get<V: std::str::FromStr>(&self, name: &str, default: Option<V>) -> Result<V, CliError> {
        match self.params.get(name) {
            Some(raw) => parse_value(&format!("data.params.{name}"), raw),
            None => default.ok_or_else(|| bad(&format!("data.params.{name}"), "missing")),
        }
    }

    fn path(&self, name: &str) -> Result<PathBuf, CliError> {
        let raw: String = self.get(name, None)?;
        Ok(self.base_dir.join(raw))
    }

    /// Loads or generates the data and returns `(train, test)`, normalized on
    /// train statistics unless `normalize=false`.
    pub fn load(&self) -> Result<(Dataset<f64>, Dataset<f64>), CliError> {
        let seed: u64 = self.get("seed", Some(0))?;
        let whole = match self.source {
            DataSource::Spirals => Some(data::gen_spirals(
                self.get("n", Some(2000))?,
                self.get("turns", Some(1.5))?,
                self.get("noise", Some(0.08))?,
                seed,
            )?),
            DataSource::Moons => Some(data::gen_two_moons(
                self.get("n", Some(1000))?,
                self.get("noise", Some(0.1))?,
                seed,
            )?),
            DataSource::Blobs => Some(data::gen_blobs(
                self.get("n", Some(600))?,
                self.get("k", Some(3))?,
                self.get("spread", Some(1.0))?,
                seed,
            )?),
            DataSource::Csv | DataSource::Idx if self.params.contains_key("test") || self.params.contains_key("test_images") => None,
            DataSource::Csv => Some(data::load_csv(&self.path("train")?, &self.label_column())?),
            DataSource::Idx => Some(data::load_idx(&self.path("images")?, &self.path("labels")?)?),
        };
        let (train, test) = match whole {
            Some(d) => {
                let fraction = self.get("train_fraction", Some(0.5))?;
                let split_seed = self.get("split_seed", Some(seed))?;
                data::split(&d, fraction, split_seed)?
            }
            None => match self.source {
                DataSource::Csv => (
                    data::load_csv(&self.path("train")?, &self.label_column())?,
                    data::load_csv(&self.path("test")?, &self.label_column())?,
                ),
                _ => (
                    data::load_idx(&self.path("images")?, &self.path("labels")?)?,
                    data::load_idx(&self.path("test_images")?, &self.path("test_labels")?)?,
                ),
            },
        };
        if self.get("normalize", Some(true))? {
            let (train, test, _) = data::normalize(&train, &test)?;
            Ok((train, test))
        } else {
            Ok((train, test))
        }
    }

    fn label_column(&self) -> String {
        self.params.get("label").cloned().unwrap_or_else(|| "label".into())
    }
}
