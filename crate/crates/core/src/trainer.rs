//! Mini-batch SGD with momentum, per-iteration learning rates and snapshot capture.
//!
//! Four modes share one loop:
//!
//! - `Snapshot`: cyclic cosine schedule, a snapshot at every cycle end.
//! - `Single`: one snapshot at the final iteration.
//! - `NoCycle`: step schedule, `snapshot_count` snapshots at `floor(k * T / count)`.
//! - `SingleCycle`: like `Snapshot`, but parameters (and momentum) are
//!   re-initialised at the start of every cycle.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use sha2::{Digest, Sha256};

use crate::data::Dataset;
use crate::nn::{self, GradVector, Mode, ModelSpec, ParamVector};
use crate::schedule::{ScheduleKind, ScheduleSpec};
use crate::seed::{self, derive_seed, Stream};
use crate::store::{self, ConfigDigest, SnapshotRecord};
use crate::{Error, Result, Scalar};

pub use crate::store::RunManifest;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    Snapshot,
    Single,
    NoCycle,
    SingleCycle,
}

impl TrainMode {
    pub fn name(self) -> &'static str {
        match self {
            TrainMode::Snapshot => "snapshot",
            TrainMode::Single => "single",
            TrainMode::NoCycle => "nocycle",
            TrainMode::SingleCycle => "singlecycle",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "snapshot" => TrainMode::Snapshot,
            "single" => TrainMode::Single,
            "nocycle" => TrainMode::NoCycle,
            "singlecycle" => TrainMode::SingleCycle,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub model: ModelSpec,
    pub schedule: ScheduleSpec,
    pub mode: TrainMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Number of equally spaced snapshots; `NoCycle` only.
    pub snapshot_count: Option<usize>,
}

impl TrainConfig {
    /// Iterations per epoch for `n` examples; the last short batch is kept.
    pub fn batches_per_epoch(batch_size: usize, n: usize) -> usize {
        n.div_ceil(batch_size)
    }

    pub fn total_iterations(epochs: usize, batch_size: usize, n: usize) -> usize {
        epochs * Self::batches_per_epoch(batch_size, n)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("train.epochs", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("train.momentum", "must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config("train.weight_decay", "must be non-negative"));
        }
        let kind = self.schedule.kind();
        match self.mode {
            TrainMode::Snapshot | TrainMode::SingleCycle => {
                if !matches!(kind, ScheduleKind::CyclicCosine { .. }) {
                    return Err(Error::config(
                        "schedule.kind",
                        format!("mode {} needs cyclic_cosine", self.mode.name()),
                    ));
                }
            }
            TrainMode::NoCycle => {
                if !matches!(kind, ScheduleKind::Step { .. }) {
                    return Err(Error::config("schedule.kind", "mode nocycle needs step"));
                }
                match self.snapshot_count {
                    None => return Err(Error::config("train.snapshot_count", "required for mode nocycle")),
                    Some(c) if c == 0 || c > self.schedule.total_iterations() => {
                        return Err(Error::config(
                            "train.snapshot_count",
                            "must lie in 1..=total iterations",
                        ))
                    }
                    Some(_) => {}
                }
            }
            // Any schedule; step is the usual baseline.
            TrainMode::Single => {}
        }
        Ok(())
    }

    /// Canonical `key=value` lines, sorted by key.
    pub fn canonical_string(&self) -> String {
        let mut fields: Vec<(&str, String)> = vec![
            (
                "model.layers",
                self.model
                    .layer_sizes()
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("model.activation", self.model.activation().name().to_string()),
            ("model.dropout", self.model.dropout_rate().to_string()),
            ("schedule.kind", self.schedule.kind().name().to_string()),
            ("schedule.alpha0", self.schedule.alpha0().to_string()),
            ("schedule.total_iterations", self.schedule.total_iterations().to_string()),
            ("train.mode", self.mode.name().to_string()),
            ("train.epochs", self.epochs.to_string()),
            ("train.batch_size", self.batch_size.to_string()),
            ("train.momentum", self.momentum.to_string()),
            ("train.weight_decay", self.weight_decay.to_string()),
            ("train.seed", self.seed.to_string()),
        ];
        match self.schedule.kind() {
            ScheduleKind::CyclicCosine { cycles } => fields.push(("schedule.cycles", cycles.to_string())),
            ScheduleKind::Step { drops } => {
                let s = drops.iter().map(|(f, m)| format!("{f}:{m}")).collect::<Vec<_>>().join(",");
                fields.push(("schedule.step_fractions", s));
            }
            ScheduleKind::Constant => {}
        }
        if let Some(c) = self.snapshot_count {
            fields.push(("train.snapshot_count", c.to_string()));
        }
        fields.sort_by(|a, b| a.0.cmp(b.0));
        let mut out = String::new();
        for (k, v) in fields {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    /// First 16 bytes of SHA-256 over [`Self::canonical_string`].
    pub fn digest(&self) -> ConfigDigest {
        let hash = Sha256::digest(self.canonical_string().as_bytes());
        let mut out = [0u8; 16];
        out.copy_from_slice(&hash[..16]);
        ConfigDigest(out)
    }
}

/// `velocity' = momentum * velocity - lr * grad`, `params' = params + velocity'`, in place.
pub fn sgd_step<T: Scalar>(
    params: &mut ParamVector<T>,
    grad: &GradVector<T>,
    velocity: &mut [T],
    lr: T,
    momentum: T,
) {
    assert_eq!(params.len(), grad.len(), "gradient length");
    assert_eq!(params.len(), velocity.len(), "velocity length");
    for ((p, &g), v) in params.as_mut_slice().iter_mut().zip(grad.as_slice()).zip(velocity) {
        *v = momentum * *v - lr * g;
        *p += *v;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_train_loss: f64,
    pub lr_at_epoch_end: f64,
}

/// Everything a finished run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedRun<T> {
    pub config_digest: ConfigDigest,
    /// Chronological.
    pub snapshots: Vec<SnapshotRecord<T>>,
    pub epochs: Vec<EpochStats>,
    pub iterations: usize,
}

impl<T: Scalar> TrainedRun<T> {
    pub fn manifest(&self) -> RunManifest {
        RunManifest {
            config_digest: self.config_digest,
            snapshots: (1..=self.snapshots.len()).map(store::snapshot_file_name).collect(),
            epoch_losses: self.epochs.iter().map(|e| e.mean_train_loss).collect(),
        }
    }

    pub fn final_snapshot(&self) -> &SnapshotRecord<T> {
        self.snapshots.last().expect("a run always has a snapshot")
    }

    pub fn loss_csv(&self) -> String {
        let mut out = String::from("epoch,mean_train_loss,lr_at_epoch_end\n");
        for e in &self.epochs {
            let _ = writeln!(out, "{},{},{}", e.epoch, e.mean_train_loss, e.lr_at_epoch_end);
        }
        out
    }
}

pub const MANIFEST_FILE: &str = "run.manifest";
pub const LOSS_FILE: &str = "loss.csv";

impl TrainedRun<f64> {
    /// Writes `run.manifest`, `snap_NNN.snap` and `loss.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::storage(dir, e))?;
        let manifest = self.manifest();
        for (record, name) in self.snapshots.iter().zip(&manifest.snapshots) {
            store::write_snapshot(record, &dir.join(name))?;
        }
        let loss_path = dir.join(LOSS_FILE);
        fs::write(&loss_path, self.loss_csv()).map_err(|e| Error::storage(&loss_path, e))?;
        store::write_manifest(&manifest, &dir.join(MANIFEST_FILE))
    }
}

/// Which iterations end with a snapshot, and under which cycle index.
fn snapshot_plan(config: &TrainConfig) -> Result<Vec<(usize, usize)>> {
    let total = config.schedule.total_iterations();
    Ok(match config.mode {
        TrainMode::Snapshot | TrainMode::SingleCycle => {
            let mut plan = Vec::new();
            for t in 1..=total {
                if config.schedule.is_cycle_end(t)? {
                    plan.push((t, config.schedule.cycle_of(t)?));
                }
            }
            plan
        }
        TrainMode::NoCycle => {
            let count = config.snapshot_count.expect("validated");
            (1..=count).map(|k| (k * total / count, k)).collect()
        }
        TrainMode::Single => vec![(total, 1)],
    })
}

/// Runs one full training job.
pub fn train<T: Scalar>(config: &TrainConfig, data: &Dataset<T>) -> Result<TrainedRun<T>> {
    config.validate()?;
    let spec = &config.model;
    if data.dim() != spec.input_dim() {
        return Err(Error::config(
            "model.layers",
            format!("input size {} but data has {} features", spec.input_dim(), data.dim()),
        ));
    }
    if data.class_count() > spec.class_count() {
        return Err(Error::config(
            "model.layers",
            format!("{} outputs but data has {} classes", spec.class_count(), data.class_count()),
        ));
    }
    let n = data.len();
    let per_epoch = TrainConfig::batches_per_epoch(config.batch_size, n);
    let total = config.epochs * per_epoch;
    if total != config.schedule.total_iterations() {
        return Err(Error::config(
            "schedule",
            format!(
                "schedule has {} iterations but {} epochs x {per_epoch} batches = {total}",
                config.schedule.total_iterations(),
                config.epochs
            ),
        ));
    }

    let digest = config.digest();
    let plan = snapshot_plan(config)?;
    let mut next_snapshot = plan.iter().peekable();
    let momentum = T::lit(config.momentum);
    let decay = T::lit(config.weight_decay);
    let reinit = config.mode == TrainMode::SingleCycle;

    let mut params: ParamVector<T> = nn::init_params(spec, derive_seed(config.seed, Stream::Init, 1));
    let mut velocity = vec![T::zero(); params.len()];
    let mut snapshots = Vec::with_capacity(plan.len());
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..n).collect();
    let mut t = 0;

    for epoch in 0..config.epochs {
        order.sort_unstable();
        order.shuffle(&mut seed::rng(derive_seed(config.seed, Stream::Shuffle, epoch as u64)));
        let mut loss_sum = 0.0;
        let mut lr = T::zero();
        for chunk in order.chunks(config.batch_size) {
            t += 1;
            if reinit && t > 1 && config.schedule.is_cycle_start(t)? {
                let cycle = config.schedule.cycle_of(t)? as u64;
                params = nn::init_params(spec, derive_seed(config.seed, Stream::Init, cycle));
                velocity.iter_mut().for_each(|v| *v = T::zero());
            }
            lr = config.schedule.lr_at(t)?;
            let batch = data.batch(chunk);
            let dropout_seed = derive_seed(config.seed, Stream::Dropout, t as u64);
            let (loss, mut grad) = nn::loss_and_grad(spec, &params, &batch, Mode::Train, dropout_seed)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { iteration: t });
            }
            if decay > T::zero() {
                for (g, &p) in grad.as_mut_slice().iter_mut().zip(params.as_slice()) {
                    *g += decay * p;
                }
            }
            sgd_step(&mut params, &grad, &mut velocity, lr, momentum);
            if params.as_slice().iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged { iteration: t });
            }
            loss_sum += loss.as_f64() * chunk.len() as f64;

            if let Some(&(_, cycle_index)) = next_snapshot.next_if(|(at, _)| *at == t) {
                snapshots.push(SnapshotRecord {
                    spec: spec.clone(),
                    params: params.clone(),
                    cycle_index,
                    iteration: t,
                    train_loss: loss.as_f64(),
                    config_digest: digest,
                });
            }
        }
        epochs.push(EpochStats {
            epoch: epoch + 1,
            mean_train_loss: loss_sum / n as f64,
            lr_at_epoch_end: lr.as_f64(),
        });
    }
    debug_assert_eq!(snapshots.len(), plan.len());
    Ok(TrainedRun {
        config_digest: digest,
        snapshots,
        epochs,
        iterations: t,
    })
}
