use std::fs;
use std::path::{Path, PathBuf};

use snapens::analysis::{self, InterpolationCurve};
use snapens::data::{self, Dataset};
use snapens::ensemble::{self, Order};
use snapens::store::{self, ConfigDigest, RunManifest, SnapshotRecord};
use snapens::trainer::{self, MANIFEST_FILE};

use crate::config::{self, RunConfig};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenKind {
    Spirals,
    Moons,
    Blobs,
}

#[derive(Debug, Clone)]
pub struct GenData {
    pub kind: GenKind,
    pub n: usize,
    pub noise: f64,
    pub turns: f64,
    pub classes: usize,
    pub seed: u64,
}

pub fn gen_data(opts: &GenData, out: &Path) -> Result<(), CliError> {
    let d: Dataset<f64> = match opts.kind {
        GenKind::Spirals => data::gen_spirals(opts.n, opts.turns, opts.noise, opts.seed)?,
        GenKind::Moons => data::gen_two_moons(opts.n, opts.noise, opts.seed)?,
        GenKind::Blobs => data::gen_blobs(opts.n, opts.classes, opts.noise, opts.seed)?,
    };
    data::save_csv(&d, out)?;
    Ok(())
}

pub const TRAIN_DATA_FILE: &str = "train.csv";
pub const TEST_DATA_FILE: &str = "test.csv";

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub dir: PathBuf,
    pub manifest: PathBuf,
    pub snapshots: usize,
    pub config: RunConfig,
}

/// Trains the run described by a config file and writes
/// `run.manifest`, `snap_NNN.snap`, `loss.csv`, `train.csv` and `test.csv`
/// into its output directory.
pub fn train(config_path: &Path) -> Result<TrainOutcome, CliError> {
    let cfg = config::load_config(config_path)?;
    train_config(cfg)
}

pub fn train_config(cfg: RunConfig) -> Result<TrainOutcome, CliError> {
    let (train_set, test_set) = cfg.data.load()?;
    let train_cfg = cfg.train_config(train_set.len())?;
    let run = trainer::train(&train_cfg, &train_set)?;
    let dir = cfg.output_dir.clone();
    run.save(&dir)?;
    data::save_csv(&train_set, &dir.join(TRAIN_DATA_FILE))?;
    data::save_csv(&test_set, &dir.join(TEST_DATA_FILE))?;
    Ok(TrainOutcome {
        manifest: dir.join(MANIFEST_FILE),
        snapshots: run.snapshots.len(),
        dir,
        config: cfg,
    })
}

fn load(manifest: &Path, data_path: &Path, label: &str) -> Result<(Vec<SnapshotRecord<f64>>, Dataset<f64>), CliError> {
    let (_, records) = store::load_run(manifest)?;
    let dataset = data::load_csv(data_path, label)?;
    Ok((records, dataset))
}

/// `m,ensemble_error,snapshot_*` for one `m`, or for every `m` when `m` is `None`.
pub fn ensemble(manifest: &Path, data_path: &Path, label: &str, m: Option<usize>, order: Order) -> Result<String, CliError> {
    let (records, dataset) = load(manifest, data_path, label)?;
    let preds = ensemble::predict_all(&records, &dataset)?;
    let sizes = match m {
        Some(m) => vec![m],
        None => (1..=preds.len()).collect(),
    };
    let results = sizes
        .into_iter()
        .map(|m| ensemble::ensemble_eval_predictions(&preds, dataset.labels(), m, order))
        .collect::<snapens::Result<Vec<_>>>()?;
    let errors = ensemble::member_errors(&preds, dataset.labels())?;
    Ok(ensemble::sweep_csv(&results, &errors))
}

/// `k,single_error,ensemble_error` with ensembles grown from the earliest snapshot.
pub fn curve(manifest: &Path, data_path: &Path, label: &str) -> Result<String, CliError> {
    let (records, dataset) = load(manifest, data_path, label)?;
    Ok(ensemble::curve_csv(&ensemble::error_over_time(&records, &dataset)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterpTarget {
    /// 1-based snapshot indices; the first sits at λ = 1.
    Pair(usize, usize),
    /// The final snapshot at λ = 1 against every snapshot at λ = 0.
    AgainstFinal,
}

fn snapshot_index(i: usize, count: usize) -> Result<usize, CliError> {
    if i == 0 || i > count {
        return Err(CliError::usage(format!("snapshot index {i} outside 1..={count}")));
    }
    Ok(i - 1)
}

pub fn interpolation_curves(
    records: &[SnapshotRecord<f64>],
    dataset: &Dataset<f64>,
    target: InterpTarget,
    grid_points: usize,
) -> Result<Vec<InterpolationCurve<f64>>, CliError> {
    let grid = analysis::lambda_grid::<f64>(grid_points)?;
    let pairs = match target {
        InterpTarget::Pair(i, j) => vec![(snapshot_index(i, records.len())?, snapshot_index(j, records.len())?)],
        InterpTarget::AgainstFinal => {
            let last = records.len() - 1;
            (0..records.len()).map(|j| (last, j)).collect()
        }
    };
    pairs
        .into_iter()
        .map(|(i, j)| {
            let (a, b) = (&records[i], &records[j]);
            if a.spec != b.spec {
                return Err(CliError::usage(format!(
                    "snapshots {} and {} have different architectures",
                    i + 1,
                    j + 1
                )));
            }
            let mut curve = analysis::interpolate(&a.spec, &a.params, &b.params, dataset, &grid)?;
            curve.theta1 = (i + 1).to_string();
            curve.theta2 = (j + 1).to_string();
            Ok(curve)
        })
        .collect()
}

/// A single pair prints `lambda,test_error`; `AgainstFinal` prints one block
/// per snapshot as `theta1,theta2,lambda,test_error`.
pub fn interpolate(
    manifest: &Path,
    data_path: &Path,
    label: &str,
    target: InterpTarget,
    grid_points: usize,
) -> Result<String, CliError> {
    let (records, dataset) = load(manifest, data_path, label)?;
    let curves = interpolation_curves(&records, &dataset, target, grid_points)?;
    Ok(match target {
        InterpTarget::Pair(..) => curves[0].to_csv(),
        InterpTarget::AgainstFinal => {
            let mut out = String::from("theta1,theta2,lambda,test_error\n");
            for c in &curves {
                for (l, e) in c.lambdas.iter().zip(&c.errors) {
                    out.push_str(&format!("{},{},{l},{e}\n", c.theta1, c.theta2));
                }
            }
            out
        }
    })
}

/// Returns `(i,j,corr triples, M x M grid)`.
pub fn correlate(manifest: &Path, data_path: &Path, label: &str) -> Result<(String, String), CliError> {
    let (records, dataset) = load(manifest, data_path, label)?;
    let preds = ensemble::predict_all(&records, &dataset)?;
    let corr = analysis::softmax_correlation(&preds)?;
    Ok((corr.triples_csv(), corr.grid_csv()))
}

/// Writes a manifest at `out` listing the final snapshot of each given run,
/// e.g. to ensemble independently trained models.
pub fn combine(manifests: &[PathBuf], out: &Path) -> Result<RunManifest, CliError> {
    if manifests.is_empty() {
        return Err(CliError::usage("combine needs at least one manifest"));
    }
    let out_dir = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(format!("{}: {e}", out_dir.display())))?;
    let out_dir = out_dir
        .canonicalize()
        .map_err(|e| CliError::io(format!("{}: {e}", out_dir.display())))?;
    let mut snapshots = Vec::new();
    let mut digests = Vec::new();
    for path in manifests {
        let m = store::read_manifest(path)?;
        let last = store::snapshot_paths(path, &m).pop().expect("non-empty manifest");
        let last = last
            .canonicalize()
            .map_err(|e| CliError::io(format!("{}: {e}", last.display())))?;
        let name = match last.strip_prefix(&out_dir) {
            Ok(rel) => rel.to_path_buf(),
            Err(_) => last.clone(),
        };
        snapshots.push(name.to_string_lossy().into_owned());
        digests.push(m.config_digest);
    }
    let manifest = RunManifest {
        config_digest: ConfigDigest::combine(&digests),
        snapshots,
        epoch_losses: Vec::new(),
    };
    store::write_manifest(&manifest, out)?;
    Ok(manifest)
}
