//! Test-time ensembling by averaging softmax outputs.

use std::fmt::Write as _;

use crate::data::Dataset;
use crate::matrix::Matrix;
use crate::nn::{self, ModelSpec, ParamVector};
use crate::store::SnapshotRecord;
use crate::{Error, Result, Scalar};

/// Class probabilities of one model over one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix<T> {
    pub probabilities: Matrix<T>,
    pub source: String,
}

/// Which end of the chronological snapshot list an ensemble is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Order {
    #[default]
    Latest,
    Earliest,
}

impl Order {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "latest" => Some(Order::Latest),
            "earliest" => Some(Order::Earliest),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Order::Latest => "latest",
            Order::Earliest => "earliest",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub m: usize,
    /// Standalone error of each selected member, chronological.
    pub member_errors: Vec<f64>,
    pub ensemble_error: f64,
    pub order: Order,
}

pub fn predict<T: Scalar>(
    spec: &ModelSpec,
    params: &ParamVector<T>,
    dataset: &Dataset<T>,
    source: impl Into<String>,
) -> Result<PredictionMatrix<T>> {
    Ok(PredictionMatrix {
        probabilities: nn::class_probabilities(spec, params, dataset.inputs())?,
        source: source.into(),
    })
}

/// Elementwise mean of the members' probabilities.
pub fn ensemble_average<T: Scalar>(members: &[PredictionMatrix<T>]) -> Result<PredictionMatrix<T>> {
    let first = members
        .first()
        .ok_or_else(|| Error::input("ensemble needs at least one member"))?;
    let shape = first.probabilities.shape();
    if let Some(bad) = members.iter().find(|m| m.probabilities.shape() != shape) {
        return Err(Error::input(format!(
            "member {} has shape {:?}, expected {shape:?}",
            bad.source,
            bad.probabilities.shape()
        )));
    }
    let mut sum = Matrix::zeros(shape.0, shape.1);
    for m in members {
        for (s, &p) in sum.as_mut_slice().iter_mut().zip(m.probabilities.as_slice()) {
            *s += p;
        }
    }
    let count = T::from_usize_lossy(members.len());
    for s in sum.as_mut_slice() {
        *s /= count;
    }
    let source = members.iter().map(|m| m.source.as_str()).collect::<Vec<_>>().join("+");
    Ok(PredictionMatrix {
        probabilities: sum,
        source,
    })
}

/// Predictions for each snapshot, chronological.
pub fn predict_all<T: Scalar>(
    snapshots: &[SnapshotRecord<T>],
    dataset: &Dataset<T>,
) -> Result<Vec<PredictionMatrix<T>>> {
    snapshots
        .iter()
        .enumerate()
        .map(|(i, s)| predict(&s.spec, &s.params, dataset, format!("snapshot {}", i + 1)))
        .collect()
}

fn select<U>(items: &[U], m: usize, order: Order) -> Result<&[U]> {
    if m == 0 || m > items.len() {
        return Err(Error::input(format!(
            "ensemble size {m} outside 1..={}",
            items.len()
        )));
    }
    Ok(match order {
        Order::Latest => &items[items.len() - m..],
        Order::Earliest => &items[..m],
    })
}

/// Ensemble evaluation from precomputed per-snapshot predictions.
pub fn ensemble_eval_predictions<T: Scalar>(
    predictions: &[PredictionMatrix<T>],
    labels: &[usize],
    m: usize,
    order: Order,
) -> Result<EnsembleResult> {
    let chosen = select(predictions, m, order)?;
    let member_errors = chosen
        .iter()
        .map(|p| nn::error_rate(&p.probabilities, labels))
        .collect::<Result<Vec<_>>>()?;
    let avg = ensemble_average(chosen)?;
    Ok(EnsembleResult {
        m,
        member_errors,
        ensemble_error: nn::error_rate(&avg.probabilities, labels)?,
        order,
    })
}

/// Averages the last (or first) `m` snapshots and reports the argmax error.
pub fn ensemble_eval<T: Scalar>(
    snapshots: &[SnapshotRecord<T>],
    dataset: &Dataset<T>,
    m: usize,
    order: Order,
) -> Result<EnsembleResult> {
    let chosen = select(snapshots, m, order)?;
    let preds = predict_all(chosen, dataset)?;
    ensemble_eval_predictions(&preds, dataset.labels(), m, Order::Latest).map(|r| EnsembleResult { order, ..r })
}

/// Every ensemble size `m = 1..=M` drawn from `order`.
pub fn size_sweep<T: Scalar>(
    snapshots: &[SnapshotRecord<T>],
    dataset: &Dataset<T>,
    order: Order,
) -> Result<Vec<EnsembleResult>> {
    let preds = predict_all(snapshots, dataset)?;
    (1..=preds.len())
        .map(|m| ensemble_eval_predictions(&preds, dataset.labels(), m, order))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub k: usize,
    pub single_error: f64,
    pub ensemble_error: f64,
}

/// For `k = 1..=M`: the k-th snapshot's own error and the error of the first `k` averaged.
pub fn error_over_time<T: Scalar>(
    snapshots: &[SnapshotRecord<T>],
    dataset: &Dataset<T>,
) -> Result<Vec<CurvePoint>> {
    let preds = predict_all(snapshots, dataset)?;
    (1..=preds.len())
        .map(|k| {
            let single_error = nn::error_rate(&preds[k - 1].probabilities, dataset.labels())?;
            let ens = ensemble_eval_predictions(&preds, dataset.labels(), k, Order::Earliest)?;
            Ok(CurvePoint {
                k,
                single_error,
                ensemble_error: ens.ensemble_error,
            })
        })
        .collect()
}

pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("k,single_error,ensemble_error\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.k, p.single_error, p.ensemble_error);
    }
    out
}

/// `m,ensemble_error,snapshot_1,...,snapshot_M`: one row per result, followed
/// by the standalone error of every snapshot in chronological order, so the
/// table stays rectangular whatever `m` is.
pub fn sweep_csv(results: &[EnsembleResult], snapshot_errors: &[f64]) -> String {
    let mut out = String::from("m,ensemble_error");
    for i in 1..=snapshot_errors.len() {
        let _ = write!(out, ",snapshot_{i}");
    }
    out.push('\n');
    for r in results {
        let _ = write!(out, "{},{}", r.m, r.ensemble_error);
        for e in snapshot_errors {
            let _ = write!(out, ",{e}");
        }
        out.push('\n');
    }
    out
}

/// Standalone error of each prediction matrix.
pub fn member_errors<T: Scalar>(predictions: &[PredictionMatrix<T>], labels: &[usize]) -> Result<Vec<f64>> {
    predictions
        .iter()
        .map(|p| nn::error_rate(&p.probabilities, labels))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pm(rows: &[Vec<f64>], name: &str) -> PredictionMatrix<f64> {
        PredictionMatrix {
            probabilities: Matrix::from_rows(rows).unwrap(),
            source: name.into(),
        }
    }

    #[test]
    fn average_examples() {
        let a = pm(&[vec![0.6, 0.4]], "a");
        let b = pm(&[vec![0.2, 0.8]], "b");
        let avg = ensemble_average(&[a.clone(), b]).unwrap();
        assert!((avg.probabilities.get(0, 0) - 0.4).abs() < 1e-15);
        assert!((avg.probabilities.get(0, 1) - 0.6).abs() < 1e-15);
        assert_eq!(ensemble_average(std::slice::from_ref(&a)).unwrap().probabilities, a.probabilities);
        let three = ensemble_average(&[a.clone(), a.clone(), a.clone()]).unwrap();
        for (x, y) in three.probabilities.as_slice().iter().zip(a.probabilities.as_slice()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn average_errors() {
        assert!(ensemble_average::<f64>(&[]).is_err());
        let a = pm(&[vec![0.6, 0.4]], "a");
        let b = pm(&[vec![0.2, 0.3, 0.5]], "b");
        assert!(matches!(ensemble_average(&[a, b]), Err(Error::Input(_))));
    }

    #[test]
    fn eval_from_predictions() {
        let labels = [0, 1];
        let preds = vec![
            pm(&[vec![0.9, 0.1], vec![0.8, 0.2]], "1"),
            pm(&[vec![0.4, 0.6], vec![0.1, 0.9]], "2"),
            pm(&[vec![0.7, 0.3], vec![0.45, 0.55]], "3"),
        ];
        let r = ensemble_eval_predictions(&preds, &labels, 1, Order::Latest).unwrap();
        assert_eq!((r.ensemble_error, r.member_errors.clone()), (0.0, vec![0.0]));
        let r = ensemble_eval_predictions(&preds, &labels, 2, Order::Earliest).unwrap();
        assert_eq!(r.member_errors, vec![0.5, 0.5]);
        // avg: [0.65, 0.35], [0.45, 0.55] -> both correct
        assert_eq!(r.ensemble_error, 0.0);
        assert!(ensemble_eval_predictions(&preds, &labels, 4, Order::Latest).is_err());
        assert!(ensemble_eval_predictions(&preds, &labels, 0, Order::Latest).is_err());
    }

    #[test]
    fn sweep_csv_layout() {
        let rs = vec![
            EnsembleResult { m: 1, member_errors: vec![0.25], ensemble_error: 0.25, order: Order::Latest },
            EnsembleResult { m: 2, member_errors: vec![0.5, 0.25], ensemble_error: 0.125, order: Order::Latest },
        ];
        assert_eq!(
            sweep_csv(&rs, &[0.5, 0.25]),
            "m,ensemble_error,snapshot_1,snapshot_2\n1,0.25,0.5,0.25\n2,0.125,0.5,0.25\n"
        );
    }
}
