//! Diversity diagnostics for a set of snapshots.

use std::fmt::Write as _;

use crate::data::Dataset;
use crate::ensemble::PredictionMatrix;
use crate::matrix::Matrix;
use crate::nn::{self, ModelSpec, ParamVector};
use crate::{Error, Result, Scalar};

/// Test error along `λ·θ₁ + (1 − λ)·θ₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationCurve<T> {
    pub lambdas: Vec<T>,
    pub errors: Vec<f64>,
    /// Endpoint at λ = 1.
    pub theta1: String,
    /// Endpoint at λ = 0.
    pub theta2: String,
}

impl<T: Scalar> InterpolationCurve<T> {
    /// Largest error strictly inside (0, 1), if the grid has interior points.
    pub fn max_interior_error(&self) -> Option<f64> {
        self.lambdas
            .iter()
            .zip(&self.errors)
            .filter(|(l, _)| **l > T::zero() && **l < T::one())
            .map(|(_, &e)| e)
            .reduce(f64::max)
    }

    pub fn error_at(&self, lambda: T) -> Option<f64> {
        self.lambdas.iter().position(|&l| l == lambda).map(|i| self.errors[i])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,test_error\n");
        for (l, e) in self.lambdas.iter().zip(&self.errors) {
            let _ = writeln!(out, "{l},{e}");
        }
        out
    }
}

/// `points` evenly spaced values from 0 to 1 inclusive.
pub fn lambda_grid<T: Scalar>(points: usize) -> Result<Vec<T>> {
    if points < 2 {
        return Err(Error::input("lambda grid needs at least two points"));
    }
    let last = T::from_usize_lossy(points - 1);
    Ok((0..points).map(|i| T::from_usize_lossy(i) / last).collect())
}

pub const DEFAULT_GRID_POINTS: usize = 51;

pub fn interpolate<T: Scalar>(
    spec: &ModelSpec,
    theta1: &ParamVector<T>,
    theta2: &ParamVector<T>,
    dataset: &Dataset<T>,
    lambdas: &[T],
) -> Result<InterpolationCurve<T>> {
    if theta1.len() != theta2.len() || theta1.len() != spec.param_count() {
        return Err(Error::input(format!(
            "parameter lengths {} and {} do not both match the spec ({})",
            theta1.len(),
            theta2.len(),
            spec.param_count()
        )));
    }
    if lambdas.iter().any(|&l| !(l >= T::zero() && l <= T::one())) {
        return Err(Error::input("lambda grid must lie within [0, 1]"));
    }
    if lambdas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::input("lambda grid must be strictly increasing"));
    }
    let errors = lambdas
        .iter()
        .map(|&l| {
            // Endpoints go through the unmixed vectors so they match standalone evaluation.
            if l == T::one() {
                nn::evaluate_error(spec, theta1, dataset)
            } else if l == T::zero() {
                nn::evaluate_error(spec, theta2, dataset)
            } else {
                nn::evaluate_error(spec, &theta1.combine(l, theta2, T::one() - l)?, dataset)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(InterpolationCurve {
        lambdas: lambdas.to_vec(),
        errors,
        theta1: String::new(),
        theta2: String::new(),
    })
}

/// Pairwise Pearson correlations of flattened softmax outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix<T> {
    pub values: Matrix<T>,
    pub ids: Vec<String>,
}

impl<T: Scalar> CorrelationMatrix<T> {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Mean of the off-diagonal entries among `indices`.
    pub fn mean_off_diagonal(&self, indices: &[usize]) -> Option<T> {
        let mut sum = T::zero();
        let mut count = 0usize;
        for &i in indices {
            for &j in indices {
                if i != j {
                    sum += self.values.get(i, j);
                    count += 1;
                }
            }
        }
        (count > 0).then(|| sum / T::from_usize_lossy(count))
    }

    /// `i,j,corr` for every ordered pair (1-based indices).
    pub fn triples_csv(&self) -> String {
        let mut out = String::from("i,j,corr\n");
        for i in 0..self.len() {
            for j in 0..self.len() {
                let _ = writeln!(out, "{},{},{}", i + 1, j + 1, self.values.get(i, j));
            }
        }
        out
    }

    /// Square grid: column `i` holds the row's snapshot index, `c{j}` its
    /// correlation with snapshot `j`.
    pub fn grid_csv(&self) -> String {
        let mut out = String::from("i");
        for j in 1..=self.len() {
            let _ = write!(out, ",c{j}");
        }
        out.push('\n');
        for i in 0..self.len() {
            let _ = write!(out, "{}", i + 1);
            for j in 0..self.len() {
                let _ = write!(out, ",{}", self.values.get(i, j));
            }
            out.push('\n');
        }
        out
    }
}

/// Centered copy of `values` and its sum of squares.
fn center<T: Scalar>(values: &[T]) -> (Vec<T>, T) {
    let n = T::from_usize_lossy(values.len());
    let mean = values.iter().copied().sum::<T>() / n;
    let centered: Vec<T> = values.iter().map(|&v| v - mean).collect();
    let ss = centered.iter().map(|&v| v * v).sum();
    (centered, ss)
}

pub fn softmax_correlation<T: Scalar>(predictions: &[PredictionMatrix<T>]) -> Result<CorrelationMatrix<T>> {
    if predictions.len() < 2 {
        return Err(Error::input("correlation needs at least two prediction matrices"));
    }
    let shape = predictions[0].probabilities.shape();
    if let Some(bad) = predictions.iter().find(|p| p.probabilities.shape() != shape) {
        return Err(Error::input(format!("{} has a different shape", bad.source)));
    }
    let centered: Vec<(Vec<T>, T)> = predictions
        .iter()
        .map(|p| {
            let (c, ss) = center(p.probabilities.as_slice());
            if !(ss > T::zero() && ss.is_finite()) {
                return Err(Error::UndefinedCorrelation {
                    snapshot: p.source.clone(),
                });
            }
            Ok((c, ss))
        })
        .collect::<Result<_>>()?;
    let m = predictions.len();
    let mut values = Matrix::zeros(m, m);
    for i in 0..m {
        values.set(i, i, T::one());
        for j in i + 1..m {
            let (a, ssa) = &centered[i];
            let (b, ssb) = &centered[j];
            let cov: T = a.iter().zip(b).map(|(&x, &y)| x * y).sum();
            let r = cov / (*ssa * *ssb).sqrt();
            values.set(i, j, r);
            values.set(j, i, r);
        }
    }
    Ok(CorrelationMatrix {
        values,
        ids: predictions.iter().map(|p| p.source.clone()).collect(),
    })
}
