//! Per-iteration learning-rate schedules.
//!
//! Iterations are 1-based. Under the cyclic cosine schedule the `T` iterations
//! are split into `M` cycles of length `L = ceil(T / M)`; within a cycle the
//! rate falls from `alpha0` along `alpha0 / 2 * (cos(pi * ((t - 1) mod L) / L) + 1)`
//! and jumps back to `alpha0` at the next cycle start.

use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleKind {
    CyclicCosine { cycles: usize },
    /// `(fraction, multiplier)` pairs; the multiplier applies once `t > floor(fraction * T)`.
    Step { drops: Vec<(f64, f64)> },
    Constant,
}

impl ScheduleKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScheduleKind::CyclicCosine { .. } => "cyclic_cosine",
            ScheduleKind::Step { .. } => "step",
            ScheduleKind::Constant => "constant",
        }
    }

    /// ×0.1 at 50% and again at 75% of training.
    pub fn default_step() -> Self {
        ScheduleKind::Step {
            drops: vec![(0.5, 0.1), (0.75, 0.1)],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleSpec {
    kind: ScheduleKind,
    alpha0: f64,
    total_iterations: usize,
}

impl ScheduleSpec {
    pub fn new(kind: ScheduleKind, alpha0: f64, total_iterations: usize) -> Result<Self> {
        if !(alpha0 > 0.0 && alpha0.is_finite()) {
            return Err(Error::input(format!("alpha0 must be positive, got {alpha0}")));
        }
        if total_iterations == 0 {
            return Err(Error::input("total iterations must be positive"));
        }
        match &kind {
            ScheduleKind::CyclicCosine { cycles } => {
                if *cycles == 0 || *cycles > total_iterations {
                    return Err(Error::input(format!(
                        "cycle count {cycles} must be in 1..={total_iterations}"
                    )));
                }
            }
            ScheduleKind::Step { drops } => {
                for &(f, m) in drops {
                    if !(f > 0.0 && f <= 1.0) {
                        return Err(Error::input(format!("step fraction {f} outside (0, 1]")));
                    }
                    if !(m.is_finite() && m > 0.0) {
                        return Err(Error::input(format!("step multiplier {m} must be positive")));
                    }
                }
                if drops.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(Error::input("step fractions must be strictly increasing"));
                }
            }
            ScheduleKind::Constant => {}
        }
        Ok(ScheduleSpec {
            kind,
            alpha0,
            total_iterations,
        })
    }

    pub fn cyclic_cosine(alpha0: f64, total_iterations: usize, cycles: usize) -> Result<Self> {
        Self::new(ScheduleKind::CyclicCosine { cycles }, alpha0, total_iterations)
    }

    pub fn step(alpha0: f64, total_iterations: usize) -> Result<Self> {
        Self::new(ScheduleKind::default_step(), alpha0, total_iterations)
    }

    pub fn kind(&self) -> &ScheduleKind {
        &self.kind
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    pub fn total_iterations(&self) -> usize {
        self.total_iterations
    }

    /// Cycle count `M`, if cyclic.
    pub fn cycles(&self) -> Option<usize> {
        match self.kind {
            ScheduleKind::CyclicCosine { cycles } => Some(cycles),
            _ => None,
        }
    }

    /// `ceil(T / M)`, if cyclic.
    pub fn cycle_length(&self) -> Option<usize> {
        self.cycles().map(|m| self.total_iterations.div_ceil(m))
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.total_iterations {
            return Err(Error::input(format!(
                "iteration {t} outside 1..={}",
                self.total_iterations
            )));
        }
        Ok(())
    }

    pub fn lr_at<T: Scalar>(&self, t: usize) -> Result<T> {
        self.check_t(t)?;
        let alpha0 = T::lit(self.alpha0);
        Ok(match &self.kind {
            ScheduleKind::CyclicCosine { .. } => {
                let len = self.cycle_length().expect("cyclic");
                let phase = T::from_usize_lossy((t - 1) % len) / T::from_usize_lossy(len);
                alpha0 / T::lit(2.0) * ((T::lit(std::f64::consts::PI) * phase).cos() + T::one())
            }
            ScheduleKind::Step { drops } => {
                let total = self.total_iterations as f64;
                drops
                    .iter()
                    .filter(|&&(f, _)| t > (f * total).floor() as usize)
                    .fold(alpha0, |lr, &(_, m)| lr * T::lit(m))
            }
            ScheduleKind::Constant => alpha0,
        })
    }

    /// 1-based cycle containing iteration `t`.
    pub fn cycle_of(&self, t: usize) -> Result<usize> {
        self.check_t(t)?;
        let len = self
            .cycle_length()
            .ok_or_else(|| Error::input("cycle index requested on a non-cyclic schedule"))?;
        Ok((t - 1) / len + 1)
    }

    pub fn is_cycle_start(&self, t: usize) -> Result<bool> {
        self.check_t(t)?;
        let len = self
            .cycle_length()
            .ok_or_else(|| Error::input("cycle start requested on a non-cyclic schedule"))?;
        Ok((t - 1).is_multiple_of(len))
    }

    /// True at the last iteration of every cycle; the final iteration always ends one.
    pub fn is_cycle_end(&self, t: usize) -> Result<bool> {
        self.check_t(t)?;
        let len = self
            .cycle_length()
            .ok_or_else(|| Error::input("cycle end requested on a non-cyclic schedule"))?;
        Ok(t.is_multiple_of(len) || t == self.total_iterations)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cyc() -> ScheduleSpec {
        ScheduleSpec::cyclic_cosine(0.2, 600, 6).unwrap()
    }

    #[test]
    fn cyclic_key_points() {
        let s = cyc();
        assert_eq!(s.lr_at::<f64>(1).unwrap(), 0.2);
        assert_eq!(s.lr_at::<f64>(51).unwrap(), 0.1);
        assert_eq!(s.lr_at::<f64>(101).unwrap(), 0.2);
        assert_eq!(s.lr_at::<f64>(501).unwrap(), 0.2);
    }

    #[test]
    fn cyclic_end_of_cycle_value() {
        // 0.1 * (cos(0.99 pi) + 1) = 0.1 * (1 - cos(0.01 pi)) = 0.2 * sin^2(0.005 pi)
        let expected = 0.2 * (0.005 * std::f64::consts::PI).sin().powi(2);
        let got: f64 = cyc().lr_at(100).unwrap();
        assert!((got - expected).abs() < 1e-15, "{got} vs {expected}");
        assert!((got - 4.934_5e-5).abs() < 1e-8);
    }

    #[test]
    fn step_drops() {
        let s = ScheduleSpec::step(0.1, 300).unwrap();
        let lr = |t| s.lr_at::<f64>(t).unwrap();
        assert_eq!(lr(1), 0.1);
        assert_eq!(lr(150), 0.1);
        assert!((lr(151) - 0.01).abs() < 1e-15);
        assert!((lr(225) - 0.01).abs() < 1e-15);
        assert!((lr(226) - 0.001).abs() < 1e-15);
        assert!((lr(300) - 0.001).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_iteration() {
        let s = cyc();
        assert!(s.lr_at::<f64>(0).is_err());
        assert!(s.lr_at::<f64>(601).is_err());
        assert!(s.is_cycle_end(0).is_err());
    }

    #[test]
    fn cycle_end_examples() {
        let s = cyc();
        assert!(s.is_cycle_end(100).unwrap());
        assert!(!s.is_cycle_end(99).unwrap());
        let uneven = ScheduleSpec::cyclic_cosine(0.2, 601, 6).unwrap();
        assert_eq!(uneven.cycle_length(), Some(101));
        assert!(uneven.is_cycle_end(601).unwrap());
        assert!(uneven.is_cycle_end(505).unwrap());
        assert!(!uneven.is_cycle_end(600).unwrap());
    }

    #[test]
    fn cycle_end_on_step_is_error() {
        let s = ScheduleSpec::step(0.1, 10).unwrap();
        assert!(matches!(s.is_cycle_end(3), Err(Error::Input(_))));
    }

    #[test]
    fn spec_validation() {
        assert!(ScheduleSpec::cyclic_cosine(0.1, 5, 6).is_err());
        assert!(ScheduleSpec::cyclic_cosine(0.0, 5, 1).is_err());
        let bad = ScheduleKind::Step {
            drops: vec![(0.75, 0.1), (0.5, 0.1)],
        };
        assert!(ScheduleSpec::new(bad, 0.1, 10).is_err());
    }

    #[test]
    fn constant_schedule() {
        let s = ScheduleSpec::new(ScheduleKind::Constant, 0.05, 7).unwrap();
        assert!((1..=7).all(|t| s.lr_at::<f64>(t).unwrap() == 0.05));
    }

    #[test]
    fn f32_schedule() {
        let lr: f32 = cyc().lr_at(51).unwrap();
        assert!((lr - 0.1).abs() < 1e-7);
    }
}
