//! Walking objectives scored from a body trace: speed and stability.
//!
//! Speed is net displacement over elapsed time, in metres per minute.
//! Stability penalizes motion spread: the population standard deviation of
//! each acceleration and orientation axis, with the acceleration term scaled
//! down so both live on comparable scales. Both objectives are maximized;
//! stability is never positive and 0 means perfectly smooth.

use thiserror::Error;

use crate::sim::Trace;

/// Errors raised when scoring a trace.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitnessError {
    #[error("trace has {count} samples; at least 2 are needed")]
    TooFewSamples { count: usize },
    #[error("trace spans zero duration")]
    ZeroDuration,
}

/// Weighting of the stability terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityWeights {
    /// Factor on the acceleration spread; orientation spread has weight 1.
    pub alpha: f64,
}

impl Default for StabilityWeights {
    fn default() -> Self {
        StabilityWeights { alpha: 0.02 }
    }
}

/// Population standard deviation: sqrt(mean(x^2) - mean(x)^2), clipped at 0.
pub fn population_std(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let mean_sq = values.iter().map(|v| v * v).sum::<f64>() / n;
    (mean_sq - mean * mean).max(0.0).sqrt()
}

/// Walking speed over the trace, metres per minute.
pub fn speed_fitness(trace: &Trace) -> Result<f64, FitnessError> {
    let samples = &trace.samples;
    if samples.len() < 2 {
        return Err(FitnessError::TooFewSamples {
            count: samples.len(),
        });
    }
    let first = &samples[0];
    let last = &samples[samples.len() - 1];
    let elapsed = last.t - first.t;
    if elapsed <= 0.0 {
        return Err(FitnessError::ZeroDuration);
    }
    Ok(60.0 * (last.body_position - first.body_position).norm() / elapsed)
}

/// Stability score: negated weighted sum of per-axis motion spread.
///
/// Sums the population standard deviation of the three linear acceleration
/// axes (scaled by `alpha`) and of roll, pitch and yaw.
pub fn stability_fitness(trace: &Trace, weights: &StabilityWeights) -> Result<f64, FitnessError> {
    let samples = &trace.samples;
    if samples.is_empty() {
        return Err(FitnessError::TooFewSamples { count: 0 });
    }
    let mut acc_spread = 0.0;
    let mut ang_spread = 0.0;
    for axis in 0..3 {
        let acc: Vec<f64> = samples.iter().map(|s| s.linear_acceleration[axis]).collect();
        let ang: Vec<f64> = samples.iter().map(|s| s.orientation[axis]).collect();
        acc_spread += population_std(&acc);
        ang_spread += population_std(&ang);
    }
    Ok(-(weights.alpha * acc_spread + ang_spread))
}
