use num_traits::{Float, FromPrimitive};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::EvalError;

/// Mean and symmetric Student-t interval over repeated runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult<T> {
    pub mean: T,
    pub half_width: T,
    pub n_runs: usize,
    pub values: Vec<T>,
}

/// Two-sided t-quantile `t_{(1+confidence)/2, dof}`.
pub fn t_quantile(confidence: f64, dof: usize) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, dof as f64).expect("positive degrees of freedom");
    dist.inverse_cdf((1.0 + confidence) / 2.0)
}

/// `half_width = t * s / sqrt(n)` with `s` the sample standard deviation; a
/// single run has half-width zero.
pub fn aggregate_runs<T: Float + FromPrimitive>(
    values: &[T],
    confidence: f64,
) -> Result<AggregateResult<T>, EvalError> {
    if values.is_empty() {
        return Err(EvalError::Empty);
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(EvalError::Confidence(confidence));
    }
    let n = values.len();
    let nt = T::from_usize(n).unwrap();
    // Accumulating offsets from the first value keeps identical runs exact.
    let first = values[0];
    let mean = first + values.iter().fold(T::zero(), |a, &b| a + (b - first)) / nt;
    let half_width = if n < 2 {
        T::zero()
    } else {
        let ss = values.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean));
        let s = (ss / T::from_usize(n - 1).unwrap()).sqrt();
        T::from_f64(t_quantile(confidence, n - 1)).unwrap() * s / nt.sqrt()
    };
    Ok(AggregateResult {
        mean,
        half_width,
        n_runs: n,
        values: values.to_vec(),
    })
}
