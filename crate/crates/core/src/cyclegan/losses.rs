use ctaug_autograd::{Scalar, Var};
use serde::{Deserialize, Serialize};

use super::CycleGanError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleGanLossWeights {
    pub lambda_cycle: f64,
    pub lambda_identity: f64,
}

impl Default for CycleGanLossWeights {
    fn default() -> Self {
        Self {
            lambda_cycle: 10.0,
            lambda_identity: 5.0,
        }
    }
}

impl CycleGanLossWeights {
    pub fn validate(&self) -> Result<(), CycleGanError> {
        let ok = |v: f64| v >= 0.0 && v.is_finite();
        if ok(self.lambda_cycle) && ok(self.lambda_identity) {
            Ok(())
        } else {
            Err(CycleGanError::Spec(format!("loss weights must be non-negative: {self:?}")))
        }
    }
}

/// Least-squares objective `mean((d_out - t)^2)` with `t` 1 for real and 0
/// for fake.
pub fn adversarial_loss<'g, T: Scalar>(d_out: Var<'g, T>, target_real: bool) -> Var<'g, T> {
    d_out.mse_to(if target_real { T::one() } else { T::zero() })
}

fn l1_checked<'g, T: Scalar>(a: Var<'g, T>, b: Var<'g, T>) -> Result<Var<'g, T>, CycleGanError> {
    if a.shape() != b.shape() {
        return Err(CycleGanError::Shape(format!(
            "L1 operands differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(a.l1(b))
}

/// Mean absolute reconstruction error.
pub fn cycle_loss<'g, T: Scalar>(x: Var<'g, T>, x_reconstructed: Var<'g, T>) -> Result<Var<'g, T>, CycleGanError> {
    l1_checked(x, x_reconstructed)
}

/// Mean absolute change a generator makes to an image of its own output
/// domain.
pub fn identity_loss<'g, T: Scalar>(x: Var<'g, T>, same_domain_out: Var<'g, T>) -> Result<Var<'g, T>, CycleGanError> {
    l1_checked(x, same_domain_out)
}
