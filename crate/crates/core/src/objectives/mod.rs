//! Training objectives with analytic gradients.
//!
//! Every prediction-space objective returns `∂L/∂P`; pull it through the
//! softmax with [`crate::numerics::softmax_backward`] or hand it straight
//! to [`crate::model::MlpModel::backward`]. Batch losses are means over
//! anchors.

mod aad;
mod bound;
mod family;
mod schedule;
mod xent;

pub use aad::{aad_loss, aad_loss_terms};
pub use bound::{exact_aad_nll, jensen_upper_bound, minibatch_bound_estimate};
pub use family::{bnm_loss, infonce_loss, mi_loss, nc_loss, BnmVariant, NcMode};
pub use schedule::{lambda_schedule, ScheduleParams};
pub use xent::{cross_entropy_loss, LOG_CLAMP};

use crate::numerics::DenseMatrix;

/// Loss value and its gradient with respect to the differentiated argument
/// (the prediction matrix, or the anchor features for InfoNCE).
#[derive(Clone, Debug, PartialEq)]
pub struct LossResult<T> {
    pub value: T,
    pub grad: DenseMatrix<T>,
}
