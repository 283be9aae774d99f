#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Source-free domain adaptation by attracting and dispersing predictions.
//!
//! A small laboratory around one objective: for every target sample, pull
//! its prediction toward the stored predictions of its K nearest feature
//! neighbors (kept in a memory bank) and push it away from the rest of the
//! mini-batch, with the push decayed over training. Next to it sit the
//! likelihood form the loss is derived from and its Jensen bound, the
//! competing discriminability/diversity objectives (MI, BNM, NC, InfoNCE),
//! SND-based unsupervised selection of the decay exponent, and a rotated
//! twinning-moons benchmark.
//!
//! The numerical core is generic over [`Real`] (`f32`/`f64`); the aliases
//! below fix it at `f64`, which the gradient and bound checks need.
//!
//! ```
//! use sfda_core::{make_twin_moons, Dataset, Model, ModelDims, MoonsConfig};
//!
//! let src: Dataset = make_twin_moons(&MoonsConfig { n_per_class: 50, ..Default::default() }).unwrap();
//! let model = Model::init(ModelDims::new(2, 15, 15, 2).unwrap(), 0).unwrap();
//! let probs = model.predict(&src.x).unwrap();
//! assert_eq!(probs.shape(), (100, 2));
//! ```

pub mod bank;
pub mod datasets;
pub mod error;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod objectives;
pub mod scalar;
pub mod train;

pub use bank::{BankMode, NeighborSet, Neighbors};
pub use datasets::{
    load_csv_dataset, make_open_set_variant, make_twin_moons, rotate_dataset, save_csv_dataset,
    Domain, MoonsConfig, UNLABELED,
};
pub use error::{Error, Result};
pub use metrics::{
    agreement_ratios, classification_report, decision_grid, metrics_report, open_set_eval,
    open_set_scores, snd_score,
    AgreementRatios, DecisionGrid, EvalReport, MetricsReport, OdaScores,
};
pub use model::{Checkpoint, ModelDims};
pub use objectives::LossResult;
pub use scalar::Real;
pub use train::{
    adapt, adapt_with_bank, pretrain_source, sweep_beta, sweep_to_csv, AdaptConfig, BankSpec,
    Objective, PretrainConfig, RunHistory, SweepRow, SweepRun,
};

pub type Matrix = numerics::DenseMatrix<f64>;
pub type Model = model::MlpModel<f64>;
pub type Gradients = model::Gradients<f64>;
pub type ForwardCache = model::ForwardCache<f64>;
pub type MemoryBank = bank::MemoryBank<f64>;
pub type Dataset = datasets::Dataset<f64>;
