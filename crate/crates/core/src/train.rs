//! Source pretraining, the adaptation loop, and the β sweep.
//!
//! [`adapt`] takes no source data: once [`pretrain_source`] returns, only
//! the model and the unlabeled target set are used. Target labels, when
//! present, feed the per-epoch reports and never the gradients.

use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bank::{BankMode, MemoryBank, NeighborSet};
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{agreement_ratios, evaluate_predictions, snd_score, EvalReport, SND_TAU};
use crate::model::MlpModel;
use crate::numerics::DenseMatrix;
use crate::objectives::{
    aad_loss_terms, bnm_loss, cross_entropy_loss, mi_loss, nc_loss, BnmVariant, LossResult, NcMode,
    ScheduleParams,
};
use crate::scalar::Real;

/// What the adaptation loop minimizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// Attraction plus decayed dispersion.
    Aad,
    /// Attraction only (λ ≡ 0).
    AttractOnly,
    /// Decayed dispersion only.
    DisperseOnly,
    /// Both terms, λ ≡ 1.
    AadNoDecay,
    Mi,
    /// Nuclear-norm variant.
    Bnm,
    /// Unit weights, identity link, uniform-prior KL.
    Nc,
}

impl Objective {
    pub const ALL: [Objective; 7] = [
        Objective::Aad,
        Objective::AttractOnly,
        Objective::DisperseOnly,
        Objective::AadNoDecay,
        Objective::Mi,
        Objective::Bnm,
        Objective::Nc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Objective::Aad => "aad",
            Objective::AttractOnly => "attract-only",
            Objective::DisperseOnly => "disperse-only",
            Objective::AadNoDecay => "aad-no-decay",
            Objective::Mi => "mi",
            Objective::Bnm => "bnm",
            Objective::Nc => "nc",
        }
    }

    fn needs_neighbors(self) -> bool {
        !matches!(self, Objective::DisperseOnly | Objective::Mi | Objective::Bnm)
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Objective::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown objective {s:?}")))
    }
}

/// Bank sizing for adaptation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum BankSpec {
    /// One slot per target sample.
    Full,
    /// Most recent `capacity` rows only.
    Ring { capacity: usize },
}

impl FromStr for BankSpec {
    type Err = Error;

    /// `full` or `ring:<capacity>`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "full" => Ok(BankSpec::Full),
            Some(("ring", cap)) => cap
                .parse()
                .map(|capacity| BankSpec::Ring { capacity })
                .map_err(|_| Error::Config(format!("bad ring capacity {cap:?}"))),
            _ => Err(Error::Config(format!("bank must be `full` or `ring:<n>`, got {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptConfig {
    /// Close-neighbor count `N_𝒞`.
    pub k: usize,
    pub beta: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub bank: BankSpec,
    pub seed: u64,
    pub objective: Objective,
    /// SND temperature for the per-epoch report.
    pub snd_tau: f64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            k: 3,
            beta: 2.0,
            batch_size: 64,
            epochs: 100,
            lr: 0.002,
            momentum: 0.9,
            bank: BankSpec::Full,
            seed: 0,
            objective: Objective::Aad,
            snd_tau: SND_TAU,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config(format!("batch size must be ≥ 2, got {}", self.batch_size)));
        }
        if self.k == 0 {
            return Err(Error::Config("K must be ≥ 1".into()));
        }
        // |𝒞| = K must stay below |ℬ| = batch_size − 1
        if self.k + 1 >= self.batch_size {
            return Err(Error::Config(format!(
                "K = {} must be < batch_size − 1 = {}",
                self.k,
                self.batch_size - 1
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be ≥ 1".into()));
        }
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "need lr > 0 and momentum in [0, 1), got {} and {}",
                self.lr, self.momentum
            )));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::Config(format!("β must be ≥ 0, got {}", self.beta)));
        }
        if !(self.snd_tau > 0.0) {
            return Err(Error::Config("SND temperature must be > 0".into()));
        }
        if let BankSpec::Ring { capacity } = self.bank {
            if capacity <= self.k {
                return Err(Error::Config(format!(
                    "ring capacity {capacity} must exceed K = {}",
                    self.k
                )));
            }
        }
        Ok(())
    }

    /// Effective decay exponent for the chosen objective.
    pub fn effective_beta(&self) -> f64 {
        match self.objective {
            Objective::AadNoDecay => 0.0,
            _ => self.beta,
        }
    }
}

/// Per-iteration and per-epoch traces of an adaptation run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunHistory {
    pub loss: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Target accuracy after each epoch; `None` when the target is unlabeled.
    pub acc: Vec<Option<f64>>,
    pub snd: Vec<f64>,
    pub ratio_same: Vec<f64>,
    pub ratio_correct: Vec<Option<f64>>,
    pub iterations_per_epoch: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
}

impl RunHistory {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.acc.last().copied().flatten()
    }

    pub fn final_snd(&self) -> Option<f64> {
        self.snd.last().copied()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 0.01,
            momentum: 0.9,
            batch_size: 64,
            seed: 0,
        }
    }
}

/// Mini-batch index lists for one epoch; the last partial batch is dropped.
fn epoch_batches(rng: &mut ChaCha8Rng, n: usize, batch_size: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
        .chunks_exact(batch_size)
        .map(<[usize]>::to_vec)
        .collect()
}

/// Cross-entropy SGD on labeled source data. Returns the final accuracy on
/// the same data from a fresh forward pass.
pub fn pretrain_source<T: Real>(
    model: &mut MlpModel<T>,
    source: &Dataset<T>,
    cfg: &PretrainConfig,
) -> Result<EvalReport> {
    let labels = source.class_labels()?;
    let dims = model.dims();
    if source.dim() != dims.d_in {
        return Err(Error::Shape(format!(
            "source has {} features, model expects {}",
            source.dim(),
            dims.d_in
        )));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be ≥ 1".into()));
    }
    // small sets train in a single batch
    let batch_size = cfg.batch_size.min(source.len());
    let lr = T::lit(cfg.lr);
    let momentum = T::lit(cfg.momentum);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.epochs {
        for batch in epoch_batches(&mut rng, source.len(), batch_size) {
            let x = source.x.select_rows(&batch)?;
            let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let cache = model.forward(&x)?;
            let loss = cross_entropy_loss(&cache.predictions, &y)?;
            let grads = model.backward(&cache, &loss.grad)?;
            model.sgd_step(&grads, lr, momentum)?;
        }
    }
    let preds = model.predict(&source.x)?;
    evaluate_predictions(&preds, &source.labels, dims.classes)?
        .ok_or_else(|| Error::Label("source set has no labels".into()))
}

/// Output of [`adapt_with_bank`].
#[derive(Clone, Debug)]
pub struct AdaptOutcome<T> {
    pub history: RunHistory,
    pub bank: MemoryBank<T>,
}

/// Runs attraction/dispersion adaptation (or one of the comparison
/// objectives) on the unlabeled target set.
pub fn adapt<T: Real>(model: &mut MlpModel<T>, target: &Dataset<T>, cfg: &AdaptConfig) -> Result<RunHistory> {
    adapt_with_bank(model, target, cfg).map(|o| o.history)
}

/// [`adapt`], also returning the final memory bank.
///
/// Per iteration: forward the batch, write its features and predictions to
/// the bank, retrieve each sample's K nearest bank neighbors (itself
/// excluded), take a gradient step on the objective with
/// `λ = (1 + 10·iter/max_iter)^(−β)`.
pub fn adapt_with_bank<T: Real>(
    model: &mut MlpModel<T>,
    target: &Dataset<T>,
    cfg: &AdaptConfig,
) -> Result<AdaptOutcome<T>> {
    cfg.validate()?;
    let dims = model.dims();
    if target.dim() != dims.d_in {
        return Err(Error::Shape(format!(
            "target has {} features, model expects {}",
            target.dim(),
            dims.d_in
        )));
    }
    let n = target.len();
    if n < cfg.batch_size {
        return Err(Error::Config(format!(
            "target has {n} samples, fewer than one batch of {}",
            cfg.batch_size
        )));
    }
    let iters_per_epoch = n / cfg.batch_size;
    let schedule = ScheduleParams::new(cfg.effective_beta(), cfg.epochs * iters_per_epoch)?;
    let lr = T::lit(cfg.lr);
    let momentum = T::lit(cfg.momentum);
    let tau = T::lit(cfg.snd_tau);
    let labels = target.has_labels().then_some(target.labels.as_slice());

    // Seed every slot with one full forward pass so the first retrieval
    // already has neighbors.
    let all_ids: Vec<usize> = (0..n).collect();
    let initial = model.forward(&target.x)?;
    let mut bank = match cfg.bank {
        BankSpec::Full => MemoryBank::new(BankMode::Full, n, dims.h_feat, dims.classes)?,
        BankSpec::Ring { capacity } => MemoryBank::new(BankMode::Ring, capacity, dims.h_feat, dims.classes)?,
    };
    bank.update(&all_ids, &initial.features, &initial.predictions)?;

    let mut history = RunHistory {
        iterations_per_epoch: iters_per_epoch,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut iter = 0usize;
    for _ in 0..cfg.epochs {
        for batch in epoch_batches(&mut rng, n, cfg.batch_size) {
            let x = target.x.select_rows(&batch)?;
            let cache = model.forward(&x)?;
            bank.update(&batch, &cache.features, &cache.predictions)?;

            let lambda: T = schedule.lambda(iter)?;
            let neighbor_preds = if cfg.objective.needs_neighbors() {
                let found = bank.knn_batch(&cache.features, cfg.k, &batch)?;
                found
                    .into_iter()
                    .enumerate()
                    .map(|(pos, nn)| {
                        NeighborSet::for_batch(&batch, pos, nn.ids)?;
                        Ok(nn.predictions)
                    })
                    .collect::<Result<Vec<_>>>()?
            } else {
                Vec::new()
            };
            let loss = objective_loss(cfg.objective, &cache.predictions, &neighbor_preds, lambda)?;
            if !loss.value.is_finite() {
                return Err(Error::Divergence(format!("loss became {} at iteration {iter}", loss.value)));
            }
            let grads = model.backward(&cache, &loss.grad)?;
            model.sgd_step(&grads, lr, momentum)?;

            history.loss.push(loss.value.as_f64());
            history.lambda.push(lambda.as_f64());
            iter += 1;
        }

        let preds = model.predict(&target.x)?;
        let acc = if labels.is_some() {
            evaluate_predictions(&preds, &target.labels, dims.classes)?.map(|r| r.accuracy)
        } else {
            None
        };
        history.acc.push(acc);
        history.snd.push(snd_score(&preds, tau)?.as_f64());
        let ratios = agreement_ratios(&bank, labels, cfg.k)?;
        history.ratio_same.push(ratios.same_pred);
        history.ratio_correct.push(ratios.correct_pred);
    }
    Ok(AdaptOutcome { history, bank })
}

fn objective_loss<T: Real>(
    objective: Objective,
    preds: &DenseMatrix<T>,
    neighbor_preds: &[DenseMatrix<T>],
    lambda: T,
) -> Result<LossResult<T>> {
    match objective {
        Objective::Aad | Objective::AadNoDecay => aad_loss_terms(preds, neighbor_preds, T::one(), lambda),
        Objective::AttractOnly => aad_loss_terms(preds, neighbor_preds, T::one(), T::zero()),
        Objective::DisperseOnly => {
            let empty = vec![DenseMatrix::zeros(0, preds.cols()); preds.rows()];
            aad_loss_terms(preds, &empty, T::zero(), lambda)
        }
        Objective::Mi => mi_loss(preds),
        Objective::Bnm => bnm_loss(preds, BnmVariant::Nuclear),
        Objective::Nc => {
            let weights: Vec<Vec<T>> = neighbor_preds.iter().map(|nb| vec![T::one(); nb.rows()]).collect();
            nc_loss(preds, neighbor_preds, &weights, NcMode::Identity)
        }
    }
}

/// One `(β, seed)` cell of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub beta: f64,
    pub seed: u64,
    pub snd: f64,
    pub accuracy: Option<f64>,
}

/// Per-β summary: SND and accuracy averaged over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub beta: f64,
    pub snd: f64,
    pub accuracy: Option<f64>,
    /// Set on the row with the largest mean SND (first on ties).
    pub selected: bool,
    pub runs: Vec<SweepRun>,
}

/// Adapts a copy of `checkpoint` for every β and seed and tabulates the
/// end-of-training SND next to the (label-based) target accuracy.
pub fn sweep_beta<T: Real>(
    checkpoint: &MlpModel<T>,
    target: &Dataset<T>,
    betas: &[f64],
    base: &AdaptConfig,
    seeds: &[u64],
) -> Result<Vec<SweepRow>> {
    if betas.is_empty() {
        return Err(Error::Config("need at least one β".into()));
    }
    if seeds.is_empty() {
        return Err(Error::Config("need at least one seed".into()));
    }
    let mut rows = Vec::with_capacity(betas.len());
    for &beta in betas {
        let mut runs = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let cfg = AdaptConfig { beta, seed, ..*base };
            let mut model = checkpoint.clone();
            let history = adapt(&mut model, target, &cfg)?;
            runs.push(SweepRun {
                beta,
                seed,
                snd: history.final_snd().unwrap_or(f64::NAN),
                accuracy: history.final_accuracy(),
            });
        }
        let count = runs.len() as f64;
        let snd = runs.iter().map(|r| r.snd).sum::<f64>() / count;
        let accuracy = runs
            .iter()
            .map(|r| r.accuracy)
            .sum::<Option<f64>>()
            .map(|s| s / count);
        rows.push(SweepRow {
            beta,
            snd,
            accuracy,
            selected: false,
            runs,
        });
    }
    let best = rows
        .iter()
        .enumerate()
        .fold(0, |best, (i, r)| if r.snd > rows[best].snd { i } else { best });
    rows[best].selected = true;
    Ok(rows)
}

/// CSV table: one line per `(β, seed)` run, then one `mean` line per β.
pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let fmt_acc = |a: Option<f64>| a.map_or(String::new(), |v| format!("{v:.6}"));
    let mut out = String::from("beta,seed,snd,accuracy,selected\n");
    for row in rows {
        for run in &row.runs {
            out.push_str(&format!(
                "{},{},{:.6},{},\n",
                run.beta,
                run.seed,
                run.snd,
                fmt_acc(run.accuracy)
            ));
        }
    }
    for row in rows {
        out.push_str(&format!(
            "{},mean,{:.6},{},{}\n",
            row.beta,
            row.snd,
            fmt_acc(row.accuracy),
            u8::from(row.selected)
        ));
    }
    out
}
