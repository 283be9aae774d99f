//! Three-linear-layer toy network: a feature extractor
//! `x → ReLU(x W1 + b1) W2 + b2 = z` followed by a linear classifier
//! `z → softmax(z Wc + bc) = p`, with hand-written reverse mode and SGD
//! with momentum.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{softmax_backward, softmax_rows, DenseMatrix};
use crate::scalar::Real;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Layer widths.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub d_in: usize,
    pub h1: usize,
    pub h_feat: usize,
    pub classes: usize,
}

impl ModelDims {
    pub fn new(d_in: usize, h1: usize, h_feat: usize, classes: usize) -> Result<Self> {
        let dims = Self {
            d_in,
            h1,
            h_feat,
            classes,
        };
        if [d_in, h1, h_feat, classes].contains(&0) {
            return Err(Error::Config(format!("all layer widths must be ≥ 1: {dims:?}")));
        }
        Ok(dims)
    }

    pub fn param_count(&self) -> usize {
        self.d_in * self.h1 + self.h1 + self.h1 * self.h_feat + self.h_feat
            + self.h_feat * self.classes
            + self.classes
    }
}

/// One tensor per parameter; used both for gradients and momentum buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<T> {
    pub w1: DenseMatrix<T>,
    pub b1: Vec<T>,
    pub w2: DenseMatrix<T>,
    pub b2: Vec<T>,
    pub wc: DenseMatrix<T>,
    pub bc: Vec<T>,
}

pub type Gradients<T> = ParamSet<T>;

impl<T: Real> ParamSet<T> {
    pub fn zeros(dims: &ModelDims) -> Self {
        Self {
            w1: DenseMatrix::zeros(dims.d_in, dims.h1),
            b1: vec![T::zero(); dims.h1],
            w2: DenseMatrix::zeros(dims.h1, dims.h_feat),
            b2: vec![T::zero(); dims.h_feat],
            wc: DenseMatrix::zeros(dims.h_feat, dims.classes),
            bc: vec![T::zero(); dims.classes],
        }
    }

    fn slices(&self) -> [&[T]; 6] {
        [
            self.w1.data(),
            &self.b1,
            self.w2.data(),
            &self.b2,
            self.wc.data(),
            &self.bc,
        ]
    }

    fn slices_mut(&mut self) -> [&mut [T]; 6] {
        [
            self.w1.data_mut(),
            &mut self.b1,
            self.w2.data_mut(),
            &mut self.b2,
            self.wc.data_mut(),
            &mut self.bc,
        ]
    }

    /// Flattens in the order W1, b1, W2, b2, Wc, bc (matrices row-major).
    pub fn to_flat(&self) -> Vec<T> {
        self.slices().concat()
    }

    pub fn len(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn set_flat(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.len() {
            return Err(Error::Shape(format!(
                "{} flat parameters for a model with {}",
                flat.len(),
                self.len()
            )));
        }
        let mut offset = 0;
        for s in self.slices_mut() {
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            d_in: self.w1.rows(),
            h1: self.w1.cols(),
            h_feat: self.w2.cols(),
            classes: self.wc.cols(),
        }
    }
}

/// Everything [`MlpModel::backward`] needs from a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    pub inputs: DenseMatrix<T>,
    pub pre_hidden: DenseMatrix<T>,
    pub hidden: DenseMatrix<T>,
    /// bs × h_feat
    pub features: DenseMatrix<T>,
    pub logits: DenseMatrix<T>,
    /// bs × C, rows on the simplex
    pub predictions: DenseMatrix<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel<T> {
    seed: u64,
    params: ParamSet<T>,
    velocity: ParamSet<T>,
}

impl<T: Real> MlpModel<T> {
    /// Glorot-uniform weights, zero biases, zero momentum.
    pub fn init(dims: ModelDims, seed: u64) -> Result<Self> {
        let dims = ModelDims::new(dims.d_in, dims.h1, dims.h_feat, dims.classes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut glorot = |fan_in: usize, fan_out: usize| {
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            DenseMatrix::from_fn(fan_in, fan_out, |_, _| T::lit(rng.random_range(-a..a)))
        };
        let w1 = glorot(dims.d_in, dims.h1);
        let w2 = glorot(dims.h1, dims.h_feat);
        let wc = glorot(dims.h_feat, dims.classes);
        let params = ParamSet {
            w1,
            b1: vec![T::zero(); dims.h1],
            w2,
            b2: vec![T::zero(); dims.h_feat],
            wc,
            bc: vec![T::zero(); dims.classes],
        };
        Ok(Self {
            seed,
            velocity: ParamSet::zeros(&dims),
            params,
        })
    }

    /// Wraps explicit parameters; momentum starts at zero.
    pub fn from_params(params: ParamSet<T>, seed: u64) -> Result<Self> {
        let d = params.dims();
        ModelDims::new(d.d_in, d.h1, d.h_feat, d.classes)?;
        if params.w2.rows() != d.h1
            || params.wc.rows() != d.h_feat
            || params.b1.len() != d.h1
            || params.b2.len() != d.h_feat
            || params.bc.len() != d.classes
        {
            return Err(Error::Shape("inconsistent parameter shapes".into()));
        }
        if !params.is_finite() {
            return Err(Error::InvalidInput("non-finite parameters".into()));
        }
        Ok(Self {
            seed,
            velocity: ParamSet::zeros(&d),
            params,
        })
    }

    pub fn dims(&self) -> ModelDims {
        self.params.dims()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn velocity(&self) -> &ParamSet<T> {
        &self.velocity
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn forward(&self, x: &DenseMatrix<T>) -> Result<ForwardCache<T>> {
        let dims = self.dims();
        if x.cols() != dims.d_in {
            return Err(Error::Shape(format!(
                "input has {} columns, model expects {}",
                x.cols(),
                dims.d_in
            )));
        }
        let p = &self.params;
        let mut pre_hidden = x.matmul(&p.w1)?;
        pre_hidden.add_row_vector(&p.b1)?;
        // ReLU'(0) is taken as 0 in backward.
        let hidden = pre_hidden.map(|v| if v > T::zero() { v } else { T::zero() });
        let mut features = hidden.matmul(&p.w2)?;
        features.add_row_vector(&p.b2)?;
        let logits = self.classify_features(&features)?;
        let predictions = softmax_rows(&logits)?;
        Ok(ForwardCache {
            inputs: x.clone(),
            pre_hidden,
            hidden,
            features,
            logits,
            predictions,
        })
    }

    /// Applies only the classifier head to precomputed features.
    pub fn classify_features(&self, features: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        let mut logits = features.matmul(&self.params.wc)?;
        logits.add_row_vector(&self.params.bc)?;
        Ok(logits)
    }

    pub fn predict(&self, x: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        Ok(self.forward(x)?.predictions)
    }

    /// Gradients of a scalar `L` given `∂L/∂P`.
    pub fn backward(&self, cache: &ForwardCache<T>, d_pred: &DenseMatrix<T>) -> Result<Gradients<T>> {
        self.backward_with_features(cache, d_pred, None)
    }

    /// Like [`backward`](Self::backward), with an optional extra gradient
    /// arriving directly at the features `Z` (for feature-space objectives).
    pub fn backward_with_features(
        &self,
        cache: &ForwardCache<T>,
        d_pred: &DenseMatrix<T>,
        d_features: Option<&DenseMatrix<T>>,
    ) -> Result<Gradients<T>> {
        self.check_cache(cache)?;
        if d_pred.shape() != cache.predictions.shape() {
            return Err(Error::Shape(format!(
                "∂L/∂P is {:?}, predictions are {:?}",
                d_pred.shape(),
                cache.predictions.shape()
            )));
        }
        if !d_pred.is_finite() {
            return Err(Error::InvalidInput("non-finite ∂L/∂P".into()));
        }
        let p = &self.params;
        let d_logits = softmax_backward(&cache.predictions, d_pred)?;
        let wc = cache.features.t_matmul(&d_logits)?;
        let bc = d_logits.column_sums();
        let mut d_feat = d_logits.matmul_t(&p.wc)?;
        if let Some(extra) = d_features {
            if extra.shape() != d_feat.shape() {
                return Err(Error::Shape(format!(
                    "∂L/∂Z is {:?}, features are {:?}",
                    extra.shape(),
                    d_feat.shape()
                )));
            }
            for (a, &b) in d_feat.data_mut().iter_mut().zip(extra.data()) {
                *a += b;
            }
        }
        let w2 = cache.hidden.t_matmul(&d_feat)?;
        let b2 = d_feat.column_sums();
        let mut d_pre = d_feat.matmul_t(&p.w2)?;
        for (g, &z) in d_pre.data_mut().iter_mut().zip(cache.pre_hidden.data()) {
            if z <= T::zero() {
                *g = T::zero();
            }
        }
        let w1 = cache.inputs.t_matmul(&d_pre)?;
        let b1 = d_pre.column_sums();
        Ok(ParamSet {
            w1,
            b1,
            w2,
            b2,
            wc,
            bc,
        })
    }

    fn check_cache(&self, cache: &ForwardCache<T>) -> Result<()> {
        let d = self.dims();
        let bs = cache.inputs.rows();
        let ok = cache.inputs.cols() == d.d_in
            && cache.pre_hidden.shape() == (bs, d.h1)
            && cache.hidden.shape() == (bs, d.h1)
            && cache.features.shape() == (bs, d.h_feat)
            && cache.logits.shape() == (bs, d.classes)
            && cache.predictions.shape() == (bs, d.classes);
        if ok {
            Ok(())
        } else {
            Err(Error::Cache(format!(
                "cache shapes do not match model dims {d:?}"
            )))
        }
    }

    /// `v ← μ v + g; θ ← θ − lr v`.
    pub fn sgd_step(&mut self, grads: &Gradients<T>, lr: T, momentum: T) -> Result<()> {
        if !(lr > T::zero()) {
            return Err(Error::Config(format!("learning rate must be > 0, got {lr}")));
        }
        if !(momentum >= T::zero() && momentum < T::one()) {
            return Err(Error::Config(format!("momentum must be in [0, 1), got {momentum}")));
        }
        if grads.dims() != self.dims() || grads.len() != self.params.len() {
            return Err(Error::Shape("gradient shapes do not match model".into()));
        }
        if !grads.is_finite() {
            return Err(Error::Divergence("non-finite gradient".into()));
        }
        let g_all = grads.slices();
        for ((theta, vel), g) in self
            .params
            .slices_mut()
            .into_iter()
            .zip(self.velocity.slices_mut())
            .zip(g_all)
        {
            for ((t, v), &gk) in theta.iter_mut().zip(vel.iter_mut()).zip(g) {
                *v = momentum * *v + gk;
                *t -= lr * *v;
            }
        }
        if !self.params.is_finite() {
            return Err(Error::Divergence("parameters became non-finite".into()));
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let p = &self.params;
        let f = |s: &[T]| s.iter().map(|v| v.as_f64()).collect::<Vec<f64>>();
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            dims: self.dims(),
            seed: self.seed,
            params: CheckpointParams {
                w1: f(p.w1.data()),
                b1: f(&p.b1),
                w2: f(p.w2.data()),
                b2: f(&p.b2),
                wc: f(p.wc.data()),
                bc: f(&p.bc),
            },
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported checkpoint format version {}",
                ck.format_version
            )));
        }
        let d = ModelDims::new(ck.dims.d_in, ck.dims.h1, ck.dims.h_feat, ck.dims.classes)?;
        let m = |rows, cols, v: &[f64]| {
            DenseMatrix::new(rows, cols, v.iter().map(|&x| T::lit(x)).collect())
        };
        let vec_of = |len: usize, v: &[f64]| -> Result<Vec<T>> {
            if v.len() != len {
                return Err(Error::Shape(format!("bias of length {} (expected {len})", v.len())));
            }
            Ok(v.iter().map(|&x| T::lit(x)).collect())
        };
        let p = &ck.params;
        let params = ParamSet {
            w1: m(d.d_in, d.h1, &p.w1)?,
            b1: vec_of(d.h1, &p.b1)?,
            w2: m(d.h1, d.h_feat, &p.w2)?,
            b2: vec_of(d.h_feat, &p.b2)?,
            wc: m(d.h_feat, d.classes, &p.wc)?,
            bc: vec_of(d.classes, &p.bc)?,
        };
        Self::from_params(params, ck.seed)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_checkpoint().to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_checkpoint(&serde_json::from_str(&text)?)
    }
}

/// On-disk model: dims, seed and flat row-major parameter arrays.
/// Momentum buffers are not stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub dims: ModelDims,
    pub seed: u64,
    pub params: CheckpointParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointParams {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub wc: Vec<f64>,
    pub bc: Vec<f64>,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
