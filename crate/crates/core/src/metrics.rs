//! Accuracy reports, soft neighborhood density (SND), neighbor-agreement
//! ratios, open-set scores and decision-boundary grids.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bank::{BankMode, MemoryBank};
use crate::datasets::Dataset;
use crate::datasets::UNLABELED;
use crate::error::{Error, Result};
use crate::model::MlpModel;
use crate::numerics::{argmax, argmax_rows, l2_normalize_rows, DenseMatrix};
use crate::numerics::simplex::entropy_unchecked;
use crate::scalar::Real;

/// Default SND temperature.
pub const SND_TAU: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    /// `None` for classes with no samples.
    pub per_class_accuracy: Vec<Option<f64>>,
    /// Mean over classes that have samples.
    pub mean_per_class: f64,
}

pub fn classification_report(predicted: &[usize], truth: &[usize], classes: usize) -> Result<EvalReport> {
    if predicted.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::InvalidInput("no samples to evaluate".into()));
    }
    if let Some(&bad) = truth.iter().find(|&&y| y >= classes) {
        return Err(Error::Label(format!("label {bad} outside [0, {classes})")));
    }
    let mut hits = vec![0usize; classes];
    let mut totals = vec![0usize; classes];
    for (&p, &y) in predicted.iter().zip(truth) {
        totals[y] += 1;
        if p == y {
            hits[y] += 1;
        }
    }
    let per_class: Vec<Option<f64>> = hits
        .iter()
        .zip(&totals)
        .map(|(&h, &t)| (t > 0).then(|| h as f64 / t as f64))
        .collect();
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    Ok(EvalReport {
        accuracy: hits.iter().sum::<usize>() as f64 / predicted.len() as f64,
        mean_per_class: defined.iter().sum::<f64>() / defined.len() as f64,
        per_class_accuracy: per_class,
    })
}

/// Evaluates argmax predictions against the labeled rows only.
pub fn evaluate_predictions<T: Real>(
    preds: &DenseMatrix<T>,
    labels: &[i64],
    classes: usize,
) -> Result<Option<EvalReport>> {
    if preds.rows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            preds.rows(),
            labels.len()
        )));
    }
    let hard = argmax_rows(preds);
    let (p, y): (Vec<usize>, Vec<usize>) = hard
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y != UNLABELED)
        .map(|(&p, &y)| (p, y as usize))
        .unzip();
    if y.is_empty() {
        return Ok(None);
    }
    classification_report(&p, &y, classes).map(Some)
}

/// Soft neighborhood density: cosine similarities between L2-normalized
/// prediction rows, diagonal masked, softmax with temperature `tau` per
/// row, then the mean row entropy. Larger means denser neighborhoods.
pub fn snd_score<T: Real>(preds: &DenseMatrix<T>, tau: T) -> Result<T> {
    let n = preds.rows();
    if n < 2 {
        return Err(Error::Size(format!("SND needs at least 2 rows, got {n}")));
    }
    if !(tau > T::zero()) {
        return Err(Error::Config(format!("temperature must be > 0, got {tau}")));
    }
    let unit = l2_normalize_rows(preds);
    let sims = unit.matmul_t(&unit)?;
    let mut total = T::zero();
    let mut row = vec![T::zero(); n - 1];
    for i in 0..n {
        for (k, j) in (0..n).filter(|&j| j != i).enumerate() {
            row[k] = sims.get(i, j) / tau;
        }
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut z = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
        total += entropy_unchecked(&row);
    }
    Ok(total / T::of_usize(n))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementRatios {
    /// Fraction of samples whose K nearest bank neighbors all share the
    /// sample's predicted class.
    pub same_pred: f64,
    /// Among those samples, the fraction whose shared class is the true
    /// label. `None` without labels.
    pub correct_pred: Option<f64>,
}

/// Neighbor agreement over every occupied bank slot. `labels` is indexed
/// by sample id.
pub fn agreement_ratios<T: Real>(
    bank: &MemoryBank<T>,
    labels: Option<&[i64]>,
    k: usize,
) -> Result<AgreementRatios> {
    let preds = bank.predictions();
    let hard = argmax_rows(preds);
    let mut checked = 0usize;
    let mut same = 0usize;
    let mut correct = 0usize;
    let (slots, ids): (Vec<usize>, Vec<usize>) = bank.occupied().unzip();
    let queries = bank.features().select_rows(&slots)?;
    let found = bank.knn_batch(&queries, k, &ids)?;
    for ((&slot, &id), nn) in slots.iter().zip(&ids).zip(found) {
        checked += 1;
        let mine = hard[slot];
        if nn.predictions.row_iter().all(|p| argmax(p) == mine) {
            same += 1;
            if let Some(labels) = labels {
                let y = *labels.get(id).ok_or_else(|| {
                    Error::Index(format!("no label for sample id {id}"))
                })?;
                if y != UNLABELED && y as usize == mine {
                    correct += 1;
                }
            }
        }
    }
    Ok(AgreementRatios {
        same_pred: same as f64 / checked as f64,
        correct_pred: labels.map(|_| if same == 0 { 0.0 } else { correct as f64 / same as f64 }),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdaScores {
    pub os_star: f64,
    pub unk: f64,
    pub hos: f64,
    pub os: f64,
    pub num_known_classes: usize,
}

/// HOS (harmonic mean of known and unknown accuracy) and the class-weighted
/// OS score, both in the units of the inputs.
pub fn open_set_scores(os_star: f64, unk: f64, num_known: usize) -> OdaScores {
    let hos = if os_star + unk == 0.0 {
        0.0
    } else {
        2.0 * os_star * unk / (os_star + unk)
    };
    let k = num_known as f64;
    OdaScores {
        os_star,
        unk,
        hos,
        os: k * os_star / (k + 1.0) + unk / (k + 1.0),
        num_known_classes: num_known,
    }
}

/// Predicted labels on a regular 2-D grid, row-major with `y` as the slow
/// axis: node `(r, c)` sits at `(xs[c], ys[r])`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionGrid {
    pub resolution: usize,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub labels: Vec<usize>,
}

impl DecisionGrid {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "x,y,label")?;
        for (r, &y) in self.ys.iter().enumerate() {
            for (c, &x) in self.xs.iter().enumerate() {
                writeln!(out, "{x},{y},{}", self.labels[r * self.resolution + c])?;
            }
        }
        Ok(())
    }
}

pub fn decision_grid<T: Real>(
    model: &MlpModel<T>,
    x_range: (f64, f64),
    y_range: (f64, f64),
    resolution: usize,
) -> Result<DecisionGrid> {
    if resolution < 2 {
        return Err(Error::Config(format!("grid resolution must be ≥ 2, got {resolution}")));
    }
    if model.dims().d_in != 2 {
        return Err(Error::Dimension(format!(
            "decision grid needs a 2-D input model, got {}",
            model.dims().d_in
        )));
    }
    let axis = |(lo, hi): (f64, f64)| -> Vec<f64> {
        let step = (hi - lo) / (resolution - 1) as f64;
        (0..resolution).map(|k| lo + step * k as f64).collect()
    };
    let xs = axis(x_range);
    let ys = axis(y_range);
    let mut pts = Vec::with_capacity(2 * resolution * resolution);
    for &y in &ys {
        for &x in &xs {
            pts.push(T::lit(x));
            pts.push(T::lit(y));
        }
    }
    let grid = DenseMatrix::new(resolution * resolution, 2, pts)?;
    let labels = argmax_rows(&model.predict(&grid)?);
    Ok(DecisionGrid {
        resolution,
        xs,
        ys,
        labels,
    })
}

/// Summary written by the `eval` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: Option<f64>,
    pub per_class: Option<Vec<Option<f64>>>,
    pub snd: f64,
    pub ratios: Option<AgreementRatios>,
    pub hos: Option<f64>,
    pub os: Option<f64>,
}

/// Open-set scores from confidence rejection: a row whose top probability
/// is below `threshold` is predicted unknown. Rows labeled −1 are the
/// unknown class; OS* is the mean per-class accuracy over known classes
/// (a rejected known sample counts as wrong). Results are in percent.
pub fn open_set_eval<T: Real>(
    preds: &DenseMatrix<T>,
    labels: &[i64],
    threshold: f64,
) -> Result<OdaScores> {
    if preds.rows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            preds.rows(),
            labels.len()
        )));
    }
    let classes = preds.cols();
    let mut hits = vec![0usize; classes];
    let mut totals = vec![0usize; classes];
    let (mut unk_hits, mut unk_total) = (0usize, 0usize);
    for (row, &y) in preds.row_iter().zip(labels) {
        let top = argmax(row);
        let rejected = row[top].as_f64() < threshold;
        if y == UNLABELED {
            unk_total += 1;
            unk_hits += usize::from(rejected);
        } else {
            let y = usize::try_from(y)
                .ok()
                .filter(|&y| y < classes)
                .ok_or_else(|| Error::Label(format!("label {y} outside [0, {classes})")))?;
            totals[y] += 1;
            hits[y] += usize::from(!rejected && top == y);
        }
    }
    let known: Vec<f64> = hits
        .iter()
        .zip(&totals)
        .filter(|(_, &t)| t > 0)
        .map(|(&h, &t)| h as f64 / t as f64)
        .collect();
    if known.is_empty() || unk_total == 0 {
        return Err(Error::InsufficientData(
            "open-set scores need both known and unknown samples".into(),
        ));
    }
    let os_star = 100.0 * known.iter().sum::<f64>() / known.len() as f64;
    let unk = 100.0 * unk_hits as f64 / unk_total as f64;
    Ok(open_set_scores(os_star, unk, known.len()))
}

/// Accuracy, SND and neighbor agreement of `model` on `data`, with
/// agreement measured in a full bank built from one forward pass.
pub fn metrics_report<T: Real>(
    model: &MlpModel<T>,
    data: &Dataset<T>,
    k: usize,
    tau: f64,
    open_set_threshold: Option<f64>,
) -> Result<MetricsReport> {
    let dims = model.dims();
    let cache = model.forward(&data.x)?;
    let preds = &cache.predictions;
    let eval = evaluate_predictions(preds, &data.labels, dims.classes)?;
    let mut bank = MemoryBank::new(BankMode::Full, data.len(), dims.h_feat, dims.classes)?;
    let ids: Vec<usize> = (0..data.len()).collect();
    bank.update(&ids, &cache.features, preds)?;
    let labels = data.has_labels().then_some(data.labels.as_slice());
    let ratios = if data.len() > k {
        Some(agreement_ratios(&bank, labels, k)?)
    } else {
        None
    };
    let oda = open_set_threshold
        .map(|t| open_set_eval(preds, &data.labels, t))
        .transpose()?;
    Ok(MetricsReport {
        accuracy: eval.as_ref().map(|r| r.accuracy),
        per_class: eval.map(|r| r.per_class_accuracy),
        snd: snd_score(preds, T::lit(tau))?.as_f64(),
        ratios,
        hos: oda.map(|o| o.hos),
        os: oda.map(|o| o.os),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bank::BankMode;
    use crate::model::{ModelDims, ParamSet};

    #[test]
    fn report_examples() {
        let r = classification_report(&[0, 1, 1], &[0, 1, 1], 2).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.per_class_accuracy, vec![Some(1.0), Some(1.0)]);

        let r = classification_report(&[0, 0, 0, 0], &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(r.accuracy, 0.5);
        assert_eq!(r.per_class_accuracy, vec![Some(1.0), Some(0.0)]);

        let r = classification_report(&[0, 2, 2], &[0, 2, 0], 3).unwrap();
        assert_eq!(r.per_class_accuracy[1], None);
        assert_eq!(r.mean_per_class, 0.75);

        assert!(matches!(
            classification_report(&[0], &[0, 1], 2),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn snd_examples() {
        let same = DenseMatrix::from_fn(5, 3, |_, c| [0.2, 0.3, 0.5][c]);
        assert!((snd_score(&same, 0.05).unwrap() - 4f64.ln()).abs() < 1e-12);
        let two = DenseMatrix::from_rows(&[[0.9, 0.1], [0.2, 0.8]]).unwrap();
        assert_eq!(snd_score(&two, 0.05).unwrap(), 0.0);
        let spread = DenseMatrix::from_rows(&[[1.0, 0.0], [0.8, 0.2], [0.0, 1.0]]).unwrap();
        assert!(snd_score(&spread, 1e-4).unwrap() < 1e-12);
        assert!(matches!(
            snd_score(&DenseMatrix::from_rows(&[[1.0, 0.0]]).unwrap(), 0.05),
            Err(Error::Size(_))
        ));
    }

    #[test]
    fn snd_invariances() {
        let p = DenseMatrix::from_rows(&[
            [0.7, 0.2, 0.1],
            [0.1, 0.8, 0.1],
            [0.3, 0.3, 0.4],
            [0.6, 0.3, 0.1],
        ])
        .unwrap();
        let base: f64 = snd_score(&p, 0.05).unwrap();
        let permuted = p.select_rows(&[2, 0, 3, 1]).unwrap();
        assert!((snd_score(&permuted, 0.05).unwrap() - base).abs() < 1e-12);
        let mut scaled = p.clone();
        for v in scaled.row_mut(1) {
            *v *= 3.5;
        }
        assert!((snd_score(&scaled, 0.05).unwrap() - base).abs() < 1e-12);
    }

    fn bank_from(features: &[[f64; 2]], classes: &[usize]) -> MemoryBank<f64> {
        let n = features.len();
        let mut bank = MemoryBank::new(BankMode::Full, n, 2, 2).unwrap();
        let f = DenseMatrix::from_rows(features).unwrap();
        let p = DenseMatrix::from_fn(n, 2, |r, c| if c == classes[r] { 0.9 } else { 0.1 });
        bank.update(&(0..n).collect::<Vec<_>>(), &f, &p).unwrap();
        bank
    }

    #[test]
    fn agreement_all_identical() {
        let bank = bank_from(&[[1.0, 0.0], [0.9, 0.1], [0.0, 1.0], [0.5, 0.5], [0.2, 0.7]], &[1; 5]);
        let r = agreement_ratios(&bank, Some(&[1; 5]), 3).unwrap();
        assert_eq!(r.same_pred, 1.0);
        assert_eq!(r.correct_pred, Some(1.0));
        let r = agreement_ratios(&bank, None, 3).unwrap();
        assert_eq!(r.correct_pred, None);
    }

    #[test]
    fn agreement_hand_built_one_disagreeing() {
        // ids 0,1 near 0° predict class 0; ids 2,3 near 90°/95° predict 1;
        // id 4 at 80° predicts 0, so its nearest neighbor (id 2) disagrees.
        let deg = |d: f64| [d.to_radians().cos(), d.to_radians().sin()];
        let bank = bank_from(&[deg(0.0), deg(5.0), deg(90.0), deg(95.0), deg(80.0)], &[0, 0, 1, 1, 0]);
        let r = agreement_ratios(&bank, Some(&[0, 0, 1, 1, 1]), 1).unwrap();
        assert!((r.same_pred - 0.8).abs() < 1e-15);
        assert_eq!(r.correct_pred, Some(1.0));
    }

    #[test]
    fn open_set_examples() {
        assert!((open_set_scores(67.0, 28.0, 25).hos - 39.5).abs() < 0.05);
        assert!((open_set_scores(81.8, 26.3, 25).hos - 39.8).abs() < 0.05);
        assert!((open_set_scores(42.0, 42.0, 25).hos - 42.0).abs() < 1e-12);
        assert_eq!(open_set_scores(0.0, 0.0, 25).hos, 0.0);
        assert_eq!(open_set_scores(80.0, 0.0, 25).hos, 0.0);
        let s = open_set_scores(60.0, 30.0, 2);
        assert!((s.os - (2.0 * 60.0 / 3.0 + 30.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn grid_examples() {
        let dims = ModelDims::new(2, 3, 3, 2).unwrap();
        let mut params = ParamSet::<f64>::zeros(&dims);
        params.bc = vec![0.0, 1.0];
        let constant = MlpModel::from_params(params, 0).unwrap();
        let g = decision_grid(&constant, (-1.0, 1.0), (-2.0, 2.0), 7).unwrap();
        assert_eq!(g.labels.len(), 49);
        assert!(g.labels.iter().all(|&l| l == 1));
        assert!(matches!(
            decision_grid(&constant, (0.0, 1.0), (0.0, 1.0), 1),
            Err(Error::Config(_))
        ));
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("x,y,label"));
        assert_eq!(text.lines().count(), 50);
    }

    #[test]
    fn open_set_eval_counts_rejections() {
        let p = DenseMatrix::from_rows(&[[0.9, 0.1], [0.2, 0.8], [0.55, 0.45], [0.5, 0.5]]).unwrap();
        // known 0 right, known 1 right, unknown rejected, unknown rejected
        let s = open_set_eval(&p, &[0, 1, -1, -1], 0.6).unwrap();
        assert_eq!((s.os_star, s.unk, s.hos), (100.0, 100.0, 100.0));
        // a rejected known sample counts against OS*
        let s = open_set_eval(&p, &[0, 1, 0, -1], 0.6).unwrap();
        assert_eq!(s.os_star, 75.0);
        assert!(matches!(open_set_eval(&p, &[0, 1, 0, 1], 0.6), Err(Error::InsufficientData(_))));
        assert!(matches!(open_set_eval(&p, &[0, 1, 2, -1], 0.6), Err(Error::Label(_))));
    }

    #[test]
    fn metrics_report_on_unlabeled_data() {
        use crate::datasets::{make_twin_moons, MoonsConfig};
        let model = MlpModel::<f64>::init(ModelDims::new(2, 4, 4, 2).unwrap(), 0).unwrap();
        let ds: Dataset<f64> = make_twin_moons(&MoonsConfig { n_per_class: 10, ..Default::default() }).unwrap();
        let labeled = metrics_report(&model, &ds, 3, SND_TAU, None).unwrap();
        assert!(labeled.accuracy.is_some());
        assert!(labeled.ratios.unwrap().correct_pred.is_some());
        let bare = metrics_report(&model, &ds.without_labels(), 3, SND_TAU, None).unwrap();
        assert_eq!(bare.accuracy, None);
        assert_eq!(bare.ratios.unwrap().correct_pred, None);
        assert_eq!(bare.snd, labeled.snd);
        assert_eq!(bare.hos, None);
    }
}
