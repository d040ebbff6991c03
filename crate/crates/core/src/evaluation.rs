//! Train/test protocol, classification metrics and baseline classifiers.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, RowBits, VariableId, NUM_VARIABLES};
use crate::error::{Error, Result};
use crate::inference::{predict_rows_lenient, EvidenceScope};
use crate::learning::NetworkModel;

pub const DEFAULT_LR: f64 = 0.1;
pub const DEFAULT_EPOCHS: usize = 500;
pub const DEFAULT_K: usize = 5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Recall of the YES class.
    pub acc_yes: f64,
    /// Recall of the NO class.
    pub acc_no: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Support-weighted mean of the YES and NO F1 scores.
    pub weighted_f1: f64,
    /// Some ratio had a zero denominator and was reported as 0.
    pub degenerate: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_pos: usize,
    pub test_neg: usize,
    pub seed: u64,
}

/// Sample `test_pos` YES and `test_neg` NO rows (of `target`) as the test set;
/// everything else is training data. Both keep input order.
pub fn split(ds: &Dataset, target: VariableId, spec: SplitSpec) -> Result<(Dataset, Dataset)> {
    let (mut yes, mut no): (Vec<usize>, Vec<usize>) = (0..ds.len()).partition(|&i| ds.rows[i].get(target));
    if yes.len() < spec.test_pos {
        return Err(Error::InsufficientRows { class: "YES", needed: spec.test_pos, available: yes.len() });
    }
    if no.len() < spec.test_neg {
        return Err(Error::InsufficientRows { class: "NO", needed: spec.test_neg, available: no.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    yes.shuffle(&mut rng);
    no.shuffle(&mut rng);
    let mut in_test = vec![false; ds.len()];
    for &i in yes[..spec.test_pos].iter().chain(&no[..spec.test_neg]) {
        in_test[i] = true;
    }
    let (test, train): (Vec<_>, Vec<_>) = ds.rows.iter().cloned().zip(in_test).partition(|(_, t)| *t);
    let strip = |v: Vec<(crate::dataset::DatasetRow, bool)>| Dataset::new(v.into_iter().map(|(r, _)| r).collect(), ds.mode);
    Ok((strip(train), strip(test)))
}

fn ratio(num: usize, den: usize, degenerate: &mut bool) -> f64 {
    if den == 0 {
        *degenerate = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1_score(p: f64, r: f64, degenerate: &mut bool) -> f64 {
    if p + r == 0.0 {
        *degenerate = true;
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Metrics from `(predicted, truth)` pairs, YES = `true`.
pub fn compute_metrics(predictions: &[(bool, bool)]) -> Metrics {
    let mut c = [[0usize; 2]; 2]; // [pred][truth]
    for &(p, t) in predictions {
        c[usize::from(p)][usize::from(t)] += 1;
    }
    let (tp, fp, fn_, tn) = (c[1][1], c[1][0], c[0][1], c[0][0]);
    let mut deg = false;
    let precision = ratio(tp, tp + fp, &mut deg);
    let recall = ratio(tp, tp + fn_, &mut deg);
    let f1 = f1_score(precision, recall, &mut deg);
    let precision_no = ratio(tn, tn + fn_, &mut deg);
    let recall_no = ratio(tn, tn + fp, &mut deg);
    let f1_no = f1_score(precision_no, recall_no, &mut deg);
    let (n_yes, n_no) = (tp + fn_, tn + fp);
    let weighted_f1 = if n_yes + n_no == 0 {
        deg = true;
        0.0
    } else {
        (n_yes as f64 * f1 + n_no as f64 * f1_no) / (n_yes + n_no) as f64
    };
    Metrics { acc_yes: recall, acc_no: recall_no, precision, recall, f1, weighted_f1, degenerate: deg }
}

/// Anything that labels a row for a fixed target.
pub trait Classifier: Sync {
    fn predict_row(&self, row: RowBits) -> Result<bool>;

    fn predict_batch(&self, rows: &[RowBits]) -> Result<Vec<bool>> {
        rows.par_iter().map(|&r| self.predict_row(r)).collect()
    }
}

/// The network as a classifier: posterior of `target` from the row's other
/// variables, YES at or above `threshold`.
pub struct BnClassifier<'a> {
    pub model: &'a NetworkModel,
    pub target: VariableId,
    pub threshold: f64,
    pub scope: EvidenceScope,
}

impl Classifier for BnClassifier<'_> {
    fn predict_row(&self, row: RowBits) -> Result<bool> {
        self.predict_batch(&[row]).map(|v| v[0])
    }

    fn predict_batch(&self, rows: &[RowBits]) -> Result<Vec<bool>> {
        let (preds, retried) = predict_rows_lenient(self.model, rows, self.target, self.threshold, self.scope)?;
        if retried > 0 {
            log::warn!("{retried} of {} rows had impossible evidence and were predicted with less of it", rows.len());
        }
        Ok(preds.into_iter().map(|p| p.label).collect())
    }
}

pub fn evaluate<C: Classifier + ?Sized>(clf: &C, test: &Dataset, target: VariableId) -> Result<Metrics> {
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let rows: Vec<RowBits> = test.rows.iter().map(|r| r.values).collect();
    let labels = clf.predict_batch(&rows)?;
    let pairs: Vec<(bool, bool)> = labels.into_iter().zip(test.rows.iter().map(|r| r.get(target))).collect();
    Ok(compute_metrics(&pairs))
}

/// BN metrics on a test set with the given evidence scope and threshold.
pub fn evaluate_model(
    model: &NetworkModel,
    test: &Dataset,
    target: VariableId,
    threshold: f64,
    scope: EvidenceScope,
) -> Result<Metrics> {
    evaluate(&BnClassifier { model, target, threshold, scope }, test, target)
}

fn feature_mask(target: VariableId) -> u32 {
    ((1u32 << NUM_VARIABLES) - 1) & !(1 << target.index())
}

fn features(row: RowBits, target: VariableId) -> Vec<f64> {
    (0..NUM_VARIABLES)
        .filter(|&i| i != target.index())
        .map(|i| f64::from((row.0 >> i) & 1))
        .collect()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Logistic regression on the 27 non-target indicators plus a bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub target: VariableId,
    pub weights: Vec<f64>,
    pub bias: f64,
}

/// Full-batch gradient descent on mean log-loss from zero weights.
pub fn fit_logistic(train: &Dataset, target: VariableId, lr: f64, epochs: usize) -> Result<LogisticModel> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(lr > 0.0) {
        return Err(Error::InvalidConfig(format!("learning rate must be > 0, got {lr}")));
    }
    let xs: Vec<Vec<f64>> = train.rows.iter().map(|r| features(r.values, target)).collect();
    let ys: Vec<f64> = train.rows.iter().map(|r| f64::from(u8::from(r.get(target)))).collect();
    let n = xs.len() as f64;
    let dim = NUM_VARIABLES - 1;
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    for _ in 0..epochs {
        let mut gw = vec![0.0; dim];
        let mut gb = 0.0;
        for (x, &y) in xs.iter().zip(&ys) {
            let z = b + x.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            let err = sigmoid(z) - y;
            for (g, xi) in gw.iter_mut().zip(x) {
                *g += err * xi;
            }
            gb += err;
        }
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= lr * g / n;
        }
        b -= lr * gb / n;
    }
    Ok(LogisticModel { target, weights: w, bias: b })
}

impl LogisticModel {
    pub fn probability(&self, row: RowBits) -> f64 {
        let x = features(row, self.target);
        sigmoid(self.bias + x.iter().zip(&self.weights).map(|(a, c)| a * c).sum::<f64>())
    }
}

impl Classifier for LogisticModel {
    fn predict_row(&self, row: RowBits) -> Result<bool> {
        Ok(self.probability(row) >= 0.5)
    }
}

/// k-nearest neighbors by Hamming distance over non-target variables.
#[derive(Clone, Debug, PartialEq)]
pub struct KnnModel {
    pub target: VariableId,
    pub k: usize,
    rows: Vec<(u32, bool)>,
}

pub fn fit_knn(train: &Dataset, target: VariableId, k: usize) -> Result<KnnModel> {
    if k == 0 || k > train.len() {
        return Err(Error::InvalidConfig(format!("k = {k} must lie in 1..={}", train.len())));
    }
    let mask = feature_mask(target);
    Ok(KnnModel { target, k, rows: train.rows.iter().map(|r| (r.values.0 & mask, r.get(target))).collect() })
}

impl Classifier for KnnModel {
    /// Majority vote of the `k` nearest training rows; distance ties are
    /// broken by training order, vote ties go to YES.
    fn predict_row(&self, row: RowBits) -> Result<bool> {
        let q = row.0 & feature_mask(self.target);
        let mut d: Vec<(u32, usize)> = self.rows.iter().enumerate().map(|(i, (x, _))| ((x ^ q).count_ones(), i)).collect();
        d.select_nth_unstable(self.k - 1);
        let mut nearest = d[..self.k].to_vec();
        nearest.sort_unstable();
        let yes = nearest.iter().filter(|(_, i)| self.rows[*i].1).count();
        Ok(2 * yes >= self.k)
    }
}

pub fn predict_baseline<C: Classifier + ?Sized>(model: &C, row: RowBits) -> Result<bool> {
    model.predict_row(row)
}

/// Uniform coin flip per row; a floor for the other classifiers.
pub struct RandomGuess {
    pub seed: u64,
}

impl Classifier for RandomGuess {
    fn predict_row(&self, row: RowBits) -> Result<bool> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ u64::from(row.0).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        Ok(rng.gen_bool(0.5))
    }

    fn predict_batch(&self, rows: &[RowBits]) -> Result<Vec<bool>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        Ok(rows.iter().map(|_| rng.gen_bool(0.5)).collect())
    }
}

/// One cell block of the report: a model's metrics on one city.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub model: String,
    pub city: String,
    pub metrics: Metrics,
}

/// Published accident-prediction results per city (AT, AU, CH, DA) as
/// `(model, [acc; 4], [non_acc; 4], [w_ave; 4])`, kept for comparison only.
pub const REFERENCE_RESULTS: [(&str, [f64; 4], [f64; 4], [f64; 4]); 5] = [
    ("LR", [0.54, 0.58, 0.56, 0.3], [0.91, 0.93, 0.91, 0.94], [0.83, 0.87, 0.83, 0.87]),
    ("DNN", [0.62, 0.62, 0.61, 0.36], [0.89, 0.92, 0.87, 0.94], [0.83, 0.87, 0.82, 0.87]),
    ("SVM", [0.75, 0.80, 0.69, 0.75], [0.96, 0.95, 0.97, 0.97], [0.47, 0.62, 0.27, 0.47]),
    ("KNN", [0.50, 0.78, 0.61, 0.72], [0.43, 0.90, 0.59, 0.89], [0.46, 0.73, 0.53, 0.48]),
    ("BN", [0.65, 0.73, 0.60, 0.65], [0.76, 0.90, 0.31, 0.78], [0.61, 0.67, 0.69, 0.59]),
];
pub const REFERENCE_CITIES: [&str; 4] = ["AT", "AU", "CH", "DA"];

/// Plain-text table, one block of three metric lines per model, one column
/// per city.
pub fn format_table(records: &[MetricsRecord]) -> String {
    let mut models: Vec<&str> = Vec::new();
    let mut cities: Vec<&str> = Vec::new();
    for r in records {
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
        if !cities.contains(&r.city.as_str()) {
            cities.push(&r.city);
        }
    }
    let mut out = String::new();
    let _ = write!(out, "{:<8}{:<10}", "Model", "Metric");
    for c in &cities {
        let _ = write!(out, "{c:>8}");
    }
    out.push('\n');
    for m in &models {
        for (i, (name, get)) in [
            ("Acc", (|x: &Metrics| x.acc_yes) as fn(&Metrics) -> f64),
            ("Non-Acc", |x: &Metrics| x.acc_no),
            ("W-Ave", |x: &Metrics| x.weighted_f1),
        ]
        .into_iter()
        .enumerate()
        {
            let _ = write!(out, "{:<8}{:<10}", if i == 0 { *m } else { "" }, name);
            for c in &cities {
                match records.iter().find(|r| r.model == *m && r.city == *c) {
                    Some(r) => {
                        let _ = write!(out, "{:>8.2}", get(&r.metrics));
                    }
                    None => {
                        let _ = write!(out, "{:>8}", "-");
                    }
                }
            }
            out.push('\n');
        }
    }
    out
}
