//! The twelve unsupervised evaluation metrics, plus MI with source accuracy.
//!
//! Every score is oriented so that larger values predict higher target
//! accuracy. Divergence-style metrics follow the template
//! `source accuracy - divergence`.
//!
//! Probe-based metrics sort samples into a canonical order (lexicographic
//! on the stored feature bits) before drawing folds or seeding k-means, so
//! a permutation of the input rows does not change their scores.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{concatenate, Array2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::EvaluationBundle;
use crate::numerics::{self, entropy, ClusterAssignment, NumericsError};
use crate::probes::{
    self, argmax_rows, kfold_heldout_predict, select_rows, train_classifier_pair_mcd, train_mdd_adversary,
    train_probe, FoldPlan, ProbeConfig, ProbeError,
};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("augmented views required: bundle has neither target_aug_features nor target_aug_predictions")]
    MissingAugmentedViews,
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("non-finite score")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    ADistance,
    Mcd,
    Mdd,
    Dev,
    Devn,
    Entropy,
    Snd,
    Mi,
    Bnm,
    ClassAmi,
    Ism,
    Acm,
    /// Not part of the default registry; selectable explicitly.
    MiWSource,
}

impl MetricName {
    /// The fixed registry computed by [`compute_all`].
    pub const REGISTRY: [MetricName; 12] = [
        MetricName::ADistance,
        MetricName::Mcd,
        MetricName::Mdd,
        MetricName::Dev,
        MetricName::Devn,
        MetricName::Entropy,
        MetricName::Snd,
        MetricName::Mi,
        MetricName::Bnm,
        MetricName::ClassAmi,
        MetricName::Ism,
        MetricName::Acm,
    ];

    pub const ALL: [MetricName; 13] = [
        MetricName::ADistance,
        MetricName::Mcd,
        MetricName::Mdd,
        MetricName::Dev,
        MetricName::Devn,
        MetricName::Entropy,
        MetricName::Snd,
        MetricName::Mi,
        MetricName::Bnm,
        MetricName::ClassAmi,
        MetricName::Ism,
        MetricName::Acm,
        MetricName::MiWSource,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricName::ADistance => "a_distance",
            MetricName::Mcd => "mcd",
            MetricName::Mdd => "mdd",
            MetricName::Dev => "dev",
            MetricName::Devn => "devn",
            MetricName::Entropy => "entropy",
            MetricName::Snd => "snd",
            MetricName::Mi => "mi",
            MetricName::Bnm => "bnm",
            MetricName::ClassAmi => "class_ami",
            MetricName::Ism => "ism",
            MetricName::Acm => "acm",
            MetricName::MiWSource => "mi_w_source",
        }
    }

    /// Offset mixed into the base seed so metrics draw independent streams.
    fn seed_offset(self) -> u64 {
        self as u64 * 1_000_003
    }
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MetricName::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                let known: Vec<&str> = MetricName::ALL.iter().map(|m| m.as_str()).collect();
                format!("unknown metric `{s}` (known: {})", known.join(", "))
            })
    }
}

/// A named score with the intermediates that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricScore {
    pub metric_name: MetricName,
    pub value: f64,
    pub higher_is_better: bool,
    pub details: BTreeMap<String, f64>,
}

impl MetricScore {
    fn new(metric_name: MetricName, value: f64) -> Self {
        MetricScore {
            metric_name,
            value,
            higher_is_better: true,
            details: BTreeMap::new(),
        }
    }

    fn with(mut self, key: &str, v: f64) -> Self {
        self.details.insert(key.to_string(), v);
        self
    }

    fn checked(self) -> Result<Self, MetricError> {
        if self.value.is_finite() {
            Ok(self)
        } else {
            Err(MetricError::NonFinite)
        }
    }
}

/// Seeds and knobs shared by all metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricSeeds {
    pub seed: u64,
    pub snd_tau: f64,
    pub probe_steps: usize,
    pub folds: usize,
    pub l2_penalty: f64,
    pub mdd_rho: f64,
}

impl Default for MetricSeeds {
    fn default() -> Self {
        MetricSeeds {
            seed: 17,
            snd_tau: 0.05,
            probe_steps: 200,
            folds: 3,
            l2_penalty: 1e-4,
            mdd_rho: 4.0,
        }
    }
}

impl MetricSeeds {
    fn seed_for(&self, metric: MetricName) -> u64 {
        self.seed.wrapping_add(metric.seed_offset())
    }

    pub fn probe_config(&self, metric: MetricName) -> ProbeConfig {
        let base = match metric {
            MetricName::Dev | MetricName::Devn | MetricName::Ism | MetricName::Acm => {
                ProbeConfig::mlp2(self.seed_for(metric))
            }
            _ => ProbeConfig::linear(self.seed_for(metric)),
        };
        ProbeConfig {
            max_steps: self.probe_steps,
            l2_penalty: self.l2_penalty,
            rho: self.mdd_rho,
            ..base
        }
    }
}

// ---------------------------------------------------------------------------
// closed-form pieces

/// Fraction of source samples whose argmax prediction equals the label.
pub fn source_accuracy(b: &EvaluationBundle) -> f64 {
    let p = b.source_probs();
    let hits = argmax_rows(&p)
        .iter()
        .zip(&b.source_labels)
        .filter(|(a, y)| a == y)
        .count();
    hits as f64 / b.n_source() as f64
}

fn row_entropies(p: &Array2<f64>) -> Result<Vec<f64>, NumericsError> {
    p.rows()
        .into_iter()
        .map(|r| entropy(r.as_slice().expect("row-major")))
        .collect()
}

/// Mean row entropy `E[H(p)]`.
pub fn mean_entropy(p: &Array2<f64>) -> Result<f64, NumericsError> {
    Ok(numerics::mean(&row_entropies(p)?))
}

/// Entropy of the mean prediction `H(E[p])`.
pub fn marginal_entropy(p: &Array2<f64>) -> Result<f64, NumericsError> {
    let m = p.mean_axis(Axis(0)).expect("nonempty");
    entropy(m.as_slice().expect("contiguous"))
}

/// `H(E[p]) - E[H(p)]`, clamped to `[0, log K]`.
pub fn mutual_information(p: &Array2<f64>) -> Result<f64, NumericsError> {
    let k = p.ncols() as f64;
    Ok((marginal_entropy(p)? - mean_entropy(p)?).clamp(0.0, k.ln()))
}

/// `src_acc + info / (2 log K) + 1/2`.
pub fn information_score(src_acc: f64, info: f64, k: usize) -> f64 {
    src_acc + info / (2.0 * (k as f64).ln()) + 0.5
}

/// Fraction of rows whose argmax agrees between `q` and `q_aug`.
pub fn augmentation_consistency(q: &Array2<f64>, q_aug: &Array2<f64>) -> f64 {
    let a = argmax_rows(q);
    let b = argmax_rows(q_aug);
    a.iter().zip(&b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64
}

/// `src_acc + (AC + H(E[q]) / log K) / 2`.
pub fn acm_value(src_acc: f64, q: &Array2<f64>, q_aug: &Array2<f64>) -> Result<(f64, f64, f64), NumericsError> {
    let k = q.ncols() as f64;
    let ac = augmentation_consistency(q, q_aug);
    let diversity = (marginal_entropy(q)? / k.ln()).clamp(0.0, 1.0);
    Ok((src_acc + 0.5 * (ac + diversity), ac, diversity))
}

/// Soft neighborhood density of the rows of `p` at temperature `tau`.
pub fn soft_neighborhood_density(p: &Array2<f64>, tau: f64) -> f64 {
    let n = p.nrows();
    let sim = p.dot(&p.t());
    let mut total = 0.0;
    let mut row = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            row[j] = sim[[i, j]] / tau;
        }
        probes::nets::softmax_in_place(&mut row);
        for &v in &row {
            if v > 0.0 {
                total -= v * v.ln();
            }
        }
    }
    (total / n as f64).clamp(0.0, (n as f64).ln())
}

// ---------------------------------------------------------------------------
// canonical ordering

fn cmp_rows(a: ndarray::ArrayView1<f32>, b: ndarray::ArrayView1<f32>) -> Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

/// Sample order sorted lexicographically by the given row-aligned arrays.
fn canonical_order(keys: &[&Array2<f32>], extra: Option<&[usize]>) -> Vec<usize> {
    let n = keys[0].nrows();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| {
        for k in keys {
            match cmp_rows(k.row(i), k.row(j)) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        match extra {
            Some(e) => e[i].cmp(&e[j]),
            None => Ordering::Equal,
        }
    });
    idx
}

struct Canonical {
    xs: Array2<f64>,
    ys: Vec<usize>,
    ps: Array2<f64>,
    xt: Array2<f64>,
    pt: Array2<f64>,
}

fn canonical(b: &EvaluationBundle) -> Canonical {
    let so = canonical_order(&[&b.source_features, &b.source_predictions], Some(&b.source_labels));
    let to = canonical_order(&[&b.target_features, &b.target_predictions], None);
    Canonical {
        xs: select_rows(&b.source_features_f64(), &so),
        ys: so.iter().map(|&i| b.source_labels[i]).collect(),
        ps: select_rows(&b.source_probs(), &so),
        xt: select_rows(&b.target_features_f64(), &to),
        pt: select_rows(&b.target_probs(), &to),
    }
}

fn pooled(c: &Canonical) -> Array2<f64> {
    concatenate(Axis(0), &[c.xs.view(), c.xt.view()]).expect("same feature dim")
}

// ---------------------------------------------------------------------------
// prediction-only metrics

pub fn metric_entropy(b: &EvaluationBundle) -> Result<MetricScore, MetricError> {
    let p = b.target_probs();
    let k = b.k_classes as f64;
    let v = (-mean_entropy(&p)?).clamp(-k.ln(), 0.0);
    MetricScore::new(MetricName::Entropy, v).checked()
}

pub fn metric_mi(b: &EvaluationBundle) -> Result<MetricScore, MetricError> {
    let p = b.target_probs();
    let mi = mutual_information(&p)?;
    MetricScore::new(MetricName::Mi, mi)
        .with("marginal_entropy", marginal_entropy(&p)?)
        .with("mean_entropy", mean_entropy(&p)?)
        .checked()
}

pub fn metric_mi_with_source(b: &EvaluationBundle) -> Result<MetricScore, MetricError> {
    let src_acc = source_accuracy(b);
    let mi = mutual_information(&b.target_probs())?;
    MetricScore::new(MetricName::MiWSource, information_score(src_acc, mi, b.k_classes))
        .with("src_acc", src_acc)
        .with("mi", mi)
        .checked()
}

pub fn metric_snd(b: &EvaluationBundle, tau: f64) -> Result<MetricScore, MetricError> {
    if b.n_target() < 2 {
        return Err(MetricError::Precondition("SND needs at least 2 target samples".into()));
    }
    if !(tau > 0.0) {
        return Err(MetricError::Precondition(format!("temperature must be positive, got {tau}")));
    }
    let v = soft_neighborhood_density(&b.target_probs(), tau);
    MetricScore::new(MetricName::Snd, v).with("tau", tau).checked()
}

pub fn metric_bnm(b: &EvaluationBundle) -> Result<MetricScore, MetricError> {
    let v = numerics::nuclear_norm(&b.target_probs())?;
    MetricScore::new(MetricName::Bnm, v)
        .with("n_target", b.n_target() as f64)
        .checked()
}

pub fn metric_class_ami(b: &EvaluationBundle, seed: u64) -> Result<MetricScore, MetricError> {
    let k = b.k_classes;
    if b.n_target() < k {
        return Err(MetricError::Precondition(format!(
            "ClassAMI needs at least K={k} target samples, got {}",
            b.n_target()
        )));
    }
    let order = canonical_order(&[&b.target_features, &b.target_predictions], None);
    let feats = select_rows(&b.target_features_f64(), &order);
    let clusters = numerics::kmeans(&feats, k, seed)?;
    let predicted: Vec<usize> = argmax_rows(&select_rows(&b.target_probs(), &order));
    let ami = numerics::adjusted_mutual_information(&ClusterAssignment::new(predicted, k), &clusters)?;
    MetricScore::new(MetricName::ClassAmi, ami).checked()
}

// ---------------------------------------------------------------------------
// divergence metrics

pub fn metric_a_distance(b: &EvaluationBundle, cfg: &ProbeConfig, n_folds: usize) -> Result<MetricScore, MetricError> {
    let c = canonical(b);
    let (ns, nt) = (c.xs.nrows(), c.xt.nrows());
    let x = pooled(&c);
    let domain: Vec<usize> = (0..ns + nt).map(|i| usize::from(i < ns)).collect();
    let labels: Vec<Option<usize>> = domain.iter().map(|&d| Some(d)).collect();
    let plan = FoldPlan::covering(&labels, n_folds, cfg.seed)?;
    let r = kfold_heldout_predict(&x, &domain, 2, cfg, &plan)?;
    let hits = argmax_rows(&r.heldout).iter().zip(&domain).filter(|(a, b)| a == b).count();
    let acc = hits as f64 / domain.len() as f64;
    let divergence = (2.0 * (2.0 * acc - 1.0)).clamp(0.0, 2.0);
    let src_acc = source_accuracy(b);
    MetricScore::new(MetricName::ADistance, src_acc - divergence)
        .with("src_acc", src_acc)
        .with("domain_acc", acc)
        .with("divergence", divergence)
        .checked()
}


/// Held-out disagreement gap of a jointly trained classifier pair.
pub fn mcd_divergence(b: &EvaluationBundle, cfg: &ProbeConfig, n_folds: usize) -> Result<(f64, f64, f64), MetricError> {
    let c = canonical(b);
    let (ns, nt) = (c.xs.nrows(), c.xt.nrows());
    let labels: Vec<Option<usize>> = c.ys.iter().map(|&y| Some(y)).chain(std::iter::repeat_n(None, nt)).collect();
    let plan = FoldPlan::covering(&labels, n_folds, cfg.seed)?;
    let (mut dis_s, mut dis_t) = (0usize, 0usize);
    for fold in 0..n_folds {
        let train = plan.train_indices(fold);
        let test = plan.test_indices(fold);
        let (tr_s, tr_t) = split_domains(&train, ns);
        let (te_s, te_t) = split_domains(&test, ns);
        let ys: Vec<usize> = tr_s.iter().map(|&i| c.ys[i]).collect();
        let (h, h2) = train_classifier_pair_mcd(
            &select_rows(&c.xs, &tr_s),
            &ys,
            &select_rows(&c.xt, &tr_t),
            b.k_classes,
            &cfg.with_seed(cfg.seed.wrapping_add(fold as u64)),
        )?;
        for (rows, x, acc) in [(&te_s, &c.xs, &mut dis_s), (&te_t, &c.xt, &mut dis_t)] {
            if rows.is_empty() {
                continue;
            }
            let xr = select_rows(x, rows);
            let (a, bb) = (h.predict(&xr), h2.predict(&xr));
            *acc += a.iter().zip(&bb).filter(|(p, q)| p != q).count();
        }
    }
    let ds = dis_s as f64 / ns as f64;
    let dt = dis_t as f64 / nt as f64;
    Ok(((ds - dt).abs(), ds, dt))
}

fn split_domains(idx: &[usize], ns: usize) -> (Vec<usize>, Vec<usize>) {
    let s = idx.iter().copied().filter(|&i| i < ns).collect();
    let t = idx.iter().copied().filter(|&i| i >= ns).map(|i| i - ns).collect();
    (s, t)
}

pub fn metric_mcd(b: &EvaluationBundle, cfg: &ProbeConfig, n_folds: usize) -> Result<MetricScore, MetricError> {
    let (gap, ds, dt) = mcd_divergence(b, cfg, n_folds)?;
    let src_acc = source_accuracy(b);
    MetricScore::new(MetricName::Mcd, src_acc - gap)
        .with("src_acc", src_acc)
        .with("divergence", gap)
        .with("disagreement_source", ds)
        .with("disagreement_target", dt)
        .checked()
}

/// Held-out `(disp_target - disp_source, disp_source, disp_target)`.
pub fn mdd_divergence(b: &EvaluationBundle, cfg: &ProbeConfig, n_folds: usize) -> Result<(f64, f64, f64), MetricError> {
    let c = canonical(b);
    let (ns, nt) = (c.xs.nrows(), c.xt.nrows());
    let fs = argmax_rows(&c.ps);
    let ft = argmax_rows(&c.pt);
    let labels: Vec<Option<usize>> = fs.iter().map(|&y| Some(y)).chain(std::iter::repeat_n(None, nt)).collect();
    let plan = FoldPlan::covering(&labels, n_folds, cfg.seed)?;
    let (mut disp_s, mut disp_t) = (0usize, 0usize);
    for fold in 0..n_folds {
        let (tr_s, tr_t) = split_domains(&plan.train_indices(fold), ns);
        let (te_s, te_t) = split_domains(&plan.test_indices(fold), ns);
        let adv = train_mdd_adversary(
            &select_rows(&c.xs, &tr_s),
            &tr_s.iter().map(|&i| fs[i]).collect::<Vec<_>>(),
            &select_rows(&c.xt, &tr_t),
            &tr_t.iter().map(|&i| ft[i]).collect::<Vec<_>>(),
            b.k_classes,
            &cfg.with_seed(cfg.seed.wrapping_add(fold as u64)),
        )?;
        for (rows, x, f, acc) in [(&te_s, &c.xs, &fs, &mut disp_s), (&te_t, &c.xt, &ft, &mut disp_t)] {
            if rows.is_empty() {
                continue;
            }
            let pred = adv.predict(&select_rows(x, rows));
            *acc += pred.iter().zip(rows.iter()).filter(|(p, &i)| **p != f[i]).count();
        }
    }
    let ds = disp_s as f64 / ns as f64;
    let dt = disp_t as f64 / nt as f64;
    Ok((dt - ds, ds, dt))
}

pub fn metric_mdd(b: &EvaluationBundle, cfg: &ProbeConfig, n_folds: usize) -> Result<MetricScore, MetricError> {
    let (d, ds, dt) = mdd_divergence(b, cfg, n_folds)?;
    let src_acc = source_accuracy(b);
    MetricScore::new(MetricName::Mdd, src_acc - d)
        .with("src_acc", src_acc)
        .with("divergence", d)
        .with("disparity_source", ds)
        .with("disparity_target", dt)
        .checked()
}

// ---------------------------------------------------------------------------
// importance-weighted validation

/// Lower/upper clamp on the discriminator's source probability.
pub const DISCRIMINATOR_CLAMP: f64 = 1e-4;

/// Importance-weighted risk with control variate; returns `(DEV, eta)`.
///
/// `eta = -Cov(l, w) / Var(w)`, taken as 0 when `Var(w) < 1e-12`.
pub fn dev_risk(weights: &[f64], errors: &[bool]) -> (f64, f64) {
    let loss: Vec<f64> = weights
        .iter()
        .zip(errors)
        .map(|(w, &e)| if e { *w } else { 0.0 })
        .collect();
    let var = numerics::variance(weights);
    let eta = if var < 1e-12 {
        0.0
    } else {
        -numerics::covariance(&loss, weights) / var
    };
    let dev = numerics::mean(&loss) + eta * numerics::mean(weights) - eta;
    (dev, eta)
}

/// Standardized weights with negatives clamped to zero.
pub fn devn_weights(weights: &[f64]) -> Vec<f64> {
    numerics::standardize(weights).into_iter().map(|w| w.max(0.0)).collect()
}

/// Density-ratio weights `(n_s/n_t)(1-h)/h` from held-out discriminator
/// outputs on source samples, with per-sample source errors.
pub fn importance_weights(b: &EvaluationBundle, cfg: &ProbeConfig, n_folds: usize) -> Result<(Vec<f64>, Vec<bool>), MetricError> {
    let c = canonical(b);
    let (ns, nt) = (c.xs.nrows(), c.xt.nrows());
    let x = pooled(&c);
    let domain: Vec<usize> = (0..ns + nt).map(|i| usize::from(i < ns)).collect();
    let labels: Vec<Option<usize>> = domain.iter().map(|&d| Some(d)).collect();
    let plan = FoldPlan::covering(&labels, n_folds, cfg.seed)?;
    let r = kfold_heldout_predict(&x, &domain, 2, cfg, &plan)?;
    let ratio = ns as f64 / nt as f64;
    let weights = (0..ns)
        .map(|i| {
            let h = r.heldout[[i, 1]].clamp(DISCRIMINATOR_CLAMP, 1.0 - DISCRIMINATOR_CLAMP);
            ratio * (1.0 - h) / h
        })
        .collect();
    let pred = argmax_rows(&c.ps);
    let errors = pred.iter().zip(&c.ys).map(|(p, y)| p != y).collect();
    Ok((weights, errors))
}

pub fn metric_dev(b: &EvaluationBundle, cfg: &ProbeConfig, n_folds: usize) -> Result<MetricScore, MetricError> {
    let (w, err) = importance_weights(b, cfg, n_folds)?;
    let (dev, eta) = dev_risk(&w, &err);
    MetricScore::new(MetricName::Dev, -dev)
        .with("eta", eta)
        .with("mean_weight", numerics::mean(&w))
        .checked()
}

pub fn metric_devn(b: &EvaluationBundle, cfg: &ProbeConfig, n_folds: usize) -> Result<MetricScore, MetricError> {
    let (w, err) = importance_weights(b, cfg, n_folds)?;
    let ws = devn_weights(&w);
    let (dev, eta) = dev_risk(&ws, &err);
    MetricScore::new(MetricName::Devn, -dev)
        .with("eta", eta)
        .with("mean_weight", numerics::mean(&ws))
        .checked()
}

// ---------------------------------------------------------------------------
// held-out MLP metrics

/// Held-out MLP predictions on target features and, when available, on
/// augmented-view features.
#[derive(Debug, Clone)]
pub struct AugmentedPredictions {
    pub q_t: Array2<f64>,
    pub q_t_aug: Option<Array2<f64>>,
}

/// Trains the two-layer MLP on every source evaluation sample and applies
/// it to the target (and augmented target) features.
pub fn heldout_mlp_predict(b: &EvaluationBundle, cfg: &ProbeConfig) -> Result<AugmentedPredictions, MetricError> {
    let so = canonical_order(&[&b.source_features], Some(&b.source_labels));
    let xs = select_rows(&b.source_features_f64(), &so);
    let ys: Vec<usize> = so.iter().map(|&i| b.source_labels[i]).collect();
    let h = train_probe(&xs, &ys, b.k_classes, cfg)?;
    Ok(AugmentedPredictions {
        q_t: h.predict_proba(&b.target_features_f64()),
        q_t_aug: b.target_aug_features_f64().map(|x| h.predict_proba(&x)),
    })
}

pub fn ism_from(b: &EvaluationBundle, q: &AugmentedPredictions) -> Result<MetricScore, MetricError> {
    let src_acc = source_accuracy(b);
    let is = mutual_information(&q.q_t)?;
    MetricScore::new(MetricName::Ism, information_score(src_acc, is, b.k_classes))
        .with("src_acc", src_acc)
        .with("is", is)
        .checked()
}

pub fn acm_from(b: &EvaluationBundle, q: &AugmentedPredictions) -> Result<MetricScore, MetricError> {
    let src_acc = source_accuracy(b);
    // route 1: MLP on augmented features; route 0: model classifier on both views
    let (value, ac, diversity, route) = match (&q.q_t_aug, b.target_aug_probs()) {
        (Some(q_aug), _) => {
            let (v, ac, div) = acm_value(src_acc, &q.q_t, q_aug)?;
            (v, ac, div, 1.0)
        }
        (None, Some(p_aug)) => {
            let ac = augmentation_consistency(&b.target_probs(), &p_aug);
            let div = (marginal_entropy(&q.q_t)? / (b.k_classes as f64).ln()).clamp(0.0, 1.0);
            (src_acc + 0.5 * (ac + div), ac, div, 0.0)
        }
        (None, None) => return Err(MetricError::MissingAugmentedViews),
    };
    MetricScore::new(MetricName::Acm, value)
        .with("src_acc", src_acc)
        .with("ac", ac)
        .with("diversity", diversity)
        .with("ac_route_mlp", route)
        .checked()
}

pub fn metric_ism(b: &EvaluationBundle, cfg: &ProbeConfig) -> Result<MetricScore, MetricError> {
    ism_from(b, &heldout_mlp_predict(b, cfg)?)
}

pub fn metric_acm(b: &EvaluationBundle, cfg: &ProbeConfig) -> Result<MetricScore, MetricError> {
    if b.target_aug_features.is_none() && b.target_aug_predictions.is_none() {
        return Err(MetricError::MissingAugmentedViews);
    }
    acm_from(b, &heldout_mlp_predict(b, cfg)?)
}

// ---------------------------------------------------------------------------
// registry

/// One metric's outcome inside [`compute_all`].
#[derive(Debug)]
pub struct MetricOutcome {
    pub metric: MetricName,
    pub result: Result<MetricScore, MetricError>,
}

/// Computes a single metric by name.
pub fn compute_metric(b: &EvaluationBundle, metric: MetricName, seeds: &MetricSeeds) -> Result<MetricScore, MetricError> {
    let cfg = seeds.probe_config(metric);
    let folds = seeds.folds;
    match metric {
        MetricName::ADistance => metric_a_distance(b, &cfg, folds),
        MetricName::Mcd => metric_mcd(b, &cfg, folds),
        MetricName::Mdd => metric_mdd(b, &cfg, folds),
        MetricName::Dev => metric_dev(b, &cfg, folds),
        MetricName::Devn => metric_devn(b, &cfg, folds),
        MetricName::Entropy => metric_entropy(b),
        MetricName::Snd => metric_snd(b, seeds.snd_tau),
        MetricName::Mi => metric_mi(b),
        MetricName::Bnm => metric_bnm(b),
        MetricName::ClassAmi => metric_class_ami(b, seeds.seed_for(metric)),
        MetricName::Ism => metric_ism(b, &cfg),
        MetricName::Acm => metric_acm(b, &cfg),
        MetricName::MiWSource => metric_mi_with_source(b),
    }
}

/// Computes the selected metrics; failures are recorded per metric.
///
/// ISM and ACM share one held-out MLP (they use the same configuration).
pub fn compute_selected(b: &EvaluationBundle, metrics: &[MetricName], seeds: &MetricSeeds) -> Vec<MetricOutcome> {
    let mlp_cfg = seeds.probe_config(MetricName::Ism);
    let needs_mlp = metrics.iter().any(|m| matches!(m, MetricName::Ism | MetricName::Acm));
    let shared = if needs_mlp {
        Some(heldout_mlp_predict(b, &mlp_cfg))
    } else {
        None
    };
    metrics
        .iter()
        .map(|&metric| {
            let result = match (metric, &shared) {
                (MetricName::Ism, Some(Ok(q))) => ism_from(b, q),
                (MetricName::Acm, Some(Ok(q))) => {
                    if b.target_aug_features.is_none() && b.target_aug_predictions.is_none() {
                        Err(MetricError::MissingAugmentedViews)
                    } else {
                        acm_from(b, q)
                    }
                }
                (MetricName::Ism | MetricName::Acm, Some(Err(e))) => {
                    Err(MetricError::Precondition(format!("held-out MLP: {e}")))
                }
                _ => compute_metric(b, metric, seeds),
            };
            MetricOutcome { metric, result }
        })
        .collect()
}

/// Runs the full twelve-metric registry.
pub fn compute_all(b: &EvaluationBundle, seeds: &MetricSeeds) -> Vec<MetricOutcome> {
    compute_selected(b, &MetricName::REGISTRY, seeds)
}
