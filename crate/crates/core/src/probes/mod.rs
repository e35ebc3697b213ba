//! Small trainable heads used by the metrics: domain discriminators,
//! classifier pairs, the margin-disparity adversary and the held-out MLP.
//!
//! All training is full-batch and deterministic: fixed sample order,
//! seeded initialization and a sequential L-BFGS loop.

pub mod lbfgs;
pub mod nets;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lbfgs::{minimize, LbfgsConfig, LbfgsReport, Objective};
pub use nets::{Architecture, ClassifierPairLoss, CrossEntropyLoss, DisparityLoss, Net};

#[derive(Debug, Error, PartialEq)]
pub enum ProbeError {
    #[error("need at least 2 classes present in the labels, found {0}")]
    TooFewClasses(usize),
    #[error("empty training set")]
    Empty,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("label {label} outside [0, {n_classes})")]
    LabelRange { label: usize, n_classes: usize },
    #[error("fold plan: {0}")]
    Folds(String),
}

/// How to build and train a probe.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub architecture: Architecture,
    /// Hidden width for `mlp2`; `None` means the input feature dimension.
    pub hidden_dim: Option<usize>,
    pub max_steps: usize,
    pub seed: u64,
    pub l2_penalty: f64,
    /// Margin for the disparity adversary.
    pub rho: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            architecture: Architecture::Linear,
            hidden_dim: None,
            max_steps: 200,
            seed: 0,
            l2_penalty: 1e-4,
            rho: 4.0,
        }
    }
}

impl ProbeConfig {
    pub fn linear(seed: u64) -> Self {
        ProbeConfig {
            seed,
            ..Default::default()
        }
    }

    pub fn mlp2(seed: u64) -> Self {
        ProbeConfig {
            architecture: Architecture::Mlp2,
            seed,
            ..Default::default()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        ProbeConfig { seed, ..self.clone() }
    }

    pub fn net(&self, input_dim: usize, n_classes: usize) -> Net {
        match self.architecture {
            Architecture::Linear => Net::linear(input_dim, n_classes),
            Architecture::Mlp2 => Net::mlp2(input_dim, self.hidden_dim.unwrap_or(input_dim).max(1), n_classes),
        }
    }

    fn lbfgs(&self) -> LbfgsConfig {
        LbfgsConfig {
            max_iter: self.max_steps.max(1),
            ..Default::default()
        }
    }
}

/// A trained head: a map from feature rows to class probabilities.
#[derive(Debug, Clone)]
pub struct Probe {
    pub net: Net,
    pub params: Vec<f64>,
    pub initial_loss: f64,
    pub final_loss: f64,
}

impl Probe {
    pub fn predict_proba(&self, x: &Array2<f64>) -> Array2<f64> {
        self.net.predict_proba(&self.params, x)
    }

    pub fn predict(&self, x: &Array2<f64>) -> Vec<usize> {
        argmax_rows(&self.predict_proba(x))
    }
}

pub fn argmax_rows(p: &Array2<f64>) -> Vec<usize> {
    p.rows()
        .into_iter()
        .map(|r| crate::numerics::argmax(r.as_slice().expect("row-major")))
        .collect()
}

fn distinct_classes(y: &[usize]) -> usize {
    let mut seen: Vec<usize> = y.to_vec();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

fn check_labels(x: &Array2<f64>, y: &[usize], n_classes: usize) -> Result<(), ProbeError> {
    if x.nrows() == 0 {
        return Err(ProbeError::Empty);
    }
    if x.nrows() != y.len() {
        return Err(ProbeError::Shape(format!("{} rows vs {} labels", x.nrows(), y.len())));
    }
    if let Some(&label) = y.iter().find(|&&l| l >= n_classes) {
        return Err(ProbeError::LabelRange { label, n_classes });
    }
    let present = distinct_classes(y);
    if present < 2 {
        return Err(ProbeError::TooFewClasses(present));
    }
    Ok(())
}

/// Fits a classifier head by minimizing mean cross-entropy plus L2.
pub fn train_probe(x: &Array2<f64>, y: &[usize], n_classes: usize, cfg: &ProbeConfig) -> Result<Probe, ProbeError> {
    check_labels(x, y, n_classes)?;
    let net = cfg.net(x.ncols(), n_classes);
    let loss = CrossEntropyLoss::new(net, x, y, cfg.l2_penalty);
    let report = minimize(&loss, net.init(cfg.seed), &cfg.lbfgs());
    Ok(Probe {
        net,
        params: report.params,
        initial_loss: report.initial_loss,
        final_loss: report.final_loss,
    })
}

/// Trains two linear heads jointly; see [`ClassifierPairLoss`].
pub fn train_classifier_pair_mcd(
    source_x: &Array2<f64>,
    source_y: &[usize],
    target_x: &Array2<f64>,
    n_classes: usize,
    cfg: &ProbeConfig,
) -> Result<(Probe, Probe), ProbeError> {
    check_labels(source_x, source_y, n_classes)?;
    if target_x.ncols() != source_x.ncols() {
        return Err(ProbeError::Shape("source/target feature dims differ".into()));
    }
    let net = Net::linear(source_x.ncols(), n_classes);
    let loss = ClassifierPairLoss::new(net, source_x, source_y, target_x, 1.0, cfg.l2_penalty);
    let mut x0 = net.init(cfg.seed);
    x0.extend(net.init(cfg.seed.wrapping_add(0x9e37_79b9)));
    let report = minimize(&loss, x0, &cfg.lbfgs());
    let np = net.n_params();
    let mk = |params: &[f64]| Probe {
        net,
        params: params.to_vec(),
        initial_loss: report.initial_loss,
        final_loss: report.final_loss,
    };
    Ok((mk(&report.params[..np]), mk(&report.params[np..])))
}

/// Trains the linear margin-disparity adversary `f'` against the model's
/// hard predictions on each domain.
pub fn train_mdd_adversary(
    source_x: &Array2<f64>,
    source_pred: &[usize],
    target_x: &Array2<f64>,
    target_pred: &[usize],
    n_classes: usize,
    cfg: &ProbeConfig,
) -> Result<Probe, ProbeError> {
    check_labels(source_x, source_pred, n_classes)?;
    if target_x.nrows() != target_pred.len() {
        return Err(ProbeError::Shape("target rows vs target predictions".into()));
    }
    let net = Net::linear(source_x.ncols(), n_classes);
    let loss = DisparityLoss::new(
        net,
        source_x,
        source_pred,
        target_x,
        target_pred,
        cfg.rho.max(1.0),
        cfg.l2_penalty,
    );
    let report = minimize(&loss, net.init(cfg.seed), &cfg.lbfgs());
    Ok(Probe {
        net,
        params: report.params,
        initial_loss: report.initial_loss,
        final_loss: report.final_loss,
    })
}

/// Per-sample fold indices from a seeded shuffle; fold sizes differ by at
/// most one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub n_folds: usize,
    pub assignment: Vec<usize>,
}

const FOLD_RETRIES: u64 = 10;

impl FoldPlan {
    pub fn shuffled(n: usize, n_folds: usize, seed: u64) -> Result<Self, ProbeError> {
        if n_folds < 2 {
            return Err(ProbeError::Folds(format!("need at least 2 folds, got {n_folds}")));
        }
        if n < n_folds {
            return Err(ProbeError::Folds(format!("{n} samples cannot fill {n_folds} folds")));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut assignment = vec![0; n];
        for (pos, &i) in order.iter().enumerate() {
            assignment[i] = pos % n_folds;
        }
        Ok(FoldPlan { n_folds, assignment })
    }

    /// Stratified plan: a seeded shuffle, stably grouped by class (unlabeled
    /// `None` entries last), dealt round-robin into folds. Every class with
    /// at least two samples then reaches every training complement. Checks
    /// coverage of each class present in `labels` and re-draws with a
    /// perturbed seed up to ten times.
    pub fn covering(labels: &[Option<usize>], n_folds: usize, seed: u64) -> Result<Self, ProbeError> {
        for attempt in 0..FOLD_RETRIES {
            let plan = FoldPlan::stratified(labels, n_folds, seed.wrapping_add(attempt.wrapping_mul(7919)))?;
            if plan.covers(labels) {
                return Ok(plan);
            }
        }
        Err(ProbeError::Folds(format!(
            "some class is missing from a training portion after {FOLD_RETRIES} draws"
        )))
    }

    fn stratified(labels: &[Option<usize>], n_folds: usize, seed: u64) -> Result<Self, ProbeError> {
        if n_folds < 2 {
            return Err(ProbeError::Folds(format!("need at least 2 folds, got {n_folds}")));
        }
        if labels.len() < n_folds {
            return Err(ProbeError::Folds(format!("{} samples cannot fill {n_folds} folds", labels.len())));
        }
        let mut order: Vec<usize> = (0..labels.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        order.sort_by_key(|&i| (labels[i].is_none(), labels[i]));
        let mut assignment = vec![0; labels.len()];
        for (p, &i) in order.iter().enumerate() {
            assignment[i] = p % n_folds;
        }
        Ok(FoldPlan { n_folds, assignment })
    }

    pub fn covers(&self, labels: &[Option<usize>]) -> bool {
        let classes: Vec<usize> = {
            let mut c: Vec<usize> = labels.iter().flatten().copied().collect();
            c.sort_unstable();
            c.dedup();
            c
        };
        (0..self.n_folds).all(|fold| {
            classes.iter().all(|&c| {
                labels
                    .iter()
                    .zip(&self.assignment)
                    .any(|(l, &f)| f != fold && *l == Some(c))
            })
        })
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] != fold).collect()
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == fold).collect()
    }
}

/// Held-out predictions assembled in the original sample order.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub heldout: Array2<f64>,
    pub initial_losses: Vec<f64>,
    pub train_losses: Vec<f64>,
}

pub(crate) fn select_rows(x: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    x.select(Axis(0), idx)
}

/// Trains on each fold's complement and predicts the fold.
pub fn kfold_heldout_predict(
    x: &Array2<f64>,
    y: &[usize],
    n_classes: usize,
    cfg: &ProbeConfig,
    plan: &FoldPlan,
) -> Result<ProbeResult, ProbeError> {
    check_labels(x, y, n_classes)?;
    if plan.assignment.len() != x.nrows() {
        return Err(ProbeError::Folds("plan length differs from sample count".into()));
    }
    let labels: Vec<Option<usize>> = y.iter().map(|&l| Some(l)).collect();
    if !plan.covers(&labels) {
        return Err(ProbeError::Folds("a class is missing from some training portion".into()));
    }
    let mut heldout = Array2::zeros((x.nrows(), n_classes));
    let mut initial_losses = Vec::with_capacity(plan.n_folds);
    let mut train_losses = Vec::with_capacity(plan.n_folds);
    for fold in 0..plan.n_folds {
        let train = plan.train_indices(fold);
        let test = plan.test_indices(fold);
        let ty: Vec<usize> = train.iter().map(|&i| y[i]).collect();
        let probe = train_probe(&select_rows(x, &train), &ty, n_classes, &cfg.with_seed(cfg.seed.wrapping_add(fold as u64)))?;
        let pred = probe.predict_proba(&select_rows(x, &test));
        for (r, &i) in test.iter().enumerate() {
            heldout.row_mut(i).assign(&pred.row(r));
        }
        initial_losses.push(probe.initial_loss);
        train_losses.push(probe.final_loss);
    }
    Ok(ProbeResult {
        heldout,
        initial_losses,
        train_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn blobs(n: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let mut x = Array2::zeros((n, 2));
        let mut y = vec![0; n];
        for i in 0..n {
            let c = i % 2;
            y[i] = c;
            x[[i, 0]] = if c == 0 { -5.0 } else { 5.0 } + noise.sample(&mut rng);
            x[[i, 1]] = noise.sample(&mut rng);
        }
        (x, y)
    }

    fn accuracy(pred: &[usize], y: &[usize]) -> f64 {
        pred.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64
    }

    #[test]
    fn separable_linear() {
        let (x, y) = blobs(100, 1);
        let p = train_probe(&x, &y, 2, &ProbeConfig::linear(3)).unwrap();
        assert_eq!(accuracy(&p.predict(&x), &y), 1.0);
        assert!(p.final_loss <= p.initial_loss);
    }

    #[test]
    fn constant_labels_rejected() {
        let (x, _) = blobs(10, 1);
        assert_eq!(
            train_probe(&x, &[1; 10], 2, &ProbeConfig::linear(0)).unwrap_err(),
            ProbeError::TooFewClasses(1)
        );
    }

    #[test]
    fn xor_needs_mlp() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let noise = Normal::new(0.0, 0.15).unwrap();
        let n = 200;
        let mut x = Array2::zeros((n, 2));
        let mut y = vec![0; n];
        for i in 0..n {
            let (a, b) = ((i % 2) as f64, ((i / 2) % 2) as f64);
            x[[i, 0]] = 2.0 * a - 1.0 + noise.sample(&mut rng);
            x[[i, 1]] = 2.0 * b - 1.0 + noise.sample(&mut rng);
            y[i] = (i % 2) ^ ((i / 2) % 2);
        }
        let cfg = ProbeConfig {
            hidden_dim: Some(8),
            ..ProbeConfig::mlp2(11)
        };
        let p = train_probe(&x, &y, 2, &cfg).unwrap();
        assert!(accuracy(&p.predict(&x), &y) >= 0.95);
        let lin = train_probe(&x, &y, 2, &ProbeConfig::linear(11)).unwrap();
        assert!(accuracy(&lin.predict(&x), &y) < 0.8);
    }

    #[test]
    fn training_is_deterministic() {
        let (x, y) = blobs(40, 2);
        let a = train_probe(&x, &y, 2, &ProbeConfig::mlp2(5)).unwrap();
        let b = train_probe(&x, &y, 2, &ProbeConfig::mlp2(5)).unwrap();
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn fold_plan_partitions() {
        let plan = FoldPlan::shuffled(10, 3, 42).unwrap();
        let mut sizes = [0; 3];
        for &f in &plan.assignment {
            sizes[f] += 1;
        }
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        assert_eq!(plan, FoldPlan::shuffled(10, 3, 42).unwrap());
        assert!(FoldPlan::shuffled(2, 3, 0).is_err());
    }

    #[test]
    fn covering_fails_for_singleton_class() {
        // class 1 appears once: the fold holding it has no class-1 training sample
        let labels = vec![Some(0), Some(0), Some(0), Some(1), Some(0), Some(0)];
        assert!(FoldPlan::covering(&labels, 3, 0).is_err());
        let ok = vec![Some(0), Some(1), Some(0), Some(1), Some(0), Some(1), None];
        assert!(FoldPlan::covering(&ok, 2, 0).is_ok());
    }

    #[test]
    fn heldout_never_sees_own_sample() {
        // labels = parity of index; a probe memorizing a sample would need to see it
        let (x, y) = blobs(9, 3);
        let labels: Vec<Option<usize>> = y.iter().map(|&l| Some(l)).collect();
        let plan = FoldPlan::covering(&labels, 3, 0).unwrap();
        for fold in 0..3 {
            let train = plan.train_indices(fold);
            for i in plan.test_indices(fold) {
                assert!(!train.contains(&i));
            }
        }
        let r = kfold_heldout_predict(&x, &y, 2, &ProbeConfig::linear(0), &plan).unwrap();
        let r2 = kfold_heldout_predict(&x, &y, 2, &ProbeConfig::linear(0), &plan).unwrap();
        assert_eq!(r, r2);
        for row in r.heldout.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn heldout_domain_discrimination() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let n = 120;
        let x = Array2::from_shape_fn((n, 3), |(i, j)| {
            let shift = if i < n / 2 && j == 0 { 8.0 } else { 0.0 };
            shift + noise.sample(&mut rng)
        });
        let y: Vec<usize> = (0..n).map(|i| usize::from(i < n / 2)).collect();
        let labels: Vec<Option<usize>> = y.iter().map(|&l| Some(l)).collect();
        let plan = FoldPlan::covering(&labels, 3, 1).unwrap();
        let r = kfold_heldout_predict(&x, &y, 2, &ProbeConfig::linear(2), &plan).unwrap();
        let acc = accuracy(&argmax_rows(&r.heldout), &y);
        assert!(acc >= 0.95, "{acc}");
    }
}
