//! Synthetic two-domain scenarios and model sweeps with exact oracle
//! target accuracy.
//!
//! Classes are isotropic Gaussians around `mu_k = C * e_k`. A fixed
//! nearest-center reference classifier plays the model's classifier head.
//! Each synthetic "model" is a deterministic map of the clean target draw,
//! parameterized by a sweep position `t` in `[0, 1]`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::{BundleError, BundleSet, EvaluationBundle, HyperValue};
use crate::probes::nets::softmax_in_place;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Bundle(#[from] BundleError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shift {
    None,
    /// Rotation by `angle` radians in the plane of the first two axes.
    Rotation { angle: f64 },
    Translation { vector: Vec<f64> },
    /// Target samples of class `y` are drawn around `mu[perm[y]]`.
    LabelPermutation { perm: Vec<usize> },
    /// Each sample moves `strength * 2C` along its own random direction.
    OutlierPush { strength: f64 },
    /// Interpolates every sample toward `mu_0`.
    Collapse { strength: f64 },
    /// Moves a `strength` fraction of samples onto the next class's cluster.
    OverAlignment { strength: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub k_classes: usize,
    pub dim: usize,
    #[serde(default = "default_center_scale")]
    pub center_scale: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    pub n_source: usize,
    pub n_target: usize,
    #[serde(default = "default_shift")]
    pub shift: Shift,
    #[serde(default)]
    pub seed: u64,
}

fn default_center_scale() -> f64 {
    3.0
}
fn default_sigma() -> f64 {
    1.0
}
fn default_shift() -> Shift {
    Shift::None
}

impl Scenario {
    /// The default benchmark: four classes in eight dimensions, 400 samples
    /// per domain, target translated by `1.5 * (e0 - e1 + e2 - e3)` so that
    /// half the classes drift toward a neighbour.
    pub fn benchmark(seed: u64) -> Self {
        let mut vector = vec![0.0; 8];
        vector[..4].copy_from_slice(&[1.5, -1.5, 1.5, -1.5]);
        Scenario {
            k_classes: 4,
            dim: 8,
            center_scale: 3.0,
            sigma: 1.0,
            n_source: 400,
            n_target: 400,
            shift: Shift::Translation { vector },
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Invalid(m));
        if self.k_classes < 2 {
            return bad(format!("k_classes must be >= 2, got {}", self.k_classes));
        }
        if self.dim < self.k_classes {
            return bad(format!("dim {} must be >= k_classes {}", self.dim, self.k_classes));
        }
        if !(self.center_scale > 0.0) || !(self.sigma > 0.0) {
            return bad("center_scale and sigma must be positive".into());
        }
        if self.n_source < self.k_classes || self.n_target < self.k_classes {
            return bad("need at least one sample per class in each domain".into());
        }
        match &self.shift {
            Shift::Translation { vector } if vector.len() != self.dim => {
                bad(format!("translation has {} entries, dim is {}", vector.len(), self.dim))
            }
            Shift::LabelPermutation { perm } => {
                let mut seen = perm.clone();
                seen.sort_unstable();
                if seen != (0..self.k_classes).collect::<Vec<_>>() {
                    bad(format!("{perm:?} is not a permutation of 0..{}", self.k_classes))
                } else {
                    Ok(())
                }
            }
            Shift::OutlierPush { strength } | Shift::Collapse { strength } | Shift::OverAlignment { strength }
                if !(0.0..=1.0).contains(strength) =>
            {
                bad(format!("shift strength {strength} outside [0, 1]"))
            }
            _ => Ok(()),
        }
    }

    pub fn centers(&self) -> Array2<f64> {
        let mut mu = Array2::zeros((self.k_classes, self.dim));
        for k in 0..self.k_classes {
            mu[[k, k]] = self.center_scale;
        }
        mu
    }
}

/// A labeled draw from a scenario.
#[derive(Debug, Clone)]
pub struct ScenarioDraw {
    pub scenario: Scenario,
    pub centers: Array2<f64>,
    pub source_x: Array2<f64>,
    pub source_y: Vec<usize>,
    /// Target drawn from the source distribution (no shift).
    pub target_clean: Array2<f64>,
    /// `target_clean` with the scenario's shift applied.
    pub target_x: Array2<f64>,
    /// Hidden target labels.
    pub target_y: Vec<usize>,
    /// Per-sample uniforms in `[0, 1)` reused by the sweeps.
    pub target_u: Vec<f64>,
}

fn balanced_labels(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut y: Vec<usize> = (0..n).map(|i| i % k).collect();
    y.shuffle(rng);
    y
}

fn gaussian_rows(centers: &Array2<f64>, y: &[usize], sigma: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let d = centers.ncols();
    let mut x = Array2::zeros((y.len(), d));
    for (i, &c) in y.iter().enumerate() {
        for j in 0..d {
            let z: f64 = StandardNormal.sample(rng);
            x[[i, j]] = centers[[c, j]] + sigma * z;
        }
    }
    x
}

/// Draws source and target sets; deterministic per `s.seed`.
pub fn generate_scenario(s: &Scenario) -> Result<ScenarioDraw, SynthError> {
    s.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let mu = s.centers();
    let source_y = balanced_labels(s.n_source, s.k_classes, &mut rng);
    let source_x = gaussian_rows(&mu, &source_y, s.sigma, &mut rng);
    let target_y = balanced_labels(s.n_target, s.k_classes, &mut rng);
    let target_clean = gaussian_rows(&mu, &target_y, s.sigma, &mut rng);
    let target_u: Vec<f64> = (0..s.n_target).map(|_| rng.random::<f64>()).collect();

    let mut x = target_clean.clone();
    match &s.shift {
        Shift::None => {}
        Shift::Rotation { angle } => {
            let (sn, cs) = angle.sin_cos();
            for mut r in x.rows_mut() {
                let (a, b) = (r[0], r[1]);
                r[0] = cs * a - sn * b;
                r[1] = sn * a + cs * b;
            }
        }
        Shift::Translation { vector } => {
            let v = Array1::from(vector.clone());
            x += &v;
        }
        Shift::LabelPermutation { perm } => {
            for (i, &y) in target_y.iter().enumerate() {
                let delta = &mu.row(perm[y]) - &mu.row(y);
                let mut r = x.row_mut(i);
                r += &delta;
            }
        }
        Shift::OutlierPush { strength } => {
            let radius = 2.0 * s.center_scale * strength;
            for mut r in x.rows_mut() {
                let dir: Vec<f64> = (0..s.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
                for (xv, dv) in r.iter_mut().zip(&dir) {
                    *xv += radius * dv / norm;
                }
            }
        }
        Shift::Collapse { strength } => {
            for mut r in x.rows_mut() {
                let moved = &r * (1.0 - strength) + &(&mu.row(0) * *strength);
                r.assign(&moved);
            }
        }
        Shift::OverAlignment { strength } => {
            for (i, &y) in target_y.iter().enumerate() {
                if target_u[i] < *strength {
                    let delta = &mu.row((y + 1) % s.k_classes) - &mu.row(y);
                    let mut r = x.row_mut(i);
                    r += &delta;
                }
            }
        }
    }
    Ok(ScenarioDraw {
        scenario: s.clone(),
        centers: mu,
        source_x,
        source_y,
        target_clean,
        target_x: x,
        target_y,
        target_u,
    })
}

/// Nearest-center softmax classifier with inverse temperature `beta`:
/// logits `beta * (x . mu_k - |mu_k|^2 / 2) / sigma^2`.
#[derive(Debug, Clone)]
pub struct ReferenceClassifier {
    pub centers: Array2<f64>,
    pub sigma: f64,
    pub beta: f64,
}

impl ReferenceClassifier {
    pub fn new(centers: Array2<f64>, sigma: f64) -> Self {
        ReferenceClassifier { centers, sigma, beta: 1.0 }
    }

    pub fn with_beta(&self, beta: f64) -> Self {
        ReferenceClassifier { beta, ..self.clone() }
    }

    pub fn predict_proba(&self, x: &Array2<f64>) -> Array2<f64> {
        let half_norms: Vec<f64> = self.centers.rows().into_iter().map(|m| 0.5 * m.dot(&m)).collect();
        let scale = self.beta / (self.sigma * self.sigma);
        let mut logits = x.dot(&self.centers.t());
        let mut row = vec![0.0; self.centers.nrows()];
        for mut r in logits.rows_mut() {
            for (k, v) in r.iter().enumerate() {
                row[k] = scale * (v - half_norms[k]);
            }
            softmax_in_place(&mut row);
            r.assign(&Array1::from(row.clone()));
        }
        logits
    }
}

/// Argmax accuracy of stored predictions against hidden labels.
pub fn oracle_accuracy(predictions: &Array2<f32>, labels: &[usize]) -> f64 {
    let hits = predictions
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(r, &y)| {
            let row: Vec<f64> = r.iter().map(|&v| v as f64).collect();
            crate::numerics::argmax(&row) == y
        })
        .count();
    hits as f64 / labels.len() as f64
}

/// `F + sigma_aug * N(0, I)`, deterministic per seed.
pub fn augment_features(f: &Array2<f64>, sigma_aug: f64, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = f.clone();
    for v in out.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v += sigma_aug * z;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Alignment strength `a = 2t`: under-aligned, aligned at `t = 1/2`,
    /// then over-corrected past the clean target.
    Alignment,
    /// Aligns over the first half, then pulls target features toward the
    /// centroid of the class centers while sharpening the classifier.
    AttackMi,
    /// Residual shift shrinks over the whole sweep while a growing share
    /// of samples is pulled onto the next class's cluster.
    OverAlignment,
    /// Aligns over the first half, then collapses every target feature
    /// onto `mu_0` with a sharpening classifier.
    Collapse,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Alignment, Family::AttackMi, Family::OverAlignment, Family::Collapse];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Alignment => "alignment",
            Family::AttackMi => "attack_mi",
            Family::OverAlignment => "over_alignment",
            Family::Collapse => "collapse",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| format!("unknown family `{s}` (known: alignment, attack_mi, over_alignment, collapse)"))
    }
}

/// Augmentation noise relative to the class spread.
pub const AUG_NOISE_RATIO: f64 = 0.5;
const ATTACK_BETA_MAX: f64 = 30.0;
const ATTACK_DECOY_OFFSET: f64 = 0.15;
const COLLAPSE_BETA_MAX: f64 = 20.0;
const OVER_ALIGNMENT_ONSET: f64 = 0.4;
const OVER_ALIGNMENT_MAX_PULL: f64 = 0.5;
const OVER_ALIGNMENT_VIEW_PULL: f64 = 0.5;

/// One synthetic model: a family and a position along its sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticModel {
    pub family: Family,
    pub t: f64,
}

struct ModelOutput {
    target: Array2<f64>,
    target_aug: Array2<f64>,
    beta: f64,
}

impl SyntheticModel {
    fn features(&self, draw: &ScenarioDraw, aug_seed: u64) -> ModelOutput {
        let s = &draw.scenario;
        let clean = &draw.target_clean;
        let gap = &draw.target_x - clean;
        let sigma_aug = AUG_NOISE_RATIO * s.sigma;
        let noise = augment_features(&Array2::zeros(clean.raw_dim()), sigma_aug, aug_seed);
        let aligned = |a: f64| clean + &(&gap * (1.0 - a));
        let t = self.t.clamp(0.0, 1.0);
        match self.family {
            Family::Alignment => {
                let z = aligned(2.0 * t);
                ModelOutput { target_aug: &z + &noise, target: z, beta: 1.0 }
            }
            Family::Collapse | Family::AttackMi if t <= 0.5 => {
                let z = aligned(2.0 * t);
                ModelOutput { target_aug: &z + &noise, target: z, beta: 1.0 }
            }
            Family::Collapse => {
                let c = 2.0 * t - 1.0;
                let z = clean * (1.0 - c) + &(&draw.centers.row(0) * c);
                ModelOutput {
                    target_aug: &z + &(&noise * (1.0 - c)),
                    target: z,
                    beta: 1.0 + c * (COLLAPSE_BETA_MAX - 1.0),
                }
            }
            Family::AttackMi => {
                let c = 2.0 * t - 1.0;
                let centroid = draw.centers.mean_axis(Axis(0)).expect("k >= 2");
                let (decoys, onsets) = attack_plan(draw);
                let mut z = clean.clone();
                for (i, &k) in decoys.iter().enumerate() {
                    // each sample jumps to its decoy once the sweep passes its onset
                    if c >= onsets[i] {
                        let decoy = &centroid + &((&draw.centers.row(k) - &centroid) * ATTACK_DECOY_OFFSET);
                        z.row_mut(i).assign(&decoy);
                    }
                }
                ModelOutput {
                    target_aug: &z + &noise,
                    target: z,
                    beta: 1.0 + (ATTACK_BETA_MAX - 1.0) * c,
                }
            }
            Family::OverAlignment => {
                let base = aligned(t);
                let share = OVER_ALIGNMENT_MAX_PULL * ((t - OVER_ALIGNMENT_ONSET) / (1.0 - OVER_ALIGNMENT_ONSET)).max(0.0);
                let mut z = base.clone();
                let mut aug = &base + &noise;
                let k = s.k_classes;
                for (i, &y) in draw.target_y.iter().enumerate() {
                    if draw.target_u[i] < share {
                        let delta = &draw.centers.row((y + 1) % k) - &draw.centers.row(y);
                        // augmented views of pulled samples are only partly pulled
                        let rho = OVER_ALIGNMENT_VIEW_PULL * (draw.target_u[i] * 7919.0).fract();
                        let mut r = z.row_mut(i);
                        r += &delta;
                        let mut ra = aug.row_mut(i);
                        ra += &(&delta * rho);
                    }
                }
                ModelOutput { target: z, target_aug: aug, beta: 1.0 }
            }
        }
    }

    /// Simulates the model on a scenario draw.
    pub fn bundle(&self, draw: &ScenarioDraw, model_id: &str, aug_seed: u64) -> EvaluationBundle {
        self.bundle_jittered(draw, model_id, aug_seed, 0.0, 0)
    }

    /// As [`bundle`](Self::bundle), with the target features (and their
    /// augmented views) perturbed by `jitter * sigma` Gaussian noise; used
    /// to mimic a model that has not finished training.
    pub fn bundle_jittered(&self, draw: &ScenarioDraw, model_id: &str, aug_seed: u64, jitter: f64, jitter_seed: u64) -> EvaluationBundle {
        let s = &draw.scenario;
        let mut out = self.features(draw, aug_seed);
        if jitter > 0.0 {
            let noise = augment_features(&Array2::zeros(out.target.raw_dim()), jitter * s.sigma, jitter_seed);
            out.target += &noise;
            out.target_aug += &noise;
        }
        let clf = ReferenceClassifier::new(draw.centers.clone(), s.sigma).with_beta(out.beta);
        let f32s = |a: &Array2<f64>| a.mapv(|v| v as f32);
        let target_predictions = renormalized_f32(&clf.predict_proba(&out.target));
        let mut hyperparams = BTreeMap::new();
        hyperparams.insert("family".to_string(), HyperValue::from(self.family.as_str()));
        hyperparams.insert("method".to_string(), HyperValue::from(self.family.as_str()));
        hyperparams.insert("t".to_string(), HyperValue::Number(self.t));
        let acc = oracle_accuracy(&target_predictions, &draw.target_y);
        EvaluationBundle {
            model_id: model_id.to_string(),
            k_classes: s.k_classes,
            source_features: f32s(&draw.source_x),
            source_labels: draw.source_y.clone(),
            source_predictions: renormalized_f32(&clf.predict_proba(&draw.source_x)),
            target_features: f32s(&out.target),
            target_aug_predictions: Some(renormalized_f32(&clf.predict_proba(&out.target_aug))),
            target_aug_features: Some(f32s(&out.target_aug)),
            target_predictions,
            hyperparams,
            true_target_accuracy: Some(acc),
        }
    }
}

/// Decoy classes and onsets for the attack. Samples are attacked in groups
/// holding one sample per class, each group under a shared cyclic label
/// shift, so the predicted class histogram stays balanced.
fn attack_plan(draw: &ScenarioDraw) -> (Vec<usize>, Vec<f64>) {
    let k = draw.scenario.k_classes;
    let n = draw.target_y.len();
    let mut rng = ChaCha8Rng::seed_from_u64(draw.scenario.seed ^ 0xa77a_c4ed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &y) in draw.target_y.iter().enumerate() {
        by_class[y].push(i);
    }
    for members in &mut by_class {
        members.shuffle(&mut rng);
    }
    let (mut decoys, mut onsets) = (vec![0; n], vec![1.0; n]);
    let n_groups = by_class.iter().map(Vec::len).max().unwrap_or(0);
    for g in 0..n_groups {
        let onset = rng.random_range(0.05..=1.0);
        let shift = rng.random_range(0..k);
        for members in &by_class {
            if let Some(&i) = members.get(g) {
                decoys[i] = (draw.target_y[i] + shift) % k;
                onsets[i] = onset;
            }
        }
    }
    (decoys, onsets)
}

/// Casts to f32 and renormalizes rows in f32 so they pass validation.
fn renormalized_f32(p: &Array2<f64>) -> Array2<f32> {
    let mut out = p.mapv(|v| v as f32);
    for mut r in out.rows_mut() {
        let s: f32 = r.sum();
        if (s - 1.0).abs() > 1e-6 {
            r.mapv_inplace(|v| v / s);
        }
    }
    out
}

/// Sweep positions `i / (n - 1)`.
pub fn sweep_positions(n_models: usize) -> Vec<f64> {
    (0..n_models).map(|i| i as f64 / (n_models - 1) as f64).collect()
}

/// `n_models` models evenly spaced along a family's sweep.
pub fn model_sweep(s: &Scenario, family: Family, n_models: usize, base_seed: u64) -> Result<BundleSet, SynthError> {
    if n_models < 3 {
        return Err(SynthError::Invalid(format!("a sweep needs at least 3 models, got {n_models}")));
    }
    let draw = generate_scenario(s)?;
    let bundles = sweep_positions(n_models)
        .into_iter()
        .enumerate()
        .map(|(i, t)| SyntheticModel { family, t }.bundle(&draw, &format!("model_{i:02}"), base_seed))
        .collect();
    Ok(BundleSet::new(bundles)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(shift: Shift) -> Scenario {
        Scenario {
            k_classes: 3,
            dim: 4,
            center_scale: 3.0,
            sigma: 1.0,
            n_source: 90,
            n_target: 90,
            shift,
            seed: 5,
        }
    }

    #[test]
    fn no_shift_means_identical_distributions() {
        let d = generate_scenario(&scenario(Shift::None)).unwrap();
        assert_eq!(d.target_x, d.target_clean);
        let ms = d.source_x.mean_axis(Axis(0)).unwrap();
        let mt = d.target_x.mean_axis(Axis(0)).unwrap();
        for (a, b) in ms.iter().zip(mt.iter()) {
            assert!((a - b).abs() < 0.5);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let s = scenario(Shift::OutlierPush { strength: 0.3 });
        let (a, b) = (generate_scenario(&s).unwrap(), generate_scenario(&s).unwrap());
        assert_eq!(a.target_x, b.target_x);
        assert_eq!(a.source_y, b.source_y);
        let mut other = s.clone();
        other.seed = 6;
        assert_ne!(generate_scenario(&other).unwrap().target_x, a.target_x);
    }

    #[test]
    fn label_swap_misclassifies_swapped_mass() {
        let d = generate_scenario(&scenario(Shift::LabelPermutation { perm: vec![1, 0, 2] })).unwrap();
        let clf = ReferenceClassifier::new(d.centers.clone(), 1.0);
        let p = clf.predict_proba(&d.target_x);
        let pred = crate::probes::argmax_rows(&p);
        let swapped: Vec<usize> = (0..d.target_y.len()).filter(|&i| d.target_y[i] < 2).collect();
        let wrong = swapped.iter().filter(|&&i| pred[i] != d.target_y[i]).count();
        assert!(wrong as f64 / swapped.len() as f64 > 0.9);
        let kept: Vec<usize> = (0..d.target_y.len()).filter(|&i| d.target_y[i] == 2).collect();
        let right = kept.iter().filter(|&&i| pred[i] == 2).count();
        assert!(right as f64 / kept.len() as f64 > 0.9);
    }

    #[test]
    fn invalid_scenarios() {
        let mut s = scenario(Shift::Collapse { strength: 1.5 });
        assert!(generate_scenario(&s).is_err());
        s.shift = Shift::LabelPermutation { perm: vec![0, 0, 1] };
        assert!(generate_scenario(&s).is_err());
        s.shift = Shift::None;
        s.dim = 2;
        assert!(generate_scenario(&s).is_err());
    }

    #[test]
    fn augmentation_noise() {
        let f = Array2::zeros((200, 60));
        assert_eq!(augment_features(&f, 0.0, 3), f);
        let a = augment_features(&f, 0.7, 3);
        assert_eq!(a, augment_features(&f, 0.7, 3));
        let var = a.iter().map(|v| v * v).sum::<f64>() / a.len() as f64;
        assert!((var / 0.49 - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn oracle_matches_direct_evaluation() {
        let s = scenario(Shift::Translation { vector: vec![1.5, -1.5, 0.0, 0.0] });
        let set = model_sweep(&s, Family::Alignment, 5, 1).unwrap();
        let d = generate_scenario(&s).unwrap();
        for b in set.bundles() {
            let pred = crate::probes::argmax_rows(&b.target_probs());
            let hits = pred.iter().zip(&d.target_y).filter(|(p, y)| p == y).count();
            assert_eq!(b.true_target_accuracy.unwrap(), hits as f64 / d.target_y.len() as f64);
        }
    }

    #[test]
    fn zero_shift_alignment_is_flat() {
        let set = model_sweep(&scenario(Shift::None), Family::Alignment, 6, 1).unwrap();
        let accs: Vec<f64> = set.bundles().iter().map(|b| b.true_target_accuracy.unwrap()).collect();
        assert!(accs.windows(2).all(|w| w[0] == w[1]), "{accs:?}");
    }

    #[test]
    fn collapse_endpoint_is_constant() {
        let set = model_sweep(&scenario(Shift::None), Family::Collapse, 5, 1).unwrap();
        let last = set.bundles().last().unwrap();
        let first = last.target_predictions.row(0).to_owned();
        assert!(last.target_predictions.rows().into_iter().all(|r| r == first));
        assert_eq!(first[0], 1.0);
        assert!((last.true_target_accuracy.unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn sweep_needs_three_models() {
        assert!(model_sweep(&scenario(Shift::None), Family::Alignment, 2, 0).is_err());
    }
}
