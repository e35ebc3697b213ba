//! Fuzz bundles, naive reference implementations and sweep helpers shared
//! by the integration tests and the acceptance suite. The reference
//! implementations never call into the library's numeric code.
#![allow(dead_code)]

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use uda_select::bundle::EvaluationBundle;
use uda_select::metrics::{compute_selected, MetricName, MetricSeeds};
use uda_select::synth::{model_sweep, Family, Scenario};

pub const FUZZ_CASES: u64 = 1000;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// A probability row of one of several shapes: softmax at a random
/// temperature, exact one-hot, uniform, or softmax with exact zeros.
pub fn prob_row<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    match rng.random_range(0..6) {
        0 => {
            let mut r = vec![0.0; k];
            r[rng.random_range(0..k)] = 1.0;
            r
        }
        1 => vec![1.0 / k as f64; k],
        2 => {
            let mut r: Vec<f64> = (0..k).map(|_| if rng.random_bool(0.5) { 0.0 } else { rng.random::<f64>() }).collect();
            if r.iter().all(|&v| v == 0.0) {
                r[0] = 1.0;
            }
            let s: f64 = r.iter().sum();
            r.iter().map(|v| v / s).collect()
        }
        _ => {
            let scale = [0.1, 1.0, 4.0, 20.0][rng.random_range(0..4)];
            let z: Vec<f64> = (0..k).map(|_| scale * normal(rng)).collect();
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = e.iter().sum();
            e.iter().map(|v| v / s).collect()
        }
    }
}

pub fn prob_matrix<R: Rng>(rng: &mut R, n: usize, k: usize) -> Array2<f32> {
    let mut out = Array2::zeros((n, k));
    for i in 0..n {
        for (j, v) in prob_row(rng, k).into_iter().enumerate() {
            out[[i, j]] = v as f32;
        }
    }
    out
}

pub fn prob_matrix_f64<R: Rng>(rng: &mut R, n: usize, k: usize) -> Array2<f64> {
    let mut out = Array2::zeros((n, k));
    for i in 0..n {
        for (j, v) in prob_row(rng, k).into_iter().enumerate() {
            out[[i, j]] = v;
        }
    }
    out
}

fn features<R: Rng>(rng: &mut R, n: usize, d: usize, shift: f64) -> Array2<f32> {
    Array2::from_shape_fn((n, d), |_| (normal(rng) + shift) as f32)
}

/// Random valid bundle: N in [4, 64] per domain with N_t >= K, K in [2, 6],
/// D in [2, 16].
/// Every source label and every source argmax class that occurs does so at
/// least twice, so 3-fold probes can always cover each class.
pub fn fuzz_bundle(seed: u64) -> EvaluationBundle {
    let mut rng = rng(seed);
    let k = rng.random_range(2..=6);
    let ns = rng.random_range(4.max(2 * k)..=64);
    let nt = rng.random_range(4.max(k)..=64);
    let d = rng.random_range(2..=16);
    let mut source_labels: Vec<usize> = (0..ns).map(|i| if i < 2 * k { i % k } else { rng.random_range(0..k) }).collect();
    for i in (1..ns).rev() {
        source_labels.swap(i, rng.random_range(0..=i));
    }
    let shift = rng.random_range(0.0..2.0);
    let target_features = features(&mut rng, nt, d, shift);
    let target_aug_features = target_features.mapv(|v| v + 0.3 * normal(&mut rng) as f32);
    EvaluationBundle {
        model_id: format!("fuzz_{seed}"),
        k_classes: k,
        source_features: features(&mut rng, ns, d, 0.0),
        source_labels,
        source_predictions: without_singleton_argmax(prob_matrix(&mut rng, ns, k)),
        target_predictions: prob_matrix(&mut rng, nt, k),
        target_aug_predictions: Some(prob_matrix(&mut rng, nt, k)),
        target_features,
        target_aug_features: Some(target_aug_features),
        hyperparams: BTreeMap::new(),
        true_target_accuracy: None,
    }
}

/// Rows whose argmax class occurs once become one-hot on the most common
/// argmax class; a single argmax class gets a second one on two rows.
fn without_singleton_argmax(mut p: Array2<f32>) -> Array2<f32> {
    let rows = rows_of(&p);
    let arg: Vec<usize> = rows.iter().map(|r| naive_argmax(r)).collect();
    let mut counts = vec![0usize; p.ncols()];
    for &a in &arg {
        counts[a] += 1;
    }
    let common = (0..counts.len()).max_by_key(|&c| (counts[c], std::cmp::Reverse(c))).unwrap();
    for (i, &a) in arg.iter().enumerate() {
        if counts[a] == 1 {
            p.row_mut(i).fill(0.0);
            p[[i, common]] = 1.0;
        }
    }
    if counts.iter().filter(|&&c| c >= 2).count() < 2 {
        let other = (common + 1) % p.ncols();
        for i in 0..2 {
            p.row_mut(i).fill(0.0);
            p[[i, other]] = 1.0;
        }
    }
    p
}

/// `|a - b| <= tol * max(|a|, |b|, 1)`.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

// ---------------------------------------------------------------------------
// naive reference implementations

/// Rows widened to f64 and divided by their sum.
pub fn rows_of(a: &Array2<f32>) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for i in 0..a.nrows() {
        let mut s = 0.0;
        for j in 0..a.ncols() {
            s += a[[i, j]] as f64;
        }
        let mut r = Vec::new();
        for j in 0..a.ncols() {
            r.push(a[[i, j]] as f64 / s);
        }
        out.push(r);
    }
    out
}

pub fn rows_f64(a: &Array2<f64>) -> Vec<Vec<f64>> {
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[[i, j]]).collect()).collect()
}

pub fn naive_entropy_row(p: &[f64]) -> f64 {
    let mut h = 0.0;
    for &v in p {
        if v > 0.0 {
            h += -v * v.ln();
        }
    }
    h
}

pub fn naive_mean_entropy(p: &[Vec<f64>]) -> f64 {
    let mut s = 0.0;
    for r in p {
        s += naive_entropy_row(r);
    }
    s / p.len() as f64
}

pub fn naive_marginal(p: &[Vec<f64>]) -> Vec<f64> {
    let k = p[0].len();
    let mut m = vec![0.0; k];
    for r in p {
        for j in 0..k {
            m[j] += r[j];
        }
    }
    for v in &mut m {
        *v /= p.len() as f64;
    }
    m
}

pub fn naive_mi(p: &[Vec<f64>]) -> f64 {
    let k = p[0].len() as f64;
    let v = naive_entropy_row(&naive_marginal(p)) - naive_mean_entropy(p);
    v.max(0.0).min(k.ln())
}

pub fn naive_argmax(r: &[f64]) -> usize {
    let mut best = 0;
    for j in 1..r.len() {
        if r[j] > r[best] {
            best = j;
        }
    }
    best
}

pub fn naive_src_acc(b: &EvaluationBundle) -> f64 {
    let p = rows_of(&b.source_predictions);
    let mut hits = 0;
    for (r, &y) in p.iter().zip(&b.source_labels) {
        if naive_argmax(r) == y {
            hits += 1;
        }
    }
    hits as f64 / p.len() as f64
}

pub fn naive_entropy_score(b: &EvaluationBundle) -> f64 {
    let k = b.k_classes as f64;
    (-naive_mean_entropy(&rows_of(&b.target_predictions))).max(-k.ln()).min(0.0)
}

pub fn naive_information_score(src: f64, info: f64, k: usize) -> f64 {
    src + info / (2.0 * (k as f64).ln()) + 0.5
}

pub fn naive_mi_w_source(b: &EvaluationBundle) -> f64 {
    naive_information_score(naive_src_acc(b), naive_mi(&rows_of(&b.target_predictions)), b.k_classes)
}

pub fn naive_snd(p: &[Vec<f64>], tau: f64) -> f64 {
    let n = p.len();
    let mut total = 0.0;
    for i in 0..n {
        let mut logits = vec![0.0; n];
        for j in 0..n {
            let mut dot = 0.0;
            for c in 0..p[i].len() {
                dot += p[i][c] * p[j][c];
            }
            logits[j] = dot / tau;
        }
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for l in &logits {
            z += (l - m).exp();
        }
        for l in &logits {
            let s = (l - m).exp() / z;
            if s > 0.0 {
                total -= s * s.ln();
            }
        }
    }
    (total / n as f64).max(0.0).min((n as f64).ln())
}

/// Singular values by one-sided Jacobi: rotate pairs of columns of the
/// tall orientation until all are orthogonal, then take column norms.
pub fn naive_singular_values(p: &[Vec<f64>]) -> Vec<f64> {
    let (n, k) = (p.len(), p[0].len());
    let mut cols: Vec<Vec<f64>> = if n >= k {
        (0..k).map(|j| p.iter().map(|r| r[j]).collect()).collect()
    } else {
        p.to_vec()
    };
    let m = cols.len();
    for _ in 0..200 {
        let mut done = true;
        for a in 0..m {
            for c in a + 1..m {
                let mut aa = 0.0;
                let mut cc = 0.0;
                let mut ac = 0.0;
                for r in 0..cols[a].len() {
                    aa += cols[a][r] * cols[a][r];
                    cc += cols[c][r] * cols[c][r];
                    ac += cols[a][r] * cols[c][r];
                }
                if ac.abs() <= 1e-15 * (aa * cc).sqrt() || ac == 0.0 {
                    continue;
                }
                done = false;
                let theta = (cc - aa) / (2.0 * ac);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for r in 0..cols[a].len() {
                    let x = cols[a][r];
                    let y = cols[c][r];
                    cols[a][r] = cs * x - sn * y;
                    cols[c][r] = sn * x + cs * y;
                }
            }
        }
        if done {
            break;
        }
    }
    let mut sv: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

pub fn naive_nuclear_norm(p: &[Vec<f64>]) -> f64 {
    naive_singular_values(p).iter().sum()
}

pub fn naive_agreement(q: &[Vec<f64>], q_aug: &[Vec<f64>]) -> f64 {
    let mut same = 0;
    for (a, b) in q.iter().zip(q_aug) {
        if naive_argmax(a) == naive_argmax(b) {
            same += 1;
        }
    }
    same as f64 / q.len() as f64
}

pub fn naive_acm(src: f64, q: &[Vec<f64>], q_aug: &[Vec<f64>]) -> f64 {
    let k = q[0].len() as f64;
    let div = (naive_entropy_row(&naive_marginal(q)) / k.ln()).max(0.0).min(1.0);
    src + 0.5 * (naive_agreement(q, q_aug) + div)
}

// ---------------------------------------------------------------------------
// gradient checking

/// Central-difference check of an objective at `x`; returns the relative
/// error `|g - g_fd| / max(|g|, |g_fd|, 1e-8)` in the Euclidean norm.
pub fn gradient_rel_error(f: &dyn Fn(&[f64], &mut [f64]) -> f64, x: &[f64], step: f64) -> f64 {
    let mut g = vec![0.0; x.len()];
    f(x, &mut g);
    let mut scratch = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    let mut fd = vec![0.0; x.len()];
    for i in 0..x.len() {
        xp[i] = x[i] + step;
        let up = f(&xp, &mut scratch);
        xp[i] = x[i] - step;
        let down = f(&xp, &mut scratch);
        xp[i] = x[i];
        fd[i] = (up - down) / (2.0 * step);
    }
    let diff: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let na: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-8)
}

pub fn random_matrix<R: Rng>(rng: &mut R, n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| normal(rng))
}

pub fn random_vec<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * normal(rng)).collect()
}

pub fn random_labels<R: Rng>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..k)).collect()
}

// ---------------------------------------------------------------------------
// sweep helpers

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Accuracy-point gap between the best model and the one with the highest
/// score (lowest index on ties); accuracies are fractions.
pub fn dev_points(scores: &[f64], acc: &[f64]) -> f64 {
    let pick = naive_argmax(scores);
    let top = acc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    100.0 * (top - acc[pick])
}

/// Scores of a model sweep, one vector per metric in sweep order.
pub struct SweepEval {
    pub t: Vec<f64>,
    pub acc: Vec<f64>,
    pub scores: BTreeMap<MetricName, Vec<f64>>,
    pub details: BTreeMap<MetricName, Vec<BTreeMap<String, f64>>>,
}

impl SweepEval {
    pub fn of(&self, m: MetricName) -> &[f64] {
        &self.scores[&m]
    }

    pub fn detail(&self, m: MetricName, key: &str) -> Vec<f64> {
        self.details[&m].iter().map(|d| d[key]).collect()
    }
}

pub fn evaluate_sweep(s: &Scenario, family: Family, n_models: usize, seed: u64, metrics: &[MetricName]) -> SweepEval {
    let set = model_sweep(s, family, n_models, seed).expect("valid sweep");
    let seeds = MetricSeeds { seed, ..MetricSeeds::default() };
    let mut out = SweepEval { t: Vec::new(), acc: Vec::new(), scores: BTreeMap::new(), details: BTreeMap::new() };
    for b in set.bundles() {
        out.t.push(match b.hyperparams.get("t") {
            Some(uda_select::bundle::HyperValue::Number(x)) => *x,
            _ => f64::NAN,
        });
        out.acc.push(b.true_target_accuracy.expect("synthetic bundles carry accuracy"));
        for o in compute_selected(b, metrics, &seeds) {
            let s = o.result.unwrap_or_else(|e| panic!("{} on {}: {e}", o.metric, b.model_id));
            out.scores.entry(o.metric).or_default().push(s.value);
            out.details.entry(o.metric).or_default().push(s.details);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// search benchmarks (maximization of the negated objective)

pub mod bench {
    use uda_select::bundle::HyperValue;
    use uda_select::search::{run_search, Assignment, FnRunner, HyperparamSpace, SearchConfig};

    pub const N_TRIALS: usize = 50;

    fn num(a: &Assignment, k: &str) -> f64 {
        match a[k] {
            HyperValue::Number(x) => x,
            _ => panic!("`{k}` is not numeric"),
        }
    }

    pub fn quadratic_space() -> HyperparamSpace {
        HyperparamSpace::from_json(r#"{"parameters":[{"name":"x","kind":"uniform","lo":0,"hi":1}]}"#).unwrap()
    }

    pub fn quadratic(a: &Assignment) -> f64 {
        (num(a, "x") - 0.3).powi(2)
    }

    pub fn branin_space() -> HyperparamSpace {
        HyperparamSpace::from_json(
            r#"{"parameters":[{"name":"x1","kind":"uniform","lo":-5,"hi":10},{"name":"x2","kind":"uniform","lo":0,"hi":15}]}"#,
        )
        .unwrap()
    }

    pub fn branin(a: &Assignment) -> f64 {
        let (x1, x2) = (num(a, "x1"), num(a, "x2"));
        let pi = std::f64::consts::PI;
        let b = 5.1 / (4.0 * pi * pi);
        let c = 5.0 / pi;
        (x2 - b * x1 * x1 + c * x1 - 6.0).powi(2) + 10.0 * (1.0 - 1.0 / (8.0 * pi)) * x1.cos() + 10.0
    }

    /// Best (lowest) objective value over 50 trials. `random` keeps the
    /// sampler in its uniform start-up phase for every trial.
    pub fn best_of(space: &HyperparamSpace, f: fn(&Assignment) -> f64, seed: u64, random: bool) -> f64 {
        let mut cfg = SearchConfig { n_trials: N_TRIALS, pruner: None, ..SearchConfig::default() };
        cfg.tpe.seed = seed;
        if random {
            cfg.tpe.n_startup = usize::MAX;
        }
        let out = run_search(space, &mut FnRunner(|a: &Assignment| Ok(-f(a))), &cfg, Vec::new(), &mut |_| Ok(())).unwrap();
        -out.best.final_value.unwrap()
    }

    /// Seeds in `0..n` where TPE's best is no worse than random search's.
    pub fn tpe_wins(space: &HyperparamSpace, f: fn(&Assignment) -> f64, n: u64) -> u64 {
        (0..n).filter(|&s| best_of(space, f, s, false) <= best_of(space, f, s, true)).count() as u64
    }
}
