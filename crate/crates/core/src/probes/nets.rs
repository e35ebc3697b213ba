//! Linear and two-layer heads with hand-written gradients, and the probe
//! training objectives built on them.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lbfgs::Objective;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Linear,
    /// Linear -> tanh -> linear.
    Mlp2,
}

/// Shape of a head; parameters live in a flat `[f64]`.
///
/// Layout: linear is `W (c x d)` then `b (c)`; mlp2 is `W1 (h x d)`,
/// `b1 (h)`, `W2 (c x h)`, `b2 (c)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Net {
    pub arch: Architecture,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub n_classes: usize,
}

impl Net {
    pub fn linear(input_dim: usize, n_classes: usize) -> Self {
        Net {
            arch: Architecture::Linear,
            input_dim,
            hidden_dim: 0,
            n_classes,
        }
    }

    pub fn mlp2(input_dim: usize, hidden_dim: usize, n_classes: usize) -> Self {
        Net {
            arch: Architecture::Mlp2,
            input_dim,
            hidden_dim,
            n_classes,
        }
    }

    pub fn n_params(&self) -> usize {
        let (d, h, c) = (self.input_dim, self.hidden_dim, self.n_classes);
        match self.arch {
            Architecture::Linear => c * d + c,
            Architecture::Mlp2 => h * d + h + c * h + c,
        }
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for every parameter.
    pub fn init(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |fan_in: usize, count: usize, out: &mut Vec<f64>| {
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            for _ in 0..count {
                out.push(rng.random_range(-bound..=bound));
            }
        };
        let (d, h, c) = (self.input_dim, self.hidden_dim, self.n_classes);
        let mut p = Vec::with_capacity(self.n_params());
        match self.arch {
            Architecture::Linear => {
                draw(d, c * d + c, &mut p);
            }
            Architecture::Mlp2 => {
                draw(d, h * d + h, &mut p);
                draw(h, c * h + c, &mut p);
            }
        }
        p
    }

    fn hidden_len(&self) -> usize {
        match self.arch {
            Architecture::Linear => 0,
            Architecture::Mlp2 => self.hidden_dim,
        }
    }

    /// Writes logits for one sample; `hidden` receives tanh activations.
    pub fn forward(&self, params: &[f64], x: &[f64], hidden: &mut [f64], logits: &mut [f64]) {
        let (d, h, c) = (self.input_dim, self.hidden_dim, self.n_classes);
        match self.arch {
            Architecture::Linear => {
                let (w, b) = params.split_at(c * d);
                for k in 0..c {
                    logits[k] = b[k] + dot(&w[k * d..(k + 1) * d], x);
                }
            }
            Architecture::Mlp2 => {
                let (w1, rest) = params.split_at(h * d);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(c * h);
                for j in 0..h {
                    hidden[j] = (b1[j] + dot(&w1[j * d..(j + 1) * d], x)).tanh();
                }
                for k in 0..c {
                    logits[k] = b2[k] + dot(&w2[k * h..(k + 1) * h], hidden);
                }
            }
        }
    }

    /// Accumulates d(loss)/d(params) given d(loss)/d(logits) for one sample.
    pub fn backward(&self, params: &[f64], x: &[f64], hidden: &[f64], dlogits: &[f64], grad: &mut [f64]) {
        let (d, h, c) = (self.input_dim, self.hidden_dim, self.n_classes);
        match self.arch {
            Architecture::Linear => {
                let (gw, gb) = grad.split_at_mut(c * d);
                for k in 0..c {
                    let dk = dlogits[k];
                    gb[k] += dk;
                    for (g, xi) in gw[k * d..(k + 1) * d].iter_mut().zip(x) {
                        *g += dk * xi;
                    }
                }
            }
            Architecture::Mlp2 => {
                let w2 = &params[h * d + h..h * d + h + c * h];
                let (gw1, rest) = grad.split_at_mut(h * d);
                let (gb1, rest) = rest.split_at_mut(h);
                let (gw2, gb2) = rest.split_at_mut(c * h);
                for k in 0..c {
                    let dk = dlogits[k];
                    gb2[k] += dk;
                    for (g, a) in gw2[k * h..(k + 1) * h].iter_mut().zip(hidden) {
                        *g += dk * a;
                    }
                }
                for j in 0..h {
                    let mut dh = 0.0;
                    for k in 0..c {
                        dh += dlogits[k] * w2[k * h + j];
                    }
                    let dpre = dh * (1.0 - hidden[j] * hidden[j]);
                    gb1[j] += dpre;
                    for (g, xi) in gw1[j * d..(j + 1) * d].iter_mut().zip(x) {
                        *g += dpre * xi;
                    }
                }
            }
        }
    }

    /// `penalty * sum(weights^2)` over weight matrices (biases excluded),
    /// adding its gradient into `grad`.
    pub fn l2(&self, params: &[f64], penalty: f64, grad: &mut [f64]) -> f64 {
        if penalty == 0.0 {
            return 0.0;
        }
        let (d, h, c) = (self.input_dim, self.hidden_dim, self.n_classes);
        let ranges = match self.arch {
            Architecture::Linear => vec![0..c * d],
            Architecture::Mlp2 => vec![0..h * d, h * d + h..h * d + h + c * h],
        };
        let mut total = 0.0;
        for r in ranges {
            for i in r {
                total += params[i] * params[i];
                grad[i] += 2.0 * penalty * params[i];
            }
        }
        penalty * total
    }

    /// Row-stochastic predictions for every row of `x`.
    pub fn predict_proba(&self, params: &[f64], x: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((x.nrows(), self.n_classes));
        let mut hidden = vec![0.0; self.hidden_len()];
        let mut logits = vec![0.0; self.n_classes];
        for (i, row) in x.rows().into_iter().enumerate() {
            let xs = row.to_vec();
            self.forward(params, &xs, &mut hidden, &mut logits);
            softmax_in_place(&mut logits);
            for k in 0..self.n_classes {
                out[[i, k]] = logits[k];
            }
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn softmax_in_place(z: &mut [f64]) {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in z.iter_mut() {
        *v /= s;
    }
}

fn rows(x: &Array2<f64>) -> Vec<Vec<f64>> {
    x.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Mean cross-entropy plus L2 on weights.
pub struct CrossEntropyLoss {
    net: Net,
    x: Vec<Vec<f64>>,
    y: Vec<usize>,
    l2: f64,
}

impl CrossEntropyLoss {
    pub fn new(net: Net, x: &Array2<f64>, y: &[usize], l2: f64) -> Self {
        CrossEntropyLoss {
            net,
            x: rows(x),
            y: y.to_vec(),
            l2,
        }
    }
}

impl Objective for CrossEntropyLoss {
    fn n_params(&self) -> usize {
        self.net.n_params()
    }

    fn value_grad(&self, params: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let c = self.net.n_classes;
        let mut hidden = vec![0.0; self.net.hidden_len()];
        let mut logits = vec![0.0; c];
        let inv_n = 1.0 / self.x.len() as f64;
        let mut loss = 0.0;
        for (x, &y) in self.x.iter().zip(&self.y) {
            self.net.forward(params, x, &mut hidden, &mut logits);
            let lse = log_sum_exp(&logits);
            loss += (lse - logits[y]) * inv_n;
            for k in 0..c {
                logits[k] = (logits[k] - lse).exp() * inv_n;
            }
            logits[y] -= inv_n;
            self.net.backward(params, x, &hidden, &logits, grad);
        }
        loss + self.net.l2(params, self.l2, grad)
    }
}

/// Two linear classifiers fit jointly: both supervised on source, pushed to
/// disagree on target.
///
/// `CE_s(h) + CE_s(h') - lambda * mean_t[ mean_k |p_k - p'_k| ] + l2`.
pub struct ClassifierPairLoss {
    net: Net,
    xs: Vec<Vec<f64>>,
    ys: Vec<usize>,
    xt: Vec<Vec<f64>>,
    lambda: f64,
    l2: f64,
}

impl ClassifierPairLoss {
    pub fn new(net: Net, xs: &Array2<f64>, ys: &[usize], xt: &Array2<f64>, lambda: f64, l2: f64) -> Self {
        ClassifierPairLoss {
            net,
            xs: rows(xs),
            ys: ys.to_vec(),
            xt: rows(xt),
            lambda,
            l2,
        }
    }
}

impl Objective for ClassifierPairLoss {
    fn n_params(&self) -> usize {
        2 * self.net.n_params()
    }

    fn value_grad(&self, params: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let np = self.net.n_params();
        let c = self.net.n_classes;
        let (pa, pb) = params.split_at(np);
        let mut loss = 0.0;
        let mut hidden = vec![0.0; self.net.hidden_len()];
        let mut logits = vec![0.0; c];
        {
            let inv = 1.0 / self.xs.len() as f64;
            for (half, p) in [(0, pa), (1, pb)] {
                let g = &mut grad[half * np..(half + 1) * np];
                for (x, &y) in self.xs.iter().zip(&self.ys) {
                    self.net.forward(p, x, &mut hidden, &mut logits);
                    let lse = log_sum_exp(&logits);
                    loss += (lse - logits[y]) * inv;
                    for k in 0..c {
                        logits[k] = (logits[k] - lse).exp() * inv;
                    }
                    logits[y] -= inv;
                    self.net.backward(p, x, &hidden, &logits, g);
                }
            }
        }
        if !self.xt.is_empty() && self.lambda != 0.0 {
            let scale = self.lambda / (self.xt.len() as f64 * c as f64);
            let mut hb = vec![0.0; self.net.hidden_len()];
            let mut qa = vec![0.0; c];
            let mut qb = vec![0.0; c];
            let mut da = vec![0.0; c];
            let mut db = vec![0.0; c];
            for x in &self.xt {
                self.net.forward(pa, x, &mut hidden, &mut qa);
                self.net.forward(pb, x, &mut hb, &mut qb);
                softmax_in_place(&mut qa);
                softmax_in_place(&mut qb);
                // dL/dp for L = -scale * sum_k |pa_k - pb_k|
                let mut sa = 0.0;
                let mut sb = 0.0;
                let mut ga = vec![0.0; c];
                for k in 0..c {
                    let diff = qa[k] - qb[k];
                    loss -= scale * diff.abs();
                    let sg = if diff > 0.0 {
                        1.0
                    } else if diff < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    ga[k] = -scale * sg;
                    sa += ga[k] * qa[k];
                    sb += -ga[k] * qb[k];
                }
                for k in 0..c {
                    da[k] = qa[k] * (ga[k] - sa);
                    db[k] = qb[k] * (-ga[k] - sb);
                }
                self.net.backward(pa, x, &hidden, &da, &mut grad[..np]);
                self.net.backward(pb, x, &hb, &db, &mut grad[np..]);
            }
        }
        let (ga, gb) = grad.split_at_mut(np);
        loss + self.net.l2(pa, self.l2, ga) + self.net.l2(pb, self.l2, gb)
    }
}

/// Margin-disparity adversary: agree with the model's hard labels on
/// source, move mass off them on target.
///
/// `CE(f'(x_s), y_s) - (1/rho) * mean_t log(1 - p_{f'}(y_t)) + l2`.
pub struct DisparityLoss {
    net: Net,
    xs: Vec<Vec<f64>>,
    ys: Vec<usize>,
    xt: Vec<Vec<f64>>,
    yt: Vec<usize>,
    rho: f64,
    l2: f64,
}

impl DisparityLoss {
    pub fn new(
        net: Net,
        xs: &Array2<f64>,
        ys: &[usize],
        xt: &Array2<f64>,
        yt: &[usize],
        rho: f64,
        l2: f64,
    ) -> Self {
        DisparityLoss {
            net,
            xs: rows(xs),
            ys: ys.to_vec(),
            xt: rows(xt),
            yt: yt.to_vec(),
            rho,
            l2,
        }
    }
}

impl Objective for DisparityLoss {
    fn n_params(&self) -> usize {
        self.net.n_params()
    }

    fn value_grad(&self, params: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let c = self.net.n_classes;
        let mut hidden = vec![0.0; self.net.hidden_len()];
        let mut logits = vec![0.0; c];
        let mut loss = 0.0;
        let inv_s = 1.0 / self.xs.len() as f64;
        for (x, &y) in self.xs.iter().zip(&self.ys) {
            self.net.forward(params, x, &mut hidden, &mut logits);
            let lse = log_sum_exp(&logits);
            loss += (lse - logits[y]) * inv_s;
            for k in 0..c {
                logits[k] = (logits[k] - lse).exp() * inv_s;
            }
            logits[y] -= inv_s;
            self.net.backward(params, x, &hidden, &logits, grad);
        }
        if !self.xt.is_empty() {
            let scale = 1.0 / (self.rho * self.xt.len() as f64);
            let mut others = vec![0.0; c - 1];
            let mut dz = vec![0.0; c];
            for (x, &y) in self.xt.iter().zip(&self.yt) {
                self.net.forward(params, x, &mut hidden, &mut logits);
                let lse = log_sum_exp(&logits);
                let mut idx = 0;
                for (k, &z) in logits.iter().enumerate() {
                    if k != y {
                        others[idx] = z;
                        idx += 1;
                    }
                }
                let lse_other = log_sum_exp(&others);
                // -log(1 - p_y) = lse - lse_other
                loss += scale * (lse - lse_other);
                for k in 0..c {
                    let p = (logits[k] - lse).exp();
                    let r = if k == y { 0.0 } else { (logits[k] - lse_other).exp() };
                    dz[k] = scale * (p - r);
                }
                self.net.backward(params, x, &hidden, &dz, grad);
            }
        }
        loss + self.net.l2(params, self.l2, grad)
    }
}
