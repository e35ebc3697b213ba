//! Deterministic full-batch L-BFGS with a strong-Wolfe line search.

use std::collections::VecDeque;

/// A differentiable scalar objective over a flat parameter vector.
pub trait Objective {
    fn n_params(&self) -> usize;

    /// Returns the loss at `x` and writes its gradient into `grad`.
    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

#[derive(Debug, Clone, Copy)]
pub struct LbfgsConfig {
    pub max_iter: usize,
    pub history: usize,
    pub grad_tol: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_line_evals: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            max_iter: 200,
            history: 10,
            grad_tol: 1e-9,
            c1: 1e-4,
            c2: 0.9,
            max_line_evals: 25,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LbfgsReport {
    pub params: Vec<f64>,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

struct Probe<'a, O: Objective> {
    obj: &'a O,
    x: &'a [f64],
    dir: &'a [f64],
    trial: Vec<f64>,
    grad: Vec<f64>,
    evals: usize,
}

impl<O: Objective> Probe<'_, O> {
    /// phi(alpha) and phi'(alpha); leaves the trial point and gradient in place.
    fn eval(&mut self, alpha: f64) -> (f64, f64) {
        for ((t, x), d) in self.trial.iter_mut().zip(self.x).zip(self.dir) {
            *t = x + alpha * d;
        }
        self.evals += 1;
        let f = self.obj.value_grad(&self.trial, &mut self.grad);
        (f, dot(&self.grad, self.dir))
    }
}

fn cubic_min(a: f64, fa: f64, ga: f64, b: f64, fb: f64, gb: f64) -> Option<f64> {
    let d1 = ga + gb - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - ga * gb;
    if !(disc >= 0.0) {
        return None;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let denom = gb - ga + 2.0 * d2;
    if denom == 0.0 {
        return None;
    }
    let x = b - (b - a) * (gb + d2 - d1) / denom;
    x.is_finite().then_some(x)
}

struct Accepted {
    alpha: f64,
    f: f64,
    x: Vec<f64>,
    grad: Vec<f64>,
}

fn line_search<O: Objective>(
    obj: &O,
    x: &[f64],
    f0: f64,
    g0: f64,
    dir: &[f64],
    alpha_init: f64,
    cfg: &LbfgsConfig,
) -> Option<Accepted> {
    let n = x.len();
    let mut probe = Probe {
        obj,
        x,
        dir,
        trial: vec![0.0; n],
        grad: vec![0.0; n],
        evals: 0,
    };
    // best sufficient-decrease point seen, used if Wolfe is never met
    let mut best: Option<Accepted> = None;
    let note = |p: &Probe<O>, alpha: f64, f: f64, best: &mut Option<Accepted>| {
        if f < f0 && best.as_ref().is_none_or(|b| f < b.f) {
            *best = Some(Accepted {
                alpha,
                f,
                x: p.trial.clone(),
                grad: p.grad.clone(),
            });
        }
    };

    let (mut a_prev, mut f_prev, mut g_prev) = (0.0, f0, g0);
    let mut alpha = alpha_init;
    let mut bracket = None;
    for i in 0..cfg.max_line_evals {
        let (f, g) = probe.eval(alpha);
        if !f.is_finite() {
            bracket = Some((a_prev, f_prev, g_prev, alpha, f64::INFINITY, f64::NAN));
            break;
        }
        note(&probe, alpha, f, &mut best);
        if f > f0 + cfg.c1 * alpha * g0 || (i > 0 && f >= f_prev) {
            bracket = Some((a_prev, f_prev, g_prev, alpha, f, g));
            break;
        }
        if g.abs() <= -cfg.c2 * g0 {
            return Some(Accepted {
                alpha,
                f,
                x: probe.trial,
                grad: probe.grad,
            });
        }
        if g >= 0.0 {
            bracket = Some((alpha, f, g, a_prev, f_prev, g_prev));
            break;
        }
        a_prev = alpha;
        f_prev = f;
        g_prev = g;
        alpha *= 2.0;
    }

    // zoom: lo always satisfies sufficient decrease and has the lower value
    if let Some((mut lo, mut f_lo, mut g_lo, mut hi, mut f_hi, mut g_hi)) = bracket {
        while probe.evals < cfg.max_line_evals {
            let (left, right) = if lo < hi { (lo, hi) } else { (hi, lo) };
            let width = right - left;
            if width <= 1e-16 * right.abs().max(1.0) {
                break;
            }
            let mut a = if f_hi.is_finite() && g_hi.is_finite() {
                cubic_min(lo, f_lo, g_lo, hi, f_hi, g_hi).unwrap_or(0.5 * (lo + hi))
            } else {
                0.5 * (lo + hi)
            };
            if a < left + 0.1 * width || a > right - 0.1 * width {
                a = 0.5 * (lo + hi);
            }
            let (f, g) = probe.eval(a);
            if f.is_finite() {
                note(&probe, a, f, &mut best);
            }
            if !f.is_finite() || f > f0 + cfg.c1 * a * g0 || f >= f_lo {
                hi = a;
                f_hi = if f.is_finite() { f } else { f64::INFINITY };
                g_hi = g;
            } else {
                if g.abs() <= -cfg.c2 * g0 {
                    return Some(Accepted {
                        alpha: a,
                        f,
                        x: probe.trial,
                        grad: probe.grad,
                    });
                }
                if g * (hi - lo) >= 0.0 {
                    hi = lo;
                    f_hi = f_lo;
                    g_hi = g_lo;
                }
                lo = a;
                f_lo = f;
                g_lo = g;
            }
        }
    }
    best
}

/// Minimizes `obj` from `x0`.
///
/// Every accepted step strictly decreases the loss, so the final loss never
/// exceeds the initial loss.
pub fn minimize<O: Objective>(obj: &O, x0: Vec<f64>, cfg: &LbfgsConfig) -> LbfgsReport {
    let n = x0.len();
    let mut x = x0;
    let mut grad = vec![0.0; n];
    let mut f = obj.value_grad(&x, &mut grad);
    let initial_loss = f;
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.history);
    let mut iterations = 0;
    if !f.is_finite() {
        return LbfgsReport {
            params: x,
            initial_loss,
            final_loss: f,
            iterations,
        };
    }

    let mut dir = vec![0.0; n];
    let mut alphas = vec![0.0; cfg.history];
    while iterations < cfg.max_iter {
        if inf_norm(&grad) <= cfg.grad_tol {
            break;
        }
        // two-loop recursion
        dir.iter_mut().zip(&grad).for_each(|(d, g)| *d = -g);
        for (i, (s, y, rho)) in history.iter().enumerate().rev() {
            let a = rho * dot(s, &dir);
            alphas[i] = a;
            dir.iter_mut().zip(y).for_each(|(d, yv)| *d -= a * yv);
        }
        let gamma = history
            .back()
            .map_or(1.0, |(s, y, _)| dot(s, y) / dot(y, y));
        dir.iter_mut().for_each(|d| *d *= gamma);
        for (i, (s, y, rho)) in history.iter().enumerate() {
            let b = rho * dot(y, &dir);
            let a = alphas[i];
            dir.iter_mut().zip(s).for_each(|(d, sv)| *d += (a - b) * sv);
        }

        let mut g0 = dot(&grad, &dir);
        if !(g0 < 0.0) {
            // not a descent direction; restart from steepest descent
            history.clear();
            dir.iter_mut().zip(&grad).for_each(|(d, g)| *d = -g);
            g0 = dot(&grad, &dir);
        }
        let alpha_init = if history.is_empty() {
            (1.0 / inf_norm(&grad)).min(1.0)
        } else {
            1.0
        };

        let Some(step) = line_search(obj, &x, f, g0, &dir, alpha_init, cfg) else {
            break;
        };
        iterations += 1;
        let s: Vec<f64> = dir.iter().map(|d| step.alpha * d).collect();
        let y: Vec<f64> = step.grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        let converged = (f - step.f).abs() <= 1e-15 * f.abs().max(1.0);
        x = step.x;
        grad = step.grad;
        f = step.f;
        if sy > 1e-12 * dot(&y, &y).max(f64::MIN_POSITIVE) {
            if history.len() == cfg.history {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        if converged {
            break;
        }
    }
    LbfgsReport {
        params: x,
        initial_loss,
        final_loss: f,
        iterations,
    }
}
