//! Tree-structured Parzen estimator with independent per-parameter densities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::space::{Assignment, HyperparamSpace, Param, ParamKind};
use super::SearchError;
use crate::bundle::HyperValue;

pub const DENSITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TpeConfig {
    pub n_startup: usize,
    pub gamma: f64,
    pub n_candidates: usize,
    pub seed: u64,
}

impl Default for TpeConfig {
    fn default() -> Self {
        TpeConfig {
            n_startup: 10,
            gamma: 0.25,
            n_candidates: 24,
            seed: 17,
        }
    }
}

/// Finished trials as the sampler sees them. Failed and pruned trials
/// carry `-inf`.
#[derive(Debug, Clone, Default)]
pub struct SamplerState {
    pub observations: Vec<(Assignment, f64)>,
}

/// Per-trial generator so a suggestion depends only on the seed, the trial
/// id and the history, never on earlier draws.
fn trial_rng(seed: u64, trial_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial_id);
    rng
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + libm::erf(z / std::f64::consts::SQRT_2))
}

/// Mixture of Gaussians truncated to `[lo, hi]`, equal weights.
#[derive(Debug, Clone)]
struct Parzen {
    centers: Vec<f64>,
    bandwidth: f64,
    lo: f64,
    hi: f64,
}

impl Parzen {
    /// Kernels share one bandwidth: the standard deviation of a uniform over
    /// `[lo, hi]`, divided by `sqrt(n)`. `None` for an empty group; callers
    /// fall back to the uniform prior.
    fn fit(points: &[f64], lo: f64, hi: f64) -> Option<Self> {
        if points.is_empty() {
            return None;
        }
        let bandwidth = (hi - lo) / (12.0 * points.len() as f64).sqrt();
        Some(Parzen {
            centers: points.to_vec(),
            bandwidth,
            lo,
            hi,
        })
    }

    fn pdf(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            return 0.0;
        }
        let h = self.bandwidth;
        let mut total = 0.0;
        for &m in &self.centers {
            let mass = normal_cdf((self.hi - m) / h) - normal_cdf((self.lo - m) / h);
            let z = (x - m) / h;
            let phi = (-0.5 * z * z).exp() / (h * (2.0 * std::f64::consts::PI).sqrt());
            total += phi / mass.max(DENSITY_FLOOR);
        }
        total / self.centers.len() as f64
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let m = self.centers[rng.random_range(0..self.centers.len())];
        for _ in 0..64 {
            let z: f64 = StandardNormal.sample(rng);
            let x = m + self.bandwidth * z;
            if (self.lo..=self.hi).contains(&x) {
                return x;
            }
        }
        m.clamp(self.lo, self.hi)
    }
}

fn numeric_density(p: Option<&Parzen>, x: f64, lo: f64, hi: f64) -> f64 {
    match p {
        Some(p) => p.pdf(x),
        None => 1.0 / (hi - lo),
    }
}

/// Laplace-smoothed category frequencies.
fn categorical_probs(values: &[HyperValue], observed: &[&HyperValue]) -> Vec<f64> {
    let n = observed.len() as f64 + values.len() as f64;
    values
        .iter()
        .map(|v| (observed.iter().filter(|o| **o == v).count() as f64 + 1.0) / n)
        .collect()
}

/// Proposes the next assignment for trial `trial_id`.
pub fn suggest(cfg: &TpeConfig, space: &HyperparamSpace, state: &SamplerState, trial_id: u64) -> Result<Assignment, SearchError> {
    space.validate()?;
    if !(cfg.gamma > 0.0 && cfg.gamma < 1.0) {
        return Err(SearchError::Config(format!("gamma must lie in (0, 1), got {}", cfg.gamma)));
    }
    let mut rng = trial_rng(cfg.seed, trial_id);
    let n = state.observations.len();
    if n < cfg.n_startup.max(1) {
        return Ok(space
            .parameters
            .iter()
            .map(|p| (p.name.clone(), p.sample_uniform(&mut rng)))
            .collect());
    }

    // stable sort: equal values keep trial order
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| state.observations[b].1.total_cmp(&state.observations[a].1));
    let n_good = ((cfg.gamma * n as f64).ceil() as usize).clamp(1, n);
    let (good, bad) = order.split_at(n_good);

    let models: Vec<ParamModel> = space
        .parameters
        .iter()
        .map(|p| ParamModel::fit(p, good, bad, &state.observations))
        .collect();

    let mut best: Option<(f64, Assignment)> = None;
    for _ in 0..cfg.n_candidates.max(1) {
        let mut cand = Assignment::new();
        let mut score = 0.0;
        for (p, m) in space.parameters.iter().zip(&models) {
            let (v, l, g) = m.draw(p, &mut rng);
            score += l.max(DENSITY_FLOOR).ln() - g.max(DENSITY_FLOOR).ln();
            cand.insert(p.name.clone(), v);
        }
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, cand));
        }
    }
    Ok(best.expect("at least one candidate").1)
}

enum ParamModel {
    Numeric {
        lo: f64,
        hi: f64,
        good: Option<Parzen>,
        bad: Option<Parzen>,
    },
    Categorical {
        good: Vec<f64>,
        bad: Vec<f64>,
    },
}

impl ParamModel {
    fn fit(p: &Param, good: &[usize], bad: &[usize], obs: &[(Assignment, f64)]) -> Self {
        match &p.kind {
            ParamKind::Categorical { values } => {
                let pick = |idx: &[usize]| -> Vec<f64> {
                    let seen: Vec<&HyperValue> = idx.iter().filter_map(|&i| obs[i].0.get(&p.name)).collect();
                    categorical_probs(values, &seen)
                };
                ParamModel::Categorical {
                    good: pick(good),
                    bad: pick(bad),
                }
            }
            _ => {
                let (lo, hi) = p.internal_bounds().expect("numeric");
                let pts = |idx: &[usize]| -> Vec<f64> {
                    idx.iter()
                        .filter_map(|&i| obs[i].0.get(&p.name).and_then(|v| p.to_internal(v)))
                        .map(|u| u.clamp(lo, hi))
                        .collect()
                };
                ParamModel::Numeric {
                    lo,
                    hi,
                    good: Parzen::fit(&pts(good), lo, hi),
                    bad: Parzen::fit(&pts(bad), lo, hi),
                }
            }
        }
    }

    /// A draw from the good density with its good and bad densities.
    fn draw<R: Rng>(&self, p: &Param, rng: &mut R) -> (HyperValue, f64, f64) {
        match (self, &p.kind) {
            (ParamModel::Categorical { good, bad }, ParamKind::Categorical { values }) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = values.len() - 1;
                for (i, w) in good.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                (values[pick].clone(), good[pick], bad[pick])
            }
            (ParamModel::Numeric { lo, hi, good, bad }, _) => {
                let x = match good {
                    Some(g) => g.sample(rng),
                    None => rng.random_range(*lo..*hi),
                };
                let l = numeric_density(good.as_ref(), x, *lo, *hi);
                let g = numeric_density(bad.as_ref(), x, *lo, *hi);
                (p.from_internal(x), l, g)
            }
            _ => unreachable!("model kind follows parameter kind"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(json: &str) -> HyperparamSpace {
        HyperparamSpace::from_json(json).unwrap()
    }

    #[test]
    fn startup_is_in_bounds_and_deterministic() {
        let s = space(
            r#"{"parameters":[{"name":"a","kind":"log_uniform","lo":0.001,"hi":10},
            {"name":"b","kind":"int_range","lo":-2,"hi":3},{"name":"c","kind":"categorical","values":["x","y"]}]}"#,
        );
        let cfg = TpeConfig::default();
        for id in 0..200 {
            let a = suggest(&cfg, &s, &SamplerState::default(), id).unwrap();
            assert_eq!(a, suggest(&cfg, &s, &SamplerState::default(), id).unwrap());
            for p in &s.parameters {
                assert!(p.contains(&a[&p.name]), "{a:?}");
            }
        }
    }

    #[test]
    fn truncated_parzen_integrates_to_one() {
        let p = Parzen::fit(&[0.05, 0.5, 0.97], 0.0, 1.0).unwrap();
        let n = 20_000;
        let integral: f64 = (0..n).map(|i| p.pdf((i as f64 + 0.5) / n as f64)).sum::<f64>() / n as f64;
        assert!((integral - 1.0).abs() < 1e-6, "{integral}");
    }

    #[test]
    fn favours_good_category() {
        let s = space(r#"{"parameters":[{"name":"c","kind":"categorical","values":["a","b"]}]}"#);
        let mut state = SamplerState::default();
        for i in 0..20 {
            let (v, score) = if i % 4 == 0 { ("a", 1.0) } else { ("b", 0.0) };
            state.observations.push(([("c".to_string(), HyperValue::from(v))].into(), score));
        }
        let cfg = TpeConfig::default();
        let n_a = (0..1000u64)
            .filter(|&id| suggest(&cfg, &s, &state, 100 + id).unwrap()["c"] == HyperValue::from("a"))
            .count();
        assert!(n_a > 500, "{n_a}");
    }

    #[test]
    fn rejects_bad_gamma() {
        let s = space(r#"{"parameters":[{"name":"x","kind":"uniform","lo":0,"hi":1}]}"#);
        let cfg = TpeConfig { gamma: 1.0, ..Default::default() };
        assert!(suggest(&cfg, &s, &SamplerState::default(), 0).is_err());
    }
}
