use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SearchError;
use crate::bundle::HyperValue;

/// A concrete hyperparameter assignment, keyed by parameter name.
pub type Assignment = BTreeMap<String, HyperValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamKind {
    Categorical { values: Vec<HyperValue> },
    LogUniform { lo: f64, hi: f64 },
    Uniform { lo: f64, hi: f64 },
    /// Inclusive integer range.
    IntRange { lo: i64, hi: i64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    #[serde(flatten)]
    pub kind: ParamKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperparamSpace {
    pub parameters: Vec<Param>,
}

impl HyperparamSpace {
    pub fn new(parameters: Vec<Param>) -> Result<Self, SearchError> {
        let s = HyperparamSpace { parameters };
        s.validate()?;
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self, SearchError> {
        let s: HyperparamSpace = serde_json::from_str(text).map_err(|e| SearchError::Space(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: String| Err(SearchError::Space(m));
        if self.parameters.is_empty() {
            return bad("empty space".into());
        }
        let mut seen = BTreeSet::new();
        for p in &self.parameters {
            if !seen.insert(p.name.as_str()) {
                return bad(format!("duplicate parameter `{}`", p.name));
            }
            match &p.kind {
                ParamKind::Categorical { values } if values.is_empty() => {
                    return bad(format!("`{}`: no categorical values", p.name));
                }
                ParamKind::Uniform { lo, hi } | ParamKind::LogUniform { lo, hi } if !(lo < hi) || !lo.is_finite() || !hi.is_finite() => {
                    return bad(format!("`{}`: need finite lo < hi", p.name));
                }
                ParamKind::LogUniform { lo, .. } if *lo <= 0.0 => {
                    return bad(format!("`{}`: log_uniform needs lo > 0", p.name));
                }
                ParamKind::IntRange { lo, hi } if lo >= hi => {
                    return bad(format!("`{}`: need lo < hi", p.name));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

impl Param {
    /// Bounds of the internal numeric coordinate, if numeric.
    ///
    /// `log_uniform` works in log space and `int_range` on the widened
    /// interval `[lo - 1/2, hi + 1/2]`, rounded on the way out.
    pub(crate) fn internal_bounds(&self) -> Option<(f64, f64)> {
        match &self.kind {
            ParamKind::Categorical { .. } => None,
            ParamKind::Uniform { lo, hi } => Some((*lo, *hi)),
            ParamKind::LogUniform { lo, hi } => Some((lo.ln(), hi.ln())),
            ParamKind::IntRange { lo, hi } => Some((*lo as f64 - 0.5, *hi as f64 + 0.5)),
        }
    }

    pub(crate) fn to_internal(&self, v: &HyperValue) -> Option<f64> {
        let HyperValue::Number(x) = v else { return None };
        match &self.kind {
            ParamKind::Categorical { .. } => None,
            ParamKind::Uniform { .. } | ParamKind::IntRange { .. } => Some(*x),
            ParamKind::LogUniform { .. } => Some(x.ln()),
        }
    }

    pub(crate) fn from_internal(&self, u: f64) -> HyperValue {
        match &self.kind {
            ParamKind::Categorical { .. } => unreachable!("categorical has no internal coordinate"),
            ParamKind::Uniform { lo, hi } => HyperValue::Number(u.clamp(*lo, *hi)),
            ParamKind::LogUniform { lo, hi } => HyperValue::Number(u.exp().clamp(*lo, *hi)),
            ParamKind::IntRange { lo, hi } => HyperValue::Number(u.round().clamp(*lo as f64, *hi as f64)),
        }
    }

    pub(crate) fn sample_uniform<R: Rng>(&self, rng: &mut R) -> HyperValue {
        match &self.kind {
            ParamKind::Categorical { values } => values[rng.random_range(0..values.len())].clone(),
            ParamKind::IntRange { lo, hi } => HyperValue::Number(rng.random_range(*lo..=*hi) as f64),
            _ => {
                let (a, b) = self.internal_bounds().expect("numeric");
                self.from_internal(rng.random_range(a..b))
            }
        }
    }

    pub fn contains(&self, v: &HyperValue) -> bool {
        match (&self.kind, v) {
            (ParamKind::Categorical { values }, v) => values.contains(v),
            (ParamKind::Uniform { lo, hi } | ParamKind::LogUniform { lo, hi }, HyperValue::Number(x)) => lo <= x && x <= hi,
            (ParamKind::IntRange { lo, hi }, HyperValue::Number(x)) => {
                x.fract() == 0.0 && (*lo as f64) <= *x && *x <= (*hi as f64)
            }
            _ => false,
        }
    }
}
