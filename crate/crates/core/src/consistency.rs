//! How well a metric tracks target accuracy across a set of models:
//! Pearson correlation and the accuracy lost by trusting its top pick.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::{BundleSet, EvaluationBundle};
use crate::metrics::{MetricName, MetricScore};
use crate::numerics::{self, NumericsError};

#[derive(Debug, Error)]
pub enum ConsistencyError {
    #[error("missing true_target_accuracy for model `{0}`")]
    MissingGroundTruth(String),
    #[error("length mismatch: {0} scores vs {1} accuracies")]
    LengthMismatch(usize, usize),
    #[error("need at least one model")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccuracyUnit {
    Percent,
    Fraction,
}

impl AccuracyUnit {
    /// Fraction when every accuracy is at most 1.
    pub fn detect(accuracies: &[f64]) -> Self {
        if accuracies.iter().all(|&a| a <= 1.0) {
            AccuracyUnit::Fraction
        } else {
            AccuracyUnit::Percent
        }
    }

    pub fn to_points(self, a: f64) -> f64 {
        match self {
            AccuracyUnit::Percent => a,
            AccuracyUnit::Fraction => 100.0 * a,
        }
    }
}

/// Index of the highest score, lowest index on ties.
pub fn select_best(scores: &[f64]) -> usize {
    numerics::argmax(scores)
}

/// `max A - A[argmax S]` in accuracy points.
pub fn deviation_of_best(scores: &[f64], accuracies: &[f64]) -> Result<f64, ConsistencyError> {
    if scores.len() != accuracies.len() {
        return Err(ConsistencyError::LengthMismatch(scores.len(), accuracies.len()));
    }
    if scores.is_empty() {
        return Err(ConsistencyError::Empty);
    }
    let unit = AccuracyUnit::detect(accuracies);
    let best = accuracies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let picked = accuracies[select_best(scores)];
    Ok(unit.to_points(best - picked).max(0.0))
}

/// One (group, metric) cell of the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub group: String,
    pub metric: MetricName,
    /// `None` when either series has zero variance.
    pub corr: Option<f64>,
    pub dev: f64,
    pub best_model: String,
    pub n_models: usize,
}

/// Average over groups; degenerate correlations are left out and counted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanRow {
    pub metric: MetricName,
    pub corr: Option<f64>,
    pub dev: f64,
    pub n_groups: usize,
    pub n_degenerate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub accuracy_unit: AccuracyUnit,
    pub group_key: Option<String>,
    pub groups: Vec<String>,
    pub metrics: Vec<MetricName>,
    pub rows: Vec<ConsistencyRow>,
    pub mean: Vec<MeanRow>,
}

pub const POOLED_GROUP: &str = "ALL";

struct Entry<'a> {
    model_id: &'a str,
    group: Option<String>,
    accuracy: f64,
    scores: BTreeMap<MetricName, f64>,
}

fn corr_or_degenerate(s: &[f64], a: &[f64]) -> Option<f64> {
    match numerics::pearson_corr(s, a) {
        Ok(c) => Some(c),
        Err(NumericsError::DegenerateSeries) => None,
        Err(_) => None,
    }
}

fn row_for(group: &str, metric: MetricName, entries: &[&Entry], unit: AccuracyUnit) -> Option<ConsistencyRow> {
    let have: Vec<&&Entry> = entries.iter().filter(|e| e.scores.contains_key(&metric)).collect();
    if have.is_empty() {
        return None;
    }
    let s: Vec<f64> = have.iter().map(|e| e.scores[&metric]).collect();
    let a: Vec<f64> = have.iter().map(|e| unit.to_points(e.accuracy)).collect();
    let best = select_best(&s);
    let top = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some(ConsistencyRow {
        group: group.to_string(),
        metric,
        corr: corr_or_degenerate(&s, &a),
        dev: (top - a[best]).max(0.0),
        best_model: have[best].model_id.to_string(),
        n_models: have.len(),
    })
}

/// Builds per-group rows, a pooled row over the union and group means.
///
/// `scores[i]` holds the successful scores of `set.bundles()[i]`; models
/// missing a metric are left out of that metric's rows. Groups come from
/// the hyperparameter named `group_key`, when any bundle carries it.
pub fn consistency_report(
    set: &BundleSet,
    scores: &[Vec<MetricScore>],
    group_key: Option<&str>,
) -> Result<ConsistencyReport, ConsistencyError> {
    let bundles = set.bundles();
    if bundles.len() != scores.len() {
        return Err(ConsistencyError::LengthMismatch(scores.len(), bundles.len()));
    }
    if bundles.is_empty() {
        return Err(ConsistencyError::Empty);
    }
    let entries = bundles
        .iter()
        .zip(scores)
        .map(|(b, sc)| entry(b, sc, group_key))
        .collect::<Result<Vec<_>, _>>()?;
    let accs: Vec<f64> = entries.iter().map(|e| e.accuracy).collect();
    let unit = AccuracyUnit::detect(&accs);

    let mut metrics: Vec<MetricName> = entries.iter().flat_map(|e| e.scores.keys().copied()).collect();
    metrics.sort();
    metrics.dedup();

    let mut groups: Vec<String> = entries.iter().filter_map(|e| e.group.clone()).collect();
    groups.sort();
    groups.dedup();
    let grouped = !groups.is_empty();

    let mut rows = Vec::new();
    let mut mean = Vec::new();
    for &m in &metrics {
        let mut per_group = Vec::new();
        for g in &groups {
            let members: Vec<&Entry> = entries.iter().filter(|e| e.group.as_deref() == Some(g)).collect();
            if let Some(r) = row_for(g, m, &members, unit) {
                per_group.push(r);
            }
        }
        let all: Vec<&Entry> = entries.iter().collect();
        if grouped && !per_group.is_empty() {
            let corrs: Vec<f64> = per_group.iter().filter_map(|r| r.corr).collect();
            let devs: Vec<f64> = per_group.iter().map(|r| r.dev).collect();
            mean.push(MeanRow {
                metric: m,
                corr: (!corrs.is_empty()).then(|| numerics::mean(&corrs)),
                dev: numerics::mean(&devs),
                n_groups: per_group.len(),
                n_degenerate: per_group.len() - corrs.len(),
            });
        }
        rows.extend(per_group);
        rows.extend(row_for(POOLED_GROUP, m, &all, unit));
    }
    Ok(ConsistencyReport {
        accuracy_unit: unit,
        group_key: grouped.then(|| group_key.unwrap_or_default().to_string()),
        groups,
        metrics,
        rows,
        mean,
    })
}

fn entry<'a>(b: &'a EvaluationBundle, sc: &[MetricScore], group_key: Option<&str>) -> Result<Entry<'a>, ConsistencyError> {
    let accuracy = b
        .true_target_accuracy
        .ok_or_else(|| ConsistencyError::MissingGroundTruth(b.model_id.clone()))?;
    Ok(Entry {
        model_id: &b.model_id,
        group: group_key.and_then(|k| b.hyperparams.get(k)).map(|v| v.as_text()),
        accuracy,
        scores: sc.iter().map(|s| (s.metric_name, s.value)).collect(),
    })
}

pub fn format_corr(c: Option<f64>) -> String {
    match c {
        Some(c) => format!("{c:.4}"),
        None => "degenerate".to_string(),
    }
}

pub fn format_dev(d: f64) -> String {
    format!("{d:.2}")
}

impl ConsistencyReport {
    pub fn row(&self, group: &str, metric: MetricName) -> Option<&ConsistencyRow> {
        self.rows.iter().find(|r| r.group == group && r.metric == metric)
    }

    pub fn pooled(&self, metric: MetricName) -> Option<&ConsistencyRow> {
        self.row(POOLED_GROUP, metric)
    }

    /// Long format: one line per (group, metric), then the group means.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("group,metric,corr,dev,best_model,n_models\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                csv_field(&r.group),
                r.metric,
                format_corr(r.corr),
                format_dev(r.dev),
                csv_field(&r.best_model),
                r.n_models
            );
        }
        for m in &self.mean {
            let _ = writeln!(out, "MEAN,{},{},{},,{}", m.metric, format_corr(m.corr), format_dev(m.dev), m.n_groups);
        }
        out
    }

    /// Wide format: one line per metric, a corr/dev column pair per group.
    pub fn to_table(&self) -> String {
        let mut cols: Vec<String> = self.groups.clone();
        cols.push(POOLED_GROUP.to_string());
        let with_mean = !self.mean.is_empty();
        if with_mean {
            cols.push("MEAN".to_string());
        }
        let mut header = vec!["metric".to_string()];
        for c in &cols {
            header.push(format!("{c} corr"));
            header.push(format!("{c} dev"));
        }
        let mut lines = vec![header];
        for &m in &self.metrics {
            let mut line = vec![m.to_string()];
            for c in &cols {
                let (corr, dev) = if c == "MEAN" && with_mean {
                    match self.mean.iter().find(|r| r.metric == m) {
                        Some(r) => (format_corr(r.corr), format_dev(r.dev)),
                        None => ("-".into(), "-".into()),
                    }
                } else {
                    match self.row(c, m) {
                        Some(r) => (format_corr(r.corr), format_dev(r.dev)),
                        None => ("-".into(), "-".into()),
                    }
                };
                line.push(corr);
                line.push(dev);
            }
            lines.push(line);
        }
        let widths: Vec<usize> = (0..lines[0].len())
            .map(|j| lines.iter().map(|l| l[j].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for l in &lines {
            let cells: Vec<String> = l
                .iter()
                .enumerate()
                .map(|(j, s)| if j == 0 { format!("{s:<w$}", w = widths[j]) } else { format!("{s:>w$}", w = widths[j]) })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::HyperValue;
    use ndarray::array;

    fn score(m: MetricName, v: f64) -> MetricScore {
        MetricScore {
            metric_name: m,
            value: v,
            higher_is_better: true,
            details: BTreeMap::new(),
        }
    }

    fn model(id: &str, acc: Option<f64>, group: &str) -> EvaluationBundle {
        let mut hp = BTreeMap::new();
        hp.insert("method".to_string(), HyperValue::from(group));
        EvaluationBundle {
            model_id: id.into(),
            k_classes: 2,
            source_features: array![[0.0f32], [1.0]],
            source_labels: vec![0, 1],
            source_predictions: array![[1.0f32, 0.0], [0.0, 1.0]],
            target_features: array![[0.0f32], [1.0]],
            target_predictions: array![[1.0f32, 0.0], [0.0, 1.0]],
            target_aug_predictions: None,
            target_aug_features: None,
            hyperparams: hp,
            true_target_accuracy: acc,
        }
    }

    #[test]
    fn deviation_examples() {
        assert_eq!(deviation_of_best(&[0.1, 0.9, 0.5], &[60.0, 70.0, 65.0]).unwrap(), 0.0);
        assert_eq!(deviation_of_best(&[0.9, 0.1], &[60.0, 70.0]).unwrap(), 10.0);
        assert_eq!(deviation_of_best(&[0.5, 0.5], &[60.0, 70.0]).unwrap(), 10.0);
        // fractions are reported in points
        assert!((deviation_of_best(&[0.9, 0.1], &[0.6, 0.7]).unwrap() - 10.0).abs() < 1e-9);
        assert!(deviation_of_best(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn identical_and_negated_scores() {
        let accs = [55.0, 70.0, 62.0, 81.0];
        let set = BundleSet::new(
            accs.iter()
                .enumerate()
                .map(|(i, &a)| model(&format!("m{i}"), Some(a), "x"))
                .collect(),
        )
        .unwrap();
        let same: Vec<Vec<MetricScore>> = accs.iter().map(|&a| vec![score(MetricName::Mi, a)]).collect();
        let r = consistency_report(&set, &same, None).unwrap();
        let row = r.pooled(MetricName::Mi).unwrap();
        assert!((row.corr.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(row.dev, 0.0);
        let neg: Vec<Vec<MetricScore>> = accs.iter().map(|&a| vec![score(MetricName::Mi, -a)]).collect();
        let row = consistency_report(&set, &neg, None).unwrap().pooled(MetricName::Mi).unwrap().clone();
        assert!((row.corr.unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(row.dev, 81.0 - 55.0);
    }

    #[test]
    fn pooled_row_uses_union() {
        let rows = [("a0", 50.0, "a", 1.0), ("a1", 60.0, "a", 3.0), ("a2", 70.0, "a", 2.0), ("b0", 40.0, "b", 9.0), ("b1", 90.0, "b", 8.0)];
        let set = BundleSet::new(rows.iter().map(|(id, a, g, _)| model(id, Some(*a), g)).collect()).unwrap();
        let scores: Vec<Vec<MetricScore>> = rows.iter().map(|s| vec![score(MetricName::Bnm, s.3)]).collect();
        let r = consistency_report(&set, &scores, Some("method")).unwrap();
        let s: Vec<f64> = rows.iter().map(|s| s.3).collect();
        let a: Vec<f64> = rows.iter().map(|s| s.1).collect();
        let direct = numerics::pearson_corr(&s, &a).unwrap();
        assert_eq!(r.pooled(MetricName::Bnm).unwrap().corr, Some(direct));
        let ga = r.row("a", MetricName::Bnm).unwrap().corr.unwrap();
        let gb = r.row("b", MetricName::Bnm).unwrap().corr.unwrap();
        assert!((direct - (ga + gb) / 2.0).abs() > 1e-3);
        assert_eq!(r.mean[0].n_groups, 2);
        assert_eq!(r.pooled(MetricName::Bnm).unwrap().best_model, "b0");
    }

    #[test]
    fn degenerate_marked_and_excluded_from_mean() {
        let rows = [("a0", 50.0, "a", 1.0), ("a1", 60.0, "a", 1.0), ("b0", 40.0, "b", 2.0), ("b1", 90.0, "b", 3.0)];
        let set = BundleSet::new(rows.iter().map(|(id, a, g, _)| model(id, Some(*a), g)).collect()).unwrap();
        let scores: Vec<Vec<MetricScore>> = rows.iter().map(|s| vec![score(MetricName::Snd, s.3)]).collect();
        let r = consistency_report(&set, &scores, Some("method")).unwrap();
        let a = r.row("a", MetricName::Snd).unwrap();
        assert_eq!(a.corr, None);
        assert_eq!(a.dev, 10.0);
        assert_eq!(r.mean[0].n_degenerate, 1);
        assert_eq!(r.mean[0].corr, r.row("b", MetricName::Snd).unwrap().corr);
        assert!(r.to_csv().contains("a,snd,degenerate,10.00,a0,2"));
    }

    #[test]
    fn missing_ground_truth() {
        let set = BundleSet::new(vec![model("m", None, "x")]).unwrap();
        let err = consistency_report(&set, &[vec![]], None).unwrap_err();
        assert!(matches!(err, ConsistencyError::MissingGroundTruth(ref id) if id == "m"));
    }

    #[test]
    fn csv_and_table_share_numbers() {
        let rows = [("a0", 0.5, 0.1), ("a1", 0.61234, 0.3), ("a2", 0.7, 0.2)];
        let set = BundleSet::new(rows.iter().map(|(id, a, _)| model(id, Some(*a), "x")).collect()).unwrap();
        let scores: Vec<Vec<MetricScore>> = rows.iter().map(|s| vec![score(MetricName::Acm, s.2)]).collect();
        let r = consistency_report(&set, &scores, None).unwrap();
        assert_eq!(r.accuracy_unit, AccuracyUnit::Fraction);
        let row = r.pooled(MetricName::Acm).unwrap();
        let (c, d) = (format_corr(row.corr), format_dev(row.dev));
        assert!(r.to_csv().contains(&format!("{c},{d}")));
        let table = r.to_table();
        assert!(table.contains(&c) && table.contains(&d), "{table}");
    }
}
