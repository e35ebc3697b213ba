use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::Context;
use serde_json::{json, Map, Value};
use uda_select::metrics::{MetricName, MetricOutcome};

/// Scores of one bundle, in the order requested.
pub struct ModelScores {
    pub model_id: String,
    pub outcomes: Vec<MetricOutcome>,
}

pub fn compute_json(models: &[ModelScores]) -> Value {
    let mut root = Map::new();
    for m in models {
        let mut per_metric = Map::new();
        for o in &m.outcomes {
            let v = match &o.result {
                Ok(s) => json!({
                    "value": s.value,
                    "higher_is_better": s.higher_is_better,
                    "details": s.details,
                }),
                Err(e) => json!({ "error": e.to_string() }),
            };
            per_metric.insert(o.metric.to_string(), v);
        }
        root.insert(m.model_id.clone(), Value::Object(per_metric));
    }
    Value::Object(root)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn compute_csv(models: &[ModelScores]) -> String {
    let mut out = String::from("model_id,metric,value,higher_is_better,error\n");
    for m in models {
        for o in &m.outcomes {
            let id = csv_field(&m.model_id);
            match &o.result {
                Ok(s) => out.push_str(&format!("{id},{},{},{},\n", o.metric, s.value, s.higher_is_better)),
                Err(e) => out.push_str(&format!("{id},{},,,{}\n", o.metric, csv_field(&e.to_string()))),
            }
        }
    }
    out
}

pub fn compute_table(models: &[ModelScores], metrics: &[MetricName]) -> String {
    let id_w = models.iter().map(|m| m.model_id.len()).max().unwrap_or(0).max("model".len());
    let col_w: Vec<usize> = metrics.iter().map(|m| m.as_str().len().max(10)).collect();
    let mut out = format!("{:<id_w$}", "model");
    for (m, w) in metrics.iter().zip(&col_w) {
        out.push_str(&format!("  {:>w$}", m.as_str()));
    }
    out.push('\n');
    for m in models {
        out.push_str(&format!("{:<id_w$}", m.model_id));
        for (metric, w) in metrics.iter().zip(&col_w) {
            let cell = match m.outcomes.iter().find(|o| o.metric == *metric).map(|o| &o.result) {
                Some(Ok(s)) => format!("{:.4}", s.value),
                Some(Err(_)) => "error".to_string(),
                None => "-".to_string(),
            };
            out.push_str(&format!("  {cell:>w$}"));
        }
        out.push('\n');
    }
    out
}

pub fn pretty(v: &impl serde::Serialize) -> anyhow::Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

pub fn emit(text: &str, out: Option<&Path>) -> anyhow::Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}
