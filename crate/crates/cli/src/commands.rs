use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use uda_select::bundle::{read_bundle, write_bundle, BundleSet, EvaluationBundle, HyperValue};
use uda_select::consistency::consistency_report;
use uda_select::metrics::{compute_selected, MetricName, MetricScore};
use uda_select::search::{
    append_history, load_history, run_search, CommandRunner, HyperparamSpace, MedianPruner, SearchConfig, SearchError,
    SyntheticRunner, TpeConfig, Trial, TrialRunner, TrialState,
};
use uda_select::synth::{generate_scenario, model_sweep, Scenario};

use crate::args::{ComputeArgs, Format, RankArgs, SearchArgs, SynthArgs};
use crate::output::{self, ModelScores};
use crate::Exit;

fn load_bundles(paths: &[PathBuf]) -> anyhow::Result<Vec<EvaluationBundle>> {
    let bundles: Vec<EvaluationBundle> = paths
        .par_iter()
        .map(|p| read_bundle(p).map_err(|e| Exit::config(format!("{}: {e}", p.display()))))
        .collect::<Result<_, _>>()?;
    let mut seen = BTreeSet::new();
    for b in &bundles {
        if !seen.insert(b.model_id.as_str()) {
            return Err(Exit::config(format!("duplicate model_id `{}`", b.model_id)).into());
        }
    }
    Ok(bundles)
}

fn selected(requested: &[MetricName]) -> Vec<MetricName> {
    if requested.is_empty() {
        return MetricName::REGISTRY.to_vec();
    }
    let mut out = Vec::new();
    for m in requested {
        if !out.contains(m) {
            out.push(*m);
        }
    }
    out
}

fn score_all(bundles: &[EvaluationBundle], metrics: &[MetricName], seed: u64, flags: &crate::args::MetricFlags) -> Vec<ModelScores> {
    let seeds = flags.seeds(seed);
    bundles
        .par_iter()
        .map(|b| ModelScores {
            model_id: b.model_id.clone(),
            outcomes: compute_selected(b, metrics, &seeds),
        })
        .collect()
}

fn report_failures(models: &[ModelScores]) -> bool {
    let mut any = false;
    for m in models {
        for o in &m.outcomes {
            if let Err(e) = &o.result {
                eprintln!("warning: {} {}: {e}", m.model_id, o.metric);
                any = true;
            }
        }
    }
    any
}

pub fn compute(seed: u64, a: &ComputeArgs) -> anyhow::Result<u8> {
    let bundles = load_bundles(&a.bundles)?;
    let metrics = selected(&a.metric);
    let models = score_all(&bundles, &metrics, seed, &a.flags);
    let text = match a.format {
        Format::Json => output::pretty(&output::compute_json(&models))?,
        Format::Csv => output::compute_csv(&models),
        Format::Table => output::compute_table(&models, &metrics),
    };
    output::emit(&text, a.out.as_deref())?;
    Ok(if report_failures(&models) { Exit::PARTIAL } else { 0 })
}

pub fn rank(seed: u64, a: &RankArgs) -> anyhow::Result<u8> {
    let bundles = load_bundles(&a.bundles)?;
    if let Some(b) = bundles.iter().find(|b| b.true_target_accuracy.is_none()) {
        return Err(Exit::new(
            Exit::MISSING_GROUND_TRUTH,
            format!("bundle `{}` has no true_target_accuracy", b.model_id),
        )
        .into());
    }
    let set = BundleSet::new(bundles).map_err(|e| Exit::config(e.to_string()))?;
    let metrics = selected(&a.metric);
    let models = score_all(set.bundles(), &metrics, seed, &a.flags);
    let scores: Vec<Vec<MetricScore>> = models
        .iter()
        .map(|m| m.outcomes.iter().filter_map(|o| o.result.as_ref().ok().cloned()).collect())
        .collect();
    let report = consistency_report(&set, &scores, Some(&a.group_by))?;
    let text = match a.format {
        Format::Json => output::pretty(&report)?,
        Format::Csv => report.to_csv(),
        Format::Table => report.to_table(),
    };
    output::emit(&text, a.out.as_deref())?;
    Ok(if report_failures(&models) { Exit::PARTIAL } else { 0 })
}

fn read_scenario(path: Option<&Path>, seed: u64) -> anyhow::Result<Scenario> {
    match path {
        None => Ok(Scenario::benchmark(seed)),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Exit::config(format!("{}: {e}", p.display())))?;
            let s: Scenario = serde_json::from_str(&text).map_err(|e| Exit::config(format!("{}: {e}", p.display())))?;
            s.validate().map_err(|e| Exit::config(e.to_string()))?;
            Ok(s)
        }
    }
}

fn search_exit(e: SearchError) -> anyhow::Error {
    match e {
        SearchError::Space(_) | SearchError::Config(_) | SearchError::History(_) => Exit::config(e.to_string()).into(),
        other => other.into(),
    }
}

#[derive(Serialize)]
struct BestSummary {
    trial_id: u64,
    assignment: uda_select::search::Assignment,
    value: Option<f64>,
    true_target_accuracy: Option<f64>,
}

#[derive(Serialize)]
struct SearchSummary {
    metric: MetricName,
    objective: String,
    seed: u64,
    n_trials: usize,
    n_complete: usize,
    n_pruned: usize,
    n_failed: usize,
    best: BestSummary,
}

pub fn search(seed: u64, a: &SearchArgs) -> anyhow::Result<u8> {
    let space = match &a.hp_space {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Exit::config(format!("{}: {e}", p.display())))?;
            HyperparamSpace::from_json(&text).map_err(search_exit)?
        }
        None if a.synthetic.is_some() => {
            let text = json!({"parameters": [{"name": a.param, "kind": "uniform", "lo": 0.0, "hi": 1.0}]}).to_string();
            HyperparamSpace::from_json(&text).map_err(search_exit)?
        }
        None => return Err(Exit::config("--hp-space is required with a trainer command").into()),
    };
    let seeds = a.flags.seeds(seed);
    let (mut runner, objective): (Box<dyn TrialRunner>, String) = match (a.synthetic, a.trainer.is_empty()) {
        (Some(_), false) => return Err(Exit::config("give either --synthetic or a trainer command, not both").into()),
        (None, true) => return Err(Exit::config("no objective: give --synthetic <family> or a trainer command after `--`").into()),
        (Some(family), true) => {
            let scenario = read_scenario(a.scenario.as_deref(), seed)?;
            let draw = generate_scenario(&scenario).map_err(|e| Exit::config(e.to_string()))?;
            let r = SyntheticRunner::new(draw, family, a.metric, seeds, &space, &a.param).map_err(search_exit)?;
            (Box::new(r), format!("synthetic:{family}"))
        }
        (None, false) => {
            let r = CommandRunner::new(&a.trainer, a.metric, seeds).map_err(search_exit)?;
            (Box::new(r), a.trainer.join(" "))
        }
    };
    let cfg = SearchConfig {
        n_trials: a.trials,
        tpe: TpeConfig {
            n_startup: a.n_startup,
            gamma: a.gamma,
            n_candidates: a.n_candidates,
            seed,
        },
        pruner: (!a.no_prune).then_some(MedianPruner {
            n_warmup_epochs: a.warmup_epochs,
            n_min_trials: a.min_trials,
        }),
    };

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let history_path = a.out.join("history.jsonl");
    let prior = load_history(&history_path).map_err(search_exit)?;
    if !prior.is_empty() {
        eprintln!("resuming from {} recorded trials", prior.len());
    }
    let mut on_trial = |t: &Trial| {
        eprintln!(
            "trial {:>3} {:<8} {}",
            t.trial_id,
            format!("{:?}", t.state).to_lowercase(),
            t.final_value.map(|v| format!("{v:.6}")).unwrap_or_default()
        );
        append_history(&history_path, t)
    };
    let outcome = run_search(&space, runner.as_mut(), &cfg, prior, &mut on_trial).map_err(search_exit)?;

    let count = |s: TrialState| outcome.history.iter().filter(|t| t.state == s).count();
    let summary = SearchSummary {
        metric: a.metric,
        objective,
        seed,
        n_trials: outcome.history.len(),
        n_complete: count(TrialState::Complete),
        n_pruned: count(TrialState::Pruned),
        n_failed: count(TrialState::Failed),
        best: BestSummary {
            trial_id: outcome.best.trial_id,
            assignment: outcome.best.assignment.clone(),
            value: outcome.best.final_value,
            true_target_accuracy: outcome.best.true_target_accuracy,
        },
    };
    let text = output::pretty(&summary)?;
    let summary_path = a.out.join("summary.json");
    fs::write(&summary_path, &text).with_context(|| format!("writing {}", summary_path.display()))?;
    output::emit(&text, None)?;
    Ok(0)
}

#[derive(Serialize)]
struct ManifestEntry {
    model_id: String,
    file: String,
    t: Option<f64>,
    true_target_accuracy: Option<f64>,
}

pub fn synth(seed: u64, a: &SynthArgs) -> anyhow::Result<u8> {
    let scenario = read_scenario(a.scenario.as_deref(), seed)?;
    let set = model_sweep(&scenario, a.family, a.models, seed).map_err(|e| Exit::config(e.to_string()))?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut entries = Vec::new();
    for b in set.bundles() {
        let file = format!("{}.udab", b.model_id);
        write_bundle(b, a.out.join(&file))?;
        let t = match b.hyperparams.get("t") {
            Some(HyperValue::Number(x)) => Some(*x),
            _ => None,
        };
        entries.push(ManifestEntry {
            model_id: b.model_id.clone(),
            file,
            t,
            true_target_accuracy: b.true_target_accuracy,
        });
    }
    let manifest = json!({
        "family": a.family.as_str(),
        "seed": seed,
        "n_models": entries.len(),
        "scenario": scenario,
        "models": entries,
    });
    let text = output::pretty(&manifest)?;
    fs::write(a.out.join("manifest.json"), &text)?;
    eprintln!("wrote {} bundles to {}", entries.len(), a.out.display());
    Ok(0)
}
