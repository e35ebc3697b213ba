//! Trial runners: an external trainer command, the in-process synthetic
//! objective, and plain closures.

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use super::space::{Assignment, HyperparamSpace, ParamKind};
use super::SearchError;
use crate::bundle::{read_bundle, HyperValue};
use crate::metrics::{compute_metric, MetricName, MetricSeeds};
use crate::synth::{Family, ScenarioDraw, SyntheticModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunOutcome {
    Complete {
        value: f64,
        true_target_accuracy: Option<f64>,
    },
    Pruned,
}

/// Executes one trial.
///
/// `report(epoch, score)` records an intermediate value and returns `false`
/// when the trial should stop; the runner then returns
/// [`RunOutcome::Pruned`]. An `Err` marks the trial failed.
pub trait TrialRunner {
    fn run(&mut self, trial_id: u64, assignment: &Assignment, report: &mut dyn FnMut(u32, f64) -> bool) -> Result<RunOutcome, String>;
}

/// Wraps a closure computing a final value with no intermediate reports.
pub struct FnRunner<F>(pub F);

impl<F: FnMut(&Assignment) -> Result<f64, String>> TrialRunner for FnRunner<F> {
    fn run(&mut self, _: u64, assignment: &Assignment, _: &mut dyn FnMut(u32, f64) -> bool) -> Result<RunOutcome, String> {
        (self.0)(assignment).map(|value| RunOutcome::Complete {
            value,
            true_target_accuracy: None,
        })
    }
}

/// Parsed trainer stdout line.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainerLine {
    Epoch(u32, f64),
    Bundle(PathBuf),
    Other,
}

pub fn parse_trainer_line(line: &str) -> Result<TrainerLine, String> {
    let mut parts = line.split_whitespace();
    match parts.next() {
        Some("EPOCH") => {
            let (Some(e), Some("SCORE"), Some(v), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
                return Err(format!("malformed line `{line}`"));
            };
            let e = e.parse().map_err(|_| format!("bad epoch in `{line}`"))?;
            let v = v.parse().map_err(|_| format!("bad score in `{line}`"))?;
            Ok(TrainerLine::Epoch(e, v))
        }
        Some("BUNDLE") => {
            let rest = line.trim_start()["BUNDLE".len()..].trim();
            if rest.is_empty() {
                Err(format!("malformed line `{line}`"))
            } else {
                Ok(TrainerLine::Bundle(PathBuf::from(rest)))
            }
        }
        _ => Ok(TrainerLine::Other),
    }
}

/// Launches `program args.. --hp name=value ..` per trial and scores the
/// bundle it announces with the configured metric.
#[derive(Debug, Clone)]
pub struct CommandRunner {
    pub program: String,
    pub args: Vec<String>,
    pub metric: MetricName,
    pub seeds: MetricSeeds,
    pub working_dir: Option<PathBuf>,
}

impl CommandRunner {
    pub fn new(command: &[String], metric: MetricName, seeds: MetricSeeds) -> Result<Self, SearchError> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| SearchError::Config("empty trainer command".into()))?;
        Ok(CommandRunner {
            program: program.clone(),
            args: args.to_vec(),
            metric,
            seeds,
            working_dir: None,
        })
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        match &self.working_dir {
            Some(d) if p.is_relative() => d.join(p),
            _ => p.to_path_buf(),
        }
    }
}

impl TrialRunner for CommandRunner {
    fn run(&mut self, _: u64, assignment: &Assignment, report: &mut dyn FnMut(u32, f64) -> bool) -> Result<RunOutcome, String> {
        let mut cmd = Command::new(&self.program);
        cmd.args(&self.args);
        for (name, value) in assignment {
            cmd.arg("--hp").arg(format!("{name}={}", value.as_text()));
        }
        if let Some(d) = &self.working_dir {
            cmd.current_dir(d);
        }
        let mut child = cmd
            .stdout(Stdio::piped())
            .stdin(Stdio::null())
            .spawn()
            .map_err(|e| format!("cannot launch `{}`: {e}", self.program))?;
        let stdout = child.stdout.take().expect("piped");
        let mut bundle = None;
        for line in BufReader::new(stdout).lines() {
            let line = line.map_err(|e| format!("reading trainer output: {e}"))?;
            match parse_trainer_line(&line) {
                Ok(TrainerLine::Epoch(e, v)) => {
                    if !report(e, v) {
                        let _ = child.kill();
                        let _ = child.wait();
                        return Ok(RunOutcome::Pruned);
                    }
                }
                Ok(TrainerLine::Bundle(p)) => bundle = Some(p),
                Ok(TrainerLine::Other) => {}
                Err(e) => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(e);
                }
            }
        }
        let status = child.wait().map_err(|e| e.to_string())?;
        if !status.success() {
            return Err(format!("trainer exited with {status}"));
        }
        let path = bundle.ok_or("trainer finished without a BUNDLE line")?;
        let b = read_bundle(self.resolve(&path)).map_err(|e| format!("{}: {e}", path.display()))?;
        let score = compute_metric(&b, self.metric, &self.seeds).map_err(|e| format!("{}: {e}", self.metric))?;
        Ok(RunOutcome::Complete {
            value: score.value,
            true_target_accuracy: b.true_target_accuracy,
        })
    }
}

/// Epochs reported by the synthetic objective.
pub const SYNTHETIC_EPOCHS: u32 = 10;

/// In-process objective over a synthetic family. The parameter named
/// `param` selects the sweep position (rescaled from its bounds to
/// `[0, 1]`). At epoch `e` the model's target features carry extra noise of
/// scale `(1 - e / 10) * sigma`, so the last epoch is the finished model.
pub struct SyntheticRunner {
    pub draw: ScenarioDraw,
    pub family: Family,
    pub metric: MetricName,
    pub seeds: MetricSeeds,
    pub param: String,
    bounds: (f64, f64),
}

impl SyntheticRunner {
    pub fn new(
        draw: ScenarioDraw,
        family: Family,
        metric: MetricName,
        seeds: MetricSeeds,
        space: &HyperparamSpace,
        param: &str,
    ) -> Result<Self, SearchError> {
        let p = space
            .parameters
            .iter()
            .find(|p| p.name == param)
            .ok_or_else(|| SearchError::Config(format!("synthetic objective needs a numeric parameter `{param}`")))?;
        let bounds = match p.kind {
            ParamKind::Uniform { lo, hi } | ParamKind::LogUniform { lo, hi } => (lo, hi),
            ParamKind::IntRange { lo, hi } => (lo as f64, hi as f64),
            ParamKind::Categorical { .. } => {
                return Err(SearchError::Config(format!("`{param}` must be numeric for the synthetic objective")))
            }
        };
        Ok(SyntheticRunner {
            draw,
            family,
            metric,
            seeds,
            param: param.to_string(),
            bounds,
        })
    }

    pub fn position(&self, assignment: &Assignment) -> Result<f64, String> {
        match assignment.get(&self.param) {
            Some(HyperValue::Number(x)) => Ok(((x - self.bounds.0) / (self.bounds.1 - self.bounds.0)).clamp(0.0, 1.0)),
            _ => Err(format!("assignment lacks numeric `{}`", self.param)),
        }
    }
}

impl TrialRunner for SyntheticRunner {
    fn run(&mut self, trial_id: u64, assignment: &Assignment, report: &mut dyn FnMut(u32, f64) -> bool) -> Result<RunOutcome, String> {
        let t = self.position(assignment)?;
        let model = SyntheticModel { family: self.family, t };
        let id = format!("trial_{trial_id:03}");
        let jitter_seed = self.seeds.seed ^ t.to_bits();
        let mut last = None;
        for epoch in 1..=SYNTHETIC_EPOCHS {
            let jitter = 1.0 - epoch as f64 / SYNTHETIC_EPOCHS as f64;
            let b = model.bundle_jittered(&self.draw, &id, self.seeds.seed, jitter, jitter_seed);
            let score = compute_metric(&b, self.metric, &self.seeds).map_err(|e| format!("{}: {e}", self.metric))?;
            if !report(epoch, score.value) {
                return Ok(RunOutcome::Pruned);
            }
            last = Some((score.value, b.true_target_accuracy));
        }
        let (value, acc) = last.expect("at least one epoch");
        Ok(RunOutcome::Complete {
            value,
            true_target_accuracy: acc,
        })
    }
}
