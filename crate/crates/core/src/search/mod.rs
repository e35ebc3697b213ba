//! Label-free hyperparameter search: declarative spaces, a TPE sampler, a
//! median pruner and a sequential trial driver.

pub mod runner;
pub mod space;
pub mod tpe;

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use runner::{CommandRunner, FnRunner, RunOutcome, SyntheticRunner, TrialRunner};
pub use space::{Assignment, HyperparamSpace, Param, ParamKind};
pub use tpe::{suggest, SamplerState, TpeConfig};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search space: {0}")]
    Space(String),
    #[error("invalid search configuration: {0}")]
    Config(String),
    #[error("no completed trials")]
    NoCompletedTrials,
    #[error("history file: {0}")]
    History(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialState {
    Running,
    Pruned,
    Complete,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochValue {
    pub epoch: u32,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub trial_id: u64,
    pub assignment: Assignment,
    pub intermediate_values: Vec<EpochValue>,
    pub state: TrialState,
    pub final_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_target_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Trial {
    pub fn new(trial_id: u64, assignment: Assignment) -> Self {
        Trial {
            trial_id,
            assignment,
            intermediate_values: Vec::new(),
            state: TrialState::Running,
            final_value: None,
            true_target_accuracy: None,
            error: None,
        }
    }

    /// Value the sampler ranks this trial by.
    pub fn sampler_value(&self) -> f64 {
        match (self.state, self.final_value) {
            (TrialState::Complete, Some(v)) => v,
            _ => f64::NEG_INFINITY,
        }
    }

    pub fn value_at(&self, epoch: u32) -> Option<f64> {
        self.intermediate_values.iter().find(|e| e.epoch == epoch).map(|e| e.value)
    }
}

/// Stops a trial whose latest intermediate value falls strictly below the
/// median of completed trials at the same epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MedianPruner {
    pub n_warmup_epochs: u32,
    pub n_min_trials: usize,
}

impl Default for MedianPruner {
    fn default() -> Self {
        MedianPruner {
            n_warmup_epochs: 2,
            n_min_trials: 5,
        }
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl MedianPruner {
    pub fn should_prune(&self, trial: &Trial, history: &[Trial]) -> bool {
        let Some(last) = trial.intermediate_values.last() else {
            return false;
        };
        if last.epoch <= self.n_warmup_epochs {
            return false;
        }
        let completed: Vec<&Trial> = history.iter().filter(|t| t.state == TrialState::Complete).collect();
        if completed.len() < self.n_min_trials {
            return false;
        }
        let peers: Vec<f64> = completed.iter().filter_map(|t| t.value_at(last.epoch)).collect();
        if peers.is_empty() {
            return false;
        }
        last.value < median(peers)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub n_trials: usize,
    pub tpe: TpeConfig,
    /// `None` disables pruning.
    pub pruner: Option<MedianPruner>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            n_trials: 50,
            tpe: TpeConfig::default(),
            pruner: Some(MedianPruner::default()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub best: Trial,
    pub history: Vec<Trial>,
}

/// Highest final value among complete trials; the earliest wins ties.
pub fn best_trial(history: &[Trial]) -> Option<&Trial> {
    let mut best: Option<&Trial> = None;
    for t in history.iter().filter(|t| t.state == TrialState::Complete) {
        let v = t.final_value.unwrap_or(f64::NEG_INFINITY);
        if best.is_none_or(|b| v > b.final_value.unwrap_or(f64::NEG_INFINITY)) {
            best = Some(t);
        }
    }
    best
}

/// Runs trials sequentially until `cfg.n_trials` are recorded.
///
/// `prior` holds trials reloaded from an earlier run; since each suggestion
/// depends only on the seed, trial id and history, a resumed search matches
/// an uninterrupted one. `on_trial` sees every newly finished trial.
pub fn run_search(
    space: &HyperparamSpace,
    runner: &mut dyn TrialRunner,
    cfg: &SearchConfig,
    prior: Vec<Trial>,
    on_trial: &mut dyn FnMut(&Trial) -> io::Result<()>,
) -> Result<SearchOutcome, SearchError> {
    space.validate()?;
    if cfg.n_trials == 0 {
        return Err(SearchError::Config("n_trials must be positive".into()));
    }
    for (i, t) in prior.iter().enumerate() {
        if t.trial_id != i as u64 || t.state == TrialState::Running {
            return Err(SearchError::History(format!(
                "expected finished trial {i}, found trial {} ({:?})",
                t.trial_id, t.state
            )));
        }
    }
    let mut history = prior;
    while history.len() < cfg.n_trials {
        let trial_id = history.len() as u64;
        let state = SamplerState {
            observations: history.iter().map(|t| (t.assignment.clone(), t.sampler_value())).collect(),
        };
        let assignment = suggest(&cfg.tpe, space, &state, trial_id)?;
        let mut trial = Trial::new(trial_id, assignment.clone());
        let mut bad_epoch = None;
        let result = {
            let trial_ref = &mut trial;
            let hist = &history;
            let bad = &mut bad_epoch;
            let mut report = |epoch: u32, value: f64| -> bool {
                if trial_ref.intermediate_values.last().is_some_and(|e| e.epoch >= epoch) || !value.is_finite() {
                    *bad = Some(format!("invalid report: epoch {epoch} score {value}"));
                    return false;
                }
                trial_ref.intermediate_values.push(EpochValue { epoch, value });
                match &cfg.pruner {
                    Some(p) => !p.should_prune(trial_ref, hist),
                    None => true,
                }
            };
            runner.run(trial_id, &assignment, &mut report)
        };
        match (bad_epoch, result) {
            (Some(msg), _) | (None, Err(msg)) => {
                trial.state = TrialState::Failed;
                trial.error = Some(msg);
            }
            (None, Ok(RunOutcome::Pruned)) => trial.state = TrialState::Pruned,
            (None, Ok(RunOutcome::Complete { value, true_target_accuracy })) => {
                if value.is_finite() {
                    trial.state = TrialState::Complete;
                    trial.final_value = Some(value);
                } else {
                    trial.state = TrialState::Failed;
                    trial.error = Some(format!("non-finite final value {value}"));
                }
                trial.true_target_accuracy = true_target_accuracy;
            }
        }
        on_trial(&trial)?;
        history.push(trial);
    }
    let best = best_trial(&history).cloned().ok_or(SearchError::NoCompletedTrials)?;
    Ok(SearchOutcome { best, history })
}

/// Reads a JSON-lines history; a missing file is an empty history.
pub fn load_history(path: &Path) -> Result<Vec<Trial>, SearchError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: Trial = serde_json::from_str(&line).map_err(|e| SearchError::History(format!("line {}: {e}", n + 1)))?;
        out.push(t);
    }
    Ok(out)
}

/// Appends one trial as a JSON line and flushes.
pub fn append_history(path: &Path, trial: &Trial) -> io::Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    let line = serde_json::to_string(trial).map_err(io::Error::other)?;
    writeln!(f, "{line}")?;
    f.flush()
}
