//! Run configuration read from TOML.
//!
//! Every section is optional and falls back to its defaults; unknown keys
//! are rejected. [`RunConfig::resolve`] validates the whole file and ties
//! the model's shape to the game before any work starts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::game::{build_reach_task, build_task_1, build_task_2, ActionMode, Dynamics, GameSpec, LandmarkWorld, TaskParams};
use crate::model::ModelConfig;
use crate::stl::{parse_spec, PredicateRegistry, Spec};
use crate::trainer::TrainConfig;
use crate::Error;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    /// Visit the own landmark and the next one.
    #[default]
    Task1,
    /// Meet at landmark 0, and visit the own landmark.
    Task2,
    /// Visit the own landmark.
    Reach,
    /// One formula per agent, from `formulas` or `spec_file`.
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskConfig {
    pub kind: TaskKind,
    pub window: usize,
    pub radius: f64,
    /// Formula file for `custom`, relative to the config file. Resolution
    /// inlines its lines into `formulas`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spec_file: Option<PathBuf>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub formulas: Vec<String>,
}

impl Default for TaskConfig {
    fn default() -> Self {
        let p = TaskParams::default();
        TaskConfig { kind: TaskKind::Task1, window: p.window, radius: p.radius, spec_file: None, formulas: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub n: u64,
    pub confidence: f64,
    pub mode: ActionMode,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { n: 2560, confidence: 0.90, mode: ActionMode::Sample }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub game: GameSpec,
    pub dynamics: Dynamics,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub task: TaskConfig,
    pub verify: VerifyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: PathBuf::from("runs/default"),
            game: GameSpec::default(),
            dynamics: Dynamics::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            task: TaskConfig::default(),
            verify: VerifyConfig::default(),
        }
    }
}

/// Reads formulas one per line; blank lines and `#` comments are skipped.
pub fn parse_formula_lines(text: &str) -> Result<Vec<Spec>, Error> {
    let registry = PredicateRegistry::new();
    formula_lines(text)
        .map(|(lineno, line)| parse_spec(line, &registry).map_err(|e| Error::Parse(format!("line {lineno}: {e}"))))
        .collect()
}

fn formula_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, Error> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads and resolves a config file. A relative `spec_file` is taken
    /// relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(f) = cfg.task.spec_file.as_mut() {
            if f.is_relative() {
                *f = path.parent().unwrap_or(Path::new(".")).join(&*f);
            }
        }
        cfg.resolve()?;
        Ok(cfg)
    }

    /// Validates every section, copies agent count and horizon into the
    /// model, the seed into the trainer, and inlines a custom spec file.
    pub fn resolve(&mut self) -> Result<(), Error> {
        self.game.validate()?;
        self.dynamics.validate()?;
        self.model.n_agents = self.game.n_agents;
        self.model.horizon = self.game.horizon;
        self.model.validate()?;
        self.train.seed = self.seed;
        self.train.validate()?;
        if !(self.task.radius > 0.0 && self.task.radius.is_finite()) {
            return Err(Error::Config(format!("task radius {} must be positive", self.task.radius)));
        }
        if self.verify.n == 0 {
            return Err(Error::Config("verify.n must be at least 1".into()));
        }
        crate::statverify::z_value(self.verify.confidence)?;
        if let Some(path) = self.task.spec_file.take() {
            if self.task.kind != TaskKind::Custom {
                return Err(Error::Config("spec_file needs kind = \"custom\"".into()));
            }
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Error::Config(format!("spec file {}: {e}", path.display())))?;
            self.task.formulas = formula_lines(&text).map(|(_, l)| l.to_string()).collect();
        }
        self.specs()?;
        Ok(())
    }

    pub fn task_params(&self) -> TaskParams {
        TaskParams { window: self.task.window, radius: self.task.radius }
    }

    /// Per-agent formulas of the selected task.
    pub fn specs(&self) -> Result<Vec<Spec>, Error> {
        let n = self.game.n_agents;
        let p = self.task_params();
        let specs = match self.task.kind {
            TaskKind::Task1 => build_task_1(n, &p),
            TaskKind::Task2 => build_task_2(n, &p),
            TaskKind::Reach => build_reach_task(n, &p),
            TaskKind::Custom => parse_formula_lines(&self.task.formulas.join("\n"))?,
        };
        if specs.len() != n {
            return Err(Error::Config(format!("{} formulas for {n} agents", specs.len())));
        }
        Ok(specs)
    }

    pub fn world(&self) -> Result<LandmarkWorld, Error> {
        Ok(LandmarkWorld::new(self.game.clone(), self.dynamics.clone())?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
