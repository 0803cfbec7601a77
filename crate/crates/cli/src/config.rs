use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wec_mpc::model::{make_benchmark_plant, BenchmarkParams, ContinuousPlant};
use wec_mpc::qp::IpmCostModel;
use wec_mpc::sim::ControllerConfig;
use wec_mpc::wave::{synthesize_wave_force, WaveForceSignal, WaveSpec};

use crate::error::CliError;

/// Sea state; the random phases come from the experiment seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeaState {
    pub significant_height: f64,
    pub peak_period: f64,
    pub gamma: f64,
    pub n_harmonics: usize,
    pub omega_min: f64,
    pub omega_max: f64,
    pub excitation_gain: f64,
}

impl SeaState {
    pub fn with_seed(&self, seed: u64) -> WaveSpec {
        WaveSpec {
            significant_height: self.significant_height,
            peak_period: self.peak_period,
            gamma: self.gamma,
            n_harmonics: self.n_harmonics,
            omega_min: self.omega_min,
            omega_max: self.omega_max,
            excitation_gain: self.excitation_gain,
            seed,
        }
    }
}

/// Sampling periods swept by `benchmark`; every controller is rerun at each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSweep {
    pub periods: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub plant: BenchmarkParams,
    pub wave: SeaState,
    pub controllers: Vec<ControllerConfig>,
    /// Simulated time per run (s).
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub cost_model: IpmCostModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<BenchmarkSweep>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Command-line overrides applied after parsing.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub duration: Option<f64>,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(seed) = overrides.seed {
            self.seed = seed;
        }
        if let Some(duration) = overrides.duration {
            self.duration = duration;
        }
        if let Some(dir) = &overrides.output_dir {
            self.output_dir = dir.clone();
        }
    }

    pub fn wave_spec(&self) -> WaveSpec {
        self.wave.with_seed(self.seed)
    }

    /// Checks every precondition that does not require a design.
    pub fn validate(&self) -> Result<(), CliError> {
        make_benchmark_plant(&self.plant).map_err(config_error)?;
        self.wave_spec().validate().map_err(config_error)?;
        if !(self.duration >= 0.0) || !self.duration.is_finite() {
            return Err(CliError::Config(format!(
                "duration must be >= 0, got {}",
                self.duration
            )));
        }
        let c = &self.cost_model;
        for (name, v) in [
            ("cost_model.iterations", c.iterations),
            ("cost_model.prediction_window", c.prediction_window),
            ("cost_model.flop_rate", c.flop_rate),
            ("cost_model.kappa", c.kappa),
            ("cost_model.epsilon", c.epsilon),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(CliError::Config(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.controllers.is_empty() {
            return Err(CliError::Config(
                "at least one controller is required".into(),
            ));
        }
        let mut labels = HashSet::new();
        for ctrl in &self.controllers {
            ctrl.validate().map_err(config_error)?;
            if !labels.insert(ctrl.label()) {
                return Err(CliError::Config(format!(
                    "duplicate controller label {}",
                    ctrl.label()
                )));
            }
        }
        if let Some(sweep) = &self.benchmark {
            if sweep.periods.is_empty() {
                return Err(CliError::Config("benchmark.periods is empty".into()));
            }
            for ctrl in self.sweep_controllers() {
                ctrl.validate().map_err(config_error)?;
            }
        }
        Ok(())
    }

    pub fn plant(&self) -> Result<ContinuousPlant, CliError> {
        make_benchmark_plant(&self.plant).map_err(config_error)
    }

    pub fn wave_signal(&self) -> Result<WaveForceSignal, CliError> {
        synthesize_wave_force(&self.wave_spec()).map_err(config_error)
    }

    /// Controllers of the benchmark matrix: each configured controller at
    /// each swept period, named `<label>@<T ms>ms`. Controllers that differ
    /// only in period collapse to one run per period; other name clashes get
    /// a `#k` suffix.
    pub fn sweep_controllers(&self) -> Vec<ControllerConfig> {
        let Some(sweep) = &self.benchmark else {
            return self.controllers.clone();
        };
        let mut out: Vec<ControllerConfig> = Vec::new();
        let mut unnamed: Vec<ControllerConfig> = Vec::new();
        for base in &self.controllers {
            for &period in &sweep.periods {
                let mut ctrl = base.clone();
                ctrl.period = period;
                if unnamed.contains(&ctrl) {
                    continue;
                }
                unnamed.push(ctrl.clone());
                let stem = base.name.clone().unwrap_or_else(|| mode_stem(base));
                let name = format!("{stem}@{}ms", period * 1e3);
                let clashes = out
                    .iter()
                    .filter(|c| {
                        c.name
                            .as_deref()
                            .is_some_and(|n| n == name || n.starts_with(&format!("{name}#")))
                    })
                    .count();
                ctrl.name = Some(if clashes == 0 {
                    name
                } else {
                    format!("{name}#{}", clashes + 1)
                });
                out.push(ctrl);
            }
        }
        out
    }
}

fn mode_stem(ctrl: &ControllerConfig) -> String {
    let label = ctrl.label();
    match label.rfind('_') {
        Some(i) => label[..i].to_string(),
        None => label,
    }
}

fn config_error(e: wec_mpc::Error) -> CliError {
    CliError::Config(e.to_string())
}
