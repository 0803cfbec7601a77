use serde::{Deserialize, Serialize};

use crate::condense::{Bounds, WeightPolicy};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerMode {
    /// One projected update per period; applies the first input of the
    /// previous iterate.
    SingleIteration,
    /// Reduced QP solved to tolerance every period, applied without delay.
    FullMpcBaseline,
    /// The projected update iterated to its fixed point every period.
    ConvergedProjFlCmo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarmStart {
    #[default]
    Shift,
    Hold,
    Cold,
}

fn default_substeps() -> usize {
    20
}

fn default_convergence_tol() -> f64 {
    1e-11
}

fn default_convergence_iter() -> usize {
    200_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub mode: ControllerMode,
    /// Sampling period `T` (s).
    pub period: f64,
    /// Prediction window `T_p` (s); `N = round(T_p / T)`.
    pub prediction_window: f64,
    #[serde(default)]
    pub warm_start: WarmStart,
    pub bounds: Bounds,
    pub r: f64,
    #[serde(default)]
    pub weight_policy: WeightPolicy,
    /// Plant substeps per period.
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    /// Standard deviation of additive state-measurement noise.
    #[serde(default)]
    pub measurement_noise: f64,
    /// Record the KKT residual of the controller state at every period.
    #[serde(default)]
    pub track_kkt: bool,
    #[serde(default = "default_convergence_tol")]
    pub convergence_tol: f64,
    #[serde(default = "default_convergence_iter")]
    pub convergence_max_iter: usize,
}

impl ControllerConfig {
    pub fn new(
        mode: ControllerMode,
        period: f64,
        prediction_window: f64,
        bounds: Bounds,
        r: f64,
    ) -> Self {
        Self {
            name: None,
            mode,
            period,
            prediction_window,
            warm_start: WarmStart::Shift,
            bounds,
            r,
            weight_policy: WeightPolicy::AutoRaise,
            substeps: default_substeps(),
            measurement_noise: 0.0,
            track_kkt: false,
            convergence_tol: default_convergence_tol(),
            convergence_max_iter: default_convergence_iter(),
        }
    }

    pub fn label(&self) -> String {
        if let Some(name) = &self.name {
            return name.clone();
        }
        let mode = match self.mode {
            ControllerMode::SingleIteration => "single_iteration",
            ControllerMode::FullMpcBaseline => "baseline",
            ControllerMode::ConvergedProjFlCmo => "converged",
        };
        format!("{mode}_{}ms", format_millis(self.period))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.period > 0.0) || !self.period.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "sampling period must be positive, got {}",
                self.period
            )));
        }
        if !(self.prediction_window > 0.0) || !self.prediction_window.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "prediction window must be positive, got {}",
                self.prediction_window
            )));
        }
        if !(self.r >= 0.0) || !self.r.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "r must be >= 0, got {}",
                self.r
            )));
        }
        if self.substeps == 0 {
            return Err(Error::InvalidParameter("substeps must be >= 1".into()));
        }
        if !(self.measurement_noise >= 0.0) || !self.measurement_noise.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "measurement noise must be >= 0, got {}",
                self.measurement_noise
            )));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::InvalidParameter(
                "convergence_tol must be positive".into(),
            ));
        }
        self.bounds.validate()?;
        self.horizon().map(|_| ())
    }

    /// `N = round(T_p / T)` and a warning when the ratio is fractional.
    pub fn horizon(&self) -> Result<(usize, Option<String>)> {
        let ratio = self.prediction_window / self.period;
        let n = ratio.round();
        if !(n >= 1.0) || !n.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "T_p/T = {ratio} rounds to a horizon below 1"
            )));
        }
        let warning = ((ratio - n).abs() > 1e-9 * ratio.max(1.0))
            .then(|| format!("T_p/T = {ratio} is not an integer; using N = {n}"));
        Ok((n as usize, warning))
    }

    pub fn substep(&self) -> f64 {
        self.period / self.substeps as f64
    }
}

fn format_millis(period: f64) -> String {
    let ms = period * 1e3;
    if (ms - ms.round()).abs() < 1e-9 {
        format!("{}", ms.round() as i64)
    } else {
        format!("{ms}")
    }
}
