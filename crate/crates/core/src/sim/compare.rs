use serde::{Deserialize, Serialize};

use super::config::ControllerMode;
use super::runner::{DesignSummary, SimulationRecord, ViolationCounts};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub mode: ControllerMode,
    pub period: f64,
    pub horizon: usize,
    pub duration: f64,
    pub final_energy: f64,
    pub peak_abs_u: f64,
    pub violations: ViolationCounts,
    /// Counted multiplications of one control step; constant for fixed `N`.
    pub flops_per_step: Option<u64>,
    pub design: Option<DesignSummary>,
    pub warnings: Vec<String>,
}

pub fn summarize(record: &SimulationRecord) -> RunSummary {
    RunSummary {
        label: record.label.clone(),
        mode: record.mode,
        period: record.period,
        horizon: record.horizon,
        duration: record.duration,
        final_energy: record.final_energy(),
        peak_abs_u: record.peak_input(),
        violations: record.violations,
        flops_per_step: record.flops_per_step.iter().copied().max(),
        design: record.design,
        warnings: record.warnings.clone(),
    }
}

/// `(E_run − E_reference) / E_reference`; absent when the reference is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub run: String,
    pub reference: String,
    pub relative: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub duration: f64,
    pub runs: Vec<RunSummary>,
    pub improvements: Vec<Improvement>,
}

impl ComparisonReport {
    pub fn improvement(&self, run: &str, reference: &str) -> Option<f64> {
        self.improvements
            .iter()
            .find(|i| i.run == run && i.reference == reference)
            .and_then(|i| i.relative)
    }
}

pub fn relative_improvement(energy: f64, reference: f64) -> Option<f64> {
    (reference != 0.0).then(|| (energy - reference) / reference)
}

pub fn compare_runs(records: &[SimulationRecord]) -> Result<ComparisonReport> {
    let first = records
        .first()
        .ok_or_else(|| Error::Comparison("no records to compare".into()))?;
    for r in records {
        if (r.duration - first.duration).abs() > 1e-12 * first.duration.abs().max(1.0) {
            return Err(Error::Comparison(format!(
                "durations differ: {} ({}) vs {} ({})",
                r.label, r.duration, first.label, first.duration
            )));
        }
        if r.wave_fingerprint != first.wave_fingerprint {
            return Err(Error::Comparison(format!(
                "{} and {} were driven by different waves",
                r.label, first.label
            )));
        }
    }
    let runs: Vec<RunSummary> = records.iter().map(summarize).collect();
    let mut improvements = Vec::new();
    for a in &runs {
        for b in &runs {
            if a.label != b.label {
                improvements.push(Improvement {
                    run: a.label.clone(),
                    reference: b.label.clone(),
                    relative: relative_improvement(a.final_energy, b.final_energy),
                });
            }
        }
    }
    Ok(ComparisonReport {
        duration: first.duration,
        runs,
        improvements,
    })
}
