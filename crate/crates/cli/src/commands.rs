use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use wec_mpc::condense::{build_condensed, build_prediction};
use wec_mpc::model::zoh_discretize;
use wec_mpc::qp::ipm_min_period;
use wec_mpc::sim::{
    compare_runs, count_step_flops, rt_min_period, run_closed_loop, summarize, ComparisonReport,
    ControllerConfig, ControllerMode, FlopLedger, SimulationRecord,
};
use wec_mpc::solver::{design_gains, DesignOptions};

use crate::config::ExperimentConfig;
use crate::error::CliError;

/// Commonly quoted interior-point period for the default cost model; the
/// closed form gives about 14.1 ms instead.
pub const QUOTED_IPM_PERIOD: f64 = 0.017;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignReport {
    pub label: String,
    pub mode: ControllerMode,
    pub period: f64,
    pub horizon: usize,
    pub state_dim: usize,
    pub r: f64,
    /// `λ_min(rI + Cuv + Cuvᵀ)`.
    pub convexity_margin: f64,
    pub kp: f64,
    pub ki: f64,
    pub tau: f64,
    pub rho_bound: f64,
    pub euclidean_step_norm: Option<f64>,
    pub tmt_norm: f64,
    pub zero_dynamics_norm: f64,
    pub eta_rate: f64,
    pub multiplier_rate: f64,
    /// Shapes of `G1`, `G2`, `G3`, `G4`.
    pub sizes: [[usize; 2]; 4],
    pub warnings: Vec<String>,
}

pub fn design_report(
    cfg: &ExperimentConfig,
    ctrl: &ControllerConfig,
) -> Result<DesignReport, CliError> {
    let plant = cfg.plant()?;
    let lib = |e: wec_mpc::Error| CliError::from_library(&e);
    let (horizon, warning) = ctrl.horizon().map_err(lib)?;
    let discrete = zoh_discretize(&plant, ctrl.period).map_err(lib)?;
    let ops = build_prediction(&discrete, horizon).map_err(lib)?;
    let problem = build_condensed(ops, ctrl.bounds, ctrl.r, ctrl.weight_policy).map_err(lib)?;
    let gains = design_gains(&problem, &DesignOptions::default()).map_err(lib)?;
    let shape = |m: &wec_mpc::nalgebra::DMatrix<f64>| [m.nrows(), m.ncols()];
    Ok(DesignReport {
        label: ctrl.label(),
        mode: ctrl.mode,
        period: ctrl.period,
        horizon,
        state_dim: plant.state_dim(),
        r: problem.r,
        convexity_margin: problem.convexity_margin(),
        kp: gains.kp,
        ki: gains.ki,
        tau: gains.tau,
        rho_bound: gains.rho_bound,
        euclidean_step_norm: gains.euclidean_step_norm,
        tmt_norm: gains.tmt_norm,
        zero_dynamics_norm: gains.zero_dynamics_norm,
        eta_rate: gains.certificate.eta_rate,
        multiplier_rate: gains.certificate.multiplier_rate,
        sizes: [
            shape(&gains.g1),
            shape(&gains.g2),
            shape(&gains.g3),
            shape(&gains.g4),
        ],
        warnings: warning.into_iter().collect(),
    })
}

pub fn cmd_design(cfg: &ExperimentConfig) -> Result<Vec<DesignReport>, CliError> {
    cfg.validate()?;
    let reports = cfg
        .controllers
        .iter()
        .map(|c| design_report(cfg, c))
        .collect::<Result<Vec<_>, _>>()?;
    write_json(&cfg.output_dir.join("design.json"), &reports)?;
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlopsRow {
    pub period: f64,
    /// `N = T_p / T` with the cost-model prediction window.
    pub horizon: usize,
    pub ledger: FlopLedger,
    /// Time of one single-iteration step at the configured rate.
    pub step_time: f64,
    /// Interior-point delay `n_i·5N³/OP` at this horizon.
    pub ipm_delay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlopsReport {
    pub flop_rate: f64,
    pub prediction_window: f64,
    pub ipm_iterations: f64,
    pub rt_min_period: f64,
    pub ipm_min_period: f64,
    pub ipm_quoted_period: f64,
    pub ipm_discrepancy: String,
    pub rows: Vec<FlopsRow>,
}

pub fn flops_report(cfg: &ExperimentConfig) -> Result<FlopsReport, CliError> {
    let model = cfg.cost_model;
    let n = cfg.plant()?.state_dim();
    let ipm = ipm_min_period(&model);
    let mut periods: Vec<f64> = cfg.controllers.iter().map(|c| c.period).collect();
    periods.sort_by(|a, b| b.total_cmp(a));
    periods.dedup();
    let rows = periods
        .into_iter()
        .map(|period| {
            let horizon = ((model.prediction_window / period).round() as usize).max(1);
            let ledger = count_step_flops(horizon, n);
            FlopsRow {
                period,
                horizon,
                step_time: ledger.total as f64 / model.flop_rate,
                ipm_delay: model.delay(horizon),
                ledger,
            }
        })
        .collect();
    Ok(FlopsReport {
        flop_rate: model.flop_rate,
        prediction_window: model.prediction_window,
        ipm_iterations: model.iterations,
        rt_min_period: rt_min_period(model.prediction_window, model.flop_rate),
        ipm_min_period: ipm,
        ipm_quoted_period: QUOTED_IPM_PERIOD,
        ipm_discrepancy: format!(
            "closed form (50 n_i T_p^3 / OP)^(1/4) gives {:.4} ms; the commonly quoted value for this setup is {:.0} ms",
            ipm * 1e3,
            QUOTED_IPM_PERIOD * 1e3
        ),
        rows,
    })
}

pub fn cmd_flops(cfg: &ExperimentConfig) -> Result<FlopsReport, CliError> {
    cfg.validate()?;
    let report = flops_report(cfg)?;
    write_json(&cfg.output_dir.join("flops.json"), &report)?;
    Ok(report)
}

/// Runs every controller (one thread each) and writes `<label>.csv`,
/// `<label>.json` and `comparison.json` into `dir`.
fn run_all(
    cfg: &ExperimentConfig,
    controllers: &[ControllerConfig],
    dir: &Path,
) -> Result<ComparisonReport, CliError> {
    let plant = cfg.plant()?;
    let wave = cfg.wave_signal()?;
    let results: Vec<_> = std::thread::scope(|scope| {
        let handles: Vec<_> = controllers
            .iter()
            .map(|ctrl| {
                let (plant, wave) = (&plant, &wave);
                scope.spawn(move || run_closed_loop(plant, wave, ctrl, cfg.duration))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    });

    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut records = Vec::with_capacity(results.len());
    let mut first_error = None;
    for result in results {
        match result {
            Ok(record) => {
                write_record(dir, &record)?;
                records.push(record);
            }
            Err(failure) => {
                write_record(dir, &failure.partial)?;
                first_error.get_or_insert_with(|| {
                    let kind = CliError::from_library(&failure.error);
                    let msg = format!("{}: {}", failure.partial.label, failure);
                    match kind {
                        CliError::Config(_) => CliError::Config(msg),
                        CliError::Design(_) => CliError::Design(msg),
                        CliError::Runtime(_) => CliError::Runtime(msg),
                    }
                });
            }
        }
    }
    if let Some(e) = first_error {
        return Err(e);
    }
    let report = compare_runs(&records).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_json(&dir.join("comparison.json"), &report)?;
    Ok(report)
}

pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<ComparisonReport, CliError> {
    cfg.validate()?;
    run_all(cfg, &cfg.controllers, &cfg.output_dir)
}

/// `simulate` over the period matrix of the `benchmark` block, written to
/// `<out>/benchmark`.
pub fn cmd_benchmark(cfg: &ExperimentConfig) -> Result<ComparisonReport, CliError> {
    cfg.validate()?;
    if cfg.benchmark.is_none() {
        return Err(CliError::Config(
            "benchmark requires a \"benchmark\" block with periods".into(),
        ));
    }
    run_all(
        cfg,
        &cfg.sweep_controllers(),
        &cfg.output_dir.join("benchmark"),
    )
}

pub fn file_stem(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "_-.@".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// `t,u,p,v,w,E` with 17 significant digits.
pub fn record_csv(record: &SimulationRecord) -> String {
    let mut out = String::with_capacity(64 + record.t.len() * 140);
    out.push_str("t,u,p,v,w,E\n");
    for j in 0..record.t.len() {
        let row = [
            record.t[j],
            record.u[j],
            record.p[j],
            record.v[j],
            record.w[j],
            record.energy[j],
        ];
        for (i, value) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&format!("{value:.16e}"));
        }
        out.push('\n');
    }
    out
}

fn write_record(dir: &Path, record: &SimulationRecord) -> Result<(), CliError> {
    let stem = file_stem(&record.label);
    let csv_path = dir.join(format!("{stem}.csv"));
    let mut file = fs::File::create(&csv_path).map_err(|e| CliError::io(&csv_path, e))?;
    file.write_all(record_csv(record).as_bytes())
        .map_err(|e| CliError::io(&csv_path, e))?;
    write_json(&dir.join(format!("{stem}.json")), &summarize(record))
}

pub fn write_json<T: Serialize + ?Sized>(path: &PathBuf, value: &T) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}
