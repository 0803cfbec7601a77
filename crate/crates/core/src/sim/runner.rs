use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::{ControllerConfig, ControllerMode, WarmStart};
use crate::condense::{
    build_condensed, build_prediction, compute_offset, eliminate_to_reduced, CondensedProblem,
};
use crate::error::{Error, Result};
use crate::model::{zoh_discretize, ContinuousPlant};
use crate::qp::{solve_qp_warm, QpSettings, WarmStart as QpWarmStart};
use crate::solver::{
    design_gains, shift_blocks, DesignOptions, FlopCounter, SolverGains, SolverState,
};
use crate::wave::WaveForceSignal;

/// Design constants of the controller that produced a record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSummary {
    pub r: f64,
    pub convexity_margin: f64,
    pub kp: Option<f64>,
    pub ki: Option<f64>,
    pub tau: Option<f64>,
    pub rho_bound: Option<f64>,
    pub euclidean_step_norm: Option<f64>,
}

/// Substep rows whose value lies outside the configured interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ViolationCounts {
    pub u: usize,
    pub p: usize,
    pub v: usize,
}

/// One row per plant substep. Row `j` covers `[t_j − Δt, t_j]`: `u` is the
/// input held over it, `w` the force at its midpoint, `p`, `v` and `x` the
/// state at `t_j`, and `energy` the absorbed energy up to `t_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRecord {
    pub label: String,
    pub mode: ControllerMode,
    pub period: f64,
    pub substep: f64,
    pub horizon: usize,
    pub duration: f64,
    /// Hash of the wave signal's bits; equal signals give equal values.
    pub wave_fingerprint: u64,
    pub t: Vec<f64>,
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub energy: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    /// Counted multiplications per control step (single-iteration only).
    pub flops_per_step: Vec<u64>,
    /// Solver iterations per control step (baseline and converged modes).
    pub solver_iterations: Vec<usize>,
    /// `max(stationarity, primal)` KKT residual per control step when tracked.
    pub kkt_residuals: Vec<f64>,
    pub violations: ViolationCounts,
    pub warnings: Vec<String>,
    pub design: Option<DesignSummary>,
}

impl SimulationRecord {
    pub fn final_energy(&self) -> f64 {
        self.energy.last().copied().unwrap_or(0.0)
    }

    pub fn peak_input(&self) -> f64 {
        self.u.iter().fold(0.0, |m, u| m.max(u.abs()))
    }

    pub fn control_steps(&self) -> usize {
        self.flops_per_step.len().max(self.solver_iterations.len())
    }
}

/// Simulation error together with everything recorded before it.
#[derive(Debug, Clone)]
pub struct SimulationFailure {
    pub error: Error,
    pub partial: SimulationRecord,
}

impl std::fmt::Display for SimulationFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} (after {} substeps)",
            self.error,
            self.partial.t.len()
        )
    }
}

impl std::error::Error for SimulationFailure {}

pub type SimResult = std::result::Result<SimulationRecord, Box<SimulationFailure>>;

pub fn wave_fingerprint(wave: &WaveForceSignal) -> u64 {
    // FNV-1a over the IEEE bits
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |x: f64| {
        for b in x.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    };
    eat(wave.gain);
    for ((a, w), p) in wave
        .amplitudes
        .iter()
        .zip(&wave.frequencies)
        .zip(&wave.phases)
    {
        eat(*a);
        eat(*w);
        eat(*p);
    }
    h
}

enum Controller {
    Single {
        problem: Box<CondensedProblem>,
        gains: Box<SolverGains>,
        state: SolverState,
    },
    Converged {
        problem: Box<CondensedProblem>,
        gains: Box<SolverGains>,
        state: SolverState,
    },
    Baseline {
        problem: Box<CondensedProblem>,
        settings: QpSettings,
        warm: Option<(DVector<f64>, DVector<f64>)>,
    },
}

struct StepOutput {
    u: f64,
    flops: Option<u64>,
    iterations: Option<usize>,
    kkt: Option<f64>,
}

impl Controller {
    fn design(
        plant: &ContinuousPlant,
        cfg: &ControllerConfig,
        horizon: usize,
    ) -> Result<(Self, DesignSummary)> {
        let discrete = zoh_discretize(plant, cfg.period)?;
        let ops = build_prediction(&discrete, horizon)?;
        let problem = build_condensed(ops, cfg.bounds, cfg.r, cfg.weight_policy)?;
        let mut summary = DesignSummary {
            r: problem.r,
            convexity_margin: problem.convexity_margin(),
            kp: None,
            ki: None,
            tau: None,
            rho_bound: None,
            euclidean_step_norm: None,
        };
        let controller = match cfg.mode {
            ControllerMode::FullMpcBaseline => Controller::Baseline {
                problem: Box::new(problem),
                settings: QpSettings::default(),
                warm: None,
            },
            mode => {
                let options = DesignOptions {
                    euclidean_norm: false,
                    ..DesignOptions::default()
                };
                let gains = design_gains(&problem, &options)?;
                summary.kp = Some(gains.kp);
                summary.ki = Some(gains.ki);
                summary.tau = Some(gains.tau);
                summary.rho_bound = Some(gains.rho_bound);
                let state = SolverState::cold_start(&gains);
                let (problem, gains) = (Box::new(problem), Box::new(gains));
                if mode == ControllerMode::SingleIteration {
                    Controller::Single {
                        problem,
                        gains,
                        state,
                    }
                } else {
                    Controller::Converged {
                        problem,
                        gains,
                        state,
                    }
                }
            }
        };
        Ok((controller, summary))
    }

    fn control(
        &mut self,
        step: usize,
        x: &DVector<f64>,
        w: &DVector<f64>,
        cfg: &ControllerConfig,
    ) -> Result<StepOutput> {
        match self {
            Controller::Single {
                problem,
                gains,
                state,
            } => {
                // the input planned in the previous period is applied first
                let u = state.input();
                let mut counter = FlopCounter::default();
                let d_til = gains.scaled_offset(x, w, &mut counter);
                let next = gains.step_counted(state, &d_til, &mut counter)?;
                let kkt = if cfg.track_kkt {
                    let d = compute_offset(problem, x, w)?;
                    Some(
                        gains
                            .kkt_report(problem, &next.xi, &next.z, &d)
                            .max_residual(),
                    )
                } else {
                    None
                };
                *state = next;
                match cfg.warm_start {
                    WarmStart::Shift => state.shift(gains),
                    WarmStart::Hold => {}
                    WarmStart::Cold => *state = SolverState::cold_start(gains),
                }
                Ok(StepOutput {
                    u,
                    flops: Some(counter.multiplications),
                    iterations: None,
                    kkt,
                })
            }
            Controller::Converged {
                problem,
                gains,
                state,
            } => {
                let out = gains.solve_to_convergence(
                    problem,
                    x,
                    w,
                    state,
                    cfg.convergence_tol,
                    cfg.convergence_max_iter,
                )?;
                if !out.converged {
                    return Err(Error::NotConverged {
                        step,
                        iterations: out.iterations,
                        change: out.last_change,
                    });
                }
                let u = out.state.input();
                *state = out.state;
                match cfg.warm_start {
                    WarmStart::Shift => state.shift(gains),
                    WarmStart::Hold => {}
                    WarmStart::Cold => *state = SolverState::cold_start(gains),
                }
                Ok(StepOutput {
                    u,
                    flops: None,
                    iterations: Some(out.iterations),
                    kkt: cfg.track_kkt.then_some(out.kkt.max_residual()),
                })
            }
            Controller::Baseline {
                problem,
                settings,
                warm,
            } => {
                let reduced = eliminate_to_reduced(problem, x, w)?;
                let qp = reduced.to_inequality_qp();
                let start = warm.as_ref().map(|(x, y)| QpWarmStart { x, duals: y });
                let sol = solve_qp_warm(&qp, settings, start);
                if !sol.is_solved() {
                    return Err(Error::QpFailed {
                        step,
                        status: sol.status,
                        iterations: sol.iterations,
                        primal: sol.primal_residual,
                        dual: sol.dual_residual,
                    });
                }
                let nh = problem.horizon();
                let (mut xs, mut ys) = (sol.x.clone(), sol.duals.clone());
                *warm = match cfg.warm_start {
                    WarmStart::Shift => {
                        shift_blocks(&mut xs, nh);
                        shift_blocks(&mut ys, nh);
                        Some((xs, ys))
                    }
                    WarmStart::Hold => Some((xs, ys)),
                    WarmStart::Cold => None,
                };
                // actuator saturation; the solver meets the box only to tolerance
                Ok(StepOutput {
                    u: problem.bounds.u.clamp(sol.x[0]),
                    flops: None,
                    iterations: Some(sol.iterations),
                    kkt: None,
                })
            }
        }
    }
}

/// Closed loop of the configured controller against the continuous plant,
/// starting from rest. The plant is propagated exactly over substeps of
/// `T / substeps` with the wave force frozen at each substep midpoint.
pub fn run_closed_loop(
    plant: &ContinuousPlant,
    wave: &WaveForceSignal,
    cfg: &ControllerConfig,
    duration: f64,
) -> SimResult {
    let (horizon, warning) = match cfg.validate().and_then(|_| cfg.horizon()) {
        Ok(h) => h,
        Err(e) => return Err(failure(e, empty_record(cfg, 0, duration, wave))),
    };
    let mut record = empty_record(cfg, horizon, duration, wave);
    record.warnings.extend(warning);
    if !(duration >= 0.0) || !duration.is_finite() {
        let e = Error::InvalidParameter(format!("duration must be >= 0, got {duration}"));
        return Err(failure(e, record));
    }
    let (mut controller, summary) = match Controller::design(plant, cfg, horizon) {
        Ok(c) => c,
        Err(e) => return Err(failure(e, record)),
    };
    record.design = Some(summary);
    let sub = match zoh_discretize(plant, record.substep) {
        Ok(s) => s,
        Err(e) => return Err(failure(e, record)),
    };

    let dt = record.substep;
    let substeps = cfg.substeps;
    let total = (duration / dt + 1e-9).floor() as usize;
    let control_steps = total.div_ceil(substeps);
    let grid: Vec<f64> = (0..control_steps + horizon)
        .map(|m| wave.eval(m as f64 * cfg.period))
        .collect();
    let mut noise = (cfg.measurement_noise > 0.0).then(|| {
        (
            ChaCha8Rng::seed_from_u64(record.wave_fingerprint),
            Normal::new(0.0, cfg.measurement_noise).expect("validated noise level"),
        )
    });

    let n = plant.state_dim();
    let mut x = DVector::zeros(n);
    let mut u = 0.0;
    let mut energy = 0.0;
    record.t.reserve(total);
    for j in 0..total {
        if j % substeps == 0 {
            let k = j / substeps;
            let mut measured = x.clone();
            if let Some((rng, dist)) = noise.as_mut() {
                for xi in measured.iter_mut() {
                    *xi += dist.sample(rng);
                }
            }
            let window = DVector::from_column_slice(&grid[k..k + horizon]);
            match controller.control(k, &measured, &window, cfg) {
                Ok(out) => {
                    u = out.u;
                    record.flops_per_step.extend(out.flops);
                    record.solver_iterations.extend(out.iterations);
                    record.kkt_residuals.extend(out.kkt);
                }
                Err(e) => return Err(failure(e, record)),
            }
            if !u.is_finite() {
                return Err(failure(Error::NonFinite("applied input"), record));
            }
        }
        let w_mid = wave.eval((j as f64 + 0.5) * dt);
        x = sub.propagate(&x, u, w_mid);
        let p = sub.c_p.dot(&x.transpose());
        let v = sub.c_v.dot(&x.transpose());
        if !p.is_finite() || !v.is_finite() {
            return Err(failure(Error::NonFinite("plant state"), record));
        }
        energy -= u * v * dt;

        let b = &cfg.bounds;
        record.violations.u += usize::from(!b.u.contains(u));
        record.violations.p += usize::from(!b.p.contains(p));
        record.violations.v += usize::from(!b.v.contains(v));
        record.t.push((j + 1) as f64 * dt);
        record.u.push(u);
        record.p.push(p);
        record.v.push(v);
        record.w.push(w_mid);
        record.energy.push(energy);
        record.x.push(x.as_slice().to_vec());
    }
    Ok(record)
}

fn failure(error: Error, partial: SimulationRecord) -> Box<SimulationFailure> {
    Box::new(SimulationFailure { error, partial })
}

fn empty_record(
    cfg: &ControllerConfig,
    horizon: usize,
    duration: f64,
    wave: &WaveForceSignal,
) -> SimulationRecord {
    SimulationRecord {
        label: cfg.label(),
        mode: cfg.mode,
        period: cfg.period,
        substep: cfg.substep(),
        horizon,
        duration,
        wave_fingerprint: wave_fingerprint(wave),
        t: Vec::new(),
        u: Vec::new(),
        p: Vec::new(),
        v: Vec::new(),
        w: Vec::new(),
        energy: Vec::new(),
        x: Vec::new(),
        flops_per_step: Vec::new(),
        solver_iterations: Vec::new(),
        kkt_residuals: Vec::new(),
        violations: ViolationCounts::default(),
        warnings: Vec::new(),
        design: None,
    }
}

fn check_mode(
    cfg: &ControllerConfig,
    allowed: &[ControllerMode],
    wave: &WaveForceSignal,
    duration: f64,
) -> std::result::Result<(), Box<SimulationFailure>> {
    if allowed.contains(&cfg.mode) {
        Ok(())
    } else {
        let e =
            Error::InvalidParameter(format!("controller mode {:?} not accepted here", cfg.mode));
        Err(failure(e, empty_record(cfg, 0, duration, wave)))
    }
}

/// Single-iteration controller (also accepts the converged variant).
pub fn run_single_iteration_mpc(
    plant: &ContinuousPlant,
    wave: &WaveForceSignal,
    cfg: &ControllerConfig,
    duration: f64,
) -> SimResult {
    check_mode(
        cfg,
        &[
            ControllerMode::SingleIteration,
            ControllerMode::ConvergedProjFlCmo,
        ],
        wave,
        duration,
    )?;
    run_closed_loop(plant, wave, cfg, duration)
}

pub fn run_baseline_mpc(
    plant: &ContinuousPlant,
    wave: &WaveForceSignal,
    cfg: &ControllerConfig,
    duration: f64,
) -> SimResult {
    check_mode(cfg, &[ControllerMode::FullMpcBaseline], wave, duration)?;
    run_closed_loop(plant, wave, cfg, duration)
}
