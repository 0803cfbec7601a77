//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wec_mpc::nalgebra::DVector;
use wec_mpc::qp::{ipm_min_period, solve_qp, IpmCostModel, QpSettings};
use wec_mpc::sim::{
    count_step_flops, rt_min_period, run_closed_loop, ControllerConfig, SimulationRecord,
};
use wec_mpc::solver::{design_gains, DesignOptions, FlopCounter, SolverGains, SolverState};
use wec_oracles::instances::{random_instance, reduced_rows, Instance};
use wec_oracles::reference::enumerate_active_sets;
use wec_sim::commands::flops_report;
use wec_sim::{cmd_simulate, ExperimentConfig, Overrides};

const PROFILE: &str = include_str!("../profiles/default.json");

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn criterion_1() -> Outcome {
    let t = rt_min_period(2.0, 1e11);
    let err = rel(t, 1e-3);
    outcome(
        err <= 1e-12,
        format!("rt_min_period = {t:.15e} s, relative error {err:.2e}"),
    )
}

fn criterion_2() -> Outcome {
    let model = IpmCostModel {
        iterations: 10.0,
        prediction_window: 2.0,
        flop_rate: 1e11,
        kappa: 1e4,
        epsilon: 1e-6,
    };
    let t = ipm_min_period(&model);
    let expect = 4e-8f64.powf(0.25);
    let err = rel(t, expect);
    let cfg = ExperimentConfig::from_json(PROFILE).expect("default profile");
    let report = flops_report(&cfg).expect("flops report");
    let flagged = report.ipm_quoted_period == 0.017 && report.ipm_discrepancy.contains("17 ms");
    let same = rel(report.ipm_min_period, expect) <= 1e-12;
    outcome(
        err <= 1e-12 && flagged && same,
        format!(
            "ipm_min_period = {t:.15e} s (expected {expect:.15e}, rel err {err:.2e}); report flags 17 ms: {flagged}"
        ),
    )
}

fn criterion_3() -> Outcome {
    let (nh, n) = (100usize, 4usize);
    let ledger = count_step_flops(nh, n);
    let expected = [
        2 * nh * (n + nh),
        9 * nh * nh,
        6 * nh * nh,
        6 * nh * nh,
        2 * nh * nh,
    ];
    let items_ok = ledger.entries.len() == 5
        && ledger
            .entries
            .iter()
            .zip(expected)
            .all(|(e, x)| e.multiplications == x as u64);
    let total_ok = ledger.total == 250_800;

    let cfg = ExperimentConfig::from_json(PROFILE).expect("default profile");
    let ctrl = ControllerConfig {
        period: 0.002,
        ..cfg.controllers[2].clone()
    };
    let plant = cfg.plant().unwrap();
    let (horizon, _) = ctrl.horizon().unwrap();
    let discrete = wec_mpc::model::zoh_discretize(&plant, ctrl.period).unwrap();
    let ops = wec_mpc::condense::build_prediction(&discrete, horizon).unwrap();
    let problem =
        wec_mpc::condense::build_condensed(ops, ctrl.bounds, ctrl.r, ctrl.weight_policy).unwrap();
    let gains = design_gains(
        &problem,
        &DesignOptions {
            euclidean_norm: false,
            ..DesignOptions::default()
        },
    )
    .unwrap();
    let state = SolverState::cold_start(&gains);
    let mut counter = FlopCounter::default();
    let d = gains.scaled_offset(&DVector::zeros(n), &DVector::zeros(horizon), &mut counter);
    gains.step_counted(&state, &d, &mut counter).unwrap();
    let ratio = counter.multiplications as f64 / ledger.total as f64;
    outcome(
        items_ok && total_ok && horizon == nh && (1.0 / 1.3..=1.3).contains(&ratio),
        format!(
            "ledger total {} (items exact: {items_ok}); instrumented step at N={horizon}: {} multiplications, ratio {ratio:.4}",
            ledger.total, counter.multiplications
        ),
    )
}

fn design(inst: &Instance) -> SolverGains {
    design_gains(
        &inst.problem,
        &DesignOptions {
            euclidean_norm: false,
            ..DesignOptions::default()
        },
    )
    .expect("design succeeds on convex instances")
}

fn converge(inst: &Instance, gains: &SolverGains, tol: f64) -> (SolverState, usize, f64) {
    let init = SolverState::cold_start(gains);
    let out = gains
        .solve_to_convergence(&inst.problem, &inst.x, &inst.w, &init, tol, 2_000_000)
        .expect("finite iteration");
    assert!(out.converged, "seed {} did not converge", inst.seed);
    let dist = init.distance(&out.state);
    (out.state, out.iterations, dist)
}

fn fixed_point_residual(gains: &SolverGains, s: &SolverState, d_til: &DVector<f64>) -> f64 {
    gains.step(s, d_til).unwrap().distance(s)
}

fn horizon_for(i: usize, choices: &[usize]) -> usize {
    choices[i % choices.len()]
}

fn criterion_4() -> Outcome {
    let mut agree = 0;
    let mut total = 0;
    let mut worst = String::new();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..50 {
        let inst = random_instance(4000 + i as u64, horizon_for(i, &[3, 5, 10]), i % 2 == 0);
        let gains = design(&inst);
        let d = wec_mpc::condense::compute_offset(&inst.problem, &inst.x, &inst.w).unwrap();
        let d_til = &d * gains.tau;
        let (fixed, _, _) = converge(&inst, &gains, 1e-14);
        let mut perturbed = fixed.clone();
        for v in perturbed.xi.iter_mut() {
            *v += 1e-4 * rng.random_range(-1.0..1.0);
        }
        for v in perturbed.z.iter_mut() {
            *v += 1e-4 * rng.random_range(-1.0..1.0);
        }
        perturbed.xi = inst.problem.project(&perturbed.xi);
        for (label, s) in [("converged", &fixed), ("perturbed", &perturbed)] {
            let fp = fixed_point_residual(&gains, s, &d_til);
            let kkt = gains
                .kkt_report(&inst.problem, &s.xi, &s.z, &d)
                .max_residual();
            total += 1;
            if (fp <= 1e-10) == (kkt <= 1e-8) {
                agree += 1;
            } else if worst.is_empty() {
                worst = format!("; mismatch at instance {i} ({label}): fp {fp:.2e}, kkt {kkt:.2e}");
            }
        }
    }
    outcome(
        agree == total,
        format!("{agree}/{total} states satisfy fixed-point(1e-10) <=> KKT(1e-8){worst}"),
    )
}

fn random_state(rng: &mut ChaCha8Rng, gains: &SolverGains, z_scale: f64) -> SolverState {
    let xi = DVector::from_fn(gains.lb.len(), |i, _| {
        rng.random_range(gains.lb[i]..=gains.ub[i])
    });
    let z = DVector::from_fn(2 * gains.horizon, |_, _| {
        z_scale * rng.random_range(-1.0..1.0)
    });
    SolverState { xi, z }
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut pairs_ok = 0;
    let mut pairs = 0;
    let mut worst_ratio: f64 = 0.0;
    let mut worst_weighted: f64 = 0.0;
    let mut rho_max: f64 = 0.0;
    let mut rate_ok = 0;
    let mut worst_rate: f64 = 0.0;
    for i in 0..20 {
        let inst = random_instance(5000 + i as u64, horizon_for(i, &[3, 5, 10]), i % 2 == 0);
        let gains = design(&inst);
        rho_max = rho_max.max(gains.rho_bound);
        let d = wec_mpc::condense::compute_offset(&inst.problem, &inst.x, &inst.w).unwrap();
        let d_til = &d * gains.tau;
        let (fixed, iterations, dist) = converge(&inst, &gains, 1e-12);
        let z_scale = fixed.z.amax().max(1.0);
        let cert = &gains.certificate;
        for _ in 0..100 {
            let s1 = random_state(&mut rng, &gains, z_scale);
            let s2 = random_state(&mut rng, &gains, z_scale);
            let (t1, t2) = (
                gains.step(&s1, &d_til).unwrap(),
                gains.step(&s2, &d_til).unwrap(),
            );
            let ratio = t1.distance(&t2) / s1.distance(&s2);
            worst_ratio = worst_ratio.max(ratio);
            pairs += 1;
            if ratio <= gains.rho_bound && gains.rho_bound < 1.0 {
                pairs_ok += 1;
            }
            let weighted = cert.weighted_norm(&(&t1.xi - &t2.xi), &(&t1.z - &t2.z))
                / cert.weighted_norm(&(&s1.xi - &s2.xi), &(&s1.z - &s2.z));
            worst_weighted = worst_weighted.max(weighted / gains.rho_bound);
        }
        let bound = (1e-12 / dist).ln() / gains.rho_bound.ln();
        let rate = iterations as f64 / bound;
        worst_rate = worst_rate.max(rate);
        if iterations as f64 <= 2.0 * bound.max(1.0) {
            rate_ok += 1;
        }
    }
    outcome(
        pairs_ok == pairs && rate_ok == 20 && rho_max < 1.0,
        format!(
            "Euclidean pairs within rho_bound: {pairs_ok}/{pairs} (worst ratio {worst_ratio:.4}, max rho_bound {rho_max:.4}); \
             weighted-norm ratio / rho_bound worst {worst_weighted:.4}; \
             iteration counts within 2x of log-rate bound: {rate_ok}/20 (worst {worst_rate:.3}x)"
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut worst_fixed: f64 = 0.0;
    let mut worst_enum: f64 = 0.0;
    let mut candidates = 0;
    for i in 0..20 {
        let inst = random_instance(6000 + i as u64, horizon_for(i, &[3, 4, 5]), true);
        let reduced = inst.reduced();
        let qp = solve_qp(&reduced.to_inequality_qp(), &QpSettings::default());
        assert!(qp.is_solved(), "instance {i}: {:?}", qp.status);
        let gains = design(&inst);
        let (fixed, _, _) = converge(&inst, &gains, 1e-13);
        let nh = inst.problem.horizon();
        worst_fixed = worst_fixed.max((fixed.xi.rows(0, nh) - &qp.x).amax());
        let oracle = enumerate_active_sets(&reduced.hr, &reduced.fr, &reduced_rows(&reduced), 1e-9)
            .expect("enumeration finds the optimum");
        candidates += oracle.candidates;
        worst_enum = worst_enum.max((&oracle.u - &qp.x).amax());
    }
    outcome(
        worst_fixed <= 1e-6 && worst_enum <= 1e-8,
        format!(
            "max |u_fixed_point - u_qp| = {worst_fixed:.2e}; max |u_qp - u_enumeration| = {worst_enum:.2e} \
             ({candidates} active sets tried)"
        ),
    )
}

struct Runs {
    records: Vec<SimulationRecord>,
    bounds: Vec<f64>,
}

impl Runs {
    fn push(&mut self, record: SimulationRecord, cfg: &ControllerConfig) {
        self.bounds.push(cfg.bounds.u.lower);
        self.bounds.push(cfg.bounds.u.upper);
        self.records.push(record);
    }
}

fn run(cfg: &ExperimentConfig, ctrl: &ControllerConfig, duration: f64) -> SimulationRecord {
    let plant = cfg.plant().unwrap();
    let wave = cfg.wave_signal().unwrap();
    run_closed_loop(&plant, &wave, ctrl, duration)
        .unwrap_or_else(|f| panic!("{}: {f}", ctrl.label()))
}

fn criterion_8(runs: &mut Runs) -> Outcome {
    let base = ExperimentConfig::from_json(PROFILE).expect("default profile");
    let mut sums = [0.0; 3];
    let mut per_seed = Vec::new();
    for seed in 0..5u64 {
        let mut cfg = base.clone();
        cfg.apply(&Overrides {
            seed: Some(seed),
            ..Overrides::default()
        });
        let mut e = [0.0; 3];
        for (k, ctrl) in cfg.controllers.iter().enumerate() {
            let rec = run(&cfg, ctrl, 60.0);
            e[k] = rec.final_energy();
            runs.push(rec, ctrl);
        }
        per_seed.push(format!("{:.4}/{:.4}/{:.4}", e[0], e[1], e[2]));
        for k in 0..3 {
            sums[k] += e[k];
        }
    }
    let mean: Vec<f64> = sums.iter().map(|s| s / 5.0).collect();
    outcome(
        mean[1] > mean[0] && mean[2] >= mean[1],
        format!(
            "mean energy baseline@50ms {:.6} J, baseline@20ms {:.6} J, single-iteration@1ms {:.6} J (per seed {})",
            mean[0],
            mean[1],
            mean[2],
            per_seed.join(", ")
        ),
    )
}

fn criterion_9(runs: &mut Runs) -> Outcome {
    let cfg = ExperimentConfig::from_json(PROFILE).expect("default profile");
    let fine = cfg.controllers[0].clone();
    assert_eq!(fine.period, 0.05);
    let coarse = ControllerConfig {
        substeps: 1,
        ..fine.clone()
    };
    let a = run(&cfg, &fine, 30.0);
    let b = run(&cfg, &coarse, 30.0);
    // compare on the control grid shared by both logs
    let stride = fine.substeps;
    let mut num = 0.0;
    let mut den = 0.0;
    for (k, pb) in b.p.iter().enumerate() {
        let pa = a.p[(k + 1) * stride - 1];
        num += (pa - pb) * (pa - pb);
        den += pa * pa;
    }
    let diff = (num / den).sqrt();
    runs.push(a, &fine);
    runs.push(b, &coarse);
    outcome(
        diff > 1e-3,
        format!("relative position difference Δt_sub = T vs T/20 at T = 50 ms: {diff:.4e}"),
    )
}

fn criterion_10() -> Outcome {
    let mut cfg = ExperimentConfig::from_json(PROFILE).expect("default profile");
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        cfg.apply(&Overrides {
            duration: Some(20.0),
            output_dir: Some(dir.path().to_path_buf()),
            ..Overrides::default()
        });
        cmd_simulate(&cfg).expect("simulate succeeds");
    }
    let list = |p: &Path| {
        let mut names: Vec<_> = std::fs::read_dir(p)
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        names.sort();
        names
    };
    let names = list(dirs[0].path());
    let same_names = names == list(dirs[1].path());
    let identical = same_names
        && names.iter().all(|n| {
            std::fs::read(dirs[0].path().join(n)).unwrap()
                == std::fs::read(dirs[1].path().join(n)).unwrap()
        });
    outcome(
        identical && names.len() == 7,
        format!(
            "{} files compared byte-for-byte across two runs: identical = {identical}",
            names.len()
        ),
    )
}

fn criterion_7(runs: &Runs) -> Outcome {
    let mut samples = 0usize;
    let mut violations = 0usize;
    for (k, rec) in runs.records.iter().enumerate() {
        let (lo, hi) = (runs.bounds[2 * k], runs.bounds[2 * k + 1]);
        for &u in &rec.u {
            samples += 1;
            if !(lo <= u && u <= hi) {
                violations += 1;
            }
        }
        violations += rec.violations.u;
    }
    outcome(
        violations == 0 && samples > 0,
        format!(
            "{} closed-loop runs, {samples} applied inputs, {violations} bound violations",
            runs.records.len()
        ),
    )
}

fn main() {
    let mut runs = Runs {
        records: Vec::new(),
        bounds: Vec::new(),
    };
    let mut results: Vec<(usize, &str, Outcome, f64)> = Vec::new();
    let mut record = |id: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let secs = start.elapsed().as_secs_f64();
        println!(
            "[{}] criterion {id:>2} {name}: {} ({secs:.1} s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((id, name, o, secs));
    };
    record(1, "real-time minimum period", &mut criterion_1);
    record(2, "interior-point minimum period", &mut criterion_2);
    record(3, "per-step FLOP ledger", &mut criterion_3);
    record(4, "equilibria <=> KKT points", &mut criterion_4);
    record(5, "contraction", &mut criterion_5);
    record(6, "oracle equivalence", &mut criterion_6);
    record(8, "sampling-period ordering", &mut || {
        criterion_8(&mut runs)
    });
    record(9, "discretization mismatch", &mut || criterion_9(&mut runs));
    record(10, "determinism", &mut criterion_10);
    record(7, "input-bound safety", &mut || criterion_7(&runs));

    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {} passed, {} failed{}",
        results.len() - failed.len(),
        failed.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!(" ({failed:?})")
        }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
