use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wec_mpc::condense::{
    build_condensed, build_prediction, eliminate_to_reduced, Bounds, CondensedProblem, Interval,
    ReducedQp, WeightPolicy,
};
use wec_mpc::model::{
    make_benchmark_plant, zoh_discretize, BenchmarkParams, ContinuousPlant, DiscretePlant,
    Radiation,
};
use wec_mpc::qp::{solve_qp, QpSettings};

use crate::reference::TwoSided;

/// Condensed problem with one measurement `(x, W)`.
#[derive(Debug, Clone)]
pub struct Instance {
    pub seed: u64,
    pub plant: ContinuousPlant,
    pub discrete: DiscretePlant,
    pub problem: CondensedProblem,
    pub x: DVector<f64>,
    pub w: DVector<f64>,
}

impl Instance {
    pub fn reduced(&self) -> ReducedQp {
        eliminate_to_reduced(&self.problem, &self.x, &self.w).expect("dimensions match")
    }
}

pub fn random_params(rng: &mut ChaCha8Rng) -> BenchmarkParams {
    let with_radiation = rng.random_bool(0.5);
    BenchmarkParams {
        mass: rng.random_range(1.0..3.0),
        stiffness: rng.random_range(10.0..60.0),
        damping: rng.random_range(0.5..3.0),
        radiation: with_radiation.then(|| Radiation {
            gain: rng.random_range(0.5..4.0),
            pole: -rng.random_range(0.5..4.0),
        }),
    }
}

/// Random convex instance whose reduced QP is feasible. `active` tightens
/// the bounds so that some of them bind at the optimum.
pub fn random_instance(seed: u64, horizon: usize, active: bool) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = random_params(&mut rng);
    let plant = make_benchmark_plant(&params).expect("valid parameters");
    let period = rng.random_range(0.05..0.2);
    let discrete = zoh_discretize(&plant, period).expect("valid period");
    let r = rng.random_range(0.05..0.5);
    let scale = if active { 1.0 } else { 1e3 };
    let (hu, hp, hv) = (
        scale * rng.random_range(0.3..2.0),
        scale * rng.random_range(0.05..0.3),
        scale * rng.random_range(0.2..1.0),
    );
    let bounds = Bounds {
        u: sym_or_shifted(&mut rng, hu),
        p: sym_or_shifted(&mut rng, hp),
        v: sym_or_shifted(&mut rng, hv),
    };
    let n = plant.state_dim();
    let mut w_scale = 3.0;
    loop {
        let ops = build_prediction(&discrete, horizon).expect("horizon within caps");
        let problem =
            build_condensed(ops, bounds, r, WeightPolicy::AutoRaise).expect("convexified");
        let pb = bounds.p.upper.min(-bounds.p.lower).min(0.3);
        let vb = bounds.v.upper.min(-bounds.v.lower).min(1.0);
        let mut x = DVector::from_fn(n, |_, _| rng.random_range(-0.05..0.05));
        x[0] = 0.5 * pb * rng.random_range(-1.0..1.0);
        x[1] = 0.5 * vb * rng.random_range(-1.0..1.0);
        let w = DVector::from_fn(horizon, |_, _| w_scale * rng.random_range(-1.0..1.0));
        let inst = Instance {
            seed,
            plant: plant.clone(),
            discrete: discrete.clone(),
            problem,
            x,
            w,
        };
        if solve_qp(&inst.reduced().to_inequality_qp(), &QpSettings::default()).is_solved() {
            return inst;
        }
        w_scale *= 0.5;
    }
}

fn sym_or_shifted(rng: &mut ChaCha8Rng, half: f64) -> Interval {
    let shift = rng.random_range(-0.2..0.2) * half;
    Interval::new(-half + shift, half + shift)
}

/// Reduced-QP constraints in two-sided form; rows of `Cup`/`Cuv` that are
/// identically zero are dropped (their feasibility is asserted).
pub fn reduced_rows(qp: &ReducedQp) -> Vec<TwoSided> {
    let nh = qp.horizon();
    let mut rows = Vec::new();
    for block in 0..2 {
        for i in 0..nh {
            let a = qp.g_ineq.row(2 * block * nh + i).transpose();
            let upper = qp.h_ineq[2 * block * nh + i];
            let lower = -qp.h_ineq[(2 * block + 1) * nh + i];
            if a.norm() == 0.0 {
                assert!(
                    lower <= 0.0 && 0.0 <= upper,
                    "constant output row infeasible"
                );
                continue;
            }
            rows.push(TwoSided { a, lower, upper });
        }
    }
    for i in 0..nh {
        let mut a = DVector::zeros(nh);
        a[i] = 1.0;
        rows.push(TwoSided {
            a,
            lower: qp.u_lower,
            upper: qp.u_upper,
        });
    }
    rows
}
