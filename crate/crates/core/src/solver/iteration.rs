use nalgebra::DVector;

use super::gains::SolverGains;
use crate::condense::{compute_offset, CondensedProblem};
use crate::error::{Error, Result};
use crate::linalg::ensure_finite_vector;

/// Iterate `ξ = [û; p̂; v̂]` and integral state `z` of the controller.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub xi: DVector<f64>,
    pub z: DVector<f64>,
}

impl SolverState {
    /// `ξ₀ = Π(0)`, `z₀ = 0`.
    pub fn cold_start(gains: &SolverGains) -> Self {
        let nh = gains.horizon;
        let xi = DVector::from_fn(3 * nh, |i, _| 0.0f64.max(gains.lb[i]).min(gains.ub[i]));
        Self {
            xi,
            z: DVector::zeros(2 * nh),
        }
    }

    pub fn input(&self) -> f64 {
        self.xi[0]
    }

    /// Euclidean distance over the stacked `(ξ, z)`.
    pub fn distance(&self, other: &SolverState) -> f64 {
        ((&self.xi - &other.xi).norm_squared() + (&self.z - &other.z).norm_squared()).sqrt()
    }

    pub fn within_bounds(&self, lb: &DVector<f64>, ub: &DVector<f64>) -> bool {
        self.xi
            .iter()
            .zip(lb.iter().zip(ub.iter()))
            .all(|(x, (l, u))| l <= x && x <= u)
    }

    /// Receding-horizon warm start: every length-`N` block moves forward one
    /// slot with its last entry repeated, then `ξ` is projected.
    pub fn shift(&mut self, gains: &SolverGains) {
        let nh = gains.horizon;
        shift_blocks(&mut self.xi, nh);
        shift_blocks(&mut self.z, nh);
        for i in 0..self.xi.len() {
            self.xi[i] = self.xi[i].max(gains.lb[i]).min(gains.ub[i]);
        }
    }
}

pub(crate) fn shift_blocks(v: &mut DVector<f64>, block: usize) {
    for chunk in v.as_mut_slice().chunks_mut(block) {
        if chunk.len() > 1 {
            chunk.copy_within(1.., 0);
        }
    }
}

/// Counts floating-point multiplications performed on the real-time path.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlopCounter {
    pub multiplications: u64,
}

impl FlopCounter {
    pub fn add(&mut self, n: usize) {
        self.multiplications += n as u64;
    }
}

/// First-order optimality diagnostics of the condensed problem.
#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    /// `‖ξ − Π(ξ − ∇f(ξ) − Ceqᵀλ)‖`.
    pub stationarity_residual: f64,
    /// `‖Ceq ξ + d‖`.
    pub primal_residual: f64,
    pub multipliers: DVector<f64>,
}

impl KktReport {
    pub fn max_residual(&self) -> f64 {
        self.stationarity_residual.max(self.primal_residual)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Convergence {
    pub state: SolverState,
    pub iterations: usize,
    pub converged: bool,
    /// `‖state⁺ − state‖` at the last iteration.
    pub last_change: f64,
    pub kkt: KktReport,
}

impl SolverGains {
    /// `d̃ = D̃ [x_k; W_k]`.
    pub fn scaled_offset(
        &self,
        x: &DVector<f64>,
        w: &DVector<f64>,
        counter: &mut FlopCounter,
    ) -> DVector<f64> {
        let n = self.state_dim;
        let mut d = self.dtil.columns(0, n) * x;
        d.gemv(1.0, &self.dtil.columns(n, self.horizon), w, 1.0);
        counter.add(self.dtil.nrows() * self.dtil.ncols());
        d
    }

    pub fn step(&self, state: &SolverState, d_til: &DVector<f64>) -> Result<SolverState> {
        self.step_counted(state, d_til, &mut FlopCounter::default())
    }

    /// `ξ⁺ = Π(G1 ξ + G2 z + g + G3 d̃)`, `z⁺ = z + G4 ξ + d̃`, where `G4 ξ`
    /// uses the identity/zero blocks of `Ceq`.
    pub fn step_counted(
        &self,
        state: &SolverState,
        d_til: &DVector<f64>,
        counter: &mut FlopCounter,
    ) -> Result<SolverState> {
        let nh = self.horizon;
        if state.xi.len() != 3 * nh || state.z.len() != 2 * nh || d_til.len() != 2 * nh {
            return Err(Error::Dimension(format!(
                "solver state ({}, {}) and offset {} do not match horizon {nh}",
                state.xi.len(),
                state.z.len(),
                d_til.len()
            )));
        }
        ensure_finite_vector(&state.xi, "solver iterate xi")?;
        ensure_finite_vector(&state.z, "solver integral state z")?;
        ensure_finite_vector(d_til, "scaled offset d~")?;

        let mut pre = self.g.clone();
        pre.gemv(1.0, &self.g1, &state.xi, 1.0);
        pre.gemv(1.0, &self.g2, &state.z, 1.0);
        pre.gemv(1.0, &self.g3, d_til, 1.0);
        counter.add(self.g1.len() + self.g2.len() + self.g3.len());

        let xi = DVector::from_fn(3 * nh, |i, _| pre[i].max(self.lb[i]).min(self.ub[i]));

        let u = state.xi.rows(0, nh);
        let mut z = &state.z + d_til;
        let mut zp = z.rows_mut(0, nh);
        zp.gemv(-1.0, &self.tau_cup, &u, 1.0);
        zp.axpy(self.tau, &state.xi.rows(nh, nh), 1.0);
        let mut zv = z.rows_mut(nh, nh);
        zv.gemv(-1.0, &self.tau_cuv, &u, 1.0);
        zv.axpy(self.tau, &state.xi.rows(2 * nh, nh), 1.0);
        counter.add(2 * nh * nh + 2 * nh);

        Ok(SolverState { xi, z })
    }

    /// `λ = (Ceq Ceqᵀ)⁻¹ (−Ceq(Hξ + f) + k_p(Ceq ξ + d) + k_i z)`.
    pub fn recover_multipliers(
        &self,
        problem: &CondensedProblem,
        xi: &DVector<f64>,
        z: &DVector<f64>,
        d: &DVector<f64>,
    ) -> DVector<f64> {
        let grad = problem.gradient(xi);
        let h = problem.residual(xi, d);
        let rhs = -(&self.ceq * grad) + h * self.kp + z * self.ki;
        self.gram.solve(&rhs)
    }

    /// Integral state that makes `λ` the multiplier at a feasible point:
    /// `z = (Ceq Ceqᵀ λ + Ceq(Hξ + f)) / k_i`.
    pub fn equilibrium_integral(
        &self,
        problem: &CondensedProblem,
        xi: &DVector<f64>,
        lambda: &DVector<f64>,
    ) -> DVector<f64> {
        let gram = &self.ceq * self.ceq.transpose();
        (gram * lambda + &self.ceq * problem.gradient(xi)) / self.ki
    }

    pub fn kkt_report(
        &self,
        problem: &CondensedProblem,
        xi: &DVector<f64>,
        z: &DVector<f64>,
        d: &DVector<f64>,
    ) -> KktReport {
        let lambda = self.recover_multipliers(problem, xi, z, d);
        let direction = problem.gradient(xi) + self.ceq.tr_mul(&lambda);
        let moved = problem.project(&(xi - direction));
        KktReport {
            stationarity_residual: (xi - moved).norm(),
            primal_residual: problem.residual(xi, d).norm(),
            multipliers: lambda,
        }
    }

    /// Iterate the update until `‖state⁺ − state‖ ≤ tol` or `max_iter`.
    #[allow(clippy::too_many_arguments)]
    pub fn solve_to_convergence(
        &self,
        problem: &CondensedProblem,
        x: &DVector<f64>,
        w: &DVector<f64>,
        init: &SolverState,
        tol: f64,
        max_iter: usize,
    ) -> Result<Convergence> {
        if !(tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tolerance must be positive, got {tol}"
            )));
        }
        let d = compute_offset(problem, x, w)?;
        let d_til = &d * self.tau;
        let mut state = init.clone();
        let mut last_change = f64::INFINITY;
        let mut iterations = 0;
        let mut converged = false;
        while iterations < max_iter {
            let next = self.step(&state, &d_til)?;
            last_change = next.distance(&state);
            state = next;
            iterations += 1;
            if last_change <= tol {
                converged = true;
                break;
            }
        }
        let kkt = self.kkt_report(problem, &state.xi, &state.z, &d);
        Ok(Convergence {
            state,
            iterations,
            converged,
            last_change,
            kkt,
        })
    }
}
