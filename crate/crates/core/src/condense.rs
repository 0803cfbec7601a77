//! Horizon prediction operators and the condensed MPC problem.
//!
//! The decision vector is `ξ = [û; p̂; v̂]` with blocks of length `N`. The
//! retained outputs are tied to the inputs by `Ceq·ξ + d = 0` where
//! `Ceq = [[−Cup, I, 0], [−Cuv, 0, I]]` and
//! `d = −([Cxp; Cxv]·x_k + [Cup; Cuv]·W_k)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::symmetric_min_eigenvalue;
use crate::model::DiscretePlant;

pub const MAX_HORIZON: usize = 2000;
pub const MAX_STACKED_STATES: usize = 8000;

/// Lifted maps from `(x_k, û + W_k)` to the predicted trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionOperators {
    /// `(nN)×n`, block `i` is `A^i`.
    pub a_cal: DMatrix<f64>,
    /// `(nN)×N`, block `(i, j)` is `A^{i−j−1} B` for `i > j`.
    pub b_cal: DMatrix<f64>,
    pub cxp: DMatrix<f64>,
    pub cup: DMatrix<f64>,
    pub cxv: DMatrix<f64>,
    pub cuv: DMatrix<f64>,
    pub horizon: usize,
    pub state_dim: usize,
}

pub fn build_prediction(plant: &DiscretePlant, horizon: usize) -> Result<PredictionOperators> {
    let n = plant.state_dim();
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be >= 1".into()));
    }
    if horizon > MAX_HORIZON {
        return Err(Error::SizeLimit {
            what: "horizon N",
            size: horizon,
            cap: MAX_HORIZON,
        });
    }
    if horizon * n > MAX_STACKED_STATES {
        return Err(Error::SizeLimit {
            what: "stacked states N*n",
            size: horizon * n,
            cap: MAX_STACKED_STATES,
        });
    }

    let mut powers = Vec::with_capacity(horizon);
    powers.push(DMatrix::<f64>::identity(n, n));
    for i in 1..horizon {
        let next = &plant.a * &powers[i - 1];
        powers.push(next);
    }
    // Markov parameters A^k B
    let markov: Vec<DVector<f64>> = powers.iter().map(|p| p * &plant.b).collect();

    let mut a_cal = DMatrix::zeros(n * horizon, n);
    let mut b_cal = DMatrix::zeros(n * horizon, horizon);
    let mut cxp = DMatrix::zeros(horizon, n);
    let mut cxv = DMatrix::zeros(horizon, n);
    let mut cup = DMatrix::zeros(horizon, horizon);
    let mut cuv = DMatrix::zeros(horizon, horizon);

    let hp: Vec<f64> = markov.iter().map(|m| (&plant.c_p * m)[0]).collect();
    let hv: Vec<f64> = markov.iter().map(|m| (&plant.c_v * m)[0]).collect();

    for i in 0..horizon {
        a_cal.view_mut((i * n, 0), (n, n)).copy_from(&powers[i]);
        cxp.row_mut(i).copy_from(&(&plant.c_p * &powers[i]));
        cxv.row_mut(i).copy_from(&(&plant.c_v * &powers[i]));
        for j in 0..i {
            b_cal
                .view_mut((i * n, j), (n, 1))
                .copy_from(&markov[i - j - 1]);
            cup[(i, j)] = hp[i - j - 1];
            cuv[(i, j)] = hv[i - j - 1];
        }
    }

    Ok(PredictionOperators {
        a_cal,
        b_cal,
        cxp,
        cup,
        cxv,
        cuv,
        horizon,
        state_dim: n,
    })
}

impl PredictionOperators {
    /// `p̂ = Cxp x_k + Cup (û + W_k)`.
    pub fn predict_position(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        w: &DVector<f64>,
    ) -> DVector<f64> {
        &self.cxp * x + &self.cup * (u + w)
    }

    pub fn predict_velocity(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        w: &DVector<f64>,
    ) -> DVector<f64> {
        &self.cxv * x + &self.cuv * (u + w)
    }
}

/// Closed interval `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    pub fn symmetric(half_width: f64) -> Self {
        Self::new(-half_width, half_width)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.max(self.lower).min(self.upper)
    }
}

/// Box limits on input, position and velocity, uniform over the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub u: Interval,
    pub p: Interval,
    pub v: Interval,
}

impl Bounds {
    pub fn validate(&self) -> Result<()> {
        for (name, iv) in [("u", self.u), ("p", self.p), ("v", self.v)] {
            if !iv.lower.is_finite() || !iv.upper.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} bounds must be finite"
                )));
            }
            if !(iv.lower < iv.upper) {
                return Err(Error::InvalidParameter(format!(
                    "{name} lower bound {} must be below upper bound {}",
                    iv.lower, iv.upper
                )));
            }
        }
        Ok(())
    }
}

/// What to do when `rI + Cuv + Cuvᵀ` is not positive semidefinite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightPolicy {
    /// Reject with [`Error::NotConvex`].
    Fixed,
    /// Use `r = max(r, 1.05·max(0, −λ_min(Cuv + Cuvᵀ)))`.
    #[default]
    AutoRaise,
}

/// `min ½ξᵀHξ + fᵀξ  s.t.  Ceq ξ + d = 0,  lb ≤ ξ ≤ ub`.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedProblem {
    pub ops: PredictionOperators,
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
    pub ceq: DMatrix<f64>,
    /// Maps `[x_k; W_k]` to `d`.
    pub dmat: DMatrix<f64>,
    pub lb: DVector<f64>,
    pub ub: DVector<f64>,
    pub bounds: Bounds,
    pub r: f64,
    /// `λ_min(Cuv + Cuvᵀ)`.
    pub coupling_min_eig: f64,
}

const CONVEXITY_TOL: f64 = -1e-10;

pub fn build_condensed(
    ops: PredictionOperators,
    bounds: Bounds,
    r: f64,
    policy: WeightPolicy,
) -> Result<CondensedProblem> {
    bounds.validate()?;
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "control weight r must be >= 0, got {r}"
        )));
    }
    let nh = ops.horizon;
    let n = ops.state_dim;

    let sym = &ops.cuv + ops.cuv.transpose();
    let lambda_min = symmetric_min_eigenvalue(&sym);
    let required = 1.05 * (-lambda_min).max(0.0);
    let r = match policy {
        WeightPolicy::AutoRaise => r.max(required),
        WeightPolicy::Fixed => {
            if r + lambda_min < CONVEXITY_TOL {
                return Err(Error::NotConvex {
                    lambda_min,
                    r,
                    required,
                });
            }
            r
        }
    };

    let mut h = DMatrix::zeros(3 * nh, 3 * nh);
    for i in 0..nh {
        h[(i, i)] = r;
        h[(i, 2 * nh + i)] = 1.0;
        h[(2 * nh + i, i)] = 1.0;
    }

    let mut ceq = DMatrix::zeros(2 * nh, 3 * nh);
    ceq.view_mut((0, 0), (nh, nh)).copy_from(&(-&ops.cup));
    ceq.view_mut((nh, 0), (nh, nh)).copy_from(&(-&ops.cuv));
    for i in 0..nh {
        ceq[(i, nh + i)] = 1.0;
        ceq[(nh + i, 2 * nh + i)] = 1.0;
    }

    let mut dmat = DMatrix::zeros(2 * nh, n + nh);
    dmat.view_mut((0, 0), (nh, n)).copy_from(&(-&ops.cxp));
    dmat.view_mut((nh, 0), (nh, n)).copy_from(&(-&ops.cxv));
    dmat.view_mut((0, n), (nh, nh)).copy_from(&(-&ops.cup));
    dmat.view_mut((nh, n), (nh, nh)).copy_from(&(-&ops.cuv));

    let stack = |f: fn(&Interval) -> f64| {
        DVector::from_fn(3 * nh, |i, _| match i / nh {
            0 => f(&bounds.u),
            1 => f(&bounds.p),
            _ => f(&bounds.v),
        })
    };
    let lb = stack(|iv| iv.lower);
    let ub = stack(|iv| iv.upper);

    Ok(CondensedProblem {
        f: DVector::zeros(3 * nh),
        ops,
        h,
        ceq,
        dmat,
        lb,
        ub,
        bounds,
        r,
        coupling_min_eig: lambda_min,
    })
}

impl CondensedProblem {
    pub fn horizon(&self) -> usize {
        self.ops.horizon
    }

    pub fn state_dim(&self) -> usize {
        self.ops.state_dim
    }

    /// `λ_min(rI + Cuv + Cuvᵀ)`.
    pub fn convexity_margin(&self) -> f64 {
        self.r + self.coupling_min_eig
    }

    pub fn objective(&self, xi: &DVector<f64>) -> f64 {
        0.5 * xi.dot(&(&self.h * xi)) + self.f.dot(xi)
    }

    pub fn gradient(&self, xi: &DVector<f64>) -> DVector<f64> {
        &self.h * xi + &self.f
    }

    pub fn residual(&self, xi: &DVector<f64>, d: &DVector<f64>) -> DVector<f64> {
        &self.ceq * xi + d
    }

    pub fn project(&self, xi: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(xi.len(), |i, _| xi[i].max(self.lb[i]).min(self.ub[i]))
    }

    /// `[x_k; W_k]` stacked, after dimension checks.
    pub fn stack_measurement(&self, x: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
        let (n, nh) = (self.state_dim(), self.horizon());
        if x.len() != n || w.len() != nh {
            return Err(Error::Dimension(format!(
                "expected state of length {n} and wave preview of length {nh}, got {} and {}",
                x.len(),
                w.len()
            )));
        }
        let mut s = DVector::zeros(n + nh);
        s.rows_mut(0, n).copy_from(x);
        s.rows_mut(n, nh).copy_from(w);
        Ok(s)
    }

    /// Lift an input sequence to `ξ = [û; p̂(û); v̂(û)]`.
    pub fn lift(&self, x: &DVector<f64>, w: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let nh = self.horizon();
        let mut xi = DVector::zeros(3 * nh);
        xi.rows_mut(0, nh).copy_from(u);
        xi.rows_mut(nh, nh)
            .copy_from(&self.ops.predict_position(x, u, w));
        xi.rows_mut(2 * nh, nh)
            .copy_from(&self.ops.predict_velocity(x, u, w));
        xi
    }
}

/// `d` such that `Ceq·ξ + d = 0` encodes the output predictions.
pub fn compute_offset(
    problem: &CondensedProblem,
    x: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<DVector<f64>> {
    let s = problem.stack_measurement(x, w)?;
    Ok(&problem.dmat * s)
}

/// Input-only QP: `min ½ûᵀHrû + frᵀû` s.t. `G û ≤ h` (output limits) and
/// `u_lower ≤ û ≤ u_upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedQp {
    pub hr: DMatrix<f64>,
    pub fr: DVector<f64>,
    /// `[Cup; −Cup; Cuv; −Cuv]`.
    pub g_ineq: DMatrix<f64>,
    pub h_ineq: DVector<f64>,
    pub u_lower: f64,
    pub u_upper: f64,
}

pub fn eliminate_to_reduced(
    problem: &CondensedProblem,
    x: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<ReducedQp> {
    problem.stack_measurement(x, w)?;
    let ops = &problem.ops;
    let nh = ops.horizon;
    let hr = DMatrix::identity(nh, nh) * problem.r + &ops.cuv + ops.cuv.transpose();
    let p_free = &ops.cxp * x + &ops.cup * w;
    let v_free = &ops.cxv * x + &ops.cuv * w;
    let fr = v_free.clone();

    let mut g = DMatrix::zeros(4 * nh, nh);
    g.view_mut((0, 0), (nh, nh)).copy_from(&ops.cup);
    g.view_mut((nh, 0), (nh, nh)).copy_from(&(-&ops.cup));
    g.view_mut((2 * nh, 0), (nh, nh)).copy_from(&ops.cuv);
    g.view_mut((3 * nh, 0), (nh, nh)).copy_from(&(-&ops.cuv));

    let b = problem.bounds;
    let h = DVector::from_fn(4 * nh, |i, _| {
        let k = i % nh;
        match i / nh {
            0 => b.p.upper - p_free[k],
            1 => -b.p.lower + p_free[k],
            2 => b.v.upper - v_free[k],
            _ => -b.v.lower + v_free[k],
        }
    });
    Ok(ReducedQp {
        hr,
        fr,
        g_ineq: g,
        h_ineq: h,
        u_lower: b.u.lower,
        u_upper: b.u.upper,
    })
}

impl ReducedQp {
    pub fn horizon(&self) -> usize {
        self.fr.len()
    }

    pub fn objective(&self, u: &DVector<f64>) -> f64 {
        0.5 * u.dot(&(&self.hr * u)) + self.fr.dot(u)
    }

    /// All constraints as `G u ≤ b`: output rows followed by `I` and `−I`.
    pub fn to_inequality_qp(&self) -> crate::qp::InequalityQp {
        let nh = self.horizon();
        let mut g = DMatrix::zeros(6 * nh, nh);
        g.view_mut((0, 0), (4 * nh, nh)).copy_from(&self.g_ineq);
        let mut b = DVector::zeros(6 * nh);
        b.rows_mut(0, 4 * nh).copy_from(&self.h_ineq);
        for i in 0..nh {
            g[(4 * nh + i, i)] = 1.0;
            g[(5 * nh + i, i)] = -1.0;
            b[4 * nh + i] = self.u_upper;
            b[5 * nh + i] = -self.u_lower;
        }
        crate::qp::InequalityQp {
            hessian: self.hr.clone(),
            linear: self.fr.clone(),
            g,
            b,
        }
    }

    /// Equality multipliers of the condensed problem implied by the reduced
    /// solution `u` and the duals `y ≥ 0` of [`Self::to_inequality_qp`].
    pub fn equality_multipliers(&self, u: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let nh = self.horizon();
        let mut lambda = DVector::zeros(2 * nh);
        for i in 0..nh {
            let nu_p = y[i] - y[nh + i];
            let nu_v = y[2 * nh + i] - y[3 * nh + i];
            lambda[i] = -nu_p;
            lambda[nh + i] = -u[i] - nu_v;
        }
        lambda
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::RowDVector;

    fn scalar_chain() -> DiscretePlant {
        DiscretePlant {
            a: DMatrix::from_element(1, 1, 0.5),
            b: DVector::from_element(1, 1.0),
            c_p: RowDVector::from_element(1, 1.0),
            c_v: RowDVector::from_element(1, 1.0),
            period: 1.0,
        }
    }

    fn loose() -> Bounds {
        Bounds {
            u: Interval::symmetric(10.0),
            p: Interval::symmetric(10.0),
            v: Interval::symmetric(10.0),
        }
    }

    #[test]
    fn horizon_one_has_no_input_coupling() {
        let plant = DiscretePlant {
            a: DMatrix::from_row_slice(2, 2, &[0.9, 0.1, -0.2, 0.8]),
            b: DVector::from_row_slice(&[0.0, 0.1]),
            c_p: RowDVector::from_row_slice(&[1.0, 0.0]),
            c_v: RowDVector::from_row_slice(&[0.0, 1.0]),
            period: 0.1,
        };
        let ops = build_prediction(&plant, 1).unwrap();
        assert_eq!(ops.a_cal, DMatrix::identity(2, 2));
        assert_eq!(ops.b_cal, DMatrix::zeros(2, 1));
        assert_eq!(ops.cup, DMatrix::zeros(1, 1));
        assert_eq!(ops.cxp, DMatrix::from_row_slice(1, 2, &[1.0, 0.0]));
    }

    #[test]
    fn scalar_chain_prediction_by_hand() {
        let ops = build_prediction(&scalar_chain(), 3).unwrap();
        let expect = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.5, 1.0, 0.0]);
        assert_eq!(ops.cup, expect);
        assert_eq!(ops.cuv, expect);
        assert_eq!(
            ops.a_cal,
            DMatrix::from_column_slice(3, 1, &[1.0, 0.5, 0.25])
        );
    }

    #[test]
    fn offset_position_block_by_hand() {
        let ops = build_prediction(&scalar_chain(), 2).unwrap();
        let p = build_condensed(ops, loose(), 1.0, WeightPolicy::AutoRaise).unwrap();
        let d = compute_offset(&p, &DVector::from_element(1, 1.0), &DVector::zeros(2)).unwrap();
        // d = −[Cxp; Cxv] x_k
        assert_eq!(
            d.rows(0, 2).into_owned(),
            DVector::from_row_slice(&[-1.0, -0.5])
        );
        let zero = compute_offset(&p, &DVector::zeros(1), &DVector::zeros(2)).unwrap();
        assert_eq!(zero, DVector::zeros(4));
    }

    #[test]
    fn fixed_policy_rejects_nonconvex_weight() {
        let ops = build_prediction(&scalar_chain(), 3).unwrap();
        let err = build_condensed(ops.clone(), loose(), 0.0, WeightPolicy::Fixed).unwrap_err();
        match err {
            Error::NotConvex { lambda_min, .. } => assert!(lambda_min < 0.0),
            e => panic!("unexpected {e:?}"),
        }
        let raised = build_condensed(ops, loose(), 0.0, WeightPolicy::AutoRaise).unwrap();
        assert!(raised.convexity_margin() > 0.0);
        assert!((raised.r - 1.05 * -raised.coupling_min_eig).abs() < 1e-14);
    }

    #[test]
    fn zero_coupling_accepts_any_positive_weight() {
        let ops = build_prediction(&scalar_chain(), 1).unwrap();
        let p = build_condensed(ops, loose(), 1e-9, WeightPolicy::Fixed).unwrap();
        assert_eq!(p.r, 1e-9);
    }

    #[test]
    fn size_caps_are_enforced() {
        assert!(matches!(
            build_prediction(&scalar_chain(), MAX_HORIZON + 1),
            Err(Error::SizeLimit { .. })
        ));
        assert!(build_prediction(&scalar_chain(), 0).is_err());
    }

    #[test]
    fn invalid_bounds_rejected() {
        let ops = build_prediction(&scalar_chain(), 2).unwrap();
        let mut b = loose();
        b.p = Interval::new(1.0, 1.0);
        assert!(build_condensed(ops, b, 1.0, WeightPolicy::AutoRaise).is_err());
    }
}
