//! Reference QP solver for the input-only MPC problem and the interior-point
//! cost model used to size the conventional controller.
//!
//! The solver is a dense ADMM operator splitting in the OSQP form
//! `min ½xᵀPx + qᵀx  s.t.  l ≤ Ax ≤ u` with Ruiz equilibration,
//! over-relaxation, residual-balancing penalty updates and a final
//! active-set polish that solves the equality-constrained KKT system exactly.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// `min ½xᵀHx + fᵀx  s.t.  G x ≤ b`.
#[derive(Debug, Clone, PartialEq)]
pub struct InequalityQp {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub g: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl InequalityQp {
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + self.linear.dot(x)
    }

    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        (&self.g * x - &self.b).iter().fold(0.0, |m, v| m.max(*v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub eps_infeasible: f64,
    pub max_iter: usize,
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub adapt_interval: usize,
    pub check_interval: usize,
    pub scaling_iters: usize,
    pub polish: bool,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            eps_abs: 1e-9,
            eps_rel: 1e-9,
            eps_infeasible: 1e-7,
            max_iter: 50_000,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            adapt_interval: 25,
            check_interval: 5,
            scaling_iters: 10,
            polish: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Solved,
    MaxIterations,
    PrimalInfeasible,
    DualInfeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub cost: f64,
    /// Multipliers of `G x ≤ b`, non-negative at a solution.
    pub duals: DVector<f64>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub status: QpStatus,
    pub polished: bool,
}

impl QpSolution {
    pub fn is_solved(&self) -> bool {
        self.status == QpStatus::Solved
    }
}

/// Optional primal/dual starting point.
#[derive(Debug, Clone, Copy)]
pub struct WarmStart<'a> {
    pub x: &'a DVector<f64>,
    pub duals: &'a DVector<f64>,
}

pub fn solve_qp(qp: &InequalityQp, settings: &QpSettings) -> QpSolution {
    solve_qp_warm(qp, settings, None)
}

pub fn solve_qp_warm(
    qp: &InequalityQp,
    settings: &QpSettings,
    warm: Option<WarmStart<'_>>,
) -> QpSolution {
    let l = DVector::from_element(qp.b.len(), f64::NEG_INFINITY);
    let sol = Admm::new(&qp.hessian, &qp.linear, &qp.g, &l, &qp.b, settings).run(warm);
    QpSolution {
        cost: qp.objective(&sol.x),
        x: sol.x,
        duals: sol.y,
        iterations: sol.iterations,
        primal_residual: sol.primal_residual,
        dual_residual: sol.dual_residual,
        status: sol.status,
        polished: sol.polished,
    }
}

struct AdmmResult {
    x: DVector<f64>,
    y: DVector<f64>,
    iterations: usize,
    primal_residual: f64,
    dual_residual: f64,
    status: QpStatus,
    polished: bool,
}

struct Admm<'a> {
    // original data
    p: &'a DMatrix<f64>,
    q: &'a DVector<f64>,
    a: &'a DMatrix<f64>,
    l: &'a DVector<f64>,
    u: &'a DVector<f64>,
    // scaled data
    ps: DMatrix<f64>,
    qs: DVector<f64>,
    as_: DMatrix<f64>,
    ls: DVector<f64>,
    us: DVector<f64>,
    d: DVector<f64>,
    e: DVector<f64>,
    c: f64,
    settings: QpSettings,
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn clamp_vec(v: &DVector<f64>, l: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(v.len(), |i, _| v[i].max(l[i]).min(u[i]))
}

impl<'a> Admm<'a> {
    fn new(
        p: &'a DMatrix<f64>,
        q: &'a DVector<f64>,
        a: &'a DMatrix<f64>,
        l: &'a DVector<f64>,
        u: &'a DVector<f64>,
        settings: &QpSettings,
    ) -> Self {
        let (n, m) = (p.nrows(), a.nrows());
        let mut ps = p.clone();
        let mut qs = q.clone();
        let mut as_ = a.clone();
        let mut d = DVector::from_element(n, 1.0);
        let mut e = DVector::from_element(m, 1.0);
        let mut c = 1.0;

        // Ruiz equilibration of [[P, Aᵀ], [A, 0]]
        for _ in 0..settings.scaling_iters {
            let dd = DVector::from_fn(n, |j, _| {
                let cn = ps.column(j).amax().max(as_.column(j).amax());
                scale_factor(cn)
            });
            let de = DVector::from_fn(m, |i, _| scale_factor(as_.row(i).amax()));
            for j in 0..n {
                for i in 0..n {
                    ps[(i, j)] *= dd[i] * dd[j];
                }
                for i in 0..m {
                    as_[(i, j)] *= de[i] * dd[j];
                }
                qs[j] *= dd[j];
            }
            d.component_mul_assign(&dd);
            e.component_mul_assign(&de);
        }
        if settings.scaling_iters > 0 && n > 0 {
            let mean_col = (0..n).map(|j| ps.column(j).amax()).sum::<f64>() / n as f64;
            let gamma = scale_factor(mean_col.max(qs.amax()))
                .powi(2)
                .clamp(1e-4, 1e4);
            ps *= gamma;
            qs *= gamma;
            c = gamma;
        }
        let ls = l.component_mul(&e);
        let us = u.component_mul(&e);
        Self {
            p,
            q,
            a,
            l,
            u,
            ps,
            qs,
            as_,
            ls,
            us,
            d,
            e,
            c,
            settings: *settings,
        }
    }

    fn factor(&self, rho: f64) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
        let n = self.ps.nrows();
        let k = &self.ps
            + DMatrix::identity(n, n) * self.settings.sigma
            + self.as_.tr_mul(&self.as_) * rho;
        k.cholesky()
    }

    fn unscale(&self, xs: &DVector<f64>, ys: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (
            xs.component_mul(&self.d),
            ys.component_mul(&self.e) / self.c,
        )
    }

    fn residuals(
        &self,
        x: &DVector<f64>,
        z: &DVector<f64>,
        y: &DVector<f64>,
    ) -> (f64, f64, f64, f64) {
        let ax = self.a * x;
        let px = self.p * x;
        let aty = self.a.tr_mul(y);
        let rp = inf_norm(&(&ax - z));
        let rd = inf_norm(&(&px + self.q + &aty));
        let ep = self.settings.eps_abs + self.settings.eps_rel * inf_norm(&ax).max(inf_norm(z));
        let ed = self.settings.eps_abs
            + self.settings.eps_rel * inf_norm(&px).max(inf_norm(&aty)).max(inf_norm(self.q));
        (rp, rd, ep, ed)
    }

    fn run(&self, warm: Option<WarmStart<'_>>) -> AdmmResult {
        let (n, m) = (self.ps.nrows(), self.as_.nrows());
        let s = &self.settings;
        let mut rho = s.rho;
        let mut chol = match self.factor(rho) {
            Some(c) => c,
            None => return self.failed(n, m, QpStatus::DualInfeasible),
        };

        let (mut x, mut y) = match warm {
            Some(w) if w.x.len() == n && w.duals.len() == m => (
                w.x.component_div(&self.d),
                w.duals.component_div(&self.e) * self.c,
            ),
            _ => (DVector::zeros(n), DVector::zeros(m)),
        };
        let mut z = clamp_vec(&(&self.as_ * &x), &self.ls, &self.us);

        let mut status = QpStatus::MaxIterations;
        let mut iterations = s.max_iter;
        for k in 1..=s.max_iter {
            let rhs = &x * s.sigma - &self.qs + self.as_.tr_mul(&(&z * rho - &y));
            let xt = chol.solve(&rhs);
            let zt = &self.as_ * &xt;
            let x_new = &xt * s.alpha + &x * (1.0 - s.alpha);
            let z_relax = &zt * s.alpha + &z * (1.0 - s.alpha);
            let z_new = clamp_vec(&(&z_relax + &y / rho), &self.ls, &self.us);
            let y_new = &y + (&z_relax - &z_new) * rho;
            let dx = &x_new - &x;
            let dy = &y_new - &y;
            x = x_new;
            z = z_new;
            y = y_new;

            if k % s.check_interval == 0 || k == s.max_iter {
                let (xu, yu) = self.unscale(&x, &y);
                let zu = z.component_div(&self.e);
                let (rp, rd, ep, ed) = self.residuals(&xu, &zu, &yu);
                if rp <= ep && rd <= ed {
                    status = QpStatus::Solved;
                    iterations = k;
                    break;
                }
                if self.primal_infeasible(&dy) {
                    status = QpStatus::PrimalInfeasible;
                    iterations = k;
                    break;
                }
                if self.dual_infeasible(&dx) {
                    status = QpStatus::DualInfeasible;
                    iterations = k;
                    break;
                }
                if k % s.adapt_interval == 0 {
                    let ax = &self.as_ * &x;
                    let rp_s = inf_norm(&(&ax - &z)) / inf_norm(&ax).max(inf_norm(&z)).max(1e-30);
                    let px = &self.ps * &x;
                    let aty = self.as_.tr_mul(&y);
                    let rd_s = inf_norm(&(&px + &self.qs + &aty))
                        / inf_norm(&px)
                            .max(inf_norm(&aty))
                            .max(inf_norm(&self.qs))
                            .max(1e-30);
                    let new_rho = (rho * (rp_s / rd_s.max(1e-30)).sqrt()).clamp(1e-6, 1e6);
                    if new_rho > 5.0 * rho || new_rho < 0.2 * rho {
                        if let Some(c) = self.factor(new_rho) {
                            rho = new_rho;
                            chol = c;
                        }
                    }
                }
            }
        }

        let (mut xu, mut yu) = self.unscale(&x, &y);
        let mut zu = z.component_div(&self.e);
        let mut polished = false;
        if s.polish && status == QpStatus::Solved {
            if let Some((xp, yp)) = self.polish(&zu, &yu) {
                xu = xp;
                yu = yp;
                zu = self.a * &xu;
                polished = true;
            }
        }
        let (rp, rd, _, _) = self.residuals(&xu, &clamp_vec(&zu, self.l, self.u), &yu);
        AdmmResult {
            x: xu,
            y: yu,
            iterations,
            primal_residual: rp,
            dual_residual: rd,
            status,
            polished,
        }
    }

    fn failed(&self, n: usize, m: usize, status: QpStatus) -> AdmmResult {
        AdmmResult {
            x: DVector::from_element(n, f64::NAN),
            y: DVector::from_element(m, f64::NAN),
            iterations: 0,
            primal_residual: f64::INFINITY,
            dual_residual: f64::INFINITY,
            status,
            polished: false,
        }
    }

    fn primal_infeasible(&self, dy: &DVector<f64>) -> bool {
        // certificate in unscaled space: Aᵀδy ≈ 0, uᵀδy⁺ + lᵀδy⁻ < 0
        let dyu = dy.component_mul(&self.e);
        let norm = inf_norm(&dyu);
        if norm < 1e-30 {
            return false;
        }
        let eps = self.settings.eps_infeasible;
        if inf_norm(&self.a.tr_mul(&dyu)) > eps * norm {
            return false;
        }
        let mut support = 0.0;
        for i in 0..dyu.len() {
            let v = dyu[i];
            if v > eps * norm {
                if !self.u[i].is_finite() {
                    return false;
                }
                support += self.u[i] * v;
            } else if v < -eps * norm {
                if !self.l[i].is_finite() {
                    return false;
                }
                support += self.l[i] * v;
            }
        }
        support < -eps * norm
    }

    fn dual_infeasible(&self, dx: &DVector<f64>) -> bool {
        let dxu = dx.component_mul(&self.d);
        let norm = inf_norm(&dxu);
        if norm < 1e-30 {
            return false;
        }
        let eps = self.settings.eps_infeasible;
        if inf_norm(&(self.p * &dxu)) > eps * norm || self.q.dot(&dxu) > -eps * norm {
            return false;
        }
        let adx = self.a * &dxu;
        (0..adx.len()).all(|i| {
            let upper_ok = !self.u[i].is_finite() || adx[i] <= eps * norm;
            let lower_ok = !self.l[i].is_finite() || adx[i] >= -eps * norm;
            upper_ok && lower_ok
        })
    }

    /// Solve the KKT system on the guessed active set; accept only if the
    /// result is primal feasible with correctly signed multipliers.
    fn polish(&self, z: &DVector<f64>, y: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
        let (n, m) = (self.p.nrows(), self.a.nrows());
        let mut active = Vec::new();
        for i in 0..m {
            if self.u[i].is_finite() && self.u[i] - z[i] < y[i] {
                active.push((i, self.u[i]));
            } else if self.l[i].is_finite() && z[i] - self.l[i] < -y[i] {
                active.push((i, self.l[i]));
            }
        }
        let k = active.len();
        let dim = n + k;
        let delta = 1e-11;
        let mut kkt = DMatrix::zeros(dim, dim);
        kkt.view_mut((0, 0), (n, n)).copy_from(self.p);
        let mut rhs = DVector::zeros(dim);
        rhs.rows_mut(0, n).copy_from(&(-self.q));
        for (r, &(i, bound)) in active.iter().enumerate() {
            for j in 0..n {
                kkt[(n + r, j)] = self.a[(i, j)];
                kkt[(j, n + r)] = self.a[(i, j)];
            }
            rhs[n + r] = bound;
        }
        let mut reg = kkt.clone();
        for i in 0..n {
            reg[(i, i)] += delta;
        }
        for i in n..dim {
            reg[(i, i)] -= delta;
        }
        let lu = reg.lu();
        let mut sol = lu.solve(&rhs)?;
        for _ in 0..5 {
            let res = &rhs - &kkt * &sol;
            sol += lu.solve(&res)?;
        }
        let x = sol.rows(0, n).into_owned();
        let mut yp = DVector::zeros(m);
        for (r, &(i, _)) in active.iter().enumerate() {
            yp[i] = sol[n + r];
        }

        let ax = self.a * &x;
        let scale = 1.0 + inf_norm(&ax);
        let feas_tol = 1e-9 * scale;
        for i in 0..m {
            if ax[i] > self.u[i] + feas_tol || ax[i] < self.l[i] - feas_tol {
                return None;
            }
        }
        let ytol = 1e-9 * (1.0 + inf_norm(&yp));
        for &(i, bound) in &active {
            let upper = bound == self.u[i];
            if (upper && yp[i] < -ytol) || (!upper && yp[i] > ytol) {
                return None;
            }
        }
        Some((x, yp))
    }
}

fn scale_factor(norm: f64) -> f64 {
    if norm < 1e-4 || !norm.is_finite() {
        1.0
    } else {
        1.0 / norm.sqrt()
    }
}

/// Operation-count model of an interior-point solve of the input-only QP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IpmCostModel {
    /// Interior-point iterations `n_i`.
    pub iterations: f64,
    /// Prediction window `T_p` (s).
    pub prediction_window: f64,
    /// Hardware throughput (FLOP/s).
    pub flop_rate: f64,
    /// Condition number surrogate (informational).
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    /// Target accuracy (informational).
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_kappa() -> f64 {
    1e4
}

fn default_epsilon() -> f64 {
    1e-6
}

impl IpmCostModel {
    /// Computation delay `n_i · 5N³ / OP` for a horizon of `N` samples.
    pub fn delay(&self, horizon: usize) -> f64 {
        let n = horizon as f64;
        self.iterations * 5.0 * n.powi(3) / self.flop_rate
    }

    /// Period satisfying `T = 10·Δ` with `N = T_p/T`:
    /// `T = (50 n_i T_p³ / OP)^{1/4}`.
    pub fn min_period(&self) -> f64 {
        (50.0 * self.iterations * self.prediction_window.powi(3) / self.flop_rate).powf(0.25)
    }
}

pub fn ipm_delay(model: &IpmCostModel, horizon: usize) -> f64 {
    model.delay(horizon)
}

pub fn ipm_min_period(model: &IpmCostModel) -> f64 {
    model.min_period()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn boxed(n: usize, upper: f64, f: f64) -> InequalityQp {
        InequalityQp {
            hessian: DMatrix::identity(n, n),
            linear: DVector::from_element(n, f),
            g: DMatrix::identity(n, n),
            b: DVector::from_element(n, upper),
        }
    }

    #[test]
    fn clipped_unconstrained_optimum() {
        let sol = solve_qp(&boxed(4, 0.5, -1.0), &QpSettings::default());
        assert!(sol.is_solved());
        assert!(sol.polished);
        for i in 0..4 {
            assert_relative_eq!(sol.x[i], 0.5, epsilon = 1e-12);
            assert_relative_eq!(sol.duals[i], 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn loose_bounds_give_zero() {
        let sol = solve_qp(&boxed(3, 100.0, 0.0), &QpSettings::default());
        assert!(sol.is_solved());
        assert!(sol.x.amax() < 1e-12);
    }

    #[test]
    fn detects_primal_infeasibility() {
        // x ≤ −1 and −x ≤ −1
        let qp = InequalityQp {
            hessian: DMatrix::identity(1, 1),
            linear: DVector::zeros(1),
            g: DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            b: DVector::from_row_slice(&[-1.0, -1.0]),
        };
        let sol = solve_qp(&qp, &QpSettings::default());
        assert_eq!(sol.status, QpStatus::PrimalInfeasible);
    }

    #[test]
    fn detects_unbounded_problem() {
        let qp = InequalityQp {
            hessian: DMatrix::zeros(1, 1),
            linear: DVector::from_element(1, 1.0),
            g: DMatrix::from_row_slice(1, 1, &[1.0]),
            b: DVector::from_element(1, 1.0),
        };
        let sol = solve_qp(&qp, &QpSettings::default());
        assert_eq!(sol.status, QpStatus::DualInfeasible);
    }

    #[test]
    fn iteration_cap_reports_instead_of_panicking() {
        let settings = QpSettings {
            max_iter: 3,
            ..Default::default()
        };
        let sol = solve_qp(&boxed(3, 0.5, -1.0), &settings);
        assert_eq!(sol.status, QpStatus::MaxIterations);
        assert!(sol.primal_residual.is_finite());
    }

    #[test]
    fn ipm_delay_examples() {
        let m = IpmCostModel {
            iterations: 10.0,
            prediction_window: 2.0,
            flop_rate: 1e11,
            kappa: 1e4,
            epsilon: 1e-6,
        };
        assert_relative_eq!(m.delay(100), 5e-4, max_relative = 1e-14);
        assert_relative_eq!(m.delay(200) / m.delay(100), 8.0, max_relative = 1e-14);
        let unit = IpmCostModel {
            iterations: 1.0,
            flop_rate: 5.0,
            ..m
        };
        assert_relative_eq!(unit.delay(1), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn ipm_min_period_examples() {
        let m = IpmCostModel {
            iterations: 10.0,
            prediction_window: 2.0,
            flop_rate: 1e11,
            kappa: 1e4,
            epsilon: 1e-6,
        };
        assert_relative_eq!(m.min_period(), 4e-8f64.powf(0.25), max_relative = 1e-12);
        let faster = IpmCostModel {
            flop_rate: 16e11,
            ..m
        };
        assert_relative_eq!(
            faster.min_period(),
            0.5 * m.min_period(),
            max_relative = 1e-12
        );
        let unit = IpmCostModel {
            iterations: 1.0 / 50.0,
            prediction_window: 1.0,
            flop_rate: 1.0,
            ..m
        };
        assert_relative_eq!(unit.min_period(), 1.0, max_relative = 1e-12);
    }
}
