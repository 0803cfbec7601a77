use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::condense::CondensedProblem;
use crate::error::{Error, Result};
use crate::linalg::{qr_rank, PowerIteration};

const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy)]
pub struct DesignOptions {
    /// `τ = safety_factor / ‖T M T⁻¹‖₂`.
    pub safety_factor: f64,
    pub power: PowerIteration,
    /// Fraction of the spectral gap spent on the Jordan and coupling terms of
    /// the weighted-norm certificate.
    pub certificate_margin: f64,
    /// Also evaluate `‖[[G1, G2], [G4, I]]‖₂` (diagnostic; costs a power
    /// iteration on a `5N×5N` operator).
    pub euclidean_norm: bool,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            safety_factor: 0.99,
            power: PowerIteration::default(),
            certificate_margin: 0.1,
            euclidean_norm: true,
        }
    }
}

/// Weighted norm in which the linear part of the iteration contracts.
///
/// With `η' = Uᵀ C⊥ ξ` (eigenbasis of the zero dynamics) and
/// `q = c·V⁻¹ (Cξ, z)`, where `V` puts each `(γ_j, z_j)` pair in scaled
/// Jordan form, the linear update is block upper triangular with diagonal
/// blocks `diag(1 − τσ_i)` and `[[μ, ε], [0, μ]]`, `μ = 1 − τs`, and an
/// off-diagonal block of norm at most `margin·gap`.
#[derive(Debug, Clone)]
pub struct ContractionCertificate {
    eta_map: DMatrix<f64>,
    ceq: DMatrix<f64>,
    jordan_eps: f64,
    coupling_scale: f64,
    tau: f64,
    s: f64,
    /// `max_i |1 − τσ_i|` over the zero-dynamics eigenvalues.
    pub eta_rate: f64,
    /// `|1 − τs|`, the double eigenvalue of the multiplier loop.
    pub multiplier_rate: f64,
    pub spectral_radius: f64,
    /// Certified `‖W L W⁻¹‖₂` upper bound.
    pub rho: f64,
}

impl ContractionCertificate {
    /// `‖W·(ξ, z)‖₂`.
    pub fn weighted_norm(&self, xi: &DVector<f64>, z: &DVector<f64>) -> f64 {
        let eta = &self.eta_map * xi;
        let c = self.coupling_scale;
        let k = c * self.tau / self.jordan_eps;
        let gz = &self.ceq * xi + z * self.s;
        (eta.norm_squared() + c * c * z.norm_squared() + k * k * gz.norm_squared()).sqrt()
    }

    /// Dense `W` (`5N×5N`), for verification on small problems.
    pub fn weight_matrix(&self) -> DMatrix<f64> {
        let nh = self.eta_map.nrows();
        let c = self.coupling_scale;
        let k = c * self.tau / self.jordan_eps;
        let mut w = DMatrix::zeros(5 * nh, 5 * nh);
        w.view_mut((0, 0), (nh, 3 * nh)).copy_from(&self.eta_map);
        for i in 0..2 * nh {
            w[(nh + i, 3 * nh + i)] = -c;
            w[(3 * nh + i, 3 * nh + i)] = -k * self.s;
        }
        w.view_mut((3 * nh, 0), (2 * nh, 3 * nh))
            .copy_from(&(&self.ceq * -k));
        w
    }
}

/// Offline data of the single-iteration solver.
#[derive(Debug, Clone)]
pub struct SolverGains {
    pub horizon: usize,
    pub state_dim: usize,
    pub g1: DMatrix<f64>,
    pub g2: DMatrix<f64>,
    pub g3: DMatrix<f64>,
    pub g4: DMatrix<f64>,
    pub g: DVector<f64>,
    /// Maps `[x_k; W_k]` to `d̃ = τ d`.
    pub dtil: DMatrix<f64>,
    pub kp: f64,
    pub ki: f64,
    pub tau: f64,
    /// `‖C⊥ H C⊥ᵀ‖₂`.
    pub zero_dynamics_norm: f64,
    /// Eigenvalues of `C⊥ H C⊥ᵀ`, ascending.
    pub zero_dynamics_eigs: DVector<f64>,
    pub tmt_norm: f64,
    /// `‖[[G1, G2], [G4, I]]‖₂`; never below one because the integrator
    /// block passes `z` through unchanged.
    pub euclidean_step_norm: Option<f64>,
    pub rho_bound: f64,
    pub certificate: ContractionCertificate,
    pub lb: DVector<f64>,
    pub ub: DVector<f64>,
    pub(crate) tau_cup: DMatrix<f64>,
    pub(crate) tau_cuv: DMatrix<f64>,
    pub(crate) gram: Cholesky<f64, Dyn>,
    pub(crate) ceq: DMatrix<f64>,
}

/// Rows form an orthonormal basis of `null(Ceq)`.
pub fn orthonormal_complement(ceq: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (m, n) = ceq.shape();
    if m > n {
        return Err(Error::RankDeficient { rank: n, rows: m });
    }
    let ct = ceq.transpose();
    let rank = qr_rank(&ct, RANK_TOL);
    if rank < m {
        return Err(Error::RankDeficient { rank, rows: m });
    }
    let qr = ct.qr();
    let mut qt = DMatrix::identity(n, n);
    qr.q_tr_mul(&mut qt);
    Ok(qt.rows(m, n - m).into_owned())
}

pub fn design_gains(problem: &CondensedProblem, options: &DesignOptions) -> Result<SolverGains> {
    let margin = problem.convexity_margin();
    if margin < -1e-10 {
        return Err(Error::NotConvex {
            lambda_min: problem.coupling_min_eig,
            r: problem.r,
            required: -problem.coupling_min_eig,
        });
    }
    if !(options.safety_factor > 0.0 && options.safety_factor < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "step safety factor must lie in (0, 1), got {}",
            options.safety_factor
        )));
    }
    let nh = problem.horizon();
    let c = &problem.ceq;
    let h = &problem.h;
    let dim = 3 * nh;

    let cperp = orthonormal_complement(c)?;
    let gram = (c * c.transpose()).cholesky().ok_or(Error::RankDeficient {
        rank: 0,
        rows: 2 * nh,
    })?;
    let c_pinv = gram.solve(c).transpose();
    let proj = &c_pinv * c;
    let null_proj = DMatrix::identity(dim, dim) - &proj;

    let mut s_mat = &cperp * h * cperp.transpose();
    s_mat = (&s_mat + s_mat.transpose()) * 0.5;
    let s = options.power.spectral_norm(&s_mat);
    let eig = SymmetricEigen::new(s_mat);
    let kp = 2.0 * s;
    let ki = s * s;

    // T M T⁻¹ = [[Q H + k_p P, k_i C†], [−C, 0]] in (ξ, z) coordinates
    let top_left = &null_proj * h + &proj * kp;
    let top_right = &c_pinv * ki;
    let tmt_norm = options.power.spectral_norm_op(
        5 * nh,
        |v| {
            let (xi, z) = (v.rows(0, dim), v.rows(dim, 2 * nh));
            let mut out = DVector::zeros(5 * nh);
            out.rows_mut(0, dim)
                .copy_from(&(&top_left * xi + &top_right * z));
            out.rows_mut(dim, 2 * nh).copy_from(&(-(c * xi)));
            out
        },
        |w| {
            let (a, b) = (w.rows(0, dim), w.rows(dim, 2 * nh));
            let mut out = DVector::zeros(5 * nh);
            out.rows_mut(0, dim)
                .copy_from(&(top_left.tr_mul(&a) - c.tr_mul(&b)));
            out.rows_mut(dim, 2 * nh).copy_from(&top_right.tr_mul(&a));
            out
        },
    );
    if !(tmt_norm > 0.0) || !tmt_norm.is_finite() {
        return Err(Error::NonFinite("||T M T^-1||"));
    }
    let tau = options.safety_factor / tmt_norm;

    let g1 = DMatrix::identity(dim, dim) - &top_left * tau;
    let g2 = &top_right * -tau;
    let g3 = &c_pinv * -kp;
    let g4 = c * tau;
    let g = &null_proj * &problem.f * -tau;
    let dtil = &problem.dmat * tau;

    let certificate = certify(
        &eig,
        &cperp,
        h,
        &c_pinv,
        c,
        s,
        tau,
        options.certificate_margin,
        tmt_norm,
    )?;

    let mut gains = SolverGains {
        horizon: nh,
        state_dim: problem.state_dim(),
        g1,
        g2,
        g3,
        g4,
        g,
        dtil,
        kp,
        ki,
        tau,
        zero_dynamics_norm: s,
        zero_dynamics_eigs: eig.eigenvalues.clone(),
        tmt_norm,
        euclidean_step_norm: None,
        rho_bound: certificate.rho,
        certificate,
        lb: problem.lb.clone(),
        ub: problem.ub.clone(),
        tau_cup: &problem.ops.cup * tau,
        tau_cuv: &problem.ops.cuv * tau,
        gram,
        ceq: c.clone(),
    };
    if options.euclidean_norm {
        gains.euclidean_step_norm = Some(gains.linear_map_norm(&options.power));
    }
    Ok(gains)
}

#[allow(clippy::too_many_arguments)]
fn certify(
    eig: &SymmetricEigen<f64, Dyn>,
    cperp: &DMatrix<f64>,
    h: &DMatrix<f64>,
    c_pinv: &DMatrix<f64>,
    ceq: &DMatrix<f64>,
    s: f64,
    tau: f64,
    margin: f64,
    tmt_norm: f64,
) -> Result<ContractionCertificate> {
    let eta_rate = eig
        .eigenvalues
        .iter()
        .map(|sig| (1.0 - tau * sig).abs())
        .fold(0.0, f64::max);
    let mu = 1.0 - tau * s;
    let multiplier_rate = mu.abs();
    let spectral_radius = eta_rate.max(multiplier_rate);
    if !(spectral_radius < 1.0) {
        return Err(Error::Certification {
            spectral_radius,
            eta_rate,
            multiplier_rate,
            tmt_norm,
            tau,
        });
    }
    let gap = 1.0 - spectral_radius;
    let budget = margin * gap;
    let jordan_eps = budget;
    let jordan_norm = 0.5 * (jordan_eps + (jordan_eps * jordan_eps + 4.0 * mu * mu).sqrt());

    // Frobenius norm bounds the spectral norm of C⊥ H C†
    let coupling = cperp * h * c_pinv;
    let coupling_bound = tau * coupling.norm() * (s * s + (jordan_eps / tau).powi(2)).sqrt();
    let (coupling_scale, coupling_term) = if coupling_bound > 0.0 {
        (coupling_bound / budget, budget)
    } else {
        (1.0, 0.0)
    };
    let rho = eta_rate.max(jordan_norm) + coupling_term;

    Ok(ContractionCertificate {
        eta_map: eig.eigenvectors.transpose() * cperp,
        ceq: ceq.clone(),
        jordan_eps,
        coupling_scale,
        tau,
        s,
        eta_rate,
        multiplier_rate,
        spectral_radius,
        rho,
    })
}

impl SolverGains {
    /// Dense linear part `[[G1, G2], [G4, I]]` of the update.
    pub fn linear_map(&self) -> DMatrix<f64> {
        let nh = self.horizon;
        let mut l = DMatrix::zeros(5 * nh, 5 * nh);
        l.view_mut((0, 0), (3 * nh, 3 * nh)).copy_from(&self.g1);
        l.view_mut((0, 3 * nh), (3 * nh, 2 * nh))
            .copy_from(&self.g2);
        l.view_mut((3 * nh, 0), (2 * nh, 3 * nh))
            .copy_from(&self.g4);
        for i in 0..2 * nh {
            l[(3 * nh + i, 3 * nh + i)] = 1.0;
        }
        l
    }

    fn linear_map_norm(&self, power: &PowerIteration) -> f64 {
        let nh = self.horizon;
        let dim = 3 * nh;
        power.spectral_norm_op(
            5 * nh,
            |v| {
                let (xi, z) = (v.rows(0, dim), v.rows(dim, 2 * nh));
                let mut out = DVector::zeros(5 * nh);
                out.rows_mut(0, dim)
                    .copy_from(&(&self.g1 * xi + &self.g2 * z));
                out.rows_mut(dim, 2 * nh).copy_from(&(&self.g4 * xi + z));
                out
            },
            |w| {
                let (a, b) = (w.rows(0, dim), w.rows(dim, 2 * nh));
                let mut out = DVector::zeros(5 * nh);
                out.rows_mut(0, dim)
                    .copy_from(&(self.g1.tr_mul(&a) + self.g4.tr_mul(&b)));
                out.rows_mut(dim, 2 * nh)
                    .copy_from(&(self.g2.tr_mul(&a) + b));
                out
            },
        )
    }
}
