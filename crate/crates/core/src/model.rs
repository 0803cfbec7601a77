//! Linear plant models: continuous-time state space, zero-order-hold
//! discretization and a synthetic passive oscillator benchmark.

use nalgebra::{Complex, DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ensure_finite_matrix, ensure_finite_vector};

/// `ẋ = A x + B (u + w)`, `p = C_p x`, `v = C_v x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousPlant {
    a: DMatrix<f64>,
    b: DVector<f64>,
    c_p: RowDVector<f64>,
    c_v: RowDVector<f64>,
}

impl ContinuousPlant {
    pub fn new(
        a: DMatrix<f64>,
        b: DVector<f64>,
        c_p: RowDVector<f64>,
        c_v: RowDVector<f64>,
    ) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::Dimension(format!(
                "A must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.len() != n || c_p.len() != n || c_v.len() != n {
            return Err(Error::Dimension(format!(
                "state dimension {n} but B has {}, C_p {}, C_v {} entries",
                b.len(),
                c_p.len(),
                c_v.len()
            )));
        }
        let finite = a.iter().chain(b.iter()).chain(c_p.iter()).chain(c_v.iter());
        if !finite.into_iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidModel(
                "non-finite entry in plant matrices".into(),
            ));
        }
        Ok(Self { a, b, c_p, c_v })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn c_p(&self) -> &RowDVector<f64> {
        &self.c_p
    }

    pub fn c_v(&self) -> &RowDVector<f64> {
        &self.c_v
    }

    pub fn eigenvalues(&self) -> Vec<Complex<f64>> {
        self.a.complex_eigenvalues().iter().copied().collect()
    }

    /// Largest real part over the spectrum of `A`.
    pub fn spectral_abscissa(&self) -> f64 {
        self.eigenvalues()
            .iter()
            .map(|l| l.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_stable(&self) -> bool {
        self.spectral_abscissa() < 0.0
    }

    /// Frequency response from force to velocity, `C_v (jωI − A)⁻¹ B`.
    pub fn velocity_response(&self, omega: f64) -> Complex<f64> {
        let n = self.state_dim();
        let m = DMatrix::from_fn(n, n, |i, j| {
            let diag = if i == j {
                Complex::new(0.0, omega)
            } else {
                Complex::new(0.0, 0.0)
            };
            diag - Complex::new(self.a[(i, j)], 0.0)
        });
        let rhs = DVector::from_fn(n, |i, _| Complex::new(self.b[i], 0.0));
        let x = m
            .lu()
            .solve(&rhs)
            .unwrap_or_else(|| DVector::from_element(n, Complex::new(f64::NAN, f64::NAN)));
        (0..n).map(|i| x[i] * self.c_v[i]).sum()
    }

    /// Minimum of `Re[C_v (jωI − A)⁻¹ B]` over `omegas`; non-negative for a
    /// passive force-to-velocity map.
    pub fn passivity_margin(&self, omegas: &[f64]) -> f64 {
        omegas
            .iter()
            .map(|&w| self.velocity_response(w).re)
            .fold(f64::INFINITY, f64::min)
    }

    /// Log-spaced passivity check on `[omega_lo, omega_hi]`.
    pub fn is_passive_on(&self, omega_lo: f64, omega_hi: f64, points: usize) -> bool {
        let grid = log_grid(omega_lo, omega_hi, points);
        self.passivity_margin(&grid) >= 0.0
    }
}

pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let points = points.max(2);
    let (l0, l1) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| (l0 + (l1 - l0) * i as f64 / (points - 1) as f64).exp())
        .collect()
}

/// Discrete-time model `x⁺ = A x + B (u + w)` at sampling period `period`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePlant {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c_p: RowDVector<f64>,
    pub c_v: RowDVector<f64>,
    pub period: f64,
}

impl DiscretePlant {
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn spectral_radius(&self) -> f64 {
        self.a
            .complex_eigenvalues()
            .iter()
            .map(|l| l.norm())
            .fold(0.0, f64::max)
    }

    /// One step with input `u` and disturbance `w` held over the period.
    pub fn propagate(&self, x: &DVector<f64>, u: f64, w: f64) -> DVector<f64> {
        &self.a * x + &self.b * (u + w)
    }
}

/// Exact zero-order-hold discretization via the exponential of the augmented
/// matrix `[[A_c, B_c], [0, 0]]·T`.
pub fn zoh_discretize(plant: &ContinuousPlant, period: f64) -> Result<DiscretePlant> {
    if !(period > 0.0) || !period.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "sampling period must be positive and finite, got {period}"
        )));
    }
    let n = plant.state_dim();
    let mut aug = DMatrix::zeros(n + 1, n + 1);
    aug.view_mut((0, 0), (n, n))
        .copy_from(&(plant.a() * period));
    aug.view_mut((0, n), (n, 1))
        .copy_from(&(plant.b() * period));
    let e = aug.exp();
    ensure_finite_matrix(&e, "matrix exponential")?;
    let a = e.view((0, 0), (n, n)).into_owned();
    let b = e.view((0, n), (n, 1)).column(0).into_owned();
    ensure_finite_vector(&b, "discretized input matrix")?;
    Ok(DiscretePlant {
        a,
        b,
        c_p: plant.c_p().clone(),
        c_v: plant.c_v().clone(),
        period,
    })
}

/// Radiation memory term appended to the benchmark oscillator.
///
/// The radiation force is the output of two parallel first-order lags driven
/// by velocity, with poles `pole` and `2·pole`, each weighted by `gain / 2`.
/// Each branch `g·a/(s + a)` is positive real, so the sum is as well.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Radiation {
    pub gain: f64,
    pub pole: f64,
}

/// Parameters of the synthetic one-degree-of-freedom absorber.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkParams {
    pub mass: f64,
    pub stiffness: f64,
    pub damping: f64,
    #[serde(default)]
    pub radiation: Option<Radiation>,
}

impl BenchmarkParams {
    pub fn natural_frequency(&self) -> f64 {
        (self.stiffness / self.mass).sqrt()
    }
}

/// Mass-spring-damper with optional radiation lags. States are
/// `[p, v]` or `[p, v, r₁, r₂]`.
pub fn make_benchmark_plant(params: &BenchmarkParams) -> Result<ContinuousPlant> {
    let BenchmarkParams {
        mass,
        stiffness,
        damping,
        radiation,
    } = *params;
    for (name, value) in [
        ("mass", mass),
        ("stiffness", stiffness),
        ("damping", damping),
    ] {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "{name} must be positive and finite, got {value}"
            )));
        }
    }
    match radiation {
        None => {
            let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -stiffness / mass, -damping / mass]);
            let b = DVector::from_row_slice(&[0.0, 1.0 / mass]);
            ContinuousPlant::new(
                a,
                b,
                RowDVector::from_row_slice(&[1.0, 0.0]),
                RowDVector::from_row_slice(&[0.0, 1.0]),
            )
        }
        Some(Radiation { gain, pole }) => {
            if !(pole < 0.0) || !pole.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "radiation pole must be negative, got {pole}"
                )));
            }
            if !(gain >= 0.0) || !gain.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "radiation gain must be non-negative, got {gain}"
                )));
            }
            let a1 = -pole;
            let a2 = -2.0 * pole;
            let half = 0.5 * gain / mass;
            #[rustfmt::skip]
            let a = DMatrix::from_row_slice(4, 4, &[
                0.0,               1.0,              0.0,    0.0,
                -stiffness / mass, -damping / mass,  -half,  -half,
                0.0,               a1,               -a1,    0.0,
                0.0,               a2,               0.0,    -a2,
            ]);
            let b = DVector::from_row_slice(&[0.0, 1.0 / mass, 0.0, 0.0]);
            ContinuousPlant::new(
                a,
                b,
                RowDVector::from_row_slice(&[1.0, 0.0, 0.0, 0.0]),
                RowDVector::from_row_slice(&[0.0, 1.0, 0.0, 0.0]),
            )
        }
    }
}
