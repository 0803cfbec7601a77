//! Irregular wave excitation: JONSWAP spectral density and a random-phase
//! harmonic superposition of the resulting force.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const GRAVITY: f64 = 9.81;

/// Sea state and force synthesis settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveSpec {
    /// Significant wave height `H_w` (m).
    pub significant_height: f64,
    /// Peak period `T_w` (s).
    pub peak_period: f64,
    /// Peak enhancement factor `γ`.
    pub gamma: f64,
    pub n_harmonics: usize,
    pub omega_min: f64,
    pub omega_max: f64,
    /// Force per unit elevation (N/m).
    pub excitation_gain: f64,
    #[serde(default)]
    pub seed: u64,
}

impl WaveSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("significant_height", self.significant_height),
            ("peak_period", self.peak_period),
            ("omega_min", self.omega_min),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "wave {name} must be positive, got {v}"
                )));
            }
        }
        if !(self.gamma >= 1.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "peak enhancement must be >= 1, got {}",
                self.gamma
            )));
        }
        if !(self.omega_min < self.omega_max) || !self.omega_max.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "omega range [{}, {}] is empty",
                self.omega_min, self.omega_max
            )));
        }
        if self.n_harmonics == 0 {
            return Err(Error::InvalidParameter("n_harmonics must be >= 1".into()));
        }
        if !self.excitation_gain.is_finite() {
            return Err(Error::InvalidParameter(
                "excitation gain must be finite".into(),
            ));
        }
        Ok(())
    }

    pub fn peak_frequency(&self) -> f64 {
        2.0 * PI / self.peak_period
    }
}

/// JONSWAP density with the Phillips constant normalized so that
/// `16 ∫ S dω = H_w²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jonswap {
    alpha: f64,
    omega_p: f64,
    gamma: f64,
}

impl Jonswap {
    pub fn new(spec: &WaveSpec) -> Self {
        let omega_p = spec.peak_frequency();
        let unit = Jonswap {
            alpha: 1.0,
            omega_p,
            gamma: spec.gamma,
        };
        let variance = spec.significant_height.powi(2) / 16.0;
        let alpha = variance / unit.total_variance();
        Jonswap { alpha, ..unit }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn density(&self, omega: f64) -> f64 {
        if !(omega > 0.0) {
            return 0.0;
        }
        let wp = self.omega_p;
        let sigma = if omega <= wp { 0.07 } else { 0.09 };
        let shape = (-(omega - wp).powi(2) / (2.0 * sigma * sigma * wp * wp)).exp();
        let pm =
            self.alpha * GRAVITY * GRAVITY * omega.powi(-5) * (-1.25 * (wp / omega).powi(4)).exp();
        pm * self.gamma.powf(shape)
    }

    /// `∫₀^∞ S dω`: composite Simpson on `[0.2, 10]·ω_p` plus the analytic
    /// `ω⁻⁵` tail beyond.
    fn total_variance(&self) -> f64 {
        let (lo, hi) = (0.2 * self.omega_p, 10.0 * self.omega_p);
        let n = 20_000;
        let h = (hi - lo) / n as f64;
        let mut acc = self.density(lo) + self.density(hi);
        for i in 1..n {
            let w = lo + i as f64 * h;
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * self.density(w);
        }
        let tail = self.alpha * GRAVITY * GRAVITY / (4.0 * hi.powi(4));
        acc * h / 3.0 + tail
    }
}

/// Spectral density `S(ω)` (m²·s) for the given sea state; zero for `ω ≤ 0`.
pub fn jonswap_density(omega: f64, spec: &WaveSpec) -> f64 {
    Jonswap::new(spec).density(omega)
}

/// `w(t) = gain · Σ a_j cos(ω_j t + φ_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveForceSignal {
    pub gain: f64,
    pub amplitudes: Vec<f64>,
    pub frequencies: Vec<f64>,
    pub phases: Vec<f64>,
}

impl WaveForceSignal {
    pub fn zero() -> Self {
        Self {
            gain: 0.0,
            amplitudes: Vec::new(),
            frequencies: Vec::new(),
            phases: Vec::new(),
        }
    }

    pub fn monochromatic(amplitude: f64, omega: f64, phase: f64) -> Self {
        Self {
            gain: 1.0,
            amplitudes: vec![amplitude],
            frequencies: vec![omega],
            phases: vec![phase],
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let s: f64 = self
            .amplitudes
            .iter()
            .zip(&self.frequencies)
            .zip(&self.phases)
            .map(|((a, w), p)| a * (w * t + p).cos())
            .sum();
        self.gain * s
    }

    pub fn sample(&self, times: impl IntoIterator<Item = f64>) -> Vec<f64> {
        times.into_iter().map(|t| self.eval(t)).collect()
    }

    /// Stationary variance `gain² · Σ a_j² / 2`.
    pub fn variance(&self) -> f64 {
        0.5 * self.gain * self.gain * self.amplitudes.iter().map(|a| a * a).sum::<f64>()
    }
}

/// Random-phase synthesis on the midpoint grid of `[omega_min, omega_max]`.
pub fn synthesize_wave_force(spec: &WaveSpec) -> Result<WaveForceSignal> {
    spec.validate()?;
    let spectrum = Jonswap::new(spec);
    let n = spec.n_harmonics;
    let dw = (spec.omega_max - spec.omega_min) / n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut amplitudes = Vec::with_capacity(n);
    let mut frequencies = Vec::with_capacity(n);
    let mut phases = Vec::with_capacity(n);
    for j in 0..n {
        let w = spec.omega_min + (j as f64 + 0.5) * dw;
        amplitudes.push((2.0 * spectrum.density(w) * dw).sqrt());
        frequencies.push(w);
        phases.push(2.0 * PI * rng.random::<f64>());
    }
    Ok(WaveForceSignal {
        gain: spec.excitation_gain,
        amplitudes,
        frequencies,
        phases,
    })
}
