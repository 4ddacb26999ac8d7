//! Transmitter and channel model.
//!
//! The received sample is `r_n = P(θ_n) · W · Σ_k H_k a_{n-k} + z_n`, where `W`
//! is the Tx I/Q imbalance, `H_k` carries the Tx pulse and the I/Q skew, `P`
//! rotates by the carrier phase and `z_n` is white Gaussian noise.

use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matrix::Matrix2;
use crate::rng::{self, Stream};
use crate::scalar::Real;

/// Raised-cosine Tx pulse sampled at the baud rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PulseSpec {
    pub rolloff: f64,
    pub half_span: usize,
}

impl Default for PulseSpec {
    fn default() -> Self {
        Self {
            rolloff: 0.1,
            half_span: 16,
        }
    }
}

/// Tx impairments. The skew is expressed as a fraction of the symbol period
/// and delays the Q rail relative to the I rail.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TxImpairments<T> {
    pub eps_g: T,
    /// Phase imbalance, radians.
    pub phi_e: T,
    pub tau_over_t: T,
    pub pulse: PulseSpec,
}

impl<T: Real> Default for TxImpairments<T> {
    fn default() -> Self {
        Self {
            eps_g: T::zero(),
            phi_e: T::zero(),
            tau_over_t: T::zero(),
            pulse: PulseSpec::default(),
        }
    }
}

impl<T: Real> TxImpairments<T> {
    pub fn imbalance(eps_g: T, phi_e: T) -> Self {
        Self {
            eps_g,
            phi_e,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_g.abs() < T::one()) {
            return Err(Error::invalid("eps_g", "|eps_g| must be < 1"));
        }
        if !(self.phi_e.abs() < T::FRAC_PI_2()) {
            return Err(Error::invalid("phi_e", "|phi_e| must be < pi/2"));
        }
        if !(self.tau_over_t.abs() < T::one()) {
            return Err(Error::invalid("tau", "|tau| must be < T"));
        }
        if !(0.0..=1.0).contains(&self.pulse.rolloff) {
            return Err(Error::invalid("rolloff", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Carrier phase process parameters (all in Hz except the symbol period).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseSpec {
    pub linewidth: f64,
    pub f_offset: f64,
    pub fluct_amp: f64,
    pub fluct_freq: f64,
    pub symbol_period: f64,
}

impl PhaseSpec {
    pub fn still(symbol_period: f64) -> Self {
        Self {
            linewidth: 0.0,
            f_offset: 0.0,
            fluct_amp: 0.0,
            fluct_freq: 0.0,
            symbol_period,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.symbol_period > 0.0) {
            return Err(Error::invalid("symbol_period", "must be positive"));
        }
        if self.linewidth < 0.0 || self.fluct_amp < 0.0 || self.fluct_freq < 0.0 {
            return Err(Error::invalid("phase", "linewidth and fluctuation must be non-negative"));
        }
        if self.fluct_amp > 0.0 && self.fluct_freq <= 0.0 {
            return Err(Error::invalid("fluct_freq", "must be positive when fluct_amp > 0"));
        }
        Ok(())
    }

    /// Variance of the per-symbol laser phase increment, 2πTΔν.
    pub fn increment_variance(&self) -> f64 {
        std::f64::consts::TAU * self.symbol_period * self.linewidth
    }
}

/// OSNR operating point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub osnr_db: f64,
    pub b_ref: f64,
    pub baud: f64,
}

impl NoiseSpec {
    pub fn new(osnr_db: f64, baud: f64) -> Self {
        Self {
            osnr_db,
            b_ref: 12.5e9,
            baud,
        }
    }
}

/// Es/N0 (linear) for a single-polarization signal at the given OSNR.
pub fn osnr_to_esn0(noise: &NoiseSpec) -> Result<f64> {
    if !(noise.b_ref > 0.0) || !(noise.baud > 0.0) {
        return Err(Error::invalid("noise", "b_ref and baud must be positive"));
    }
    let osnr = 10f64.powf(noise.osnr_db / 10.0);
    Ok(osnr * 2.0 * noise.b_ref / noise.baud)
}

/// Inverse of [`osnr_to_esn0`] in dB.
pub fn esn0_db_to_osnr_db(esn0_db: f64, b_ref: f64, baud: f64) -> f64 {
    esn0_db - 10.0 * (2.0 * b_ref / baud).log10()
}

/// `W = [[cos φ/2, sin φ/2], [sin φ/2, cos φ/2]] · diag(1-ε, 1+ε)`.
pub fn build_w<T: Real>(imp: &TxImpairments<T>) -> Matrix2<T> {
    let (s, c) = (imp.phi_e * T::lit(0.5)).sin_cos();
    Matrix2::new(c, s, s, c) * Matrix2::diag(T::one() - imp.eps_g, T::one() + imp.eps_g)
}

pub fn build_p<T: Real>(theta: T) -> Matrix2<T> {
    Matrix2::rotation(theta)
}

/// Raised-cosine pulse at `x = t/T`.
pub fn raised_cosine(x: f64, rolloff: f64) -> f64 {
    let sinc = if x == 0.0 {
        1.0
    } else {
        (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
    };
    let den = 1.0 - (2.0 * rolloff * x).powi(2);
    if den.abs() < 1e-10 {
        // removable singularity at |x| = 1/(2β)
        std::f64::consts::FRAC_PI_4 * sinc
    } else {
        sinc * (std::f64::consts::PI * rolloff * x).cos() / den
    }
}

/// Baud-spaced Tx taps `H_k = diag(g(kT), g(kT-τ))`, k = -K..=K, each rail
/// normalized to unit energy.
#[derive(Clone, Debug)]
pub struct SkewTaps<T> {
    pub half_span: usize,
    pub taps: Vec<Matrix2<T>>,
}

impl<T: Real> SkewTaps<T> {
    /// Tap at lag `k`; zero outside the span.
    pub fn at(&self, k: isize) -> Matrix2<T> {
        let idx = k + self.half_span as isize;
        if idx < 0 || idx as usize >= self.taps.len() {
            Matrix2::zero()
        } else {
            self.taps[idx as usize]
        }
    }

    pub fn h0(&self) -> Matrix2<T> {
        self.at(0)
    }

    pub fn rail_energy(&self, rail: usize) -> T {
        self.taps.iter().map(|h| h.m[rail][rail] * h.m[rail][rail]).sum()
    }
}

pub fn build_skew_taps<T: Real>(imp: &TxImpairments<T>) -> Result<SkewTaps<T>> {
    let beta = imp.pulse.rolloff;
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::invalid("rolloff", "must lie in [0, 1]"));
    }
    let span = imp.pulse.half_span as isize;
    let tau = imp.tau_over_t.as_f64();
    let i_rail: Vec<f64> = (-span..=span).map(|k| raised_cosine(k as f64, beta)).collect();
    let q_rail: Vec<f64> = (-span..=span)
        .map(|k| raised_cosine(k as f64 - tau, beta))
        .collect();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (ni, nq) = (norm(&i_rail), norm(&q_rail));
    let taps = i_rail
        .iter()
        .zip(&q_rail)
        .map(|(gi, gq)| Matrix2::diag(T::lit(gi / ni), T::lit(gq / nq)))
        .collect();
    Ok(SkewTaps {
        half_span: imp.pulse.half_span,
        taps,
    })
}

/// Effective single-tap channel `W_0 = W · H_0`.
pub fn build_w0<T: Real>(imp: &TxImpairments<T>) -> Result<Matrix2<T>> {
    Ok(build_w(imp) * build_skew_taps(imp)?.h0())
}

/// Carrier phase trajectory θ_0..θ_{n-1}.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasePath<T> {
    pub theta: Vec<T>,
}

/// `θ_n = ψ_n + Ω_c n + (A_p/Δf_c) sin(2πTΔf_c n)` with ψ a Gaussian random walk.
pub fn phase_path<T: Real>(spec: &PhaseSpec, n_symbols: usize, seed: u64) -> Result<PhasePath<T>> {
    spec.validate()?;
    if n_symbols == 0 {
        return Err(Error::invalid("n_symbols", "must be at least 1"));
    }
    let t = spec.symbol_period;
    let sigma = spec.increment_variance().sqrt();
    let omega_c = std::f64::consts::TAU * t * spec.f_offset;
    let tone = std::f64::consts::TAU * t * spec.fluct_freq;
    let peak = if spec.fluct_amp > 0.0 {
        spec.fluct_amp / spec.fluct_freq
    } else {
        0.0
    };
    let mut rng = rng::stream(seed, Stream::PhaseNoise);
    let mut psi = 0.0f64;
    let theta = (0..n_symbols)
        .map(|n| {
            if sigma > 0.0 {
                let eta: f64 = rng.sample(StandardNormal);
                psi += sigma * eta;
            }
            let n = n as f64;
            T::lit(psi + omega_c * n + peak * (tone * n).sin())
        })
        .collect();
    Ok(PhasePath { theta })
}

/// Received stream together with the true phase it was rotated by.
#[derive(Clone, Debug)]
pub struct Received<T> {
    pub samples: Vec<Complex<T>>,
    pub theta: Vec<T>,
}

/// Full Tx/channel chain driven by a generated phase path.
pub fn transmit<T: Real>(
    symbols: &[Complex<T>],
    imp: &TxImpairments<T>,
    phase: &PhaseSpec,
    noise: Option<&NoiseSpec>,
    seed: u64,
) -> Result<Received<T>> {
    if symbols.is_empty() {
        return Err(Error::invalid("symbols", "stream is empty"));
    }
    let path = phase_path(phase, symbols.len(), seed)?;
    let samples = transmit_with_phase(symbols, imp, &path.theta, noise, seed)?;
    Ok(Received {
        samples,
        theta: path.theta,
    })
}

/// Tx/channel chain with an explicit phase trajectory.
pub fn transmit_with_phase<T: Real>(
    symbols: &[Complex<T>],
    imp: &TxImpairments<T>,
    theta: &[T],
    noise: Option<&NoiseSpec>,
    seed: u64,
) -> Result<Vec<Complex<T>>> {
    imp.validate()?;
    if theta.len() != symbols.len() {
        return Err(Error::Size {
            what: "phase path",
            expected: symbols.len(),
            got: theta.len(),
        });
    }
    let taps = build_skew_taps(imp)?;
    let w = build_w(imp);
    let span = taps.half_span as isize;
    let n = symbols.len() as isize;

    let sigma = match noise {
        Some(spec) => Some(T::lit((0.5 / osnr_to_esn0(spec)?).sqrt())),
        None => None,
    };
    let mut rng = rng::stream(seed, Stream::Awgn);

    let mut out = Vec::with_capacity(symbols.len());
    for i in 0..n {
        let mut s = Complex::new(T::zero(), T::zero());
        for k in -span..=span {
            let j = i - k;
            if j < 0 || j >= n {
                continue;
            }
            let h = taps.at(k);
            let a = symbols[j as usize];
            s.re += h.m[0][0] * a.re;
            s.im += h.m[1][1] * a.im;
        }
        let mut r = build_p(theta[i as usize]).apply(w.apply(s));
        if let Some(sigma) = sigma {
            let zi: f64 = rng.sample(StandardNormal);
            let zq: f64 = rng.sample(StandardNormal);
            r.re += sigma * T::lit(zi);
            r.im += sigma * T::lit(zq);
        }
        out.push(r);
    }
    Ok(out)
}
