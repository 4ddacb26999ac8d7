//! Decision-directed type-II PLL with a 2×2 real compensator at the slicer
//! input, adapted by LMS.
//!
//! Per symbol: `x = P(-θ̂)·r`, `y = C·x`, `â = slice(y)` (or the known symbol),
//! `e = Im{y·conj(â)}/|â|²`. The loop filter sees the error produced `d_l`
//! symbols earlier.

use std::collections::VecDeque;

use num_complex::Complex;

use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::matrix::Matrix2;
use crate::scalar::Real;

/// Entries of C beyond this magnitude are treated as LMS divergence.
pub const DIVERGENCE_LIMIT: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PllConfig<T> {
    pub kp: T,
    pub ki: T,
    /// Feedback latency in symbols.
    pub d_l: usize,
}

impl<T: Real> Default for PllConfig<T> {
    fn default() -> Self {
        Self {
            kp: T::lit(0.04),
            ki: T::lit(4e-4),
            d_l: 5,
        }
    }
}

impl<T: Real> PllConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.kp > T::zero()) {
            return Err(Error::invalid("pll.kp", "must be positive"));
        }
        if !(self.ki >= T::zero()) {
            return Err(Error::invalid("pll.ki", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PllState<T> {
    /// Unwrapped phase estimate used for the next sample.
    pub theta_hat: T,
    /// Integral path, i.e. the per-symbol frequency estimate.
    pub integ: T,
    pub err_fifo: VecDeque<T>,
}

impl<T: Real> PllState<T> {
    pub fn new(cfg: &PllConfig<T>) -> Self {
        Self {
            theta_hat: T::zero(),
            integ: T::zero(),
            err_fifo: std::iter::repeat_n(T::zero(), cfg.d_l).collect(),
        }
    }

    /// Drops the pending errors, keeping phase and frequency.
    pub fn flush(&mut self) {
        self.err_fifo.iter_mut().for_each(|e| *e = T::zero());
    }

    /// Aligns `theta_hat` with a known symbol so that `C·P(-θ̂)·r` has the
    /// angle of `known`. A non-orthogonal `C` distorts the measured angle, so
    /// the correction is repeated until it settles.
    pub fn seed_phase(&mut self, r: Complex<T>, known: Complex<T>, c: &Matrix2<T>) {
        for _ in 0..8 {
            let y = c.apply(Matrix2::rotation(-self.theta_hat).apply(r));
            let offset = (y * known.conj()).arg();
            if !offset.is_finite() {
                return;
            }
            self.theta_hat += offset;
            if offset.abs() < T::lit(1e-6) {
                return;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LmsMode {
    /// Adapt only on symbols whose value is known to the receiver.
    PilotDirected,
    /// Adapt on every symbol; known symbols are used where available.
    DecisionDirected,
    Frozen,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MimoTap<T> {
    pub c: Matrix2<T>,
    pub mu: T,
    pub mode: LmsMode,
}

impl<T: Real> MimoTap<T> {
    pub fn new(mu: T, mode: LmsMode) -> Self {
        Self {
            c: Matrix2::identity(),
            mu,
            mode,
        }
    }

    /// Identity compensator that never adapts.
    pub fn frozen_identity() -> Self {
        Self::new(T::zero(), LmsMode::Frozen)
    }

    fn adapts_on(&self, known: bool) -> bool {
        match self.mode {
            LmsMode::PilotDirected => known,
            LmsMode::DecisionDirected => true,
            LmsMode::Frozen => false,
        }
    }
}

/// Output of one loop iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PllStep<T> {
    /// De-rotated sample before the compensator.
    pub x: Complex<T>,
    /// Compensated slicer input.
    pub y: Complex<T>,
    pub label: usize,
    pub decision: Complex<T>,
    /// Phase error produced at this step.
    pub error: T,
    /// Phase error fed to the loop filter at this step.
    pub consumed: T,
    /// Phase estimate used to de-rotate this sample.
    pub theta_hat: T,
}

pub fn pll_step<T: Real>(
    r: Complex<T>,
    state: &mut PllState<T>,
    tap: &MimoTap<T>,
    cfg: &PllConfig<T>,
    constellation: &Constellation<T>,
    known: Option<usize>,
) -> Result<PllStep<T>> {
    if !(r.re.is_finite() && r.im.is_finite()) || !state.theta_hat.is_finite() {
        return Err(Error::NonFinite("PLL input"));
    }
    let theta_hat = state.theta_hat;
    let x = Matrix2::rotation(-theta_hat).apply(r);
    let y = tap.c.apply(x);
    let label = match known {
        Some(l) => l,
        None => constellation.slice(y)?,
    };
    let decision = constellation.point(label);
    let energy = decision.norm_sqr();
    if energy == T::zero() {
        return Err(Error::invalid("decision", "zero-energy reference symbol"));
    }
    let error = (y * decision.conj()).im / energy;

    state.err_fifo.push_back(error);
    let consumed = state.err_fifo.pop_front().unwrap_or(error);
    state.integ += cfg.ki * consumed;
    state.theta_hat += cfg.kp * consumed + state.integ;

    Ok(PllStep {
        x,
        y,
        label,
        decision,
        error,
        consumed,
        theta_hat,
    })
}

/// Removes from `delta` its component along `C·J`, the direction in which
/// `C` moves when it absorbs a common rotation of its input. The loop cannot
/// observe that direction, so without this a small mean loop lag is
/// integrated into `C` without bound.
pub fn without_rotation<T: Real>(delta: Matrix2<T>, c: &Matrix2<T>) -> Matrix2<T> {
    let j = Matrix2::new(T::zero(), -T::one(), T::one(), T::zero());
    let g = *c * j;
    let gg = g.inner(&g);
    if gg == T::zero() {
        return delta;
    }
    delta - g.scale(delta.inner(&g) / gg)
}

/// One LMS step on C: `C ← C + μ·(a_ref − y)·x^T`. Decision-directed steps
/// are taken with the rotation component removed (see [`without_rotation`]).
pub fn lms_update_c<T: Real>(
    tap: &mut MimoTap<T>,
    x: Complex<T>,
    y: Complex<T>,
    a_ref: Complex<T>,
) -> Result<()> {
    if tap.mode == LmsMode::Frozen {
        return Ok(());
    }
    let err = a_ref - y;
    let mut delta = Matrix2::outer(err, x).scale(tap.mu);
    if tap.mode == LmsMode::DecisionDirected {
        delta = without_rotation(delta, &tap.c);
    }
    tap.c = tap.c + delta;
    let mag = tap.c.max_abs();
    if !(mag <= T::lit(DIVERGENCE_LIMIT)) {
        return Err(Error::Diverged {
            what: "compensator C",
            magnitude: mag.as_f64(),
        });
    }
    Ok(())
}

#[derive(Clone, Debug, Default)]
pub struct LaneOutput<T> {
    pub x: Vec<Complex<T>>,
    pub y: Vec<Complex<T>>,
    pub labels: Vec<usize>,
    pub theta_hat: Vec<T>,
    pub errors: Vec<T>,
}

impl<T> LaneOutput<T> {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            x: Vec::with_capacity(n),
            y: Vec::with_capacity(n),
            labels: Vec::with_capacity(n),
            theta_hat: Vec::with_capacity(n),
            errors: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Runs the loop sequentially over a lane of consecutive samples.
///
/// `known[i]` carries the label of symbol `i` when the receiver knows it
/// (pilot or training); such symbols replace the slicer decision and are the
/// only adaptation references in pilot-directed mode.
pub fn run_lane<T: Real>(
    samples: &[Complex<T>],
    known: &[Option<usize>],
    state: &mut PllState<T>,
    tap: &mut MimoTap<T>,
    cfg: &PllConfig<T>,
    constellation: &Constellation<T>,
) -> Result<LaneOutput<T>> {
    if known.len() != samples.len() {
        return Err(Error::Size {
            what: "known-symbol map",
            expected: samples.len(),
            got: known.len(),
        });
    }
    let mut out = LaneOutput::with_capacity(samples.len());
    for (&r, &k) in samples.iter().zip(known) {
        let step = pll_step(r, state, tap, cfg, constellation, k)?;
        if tap.adapts_on(k.is_some()) {
            lms_update_c(tap, step.x, step.y, step.decision)?;
        }
        out.x.push(step.x);
        out.y.push(step.y);
        out.labels.push(step.label);
        out.theta_hat.push(step.theta_hat);
        out.errors.push(step.error);
    }
    Ok(out)
}
