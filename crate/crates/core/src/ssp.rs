//! Superscalar parallel PLL.
//!
//! The stream is cut into blocks of `n_lanes × block_len` symbols. Inside a
//! block, lane `i` processes the `block_len` consecutive symbols starting at
//! `i × block_len`, so every lane runs its loop on contiguous time with
//! latency `d_l`. Lanes resume their own state in the next block, re-anchored
//! by the pilot that opens each lane segment, and cycle slips are removed
//! per segment using the pilots.
//!
//! [`run_interleaved_pll`] is the conventional parallelization used as a
//! comparison baseline: lane `i` sees symbols `i, i + N, i + 2N, …`, so its
//! feedback latency in stream time is `N × d_l`.

use num_complex::Complex;
use rayon::prelude::*;

use crate::constellation::{Constellation, PilotPlan};
use crate::error::{Error, Result};
use crate::matrix::Matrix2;
use crate::pll::{run_lane, LaneOutput, LmsMode, MimoTap, PllConfig, PllState};
use crate::scalar::Real;

/// Order in which the lanes of a block are executed. Results never depend on it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LaneSchedule {
    #[default]
    Sequential,
    Reversed,
    Parallel,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SspConfig {
    pub n_lanes: usize,
    pub block_len: usize,
    pub pilot_plan: PilotPlan,
    pub schedule: LaneSchedule,
}

impl Default for SspConfig {
    fn default() -> Self {
        Self {
            n_lanes: 16,
            block_len: 400,
            pilot_plan: PilotPlan::default(),
            schedule: LaneSchedule::Sequential,
        }
    }
}

impl SspConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_lanes == 0 {
            return Err(Error::invalid("ssp.n_lanes", "must be at least 1"));
        }
        if self.block_len == 0 || self.block_len % self.pilot_plan.period != 0 {
            return Err(Error::invalid(
                "ssp.block_len",
                format!(
                    "{} is not a positive multiple of the pilot period {}",
                    self.block_len, self.pilot_plan.period
                ),
            ));
        }
        Ok(())
    }

    pub fn buffer_len(&self) -> usize {
        self.n_lanes * self.block_len
    }
}

/// Splits one buffer of `n_lanes × block_len` samples into lanes of consecutive samples.
pub fn reorder_in<X: Clone>(segment: &[X], n_lanes: usize, block_len: usize) -> Result<Vec<Vec<X>>> {
    if segment.len() != n_lanes * block_len {
        return Err(Error::Size {
            what: "SSP buffer",
            expected: n_lanes * block_len,
            got: segment.len(),
        });
    }
    Ok(segment.chunks(block_len.max(1)).map(<[X]>::to_vec).collect())
}

/// Inverse of [`reorder_in`].
pub fn reorder_out<X: Clone>(lanes: &[Vec<X>], n_lanes: usize, block_len: usize) -> Result<Vec<X>> {
    if lanes.len() != n_lanes {
        return Err(Error::Size {
            what: "lane count",
            expected: n_lanes,
            got: lanes.len(),
        });
    }
    if let Some(bad) = lanes.iter().find(|l| l.len() != block_len) {
        return Err(Error::Size {
            what: "lane length",
            expected: block_len,
            got: bad.len(),
        });
    }
    Ok(lanes.concat())
}

/// Buffer permutation between the `n_lanes`-wide input bus (one sample per
/// lane per clock, in arrival order) and the lane-consecutive layout.
///
/// `perm[t * n_lanes + i]` is the arrival index that lane `i` consumes at
/// clock `t`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockBuffer {
    pub n_lanes: usize,
    pub block_len: usize,
    perm: Vec<usize>,
}

impl BlockBuffer {
    pub fn new(n_lanes: usize, block_len: usize) -> Self {
        let mut perm = vec![0; n_lanes * block_len];
        for t in 0..block_len {
            for i in 0..n_lanes {
                perm[t * n_lanes + i] = i * block_len + t;
            }
        }
        Self {
            n_lanes,
            block_len,
            perm,
        }
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// Arrival order → per-clock lane order.
    pub fn scatter<X: Clone>(&self, arrival: &[X]) -> Result<Vec<X>> {
        if arrival.len() != self.perm.len() {
            return Err(Error::Size {
                what: "block buffer",
                expected: self.perm.len(),
                got: arrival.len(),
            });
        }
        Ok(self.perm.iter().map(|&k| arrival[k].clone()).collect())
    }

    /// Per-clock lane order → arrival order.
    pub fn gather<X: Clone>(&self, lane_order: &[X]) -> Result<Vec<X>> {
        if lane_order.len() != self.perm.len() {
            return Err(Error::Size {
                what: "block buffer",
                expected: self.perm.len(),
                got: lane_order.len(),
            });
        }
        let mut out: Vec<Option<X>> = vec![None; lane_order.len()];
        for (pos, &k) in self.perm.iter().enumerate() {
            out[k] = Some(lane_order[pos].clone());
        }
        Ok(out.into_iter().map(|x| x.expect("permutation is a bijection")).collect())
    }
}

/// Quadrant index `k ∈ {-1, 0, 1, 2}` nearest to the angle of `y·conj(p)`.
pub fn quadrant_slip<T: Real>(y: Complex<T>, pilot: Complex<T>) -> i32 {
    let ang = (y * pilot.conj()).arg();
    let k = (ang / T::FRAC_PI_2()).round().to_i32().unwrap_or(0);
    match k.rem_euclid(4) {
        3 => -1,
        k => k,
    }
}

/// Pilot-based cycle-slip removal.
///
/// `x` holds the samples before the compensator `c`; `y` and `labels` the
/// compensated samples and their decisions. At each pilot the quadrant offset
/// `k` of `c·x` against the pilot is measured; when non-zero, every sample from
/// that pilot up to the next one is rotated by `-k·π/2` (before `c`) and
/// re-sliced. Segments without a slip are left untouched. Returns the
/// positions and sizes of the corrected slips.
pub fn cycle_slip_correct<T: Real>(
    x: &mut [Complex<T>],
    y: &mut [Complex<T>],
    labels: &mut [usize],
    pilots: &[Option<usize>],
    c: &Matrix2<T>,
    constellation: &Constellation<T>,
) -> Result<Vec<(usize, i32)>> {
    let n = x.len();
    if y.len() != n || labels.len() != n || pilots.len() != n {
        return Err(Error::Size {
            what: "cycle-slip inputs",
            expected: n,
            got: y.len().min(labels.len()).min(pilots.len()),
        });
    }
    let positions: Vec<usize> = (0..n).filter(|&i| pilots[i].is_some()).collect();
    let mut slips = Vec::new();
    for (j, &p) in positions.iter().enumerate() {
        let pilot = constellation.point(pilots[p].expect("pilot position"));
        let k = quadrant_slip(c.apply(x[p]), pilot);
        if k == 0 {
            continue;
        }
        slips.push((p, k));
        let end = positions.get(j + 1).copied().unwrap_or(n);
        let undo = Matrix2::rotation(-T::FRAC_PI_2() * T::lit(k as f64));
        for i in p..end {
            x[i] = undo.apply(x[i]);
            y[i] = c.apply(x[i]);
            labels[i] = constellation.slice(y[i])?;
        }
    }
    Ok(slips)
}

/// First-stage CPR output in stream order.
#[derive(Clone, Debug)]
pub struct CprOutput<T> {
    /// De-rotated samples before the compensator.
    pub x: Vec<Complex<T>>,
    pub y: Vec<Complex<T>>,
    pub labels: Vec<usize>,
    pub theta_hat: Vec<T>,
    /// Compensator broadcast to the lanes at the start of each block.
    pub c_per_block: Vec<Matrix2<T>>,
    pub c_final: Matrix2<T>,
    pub slips: usize,
}

impl<T: Real> CprOutput<T> {
    fn with_capacity(n: usize) -> Self {
        Self {
            x: Vec::with_capacity(n),
            y: Vec::with_capacity(n),
            labels: Vec::with_capacity(n),
            theta_hat: Vec::with_capacity(n),
            c_per_block: Vec::new(),
            c_final: Matrix2::identity(),
            slips: 0,
        }
    }

    fn extend_lane(&mut self, lane: LaneOutput<T>) {
        self.x.extend(lane.x);
        self.y.extend(lane.y);
        self.labels.extend(lane.labels);
        self.theta_hat.extend(lane.theta_hat);
    }

    /// Compensator in force for stream index `n`.
    pub fn c_at(&self, n: usize, buffer_len: usize) -> Matrix2<T> {
        self.c_per_block
            .get(n / buffer_len)
            .copied()
            .unwrap_or(self.c_final)
    }
}

/// Everything the first stage needs besides the samples.
pub struct CprInputs<'a, T> {
    /// Labels the receiver knows (pilots and training), indexed by stream position.
    pub known: &'a [Option<usize>],
    /// Pilot labels only, used for cycle-slip correction.
    pub pilots: &'a [Option<usize>],
    pub pll: &'a PllConfig<T>,
    pub constellation: &'a Constellation<T>,
    /// Initial compensator; its mode is overridden per block by `c_mode`.
    pub tap: MimoTap<T>,
    pub c_mode: &'a (dyn Fn(usize) -> LmsMode + Sync),
}

impl<T: Real> CprInputs<'_, T> {
    fn check(&self, n: usize) -> Result<()> {
        self.pll.validate()?;
        for (what, v) in [("known-symbol map", self.known), ("pilot map", self.pilots)] {
            if v.len() != n {
                return Err(Error::Size {
                    what,
                    expected: n,
                    got: v.len(),
                });
            }
        }
        Ok(())
    }
}

struct LaneJob<'a, T> {
    samples: &'a [Complex<T>],
    known: &'a [Option<usize>],
    pilots: &'a [Option<usize>],
    state: Option<PllState<T>>,
}

struct LaneResult<T> {
    out: LaneOutput<T>,
    state: PllState<T>,
    c: Matrix2<T>,
    slips: usize,
}

fn run_ssp_lane<T: Real>(
    job: LaneJob<'_, T>,
    tap: MimoTap<T>,
    inputs: &CprInputs<'_, T>,
    gap: usize,
    c_block: &Matrix2<T>,
) -> Result<LaneResult<T>> {
    let mut state = match job.state {
        Some(mut s) => {
            s.theta_hat += s.integ * T::lit(gap as f64);
            s.flush();
            s
        }
        None => PllState::new(inputs.pll),
    };
    if let Some(label) = job.known[0] {
        state.seed_phase(job.samples[0], inputs.constellation.point(label), &tap.c);
    }
    let mut tap = tap;
    let mut out = run_lane(
        job.samples,
        job.known,
        &mut state,
        &mut tap,
        inputs.pll,
        inputs.constellation,
    )?;
    let slips = cycle_slip_correct(
        &mut out.x,
        &mut out.y,
        &mut out.labels,
        job.pilots,
        c_block,
        inputs.constellation,
    )?
    .len();
    Ok(LaneResult {
        out,
        state,
        c: tap.c,
        slips,
    })
}

fn run_jobs<T, F>(n: usize, schedule: LaneSchedule, f: F) -> Result<Vec<LaneResult<T>>>
where
    T: Real,
    F: Fn(usize) -> Result<LaneResult<T>> + Sync + Send,
{
    let mut slots: Vec<Option<LaneResult<T>>> = match schedule {
        LaneSchedule::Parallel => (0..n)
            .into_par_iter()
            .map(|i| f(i).map(Some))
            .collect::<Result<_>>()?,
        LaneSchedule::Sequential => (0..n).map(|i| f(i).map(Some)).collect::<Result<_>>()?,
        LaneSchedule::Reversed => {
            let mut v: Vec<Option<LaneResult<T>>> = (0..n).map(|_| None).collect();
            for i in (0..n).rev() {
                v[i] = Some(f(i)?);
            }
            v
        }
    };
    Ok(slots.iter_mut().map(|s| s.take().expect("lane ran")).collect())
}

/// Lane-local compensators are averaged in lane order at the block boundary.
fn merge_c<T: Real>(results: &[LaneResult<T>], fallback: Matrix2<T>, mode: LmsMode) -> Matrix2<T> {
    if mode == LmsMode::Frozen || results.is_empty() {
        return fallback;
    }
    let sum = results.iter().fold(Matrix2::zero(), |acc, r| acc + r.c);
    sum.scale(T::lit(results.len() as f64).recip())
}

/// Superscalar-parallel first CPR stage over a whole stream.
///
/// The stream length must be a multiple of `n_lanes × block_len` (the harness
/// pads). Pilots must open every lane segment, which holds whenever
/// `block_len` is a multiple of the pilot period and pilots sit at multiples
/// of that period.
pub fn run_ssp_pll<T: Real>(
    stream: &[Complex<T>],
    cfg: &SspConfig,
    inputs: &CprInputs<'_, T>,
) -> Result<CprOutput<T>> {
    cfg.validate()?;
    inputs.check(stream.len())?;
    let buf = cfg.buffer_len();
    if stream.len() % buf != 0 {
        return Err(Error::Size {
            what: "stream length (multiple of the SSP buffer)",
            expected: stream.len().div_ceil(buf) * buf,
            got: stream.len(),
        });
    }
    let s = cfg.block_len;
    let gap = buf - s;
    let mut out = CprOutput::with_capacity(stream.len());
    let mut states: Vec<Option<PllState<T>>> = vec![None; cfg.n_lanes];
    let mut c = inputs.tap.c;

    for (b, block) in stream.chunks(buf).enumerate() {
        let mode = (inputs.c_mode)(b);
        let tap = MimoTap {
            c,
            mu: inputs.tap.mu,
            mode,
        };
        let base = b * buf;
        let results = run_jobs(cfg.n_lanes, cfg.schedule, |i| {
            let lo = i * s;
            let job = LaneJob {
                samples: &block[lo..lo + s],
                known: &inputs.known[base + lo..base + lo + s],
                pilots: &inputs.pilots[base + lo..base + lo + s],
                state: states[i].clone(),
            };
            run_ssp_lane(job, tap, inputs, gap, &c)
        })?;
        out.c_per_block.push(c);
        c = merge_c(&results, c, mode);
        for (i, r) in results.into_iter().enumerate() {
            out.slips += r.slips;
            states[i] = Some(r.state);
            out.extend_lane(r.out);
        }
    }
    out.c_final = c;
    Ok(out)
}

/// Conventional interleaved parallel PLL: lane `i` handles stream indices
/// `i, i + N, …`. The compensator is broadcast every `broadcast_len` symbols
/// exactly as in [`run_ssp_pll`]; cycle slips are corrected afterwards on the
/// stream-ordered output.
pub fn run_interleaved_pll<T: Real>(
    stream: &[Complex<T>],
    n_lanes: usize,
    broadcast_len: usize,
    schedule: LaneSchedule,
    inputs: &CprInputs<'_, T>,
) -> Result<CprOutput<T>> {
    inputs.check(stream.len())?;
    if n_lanes == 0 || broadcast_len == 0 || broadcast_len % n_lanes != 0 {
        return Err(Error::invalid(
            "interleaved lanes",
            "broadcast length must be a positive multiple of the lane count",
        ));
    }
    let n = stream.len();
    let mut out = CprOutput::with_capacity(n);
    out.x = vec![Complex::new(T::zero(), T::zero()); n];
    out.y = out.x.clone();
    out.labels = vec![0; n];
    out.theta_hat = vec![T::zero(); n];
    let mut states: Vec<Option<PllState<T>>> = vec![None; n_lanes];
    let mut c = inputs.tap.c;

    for b in 0..n.div_ceil(broadcast_len) {
        let lo = b * broadcast_len;
        let hi = (lo + broadcast_len).min(n);
        let mode = (inputs.c_mode)(b);
        let tap = MimoTap {
            c,
            mu: inputs.tap.mu,
            mode,
        };
        let results = run_jobs(n_lanes, schedule, |i| {
            let idx: Vec<usize> = (lo + i..hi).step_by(n_lanes).collect();
            let samples: Vec<Complex<T>> = idx.iter().map(|&k| stream[k]).collect();
            let known: Vec<Option<usize>> = idx.iter().map(|&k| inputs.known[k]).collect();
            let mut state = match states[i].clone() {
                Some(s) => s,
                None => {
                    let mut s = PllState::new(inputs.pll);
                    if let (Some(&r), Some(Some(l))) = (samples.first(), known.first()) {
                        s.seed_phase(r, inputs.constellation.point(*l), &c);
                    }
                    s
                }
            };
            let mut lane_tap = tap;
            let lane = if samples.is_empty() {
                LaneOutput::default()
            } else {
                run_lane(&samples, &known, &mut state, &mut lane_tap, inputs.pll, inputs.constellation)?
            };
            Ok(LaneResult {
                out: lane,
                state,
                c: lane_tap.c,
                slips: 0,
            })
        })?;
        out.c_per_block.push(c);
        c = merge_c(&results, c, mode);
        for (i, r) in results.into_iter().enumerate() {
            for (j, k) in (lo + i..hi).step_by(n_lanes).enumerate() {
                out.x[k] = r.out.x[j];
                out.y[k] = r.out.y[j];
                out.labels[k] = r.out.labels[j];
                out.theta_hat[k] = r.out.theta_hat[j];
            }
            states[i] = Some(r.state);
        }
        let c_block = out.c_per_block[b];
        out.slips += cycle_slip_correct(
            &mut out.x[lo..hi],
            &mut out.y[lo..hi],
            &mut out.labels[lo..hi],
            &inputs.pilots[lo..hi],
            &c_block,
            inputs.constellation,
        )?
        .len();
    }
    out.c_final = c;
    Ok(out)
}
