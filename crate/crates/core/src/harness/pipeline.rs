//! One Monte Carlo BER point: frame → Tx/channel → first-stage PLL → BPS →
//! optional rail equalizers → error count over payload symbols.
//!
//! Frame layout: `train_blocks` buffers of fully known symbols, then payload
//! buffers with a corner pilot every `pilot_period` symbols. Training and
//! pilot symbols are excluded from the count.
//!
//! Adaptation schedule over buffers. The first training buffer lets the loop
//! acquire with everything frozen. The compensator then trains
//! pilot-directed on the remaining training buffers and runs
//! decision-directed on payload. With rails enabled the last training buffer
//! (when there are at least three) and every odd payload buffer freeze the
//! compensator and let the rails adapt instead. The conventional scenario
//! keeps `C = I` throughout, so its rails adapt on every buffer after the
//! first.

use num_complex::Complex;
use rand::Rng;

use crate::bps::bps_estimate_with;
use crate::constellation::{count_label_bit_errors, Constellation, ErrorCount};
use crate::error::Result;
use crate::harness::config::{RunConfig, Scenario};
use crate::impairments::{transmit, TxImpairments};
use crate::matrix::Matrix2;
use crate::pll::{LmsMode, MimoTap, PllConfig};
use crate::rng::{self, Stream};
use crate::scalar::Real;
use crate::skew_eq::RailPair;
use crate::ssp::{cycle_slip_correct, run_interleaved_pll, run_ssp_pll, CprInputs, CprOutput};

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub labels: Vec<usize>,
    pub known: Vec<Option<usize>>,
    pub pilots: Vec<Option<usize>>,
    /// Number of leading training symbols.
    pub train_len: usize,
}

impl Frame {
    pub fn is_payload(&self, n: usize) -> bool {
        self.known[n].is_none()
    }

    pub fn payload_count(&self) -> usize {
        self.known.iter().filter(|k| k.is_none()).count()
    }
}

/// Builds a frame holding at least `cfg.n_symbols` payload symbols.
pub fn build_frame<T: Real>(cfg: &RunConfig, constellation: &Constellation<T>) -> Result<Frame> {
    let ssp = cfg.ssp_config()?;
    ssp.validate()?;
    let buf = ssp.buffer_len();
    let per_buf = ssp.pilot_plan.payload_count(buf);
    let data_blocks = cfg.n_symbols.div_ceil(per_buf).max(1);
    let total = (cfg.train_blocks + data_blocks) * buf;
    let train_len = cfg.train_blocks * buf;

    let mut rng = rng::stream(cfg.seed, Stream::Payload);
    let order = constellation.order();
    let mut labels: Vec<usize> = (0..total).map(|_| rng.random_range(0..order)).collect();
    let mut known = vec![None; total];
    let mut pilots = vec![None; total];
    for n in 0..total {
        if ssp.pilot_plan.is_pilot(n) {
            let p = ssp.pilot_plan.pilot_label(constellation, n);
            labels[n] = p;
            pilots[n] = Some(p);
            known[n] = Some(p);
        } else if n < train_len {
            known[n] = Some(labels[n]);
        }
    }
    Ok(Frame {
        labels,
        known,
        pilots,
        train_len,
    })
}

/// Compensator mode for buffer `b`.
pub fn c_mode(cfg: &RunConfig, b: usize) -> LmsMode {
    if cfg.scenario == Scenario::Conventional {
        return LmsMode::Frozen;
    }
    let t = cfg.train_blocks;
    if b < t {
        // the loop acquires on the first buffer before the compensator trains
        let acquiring = b == 0 && t >= 2;
        let rail_training = cfg.rails && t >= 3 && b + 1 == t;
        if acquiring || rail_training {
            LmsMode::Frozen
        } else {
            LmsMode::PilotDirected
        }
    } else if cfg.rails && (b - t) % 2 == 1 {
        LmsMode::Frozen
    } else {
        cfg.payload_mode
    }
}

/// Rails adapt while the compensator is frozen, except during acquisition.
pub fn rails_adapt(cfg: &RunConfig, b: usize) -> bool {
    cfg.rails && !(b == 0 && cfg.train_blocks >= 2) && c_mode(cfg, b) == LmsMode::Frozen
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointOutcome {
    pub osnr_db: Option<f64>,
    /// Bit errors over payload symbols.
    pub bits: ErrorCount,
    pub symbols: ErrorCount,
    pub seed: u64,
    pub slips: usize,
    pub c_final: Matrix2<f64>,
}

impl PointOutcome {
    pub fn ber(&self) -> f64 {
        self.bits.rate()
    }
}

/// Full receiver output for inspection by tests.
#[derive(Clone, Debug)]
pub struct Trace<T> {
    pub frame: Frame,
    pub theta: Vec<T>,
    pub cpr: CprOutput<T>,
    pub bps_phase: Vec<T>,
    pub labels: Vec<usize>,
    pub slips: usize,
    pub rails: Option<RailPair<T>>,
}

fn cast_pll<T: Real>(p: &PllConfig<f64>) -> PllConfig<T> {
    PllConfig {
        kp: T::lit(p.kp),
        ki: T::lit(p.ki),
        d_l: p.d_l,
    }
}

/// Runs the receiver chain; `osnr_db = None` means noiseless.
pub fn simulate<T: Real>(cfg: &RunConfig, osnr_db: Option<f64>) -> Result<Trace<T>> {
    cfg.validate()?;
    let constellation = Constellation::<T>::qam16();
    let frame = build_frame(cfg, &constellation)?;
    let ssp = cfg.ssp_config()?;
    let buf = ssp.buffer_len();

    let imp64 = cfg.tx_impairments();
    let imp = TxImpairments {
        eps_g: T::lit(imp64.eps_g),
        phi_e: T::lit(imp64.phi_e),
        tau_over_t: T::lit(imp64.tau_over_t),
        pulse: imp64.pulse,
    };
    let symbols: Vec<Complex<T>> = frame.labels.iter().map(|&l| constellation.point(l)).collect();
    let noise = osnr_db.map(|o| cfg.noise_spec(o));
    let rx = transmit(&symbols, &imp, &cfg.phase_spec(), noise.as_ref(), cfg.seed)?;

    let pll = cast_pll::<T>(&cfg.pll);
    let mode = |b: usize| c_mode(cfg, b);
    let inputs = CprInputs {
        known: &frame.known,
        pilots: &frame.pilots,
        pll: &pll,
        constellation: &constellation,
        tap: MimoTap::new(T::lit(cfg.lms_mu), LmsMode::Frozen),
        c_mode: &mode,
    };
    let cpr = match cfg.scenario {
        Scenario::Proposed | Scenario::Conventional => run_ssp_pll(&rx.samples, &ssp, &inputs)?,
        Scenario::Interleaved => run_interleaved_pll(&rx.samples, cfg.n_lanes, buf, cfg.schedule, &inputs)?,
    };

    let mut bps = bps_estimate_with(&cpr.x, |n| cpr.c_at(n, buf), &cfg.bps, &constellation)?;
    // The unwrapped BPS track may sit a whole quadrant off for long stretches;
    // only changes of the correction between pilots count as slips.
    let mut corrections = vec![0i32; frame.pilots.len()];
    for (b, lo) in (0..bps.labels.len()).step_by(buf).enumerate() {
        let hi = (lo + buf).min(bps.labels.len());
        for (p, k) in cycle_slip_correct(
            &mut bps.rotated[lo..hi],
            &mut bps.compensated[lo..hi],
            &mut bps.labels[lo..hi],
            &frame.pilots[lo..hi],
            &cpr.c_per_block[b],
            &constellation,
        )? {
            corrections[lo + p] = k;
        }
    }
    let slips = slip_events(
        (0..frame.pilots.len()).filter(|&n| frame.pilots[n].is_some()).map(|n| corrections[n]),
    );

    let (labels, rails) = if cfg.rails {
        let mut pair = RailPair::new(cfg.rail_taps, T::lit(cfg.rail_mu))?;
        let out = pair.run(&bps.compensated, &frame.known, |n| rails_adapt(cfg, n / buf), &constellation)?;
        (out.labels, Some(pair))
    } else {
        (bps.labels, None)
    };

    Ok(Trace {
        frame,
        theta: rx.theta,
        cpr,
        bps_phase: bps.phase,
        labels,
        slips,
        rails,
    })
}

/// Number of changes in a sequence of per-pilot quadrant corrections,
/// starting from zero.
pub fn slip_events(corrections: impl IntoIterator<Item = i32>) -> usize {
    let mut prev = 0;
    let mut events = 0;
    for k in corrections {
        if k != prev {
            events += 1;
        }
        prev = k;
    }
    events
}

/// Bit and symbol errors over the payload positions of a trace.
pub fn count_payload_errors<T>(trace: &Trace<T>, bits_per_symbol: usize) -> Result<(ErrorCount, ErrorCount)> {
    let idx: Vec<usize> = (0..trace.labels.len()).filter(|&n| trace.frame.is_payload(n)).collect();
    let tx: Vec<usize> = idx.iter().map(|&n| trace.frame.labels[n]).collect();
    let rx: Vec<usize> = idx.iter().map(|&n| trace.labels[n]).collect();
    let bits = count_label_bit_errors(&tx, &rx, bits_per_symbol)?;
    let symbols = ErrorCount {
        errors: tx.iter().zip(&rx).filter(|(a, b)| a != b).count() as u64,
        total: tx.len() as u64,
    };
    Ok((bits, symbols))
}

/// Measures BER at one OSNR point (`None` = noiseless).
pub fn run_ber_point_generic<T: Real>(cfg: &RunConfig, osnr_db: Option<f64>) -> Result<PointOutcome> {
    let trace = simulate::<T>(cfg, osnr_db)?;
    let (bits, symbols) = count_payload_errors(&trace, 4)?;
    Ok(PointOutcome {
        osnr_db,
        bits,
        symbols,
        seed: cfg.seed,
        slips: trace.slips + trace.cpr.slips,
        c_final: trace.cpr.c_final.cast(),
    })
}

pub fn run_ber_point(cfg: &RunConfig, osnr_db: Option<f64>) -> Result<PointOutcome> {
    run_ber_point_generic::<f64>(cfg, osnr_db)
}
