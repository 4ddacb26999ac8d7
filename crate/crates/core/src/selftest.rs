//! Built-in invariant checks, run by `cprlab selftest`.

use std::time::Instant;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bps::{bps_estimate, BpsConfig};
use crate::constellation::{Constellation, PilotPlan};
use crate::harness::config::RunConfig;
use crate::harness::pipeline::{build_frame, run_ber_point, PointOutcome};
use crate::harness::report::{read_penalties, read_points, write_penalties, write_points, PenaltyRow, PointRow};
use crate::impairments::{build_p, build_skew_taps, build_w, phase_path, transmit_with_phase, NoiseSpec, PhaseSpec, TxImpairments};
use crate::matrix::Matrix2;
use crate::ssp::{cycle_slip_correct, reorder_in, reorder_out, BlockBuffer, LaneSchedule};

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {} ({:.2}s) {}", self.name, self.seconds, self.detail)
    }
}

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

type CheckFn = fn() -> Outcome;

pub const CHECKS: &[(&str, CheckFn)] = &[
    ("matrix-identities", matrix_identities),
    ("phase-increment-variance", phase_increment_variance),
    ("permutation-round-trip", permutation_round_trip),
    ("cycle-slip-recovery", cycle_slip_recovery),
    ("constellation", constellation_invariants),
    ("slicer-idempotent", slicer_idempotent),
    ("gray-ber-ser", gray_ber_ser),
    ("skew-tap-energy", skew_tap_energy),
    ("bps-refinement", bps_refinement),
    ("pilot-overhead", pilot_overhead),
    ("csv-round-trip", csv_round_trip),
    ("noise-calibration", noise_calibration),
    ("determinism-rerun", determinism_rerun),
    ("determinism-jobs", determinism_jobs),
    ("determinism-lane-order", determinism_lane_order),
];

/// Runs every check; never panics on a failing check.
pub fn run_all() -> Vec<Check> {
    CHECKS.iter().map(|&(name, f)| run_one(name, f)).collect()
}

fn run_one(name: &'static str, f: CheckFn) -> Check {
    let t = Instant::now();
    let r = f();
    let seconds = t.elapsed().as_secs_f64();
    match r {
        Ok(detail) => Check {
            name,
            passed: true,
            detail,
            seconds,
        },
        Err(detail) => Check {
            name,
            passed: false,
            detail,
            seconds,
        },
    }
}

fn close(a: &Matrix2<f64>, b: &Matrix2<f64>, tol: f64) -> bool {
    (*a - *b).max_abs() <= tol
}

fn matrix_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let id = Matrix2::<f64>::identity();
    for _ in 0..1000 {
        let eps = rng.random_range(-0.4..0.4);
        let phi = rng.random_range(-0.7..0.7);
        let a: f64 = rng.random_range(-7.0..7.0);
        let b: f64 = rng.random_range(-7.0..7.0);
        let w = build_w(&TxImpairments::imbalance(eps, phi));
        let winv = w.inverse().ok_or("W singular")?;
        ensure(close(&(w * winv), &id, 1e-12) && close(&(winv * w), &id, 1e-12), || {
            format!("W·W⁻¹ ≠ I at eps={eps}, phi={phi}")
        })?;
        let det = (1.0 - eps * eps) * phi.cos();
        ensure((w.det() - det).abs() < 1e-12, || format!("det W = {} vs {det}", w.det()))?;
        let (pa, pb) = (build_p(a), build_p(b));
        ensure(close(&(pa * pb), &build_p(a + b), 1e-12), || format!("P({a})P({b}) ≠ P(a+b)"))?;
        ensure(close(&(pa.transpose() * pa), &id, 1e-12), || format!("P({a}) not orthogonal"))?;
        ensure((pa.det() - 1.0).abs() < 1e-12, || "det P ≠ 1".into())?;
        let m = Matrix2::new(a, b, eps, phi);
        ensure(close(&(m * w).transpose(), &(w.transpose() * m.transpose()), 1e-12), || {
            "(MW)ᵀ ≠ WᵀMᵀ".into()
        })?;
    }
    Ok("1000 random cases".into())
}

fn phase_increment_variance() -> Outcome {
    let spec = PhaseSpec {
        linewidth: 1e6,
        ..PhaseSpec::still(1.0 / 32e9)
    };
    let n = 1_000_000;
    let theta = phase_path::<f64>(&spec, n, 5).map_err(|e| e.to_string())?.theta;
    let d: Vec<f64> = theta.windows(2).map(|w| w[1] - w[0]).collect();
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64;
    let want = spec.increment_variance();
    let rel = (var / want - 1.0).abs();
    ensure(rel < 0.03, || format!("variance {var:.4e} vs {want:.4e} ({:.1}% off)", rel * 100.0))?;
    Ok(format!("{var:.4e} vs {want:.4e}"))
}

fn permutation_round_trip() -> Outcome {
    for n in 1..=17 {
        for s in [1, 2, 7, 100, 400] {
            let v: Vec<usize> = (0..n * s).collect();
            let lanes = reorder_in(&v, n, s).map_err(|e| e.to_string())?;
            ensure(lanes.iter().all(|l| l.windows(2).all(|w| w[1] == w[0] + 1)), || {
                format!("lanes not consecutive for N={n}, S={s}")
            })?;
            let back = reorder_out(&lanes, n, s).map_err(|e| e.to_string())?;
            ensure(back == v, || format!("reorder round trip failed for N={n}, S={s}"))?;
            let bb = BlockBuffer::new(n, s);
            let g = bb.gather(&bb.scatter(&v).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
            ensure(g == v, || format!("buffer round trip failed for N={n}, S={s}"))?;
        }
    }
    Ok("N in 1..=17, S in {1,2,7,100,400}".into())
}

fn pilot_stream(n: usize, seed: u64, c: &Constellation<f64>) -> (Vec<usize>, Vec<Option<usize>>) {
    let plan = PilotPlan::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..16)).collect();
    let mut pilots = vec![None; n];
    for i in (0..n).filter(|&i| plan.is_pilot(i)) {
        labels[i] = plan.pilot_label(c, i);
        pilots[i] = Some(labels[i]);
    }
    (labels, pilots)
}

fn cycle_slip_recovery() -> Outcome {
    let c = Constellation::<f64>::qam16();
    let id = Matrix2::identity();
    for (k, start) in [(1, 450usize), (2, 1230), (3, 77)] {
        let (l, pilots) = pilot_stream(2000, k as u64, &c);
        let turn = build_p(std::f64::consts::FRAC_PI_2 * k as f64);
        let mut x: Vec<Complex<f64>> = l
            .iter()
            .enumerate()
            .map(|(i, &s)| if i >= start { turn.apply(c.point(s)) } else { c.point(s) })
            .collect();
        let mut y = x.clone();
        let mut labels: Vec<usize> = y.iter().map(|&v| c.slice_finite(v)).collect();
        cycle_slip_correct(&mut x, &mut y, &mut labels, &pilots, &id, &c).map_err(|e| e.to_string())?;
        let next = start.div_ceil(100) * 100;
        ensure(labels[next..] == l[next..] && labels[..start] == l[..start], || {
            format!("slip of {k} quadrants at {start} not undone from {next}")
        })?;
    }
    let (l, pilots) = pilot_stream(2000, 9, &c);
    let mut x: Vec<Complex<f64>> = l.iter().map(|&s| c.point(s)).collect();
    let mut y = x.clone();
    let mut labels = vec![5; l.len()];
    let slips = cycle_slip_correct(&mut x, &mut y, &mut labels, &pilots, &id, &c).map_err(|e| e.to_string())?;
    ensure(slips.is_empty() && labels.iter().all(|&v| v == 5), || "slip-free stream altered".into())?;
    Ok("quarter, half and three-quarter turns".into())
}

fn constellation_invariants() -> Outcome {
    let c = Constellation::<f64>::qam16();
    let pts = c.points();
    let energy = pts.iter().map(|p| p.norm_sqr()).sum::<f64>() / pts.len() as f64;
    ensure((energy - 1.0).abs() < 1e-12, || format!("mean energy {energy}"))?;
    let dmin = pts
        .iter()
        .enumerate()
        .flat_map(|(i, a)| pts[i + 1..].iter().map(move |b| (a - b).norm()))
        .fold(f64::INFINITY, f64::min);
    for (i, a) in pts.iter().enumerate() {
        ensure(c.slice_finite(*a) == i, || format!("slice(point({i})) ≠ {i}"))?;
        let turned = Complex::new(-a.im, a.re);
        ensure(pts.iter().any(|b| (b - turned).norm() < 1e-12), || "not π/2 symmetric".into())?;
        for (j, b) in pts.iter().enumerate() {
            if i != j && ((a - b).norm() - dmin).abs() < 1e-9 {
                let bits = (i ^ j).count_ones();
                ensure(bits == 1, || format!("neighbours {i},{j} differ in {bits} bits"))?;
            }
        }
    }
    Ok(format!("Es = {energy:.3}, dmin = {dmin:.4}"))
}

fn slicer_idempotent() -> Outcome {
    let c = Constellation::<f64>::qam16();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..10_000 {
        let y = Complex::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let once = c.slice_point(y);
        ensure(c.slice_point(once) == once, || format!("slice not idempotent at {y}"))?;
    }
    Ok("10000 random inputs".into())
}

fn gray_ber_ser() -> Outcome {
    let n = 1_000_000;
    let c = Constellation::<f64>::qam16();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let sigma = (0.5 / 10f64.powf(2.0)).sqrt();
    let (mut bit_err, mut sym_err) = (0u64, 0u64);
    for _ in 0..n {
        let l = rng.random_range(0..16);
        let noise: Complex<f64> = Complex::new(
            rng.sample(rand_distr::StandardNormal),
            rng.sample(rand_distr::StandardNormal),
        );
        let r = c.slice_finite(c.point(l) + noise * sigma);
        bit_err += (l ^ r).count_ones() as u64;
        sym_err += (l != r) as u64;
    }
    let ber = bit_err as f64 / (4 * n) as f64;
    let ser_over_k = sym_err as f64 / (4 * n) as f64;
    let rel = (ber / ser_over_k - 1.0).abs();
    ensure(sym_err >= 5 && rel < 0.2, || format!("BER {ber:.3e} vs SER/4 {ser_over_k:.3e}"))?;
    Ok(format!("BER {ber:.3e}, SER/4 {ser_over_k:.3e} at Es/N0 = 20 dB"))
}

fn skew_tap_energy() -> Outcome {
    for tau in [-0.5f64, -0.3, -0.1, 0.0, 0.05, 0.25, 0.5] {
        let imp = TxImpairments {
            tau_over_t: tau,
            ..TxImpairments::default()
        };
        let taps = build_skew_taps::<f64>(&imp).map_err(|e| e.to_string())?;
        for rail in 0..2 {
            let e = taps.rail_energy(rail);
            ensure((e - 1.0).abs() < 1e-6, || format!("rail {rail} energy {e} at tau {tau}"))?;
        }
    }
    Ok("both rails, tau in [-0.5, 0.5]".into())
}

fn bps_refinement() -> Outcome {
    let c = Constellation::<f64>::qam16();
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let a: Vec<Complex<f64>> = (0..1000).map(|_| c.point(rng.random_range(0..16))).collect();
    for truth in [0.013, -0.2, 0.31, 0.77] {
        let x: Vec<Complex<f64>> = a.iter().map(|&v| build_p(truth).apply(v)).collect();
        let mut last = f64::INFINITY;
        for b in [4, 8, 16, 32, 64] {
            let cfg = BpsConfig { window: 40, n_test: b };
            let out = bps_estimate(&x, &Matrix2::identity(), &cfg, &c).map_err(|e| e.to_string())?;
            let mse = out
                .phase
                .iter()
                .map(|p| crate::scalar::wrap_pi(4.0 * (p - truth)).powi(2) / 16.0)
                .sum::<f64>()
                / x.len() as f64;
            ensure(mse <= last + 1e-15, || format!("B={b} worse than B={} at {truth}", b / 2))?;
            last = mse;
        }
    }
    Ok("B = 4..64 on constant phase".into())
}

fn pilot_overhead() -> Outcome {
    let cfg = RunConfig {
        n_symbols: 50_000,
        ..RunConfig::default()
    };
    let frame = build_frame(&cfg, &Constellation::<f64>::qam16()).map_err(|e| e.to_string())?;
    let total = frame.labels.len();
    let pilots = frame.pilots.iter().filter(|p| p.is_some()).count();
    let plan = PilotPlan::new(cfg.pilot_period).map_err(|e| e.to_string())?;
    ensure(pilots == plan.pilot_count(total), || format!("{pilots} pilots in {total}"))?;
    let payload_region = total - frame.train_len;
    let expected = payload_region - plan.pilot_count(payload_region);
    ensure(frame.payload_count() == expected, || {
        format!("payload {} vs {expected}", frame.payload_count())
    })?;
    ensure(frame.payload_count() >= cfg.n_symbols, || "frame too short".into())?;
    let overhead = pilots as f64 / total as f64;
    ensure((overhead - plan.overhead()).abs() < 1e-12, || format!("overhead {overhead}"))?;
    Ok(format!("{pilots} pilots in {total} symbols"))
}

fn csv_round_trip() -> Outcome {
    let points = vec![
        PointRow {
            scenario: "proposed".into(),
            phi_e_deg: 15.0,
            eps_g: 0.15,
            tau_over_t: 0.1,
            osnr_db: 18.5,
            ber: 1.234_567_890_123e-3,
            n_symbols: 200_000,
            n_errors: 988,
            seed: u64::MAX,
        },
        PointRow {
            scenario: "conventional+rails".into(),
            phi_e_deg: -0.0,
            eps_g: 0.0,
            tau_over_t: -0.3,
            osnr_db: 28.5,
            ber: 0.0,
            n_symbols: 1,
            n_errors: 0,
            seed: 0,
        },
    ];
    let penalties = vec![
        PenaltyRow {
            scenario: "proposed".into(),
            phi_e_deg: 15.0,
            eps_g: 0.15,
            tau_over_t: 0.1,
            osnr_at_target_db: Some(19.56),
            penalty_db: Some(1.54),
            flag: "ok".into(),
        },
        PenaltyRow {
            scenario: "conventional".into(),
            phi_e_deg: 20.0,
            eps_g: 0.2,
            tau_over_t: 0.1,
            osnr_at_target_db: None,
            penalty_db: None,
            flag: "not_reached".into(),
        },
    ];
    let mut buf = Vec::new();
    write_points(&mut buf, &points).map_err(|e| e.to_string())?;
    let back = read_points(buf.as_slice()).map_err(|e| e.to_string())?;
    ensure(back == points, || "points differ after round trip".into())?;
    let mut buf = Vec::new();
    write_penalties(&mut buf, &penalties).map_err(|e| e.to_string())?;
    let back = read_penalties(buf.as_slice()).map_err(|e| e.to_string())?;
    ensure(back == penalties, || "penalties differ after round trip".into())?;
    Ok("points and penalties".into())
}

fn noise_calibration() -> Outcome {
    let n = 200_000;
    let c = Constellation::<f64>::qam16();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let symbols: Vec<Complex<f64>> = (0..n).map(|_| c.point(rng.random_range(0..16))).collect();
    let imp = TxImpairments::imbalance(0.0, 0.0);
    let noise = NoiseSpec::new(18.0, 32e9);
    let rx = transmit_with_phase(&symbols, &imp, &vec![0.0; n], Some(&noise), 3).map_err(|e| e.to_string())?;
    let per_dim = rx
        .iter()
        .zip(&symbols)
        .map(|(r, a)| (r - a).norm_sqr())
        .sum::<f64>()
        / (2 * n) as f64;
    let es_n0 = 10f64.powf(1.8) * 2.0 * noise.b_ref / noise.baud;
    let want = 0.5 / es_n0;
    let rel = (per_dim / want - 1.0).abs();
    ensure(rel < 0.02, || format!("noise variance {per_dim:.4e} vs {want:.4e}"))?;
    Ok(format!("σ² per dimension {per_dim:.4e} vs {want:.4e}"))
}

fn small_run() -> RunConfig {
    RunConfig {
        n_symbols: 20_000,
        eps_g: 0.1,
        phi_e_deg: 10.0,
        tau_over_t: 0.1,
        seed: 42,
        ..RunConfig::default()
    }
}

fn same(a: &PointOutcome, b: &PointOutcome) -> bool {
    a.bits == b.bits && a.slips == b.slips && a.c_final == b.c_final
}

fn determinism_rerun() -> Outcome {
    let cfg = small_run();
    let a = run_ber_point(&cfg, Some(18.0)).map_err(|e| e.to_string())?;
    let b = run_ber_point(&cfg, Some(18.0)).map_err(|e| e.to_string())?;
    ensure(same(&a, &b), || format!("{:?} vs {:?}", a.bits, b.bits))?;
    Ok(format!("{} bit errors both runs", a.bits.errors))
}

fn determinism_jobs() -> Outcome {
    let cfg = small_run();
    let mut runs = Vec::new();
    for jobs in [1, 4] {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| e.to_string())?;
        let r = pool.install(|| run_ber_point(&cfg, Some(18.0))).map_err(|e| e.to_string())?;
        runs.push(r);
    }
    ensure(same(&runs[0], &runs[1]), || "results depend on the thread count".into())?;
    Ok("1 and 4 threads agree".into())
}

fn determinism_lane_order() -> Outcome {
    let mut outcomes = Vec::new();
    for schedule in [LaneSchedule::Sequential, LaneSchedule::Reversed, LaneSchedule::Parallel] {
        let cfg = RunConfig {
            schedule,
            ..small_run()
        };
        outcomes.push(run_ber_point(&cfg, Some(18.0)).map_err(|e| e.to_string())?);
    }
    ensure(outcomes.windows(2).all(|w| same(&w[0], &w[1])), || {
        "results depend on the lane execution order".into()
    })?;
    Ok("sequential, reversed and parallel agree".into())
}
