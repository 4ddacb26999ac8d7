use cprlab::harness::config::{RunConfig, Scenario};
use cprlab::harness::penalty::find_osnr_at_ber;
use cprlab::harness::pipeline::{run_ber_point, run_ber_point_generic, simulate};
use cprlab::harness::report::{read_penalties, read_points, write_outputs};
use cprlab::harness::sweep::{run_sweep, Cell, Variant};
use cprlab::ssp::LaneSchedule;
use proptest::prelude::*;

fn small() -> RunConfig {
    RunConfig {
        n_symbols: 20_000,
        ..RunConfig::default()
    }
}

#[test]
fn f32_chain_runs_and_agrees_with_f64() {
    let cfg = RunConfig {
        eps_g: 0.1,
        phi_e_deg: 10.0,
        tau_over_t: 0.1,
        ..small()
    };
    let clean = run_ber_point_generic::<f32>(&cfg, None).unwrap();
    assert_eq!(clean.bits.errors, 0);
    let a = run_ber_point_generic::<f32>(&cfg, Some(18.0)).unwrap();
    let b = run_ber_point_generic::<f64>(&cfg, Some(18.0)).unwrap();
    assert_eq!(a.bits.total, b.bits.total);
    let (ra, rb) = (a.ber(), b.ber());
    assert!((ra / rb - 1.0).abs() < 0.25, "f32 {ra} vs f64 {rb}");
}

#[test]
fn config_echo_reproduces_a_row() {
    let cfg = RunConfig {
        seed: 99,
        phi_e_deg: 5.0,
        eps_g: 0.05,
        ..small()
    };
    let first = run_ber_point(&cfg, Some(18.5)).unwrap();
    let mut again = RunConfig::default();
    again.apply_text(&cfg.to_text()).unwrap();
    assert_eq!(again, cfg);
    let second = run_ber_point(&again, Some(18.5)).unwrap();
    assert_eq!(first, second);
}

#[test]
fn impairment_free_penalty_against_itself_is_zero() {
    let cfg = RunConfig {
        n_symbols: 50_000,
        ..RunConfig::default()
    };
    let v = Variant::new(Scenario::Proposed, true);
    let report = run_sweep(&cfg, &[v], &[]).unwrap();
    let base = report.baseline(v).unwrap();
    assert_eq!(base.penalty_db, Some(0.0));
    let curve: Vec<(f64, f64)> = report.curves[0].ber_curve();
    let again = find_osnr_at_ber(&curve, cfg.target_ber).unwrap().osnr_db;
    assert!((again - base.osnr_at_target_db.unwrap()).abs() < 1e-12);
}

#[test]
fn sweep_outputs_round_trip() {
    let cfg = RunConfig {
        n_symbols: 20_000,
        max_extensions: 1,
        ..RunConfig::default()
    };
    let cells = [Cell {
        phi_e_deg: 10.0,
        eps_g: 0.1,
        tau_over_t: 0.1,
    }];
    let v = [Variant::new(Scenario::Proposed, true), Variant::new(Scenario::Conventional, true)];
    let report = run_sweep(&cfg, &v, &cells).unwrap();
    assert_eq!(report.penalties.len(), 4);
    let dir = tempfile::tempdir().unwrap();
    write_outputs(dir.path(), &cfg, &report.points, Some(&report.penalties)).unwrap();
    let points = read_points(std::fs::File::open(dir.path().join("points.csv")).unwrap()).unwrap();
    let penalties = read_penalties(std::fs::File::open(dir.path().join("penalty.csv")).unwrap()).unwrap();
    assert_eq!(points, report.points);
    assert_eq!(penalties, report.penalties);
    let echo = std::fs::read_to_string(dir.path().join("config.txt")).unwrap();
    let mut back = RunConfig::default();
    back.apply_text(&echo).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn noiseless_trace_tracks_the_true_phase() {
    let cfg = small();
    let t = simulate::<f64>(&cfg, None).unwrap();
    let q = std::f64::consts::FRAC_PI_2;
    let resid: Vec<f64> = t
        .theta
        .iter()
        .zip(&t.bps_phase)
        .zip(&t.cpr.theta_hat)
        .skip(t.frame.train_len)
        .map(|((th, b), p)| {
            let e = th - p - b;
            e - (e / q).round() * q
        })
        .collect();
    let rms = (resid.iter().map(|e| e * e).sum::<f64>() / resid.len() as f64).sqrt();
    let worst = resid.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    assert!(rms < 0.05 && worst < 0.2, "rms {rms}, worst {worst}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn lane_schedule_never_changes_results(seed in 0u64..1000, osnr in 16.0f64..20.0) {
        let base = RunConfig { seed, n_symbols: 6_336, eps_g: 0.1, phi_e_deg: 10.0, ..RunConfig::default() };
        let a = run_ber_point(&RunConfig { schedule: LaneSchedule::Sequential, ..base.clone() }, Some(osnr)).unwrap();
        let b = run_ber_point(&RunConfig { schedule: LaneSchedule::Reversed, ..base.clone() }, Some(osnr)).unwrap();
        let c = run_ber_point(&RunConfig { schedule: LaneSchedule::Parallel, ..base }, Some(osnr)).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(&a, &c);
    }

    #[test]
    fn noiseless_small_imbalance_is_error_free(eps in 0.0f64..0.2, phi in 0.0f64..20.0) {
        let cfg = RunConfig { eps_g: eps, phi_e_deg: phi, n_symbols: 6_336, rails: false, ..RunConfig::default() };
        let p = run_ber_point(&cfg, None).unwrap();
        prop_assert_eq!(p.bits.errors, 0);
    }
}
