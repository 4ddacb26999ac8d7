use std::process::{Command, Output};

fn cprlab(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cprlab"));
    cmd.args(args);
    for (k, _) in std::env::vars() {
        if k.starts_with("CPRLAB_") {
            cmd.env_remove(k);
        }
    }
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn cprlab")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &[&str] = &["--set", "run.n_symbols=10000"];

#[test]
fn ber_point_writes_csv_and_echo() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = cprlab(&[&["ber-point", "--osnr", "18", "--seed", "5", "--out", out], SMALL].concat(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("scenario=proposed+rails osnr_db=18 "));
    let csv = std::fs::read_to_string(dir.path().join("points.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("scenario,phi_e_deg,eps_g,tau_over_T,osnr_db,ber,n_symbols,n_errors,seed"));
    assert!(lines.next().unwrap().ends_with(",5"));
    let echo = std::fs::read_to_string(dir.path().join("config.txt")).unwrap();
    assert!(echo.contains("run.seed=5\n"));
    assert!(echo.contains("run.n_symbols=10000\n"));
}

#[test]
fn precedence_is_file_then_env_then_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# test\nrun.seed=3\nrun.n_symbols=10000\ntx.eps_g=0.05\n").unwrap();
    let out = dir.path().join("o");
    let run = |env: &[(&str, &str)], extra: &[&str]| {
        let args = [
            &["ber-point", "--noiseless", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()],
            extra,
        ]
        .concat();
        let o = cprlab(&args, env);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read_to_string(out.join("config.txt")).unwrap()
    };
    let echo = run(&[], &[]);
    assert!(echo.contains("run.seed=3\n") && echo.contains("tx.eps_g=0.05\n"));
    let echo = run(&[("CPRLAB_RUN_SEED", "4"), ("CPRLAB_TX_EPS_G", "0.1")], &[]);
    assert!(echo.contains("run.seed=4\n") && echo.contains("tx.eps_g=0.1\n"));
    let echo = run(&[("CPRLAB_RUN_SEED", "4")], &["--seed", "8"]);
    assert!(echo.contains("run.seed=8\n"));
    let echo = run(&[("CPRLAB_SEED", "9")], &[]);
    assert!(echo.contains("run.seed=9\n"));
    let echo = run(&[("CPRLAB_TX_EPS_G", "0.1")], &["--set", "tx.eps_g=0.15"]);
    assert!(echo.contains("tx.eps_g=0.15\n"));
}

#[test]
fn scenario_flag_selects_the_chain() {
    let o = cprlab(&[&["ber-point", "--noiseless", "--scenario", "conventional"], SMALL].concat(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("scenario=conventional+rails osnr_db=inf ber=0.0000e0"));
}

#[test]
fn errors_are_machine_readable() {
    let cases: &[(&[&str], &str)] = &[
        (&["ber-point", "--set", "nope=1"], "config"),
        (&["ber-point", "--set", "pll.kp=-1"], "invalid_parameter"),
        (&["ber-point", "--set", "oops"], "usage"),
        (&["ber-point", "--config", "/definitely/missing.cfg"], "io"),
        (&["ber-point", "--scenario", "sideways"], "usage"),
        (&["selftest", "--jobs", "0"], "usage"),
        (&["frobnicate"], "usage"),
    ];
    for (args, kind) in cases {
        let o = cprlab(args, &[]);
        assert!(!o.status.success(), "{args:?} succeeded");
        let err = stderr(&o);
        let line = err.lines().last().unwrap_or_default();
        assert!(line.starts_with(&format!("cprlab-error kind={kind} message=\"")), "{args:?}: {err}");
        assert!(line.ends_with('"'));
    }
}

#[test]
fn selftest_passes_with_one_job() {
    let o = cprlab(&["selftest", "--jobs", "1"], &[]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    let text = stdout(&o);
    assert!(text.lines().count() >= 10);
    assert!(text.lines().all(|l| l.starts_with("PASS ")));
}

#[test]
fn sweep_writes_penalty_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let args = [
        "sweep-fig2a",
        "--scenario",
        "proposed",
        "--out",
        out,
        "--set",
        "run.n_symbols=10000",
        "--set",
        "fig2a.phi_e_deg=10",
        "--set",
        "fig2a.eps_g=0.1",
        "--set",
        "run.max_extensions=1",
    ];
    let o = cprlab(&args, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("penalty.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "scenario,phi_e_deg,eps_g,tau_over_T,osnr_at_target_db,penalty_db,flag");
    assert_eq!(lines.len(), 3, "{csv}");
    let fields = |l: &str| l.split(',').map(str::to_string).collect::<Vec<_>>();
    let num = |s: &str| s.parse::<f64>().unwrap();
    let base = fields(lines[1]);
    assert_eq!(base[0], "proposed+rails");
    assert_eq!([num(&base[1]), num(&base[2]), num(&base[3]), num(&base[5])], [0.0; 4]);
    assert_eq!(base[6], "baseline");
    let cell = fields(lines[2]);
    assert_eq!([num(&cell[1]), num(&cell[2]), num(&cell[3])], [10.0, 0.1, 0.1]);
    assert!(dir.path().join("points.csv").exists());
}
