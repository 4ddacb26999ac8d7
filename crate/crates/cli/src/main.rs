use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cprlab::harness::config::{RunConfig, Scenario};
use cprlab::harness::pipeline::run_ber_point;
use cprlab::harness::report::{write_outputs, PointRow};
use cprlab::harness::sweep::{fig2a_cells, fig2a_variants, fig2b_cells, fig2b_variants, run_sweep, SweepReport, Variant};
use cprlab::selftest;

#[derive(Parser, Debug)]
#[command(name = "cprlab", version, about = "Carrier phase recovery experiments")]
struct Cli {
    /// Config file with key=value lines.
    #[arg(long, global = true, env = "CPRLAB_CONFIG")]
    config: Option<PathBuf>,

    /// Base seed (run.seed).
    #[arg(long, global = true, env = "CPRLAB_SEED")]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, env = "CPRLAB_OUT")]
    out: Option<PathBuf>,

    /// proposed, conventional or interleaved. Sweeps run only this scenario.
    #[arg(long, global = true, env = "CPRLAB_SCENARIO")]
    scenario: Option<Scenario>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "CPRLAB_JOBS")]
    jobs: Option<usize>,

    /// Override any config key, e.g. `--set pll.kp=0.05`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Measure BER at one OSNR.
    BerPoint {
        /// OSNR in dB (default run.osnr_db).
        #[arg(long)]
        osnr: Option<f64>,
        /// Disable ASE noise.
        #[arg(long, conflicts_with = "osnr")]
        noiseless: bool,
    },
    /// Penalty over the phase/gain imbalance grid.
    SweepFig2a,
    /// Penalty versus I/Q skew at fixed imbalance.
    SweepFig2b,
    /// Run the built-in invariant checks.
    Selftest,
}

#[derive(Debug)]
struct Failure {
    kind: &'static str,
    message: String,
    code: u8,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            kind: "usage",
            message: message.into(),
            code: 2,
        }
    }
}

impl From<cprlab::Error> for Failure {
    fn from(e: cprlab::Error) -> Self {
        let code = match e {
            cprlab::Error::Config(_) | cprlab::Error::InvalidParameter { .. } => 2,
            _ => 1,
        };
        Self {
            kind: e.kind(),
            message: e.to_string(),
            code,
        }
    }
}

fn error_line(f: &Failure) -> String {
    let msg = f.message.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
    format!("cprlab-error kind={} message=\"{msg}\"", f.kind)
}

fn build_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path).map_err(|e| match e {
            cprlab::Error::Io(io) => Failure {
                kind: "io",
                message: format!("{}: {io}", path.display()),
                code: 2,
            },
            other => other.into(),
        })?;
    }
    cfg.apply_env(std::env::vars())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(s) = cli.scenario {
        cfg.scenario = s;
    }
    for kv in &cli.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure::usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn ber_point(cli: &Cli, cfg: &RunConfig, osnr: Option<f64>, noiseless: bool) -> Result<(), Failure> {
    let osnr = if noiseless { None } else { Some(osnr.unwrap_or(cfg.osnr_db)) };
    let p = run_ber_point(cfg, osnr)?;
    let variant = Variant::new(cfg.scenario, cfg.rails);
    println!(
        "scenario={variant} osnr_db={} ber={:.4e} n_symbols={} n_errors={} seed={} slips={}",
        osnr.map_or("inf".to_string(), |o| o.to_string()),
        p.ber(),
        p.symbols.total,
        p.bits.errors,
        p.seed,
        p.slips
    );
    if let Some(dir) = &cli.out {
        let row = PointRow {
            scenario: variant.to_string(),
            phi_e_deg: cfg.phi_e_deg,
            eps_g: cfg.eps_g,
            tau_over_t: cfg.tau_over_t,
            osnr_db: osnr.unwrap_or(f64::INFINITY),
            ber: p.ber(),
            n_symbols: p.symbols.total,
            n_errors: p.bits.errors,
            seed: p.seed,
        };
        write_outputs(dir, cfg, &[row], None)?;
    }
    Ok(())
}

fn print_sweep(report: &SweepReport, dir: &Path) {
    println!("scenario,phi_e_deg,eps_g,tau_over_T,osnr_at_target_db,penalty_db,flag");
    for r in &report.penalties {
        let fmt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.3}"));
        println!(
            "{},{},{},{},{},{},{}",
            r.scenario,
            r.phi_e_deg,
            r.eps_g,
            r.tau_over_t,
            fmt(r.osnr_at_target_db),
            fmt(r.penalty_db),
            r.flag
        );
    }
    for c in report.curves.iter().filter(|c| c.error.is_some()) {
        eprintln!(
            "warning: {} at ({}, {}, {}) failed: {}",
            c.variant,
            c.cell.phi_e_deg,
            c.cell.eps_g,
            c.cell.tau_over_t,
            c.error.as_deref().unwrap_or_default()
        );
    }
    eprintln!("wrote {}", dir.display());
}

fn sweep(cli: &Cli, cfg: &RunConfig, fig2a: bool) -> Result<(), Failure> {
    let (mut variants, cells) = if fig2a {
        (fig2a_variants(cfg), fig2a_cells(cfg))
    } else {
        (fig2b_variants(), fig2b_cells(cfg))
    };
    if let Some(s) = cli.scenario {
        variants.retain(|v| v.scenario == s);
        if variants.is_empty() {
            variants.push(Variant::new(s, cfg.rails));
        }
    }
    let report = run_sweep(cfg, &variants, &cells)?;
    let dir = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(if fig2a { "out/fig2a" } else { "out/fig2b" }));
    write_outputs(&dir, cfg, &report.points, Some(&report.penalties))?;
    print_sweep(&report, &dir);
    Ok(())
}

fn run_selftest() -> Result<(), Failure> {
    let checks = selftest::run_all();
    for c in &checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Failure {
            kind: "selftest",
            message: format!("{failed} of {} checks failed", checks.len()),
            code: 1,
        });
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Failure::usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::usage(e.to_string()))?;
    }
    if let Command::Selftest = cli.command {
        return run_selftest();
    }
    let cfg = build_config(cli)?;
    for w in cfg.warnings() {
        eprintln!("warning: {w}");
    }
    match &cli.command {
        Command::BerPoint { osnr, noiseless } => ber_point(cli, &cfg, *osnr, *noiseless),
        Command::SweepFig2a => sweep(cli, &cfg, true),
        Command::SweepFig2b => sweep(cli, &cfg, false),
        Command::Selftest => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let f = Failure::usage(e.kind().to_string());
            eprintln!("{}", error_line(&f));
            return ExitCode::from(f.code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", error_line(&f));
            ExitCode::from(f.code)
        }
    }
}
