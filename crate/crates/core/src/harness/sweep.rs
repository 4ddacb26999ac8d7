//! BER curves, penalty extraction and the two figure sweeps.
//!
//! Each grid cell gets the seed `seed_base + stable_hash(cell)`, shared by
//! all scenarios and OSNR points of that cell, so scenario comparisons are
//! paired and results do not depend on scheduling. Penalties are measured
//! against the same scenario with no Tx imbalance or skew.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::harness::config::{RunConfig, Scenario};
use crate::harness::penalty::{extension_direction, find_osnr_at_ber, Extend};
use crate::harness::pipeline::{run_ber_point, PointOutcome};
use crate::harness::report::{PenaltyRow, PointRow};
use crate::rng::stable_hash;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub phi_e_deg: f64,
    pub eps_g: f64,
    pub tau_over_t: f64,
}

impl Cell {
    pub const BASELINE: Cell = Cell {
        phi_e_deg: 0.0,
        eps_g: 0.0,
        tau_over_t: 0.0,
    };

    pub fn seed(&self, base: u64) -> u64 {
        let key = format!("{}|{}|{}", self.phi_e_deg, self.eps_g, self.tau_over_t);
        base.wrapping_add(stable_hash(key.as_bytes()))
    }

    pub fn apply(&self, cfg: &RunConfig) -> RunConfig {
        RunConfig {
            phi_e_deg: self.phi_e_deg,
            eps_g: self.eps_g,
            tau_over_t: self.tau_over_t,
            ..cfg.clone()
        }
    }
}

/// A scenario together with the rail-equalizer toggle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Variant {
    pub scenario: Scenario,
    pub rails: bool,
}

impl Variant {
    pub fn new(scenario: Scenario, rails: bool) -> Self {
        Self { scenario, rails }
    }

    pub fn apply(&self, cfg: &RunConfig) -> RunConfig {
        RunConfig {
            scenario: self.scenario,
            rails: self.rails,
            ..cfg.clone()
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.rails {
            write!(f, "{}+rails", self.scenario)
        } else {
            write!(f, "{}", self.scenario)
        }
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.strip_suffix("+rails") {
            Some(base) => Ok(Variant::new(base.parse()?, true)),
            None => Ok(Variant::new(s.parse()?, false)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flag {
    Ok,
    NonMonotone,
    NotReached,
    Failed,
    Baseline,
    NoBaseline,
}

impl Flag {
    pub fn as_str(self) -> &'static str {
        match self {
            Flag::Ok => "ok",
            Flag::NonMonotone => "non_monotone",
            Flag::NotReached => "not_reached",
            Flag::Failed => "failed",
            Flag::Baseline => "baseline",
            Flag::NoBaseline => "no_baseline",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    pub variant: Variant,
    pub cell: Cell,
    pub seed: u64,
    /// Measured points in increasing OSNR.
    pub points: Vec<(f64, PointOutcome)>,
    pub osnr_at_target: Option<f64>,
    pub flag: Flag,
    pub error: Option<String>,
}

impl Curve {
    pub fn rows(&self) -> Vec<PointRow> {
        self.points
            .iter()
            .map(|(o, p)| PointRow {
                scenario: self.variant.to_string(),
                phi_e_deg: self.cell.phi_e_deg,
                eps_g: self.cell.eps_g,
                tau_over_t: self.cell.tau_over_t,
                osnr_db: *o,
                ber: p.ber(),
                n_symbols: p.symbols.total,
                n_errors: p.bits.errors,
                seed: p.seed,
            })
            .collect()
    }

    /// `(osnr, ber)` with zero counts replaced by half an error.
    pub fn ber_curve(&self) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .map(|(o, p)| (*o, p.ber().max(0.5 / p.bits.total.max(1) as f64)))
            .collect()
    }
}

fn measure(cfg: &RunConfig, osnrs: &[f64]) -> Result<Vec<(f64, PointOutcome)>> {
    osnrs
        .par_iter()
        .map(|&o| run_ber_point(cfg, Some(o)).map(|p| (o, p)))
        .collect()
}

/// Measures a BER curve for one cell, extending the OSNR grid two points at a
/// time (up to `max_extensions` times) until it brackets the target.
pub fn measure_curve(cfg: &RunConfig, variant: Variant, cell: Cell) -> Curve {
    let seed = cell.seed(cfg.seed);
    let run_cfg = RunConfig {
        seed,
        ..variant.apply(&cell.apply(cfg))
    };
    let mut curve = Curve {
        variant,
        cell,
        seed,
        points: Vec::new(),
        osnr_at_target: None,
        flag: Flag::Failed,
        error: None,
    };
    let grid = &cfg.osnr_grid;
    let step = match grid.len() {
        0 | 1 => 1.0,
        n => grid[n - 1] - grid[n - 2],
    };
    let mut pending = grid.clone();
    for ext in 0..=cfg.max_extensions {
        match measure(&run_cfg, &pending) {
            Ok(p) => curve.points.extend(p),
            Err(e) => {
                curve.error = Some(e.to_string());
                return curve;
            }
        }
        curve.points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let bers = curve.ber_curve();
        match find_osnr_at_ber(&bers, cfg.target_ber) {
            Ok(x) => {
                curve.osnr_at_target = Some(x.osnr_db);
                curve.flag = if x.monotone { Flag::Ok } else { Flag::NonMonotone };
                return curve;
            }
            Err(Error::NotBracketed { .. }) if ext < cfg.max_extensions => {
                let lo = bers.first().map_or(0.0, |p| p.0);
                let hi = bers.last().map_or(0.0, |p| p.0);
                pending = match extension_direction(&bers, cfg.target_ber) {
                    Extend::Up => vec![hi + step, hi + 2.0 * step],
                    Extend::Down => vec![lo - 2.0 * step, lo - step],
                };
            }
            Err(Error::NotBracketed { .. }) => {
                curve.flag = Flag::NotReached;
                return curve;
            }
            Err(e) => {
                curve.error = Some(e.to_string());
                return curve;
            }
        }
    }
    curve
}

#[derive(Clone, Debug, Default)]
pub struct SweepReport {
    pub curves: Vec<Curve>,
    pub points: Vec<PointRow>,
    pub penalties: Vec<PenaltyRow>,
}

impl SweepReport {
    pub fn penalty(&self, variant: Variant, cell: Cell) -> Option<&PenaltyRow> {
        let name = variant.to_string();
        self.penalties.iter().find(|r| {
            r.scenario == name
                && r.phi_e_deg == cell.phi_e_deg
                && r.eps_g == cell.eps_g
                && r.tau_over_t == cell.tau_over_t
                && r.flag != Flag::Baseline.as_str()
        })
    }

    pub fn baseline(&self, variant: Variant) -> Option<&PenaltyRow> {
        let name = variant.to_string();
        self.penalties
            .iter()
            .find(|r| r.scenario == name && r.flag == Flag::Baseline.as_str())
    }
}

fn penalty_row(curve: &Curve, baseline: Option<&Curve>, is_baseline: bool) -> PenaltyRow {
    let mut row = PenaltyRow {
        scenario: curve.variant.to_string(),
        phi_e_deg: curve.cell.phi_e_deg,
        eps_g: curve.cell.eps_g,
        tau_over_t: curve.cell.tau_over_t,
        osnr_at_target_db: curve.osnr_at_target,
        penalty_db: None,
        flag: curve.flag.as_str().to_string(),
    };
    let base = if is_baseline { Some(curve) } else { baseline };
    match (curve.osnr_at_target, base.and_then(|b| b.osnr_at_target)) {
        (Some(o), Some(b)) => row.penalty_db = Some(o - b),
        (Some(_), None) => row.flag = Flag::NoBaseline.as_str().to_string(),
        _ => {}
    }
    if is_baseline && curve.osnr_at_target.is_some() {
        row.flag = Flag::Baseline.as_str().to_string();
    }
    row
}

/// Runs every `(variant, cell)` curve plus one impairment-free baseline per
/// variant. Failures are recorded per curve and never abort the sweep.
pub fn run_sweep(cfg: &RunConfig, variants: &[Variant], cells: &[Cell]) -> Result<SweepReport> {
    cfg.validate()?;
    let mut jobs: Vec<(Variant, Cell)> = Vec::new();
    for &v in variants {
        jobs.push((v, Cell::BASELINE));
        jobs.extend(cells.iter().filter(|&&c| c != Cell::BASELINE).map(|&c| (v, c)));
    }
    let curves: Vec<Curve> = jobs.par_iter().map(|&(v, c)| measure_curve(cfg, v, c)).collect();

    let mut report = SweepReport::default();
    for &v in variants {
        let base = curves.iter().find(|c| c.variant == v && c.cell == Cell::BASELINE);
        if let Some(b) = base {
            report.penalties.push(penalty_row(b, None, true));
        }
        for &cell in cells {
            if cell == Cell::BASELINE {
                continue;
            }
            if let Some(c) = curves.iter().find(|c| c.variant == v && c.cell == cell) {
                report.penalties.push(penalty_row(c, base, false));
            }
        }
    }
    report.points = curves.iter().flat_map(Curve::rows).collect();
    report.curves = curves;
    Ok(report)
}

pub fn fig2a_cells(cfg: &RunConfig) -> Vec<Cell> {
    let mut cells = Vec::new();
    for &phi in &cfg.fig2a.phi_e_deg {
        for &eps in &cfg.fig2a.eps_g {
            cells.push(Cell {
                phi_e_deg: phi,
                eps_g: eps,
                tau_over_t: cfg.fig2a.tau_over_t,
            });
        }
    }
    cells
}

pub fn fig2b_cells(cfg: &RunConfig) -> Vec<Cell> {
    cfg.fig2b
        .tau_over_t
        .iter()
        .map(|&tau| Cell {
            phi_e_deg: cfg.fig2b.phi_e_deg,
            eps_g: cfg.fig2b.eps_g,
            tau_over_t: tau,
        })
        .collect()
}

pub fn fig2a_variants(cfg: &RunConfig) -> Vec<Variant> {
    vec![
        Variant::new(Scenario::Proposed, cfg.rails),
        Variant::new(Scenario::Conventional, cfg.rails),
    ]
}

pub fn fig2b_variants() -> Vec<Variant> {
    let mut variants = Vec::new();
    for s in [Scenario::Proposed, Scenario::Conventional] {
        for rails in [false, true] {
            variants.push(Variant::new(s, rails));
        }
    }
    variants
}

/// Penalty over the (φ_e, ε_g) grid for the proposed and conventional
/// scenarios, with the configured rail toggle.
pub fn sweep_fig2a(cfg: &RunConfig) -> Result<SweepReport> {
    run_sweep(cfg, &fig2a_variants(cfg), &fig2a_cells(cfg))
}

/// Penalty versus skew at a fixed imbalance, both scenarios with and without
/// rail equalizers.
pub fn sweep_fig2b(cfg: &RunConfig) -> Result<SweepReport> {
    run_sweep(cfg, &fig2b_variants(), &fig2b_cells(cfg))
}
