//! Run configuration.
//!
//! Flat `key=value` text with dotted section prefixes, e.g. `pll.kp=0.04`.
//! Blank lines and lines starting with `#` are ignored. Every key may also be
//! set from the environment as `CPRLAB_` followed by the key uppercased with
//! dots replaced by underscores (`CPRLAB_PLL_KP`). Later sources win:
//! defaults, then file, then environment, then explicit overrides.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::bps::BpsConfig;
use crate::constellation::PilotPlan;
use crate::error::{Error, Result};
use crate::impairments::{NoiseSpec, PhaseSpec, PulseSpec, TxImpairments};
use crate::pll::{LmsMode, PllConfig};
use crate::ssp::{LaneSchedule, SspConfig};

pub const ENV_PREFIX: &str = "CPRLAB_";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scenario {
    /// SSP-PLL + BPS with the adaptive compensator at every slicer input.
    Proposed,
    /// SSP-PLL + BPS with `C = I`.
    Conventional,
    /// Interleaved parallel PLL (feedback latency `N·D_L`) + BPS, with compensator.
    Interleaved,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Proposed, Scenario::Conventional, Scenario::Interleaved];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Proposed => "proposed",
            Scenario::Conventional => "conventional",
            Scenario::Interleaved => "interleaved",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "proposed" => Ok(Scenario::Proposed),
            "conventional" => Ok(Scenario::Conventional),
            "interleaved" | "interleaved-baseline" => Ok(Scenario::Interleaved),
            other => Err(Error::Config(format!("unknown scenario `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Fig2aGrid {
    pub phi_e_deg: Vec<f64>,
    pub eps_g: Vec<f64>,
    pub tau_over_t: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Fig2bGrid {
    pub tau_over_t: Vec<f64>,
    pub phi_e_deg: f64,
    pub eps_g: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub rails: bool,
    /// Payload symbols counted per OSNR point (rounded up to whole buffers).
    pub n_symbols: usize,
    pub seed: u64,
    pub target_ber: f64,
    pub osnr_db: f64,
    pub osnr_grid: Vec<f64>,
    /// Two-point grid extensions tried before a curve is declared unreachable.
    pub max_extensions: usize,

    pub baud: f64,
    pub b_ref: f64,

    pub eps_g: f64,
    pub phi_e_deg: f64,
    pub tau_over_t: f64,
    pub pulse: PulseSpec,

    pub linewidth: f64,
    pub f_offset: f64,
    pub fluct_amp: f64,
    pub fluct_freq: f64,

    pub pll: PllConfig<f64>,
    pub lms_mu: f64,
    /// Compensator mode on payload buffers.
    pub payload_mode: LmsMode,

    pub n_lanes: usize,
    pub block_len: usize,
    pub pilot_period: usize,
    /// Leading buffers of known symbols, excluded from error counting.
    pub train_blocks: usize,
    pub schedule: LaneSchedule,

    pub bps: BpsConfig,

    pub rail_taps: usize,
    pub rail_mu: f64,

    pub fig2a: Fig2aGrid,
    pub fig2b: Fig2bGrid,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::Proposed,
            rails: true,
            n_symbols: 200_000,
            seed: 1,
            target_ber: 1e-3,
            osnr_db: 18.0,
            osnr_grid: vec![16.5, 17.5, 18.5, 19.5, 20.5],
            max_extensions: 4,
            baud: 32e9,
            b_ref: 12.5e9,
            eps_g: 0.0,
            phi_e_deg: 0.0,
            tau_over_t: 0.0,
            pulse: PulseSpec::default(),
            linewidth: 1e6,
            f_offset: 0.0,
            fluct_amp: 140e6,
            fluct_freq: 35e3,
            pll: PllConfig::default(),
            lms_mu: 0.01,
            payload_mode: LmsMode::PilotDirected,
            n_lanes: 16,
            block_len: 400,
            pilot_period: 100,
            train_blocks: 3,
            schedule: LaneSchedule::Parallel,
            bps: BpsConfig::default(),
            rail_taps: 11,
            rail_mu: 1e-3,
            fig2a: Fig2aGrid {
                phi_e_deg: vec![0.0, 5.0, 10.0, 15.0, 20.0],
                eps_g: vec![0.0, 0.05, 0.1, 0.15, 0.2],
                tau_over_t: 0.1,
            },
            fig2b: Fig2bGrid {
                tau_over_t: vec![-0.3, -0.25, -0.2, -0.15, -0.1, -0.05, 0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3],
                phi_e_deg: 10.0,
                eps_g: 0.1,
            },
        }
    }
}

/// Every recognised key, in echo order.
pub const KEYS: &[&str] = &[
    "run.scenario",
    "run.rails",
    "run.n_symbols",
    "run.seed",
    "run.target_ber",
    "run.osnr_db",
    "run.osnr_grid",
    "run.max_extensions",
    "link.baud",
    "link.b_ref",
    "tx.eps_g",
    "tx.phi_e_deg",
    "tx.tau_over_t",
    "tx.rolloff",
    "tx.half_span",
    "phase.linewidth",
    "phase.f_offset",
    "phase.fluct_amp",
    "phase.fluct_freq",
    "pll.kp",
    "pll.ki",
    "pll.d_l",
    "lms.mu",
    "lms.payload_mode",
    "ssp.n_lanes",
    "ssp.block_len",
    "ssp.pilot_period",
    "ssp.train_blocks",
    "ssp.schedule",
    "bps.window",
    "bps.n_test",
    "rails.taps",
    "rails.mu",
    "fig2a.phi_e_deg",
    "fig2a.eps_g",
    "fig2a.tau_over_t",
    "fig2b.tau_over_t",
    "fig2b.phi_e_deg",
    "fig2b.eps_g",
];

fn parse<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse `{value}`")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    let v = value.trim();
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| parse(key, s)).collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "on" | "1" | "yes" => Ok(true),
        "false" | "off" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got `{value}`"))),
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn mode_name(m: LmsMode) -> &'static str {
    match m {
        LmsMode::DecisionDirected => "decision",
        LmsMode::PilotDirected => "pilot",
        LmsMode::Frozen => "frozen",
    }
}

fn schedule_name(s: LaneSchedule) -> &'static str {
    match s {
        LaneSchedule::Sequential => "sequential",
        LaneSchedule::Reversed => "reversed",
        LaneSchedule::Parallel => "parallel",
    }
}

pub fn env_name(key: &str) -> String {
    format!("{ENV_PREFIX}{}", key.replace('.', "_").to_uppercase())
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "run.scenario" => self.scenario = value.parse()?,
            "run.rails" => self.rails = parse_bool(key, value)?,
            "run.n_symbols" => self.n_symbols = parse(key, value)?,
            "run.seed" => self.seed = parse(key, value)?,
            "run.target_ber" => self.target_ber = parse(key, value)?,
            "run.osnr_db" => self.osnr_db = parse(key, value)?,
            "run.osnr_grid" => self.osnr_grid = parse_list(key, value)?,
            "run.max_extensions" => self.max_extensions = parse(key, value)?,
            "link.baud" => self.baud = parse(key, value)?,
            "link.b_ref" => self.b_ref = parse(key, value)?,
            "tx.eps_g" => self.eps_g = parse(key, value)?,
            "tx.phi_e_deg" => self.phi_e_deg = parse(key, value)?,
            "tx.tau_over_t" => self.tau_over_t = parse(key, value)?,
            "tx.rolloff" => self.pulse.rolloff = parse(key, value)?,
            "tx.half_span" => self.pulse.half_span = parse(key, value)?,
            "phase.linewidth" => self.linewidth = parse(key, value)?,
            "phase.f_offset" => self.f_offset = parse(key, value)?,
            "phase.fluct_amp" => self.fluct_amp = parse(key, value)?,
            "phase.fluct_freq" => self.fluct_freq = parse(key, value)?,
            "pll.kp" => self.pll.kp = parse(key, value)?,
            "pll.ki" => self.pll.ki = parse(key, value)?,
            "pll.d_l" => self.pll.d_l = parse(key, value)?,
            "lms.mu" => self.lms_mu = parse(key, value)?,
            "lms.payload_mode" => {
                self.payload_mode = match value.trim() {
                    "decision" => LmsMode::DecisionDirected,
                    "pilot" => LmsMode::PilotDirected,
                    "frozen" => LmsMode::Frozen,
                    other => return Err(Error::Config(format!("{key}: unknown mode `{other}`"))),
                }
            }
            "ssp.n_lanes" => self.n_lanes = parse(key, value)?,
            "ssp.block_len" => self.block_len = parse(key, value)?,
            "ssp.pilot_period" => self.pilot_period = parse(key, value)?,
            "ssp.train_blocks" => self.train_blocks = parse(key, value)?,
            "ssp.schedule" => {
                self.schedule = match value.trim() {
                    "sequential" => LaneSchedule::Sequential,
                    "reversed" => LaneSchedule::Reversed,
                    "parallel" => LaneSchedule::Parallel,
                    other => return Err(Error::Config(format!("{key}: unknown schedule `{other}`"))),
                }
            }
            "bps.window" => self.bps.window = parse(key, value)?,
            "bps.n_test" => self.bps.n_test = parse(key, value)?,
            "rails.taps" => self.rail_taps = parse(key, value)?,
            "rails.mu" => self.rail_mu = parse(key, value)?,
            "fig2a.phi_e_deg" => self.fig2a.phi_e_deg = parse_list(key, value)?,
            "fig2a.eps_g" => self.fig2a.eps_g = parse_list(key, value)?,
            "fig2a.tau_over_t" => self.fig2a.tau_over_t = parse(key, value)?,
            "fig2b.tau_over_t" => self.fig2b.tau_over_t = parse_list(key, value)?,
            "fig2b.phi_e_deg" => self.fig2b.phi_e_deg = parse(key, value)?,
            "fig2b.eps_g" => self.fig2b.eps_g = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "run.scenario" => self.scenario.to_string(),
            "run.rails" => self.rails.to_string(),
            "run.n_symbols" => self.n_symbols.to_string(),
            "run.seed" => self.seed.to_string(),
            "run.target_ber" => self.target_ber.to_string(),
            "run.osnr_db" => self.osnr_db.to_string(),
            "run.osnr_grid" => join(&self.osnr_grid),
            "run.max_extensions" => self.max_extensions.to_string(),
            "link.baud" => self.baud.to_string(),
            "link.b_ref" => self.b_ref.to_string(),
            "tx.eps_g" => self.eps_g.to_string(),
            "tx.phi_e_deg" => self.phi_e_deg.to_string(),
            "tx.tau_over_t" => self.tau_over_t.to_string(),
            "tx.rolloff" => self.pulse.rolloff.to_string(),
            "tx.half_span" => self.pulse.half_span.to_string(),
            "phase.linewidth" => self.linewidth.to_string(),
            "phase.f_offset" => self.f_offset.to_string(),
            "phase.fluct_amp" => self.fluct_amp.to_string(),
            "phase.fluct_freq" => self.fluct_freq.to_string(),
            "pll.kp" => self.pll.kp.to_string(),
            "pll.ki" => self.pll.ki.to_string(),
            "pll.d_l" => self.pll.d_l.to_string(),
            "lms.mu" => self.lms_mu.to_string(),
            "lms.payload_mode" => mode_name(self.payload_mode).to_string(),
            "ssp.n_lanes" => self.n_lanes.to_string(),
            "ssp.block_len" => self.block_len.to_string(),
            "ssp.pilot_period" => self.pilot_period.to_string(),
            "ssp.train_blocks" => self.train_blocks.to_string(),
            "ssp.schedule" => schedule_name(self.schedule).to_string(),
            "bps.window" => self.bps.window.to_string(),
            "bps.n_test" => self.bps.n_test.to_string(),
            "rails.taps" => self.rail_taps.to_string(),
            "rails.mu" => self.rail_mu.to_string(),
            "fig2a.phi_e_deg" => join(&self.fig2a.phi_e_deg),
            "fig2a.eps_g" => join(&self.fig2a.eps_g),
            "fig2a.tau_over_t" => self.fig2a.tau_over_t.to_string(),
            "fig2b.tau_over_t" => join(&self.fig2b.tau_over_t),
            "fig2b.phi_e_deg" => self.fig2b.phi_e_deg.to_string(),
            "fig2b.eps_g" => self.fig2b.eps_g.to_string(),
            _ => return None,
        })
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", i + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        self.apply_text(&text)
    }

    /// Applies `CPRLAB_*` variables from `vars`; unrelated variables are ignored.
    pub fn apply_env<I, K, V>(&mut self, vars: I) -> Result<()>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let vars: Vec<(K, V)> = vars.into_iter().collect();
        for key in KEYS {
            let name = env_name(key);
            if let Some((_, v)) = vars.iter().find(|(k, _)| k.as_ref() == name) {
                self.set(key, v.as_ref())?;
            }
        }
        Ok(())
    }

    /// Full `key=value` echo; parsing it back yields an equal config.
    pub fn to_text(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k}={}\n", self.get(k).expect("known key")))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_symbols == 0 {
            return Err(Error::invalid("run.n_symbols", "must be positive"));
        }
        if !(self.target_ber > 0.0 && self.target_ber < 0.5) {
            return Err(Error::invalid("run.target_ber", "must lie in (0, 0.5)"));
        }
        if self.osnr_grid.is_empty() || self.osnr_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("run.osnr_grid", "must be non-empty and strictly increasing"));
        }
        if !(self.lms_mu >= 0.0) || !(self.rail_mu >= 0.0) {
            return Err(Error::invalid("lms.mu", "step sizes must be non-negative"));
        }
        self.tx_impairments().validate()?;
        self.phase_spec().validate()?;
        self.pll.validate()?;
        self.ssp_config()?.validate()?;
        self.bps.validate()?;
        if self.rail_taps % 2 == 0 {
            return Err(Error::invalid("rails.taps", "length must be odd"));
        }
        Ok(())
    }

    /// Non-fatal advisories about statistical resolution.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if (self.n_symbols as f64) < 100.0 / self.target_ber {
            w.push(format!(
                "run.n_symbols={} is below 100/target_ber={}; BER near the target is poorly resolved",
                self.n_symbols,
                100.0 / self.target_ber
            ));
        }
        w
    }

    pub fn symbol_period(&self) -> f64 {
        1.0 / self.baud
    }

    pub fn tx_impairments(&self) -> TxImpairments<f64> {
        TxImpairments {
            eps_g: self.eps_g,
            phi_e: self.phi_e_deg.to_radians(),
            tau_over_t: self.tau_over_t,
            pulse: self.pulse,
        }
    }

    pub fn phase_spec(&self) -> PhaseSpec {
        PhaseSpec {
            linewidth: self.linewidth,
            f_offset: self.f_offset,
            fluct_amp: self.fluct_amp,
            fluct_freq: self.fluct_freq,
            symbol_period: self.symbol_period(),
        }
    }

    pub fn noise_spec(&self, osnr_db: f64) -> NoiseSpec {
        NoiseSpec {
            osnr_db,
            b_ref: self.b_ref,
            baud: self.baud,
        }
    }

    pub fn ssp_config(&self) -> Result<SspConfig> {
        Ok(SspConfig {
            n_lanes: self.n_lanes,
            block_len: self.block_len,
            pilot_plan: PilotPlan::new(self.pilot_period)?,
            schedule: self.schedule,
        })
    }

    /// Same run with the Tx imbalance and skew removed.
    pub fn impairment_free(&self) -> Self {
        Self {
            eps_g: 0.0,
            phi_e_deg: 0.0,
            tau_over_t: 0.0,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("pll.kp=0.031\nrun.osnr_grid=15,16.25,17\nssp.schedule=reversed\nrun.rails=on\nrun.scenario=conventional\ntx.phi_e_deg=15")
            .unwrap();
        let mut back = RunConfig::default();
        back.apply_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.pll.kp, 0.031);
        assert_eq!(back.osnr_grid, vec![15.0, 16.25, 17.0]);
        assert!(back.rails);
    }

    #[test]
    fn every_key_is_settable_and_echoed() {
        let cfg = RunConfig::default();
        for k in KEYS {
            let v = cfg.get(k).unwrap();
            let mut c = RunConfig::default();
            c.set(k, &v).unwrap();
            assert_eq!(c, cfg, "{k}");
        }
    }

    #[test]
    fn comments_and_errors() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("# comment\n\n  bps.window = 20  \n").unwrap();
        assert_eq!(cfg.bps.window, 20);
        assert!(cfg.apply_text("nonsense").is_err());
        assert!(cfg.apply_text("foo.bar=1").is_err());
        assert!(cfg.apply_text("pll.kp=abc").is_err());
        assert!(cfg.apply_text("run.scenario=fancy").is_err());
    }

    #[test]
    fn env_overrides() {
        assert_eq!(env_name("pll.kp"), "CPRLAB_PLL_KP");
        let mut cfg = RunConfig::default();
        cfg.apply_env([("CPRLAB_PLL_KP", "0.05"), ("CPRLAB_RUN_SEED", "77"), ("HOME", "/x")])
            .unwrap();
        assert_eq!(cfg.pll.kp, 0.05);
        assert_eq!(cfg.seed, 77);
    }

    #[test]
    fn validation() {
        assert!(RunConfig::default().validate().is_ok());
        let mut cfg = RunConfig::default();
        cfg.osnr_grid = vec![17.0, 16.0];
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.block_len = 250;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.n_symbols = 1000;
        assert_eq!(cfg.warnings().len(), 1);
        assert!(RunConfig::default().warnings().is_empty());
    }
}
