//! CSV rows and their on-disk form.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::RunConfig;

pub const POINTS_HEADER: &str = "scenario,phi_e_deg,eps_g,tau_over_T,osnr_db,ber,n_symbols,n_errors,seed";
pub const PENALTY_HEADER: &str = "scenario,phi_e_deg,eps_g,tau_over_T,osnr_at_target_db,penalty_db,flag";

/// One measured BER point. `n_errors` counts bit errors over `n_symbols`
/// payload symbols of 4 bits each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointRow {
    pub scenario: String,
    pub phi_e_deg: f64,
    pub eps_g: f64,
    #[serde(rename = "tau_over_T")]
    pub tau_over_t: f64,
    pub osnr_db: f64,
    pub ber: f64,
    pub n_symbols: u64,
    pub n_errors: u64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyRow {
    pub scenario: String,
    pub phi_e_deg: f64,
    pub eps_g: f64,
    #[serde(rename = "tau_over_T")]
    pub tau_over_t: f64,
    pub osnr_at_target_db: Option<f64>,
    pub penalty_db: Option<f64>,
    pub flag: String,
}

fn write_rows<W: Write, S: Serialize>(w: W, header: &str, rows: &[S]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wtr.write_record(header.split(','))?;
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

fn read_rows<R: Read, D: for<'de> Deserialize<'de>>(r: R, header: &str) -> Result<Vec<D>> {
    let mut rdr = csv::Reader::from_reader(r);
    let got = rdr.headers()?.iter().collect::<Vec<_>>().join(",");
    if got != header {
        return Err(Error::Config(format!("unexpected CSV header `{got}`")));
    }
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn write_points<W: Write>(w: W, rows: &[PointRow]) -> Result<()> {
    write_rows(w, POINTS_HEADER, rows)
}

pub fn read_points<R: Read>(r: R) -> Result<Vec<PointRow>> {
    read_rows(r, POINTS_HEADER)
}

pub fn write_penalties<W: Write>(w: W, rows: &[PenaltyRow]) -> Result<()> {
    write_rows(w, PENALTY_HEADER, rows)
}

pub fn read_penalties<R: Read>(r: R) -> Result<Vec<PenaltyRow>> {
    read_rows(r, PENALTY_HEADER)
}

/// Writes `points.csv`, optionally `penalty.csv`, and `config.txt` (the full
/// configuration echo) into `dir`.
pub fn write_outputs(dir: &Path, cfg: &RunConfig, points: &[PointRow], penalties: Option<&[PenaltyRow]>) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_points(fs::File::create(dir.join("points.csv"))?, points)?;
    if let Some(p) = penalties {
        write_penalties(fs::File::create(dir.join("penalty.csv"))?, p)?;
    }
    fs::write(dir.join("config.txt"), cfg.to_text())?;
    Ok(())
}
