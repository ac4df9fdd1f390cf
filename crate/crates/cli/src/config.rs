use std::path::PathBuf;

use bloch_pulse::oracle::DEFAULT_SEED;
use bloch_pulse::{BlochVector, Family, Vec3};

use crate::error::CliError;

pub const SEED_ENV: &str = "BLOCH_PULSE_SEED";
pub const MIN_GRID: usize = 100;
/// Inputs further than this from unit length are normalized with a warning.
const UNIT_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    Csv,
}

/// Everything a subcommand needs, validated.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub s_i: BlochVector,
    pub s_f: BlochVector,
    pub family: Family,
    pub branch_n: i64,
    pub a: f64,
    pub omega: f64,
    pub mu: f64,
    pub grid_n: usize,
    pub seed: u64,
    pub output_format: OutputFormat,
    pub output_path: Option<PathBuf>,
    pub warnings: Vec<String>,
}

/// Parses `x,y,z` into a vector without normalizing.
pub fn parse_vector(text: &str) -> Result<Vec3, CliError> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(CliError::Usage(format!(
            "expected three comma-separated components, got `{text}`"
        )));
    }
    let mut c = [0.0; 3];
    for (slot, part) in c.iter_mut().zip(&parts) {
        let v: f64 = part
            .parse()
            .map_err(|_| CliError::Usage(format!("`{part}` is not a number in `{text}`")))?;
        if !v.is_finite() {
            return Err(CliError::Usage(format!("non-finite component in `{text}`")));
        }
        *slot = v;
    }
    Ok(Vec3::new(c[0], c[1], c[2]))
}

/// Parses a state and normalizes it, recording a warning when it was
/// noticeably off the unit sphere.
pub fn parse_state(name: &str, text: &str, warnings: &mut Vec<String>) -> Result<Vec3, CliError> {
    let v = parse_vector(text)?;
    let norm = v.norm();
    let unit = v
        .normalize()
        .ok_or_else(|| CliError::Usage(format!("{name} must be nonzero")))?;
    if (norm - 1.0).abs() > UNIT_SLACK {
        warnings.push(format!("{name} had norm {norm}; normalized"));
    }
    Ok(unit)
}

/// Explicit flag, then `BLOCH_PULSE_SEED`, then the default.
pub fn resolve_seed(flag: Option<u64>) -> Result<u64, CliError> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var(SEED_ENV) {
        Ok(text) => text
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV}=`{text}` is not a seed"))),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

pub fn check_grid(grid_n: usize) -> Result<usize, CliError> {
    if grid_n < MIN_GRID {
        return Err(CliError::Usage(format!(
            "--grid-n must be at least {MIN_GRID}, got {grid_n}"
        )));
    }
    Ok(grid_n)
}

pub fn check_positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(CliError::Usage(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

/// Comma-separated reals.
pub fn parse_list(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|p| {
            let p = p.trim();
            p.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Usage(format!("`{p}` is not a finite number")))
        })
        .collect()
}

pub fn parse_int_list(text: &str) -> Result<Vec<i64>, CliError> {
    text.split(',')
        .map(|p| {
            let p = p.trim();
            p.parse::<i64>()
                .map_err(|_| CliError::Usage(format!("`{p}` is not an integer")))
        })
        .collect()
}
