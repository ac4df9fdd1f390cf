//! File formats: JSON documents with a `meta` block and CSV tables.
//!
//! Floats are written with 17 significant digits so every value reads back
//! bit-for-bit.

use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;

use bloch_pulse::{PulseSpec, Vec3};

use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// `serde_json` compact formatter with fixed-width scientific floats.
struct ExactFloats;

impl Formatter for ExactFloats {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{}", float(value))
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn to_json<T: Serialize>(doc: &T) -> Result<String, CliError> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, ExactFloats);
    doc.serialize(&mut ser)
        .map_err(|e| CliError::Failed(format!("serialization failed: {e}")))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

/// Rows `t,x,y,z` under `header`.
pub fn to_csv(header: &str, rows: &[[f64; 4]]) -> String {
    let mut out = String::with_capacity(rows.len() * 100);
    out.push_str(header);
    out.push('\n');
    for r in rows {
        let cells: Vec<String> = r.iter().map(|v| float(*v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Writes to `path`, or stdout when absent.
pub fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|source| CliError::Io {
            path: p.display().to_string(),
            source,
        }),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|source| CliError::Io {
                    path: "<stdout>".into(),
                    source,
                })
        }
    }
}

pub fn rows<I: IntoIterator<Item = (f64, Vec3)>>(samples: I) -> Vec<[f64; 4]> {
    samples
        .into_iter()
        .map(|(t, v)| [t, v.x, v.y, v.z])
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Document<M> {
    pub meta: M,
    pub samples: Vec<[f64; 4]>,
}

/// The parts of a pulse file that `simulate` reads back.
#[derive(Debug, Default, Deserialize)]
pub struct PulseFileMeta {
    #[serde(default)]
    pub spec: Option<PulseSpec>,
    #[serde(default)]
    pub s_i: Option<[f64; 3]>,
    #[serde(default)]
    pub s_f: Option<[f64; 3]>,
}

pub struct PulseFile {
    pub meta: PulseFileMeta,
    pub samples: Vec<(f64, Vec3)>,
}

/// Reads a pulse file written by `synth`, as JSON or as a `t,bx,by,bz` CSV.
pub fn read_pulse_file(path: &Path) -> Result<PulseFile, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    if text.trim_start().starts_with('{') {
        let doc: Document<PulseFileMeta> =
            serde_json::from_str(&text).map_err(|e| CliError::Schema(e.to_string()))?;
        let samples = doc
            .samples
            .iter()
            .map(|r| (r[0], Vec3::new(r[1], r[2], r[3])))
            .collect();
        Ok(PulseFile {
            meta: doc.meta,
            samples,
        })
    } else {
        Ok(PulseFile {
            meta: PulseFileMeta::default(),
            samples: parse_csv(&text)?,
        })
    }
}

fn parse_csv(text: &str) -> Result<Vec<(f64, Vec3)>, CliError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().unwrap_or("");
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    if names != ["t", "bx", "by", "bz"] {
        return Err(CliError::Schema(format!(
            "expected CSV header `t,bx,by,bz`, found `{header}`"
        )));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let cells: Vec<f64> = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| CliError::Schema(format!("row {}: {e}", i + 2)))?;
            match cells[..] {
                [t, x, y, z] => Ok((t, Vec3::new(x, y, z))),
                _ => Err(CliError::Schema(format!(
                    "row {} has {} cells, expected 4",
                    i + 2,
                    cells.len()
                ))),
            }
        })
        .collect()
}
