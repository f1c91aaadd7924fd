//! Snapshot files for distribution fields.
//!
//! Binary layout, all little-endian:
//!
//! | offset | type      | content                      |
//! |--------|-----------|------------------------------|
//! | 0      | `[u8; 8]` | magic `BGKSNAP1`             |
//! | 8      | `u64`     | `n_x`                        |
//! | 16     | `u64`     | `n_v`                        |
//! | 24     | `f64`     | torus length                 |
//! | 32     | `f64`     | `v_max`                      |
//! | 40     | `f64`     | time                         |
//! | 48     | `f64` * `n_x * n_v` | values, x-major (`i * n_v + j`) |
//!
//! The CSV variant has a header line `n_x,n_v,length,v_max,time`, one line
//! with those values, then one line of `n_v` values per x-cell. Floats are
//! written in shortest round-trip form, so both formats are loss-free.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::field::DistributionField;
use crate::error::{Error, Result};
use crate::grid::build_phase_grid;

const MAGIC: &[u8; 8] = b"BGKSNAP1";
const HEADER_LEN: usize = 48;

/// A distribution field tagged with its time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub field: DistributionField,
}

pub fn encode_binary(snap: &Snapshot) -> Vec<u8> {
    let g = &snap.field.grid;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * snap.field.values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(g.n_x() as u64).to_le_bytes());
    out.extend_from_slice(&(g.n_v() as u64).to_le_bytes());
    out.extend_from_slice(&g.x.length.to_le_bytes());
    out.extend_from_slice(&g.v.v_max.to_le_bytes());
    out.extend_from_slice(&snap.time.to_le_bytes());
    for v in &snap.field.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_binary(bytes: &[u8]) -> std::result::Result<Snapshot, String> {
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return Err("not a snapshot file (bad magic)".into());
    }
    let word = |k: usize| -> [u8; 8] { bytes[8 + 8 * k..16 + 8 * k].try_into().unwrap() };
    let n_x = u64::from_le_bytes(word(0)) as usize;
    let n_v = u64::from_le_bytes(word(1)) as usize;
    let length = f64::from_le_bytes(word(2));
    let v_max = f64::from_le_bytes(word(3));
    let time = f64::from_le_bytes(word(4));
    let count = n_x.checked_mul(n_v).ok_or("grid size overflow")?;
    if bytes.len() != HEADER_LEN + 8 * count {
        return Err(format!(
            "expected {} bytes of values, found {}",
            8 * count,
            bytes.len() - HEADER_LEN
        ));
    }
    let grid = build_phase_grid(n_x, n_v, length, v_max).map_err(|e| e.to_string())?;
    let values = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let field = DistributionField::from_values(grid, values).map_err(|e| e.to_string())?;
    Ok(Snapshot { time, field })
}

pub fn write_binary(path: &Path, snap: &Snapshot) -> Result<()> {
    fs::write(path, encode_binary(snap)).map_err(|e| Error::io(path, e))
}

pub fn read_binary(path: &Path) -> Result<Snapshot> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_binary(&bytes).map_err(|m| Error::format(path, m))
}

pub fn encode_csv(snap: &Snapshot) -> String {
    let g = &snap.field.grid;
    let mut s = String::from("n_x,n_v,length,v_max,time\n");
    s.push_str(&format!(
        "{},{},{},{},{}\n",
        g.n_x(),
        g.n_v(),
        g.x.length,
        g.v.v_max,
        snap.time
    ));
    for col in snap.field.columns() {
        let line: Vec<String> = col.iter().map(|v| v.to_string()).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

pub fn decode_csv(text: &str) -> std::result::Result<Snapshot, String> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("n_x,n_v,length,v_max,time") {
        return Err("missing snapshot header".into());
    }
    let head: Vec<&str> = lines.next().ok_or("missing header values")?.split(',').collect();
    if head.len() != 5 {
        return Err("header needs 5 values".into());
    }
    let parse_f = |s: &str| s.trim().parse::<f64>().map_err(|e| format!("{s}: {e}"));
    let parse_u = |s: &str| s.trim().parse::<usize>().map_err(|e| format!("{s}: {e}"));
    let (n_x, n_v) = (parse_u(head[0])?, parse_u(head[1])?);
    let grid = build_phase_grid(n_x, n_v, parse_f(head[2])?, parse_f(head[3])?).map_err(|e| e.to_string())?;
    let time = parse_f(head[4])?;
    let mut values = Vec::with_capacity(n_x * n_v);
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let row = line.split(',').map(parse_f).collect::<std::result::Result<Vec<_>, _>>()?;
        if row.len() != n_v {
            return Err(format!("row with {} values, expected {n_v}", row.len()));
        }
        values.extend(row);
    }
    let field = DistributionField::from_values(grid, values).map_err(|e| e.to_string())?;
    Ok(Snapshot { time, field })
}

pub fn write_csv(path: &Path, snap: &Snapshot) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(encode_csv(snap).as_bytes())
        .map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<Snapshot> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode_csv(&text).map_err(|m| Error::format(path, m))
}
