//! Binary measure and Fourier-table files, and canonical JSON.
//!
//! Measure files start with `FCM1`, then `n` and `res` as `u32`, the half
//! width as `f64`, then the `resⁿ` cell masses in row-major order. Table
//! files start with `FCT1`, then `n` and `xi_max` as `u32`, the spacing as
//! `f64`, then interleaved `(re, im)` pairs in lexicographic `ξ` order. All
//! fields are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::fourier::FourierTable;
use crate::measures::GridMeasure;

pub const MEASURE_MAGIC: &[u8; 4] = b"FCM1";
pub const TABLE_MAGIC: &[u8; 4] = b"FCT1";
/// Largest cell or coefficient count accepted from a file.
const MAX_ENTRIES: usize = 1 << 31;

fn read_magic(r: &mut impl Read, magic: &[u8; 4]) -> Result<()> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    if &buf != magic {
        return Err(Error::Format(format!(
            "bad magic {buf:?}, expected {:?}",
            std::str::from_utf8(magic).unwrap_or("?")
        )));
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn read_f64s(r: &mut impl Read, count: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes)?;
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(Error::Format("trailing bytes after payload".into()));
    }
    Ok(values)
}

fn entry_count(n: u32, side: u64) -> Result<usize> {
    if n == 0 || n > 8 {
        return Err(Error::Format(format!("dimension {n} outside 1..=8")));
    }
    side.checked_pow(n)
        .filter(|&c| c as usize <= MAX_ENTRIES)
        .map(|c| c as usize)
        .ok_or_else(|| Error::Format("payload too large".into()))
}

pub fn write_measure(w: &mut impl Write, mu: &GridMeasure) -> Result<()> {
    w.write_all(MEASURE_MAGIC)?;
    w.write_all(&(mu.n as u32).to_le_bytes())?;
    w.write_all(&(mu.res as u32).to_le_bytes())?;
    w.write_all(&mu.halfwidth.to_le_bytes())?;
    for m in &mu.mass {
        w.write_all(&m.to_le_bytes())?;
    }
    Ok(())
}

/// Seed and target dimension are not stored; they come back as `0` and `None`.
pub fn read_measure(r: &mut impl Read) -> Result<GridMeasure> {
    read_magic(r, MEASURE_MAGIC)?;
    let n = read_u32(r)?;
    let res = read_u32(r)?;
    let halfwidth = read_f64(r)?;
    if res == 0 || !(halfwidth > 0.0 && halfwidth.is_finite()) {
        return Err(Error::Format(format!(
            "invalid grid res {res}, halfwidth {halfwidth}"
        )));
    }
    let mass = read_f64s(r, entry_count(n, res as u64)?)?;
    if mass.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
        return Err(Error::Format(
            "cell masses must be finite and non-negative".into(),
        ));
    }
    Ok(GridMeasure {
        n: n as usize,
        halfwidth,
        res: res as usize,
        mass,
        seed: 0,
        target_dimension: None,
    })
}

pub fn write_table(w: &mut impl Write, table: &FourierTable) -> Result<()> {
    w.write_all(TABLE_MAGIC)?;
    w.write_all(&(table.n as u32).to_le_bytes())?;
    w.write_all(&(table.xi_max as u32).to_le_bytes())?;
    w.write_all(&table.spacing.to_le_bytes())?;
    for v in &table.values {
        w.write_all(&v.re.to_le_bytes())?;
        w.write_all(&v.im.to_le_bytes())?;
    }
    Ok(())
}

/// The envelope is not stored.
pub fn read_table(r: &mut impl Read) -> Result<FourierTable> {
    read_magic(r, TABLE_MAGIC)?;
    let n = read_u32(r)?;
    let xi_max = read_u32(r)?;
    let spacing = read_f64(r)?;
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::Format(format!("invalid spacing {spacing}")));
    }
    let count = entry_count(n, 2 * xi_max as u64 + 1)?;
    let raw = read_f64s(r, 2 * count)?;
    let values = raw
        .chunks_exact(2)
        .map(|p| Complex64::new(p[0], p[1]))
        .collect();
    Ok(FourierTable {
        n: n as usize,
        xi_max: xi_max as usize,
        spacing,
        values,
        envelope: None,
    })
}

pub fn save_measure(path: &Path, mu: &GridMeasure) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_measure(&mut w, mu)?;
    w.flush()?;
    Ok(())
}

pub fn load_measure(path: &Path) -> Result<GridMeasure> {
    read_measure(&mut BufReader::new(File::open(path)?))
}

pub fn save_table(path: &Path, table: &FourierTable) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_table(&mut w, table)?;
    w.flush()?;
    Ok(())
}

pub fn load_table(path: &Path) -> Result<FourierTable> {
    read_table(&mut BufReader::new(File::open(path)?))
}

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "\"nan\"".into()
    } else if x > 0.0 {
        "\"inf\"".into()
    } else {
        "\"-inf\"".into()
    }
}

fn write_canonical(v: &Value, out: &mut String) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(num) => {
            if let Some(i) = num.as_i64() {
                out.push_str(&i.to_string());
            } else if let Some(u) = num.as_u64() {
                out.push_str(&u.to_string());
            } else {
                out.push_str(&format_float(num.as_f64().unwrap_or(f64::NAN)));
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(key.clone()).to_string());
                out.push(':');
                write_canonical(&map[key], out);
            }
            out.push('}');
        }
    }
}

/// Compact JSON with sorted keys and every non-integer as `{:.16e}`.
pub fn canonical_json(v: &Value) -> String {
    let mut out = String::new();
    write_canonical(v, &mut out);
    out
}

pub fn to_canonical<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::Format(e.to_string()))?;
    Ok(canonical_json(&v))
}

/// Float for a JSON report, keeping infinities visible as strings.
pub fn json_float(x: f64) -> Value {
    if x.is_finite() {
        Value::from(x)
    } else {
        Value::String(format_float(x).trim_matches('"').to_string())
    }
}
