//! Float32 file formats accepted by `pack` and written by `unpack`.
//!
//! Raw files are a flat sequence of little-endian `f32`. Text files (any
//! name ending in `.csv`) hold decimal floats separated by commas or
//! whitespace; blank lines and lines starting with `#` are skipped. Text
//! output writes one value per line using the shortest round-trip form.

use std::fmt::Write as _;
use std::path::Path;

fn is_text(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

pub fn decode(path: &Path, bytes: &[u8]) -> Result<Vec<f32>, String> {
    if is_text(path) {
        parse_text(bytes)
    } else {
        if !bytes.len().is_multiple_of(4) {
            return Err(format!(
                "raw float32 file has {} bytes, not a multiple of 4 (stray bytes at offset {})",
                bytes.len(),
                bytes.len() - bytes.len() % 4
            ));
        }
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

fn parse_text(bytes: &[u8]) -> Result<Vec<f32>, String> {
    let text = std::str::from_utf8(bytes).map_err(|e| format!("not UTF-8: {e}"))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        for tok in line.split(|c: char| c == ',' || c.is_whitespace()) {
            if tok.is_empty() {
                continue;
            }
            let v: f32 = tok
                .parse()
                .map_err(|_| format!("line {}: cannot parse {tok:?} as a float", i + 1))?;
            out.push(v);
        }
    }
    Ok(out)
}

pub fn encode(path: &Path, weights: &[f32]) -> Vec<u8> {
    if is_text(path) {
        let mut s = String::with_capacity(weights.len() * 12);
        for w in weights {
            let _ = writeln!(s, "{w:?}");
        }
        s.into_bytes()
    } else {
        weights.iter().flat_map(|w| w.to_le_bytes()).collect()
    }
}
