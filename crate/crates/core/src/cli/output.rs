//! Binary field files, CSV logs and JSON reports.
//!
//! Field file layout (little endian): `b"FBLF"`, `u32` version 1, `u8` N,
//! `f64` s, `f64` L, `u32` M, then `M^N` `f64` values, row-major with the
//! last axis fastest.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec};

const MAGIC: &[u8; 4] = b"FBLF";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 1 + 8 + 8 + 4;

pub fn encode_field(u: &Field) -> Vec<u8> {
    let g = u.grid();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * u.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(g.dimension() as u8);
    out.extend_from_slice(&g.order().to_le_bytes());
    out.extend_from_slice(&g.box_length().to_le_bytes());
    out.extend_from_slice(&(g.points_per_axis() as u32).to_le_bytes());
    for v in u.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_field(bytes: &[u8]) -> Result<Field> {
    let bad = |msg: &str| Error::Format(msg.to_string());
    if bytes.len() < HEADER_LEN {
        return Err(bad("file shorter than the header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(bad("missing FBLF magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let version = u32_at(4);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let n = bytes[8] as usize;
    let s = f64_at(9);
    let l = f64_at(17);
    let m = u32_at(25) as usize;
    let grid = GridSpec::new(n, s, l, m).map_err(|e| Error::Format(format!("bad header: {e}")))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != 8 * grid.len() {
        return Err(Error::Format(format!(
            "expected {} value bytes, found {}",
            8 * grid.len(),
            body.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Field::new(grid, values).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_field(path: &Path, u: &Field) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    f.write_all(&encode_field(u))?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<Field> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?
        .read_to_end(&mut bytes)?;
    decode_field(&bytes)
}

/// 17 significant digits; non-finite values become `nan`/`inf`/`-inf`.
pub fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Ordered JSON object builder; keys keep insertion order.
#[derive(Debug, Default, Clone)]
pub struct JsonObject {
    entries: Vec<(String, JsonValue)>,
}

#[derive(Debug, Clone)]
enum JsonValue {
    Raw(String),
    Object(JsonObject),
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn json_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".into()
    }
}

impl JsonObject {
    pub fn new() -> Self {
        Self::default()
    }

    fn raw(mut self, key: &str, v: String) -> Self {
        self.entries.push((key.into(), JsonValue::Raw(v)));
        self
    }

    /// Non-finite numbers become `null`.
    pub fn num(self, key: &str, x: f64) -> Self {
        self.raw(key, json_num(x))
    }

    pub fn int(self, key: &str, x: u64) -> Self {
        self.raw(key, x.to_string())
    }

    pub fn bool(self, key: &str, x: bool) -> Self {
        self.raw(key, x.to_string())
    }

    pub fn str(self, key: &str, x: &str) -> Self {
        self.raw(key, escape(x))
    }

    pub fn null(self, key: &str) -> Self {
        self.raw(key, "null".into())
    }

    pub fn array(self, key: &str, xs: &[f64]) -> Self {
        let items: Vec<String> = xs.iter().map(|&x| json_num(x)).collect();
        self.raw(key, format!("[{}]", items.join(", ")))
    }

    pub fn object(mut self, key: &str, obj: JsonObject) -> Self {
        self.entries.push((key.into(), JsonValue::Object(obj)));
        self
    }

    fn render(&self, depth: usize, out: &mut String) {
        if self.entries.is_empty() {
            out.push_str("{}");
            return;
        }
        out.push_str("{\n");
        for (i, (k, v)) in self.entries.iter().enumerate() {
            out.push_str(&"  ".repeat(depth + 1));
            out.push_str(&escape(k));
            out.push_str(": ");
            match v {
                JsonValue::Raw(text) => out.push_str(text),
                JsonValue::Object(o) => o.render(depth + 1, out),
            }
            if i + 1 < self.entries.len() {
                out.push(',');
            }
            out.push('\n');
        }
        out.push_str(&"  ".repeat(depth));
        out.push('}');
    }

    pub fn to_json(&self) -> String {
        let mut s = String::new();
        self.render(0, &mut s);
        s.push('\n');
        s
    }
}
