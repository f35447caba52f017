//! Binary checkpoint format for weight sets.
//!
//! Layout, all integers little-endian:
//!   magic "BPTW" | format version u16 | parameter count u32 |
//!   layout descriptor length u32 | layout descriptor bytes (ASCII) |
//!   parameters as f64 | CRC32 over all preceding bytes.
//!
//! The layout descriptor is a `;`-separated list of layer entries:
//! `conv,<filters>,<depth>,<height>,<width>`, `pool`, or
//! `dense,<fan_out>,<fan_in>`.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::CheckpointError;
use crate::params::{LayerLayout, ParameterSet};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"BPTW";
pub const CHECKPOINT_VERSION: u16 = 1;

fn encode_layout(layout: &[LayerLayout]) -> String {
    layout
        .iter()
        .map(|l| match *l {
            LayerLayout::Conv {
                filters,
                depth,
                height,
                width,
            } => format!("conv,{filters},{depth},{height},{width}"),
            LayerLayout::Pool => "pool".to_string(),
            LayerLayout::Dense { fan_out, fan_in } => format!("dense,{fan_out},{fan_in}"),
        })
        .collect::<Vec<_>>()
        .join(";")
}

fn decode_layout(text: &str) -> Result<Vec<LayerLayout>, CheckpointError> {
    if text.is_empty() {
        return Ok(Vec::new());
    }
    text.split(';')
        .map(|entry| {
            let mut parts = entry.split(',');
            let kind = parts.next().unwrap_or("");
            let mut next_num = || -> Result<usize, CheckpointError> {
                parts
                    .next()
                    .and_then(|p| p.parse().ok())
                    .ok_or_else(|| CheckpointError::BadLayout(entry.to_string()))
            };
            match kind {
                "conv" => Ok(LayerLayout::Conv {
                    filters: next_num()?,
                    depth: next_num()?,
                    height: next_num()?,
                    width: next_num()?,
                }),
                "pool" => Ok(LayerLayout::Pool),
                "dense" => Ok(LayerLayout::Dense {
                    fan_out: next_num()?,
                    fan_in: next_num()?,
                }),
                _ => Err(CheckpointError::BadLayout(entry.to_string())),
            }
        })
        .collect()
}

/// Serializes a parameter set into the checkpoint byte format.
pub fn to_bytes(params: &ParameterSet<f64>) -> Vec<u8> {
    let layout_text = encode_layout(params.layout());
    let mut buf = Vec::with_capacity(18 + layout_text.len() + params.len() * 8);
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(layout_text.len() as u32).to_le_bytes());
    buf.extend_from_slice(layout_text.as_bytes());
    for v in params.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

/// Parses checkpoint bytes back into a parameter set, verifying the CRC.
pub fn from_bytes(bytes: &[u8]) -> Result<ParameterSet<f64>, CheckpointError> {
    let need = |have: usize, want: usize| -> Result<(), CheckpointError> {
        if have < want {
            Err(CheckpointError::Truncated { needed: want - have })
        } else {
            Ok(())
        }
    };
    need(bytes.len(), 14)?;
    if &bytes[0..4] != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let count = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let layout_len = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let total = 14 + layout_len + count * 8 + 4;
    need(bytes.len(), total)?;
    let body_end = total - 4;
    let stored = u32::from_le_bytes(bytes[body_end..total].try_into().unwrap());
    let computed = crc32fast::hash(&bytes[..body_end]);
    if stored != computed {
        return Err(CheckpointError::CrcMismatch { stored, computed });
    }
    let layout_text = std::str::from_utf8(&bytes[14..14 + layout_len])
        .map_err(|_| CheckpointError::BadLayout("non-utf8 layout".to_string()))?;
    let layout = decode_layout(layout_text)?;
    let mut values = Vec::with_capacity(count);
    let mut off = 14 + layout_len;
    for _ in 0..count {
        values.push(f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()));
        off += 8;
    }
    ParameterSet::new(values, layout)
        .map_err(|_| CheckpointError::BadLayout("parameter count disagrees with layout".into()))
}

pub fn save<P: AsRef<Path>>(path: P, params: &ParameterSet<f64>) -> Result<(), CheckpointError> {
    let mut f = File::create(path)?;
    f.write_all(&to_bytes(params))?;
    Ok(())
}

pub fn load<P: AsRef<Path>>(path: P) -> Result<ParameterSet<f64>, CheckpointError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    from_bytes(&bytes)
}
