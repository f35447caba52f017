//! Framed byte-stream protocol between cluster roles.
//!
//! Frame layout, integers little-endian:
//!   magic "BPTC" (4) | type u8 | payload length u32 | payload | CRC32 u32
//! with the CRC computed over everything from the magic through the payload.
//!
//! Payloads:
//!   0 Register    worker_id u32, frequency f64
//!   1 AllocBatch  batch u16, count u32, count x (start u64, end u64)
//!   2 GlobalWeights  version u32, count u32, count x f64
//!   3 LocalSubmit    worker u32, base_version u32, count u32, count x f64,
//!                    accuracy f64, duration f64
//!   4 IterTime    worker u32, iter u32, duration f64
//!   5 Shutdown    (empty)

use std::io::{Read, Write};

use crate::error::WireError;

pub const WIRE_MAGIC: &[u8; 4] = b"BPTC";
const HEADER_LEN: usize = 9;
pub const MAX_PAYLOAD: u64 = u32::MAX as u64;

#[derive(Debug, Clone, PartialEq)]
pub enum WireMessage {
    Register {
        worker: u32,
        frequency: f64,
    },
    AllocBatch {
        batch: u16,
        ranges: Vec<(u64, u64)>,
    },
    GlobalWeights {
        version: u32,
        values: Vec<f64>,
    },
    LocalSubmit {
        worker: u32,
        base_version: u32,
        values: Vec<f64>,
        accuracy: f64,
        duration: f64,
    },
    IterTime {
        worker: u32,
        iter: u32,
        duration: f64,
    },
    Shutdown,
}

impl WireMessage {
    pub fn type_byte(&self) -> u8 {
        match self {
            WireMessage::Register { .. } => 0,
            WireMessage::AllocBatch { .. } => 1,
            WireMessage::GlobalWeights { .. } => 2,
            WireMessage::LocalSubmit { .. } => 3,
            WireMessage::IterTime { .. } => 4,
            WireMessage::Shutdown => 5,
        }
    }

    fn payload_len(&self) -> usize {
        match self {
            WireMessage::Register { .. } => 4 + 8,
            WireMessage::AllocBatch { ranges, .. } => 2 + 4 + ranges.len() * 16,
            WireMessage::GlobalWeights { values, .. } => 4 + 4 + values.len() * 8,
            WireMessage::LocalSubmit { values, .. } => 4 + 4 + 4 + values.len() * 8 + 8 + 8,
            WireMessage::IterTime { .. } => 4 + 4 + 8,
            WireMessage::Shutdown => 0,
        }
    }

    /// Total frame size on the wire, header and CRC included.
    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload_len() + 4
    }
}

/// Serializes a message into one self-delimiting frame.
pub fn encode_message(msg: &WireMessage) -> Vec<u8> {
    let payload_len = msg.payload_len();
    let mut buf = Vec::with_capacity(HEADER_LEN + payload_len + 4);
    buf.extend_from_slice(WIRE_MAGIC);
    buf.push(msg.type_byte());
    buf.extend_from_slice(&(payload_len as u32).to_le_bytes());
    match msg {
        WireMessage::Register { worker, frequency } => {
            buf.extend_from_slice(&worker.to_le_bytes());
            buf.extend_from_slice(&frequency.to_le_bytes());
        }
        WireMessage::AllocBatch { batch, ranges } => {
            buf.extend_from_slice(&batch.to_le_bytes());
            buf.extend_from_slice(&(ranges.len() as u32).to_le_bytes());
            for (start, end) in ranges {
                buf.extend_from_slice(&start.to_le_bytes());
                buf.extend_from_slice(&end.to_le_bytes());
            }
        }
        WireMessage::GlobalWeights { version, values } => {
            buf.extend_from_slice(&version.to_le_bytes());
            buf.extend_from_slice(&(values.len() as u32).to_le_bytes());
            for v in values {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        WireMessage::LocalSubmit {
            worker,
            base_version,
            values,
            accuracy,
            duration,
        } => {
            buf.extend_from_slice(&worker.to_le_bytes());
            buf.extend_from_slice(&base_version.to_le_bytes());
            buf.extend_from_slice(&(values.len() as u32).to_le_bytes());
            for v in values {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            buf.extend_from_slice(&accuracy.to_le_bytes());
            buf.extend_from_slice(&duration.to_le_bytes());
        }
        WireMessage::IterTime {
            worker,
            iter,
            duration,
        } => {
            buf.extend_from_slice(&worker.to_le_bytes());
            buf.extend_from_slice(&iter.to_le_bytes());
            buf.extend_from_slice(&duration.to_le_bytes());
        }
        WireMessage::Shutdown => {}
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    kind: &'static str,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.pos + n > self.bytes.len() {
            return Err(WireError::PayloadShape {
                kind: self.kind,
                expected: self.pos + n,
                got: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, WireError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn finish(&self) -> Result<(), WireError> {
        if self.pos != self.bytes.len() {
            return Err(WireError::PayloadShape {
                kind: self.kind,
                expected: self.pos,
                got: self.bytes.len(),
            });
        }
        Ok(())
    }
}

/// Parses one frame, returning the message and the bytes consumed.
pub fn decode_message(bytes: &[u8]) -> Result<(WireMessage, usize), WireError> {
    if bytes.len() < HEADER_LEN {
        return Err(WireError::Truncated {
            needed: HEADER_LEN - bytes.len(),
        });
    }
    if &bytes[0..4] != WIRE_MAGIC {
        return Err(WireError::BadMagic);
    }
    let type_byte = bytes[4];
    let payload_len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let total = HEADER_LEN + payload_len + 4;
    if bytes.len() < total {
        return Err(WireError::Truncated {
            needed: total - bytes.len(),
        });
    }
    let stored = u32::from_le_bytes(bytes[total - 4..total].try_into().unwrap());
    let computed = crc32fast::hash(&bytes[..total - 4]);
    if stored != computed {
        return Err(WireError::CrcMismatch { stored, computed });
    }
    let kind = match type_byte {
        0 => "Register",
        1 => "AllocBatch",
        2 => "GlobalWeights",
        3 => "LocalSubmit",
        4 => "IterTime",
        5 => "Shutdown",
        other => return Err(WireError::UnknownType(other)),
    };
    let mut cur = Cursor {
        bytes: &bytes[HEADER_LEN..total - 4],
        pos: 0,
        kind,
    };
    let msg = match type_byte {
        0 => WireMessage::Register {
            worker: cur.u32()?,
            frequency: cur.f64()?,
        },
        1 => {
            let batch = cur.u16()?;
            let count = cur.u32()? as usize;
            let mut ranges = Vec::with_capacity(count);
            for _ in 0..count {
                ranges.push((cur.u64()?, cur.u64()?));
            }
            WireMessage::AllocBatch { batch, ranges }
        }
        2 => {
            let version = cur.u32()?;
            let count = cur.u32()? as usize;
            let mut values = Vec::with_capacity(count);
            for _ in 0..count {
                values.push(cur.f64()?);
            }
            WireMessage::GlobalWeights { version, values }
        }
        3 => {
            let worker = cur.u32()?;
            let base_version = cur.u32()?;
            let count = cur.u32()? as usize;
            let mut values = Vec::with_capacity(count);
            for _ in 0..count {
                values.push(cur.f64()?);
            }
            WireMessage::LocalSubmit {
                worker,
                base_version,
                values,
                accuracy: cur.f64()?,
                duration: cur.f64()?,
            }
        }
        4 => WireMessage::IterTime {
            worker: cur.u32()?,
            iter: cur.u32()?,
            duration: cur.f64()?,
        },
        5 => WireMessage::Shutdown,
        _ => unreachable!(),
    };
    cur.finish()?;
    Ok((msg, total))
}

/// Writes one frame to a byte stream.
pub fn write_frame<W: Write>(mut out: W, msg: &WireMessage) -> std::io::Result<()> {
    out.write_all(&encode_message(msg))
}

/// Reads exactly one frame from a byte stream.
pub fn read_frame<R: Read>(mut input: R) -> Result<WireMessage, crate::error::RuntimeError> {
    let mut header = [0u8; HEADER_LEN];
    input.read_exact(&mut header)?;
    if &header[0..4] != WIRE_MAGIC {
        return Err(WireError::BadMagic.into());
    }
    let payload_len = u32::from_le_bytes(header[5..9].try_into().unwrap()) as u64;
    if payload_len > MAX_PAYLOAD {
        return Err(WireError::LengthOverrun {
            len: payload_len,
            max: MAX_PAYLOAD,
        }
        .into());
    }
    let mut rest = vec![0u8; payload_len as usize + 4];
    input.read_exact(&mut rest)?;
    let mut frame = header.to_vec();
    frame.extend_from_slice(&rest);
    let (msg, _) = decode_message(&frame)?;
    Ok(msg)
}
