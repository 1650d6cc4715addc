//! Length-prefixed binary container shared by checkpoints and binary motion
//! files.
//!
//! Layout (little-endian): magic `[u8; 4]`, version `u32`, header length
//! `u64`, header bytes, payload length in values `u64`, payload `f64`s, then a
//! CRC-32 of everything before it.

use crate::error::CheckpointError;

const FIXED: usize = 4 + 4 + 8 + 8 + 4;

pub(crate) fn encode(magic: [u8; 4], version: u32, header: &[u8], payload: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(FIXED + header.len() + payload.len() * 8);
    out.extend_from_slice(&magic);
    out.extend_from_slice(&version.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(header);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

fn u64_at(bytes: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"))
}

/// Splits a container into header bytes and payload values. Checks run in
/// order: minimum length, magic, version, declared lengths, checksum.
pub(crate) fn decode(bytes: &[u8], magic: [u8; 4], version: u32) -> Result<(&[u8], Vec<f64>), CheckpointError> {
    let have = bytes.len();
    if have < FIXED {
        return Err(CheckpointError::Truncated { needed: FIXED, have });
    }
    if bytes[..4] != magic {
        return Err(CheckpointError::BadMagic {
            expected: magic,
            found: bytes[..4].to_vec(),
        });
    }
    let found = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if found != version {
        return Err(CheckpointError::Version {
            expected: version,
            found,
        });
    }
    let stored = u32::from_le_bytes(bytes[have - 4..].try_into().expect("4 bytes"));
    let computed = crc32fast::hash(&bytes[..have - 4]);

    let header_len = u64_at(bytes, 8);
    let needed = usize::try_from(header_len)
        .ok()
        .and_then(|h| h.checked_add(FIXED))
        .unwrap_or(usize::MAX);
    if needed > have {
        return Err(CheckpointError::Truncated { needed, have });
    }
    let header_end = 16 + header_len as usize;
    let count = u64_at(bytes, header_end);
    let needed = usize::try_from(count)
        .ok()
        .and_then(|c| c.checked_mul(8))
        .and_then(|p| p.checked_add(needed))
        .unwrap_or(usize::MAX);
    if needed > have {
        return Err(CheckpointError::Truncated { needed, have });
    }
    // Lengths that undershoot the file are corruption, reported via the checksum.
    if stored != computed || needed != have {
        return Err(CheckpointError::Checksum { stored, computed });
    }
    let start = header_end + 8;
    let payload = bytes[start..have - 4]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((&bytes[16..header_end], payload))
}
