//! Binary time-tag files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! header  magic "QTAGS\0\0\x01" (8) | resolution u32 | party u8 | record_count u64   = 21 bytes
//! record  time u64 | channel u8 | reserved [0; 7]                                     = 16 bytes
//! ```
//!
//! Record times are in units of `resolution` picoseconds.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::link::TimeTag;
use crate::Party;

pub const MAGIC: [u8; 8] = *b"QTAGS\0\0\x01";
pub const HEADER_LEN: usize = 21;
pub const RECORD_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum TagFileError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 8]),
    #[error("record {index} at time {time} precedes its predecessor")]
    UnsortedRecords { index: u64, time: u64 },
    #[error("file truncated: expected {expected} bytes, found {found}")]
    TruncatedFile { expected: u64, found: u64 },
    #[error("record {index} has channel {channel}, expected 0-3")]
    BadChannel { index: u64, channel: u8 },
    #[error("party byte {0} is neither 0 (A) nor 1 (B)")]
    BadParty(u8),
    #[error("resolution must be at least 1 ps")]
    BadResolution,
    #[error("record {index} has nonzero reserved bytes")]
    BadReserved { index: u64 },
    #[error("{0} bytes after the last record")]
    TrailingData(u64),
    #[error("time {time} ps is not a multiple of the {resolution} ps resolution")]
    Unrepresentable { time: u64, resolution: u32 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TagFileHeader {
    /// ps per time unit
    pub resolution: u32,
    pub party: Party,
    pub record_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct TagRecord {
    /// Units of the header resolution.
    pub time: u64,
    pub channel: u8,
}

fn party_byte(party: Party) -> u8 {
    party.index() as u8
}

fn check_records(records: &[TagRecord]) -> Result<(), TagFileError> {
    for (i, r) in records.iter().enumerate() {
        if r.channel > 3 {
            return Err(TagFileError::BadChannel { index: i as u64, channel: r.channel });
        }
        if i > 0 && r.time < records[i - 1].time {
            return Err(TagFileError::UnsortedRecords { index: i as u64, time: r.time });
        }
    }
    Ok(())
}

/// Serializes a header and its records. `header.record_count` is ignored in
/// favour of `records.len()`.
pub fn encode(header: &TagFileHeader, records: &[TagRecord]) -> Result<Vec<u8>, TagFileError> {
    if header.resolution == 0 {
        return Err(TagFileError::BadResolution);
    }
    check_records(records)?;
    let mut out = Vec::with_capacity(HEADER_LEN + RECORD_LEN * records.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&header.resolution.to_le_bytes());
    out.push(party_byte(header.party));
    out.extend_from_slice(&(records.len() as u64).to_le_bytes());
    for r in records {
        out.extend_from_slice(&r.time.to_le_bytes());
        out.push(r.channel);
        out.extend_from_slice(&[0u8; 7]);
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<(TagFileHeader, Vec<TagRecord>), TagFileError> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 8 && bytes[..8] != MAGIC {
            return Err(TagFileError::BadMagic(bytes[..8].try_into().expect("8 bytes")));
        }
        return Err(TagFileError::TruncatedFile { expected: HEADER_LEN as u64, found: bytes.len() as u64 });
    }
    let magic: [u8; 8] = bytes[..8].try_into().expect("8 bytes");
    if magic != MAGIC {
        return Err(TagFileError::BadMagic(magic));
    }
    let resolution = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if resolution == 0 {
        return Err(TagFileError::BadResolution);
    }
    let party = match bytes[12] {
        0 => Party::A,
        1 => Party::B,
        other => return Err(TagFileError::BadParty(other)),
    };
    let record_count = u64::from_le_bytes(bytes[13..21].try_into().expect("8 bytes"));
    let body = (bytes.len() - HEADER_LEN) as u64;
    let expected = record_count.checked_mul(RECORD_LEN as u64);
    match expected {
        Some(e) if body < e => {
            return Err(TagFileError::TruncatedFile { expected: HEADER_LEN as u64 + e, found: bytes.len() as u64 })
        }
        None => {
            return Err(TagFileError::TruncatedFile { expected: u64::MAX, found: bytes.len() as u64 });
        }
        Some(e) if body > e => return Err(TagFileError::TrailingData(body - e)),
        _ => {}
    }
    let mut records = Vec::with_capacity(record_count as usize);
    for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(RECORD_LEN).enumerate() {
        let index = i as u64;
        let time = u64::from_le_bytes(chunk[..8].try_into().expect("8 bytes"));
        let channel = chunk[8];
        if channel > 3 {
            return Err(TagFileError::BadChannel { index, channel });
        }
        if chunk[9..].iter().any(|&b| b != 0) {
            return Err(TagFileError::BadReserved { index });
        }
        if let Some(prev) = records.last() {
            let prev: &TagRecord = prev;
            if time < prev.time {
                return Err(TagFileError::UnsortedRecords { index, time });
            }
        }
        records.push(TagRecord { time, channel });
    }
    Ok((TagFileHeader { resolution, party, record_count }, records))
}

pub fn write_tags(path: impl AsRef<Path>, header: &TagFileHeader, records: &[TagRecord]) -> Result<(), TagFileError> {
    let bytes = encode(header, records)?;
    let mut file = fs::File::create(path)?;
    file.write_all(&bytes)?;
    file.sync_all()?;
    Ok(())
}

pub fn read_tags(path: impl AsRef<Path>) -> Result<(TagFileHeader, Vec<TagRecord>), TagFileError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}

/// Converts picosecond tags of one party into file records.
pub fn records_from_tags(tags: &[TimeTag], resolution: u32) -> Result<Vec<TagRecord>, TagFileError> {
    if resolution == 0 {
        return Err(TagFileError::BadResolution);
    }
    let res = resolution as u64;
    tags.iter()
        .map(|t| {
            if t.time % res != 0 {
                return Err(TagFileError::Unrepresentable { time: t.time, resolution });
            }
            Ok(TagRecord { time: t.time / res, channel: t.channel })
        })
        .collect()
}

/// Converts file records back into picosecond tags.
pub fn tags_from_records(header: &TagFileHeader, records: &[TagRecord]) -> Vec<TimeTag> {
    let res = header.resolution as u64;
    records
        .iter()
        .map(|r| TimeTag { time: r.time.saturating_mul(res), party: header.party, channel: r.channel })
        .collect()
}
