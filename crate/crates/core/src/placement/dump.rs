//! Versioned little-endian dump of a finite-size placement.
//!
//! ```text
//! magic      8 bytes   "FRANPLC\0"
//! version    u16       1
//! kt kr n    u32 x 3
//! mt mr r    rational x 3: (u32 len, numerator two's-complement LE bytes,
//!                           u32 len, denominator two's-complement LE bytes)
//! file_size  u64
//! seed       u64
//! regime     u8        0 = fractional, 1 = split
//! per file   shared, kt exclusive ranges, cloud: (u64 start, u64 end) each
//! per (user, file), user-major:
//!            u64 run count, then LEB128 run lengths alternating
//!            uncached / cached, starting with an uncached run (may be 0)
//! ```

use std::io::{self, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num::bigint::BigInt;
use thiserror::Error;

use super::{EnPlacement, FileLayout, UserPlacement};
use crate::bitset::BitSet;
use crate::model::{validate_config, ConfigError, EnRegime, NetworkConfig, NetworkParams};
use crate::rational::Rational;

pub const MAGIC: &[u8; 8] = b"FRANPLC\0";
pub const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum DumpError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a placement dump (bad magic)")]
    BadMagic,
    #[error("unsupported dump version {0}")]
    UnsupportedVersion(u16),
    #[error("corrupt dump: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlacementDump {
    pub cfg: NetworkConfig,
    pub en: EnPlacement,
    pub users: UserPlacement,
}

fn write_bigint<W: Write>(w: &mut W, v: &BigInt) -> io::Result<()> {
    let bytes = v.to_signed_bytes_le();
    w.write_u32::<LittleEndian>(bytes.len() as u32)?;
    w.write_all(&bytes)
}

fn read_bigint<R: Read>(r: &mut R) -> Result<BigInt, DumpError> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    if len > 1 << 16 {
        return Err(DumpError::Corrupt(format!("integer of {len} bytes")));
    }
    let mut buf = vec![0; len];
    r.read_exact(&mut buf)?;
    Ok(BigInt::from_signed_bytes_le(&buf))
}

fn write_rational<W: Write>(w: &mut W, q: &Rational) -> io::Result<()> {
    write_bigint(w, q.numer())?;
    write_bigint(w, q.denom())
}

fn read_rational<R: Read>(r: &mut R) -> Result<Rational, DumpError> {
    let numer = read_bigint(r)?;
    let denom = read_bigint(r)?;
    if denom == BigInt::from(0) {
        return Err(DumpError::Corrupt("zero denominator".into()));
    }
    Ok(Rational::new(numer, denom))
}

fn write_varint<W: Write>(w: &mut W, mut v: u64) -> io::Result<()> {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            return w.write_u8(byte);
        }
        w.write_u8(byte | 0x80)?;
    }
}

fn read_varint<R: Read>(r: &mut R) -> Result<u64, DumpError> {
    let mut v = 0u64;
    for shift in (0..64).step_by(7) {
        let byte = r.read_u8()?;
        v |= u64::from(byte & 0x7f) << shift;
        if byte & 0x80 == 0 {
            return Ok(v);
        }
    }
    Err(DumpError::Corrupt("varint too long".into()))
}

fn write_range<W: Write>(w: &mut W, r: &std::ops::Range<u64>) -> io::Result<()> {
    w.write_u64::<LittleEndian>(r.start)?;
    w.write_u64::<LittleEndian>(r.end)
}

fn read_range<R: Read>(r: &mut R, file_size: u64) -> Result<std::ops::Range<u64>, DumpError> {
    let start = r.read_u64::<LittleEndian>()?;
    let end = r.read_u64::<LittleEndian>()?;
    if start > end || end > file_size {
        return Err(DumpError::Corrupt(format!("range {start}..{end}")));
    }
    Ok(start..end)
}

pub fn write_placement<W: Write>(
    w: &mut W,
    cfg: &NetworkConfig,
    en: &EnPlacement,
    users: &UserPlacement,
) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_u16::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(cfg.kt() as u32)?;
    w.write_u32::<LittleEndian>(cfg.kr() as u32)?;
    w.write_u32::<LittleEndian>(cfg.n() as u32)?;
    write_rational(w, cfg.mt())?;
    write_rational(w, cfg.mr())?;
    write_rational(w, cfg.r())?;
    w.write_u64::<LittleEndian>(en.file_size)?;
    w.write_u64::<LittleEndian>(users.seed)?;
    w.write_u8(match en.regime {
        EnRegime::Fractional => 0,
        EnRegime::Split => 1,
    })?;
    for layout in &en.files {
        write_range(w, &layout.shared)?;
        for r in &layout.exclusive {
            write_range(w, r)?;
        }
        write_range(w, &layout.cloud)?;
    }
    for user in 0..users.kr {
        for file in 0..users.n {
            let runs = users.cache(user, file).runs();
            w.write_u64::<LittleEndian>(runs.len() as u64)?;
            for run in runs {
                write_varint(w, run)?;
            }
        }
    }
    Ok(())
}

pub fn read_placement<R: Read>(r: &mut R) -> Result<PlacementDump, DumpError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(DumpError::BadMagic);
    }
    let version = r.read_u16::<LittleEndian>()?;
    if version != VERSION {
        return Err(DumpError::UnsupportedVersion(version));
    }
    let kt = r.read_u32::<LittleEndian>()? as usize;
    let kr = r.read_u32::<LittleEndian>()? as usize;
    let n = r.read_u32::<LittleEndian>()? as usize;
    let mt = read_rational(r)?;
    let mr = read_rational(r)?;
    let rate = read_rational(r)?;
    let cfg = validate_config(NetworkParams {
        kt,
        kr,
        n,
        mt,
        mr,
        r: rate,
    })?;
    let file_size = r.read_u64::<LittleEndian>()?;
    let seed = r.read_u64::<LittleEndian>()?;
    let regime = match r.read_u8()? {
        0 => EnRegime::Fractional,
        1 => EnRegime::Split,
        other => return Err(DumpError::Corrupt(format!("regime tag {other}"))),
    };
    let mut files = Vec::with_capacity(n);
    for _ in 0..n {
        let shared = read_range(r, file_size)?;
        let exclusive = (0..kt)
            .map(|_| read_range(r, file_size))
            .collect::<Result<Vec<_>, _>>()?;
        let cloud = read_range(r, file_size)?;
        files.push(FileLayout {
            shared,
            exclusive,
            cloud,
        });
    }
    let mut caches = Vec::with_capacity(kr * n);
    for _ in 0..kr * n {
        let count = r.read_u64::<LittleEndian>()?;
        if count > file_size + 1 {
            return Err(DumpError::Corrupt(format!("{count} runs")));
        }
        let runs = (0..count)
            .map(|_| read_varint(r))
            .collect::<Result<Vec<_>, _>>()?;
        let set = BitSet::from_runs(file_size, &runs)
            .ok_or_else(|| DumpError::Corrupt("runs do not cover the file".into()))?;
        caches.push(set);
    }
    let users = UserPlacement::from_parts(file_size, kr, n, seed, caches)
        .ok_or_else(|| DumpError::Corrupt("user cache table".into()))?;
    Ok(PlacementDump {
        cfg,
        en: EnPlacement {
            regime,
            file_size,
            files,
        },
        users,
    })
}
