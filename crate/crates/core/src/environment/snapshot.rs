//! Byte-exact environment snapshots and a human-readable dump.
//!
//! Layout (little endian):
//!
//! | offset | size | field                    |
//! |--------|------|--------------------------|
//! | 0      | 4    | magic `LADR`             |
//! | 4      | 2    | version                  |
//! | 6      | 2    | reserved, zero           |
//! | 8      | 8    | `p` as f64               |
//! | 16     | 8    | seed as u64              |
//! | 24     | 8    | `x_min` as i64           |
//! | 32     | 8    | `x_max` as i64           |
//! | 40     | n    | one byte per column      |
//!
//! Column byte: bits 0–2 slab `(h0, h1, v)`, bits 3–4 backwards state
//! (level 0, level 1), bit 5 pre-regeneration point, bits 6–7 backbone
//! membership (level 0, level 1).

use std::io::{Read, Write};

use super::{LadderConfig, Slab, TState, Vertex};
use crate::error::{LadderError, Result};

pub const SNAPSHOT_MAGIC: [u8; 4] = *b"LADR";
pub const SNAPSHOT_VERSION: u16 = 1;

pub fn write_snapshot<W: Write>(cfg: &LadderConfig, mut w: W) -> Result<()> {
    let mut header = Vec::with_capacity(40);
    header.extend_from_slice(&SNAPSHOT_MAGIC);
    header.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    header.extend_from_slice(&0u16.to_le_bytes());
    header.extend_from_slice(&cfg.p.to_le_bytes());
    header.extend_from_slice(&cfg.seed.to_le_bytes());
    header.extend_from_slice(&cfg.x_min().to_le_bytes());
    header.extend_from_slice(&cfg.x_max().to_le_bytes());
    w.write_all(&header)?;
    let body: Vec<u8> = (cfg.x_min()..=cfg.x_max()).map(|x| cfg.column_byte(x)).collect();
    w.write_all(&body)?;
    Ok(())
}

/// Reads a snapshot, rebuilds the annotations and checks them against the
/// stored bits.
pub fn read_snapshot<R: Read>(mut r: R) -> Result<LadderConfig> {
    let mut header = [0u8; 40];
    r.read_exact(&mut header)?;
    if header[0..4] != SNAPSHOT_MAGIC {
        return Err(LadderError::Format("bad snapshot magic".into()));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != SNAPSHOT_VERSION {
        return Err(LadderError::Format(format!("unsupported snapshot version {version}")));
    }
    let f64_at = |o: usize| f64::from_le_bytes(header[o..o + 8].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(header[o..o + 8].try_into().unwrap());
    let p = f64_at(8);
    let seed = u64_at(16);
    let x_min = u64_at(24) as i64;
    let x_max = u64_at(32) as i64;
    if x_max < x_min {
        return Err(LadderError::Format("x_max < x_min".into()));
    }
    let mut body = vec![0u8; (x_max - x_min + 1) as usize];
    r.read_exact(&mut body)?;
    let slabs: Vec<Slab> = body.iter().map(|b| Slab::from_bits(*b)).collect();
    let t_first = TState::from_bits(body[0] >> 3);
    let cfg = LadderConfig::new(p, seed, x_min, t_first, slabs)
        .map_err(|e| LadderError::Format(format!("inconsistent snapshot: {e}")))?;
    for (k, b) in body.iter().enumerate() {
        if cfg.column_byte(x_min + k as i64) != *b {
            return Err(LadderError::Format(format!("annotation mismatch at column {}", x_min + k as i64)));
        }
    }
    Ok(cfg)
}

/// One line per column: `x h0h1v T F pre backbone trap`.
pub fn write_dump<W: Write>(cfg: &LadderConfig, mut w: W) -> Result<()> {
    writeln!(w, "# p={} seed={} x_min={} x_max={}", cfg.p, cfg.seed, cfg.x_min(), cfg.x_max())?;
    writeln!(w, "# x h0h1v T F pre backbone trap")?;
    for x in cfg.x_min()..=cfg.x_max() {
        let s = cfg.slab(x);
        let bb = |y| if cfg.on_backbone(Vertex::new(x, y)) { '1' } else { '0' };
        let trap = match cfg.trap_covering(x) {
            Some(t) => format!("[{},{})", t.a, t.b),
            None => "-".to_string(),
        };
        writeln!(
            w,
            "{x} {}{}{} {} {} {} {}{} {trap}",
            s.h0() as u8,
            s.h1() as u8,
            s.v() as u8,
            cfg.t_state(x),
            cfg.forwards_state(x),
            if cfg.is_pre_regeneration(x) { 'P' } else { '.' },
            bb(0),
            bb(1),
        )?;
    }
    Ok(())
}
