//! Trajectory files.
//!
//! Binary layout (little endian): magic `LTRJ`, version u16, exit code u16
//! (0 none, 1 left, 2 right), `p` f64, `λ` f64, seed u64, start x i64,
//! start y u64, step count u64, then the packed 2-bit move codes.

use std::io::{Read, Write};

use super::{martingale_path, BoundaryExit, Trajectory};
use crate::environment::{LadderConfig, Vertex};
use crate::error::{LadderError, Result};
use crate::params::ModelParams;

pub const TRAJECTORY_MAGIC: [u8; 4] = *b"LTRJ";
const VERSION: u16 = 1;

pub fn write_trajectory<W: Write>(traj: &Trajectory, mut w: W) -> Result<()> {
    let exit = match traj.exit {
        None => 0u16,
        Some(BoundaryExit::Left) => 1,
        Some(BoundaryExit::Right) => 2,
    };
    let mut h = Vec::with_capacity(56);
    h.extend_from_slice(&TRAJECTORY_MAGIC);
    h.extend_from_slice(&VERSION.to_le_bytes());
    h.extend_from_slice(&exit.to_le_bytes());
    h.extend_from_slice(&traj.params.p.to_le_bytes());
    h.extend_from_slice(&traj.params.lambda.to_le_bytes());
    h.extend_from_slice(&traj.seed.to_le_bytes());
    h.extend_from_slice(&traj.start.x.to_le_bytes());
    h.extend_from_slice(&(traj.start.y as u64).to_le_bytes());
    h.extend_from_slice(&(traj.len() as u64).to_le_bytes());
    w.write_all(&h)?;
    w.write_all(traj.packed_moves())?;
    Ok(())
}

pub fn read_trajectory<R: Read>(mut r: R) -> Result<Trajectory> {
    let mut h = [0u8; 56];
    r.read_exact(&mut h)?;
    if h[0..4] != TRAJECTORY_MAGIC {
        return Err(LadderError::Format("bad trajectory magic".into()));
    }
    if u16::from_le_bytes([h[4], h[5]]) != VERSION {
        return Err(LadderError::Format("unsupported trajectory version".into()));
    }
    let exit = match u16::from_le_bytes([h[6], h[7]]) {
        0 => None,
        1 => Some(BoundaryExit::Left),
        2 => Some(BoundaryExit::Right),
        c => return Err(LadderError::Format(format!("bad exit code {c}"))),
    };
    let word = |o: usize| u64::from_le_bytes(h[o..o + 8].try_into().unwrap());
    let params = ModelParams::new(f64::from_bits(word(8)), f64::from_bits(word(16)))?;
    let start_y = word(40);
    if start_y > 1 {
        return Err(LadderError::Format("start level must be 0 or 1".into()));
    }
    let start = Vertex::new(word(32) as i64, start_y as u8);
    let len = word(48) as usize;
    let mut packed = vec![0u8; len.div_ceil(4)];
    r.read_exact(&mut packed)?;
    let mut traj = Trajectory::from_packed(params, start, word(24), packed, len);
    traj.exit = exit;
    Ok(traj)
}

/// CSV with columns `n,x,y,M_n`.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, config: &LadderConfig, mut w: W) -> Result<()> {
    let m = martingale_path(traj, config);
    writeln!(w, "n,x,y,M_n")?;
    for (n, (v, mn)) in traj.vertices().zip(m).enumerate() {
        writeln!(w, "{n},{},{},{mn}", v.x, v.y)?;
    }
    Ok(())
}
