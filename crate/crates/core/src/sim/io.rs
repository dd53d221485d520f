//! Binary trajectory file.
//!
//! ```text
//! magic        8 bytes "STLTRAJ\0"
//! version      u32
//! id           u16 length + UTF-8
//! team_size    u32
//! dt           f64
//! targets      u32 count, then 3 x f64 each
//! steps        u64 count, then per step, per robot: position xyz,
//!              velocity xyz, orientation (yaw, pitch, roll) as 9 x f64
//! ```
//!
//! Little-endian throughout; floats are stored bit-exactly.

use std::path::Path;

use super::{RobotState, Trajectory};
use crate::binio::{ByteReader, ByteWriter};
use crate::error::{Error, Result};

pub const TRAJECTORY_MAGIC: &[u8; 8] = b"STLTRAJ\0";
pub const TRAJECTORY_VERSION: u32 = 1;

const KIND: &str = "trajectory";

pub fn trajectory_to_bytes(traj: &Trajectory) -> Vec<u8> {
    let mut w = ByteWriter::default();
    w.bytes(TRAJECTORY_MAGIC);
    w.u32(TRAJECTORY_VERSION);
    w.str(traj.id());
    w.u32(traj.team_size() as u32);
    w.f64(traj.dt());
    w.u32(traj.targets().len() as u32);
    for t in traj.targets() {
        t.iter().for_each(|&v| w.f64(v));
    }
    w.u64(traj.num_steps() as u64);
    for s in traj.states() {
        for v in s.position.iter().chain(&s.velocity).chain(&s.orientation) {
            w.f64(*v);
        }
    }
    w.finish()
}

pub fn trajectory_from_bytes(data: &[u8]) -> Result<Trajectory> {
    let mut r = ByteReader::new(KIND, data);
    if r.take(TRAJECTORY_MAGIC.len())? != TRAJECTORY_MAGIC {
        return Err(r.corrupt_at(0, "bad magic"));
    }
    let version = r.u32()?;
    if version != TRAJECTORY_VERSION {
        return Err(Error::Version {
            kind: KIND,
            found: version,
            expected: TRAJECTORY_VERSION,
        });
    }
    let id = r.str()?;
    let team_at = r.offset();
    let team_size = r.u32()? as usize;
    if team_size == 0 {
        return Err(r.corrupt_at(team_at, "team size is zero"));
    }
    let dt = r.f64()?;
    let n_targets = r.u32()?;
    let n_targets = r.count(24, n_targets.into())?;
    let mut targets = Vec::with_capacity(n_targets);
    for _ in 0..n_targets {
        targets.push([r.f64()?, r.f64()?, r.f64()?]);
    }
    let n_steps = r.u64()?;
    let n_states = r.count(72, n_steps.saturating_mul(team_size as u64))?;
    let mut states = Vec::with_capacity(n_states);
    let mut vals = [0.0; 9];
    for _ in 0..n_states {
        for v in vals.iter_mut() {
            *v = r.f64()?;
        }
        states.push(RobotState {
            position: [vals[0], vals[1], vals[2]],
            velocity: [vals[3], vals[4], vals[5]],
            orientation: [vals[6], vals[7], vals[8]],
        });
    }
    r.expect_end()?;
    let end = r.offset();
    Trajectory::new(id, team_size, dt, targets, states).map_err(|e| r.corrupt_at(end, e.to_string()))
}

pub fn save_trajectory(path: impl AsRef<Path>, traj: &Trajectory) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, trajectory_to_bytes(traj)).map_err(|e| Error::io(path, e))
}

pub fn load_trajectory(path: impl AsRef<Path>) -> Result<Trajectory> {
    let path = path.as_ref();
    let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    trajectory_from_bytes(&data)
}
