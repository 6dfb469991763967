//! Exact-state checkpoints.
//!
//! A checkpoint stores everything a resumed run needs to reproduce an
//! uninterrupted one to near roundoff: the field values, the grid geometry,
//! the time, the step count, and the two running quadratures. The format is
//! a fixed little-endian layout, so files written on one machine read
//! identically on another:
//!
//! ```text
//! offset  size  content
//!      0     8  magic "DNLSCKP1"
//!      8     4  dim                    (u32)
//!     12     4  points per axis        (u32)
//!     16     8  half_width             (f64)
//!     24     8  time                   (f64)
//!     32     8  steps_done             (u64)
//!     40     8  accumulated dissipation(f64)
//!     48     8  flags                  (u64; bit 0 = quadrature present)
//!     56     8  n = points^dim         (u64)
//!     64  16*n  field values, flat node order, re then im (f64 each)
//!      +   8*n  pointwise amplitude quadrature (f64), iff flags bit 0
//! ```
//!
//! The same container moonlights as the on-disk form of the terminal profile
//! fields (complex profile in the value channel, its scalar companion in the
//! quadrature channel); those files are labeled by name, not by a different
//! magic.

use std::io::Write as _;
use std::path::Path;

use dnls_core::{C64, Carry, Field, Grid, Snapshot};

use crate::{HarnessError, Result};

pub const MAGIC: &[u8; 8] = b"DNLSCKP1";
const HEADER_LEN: usize = 64;

/// In-memory form of one checkpoint file.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointData {
    pub dim: usize,
    pub points: usize,
    pub half_width: f64,
    pub time: f64,
    pub steps_done: u64,
    pub dissipation: f64,
    pub values: Vec<C64>,
    pub f_quadrature: Option<Vec<f64>>,
}

impl CheckpointData {
    /// Capture a stored snapshot. `tracked` states whether the quadrature
    /// channel is meaningful (untracked runs carry a zero vector internally,
    /// which would resume as a silently wrong nonzero-f state otherwise).
    pub fn from_snapshot(grid: &Grid, snap: &Snapshot, tracked: bool) -> Self {
        CheckpointData {
            dim: grid.dim(),
            points: grid.points(),
            half_width: grid.half_width(),
            time: snap.time(),
            steps_done: snap.step as u64,
            dissipation: snap.dissipation,
            values: snap.field.values().to_vec(),
            f_quadrature: tracked.then(|| snap.f_quadrature.clone()),
        }
    }

    /// Wrap free-standing per-node fields (used for the profile outputs).
    pub fn from_fields(
        grid: &Grid,
        time: f64,
        values: Vec<C64>,
        scalar: Option<Vec<f64>>,
    ) -> Self {
        CheckpointData {
            dim: grid.dim(),
            points: grid.points(),
            half_width: grid.half_width(),
            time,
            steps_done: 0,
            dissipation: 0.0,
            values,
            f_quadrature: scalar,
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        Ok(Grid::new(self.dim, self.half_width, self.points)?)
    }

    pub fn field(&self) -> Result<Field> {
        let grid = self.grid()?;
        if self.values.len() != grid.len() {
            return Err(HarnessError::Checkpoint(format!(
                "{} stored values for a {}-node grid",
                self.values.len(),
                grid.len()
            )));
        }
        let mut it = self.values.iter();
        Ok(Field::from_fn(grid, self.time, |_| *it.next().expect("length checked")))
    }

    /// The quadrature state to hand back to the stepper; zeros when the
    /// checkpointed run was not tracking it.
    pub fn carry(&self) -> Carry {
        Carry {
            f_quadrature: self
                .f_quadrature
                .clone()
                .unwrap_or_else(|| vec![0.0; self.values.len()]),
            dissipation: self.dissipation,
            steps_done: self.steps_done as usize,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let n = self.values.len();
        let mut buf = Vec::with_capacity(HEADER_LEN + 16 * n + 8 * n);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(self.dim as u32).to_le_bytes());
        buf.extend_from_slice(&(self.points as u32).to_le_bytes());
        buf.extend_from_slice(&self.half_width.to_le_bytes());
        buf.extend_from_slice(&self.time.to_le_bytes());
        buf.extend_from_slice(&self.steps_done.to_le_bytes());
        buf.extend_from_slice(&self.dissipation.to_le_bytes());
        let flags: u64 = self.f_quadrature.is_some() as u64;
        buf.extend_from_slice(&flags.to_le_bytes());
        buf.extend_from_slice(&(n as u64).to_le_bytes());
        for z in &self.values {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
        if let Some(q) = &self.f_quadrature {
            if q.len() != n {
                return Err(HarnessError::Checkpoint(format!(
                    "quadrature has {} entries for {} values",
                    q.len(),
                    n
                )));
            }
            for v in q {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut file = std::fs::File::create(path)?;
        file.write_all(&buf)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        if bytes.len() < HEADER_LEN {
            return Err(HarnessError::Checkpoint(format!(
                "{} is {} bytes, shorter than the {HEADER_LEN}-byte header",
                path.display(),
                bytes.len()
            )));
        }
        if &bytes[..8] != MAGIC {
            return Err(HarnessError::Checkpoint(format!(
                "{} does not start with the checkpoint magic",
                path.display()
            )));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let dim = u32_at(8) as usize;
        let points = u32_at(12) as usize;
        let half_width = f64_at(16);
        let time = f64_at(24);
        let steps_done = u64_at(32);
        let dissipation = f64_at(40);
        let flags = u64_at(48);
        let n = u64_at(56) as usize;
        if flags > 1 {
            return Err(HarnessError::Checkpoint(format!("unknown flags {flags:#x}")));
        }
        let has_q = flags & 1 == 1;
        let want = HEADER_LEN + 16 * n + if has_q { 8 * n } else { 0 };
        if bytes.len() != want {
            return Err(HarnessError::Checkpoint(format!(
                "{} is {} bytes, expected {want} for n = {n}",
                path.display(),
                bytes.len()
            )));
        }
        let mut values = Vec::with_capacity(n);
        let mut off = HEADER_LEN;
        for _ in 0..n {
            values.push(C64::new(f64_at(off), f64_at(off + 8)));
            off += 16;
        }
        let f_quadrature = if has_q {
            let mut q = Vec::with_capacity(n);
            for _ in 0..n {
                q.push(f64_at(off));
                off += 8;
            }
            Some(q)
        } else {
            None
        };
        Ok(CheckpointData {
            dim,
            points,
            half_width,
            time,
            steps_done,
            dissipation,
            values,
            f_quadrature,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(with_q: bool) -> CheckpointData {
        let n = 16usize;
        let values: Vec<C64> = (0..n)
            .map(|j| C64::new(j as f64 * 0.25 - 1.0, (-0.5f64).powi(j as i32)))
            .collect();
        CheckpointData {
            dim: 1,
            points: 16,
            half_width: 10.0,
            time: 0.125,
            steps_done: 500,
            dissipation: 3.25e-2,
            values,
            f_quadrature: with_q.then(|| (0..n).map(|j| -(j as f64) * 1e-3).collect()),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = std::env::temp_dir();
        for with_q in [false, true] {
            let ck = sample(with_q);
            let path = dir.join(format!("dnls-ckpt-test-{}-{with_q}.ckpt", std::process::id()));
            ck.write(&path).unwrap();
            let back = CheckpointData::read(&path).unwrap();
            assert_eq!(ck, back);
            for (a, b) in ck.values.iter().zip(&back.values) {
                assert_eq!(a.re.to_bits(), b.re.to_bits());
                assert_eq!(a.im.to_bits(), b.im.to_bits());
            }
            std::fs::remove_file(&path).ok();
        }
    }

    #[test]
    fn field_and_carry_reconstruct_the_state() {
        let ck = sample(true);
        let f = ck.field().unwrap();
        assert_eq!(f.time(), 0.125);
        assert_eq!(f.grid().points(), 16);
        assert_eq!(f.values(), &ck.values[..]);
        let carry = ck.carry();
        assert_eq!(carry.steps_done, 500);
        assert_eq!(carry.dissipation, 3.25e-2);
        assert_eq!(carry.f_quadrature, ck.f_quadrature.clone().unwrap());

        let no_q = sample(false);
        assert!(no_q.carry().f_quadrature.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = std::env::temp_dir();
        let path = dir.join(format!("dnls-ckpt-corrupt-{}.ckpt", std::process::id()));
        let ck = sample(true);
        ck.write(&path).unwrap();

        let good = std::fs::read(&path).unwrap();
        std::fs::write(&path, &good[..good.len() - 8]).unwrap();
        assert!(CheckpointData::read(&path).is_err());

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        std::fs::write(&path, &bad_magic).unwrap();
        assert!(CheckpointData::read(&path).is_err());

        std::fs::remove_file(&path).ok();
    }
}
