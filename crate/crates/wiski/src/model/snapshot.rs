//! Versioned binary snapshots of the model state.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic       8 bytes  "WISKISNP"
//! version     u32      1
//! mode        u8       0 = homoscedastic, 1 = fixed-noise
//! family      u8       0 = rbf, 1 = matern-1/2
//! dims        u16      d
//! sizes       d x u64
//! lower       d x f64
//! upper       d x f64
//! log_ls      d x f64
//! log_outputscale, log_noise        2 x f64
//! m, r, n     3 x u64
//! yty, log_det_noise, jitter        3 x f64
//! wty         m x f64
//! L           m*r x f64, column-major
//! J           m*r x f64, column-major
//! ```
//!
//! The learned projection and the priors are runtime configuration and are not
//! part of the snapshot.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::{NoiseMode, WiskiState};
use crate::error::{Error, Result};
use crate::grid::build_grid;
use crate::kernels::{KernelFamily, KernelParams, KernelPriors, KernelSpec};
use crate::linalg::LowRankRoot;
use crate::scalar::{from_f64, to_f64, Scalar};

const MAGIC: &[u8; 8] = b"WISKISNP";
const VERSION: u32 = 1;

struct Writer<W: Write> {
    inner: W,
}

impl<W: Write> Writer<W> {
    fn u8(&mut self, v: u8) -> Result<()> {
        self.inner.write_all(&[v])?;
        Ok(())
    }
    fn u16(&mut self, v: u16) -> Result<()> {
        self.inner.write_all(&v.to_le_bytes())?;
        Ok(())
    }
    fn u32(&mut self, v: u32) -> Result<()> {
        self.inner.write_all(&v.to_le_bytes())?;
        Ok(())
    }
    fn u64(&mut self, v: u64) -> Result<()> {
        self.inner.write_all(&v.to_le_bytes())?;
        Ok(())
    }
    fn f64(&mut self, v: f64) -> Result<()> {
        self.inner.write_all(&v.to_le_bytes())?;
        Ok(())
    }
}

struct Reader<R: Read> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf)?;
        Ok(buf)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.bytes()?))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
}

impl<T: Scalar> WiskiState<T> {
    /// Write a checkpoint of the constant-size state.
    pub fn save_snapshot(&self, path: &Path) -> Result<()> {
        let file = File::create(path)?;
        let mut w = Writer { inner: BufWriter::new(file) };
        w.inner.write_all(MAGIC)?;
        w.u32(VERSION)?;
        w.u8(match self.mode {
            NoiseMode::Homoscedastic => 0,
            NoiseMode::FixedNoise => 1,
        })?;
        w.u8(match self.spec.family {
            KernelFamily::Rbf => 0,
            KernelFamily::MaternHalf => 1,
        })?;
        let d = self.grid.dims();
        w.u16(d as u16)?;
        for dim in 0..d {
            w.u64(self.grid.size(dim) as u64)?;
        }
        for dim in 0..d {
            w.f64(to_f64(self.grid.lower(dim)))?;
        }
        for dim in 0..d {
            w.f64(to_f64(self.grid.upper(dim)))?;
        }
        for dim in 0..d {
            w.f64(to_f64(self.params.log_lengthscales[dim]))?;
        }
        w.f64(to_f64(self.params.log_outputscale))?;
        w.f64(to_f64(self.params.log_noise))?;
        let m = self.grid.num_nodes();
        let r = self.root.rank();
        w.u64(m as u64)?;
        w.u64(r as u64)?;
        w.u64(self.n as u64)?;
        w.f64(to_f64(self.yty))?;
        w.f64(to_f64(self.log_det_noise))?;
        w.f64(to_f64(self.jitter))?;
        for i in 0..m {
            w.f64(to_f64(self.wty[i]))?;
        }
        for v in self.root.factor().iter() {
            w.f64(to_f64(*v))?;
        }
        for v in self.root.pinv_factor().iter() {
            w.f64(to_f64(*v))?;
        }
        w.inner.flush()?;
        Ok(())
    }

    /// Restore a checkpoint written by [`WiskiState::save_snapshot`].
    pub fn load_snapshot(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let mut r = Reader { inner: BufReader::new(file) };
        let magic = r.bytes::<8>()?;
        if &magic != MAGIC {
            return Err(Error::SnapshotFormat("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::SnapshotFormat(format!("unsupported version {version}")));
        }
        let mode = match r.u8()? {
            0 => NoiseMode::Homoscedastic,
            1 => NoiseMode::FixedNoise,
            other => return Err(Error::SnapshotFormat(format!("unknown mode {other}"))),
        };
        let family = match r.u8()? {
            0 => KernelFamily::Rbf,
            1 => KernelFamily::MaternHalf,
            other => return Err(Error::SnapshotFormat(format!("unknown family {other}"))),
        };
        let d = r.u16()? as usize;
        if d == 0 || d > 16 {
            return Err(Error::SnapshotFormat(format!("implausible dimension {d}")));
        }
        let mut sizes = Vec::with_capacity(d);
        for _ in 0..d {
            sizes.push(r.u64()? as usize);
        }
        let mut lower = Vec::with_capacity(d);
        for _ in 0..d {
            lower.push(r.f64()?);
        }
        let mut upper = Vec::with_capacity(d);
        for _ in 0..d {
            upper.push(r.f64()?);
        }
        let mut log_ls = Vec::with_capacity(d);
        for _ in 0..d {
            log_ls.push(from_f64::<T>(r.f64()?));
        }
        let log_outputscale = from_f64::<T>(r.f64()?);
        let log_noise = from_f64::<T>(r.f64()?);
        let m = r.u64()? as usize;
        let rank = r.u64()? as usize;
        let n = r.u64()? as usize;
        let yty = from_f64::<T>(r.f64()?);
        let log_det_noise = from_f64::<T>(r.f64()?);
        let jitter = from_f64::<T>(r.f64()?);

        let bounds: Vec<(T, T)> = lower
            .iter()
            .zip(upper.iter())
            .map(|(&lo, &hi)| (from_f64::<T>(lo), from_f64::<T>(hi)))
            .collect();
        let grid = build_grid(&bounds, &sizes)?;
        if grid.num_nodes() != m {
            return Err(Error::SnapshotFormat("grid size disagrees with m".into()));
        }
        if rank == 0 || rank > m {
            return Err(Error::SnapshotFormat("implausible root rank".into()));
        }

        let mut wty = DVector::zeros(m);
        for i in 0..m {
            wty[i] = from_f64::<T>(r.f64()?);
        }
        let mut l = DMatrix::zeros(m, rank);
        for v in l.iter_mut() {
            *v = from_f64::<T>(r.f64()?);
        }
        let mut j = DMatrix::zeros(m, rank);
        for v in j.iter_mut() {
            *v = from_f64::<T>(r.f64()?);
        }

        Ok(WiskiState {
            grid,
            spec: KernelSpec { family, dims: d },
            params: KernelParams {
                log_lengthscales: log_ls,
                log_outputscale,
                log_noise,
            },
            priors: KernelPriors::default(),
            projection: None,
            mode,
            wty,
            yty,
            log_det_noise,
            root: LowRankRoot::from_factors(l, j),
            n,
            jitter,
            q_policy: super::QSolvePolicy::Dense,
            ghat: None,
            solve: None,
        })
    }
}
