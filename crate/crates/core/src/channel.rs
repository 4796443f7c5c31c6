//! Multi-band channel datasets: generation, normalization, perturbation
//! sets, binary persistence, and train/test partitioning.
//!
//! All randomness is ChaCha-seeded, so every operation is a pure function
//! of its arguments and seed.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::matcore::{cplx, CMat};

const MAGIC: &[u8; 4] = b"HPCH";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("invalid system dimensions: {0}")]
    InvalidDims(String),
    #[error("channel set is already normalized")]
    AlreadyNormalized,
    #[error("invalid train/test split: {0}")]
    BadSplit(String),
    #[error("realization count must be at least 1")]
    EmptyCount,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad dataset file: {0}")]
    Format(String),
}

/// Problem sizes: B bands, N users, L RF chains, M antennas, plus the
/// linear-power noise variance.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SystemDims {
    pub bands: usize,
    pub users: usize,
    pub rf_chains: usize,
    pub antennas: usize,
    pub noise_var: f64,
}

impl SystemDims {
    pub fn new(
        bands: usize,
        users: usize,
        rf_chains: usize,
        antennas: usize,
        noise_var: f64,
    ) -> Result<Self, ChannelError> {
        if bands < 1 || users < 1 {
            return Err(ChannelError::InvalidDims(
                "band and user counts must be at least 1".into(),
            ));
        }
        if rf_chains < 1 || rf_chains > antennas {
            return Err(ChannelError::InvalidDims(format!(
                "need 1 <= L <= M, got L={rf_chains}, M={antennas}"
            )));
        }
        if !(noise_var > 0.0) || !noise_var.is_finite() {
            return Err(ChannelError::InvalidDims(format!(
                "noise variance must be positive, got {noise_var}"
            )));
        }
        Ok(Self { bands, users, rf_chains, antennas, noise_var })
    }

    /// Same dimensions with a different noise variance (SNR sweeps).
    pub fn with_noise_var(self, noise_var: f64) -> Result<Self, ChannelError> {
        Self::new(self.bands, self.users, self.rf_chains, self.antennas, noise_var)
    }
}

/// One channel realization: B sub-channel matrices of size N×M.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub dims: SystemDims,
    pub bands: Vec<CMat>,
    pub normalized: bool,
}

impl ChannelSet {
    pub fn new(dims: SystemDims, bands: Vec<CMat>, normalized: bool) -> Self {
        assert_eq!(bands.len(), dims.bands, "band count mismatch");
        for b in &bands {
            assert_eq!(b.shape(), (dims.users, dims.antennas), "band shape mismatch");
        }
        Self { dims, bands, normalized }
    }
}

/// A collection of realizations sharing dimensions and normalization state.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDataset {
    pub dims: SystemDims,
    pub realizations: Vec<ChannelSet>,
    pub seed: i64,
}

impl ChannelDataset {
    pub fn len(&self) -> usize {
        self.realizations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.realizations.is_empty()
    }

    pub fn normalized(&self) -> bool {
        self.realizations.first().map(|r| r.normalized).unwrap_or(false)
    }

    /// Normalize every realization (errors if any already is).
    pub fn normalize_all(&self) -> Result<ChannelDataset, ChannelError> {
        let realizations = self
            .realizations
            .iter()
            .map(normalize)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ChannelDataset { dims: self.dims, realizations, seed: self.seed })
    }

    /// Dataset with the raw bands reinterpreted under a new noise variance.
    pub fn with_noise_var(&self, noise_var: f64) -> Result<ChannelDataset, ChannelError> {
        let dims = self.dims.with_noise_var(noise_var)?;
        let realizations = self
            .realizations
            .iter()
            .map(|r| ChannelSet::new(dims, r.bands.clone(), r.normalized))
            .collect();
        Ok(ChannelDataset { dims, realizations, seed: self.seed })
    }
}

/// A finite set of bounded per-band perturbations; the zero pattern is
/// always first so the maximin loss covers the error-free case.
#[derive(Debug, Clone)]
pub struct ErrorSet {
    pub dims: SystemDims,
    pub epsilon: f64,
    pub patterns: Vec<Vec<CMat>>,
}

/// Complex Gaussian matrix with i.i.d. entries of variance `var`.
pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, var: f64) -> CMat {
    let std = (var / 2.0).sqrt();
    let mut entries = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        entries.push(cplx(re * std, im * std));
    }
    crate::matcore::from_rows(rows, cols, &entries)
}

/// Draw `count` Rayleigh-fading realizations: every entry of every band is
/// an independent unit-variance circularly-symmetric complex Gaussian.
pub fn gen_rayleigh(
    dims: SystemDims,
    count: usize,
    seed: i64,
) -> Result<ChannelDataset, ChannelError> {
    if count == 0 {
        return Err(ChannelError::EmptyCount);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
    let mut realizations = Vec::with_capacity(count);
    for _ in 0..count {
        let bands = (0..dims.bands)
            .map(|_| gaussian_matrix(&mut rng, dims.users, dims.antennas, 1.0))
            .collect();
        realizations.push(ChannelSet::new(dims, bands, false));
    }
    Ok(ChannelDataset { dims, realizations, seed })
}

/// Scale a raw channel set into the noise-normalized domain
/// H̃_b = sqrt(1/(N σ²)) H_b.
pub fn normalize(cs: &ChannelSet) -> Result<ChannelSet, ChannelError> {
    if cs.normalized {
        return Err(ChannelError::AlreadyNormalized);
    }
    let scale = (1.0 / (cs.dims.users as f64 * cs.dims.noise_var)).sqrt();
    let bands = cs.bands.iter().map(|b| b.scale(scale)).collect();
    Ok(ChannelSet::new(cs.dims, bands, true))
}

/// Random perturbation patterns with per-band Frobenius norms uniform in
/// (0, ε), plus the zero pattern as the first entry.
pub fn sample_error_set(dims: SystemDims, epsilon: f64, n_e: usize, seed: i64) -> ErrorSet {
    assert!(epsilon > 0.0, "epsilon must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
    let zero_pattern: Vec<CMat> = (0..dims.bands)
        .map(|_| crate::matcore::zeros(dims.users, dims.antennas))
        .collect();
    let mut patterns = vec![zero_pattern];
    for _ in 0..n_e {
        let pattern = (0..dims.bands)
            .map(|_| {
                let g = gaussian_matrix(&mut rng, dims.users, dims.antennas, 1.0);
                let target = loop {
                    let u: f64 = rng.gen_range(0.0..epsilon);
                    if u > 0.0 {
                        break u;
                    }
                };
                let norm = g.norm();
                g.scale(target / norm)
            })
            .collect();
        patterns.push(pattern);
    }
    ErrorSet { dims, epsilon, patterns }
}

/// First `train_count` realizations to train, remainder to test.
pub fn split(
    ds: &ChannelDataset,
    train_count: usize,
) -> Result<(ChannelDataset, ChannelDataset), ChannelError> {
    if train_count == 0 || train_count >= ds.len() {
        return Err(ChannelError::BadSplit(format!(
            "train_count must be in (0, {}), got {train_count}",
            ds.len()
        )));
    }
    let (a, b) = ds.realizations.split_at(train_count);
    Ok((
        ChannelDataset { dims: ds.dims, realizations: a.to_vec(), seed: ds.seed },
        ChannelDataset { dims: ds.dims, realizations: b.to_vec(), seed: ds.seed },
    ))
}

pub fn save_dataset(ds: &ChannelDataset, path: &Path) -> Result<(), ChannelError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&[ds.normalized() as u8])?;
    w.write_all(&(ds.len() as u32).to_le_bytes())?;
    w.write_all(&(ds.dims.bands as u32).to_le_bytes())?;
    w.write_all(&(ds.dims.users as u32).to_le_bytes())?;
    w.write_all(&(ds.dims.antennas as u32).to_le_bytes())?;
    w.write_all(&ds.dims.noise_var.to_le_bytes())?;
    w.write_all(&ds.seed.to_le_bytes())?;
    for r in &ds.realizations {
        for band in &r.bands {
            for i in 0..band.nrows() {
                for j in 0..band.ncols() {
                    let z = band[(i, j)];
                    w.write_all(&z.re.to_le_bytes())?;
                    w.write_all(&z.im.to_le_bytes())?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Load a dataset written by [`save_dataset`].
///
/// The file format carries no RF-chain count; `rf_chains` supplies it.
pub fn load_dataset(path: &Path, rf_chains: usize) -> Result<ChannelDataset, ChannelError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut cur = Cursor { buf: &buf, pos: 0 };

    if cur.take(4)? != MAGIC {
        return Err(ChannelError::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(ChannelError::Format(format!("unsupported version {version}")));
    }
    let normalized = match cur.take(1)?[0] {
        0 => false,
        1 => true,
        v => return Err(ChannelError::Format(format!("bad normalized flag {v}"))),
    };
    let count = u32::from_le_bytes(cur.take(4)?.try_into().unwrap()) as usize;
    let bands = u32::from_le_bytes(cur.take(4)?.try_into().unwrap()) as usize;
    let users = u32::from_le_bytes(cur.take(4)?.try_into().unwrap()) as usize;
    let antennas = u32::from_le_bytes(cur.take(4)?.try_into().unwrap()) as usize;
    let noise_var = f64::from_le_bytes(cur.take(8)?.try_into().unwrap());
    let seed = i64::from_le_bytes(cur.take(8)?.try_into().unwrap());
    let dims = SystemDims::new(bands, users, rf_chains, antennas, noise_var)
        .map_err(|e| ChannelError::Format(e.to_string()))?;

    let mut realizations = Vec::with_capacity(count);
    for _ in 0..count {
        let mut band_mats = Vec::with_capacity(bands);
        for _ in 0..bands {
            let mut entries = Vec::with_capacity(users * antennas);
            for _ in 0..users * antennas {
                let re = f64::from_le_bytes(cur.take(8)?.try_into().unwrap());
                let im = f64::from_le_bytes(cur.take(8)?.try_into().unwrap());
                entries.push(Complex64::new(re, im));
            }
            band_mats.push(crate::matcore::from_rows(users, antennas, &entries));
        }
        realizations.push(ChannelSet::new(dims, band_mats, normalized));
    }
    if cur.pos != buf.len() {
        return Err(ChannelError::Format(format!(
            "{} trailing bytes",
            buf.len() - cur.pos
        )));
    }
    Ok(ChannelDataset { dims, realizations, seed })
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ChannelError> {
        if self.pos + n > self.buf.len() {
            return Err(ChannelError::Format("truncated file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}
