//! Video tensor container, lattice addressing, and on-disk formats.
//!
//! A tensor holds `M × N × T` real intensities addressed by `(m, n, τ)` with
//! `m` the column (x), `n` the row (y) and `τ` the frame. Storage is
//! frame-major, then row-major: `index = τ·M·N + n·M + m`.

mod binary;
mod pgm;
mod trajectory;

use std::path::Path;

use crate::error::{Error, Result};

pub use trajectory::{read_trajectory_csv, write_trajectory_csv, TrajectoryRecord, TRAJECTORY_HEADER};

/// On-disk tensor encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorFormat {
    /// Magic + three little-endian `u64` dims + little-endian `f64` payload.
    Binary,
    /// Directory of `frame_%05d.pgm` (P5) files.
    PgmSequence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoTensor {
    width: usize,
    height: usize,
    frames: usize,
    data: Vec<f64>,
}

impl VideoTensor {
    pub fn new(width: usize, height: usize, frames: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || frames == 0 {
            return Err(Error::NonPositiveDimension(width, height, frames));
        }
        let expected = width
            .checked_mul(height)
            .and_then(|v| v.checked_mul(frames))
            .ok_or(Error::NonPositiveDimension(width, height, frames))?;
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                got: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(VideoTensor {
            width,
            height,
            frames,
            data,
        })
    }

    /// Builds a tensor by evaluating `f(m, n, τ)` at every lattice point.
    pub fn from_fn<F>(width: usize, height: usize, frames: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(usize, usize, usize) -> f64,
    {
        let mut data = Vec::with_capacity(width * height * frames);
        for tau in 0..frames {
            for n in 0..height {
                for m in 0..width {
                    data.push(f(m, n, tau));
                }
            }
        }
        VideoTensor::new(width, height, frames, data)
    }

    pub fn constant(width: usize, height: usize, frames: usize, value: f64) -> Result<Self> {
        VideoTensor::new(width, height, frames, vec![value; width * height * frames])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    /// `(M, N, T)`.
    pub fn dims(&self) -> [usize; 3] {
        [self.width, self.height, self.frames]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn frame_len(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, m: usize, n: usize, tau: usize) -> usize {
        debug_assert!(m < self.width && n < self.height && tau < self.frames);
        (tau * self.height + n) * self.width + m
    }

    /// Inverse of [`VideoTensor::index`].
    #[inline]
    pub fn coords(&self, index: usize) -> (usize, usize, usize) {
        let fl = self.frame_len();
        let tau = index / fl;
        let r = index % fl;
        (r % self.width, r / self.width, tau)
    }

    #[inline]
    pub fn get(&self, m: usize, n: usize, tau: usize) -> f64 {
        self.data[self.index(m, n, tau)]
    }

    pub fn frame(&self, tau: usize) -> &[f64] {
        let fl = self.frame_len();
        &self.data[tau * fl..(tau + 1) * fl]
    }

    /// Applies `x ↦ f(x)` elementwise; the result must stay finite.
    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Result<Self> {
        VideoTensor::new(
            self.width,
            self.height,
            self.frames,
            self.data.iter().map(|&x| f(x)).collect(),
        )
    }

    /// Every intensity `x` becomes `-x`. A valley of `f` is a ridge of `-f`.
    pub fn negate(&self) -> Self {
        VideoTensor {
            data: self.data.iter().map(|&x| -x).collect(),
            ..self.clone()
        }
    }

    /// `x ↦ a·x + b`.
    pub fn affine(&self, a: f64, b: f64) -> Result<Self> {
        self.map(|x| a * x + b)
    }

    /// Same frames in reverse temporal order.
    pub fn reversed_time(&self) -> Self {
        let fl = self.frame_len();
        let mut data = Vec::with_capacity(self.data.len());
        for tau in (0..self.frames).rev() {
            data.extend_from_slice(&self.data[tau * fl..(tau + 1) * fl]);
        }
        VideoTensor { data, ..self.clone() }
    }
}

/// Free-function form of [`VideoTensor::negate`].
pub fn negate(v: &VideoTensor) -> VideoTensor {
    v.negate()
}

/// Reads a tensor. For [`TensorFormat::PgmSequence`], `path` is a directory.
pub fn load_tensor(path: impl AsRef<Path>, format: TensorFormat) -> Result<VideoTensor> {
    match format {
        TensorFormat::Binary => binary::load(path.as_ref()),
        TensorFormat::PgmSequence => pgm::load_sequence(path.as_ref()),
    }
}

/// Writes a tensor. PGM export rounds to the nearest integer and fails when a
/// rounded value falls outside `[0, 65535]`; frames whose values all fit in
/// `[0, 255]` are written 8-bit, otherwise 16-bit big-endian.
pub fn save_tensor(v: &VideoTensor, path: impl AsRef<Path>, format: TensorFormat) -> Result<()> {
    match format {
        TensorFormat::Binary => binary::save(v, path.as_ref()),
        TensorFormat::PgmSequence => pgm::save_sequence(v, path.as_ref()),
    }
}
