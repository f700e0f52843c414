//! EEG-style feature extraction: Butterworth bandpass filtering, per-band
//! differential entropy and Common Spatial Patterns.

mod butterworth;
mod csp;
mod de;

pub use butterworth::{butter_bandpass, design_bandpass, filtfilt, sos_magnitude, sosfilt, sosfilt_zi, Sos};
pub use csp::{csp_features, csp_fit, CspModel};
pub use de::{
    de_windows, differential_entropy, seed_bands, smooth_moving_average, BandSpec, DeFeatures, DE_VARIANCE_FLOOR,
};

use crate::dataset::Matrix;
use crate::error::{Error, Result};

/// A multichannel recording: rows are channels, columns are time samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalEpoch {
    samples: Matrix,
    fs: f64,
}

impl SignalEpoch {
    pub fn new(samples: Matrix, fs: f64) -> Result<Self> {
        if !(fs > 0.0) || !fs.is_finite() {
            return Err(Error::config("fs", format!("sampling rate must be positive, got {fs}")));
        }
        if samples.ncols() < 2 {
            return Err(Error::shape(format!(
                "epoch needs at least 2 time samples, got {}",
                samples.ncols()
            )));
        }
        if samples.nrows() == 0 {
            return Err(Error::shape("epoch has no channels"));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("epoch contains non-finite samples".into()));
        }
        Ok(SignalEpoch { samples, fs })
    }

    pub fn samples(&self) -> &Matrix {
        &self.samples
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn n_channels(&self) -> usize {
        self.samples.nrows()
    }

    pub fn n_times(&self) -> usize {
        self.samples.ncols()
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.samples.row(c).iter().copied().collect()
    }
}

/// Mean and population variance of a slice.
pub(crate) fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}
