use std::f64::consts::{E, PI};

use super::butterworth::{design_bandpass, filtfilt};
use super::SignalEpoch;
use crate::dataset::Matrix;
use crate::error::{Error, Result};

/// Standard deviation floor used when a band has zero variance.
pub const DE_VARIANCE_FLOOR: f64 = 1e-12;

/// Filter order used for per-band filtering inside [`differential_entropy`].
const DE_FILTER_ORDER: usize = 5;

/// A named frequency band. `edges = None` passes the signal through unfiltered.
#[derive(Debug, Clone, PartialEq)]
pub struct BandSpec {
    pub name: String,
    pub edges: Option<(f64, f64)>,
}

impl BandSpec {
    pub fn new(name: impl Into<String>, low: f64, high: f64) -> Self {
        BandSpec {
            name: name.into(),
            edges: Some((low, high)),
        }
    }

    pub fn broadband(name: impl Into<String>) -> Self {
        BandSpec {
            name: name.into(),
            edges: None,
        }
    }

    pub fn validate(&self, fs: f64) -> Result<()> {
        if let Some((low, high)) = self.edges {
            if !(low > 0.0 && low < high && high < fs / 2.0) {
                return Err(Error::Design(format!(
                    "band {} [{low}, {high}] Hz invalid at fs = {fs}",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// delta, theta, alpha, beta and gamma bands as used by SEED.
pub fn seed_bands() -> Vec<BandSpec> {
    vec![
        BandSpec::new("delta", 1.0, 3.0),
        BandSpec::new("theta", 4.0, 7.0),
        BandSpec::new("alpha", 8.0, 13.0),
        BandSpec::new("beta", 14.0, 30.0),
        BandSpec::new("gamma", 31.0, 50.0),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeFeatures {
    /// Channel-major, band-minor: index `channel * n_bands + band`.
    pub values: Vec<f64>,
    /// Indices whose variance fell below the floor.
    pub floored: Vec<usize>,
}

/// Gaussian differential entropy `0.5 ln(2 pi e var)` per channel and band, in
/// nats. Variance is the unbiased sample variance of the filtered channel.
pub fn differential_entropy(epoch: &SignalEpoch, bands: &[BandSpec]) -> Result<DeFeatures> {
    if bands.is_empty() {
        return Err(Error::EmptyInput("no bands given".into()));
    }
    for b in bands {
        b.validate(epoch.fs())?;
    }
    let designs = bands
        .iter()
        .map(|b| match b.edges {
            Some((lo, hi)) => design_bandpass(lo, hi, DE_FILTER_ORDER, epoch.fs()).map(Some),
            None => Ok(None),
        })
        .collect::<Result<Vec<_>>>()?;
    let mut values = Vec::with_capacity(epoch.n_channels() * bands.len());
    let mut floored = Vec::new();
    for ch in 0..epoch.n_channels() {
        let raw = epoch.channel(ch);
        for sos in &designs {
            let x = match sos {
                Some(s) => filtfilt(s, &raw)?,
                None => raw.clone(),
            };
            let mut var = unbiased_variance(&x);
            let floor = DE_VARIANCE_FLOOR * DE_VARIANCE_FLOOR;
            if !(var > floor) {
                floored.push(values.len());
                var = floor;
            }
            values.push(0.5 * (2.0 * PI * E * var).ln());
        }
    }
    Ok(DeFeatures { values, floored })
}

fn unbiased_variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
}

/// Splits a continuous recording into consecutive non-overlapping windows of
/// `window` samples (trailing remainder dropped) and returns one DE row per
/// window.
pub fn de_windows(recording: &SignalEpoch, bands: &[BandSpec], window: usize) -> Result<Matrix> {
    if window < 2 {
        return Err(Error::config("window", "must be at least 2 samples"));
    }
    let n = recording.n_times() / window;
    if n == 0 {
        return Err(Error::shape(format!(
            "recording of {} samples is shorter than one window of {window}",
            recording.n_times()
        )));
    }
    let width = recording.n_channels() * bands.len();
    let mut out = Matrix::zeros(n, width);
    for w in 0..n {
        let block = recording.samples().columns(w * window, window).into_owned();
        let epoch = SignalEpoch::new(block, recording.fs())?;
        let de = differential_entropy(&epoch, bands)?;
        for (j, v) in de.values.into_iter().enumerate() {
            out[(w, j)] = v;
        }
    }
    Ok(out)
}

/// Centered moving average over consecutive rows (windows shrink at the edges).
/// A simple stand-in for the linear dynamical system smoothing often applied to
/// DE sequences; the two are not equivalent.
pub fn smooth_moving_average(features: &Matrix, window: usize) -> Result<Matrix> {
    if window == 0 {
        return Err(Error::config("window", "must be at least 1"));
    }
    let n = features.nrows();
    let half = window / 2;
    let mut out = Matrix::zeros(n, features.ncols());
    for i in 0..n {
        let lo = i.saturating_sub(half);
        let hi = (i + window - half).min(n);
        let rows = features.rows(lo, hi - lo);
        for j in 0..features.ncols() {
            out[(i, j)] = rows.column(j).mean();
        }
    }
    Ok(out)
}
