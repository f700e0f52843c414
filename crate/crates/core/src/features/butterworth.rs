use std::f64::consts::PI;

use nalgebra::Complex;

use super::SignalEpoch;
use crate::dataset::Matrix;
use crate::error::{Error, Result};

type C64 = Complex<f64>;

/// One biquad: `[b0, b1, b2, a0, a1, a2]` with `a0 = 1`.
pub type Sos = [f64; 6];

/// Digital Butterworth bandpass of the given prototype order as second-order
/// sections, designed by analog prototype, lowpass-to-bandpass mapping and a
/// prewarped bilinear transform. Gain is 1 at the geometric centre frequency.
pub fn design_bandpass(low: f64, high: f64, order: usize, fs: f64) -> Result<Vec<Sos>> {
    if order == 0 {
        return Err(Error::Design("order must be at least 1".into()));
    }
    if !(fs > 0.0) {
        return Err(Error::Design(format!("sampling rate must be positive, got {fs}")));
    }
    let nyq = fs / 2.0;
    if !(low > 0.0 && low < high && high < nyq) {
        return Err(Error::Design(format!(
            "band [{low}, {high}] Hz must satisfy 0 < low < high < {nyq} (Nyquist)"
        )));
    }
    let fs2 = 2.0 * fs;
    let wl = fs2 * (PI * low / fs).tan();
    let wh = fs2 * (PI * high / fs).tan();
    let w0 = (wl * wh).sqrt();
    let bw = wh - wl;

    let n = order as f64;
    let mut poles = Vec::with_capacity(2 * order);
    for k in 0..order {
        let theta = PI * (2.0 * k as f64 + n + 1.0) / (2.0 * n);
        let p = C64::from_polar(1.0, theta);
        let half = p * (bw / 2.0);
        let disc = (half * half - C64::new(w0 * w0, 0.0)).sqrt();
        for s in [half + disc, half - disc] {
            poles.push((C64::new(fs2, 0.0) + s) / (C64::new(fs2, 0.0) - s));
        }
    }

    // pair conjugates; leftover real poles pair with each other
    let tol = 1e-12;
    let mut complex: Vec<C64> = poles.iter().copied().filter(|p| p.im > tol).collect();
    complex.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    let mut real: Vec<f64> = poles.iter().filter(|p| p.im.abs() <= tol).map(|p| p.re).collect();
    real.sort_by(f64::total_cmp);
    if complex.len() * 2 + real.len() != 2 * order || !real.len().is_multiple_of(2) {
        return Err(Error::Design("pole set is not conjugate-symmetric".into()));
    }
    let mut sos: Vec<Sos> = Vec::with_capacity(order);
    for pair in real.chunks(2) {
        sos.push([1.0, 0.0, -1.0, 1.0, -(pair[0] + pair[1]), pair[0] * pair[1]]);
    }
    for p in complex {
        sos.push([1.0, 0.0, -1.0, 1.0, -2.0 * p.re, p.norm_sqr()]);
    }

    let centre = 2.0 * (w0 / fs2).atan();
    let g = response(&sos, centre).norm();
    if !(g > 0.0) || !g.is_finite() {
        return Err(Error::Design("could not normalise passband gain".into()));
    }
    for c in &mut sos[0][..3] {
        *c /= g;
    }
    Ok(sos)
}

fn response(sos: &[Sos], omega: f64) -> C64 {
    let z1 = C64::from_polar(1.0, -omega);
    let z2 = z1 * z1;
    sos.iter().fold(C64::new(1.0, 0.0), |acc, s| {
        acc * (z1 * s[1] + z2 * s[2] + s[0]) / (z1 * s[4] + z2 * s[5] + s[3])
    })
}

/// |H| of the cascade at frequency `f` Hz.
pub fn sos_magnitude(sos: &[Sos], f: f64, fs: f64) -> f64 {
    response(sos, 2.0 * PI * f / fs).norm()
}

/// Cascade filtering in transposed direct form II. `zi` holds two state values
/// per section and is updated in place.
pub fn sosfilt(sos: &[Sos], x: &[f64], zi: &mut [[f64; 2]]) -> Vec<f64> {
    assert_eq!(zi.len(), sos.len());
    let mut y = x.to_vec();
    for (s, z) in sos.iter().zip(zi.iter_mut()) {
        for v in y.iter_mut() {
            let input = *v;
            let out = s[0] * input + z[0];
            z[0] = s[1] * input - s[4] * out + z[1];
            z[1] = s[2] * input - s[5] * out;
            *v = out;
        }
    }
    y
}

/// Per-section state giving the steady-state response to a unit step.
pub fn sosfilt_zi(sos: &[Sos]) -> Vec<[f64; 2]> {
    let mut scale = 1.0;
    sos.iter()
        .map(|s| {
            let (b0, b1, b2, a1, a2) = (s[0], s[1], s[2], s[4], s[5]);
            // (I - A^T) z = B, with A the companion matrix of a
            let r1 = b1 - a1 * b0;
            let r2 = b2 - a2 * b0;
            let det = (1.0 + a1) + a2;
            let z0 = (r1 + r2) / det;
            let z1 = r2 - a2 * z0;
            let zi = [scale * z0, scale * z1];
            scale *= (b0 + b1 + b2) / (1.0 + a1 + a2);
            zi
        })
        .collect()
}

/// Zero-phase forward-backward filtering with odd extension at both ends.
pub fn filtfilt(sos: &[Sos], x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 2 {
        return Err(Error::shape("filtfilt needs at least 2 samples"));
    }
    let pad = (3 * (2 * sos.len() + 1)).min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    for i in (1..=pad).rev() {
        ext.push(2.0 * x[0] - x[i]);
    }
    ext.extend_from_slice(x);
    for i in 1..=pad {
        ext.push(2.0 * x[n - 1] - x[n - 1 - i]);
    }
    let zi = sosfilt_zi(sos);
    let scaled = |z: &[[f64; 2]], k: f64| -> Vec<[f64; 2]> { z.iter().map(|s| [s[0] * k, s[1] * k]).collect() };

    let mut state = scaled(&zi, ext[0]);
    let mut y = sosfilt(sos, &ext, &mut state);
    y.reverse();
    let mut state = scaled(&zi, y[0]);
    let mut y = sosfilt(sos, &y, &mut state);
    y.reverse();
    Ok(y[pad..pad + n].to_vec())
}

/// Zero-phase Butterworth bandpass applied to every channel.
pub fn butter_bandpass(epoch: &SignalEpoch, low: f64, high: f64, order: usize) -> Result<SignalEpoch> {
    let sos = design_bandpass(low, high, order, epoch.fs())?;
    filter_epoch(epoch, &sos)
}

pub(crate) fn filter_epoch(epoch: &SignalEpoch, sos: &[Sos]) -> Result<SignalEpoch> {
    let (c, t) = (epoch.n_channels(), epoch.n_times());
    let mut out = Matrix::zeros(c, t);
    for ch in 0..c {
        let y = filtfilt(sos, &epoch.channel(ch))?;
        for (j, v) in y.into_iter().enumerate() {
            out[(ch, j)] = v;
        }
    }
    SignalEpoch::new(out, epoch.fs())
}

#[cfg(test)]
mod tests {
    use super::*;

    // |H| of scipy.signal.butter(5, [8, 30], btype="band", fs=250, output="sos")
    const REFERENCE: [(f64, f64); 10] = [
        (1.0, 7.036945160138631e-06),
        (2.0, 0.0002392799990052732),
        (5.0, 0.036536696261815174),
        (8.0, 0.7071067811865478),
        (12.0, 0.9999719072438437),
        (19.0, 0.999999013795663),
        (30.0, 0.7071067811865482),
        (40.0, 0.09008968138552188),
        (60.0, 0.0038609522389123686),
        (100.0, 8.271509853601905e-06),
    ];

    #[test]
    fn magnitude_matches_reference_design() {
        let sos = design_bandpass(8.0, 30.0, 5, 250.0).unwrap();
        assert_eq!(sos.len(), 5);
        for (f, expected) in REFERENCE {
            let got = sos_magnitude(&sos, f, 250.0);
            assert!(
                (got - expected).abs() <= 1e-9 * expected.max(1e-3),
                "{f} Hz: {got} vs {expected}"
            );
        }
    }

    #[test]
    fn filtfilt_matches_reference_output() {
        // scipy.signal.sosfiltfilt on the same design and signal
        let fs = 250.0;
        let x: Vec<f64> = (0..64)
            .map(|i| {
                let t = i as f64 / fs;
                (2.0 * PI * 20.0 * t).sin() + 0.5 * (2.0 * PI * 3.0 * t).cos() + 0.1 * i as f64 / 64.0
            })
            .collect();
        let sos = design_bandpass(8.0, 30.0, 5, fs).unwrap();
        let y = filtfilt(&sos, &x).unwrap();
        let expected = [
            (0, -0.022907944919659917),
            (1, 0.46940649495520537),
            (10, -0.937205171866194),
            (31, 0.13407415530631106),
            (50, 0.018462390303070952),
            (63, 0.08727595306100436),
        ];
        for (i, e) in expected {
            assert!((y[i] - e).abs() < 1e-9, "sample {i}: {} vs {e}", y[i]);
        }
    }

    #[test]
    fn rejects_bands_outside_nyquist() {
        assert!(matches!(design_bandpass(8.0, 130.0, 5, 250.0), Err(Error::Design(_))));
        assert!(matches!(design_bandpass(0.0, 30.0, 5, 250.0), Err(Error::Design(_))));
        assert!(matches!(design_bandpass(30.0, 8.0, 5, 250.0), Err(Error::Design(_))));
        assert!(matches!(design_bandpass(8.0, 30.0, 0, 250.0), Err(Error::Design(_))));
    }

    #[test]
    fn step_state_is_steady() {
        let sos = design_bandpass(1.0, 40.0, 3, 200.0).unwrap();
        let mut zi = sosfilt_zi(&sos);
        let y = sosfilt(&sos, &[1.0; 20], &mut zi);
        // bandpass DC gain is zero, so a settled step stays at zero
        assert!(y.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn every_order_is_stable_with_unit_centre_gain() {
        for order in 1..=8 {
            let sos = design_bandpass(4.0, 7.0, order, 200.0).unwrap();
            for s in &sos {
                assert!(s[5].abs() < 1.0, "order {order}");
            }
            let centre = (4.0f64 * 7.0).sqrt();
            let g = sos_magnitude(&sos, centre, 200.0);
            assert!(g <= 1.0 + 1e-9 && g > 0.9, "order {order}: {g}");
        }
    }
}
