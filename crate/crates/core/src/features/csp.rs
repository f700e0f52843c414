use super::SignalEpoch;
use crate::dataset::Matrix;
use crate::error::{Error, Result};
use crate::linalg::{fix_sign, inv_sqrt_spd, sym_eigen_desc};

/// Spatial filters from Common Spatial Patterns.
#[derive(Debug, Clone, PartialEq)]
pub struct CspModel {
    /// `n_components x channels`, rows ordered largest, smallest, second
    /// largest, second smallest, ... of the class-A variance fraction.
    pub filters: Matrix,
    /// Variance fraction of class A for each filter row.
    pub eigenvalues: Vec<f64>,
    /// Set when every eigenvalue is within 1e-6 of 0.5.
    pub non_discriminative: bool,
    /// Set when the pooled covariance needed diagonal loading.
    pub regularized: bool,
}

fn normalized_cov(ep: &SignalEpoch) -> Result<Matrix> {
    let mut x = ep.samples().clone();
    for mut row in x.row_iter_mut() {
        let m = row.mean();
        row.add_scalar_mut(-m);
    }
    let c = &x * x.transpose();
    let tr = c.trace();
    if !(tr > 0.0) {
        return Err(Error::DegenerateData("trial has zero variance on every channel".into()));
    }
    Ok(c / tr)
}

fn class_cov(trials: &[SignalEpoch], channels: usize, name: &str) -> Result<Matrix> {
    if trials.is_empty() {
        return Err(Error::EmptyInput(format!("class {name} has no trials")));
    }
    let mut acc = Matrix::zeros(channels, channels);
    for t in trials {
        if t.n_channels() != channels {
            return Err(Error::shape(format!(
                "trial has {} channels, expected {channels}",
                t.n_channels()
            )));
        }
        acc += normalized_cov(t)?;
    }
    Ok(acc / trials.len() as f64)
}

/// Fits CSP filters solving `S_a w = lambda (S_a + S_b) w`.
pub fn csp_fit(trials_a: &[SignalEpoch], trials_b: &[SignalEpoch], n_components: usize) -> Result<CspModel> {
    let channels = trials_a
        .first()
        .or(trials_b.first())
        .map(|t| t.n_channels())
        .ok_or_else(|| Error::EmptyInput("no trials".into()))?;
    if n_components == 0 || !n_components.is_multiple_of(2) || n_components > channels {
        return Err(Error::config(
            "n_components",
            format!("must be even, positive and at most {channels}, got {n_components}"),
        ));
    }
    let sa = class_cov(trials_a, channels, "a")?;
    let sb = class_cov(trials_b, channels, "b")?;
    let mut pooled = &sa + &sb;

    let mut regularized = false;
    let (vals, _) = sym_eigen_desc(&pooled)?;
    let max = vals[0];
    if !(vals[channels - 1] > max * 1e-12) {
        let load = 1e-9 * pooled.trace();
        for i in 0..channels {
            pooled[(i, i)] += load;
        }
        regularized = true;
    }
    let white =
        inv_sqrt_spd(&pooled).map_err(|e| Error::Numeric(format!("pooled covariance singular after loading: {e}")))?;
    let m = &white * &sa * &white;
    let (lambda, u) = sym_eigen_desc(&m)?;
    let w = &white * u;

    let mut order = Vec::with_capacity(n_components);
    for k in 0..n_components / 2 {
        order.push(k);
        order.push(channels - 1 - k);
    }
    let mut filters = Matrix::zeros(n_components, channels);
    let mut eigenvalues = Vec::with_capacity(n_components);
    for (r, &k) in order.iter().enumerate() {
        let mut v = w.column(k).into_owned();
        fix_sign(&mut v);
        filters.set_row(r, &v.transpose());
        eigenvalues.push(lambda[k]);
    }
    if filters.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite CSP filter".into()));
    }
    let non_discriminative = lambda.iter().all(|l| (l - 0.5).abs() < 1e-6);
    Ok(CspModel {
        filters,
        eigenvalues,
        non_discriminative,
        regularized,
    })
}

/// Normalized log-variance of the spatially filtered epoch.
pub fn csp_features(epoch: &SignalEpoch, model: &CspModel) -> Result<Vec<f64>> {
    if epoch.n_channels() != model.filters.ncols() {
        return Err(Error::shape(format!(
            "epoch has {} channels, filters expect {}",
            epoch.n_channels(),
            model.filters.ncols()
        )));
    }
    let z = &model.filters * epoch.samples();
    let vars: Vec<f64> = z
        .row_iter()
        .map(|r| {
            let v: Vec<f64> = r.iter().copied().collect();
            super::mean_var(&v).1
        })
        .collect();
    let total: f64 = vars.iter().sum();
    if !(total > 0.0) || vars.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::DegenerateData("filtered epoch has zero variance".into()));
    }
    Ok(vars.iter().map(|v| (v / total).ln()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn trials(scales: &[f64], n: usize, seed: u64) -> Vec<SignalEpoch> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let m = Matrix::from_fn(scales.len(), 200, |c, _| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    scales[c] * z
                });
                SignalEpoch::new(m, 250.0).unwrap()
            })
            .collect()
    }

    fn var(x: &Matrix) -> Vec<f64> {
        x.row_iter()
            .map(|r| super::super::mean_var(&r.iter().copied().collect::<Vec<_>>()).1)
            .collect()
    }

    #[test]
    fn two_channel_toy_separates_classes() {
        let a = trials(&[1.0, 0.01], 20, 1);
        let b = trials(&[0.01, 1.0], 20, 2);
        let model = csp_fit(&a, &b, 2).unwrap();
        assert_eq!(model.filters.shape(), (2, 2));
        let top = model.filters.rows(0, 1).into_owned();
        let va: f64 = a.iter().map(|t| var(&(&top * t.samples()))[0]).sum();
        let vb: f64 = b.iter().map(|t| var(&(&top * t.samples()))[0]).sum();
        assert!(va / vb > 10.0, "ratio {}", va / vb);
        assert!(model.eigenvalues[0] > 0.9 && model.eigenvalues[1] < 0.1);
        assert!(!model.non_discriminative);
    }

    #[test]
    fn identical_classes_are_flagged() {
        let a = trials(&[1.0, 2.0, 0.5], 5, 3);
        let model = csp_fit(&a, &a, 2).unwrap();
        assert!(model.non_discriminative);
        for l in &model.eigenvalues {
            assert!((l - 0.5).abs() < 1e-9);
        }
        // orthonormal under the pooled covariance
        let pooled = class_cov(&a, 3, "a").unwrap() * 2.0;
        let g = &model.filters * pooled * model.filters.transpose();
        assert!((g - Matrix::identity(2, 2)).amax() < 1e-9);
    }

    #[test]
    fn twenty_two_channels() {
        let s: Vec<f64> = (0..22).map(|i| 1.0 + i as f64 * 0.1).collect();
        let r: Vec<f64> = s.iter().rev().copied().collect();
        let model = csp_fit(&trials(&s, 6, 4), &trials(&r, 6, 5), 2).unwrap();
        assert_eq!(model.filters.shape(), (2, 22));
    }

    #[test]
    fn swapping_classes_swaps_component_pairs() {
        let a = trials(&[1.0, 0.3, 0.6, 0.2], 10, 6);
        let b = trials(&[0.2, 0.9, 0.4, 0.7], 10, 7);
        let ab = csp_fit(&a, &b, 4).unwrap();
        let ba = csp_fit(&b, &a, 4).unwrap();
        for k in 0..4 {
            let x = ab.filters.row(k);
            let y = ba.filters.row(k ^ 1);
            let same = (x - y).amax();
            let flipped = (x + y).amax();
            assert!(same.min(flipped) < 1e-8 * x.amax(), "row {k}");
            assert!((ab.eigenvalues[k] + ba.eigenvalues[k ^ 1] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn features_are_scale_invariant_log_fractions() {
        let a = trials(&[1.0, 0.3, 0.6], 8, 8);
        let b = trials(&[0.2, 0.9, 0.4], 8, 9);
        let model = csp_fit(&a, &b, 2).unwrap();
        let ep = &a[0];
        let f = csp_features(ep, &model).unwrap();
        let sum: f64 = f.iter().map(|v| v.exp()).sum();
        assert!((sum - 1.0).abs() < 1e-9);
        let doubled = SignalEpoch::new(ep.samples() * 2.0, ep.fs()).unwrap();
        let g = csp_features(&doubled, &model).unwrap();
        for (x, y) in f.iter().zip(&g) {
            assert!((x - y).abs() < 1e-9);
        }
        let zero = SignalEpoch::new(Matrix::zeros(3, 10), 250.0).unwrap();
        assert!(csp_features(&zero, &model).is_err());
        let wrong = SignalEpoch::new(Matrix::zeros(2, 10), 250.0).unwrap();
        assert!(matches!(csp_features(&wrong, &model), Err(Error::Shape(_))));
    }

    #[test]
    fn rank_deficient_pooled_covariance_is_loaded() {
        // third channel duplicates the first
        let mut a = trials(&[1.0, 0.2, 0.0], 4, 10);
        let mut b = trials(&[0.2, 1.0, 0.0], 4, 11);
        for t in a.iter_mut().chain(b.iter_mut()) {
            let mut m = t.samples().clone();
            let r0 = m.row(0).into_owned();
            m.set_row(2, &r0);
            *t = SignalEpoch::new(m, 250.0).unwrap();
        }
        let model = csp_fit(&a, &b, 2).unwrap();
        assert!(model.regularized);
        assert!(model.filters.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn rejects_bad_component_counts() {
        let a = trials(&[1.0, 0.5], 2, 12);
        assert!(csp_fit(&a, &a, 3).is_err());
        assert!(csp_fit(&a, &a, 4).is_err());
        assert!(csp_fit(&a, &[], 2).is_err());
    }
}
