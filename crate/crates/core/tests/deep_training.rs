mod common;

use common::*;
use normda::dataset::Matrix;
use normda::deep_da::*;
use normda::shallow_da::{mmd_sq, KernelSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn summed_ce(spec: &MlpSpec, theta: &[f64], x: &Matrix, y: &[usize]) -> f64 {
    let mut p = MlpParams::zeros_like(spec);
    p.set_flat(theta);
    let (probs, _) = forward(spec, &p, x).unwrap();
    cross_entropy(&probs, y).unwrap().0
}

#[test]
fn plain_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for act in [Activation::Sigmoid, Activation::leaky(), Activation::Relu] {
        let spec = MlpSpec::new(vec![4, 2, 3], act, Head::Softmax).unwrap();
        let net = Mlp::new(spec.clone(), &mut rng).unwrap();
        let x = gaussian_matrix(8, 4, 2);
        let y = [0, 1, 2, 0, 1, 2, 0, 1];
        let (probs, cache) = net.forward(&x).unwrap();
        let (_, up) = cross_entropy(&probs, &y).unwrap();
        let (g, _) = net.backward(&cache, &up).unwrap();
        let f = |t: &[f64]| summed_ce(&spec, t, &x, &y);
        let (err, n) = max_fd_error(&f, &net.params.to_flat(), &g.to_flat(), 100, &mut rng);
        assert_eq!(n, 4 * 2 + 2 + 2 * 3 + 3);
        assert!(err < 1e-4, "{act:?}: {err}");
    }
}

#[test]
fn input_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let spec = MlpSpec::new(vec![3, 5, 4], Activation::Sigmoid, Head::Activated).unwrap();
    let net = Mlp::new(spec, &mut rng).unwrap();
    let x = gaussian_matrix(2, 3, 4);
    let up = gaussian_matrix(2, 4, 5);
    let (_, cache) = net.forward(&x).unwrap();
    let (_, gin) = net.backward(&cache, &up).unwrap();
    // scalar objective <output, up>
    let f = |t: &[f64]| {
        let xi = Matrix::from_column_slice(2, 3, t);
        net.output(&xi).unwrap().component_mul(&up).sum()
    };
    let (err, _) = max_fd_error(&f, x.as_slice(), gin.as_slice(), 100, &mut rng);
    assert!(err < 1e-4, "{err}");
}

fn arch(feature: usize, act: Activation) -> DeepArch {
    DeepArch::new(vec![6], feature, vec![4], act)
}

#[test]
fn grl_composite_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let model = DannModel::new(&arch(3, Activation::Sigmoid), 5, 3, 0.7, &mut rng).unwrap();
    let xs = gaussian_matrix(8, 5, 8);
    let ys = [0, 1, 2, 2, 1, 0, 1, 2];
    let xt = gaussian_matrix(6, 5, 9);
    let g = model.gradients(&xs, &ys, &xt).unwrap();
    let objective = |t: &[f64]| {
        let mut m = model.clone();
        m.extractor.params.set_flat(t);
        let g = m.gradients(&xs, &ys, &xt).unwrap();
        g.class_loss - m.lambda * g.domain_loss
    };
    let (err, n) = max_fd_error(
        &objective,
        &model.extractor.params.to_flat(),
        &g.extractor.to_flat(),
        100,
        &mut rng,
    );
    assert!(n >= 50);
    assert!(err < 1e-4, "{err}");

    // predictor and domain head descend their own losses
    let pred_obj = |t: &[f64]| {
        let mut m = model.clone();
        m.predictor.params.set_flat(t);
        m.gradients(&xs, &ys, &xt).unwrap().class_loss
    };
    let (err, _) = max_fd_error(
        &pred_obj,
        &model.predictor.params.to_flat(),
        &g.predictor.to_flat(),
        100,
        &mut rng,
    );
    assert!(err < 1e-4, "{err}");
    let dom_obj = |t: &[f64]| {
        let mut m = model.clone();
        m.domain.params.set_flat(t);
        m.gradients(&xs, &ys, &xt).unwrap().domain_loss
    };
    let (err, _) = max_fd_error(
        &dom_obj,
        &model.domain.params.to_flat(),
        &g.domain.to_flat(),
        100,
        &mut rng,
    );
    assert!(err < 1e-4, "{err}");
}

#[test]
fn adda_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut model = AddaModel::new(&arch(3, Activation::leaky()), 4, 2, &mut rng).unwrap();
    // give the target encoder its own weights
    model.target_encoder = Mlp::new(model.target_encoder.spec.clone(), &mut rng).unwrap();
    let xs = gaussian_matrix(7, 4, 11);
    let xt = gaussian_matrix(5, 4, 12);
    let (_, gd) = model.discriminator_gradients(&xs, &xt).unwrap();
    let d_obj = |t: &[f64]| {
        let mut m = model.clone();
        m.discriminator.params.set_flat(t);
        m.discriminator_gradients(&xs, &xt).unwrap().0
    };
    let (err, _) = max_fd_error(
        &d_obj,
        &model.discriminator.params.to_flat(),
        &gd.to_flat(),
        100,
        &mut rng,
    );
    assert!(err < 1e-4, "discriminator {err}");

    let (_, ge) = model.target_encoder_gradients(&xt).unwrap();
    let e_obj = |t: &[f64]| {
        let mut m = model.clone();
        m.target_encoder.params.set_flat(t);
        m.target_encoder_gradients(&xt).unwrap().0
    };
    let (err, _) = max_fd_error(
        &e_obj,
        &model.target_encoder.params.to_flat(),
        &ge.to_flat(),
        100,
        &mut rng,
    );
    assert!(err < 1e-4, "target encoder {err}");
}

#[test]
fn zero_lambda_extractor_gradient_equals_plain() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let model = DannModel::new(&arch(4, Activation::Relu), 5, 2, 0.0, &mut rng).unwrap();
    let xs = gaussian_matrix(16, 5, 14);
    let ys: Vec<usize> = (0..16).map(|i| i % 2).collect();
    let xt = gaussian_matrix(16, 5, 15);
    let dann = model.gradients(&xs, &ys, &xt).unwrap();
    let plain = model.classifier().gradients(&xs, &ys).unwrap();
    assert_eq!(dann.extractor.to_flat(), plain.extractor.to_flat());
    assert_eq!(dann.predictor, plain.predictor);
    // the domain head still learns
    assert!(dann.domain.to_flat().iter().any(|v| *v != 0.0));
}

#[test]
fn plain_training_separates_blobs() {
    let (x, y) = blobs(100, 2, 8.0, 0.0, 21);
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let clf = Classifier::new(&arch(4, Activation::Relu), 2, 2, &mut rng).unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.01,
        max_epochs: 200,
        seed: 3,
        ..Default::default()
    };
    let (trained, report) = train_plain(clf, &x, &y, &cfg).unwrap();
    assert!(report.epochs_run <= 200);
    let acc = accuracy(&trained.predict(&x).unwrap(), &y);
    assert!(acc >= 0.99, "train accuracy {acc}");
}

#[test]
fn zero_rate_stops_after_two_epochs_with_initial_snapshot() {
    let (x, y) = blobs(30, 2, 4.0, 0.0, 23);
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let clf = Classifier::new(&arch(3, Activation::Relu), 2, 2, &mut rng).unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.0,
        patience: 1,
        ..Default::default()
    };
    let (trained, report) = train_plain(clf.clone(), &x, &y, &cfg).unwrap();
    assert_eq!(report.epochs_run, 2);
    assert_eq!(report.best_epoch, 1);
    assert_eq!(trained, clf);
}

#[test]
fn training_is_deterministic() {
    let (x, y) = blobs(40, 3, 3.0, 0.0, 25);
    let xt = gaussian_matrix(50, 3, 26);
    let cfg = TrainConfig {
        learning_rate: 0.01,
        max_epochs: 15,
        seed: 9,
        ..Default::default()
    };
    let run_plain = || {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let clf = Classifier::new(&arch(4, Activation::Sigmoid), 3, 2, &mut rng).unwrap();
        train_plain(clf, &x, &y, &cfg).unwrap()
    };
    assert_eq!(run_plain().0, run_plain().0);
    let run_dann = || {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = DannModel::new(&arch(4, Activation::Sigmoid), 3, 2, 1.0, &mut rng).unwrap();
        train_dann(m, &x, &y, &xt, &cfg).unwrap().0
    };
    assert_eq!(run_dann(), run_dann());
}

#[test]
fn dann_with_identical_domains_cannot_tell_them_apart() {
    let (x, y) = blobs(100, 4, 4.0, 0.0, 27);
    let mut rng = ChaCha8Rng::seed_from_u64(28);
    let m = DannModel::new(&arch(8, Activation::Relu), 4, 2, 1.0, &mut rng).unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.005,
        max_epochs: 60,
        seed: 4,
        ..Default::default()
    };
    let (trained, _) = train_dann(m, &x, &y, &x, &cfg).unwrap();
    // every row appears once as source (0) and once as target (1)
    let pred = trained.predict_domain(&x).unwrap();
    let truth: Vec<usize> = vec![0; x.nrows()].into_iter().chain(vec![1; x.nrows()]).collect();
    let both: Vec<usize> = pred.iter().chain(&pred).copied().collect();
    let acc = accuracy(&both, &truth);
    assert!((0.4..=0.6).contains(&acc), "domain accuracy {acc}");
}

#[test]
fn dann_reduces_feature_discrepancy() {
    let (xs, ys) = blobs(100, 4, 4.0, 0.0, 29);
    let (xt, _) = blobs(100, 4, 4.0, 3.0, 30);
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let m = DannModel::new(&arch(4, Activation::leaky()), 4, 2, 1.0, &mut rng).unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.005,
        max_epochs: 80,
        seed: 5,
        ..Default::default()
    };
    let (trained, _) = train_dann(m, &xs, &ys, &xt, &cfg).unwrap();
    let raw = mmd_sq(&xs, &xt, &KernelSpec::Linear).unwrap();
    let fs = trained.extractor.output(&xs).unwrap();
    let ft = trained.extractor.output(&xt).unwrap();
    let feat = mmd_sq(&fs, &ft, &KernelSpec::Linear).unwrap();
    assert!(feat < raw, "features {feat} vs raw {raw}");
}

fn linear_arch() -> DeepArch {
    DeepArch {
        extractor_hidden: vec![],
        feature_dim: 2,
        head_hidden: vec![8],
        activation: Activation::leaky(),
        extractor_head: Head::Identity,
    }
}

#[test]
fn adda_without_adversarial_epochs_copies_the_source_encoder() {
    let (xs, ys) = blobs(60, 2, 4.0, 0.0, 32);
    let (xt, yt) = blobs(60, 2, 4.0, 2.0, 33);
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let m = AddaModel::new(&linear_arch(), 2, 2, &mut rng).unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.01,
        max_epochs: 30,
        ..Default::default()
    };
    let opts = AddaOptions {
        adversarial_epochs: 0,
        adversarial_lr: None,
    };
    let (trained, report) = train_adda(m, &xs, &ys, &xt, &cfg, &opts).unwrap();
    assert_eq!(trained.target_encoder, trained.source_encoder);
    assert!(report.final_discriminator_loss.is_none());
    assert_eq!(
        accuracy(&trained.predict_target(&xt).unwrap(), &yt),
        accuracy(&trained.predict_source(&xt).unwrap(), &yt)
    );
}

#[test]
fn adda_improves_on_translated_target() {
    // 2-D blobs separated along the first axis, target translated by 5 noise units
    let (xs, ys) = blobs(150, 2, 5.0, 0.0, 35);
    let mut xt = blobs(150, 2, 5.0, 0.0, 36).0;
    let yt: Vec<usize> = (0..300).map(|i| i % 2).collect();
    for i in 0..xt.nrows() {
        xt[(i, 0)] += 5.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    let m = AddaModel::new(&linear_arch(), 2, 2, &mut rng).unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.01,
        max_epochs: 100,
        seed: 2,
        ..Default::default()
    };
    let opts = AddaOptions {
        adversarial_epochs: 40,
        adversarial_lr: Some(0.002),
    };
    let (trained, _) = train_adda(m, &xs, &ys, &xt, &cfg, &opts).unwrap();
    let before = accuracy(&trained.predict_source(&xt).unwrap(), &yt);
    let after = accuracy(&trained.predict_target(&xt).unwrap(), &yt);
    assert!(after > before, "target encoder {after} vs source encoder {before}");
}

#[test]
fn adda_discriminator_is_confused_on_identical_domains() {
    let (x, y) = blobs(100, 3, 4.0, 0.0, 38);
    let (held, _) = blobs(100, 3, 4.0, 0.0, 39);
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let arch = DeepArch::new(vec![], 4, vec![8], Activation::leaky());
    let m = AddaModel::new(&arch, 3, 2, &mut rng).unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.01,
        max_epochs: 40,
        seed: 6,
        ..Default::default()
    };
    let opts = AddaOptions {
        adversarial_epochs: 20,
        adversarial_lr: Some(0.001),
    };
    let (trained, _) = train_adda(m, &x, &y, &x, &cfg, &opts).unwrap();
    let es = trained.source_encoder.output(&held).unwrap();
    let et = trained.target_encoder.output(&held).unwrap();
    let ps = trained.discriminate(&es).unwrap();
    let pt = trained.discriminate(&et).unwrap();
    let correct = ps.iter().filter(|&&p| p == 0).count() + pt.iter().filter(|&&p| p == 1).count();
    let acc = correct as f64 / (2 * held.nrows()) as f64;
    assert!((0.4..=0.6).contains(&acc), "discriminator accuracy {acc}");
}
