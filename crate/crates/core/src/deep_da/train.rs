//! Mini-batch Adam training loops with early stopping on source-side
//! validation accuracy.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::models::{AddaModel, Classifier, DannModel};
use crate::dataset::{stratified_split_labels, Matrix};
use crate::error::{Error, Result};
use crate::exec::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 200,
            patience: 20,
            seed: 0,
            val_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        // a zero rate is allowed: it freezes the network, which is useful for audits
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::config("learning_rate", "must be a non-negative real"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("max_epochs", "must be at least 1"));
        }
        if self.patience == 0 {
            return Err(Error::config("patience", "must be at least 1"));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::config("val_fraction", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    /// 1-based epoch whose snapshot was returned.
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub val_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AddaOptions {
    pub adversarial_epochs: usize,
    /// Learning rate of the adversarial stage; the stage-one rate when absent.
    pub adversarial_lr: Option<f64>,
}

impl Default for AddaOptions {
    fn default() -> Self {
        AddaOptions {
            adversarial_epochs: 30,
            adversarial_lr: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AddaReport {
    pub source: TrainReport,
    pub adversarial_epochs: usize,
    pub final_discriminator_loss: Option<f64>,
}

fn accuracy_of(pred: &[usize], actual: &[usize]) -> f64 {
    let hits = pred.iter().zip(actual).filter(|(a, b)| a == b).count();
    hits as f64 / actual.len().max(1) as f64
}

fn require_two_classes(labels: &[usize]) -> Result<()> {
    let first = labels
        .first()
        .ok_or_else(|| Error::EmptyInput("no labelled rows".into()))?;
    if labels.iter().all(|l| l == first) {
        return Err(Error::DegenerateLabels("training needs at least two classes".into()));
    }
    Ok(())
}

/// Shuffled index stream that reshuffles whenever it wraps.
struct BatchStream {
    idx: Vec<usize>,
    pos: usize,
}

impl BatchStream {
    fn new(mut idx: Vec<usize>, rng: &mut ChaCha8Rng) -> Self {
        idx.shuffle(rng);
        BatchStream { idx, pos: 0 }
    }

    fn n_batches(&self, batch: usize) -> usize {
        self.idx.len().div_ceil(batch)
    }

    fn next(&mut self, batch: usize, rng: &mut ChaCha8Rng) -> &[usize] {
        if self.pos >= self.idx.len() {
            self.idx.shuffle(rng);
            self.pos = 0;
        }
        let end = (self.pos + batch).min(self.idx.len());
        let out = &self.idx[self.pos..end];
        self.pos = end;
        out
    }
}

struct EarlyStopping<T> {
    patience: usize,
    best: Option<(f64, usize, T)>,
    since_best: usize,
    history: Vec<f64>,
}

impl<T: Clone> EarlyStopping<T> {
    fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            since_best: 0,
            history: Vec::new(),
        }
    }

    /// Records an epoch; returns true when training should stop.
    fn observe(&mut self, acc: f64, model: &T) -> bool {
        self.history.push(acc);
        let epoch = self.history.len();
        let improved = self.best.as_ref().is_none_or(|(b, _, _)| acc > *b);
        if improved {
            self.best = Some((acc, epoch, model.clone()));
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        self.since_best >= self.patience
    }

    fn finish(self) -> (T, TrainReport) {
        let epochs_run = self.history.len();
        let (acc, epoch, model) = self.best.expect("at least one epoch ran");
        (
            model,
            TrainReport {
                epochs_run,
                best_epoch: epoch,
                best_val_accuracy: acc,
                val_history: self.history,
            },
        )
    }
}

/// Trains extractor + label predictor by mean cross-entropy.
pub fn train_plain(
    mut model: Classifier,
    x: &Matrix,
    y: &[usize],
    cfg: &TrainConfig,
) -> Result<(Classifier, TrainReport)> {
    cfg.validate()?;
    if x.nrows() != y.len() {
        return Err(Error::shape("label count differs from row count"));
    }
    require_two_classes(y)?;
    let all: Vec<usize> = (0..y.len()).collect();
    let (train_idx, val_idx) = stratified_split_labels(y, &all, cfg.val_fraction, derive_seed(cfg.seed, &["val"]))?;
    let x_val = x.select_rows(&val_idx);
    let y_val: Vec<usize> = val_idx.iter().map(|&i| y[i]).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ext_state = AdamState::for_params(&model.extractor.params);
    let mut pred_state = AdamState::for_params(&model.predictor.params);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut stream = BatchStream::new(train_idx, &mut rng);

    for _ in 0..cfg.max_epochs {
        for _ in 0..stream.n_batches(cfg.batch_size) {
            let batch = stream.next(cfg.batch_size, &mut rng).to_vec();
            let xb = x.select_rows(&batch);
            let yb: Vec<usize> = batch.iter().map(|&i| y[i]).collect();
            let g = model.gradients(&xb, &yb)?;
            adam_step(
                &mut model.extractor.params,
                &g.extractor,
                &mut ext_state,
                cfg.learning_rate,
            )?;
            adam_step(
                &mut model.predictor.params,
                &g.predictor,
                &mut pred_state,
                cfg.learning_rate,
            )?;
        }
        let acc = accuracy_of(&model.predict(&x_val)?, &y_val);
        if stopper.observe(acc, &model) {
            break;
        }
    }
    Ok(stopper.finish())
}

/// Domain-adversarial training. Target rows are unlabelled; validation uses
/// a stratified source hold-out only.
pub fn train_dann(
    mut model: DannModel,
    xs: &Matrix,
    ys: &[usize],
    xt: &Matrix,
    cfg: &TrainConfig,
) -> Result<(DannModel, TrainReport)> {
    cfg.validate()?;
    if xt.nrows() == 0 {
        return Err(Error::EmptyInput("DANN needs target rows".into()));
    }
    if xs.nrows() != ys.len() {
        return Err(Error::shape("label count differs from row count"));
    }
    require_two_classes(ys)?;
    let all: Vec<usize> = (0..ys.len()).collect();
    let (train_idx, val_idx) = stratified_split_labels(ys, &all, cfg.val_fraction, derive_seed(cfg.seed, &["val"]))?;
    let x_val = xs.select_rows(&val_idx);
    let y_val: Vec<usize> = val_idx.iter().map(|&i| ys[i]).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ext_state = AdamState::for_params(&model.extractor.params);
    let mut pred_state = AdamState::for_params(&model.predictor.params);
    let mut dom_state = AdamState::for_params(&model.domain.params);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut source = BatchStream::new(train_idx, &mut rng);
    let mut target = BatchStream::new((0..xt.nrows()).collect(), &mut rng);

    for _ in 0..cfg.max_epochs {
        let n_batches = source.n_batches(cfg.batch_size).max(target.n_batches(cfg.batch_size));
        for _ in 0..n_batches {
            let sb = source.next(cfg.batch_size, &mut rng).to_vec();
            let tb = target.next(cfg.batch_size, &mut rng).to_vec();
            let xb = xs.select_rows(&sb);
            let yb: Vec<usize> = sb.iter().map(|&i| ys[i]).collect();
            let g = model.gradients(&xb, &yb, &xt.select_rows(&tb))?;
            adam_step(
                &mut model.extractor.params,
                &g.extractor,
                &mut ext_state,
                cfg.learning_rate,
            )?;
            adam_step(
                &mut model.predictor.params,
                &g.predictor,
                &mut pred_state,
                cfg.learning_rate,
            )?;
            adam_step(&mut model.domain.params, &g.domain, &mut dom_state, cfg.learning_rate)?;
        }
        let acc = accuracy_of(&model.predict(&x_val)?, &y_val);
        if stopper.observe(acc, &model) {
            break;
        }
    }
    Ok(stopper.finish())
}

/// Two-stage adversarial discriminative adaptation.
///
/// Stage one trains source encoder and classifier as [`train_plain`] does.
/// Stage two freezes both, starts the target encoder from the source
/// encoder, and alternates one discriminator step with one target-encoder
/// step (inverted labels) per batch pair for a fixed number of epochs.
pub fn train_adda(
    model: AddaModel,
    xs: &Matrix,
    ys: &[usize],
    xt: &Matrix,
    cfg: &TrainConfig,
    opts: &AddaOptions,
) -> Result<(AddaModel, AddaReport)> {
    cfg.validate()?;
    if xt.nrows() == 0 {
        return Err(Error::EmptyInput("ADDA needs target rows".into()));
    }
    let lr = opts.adversarial_lr.unwrap_or(cfg.learning_rate);
    if !(lr.is_finite() && lr >= 0.0) {
        return Err(Error::config("adversarial_lr", "must be a non-negative real"));
    }
    let (source, source_report) = train_plain(model.source_classifier(), xs, ys, cfg)?;
    let mut model = AddaModel {
        target_encoder: source.extractor.clone(),
        source_encoder: source.extractor,
        classifier: source.predictor,
        discriminator: model.discriminator,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &["adversarial"]));
    let mut disc_state = AdamState::for_params(&model.discriminator.params);
    let mut enc_state = AdamState::for_params(&model.target_encoder.params);
    let mut src = BatchStream::new((0..xs.nrows()).collect(), &mut rng);
    let mut tgt = BatchStream::new((0..xt.nrows()).collect(), &mut rng);
    let mut last_loss = None;
    for _ in 0..opts.adversarial_epochs {
        let n_batches = src.n_batches(cfg.batch_size).max(tgt.n_batches(cfg.batch_size));
        for _ in 0..n_batches {
            let xb_s = xs.select_rows(src.next(cfg.batch_size, &mut rng));
            let xb_t = xt.select_rows(tgt.next(cfg.batch_size, &mut rng));
            let (d_loss, d_grads) = model.discriminator_gradients(&xb_s, &xb_t)?;
            adam_step(&mut model.discriminator.params, &d_grads, &mut disc_state, lr)?;
            let (_, e_grads) = model.target_encoder_gradients(&xb_t)?;
            adam_step(&mut model.target_encoder.params, &e_grads, &mut enc_state, lr)?;
            last_loss = Some(d_loss);
        }
    }
    Ok((
        model,
        AddaReport {
            source: source_report,
            adversarial_epochs: opts.adversarial_epochs,
            final_discriminator_loss: last_loss,
        },
    ))
}
