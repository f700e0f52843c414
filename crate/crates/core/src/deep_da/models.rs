//! The three network assemblies: plain classifier, DANN, and ADDA, with
//! their loss gradients.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{argmax_rows, cross_entropy, grl_backward, Activation, Head, Mlp, MlpParams, MlpSpec};
use crate::dataset::Matrix;
use crate::error::{Error, Result};

/// Architecture shared by every deep method. The feature extractor maps
/// inputs to `feature_dim`; label predictor, domain classifier and ADDA
/// discriminator sit on top with `head_hidden` hidden layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepArch {
    #[serde(default)]
    pub extractor_hidden: Vec<usize>,
    pub feature_dim: usize,
    #[serde(default)]
    pub head_hidden: Vec<usize>,
    pub activation: Activation,
    #[serde(default = "activated")]
    pub extractor_head: Head,
}

fn activated() -> Head {
    Head::Activated
}

impl DeepArch {
    pub fn new(
        extractor_hidden: Vec<usize>,
        feature_dim: usize,
        head_hidden: Vec<usize>,
        activation: Activation,
    ) -> Self {
        DeepArch {
            extractor_hidden,
            feature_dim,
            head_hidden,
            activation,
            extractor_head: Head::Activated,
        }
    }

    pub fn extractor_spec(&self, n_inputs: usize) -> Result<MlpSpec> {
        let mut sizes = vec![n_inputs];
        sizes.extend(&self.extractor_hidden);
        sizes.push(self.feature_dim);
        MlpSpec::new(sizes, self.activation, self.extractor_head)
    }

    pub fn head_spec(&self, n_outputs: usize) -> Result<MlpSpec> {
        let mut sizes = vec![self.feature_dim];
        sizes.extend(&self.head_hidden);
        sizes.push(n_outputs);
        MlpSpec::new(sizes, self.activation, Head::Softmax)
    }
}

fn mean_scale(grads: &mut MlpParams, n: usize) {
    grads.scale(1.0 / n.max(1) as f64);
}

fn check_labels(labels: &[usize], n_classes: usize) -> Result<()> {
    if let Some(bad) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(Error::shape(format!("label {bad} outside {n_classes} classes")));
    }
    Ok(())
}

/// Feature extractor followed by a softmax label predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub extractor: Mlp,
    pub predictor: Mlp,
}

/// Mean-loss gradients of a [`Classifier`].
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierGrads {
    pub loss: f64,
    pub extractor: MlpParams,
    pub predictor: MlpParams,
}

impl Classifier {
    pub fn new<R: Rng>(arch: &DeepArch, n_inputs: usize, n_classes: usize, rng: &mut R) -> Result<Self> {
        Ok(Classifier {
            extractor: Mlp::new(arch.extractor_spec(n_inputs)?, rng)?,
            predictor: Mlp::new(arch.head_spec(n_classes)?, rng)?,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.predictor.spec.output_width()
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        self.predictor.output(&self.extractor.output(x)?)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.predict_proba(x)?))
    }

    /// Gradients of the mean cross-entropy over the batch.
    pub fn gradients(&self, x: &Matrix, labels: &[usize]) -> Result<ClassifierGrads> {
        check_labels(labels, self.n_classes())?;
        let (features, ext_cache) = self.extractor.forward(x)?;
        let (probs, pred_cache) = self.predictor.forward(&features)?;
        let (loss, dlogits) = cross_entropy(&probs, labels)?;
        let (mut predictor, dfeatures) = self.predictor.backward(&pred_cache, &dlogits)?;
        let (mut extractor, _) = self.extractor.backward(&ext_cache, &dfeatures)?;
        let n = labels.len();
        mean_scale(&mut predictor, n);
        mean_scale(&mut extractor, n);
        Ok(ClassifierGrads {
            loss: loss / n.max(1) as f64,
            extractor,
            predictor,
        })
    }

    pub fn parameter_values(&self) -> Vec<f64> {
        let mut v = self.extractor.params.to_flat();
        v.extend(self.predictor.params.to_flat());
        v
    }
}

/// Domain-adversarial network: extractor, label predictor, and a domain
/// classifier attached through a gradient-reversal layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DannModel {
    pub extractor: Mlp,
    pub predictor: Mlp,
    pub domain: Mlp,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DannGrads {
    pub class_loss: f64,
    pub domain_loss: f64,
    /// Classification gradient plus the reversed domain gradient.
    pub extractor: MlpParams,
    pub predictor: MlpParams,
    pub domain: MlpParams,
}

impl DannModel {
    pub fn new<R: Rng>(arch: &DeepArch, n_inputs: usize, n_classes: usize, lambda: f64, rng: &mut R) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::config("lambda", "must be a non-negative real"));
        }
        Ok(DannModel {
            extractor: Mlp::new(arch.extractor_spec(n_inputs)?, rng)?,
            predictor: Mlp::new(arch.head_spec(n_classes)?, rng)?,
            domain: Mlp::new(arch.head_spec(2)?, rng)?,
            lambda,
        })
    }

    /// The extractor and label predictor as a plain classifier.
    pub fn classifier(&self) -> Classifier {
        Classifier {
            extractor: self.extractor.clone(),
            predictor: self.predictor.clone(),
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.predictor.output(&self.extractor.output(x)?)?))
    }

    /// Domain-classifier predictions (0 = source, 1 = target).
    pub fn predict_domain(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.domain.output(&self.extractor.output(x)?)?))
    }

    /// Gradients for one step: mean classification loss on the source batch
    /// and mean domain loss on the stacked (source = 0, target = 1) batch.
    pub fn gradients(&self, xs: &Matrix, ys: &[usize], xt: &Matrix) -> Result<DannGrads> {
        let class = self.classifier().gradients(xs, ys)?;

        let mut stacked = Matrix::zeros(xs.nrows() + xt.nrows(), xs.ncols());
        stacked.rows_mut(0, xs.nrows()).copy_from(xs);
        stacked.rows_mut(xs.nrows(), xt.nrows()).copy_from(xt);
        let domain_labels: Vec<usize> = (0..stacked.nrows()).map(|i| usize::from(i >= xs.nrows())).collect();

        let (features, ext_cache) = self.extractor.forward(&stacked)?;
        let (probs, dom_cache) = self.domain.forward(&features)?;
        let (loss, dlogits) = cross_entropy(&probs, &domain_labels)?;
        let (mut domain, dfeatures) = self.domain.backward(&dom_cache, &dlogits)?;
        let reversed = grl_backward(&dfeatures, self.lambda);
        let (mut ext_domain, _) = self.extractor.backward(&ext_cache, &reversed)?;
        let n = domain_labels.len();
        mean_scale(&mut domain, n);
        mean_scale(&mut ext_domain, n);

        let mut extractor = class.extractor;
        extractor.add_assign(&ext_domain);
        Ok(DannGrads {
            class_loss: class.loss,
            domain_loss: loss / n.max(1) as f64,
            extractor,
            predictor: class.predictor,
            domain,
        })
    }

    pub fn parameter_values(&self) -> Vec<f64> {
        let mut v = self.extractor.params.to_flat();
        v.extend(self.predictor.params.to_flat());
        v.extend(self.domain.params.to_flat());
        v
    }
}

/// Adversarial discriminative adaptation: a source encoder and classifier
/// trained on labels, then a target encoder trained against a discriminator.
#[derive(Debug, Clone, PartialEq)]
pub struct AddaModel {
    pub source_encoder: Mlp,
    pub target_encoder: Mlp,
    pub classifier: Mlp,
    pub discriminator: Mlp,
}

impl AddaModel {
    pub fn new<R: Rng>(arch: &DeepArch, n_inputs: usize, n_classes: usize, rng: &mut R) -> Result<Self> {
        let source_encoder = Mlp::new(arch.extractor_spec(n_inputs)?, rng)?;
        Ok(AddaModel {
            target_encoder: source_encoder.clone(),
            source_encoder,
            classifier: Mlp::new(arch.head_spec(n_classes)?, rng)?,
            discriminator: Mlp::new(arch.head_spec(2)?, rng)?,
        })
    }

    pub fn source_classifier(&self) -> Classifier {
        Classifier {
            extractor: self.source_encoder.clone(),
            predictor: self.classifier.clone(),
        }
    }

    pub fn predict_source(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.classifier.output(&self.source_encoder.output(x)?)?))
    }

    pub fn predict_target(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.classifier.output(&self.target_encoder.output(x)?)?))
    }

    /// Discriminator predictions on encodings (0 = source encoder, 1 = target encoder).
    pub fn discriminate(&self, encodings: &Matrix) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.discriminator.output(encodings)?))
    }

    /// Mean discriminator loss: `E_S(xs)` labelled 0, `E_T(xt)` labelled 1.
    pub fn discriminator_gradients(&self, xs: &Matrix, xt: &Matrix) -> Result<(f64, MlpParams)> {
        let es = self.source_encoder.output(xs)?;
        let et = self.target_encoder.output(xt)?;
        let mut stacked = Matrix::zeros(es.nrows() + et.nrows(), es.ncols());
        stacked.rows_mut(0, es.nrows()).copy_from(&es);
        stacked.rows_mut(es.nrows(), et.nrows()).copy_from(&et);
        let labels: Vec<usize> = (0..stacked.nrows()).map(|i| usize::from(i >= es.nrows())).collect();
        let (probs, cache) = self.discriminator.forward(&stacked)?;
        let (loss, dlogits) = cross_entropy(&probs, &labels)?;
        let (mut grads, _) = self.discriminator.backward(&cache, &dlogits)?;
        mean_scale(&mut grads, labels.len());
        Ok((loss / labels.len().max(1) as f64, grads))
    }

    /// Mean inverted-label loss of the target encoder: `D(E_T(xt))` scored
    /// against the source label 0, differentiated into `E_T` only.
    pub fn target_encoder_gradients(&self, xt: &Matrix) -> Result<(f64, MlpParams)> {
        let (et, enc_cache) = self.target_encoder.forward(xt)?;
        let (probs, disc_cache) = self.discriminator.forward(&et)?;
        let labels = vec![0usize; xt.nrows()];
        let (loss, dlogits) = cross_entropy(&probs, &labels)?;
        let (_, denc) = self.discriminator.backward(&disc_cache, &dlogits)?;
        let (mut grads, _) = self.target_encoder.backward(&enc_cache, &denc)?;
        mean_scale(&mut grads, labels.len());
        Ok((loss / labels.len().max(1) as f64, grads))
    }

    pub fn parameter_values(&self) -> Vec<f64> {
        let mut v = self.source_encoder.params.to_flat();
        v.extend(self.target_encoder.params.to_flat());
        v.extend(self.classifier.params.to_flat());
        v.extend(self.discriminator.params.to_flat());
        v
    }
}
