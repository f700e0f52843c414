//! Dense networks with hand-written gradients, Adam, and the three deep
//! training regimes: plain classifier, DANN and ADDA.

mod adam;
mod mlp;
mod models;
mod train;

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use mlp::{
    argmax_rows, backward, cross_entropy, forward, grl_backward, softmax_rows, Activation, ForwardCache, Head, Mlp,
    MlpParams, MlpSpec, MAX_HIDDEN_LAYERS,
};
pub use models::{AddaModel, Classifier, ClassifierGrads, DannGrads, DannModel, DeepArch};
pub use train::{train_adda, train_dann, train_plain, AddaOptions, AddaReport, TrainConfig, TrainReport};
