//! Kernels, the MMD estimate, and the projection-based adaptation methods
//! (transfer component analysis and kernel PCA).

mod kernel;
mod kpca;
mod tca;

pub use kernel::{gram, gram_with, median_gamma, mmd_sq, KernelSpec};
pub use kpca::{kpca_fit, kpca_transform, KpcaModel, KPCA_RELATIVE_TOL};
pub use tca::{tca_fit, tca_transform, TcaModel};
