//! ℓ2-regularized logistic regression on separable data and the dynamics of
//! constant-stepsize gradient descent on it.
//!
//! The dataset, objective and optimizer layers are generic over [`Scalar`]
//! (`f32` or `f64`); reference solvers, analysis and I/O work in `f64`.

pub mod analysis;
pub mod constants;
pub mod datasets;
pub mod error;
pub mod io;
pub mod objective;
pub mod optimizers;
pub mod reference;
pub mod scalar;

pub use error::{Error, Result};
pub use constants::Constants;
pub use scalar::Scalar;

pub type Dataset = datasets::LabeledDataset<f64>;
pub type Dataset32 = datasets::LabeledDataset<f32>;
pub type Trajectory = optimizers::Trajectory<f64>;
pub type GDConfig = optimizers::GDConfig<f64>;
pub type NesterovConfig = optimizers::NesterovConfig<f64>;
pub type AdaptiveConfig = optimizers::AdaptiveConfig<f64>;
pub type ParamVector = objective::ParamVector<f64>;
