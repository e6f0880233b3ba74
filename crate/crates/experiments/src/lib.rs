//! Experiment drivers: step-complexity sweeps, the stable-regime lower bound,
//! critical-stepsize scans, population-risk comparisons, the invariant suite
//! and constant calibration.

pub mod calibrate;
pub mod critical;
pub mod emit;
pub mod lower_bound;
pub mod population;
pub mod source;
pub mod sweep;
pub mod verify;

pub use source::DatasetSource;
