//! Data-free non-uniform weight quantization.
//!
//! * [`distributions`]: Gaussian/Laplace models, truncated moments, MLE fits
//!   and Kolmogorov-Smirnov model selection.
//! * [`quantizer`]: the conditional-mean / midpoint fixed-point iteration that
//!   designs MSE-optimal quantizers, and analytic distortion.
//! * [`baselines`]: uniform (clip-searched) and additive-powers-of-two levels.
//! * [`codec`]: encode tensors to packed codes and back.
//! * [`format`], [`table`]: on-disk tensor, quantized-tensor and table files.

pub mod baselines;
pub mod codec;
pub mod distributions;
mod erf;
pub mod error;
pub mod format;
pub mod quadrature;
pub mod quantizer;
pub mod special;
pub mod synth;
pub mod table;

pub use baselines::{apot_spec, baseline_spec, uniform_spec, BaselineMethod, BaselineSpec};
pub use codec::{decode, empirical_mse, encode, pack_codes, unpack_codes, QuantizedTensor, Tensor};

pub use distributions::{
    fit_gaussian_mle, fit_laplace_mle, ks_statistic, select_distribution, DistributionModel, FitReport, ModelKind,
};
pub use error::{Error, Result};
pub use quantizer::{
    distortion, init_spec, optimize, optimize_lenient, optimize_with, realized_distortion, residuals, update_boundaries, update_levels,
    DistortionReport, Initialization, IterationTrace, OptimizeOptions, QuantizerSpec,
};
pub use table::{QuantizerTable, TableEntry};
