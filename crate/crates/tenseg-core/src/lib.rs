//! Change-point detection for tensor-valued time series.
//!
//! The pipeline: decompose a K-mode data tensor (CP via alternating least
//! squares, or truncated HOSVD) into a low-rank model, extract the weighted
//! time-mode factor series, square Haar-difference panels of that series, and
//! segment the panel with a scaled CUSUM isolate-detect sweep plus either a
//! threshold or model-selection stopping rule. A Sylvester-equation scenario
//! generator and evaluation metrics support Monte Carlo study of the whole
//! chain.

pub mod ccid;
pub mod decompose;
pub mod error;
pub mod io;
pub mod metrics;
pub mod normo;
pub mod pipeline;
pub mod sim;
pub mod seed;
pub mod tensor;

pub use error::{Result, TensegError};
pub use tensor::Tensor;
