//! Mapping, data-movement planning and cost estimation for tile kernels on
//! spatial dataflow accelerators.

pub mod affine;
pub mod cli;
pub mod config;
pub mod hwmodel;
pub mod kernelir;
pub mod mapper;
pub mod perfmodel;
pub mod pipeline;
pub mod reuse;
pub mod simref;

/// Exact non-negative rational used for bandwidths and throughputs.
pub type Rate = num_rational::Ratio<u64>;
