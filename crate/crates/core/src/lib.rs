//! Likelihood-based inference for high-dimensional max-stable distributions
//! whose spectral random vectors have absolutely continuous laws.
//!
//! The crate is organized around the exponent-measure derivative
//! `mu(B; z)` — a one-dimensional integral indexed by a component subset —
//! from which every likelihood here is assembled:
//!
//! - [`combinatorics`]: set partitions and subsets indexing the sums;
//! - [`spatial`]: site geometry and the Whittle-Matern correlation;
//! - [`gaussian`]: multivariate normal probabilities and orthant moments;
//! - [`spectral`]: the Gaussian, Log-normal and clustered Archimedean
//!   spectral families, their kernels and samplers;
//! - [`mu`]: interchangeable evaluation strategies for `mu(B; z)` behind a
//!   common trait, selected by name at runtime;
//! - [`likelihood`]: full, partition-composite, pairwise, censored-threshold
//!   and occurrence-augmented log-likelihoods with their scores;
//! - [`estimation`]: Nelder-Mead fitting and asymptotic covariances;
//! - [`pipeline`]: marginal standardization, censoring, block maxima and
//!   component clustering;
//! - [`simulate`]: max-domain-of-attraction and truncated max-stable
//!   samplers.

pub mod combinatorics;
pub mod error;
pub mod estimation;
pub mod gaussian;
pub mod likelihood;
pub mod pipeline;
pub mod simulate;
pub mod mu;
pub mod numeric;
pub mod spatial;
pub mod spectral;

pub use combinatorics::{ComponentSet, Partition};
pub use error::{Error, Result};
pub use gaussian::{GaussianSpec, ProbEstimate};
pub use spatial::{MaternParams, SiteSet};
