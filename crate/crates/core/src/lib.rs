//! Sparse autologistic Markov random fields for binary-coded peak data.
//!
//! The crate covers the full modeling-and-discrimination pipeline:
//!
//! * [`spectra`] — geometric reference grids and binary coding of peak lists;
//! * [`model`] — autologistic distributions, exact and Monte Carlo partition
//!   functions, Gibbs sampling and Kullback–Leibler distances;
//! * [`mple`] — maximum pseudo-likelihood fitting with sandwich covariance
//!   and significance pruning;
//! * [`fit_quality`] — rank-quantile goodness of fit against simulated
//!   virtual datasets;
//! * [`discriminate`] — ideal and regression-estimated separators,
//!   leave-one-out validation, and error-propagation diagnostics;
//! * [`pipeline`] — feature selection, clique discovery, the dimension grid
//!   search, signature scores and classification;
//! * [`io`] / [`config`] — file formats and run settings.

pub mod config;
pub mod discriminate;
pub mod error;
pub mod fit_quality;
pub mod io;
pub mod linalg;
pub mod math;
pub mod model;
pub mod mple;
pub mod params;
pub mod pipeline;
pub mod spectra;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use model::AutologisticModel;
pub use params::{Coord, ParamVector};
pub use pipeline::{DimQuad, Signature};
pub use spectra::{BinaryDataset, PeakSpectrum, ReferenceGrid};
