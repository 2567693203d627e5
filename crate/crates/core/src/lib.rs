//! Seminonparametric (Gallant–Nychka) densities fitted to Monte Carlo ensembles.
//!
//! A density is `p(z) = φ(z) P(z)² / S` on whitened coordinates, where `P` is a
//! Hermite-basis polynomial over a total-degree multi-index set. The crate covers
//! the whole pipeline: sampling and propagating ensembles ([`ensemble`]), maximum
//! likelihood fitting with a convex warm start ([`fit`]), and closed-form
//! evaluation of PDFs, marginals, CDFs and box probabilities ([`density`]).

pub mod cli;
pub mod density;
pub mod ensemble;
pub mod error;
pub mod experiments;
pub mod fit;
pub mod hermite;
pub mod indexset;
pub mod normal;
pub mod whitening;

pub use density::{SnpDensity, SnpMarginal};
pub use ensemble::{GaussianInitial, LorenzParams, SampleEnsemble};
pub use error::{Result, SnpError};
pub use fit::{fit_snp, Branch, BranchPolicy, FitConfig, FitReport};
pub use indexset::{build_index_set, coefficient_count, MultiIndex, MultiIndexSet};
pub use whitening::WhiteningTransform;
