//! Dual-form φ-divergence estimation.
//!
//! Parametric fitting by minimum dual φ-divergence with a kernel density
//! plugged into the dual, alongside the classical min-sup estimator, the
//! Basu-Lindsay and Beran minimum-disparity estimators, the density power
//! estimator and the contamination-aware variant. Supporting modules cover
//! quadrature, bounded Nelder-Mead, density estimation, influence functions
//! and fit diagnostics.
//!
//! Densities are handled in log space throughout; ratios p/q are formed as
//! `exp(ln p - ln q)` so tails far from the bulk stay finite.

pub mod density;
pub mod divergence;
mod error;
pub mod estimators;
pub mod metrics;
pub mod models;
pub mod optimize;
pub mod quadrature;
pub mod robustness;
mod special;


pub use density::{BandwidthRule, DensityEstimate, KdeSpec, KernelKind};
pub use divergence::DivergenceSpec;
pub use error::{Error, Result};
pub use estimators::{EstimatorResult, FitOptions, FitStatus, Witness};

pub use models::{Bounds, Family, ModelSpec, ParamVector, Support};
pub use optimize::{OptimOptions, OptimResult, OptimStatus};

pub use quadrature::{QuadratureConfig, QuadratureMethod, QuadratureResult};
pub use robustness::{IfReport, Truth};

