//! Certified numerics for nonlinear spectral gaps and metric Markov cotype on finite
//! metric spaces.
//!
//! Every routine is generic over the scalar type ([`Real`], implemented for `f32` and `f64`).
//! The aliases below fix the scalar to `f64`, which is what the command line tool uses.

pub mod barycenter;
pub mod cotype;
pub mod error;
pub mod extension;
pub mod kalton;
pub mod linalg;
pub mod lp;
pub mod markov;
pub mod metric;
pub mod scalar;
pub mod spectral;
pub mod transport;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Matrix = linalg::Matrix<f64>;
pub type Chain = markov::ReversibleChain<f64>;
pub type Measure<P> = transport::DiscreteMeasure<P, f64>;
pub type FiniteSpace = metric::FiniteMetricSpace<f64>;
pub type GammaEstimate<P> = spectral::GammaEstimate<P, f64>;
pub type CalculusReport = spectral::CalculusReport<f64>;
pub type CotypeCertificate<P> = cotype::CotypeCertificate<P, f64>;
pub type MartingaleInstance<P> = cotype::MartingaleInstance<P, f64>;
pub type DominationReport = cotype::DominationReport<f64>;
pub type PathExperiment = cotype::PathExperiment<f64>;
pub type ExtensionInstance<P, Q> = extension::ExtensionInstance<P, Q, f64>;
pub type ExtensionSolution = extension::ExtensionSolution<f64>;
pub type HCertificate<P> = extension::HCertificate<P, f64>;
pub type KaltonInstance = kalton::KaltonInstance<f64>;
pub type HolderReport = kalton::HolderReport<f64>;
