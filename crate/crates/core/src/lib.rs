//! Finite element discretizations of elliptic operators on compact metric
//! graphs, sinc-quadrature fractional inverses, and Whittle–Matérn Gaussian
//! random fields.

pub mod config;
pub mod error;
pub mod experiments;
pub mod fem;
pub mod fractional;
pub mod graph;
pub mod mesh;
pub mod sparse;
pub mod spectral;
pub mod whittle_matern;

pub use error::{Error, Result};
pub use fem::{CoefficientField, OperatorPair, Polynomial, WellposednessReport};
pub use fractional::{FracExponent, SincRule};
pub use graph::{GraphPoint, MetricGraph};
pub use mesh::{Mesh, Transfer};
pub use spectral::EigenSystem;
