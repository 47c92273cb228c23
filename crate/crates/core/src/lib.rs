//! Numerical core: dense arrays, a reverse-mode autodiff tape, named
//! parameter trees, reusable layers, and a finite-difference gradient checker.

pub mod array;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod nn;
pub mod params;

pub use array::{avg_pool_to, conv1d_seq, DenseArray};
pub use error::{NumericError, Result};
pub use gradcheck::{gradcheck, gradcheck_stratified, gradcheck_traced, GradReport, GradSample};
pub use graph::{CustomOp, Gradients, Graph, Var};
pub use params::{ParamEntry, ParamTree};
