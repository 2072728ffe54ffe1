//! Teacher–student quadratic networks: losses, gradient flows, the diagonal
//! eigenvalue dynamics, cone certificates for the uniqueness of the
//! interpolating Gram matrix, a string method for loss-landscape paths, and a
//! reproducible experiment harness.
//!
//! All numerical code is generic over [`Real`] (implemented for `f32` and
//! `f64`); the `*64` aliases below fix the scalar to `f64`.

pub mod cone;
pub mod dynamics;
pub mod eigenflow;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod losses;
pub mod model;
pub mod ode;
pub mod rng;
pub mod scalar;
pub mod stats;
pub mod string_method;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use model::{Dataset, GramMatrix, TeacherEnsemble, WeightMatrix};
pub use scalar::{Field, Real};

pub type Matrix64 = Matrix<f64>;
pub type Weights64 = WeightMatrix<f64>;
pub type Gram64 = GramMatrix<f64>;
pub type Dataset64 = Dataset<f64>;
pub type Trajectory64 = dynamics::Trajectory<f64>;
pub type IntegratorConfig64 = dynamics::IntegratorConfig<f64>;
pub type Matrix32 = Matrix<f32>;
pub type Gram32 = GramMatrix<f32>;
