//! Canonical polyadic decomposition of low-rank tensors by homogeneous
//! normal forms.
//!
//! The kernel of the first flattening of a rank-`r` tensor cuts out the
//! points `(beta_i, gamma_i)` of its decomposition in `P^m x P^n`. The points
//! are found with numerical linear algebra: a graded resultant matrix, a basis
//! of its left null space, multiplication matrices and a joint
//! eigendecomposition. The first factor then follows by least squares.
//!
//! Modules, in pipeline order:
//!
//! * [`tensor`]: dense tensors, CP decompositions, reshaping and compression
//! * [`bigraded`]: monomial bases, Hilbert functions, rank bound, degree choice
//! * [`polysys`]: bilinear forms, resultant matrices, left null spaces
//! * [`normalform`]: pre-normal forms, multiplication matrices, eigenvalues
//! * [`recovery`]: partner factors, Newton refinement, the full `decompose`
//! * [`polish`]: damped Gauss-Newton and alternating least squares on the result
//! * [`regcert`]: finite-field certification of regularity degrees
//! * [`format`]: the plain-text tensor file format

// `!(a > b)` is used on purpose so that NaN takes the failing branch
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bigraded;
pub mod error;
pub mod format;
pub mod linalg;
pub mod normalform;
pub mod polish;
pub mod polysys;
pub mod recovery;
pub mod regcert;
pub mod scalar;
pub mod tensor;
pub mod tolerances;

pub use bigraded::{Bidegree, DegreePlan, SolvePath};
pub use error::{Error, Result, Stage};
pub use faer::c64;
pub use recovery::{decompose, DecomposeOptions, Decomposition, KernelMethod};
pub use scalar::{Field, Scalar};
pub use tensor::{CpDecomposition, DenseTensor, Grouping};
pub use tolerances::Tolerances;
