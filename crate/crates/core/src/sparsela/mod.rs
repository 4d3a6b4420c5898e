//! Sparse and dense linear algebra used by assembly, relaxation and the
//! Krylov driver.

pub mod dense;
pub mod krylov;
pub mod sparse;

pub use dense::{invert, lu_factor, lu_solve, DenseFactorization, DenseMatrix};
pub use krylov::{
    estimate_lambda_max, fgmres, Fgmres, FnOperator, Identity, KrylovReport, LinearOperator,
    NullspaceProjector,
};
pub use sparse::{extract_submatrix, spmv, triple_product, CsrMatrix, TripletBuilder};
