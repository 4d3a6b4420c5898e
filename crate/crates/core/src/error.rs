use thiserror::Error;

/// Errors raised while building discretizations, factoring patches or
/// running experiments.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported element {family} of order {order}")]
    UnsupportedElement { family: &'static str, order: usize },

    #[error("element {family} is not defined on {shape} cells")]
    ShapeMismatch { family: &'static str, shape: &'static str },

    #[error("no quadrature rule of degree {0} (maximum is 20)")]
    UnsupportedQuadrature(usize),

    #[error("degenerate cell {cell}: Jacobian determinant {det:e}")]
    DegenerateCell { cell: usize, det: f64 },

    #[error("singular matrix: pivot {pivot:e} at row {row} below threshold {threshold:e}")]
    SingularMatrix { row: usize, pivot: f64, threshold: f64 },

    #[error("singular patch submatrix for patch {patch} ({entity}): {source}")]
    SingularPatch {
        patch: usize,
        entity: String,
        #[source]
        source: Box<Error>,
    },

    #[error("edge {0} is on the boundary; interior edge required")]
    BoundaryEdge(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
