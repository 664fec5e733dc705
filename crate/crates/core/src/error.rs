use thiserror::Error;

/// Errors raised across the solver, differentiation and learning layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid cone: {0}")]
    InvalidCone(String),

    #[error("invalid problem data: {0}")]
    InvalidProblem(String),

    #[error("linear system (I + M) is singular; P is likely not positive semidefinite")]
    SingularSplittingMatrix,

    #[error("differentiation matrix G is singular at this solution (degenerate active set)")]
    SingularSystem,

    #[error(
        "solver hit {iterations} iterations without converging \
         (primal residual {primal_residual:.3e}, dual residual {dual_residual:.3e}, \
         fixed-point residual {fixed_point_residual:.3e})"
    )]
    MaxIterationsExceeded {
        iterations: usize,
        primal_residual: f64,
        dual_residual: f64,
        fixed_point_residual: f64,
    },

    #[error("excess-cost denominator {denominator:.3e} is negligible against numerator {numerator:.3e}")]
    DenominatorNearZero { numerator: f64, denominator: f64 },

    #[error("empty data: {0}")]
    EmptyData(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("solver failed on {failed} of {total} samples: {first}")]
    TooManySolverFailures {
        failed: usize,
        total: usize,
        first: String,
    },

    #[error("could not generate a valid problem instance after {0} attempts")]
    GenerationFailed(usize),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        })
    }
}
