use thiserror::Error;

use crate::harmonic_solver::SolveTrace;
use crate::target_spaces::Point;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad arguments: mismatched space tags, out-of-range parameters, malformed input.
    #[error("usage error: {0}")]
    Usage(String),

    /// Input outside the mathematical domain of an operation (singular or indefinite matrices).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("no convergence after {iterations} iterations (final displacement {displacement:e})")]
    NonConvergence {
        iterations: usize,
        displacement: f64,
        best: Box<Point>,
    },

    #[error("solver did not converge within {sweeps} sweeps (last max displacement {max_disp:e})")]
    SweepLimit {
        sweeps: usize,
        max_disp: f64,
        trace: Box<SolveTrace>,
    },

    /// Equivariant relaxation escaped every bounded set.
    #[error("values drifted {distance:e} from the basepoint (bound {bound:e}); the representation appears to fix a point at infinity, so no finite-energy equivariant minimizer can be reached")]
    Divergence { distance: f64, bound: f64 },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("at vertex {vertex}: {source}")]
    AtVertex {
        vertex: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn at_vertex(self, vertex: usize) -> Self {
        Error::AtVertex {
            vertex,
            source: Box::new(self),
        }
    }
}
