use std::path::PathBuf;

/// Errors produced by mesh construction, solvers and file I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("degenerate tetrahedron {tet}: |volume| = {volume:e} below {threshold:e}")]
    DegenerateTet {
        tet: usize,
        volume: f64,
        threshold: f64,
    },
    #[error("non-positive measure {value} on tetrahedron {tet}")]
    NonPositiveMeasure { tet: usize, value: f64 },
    #[error("nonmanifold boundary: face ({a}, {b}, {c}) shared by {count} tetrahedra")]
    NonmanifoldFace {
        a: usize,
        b: usize,
        c: usize,
        count: usize,
    },
    #[error("nonmanifold boundary: edge ({a}, {b}) lies in {count} boundary faces")]
    NonmanifoldBoundaryEdge { a: usize, b: usize, count: usize },
    #[error("boundary has {count} connected components, expected 1")]
    MultipleBoundaryComponents { count: usize },
    #[error("boundary Euler characteristic {chi}, expected 2 (genus zero)")]
    BoundaryGenus { chi: i64 },
    #[error("mesh has no boundary faces")]
    NoBoundary,
    #[error("interior system is singular at iteration {iteration}")]
    SingularSystem { iteration: usize },
    #[error("interior system badly conditioned at iteration {iteration}: estimate {estimate:e} > {limit:e}")]
    IllConditioned {
        iteration: usize,
        estimate: f64,
        limit: f64,
    },
    #[error("linear solve residual {residual:e} exceeds {limit:e} at iteration {iteration}")]
    ResidualTooLarge {
        iteration: usize,
        residual: f64,
        limit: f64,
    },
    #[error("non-finite energy at iteration {iteration}")]
    NonFiniteEnergy { iteration: usize },
    #[error("harmonic solve failed on the star of boundary vertex {vertex}")]
    HarmonicSolveFailed { vertex: usize },
    #[error("transfer operator guard: 3n = {size} exceeds limit {limit}")]
    TransferTooLarge { size: usize, limit: usize },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for input-validation failures as opposed to solver breakdowns.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::SingularSystem { .. }
                | Error::IllConditioned { .. }
                | Error::ResidualTooLarge { .. }
                | Error::NonFiniteEnergy { .. }
                | Error::HarmonicSolveFailed { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
