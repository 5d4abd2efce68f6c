use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by the command line to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad input files, arguments or violated preconditions.
    Input,
    /// A numerical routine failed (singular design, no convergence, ...).
    Numerical,
    /// The transport problem has no feasible plan under the arc restrictions.
    Infeasible,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{what} = {value} is outside {range}")]
    Range {
        what: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("field `{0}` has no valid cells")]
    EmptyField(String),
    #[error("field `{0}` has zero total mass")]
    DegenerateMass(String),
    #[error("geometry mismatch: {0}")]
    Geometry(String),
    #[error("cell lists are not aligned: {0}")]
    Alignment(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("no feasible transport plan: {stranded_mass:.3e} of mass cannot reach any target")]
    Infeasible { stranded_mass: f64 },
    #[error("sinkhorn did not converge after {iterations} iterations (marginal residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },
    #[error("instance too large for the brute-force oracle ({cells} variables, limit {limit})")]
    SizeGuard { cells: usize, limit: usize },
    #[error("embedding failed: {0}")]
    Embedding(String),
    #[error("label `{0}` is not a YYYY-MM year-month")]
    Label(String),
    #[error("singular design: {0}")]
    SingularDesign(String),
    #[error("slope ratio undefined: denominator slope is zero")]
    ZeroSlope,
    #[error("all values are identical; two clusters cannot be formed")]
    DegenerateCluster,
    #[error("irregular grid: {0}")]
    Grid(String),
    #[error("degenerate longitude columns: {}", format_lons(.longitudes))]
    Columns { longitudes: Vec<f64> },
    #[error("profile `{0}` has no positive value")]
    DegenerateProfile(String),
    #[error("colocalization produced no profile pairs ({dropped} reference samples dropped)")]
    EmptyPairing { dropped: usize },
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

fn format_lons(lons: &[f64]) -> String {
    lons.iter()
        .map(|l| format!("{l}"))
        .collect::<Vec<_>>()
        .join(", ")
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Infeasible { .. } => ErrorClass::Infeasible,
            Error::Convergence { .. }
            | Error::Embedding(_)
            | Error::SingularDesign(_)
            | Error::ZeroSlope
            | Error::DegenerateCluster
            | Error::Columns { .. } => ErrorClass::Numerical,
            Error::Context { source, .. } => source.class(),
            _ => ErrorClass::Input,
        }
    }

    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Range { .. } => "range",
            Error::EmptyField(_) => "empty_field",
            Error::DegenerateMass(_) => "degenerate_mass",
            Error::Geometry(_) => "geometry",
            Error::Alignment(_) => "alignment",
            Error::Precondition(_) => "precondition",
            Error::Infeasible { .. } => "infeasible",
            Error::Convergence { .. } => "convergence",
            Error::SizeGuard { .. } => "size_guard",
            Error::Embedding(_) => "embedding",
            Error::Label(_) => "label",
            Error::SingularDesign(_) => "singular_design",
            Error::ZeroSlope => "zero_slope",
            Error::DegenerateCluster => "degenerate_cluster",
            Error::Grid(_) => "grid",
            Error::Columns { .. } => "degenerate_columns",
            Error::DegenerateProfile(_) => "degenerate_profile",
            Error::EmptyPairing { .. } => "empty_pairing",
            Error::Context { source, .. } => source.kind(),
        }
    }

    pub fn context(self, context: impl Into<String>) -> Error {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Strips any [`Error::Context`] wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}
