use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A caller-supplied value violates an operation's precondition.
    #[error("invalid argument `{field}`: {reason}")]
    Argument { field: &'static str, reason: String },

    /// The ground subspace is degenerate and the perturbed reference
    /// Hamiltonian does not single out a unique state either.
    #[error("unresolvable ground-state degeneracy (multiplicity {multiplicity}, reference gap {reference_gap:e})")]
    UnresolvableDegeneracy { multiplicity: usize, reference_gap: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

impl Error {
    pub(crate) fn argument(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Argument { field, reason: reason.into() }
    }
}
