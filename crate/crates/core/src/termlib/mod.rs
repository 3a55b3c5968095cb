//! Symbolic candidate terms, libraries built from them, and algebraic relations over them.

mod library;
mod relation;
mod term;

pub use library::{
    build_grid_library, build_polynomial_library, complexity_histogram, complexity_score,
    evaluate_library, evaluate_term, grid_phase, grid_power, grid_speed, library_from_encodings,
    multiples_of, remove_terms, CandidateLibrary, LibraryMatrix,
};
pub use relation::{reduce_relation, AlgebraicRelation};
pub use term::{Atom, Operand, Term, TrigKind};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TermError {
    #[error("cannot parse term {0:?}")]
    Parse(String),
    #[error("duplicate state name {0:?}")]
    DuplicateName(String),
    #[error("invalid state name {0:?}")]
    InvalidName(String),
    #[error("duplicate term {0}")]
    DuplicateTerm(String),
    #[error("no states given")]
    NoStates,
    #[error("maximum degree must be at least 1, got {0}")]
    DegreeTooSmall(u32),
    #[error("grid needs at least 2 nodes, got {0}")]
    GridTooSmall(usize),
    #[error("node {node} outside 1..={nodes}")]
    NodeOutOfRange { node: usize, nodes: usize },
    #[error("term {0} is not in the library")]
    NotInLibrary(String),
    #[error("state {0:?} missing from table")]
    MissingState(String),
    #[error("term {0} evaluates to a non-finite value")]
    NonFinite(String),
    #[error("relation needs at least two nonzero terms, got {0}")]
    TrivialRelation(usize),
    #[error("pivot {0} has zero coefficient")]
    PivotNotInSupport(String),
}
