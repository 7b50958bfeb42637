use std::fmt;

use thiserror::Error;

/// Pipeline stage that raised an error, reported by [`Error::At`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stage {
    Input,
    Grouping,
    Compression,
    Kernel,
    DegreeSelection,
    Resultant,
    Cokernel,
    Basis,
    Multiplication,
    Diagonalization,
    PartnerSolve,
    Refinement,
    Recovery,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Input => "input",
            Stage::Grouping => "grouping",
            Stage::Compression => "compression",
            Stage::Kernel => "kernel",
            Stage::DegreeSelection => "degree-selection",
            Stage::Resultant => "resultant",
            Stage::Cokernel => "cokernel",
            Stage::Basis => "basis",
            Stage::Multiplication => "multiplication",
            Stage::Diagonalization => "diagonalization",
            Stage::PartnerSolve => "partner-solve",
            Stage::Refinement => "refinement",
            Stage::Recovery => "recovery",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("tensor contains a NaN or infinite entry at flat index {0}")]
    NonFinite(usize),
    #[error("tensor is identically zero")]
    ZeroTensor,
    #[error("invalid grouping: {0}")]
    InvalidGrouping(String),
    #[error("no grouping of shape {shape:?} admits rank {rank}")]
    NoFeasibleGrouping { shape: Vec<usize>, rank: usize },
    #[error("rank {rank} outside the admissible range 1..={max}")]
    RankOutOfRange { rank: usize, max: usize },
    #[error("integer overflow while computing {0}")]
    Overflow(&'static str),
    #[error("flattening does not have a clean rank-{rank} gap: {detail}")]
    FlatteningRankMismatch { rank: usize, detail: String },
    #[error("resultant cokernel is not {expected}-dimensional: {detail}")]
    CorankMismatch { expected: usize, detail: String },
    #[error("no well-conditioned monomial basis: {0}")]
    BasisDeficient(String),
    #[error("multiplication matrices could not be diagonalized: {0}")]
    DefectiveEigenvectors(String),
    #[error("partner factor is not uniquely determined: {0}")]
    AmbiguousKernel(String),
    #[error("Jacobian is rank deficient at a solution: {0}")]
    SingularJacobian(String),
    #[error("Khatri-Rao system for the first factor is rank deficient: {0}")]
    RankDeficientKR(String),
    #[error("point configuration has rank {rank} < {expected}; not a generic configuration")]
    ConfigNotInW { rank: usize, expected: usize },
    #[error("linear algebra failure: {0}")]
    LinAlg(String),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("[{stage}] {source}")]
    At {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Tags the error with the stage that produced it; an existing tag wins.
    pub fn at(self, stage: Stage) -> Error {
        match self {
            e @ Error::At { .. } => e,
            e => Error::At { stage, source: Box::new(e) },
        }
    }

    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::At { stage, .. } => Some(*stage),
            _ => None,
        }
    }

    /// The error with any stage tag removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::At { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) trait StageExt<T> {
    fn at(self, stage: Stage) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn at(self, stage: Stage) -> Result<T> {
        self.map_err(|e| e.at(stage))
    }
}
