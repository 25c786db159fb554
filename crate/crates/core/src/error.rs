use std::fmt;

use crate::gradengine::OpKind;

/// Which pass of a tape evaluation produced a non-finite number.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pass {
    Forward,
    Reverse,
}

impl fmt::Display for Pass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pass::Forward => f.write_str("forward"),
            Pass::Reverse => f.write_str("reverse"),
        }
    }
}

/// The two players of the min-max game.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Player {
    Generator,
    Adversary,
}

impl fmt::Display for Player {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Player::Generator => f.write_str("generator"),
            Player::Adversary => f.write_str("adversary"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite value in {pass} pass at {kind:?} node")]
    NonFinite { kind: OpKind, pass: Pass },

    #[error("numeric failure at step {step} during {player} update: {source}")]
    Training {
        step: usize,
        player: Player,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: String, reason: String },

    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// `std::fs::read_to_string` with the path in the error.
pub(crate) fn read_text(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Read { path: path.display().to_string(), source })
}
