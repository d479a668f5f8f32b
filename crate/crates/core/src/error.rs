use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("empty source sentence")]
    EmptySource,
    #[error("empty reference")]
    EmptyReference,
    #[error("empty n-best list")]
    EmptyList,
    #[error("dangling continuation marker at end of sentence")]
    DanglingContinuation,
    #[error("sequence closed: cannot step after EOS")]
    SequenceClosed,
    #[error("token id {0} outside target vocabulary")]
    TokenOutOfRange(u32),
    #[error("search space too large: {0} sequences exceed the exhaustive-search guard")]
    SearchSpaceTooLarge(u128),
    #[error("misaligned inputs: {left} vs {right}")]
    Misaligned { left: usize, right: usize },
    #[error("sentence id mismatch: {0} vs {1}")]
    SentenceIdMismatch(usize, usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown system id {id:?}; known ids: {}", known.join(", "))]
    UnknownSystem { id: String, known: Vec<String> },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{stage}: {inner}")]
    Stage { stage: String, inner: Box<Error> },
    #[error("{}: {cause}", path.display())]
    Io { path: PathBuf, cause: std::io::Error },
    #[error("scorer file: {0}")]
    ScorerFormat(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    /// Wraps an error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            inner: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            cause: source,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: impl FnOnce() -> String) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|e| e.in_stage(stage()))
    }
}
