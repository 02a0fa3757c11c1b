use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("sentence {sentence}: {msg}")]
    Structure { sentence: usize, msg: String },

    #[error("invalid tree: {0}")]
    Tree(String),

    #[error("alignment pair `{pair}` out of range (source length {src_len}, target length {tgt_len})")]
    AlignmentRange {
        pair: String,
        src_len: usize,
        tgt_len: usize,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("empty vocabulary after min-count filtering")]
    EmptyVocabulary,

    #[error("feature slot mismatch: {0}")]
    Slot(String),

    #[error("model format: {0}")]
    Format(String),

    #[error("unsupported model format version `{0}`")]
    Version(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("no complete hypothesis for sentence {0} (distortion limit too tight?)")]
    NoHypothesis(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
