use thiserror::Error;

/// Everything that can go wrong across network construction, assignment,
/// calibration, and generation. Variants carry just enough context to point
/// at the offending entity.
#[derive(Debug, Error)]
pub enum Error {
    #[error("link {0} has no mirror: every link must belong to a bidirectional stream")]
    MissingMirror(u64),
    #[error("link {link} and its mirror {mirror} disagree on {attribute}")]
    MirrorMismatch {
        link: u64,
        mirror: u64,
        attribute: &'static str,
    },
    #[error("{entity} {id} references unknown {target} {missing}")]
    DanglingReference {
        entity: &'static str,
        id: u64,
        target: &'static str,
        missing: u64,
    },
    #[error("{entity} {id}: {attribute} must be positive, got {value}")]
    NonPositiveAttribute {
        entity: &'static str,
        id: u64,
        attribute: &'static str,
        value: f64,
    },
    #[error("duplicate OD pair ({origin}, {destination}) in demand table")]
    DuplicateOD { origin: u64, destination: u64 },
    #[error("unknown link id {0}")]
    UnknownLink(u64),
    #[error("demand period must be positive, got {0}")]
    NonPositivePeriod(f64),
    #[error("invalid flow value: {0}")]
    InvalidFlow(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("empty path")]
    EmptyPath,
    #[error("no route from {origin} to {destination}")]
    Unreachable { origin: u64, destination: u64 },
    #[error("relative gap is undefined at zero total system travel time")]
    ZeroTSTT,
    #[error("not enough data: {0}")]
    InsufficientData(String),
    #[error("fit diverged: {0}")]
    FitDiverged(String),
    #[error("length mismatch: {left} predictions vs {right} observations")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("degenerate offset for centerline {id}: {reason}")]
    DegenerateOffset { id: u64, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
