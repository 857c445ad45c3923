use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    // -- table construction / ingestion --
    #[error("cohort has no episodes")]
    EmptyCohort,
    #[error("subject {subject}: episode ({tstart}, {tstop}] is empty or reversed")]
    EmptyInterval {
        subject: String,
        tstart: f64,
        tstop: f64,
    },
    #[error("subject {subject}: episode starting at {tstart} overlaps the previous episode ending at {prev_tstop}")]
    OverlappingEpisodes {
        subject: String,
        tstart: f64,
        prev_tstop: f64,
    },
    #[error("subject {subject}: event status {status} at {time} is not at the end of a contiguous episode run")]
    EventInsideRun {
        subject: String,
        status: u32,
        time: f64,
    },
    #[error("subject {subject}: negative time {time} on the active axis")]
    NegativeTime { subject: String, time: f64 },
    #[error("subject {subject}: non-finite time or covariate value")]
    NonFinite { subject: String },
    #[error("subject {subject}: expected {expected} covariate values, found {found}")]
    CovariateArity {
        subject: String,
        expected: usize,
        found: usize,
    },
    #[error("status code {code} is not among the declared causes")]
    UnknownCause { code: u32 },
    #[error("row {row}: missing value in column '{column}'")]
    MissingValue { row: usize, column: String },
    #[error("row {row}, column '{column}': cannot parse '{value}'")]
    BadValue {
        row: usize,
        column: String,
        value: String,
    },
    #[error("required column '{column}' not found in header")]
    MissingColumn { column: String },
    #[error("duplicate column '{column}' in header")]
    DuplicateColumn { column: String },
    #[error("no covariate named '{column}'")]
    UnknownColumn { column: String },

    // -- timeline / axis operations --
    #[error("timeline subject {subject} does not exist in the cohort")]
    UnknownSubject { subject: String },
    #[error("timeline variable '{variable}' has no declared baseline value")]
    MissingBaseline { variable: String },
    #[error("no axis offset declared for subject {subject}")]
    MissingOffset { subject: String },
    #[error("cutpoints must be finite, strictly ascending, and nonempty")]
    BadCutpoints,
    #[error("subject {subject}: episode time {time} lies outside the declared axis range")]
    OutsideAxisRange { subject: String, time: f64 },

    // -- estimation --
    #[error("risk set is empty at time {time}")]
    EmptyRiskSet { time: f64 },
    #[error("no events of the requested cause")]
    NoEvents,
    #[error("model has no terms")]
    NoTerms,
    #[error("fit did not converge after {iterations} iterations")]
    NotConverged { iterations: usize },
    #[error("monotone likelihood: coefficient for '{column}' diverges (|beta| > {bound}); risk sets separate the events")]
    MonotoneLikelihood { column: String, bound: f64 },
    #[error("information matrix is singular{}", column.as_ref().map(|c| format!(" (column '{c}' carries no information)")).unwrap_or_default())]
    RankDeficient { column: Option<String> },
    #[error("need at least {needed} events for this diagnostic, found {found}")]
    TooFewEvents { needed: usize, found: usize },
    #[error("models are not nested: {reason}")]
    NotNested { reason: String },
    #[error("rate cell {cell} has events but zero person-time")]
    EventsWithoutExposure { cell: String },

    // -- prediction --
    #[error("covariate '{column}' varies within subjects; a time-fixed profile cannot represent it")]
    TimeVaryingCovariate { column: String },
    #[error("model was fit with time-varying effects; prediction needs a time-fixed linear predictor")]
    TimeVaryingEffect,
    #[error("profile is missing a value for '{column}'")]
    MissingProfileValue { column: String },
    #[error("no stratum named '{stratum}' in the fitted model")]
    UnknownStratum { stratum: String },
    #[error("model has {count} strata; the profile must name one")]
    AmbiguousStratum { count: usize },
    #[error("cause-specific fits are inconsistent: {reason}")]
    CauseMismatch { reason: String },
    #[error("treatment column '{column}' is not binary 0/1")]
    NotBinary { column: String },

    // -- simulation / configuration --
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
