use thiserror::Error;

/// Errors reported by graph, design, estimator and classification operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown sampling unit `{0}`")]
    UnknownSamplingUnit(String),

    #[error("unknown study unit `{0}`")]
    UnknownStudyUnit(String),

    #[error("duplicate unit identifier `{0}`")]
    DuplicateUnit(String),

    #[error("identifier `{0}` appears on both sides of the graph")]
    SharedIdentifier(String),

    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(String, String),

    #[error("{0} must be non-empty")]
    EmptySide(&'static str),

    #[error("probability `{0}` is not strictly positive")]
    NonPositiveProbability(String),

    #[error("support probabilities sum to {0}, expected 1")]
    ProbabilitySum(String),

    #[error("duplicate support sample {{{0}}}")]
    DuplicateSample(String),

    #[error("support and probability lists have lengths {support} and {probabilities}")]
    SupportShape {
        support: usize,
        probabilities: usize,
    },

    #[error("sample size {n} out of range for {units} units")]
    SampleSizeOutOfRange { n: usize, units: usize },

    #[error("sample {{{0}}} is not in the support")]
    SampleNotInSupport(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("design does not cover study units: {}", .0.join(", "))]
    NotCovered(Vec<String>),

    #[error("unit `{0}` carries weight but has zero inclusion probability")]
    ZeroInclusion(String),

    #[error("constant weights on the ancestors of `{unit}` sum to {sum}, expected 1")]
    WeightRowSum { unit: String, sum: String },

    #[error("sample order is not a permutation of the support")]
    NotAPermutation,

    #[error("variable weight for unit `{unit}` outside sample {{{sample}}}")]
    WeightOutsideSample { unit: String, sample: String },

    #[error("block of support samples is empty")]
    EmptyBlock,

    #[error("perturbation direction has zero variance")]
    DegenerateDirection,

    #[error("perturbation has mean {0}, expected 0")]
    MeanNotZero(String),

    #[error("estimator is biased; per-unit expectations: {}", format_pairs(.0))]
    Biased(Vec<(String, String)>),

    #[error("pair refused: perturbation has nonzero mean on study unit `{0}`")]
    PairNonzeroMean(String),

    #[error("pair refused: covariance form is not identically zero")]
    PairCorrelated,

    #[error("pair refused: perturbation is identically zero")]
    PairTrivialDirection,

    #[error("estimator tables are not aligned: {0}")]
    TableMismatch(String),

    #[error("coefficient on `{unit}` is {value} for sample {{{sample}}} outside its successors")]
    UnsupportedCoefficient {
        sample: String,
        unit: String,
        value: String,
    },

    #[error("cannot parse `{0}` as a rational number")]
    ParseRatio(String),

    #[error("invalid fixture: {0}")]
    BadFixture(String),

    #[error("invalid estimator spec: {0}")]
    BadEstimatorSpec(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_pairs(pairs: &[(String, String)]) -> String {
    pairs
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(", ")
}

pub type Result<T> = std::result::Result<T, Error>;
