use thiserror::Error;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Error)]
pub enum RomError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("parameter coordinate {index} = {value} lies outside [{lo}, {hi}]")]
    ParameterOutOfBox {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("singular system in {context} (Newton iteration {iteration})")]
    SingularSystem {
        context: &'static str,
        iteration: usize,
    },

    #[error("requested {requested} modes but numerical rank is {rank}")]
    RankDeficient { requested: usize, rank: usize },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(&'static str),

    #[error("basis invariant violated: {0}")]
    BasisInvariant(String),

    #[error("unsupported metric {metric} for problem {problem}")]
    UnsupportedMetric {
        metric: &'static str,
        problem: &'static str,
    },

    #[error("degenerate design: {0}")]
    DegenerateDesign(&'static str),

    #[error("degenerate data: {0}")]
    DegenerateData(&'static str),

    #[error("numerical guard: {0}")]
    NumericalGuard(&'static str),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("hyperparameter selection failed: every grid point was rejected")]
    SelectionFailed,

    #[error("offline step {step} failed: {source}")]
    OfflineStep {
        step: usize,
        #[source]
        source: Box<RomError>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
}

impl RomError {
    /// Wraps an error with the index of the offline step that produced it.
    pub fn at_step(self, step: usize) -> Self {
        RomError::OfflineStep {
            step,
            source: Box::new(self),
        }
    }

    /// True for failures of the numerical pipeline (as opposed to I/O or input errors).
    pub fn is_numerical(&self) -> bool {
        match self {
            RomError::SingularSystem { .. }
            | RomError::RankDeficient { .. }
            | RomError::NotSpd(_)
            | RomError::DegenerateDesign(_)
            | RomError::DegenerateData(_)
            | RomError::NumericalGuard(_)
            | RomError::SelectionFailed
            | RomError::BasisInvariant(_) => true,
            RomError::OfflineStep { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T, E = RomError> = std::result::Result<T, E>;

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(RomError::DimensionMismatch {
            context,
            expected,
            actual,
        })
    }
}
