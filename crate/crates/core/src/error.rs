use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("sample set is empty")]
    EmptySamples,
    #[error("structure constants are not skew-symmetric (violation {0:.3e})")]
    NotSkew(f64),
    #[error("metric is not symmetric positive definite at x = {0:?}")]
    MetricNotSpd(Vec<f64>),
    #[error("frame matrix is singular")]
    SingularFrame,
    #[error("integration diverged; last valid time t = {t_last}")]
    Diverged { t_last: f64 },
    #[error("invalid control: {0}")]
    InvalidControl(String),
    #[error("paths are not composable: join mismatch {0:.3e}")]
    JoinMismatch(f64),
    #[error("reparametrization map is not strictly monotone")]
    NonMonotone,
    #[error("family slice s = {s} is not admissible (residual {residual:.3e})")]
    NotAdmissible { s: f64, residual: f64 },
    #[error("control set is empty")]
    EmptyControlSet,
    #[error("chattering: more than {0} switches inside one step")]
    Chattering(usize),
    #[error("singular arc detected near t = {0}")]
    SingularArc(f64),
    #[error("invalid needle symbol: {0}")]
    InvalidSymbol(String),
    #[error("variation parameter too large: {0}")]
    VariationTooLarge(String),
    #[error("t = {0} is not a regular point of the control")]
    NotRegular(f64),
    #[error("linear program failed: {0}")]
    Lp(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("unknown name `{0}`")]
    UnknownName(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wraps the error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// Innermost stage name attached with [`Error::in_stage`].
    pub fn stage(&self) -> Option<&str> {
        match self {
            Error::Stage { stage, source } => source.stage().or(Some(stage.as_str())),
            _ => None,
        }
    }

    /// True when the input could not be turned into a scenario.
    pub fn is_usage(&self) -> bool {
        match self {
            Error::Config(_) | Error::UnknownName(_) => true,
            Error::Stage { stage, source } => stage == "config" || source.is_usage(),
            _ => false,
        }
    }

    /// True when the failure is numerical (divergence, chattering, singular arcs, LP).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Diverged { .. }
            | Error::Chattering(_)
            | Error::SingularArc(_)
            | Error::Lp(_)
            | Error::NotAdmissible { .. }
            | Error::MetricNotSpd(_)
            | Error::SingularFrame => true,
            Error::Stage { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}
