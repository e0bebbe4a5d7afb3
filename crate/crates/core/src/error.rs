use thiserror::Error;

/// Errors produced by the estimation library.
#[derive(Debug, Error)]
pub enum DoaError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("array packing infeasible: placed {placed} of {requested} sensors after {attempts} attempts")]
    PackingInfeasible {
        placed: usize,
        requested: usize,
        attempts: usize,
    },

    #[error("oversampled DFT too short: edge bin at {edge_db:.1} dB exceeds threshold {threshold_db:.1} dB (oversample_P = {oversample})")]
    SpectrumNotDecayed {
        oversample: usize,
        edge_db: f64,
        threshold_db: f64,
    },

    #[error("conic solver failed: {0}")]
    Solver(String),

    #[error("rank deficient steering matrix: DOAs {0:.3} deg and {1:.3} deg are not separable")]
    RankDeficient(f64, f64),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<DoaError>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl DoaError {
    pub(crate) fn in_stage(self, stage: &'static str) -> DoaError {
        DoaError::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error, looking through stage wrappers.
    pub fn root(&self) -> &DoaError {
        match self {
            DoaError::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, DoaError>;
