use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

/// Everything that can go wrong in the numeric core.
///
/// Data problems (bad shapes, too few clusters) and method problems
/// (singular matrices, degenerate bootstrap draws) are kept apart so that
/// callers can map them onto different exit codes.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("need at least 2 clusters, found {found}")]
    TooFewClusters { found: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("coefficient index {index} out of range for {k} regressors")]
    BadCoefficient { index: usize, k: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("regressor matrix is rank deficient (pivot ratio {ratio:.3e})")]
    RankDeficient { ratio: f64 },
    #[error("every leave-one-cluster-out regression is singular")]
    AllDeletionsSingular,
    #[error("cluster {cluster} deletion is singular; modified score not computable")]
    NotComputable { cluster: usize },
    #[error("need at least 2 computable deletions for CV3, have {available}")]
    TooFewDeletions { available: usize },
    #[error("variance of coefficient {index} is not positive")]
    ZeroVariance { index: usize },
    #[error("too many degenerate bootstrap replicates: {dropped} of {total}")]
    TooManyDegenerate { dropped: usize, total: usize },
    #[error("could not bracket the confidence bound within 8 Wald half-widths ({side} side)")]
    NoBracket { side: &'static str },

    #[error("fine clusters are not nested in coarse clusters: fine cluster {fine} spans several coarse clusters")]
    NotNested { fine: usize },
    #[error("every coarse cluster holds one fine cluster; the score-variance statistic is identically zero")]
    DegenerateNesting,
    #[error("regressor {index} has no variation after partialling out the others")]
    ZeroPartialVariance { index: usize },
    #[error("treatment column is {0}")]
    DegenerateTreatment(&'static str),
    #[error("only {available} placebo assignments are possible (need at least 100)")]
    TooFewAssignments { available: u128 },
}

impl Error {
    /// True for errors caused by the input data rather than by a method.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::EmptyDataset
                | Error::TooFewClusters { .. }
                | Error::Dimension(_)
                | Error::BadCoefficient { .. }
                | Error::InvalidArgument(_)
                | Error::NotNested { .. }
                | Error::DegenerateTreatment(_)
                | Error::TooFewAssignments { .. }
        )
    }
}
