pub mod error;
pub mod gradients;
pub mod hypergeom;
pub mod inference;
pub mod kernel;
pub mod mc;
pub mod oracle;
pub mod simulate;
pub mod transition;

pub use error::{Error, Result};
pub use gradients::{GradLogP, HessLogP};
pub use hypergeom::{HyperArgs, SignedLog};
pub use inference::{
    FitOptions, FitResult, GlmFit, GlmOptions, GlmRecord, ObservationSet, ObservedSeries,
    SufficientStats,
};
pub use kernel::Rates;
pub use mc::{run_study, EstimatorSummary, McSummary, StudyConfig};
pub use simulate::{Event, EventHistory, EventKind};
pub use transition::TransitionQuery;
