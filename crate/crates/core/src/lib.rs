pub mod cohort;
pub mod cox;
pub mod error;
pub mod io;
pub mod linalg;
pub mod nonparam;
pub mod real;
pub mod spline;
pub mod stats;
pub mod step;

pub use cohort::{CohortTable, Episode, Timeline, TimelineRecord};
pub use error::{Error, Result};
pub use real::Real;
pub use step::StepFunction;
