pub mod changepoint;
pub mod datagen;
pub mod error;
pub mod harness;
pub mod subset;
pub mod tracking;
pub mod tree;

pub use error::{MousseError, Result};
pub use subset::{NodeId, Observation, ProjectionResult, SubsetNode};
pub use tracking::{PetrelsState, TrackerKind};
pub use tree::{MousseConfig, MousseTree, StepOutcome};
