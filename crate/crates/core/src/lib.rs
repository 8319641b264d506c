//! Maintenance scheduling for wind farms with an attention-based
//! encoder-decoder policy trained by policy gradients, plus an exact
//! oracle for small instances.

pub mod decoder;
pub mod encoder;
pub mod features;
pub mod harness;
pub mod instance;
pub mod model;
pub mod oracle;
pub mod seeds;
pub mod tensor;
pub mod trainer;

pub use features::FeatureSet;
pub use instance::{CasePreset, GeneratorConfig, Instance, Schedule};
pub use oracle::{evaluate, solve_exact, ExactResult, ObjectiveBreakdown};
pub use tensor::{ParameterStore, Tensor};
pub use model::{Model, ModelConfig, ModelError};
pub use trainer::{train, TrainConfig, TrainLog};
