pub mod data_model;
pub mod error;
pub mod geo;
pub mod glm;
pub mod metrics;
pub mod pipeline;
pub mod rainfall;
pub mod synthetic;
pub mod tail;

pub use error::{Error, Result};

pub use data_model::{FeatureTable, Layer, Portfolio, RainGrid, Task};
pub use glm::{Family, FitOptions, FittedGlm, ModelSpec, Term};
pub use pipeline::{Evaluation, FeatureBundle, FeatureOptions};
pub use synthetic::{Scenario, ScenarioConfig};
