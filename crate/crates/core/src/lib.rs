//! Agent-based simulation of student trajectories through a prerequisite
//! curriculum, with a factorial policy experiment and calibration harness.

pub mod aggregate;
pub mod calibration;
pub mod config;
pub mod course_set;
pub mod engine;
pub mod experiment;
pub mod features;
pub mod graph;
pub mod policy;
pub mod population;
pub mod records;
pub mod rng;
pub mod scalar;

pub use course_set::CourseSet;
pub use engine::{Engine, EngineError, RecordTag, TerminalEvent};
pub use experiment::{ExperimentConfig, ExperimentError, Model};
pub use graph::{BottleneckRule, Course, CurriculumGraph, GraphError, RedesignSpec};
pub use policy::{Factor, PolicyScenario};
pub use population::{Group, Terminal};
pub use scalar::{Real, Scalar};

/// Exact rational scalar used by the feature oracles.
pub type Rational = num_rational::Ratio<i64>;

pub type StructuralSnapshot = features::StructuralSnapshot<f64>;
pub type ExactSnapshot = features::StructuralSnapshot<Rational>;
pub type Archetype = population::Archetype<f64>;
pub type ArchetypeTable = population::ArchetypeTable<f64>;
pub type AgentState = population::AgentState<f64>;
pub type PolicyParams = policy::PolicyParams<f64>;
pub type PolicyEffects = policy::PolicyEffects<f64>;
pub type EngineParams = engine::EngineParams<f64>;
pub type SemesterRecord = engine::SemesterRecord<f64>;
