//! Engine for inter-functional GUI testing against a deterministic simulated
//! app.
//!
//! The crate models an app's functionalities and the flows between them as a
//! functional flow graph (FFG), generates long-term-view scenarios that
//! refine the graph and short-term-view metamorphic scenarios that probe its
//! flows, executes them on the simulator, detects crash and functional bugs,
//! and folds the observed traces back into the graph.

pub mod app;
pub mod condition;
pub mod executor;
pub mod ffg;
pub mod harness;
pub mod ltv;
pub mod oracle;
pub mod scenario;
pub mod stv;
pub mod updater;

pub use app::{ActionStep, AppSpec, SimulatorSession, StepOutcome, StepStatus};
pub use condition::{Condition, Valuation, VarDecl};
pub use executor::BugReport;
pub use ffg::{ExecutionTrace, Ffg, Flow, Functionality, Trace};
pub use harness::{RunConfig, RunOutcome};
pub use oracle::{GoalDescriptor, SemanticOracle, SpecOracle};
pub use scenario::{PlanStep, TestScenario};
