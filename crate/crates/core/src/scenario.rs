//! Test scenarios: the (type, strategy, object, guidance) tuples produced by
//! the long- and short-term-view generators and consumed by the executor.

use serde::{Deserialize, Serialize};

use crate::app::ActionStep;
use crate::condition::Condition;
use crate::ffg::{FlowId, FuncId, TraceId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ScenarioType {
    Ltv,
    Stv,
}

/// Metamorphic relation families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MrTag {
    HideShow,
    ChangeOrder,
    Toggle,
    CreateDelete,
    ModifyAttribute,
    ConsumeProduce,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MrLevel {
    SingleFlow,
    CrossFlow,
}

impl MrTag {
    pub fn level(self) -> MrLevel {
        match self {
            MrTag::HideShow | MrTag::ChangeOrder | MrTag::Toggle => MrLevel::SingleFlow,
            MrTag::CreateDelete | MrTag::ModifyAttribute | MrTag::ConsumeProduce => {
                MrLevel::CrossFlow
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MrTag::HideShow => "hide_show",
            MrTag::ChangeOrder => "change_order",
            MrTag::Toggle => "toggle",
            MrTag::CreateDelete => "create_delete",
            MrTag::ModifyAttribute => "modify_attribute",
            MrTag::ConsumeProduce => "consume_produce",
        }
    }
}

/// Generation strategy, rendered as `ltv/<name>` or `stv/<mr>` in logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyTag {
    Completeness,
    Independence,
    ConditionPartition,
    MinimalViolation,
    ConditionInvariant,
    Metamorphic(MrTag),
}

impl StrategyTag {
    pub fn render(&self) -> String {
        match self {
            StrategyTag::Completeness => "ltv/completeness".into(),
            StrategyTag::Independence => "ltv/independence".into(),
            StrategyTag::ConditionPartition => "ltv/condition_partition".into(),
            StrategyTag::MinimalViolation => "ltv/minimal_violation".into(),
            StrategyTag::ConditionInvariant => "ltv/condition_invariant".into(),
            StrategyTag::Metamorphic(mr) => format!("stv/{}", mr.as_str()),
        }
    }

    pub fn scenario_type(&self) -> ScenarioType {
        match self {
            StrategyTag::Metamorphic(_) => ScenarioType::Stv,
            _ => ScenarioType::Ltv,
        }
    }

    /// The ablation phase this strategy belongs to.
    pub fn phase(&self) -> Phase {
        match self {
            StrategyTag::Completeness | StrategyTag::Independence => Phase::LtvFunc,
            StrategyTag::ConditionPartition
            | StrategyTag::MinimalViolation
            | StrategyTag::ConditionInvariant => Phase::LtvFlow,
            StrategyTag::Metamorphic(mr) => match mr.level() {
                MrLevel::SingleFlow => Phase::StvSingle,
                MrLevel::CrossFlow => Phase::StvCross,
            },
        }
    }
}

/// Ablation axes, mirroring the `--disable` CLI flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    LtvFunc,
    LtvFlow,
    StvSingle,
    StvCross,
}

impl Phase {
    pub fn parse(s: &str) -> Option<Phase> {
        match s {
            "ltv-func" => Some(Phase::LtvFunc),
            "ltv-flow" => Some(Phase::LtvFlow),
            "stv-single" => Some(Phase::StvSingle),
            "stv-cross" => Some(Phase::StvCross),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectRef {
    Functionality(FuncId),
    Flow(FlowId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NavTarget {
    Functionality,
    Page,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckTag {
    GoalProgress,
    FlowOutcome,
    Divergence,
    ExpectedEffect,
}

/// Parameters of a metamorphic variant, resolved at generation time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantParams {
    /// Reverse the maximal order-independent run `[start, start+len)`.
    ReverseRun { start: usize, len: usize },
    /// Hide then re-show a dynamic widget right before `step_index` by
    /// driving its visibility toggler.
    HideShow { step_index: usize, page: String, toggler: String },
    /// Flip an optional toggle that the trace does not use, before the first
    /// step on its page.
    ToggleExtra { insert_before: usize, page: String, widget: String },
    /// Drop an optional toggle step from the trace.
    ToggleDrop { step_index: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanStep {
    /// Bring the session to a page: a functionality's first-trace entry
    /// page, or an explicit page id.
    NavigateTo { kind: NavTarget, id: String },
    /// Replay a known trace, checking each step against its recording and
    /// aborting the replay on divergence.
    ExecuteTrace { func: FuncId, trace: TraceId },
    /// Perform raw actions with navigation but no replay expectations.
    ExecuteActions { actions: Vec<ActionStep> },
    /// Drive the app into a state satisfying the condition.
    EstablishCondition { phi: Condition },
    /// Execute a metamorphic variant of a known trace.
    ApplyVariant { trace: TraceId, mr: MrTag, params: VariantParams },
    /// Run a check over what has executed so far.
    Observe { check: CheckTag },
}

/// An LSTV test scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestScenario {
    pub id: String,
    #[serde(rename = "type")]
    pub scenario_type: ScenarioType,
    pub strategy: StrategyTag,
    pub object: ObjectRef,
    pub guidance: Vec<PlanStep>,
    /// FFG revision the scenario was generated against.
    pub ffg_revision: u64,
}
