//! The functional flow graph: functionality nodes, flow edges, trace
//! bookkeeping, initialization from a bootstrap trace, and a canonical file
//! format (`docs/ffg-format.md`).

mod segmentation;
mod serialize;

pub use segmentation::{segment_trace, Segment};
pub use serialize::{from_canonical_json, to_canonical_json};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::app::{ActionStep, AppSpec, StepOutcome, StepStatus};
use crate::condition::Condition;
use crate::oracle::{similarity, GoalDescriptor, OracleError, SemanticOracle};

macro_rules! id_newtype {
    ($name:ident, $prefix:literal) => {
        #[derive(
            Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            fn numbered(n: u64) -> $name {
                $name(format!("{}{:03}", $prefix, n))
            }
        }

        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> $name {
                $name(s.to_string())
            }
        }
    };
}

id_newtype!(FuncId, "f");
id_newtype!(TraceId, "t");
id_newtype!(FlowId, "e");

#[derive(Debug, Error)]
pub enum FfgError {
    #[error("execution trace is empty")]
    EmptyTrace,
    #[error("bootstrap trace contains a non-ok step at index {0}")]
    NotAllOk(usize),
    #[error("unknown functionality `{0}`")]
    UnknownFunctionality(FuncId),
    #[error("unknown trace `{0}`")]
    UnknownTrace(TraceId),
    #[error("unknown flow `{0}`")]
    UnknownFlow(FlowId),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("document error at {path}: {msg}")]
    Document { path: String, msg: String },
}

/// Per-step replay expectations recorded when a trace was captured.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct StepEcho {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub op_tag: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub page_after: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub toast: Option<String>,
}

impl StepEcho {
    pub fn from_outcome(outcome: &StepOutcome) -> StepEcho {
        StepEcho {
            op_tag: outcome.abstract_op.as_ref().map(|o| o.tag.clone()),
            page_after: outcome.new_page.clone(),
            toast: outcome.toast().map(str::to_string),
        }
    }
}

/// An execution trace fragment owned by one functionality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub id: TraceId,
    pub steps: Vec<ActionStep>,
    /// Recorded outcomes aligned with `steps`, used to detect divergence on
    /// replay.
    pub echoes: Vec<StepEcho>,
    pub goal: GoalDescriptor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Functionality {
    pub id: FuncId,
    pub goal: GoalDescriptor,
    pub vars: BTreeSet<String>,
    pub traces: Vec<Trace>,
}

impl Functionality {
    pub fn trace(&self, id: &TraceId) -> Option<&Trace> {
        self.traces.iter().find(|t| &t.id == id)
    }

    pub fn trace_with_steps(&self, steps: &[ActionStep]) -> Option<&Trace> {
        self.traces.iter().find(|t| t.steps == steps)
    }
}

/// Flow edge: after executing `pi` of `source`, when `phi` holds, `pi_prime`
/// of `target` is executable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub id: FlowId,
    pub source: FuncId,
    pub target: FuncId,
    pub pi: TraceId,
    pub phi: Condition,
    pub pi_prime: TraceId,
}

/// How a recorded step came to be executed. Segmentation never merges steps
/// across block boundaries; blocks are only compared by identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Bootstrap,
    Plan,
    Navigation,
    Establish,
    Explore,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordedStep {
    pub action: ActionStep,
    pub outcome: StepOutcome,
    /// Provenance block index within the owning trace.
    pub block: u32,
    pub block_kind: BlockKind,
}

/// Full recording of one scenario (or bootstrap) execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ExecutionTrace {
    pub steps: Vec<RecordedStep>,
    /// Filled by the updater: per-step segment index, aligned with `steps`
    /// (ok steps only carry meaningful labels).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub segment_labels: Option<Vec<Option<u32>>>,
}

impl ExecutionTrace {
    pub fn ok_steps(&self) -> impl Iterator<Item = &RecordedStep> {
        self.steps.iter().filter(|s| s.outcome.status == StepStatus::Ok)
    }

    pub fn action_count(&self) -> u64 {
        self.steps.len() as u64
    }
}

/// The functional flow graph.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Ffg {
    pub functionalities: BTreeMap<FuncId, Functionality>,
    pub flows: BTreeMap<FlowId, Flow>,
    pub revision: u64,
    next_func: u64,
    next_trace: u64,
    next_flow: u64,
}

impl Ffg {
    pub fn new() -> Ffg {
        Ffg::default()
    }

    pub fn functionality(&self, id: &FuncId) -> Result<&Functionality, FfgError> {
        self.functionalities
            .get(id)
            .ok_or_else(|| FfgError::UnknownFunctionality(id.clone()))
    }

    pub fn flow(&self, id: &FlowId) -> Result<&Flow, FfgError> {
        self.flows.get(id).ok_or_else(|| FfgError::UnknownFlow(id.clone()))
    }

    /// Functionality that owns a trace.
    pub fn home_of(&self, trace: &TraceId) -> Option<&Functionality> {
        self.functionalities.values().find(|f| f.trace(trace).is_some())
    }

    pub fn resolve_trace(&self, id: &TraceId) -> Result<(&Functionality, &Trace), FfgError> {
        for func in self.functionalities.values() {
            if let Some(trace) = func.trace(id) {
                return Ok((func, trace));
            }
        }
        Err(FfgError::UnknownTrace(id.clone()))
    }

    fn bump(&mut self) {
        self.revision += 1;
    }

    pub fn alloc_func_id(&mut self) -> FuncId {
        self.next_func += 1;
        FuncId::numbered(self.next_func)
    }

    pub fn alloc_trace_id(&mut self) -> TraceId {
        self.next_trace += 1;
        TraceId::numbered(self.next_trace)
    }

    pub fn alloc_flow_id(&mut self) -> FlowId {
        self.next_flow += 1;
        FlowId::numbered(self.next_flow)
    }

    pub fn insert_functionality(&mut self, func: Functionality) {
        self.functionalities.insert(func.id.clone(), func);
        self.bump();
    }

    /// Append a trace to a node, refreshing the node goal to the normalized
    /// mean of its traces' goals. The node label is kept stable.
    pub fn append_trace(&mut self, func_id: &FuncId, trace: Trace, vars: &BTreeSet<String>) {
        if let Some(func) = self.functionalities.get_mut(func_id) {
            func.traces.push(trace);
            func.vars.extend(vars.iter().cloned());
            let goals: Vec<&GoalDescriptor> = func.traces.iter().map(|t| &t.goal).collect();
            if let Ok(mean) = GoalDescriptor::mean_of(&goals, func.goal.label.clone()) {
                func.goal = mean;
            }
            self.bump();
        }
    }

    pub fn insert_flow(&mut self, flow: Flow) {
        self.flows.insert(flow.id.clone(), flow);
        self.bump();
    }

    pub fn set_flow_phi(&mut self, id: &FlowId, phi: Condition) {
        if let Some(flow) = self.flows.get_mut(id) {
            flow.phi = phi.normalized();
            self.bump();
        }
    }

    pub fn remove_flow(&mut self, id: &FlowId) {
        if self.flows.remove(id).is_some() {
            self.bump();
        }
    }

    pub fn remove_functionality(&mut self, id: &FuncId) {
        if self.functionalities.remove(id).is_some() {
            self.bump();
        }
    }

    /// All flows with the given source functionality and source trace, in
    /// flow-id order.
    pub fn flows_from(&self, func: &FuncId, trace: &TraceId) -> Result<Vec<&Flow>, FfgError> {
        let owner = self.functionality(func)?;
        if owner.trace(trace).is_none() {
            return Err(FfgError::UnknownTrace(trace.clone()));
        }
        Ok(self
            .flows
            .values()
            .filter(|f| &f.source == func && &f.pi == trace)
            .collect())
    }

    /// Unordered functionality pairs with intersecting variable sets and no
    /// direct flow between them in either direction.
    pub fn shared_data_pairs(&self) -> Vec<(FuncId, FuncId, BTreeSet<String>)> {
        let ids: Vec<&FuncId> = self.functionalities.keys().collect();
        let mut out = Vec::new();
        for (i, a) in ids.iter().enumerate() {
            for b in &ids[i + 1..] {
                let fa = &self.functionalities[*a];
                let fb = &self.functionalities[*b];
                let shared: BTreeSet<String> =
                    fa.vars.intersection(&fb.vars).cloned().collect();
                if shared.is_empty() {
                    continue;
                }
                let connected = self.flows.values().any(|f| {
                    (&f.source == *a && &f.target == *b) || (&f.source == *b && &f.target == *a)
                });
                if !connected {
                    out.push(((*a).clone(), (*b).clone(), shared));
                }
            }
        }
        out
    }

    /// Flows into `target` whose condition mentions `var`.
    pub fn find_flows_into(&self, target: &FuncId, var: &str) -> Result<Vec<&Flow>, FfgError> {
        self.functionality(target)?;
        Ok(self
            .flows
            .values()
            .filter(|f| &f.target == target && f.phi.mentions(var))
            .collect())
    }

    /// Total number of recorded traces.
    pub fn trace_count(&self) -> usize {
        self.functionalities.values().map(|f| f.traces.len()).sum()
    }
}

/// Home a segment into an existing node (best goal similarity at or above
/// `threshold`, ties to the lowest id) or report that a new node is needed.
pub fn best_matching_node(
    ffg: &Ffg,
    goal: &GoalDescriptor,
    threshold: f64,
) -> Result<Option<FuncId>, OracleError> {
    let mut best: Option<(FuncId, f64)> = None;
    for (id, func) in &ffg.functionalities {
        let sim = similarity(goal, &func.goal)?;
        if sim >= threshold && best.as_ref().map(|(_, s)| sim > *s).unwrap_or(true) {
            best = Some((id.clone(), sim));
        }
    }
    Ok(best.map(|(id, _)| id))
}

/// Build a [`Trace`] from a segment of recorded steps.
fn trace_from_segment(id: TraceId, segment: &Segment, steps: &[&RecordedStep]) -> Trace {
    Trace {
        id,
        steps: steps.iter().map(|s| s.action.clone()).collect(),
        echoes: steps.iter().map(|s| StepEcho::from_outcome(&s.outcome)).collect(),
        goal: segment.goal.clone(),
    }
}

/// Group a bootstrap execution into goal-coherent functionalities connected
/// by conservatively `true` flows.
pub fn initialize_ffg(
    exec: &ExecutionTrace,
    spec: &AppSpec,
    oracle: &dyn SemanticOracle,
    sim_threshold: f64,
) -> Result<Ffg, FfgError> {
    if exec.steps.is_empty() {
        return Err(FfgError::EmptyTrace);
    }
    if let Some(bad) = exec.steps.iter().position(|s| s.outcome.status != StepStatus::Ok) {
        return Err(FfgError::NotAllOk(bad));
    }
    let segments = segment_trace(exec, spec, oracle, sim_threshold)?;
    let mut ffg = Ffg::new();
    // (node, trace) home of each segment, in order, for flow extraction.
    let mut homes: Vec<(FuncId, TraceId)> = Vec::new();
    for segment in &segments {
        let seg_steps: Vec<&RecordedStep> =
            segment.step_indices.iter().map(|&i| &exec.steps[i]).collect();
        let actions: Vec<ActionStep> = seg_steps.iter().map(|s| s.action.clone()).collect();
        let home = best_matching_node(&ffg, &segment.goal, sim_threshold)?;
        match home {
            Some(func_id) => {
                let existing = ffg.functionalities[&func_id]
                    .trace_with_steps(&actions)
                    .map(|t| t.id.clone());
                let trace_id = match existing {
                    Some(id) => id,
                    None => {
                        let id = ffg.alloc_trace_id();
                        let trace = trace_from_segment(id.clone(), segment, &seg_steps);
                        ffg.append_trace(&func_id, trace, &segment.touched_vars);
                        id
                    }
                };
                homes.push((func_id, trace_id));
            }
            None => {
                let func_id = ffg.alloc_func_id();
                let trace_id = ffg.alloc_trace_id();
                let trace = trace_from_segment(trace_id.clone(), segment, &seg_steps);
                ffg.insert_functionality(Functionality {
                    id: func_id.clone(),
                    goal: segment.goal.clone(),
                    vars: segment.touched_vars.clone(),
                    traces: vec![trace],
                });
                homes.push((func_id, trace_id));
            }
        }
    }
    // A flow at every functionality switch point, condition conservatively
    // `true`.
    for pair in homes.windows(2) {
        let (src_func, src_trace) = &pair[0];
        let (dst_func, dst_trace) = &pair[1];
        if src_func == dst_func {
            continue;
        }
        let duplicate = ffg.flows.values().any(|f| {
            &f.source == src_func && &f.pi == src_trace && &f.target == dst_func
                && &f.pi_prime == dst_trace
        });
        if duplicate {
            continue;
        }
        let id = ffg.alloc_flow_id();
        ffg.insert_flow(Flow {
            id,
            source: src_func.clone(),
            target: dst_func.clone(),
            pi: src_trace.clone(),
            phi: Condition::tautology(),
            pi_prime: dst_trace.clone(),
        });
    }
    Ok(ffg)
}

#[cfg(test)]
mod tests;
