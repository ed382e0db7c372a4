//! FFG updating: folds newly executed traces back into the graph through
//! functionality creation/merging/splitting and flow
//! creation/strengthening/weakening/merging.
//!
//! Traces from condition-focused (LTV flow) scenarios carry inferred state
//! conditions and drive the full flow case analysis; traces from discovery
//! scenarios (bootstrap, LTV functionality, STV) only contribute
//! conservatively `true` flows for previously unseen continuations, the same
//! posture initialization takes.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::app::{ActionStep, AppSpec};
use crate::condition::{
    conjoin_negation, disjoin, entails, is_satisfiable, Condition, ConditionError, Valuation,
    VarDecl,
};
use crate::ffg::{
    best_matching_node, segment_trace, ExecutionTrace, Ffg, FfgError, Flow, FlowId, FuncId,
    Functionality, Segment, StepEcho, Trace, TraceId,
};
use crate::oracle::{GoalDescriptor, SemanticOracle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateKind {
    NodeCreate,
    NodeMerge,
    NodeSplit,
    FlowCreate,
    FlowStrengthen,
    FlowWeaken,
    FlowMerge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Justification {
    Similarity { score: f64 },
    Entailment { verdict: String },
    Cluster { clusters: usize, separation: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateOp {
    pub kind: UpdateKind,
    pub before: Vec<String>,
    pub after: Vec<String>,
    pub justification: Justification,
}

/// Where an executed trace came from; decides how much condition reasoning
/// its boundaries support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceProvenance {
    Bootstrap,
    LtvFunc,
    LtvFlow,
    Stv,
}

impl TraceProvenance {
    fn condition_bearing(self) -> bool {
        matches!(self, TraceProvenance::LtvFlow)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub sim: f64,
    pub sep: f64,
}

/// A segment's final home after functionality updating.
#[derive(Debug, Clone)]
pub struct SegmentHome {
    pub func: FuncId,
    pub trace: TraceId,
    /// App state right before the segment started.
    pub entry_state: Valuation,
}

/// Candidate flow derived at one functionality-changing point.
#[derive(Debug, Clone)]
pub struct DerivedFlow {
    pub source: FuncId,
    pub pi: TraceId,
    pub phi: Condition,
    pub target: FuncId,
    pub pi_prime: TraceId,
    /// Whether `phi` was inferred from state (full case analysis) or set
    /// conservatively (create-only).
    pub inferred: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum UpdateError {
    #[error(transparent)]
    Ffg(#[from] FfgError),
    #[error(transparent)]
    Condition(#[from] ConditionError),
    #[error(transparent)]
    Oracle(#[from] crate::oracle::OracleError),
}

fn vars_of_segment(segment: &Segment) -> &BTreeSet<String> {
    &segment.touched_vars
}

fn recompute_vars(spec: &AppSpec, traces: &[Trace]) -> BTreeSet<String> {
    let mut vars = BTreeSet::new();
    for trace in traces {
        for step in &trace.steps {
            if let Some(page) = spec.page(&step.page) {
                vars.extend(page.touched_vars.iter().cloned());
            }
        }
    }
    vars
}

/// Segment a new execution and fold each segment into the graph: merge into
/// the best-matching node or create a new one, then re-cluster merged nodes
/// and split those whose trace goals separate cleanly.
pub fn update_functionalities(
    ffg: &mut Ffg,
    exec: &ExecutionTrace,
    spec: &AppSpec,
    oracle: &dyn SemanticOracle,
    thresholds: Thresholds,
) -> Result<(Vec<UpdateOp>, Vec<SegmentHome>), UpdateError> {
    let segments = segment_trace(exec, spec, oracle, thresholds.sim)?;
    let mut ops = Vec::new();
    let mut homes = Vec::new();
    let mut touched_nodes: BTreeSet<FuncId> = BTreeSet::new();

    for segment in &segments {
        let actions: Vec<ActionStep> = segment
            .step_indices
            .iter()
            .map(|&i| exec.steps[i].action.clone())
            .collect();
        let echoes: Vec<StepEcho> = segment
            .step_indices
            .iter()
            .map(|&i| StepEcho::from_outcome(&exec.steps[i].outcome))
            .collect();
        match best_matching_node(ffg, &segment.goal, thresholds.sim)? {
            Some(func_id) => {
                let score = crate::oracle::similarity(
                    &segment.goal,
                    &ffg.functionalities[&func_id].goal,
                )?;
                let existing = ffg.functionalities[&func_id]
                    .trace_with_steps(&actions)
                    .map(|t| t.id.clone());
                let trace_id = match existing {
                    // Identical step lists deduplicate: one merge op, no new
                    // trace, graph untouched.
                    Some(id) => id,
                    None => {
                        let id = ffg.alloc_trace_id();
                        ffg.append_trace(
                            &func_id,
                            Trace {
                                id: id.clone(),
                                steps: actions,
                                echoes,
                                goal: segment.goal.clone(),
                            },
                            vars_of_segment(segment),
                        );
                        touched_nodes.insert(func_id.clone());
                        id
                    }
                };
                ops.push(UpdateOp {
                    kind: UpdateKind::NodeMerge,
                    before: vec![func_id.0.clone()],
                    after: vec![func_id.0.clone(), trace_id.0.clone()],
                    justification: Justification::Similarity { score },
                });
                homes.push(SegmentHome {
                    func: func_id,
                    trace: trace_id,
                    entry_state: segment.entry_state.clone(),
                });
            }
            None => {
                let func_id = ffg.alloc_func_id();
                let trace_id = ffg.alloc_trace_id();
                ffg.insert_functionality(Functionality {
                    id: func_id.clone(),
                    goal: segment.goal.clone(),
                    vars: vars_of_segment(segment).clone(),
                    traces: vec![Trace {
                        id: trace_id.clone(),
                        steps: actions,
                        echoes,
                        goal: segment.goal.clone(),
                    }],
                });
                ops.push(UpdateOp {
                    kind: UpdateKind::NodeCreate,
                    before: Vec::new(),
                    after: vec![func_id.0.clone()],
                    justification: Justification::Similarity { score: 0.0 },
                });
                homes.push(SegmentHome {
                    func: func_id,
                    trace: trace_id,
                    entry_state: segment.entry_state.clone(),
                });
            }
        }
    }

    // Independence refinement: a node whose trace goals now separate into
    // distinct clusters is split.
    for node_id in touched_nodes {
        if let Some(op) = try_split(ffg, &node_id, spec, oracle, thresholds)? {
            ops.push(op);
        }
    }

    // Splitting may have re-homed traces; resolve final homes.
    let homes = homes
        .into_iter()
        .map(|h| {
            let func = ffg
                .home_of(&h.trace)
                .map(|f| f.id.clone())
                .unwrap_or(h.func.clone());
            SegmentHome { func, ..h }
        })
        .collect();
    Ok((ops, homes))
}

fn try_split(
    ffg: &mut Ffg,
    node_id: &FuncId,
    spec: &AppSpec,
    oracle: &dyn SemanticOracle,
    thresholds: Thresholds,
) -> Result<Option<UpdateOp>, UpdateError> {
    let node = match ffg.functionalities.get(node_id) {
        Some(n) if n.traces.len() >= 2 => n.clone(),
        _ => return Ok(None),
    };
    let goals: Vec<(String, GoalDescriptor)> = node
        .traces
        .iter()
        .map(|t| (t.id.0.clone(), t.goal.clone()))
        .collect();
    let result = oracle.cluster_trace_goals(&goals)?;
    if result.clusters.len() < 2 || result.separation < thresholds.sep {
        return Ok(None);
    }
    // The cluster holding the node's first trace keeps its identity.
    let first_trace = node.traces[0].id.0.clone();
    let mut cluster_order: Vec<&BTreeSet<String>> = result.clusters.iter().collect();
    cluster_order.sort_by_key(|c| {
        node.traces
            .iter()
            .position(|t| c.contains(&t.id.0))
            .unwrap_or(usize::MAX)
    });
    let mut after_ids = Vec::new();
    for cluster in cluster_order {
        let members: Vec<Trace> = node
            .traces
            .iter()
            .filter(|t| cluster.contains(&t.id.0))
            .cloned()
            .collect();
        if members.is_empty() {
            continue;
        }
        let goal_refs: Vec<&GoalDescriptor> = members.iter().map(|t| &t.goal).collect();
        let goal = GoalDescriptor::mean_of(&goal_refs, members[0].goal.label.clone())?;
        let vars = recompute_vars(spec, &members);
        let keep_id = cluster.contains(&first_trace);
        let id = if keep_id { node_id.clone() } else { ffg.alloc_func_id() };
        after_ids.push(id.0.clone());
        ffg.insert_functionality(Functionality {
            id: id.clone(),
            goal,
            vars,
            traces: members,
        });
    }
    // Re-point flows whose endpoints moved.
    let moved: Vec<(FlowId, FuncId, FuncId)> = ffg
        .flows
        .values()
        .map(|f| {
            let src = ffg.home_of(&f.pi).map(|x| x.id.clone()).unwrap_or(f.source.clone());
            let dst = ffg
                .home_of(&f.pi_prime)
                .map(|x| x.id.clone())
                .unwrap_or(f.target.clone());
            (f.id.clone(), src, dst)
        })
        .collect();
    for (flow_id, src, dst) in moved {
        let flow = ffg.flows.get_mut(&flow_id).expect("flow exists");
        if flow.source != src || flow.target != dst {
            flow.source = src;
            flow.target = dst;
        }
    }
    Ok(Some(UpdateOp {
        kind: UpdateKind::NodeSplit,
        before: vec![node_id.0.clone()],
        after: after_ids,
        justification: Justification::Cluster {
            clusters: result.clusters.len(),
            separation: result.separation,
        },
    }))
}

/// Candidate flows at the functionality-changing points of a segmented
/// trace. Condition-bearing traces get an inferred state condition; others
/// stay conservatively `true`.
pub fn derive_flow(
    homes: &[SegmentHome],
    ffg: &Ffg,
    oracle: &dyn SemanticOracle,
    spec: &AppSpec,
    provenance: TraceProvenance,
) -> Result<Vec<DerivedFlow>, UpdateError> {
    let mut out = Vec::new();
    for pair in homes.windows(2) {
        let (prev, next) = (&pair[0], &pair[1]);
        if prev.func == next.func {
            continue;
        }
        let inferred = provenance.condition_bearing();
        let phi = if inferred {
            let target = ffg.functionality(&next.func)?;
            oracle.infer_flow_condition(&next.entry_state, target, spec)?
        } else {
            Condition::tautology()
        };
        out.push(DerivedFlow {
            source: prev.func.clone(),
            pi: prev.trace.clone(),
            phi,
            target: next.func.clone(),
            pi_prime: next.trace.clone(),
            inferred,
        });
    }
    Ok(out)
}

fn strict_entails(
    a: &Condition,
    b: &Condition,
    decls: &[VarDecl],
) -> Result<(bool, bool), ConditionError> {
    let ab = entails(a, b, decls)?;
    let ba = entails(b, a, decls)?;
    Ok((ab, ba))
}

fn steps_of<'a>(ffg: &'a Ffg, trace: &TraceId) -> Option<&'a [ActionStep]> {
    ffg.resolve_trace(trace).ok().map(|(_, t)| t.steps.as_slice())
}

/// Compare a derived flow against every existing flow sharing its source
/// functionality and source trace, applying the update case analysis with
/// strict entailment. Operations apply eagerly, so later comparisons see
/// updated conditions.
pub fn update_flows(
    ffg: &mut Ffg,
    candidate: &DerivedFlow,
    decls: &[VarDecl],
) -> Result<Vec<UpdateOp>, UpdateError> {
    let mut ops = Vec::new();
    let siblings: Vec<FlowId> = ffg
        .flows
        .values()
        .filter(|f| f.source == candidate.source && f.pi == candidate.pi)
        .map(|f| f.id.clone())
        .collect();
    let cand_steps = steps_of(ffg, &candidate.pi_prime)
        .ok_or_else(|| FfgError::UnknownTrace(candidate.pi_prime.clone()))?
        .to_vec();

    if !candidate.inferred {
        // Conservative observation: only record a previously unseen
        // continuation.
        let unseen = !siblings.iter().any(|id| {
            steps_of(ffg, &ffg.flows[id].pi_prime)
                .map(|s| s == cand_steps.as_slice())
                .unwrap_or(false)
        });
        if unseen {
            let id = ffg.alloc_flow_id();
            ops.push(UpdateOp {
                kind: UpdateKind::FlowCreate,
                before: Vec::new(),
                after: vec![id.0.clone()],
                justification: Justification::Entailment {
                    verdict: "conservative continuation".into(),
                },
            });
            ffg.insert_flow(Flow {
                id,
                source: candidate.source.clone(),
                target: candidate.target.clone(),
                pi: candidate.pi.clone(),
                phi: Condition::tautology(),
                pi_prime: candidate.pi_prime.clone(),
            });
        }
        return Ok(ops);
    }

    let mut phi = candidate.phi.normalized();
    let mut absorbed = false;
    for sib_id in &siblings {
        let sibling = ffg.flows[sib_id].clone();
        let same_outcome = steps_of(ffg, &sibling.pi_prime)
            .map(|s| s == cand_steps.as_slice())
            .unwrap_or(false);
        let (fwd, back) = strict_entails(&phi, &sibling.phi, decls)?;
        if same_outcome {
            if fwd {
                // Covered (or identical): nothing to learn.
                absorbed = true;
            } else if back {
                // The sibling's condition was too strong; generalize it.
                ops.push(UpdateOp {
                    kind: UpdateKind::FlowWeaken,
                    before: vec![sib_id.0.clone(), sibling.phi.render()],
                    after: vec![sib_id.0.clone(), phi.render()],
                    justification: Justification::Entailment {
                        verdict: "existing condition entails the new one".into(),
                    },
                });
                ffg.set_flow_phi(sib_id, phi.clone());
                absorbed = true;
            } else {
                // Logically incomparable, same outcome: merge.
                let merged = disjoin(&phi, &sibling.phi);
                ops.push(UpdateOp {
                    kind: UpdateKind::FlowMerge,
                    before: vec![sib_id.0.clone(), sibling.phi.render()],
                    after: vec![sib_id.0.clone(), merged.render()],
                    justification: Justification::Entailment {
                        verdict: "incomparable conditions, same outcome".into(),
                    },
                });
                ffg.set_flow_phi(sib_id, merged);
                absorbed = true;
            }
        } else if fwd && !back {
            // Stronger condition, different outcome: the sibling no longer
            // covers the new condition's states.
            let strengthened = conjoin_negation(&sibling.phi, &phi);
            if is_satisfiable(&strengthened, decls)? {
                ops.push(UpdateOp {
                    kind: UpdateKind::FlowStrengthen,
                    before: vec![sib_id.0.clone(), sibling.phi.render()],
                    after: vec![sib_id.0.clone(), strengthened.render()],
                    justification: Justification::Entailment {
                        verdict: "new condition is strictly stronger, outcome differs".into(),
                    },
                });
                ffg.set_flow_phi(sib_id, strengthened);
            } else {
                ops.push(UpdateOp {
                    kind: UpdateKind::FlowStrengthen,
                    before: vec![sib_id.0.clone(), sibling.phi.render()],
                    after: vec![sib_id.0.clone(), "removed (unsatisfiable)".into()],
                    justification: Justification::Entailment {
                        verdict: "strengthened condition became unsatisfiable".into(),
                    },
                });
                ffg.remove_flow(sib_id);
            }
        } else if back && !fwd {
            // Weaker condition, different outcome: carve out the sibling's
            // states from the new flow.
            phi = conjoin_negation(&phi, &sibling.phi);
        }
        // Incomparable or equivalent with a different outcome: plain
        // coexistence, create below.
    }
    if !absorbed && is_satisfiable(&phi, decls)? {
        let duplicate = ffg.flows.values().any(|f| {
            f.source == candidate.source
                && f.pi == candidate.pi
                && steps_of(ffg, &f.pi_prime)
                    .map(|s| s == cand_steps.as_slice())
                    .unwrap_or(false)
                && crate::condition::equivalent(&f.phi, &phi, decls).unwrap_or(false)
        });
        if !duplicate {
            let id = ffg.alloc_flow_id();
            ops.push(UpdateOp {
                kind: UpdateKind::FlowCreate,
                before: Vec::new(),
                after: vec![id.0.clone(), phi.render()],
                justification: Justification::Entailment {
                    verdict: if siblings.is_empty() {
                        "no sibling flow".into()
                    } else {
                        "new condition/outcome pair".into()
                    },
                },
            });
            ffg.insert_flow(Flow {
                id,
                source: candidate.source.clone(),
                target: candidate.target.clone(),
                pi: candidate.pi.clone(),
                phi: phi.clone(),
                pi_prime: candidate.pi_prime.clone(),
            });
        }
    }
    Ok(ops)
}

/// Summary of one update pass.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct IterationSummary {
    pub ops: Vec<UpdateOp>,
    pub revision: u64,
}

impl IterationSummary {
    pub fn count(&self, kind: UpdateKind) -> usize {
        self.ops.iter().filter(|o| o.kind == kind).count()
    }
}

/// Run the full update pass for a batch of executed traces, in order.
pub fn apply_iteration(
    ffg: &mut Ffg,
    executed: &[(ExecutionTrace, TraceProvenance)],
    spec: &AppSpec,
    oracle: &dyn SemanticOracle,
    thresholds: Thresholds,
) -> Result<IterationSummary, UpdateError> {
    let mut summary = IterationSummary::default();
    for (trace, provenance) in executed {
        if trace.steps.is_empty() {
            continue;
        }
        let (mut ops, homes) =
            update_functionalities(ffg, trace, spec, oracle, thresholds)?;
        summary.ops.append(&mut ops);
        let candidates = derive_flow(&homes, ffg, oracle, spec, *provenance)?;
        for candidate in &candidates {
            let mut ops = update_flows(ffg, candidate, &spec.var_decls)?;
            summary.ops.append(&mut ops);
        }
    }
    summary.revision = ffg.revision;
    Ok(summary)
}

#[cfg(test)]
mod updater_tests;
