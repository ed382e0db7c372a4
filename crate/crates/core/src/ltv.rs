//! Long-term-view scenario generation: scenarios that refine functionality
//! definitions (completeness, independence) and sharpen flow conditions
//! (partition, minimal violation, invariant).

use crate::app::{AppSpec, SimulatorSession};
use crate::condition::{is_satisfiable, minimal_violation_targets, partition_disjuncts};
use crate::executor::Driver;
use crate::ffg::{BlockKind, Ffg, Flow};
use crate::oracle::SemanticOracle;
use crate::scenario::{
    CheckTag, NavTarget, ObjectRef, PlanStep, ScenarioType, StrategyTag, TestScenario,
};

/// Alternative return-path actions tried per flow by the invariant strategy.
pub const INVARIANT_ALPHA_BOUND: usize = 4;

fn scenario(strategy: StrategyTag, object: ObjectRef, guidance: Vec<PlanStep>, rev: u64) -> TestScenario {
    TestScenario {
        id: String::new(),
        scenario_type: ScenarioType::Ltv,
        strategy,
        object,
        guidance,
        ffg_revision: rev,
    }
}

/// Challenge completeness: replay a functionality's traces, then attempt
/// topical actions its traces never used, probing forward after each one.
pub fn gen_completeness(
    ffg: &Ffg,
    spec: &AppSpec,
    oracle: &dyn SemanticOracle,
) -> Vec<TestScenario> {
    let mut out = Vec::new();
    for func in ffg.functionalities.values() {
        let missing = match oracle.essential_actions(func, spec) {
            Ok(actions) if !actions.is_empty() => actions,
            _ => continue,
        };
        let mut guidance: Vec<PlanStep> = func
            .traces
            .iter()
            .map(|t| PlanStep::ExecuteTrace { func: func.id.clone(), trace: t.id.clone() })
            .collect();
        for action in missing {
            guidance.push(PlanStep::ExecuteActions { actions: vec![action] });
            guidance.push(PlanStep::Observe { check: CheckTag::GoalProgress });
        }
        out.push(scenario(
            StrategyTag::Completeness,
            ObjectRef::Functionality(func.id.clone()),
            guidance,
            ffg.revision,
        ));
    }
    out
}

/// Challenge independence: when a node's trace goals cluster apart, execute
/// each cluster's traces in isolation.
pub fn gen_independence(
    ffg: &Ffg,
    oracle: &dyn SemanticOracle,
    sep_threshold: f64,
) -> Vec<TestScenario> {
    let mut out = Vec::new();
    for func in ffg.functionalities.values() {
        if func.traces.len() < 2 {
            continue;
        }
        let goals: Vec<(String, crate::oracle::GoalDescriptor)> = func
            .traces
            .iter()
            .map(|t| (t.id.0.clone(), t.goal.clone()))
            .collect();
        let result = match oracle.cluster_trace_goals(&goals) {
            Ok(r) => r,
            Err(_) => continue,
        };
        if result.clusters.len() < 2 || result.separation < sep_threshold {
            continue;
        }
        for cluster in &result.clusters {
            let guidance: Vec<PlanStep> = func
                .traces
                .iter()
                .filter(|t| cluster.contains(&t.id.0))
                .map(|t| PlanStep::ExecuteTrace { func: func.id.clone(), trace: t.id.clone() })
                .collect();
            if guidance.is_empty() {
                continue;
            }
            out.push(scenario(
                StrategyTag::Independence,
                ObjectRef::Functionality(func.id.clone()),
                guidance,
                ffg.revision,
            ));
        }
    }
    out
}

/// Examine a disjunctive condition's internal heterogeneity: one scenario
/// per disjunct, driving the system into that disjunct before the target
/// trace.
pub fn gen_condition_partition(flow: &Flow, ffg: &Ffg, spec: &AppSpec) -> Vec<TestScenario> {
    let disjuncts = partition_disjuncts(&flow.phi);
    if disjuncts.len() < 2 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for disjunct in disjuncts {
        if !is_satisfiable(&disjunct, &spec.var_decls).unwrap_or(false) {
            continue;
        }
        out.push(scenario(
            StrategyTag::ConditionPartition,
            ObjectRef::Flow(flow.id.clone()),
            vec![
                PlanStep::NavigateTo { kind: NavTarget::Functionality, id: flow.source.0.clone() },
                PlanStep::ExecuteTrace { func: flow.source.clone(), trace: flow.pi.clone() },
                PlanStep::EstablishCondition { phi: disjunct },
                PlanStep::ExecuteTrace { func: flow.target.clone(), trace: flow.pi_prime.clone() },
                PlanStep::Observe { check: CheckTag::FlowOutcome },
            ],
            ffg.revision,
        ));
    }
    out
}

/// Probe whether a condition can be weakened: establish states that negate
/// exactly one literal of a clause, then attempt the flow.
pub fn gen_minimal_violation(
    flow: &Flow,
    ffg: &Ffg,
    spec: &AppSpec,
) -> (Vec<TestScenario>, Vec<String>) {
    let mut out = Vec::new();
    let mut notes = Vec::new();
    let phi = flow.phi.normalized();
    if phi.is_true() || phi.is_false() {
        return (out, notes);
    }
    for clause in &phi.clauses {
        let targets = match minimal_violation_targets(clause) {
            Ok(t) => t,
            Err(_) => continue,
        };
        for (literal, violating) in targets {
            if !is_satisfiable(&violating, &spec.var_decls).unwrap_or(false) {
                notes.push(format!(
                    "{}: violation of `{}` is unsatisfiable, skipped",
                    flow.id,
                    literal.var
                ));
                continue;
            }
            out.push(scenario(
                StrategyTag::MinimalViolation,
                ObjectRef::Flow(flow.id.clone()),
                vec![
                    PlanStep::EstablishCondition { phi: violating },
                    PlanStep::ExecuteTrace { func: flow.source.clone(), trace: flow.pi.clone() },
                    PlanStep::ExecuteTrace {
                        func: flow.target.clone(),
                        trace: flow.pi_prime.clone(),
                    },
                    PlanStep::Observe { check: CheckTag::FlowOutcome },
                ],
                ffg.revision,
            ));
        }
    }
    (out, notes)
}

/// Probe whether a condition must be strengthened: execute the flow, perturb
/// through a return path from the target functionality, re-execute, and
/// observe divergence.
///
/// Alpha candidates are validated on a cloned session: after the flow runs,
/// the candidate must bring the session back to a page where the source
/// trace starts while the flow condition still holds.
pub fn gen_condition_invariant(
    flow: &Flow,
    ffg: &Ffg,
    spec: &AppSpec,
    seed: u64,
) -> Vec<TestScenario> {
    let (source_func, pi) = match ffg.resolve_trace(&flow.pi) {
        Ok(x) => x,
        Err(_) => return Vec::new(),
    };
    let (target_func, pi_prime) = match ffg.resolve_trace(&flow.pi_prime) {
        Ok(x) => x,
        Err(_) => return Vec::new(),
    };
    let pi_entry = match pi.steps.first() {
        Some(s) => s.page.clone(),
        None => return Vec::new(),
    };
    // Run the core flow once on a probe clone.
    let session = SimulatorSession::reset(
        std::sync::Arc::new(spec.clone()),
        seed,
    );
    let mut probe = Driver::new(session, 192);
    let ok_pi = probe.replay(&pi.steps, &pi.echoes, ffg, spec, BlockKind::Plan);
    if !ok_pi.completed {
        return Vec::new();
    }
    let ok_pp = probe.replay(&pi_prime.steps, &pi_prime.echoes, ffg, spec, BlockKind::Plan);
    if !ok_pp.completed {
        return Vec::new();
    }
    let mut out = Vec::new();
    for alpha in target_func.traces.iter().take(INVARIANT_ALPHA_BOUND) {
        let mut check = Driver::new(probe.session.clone_session(), 96);
        if !check.raw_actions(&alpha.steps, ffg, spec, BlockKind::Plan) {
            continue;
        }
        if check.session.current_page != pi_entry {
            continue;
        }
        if !flow.phi.evaluate(&check.session.valuation).unwrap_or(false) {
            continue;
        }
        out.push(scenario(
            StrategyTag::ConditionInvariant,
            ObjectRef::Flow(flow.id.clone()),
            vec![
                PlanStep::ExecuteTrace { func: source_func.id.clone(), trace: flow.pi.clone() },
                PlanStep::ExecuteTrace {
                    func: target_func.id.clone(),
                    trace: flow.pi_prime.clone(),
                },
                PlanStep::ExecuteActions { actions: alpha.steps.clone() },
                PlanStep::ExecuteTrace { func: source_func.id.clone(), trace: flow.pi.clone() },
                PlanStep::ExecuteTrace {
                    func: target_func.id.clone(),
                    trace: flow.pi_prime.clone(),
                },
                PlanStep::Observe { check: CheckTag::Divergence },
            ],
            ffg.revision,
        ));
    }
    out
}

#[cfg(test)]
mod ltv_tests;
