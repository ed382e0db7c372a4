//! Short-term-view scenario generation: metamorphic variants of a flow's
//! source trace (single-flow) and data-state transformations across
//! functionality pairs that share variables (cross-flow).

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::app::{AppSpec, Mutation, SimulatorSession, WidgetKind};
use crate::executor::{apply_variant, Driver};
use crate::ffg::{BlockKind, Ffg, Flow, FuncId, Trace, TraceId};
use crate::scenario::{
    CheckTag, MrTag, ObjectRef, PlanStep, ScenarioType, StrategyTag, TestScenario, VariantParams,
};

fn scenario(
    mr: MrTag,
    object: ObjectRef,
    guidance: Vec<PlanStep>,
    rev: u64,
) -> TestScenario {
    TestScenario {
        id: String::new(),
        scenario_type: ScenarioType::Stv,
        strategy: StrategyTag::Metamorphic(mr),
        object,
        guidance,
        ffg_revision: rev,
    }
}

/// Maximal runs of adjacent steps on one page whose widgets are all marked
/// order-independent.
fn order_independent_runs(trace: &Trace, spec: &AppSpec) -> Vec<(usize, usize)> {
    let flags: Vec<bool> = trace
        .steps
        .iter()
        .map(|s| {
            spec.page(&s.page)
                .and_then(|p| p.widget(&s.widget))
                .map(|w| w.order_independent)
                .unwrap_or(false)
        })
        .collect();
    let mut runs = Vec::new();
    let mut start = None;
    for i in 0..=trace.steps.len() {
        let in_run = i < trace.steps.len()
            && flags[i]
            && start
                .map(|s: usize| trace.steps[s].page == trace.steps[i].page)
                .unwrap_or(true);
        match (start, in_run) {
            (None, true) => start = Some(i),
            (Some(s), false) => {
                if i - s >= 2 {
                    runs.push((s, i - s));
                }
                start = if i < trace.steps.len() && flags[i] { Some(i) } else { None };
            }
            _ => {}
        }
    }
    runs
}

/// The toggle widget whose rules drive `visible__<page>__<widget>` for the
/// given widget, if any.
fn visibility_toggler(spec: &AppSpec, page: &str, widget: &str) -> Option<String> {
    let var = format!("visible__{page}__{widget}");
    spec.decl(&var)?;
    let page_def = spec.page(page)?;
    for candidate in &page_def.widgets {
        if !matches!(candidate.kind, WidgetKind::Toggle | WidgetKind::Checkbox) {
            continue;
        }
        let sets_var = spec
            .transition_rules
            .iter()
            .filter(|r| r.source_page == page && r.widget == candidate.id)
            .any(|r| {
                r.updates.iter().any(|m| matches!(m, Mutation::Set { var: v, .. } if v == &var))
            });
        if sets_var {
            return Some(candidate.id.clone());
        }
    }
    None
}

/// Validate a variant on a fresh clone: the variant must replay cleanly and
/// still enable the flow's target trace.
fn variant_survives_probe(
    base: &Trace,
    params: &VariantParams,
    flow: &Flow,
    ffg: &Ffg,
    spec: &AppSpec,
    seed: u64,
) -> bool {
    let (steps, echoes) = apply_variant(base, params);
    let session = SimulatorSession::reset(Arc::new(spec.clone()), seed);
    let mut probe = Driver::new(session, 192);
    let run = probe.replay(&steps, &echoes, ffg, spec, BlockKind::Plan);
    if !run.completed || !run.all_ok {
        return false;
    }
    if !flow.phi.evaluate(&probe.session.valuation).unwrap_or(false) {
        return false;
    }
    let pi_prime = match ffg.resolve_trace(&flow.pi_prime) {
        Ok((_, t)) => t.clone(),
        Err(_) => return false,
    };
    let run = probe.replay(&pi_prime.steps, &pi_prime.echoes, ffg, spec, BlockKind::Plan);
    run.completed && run.all_ok
}

/// Widget-level metamorphic variants of a flow's source trace.
pub fn gen_single_flow(flow: &Flow, ffg: &Ffg, spec: &AppSpec, seed: u64) -> Vec<TestScenario> {
    let pi = match ffg.resolve_trace(&flow.pi) {
        Ok((_, t)) => t.clone(),
        Err(_) => return Vec::new(),
    };
    let mut candidates: Vec<(MrTag, VariantParams)> = Vec::new();

    for (start, len) in order_independent_runs(&pi, spec) {
        candidates.push((MrTag::ChangeOrder, VariantParams::ReverseRun { start, len }));
    }

    for (idx, step) in pi.steps.iter().enumerate() {
        if let Some(toggler) = visibility_toggler(spec, &step.page, &step.widget) {
            candidates.push((
                MrTag::HideShow,
                VariantParams::HideShow {
                    step_index: idx,
                    page: step.page.clone(),
                    toggler,
                },
            ));
        }
    }

    // Optional toggles: drop one the trace uses, or flip one it ignores.
    let mut seen_extra: BTreeSet<(String, String)> = BTreeSet::new();
    for (idx, step) in pi.steps.iter().enumerate() {
        let widget = spec.page(&step.page).and_then(|p| p.widget(&step.widget));
        if let Some(w) = widget {
            if w.optional && matches!(w.kind, WidgetKind::Toggle | WidgetKind::Checkbox) {
                candidates.push((MrTag::Toggle, VariantParams::ToggleDrop { step_index: idx }));
            }
        }
        if let Some(page) = spec.page(&step.page) {
            for w in &page.widgets {
                let used = pi.steps.iter().any(|s| s.page == page.id && s.widget == w.id);
                if w.optional
                    && !used
                    && matches!(w.kind, WidgetKind::Toggle | WidgetKind::Checkbox)
                    && seen_extra.insert((page.id.clone(), w.id.clone()))
                {
                    candidates.push((
                        MrTag::Toggle,
                        VariantParams::ToggleExtra {
                            insert_before: idx,
                            page: page.id.clone(),
                            widget: w.id.clone(),
                        },
                    ));
                }
            }
        }
    }

    let mut out = Vec::new();
    for (mr, params) in candidates {
        if !variant_survives_probe(&pi, &params, flow, ffg, spec, seed) {
            continue;
        }
        out.push(scenario(
            mr,
            ObjectRef::Flow(flow.id.clone()),
            vec![
                PlanStep::ApplyVariant { trace: pi.id.clone(), mr, params },
                PlanStep::ExecuteTrace { func: flow.target.clone(), trace: flow.pi_prime.clone() },
                PlanStep::Observe { check: CheckTag::FlowOutcome },
            ],
            ffg.revision,
        ));
    }
    out
}

fn op_family(tag: &str) -> Option<MrTag> {
    const CREATE: [&str; 2] = ["add_", "create_"];
    const DELETE: [&str; 2] = ["delete_", "remove_"];
    const MODIFY: [&str; 3] = ["set_", "modify_", "update_"];
    const RESOURCE: [&str; 4] = ["consume_", "produce_", "acquire_", "release_"];
    if CREATE.iter().any(|p| tag.starts_with(p)) || DELETE.iter().any(|p| tag.starts_with(p)) {
        Some(MrTag::CreateDelete)
    } else if MODIFY.iter().any(|p| tag.starts_with(p)) {
        Some(MrTag::ModifyAttribute)
    } else if RESOURCE.iter().any(|p| tag.starts_with(p)) {
        Some(MrTag::ConsumeProduce)
    } else {
        None
    }
}

fn is_delete(tag: &str) -> bool {
    tag.starts_with("delete_") || tag.starts_with("remove_")
}

/// Whether a trace step fires a rule that both emits an op of the family and
/// touches the shared variable.
fn trace_transformation(
    trace: &Trace,
    spec: &AppSpec,
    var: &str,
) -> Option<(MrTag, String)> {
    for step in &trace.steps {
        for rule in spec.rules_for(&step.page, &step.widget, step.action.kind()) {
            let op = match &rule.abstract_op {
                Some(op) => op,
                None => continue,
            };
            let family = match op_family(&op.tag) {
                Some(f) => f,
                None => continue,
            };
            let touches = rule.updates.iter().any(|m| {
                matches!(m,
                    Mutation::Set { var: v, .. }
                    | Mutation::Insert { var: v, .. }
                    | Mutation::Remove { var: v, .. } if v == var)
            });
            if touches {
                return Some((family, op.tag.clone()));
            }
        }
    }
    None
}

/// First trace anywhere in the graph that creates the shared entity,
/// preferring the flow's own target functionality.
fn find_create_trace(
    ffg: &Ffg,
    spec: &AppSpec,
    var: &str,
    prefer: &FuncId,
) -> Option<(FuncId, TraceId)> {
    let mut ordered: Vec<&crate::ffg::Functionality> = Vec::new();
    if let Ok(f) = ffg.functionality(prefer) {
        ordered.push(f);
    }
    ordered.extend(ffg.functionalities.values().filter(|f| &f.id != prefer));
    for func in ordered {
        for trace in &func.traces {
            if let Some((MrTag::CreateDelete, tag)) = trace_transformation(trace, spec, var) {
                if !is_delete(&tag) {
                    return Some((func.id.clone(), trace.id.clone()));
                }
            }
        }
    }
    None
}

/// Cross-flow scenarios: for functionality pairs sharing data with no direct
/// flow, transform the shared state through one side and re-execute a
/// condition-bearing flow into the other.
pub fn gen_cross_flow(ffg: &Ffg, spec: &AppSpec) -> Vec<TestScenario> {
    let mut out = Vec::new();
    let mut emitted: BTreeSet<String> = BTreeSet::new();
    for (a, b, shared) in ffg.shared_data_pairs() {
        for (n, n_prime) in [(a.clone(), b.clone()), (b.clone(), a.clone())] {
            for var in &shared {
                let flows = match ffg.find_flows_into(&n_prime, var) {
                    Ok(f) => f,
                    Err(_) => continue,
                };
                for flow in flows {
                    let transformer = ffg
                        .functionality(&n)
                        .ok()
                        .and_then(|f| {
                            f.traces.iter().find_map(|t| {
                                trace_transformation(t, spec, var)
                                    .map(|(mr, tag)| (t.id.clone(), mr, tag))
                            })
                        });
                    let (trace_id, mr, tag) = match transformer {
                        Some(x) => x,
                        None => continue,
                    };
                    let key = format!("{}|{}|{}|{}", flow.id, n, trace_id, mr.as_str());
                    if !emitted.insert(key) {
                        continue;
                    }
                    let mut guidance = Vec::new();
                    if mr == MrTag::CreateDelete && is_delete(&tag) {
                        // Deleting requires the entity to exist first.
                        if let Some((cf, ct)) = find_create_trace(ffg, spec, var, &flow.target)
                        {
                            guidance.push(PlanStep::ExecuteTrace { func: cf, trace: ct });
                        }
                    }
                    guidance.push(PlanStep::ExecuteTrace {
                        func: n.clone(),
                        trace: trace_id.clone(),
                    });
                    guidance.push(PlanStep::ExecuteTrace {
                        func: flow.source.clone(),
                        trace: flow.pi.clone(),
                    });
                    guidance.push(PlanStep::ExecuteTrace {
                        func: flow.target.clone(),
                        trace: flow.pi_prime.clone(),
                    });
                    guidance.push(PlanStep::Observe { check: CheckTag::ExpectedEffect });
                    out.push(scenario(
                        mr,
                        ObjectRef::Flow(flow.id.clone()),
                        guidance,
                        ffg.revision,
                    ));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod stv_tests;
