//! Canonical FFG file format: stable key order, sorted collections, and
//! conditions rendered through the textual grammar so that serialization is
//! byte-reproducible and round-trips exactly.

use serde::{Deserialize, Serialize};

use super::{Ffg, FfgError, Flow, FlowId, FuncId, Functionality, StepEcho, Trace, TraceId};
use crate::app::ActionStep;
use crate::condition::parse_condition;
use crate::oracle::GoalDescriptor;

#[derive(Debug, Serialize, Deserialize)]
struct TraceDoc {
    id: TraceId,
    steps: Vec<ActionStep>,
    echoes: Vec<StepEcho>,
    goal: GoalDescriptor,
}

#[derive(Debug, Serialize, Deserialize)]
struct FunctionalityDoc {
    id: FuncId,
    goal: GoalDescriptor,
    vars: Vec<String>,
    traces: Vec<TraceDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FlowDoc {
    id: FlowId,
    source: FuncId,
    pi: TraceId,
    phi: String,
    pi_prime: TraceId,
    target: FuncId,
}

#[derive(Debug, Serialize, Deserialize)]
struct FfgDoc {
    revision: u64,
    functionalities: Vec<FunctionalityDoc>,
    flows: Vec<FlowDoc>,
}

/// Canonical textual form. Functionalities and flows appear in id order;
/// conditions are normalized and rendered through the grammar.
pub fn to_canonical_json(ffg: &Ffg) -> String {
    let doc = FfgDoc {
        revision: ffg.revision,
        functionalities: ffg
            .functionalities
            .values()
            .map(|f| FunctionalityDoc {
                id: f.id.clone(),
                goal: f.goal.clone(),
                vars: f.vars.iter().cloned().collect(),
                traces: f
                    .traces
                    .iter()
                    .map(|t| TraceDoc {
                        id: t.id.clone(),
                        steps: t.steps.clone(),
                        echoes: t.echoes.clone(),
                        goal: t.goal.clone(),
                    })
                    .collect(),
            })
            .collect(),
        flows: ffg
            .flows
            .values()
            .map(|f| FlowDoc {
                id: f.id.clone(),
                source: f.source.clone(),
                pi: f.pi.clone(),
                phi: f.phi.normalized().render(),
                pi_prime: f.pi_prime.clone(),
                target: f.target.clone(),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("FFG serialization cannot fail");
    text.push('\n');
    text
}

fn id_counter(ids: impl Iterator<Item = String>) -> u64 {
    ids.filter_map(|id| id.get(1..).and_then(|n| n.parse::<u64>().ok()))
        .max()
        .unwrap_or(0)
}

/// Parse a canonical document back into a graph, validating referential
/// integrity.
pub fn from_canonical_json(text: &str) -> Result<Ffg, FfgError> {
    let doc: FfgDoc = serde_json::from_str(text).map_err(|e| FfgError::Document {
        path: "$".into(),
        msg: e.to_string(),
    })?;
    let mut ffg = Ffg::new();
    for f in doc.functionalities {
        let func = Functionality {
            id: f.id.clone(),
            goal: f.goal,
            vars: f.vars.into_iter().collect(),
            traces: f
                .traces
                .into_iter()
                .map(|t| Trace { id: t.id, steps: t.steps, echoes: t.echoes, goal: t.goal })
                .collect(),
        };
        ffg.functionalities.insert(func.id.clone(), func);
    }
    for f in doc.flows {
        let phi = parse_condition(&f.phi).map_err(|e| FfgError::Document {
            path: format!("flows.{}.phi", f.id),
            msg: e.to_string(),
        })?;
        let source = ffg.functionality(&f.source).map_err(|_| FfgError::Document {
            path: format!("flows.{}.source", f.id),
            msg: format!("dangling functionality `{}`", f.source),
        })?;
        if source.trace(&f.pi).is_none() {
            return Err(FfgError::Document {
                path: format!("flows.{}.pi", f.id),
                msg: format!("trace `{}` does not belong to `{}`", f.pi, f.source),
            });
        }
        let target = ffg.functionality(&f.target).map_err(|_| FfgError::Document {
            path: format!("flows.{}.target", f.id),
            msg: format!("dangling functionality `{}`", f.target),
        })?;
        if target.trace(&f.pi_prime).is_none() {
            return Err(FfgError::Document {
                path: format!("flows.{}.pi_prime", f.id),
                msg: format!("trace `{}` does not belong to `{}`", f.pi_prime, f.target),
            });
        }
        ffg.flows.insert(
            f.id.clone(),
            Flow {
                id: f.id,
                source: f.source,
                target: f.target,
                pi: f.pi,
                phi: phi.normalized(),
                pi_prime: f.pi_prime,
            },
        );
    }
    ffg.revision = doc.revision;
    ffg.next_func = id_counter(ffg.functionalities.keys().map(|k| k.0.clone()));
    ffg.next_trace = id_counter(
        ffg.functionalities
            .values()
            .flat_map(|f| f.traces.iter().map(|t| t.id.0.clone())),
    );
    ffg.next_flow = id_counter(ffg.flows.keys().map(|k| k.0.clone()));
    Ok(ffg)
}
