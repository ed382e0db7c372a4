//! Goal-coherent segmentation of recorded executions.
//!
//! A segment is a maximal run of ok steps whose pages stay similar to the
//! running segment goal. Provenance blocks bound segments: steps produced by
//! different plan steps never merge, which keeps replayed traces intact when
//! the surrounding navigation shares their page goals.

use std::collections::BTreeSet;

use crate::app::AppSpec;
use crate::condition::Valuation;
use crate::ffg::{ExecutionTrace, FfgError, RecordedStep};
use crate::oracle::{similarity, GoalDescriptor, SemanticOracle};
use crate::StepStatus;

#[derive(Debug, Clone)]
pub struct Segment {
    /// Indices into the owning trace's step list (ok steps only).
    pub step_indices: Vec<usize>,
    pub goal: GoalDescriptor,
    pub touched_vars: BTreeSet<String>,
    /// App state right before the first step of this segment.
    pub entry_state: Valuation,
}

struct Builder {
    step_indices: Vec<usize>,
    page_goals: Vec<GoalDescriptor>,
    page_ids: Vec<String>,
    entry_state: Valuation,
}

impl Builder {
    fn mean(&self) -> Result<GoalDescriptor, FfgError> {
        let refs: Vec<&GoalDescriptor> = self.page_goals.iter().collect();
        Ok(GoalDescriptor::mean_of(&refs, "")?)
    }

    /// Majority page label, ties broken by earliest first occurrence.
    fn label(&self) -> String {
        let mut counts: Vec<(String, usize, usize)> = Vec::new();
        for (seen_at, page) in self.page_ids.iter().enumerate() {
            match counts.iter_mut().find(|(p, _, _)| p == page) {
                Some((_, n, _)) => *n += 1,
                None => counts.push((page.clone(), 1, seen_at)),
            }
        }
        counts
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then(b.2.cmp(&a.2)))
            .map(|(page, _, _)| page)
            .unwrap_or_default()
    }

    fn finish(self, spec: &AppSpec, oracle: &dyn SemanticOracle) -> Result<Segment, FfgError> {
        let majority = self.label();
        let label = spec
            .page(&majority)
            .map(|p| oracle.infer_page_goal(p))
            .transpose()?
            .map(|g| g.label)
            .unwrap_or(majority);
        let mean = self.mean()?;
        let mut touched = BTreeSet::new();
        for page in &self.page_ids {
            if let Some(p) = spec.page(page) {
                touched.extend(p.touched_vars.iter().cloned());
            }
        }
        let topics: BTreeSet<String> = self
            .page_goals
            .iter()
            .flat_map(|g| g.topics.iter().cloned())
            .collect();
        Ok(Segment {
            step_indices: self.step_indices,
            goal: GoalDescriptor { label, vector: mean.vector, topics },
            touched_vars: touched,
            entry_state: self.entry_state,
        })
    }
}

/// Split a recorded execution into goal-coherent segments.
///
/// Non-ok steps are dropped (a failed action belongs to no trace); crash
/// steps end the recording anyway.
pub fn segment_trace(
    exec: &ExecutionTrace,
    spec: &AppSpec,
    oracle: &dyn SemanticOracle,
    sim_threshold: f64,
) -> Result<Vec<Segment>, FfgError> {
    let mut segments = Vec::new();
    let mut current: Option<(Builder, u32)> = None;
    let mut prev_state = spec.initial_valuation.clone();
    for (idx, step) in exec.steps.iter().enumerate() {
        if step.outcome.status != StepStatus::Ok {
            prev_state = step.outcome.state_after.clone();
            continue;
        }
        let page_goal = match spec.page(&step.action.page) {
            Some(page) => oracle.infer_page_goal(page)?,
            None => {
                prev_state = step.outcome.state_after.clone();
                continue;
            }
        };
        let extend = match &current {
            Some((builder, block)) => {
                *block == step.block
                    && similarity(&page_goal, &builder.mean()?)? >= sim_threshold
            }
            None => false,
        };
        if extend {
            let (builder, _) = current.as_mut().expect("segment in progress");
            builder.step_indices.push(idx);
            builder.page_goals.push(page_goal);
            builder.page_ids.push(step.action.page.clone());
        } else {
            if let Some((builder, _)) = current.take() {
                segments.push(builder.finish(spec, oracle)?);
            }
            current = Some((
                Builder {
                    step_indices: vec![idx],
                    page_goals: vec![page_goal],
                    page_ids: vec![step.action.page.clone()],
                    entry_state: prev_state.clone(),
                },
                step.block,
            ));
        }
        prev_state = step.outcome.state_after.clone();
    }
    if let Some((builder, _)) = current.take() {
        segments.push(builder.finish(spec, oracle)?);
    }
    Ok(segments)
}

/// Convenience used by tests and the updater: a trace recorded straight from
/// the simulator with every step in one bootstrap block.
pub fn single_block(steps: Vec<RecordedStep>) -> ExecutionTrace {
    ExecutionTrace { steps, segment_labels: None }
}
