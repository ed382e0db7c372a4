//! Semantic judgments: page goals, goal similarity, essential actions, trace
//! clustering, and flow-condition inference.
//!
//! The engine consumes these through the [`SemanticOracle`] trait. The
//! default [`SpecOracle`] derives every judgment deterministically from app
//! annotations; [`remote::RemoteOracle`] forwards them to an external
//! text-completion service and is never used by the test suites.

pub mod remote;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::app::{ActionKind, ActionStep, AppSpec, Page};
use crate::condition::{Atom, Clause, Condition, DomainKind, Valuation, Value};
use crate::ffg::Functionality;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("page `{0}` has no goal annotation")]
    MissingAnnotation(String),
    #[error("goal vector must not be the zero vector")]
    ZeroVector,
    #[error("goal vectors have mismatched dimensions ({0} vs {1})")]
    DimMismatch(usize, usize),
    #[error("remote oracle failure: {0}")]
    Remote(String),
}

/// Semantic goal with its embedding; vectors are unit L2 norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalDescriptor {
    pub label: String,
    pub vector: Vec<f64>,
    #[serde(default)]
    pub topics: BTreeSet<String>,
}

impl GoalDescriptor {
    pub fn new(
        label: impl Into<String>,
        vector: Vec<f64>,
        topics: BTreeSet<String>,
    ) -> Result<GoalDescriptor, OracleError> {
        let norm: f64 = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(OracleError::ZeroVector);
        }
        Ok(GoalDescriptor {
            label: label.into(),
            vector: vector.into_iter().map(|x| x / norm).collect(),
            topics,
        })
    }

    /// Normalized mean of several descriptors; the label is taken from
    /// `label_of`. Used for trace- and node-level goals.
    pub fn mean_of(
        descriptors: &[&GoalDescriptor],
        label: impl Into<String>,
    ) -> Result<GoalDescriptor, OracleError> {
        let dim = descriptors.first().map(|d| d.vector.len()).unwrap_or(0);
        let mut sum = vec![0.0; dim];
        let mut topics = BTreeSet::new();
        for d in descriptors {
            if d.vector.len() != dim {
                return Err(OracleError::DimMismatch(dim, d.vector.len()));
            }
            for (acc, x) in sum.iter_mut().zip(&d.vector) {
                *acc += x;
            }
            topics.extend(d.topics.iter().cloned());
        }
        GoalDescriptor::new(label, sum, topics)
    }
}

/// Cosine similarity of two unit vectors.
pub fn similarity(a: &GoalDescriptor, b: &GoalDescriptor) -> Result<f64, OracleError> {
    if a.vector.len() != b.vector.len() {
        return Err(OracleError::DimMismatch(a.vector.len(), b.vector.len()));
    }
    Ok(a.vector.iter().zip(&b.vector).map(|(x, y)| x * y).sum())
}

/// Outcome of trace-goal clustering. Clusters partition the input ids;
/// separation is 1 minus the largest inter-cluster centroid similarity (1.0
/// by convention for a single cluster).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub clusters: Vec<BTreeSet<String>>,
    pub separation: f64,
}

pub trait SemanticOracle: Send + Sync {
    fn infer_page_goal(&self, page: &Page) -> Result<GoalDescriptor, OracleError>;

    fn essential_actions(
        &self,
        func: &Functionality,
        spec: &AppSpec,
    ) -> Result<Vec<ActionStep>, OracleError>;

    fn cluster_trace_goals(
        &self,
        goals: &[(String, GoalDescriptor)],
    ) -> Result<ClusterResult, OracleError>;

    fn infer_flow_condition(
        &self,
        prefix_state: &Valuation,
        target_func: &Functionality,
        spec: &AppSpec,
    ) -> Result<Condition, OracleError>;
}

/// Default oracle: every judgment comes from AppSpec annotations.
#[derive(Debug, Clone)]
pub struct SpecOracle {
    /// Similarity at or above which two trace goals land in one cluster.
    pub intra_threshold: f64,
}

impl Default for SpecOracle {
    fn default() -> SpecOracle {
        SpecOracle { intra_threshold: 0.7 }
    }
}

impl SpecOracle {
    pub fn new(intra_threshold: f64) -> SpecOracle {
        SpecOracle { intra_threshold }
    }
}

impl SemanticOracle for SpecOracle {
    fn infer_page_goal(&self, page: &Page) -> Result<GoalDescriptor, OracleError> {
        if page.goal_label.is_empty() {
            return Err(OracleError::MissingAnnotation(page.id.clone()));
        }
        GoalDescriptor::new(
            page.goal_label.clone(),
            page.goal_vector.clone(),
            page.goal_topics.clone(),
        )
    }

    /// Widget actions that are topical for the functionality's goal, live on
    /// pages its traces visit, but appear in none of its traces.
    fn essential_actions(
        &self,
        func: &Functionality,
        spec: &AppSpec,
    ) -> Result<Vec<ActionStep>, OracleError> {
        let mut trace_pages = BTreeSet::new();
        let mut used: BTreeSet<(String, String)> = BTreeSet::new();
        for trace in &func.traces {
            for step in &trace.steps {
                trace_pages.insert(step.page.clone());
                used.insert((step.page.clone(), step.widget.clone()));
            }
        }
        let mut out = Vec::new();
        for page in &spec.pages {
            if !trace_pages.contains(&page.id) {
                continue;
            }
            for widget in &page.widgets {
                if used.contains(&(page.id.clone(), widget.id.clone())) {
                    continue;
                }
                if widget.topics.is_disjoint(&func.goal.topics) {
                    continue;
                }
                out.push(ActionStep {
                    page: page.id.clone(),
                    widget: widget.id.clone(),
                    action: ActionKind::default_for(widget.kind),
                });
            }
        }
        Ok(out)
    }

    /// Greedy average-linkage agglomeration: repeatedly merge the most
    /// similar cluster pair while its mean pairwise similarity stays at or
    /// above the intra threshold.
    fn cluster_trace_goals(
        &self,
        goals: &[(String, GoalDescriptor)],
    ) -> Result<ClusterResult, OracleError> {
        if goals.is_empty() {
            return Ok(ClusterResult { clusters: Vec::new(), separation: 1.0 });
        }
        let mut clusters: Vec<Vec<usize>> = (0..goals.len()).map(|i| vec![i]).collect();
        let avg_sim = |a: &[usize], b: &[usize]| -> Result<f64, OracleError> {
            let mut total = 0.0;
            for &i in a {
                for &j in b {
                    total += similarity(&goals[i].1, &goals[j].1)?;
                }
            }
            Ok(total / (a.len() * b.len()) as f64)
        };
        loop {
            let mut best: Option<(usize, usize, f64)> = None;
            for i in 0..clusters.len() {
                for j in i + 1..clusters.len() {
                    let sim = avg_sim(&clusters[i], &clusters[j])?;
                    if sim >= self.intra_threshold
                        && best.map(|(_, _, s)| sim > s).unwrap_or(true)
                    {
                        best = Some((i, j, sim));
                    }
                }
            }
            match best {
                Some((i, j, _)) => {
                    let merged = clusters.remove(j);
                    clusters[i].extend(merged);
                }
                None => break,
            }
        }
        let separation = if clusters.len() <= 1 {
            1.0
        } else {
            let centroids: Vec<GoalDescriptor> = clusters
                .iter()
                .map(|members| {
                    let ds: Vec<&GoalDescriptor> = members.iter().map(|&i| &goals[i].1).collect();
                    GoalDescriptor::mean_of(&ds, "")
                })
                .collect::<Result<_, _>>()?;
            let mut max_inter: f64 = -1.0;
            for i in 0..centroids.len() {
                for j in i + 1..centroids.len() {
                    max_inter = max_inter.max(similarity(&centroids[i], &centroids[j])?);
                }
            }
            1.0 - max_inter
        };
        Ok(ClusterResult {
            clusters: clusters
                .into_iter()
                .map(|members| members.into_iter().map(|i| goals[i].0.clone()).collect())
                .collect(),
            separation,
        })
    }

    /// Conjunction over the target functionality's variables reflecting the
    /// prefix state: scalars pin their value, non-empty sets list their
    /// present elements, empty sets exclude the whole universe.
    fn infer_flow_condition(
        &self,
        prefix_state: &Valuation,
        target_func: &Functionality,
        spec: &AppSpec,
    ) -> Result<Condition, OracleError> {
        let mut literals = Vec::new();
        for var in &target_func.vars {
            let value = match prefix_state.get(var) {
                Some(v) => v,
                None => continue,
            };
            match value {
                Value::Set(present) => {
                    if present.is_empty() {
                        if let Some(DomainKind::SetOf { universe }) =
                            spec.decl(var).map(|d| &d.domain)
                        {
                            for elem in universe {
                                literals.push(Atom::not_contains(var.clone(), elem.clone()));
                            }
                        }
                    } else {
                        for elem in present {
                            literals.push(Atom::contains(var.clone(), elem.clone()));
                        }
                    }
                }
                scalar => literals.push(Atom::eq(var.clone(), scalar.clone())),
            }
        }
        if literals.is_empty() {
            return Ok(Condition::tautology());
        }
        Ok(Condition::from_clause(Clause::new(literals)))
    }
}

#[cfg(test)]
mod tests;
