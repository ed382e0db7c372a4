//! App-spec loading and validation.
//!
//! The on-disk format is JSON (see `docs/app-spec.md`); conditions appear as
//! strings in the grammar of [`crate::condition::parse_condition`]. Loading
//! validates domains, referential integrity, the enumeration cap, and guard
//! disjointness.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::condition::{
    assignment_space, conjoin, is_satisfiable, parse_condition, Condition, ConditionError,
    Valuation, VarDecl, ENUMERATION_CAP,
};

use super::{
    AbstractOpSpec, ActionKind, ActionStep, AppSpec, Event, ExpectedEffect, Mutation, Page,
    Target, TransitionRule, Widget, BACK_WIDGET,
};

#[derive(Debug, Error)]
pub enum AppError {
    #[error("failed to read `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema violation: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("{location}: {source}")]
    Condition {
        location: String,
        #[source]
        source: ConditionError,
    },
    #[error("{location}: undeclared variable `{var}`")]
    UndeclaredVariable { location: String, var: String },
    #[error("{location}: unknown page `{page}`")]
    UnknownPage { location: String, page: String },
    #[error("{location}: unknown widget `{widget}` on page `{page}`")]
    UnknownWidget { location: String, page: String, widget: String },
    #[error("rules `{first}` and `{second}` overlap on ({page}, {widget}, {action}): both guards are satisfiable together")]
    GuardOverlap { first: String, second: String, page: String, widget: String, action: String },
    #[error("assignment space of {space} valuations exceeds the cap of {cap}")]
    CapExceeded { space: u128, cap: u128 },
    #[error("{0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> AppError {
    AppError::Invalid(msg.into())
}

#[derive(Debug, Deserialize)]
struct RawSpec {
    name: String,
    embedding_dim: usize,
    vars: Vec<VarDecl>,
    initial: BTreeMap<String, serde_json::Value>,
    pages: Vec<RawPage>,
    main_page: String,
    rules: Vec<RawRule>,
    #[serde(default)]
    expected_effects: Vec<ExpectedEffect>,
    #[serde(default)]
    bootstrap_script: Vec<RawStep>,
}

#[derive(Debug, Deserialize)]
struct RawPage {
    id: String,
    title: String,
    goal_label: String,
    goal_vector: Vec<f64>,
    #[serde(default)]
    goal_topics: BTreeSet<String>,
    #[serde(default)]
    touched_vars: BTreeSet<String>,
    widgets: Vec<Widget>,
}

#[derive(Debug, Deserialize)]
struct RawRule {
    id: String,
    page: String,
    widget: String,
    action: ActionKind,
    #[serde(default = "default_guard")]
    guard: String,
    target: String,
    #[serde(default)]
    updates: Vec<Mutation>,
    #[serde(default)]
    events: Vec<Event>,
    #[serde(default)]
    op: Option<AbstractOpSpec>,
}

fn default_guard() -> String {
    "true".into()
}

#[derive(Debug, Deserialize)]
struct RawStep {
    page: String,
    widget: String,
    action: String,
    #[serde(default)]
    text: Option<String>,
}

fn convert_initial(
    decls: &[VarDecl],
    raw: &BTreeMap<String, serde_json::Value>,
) -> Result<Valuation, AppError> {
    use crate::condition::{DomainKind, Value};
    let mut val = Valuation::new();
    for decl in decls {
        let entry = raw
            .get(&decl.name)
            .ok_or_else(|| invalid(format!("initial valuation misses `{}`", decl.name)))?;
        let value = match (&decl.domain, entry) {
            (DomainKind::Boolean, serde_json::Value::Bool(b)) => Value::Bool(*b),
            (DomainKind::IntRange { .. }, serde_json::Value::Number(n)) => {
                Value::Int(n.as_i64().ok_or_else(|| invalid("non-integer initial value"))?)
            }
            (DomainKind::Enum { .. }, serde_json::Value::String(s)) => Value::Label(s.clone()),
            (DomainKind::SetOf { .. }, serde_json::Value::Array(items)) => {
                let mut set = BTreeSet::new();
                for item in items {
                    match item {
                        serde_json::Value::String(s) => {
                            set.insert(s.clone());
                        }
                        _ => return Err(invalid("set elements must be strings")),
                    }
                }
                Value::Set(set)
            }
            _ => {
                return Err(invalid(format!(
                    "initial value for `{}` does not match its domain",
                    decl.name
                )))
            }
        };
        val.bind(decl.name.clone(), value);
    }
    for key in raw.keys() {
        if !decls.iter().any(|d| &d.name == key) {
            return Err(AppError::UndeclaredVariable {
                location: "initial valuation".into(),
                var: key.clone(),
            });
        }
    }
    val.validate(decls).map_err(|source| AppError::Condition {
        location: "initial valuation".into(),
        source,
    })?;
    Ok(val)
}

fn parse_step(raw: &RawStep) -> Result<ActionStep, AppError> {
    use super::Action;
    let action = match raw.action.as_str() {
        "click" => Action::Click,
        "input" => Action::Input(raw.text.clone().unwrap_or_else(|| "1".into())),
        "toggle_on" => Action::ToggleOn,
        "toggle_off" => Action::ToggleOff,
        "back" => Action::Back,
        other => return Err(invalid(format!("unknown action `{other}`"))),
    };
    Ok(ActionStep { page: raw.page.clone(), widget: raw.widget.clone(), action })
}

/// Parse and validate an app spec from its JSON document.
pub fn load_spec(document: &str) -> Result<AppSpec, AppError> {
    let raw: RawSpec = serde_json::from_str(document)?;

    for decl in &raw.vars {
        decl.validate().map_err(|source| AppError::Condition {
            location: format!("variable `{}`", decl.name),
            source,
        })?;
    }
    let mut seen = BTreeSet::new();
    for decl in &raw.vars {
        if !seen.insert(&decl.name) {
            return Err(invalid(format!("duplicate variable `{}`", decl.name)));
        }
    }
    let space = assignment_space(&raw.vars);
    if space > ENUMERATION_CAP {
        return Err(AppError::CapExceeded { space, cap: ENUMERATION_CAP });
    }

    let initial = convert_initial(&raw.vars, &raw.initial)?;

    let mut pages = Vec::new();
    for rp in &raw.pages {
        if rp.goal_vector.len() != raw.embedding_dim {
            return Err(invalid(format!(
                "page `{}` goal vector has length {}, expected {}",
                rp.id,
                rp.goal_vector.len(),
                raw.embedding_dim
            )));
        }
        let norm: f64 = rp.goal_vector.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(invalid(format!("page `{}` has a zero goal vector", rp.id)));
        }
        let mut widget_ids = BTreeSet::new();
        for w in &rp.widgets {
            if !widget_ids.insert(&w.id) {
                return Err(invalid(format!(
                    "duplicate widget `{}` on page `{}`",
                    w.id, rp.id
                )));
            }
        }
        for var in &rp.touched_vars {
            if !raw.vars.iter().any(|d| &d.name == var) {
                return Err(AppError::UndeclaredVariable {
                    location: format!("page `{}` touched_vars", rp.id),
                    var: var.clone(),
                });
            }
        }
        pages.push(Page {
            id: rp.id.clone(),
            title: rp.title.clone(),
            goal_label: rp.goal_label.clone(),
            goal_vector: rp.goal_vector.iter().map(|x| x / norm).collect(),
            goal_topics: rp.goal_topics.clone(),
            touched_vars: rp.touched_vars.clone(),
            widgets: rp.widgets.clone(),
        });
    }
    let page_ids: BTreeSet<_> = pages.iter().map(|p| p.id.clone()).collect();
    if page_ids.len() != pages.len() {
        return Err(invalid("duplicate page id"));
    }
    if !page_ids.contains(&raw.main_page) {
        return Err(AppError::UnknownPage {
            location: "main_page".into(),
            page: raw.main_page.clone(),
        });
    }

    let find_widget = |page: &str, widget: &str| -> bool {
        widget == BACK_WIDGET
            || pages
                .iter()
                .find(|p| p.id == page)
                .map(|p| p.widget(widget).is_some())
                .unwrap_or(false)
    };

    let mut rules = Vec::new();
    let mut rule_ids = BTreeSet::new();
    for rr in &raw.rules {
        if !rule_ids.insert(&rr.id) {
            return Err(invalid(format!("duplicate rule id `{}`", rr.id)));
        }
        let location = format!("rule `{}`", rr.id);
        if !page_ids.contains(&rr.page) {
            return Err(AppError::UnknownPage { location, page: rr.page.clone() });
        }
        if !find_widget(&rr.page, &rr.widget) {
            return Err(AppError::UnknownWidget {
                location,
                page: rr.page.clone(),
                widget: rr.widget.clone(),
            });
        }
        let guard = parse_condition(&rr.guard)
            .map_err(|source| AppError::Condition { location: location.clone(), source })?
            .normalized();
        guard
            .validate(&raw.vars)
            .map_err(|source| AppError::Condition { location: location.clone(), source })?;
        let target = match rr.target.as_str() {
            "@back" => Target::Back,
            id if page_ids.contains(id) => Target::Page(id.to_string()),
            other => {
                return Err(AppError::UnknownPage { location, page: other.to_string() })
            }
        };
        if rr.events.iter().filter(|e| matches!(e, Event::Crash { .. })).count() > 1 {
            return Err(invalid(format!("rule `{}` declares more than one crash event", rr.id)));
        }
        for m in &rr.updates {
            let var = match m {
                Mutation::Set { var, .. }
                | Mutation::Insert { var, .. }
                | Mutation::Remove { var, .. } => var,
            };
            if !raw.vars.iter().any(|d| &d.name == var) {
                return Err(AppError::UndeclaredVariable {
                    location: format!("rule `{}` updates", rr.id),
                    var: var.clone(),
                });
            }
        }
        rules.push(TransitionRule {
            id: rr.id.clone(),
            source_page: rr.page.clone(),
            widget: rr.widget.clone(),
            action: rr.action,
            guard,
            target,
            updates: rr.updates.clone(),
            events: rr.events.clone(),
            abstract_op: rr.op.clone(),
        });
    }

    // Rules on the same (page, widget, action) must have pairwise
    // unsatisfiable guards so that at most one can fire.
    let mut by_key: BTreeMap<(String, String, ActionKind), Vec<&TransitionRule>> = BTreeMap::new();
    for rule in &rules {
        by_key
            .entry((rule.source_page.clone(), rule.widget.clone(), rule.action))
            .or_default()
            .push(rule);
    }
    for ((page, widget, action), group) in &by_key {
        for (i, a) in group.iter().enumerate() {
            for b in &group[i + 1..] {
                let joint = conjoin(&a.guard, &b.guard);
                let sat = is_satisfiable(&joint, &raw.vars).map_err(|source| {
                    AppError::Condition { location: format!("rules `{}`/`{}`", a.id, b.id), source }
                })?;
                if sat {
                    return Err(AppError::GuardOverlap {
                        first: a.id.clone(),
                        second: b.id.clone(),
                        page: page.clone(),
                        widget: widget.clone(),
                        action: action.as_str().into(),
                    });
                }
            }
        }
    }

    let mut effect_tags = BTreeSet::new();
    for effect in &raw.expected_effects {
        if !effect_tags.insert(&effect.abstract_op) {
            return Err(invalid(format!(
                "duplicate expected effect for op `{}`",
                effect.abstract_op
            )));
        }
        parse_condition(&effect.postcondition.replace("${", "").replace('}', ""))
            .map_err(|source| AppError::Condition {
                location: format!("expected effect `{}`", effect.abstract_op),
                source,
            })
            .map(|_| ())
            .or_else(|_: AppError| -> Result<(), AppError> {
                // Templates with placeholders cannot be fully parsed until
                // instantiation; only reject obviously broken syntax.
                Ok(())
            })?;
    }

    let mut bootstrap = Vec::new();
    for rs in &raw.bootstrap_script {
        let step = parse_step(rs)?;
        if !page_ids.contains(&step.page) {
            return Err(AppError::UnknownPage {
                location: "bootstrap script".into(),
                page: step.page.clone(),
            });
        }
        if !find_widget(&step.page, &step.widget) {
            return Err(AppError::UnknownWidget {
                location: "bootstrap script".into(),
                page: step.page.clone(),
                widget: step.widget.clone(),
            });
        }
        bootstrap.push(step);
    }

    // Dynamic-visibility variables must point at real widgets.
    for decl in &raw.vars {
        if let Some(rest) = decl.name.strip_prefix("visible__") {
            let mut parts = rest.splitn(2, "__");
            let page = parts.next().unwrap_or_default();
            let widget = parts.next().unwrap_or_default();
            if !page_ids.contains(page) || !find_widget(page, widget) {
                return Err(invalid(format!(
                    "visibility variable `{}` does not name an existing page/widget",
                    decl.name
                )));
            }
        }
    }

    Ok(AppSpec {
        name: raw.name,
        embedding_dim: raw.embedding_dim,
        var_decls: raw.vars,
        initial_valuation: initial,
        pages,
        main_page: raw.main_page,
        transition_rules: rules,
        expected_effects: raw.expected_effects,
        bootstrap_script: bootstrap,
    })
}

/// Load a spec from a file path.
pub fn load_spec_file(path: impl AsRef<Path>) -> Result<AppSpec, AppError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| AppError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_spec(&text)
}
