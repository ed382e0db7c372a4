//! Declarative simulated app under test.
//!
//! An [`AppSpec`] describes pages, widgets, guarded transition rules, and
//! expected effects of abstract operations. A [`SimulatorSession`] is a
//! running deterministic instance: it holds the current page, a total state
//! valuation, and a back-stack, and executes widget actions by firing the
//! unique matching rule.

mod load;

pub use load::{load_spec, load_spec_file, AppError};

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::condition::{Condition, DomainKind, Valuation, Value, VarDecl};

pub const BACK_WIDGET: &str = "@back";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WidgetKind {
    Button,
    Input,
    Toggle,
    Checkbox,
    ListItem,
    Icon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Widget {
    pub id: String,
    pub kind: WidgetKind,
    pub text: String,
    #[serde(default)]
    pub topics: BTreeSet<String>,
    #[serde(default = "default_true")]
    pub visible: bool,
    #[serde(default = "default_true")]
    pub enabled: bool,
    #[serde(default)]
    pub optional: bool,
    #[serde(default)]
    pub order_independent: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Page {
    pub id: String,
    pub title: String,
    pub widgets: Vec<Widget>,
    pub goal_label: String,
    pub goal_vector: Vec<f64>,
    #[serde(default)]
    pub goal_topics: BTreeSet<String>,
    #[serde(default)]
    pub touched_vars: BTreeSet<String>,
}

impl Page {
    pub fn widget(&self, id: &str) -> Option<&Widget> {
        self.widgets.iter().find(|w| w.id == id)
    }
}

/// Concrete widget action performed during a step.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Click,
    Input(String),
    ToggleOn,
    ToggleOff,
    Back,
}

impl Action {
    pub fn kind(&self) -> ActionKind {
        match self {
            Action::Click => ActionKind::Click,
            Action::Input(_) => ActionKind::Input,
            Action::ToggleOn => ActionKind::ToggleOn,
            Action::ToggleOff => ActionKind::ToggleOff,
            Action::Back => ActionKind::Back,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Click,
    Input,
    ToggleOn,
    ToggleOff,
    Back,
}

impl ActionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::Click => "click",
            ActionKind::Input => "input",
            ActionKind::ToggleOn => "toggle_on",
            ActionKind::ToggleOff => "toggle_off",
            ActionKind::Back => "back",
        }
    }

    /// Default action used when probing a widget during exploration.
    pub fn default_for(kind: WidgetKind) -> Action {
        match kind {
            WidgetKind::Input => Action::Input("1".into()),
            WidgetKind::Toggle | WidgetKind::Checkbox => Action::ToggleOn,
            _ => Action::Click,
        }
    }
}

/// One widget action anchored to the page it is performed on.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionStep {
    pub page: String,
    pub widget: String,
    pub action: Action,
}

impl ActionStep {
    pub fn click(page: impl Into<String>, widget: impl Into<String>) -> ActionStep {
        ActionStep { page: page.into(), widget: widget.into(), action: Action::Click }
    }

    pub fn back(page: impl Into<String>) -> ActionStep {
        ActionStep { page: page.into(), widget: BACK_WIDGET.into(), action: Action::Back }
    }
}

/// State mutation applied when a rule fires. Values may interpolate the
/// pre-step valuation with `${var}` (and `${input}` for input actions).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mutation {
    Set { var: String, value: String },
    Insert { var: String, elem: String },
    Remove { var: String, elem: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    Toast { text: String },
    Crash { signal: String },
}

/// Abstract-operation tag emitted by a rule, with argument templates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbstractOpSpec {
    pub tag: String,
    #[serde(default)]
    pub args: std::collections::BTreeMap<String, String>,
}

/// Fired abstract operation with fully resolved arguments.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OpInstance {
    pub tag: String,
    pub args: std::collections::BTreeMap<String, String>,
}

impl OpInstance {
    pub fn render(&self) -> String {
        let args: Vec<_> = self.args.iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!("{}({})", self.tag, args.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Page(String),
    Back,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRule {
    pub id: String,
    pub source_page: String,
    pub widget: String,
    pub action: ActionKind,
    pub guard: Condition,
    pub target: Target,
    #[serde(default)]
    pub updates: Vec<Mutation>,
    #[serde(default)]
    pub events: Vec<Event>,
    #[serde(default)]
    pub abstract_op: Option<AbstractOpSpec>,
}

/// Declared postcondition of an abstract operation; the desk-scale stand-in
/// for an inferred expected behavior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedEffect {
    pub abstract_op: String,
    /// Condition template over op arguments, `${arg}` substituted.
    pub postcondition: String,
    pub description: String,
}

impl ExpectedEffect {
    pub fn instantiate(&self, op: &OpInstance) -> Result<Condition, crate::condition::ConditionError> {
        let text = substitute(&self.postcondition, |k| op.args.get(k).cloned());
        crate::condition::parse_condition(&text)
    }
}

/// `${name}` substitution; unknown names are left verbatim.
pub fn substitute(template: &str, lookup: impl Fn(&str) -> Option<String>) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        rest = &rest[start + 2..];
        match rest.find('}') {
            Some(end) => {
                let key = &rest[..end];
                match lookup(key) {
                    Some(v) => out.push_str(&v),
                    None => {
                        out.push_str("${");
                        out.push_str(key);
                        out.push('}');
                    }
                }
                rest = &rest[end + 1..];
            }
            None => {
                out.push_str("${");
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppSpec {
    pub name: String,
    pub embedding_dim: usize,
    pub var_decls: Vec<VarDecl>,
    pub initial_valuation: Valuation,
    pub pages: Vec<Page>,
    pub main_page: String,
    pub transition_rules: Vec<TransitionRule>,
    pub expected_effects: Vec<ExpectedEffect>,
    /// Pinned bootstrap actions; when present the harness replays these
    /// instead of running the systematic walk.
    #[serde(default)]
    pub bootstrap_script: Vec<ActionStep>,
}

impl AppSpec {
    pub fn page(&self, id: &str) -> Option<&Page> {
        self.pages.iter().find(|p| p.id == id)
    }

    pub fn decl(&self, var: &str) -> Option<&VarDecl> {
        self.var_decls.iter().find(|d| d.name == var)
    }

    pub fn effect_for(&self, op_tag: &str) -> Option<&ExpectedEffect> {
        self.expected_effects.iter().find(|e| e.abstract_op == op_tag)
    }

    pub fn rules_for(&self, page: &str, widget: &str, kind: ActionKind) -> Vec<&TransitionRule> {
        self.transition_rules
            .iter()
            .filter(|r| r.source_page == page && r.widget == widget && r.action == kind)
            .collect()
    }

    fn visibility_var(page: &str, widget: &str) -> String {
        format!("visible__{page}__{widget}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Ok,
    WidgetMissing,
    WidgetDisabled,
    GuardUnmet,
    Crashed,
}

/// Result of performing a single action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub status: StepStatus,
    pub new_page: Option<String>,
    pub events: Vec<Event>,
    pub abstract_op: Option<OpInstance>,
    pub state_after: Valuation,
}

impl StepOutcome {
    pub fn is_ok(&self) -> bool {
        self.status == StepStatus::Ok
    }

    pub fn toast(&self) -> Option<&str> {
        self.events.iter().find_map(|e| match e {
            Event::Toast { text } => Some(text.as_str()),
            Event::Crash { .. } => None,
        })
    }

    pub fn crash_signal(&self) -> Option<&str> {
        self.events.iter().find_map(|e| match e {
            Event::Crash { signal } => Some(signal.as_str()),
            Event::Toast { .. } => None,
        })
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum SessionError {
    #[error("session has crashed; reset before performing further steps")]
    Crashed,
    #[error("state mutation left `{var}` outside its domain: {value}")]
    DomainViolation { var: String, value: String },
    #[error("rule `{rule}` mutates undeclared variable `{var}`")]
    UndeclaredVariable { rule: String, var: String },
}

/// Deterministic running instance of an [`AppSpec`].
#[derive(Debug, Clone)]
pub struct SimulatorSession {
    spec: Arc<AppSpec>,
    pub current_page: String,
    pub valuation: Valuation,
    pub step_count: u64,
    pub crashed: bool,
    pub rng_seed: u64,
    page_stack: Vec<String>,
    visited: BTreeSet<(String, String, ActionKind)>,
}

impl SimulatorSession {
    /// Fresh session at the main page with the initial valuation.
    pub fn reset(spec: Arc<AppSpec>, seed: u64) -> SimulatorSession {
        SimulatorSession {
            current_page: spec.main_page.clone(),
            valuation: spec.initial_valuation.clone(),
            spec,
            step_count: 0,
            crashed: false,
            rng_seed: seed,
            page_stack: Vec::new(),
            visited: BTreeSet::new(),
        }
    }

    pub fn spec(&self) -> &AppSpec {
        &self.spec
    }

    pub fn spec_arc(&self) -> Arc<AppSpec> {
        Arc::clone(&self.spec)
    }

    /// Immutable copy of (current page, valuation).
    pub fn snapshot(&self) -> (String, Valuation) {
        (self.current_page.clone(), self.valuation.clone())
    }

    /// Deep, independent copy; divergence on one side never affects the
    /// other.
    pub fn clone_session(&self) -> SimulatorSession {
        self.clone()
    }

    pub fn visited(&self, page: &str, widget: &str, kind: ActionKind) -> bool {
        self.visited.contains(&(page.to_string(), widget.to_string(), kind))
    }

    /// Whether `widget` is currently shown, honoring dynamic
    /// `visible__<page>__<widget>` overrides.
    pub fn widget_visible(&self, page: &Page, widget: &Widget) -> bool {
        let var = AppSpec::visibility_var(&page.id, &widget.id);
        if self.spec.decl(&var).is_some() {
            matches!(self.valuation.get(&var), Some(Value::Bool(true)))
        } else {
            widget.visible
        }
    }

    /// Enabled actions on the current page, in page widget order, as
    /// (widget id, action) pairs. Used by exploration and navigation.
    pub fn available_actions(&self) -> Vec<(String, Action)> {
        let mut out = Vec::new();
        if let Some(page) = self.spec.page(&self.current_page) {
            for widget in &page.widgets {
                if !self.widget_visible(page, widget) || !widget.enabled {
                    continue;
                }
                match widget.kind {
                    WidgetKind::Toggle | WidgetKind::Checkbox => {
                        out.push((widget.id.clone(), Action::ToggleOn));
                        out.push((widget.id.clone(), Action::ToggleOff));
                    }
                    _ => out.push((widget.id.clone(), ActionKind::default_for(widget.kind))),
                }
            }
        }
        if !self.page_stack.is_empty() {
            out.push((BACK_WIDGET.into(), Action::Back));
        }
        out
    }

    fn resolve_template(&self, template: &str, input: Option<&str>) -> String {
        substitute(template, |key| {
            if key == "input" {
                return input.map(str::to_string);
            }
            self.valuation.get(key).map(Value::render)
        })
    }

    fn typed_value(&self, var: &str, raw: &str) -> Result<Value, SessionError> {
        let decl = self.spec.decl(var).ok_or_else(|| SessionError::UndeclaredVariable {
            rule: String::new(),
            var: var.to_string(),
        })?;
        let value = match &decl.domain {
            DomainKind::Boolean => Value::Bool(raw == "true"),
            DomainKind::IntRange { .. } => Value::Int(raw.parse::<i64>().unwrap_or(i64::MIN)),
            DomainKind::Enum { .. } => Value::Label(raw.to_string()),
            DomainKind::SetOf { .. } => {
                return Err(SessionError::DomainViolation { var: var.into(), value: raw.into() })
            }
        };
        if !value.in_domain(&decl.domain) {
            return Err(SessionError::DomainViolation { var: var.into(), value: raw.into() });
        }
        Ok(value)
    }

    fn apply_mutation(&mut self, mutation: &Mutation, input: Option<&str>) -> Result<(), SessionError> {
        match mutation {
            Mutation::Set { var, value } => {
                let raw = self.resolve_template(value, input);
                let typed = self.typed_value(var, &raw)?;
                self.valuation.bind(var.clone(), typed);
            }
            Mutation::Insert { var, elem } | Mutation::Remove { var, elem } => {
                let raw = self.resolve_template(elem, input);
                let decl = self.spec.decl(var).ok_or_else(|| SessionError::UndeclaredVariable {
                    rule: String::new(),
                    var: var.clone(),
                })?;
                let universe = match &decl.domain {
                    DomainKind::SetOf { universe } => universe,
                    _ => {
                        return Err(SessionError::DomainViolation {
                            var: var.clone(),
                            value: raw,
                        })
                    }
                };
                if !universe.iter().any(|u| u == &raw) {
                    return Err(SessionError::DomainViolation { var: var.clone(), value: raw });
                }
                let current = match self.valuation.get(var) {
                    Some(Value::Set(s)) => s.clone(),
                    _ => BTreeSet::new(),
                };
                let mut next = current;
                if matches!(mutation, Mutation::Insert { .. }) {
                    next.insert(raw);
                } else {
                    next.remove(&raw);
                }
                self.valuation.bind(var.clone(), Value::Set(next));
            }
        }
        Ok(())
    }

    fn outcome(&self, status: StepStatus) -> StepOutcome {
        StepOutcome {
            status,
            new_page: None,
            events: Vec::new(),
            abstract_op: None,
            state_after: self.valuation.clone(),
        }
    }

    /// Execute one widget action. Exactly one enabled rule may match; guard
    /// disjointness is checked at load time. Mechanical failures are
    /// reported in the outcome, not as errors.
    pub fn perform(&mut self, step: &ActionStep) -> Result<StepOutcome, SessionError> {
        if self.crashed {
            return Err(SessionError::Crashed);
        }
        let kind = step.action.kind();
        self.visited.insert((self.current_page.clone(), step.widget.clone(), kind));

        if kind == ActionKind::Back {
            // Explicit back rules take precedence over the built-in pop.
            let fired = self.matching_rule(BACK_WIDGET, ActionKind::Back);
            if let Some(rule) = fired {
                return self.fire(rule, &step.action);
            }
            return match self.page_stack.pop() {
                Some(prev) => {
                    self.current_page = prev.clone();
                    self.step_count += 1;
                    let mut out = self.outcome(StepStatus::Ok);
                    out.new_page = Some(prev);
                    Ok(out)
                }
                None => Ok(self.outcome(StepStatus::GuardUnmet)),
            };
        }

        let page = match self.spec.page(&self.current_page) {
            Some(p) => p,
            None => return Ok(self.outcome(StepStatus::WidgetMissing)),
        };
        let widget = match page.widget(&step.widget) {
            Some(w) => w,
            None => return Ok(self.outcome(StepStatus::WidgetMissing)),
        };
        if !self.widget_visible(page, widget) {
            return Ok(self.outcome(StepStatus::WidgetMissing));
        }
        if !widget.enabled {
            return Ok(self.outcome(StepStatus::WidgetDisabled));
        }
        match self.matching_rule(&step.widget, kind) {
            Some(rule) => self.fire(rule, &step.action),
            None => Ok(self.outcome(StepStatus::GuardUnmet)),
        }
    }

    fn matching_rule(&self, widget: &str, kind: ActionKind) -> Option<TransitionRule> {
        self.spec
            .rules_for(&self.current_page, widget, kind)
            .into_iter()
            .find(|r| r.guard.evaluate(&self.valuation).unwrap_or(false))
            .cloned()
    }

    fn fire(&mut self, rule: TransitionRule, action: &Action) -> Result<StepOutcome, SessionError> {
        let input = match action {
            Action::Input(text) => Some(text.as_str()),
            _ => None,
        };
        // Abstract op arguments resolve against the pre-update valuation.
        let abstract_op = rule.abstract_op.as_ref().map(|op| OpInstance {
            tag: op.tag.clone(),
            args: op
                .args
                .iter()
                .map(|(k, v)| (k.clone(), self.resolve_template(v, input)))
                .collect(),
        });
        for mutation in &rule.updates {
            self.apply_mutation(mutation, input).map_err(|e| match e {
                SessionError::UndeclaredVariable { var, .. } => {
                    SessionError::UndeclaredVariable { rule: rule.id.clone(), var }
                }
                other => other,
            })?;
        }
        let crash = rule.events.iter().any(|e| matches!(e, Event::Crash { .. }));
        let new_page = match &rule.target {
            Target::Page(id) => {
                if id != &self.current_page {
                    self.page_stack.push(self.current_page.clone());
                    self.current_page = id.clone();
                }
                self.current_page.clone()
            }
            Target::Back => {
                if let Some(prev) = self.page_stack.pop() {
                    self.current_page = prev;
                }
                self.current_page.clone()
            }
        };
        self.step_count += 1;
        if crash {
            self.crashed = true;
        }
        Ok(StepOutcome {
            status: if crash { StepStatus::Crashed } else { StepStatus::Ok },
            new_page: Some(new_page),
            events: rule.events.clone(),
            abstract_op,
            state_after: self.valuation.clone(),
        })
    }
}

#[cfg(test)]
mod tests;
