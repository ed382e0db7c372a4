//! Scenario execution: drives a simulator session through a test scenario's
//! plan, navigating, establishing conditions, recovering from mechanical
//! failures, and applying the bug oracles continuously.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::app::{
    Action, ActionKind, ActionStep, AppSpec, OpInstance, SimulatorSession, StepOutcome,
    StepStatus,
};
use crate::condition::{is_satisfiable, Condition, Valuation};
use crate::ffg::{
    BlockKind, ExecutionTrace, Ffg, RecordedStep, StepEcho, Trace, TraceId,
};
use crate::scenario::{
    CheckTag, MrTag, NavTarget, PlanStep, StrategyTag, TestScenario, VariantParams,
};

/// Recovery attempts allowed per plan step.
pub const RECOVERY_LIMIT: usize = 3;
/// Chained traces the condition-establishment search may compose.
pub const ESTABLISH_DEPTH: usize = 3;
/// Search-node cap for navigation and establishment.
const SEARCH_CAP: usize = 256;
/// Actions spent probing forward after a completeness action.
pub const EXPLORE_BUDGET: u64 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BugKind {
    Crash,
    Functional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Violation {
    CrashSignal { signal: String },
    ExpectedEffect { op: OpInstance, postcondition: String, description: String },
    MrViolation { mr: MrTag, expectation: String },
    ToastAnomaly { text: String, expected: Option<String> },
}

impl Violation {
    fn essence(&self) -> String {
        match self {
            Violation::CrashSignal { signal } => format!("crash:{signal}"),
            Violation::ExpectedEffect { op, postcondition, .. } => {
                format!("effect:{}:{}", op.render(), postcondition)
            }
            Violation::MrViolation { mr, expectation } => {
                format!("mr:{}:{}", mr.as_str(), expectation)
            }
            Violation::ToastAnomaly { text, .. } => format!("toast:{text}"),
        }
    }
}

/// Structured bug report with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BugReport {
    pub id: String,
    pub kind: BugKind,
    pub scenario: String,
    pub page: String,
    pub violation: Violation,
    pub state_snapshot: Valuation,
    pub dedup_key: String,
    /// Index of the offending step within the scenario trace.
    pub step_index: usize,
}

/// Deduplicating sink for bug reports; first occurrence wins, later
/// duplicates are only counted.
#[derive(Debug, Default)]
pub struct BugCollector {
    pub reports: Vec<BugReport>,
    seen: BTreeSet<String>,
    pub duplicates: u64,
}

impl BugCollector {
    pub fn new() -> BugCollector {
        BugCollector::default()
    }

    /// Returns true when the report was new.
    pub fn offer(&mut self, mut report: BugReport) -> bool {
        if self.seen.contains(&report.dedup_key) {
            self.duplicates += 1;
            return false;
        }
        report.id = format!("b{:03}", self.reports.len() + 1);
        self.seen.insert(report.dedup_key.clone());
        self.reports.push(report);
        true
    }

    pub fn crash_count(&self) -> u64 {
        self.reports.iter().filter(|r| r.kind == BugKind::Crash).count() as u64
    }

    pub fn functional_count(&self) -> u64 {
        self.reports.iter().filter(|r| r.kind == BugKind::Functional).count() as u64
    }
}

/// Scan a recorded trace for oracle violations: crash events and abstract
/// operations whose instantiated expected effect does not hold afterwards.
/// Pure over its inputs, so re-running it on a stored trace re-checks every
/// report.
pub fn detect(trace: &ExecutionTrace, spec: &AppSpec, scenario: &str) -> Vec<BugReport> {
    let mut out = Vec::new();
    for (idx, step) in trace.steps.iter().enumerate() {
        let page = step.action.page.clone();
        if let Some(signal) = step.outcome.crash_signal() {
            let violation = Violation::CrashSignal { signal: signal.to_string() };
            out.push(BugReport {
                id: String::new(),
                kind: BugKind::Crash,
                scenario: scenario.to_string(),
                dedup_key: format!("crash|{}|{page}", violation.essence()),
                page,
                violation,
                state_snapshot: step.outcome.state_after.clone(),
                step_index: idx,
            });
            continue;
        }
        let op = match &step.outcome.abstract_op {
            Some(op) => op,
            None => continue,
        };
        let effect = match spec.effect_for(&op.tag) {
            Some(e) => e,
            None => continue,
        };
        let postcondition = match effect.instantiate(op) {
            Ok(c) => c.normalized(),
            Err(_) => continue,
        };
        let holds = postcondition.evaluate(&step.outcome.state_after).unwrap_or(true);
        if !holds {
            let violation = Violation::ExpectedEffect {
                op: op.clone(),
                postcondition: postcondition.render(),
                description: effect.description.clone(),
            };
            out.push(BugReport {
                id: String::new(),
                kind: BugKind::Functional,
                scenario: scenario.to_string(),
                dedup_key: format!("functional|{}|{page}", violation.essence()),
                page,
                violation,
                state_snapshot: step.outcome.state_after.clone(),
                step_index: idx,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HaltReason {
    PlanEnd,
    Crash,
    BudgetExhausted,
    PlanError,
}

#[derive(Debug)]
pub struct ReplayResult {
    pub completed: bool,
    pub all_ok: bool,
    /// Op tags observed per executed step.
    pub ops: Vec<Option<String>>,
}

/// Low-level driver: owns the session and the recording, charges the action
/// budget, and provides navigation/replay/exploration primitives. Bug
/// detection happens above it.
pub struct Driver {
    pub session: SimulatorSession,
    pub recorded: ExecutionTrace,
    pub budget: u64,
    pub halted: Option<HaltReason>,
    pub log: Vec<String>,
    next_block: u32,
}

impl Driver {
    pub fn new(session: SimulatorSession, budget: u64) -> Driver {
        Driver {
            session,
            recorded: ExecutionTrace::default(),
            budget,
            halted: None,
            log: Vec::new(),
            next_block: 0,
        }
    }

    pub fn new_block(&mut self) -> u32 {
        let b = self.next_block;
        self.next_block += 1;
        b
    }

    fn note(&mut self, msg: String) {
        self.log.push(msg);
    }

    /// Perform and record one step. Returns `None` when the budget is gone
    /// or the session already crashed (both halt the scenario softly).
    pub fn step(
        &mut self,
        action: &ActionStep,
        block: u32,
        kind: BlockKind,
    ) -> Option<StepOutcome> {
        if self.halted.is_some() {
            return None;
        }
        if self.budget == 0 {
            self.halted = Some(HaltReason::BudgetExhausted);
            self.note("action budget exhausted".into());
            return None;
        }
        self.budget -= 1;
        let outcome = match self.session.perform(action) {
            Ok(o) => o,
            Err(_) => {
                self.halted = Some(HaltReason::Crash);
                return None;
            }
        };
        self.recorded.steps.push(RecordedStep {
            action: action.clone(),
            outcome: outcome.clone(),
            block,
            block_kind: kind,
        });
        if outcome.status == StepStatus::Crashed {
            self.halted = Some(HaltReason::Crash);
        }
        Some(outcome)
    }

    /// Breadth-first search over cloned sessions for the shortest action
    /// path to `target` page. Probing clones is free; only the replayed path
    /// is charged.
    fn find_path(&self, target: &str) -> Option<Vec<ActionStep>> {
        if self.session.current_page == target {
            return Some(Vec::new());
        }
        let mut queue: VecDeque<(SimulatorSession, Vec<ActionStep>)> = VecDeque::new();
        let mut seen: BTreeSet<(String, Valuation)> = BTreeSet::new();
        seen.insert((self.session.current_page.clone(), self.session.valuation.clone()));
        queue.push_back((self.session.clone_session(), Vec::new()));
        let mut expanded = 0;
        while let Some((state, path)) = queue.pop_front() {
            expanded += 1;
            if expanded > SEARCH_CAP {
                break;
            }
            for (widget, action) in state.available_actions() {
                let step = ActionStep {
                    page: state.current_page.clone(),
                    widget,
                    action: action.clone(),
                };
                let mut next = state.clone_session();
                let outcome = match next.perform(&step) {
                    Ok(o) => o,
                    Err(_) => continue,
                };
                if outcome.status != StepStatus::Ok {
                    continue;
                }
                let mut next_path = path.clone();
                next_path.push(step);
                if next.current_page == target {
                    return Some(next_path);
                }
                let key = (next.current_page.clone(), next.valuation.clone());
                if seen.insert(key) {
                    queue.push_back((next, next_path));
                }
            }
        }
        None
    }

    /// Bring the session to `target` page, recording the moves in a
    /// navigation block (or the caller's block when given).
    pub fn navigate_to_page(&mut self, target: &str, in_block: Option<(u32, BlockKind)>) -> bool {
        if self.session.current_page == target {
            return true;
        }
        let path = match self.find_path(target) {
            Some(p) => p,
            None => {
                self.note(format!(
                    "navigation failed: no path from {} to {target}",
                    self.session.current_page
                ));
                return false;
            }
        };
        let (block, kind) =
            in_block.unwrap_or_else(|| (self.next_block, BlockKind::Navigation));
        if in_block.is_none() {
            self.next_block += 1;
        }
        for step in path {
            match self.step(&step, block, kind) {
                Some(o) if o.is_ok() => {}
                _ => return false,
            }
        }
        self.session.current_page == target
    }

    /// Candidate enabling actions for a failed step: single steps from known
    /// traces whose rules write the failed action's guard variables, then
    /// whole traces containing such a step.
    fn recovery_candidates(
        &self,
        ffg: &Ffg,
        spec: &AppSpec,
        failed: &ActionStep,
    ) -> (Vec<ActionStep>, Vec<TraceId>) {
        let mut guard_vars: BTreeSet<String> = BTreeSet::new();
        for rule in spec.rules_for(&failed.page, &failed.widget, failed.action.kind()) {
            guard_vars.extend(rule.guard.variables());
        }
        let rule_touches = |step: &ActionStep| -> bool {
            spec.rules_for(&step.page, &step.widget, step.action.kind())
                .iter()
                .any(|rule| {
                    rule.updates.iter().any(|m| {
                        let var = match m {
                            crate::app::Mutation::Set { var, .. }
                            | crate::app::Mutation::Insert { var, .. }
                            | crate::app::Mutation::Remove { var, .. } => var,
                        };
                        guard_vars.contains(var)
                    })
                })
        };
        let mut steps = Vec::new();
        let mut seen_steps: BTreeSet<(String, String, ActionKind)> = BTreeSet::new();
        let mut traces = Vec::new();
        for func in ffg.functionalities.values() {
            for trace in &func.traces {
                let mut trace_helps = false;
                for step in &trace.steps {
                    if step.page == failed.page && step.widget == failed.widget {
                        continue;
                    }
                    if rule_touches(step) {
                        trace_helps = true;
                        let key =
                            (step.page.clone(), step.widget.clone(), step.action.kind());
                        if seen_steps.insert(key) {
                            steps.push(step.clone());
                        }
                    }
                }
                if trace_helps {
                    traces.push(trace.id.clone());
                }
            }
        }
        (steps, traces)
    }

    /// Deterministic recovery policy. Missing widgets: back plus
    /// re-navigation. Disabled/guard-unmet: perform the n-th enabling
    /// candidate. Returns false when out of options.
    fn recover(
        &mut self,
        ffg: &Ffg,
        spec: &AppSpec,
        failed: &ActionStep,
        status: StepStatus,
        attempt: usize,
        block: u32,
        kind: BlockKind,
    ) -> bool {
        match status {
            StepStatus::WidgetMissing => {
                let back = ActionStep::back(self.session.current_page.clone());
                let _ = self.step(&back, block, kind);
                self.navigate_to_page(&failed.page, Some((block, kind)))
            }
            StepStatus::WidgetDisabled | StepStatus::GuardUnmet => {
                let (steps, traces) = self.recovery_candidates(ffg, spec, failed);
                if attempt < steps.len() {
                    let candidate = steps[attempt].clone();
                    if !self.navigate_to_page(&candidate.page, Some((block, kind))) {
                        return false;
                    }
                    let ok = matches!(
                        self.step(&candidate, block, kind),
                        Some(o) if o.is_ok()
                    );
                    ok && self.navigate_to_page(&failed.page, Some((block, kind)))
                } else {
                    let idx = attempt - steps.len();
                    let trace_id = match traces.get(idx) {
                        Some(t) => t.clone(),
                        None => return false,
                    };
                    let trace = match ffg.resolve_trace(&trace_id) {
                        Ok((_, t)) => t.clone(),
                        Err(_) => return false,
                    };
                    if trace.steps.first().map(|s| s.page.as_str())
                        != Some(self.session.current_page.as_str())
                        && !self.navigate_to_page(&trace.steps[0].page, Some((block, kind)))
                    {
                        return false;
                    }
                    for step in &trace.steps {
                        let _ = self.step(step, block, kind);
                        if self.halted.is_some() {
                            return false;
                        }
                    }
                    self.navigate_to_page(&failed.page, Some((block, kind)))
                }
            }
            _ => false,
        }
    }

    /// Replay steps against their recorded echoes. Mechanical failures go
    /// through recovery; a diverging abstract op or landing page aborts the
    /// remainder (the trace's purpose failed).
    pub fn replay(
        &mut self,
        steps: &[ActionStep],
        echoes: &[StepEcho],
        ffg: &Ffg,
        spec: &AppSpec,
        kind: BlockKind,
    ) -> ReplayResult {
        let block = self.new_block();
        let mut ops = Vec::new();
        let mut all_ok = true;
        if let Some(first) = steps.first() {
            if !self.navigate_to_page(&first.page, None) {
                return ReplayResult { completed: false, all_ok: false, ops };
            }
        }
        let mut recoveries = 0usize;
        let mut i = 0;
        while i < steps.len() {
            let step = &steps[i];
            if step.page != self.session.current_page
                && !self.navigate_to_page(&step.page, None)
            {
                return ReplayResult { completed: false, all_ok: false, ops };
            }
            let outcome = match self.step(step, block, kind) {
                Some(o) => o,
                None => return ReplayResult { completed: false, all_ok: false, ops },
            };
            match outcome.status {
                StepStatus::Ok => {
                    ops.push(outcome.abstract_op.as_ref().map(|o| o.tag.clone()));
                    if let Some(echo) = echoes.get(i) {
                        let got_op = outcome.abstract_op.as_ref().map(|o| o.tag.clone());
                        let page_diverged = echo
                            .page_after
                            .as_ref()
                            .map(|p| Some(p) != outcome.new_page.as_ref())
                            .unwrap_or(false);
                        if got_op != echo.op_tag || page_diverged {
                            self.note(format!(
                                "replay diverged at step {i}: op {:?} vs {:?}, page {:?} vs {:?}",
                                got_op, echo.op_tag, outcome.new_page, echo.page_after
                            ));
                            return ReplayResult { completed: false, all_ok, ops };
                        }
                    }
                    i += 1;
                }
                StepStatus::Crashed => {
                    return ReplayResult { completed: false, all_ok: false, ops };
                }
                status => {
                    all_ok = false;
                    if recoveries >= RECOVERY_LIMIT {
                        self.note(format!("recovery exhausted at step {i} ({status:?})"));
                        return ReplayResult { completed: false, all_ok, ops };
                    }
                    let recovered =
                        self.recover(ffg, spec, step, status, recoveries, block, kind);
                    recoveries += 1;
                    if !recovered {
                        self.note(format!("recovery failed at step {i}"));
                        return ReplayResult { completed: false, all_ok, ops };
                    }
                }
            }
        }
        ReplayResult { completed: true, all_ok, ops }
    }

    /// Raw action execution: navigation per step, no replay expectations,
    /// mechanical failures still recovered.
    pub fn raw_actions(
        &mut self,
        actions: &[ActionStep],
        ffg: &Ffg,
        spec: &AppSpec,
        kind: BlockKind,
    ) -> bool {
        let block = self.new_block();
        let mut recoveries = 0usize;
        let mut i = 0;
        while i < actions.len() {
            let step = &actions[i];
            if step.page != self.session.current_page {
                // Navigation for raw blocks is recorded separately so the
                // target actions form their own segment.
                if !self.navigate_to_page(&step.page, None) {
                    return false;
                }
            }
            let outcome = match self.step(step, block, kind) {
                Some(o) => o,
                None => return false,
            };
            match outcome.status {
                StepStatus::Ok => i += 1,
                StepStatus::Crashed => return false,
                status => {
                    if recoveries >= RECOVERY_LIMIT {
                        return false;
                    }
                    let recovered =
                        self.recover(ffg, spec, step, status, recoveries, block, kind);
                    recoveries += 1;
                    if !recovered {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Unvisited-first systematic walk from the current page; backs out of
    /// exhausted pages and stops when the root is exhausted.
    pub fn explore(&mut self, budget: u64) {
        let block = self.new_block();
        let mut remaining = budget;
        while remaining > 0 && self.halted.is_none() {
            let page = self.session.current_page.clone();
            let next = self
                .session
                .available_actions()
                .into_iter()
                .find(|(widget, action)| {
                    action.kind() != ActionKind::Back
                        && !self.session.visited(&page, widget, action.kind())
                });
            let step = match next {
                Some((widget, action)) => ActionStep { page, widget, action },
                None => {
                    let back = ActionStep::back(page);
                    match self.step(&back, block, BlockKind::Explore) {
                        Some(o) if o.is_ok() => {
                            remaining -= 1;
                            continue;
                        }
                        _ => break,
                    }
                }
            };
            if self.step(&step, block, BlockKind::Explore).is_none() {
                break;
            }
            remaining -= 1;
        }
    }

    /// Drive the session into a state satisfying `phi` by composing known
    /// traces, preferring traces whose rules touch the condition's
    /// variables. The found path is validated on clones and then replayed.
    pub fn establish(&mut self, phi: &Condition, ffg: &Ffg, spec: &AppSpec) -> bool {
        if phi.evaluate(&self.session.valuation).unwrap_or(false) {
            return true;
        }
        let vars = phi.variables();
        let mut candidates: Vec<&Trace> = ffg
            .functionalities
            .values()
            .flat_map(|f| f.traces.iter())
            .collect();
        let overlap = |trace: &Trace| -> usize {
            trace
                .steps
                .iter()
                .flat_map(|s| spec.rules_for(&s.page, &s.widget, s.action.kind()))
                .flat_map(|r| {
                    r.updates.iter().map(|m| match m {
                        crate::app::Mutation::Set { var, .. }
                        | crate::app::Mutation::Insert { var, .. }
                        | crate::app::Mutation::Remove { var, .. } => var.clone(),
                    })
                })
                .filter(|v| vars.contains(v))
                .collect::<BTreeSet<_>>()
                .len()
        };
        candidates.sort_by(|a, b| overlap(b).cmp(&overlap(a)).then(a.id.cmp(&b.id)));

        // Breadth-first over trace compositions, bounded in depth and width.
        let mut queue: VecDeque<(SimulatorSession, Vec<TraceId>)> = VecDeque::new();
        queue.push_back((self.session.clone_session(), Vec::new()));
        let mut explored = 0;
        let mut solution: Option<Vec<TraceId>> = None;
        'search: while let Some((state, path)) = queue.pop_front() {
            if path.len() >= ESTABLISH_DEPTH {
                continue;
            }
            for trace in &candidates {
                explored += 1;
                if explored > SEARCH_CAP {
                    break 'search;
                }
                let mut probe = Driver::new(state.clone_session(), 64);
                let ok = probe.raw_actions(&trace.steps, ffg, spec, BlockKind::Establish);
                if !ok {
                    continue;
                }
                let mut next_path = path.clone();
                next_path.push(trace.id.clone());
                if phi.evaluate(&probe.session.valuation).unwrap_or(false) {
                    solution = Some(next_path);
                    break 'search;
                }
                queue.push_back((probe.session, next_path));
            }
        }
        let path = match solution {
            Some(p) => p,
            None => {
                self.note(format!("condition unreachable: {}", phi.render()));
                return false;
            }
        };
        for trace_id in path {
            if let Ok((_, trace)) = ffg.resolve_trace(&trace_id) {
                let steps = trace.steps.clone();
                if !self.raw_actions(&steps, ffg, spec, BlockKind::Establish) {
                    return false;
                }
            }
        }
        phi.evaluate(&self.session.valuation).unwrap_or(false)
    }
}

/// Apply a metamorphic variant to a trace, producing the variant steps and
/// the echo expectations that travel with them.
pub fn apply_variant(
    trace: &Trace,
    params: &VariantParams,
) -> (Vec<ActionStep>, Vec<StepEcho>) {
    let mut steps = trace.steps.clone();
    let mut echoes = trace.echoes.clone();
    match params {
        VariantParams::ReverseRun { start, len } => {
            let end = (start + len).min(steps.len());
            steps[*start..end].reverse();
            echoes[*start..end].reverse();
        }
        VariantParams::HideShow { step_index, page, toggler } => {
            let hide = ActionStep {
                page: page.clone(),
                widget: toggler.clone(),
                action: Action::ToggleOff,
            };
            let show = ActionStep {
                page: page.clone(),
                widget: toggler.clone(),
                action: Action::ToggleOn,
            };
            steps.insert(*step_index, show);
            steps.insert(*step_index, hide);
            echoes.insert(*step_index, StepEcho::default());
            echoes.insert(*step_index, StepEcho::default());
        }
        VariantParams::ToggleExtra { insert_before, page, widget } => {
            steps.insert(
                *insert_before,
                ActionStep {
                    page: page.clone(),
                    widget: widget.clone(),
                    action: Action::ToggleOn,
                },
            );
            echoes.insert(*insert_before, StepEcho::default());
        }
        VariantParams::ToggleDrop { step_index } => {
            steps.remove(*step_index);
            echoes.remove(*step_index);
        }
    }
    (steps, echoes)
}

/// Outcome of one scenario run.
#[derive(Debug)]
pub struct ScenarioRun {
    pub trace: ExecutionTrace,
    pub new_reports: Vec<BugReport>,
    pub actions_used: u64,
    pub log: Vec<String>,
    /// Per-`ExecuteTrace` op sequences, used by divergence observation.
    pub replay_ops: Vec<(TraceId, Vec<Option<String>>)>,
    pub diverged: bool,
}

/// Execute a scenario plan on a fresh session, applying bug detection after
/// every recorded step.
pub fn execute_scenario(
    scenario: &TestScenario,
    session: SimulatorSession,
    ffg: &Ffg,
    spec: &AppSpec,
    collector: &mut BugCollector,
    budget: u64,
) -> ScenarioRun {
    let initial_budget = budget;
    let mut driver = Driver::new(session, budget);
    let mut replay_ops: Vec<(TraceId, Vec<Option<String>>)> = Vec::new();
    let mut mr_context: Option<(MrTag, bool)> = None;
    let mut diverged = false;
    let mut new_reports: Vec<BugReport> = Vec::new();

    let mut sweep =
        |driver: &Driver, collector: &mut BugCollector, sink: &mut Vec<BugReport>| {
            for report in detect(&driver.recorded, spec, &scenario.id) {
                let key = report.dedup_key.clone();
                if collector.offer(report) {
                    if let Some(r) = collector.reports.iter().find(|r| r.dedup_key == key) {
                        sink.push(r.clone());
                    }
                }
            }
        };

    'plan: for step in &scenario.guidance {
        if driver.halted.is_some() {
            break;
        }
        match step {
            PlanStep::NavigateTo { kind, id } => {
                let target = match kind {
                    NavTarget::Page => Some(id.clone()),
                    NavTarget::Functionality => ffg
                        .functionality(&crate::ffg::FuncId(id.clone()))
                        .ok()
                        .and_then(|f| f.traces.first())
                        .and_then(|t| t.steps.first())
                        .map(|s| s.page.clone()),
                };
                match target {
                    Some(page) => {
                        if !driver.navigate_to_page(&page, None) {
                            driver.note(format!("navigate_to {page} failed"));
                            break 'plan;
                        }
                    }
                    None => {
                        driver.halted = Some(HaltReason::PlanError);
                        driver.note(format!("unknown navigation target {id}"));
                        break 'plan;
                    }
                }
            }
            PlanStep::ExecuteTrace { func, trace } => {
                let resolved = ffg
                    .functionality(func)
                    .ok()
                    .and_then(|f| f.trace(trace))
                    .cloned();
                let resolved = match resolved {
                    Some(t) => t,
                    None => {
                        driver.halted = Some(HaltReason::PlanError);
                        driver.note(format!("unknown trace {trace} in {func}"));
                        break 'plan;
                    }
                };
                let result = driver.replay(
                    &resolved.steps,
                    &resolved.echoes,
                    ffg,
                    spec,
                    BlockKind::Plan,
                );
                if let Some((_, prior)) =
                    replay_ops.iter().find(|(id, _)| id == &resolved.id)
                {
                    if prior != &result.ops {
                        diverged = true;
                    }
                }
                replay_ops.push((resolved.id.clone(), result.ops.clone()));
                if let Some((_, enabled)) = &mut mr_context {
                    *enabled = result.completed && result.all_ok;
                }
            }
            PlanStep::ExecuteActions { actions } => {
                driver.raw_actions(actions, ffg, spec, BlockKind::Plan);
            }
            PlanStep::EstablishCondition { phi } => {
                if !is_satisfiable(phi, &spec.var_decls).unwrap_or(false) {
                    driver.halted = Some(HaltReason::PlanError);
                    driver.note(format!("condition unsatisfiable: {}", phi.render()));
                    break 'plan;
                }
                if !driver.establish(phi, ffg, spec) {
                    break 'plan;
                }
            }
            PlanStep::ApplyVariant { trace, mr, params } => {
                let resolved = match ffg.resolve_trace(trace) {
                    Ok((_, t)) => t.clone(),
                    Err(_) => {
                        driver.halted = Some(HaltReason::PlanError);
                        driver.note(format!("unknown variant base {trace}"));
                        break 'plan;
                    }
                };
                let (steps, echoes) = apply_variant(&resolved, params);
                let result = driver.replay(&steps, &echoes, ffg, spec, BlockKind::Plan);
                mr_context = Some((*mr, result.completed && result.all_ok));
            }
            PlanStep::Observe { check } => match check {
                CheckTag::GoalProgress => {
                    driver.explore(EXPLORE_BUDGET.min(driver.budget));
                }
                CheckTag::FlowOutcome => {
                    if let Some((mr, enabled)) = &mr_context {
                        if !enabled {
                            let page = driver.session.current_page.clone();
                            let violation = Violation::MrViolation {
                                mr: *mr,
                                expectation:
                                    "variant-established flow still enables its target trace"
                                        .into(),
                            };
                            let report = BugReport {
                                id: String::new(),
                                kind: BugKind::Functional,
                                scenario: scenario.id.clone(),
                                dedup_key: format!(
                                    "functional|{}|{page}",
                                    violation.essence()
                                ),
                                page,
                                violation,
                                state_snapshot: driver.session.valuation.clone(),
                                step_index: driver.recorded.steps.len().saturating_sub(1),
                            };
                            let key = report.dedup_key.clone();
                            if collector.offer(report) {
                                if let Some(r) =
                                    collector.reports.iter().find(|r| r.dedup_key == key)
                                {
                                    new_reports.push(r.clone());
                                }
                            }
                        }
                    }
                }
                CheckTag::Divergence => {
                    if diverged {
                        driver.note("re-execution diverged; condition refinement due".into());
                    }
                }
                CheckTag::ExpectedEffect => {}
            },
        }
        sweep(&driver, collector, &mut new_reports);
    }
    sweep(&driver, collector, &mut new_reports);

    let actions_used = initial_budget - driver.budget;
    ScenarioRun {
        trace: driver.recorded,
        new_reports,
        actions_used,
        log: driver.log,
        replay_ops,
        diverged,
    }
}

#[cfg(test)]
mod executor_tests;
