//! Run orchestration: bootstrap exploration, the iterative
//! generate/execute/update loop, budgets, ablation flags, metrics, and
//! artifact emission.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::app::{load_spec_file, ActionKind, ActionStep, AppError, AppSpec, SimulatorSession};
use crate::executor::{execute_scenario, BugCollector, BugReport, Driver};
use crate::ffg::{
    initialize_ffg, to_canonical_json, BlockKind, ExecutionTrace, Ffg, FfgError, RecordedStep,
};
use crate::ltv;
use crate::oracle::{remote::RemoteOracle, SemanticOracle, SpecOracle};
use crate::scenario::{ObjectRef, Phase, StrategyTag, TestScenario};
use crate::stv;
use crate::updater::{apply_iteration, Thresholds, TraceProvenance, UpdateError};

/// Scenarios kept per strategy per iteration, ranked by least recently
/// exercised object.
pub const SCENARIOS_PER_STRATEGY: usize = 6;
/// Action budget granted to a single scenario (plus recovery allowance).
pub const SCENARIO_BUDGET: u64 = 72;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("app spec error: {0}")]
    Spec(#[from] AppError),
    #[error("model error: {0}")]
    Ffg(#[from] FfgError),
    #[error("update error: {0}")]
    Update(#[from] UpdateError),
    #[error("oracle error: {0}")]
    Oracle(#[from] crate::oracle::OracleError),
    #[error("i/o error on `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl HarnessError {
    /// Process exit code: 2 for spec problems, 3 for internal invariant
    /// violations.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Spec(_) | HarnessError::Io { .. } => 2,
            HarnessError::Invariant(_) => 3,
            HarnessError::Ffg(_) | HarnessError::Update(_) | HarnessError::Oracle(_) => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleChoice {
    Spec,
    Remote,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub app_path: PathBuf,
    pub seed: u64,
    pub max_actions: u64,
    pub max_iterations: u32,
    pub disabled: std::collections::BTreeSet<Phase>,
    pub sim_threshold: f64,
    pub sep_threshold: f64,
    pub oracle: OracleChoice,
    pub jobs: usize,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn new(app_path: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> RunConfig {
        RunConfig {
            app_path: app_path.into(),
            seed: 1,
            max_actions: 500,
            max_iterations: 6,
            disabled: Default::default(),
            sim_threshold: 0.7,
            sep_threshold: 0.5,
            oracle: OracleChoice::Spec,
            jobs: 1,
            out_dir: out_dir.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct MetricsRow {
    pub iter: u32,
    pub flows: u64,
    pub functionalities: u64,
    pub scenarios: u64,
    pub bugs_crash: u64,
    pub bugs_functional: u64,
    pub actions: u64,
    pub millis: u64,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub bugs: Vec<BugReport>,
    pub metrics: Vec<MetricsRow>,
    pub ffg: Ffg,
    pub actions_used: u64,
    pub iterations_run: u32,
}

/// Systematic bootstrap walk: prefer unvisited enabled widgets with a
/// seeded-random tie break, backing out of exhausted pages.
pub fn bootstrap_explore(
    session: &mut SimulatorSession,
    budget: u64,
    seed: u64,
) -> ExecutionTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = ExecutionTrace::default();
    let mut remaining = budget;
    while remaining > 0 && !session.crashed {
        let page = session.current_page.clone();
        let unvisited: Vec<(String, crate::app::Action)> = session
            .available_actions()
            .into_iter()
            .filter(|(w, a)| {
                a.kind() != ActionKind::Back && !session.visited(&page, w, a.kind())
            })
            .collect();
        let step = if unvisited.is_empty() {
            ActionStep::back(page)
        } else {
            let pick = rng.gen_range(0..unvisited.len());
            let (widget, action) = unvisited[pick].clone();
            ActionStep { page, widget, action }
        };
        let outcome = match session.perform(&step) {
            Ok(o) => o,
            Err(_) => break,
        };
        let halt =
            outcome.status != crate::app::StepStatus::Ok && step.action == crate::app::Action::Back;
        trace.steps.push(RecordedStep {
            action: step,
            outcome,
            block: 0,
            block_kind: BlockKind::Bootstrap,
        });
        remaining -= 1;
        if halt {
            // Root page exhausted.
            break;
        }
    }
    trace
}

/// Replay a pinned bootstrap script.
fn bootstrap_scripted(
    session: &mut SimulatorSession,
    script: &[ActionStep],
) -> Result<ExecutionTrace, HarnessError> {
    let mut trace = ExecutionTrace::default();
    for step in script {
        let outcome = session
            .perform(step)
            .map_err(|e| HarnessError::Invariant(format!("bootstrap crashed: {e}")))?;
        if outcome.status != crate::app::StepStatus::Ok {
            return Err(HarnessError::Invariant(format!(
                "bootstrap script step failed on {}/{}: {:?}",
                step.page, step.widget, outcome.status
            )));
        }
        trace.steps.push(RecordedStep {
            action: step.clone(),
            outcome,
            block: 0,
            block_kind: BlockKind::Bootstrap,
        });
    }
    Ok(trace)
}

struct Emitter {
    out_dir: PathBuf,
    log: Vec<String>,
}

impl Emitter {
    fn new(out_dir: &Path) -> Result<Emitter, HarnessError> {
        std::fs::create_dir_all(out_dir.join("traces")).map_err(|source| HarnessError::Io {
            path: out_dir.display().to_string(),
            source,
        })?;
        Ok(Emitter { out_dir: out_dir.to_path_buf(), log: Vec::new() })
    }

    fn write(&self, name: &str, contents: &str) -> Result<(), HarnessError> {
        let path = self.out_dir.join(name);
        std::fs::write(&path, contents).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), HarnessError> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| HarnessError::Invariant(format!("serialization failed: {e}")))?;
        text.push('\n');
        self.write(name, &text)
    }

    fn log(&mut self, msg: impl Into<String>) {
        self.log.push(msg.into());
    }

    fn flush_log(&self) -> Result<(), HarnessError> {
        let path = self.out_dir.join("run.log");
        let mut file = std::fs::File::create(&path).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })?;
        for line in &self.log {
            writeln!(file, "{line}").map_err(|source| HarnessError::Io {
                path: path.display().to_string(),
                source,
            })?;
        }
        Ok(())
    }
}

fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out =
        String::from("iter,flows,functionalities,scenarios,bugs_crash,bugs_functional,actions,millis\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.iter,
            r.flows,
            r.functionalities,
            r.scenarios,
            r.bugs_crash,
            r.bugs_functional,
            r.actions,
            r.millis
        ));
    }
    out
}

fn object_key(object: &ObjectRef) -> String {
    match object {
        ObjectRef::Functionality(id) => format!("func:{id}"),
        ObjectRef::Flow(id) => format!("flow:{id}"),
    }
}

/// Rank by least-recently-exercised object, then object id, and keep the
/// per-strategy cap.
fn rank_and_cap(
    mut scenarios: Vec<TestScenario>,
    exercised: &BTreeMap<String, u32>,
) -> Vec<TestScenario> {
    scenarios.sort_by_key(|s| {
        let key = object_key(&s.object);
        (exercised.get(&key).copied().unwrap_or(0), key)
    });
    scenarios.truncate(SCENARIOS_PER_STRATEGY);
    scenarios
}

fn provenance_of(strategy: &StrategyTag) -> TraceProvenance {
    match strategy.phase() {
        Phase::LtvFunc => TraceProvenance::LtvFunc,
        Phase::LtvFlow => TraceProvenance::LtvFlow,
        Phase::StvSingle | Phase::StvCross => TraceProvenance::Stv,
    }
}

/// Execute the full iterative loop described by the config.
pub fn run(config: &RunConfig) -> Result<RunOutcome, HarnessError> {
    let started = Instant::now();
    let spec = Arc::new(load_spec_file(&config.app_path)?);
    let oracle: Box<dyn SemanticOracle> = match config.oracle {
        OracleChoice::Spec => Box::new(SpecOracle::default()),
        OracleChoice::Remote => Box::new(
            RemoteOracle::from_env().map_err(crate::oracle::OracleError::from)?,
        ),
    };
    let thresholds = Thresholds { sim: config.sim_threshold, sep: config.sep_threshold };
    let mut emitter = Emitter::new(&config.out_dir)?;
    emitter.log(format!(
        "run app={} seed={} max_actions={} max_iterations={}",
        spec.name, config.seed, config.max_actions, config.max_iterations
    ));

    let mut collector = BugCollector::new();
    let mut actions_used: u64 = 0;
    let mut scenarios_total: u64 = 0;
    let mut exercised: BTreeMap<String, u32> = BTreeMap::new();
    let mut metrics: Vec<MetricsRow> = Vec::new();

    // Bootstrap.
    let mut session = SimulatorSession::reset(Arc::clone(&spec), config.seed);
    let bootstrap = if spec.bootstrap_script.is_empty() {
        let budget = (config.max_actions / 10).max(10);
        bootstrap_explore(&mut session, budget, config.seed)
    } else {
        bootstrap_scripted(&mut session, &spec.bootstrap_script)?
    };
    actions_used += bootstrap.action_count();
    for report in crate::executor::detect(&bootstrap, &spec, "bootstrap") {
        collector.offer(report);
    }
    emitter.log(format!("bootstrap: {} actions", bootstrap.action_count()));
    emitter.write_json("traces/bootstrap.json", &bootstrap)?;

    let mut ffg = initialize_ffg(&bootstrap, &spec, oracle.as_ref(), config.sim_threshold)?;
    emitter.write(&format!("ffg-r{}.json", ffg.revision), &to_canonical_json(&ffg))?;

    let mut iterations_run = 0u32;
    for iter in 1..=config.max_iterations {
        if actions_used >= config.max_actions {
            break;
        }
        iterations_run = iter;

        // Generation, in fixed strategy order.
        let mut batches: Vec<(StrategyTag, Vec<TestScenario>)> = Vec::new();
        if !config.disabled.contains(&Phase::LtvFunc) {
            batches.push((
                StrategyTag::Completeness,
                ltv::gen_completeness(&ffg, &spec, oracle.as_ref()),
            ));
            batches.push((
                StrategyTag::Independence,
                ltv::gen_independence(&ffg, oracle.as_ref(), config.sep_threshold),
            ));
        }
        if !config.disabled.contains(&Phase::LtvFlow) {
            let mut partition = Vec::new();
            let mut violation = Vec::new();
            let mut invariant = Vec::new();
            for flow in ffg.flows.values() {
                partition.extend(ltv::gen_condition_partition(flow, &ffg, &spec));
                let (mut v, notes) = ltv::gen_minimal_violation(flow, &ffg, &spec);
                violation.append(&mut v);
                for note in notes {
                    emitter.log(format!("iter {iter}: {note}"));
                }
                invariant.extend(ltv::gen_condition_invariant(flow, &ffg, &spec, config.seed));
            }
            batches.push((StrategyTag::ConditionPartition, partition));
            batches.push((StrategyTag::MinimalViolation, violation));
            batches.push((StrategyTag::ConditionInvariant, invariant));
        }
        if !config.disabled.contains(&Phase::StvSingle) {
            let mut single = Vec::new();
            for flow in ffg.flows.values() {
                single.extend(stv::gen_single_flow(flow, &ffg, &spec, config.seed));
            }
            batches.push((
                StrategyTag::Metamorphic(crate::scenario::MrTag::ChangeOrder),
                single,
            ));
        }
        if !config.disabled.contains(&Phase::StvCross) {
            batches.push((
                StrategyTag::Metamorphic(crate::scenario::MrTag::CreateDelete),
                stv::gen_cross_flow(&ffg, &spec),
            ));
        }

        let mut scheduled: Vec<TestScenario> = Vec::new();
        for (_, batch) in batches {
            scheduled.extend(rank_and_cap(batch, &exercised));
        }
        for (idx, s) in scheduled.iter_mut().enumerate() {
            s.id = format!("s{iter:02}-{:03}-{}", idx + 1, s.strategy.render().replace('/', "-"));
        }
        emitter.write_json(&format!("scenarios-{iter}.json"), &scheduled)?;

        // Execution, each scenario on a fresh session.
        let mut executed: Vec<(ExecutionTrace, TraceProvenance)> = Vec::new();
        let runs: Vec<(TestScenario, crate::executor::ScenarioRun)> = if config.jobs > 1 {
            run_parallel(&scheduled, &spec, &ffg, config)
        } else {
            scheduled
                .iter()
                .map(|s| {
                    let session = SimulatorSession::reset(Arc::clone(&spec), config.seed);
                    let mut local = BugCollector::new();
                    let run =
                        execute_scenario(s, session, &ffg, &spec, &mut local, SCENARIO_BUDGET);
                    (s.clone(), run)
                })
                .collect()
        };
        for (s, run) in runs {
            if actions_used >= config.max_actions {
                break;
            }
            actions_used += run.actions_used;
            scenarios_total += 1;
            exercised.insert(object_key(&s.object), iter);
            for line in &run.log {
                emitter.log(format!("{}: {line}", s.id));
            }
            for report in crate::executor::detect(&run.trace, &spec, &s.id) {
                collector.offer(report);
            }
            if run.diverged {
                emitter.log(format!("{}: re-execution divergence observed", s.id));
            }
            emitter.write_json(&format!("traces/{}.json", s.id), &run.trace)?;
            executed.push((run.trace, provenance_of(&s.strategy)));
        }

        // Update pass.
        let summary = apply_iteration(&mut ffg, &executed, &spec, oracle.as_ref(), thresholds)?;
        emitter.write_json(&format!("updates-{iter}.json"), &summary)?;
        emitter.write(&format!("ffg-r{}.json", ffg.revision), &to_canonical_json(&ffg))?;

        metrics.push(MetricsRow {
            iter,
            flows: ffg.flows.len() as u64,
            functionalities: ffg.functionalities.len() as u64,
            scenarios: scenarios_total,
            bugs_crash: collector.crash_count(),
            bugs_functional: collector.functional_count(),
            actions: actions_used,
            millis: 0,
        });
        emitter.log(format!(
            "iter {iter}: {} scenarios, {} flows, {} bugs, {} actions",
            scenarios_total,
            ffg.flows.len(),
            collector.reports.len(),
            actions_used
        ));
    }

    emitter.write("ffg.json", &to_canonical_json(&ffg))?;
    emitter.write_json("bugs.json", &collector.reports)?;
    emitter.write("metrics.csv", &metrics_csv(&metrics))?;
    emitter.log(format!(
        "done: {} bugs ({} crash, {} functional), wall time {:?}",
        collector.reports.len(),
        collector.crash_count(),
        collector.functional_count(),
        started.elapsed()
    ));
    emitter.flush_log()?;

    Ok(RunOutcome {
        bugs: collector.reports,
        metrics,
        ffg,
        actions_used,
        iterations_run,
    })
}

/// Parallel scenario execution on cloned sessions with a deterministic merge
/// order (scenario order), equivalent to the sequential path.
fn run_parallel(
    scheduled: &[TestScenario],
    spec: &Arc<AppSpec>,
    ffg: &Ffg,
    config: &RunConfig,
) -> Vec<(TestScenario, crate::executor::ScenarioRun)> {
    let mut results: Vec<Option<(TestScenario, crate::executor::ScenarioRun)>> =
        (0..scheduled.len()).map(|_| None).collect();
    let jobs = config.jobs.max(1);
    std::thread::scope(|scope| {
        // Striped spawn: each worker takes every jobs-th scenario.
        let mut handles = Vec::new();
        for worker in 0..jobs {
            let spec = Arc::clone(spec);
            let scheduled = scheduled.to_vec();
            let ffg = ffg.clone();
            let seed = config.seed;
            handles.push(scope.spawn(move || {
                let mut out = Vec::new();
                for (i, s) in scheduled.iter().enumerate() {
                    if i % jobs != worker {
                        continue;
                    }
                    let session = SimulatorSession::reset(Arc::clone(&spec), seed);
                    let mut local = BugCollector::new();
                    let run =
                        execute_scenario(s, session, &ffg, &spec, &mut local, SCENARIO_BUDGET);
                    out.push((i, s.clone(), run));
                }
                out
            }));
        }
        for handle in handles {
            for (i, s, run) in handle.join().expect("scenario worker panicked") {
                results[i] = Some((s, run));
            }
        }
    });
    results.into_iter().flatten().collect()
}

/// Validate an app spec; used by the `validate` subcommand.
pub fn validate(app_path: &Path) -> Result<AppSpec, HarnessError> {
    Ok(load_spec_file(app_path)?)
}

/// Bootstrap + initialization only, returning the initial graph. Used by
/// tests and the `show-ffg` path.
pub fn initialize_only(config: &RunConfig) -> Result<(Arc<AppSpec>, Ffg), HarnessError> {
    let spec = Arc::new(load_spec_file(&config.app_path)?);
    let oracle = SpecOracle::default();
    let mut session = SimulatorSession::reset(Arc::clone(&spec), config.seed);
    let bootstrap = if spec.bootstrap_script.is_empty() {
        let budget = (config.max_actions / 10).max(10);
        bootstrap_explore(&mut session, budget, config.seed)
    } else {
        bootstrap_scripted(&mut session, &spec.bootstrap_script)?
    };
    let ffg = initialize_ffg(&bootstrap, &spec, &oracle, config.sim_threshold)?;
    Ok((spec, ffg))
}

/// Exploration helper shared with the executor's goal-progress probing; kept
/// here so the CLI can reuse it for ad-hoc inspection.
pub fn explore_from(session: SimulatorSession, budget: u64) -> ExecutionTrace {
    let mut driver = Driver::new(session, budget);
    driver.explore(budget);
    driver.recorded
}

#[cfg(test)]
mod harness_tests;
