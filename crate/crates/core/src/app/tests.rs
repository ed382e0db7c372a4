use super::*;
use crate::condition::Value;
use std::path::PathBuf;

pub(crate) fn corpus_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(name)
}

fn blood_pressure() -> Arc<AppSpec> {
    Arc::new(load_spec_file(corpus_path("blood_pressure.app")).unwrap())
}

fn blood_pressure_reference() -> Arc<AppSpec> {
    Arc::new(load_spec_file(corpus_path("blood_pressure_reference.app")).unwrap())
}

fn set_of(elems: &[&str]) -> Value {
    Value::Set(elems.iter().map(|s| s.to_string()).collect())
}

/// Drive the session through the add-alarm dialog from the blood sugar page.
fn add_blood_sugar_alarm(session: &mut SimulatorSession) {
    for step in [
        ActionStep::click("home", "btn_blood_sugar"),
        ActionStep::click("blood_sugar", "btn_edit"),
        ActionStep::click("alarm_editor", "type_blood_sugar"),
        ActionStep::click("alarm_editor", "time_0800"),
        ActionStep::click("alarm_editor", "btn_add"),
    ] {
        let out = session.perform(&step).unwrap();
        assert!(out.is_ok(), "step {step:?} failed: {out:?}");
    }
}

#[test]
fn load_blood_pressure_fixture() {
    let spec = blood_pressure();
    let titles: Vec<_> = spec.pages.iter().map(|p| p.title.as_str()).collect();
    assert_eq!(
        titles,
        vec!["Home", "BMI", "Blood Sugar", "Alarm Editing", "Settings", "Remind Me"]
    );
    assert_eq!(spec.main_page, "home");
    assert_eq!(spec.bootstrap_script.len(), 10);
}

#[test]
fn load_minimal_spec() {
    let doc = r#"{
        "name": "tiny",
        "embedding_dim": 2,
        "vars": [],
        "initial": {},
        "main_page": "only",
        "pages": [{
            "id": "only", "title": "Only", "goal_label": "Only",
            "goal_vector": [1.0, 0.0], "widgets": []
        }],
        "rules": []
    }"#;
    let spec = load_spec(doc).unwrap();
    assert_eq!(spec.pages.len(), 1);
    assert!(spec.transition_rules.is_empty());
}

#[test]
fn load_rejects_overlapping_guards() {
    let doc = r#"{
        "name": "overlap",
        "embedding_dim": 1,
        "vars": [{ "name": "p", "domain": { "kind": "boolean" } }],
        "initial": { "p": false },
        "main_page": "a",
        "pages": [{
            "id": "a", "title": "A", "goal_label": "A",
            "goal_vector": [1.0],
            "widgets": [{ "id": "w", "kind": "button", "text": "W" }]
        }],
        "rules": [
            { "id": "r1", "page": "a", "widget": "w", "action": "click", "guard": "true", "target": "a" },
            { "id": "r2", "page": "a", "widget": "w", "action": "click", "guard": "p == true", "target": "a" }
        ]
    }"#;
    match load_spec(doc) {
        Err(AppError::GuardOverlap { first, second, .. }) => {
            assert_eq!((first.as_str(), second.as_str()), ("r1", "r2"));
        }
        other => panic!("expected guard overlap, got {other:?}"),
    }
}

#[test]
fn reset_is_deterministic() {
    let spec = blood_pressure();
    let a = SimulatorSession::reset(Arc::clone(&spec), 7);
    let b = SimulatorSession::reset(Arc::clone(&spec), 7);
    assert_eq!(a.current_page, "home");
    assert_eq!(a.valuation.get("alarm_list"), Some(&set_of(&[])));
    assert_eq!(a.snapshot(), b.snapshot());
}

#[test]
fn bug1_rule_inserts_mismatched_alarm() {
    let spec = blood_pressure();
    let mut session = SimulatorSession::reset(spec, 1);
    for step in [
        ActionStep::click("home", "btn_bmi"),
        ActionStep::click("bmi", "btn_edit"),
        ActionStep::click("alarm_editor", "type_bmi"),
        ActionStep::click("alarm_editor", "time_0800"),
    ] {
        assert!(session.perform(&step).unwrap().is_ok());
    }
    let out = session.perform(&ActionStep::click("alarm_editor", "btn_add")).unwrap();
    assert!(out.is_ok());
    let op = out.abstract_op.expect("add emits an op");
    assert_eq!(op.tag, "add_alarm");
    assert_eq!(op.args.get("type").map(String::as_str), Some("bmi"));
    assert_eq!(op.args.get("time").map(String::as_str), Some("08:00"));
    // The faulty rule stored a blood sugar alarm instead.
    assert_eq!(
        session.valuation.get("alarm_list"),
        Some(&set_of(&["blood_sugar@08:00"]))
    );
    // Add navigates back to the page the editor was opened from.
    assert_eq!(session.current_page, "bmi");
}

#[test]
fn bug2_rule_rejects_readd_after_delete() {
    let spec = blood_pressure();
    let mut session = SimulatorSession::reset(spec, 1);
    add_blood_sugar_alarm(&mut session);
    assert_eq!(
        session.valuation.get("alarm_list"),
        Some(&set_of(&["blood_sugar@08:00"]))
    );
    // Delete it from the Remind Me page.
    for step in [
        ActionStep::click("blood_sugar", "btn_close"),
        ActionStep::click("home", "btn_settings"),
        ActionStep::click("settings", "btn_remind"),
    ] {
        assert!(session.perform(&step).unwrap().is_ok());
    }
    let out = session.perform(&ActionStep::click("remind_me", "btn_delete")).unwrap();
    assert_eq!(out.abstract_op.as_ref().map(|o| o.tag.as_str()), Some("delete_alarm"));
    assert_eq!(session.valuation.get("alarm_list"), Some(&set_of(&[])));
    // Re-add the same alarm: the stale used_times entry rejects it.
    for step in [
        ActionStep::click("remind_me", "btn_close"),
        ActionStep::click("settings", "btn_home"),
    ] {
        assert!(session.perform(&step).unwrap().is_ok());
    }
    let mut replay = Vec::new();
    for step in [
        ActionStep::click("home", "btn_blood_sugar"),
        ActionStep::click("blood_sugar", "btn_edit"),
        ActionStep::click("alarm_editor", "type_blood_sugar"),
        ActionStep::click("alarm_editor", "time_0800"),
    ] {
        replay.push(session.perform(&step).unwrap());
    }
    assert!(replay.iter().all(StepOutcome::is_ok));
    let out = session.perform(&ActionStep::click("alarm_editor", "btn_add")).unwrap();
    assert_eq!(out.toast(), Some("Time repeat"));
    assert_eq!(out.abstract_op.as_ref().map(|o| o.tag.as_str()), Some("reject_duplicate"));
    assert_eq!(session.valuation.get("alarm_list"), Some(&set_of(&[])));
}

#[test]
fn reference_twin_readds_after_delete() {
    let spec = blood_pressure_reference();
    let mut session = SimulatorSession::reset(spec, 1);
    add_blood_sugar_alarm(&mut session);
    for step in [
        ActionStep::click("blood_sugar", "btn_close"),
        ActionStep::click("home", "btn_settings"),
        ActionStep::click("settings", "btn_remind"),
    ] {
        assert!(session.perform(&step).unwrap().is_ok());
    }
    session.perform(&ActionStep::click("remind_me", "btn_delete")).unwrap();
    for step in [
        ActionStep::click("remind_me", "btn_close"),
        ActionStep::click("settings", "btn_home"),
    ] {
        assert!(session.perform(&step).unwrap().is_ok());
    }
    add_blood_sugar_alarm(&mut session);
    assert_eq!(
        session.valuation.get("alarm_list"),
        Some(&set_of(&["blood_sugar@08:00"]))
    );
}

#[test]
fn missing_widget_is_reported_not_thrown() {
    let spec = blood_pressure();
    let mut session = SimulatorSession::reset(spec, 1);
    let out = session.perform(&ActionStep::click("home", "no_such_widget")).unwrap();
    assert_eq!(out.status, StepStatus::WidgetMissing);
}

#[test]
fn add_without_selection_is_guard_unmet() {
    let spec = blood_pressure();
    let mut session = SimulatorSession::reset(spec, 1);
    session.perform(&ActionStep::click("home", "btn_bmi")).unwrap();
    session.perform(&ActionStep::click("bmi", "btn_edit")).unwrap();
    let out = session.perform(&ActionStep::click("alarm_editor", "btn_add")).unwrap();
    assert_eq!(out.status, StepStatus::GuardUnmet);
}

#[test]
fn snapshot_is_immutable_copy() {
    let spec = blood_pressure_reference();
    let mut session = SimulatorSession::reset(spec, 3);
    assert_eq!(session.snapshot().0, "home");
    let before = session.snapshot();
    assert_eq!(session.snapshot(), before);
    add_blood_sugar_alarm(&mut session);
    let (_, val) = session.snapshot();
    assert_eq!(val.get("alarm_list"), Some(&set_of(&["blood_sugar@08:00"])));
}

#[test]
fn cloned_sessions_are_independent() {
    let spec = blood_pressure();
    let mut a = SimulatorSession::reset(spec, 9);
    a.perform(&ActionStep::click("home", "btn_bmi")).unwrap();
    let mut b = a.clone_session();
    b.perform(&ActionStep::click("bmi", "btn_calc")).unwrap();
    assert_eq!(a.valuation.get("bmi_value"), Some(&Value::Label("unset".into())));
    assert_eq!(b.valuation.get("bmi_value"), Some(&Value::Label("set".into())));
    assert_eq!(a.current_page, "bmi");

    // Identical step sequences on clones produce identical outcomes.
    let mut c = a.clone_session();
    let mut d = a.clone_session();
    let step = ActionStep::click("bmi", "btn_edit");
    assert_eq!(c.perform(&step).unwrap(), d.perform(&step).unwrap());
    assert_eq!(c.snapshot(), d.snapshot());
}

#[test]
fn crash_absorbs_further_steps() {
    let doc = r#"{
        "name": "crashy",
        "embedding_dim": 1,
        "vars": [],
        "initial": {},
        "main_page": "a",
        "pages": [{
            "id": "a", "title": "A", "goal_label": "A", "goal_vector": [1.0],
            "widgets": [{ "id": "boom", "kind": "button", "text": "Boom" }]
        }],
        "rules": [{
            "id": "r_boom", "page": "a", "widget": "boom", "action": "click",
            "target": "a", "events": [{ "crash": { "signal": "NullPointerException" } }]
        }]
    }"#;
    let spec = Arc::new(load_spec(doc).unwrap());
    let mut session = SimulatorSession::reset(Arc::clone(&spec), 1);
    let out = session.perform(&ActionStep::click("a", "boom")).unwrap();
    assert_eq!(out.status, StepStatus::Crashed);
    assert_eq!(out.crash_signal(), Some("NullPointerException"));
    assert_eq!(
        session.perform(&ActionStep::click("a", "boom")),
        Err(SessionError::Crashed)
    );
    // Crashed state survives cloning; reset clears it.
    assert!(session.clone_session().crashed);
    assert!(!SimulatorSession::reset(spec, 1).crashed);
}

#[test]
fn back_pops_page_history() {
    let spec = blood_pressure();
    let mut session = SimulatorSession::reset(spec, 1);
    session.perform(&ActionStep::click("home", "btn_settings")).unwrap();
    session.perform(&ActionStep::click("settings", "btn_remind")).unwrap();
    let out = session.perform(&ActionStep::back("remind_me")).unwrap();
    assert_eq!(out.new_page.as_deref(), Some("settings"));
    session.perform(&ActionStep::back("settings")).unwrap();
    assert_eq!(session.current_page, "home");
    // At the root there is nothing to pop.
    let out = session.perform(&ActionStep::back("home")).unwrap();
    assert_eq!(out.status, StepStatus::GuardUnmet);
}

#[test]
fn bootstrap_script_replays_clean() {
    let spec = blood_pressure();
    let mut session = SimulatorSession::reset(Arc::clone(&spec), 1);
    for step in &spec.bootstrap_script {
        let out = session.perform(step).unwrap();
        assert!(out.is_ok(), "bootstrap step {step:?} -> {out:?}");
        assert_eq!(out.new_page.as_deref().is_some(), true);
    }
    assert_eq!(session.current_page, "settings");
}
