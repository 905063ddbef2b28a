use fixflow::demo::{self, DemoConfig, DemoData};
use fixflow::events::{Clock, EventLog};
use fixflow::fix::AnnotatorSource;
use fixflow::service::{persist, replay_file, replay_text};
use fixflow::Error;

fn small() -> DemoData {
    DemoData::generate(&DemoConfig {
        scenes: 12,
        ..DemoConfig::default()
    })
}

fn logged_run(source: AnnotatorSource) -> String {
    let mut log = EventLog::in_memory(Clock::Logical);
    demo::run_all(&small(), source, &mut log, None).unwrap();
    log.to_jsonl()
}

#[test]
fn persisted_state_replays_to_the_same_state() {
    let text = logged_run(AnnotatorSource::Simulated { epsilon: 0.1, seed: 3 });
    let state = replay_text(&text).unwrap();
    assert!(!state.data.runs.is_empty());
    assert!(!state.reports.is_empty());

    let mut again = EventLog::in_memory(Clock::Logical);
    persist(&state, &mut again).unwrap();
    let round_trip = replay_text(&again.to_jsonl()).unwrap();
    assert_eq!(round_trip, state);

    // persisting the replayed state is a fixpoint
    let mut third = EventLog::in_memory(Clock::Logical);
    persist(&round_trip, &mut third).unwrap();
    assert_eq!(third.to_jsonl(), again.to_jsonl());
}

#[test]
fn file_log_survives_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.jsonl");
    let text = logged_run(AnnotatorSource::Oracle);
    std::fs::write(&path, &text).unwrap();

    let state = replay_file(&path).unwrap();
    let log = EventLog::open(&path, Clock::Logical).unwrap();
    assert_eq!(log.records().len(), text.lines().count());
    assert_eq!(log.to_jsonl(), text);
    assert_eq!(replay_text(&log.to_jsonl()).unwrap(), state);
}

#[test]
fn empty_log_is_empty_state() {
    assert!(replay_text("").unwrap().is_empty());
    assert!(replay_text("\n\n").unwrap().is_empty());
}

#[test]
fn truncated_line_is_corrupt() {
    let text = logged_run(AnnotatorSource::Oracle);
    let lines: Vec<&str> = text.lines().collect();
    let cut = format!("{}\n{}\n", lines[0], &lines[1][..lines[1].len() / 2]);
    match replay_text(&cut) {
        Err(Error::CorruptRecord { seq, reason }) => {
            assert_eq!(seq, 2);
            assert!(reason.contains("line 2"), "{reason}");
        }
        other => panic!("expected corrupt record, got {other:?}"),
    }
}

#[test]
fn reordered_lines_are_corrupt() {
    let text = logged_run(AnnotatorSource::Oracle);
    let mut lines: Vec<&str> = text.lines().collect();
    lines.swap(3, 4);
    assert!(matches!(replay_text(&lines.join("\n")), Err(Error::CorruptRecord { .. })));
}

#[test]
fn tampered_report_fails_its_hash() {
    let text = logged_run(AnnotatorSource::Oracle);
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let last_report = lines.iter().rposition(|l| l.contains("\"type\":\"report_ref\"")).unwrap();
    let mut event: serde_json::Value = serde_json::from_str(&lines[last_report]).unwrap();
    event["event"]["sha256"] = serde_json::json!("00");
    lines[last_report] = event.to_string();
    assert!(matches!(replay_text(&lines.join("\n")), Err(Error::CorruptRecord { .. })));
}
