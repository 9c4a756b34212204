mod common;

use std::io::Write;
use std::process::{Command as Process, Stdio};

use common::{contract::model_doc, TestServer, PASSWORD};
use labflow::journal::JOURNAL_FILE;
use labflow::service::{Hub, HubOptions, OpenError};
use labflow_core::workflow::JobState;
use serde_json::json;

fn line_count(dir: &std::path::Path) -> usize {
    std::fs::read_to_string(dir.join(JOURNAL_FILE)).unwrap().lines().count()
}

#[test]
fn restart_restores_state() {
    let dir = tempfile::tempdir().unwrap();
    let (content, wf) = {
        let env = TestServer::with_hub(Hub::open(dir.path(), HubOptions::default()).unwrap());
        let alice = env.user("alice");
        let content = alice.register_content(&model_doc("kept")).unwrap();
        let wf = alice
            .submit_workflow_value(&json!({"jobs": [{"job_id": "a"}], "num_workers": 1, "worker_request": {"cpu": 1, "gpu": 0}}))
            .unwrap();
        alice.cancel_workflow(&wf).unwrap();
        (content, wf)
    };
    let env = TestServer::with_hub(Hub::open(dir.path(), HubOptions::default()).unwrap());
    let alice = env.login("alice");
    assert_eq!(alice.get_content(&content).unwrap().name, "kept");
    assert_eq!(alice.list_jobs(Some(&wf), None).unwrap()[0].state, JobState::Canceled);
    assert_eq!(alice.search("kept", None).unwrap().len(), 1);
    // Ids keep counting from where they stopped.
    assert_eq!(alice.register_content(&model_doc("next")).unwrap(), "ct-000002");
}

#[test]
fn sessions_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let token = {
        let hub = Hub::open(dir.path(), HubOptions::default()).unwrap();
        hub.register_user("alice", PASSWORD, Default::default()).unwrap();
        hub.login("alice", PASSWORD).unwrap().token
    };
    let hub = Hub::open(dir.path(), HubOptions::default()).unwrap();
    assert_eq!(hub.authenticate(&token).unwrap(), "alice");
    let journal = std::fs::read_to_string(dir.path().join(JOURNAL_FILE)).unwrap();
    assert!(!journal.contains(&token), "raw tokens must not be stored");
    assert!(!journal.contains(PASSWORD), "passwords must not be stored");
}

#[test]
fn rejected_commands_leave_no_trace() {
    let dir = tempfile::tempdir().unwrap();
    let env = TestServer::with_hub(Hub::open(dir.path(), HubOptions::default()).unwrap());
    let alice = env.user("alice");
    let before = line_count(dir.path());
    alice.register_content(&json!({"content_type": "model"})).unwrap_err();
    alice.get_workflow("wf-000009").unwrap_err();
    alice.cancel_workflow("wf-000009").unwrap_err();
    assert_eq!(line_count(dir.path()), before);
}

#[test]
fn data_dir_is_locked_while_open() {
    let dir = tempfile::tempdir().unwrap();
    let _first = Hub::open(dir.path(), HubOptions::default()).unwrap();
    assert!(matches!(
        Hub::open(dir.path(), HubOptions::default()),
        Err(OpenError::Journal(labflow::journal::JournalError::Locked { .. }))
    ));
}

#[test]
fn corrupt_journal_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    {
        let hub = Hub::open(dir.path(), HubOptions::default()).unwrap();
        hub.register_user("alice", PASSWORD, Default::default()).unwrap();
        hub.register_user("bob", PASSWORD, Default::default()).unwrap();
    }
    let path = dir.path().join(JOURNAL_FILE);
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[0] = "{\"op\":\"nonsense\"}";
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    assert!(matches!(Hub::open(dir.path(), HubOptions::default()), Err(OpenError::Journal(_))));

    // A well-formed but impossible history fails on replay.
    let dir = tempfile::tempdir().unwrap();
    let mut file = std::fs::File::create(dir.path().join(JOURNAL_FILE)).unwrap();
    writeln!(file, r#"{{"op":"poll_allocations","host_id":"ghost"}}"#).unwrap();
    drop(file);
    assert!(matches!(Hub::open(dir.path(), HubOptions::default()), Err(OpenError::Replay { index: 1, .. })));
}

#[test]
fn torn_tail_is_dropped() {
    let dir = tempfile::tempdir().unwrap();
    {
        let hub = Hub::open(dir.path(), HubOptions::default()).unwrap();
        hub.register_user("alice", PASSWORD, Default::default()).unwrap();
    }
    let path = dir.path().join(JOURNAL_FILE);
    let mut file = std::fs::OpenOptions::new().append(true).open(&path).unwrap();
    file.write_all(br#"{"op":"create_user","usern"#).unwrap();
    drop(file);
    let hub = Hub::open(dir.path(), HubOptions::default()).unwrap();
    hub.login("alice", PASSWORD).unwrap();
    hub.register_user("bob", PASSWORD, Default::default()).unwrap();
    drop(hub);
    let hub = Hub::open(dir.path(), HubOptions::default()).unwrap();
    hub.login("bob", PASSWORD).unwrap();
}

#[test]
fn serve_reports_corrupt_data_dir() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join(JOURNAL_FILE), "garbage\n{}\n").unwrap();
    let output = Process::new(env!("CARGO_BIN_EXE_labflow"))
        .args(["serve", "--listen", "127.0.0.1:0", "--data-dir"])
        .arg(dir.path())
        .stdin(Stdio::null())
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("CorruptDataDir"), "{stderr}");
}
