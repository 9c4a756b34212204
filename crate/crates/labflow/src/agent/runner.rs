//! Job runners: how a worker turns a [`JobSpec`] into output and an exit
//! status.

use std::collections::VecDeque;
use std::io::Read;
use std::os::unix::process::CommandExt;
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use labflow_core::workflow::{JobSpec, RunnerKind};
use thiserror::Error;

/// Program name that resolves to the running labflow executable.
pub const SELF_PROGRAM: &str = "labflow";

pub const ENV_JOB_ID: &str = "LABFLOW_JOB_ID";
pub const ENV_PARAMETERS: &str = "LABFLOW_PARAMETERS";
pub const ENV_OUTPUT_URI: &str = "LABFLOW_OUTPUT_URI";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RunnerError {
    #[error("runner {0:?} is not enabled on this host")]
    UnsupportedRunner(RunnerKind),
    #[error("failed to start job: {0}")]
    SpawnFailure(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Success,
    Failure,
    /// Terminated through [`Execution::kill`].
    Killed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunnerEvent {
    Output(Vec<u8>),
    Exited(ExitKind),
}

/// A started job.
pub trait Execution: Send {
    /// Waits at most `timeout` for the next event; `None` if nothing
    /// happened. After `Exited` it only returns `None`.
    fn next_event(&mut self, timeout: Duration) -> Option<RunnerEvent>;
    fn kill(&mut self);
}

pub trait Runner: Send + Sync {
    fn start(&self, job: &JobSpec) -> Result<Box<dyn Execution>, RunnerError>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunnerOutcome {
    pub exit_status: ExitKind,
    pub log: Vec<u8>,
}

/// Runs `job` to completion, collecting its whole output.
pub fn run_job(runner: &dyn Runner, job: &JobSpec) -> Result<RunnerOutcome, RunnerError> {
    let mut execution = runner.start(job)?;
    let mut log = Vec::new();
    loop {
        match execution.next_event(Duration::from_millis(100)) {
            Some(RunnerEvent::Output(bytes)) => log.extend_from_slice(&bytes),
            Some(RunnerEvent::Exited(exit_status)) => return Ok(RunnerOutcome { exit_status, log }),
            None => {}
        }
    }
}

/// The runners available on a host, and which one applies when a job does
/// not name one.
pub struct Runners {
    process: Option<ProcessRunner>,
    mock: MockRunner,
    default_kind: RunnerKind,
}

impl Runners {
    pub fn new(default_kind: RunnerKind) -> Self {
        Self { process: Some(ProcessRunner::default()), mock: MockRunner, default_kind }
    }

    /// Resolves the `labflow` program of process jobs to `exe`.
    pub fn with_self_exe(mut self, exe: PathBuf) -> Self {
        self.process = Some(ProcessRunner { self_exe: Some(exe) });
        self
    }

    /// Only the mock runner; process jobs fail with `UnsupportedRunner`.
    pub fn mock_only() -> Self {
        Self { process: None, mock: MockRunner, default_kind: RunnerKind::Mock }
    }

    pub fn for_job(&self, job: &JobSpec) -> Result<&dyn Runner, RunnerError> {
        match job.runner_kind.unwrap_or(self.default_kind) {
            RunnerKind::Process => self
                .process
                .as_ref()
                .map(|r| r as &dyn Runner)
                .ok_or(RunnerError::UnsupportedRunner(RunnerKind::Process)),
            RunnerKind::Mock => Ok(&self.mock),
        }
    }
}

/// Runs `command` as a child process with stdout and stderr captured in
/// arrival order. The child gets its own process group so a kill reaches
/// anything it started.
#[derive(Debug, Default, Clone)]
pub struct ProcessRunner {
    /// Override for [`SELF_PROGRAM`]; defaults to the current executable.
    pub self_exe: Option<PathBuf>,
}

enum Pipe {
    Data(Vec<u8>),
    Closed,
}

impl Runner for ProcessRunner {
    fn start(&self, job: &JobSpec) -> Result<Box<dyn Execution>, RunnerError> {
        let (program, args) = job
            .command
            .split_first()
            .ok_or_else(|| RunnerError::SpawnFailure("empty command".into()))?;
        let program = if program == SELF_PROGRAM {
            match &self.self_exe {
                Some(exe) => exe.clone(),
                None => std::env::current_exe().map_err(|e| RunnerError::SpawnFailure(e.to_string()))?,
            }
        } else {
            PathBuf::from(program)
        };
        let parameters = serde_json::to_string(&job.parameters).expect("parameters serialize");
        let mut command = Command::new(&program);
        command
            .args(args)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .env(ENV_JOB_ID, &job.job_id)
            .env(ENV_PARAMETERS, parameters)
            .process_group(0);
        if let Some(uri) = &job.output_uri {
            command.env(ENV_OUTPUT_URI, uri);
        }
        let mut child = command
            .spawn()
            .map_err(|e| RunnerError::SpawnFailure(format!("{}: {e}", program.display())))?;

        let (tx, rx) = mpsc::channel();
        let stdout = child.stdout.take().expect("piped stdout");
        let stderr = child.stderr.take().expect("piped stderr");
        for mut pipe in [Box::new(stdout) as Box<dyn Read + Send>, Box::new(stderr)] {
            let tx = tx.clone();
            thread::spawn(move || {
                let mut buf = [0u8; 8192];
                loop {
                    match pipe.read(&mut buf) {
                        Ok(0) | Err(_) => break,
                        Ok(n) => {
                            if tx.send(Pipe::Data(buf[..n].to_vec())).is_err() {
                                break;
                            }
                        }
                    }
                }
                let _ = tx.send(Pipe::Closed);
            });
        }
        Ok(Box::new(ProcessExecution {
            child,
            rx,
            open_pipes: 2,
            exited_at: None,
            status: None,
            killed: false,
            finished: false,
        }))
    }
}

/// How long output pipes may stay open after the child itself exited (a
/// leftover background process holding them) before the group is killed.
const PIPE_GRACE: Duration = Duration::from_millis(500);

struct ProcessExecution {
    child: Child,
    rx: Receiver<Pipe>,
    open_pipes: usize,
    exited_at: Option<Instant>,
    status: Option<bool>,
    killed: bool,
    finished: bool,
}

impl ProcessExecution {
    fn kill_group(&mut self) {
        let pid = self.child.id() as libc::pid_t;
        // SAFETY: signalling a process group we created; no memory is involved.
        unsafe {
            libc::kill(-pid, libc::SIGKILL);
        }
        let _ = self.child.kill();
    }

    fn finish(&mut self) -> RunnerEvent {
        self.finished = true;
        let success = match self.status {
            Some(s) => s,
            None => self.child.wait().map(|s| s.success()).unwrap_or(false),
        };
        RunnerEvent::Exited(if self.killed {
            ExitKind::Killed
        } else if success {
            ExitKind::Success
        } else {
            ExitKind::Failure
        })
    }
}

impl Execution for ProcessExecution {
    fn next_event(&mut self, timeout: Duration) -> Option<RunnerEvent> {
        if self.finished {
            thread::sleep(timeout);
            return None;
        }
        let deadline = Instant::now() + timeout;
        while self.open_pipes > 0 {
            let wait = deadline.saturating_duration_since(Instant::now()).min(PIPE_GRACE / 5);
            match self.rx.recv_timeout(wait) {
                Ok(Pipe::Data(bytes)) => return Some(RunnerEvent::Output(bytes)),
                Ok(Pipe::Closed) => self.open_pipes -= 1,
                Err(RecvTimeoutError::Disconnected) => self.open_pipes = 0,
                Err(RecvTimeoutError::Timeout) => {
                    if self.status.is_none() {
                        if let Ok(Some(status)) = self.child.try_wait() {
                            self.status = Some(status.success());
                            self.exited_at = Some(Instant::now());
                        }
                    }
                    if self.exited_at.is_some_and(|t| t.elapsed() >= PIPE_GRACE) {
                        self.kill_group();
                        self.open_pipes = 0;
                    } else if Instant::now() >= deadline {
                        return None;
                    }
                }
            }
        }
        Some(self.finish())
    }

    fn kill(&mut self) {
        if !self.finished {
            self.killed = true;
            self.kill_group();
        }
    }
}

impl Drop for ProcessExecution {
    fn drop(&mut self) {
        if !self.finished {
            self.kill_group();
            let _ = self.child.wait();
        }
    }
}

/// Replays a script instead of running anything. Each `command` element is
/// one directive:
///
/// * `log=<text>` writes `<text>` and a newline;
/// * `sleep_ms=<n>` pauses;
/// * `asset=<kind> <uri>` writes an asset marker line;
/// * `exit=success` or `exit=failure` ends the job.
///
/// A script that runs out of directives succeeds.
#[derive(Debug, Default, Clone, Copy)]
pub struct MockRunner;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Step {
    Output(Vec<u8>),
    Sleep(Duration),
    Exit(ExitKind),
}

fn parse_script(command: &[String]) -> Result<VecDeque<Step>, RunnerError> {
    command
        .iter()
        .map(|directive| {
            let bad = || RunnerError::SpawnFailure(format!("bad mock directive {directive:?}"));
            let (key, value) = directive.split_once('=').ok_or_else(bad)?;
            Ok(match key {
                "log" => Step::Output(format!("{value}\n").into_bytes()),
                "sleep_ms" => Step::Sleep(Duration::from_millis(value.parse().map_err(|_| bad())?)),
                "asset" => {
                    let (kind, uri) = value.split_once(' ').ok_or_else(bad)?;
                    if kind.is_empty() || uri.trim().is_empty() {
                        return Err(bad());
                    }
                    Step::Output(format!("{ASSET_MARKER} {kind} {}\n", uri.trim()).into_bytes())
                }
                "exit" => Step::Exit(match value {
                    "success" => ExitKind::Success,
                    "failure" => ExitKind::Failure,
                    _ => return Err(bad()),
                }),
                _ => return Err(bad()),
            })
        })
        .collect()
}

impl Runner for MockRunner {
    fn start(&self, job: &JobSpec) -> Result<Box<dyn Execution>, RunnerError> {
        Ok(Box::new(MockExecution { steps: parse_script(&job.command)?, asleep_until: None, finished: false }))
    }
}

struct MockExecution {
    steps: VecDeque<Step>,
    asleep_until: Option<Instant>,
    finished: bool,
}

impl Execution for MockExecution {
    fn next_event(&mut self, timeout: Duration) -> Option<RunnerEvent> {
        if self.finished {
            thread::sleep(timeout);
            return None;
        }
        let deadline = Instant::now() + timeout;
        loop {
            if let Some(until) = self.asleep_until {
                let now = Instant::now();
                if now < until {
                    thread::sleep(until.min(deadline) - now);
                    if Instant::now() < until {
                        return None;
                    }
                }
                self.asleep_until = None;
            }
            match self.steps.pop_front() {
                Some(Step::Output(bytes)) => return Some(RunnerEvent::Output(bytes)),
                Some(Step::Sleep(d)) => self.asleep_until = Some(Instant::now() + d),
                Some(Step::Exit(kind)) => {
                    self.finished = true;
                    return Some(RunnerEvent::Exited(kind));
                }
                None => {
                    self.finished = true;
                    return Some(RunnerEvent::Exited(ExitKind::Success));
                }
            }
        }
    }

    fn kill(&mut self) {
        if !self.finished {
            self.steps.clear();
            self.steps.push_back(Step::Exit(ExitKind::Killed));
            self.asleep_until = None;
        }
    }
}

/// Prefix of an output line announcing a produced asset:
/// `##asset <kind> <uri>` or `##asset <uri>`.
pub const ASSET_MARKER: &str = "##asset";
