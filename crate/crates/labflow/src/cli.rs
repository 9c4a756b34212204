//! Command-line interface. Exit codes: 0 success, 1 API or runtime error,
//! 2 usage error.

use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use labflow_core::workflow::RunnerKind;
use serde_json::Value;

use crate::agent::launcher::{launcher_loop, LauncherConfig, ProcessSpawner, ThreadSpawner, WorkerSpawner};
use crate::agent::runner::Runners;
use crate::agent::worker::{worker_loop, WorkerOptions};
use crate::agent::ComputeApi;
use crate::client::{ApiClient, ClientError};
use crate::config::{pick, FileConfig, DEFAULT_API, DEFAULT_DATA_DIR, DEFAULT_LISTEN};
use crate::demo::{self, DemoError, DemoOptions};
use crate::http::spawn_server;
use crate::journal::JournalError;
use crate::service::{Hub, HubOptions, OpenError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_API: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "labflow", version, about = "Run and drive a labflow platform")]
pub struct Cli {
    /// Base URL of the API server.
    #[arg(long, global = true, env = "LABFLOW_API")]
    pub api: Option<String>,
    /// Bearer token: a user session token, or the agent token for
    /// `launcher` and `worker`.
    #[arg(long, global = true, env = "LABFLOW_TOKEN", hide_env_values = true)]
    pub token: Option<String>,
    /// TOML configuration file.
    #[arg(long, global = true, env = "LABFLOW_CONFIG")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Run the API server.
    Serve(ServeArgs),
    /// Create demo users, content, a team and a grant.
    Seed {
        #[arg(long)]
        json: bool,
    },
    /// Run the TRAIN/TEST pipeline and launch the demo apps.
    Demo(DemoArgs),
    /// Submit a workflow from a JSON file.
    Submit { file: PathBuf },
    /// Show a workflow and its jobs.
    Status { workflow_id: String },
    /// Cancel a workflow.
    Cancel { workflow_id: String },
    /// Search the content registry.
    Search {
        query: String,
        #[arg(long = "type")]
        content_type: Option<String>,
    },
    /// Print the user the token belongs to.
    Whoami,
    /// Log in and print a session token.
    Login {
        #[arg(long)]
        username: String,
        #[arg(long, env = "LABFLOW_PASSWORD", hide_env_values = true)]
        password: String,
    },
    /// Run the host agent that starts workers for this host's allocations.
    Launcher(LauncherArgs),
    #[command(hide = true)]
    Worker {
        #[arg(long)]
        worker_id: String,
        #[arg(long, value_enum, default_value = "process")]
        runner: RunnerArg,
        #[arg(long, default_value_t = 2000)]
        poll_ms: u64,
    },
    #[command(hide = true)]
    Task {
        #[arg(value_enum)]
        step: TaskStep,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "LABFLOW_LISTEN")]
    pub listen: Option<String>,
    #[arg(long, env = "LABFLOW_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    /// Require this bearer token on launcher and worker endpoints.
    #[arg(long, env = "LABFLOW_AGENT_TOKEN", hide_env_values = true)]
    pub agent_token: Option<String>,
    /// Serve static files from this directory under /ui.
    #[arg(long, env = "LABFLOW_UI_DIR")]
    pub ui_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long, value_enum, default_value = "process")]
    pub runner: RunnerArg,
    #[arg(long, default_value_t = 60)]
    pub timeout_secs: u64,
    #[arg(long)]
    pub skip_apps: bool,
    #[arg(long)]
    pub work_dir: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct LauncherArgs {
    #[arg(long, env = "LABFLOW_HOST_ID")]
    pub host_id: Option<String>,
    #[arg(long)]
    pub cpu: Option<u32>,
    #[arg(long)]
    pub gpu: Option<u32>,
    /// Runner for jobs that do not name one.
    #[arg(long, value_enum)]
    pub runner: Option<RunnerArg>,
    #[arg(long)]
    pub poll_ms: Option<u64>,
    /// Run workers as threads instead of child processes.
    #[arg(long)]
    pub in_process: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RunnerArg {
    Process,
    Mock,
}

impl From<RunnerArg> for RunnerKind {
    fn from(r: RunnerArg) -> Self {
        match r {
            RunnerArg::Process => RunnerKind::Process,
            RunnerArg::Mock => RunnerKind::Mock,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskStep {
    Train,
    Test,
}

/// A failed command: what to print and which exit code to use.
#[derive(Debug)]
pub struct Failure {
    pub exit_code: i32,
    pub code: String,
    pub message: String,
}

impl Failure {
    fn api(code: &str, message: impl ToString) -> Self {
        Self { exit_code: EXIT_API, code: code.into(), message: message.to_string() }
    }

    fn usage(message: impl ToString) -> Self {
        Self { exit_code: EXIT_USAGE, code: "UsageError".into(), message: message.to_string() }
    }
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        let code = e.code().unwrap_or("Unreachable").to_owned();
        Self::api(&code, e)
    }
}

impl From<DemoError> for Failure {
    fn from(e: DemoError) -> Self {
        let code = e.code().to_owned();
        Self::api(&code, e)
    }
}

/// Parses arguments and runs the command, returning the exit code.
pub fn main_with_args(args: impl IntoIterator<Item = String>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if !matches!(cli.command, Cmd::Serve(_) | Cmd::Launcher(_) | Cmd::Worker { .. }) {
        // Client output piped into `head` should end quietly, not panic.
        unsafe { libc::signal(libc::SIGPIPE, libc::SIG_DFL) };
    }
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(failure) => {
            eprintln!("error: {}: {}", failure.code, failure.message);
            failure.exit_code
        }
    }
}

fn init_logging(default: &str) {
    let filter = tracing_subscriber::EnvFilter::try_from_env("LABFLOW_LOG")
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

/// A flag flipped by SIGINT or SIGTERM, plus a channel that fires once.
fn interrupt() -> (Arc<AtomicBool>, mpsc::Receiver<()>) {
    let stop = Arc::new(AtomicBool::new(false));
    let (tx, rx) = mpsc::channel();
    let flag = stop.clone();
    let installed = ctrlc::set_handler(move || {
        flag.store(true, Ordering::Relaxed);
        let _ = tx.send(());
    });
    if let Err(e) = installed {
        tracing::warn!(error = %e, "cannot install signal handler");
    }
    (stop, rx)
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path).map_err(Failure::usage)?,
        None => FileConfig::default(),
    };
    let api_url = pick(cli.api.clone(), file.api.clone(), DEFAULT_API.into());
    let token = cli.token.clone().or(file.token.clone());
    let client = ApiClient::new(&api_url, token.clone());

    match cli.command {
        Cmd::Serve(args) => {
            init_logging("info");
            serve(args, &file)
        }
        Cmd::Seed { json } => {
            init_logging("warn");
            let report = demo::seed(&client)?;
            if json {
                print_json(&report);
            } else {
                println!("seeded users {}", report.users.join(", "));
                println!("team {}", report.team_id);
                println!("model {}", report.model_id);
                println!("apps {}", report.app_ids.join(", "));
                println!("workflow template {}", report.workflow_content_id);
            }
            Ok(())
        }
        Cmd::Demo(args) => {
            init_logging("warn");
            let mut options = DemoOptions {
                runner: args.runner.into(),
                timeout: Duration::from_secs(args.timeout_secs),
                launch_apps: !args.skip_apps,
                ..DemoOptions::default()
            };
            if let Some(dir) = args.work_dir {
                options.work_dir = dir;
            }
            let report = demo::run_demo(&client, &options)?;
            if args.json {
                print_json(&report);
            } else {
                print!("{}", report.table());
                println!("TRAIN {} -> TEST {} via {}", report.train_workflow, report.test_workflow, report.model_uri);
            }
            Ok(())
        }
        Cmd::Submit { file: path } => {
            init_logging("warn");
            let text = std::fs::read_to_string(&path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
            let body: Value = serde_json::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
            println!("{}", client.submit_workflow_value(&body)?);
            Ok(())
        }
        Cmd::Status { workflow_id } => {
            init_logging("warn");
            print_json(&client.get_workflow(&workflow_id)?);
            Ok(())
        }
        Cmd::Cancel { workflow_id } => {
            init_logging("warn");
            let affected = client.cancel_workflow(&workflow_id)?;
            println!("{workflow_id}: {affected} job(s) affected");
            Ok(())
        }
        Cmd::Search { query, content_type } => {
            init_logging("warn");
            for hit in client.search(&query, content_type.as_deref())? {
                println!("{}\t{}\t{}\t{}", hit.content_id, hit.score, hit.content_type, hit.name);
            }
            Ok(())
        }
        Cmd::Whoami => {
            init_logging("warn");
            println!("{}", client.whoami()?);
            Ok(())
        }
        Cmd::Login { username, password } => {
            init_logging("warn");
            let session = client.login(&username, &password)?;
            println!("{}", session.token);
            Ok(())
        }
        Cmd::Launcher(args) => {
            init_logging("info");
            launcher(args, &file, client, &api_url, token)
        }
        Cmd::Worker { worker_id, runner, poll_ms } => {
            init_logging("info");
            let (stop, _rx) = interrupt();
            let options = WorkerOptions { poll_interval: Duration::from_millis(poll_ms), ..WorkerOptions::default() };
            worker_loop(&worker_id, &client, &Runners::new(runner.into()), &options, &stop)
                .map_err(|e| Failure::api("WorkerFailed", e))
        }
        Cmd::Task { step } => {
            let lines = match step {
                TaskStep::Train => demo::task_train(),
                TaskStep::Test => demo::task_test(),
            }
            .map_err(|e| Failure::api("TaskFailed", e))?;
            let mut out = std::io::stdout().lock();
            for line in lines {
                let _ = writeln!(out, "{line}");
            }
            Ok(())
        }
    }
}

fn serve(args: ServeArgs, file: &FileConfig) -> Result<(), Failure> {
    let listen = pick(args.listen, file.serve.listen.clone(), DEFAULT_LISTEN.into());
    let data_dir = pick(args.data_dir, file.serve.data_dir.clone(), PathBuf::from(DEFAULT_DATA_DIR));
    let options = HubOptions {
        agent_token: args.agent_token.or(file.serve.agent_token.clone()),
        ..HubOptions::default()
    };
    let ui_dir = args.ui_dir.or(file.serve.ui_dir.clone());
    let hub = Hub::open(&data_dir, options).map_err(|e| match &e {
        OpenError::Journal(JournalError::Locked { .. }) => Failure::api("DataDirLocked", &e),
        OpenError::Journal(JournalError::Io { .. }) => Failure::api("StorageFailure", &e),
        OpenError::Journal(JournalError::Corrupt { .. }) | OpenError::Replay { .. } => Failure::api("CorruptDataDir", &e),
    })?;
    let (_stop, interrupted) = interrupt();
    let server = spawn_server(Arc::new(hub), &listen, ui_dir).map_err(|e| {
        if e.kind() == std::io::ErrorKind::AddrInUse {
            Failure::api("AddressInUse", format!("{listen}: {e}"))
        } else {
            Failure::api("BindFailed", format!("{listen}: {e}"))
        }
    })?;
    println!("listening on {}", server.base_url());
    let _ = std::io::stdout().flush();
    let _ = interrupted.recv();
    tracing::info!("shutting down");
    drop(server);
    Ok(())
}

fn launcher(args: LauncherArgs, file: &FileConfig, client: ApiClient, api_url: &str, token: Option<String>) -> Result<(), Failure> {
    let cores = std::thread::available_parallelism().map(|n| n.get() as u32).unwrap_or(1);
    let runner: RunnerKind = match args.runner {
        Some(r) => r.into(),
        None => match file.launcher.runner.as_deref() {
            None | Some("process") => RunnerKind::Process,
            Some("mock") => RunnerKind::Mock,
            Some(other) => return Err(Failure::usage(format!("unknown runner {other:?} in config"))),
        },
    };
    let config = LauncherConfig {
        host_id: pick(args.host_id, file.launcher.host_id.clone(), "host-1".into()),
        cpu_capacity: pick(args.cpu, file.launcher.cpu, cores),
        gpu_capacity: pick(args.gpu, file.launcher.gpu, 0),
        poll_interval: Duration::from_millis(pick(args.poll_ms, file.launcher.poll_ms, 2000)),
    };
    let (stop, _rx) = interrupt();
    let mut spawner: Box<dyn WorkerSpawner> = if args.in_process {
        let api: Arc<dyn ComputeApi> = Arc::new(client.clone());
        let options = WorkerOptions { poll_interval: config.poll_interval, ..WorkerOptions::default() };
        Box::new(ThreadSpawner::new(api, Arc::new(Runners::new(runner)), options))
    } else {
        let exe = std::env::current_exe().map_err(|e| Failure::api("SpawnFailure", e))?;
        Box::new(ProcessSpawner::new(exe, api_url, token, runner, config.poll_interval))
    };
    launcher_loop(&config, &client, spawner.as_mut(), &stop).map_err(Failure::from)
}
