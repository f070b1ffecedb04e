//! Opt-in viability checks run in a sandboxed child process.

use std::collections::HashMap;
use std::process::{Command, Stdio};
use std::sync::{Arc, Condvar, Mutex, OnceLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use crate::clock::Timestamp;
use crate::error::{Error, Result};
use crate::pid::PersistentIdentifier;
use crate::store::{RecordStatus, Registry};

/// Document property holding the shell command that exercises a component.
pub const CHECK_COMMAND_PROP: &str = "x_check_command";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Viable,
    Broken,
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViabilityResult {
    pub checked_at: Timestamp,
    pub command: String,
    /// `-1` when the command did not run to completion or was skipped.
    pub exit_status: i32,
    pub duration: f64,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct SandboxConfig {
    pub wall_clock: Duration,
    pub allow_network: bool,
    /// Prefix that drops network access for the child.
    pub isolation_launcher: Vec<String>,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        SandboxConfig {
            wall_clock: Duration::from_secs(300),
            allow_network: false,
            isolation_launcher: ["unshare", "--net", "--map-root-user", "--"].map(String::from).to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CommandOutcome {
    pub exit_status: i32,
    pub duration: Duration,
    pub timed_out: bool,
    pub detail: String,
}

pub trait CommandRunner: Send + Sync {
    fn run(&self, command: &str, config: &SandboxConfig) -> Result<CommandOutcome>;
}

/// Runs `sh -c` with an empty environment in a scratch directory.
#[derive(Default)]
pub struct ProcessRunner {
    isolation: OnceLock<std::result::Result<(), String>>,
}

impl ProcessRunner {
    pub fn new() -> Self {
        Self::default()
    }

    fn check_isolation(&self, launcher: &[String]) -> Result<()> {
        self.isolation
            .get_or_init(|| {
                let (prog, args) = launcher.split_first().ok_or("empty isolation launcher")?;
                let status = Command::new(prog)
                    .args(args)
                    .arg("true")
                    .stdin(Stdio::null())
                    .stdout(Stdio::null())
                    .stderr(Stdio::null())
                    .status()
                    .map_err(|e| format!("{prog}: {e}"))?;
                if status.success() {
                    Ok(())
                } else {
                    Err(format!("{prog} cannot drop network access ({status})"))
                }
            })
            .clone()
            .map_err(Error::SandboxUnavailable)
    }
}

impl CommandRunner for ProcessRunner {
    fn run(&self, command: &str, config: &SandboxConfig) -> Result<CommandOutcome> {
        let scratch = tempfile::tempdir().map_err(|e| Error::SandboxUnavailable(e.to_string()))?;
        let mut argv: Vec<String> = Vec::new();
        if !config.allow_network {
            self.check_isolation(&config.isolation_launcher)?;
            argv.extend(config.isolation_launcher.iter().cloned());
        }
        argv.extend(["sh".to_string(), "-c".to_string(), command.to_string()]);
        let started = Instant::now();
        let mut child = Command::new(&argv[0])
            .args(&argv[1..])
            .env_clear()
            .env("PATH", "/usr/local/bin:/usr/bin:/bin")
            .env("HOME", scratch.path())
            .current_dir(scratch.path())
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| Error::SandboxUnavailable(format!("{}: {e}", argv[0])))?;
        let waited = child
            .wait_timeout(config.wall_clock)
            .map_err(|e| Error::SandboxUnavailable(e.to_string()))?;
        Ok(match waited {
            Some(status) => CommandOutcome {
                exit_status: status.code().unwrap_or(-1),
                duration: started.elapsed(),
                timed_out: false,
                detail: if status.code().is_some() { String::new() } else { format!("terminated: {status}") },
            },
            None => {
                let _ = child.kill();
                let _ = child.wait();
                CommandOutcome {
                    exit_status: -1,
                    duration: started.elapsed(),
                    timed_out: true,
                    detail: format!("timed out after {} s", config.wall_clock.as_secs_f64()),
                }
            }
        })
    }
}

/// Test double: fixed exit status per command, default 0.
#[derive(Default)]
pub struct ScriptedRunner {
    outcomes: Mutex<HashMap<String, i32>>,
    timeouts: Mutex<Vec<String>>,
    pub calls: Mutex<Vec<String>>,
}

impl ScriptedRunner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn exit_with(&self, command: &str, status: i32) {
        self.outcomes.lock().expect("runner lock").insert(command.to_string(), status);
    }

    pub fn time_out(&self, command: &str) {
        self.timeouts.lock().expect("runner lock").push(command.to_string());
    }
}

impl CommandRunner for ScriptedRunner {
    fn run(&self, command: &str, config: &SandboxConfig) -> Result<CommandOutcome> {
        self.calls.lock().expect("runner lock").push(command.to_string());
        if self.timeouts.lock().expect("runner lock").iter().any(|c| c == command) {
            return Ok(CommandOutcome {
                exit_status: -1,
                duration: config.wall_clock,
                timed_out: true,
                detail: format!("timed out after {} s", config.wall_clock.as_secs_f64()),
            });
        }
        let status = self.outcomes.lock().expect("runner lock").get(command).copied().unwrap_or(0);
        Ok(CommandOutcome {
            exit_status: status,
            duration: Duration::from_millis(1),
            timed_out: false,
            detail: String::new(),
        })
    }
}

impl Registry {
    /// Run the record's declared check command. No command means `skipped`;
    /// a broken verdict marks the record stale.
    pub fn run_viability_check(
        &self,
        pid: &PersistentIdentifier,
        runner: &dyn CommandRunner,
        config: &SandboxConfig,
    ) -> Result<ViabilityResult> {
        let record = self.raw(pid).ok_or_else(|| Error::not_found(pid))?;
        let now = self.now();
        let command = record
            .document
            .get(CHECK_COMMAND_PROP)
            .and_then(|v| v.as_str())
            .map(str::trim)
            .filter(|c| !c.is_empty());
        let result = match command {
            None => ViabilityResult {
                checked_at: now,
                command: String::new(),
                exit_status: -1,
                duration: 0.0,
                verdict: Verdict::Skipped,
                detail: "no check command declared".into(),
            },
            Some(cmd) => {
                let out = runner.run(cmd, config)?;
                ViabilityResult {
                    checked_at: now,
                    command: cmd.to_string(),
                    exit_status: out.exit_status,
                    duration: out.duration.as_secs_f64(),
                    verdict: if out.exit_status == 0 && !out.timed_out { Verdict::Viable } else { Verdict::Broken },
                    detail: out.detail,
                }
            }
        };
        let stored = result.clone();
        self.mutate(pid, |rec| {
            if stored.verdict == Verdict::Broken && rec.status == RecordStatus::Active {
                rec.status = RecordStatus::Stale;
            }
            rec.viability = Some(stored);
            Ok(((), false))
        })?;
        tracing::info!(pid = %pid, verdict = ?result.verdict, "viability check finished");
        Ok(result)
    }
}

/// Bounds concurrent sandbox executions.
pub struct ViabilityPool {
    runner: Arc<dyn CommandRunner>,
    config: SandboxConfig,
    permits: Mutex<usize>,
    freed: Condvar,
    size: usize,
}

impl ViabilityPool {
    pub const DEFAULT_WORKERS: usize = 2;

    pub fn new(runner: Arc<dyn CommandRunner>, config: SandboxConfig, workers: usize) -> Self {
        let size = workers.max(1);
        ViabilityPool {
            runner,
            config,
            permits: Mutex::new(size),
            freed: Condvar::new(),
            size,
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Blocks until a worker slot is free.
    pub fn check(&self, registry: &Registry, pid: &PersistentIdentifier) -> Result<ViabilityResult> {
        {
            let mut free = self.permits.lock().expect("pool lock");
            while *free == 0 {
                free = self.freed.wait(free).expect("pool lock");
            }
            *free -= 1;
        }
        let out = registry.run_viability_check(pid, self.runner.as_ref(), &self.config);
        *self.permits.lock().expect("pool lock") += 1;
        self.freed.notify_one();
        out
    }
}
