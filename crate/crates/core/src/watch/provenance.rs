//! Line-delimited provenance events grouped into run records.
//!
//! Native event shape, one JSON document per line:
//!
//! ```json
//! {"run_id": "r1", "event": "start", "timestamp": "2024-05-01T10:00:00Z",
//!  "workflow": "olcf:wf-00000001", "components": ["olcf:cd-00000003"],
//!  "machine": "olcf:sv-00000001", "environment": {"modules": ["gcc/12"]}}
//! {"run_id": "r1", "event": "end", "timestamp": "...", "status": "succeeded",
//!  "metrics": {"walltime_s": 812.5}}
//! ```
//!
//! FlowCept task documents (`task_id`, `workflow_id`, `status`, `started_at`,
//! `ended_at`, `custom_metadata`) are accepted through [`ProvenanceEvent::from_flowcept`].

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::access::{view_level, DenyReason, Principal, Role, ViewLevel};
use crate::checksum::Checksum;
use crate::clock::Timestamp;
use crate::document::canonical_json;
use crate::error::{Error, Result};
use crate::pid::PersistentIdentifier;
use crate::store::Registry;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Start,
    Step,
    End,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Succeeded,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceEvent {
    pub run_id: String,
    pub event: EventKind,
    pub timestamp: Timestamp,
    #[serde(default)]
    pub workflow: Option<String>,
    #[serde(default)]
    pub components: Vec<String>,
    #[serde(default)]
    pub machine: Option<String>,
    #[serde(default)]
    pub status: Option<RunStatus>,
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
    #[serde(default)]
    pub environment: Option<Value>,
}

impl ProvenanceEvent {
    /// Parse one event document, native or FlowCept-shaped.
    pub fn from_value(v: Value) -> std::result::Result<Self, String> {
        if v.get("task_id").is_some() {
            return Self::from_flowcept(&v);
        }
        let ev: ProvenanceEvent = serde_json::from_value(v).map_err(|e| e.to_string())?;
        if ev.run_id.trim().is_empty() {
            return Err("empty run_id".into());
        }
        match ev.event {
            EventKind::Start if ev.components.is_empty() => Err("start event lists no components".into()),
            EventKind::End if !matches!(ev.status, Some(RunStatus::Succeeded | RunStatus::Failed)) => {
                Err("end event needs status succeeded or failed".into())
            }
            _ => Ok(ev),
        }
    }

    /// Adapter for FlowCept task messages. A task with `started_at` and no
    /// `ended_at` is a start; FINISHED/ERROR with `ended_at` is terminal.
    pub fn from_flowcept(v: &Value) -> std::result::Result<Self, String> {
        let run_id = v
            .get("workflow_id")
            .and_then(Value::as_str)
            .ok_or("flowcept task without workflow_id")?
            .to_string();
        let meta = v.get("custom_metadata").cloned().unwrap_or(Value::Null);
        let strings = |key: &str| -> Vec<String> {
            meta.get(key)
                .and_then(Value::as_array)
                .map(|a| a.iter().filter_map(Value::as_str).map(str::to_string).collect())
                .unwrap_or_default()
        };
        let stamp = |key: &str| v.get(key).and_then(Value::as_f64).map(|s| Timestamp::from_unix(s.floor() as i64));
        let status = v.get("status").and_then(Value::as_str).unwrap_or("");
        let (event, timestamp, status) = match (status, stamp("ended_at")) {
            ("FINISHED", Some(t)) => (EventKind::End, t, Some(RunStatus::Succeeded)),
            ("ERROR", Some(t)) => (EventKind::End, t, Some(RunStatus::Failed)),
            _ => (
                if meta.get("first_task").and_then(Value::as_bool).unwrap_or(false) {
                    EventKind::Start
                } else {
                    EventKind::Step
                },
                stamp("started_at").ok_or("flowcept task without started_at")?,
                None,
            ),
        };
        let metrics = v
            .get("telemetry_at_end")
            .and_then(Value::as_object)
            .map(|m| m.iter().filter_map(|(k, v)| v.as_f64().map(|x| (k.clone(), x))).collect())
            .unwrap_or_default();
        Ok(ProvenanceEvent {
            run_id,
            event,
            timestamp,
            workflow: meta.get("workflow_pid").and_then(Value::as_str).map(str::to_string),
            components: strings("component_pids"),
            machine: meta.get("machine_pid").and_then(Value::as_str).map(str::to_string),
            status,
            metrics,
            environment: v.get("environment").cloned(),
        })
    }
}

/// A reference from a run to a registry record.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reference {
    Resolved(PersistentIdentifier),
    /// Kept verbatim; no record is created for it.
    Unresolved(String),
}

impl Reference {
    pub fn pid(&self) -> Option<&PersistentIdentifier> {
        match self {
            Reference::Resolved(p) => Some(p),
            Reference::Unresolved(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workflow: Option<Reference>,
    pub components: Vec<Reference>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub machine: Option<Reference>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started_at: Option<Timestamp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ended_at: Option<Timestamp>,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub environment_digest: Option<Checksum>,
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
    pub steps: u32,
    /// Terminal event arrived before the start, or ends before it started.
    #[serde(default)]
    pub out_of_order: bool,
    pub finalized: bool,
}

impl RunRecord {
    fn new(run_id: &str) -> Self {
        RunRecord {
            run_id: run_id.to_string(),
            workflow: None,
            components: Vec::new(),
            machine: None,
            started_at: None,
            ended_at: None,
            status: RunStatus::Running,
            environment_digest: None,
            metrics: BTreeMap::new(),
            steps: 0,
            out_of_order: false,
            finalized: false,
        }
    }

    /// Every resolved PID this run links to.
    pub fn linked_pids(&self) -> BTreeSet<PersistentIdentifier> {
        self.workflow
            .iter()
            .chain(&self.components)
            .chain(&self.machine)
            .filter_map(|r| r.pid().cloned())
            .collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    /// Runs touched by this ingest, in first-seen order.
    pub runs: Vec<RunRecord>,
    pub malformed: usize,
    /// Line numbers (1-based) of malformed events.
    pub malformed_lines: Vec<usize>,
    pub rejected_after_terminal: usize,
}

fn run_key(run_id: &str) -> String {
    format!("run/{run_id}")
}

impl Registry {
    pub fn run(&self, run_id: &str) -> Option<RunRecord> {
        self.aux_get(&run_key(run_id)).and_then(|v| serde_json::from_value(v).ok())
    }

    pub fn runs(&self) -> Vec<RunRecord> {
        self.aux_range("run/")
            .into_iter()
            .filter_map(|(_, v)| serde_json::from_value(v).ok())
            .collect()
    }

    fn resolve_reference(&self, raw: &str, principal: &Principal, now: Timestamp) -> Reference {
        let visible = raw.trim().parse::<PersistentIdentifier>().ok().filter(|pid| {
            self.raw(pid)
                .is_some_and(|r| view_level(&r.policy, principal, now) == ViewLevel::Full)
        });
        match visible {
            Some(pid) => Reference::Resolved(pid),
            None => Reference::Unresolved(raw.to_string()),
        }
    }

    /// Ingest line-delimited events. Malformed lines are skipped and
    /// counted; events for a finalized run are rejected and counted.
    pub fn ingest_provenance(&self, lines: &str, principal: &Principal) -> Result<IngestSummary> {
        if !principal.has_role(Role::Contributor) {
            return Err(Error::Unauthorized(DenyReason::InsufficientRole));
        }
        let mut events = Vec::new();
        let mut summary = IngestSummary::default();
        for (i, line) in lines.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<Value>(line)
                .map_err(|e| e.to_string())
                .and_then(ProvenanceEvent::from_value)
            {
                Ok(ev) => events.push(ev),
                Err(why) => {
                    tracing::debug!(line = i + 1, %why, "malformed provenance event");
                    summary.malformed += 1;
                    summary.malformed_lines.push(i + 1);
                }
            }
        }
        let mut applied = self.ingest_events(events, principal)?;
        applied.malformed += summary.malformed;
        applied.malformed_lines = summary.malformed_lines;
        Ok(applied)
    }

    pub fn ingest_events(&self, events: Vec<ProvenanceEvent>, principal: &Principal) -> Result<IngestSummary> {
        let now = self.now();
        let mut summary = IngestSummary::default();
        let mut touched: Vec<String> = Vec::new();
        let mut runs: BTreeMap<String, RunRecord> = BTreeMap::new();
        let mut before: BTreeMap<String, BTreeSet<PersistentIdentifier>> = BTreeMap::new();

        for ev in events {
            if !runs.contains_key(&ev.run_id) {
                let existing = self.run(&ev.run_id);
                before.insert(
                    ev.run_id.clone(),
                    existing.as_ref().map(RunRecord::linked_pids).unwrap_or_default(),
                );
                runs.insert(ev.run_id.clone(), existing.unwrap_or_else(|| RunRecord::new(&ev.run_id)));
            }
            let run = runs.get_mut(&ev.run_id).expect("inserted above");
            if run.finalized {
                summary.rejected_after_terminal += 1;
                continue;
            }
            if !touched.contains(&ev.run_id) {
                touched.push(ev.run_id.clone());
            }
            if let Some(w) = &ev.workflow {
                run.workflow.get_or_insert_with(|| self.resolve_reference(w, principal, now));
            }
            if let Some(m) = &ev.machine {
                run.machine.get_or_insert_with(|| self.resolve_reference(m, principal, now));
            }
            for c in &ev.components {
                let r = self.resolve_reference(c, principal, now);
                if !run.components.contains(&r) {
                    run.components.push(r);
                }
            }
            if run.environment_digest.is_none() {
                if let Some(env) = &ev.environment {
                    run.environment_digest = Some(Checksum::of(canonical_json(env).as_bytes()));
                }
            }
            run.metrics.extend(ev.metrics.iter().map(|(k, v)| (k.clone(), *v)));
            match ev.event {
                EventKind::Start => {
                    run.started_at.get_or_insert(ev.timestamp);
                }
                EventKind::Step => run.steps += 1,
                EventKind::End => {
                    run.ended_at = Some(ev.timestamp);
                    run.status = ev.status.expect("checked on parse");
                    run.finalized = true;
                    run.out_of_order = match run.started_at {
                        None => true,
                        Some(start) => ev.timestamp < start,
                    };
                }
            }
        }

        for run_id in &touched {
            let run = &runs[run_id];
            let new_links: Vec<_> = run.linked_pids().difference(&before[run_id]).cloned().collect();
            for pid in new_links {
                self.mutate(&pid, |rec| {
                    rec.usage.count += 1;
                    rec.usage.runs.push(run_id.clone());
                    rec.usage.latest_run = Some(run_id.clone());
                    Ok(((), false))
                })?;
            }
            self.aux_commit(vec![(run_key(run_id), serde_json::to_value(run).expect("run serializes"))])?;
            summary.runs.push(run.clone());
        }
        tracing::info!(runs = summary.runs.len(), rejected = summary.rejected_after_terminal, "ingested provenance");
        Ok(summary)
    }

    /// Runs that link to `pid`, via its usage back-links.
    pub fn runs_for(&self, pid: &PersistentIdentifier, principal: &Principal) -> Result<Vec<RunRecord>> {
        let record = self.resolve_full(pid, principal)?;
        Ok(record.usage.runs.iter().filter_map(|id| self.run(id)).collect())
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    use super::*;
    use crate::access::{AccessPolicy, Role, Visibility};
    use crate::clock::ManualClock;
    use crate::document::fixtures::complete_doc;
    use crate::source::{SourceDescriptor, SourceScheme};
    use crate::store::RegistryConfig;

    fn setup(n: usize) -> (Registry, Principal, Vec<PersistentIdentifier>) {
        let reg = Registry::in_memory(RegistryConfig::new("olcf"), Arc::new(ManualClock::new(Timestamp::from_unix(0))));
        let p = Principal::new("u", "U", Role::Contributor, ["e"]);
        let pids = (0..n)
            .map(|i| {
                reg.register(
                    complete_doc(&format!("c{i}")).with("kind", "code"),
                    vec![SourceDescriptor::new(SourceScheme::Git, format!("https://x/{i}.git"))],
                    AccessPolicy::public("e", "u"),
                    &p,
                )
                .unwrap()
                .pid
            })
            .collect();
        (reg, p, pids)
    }

    fn line(run: &str, event: &str, t: i64, comps: &[&str], extra: &str) -> String {
        let comps: Vec<String> = comps.iter().map(|c| format!("{c:?}")).collect();
        format!(
            r#"{{"run_id":"{run}","event":"{event}","timestamp":"{}","components":[{}]{extra}}}"#,
            Timestamp::from_unix(t),
            comps.join(",")
        )
    }

    #[test]
    fn three_events_make_one_run() {
        let (reg, p, pids) = setup(1);
        let c = pids[0].to_string();
        let stream = [
            line("r1", "start", 10, &[&c], r#","environment":{"cc":"gcc"}"#),
            line("r1", "step", 20, &[], ""),
            line("r1", "end", 30, &[], r#","status":"failed","metrics":{"walltime":20}"#),
        ]
        .join("\n");
        let s = reg.ingest_provenance(&stream, &p).unwrap();
        assert_eq!(s.runs.len(), 1);
        let run = &s.runs[0];
        assert_eq!(run.status, RunStatus::Failed);
        assert_eq!(run.steps, 1);
        assert!(run.finalized && !run.out_of_order);
        assert_eq!(run.metrics["walltime"], 20.0);
        assert_eq!(run.environment_digest, Some(Checksum::of(br#"{"cc":"gcc"}"#)));
        let rec = reg.raw(&pids[0]).unwrap();
        assert_eq!(rec.usage.count, 1);
        assert_eq!(rec.usage.latest_run.as_deref(), Some("r1"));
    }

    #[test]
    fn unknown_components_stay_unresolved() {
        let (reg, p, _) = setup(0);
        let s = reg
            .ingest_provenance(&line("r", "start", 1, &["olcf:cd-00009999"], ""), &p)
            .unwrap();
        assert_eq!(s.runs[0].components, vec![Reference::Unresolved("olcf:cd-00009999".into())]);
        assert!(reg.all_records().is_empty());
    }

    #[test]
    fn hidden_records_do_not_resolve_for_outsiders() {
        let (reg, _, _) = setup(0);
        let owner = Principal::new("o", "O", Role::Contributor, ["secret"]);
        let pid = reg
            .register(
                complete_doc("hidden"),
                vec![SourceDescriptor::new(SourceScheme::Git, "https://x/h.git")],
                AccessPolicy::new("secret", Visibility::Hidden, "o"),
                &owner,
            )
            .unwrap()
            .pid;
        let outsider = Principal::new("x", "X", Role::Contributor, ["e"]);
        let s = reg
            .ingest_provenance(&line("r", "start", 1, &[&pid.to_string()], ""), &outsider)
            .unwrap();
        assert!(matches!(s.runs[0].components[0], Reference::Unresolved(_)));
        assert_eq!(reg.raw(&pid).unwrap().usage.count, 0);
    }

    #[test]
    fn interleaved_runs_partition_correctly() {
        let (reg, p, pids) = setup(4);
        let ids: Vec<String> = pids.iter().map(|p| p.to_string()).collect();
        let mut events = vec![
            line("a", "start", 1, &[&ids[0], &ids[1]], ""),
            line("a", "step", 2, &[&ids[1]], ""),
            line("b", "start", 1, &[&ids[2]], ""),
            line("b", "step", 3, &[&ids[3]], ""),
        ];
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        events.shuffle(&mut rng);
        events.push(line("a", "end", 9, &[], r#","status":"succeeded""#));
        events.push(line("b", "end", 9, &[], r#","status":"succeeded""#));
        let s = reg.ingest_provenance(&events.join("\n"), &p).unwrap();
        let comps = |id: &str| -> BTreeSet<String> {
            s.runs
                .iter()
                .find(|r| r.run_id == id)
                .unwrap()
                .components
                .iter()
                .map(|c| c.pid().unwrap().to_string())
                .collect()
        };
        assert_eq!(comps("a"), BTreeSet::from([ids[0].clone(), ids[1].clone()]));
        assert_eq!(comps("b"), BTreeSet::from([ids[2].clone(), ids[3].clone()]));
        for run in reg.runs() {
            for pid in run.linked_pids() {
                assert!(reg.raw(&pid).unwrap().usage.runs.contains(&run.run_id));
            }
        }
    }

    #[test]
    fn terminal_freezes_run_and_out_of_order_is_flagged() {
        let (reg, p, pids) = setup(1);
        let c = pids[0].to_string();
        let first = [
            line("r", "end", 5, &[&c], r#","status":"succeeded""#),
            line("r", "start", 9, &[&c], ""),
            "not json".to_string(),
            line("r", "end", 1, &[], ""),
        ]
        .join("\n");
        let s = reg.ingest_provenance(&first, &p).unwrap();
        assert_eq!(s.malformed, 2);
        assert_eq!(s.malformed_lines, vec![3, 4]);
        assert_eq!(s.rejected_after_terminal, 1);
        let run = reg.run("r").unwrap();
        assert!(run.out_of_order);
        assert_eq!(run.ended_at, Some(Timestamp::from_unix(5)));
        assert_eq!(run.started_at, None);

        let again = reg.ingest_provenance(&line("r", "step", 10, &[], ""), &p).unwrap();
        assert_eq!(again.rejected_after_terminal, 1);
        assert_eq!(reg.raw(&pids[0]).unwrap().usage.count, 1);
    }

    #[test]
    fn end_before_start_timestamp_is_flagged() {
        let (reg, p, pids) = setup(1);
        let c = pids[0].to_string();
        let s = reg
            .ingest_provenance(
                &[line("r", "start", 50, &[&c], ""), line("r", "end", 40, &[], r#","status":"succeeded""#)].join("\n"),
                &p,
            )
            .unwrap();
        let run = &s.runs[0];
        assert!(run.out_of_order);
        assert_eq!((run.started_at, run.ended_at), (Some(Timestamp::from_unix(50)), Some(Timestamp::from_unix(40))));
    }

    #[test]
    fn flowcept_adapter() {
        let v = serde_json::json!({
            "task_id": "t1", "workflow_id": "wf-run-1", "status": "FINISHED",
            "started_at": 100.5, "ended_at": 200.25,
            "telemetry_at_end": {"cpu": 0.5},
            "custom_metadata": {"component_pids": ["olcf:cd-00000001"], "machine_pid": "olcf:sv-00000001"}
        });
        let ev = ProvenanceEvent::from_value(v).unwrap();
        assert_eq!(ev.run_id, "wf-run-1");
        assert_eq!(ev.event, EventKind::End);
        assert_eq!(ev.status, Some(RunStatus::Succeeded));
        assert_eq!(ev.timestamp, Timestamp::from_unix(200));
        assert_eq!(ev.metrics["cpu"], 0.5);
    }

    #[test]
    fn readers_cannot_ingest() {
        let (reg, _, _) = setup(0);
        let reader = Principal::new("r", "R", Role::Reader, ["e"]);
        assert!(matches!(reg.ingest_provenance("", &reader), Err(Error::Unauthorized(_))));
    }
}
