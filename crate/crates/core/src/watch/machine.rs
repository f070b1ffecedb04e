//! HPC machines described as first-class service records.

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::access::{AccessPolicy, DenyReason, Principal, Role};
use crate::document::{Issue, MetadataDocument, ValidationReport};
use crate::error::{Error, Result};
use crate::pid::{ComponentKind, PersistentIdentifier};
use crate::source::{SourceDescriptor, SourceScheme};
use crate::store::{apply_visibility, ComponentRecord, RecordView, Registry};

/// Document property that marks a service record as a machine.
pub const MACHINE_MARKER: &str = "x_machine";
const LIFESPAN_PROP: &str = "x_lifespan_years";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineDescription {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pid: Option<PersistentIdentifier>,
    pub name: String,
    pub architecture: String,
    pub accelerator: String,
    pub scheduler: String,
    /// `YYYY` or `YYYY-MM-DD`.
    pub commissioned: String,
    pub decommission_planned: String,
    pub site: String,
}

fn parse_date(raw: &str) -> Option<NaiveDate> {
    let raw = raw.trim();
    NaiveDate::parse_from_str(raw, "%Y-%m-%d").ok().or_else(|| {
        raw.parse::<i32>()
            .ok()
            .filter(|y| (1900..=9999).contains(y))
            .and_then(|y| NaiveDate::from_ymd_opt(y, 1, 1))
    })
}

impl MachineDescription {
    pub fn check(&self) -> ValidationReport {
        let mut issues = Vec::new();
        for (prop, v) in [
            ("name", &self.name),
            ("architecture", &self.architecture),
            ("scheduler", &self.scheduler),
            ("site", &self.site),
        ] {
            if v.trim().is_empty() {
                issues.push(Issue::error(prop, "must not be empty"));
            }
        }
        let start = parse_date(&self.commissioned);
        let end = parse_date(&self.decommission_planned);
        if start.is_none() {
            issues.push(Issue::error("commissioned", "expected YYYY or YYYY-MM-DD"));
        }
        if end.is_none() {
            issues.push(Issue::error("decommission_planned", "expected YYYY or YYYY-MM-DD"));
        }
        if let (Some(s), Some(e)) = (start, end) {
            if e < s {
                issues.push(Issue::error("decommission_planned", "decommissioning precedes commissioning"));
            }
        }
        ValidationReport::from_issues(self.name.clone(), issues)
    }

    /// Whole years between commissioning and planned decommissioning.
    pub fn lifespan_years(&self) -> Option<i32> {
        let s = parse_date(&self.commissioned)?;
        let e = parse_date(&self.decommission_planned)?;
        let months = (e.year() * 12 + e.month0() as i32) - (s.year() * 12 + s.month0() as i32);
        Some(months / 12)
    }

    fn to_document(&self) -> MetadataDocument {
        let accel = if self.accelerator.trim().is_empty() { "no" } else { self.accelerator.as_str() };
        let description = format!(
            "{} is a {} system with {} accelerators, scheduled by {}, operated at {}. \
             Commissioned {}, decommissioning planned {}.",
            self.name, self.architecture, accel, self.scheduler, self.site, self.commissioned, self.decommission_planned
        );
        let mut keywords: Vec<String> = vec!["machine".into(), "hpc".into()];
        for k in [&self.architecture, &self.accelerator, &self.scheduler, &self.site] {
            let k = k.trim().to_lowercase();
            if !k.is_empty() && !keywords.contains(&k) {
                keywords.push(k);
            }
        }
        let mut doc = MetadataDocument::new()
            .with("name", self.name.as_str())
            .with("description", description)
            .with("kind", ComponentKind::Service.name())
            .with("license", "proprietary")
            .with("authors", json!([{ "name": self.site }]))
            .with("keywords", json!(keywords))
            .with(
                MACHINE_MARKER,
                json!({
                    "architecture": self.architecture,
                    "accelerator": self.accelerator,
                    "scheduler": self.scheduler,
                    "site": self.site,
                    "commissioned": self.commissioned,
                    "decommission_planned": self.decommission_planned,
                }),
            );
        if let Some(years) = self.lifespan_years() {
            doc.set(LIFESPAN_PROP, years);
        }
        doc
    }

    fn from_record(record: &ComponentRecord) -> Option<Self> {
        let m = record.document.get(MACHINE_MARKER)?.as_object()?;
        let field = |k: &str| m.get(k).and_then(|v| v.as_str()).unwrap_or_default().to_string();
        Some(MachineDescription {
            pid: Some(record.pid.clone()),
            name: record.name().to_string(),
            architecture: field("architecture"),
            accelerator: field("accelerator"),
            scheduler: field("scheduler"),
            commissioned: field("commissioned"),
            decommission_planned: field("decommission_planned"),
            site: field("site"),
        })
    }
}

impl Registry {
    /// Register a machine as a public service record in the curator's
    /// first enclave. The description itself is stored as the artifact.
    pub fn register_machine(&self, desc: &MachineDescription, principal: &Principal) -> Result<PersistentIdentifier> {
        if !principal.has_role(Role::Curator) {
            return Err(Error::Unauthorized(DenyReason::InsufficientRole));
        }
        let report = desc.check();
        if !report.valid {
            return Err(Error::InvalidDocument(Box::new(report)));
        }
        let enclave = principal
            .enclaves
            .iter()
            .next()
            .ok_or(Error::Unauthorized(DenyReason::EnclaveMismatch))?
            .clone();
        let body = MachineDescription { pid: None, ..desc.clone() };
        let blob = self.blobs().put(&serde_json::to_vec_pretty(&body).expect("machine serializes"))?;
        let source = SourceDescriptor::new(SourceScheme::File, "machine.json").with_checksum(blob);
        let record = self.register(
            desc.to_document(),
            vec![source],
            AccessPolicy::public(enclave, principal.subject.clone()),
            principal,
        )?;
        Ok(record.pid)
    }

    pub fn list_machines(&self, principal: &Principal) -> Vec<MachineDescription> {
        let now = self.now();
        self.all_records()
            .iter()
            .filter(|r| r.kind == ComponentKind::Service && !r.is_tombstoned())
            .filter(|r| matches!(apply_visibility(r, principal, now), RecordView::Full(_)))
            .filter_map(MachineDescription::from_record)
            .collect()
    }
}
