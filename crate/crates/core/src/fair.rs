//! The twelve-check FAIR rubric and badge levels.
//!
//! Every check is a pure function of the record plus a few facts looked up
//! in the registry ([`AssessContext`]), so reports are deterministic for an
//! unchanged record version.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::access::{authorize, Action, Principal, Target};
use crate::document::{canonicalize_document, is_extension, is_vocabulary_term, REQUIRED};
use crate::error::{Error, Result};
use crate::pid::PersistentIdentifier;
use crate::store::{ComponentRecord, Registry};

pub const MIN_DESCRIPTION_CHARS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CheckId {
    F1,
    F2,
    F3,
    F4,
    A1,
    A2,
    I1,
    I2,
    I3,
    R1,
    #[serde(rename = "R1_1")]
    R1_1,
    #[serde(rename = "R1_2")]
    R1_2,
}

impl CheckId {
    pub const ALL: [CheckId; 12] = [
        CheckId::F1,
        CheckId::F2,
        CheckId::F3,
        CheckId::F4,
        CheckId::A1,
        CheckId::A2,
        CheckId::I1,
        CheckId::I2,
        CheckId::I3,
        CheckId::R1,
        CheckId::R1_1,
        CheckId::R1_2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CheckId::F1 => "F1",
            CheckId::F2 => "F2",
            CheckId::F3 => "F3",
            CheckId::F4 => "F4",
            CheckId::A1 => "A1",
            CheckId::A2 => "A2",
            CheckId::I1 => "I1",
            CheckId::I2 => "I2",
            CheckId::I3 => "I3",
            CheckId::R1 => "R1",
            CheckId::R1_1 => "R1_1",
            CheckId::R1_2 => "R1_2",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            CheckId::F1 => "persistent identifier assigned",
            CheckId::F2 => "rich metadata: every required property present",
            CheckId::F3 => "metadata carries the identifier it describes",
            CheckId::F4 => "registered or indexed in a searchable resource",
            CheckId::A1 => "retrievable through a clear access protocol",
            CheckId::A2 => "metadata stays accessible even if the data have disappeared",
            CheckId::I1 => "machine processable metadata in a canonical form",
            CheckId::I2 => "uses the registry vocabulary or namespaced extensions",
            CheckId::I3 => "qualified references to other registered records",
            CheckId::R1 => "richly described with a substantive description",
            CheckId::R1_1 => "clear data usage license",
            CheckId::R1_2 => "provenance: linked runs or lineage",
        }
    }
}

impl fmt::Display for CheckId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckResult {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FairnessCheck {
    pub id: CheckId,
    pub description: String,
    pub result: CheckResult,
    pub evidence: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Badge {
    None,
    Bronze,
    Silver,
    Gold,
}

impl Badge {
    pub fn as_str(self) -> &'static str {
        match self {
            Badge::None => "none",
            Badge::Bronze => "bronze",
            Badge::Silver => "silver",
            Badge::Gold => "gold",
        }
    }
}

/// none < 6 ≤ bronze ≤ 8 < silver ≤ 11 < gold = 12.
pub fn badge_for_score(score: u32) -> Badge {
    match score {
        12.. => Badge::Gold,
        9..=11 => Badge::Silver,
        6..=8 => Badge::Bronze,
        _ => Badge::None,
    }
}

pub fn badge(report: &FairnessReport) -> Badge {
    badge_for_score(report.score)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub pid: PersistentIdentifier,
    pub version: u32,
    pub checks: Vec<FairnessCheck>,
    pub score: u32,
    pub badge: Badge,
}

impl FairnessReport {
    pub fn check(&self, id: CheckId) -> &FairnessCheck {
        self.checks.iter().find(|c| c.id == id).expect("reports hold every check")
    }
}

/// Registry facts a rubric evaluation needs beyond the record itself.
pub struct AssessContext<'a> {
    /// An exact-name search surfaces the record.
    pub indexed: bool,
    /// Number of retained immutable versions, and whether they verify.
    pub history_len: usize,
    pub history_intact: bool,
    /// Does this reference name a registered record?
    pub resolves: &'a dyn Fn(&str) -> bool,
}

/// Evaluate the rubric. Pure.
pub fn evaluate(record: &ComponentRecord, ctx: &AssessContext<'_>) -> FairnessReport {
    use CheckResult::*;
    let doc = &record.document;
    let mut checks = Vec::with_capacity(12);
    let mut push = |id: CheckId, result: CheckResult, evidence: String| {
        checks.push(FairnessCheck {
            id,
            description: id.description().to_string(),
            result,
            evidence,
        })
    };
    let pass_if = |ok: bool| if ok { Pass } else { Fail };

    push(CheckId::F1, Pass, format!("identifier {} minted at registration", record.pid));

    let missing: Vec<&str> = REQUIRED
        .iter()
        .copied()
        .filter(|p| match doc.get(p) {
            None | Some(serde_json::Value::Null) => true,
            Some(serde_json::Value::String(s)) => s.trim().is_empty(),
            Some(serde_json::Value::Array(a)) => *p == "authors" && a.is_empty(),
            _ => false,
        })
        .collect();
    push(
        CheckId::F2,
        pass_if(missing.is_empty()),
        if missing.is_empty() {
            "all required properties present".into()
        } else {
            format!("missing {}", missing.join(", "))
        },
    );

    let pid = record.pid.to_string();
    let cites_self = doc.iter().any(|(_, v)| v.as_str() == Some(pid.as_str()));
    push(
        CheckId::F3,
        Pass,
        if cites_self {
            format!("document cites {pid}")
        } else {
            format!("published metadata embeds {pid} as its identifier")
        },
    );

    push(
        CheckId::F4,
        pass_if(ctx.indexed),
        if ctx.indexed {
            "exact-name query returns the record".into()
        } else {
            "exact-name query misses the record".into()
        },
    );

    push(
        CheckId::A1,
        pass_if(!record.sources.is_empty()),
        match record.sources.first() {
            Some(s) => format!("{} source(s); first via {}", record.sources.len(), s.scheme),
            None => "no sources".into(),
        },
    );

    push(
        CheckId::A2,
        pass_if(ctx.history_intact && ctx.history_len > 0),
        format!(
            "tombstoning keeps metadata resolvable; {} immutable version(s) retained{}",
            ctx.history_len,
            if ctx.history_intact { "" } else { ", history fails verification" }
        ),
    );

    let canonical = canonicalize_document(doc);
    push(
        CheckId::I1,
        pass_if(canonical.is_ok()),
        match &canonical {
            Ok(bytes) => format!("{} canonical bytes", bytes.len()),
            Err(e) => e.to_string(),
        },
    );

    let unknown: Vec<&str> = doc
        .iter()
        .map(|(k, _)| k.as_str())
        .filter(|k| !is_vocabulary_term(k) && !is_extension(k))
        .collect();
    push(
        CheckId::I2,
        pass_if(unknown.is_empty()),
        if unknown.is_empty() {
            "vocabulary terms and x_ extensions only".into()
        } else {
            format!("unknown properties: {}", unknown.join(", "))
        },
    );

    let refs: Vec<String> = doc.derived_from().into_iter().chain(doc.target_machine()).collect();
    let (resolved, unresolved): (Vec<&String>, Vec<&String>) = refs.iter().partition(|r| (ctx.resolves)(r));
    push(
        CheckId::I3,
        if refs.is_empty() {
            NotApplicable
        } else {
            pass_if(!resolved.is_empty())
        },
        if refs.is_empty() {
            "no derived_from or target_machine references".into()
        } else if unresolved.is_empty() {
            format!("{} reference(s) resolve", resolved.len())
        } else {
            format!(
                "{} reference(s) resolve; unresolved: {}",
                resolved.len(),
                unresolved.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
            )
        },
    );

    let desc_len = doc.description().map_or(0, |d| d.trim().chars().count());
    push(
        CheckId::R1,
        pass_if(desc_len >= MIN_DESCRIPTION_CHARS),
        format!("description has {desc_len} characters (minimum {MIN_DESCRIPTION_CHARS})"),
    );

    let license = doc.license().map(str::trim).filter(|l| !l.is_empty());
    push(
        CheckId::R1_1,
        pass_if(license.is_some()),
        match license {
            Some(l) => format!("license {l}"),
            None => "no license".into(),
        },
    );

    let lineage = doc.derived_from().len();
    push(
        CheckId::R1_2,
        pass_if(record.usage.count > 0 || lineage > 0),
        format!("{} linked run(s), {} derived_from link(s)", record.usage.count, lineage),
    );

    let score = checks.iter().filter(|c| c.result == Pass).count() as u32;
    FairnessReport {
        pid: record.pid.clone(),
        version: record.version,
        checks,
        score,
        badge: badge_for_score(score),
    }
}

impl Registry {
    /// Assess a record visible to `principal` and store the report on it.
    pub fn assess(&self, pid: &PersistentIdentifier, principal: &Principal) -> Result<FairnessReport> {
        let record = self.raw(pid).ok_or_else(|| Error::not_found(pid))?;
        let decision = authorize(principal, Action::Assess, Target::Record(&record.policy), self.now());
        if !decision.is_allow() {
            // a record the caller may not even list is reported as unknown
            return match self.resolve(pid, principal) {
                Err(e) => Err(e),
                Ok(_) => Err(Error::Unauthorized(crate::access::DenyReason::EnclaveMismatch)),
            };
        }
        let report = self.evaluate_stored(&record);
        let stored = report.clone();
        self.mutate(pid, |rec| {
            rec.fairness = Some(stored);
            Ok(((), false))
        })?;
        Ok(report)
    }

    pub(crate) fn evaluate_stored(&self, record: &ComponentRecord) -> FairnessReport {
        let versions = self.versions_raw(&record.pid);
        let intact = versions
            .iter()
            .enumerate()
            .all(|(i, v)| v.version as usize == i + 1 && v.compute_checksum() == v.checksum);
        let resolves = |r: &str| r.parse::<PersistentIdentifier>().is_ok_and(|p| self.contains(&p));
        evaluate(
            record,
            &AssessContext {
                indexed: self.name_query_finds(record),
                history_len: versions.len(),
                history_intact: intact,
                resolves: &resolves,
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use proptest::prelude::*;
    use serde_json::json;

    use super::*;
    use crate::access::{AccessPolicy, Role, Visibility};
    use crate::clock::{ManualClock, Timestamp};
    use crate::document::fixtures::complete_doc;
    use crate::source::{SourceDescriptor, SourceScheme};
    use crate::store::RegistryConfig;

    fn setup() -> (Registry, Principal) {
        let reg = Registry::in_memory(RegistryConfig::new("olcf"), Arc::new(ManualClock::new(Timestamp::from_unix(0))));
        (reg, Principal::new("u", "U", Role::Contributor, ["e"]))
    }

    fn git() -> Vec<SourceDescriptor> {
        vec![SourceDescriptor::new(SourceScheme::Git, "https://x/y.git")]
    }

    #[test]
    fn thresholds() {
        assert_eq!(badge_for_score(12), Badge::Gold);
        assert_eq!(badge_for_score(11), Badge::Silver);
        assert_eq!(badge_for_score(9), Badge::Silver);
        assert_eq!(badge_for_score(8), Badge::Bronze);
        assert_eq!(badge_for_score(6), Badge::Bronze);
        assert_eq!(badge_for_score(5), Badge::None);
        assert_eq!(badge_for_score(0), Badge::None);
    }

    #[test]
    fn maximal_record_is_gold() {
        let (reg, p) = setup();
        let parent = reg.register(complete_doc("parent"), git(), AccessPolicy::public("e", "u"), &p).unwrap();
        let doc = complete_doc("child").with("derived_from", json!([parent.pid.to_string()]));
        let child = reg.register(doc, git(), AccessPolicy::public("e", "u"), &p).unwrap();
        let line = format!(
            r#"{{"run_id":"r","event":"start","timestamp":"1970-01-01T00:00:01Z","components":["{}"]}}"#,
            child.pid
        );
        reg.ingest_provenance(&line, &p).unwrap();
        let report = reg.assess(&child.pid, &p).unwrap();
        assert_eq!(report.score, 12, "{report:#?}");
        assert_eq!(report.badge, Badge::Gold);
        assert_eq!(report.check(CheckId::I3).evidence, "1 reference(s) resolve");
        assert_eq!(report.check(CheckId::R1_2).evidence, "1 linked run(s), 1 derived_from link(s)");
        assert_eq!(reg.raw(&child.pid).unwrap().fairness, Some(report));
    }

    #[test]
    fn fresh_minimal_record() {
        let (reg, p) = setup();
        let r = reg.register(complete_doc("fresh"), git(), AccessPolicy::public("e", "u"), &p).unwrap();
        let report = reg.assess(&r.pid, &p).unwrap();
        for id in [CheckId::F1, CheckId::F2, CheckId::F3, CheckId::F4] {
            assert_eq!(report.check(id).result, CheckResult::Pass, "{id}");
        }
        assert_eq!(report.check(CheckId::R1_2).result, CheckResult::Fail);
        assert_eq!(report.check(CheckId::I3).result, CheckResult::NotApplicable);
        assert!(report.score >= 4);
        assert_eq!(reg.assess(&r.pid, &p).unwrap(), report);
    }

    #[test]
    fn missing_license_and_provenance() {
        let (reg, p) = setup();
        let mut r = reg.register(complete_doc("bare"), git(), AccessPolicy::public("e", "u"), &p).unwrap();
        r.document.remove("license");
        let report = reg.evaluate_stored(&r);
        assert_eq!(report.check(CheckId::R1_1).result, CheckResult::Fail);
        assert_eq!(report.check(CheckId::R1_2).result, CheckResult::Fail);
        assert!(report.score <= 10);
        let ids: Vec<CheckId> = report.checks.iter().map(|c| c.id).collect();
        assert_eq!(ids, CheckId::ALL);
    }

    #[test]
    fn visibility_gates_assessment() {
        let (reg, p) = setup();
        let owner = Principal::new("o", "O", Role::Contributor, ["secret"]);
        let listed = reg
            .register(complete_doc("l"), git(), AccessPolicy::new("secret", Visibility::Listed, "o"), &owner)
            .unwrap();
        let hidden = reg
            .register(complete_doc("h"), git(), AccessPolicy::new("secret", Visibility::Hidden, "o"), &owner)
            .unwrap();
        assert!(matches!(reg.assess(&listed.pid, &p), Err(Error::Unauthorized(_))));
        assert!(matches!(reg.assess(&hidden.pid, &p), Err(Error::NotFound(_))));
    }

    proptest! {
        #[test]
        fn enrichment_never_lowers_score(
            desc_len in 0usize..120,
            keywords in 0usize..3,
            with_license in any::<bool>(),
            runs in 0u64..2,
            derived in 0usize..2,
            enrich in 0usize..4,
        ) {
            let (reg, p) = setup();
            let target = reg.register(complete_doc("target"), git(), AccessPolicy::public("e", "u"), &p).unwrap();
            let mut rec = reg.register(complete_doc("subject"), git(), AccessPolicy::public("e", "u"), &p).unwrap();
            rec.document.set("description", "d".repeat(desc_len.max(1)));
            rec.document.set("keywords", json!((0..keywords).map(|i| format!("k{i}")).collect::<Vec<_>>()));
            if !with_license {
                rec.document.remove("license");
            }
            rec.usage.count = runs;
            if derived > 0 {
                rec.document.set("derived_from", json!(["olcf:wf-09999999"]));
            }
            let before = reg.evaluate_stored(&rec).score;
            match enrich {
                0 => rec.document.set("license", "MIT"),
                1 => {
                    let mut kws = rec.document.keywords();
                    kws.push("extra".into());
                    rec.document.set("keywords", json!(kws));
                }
                2 => rec.sources.push(SourceDescriptor::new(SourceScheme::Https, "https://mirror/y")),
                _ => {
                    let mut links = rec.document.derived_from();
                    links.push(target.pid.to_string());
                    rec.document.set("derived_from", json!(links));
                }
            }
            let after = reg.evaluate_stored(&rec).score;
            prop_assert!(after >= before, "{before} -> {after}");
        }
    }
}
