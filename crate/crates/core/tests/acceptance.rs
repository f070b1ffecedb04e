//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Everything runs in process against in-memory registries.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write as _;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde_json::json;

use componenthub_core::access::token::HmacTokenAuthority;
use componenthub_core::access::{authenticate, authorize, Action, Decision, DenyReason, Target, TokenVerifier};
use componenthub_core::fair::{evaluate, AssessContext, Badge};
use componenthub_core::federation::{InProcessRemote, RemoteRegistry, Resolution, ToolQuery, Trust};
use componenthub_core::rocrate::{
    id_ref, read_zip, validate_crate, write_zip, Attachment, Entity, WorkflowCrate, ZipLimits, METADATA_FILE,
    RO_CRATE_SPEC, ROOT_ID, WORKFLOW_PROFILE, WORKFLOW_PROFILE_URI, WORKFLOW_TYPE,
};
use componenthub_core::store::{Facet, RecordPatch, RecordView};
use componenthub_core::watch::StaticFetcher;
use componenthub_core::workflow::{extract_abstract_workflow, WorkflowError};
use componenthub_core::{
    canonicalize_document, AccessPolicy, Checksum, Clock, ComponentKind, ComponentRecord, Error, ManualClock,
    MetadataDocument, PersistentIdentifier, Principal, RecordStatus, Registry, RegistryConfig, Role, SearchQuery,
    SourceDescriptor, SourceScheme, Timestamp, Visibility,
};

const SEED: u64 = 0x5eed_c0de;
const T0: i64 = 1_750_000_000;

const PID_MINTS: usize = 10_000;
const PID_BUDGET: Duration = Duration::from_secs(10);
const TOMBSTONED_RECORDS: usize = 50;
const SEARCH_RECORDS: usize = 200;
const ROUND_TRIP_CRATES: usize = 12;
const ROUND_TRIP_BUDGET: Duration = Duration::from_secs(60);
const FEDERATION_MAX_PER_SIDE: usize = 20;
const FEDERATION_QUIESCENT_ROUNDS: usize = 2;
const ORACLE_RECORDS: usize = 10;
const DRIFT_QUIET_POLLS: usize = 100;
const FAIR_RECORDS: usize = 100;
const FAIR_MIN_REGISTERED_SCORE: u32 = 4;
const FAIR_MAX_SCORE: u32 = 12;
const DAG_MAX_STEPS: usize = 4;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn main() {
    let logs = capture_logs();
    let criteria: [Criterion; 10] = [
        ("pid-integrity", pid_integrity),
        ("tombstone-resolvable", tombstone_resolvable),
        ("findable-by-search", findable_by_search),
        ("crate-round-trip", crate_round_trip),
        ("federation-convergence", federation_convergence),
        ("enclave-authorization", enclave_authorization),
        ("embargo-clock", embargo_clock),
        ("drift-detection", drift_detection),
        ("fair-monotonicity", fair_monotonicity),
        ("abstract-extraction", abstract_extraction),
    ];
    let mut failed = 0;
    let mut n = 0;
    for (name, run) in criteria {
        n += 1;
        failed += report(n, name, run());
    }
    // last, so the log buffer holds everything the other runs emitted
    n += 1;
    failed += report(n, "credential-separation", credential_separation(&logs));
    println!("{} of {n} criteria passed", n - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn report(n: usize, name: &str, outcome: Outcome) -> usize {
    let mut out = std::io::stdout().lock();
    match outcome {
        Ok(detail) => {
            let _ = writeln!(out, "PASS  {n:>2} {name:<24} {detail}");
            0
        }
        Err(why) => {
            let _ = writeln!(out, "FAIL  {n:>2} {name:<24} {why}");
            1
        }
    }
}

// ------------------------------------------------------------------ fixtures

#[derive(Clone, Default)]
struct LogBuffer(Arc<Mutex<Vec<u8>>>);

impl std::io::Write for LogBuffer {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

fn capture_logs() -> LogBuffer {
    let buf = LogBuffer::default();
    let writer = buf.clone();
    let subscriber = tracing_subscriber::fmt()
        .with_max_level(tracing::Level::TRACE)
        .with_ansi(false)
        .with_writer(move || writer.clone())
        .finish();
    tracing::subscriber::set_global_default(subscriber).expect("no other subscriber installed");
    buf
}

fn clock() -> Arc<ManualClock> {
    Arc::new(ManualClock::new(Timestamp::from_unix(T0)))
}

fn registry(ns: &str, clock: &Arc<ManualClock>) -> Registry {
    Registry::in_memory(RegistryConfig::new(ns), clock.clone())
}

fn contributor(subject: &str, enclaves: &[&str]) -> Principal {
    Principal::new(subject, subject, Role::Contributor, enclaves.iter().copied())
}

fn curator(subject: &str, enclaves: &[&str]) -> Principal {
    Principal::new(subject, subject, Role::Curator, enclaves.iter().copied())
}

const WORDS: [&str; 16] = [
    "genomics", "climate", "lattice", "plasma", "fusion", "ensemble", "mesh", "solver", "imaging", "neutron",
    "proteins", "turbulence", "cosmology", "seismic", "materials", "inference",
];

fn document(name: &str, kind: ComponentKind, keywords: &[String]) -> MetadataDocument {
    MetadataDocument::new()
        .with("name", name)
        .with(
            "description",
            format!("{name} is a component exercised by the acceptance run for registry behaviour."),
        )
        .with("kind", kind.name())
        .with("license", "Apache-2.0")
        .with("authors", json!([{"name": "Grace Hopper"}]))
        .with("keywords", json!(keywords))
}

fn git_source(tag: &str) -> SourceDescriptor {
    SourceDescriptor::new(SourceScheme::Git, format!("https://git.example.org/{tag}.git")).with_ref("v1.0")
}

fn random_keywords(rng: &mut StdRng) -> Vec<String> {
    let n = rng.gen_range(1..=3);
    WORDS.choose_multiple(rng, n).map(|w| w.to_string()).collect()
}

fn canonical(doc: &MetadataDocument) -> Vec<u8> {
    canonicalize_document(doc).expect("stored documents canonicalize")
}

/// Independent check of `<ns>:<tag>-<8 digits>`.
fn pid_grammar_ok(raw: &str) -> bool {
    let Some((ns, rest)) = raw.split_once(':') else {
        return false;
    };
    let Some((tag, serial)) = rest.split_once('-') else {
        return false;
    };
    let ns_ok = (1..=16).contains(&ns.len())
        && ns.starts_with(|c: char| c.is_ascii_lowercase())
        && ns.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit());
    let tags = ["wf", "cd", "ct", "ds", "ml", "sv"];
    ns_ok && tags.contains(&tag) && serial.len() == 8 && serial.chars().all(|c| c.is_ascii_digit()) && serial != "00000000"
}

// ----------------------------------------------------------------- criteria

fn pid_integrity() -> Outcome {
    let clock = clock();
    let reg = registry("olcf", &clock);
    let mut rng = StdRng::seed_from_u64(SEED);
    let started = Instant::now();
    let mut seen = BTreeSet::new();
    let mut last: HashMap<ComponentKind, u32> = HashMap::new();
    for i in 0..PID_MINTS {
        let kind = *ComponentKind::ALL.choose(&mut rng).unwrap();
        let pid = reg.mint_pid("olcf", kind).map_err(|e| format!("mint {i} failed: {e}"))?;
        let raw = pid.to_string();
        ensure!(pid_grammar_ok(&raw), "{raw} breaks the identifier grammar");
        ensure!(raw.starts_with(&format!("olcf:{}-", kind.tag())), "{raw} carries the wrong kind tag");
        ensure!(seen.insert(raw.clone()), "{raw} minted twice");
        let serial = pid.serial();
        if let Some(prev) = last.insert(kind, serial) {
            ensure!(serial > prev, "{raw} does not increase on {prev}");
        }
        let parsed: PersistentIdentifier = raw.parse().map_err(|e| format!("{raw} does not parse back: {e}"))?;
        ensure!(parsed == pid, "{raw} round-trips to {parsed}");
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < PID_BUDGET, "{PID_MINTS} mints took {elapsed:?}");
    match reg.mint_pid("nersc", ComponentKind::Workflow) {
        Err(Error::NamespaceMismatch { .. }) => {}
        other => return Err(format!("foreign namespace mint answered {other:?}")),
    }
    Ok(format!("{PID_MINTS} unique, monotone per kind, {elapsed:.2?}"))
}

fn tombstone_resolvable() -> Outcome {
    let clock = clock();
    let reg = registry("olcf", &clock);
    let owner = contributor("owner", &["lab"]);
    let mut rng = StdRng::seed_from_u64(SEED ^ 2);
    let mut finals = Vec::new();
    for i in 0..TOMBSTONED_RECORDS {
        let kind = *ComponentKind::ALL.choose(&mut rng).unwrap();
        let krate = synthetic_crate(&mut rng, &format!("retired-{i}"));
        let record = if i % 2 == 0 {
            reg.register(document(&format!("retired-{i}"), kind, &random_keywords(&mut rng)), vec![git_source(&i.to_string())], AccessPolicy::public("lab", "owner"), &owner)
                .map_err(|e| e.to_string())?
        } else {
            reg.import_crate(&krate, AccessPolicy::public("lab", "owner"), &owner).map_err(|e| e.to_string())?.record
        };
        let mut final_doc = record.document.clone();
        for round in 0..rng.gen_range(0..3) {
            clock.advance(1);
            let patch = MetadataDocument::new().with("keywords", json!([format!("revision{round}")]));
            final_doc = reg
                .update(&record.pid, RecordPatch { document: Some(patch), sources: None }, &owner)
                .map_err(|e| e.to_string())?
                .document;
        }
        let final_version = reg.raw(&record.pid).unwrap().version;
        reg.tombstone(&record.pid, "superseded", &owner).map_err(|e| e.to_string())?;
        finals.push((record, final_doc, final_version));
    }
    let anonymous = Principal::anonymous();
    for (record, final_doc, final_version) in &finals {
        let pid = &record.pid;
        let view = reg.resolve(pid, &anonymous).map_err(|e| format!("{pid} stopped resolving: {e}"))?;
        let full = view.full().ok_or_else(|| format!("{pid} resolves to a redacted view"))?;
        ensure!(full.status == RecordStatus::Tombstoned, "{pid} is {:?}", full.status);
        ensure!(canonical(&full.document) == canonical(final_doc), "{pid} lost its final document");
        let note = full.tombstone.as_ref().ok_or_else(|| format!("{pid} has no tombstone note"))?;
        ensure!(note.pid == *pid && note.final_version == *final_version, "{pid} has a wrong note {note:?}");
        match reg.download_crate(pid, &anonymous, None) {
            Err(Error::Gone { metadata: Some(krate), .. }) => {
                ensure!(krate.attachments.is_empty(), "{pid} tombstone crate still carries payload");
            }
            other => return Err(format!("{pid} crate download answered {:?}", other.map(|b| b.len()))),
        }
        for source in &record.sources {
            match reg.fetch_artifact(pid, &source.locator, &anonymous) {
                Err(Error::Gone { .. }) => {}
                other => return Err(format!("{pid} artifact {} answered {:?}", source.locator, other.map(|b| b.len()))),
            }
        }
    }
    Ok(format!("{TOMBSTONED_RECORDS} tombstoned: metadata resolves, payload gone"))
}

fn findable_by_search() -> Outcome {
    let clock = clock();
    let reg = registry("olcf", &clock);
    let owner = contributor("owner", &["lab"]);
    let mut rng = StdRng::seed_from_u64(SEED ^ 3);
    let mut records = Vec::new();
    for i in 0..SEARCH_RECORDS {
        let kind = *ComponentKind::ALL.choose(&mut rng).unwrap();
        let name = format!("{}-{}-{i}", WORDS.choose(&mut rng).unwrap(), WORDS.choose(&mut rng).unwrap());
        let keywords = random_keywords(&mut rng);
        let record = reg
            .register(document(&name, kind, &keywords), vec![git_source(&name)], AccessPolicy::public("lab", "owner"), &owner)
            .map_err(|e| e.to_string())?;
        records.push(record);
    }
    let anonymous = Principal::anonymous();
    let finds = |query: SearchQuery, pid: &PersistentIdentifier| -> Result<bool, String> {
        let mut offset = 0;
        loop {
            let page = reg.search(&query.clone().page(offset, 100), &anonymous).map_err(|e| e.to_string())?;
            if page.items.iter().any(|v| v.pid() == Some(pid)) {
                return Ok(true);
            }
            match page.next_offset {
                Some(next) => offset = next,
                None => return Ok(false),
            }
        }
    };
    let mut by_route = [0usize; 3];
    for r in &records {
        let kw = r.document.keywords().choose(&mut rng).cloned().unwrap();
        let routes = [
            SearchQuery::text(r.name()),
            SearchQuery::facet(Facet::Keyword, kw),
            SearchQuery::text(r.name()).and_facet(Facet::Kind, r.kind.name()),
        ];
        for (i, q) in routes.into_iter().enumerate() {
            ensure!(finds(q.clone(), &r.pid)?, "{} not found by {q:?}", r.pid);
            by_route[i] += 1;
        }
    }
    Ok(format!(
        "{SEARCH_RECORDS} public records found by name ({}), keyword ({}), kind+name ({})",
        by_route[0], by_route[1], by_route[2]
    ))
}

fn synthetic_crate(rng: &mut StdRng, name: &str) -> WorkflowCrate {
    let authors: Vec<String> = (0..rng.gen_range(1..=3))
        .map(|i| format!("https://orcid.org/0000-0002-{:04}-{:04}", rng.gen_range(1000..9999), i))
        .collect();
    let keywords = random_keywords(rng).join(", ");
    let mut files: Vec<String> = vec!["main.cwl".into()];
    for i in 1..rng.gen_range(1..=5) {
        files.push(format!("data/part-{i}.txt"));
    }
    let mut root = Entity::new(ROOT_ID, &["Dataset"])
        .with("name", json!(name))
        .with("description", json!(format!("{name} crate assembled for the round-trip run with random parts.")))
        .with("license", id_ref("https://spdx.org/licenses/MIT"))
        .with("author", json!(authors.iter().map(|a| json!({"@id": a})).collect::<Vec<_>>()))
        .with("keywords", json!(keywords))
        .with("mainEntity", id_ref("main.cwl"))
        .with("hasPart", json!(files.iter().map(|f| json!({"@id": f})).collect::<Vec<_>>()))
        .with("conformsTo", id_ref(WORKFLOW_PROFILE_URI));
    if rng.gen_bool(0.5) {
        root = root.with("version", json!(format!("1.{}", rng.gen_range(0..9))));
    }
    let mut entities = vec![
        Entity::new(METADATA_FILE, &["CreativeWork"])
            .with("about", id_ref(ROOT_ID))
            .with("conformsTo", id_ref(RO_CRATE_SPEC)),
        root,
        Entity::new("main.cwl", &["File", "SoftwareSourceCode", WORKFLOW_TYPE]).with("name", json!("main")),
        Entity::new("https://spdx.org/licenses/MIT", &["CreativeWork"]).with("identifier", json!("MIT")),
    ];
    for (i, a) in authors.iter().enumerate() {
        entities.push(Entity::new(a.as_str(), &["Person"]).with("name", json!(format!("Author {i} of {name}"))));
    }
    let mut attachments = BTreeMap::new();
    attachments.insert(
        "main.cwl".to_string(),
        Attachment::inline(format!(
            "class: Workflow\nlabel: {name}\ninputs: {{}}\noutputs: {{}}\nsteps:\n  align:\n    run: align.cwl\n    in: {{}}\n    out: [bam]\n"
        )),
    );
    for f in &files[1..] {
        entities.push(Entity::new(f.as_str(), &["File"]).with("name", json!(f)));
        let len = rng.gen_range(1..4096);
        let bytes: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
        attachments.insert(f.clone(), Attachment::inline(bytes));
    }
    WorkflowCrate {
        entities,
        attachments,
        profile: WORKFLOW_PROFILE.into(),
    }
}

fn source_sums(r: &ComponentRecord) -> BTreeMap<String, Option<Checksum>> {
    r.sources.iter().map(|s| (s.locator.clone(), s.checksum)).collect()
}

fn crate_round_trip() -> Outcome {
    let clock = clock();
    let reg = registry("olcf", &clock);
    let owner = contributor("owner", &["lab"]);
    let mut rng = StdRng::seed_from_u64(SEED ^ 4);
    let started = Instant::now();
    for i in 0..ROUND_TRIP_CRATES {
        let krate = synthetic_crate(&mut rng, &format!("trip-{i}"));
        let bytes = write_zip(&krate).map_err(|e| e.to_string())?;
        let input = read_zip(&bytes, ZipLimits::default()).map_err(|e| e.to_string())?;
        let first = reg.import_crate(&input, AccessPolicy::public("lab", "owner"), &owner).map_err(|e| e.to_string())?.record;
        let exported = reg.export_crate(&first.pid, &owner, None).map_err(|e| e.to_string())?;
        let report = validate_crate(&exported);
        ensure!(report.valid, "export of {} fails validation: {:?}", first.pid, report.issues);
        let zipped = reg.download_crate(&first.pid, &owner, None).map_err(|e| e.to_string())?;
        let reread = read_zip(&zipped, ZipLimits::default()).map_err(|e| e.to_string())?;
        let second = reg.import_crate(&reread, AccessPolicy::public("lab", "owner"), &owner).map_err(|e| e.to_string())?.record;
        ensure!(canonical(&first.document) == canonical(&second.document), "{} document changed across the trip", first.pid);
        ensure!(source_sums(&first) == source_sums(&second), "{} source checksums changed across the trip", first.pid);
        ensure!(
            first.sources.len() == krate.attachments.len(),
            "{} has {} sources for {} attachments",
            first.pid,
            first.sources.len(),
            krate.attachments.len()
        );
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < ROUND_TRIP_BUDGET, "{ROUND_TRIP_CRATES} round trips took {elapsed:?}");
    Ok(format!("{ROUND_TRIP_CRATES} crates identical after import-export-import, {elapsed:.2?}"))
}

struct Site {
    reg: Arc<Registry>,
    remote: InProcessRemote,
    user: Principal,
    curator: Principal,
}

fn site(ns: &str, clock: &Arc<ManualClock>) -> Site {
    let reg = Arc::new(registry(ns, clock));
    Site {
        remote: InProcessRemote::new(reg.clone()),
        reg,
        user: contributor(&format!("{ns}-user"), &["lab", "federation"]),
        curator: curator(&format!("{ns}-curator"), &["lab", "federation"]),
    }
}

fn remote_for(s: &Site) -> RemoteRegistry {
    let ns = s.reg.namespace().to_string();
    let mut r = RemoteRegistry::new(format!("{ns}hub"), format!("http://{ns}.test"), ns);
    r.trust = Trust::Bidirectional;
    r
}

fn pull(into: &Site, from: &Site) -> Result<(u64, u64), String> {
    let report = into.reg.sync_pull(&remote_for(from), &from.remote, &into.curator).map_err(|e| e.to_string())?;
    Ok((report.created, report.updated))
}

fn public_set(s: &Site) -> BTreeMap<String, Vec<u8>> {
    s.reg
        .all_records()
        .into_iter()
        .filter(|r| r.policy.visibility == Visibility::Public)
        .map(|r| {
            let mut key = canonical(&r.document);
            key.extend_from_slice(format!("|{:?}", r.status).as_bytes());
            (r.pid.to_string(), key)
        })
        .collect()
}

fn federation_convergence() -> Outcome {
    let mut rng = StdRng::seed_from_u64(SEED ^ 5);
    let mut trials = 0;
    for trial in 0..5 {
        let clock = clock();
        let a = site("aaa", &clock);
        let b = site("bbb", &clock);
        for s in [&a, &b] {
            for i in 0..rng.gen_range(0..=FEDERATION_MAX_PER_SIDE) {
                let kind = *ComponentKind::ALL.choose(&mut rng).unwrap();
                let vis = *[Visibility::Public, Visibility::Public, Visibility::Listed, Visibility::Hidden].choose(&mut rng).unwrap();
                let name = format!("{}-t{trial}-{i}", s.reg.namespace());
                let r = s
                    .reg
                    .register(document(&name, kind, &random_keywords(&mut rng)), vec![git_source(&name)], AccessPolicy::new("lab", vis, s.user.subject.clone()), &s.user)
                    .map_err(|e| e.to_string())?;
                if rng.gen_bool(0.15) {
                    s.reg.tombstone(&r.pid, "retired", &s.user).map_err(|e| e.to_string())?;
                }
                if rng.gen_bool(0.3) {
                    clock.advance(1);
                }
            }
        }
        for _ in 0..FEDERATION_QUIESCENT_ROUNDS {
            pull(&a, &b)?;
            pull(&b, &a)?;
            clock.advance(1);
        }
        let (sa, sb) = (public_set(&a), public_set(&b));
        if sa != sb {
            let diff: Vec<&String> = sa.keys().chain(sb.keys()).filter(|k| sa.get(*k) != sb.get(*k)).collect();
            return Err(format!("trial {trial}: public sets differ on {diff:?}"));
        }
        let third = [pull(&a, &b)?, pull(&b, &a)?];
        ensure!(third == [(0, 0), (0, 0)], "trial {trial}: third round still moved records {third:?}");
        trials += 1;
    }

    let first = conflict_fixture()?;
    let second = conflict_fixture()?;
    ensure!(first == second, "conflict resolution differs between identical runs");
    Ok(format!("{trials} random pairs converge in {FEDERATION_QUIESCENT_ROUNDS} rounds; conflict forks deterministically"))
}

/// Both sides edit the same mirrored record; the origin must win and the
/// losing edit must survive as a fork. Returns what a rerun must reproduce.
fn conflict_fixture() -> Result<(Resolution, Vec<u8>, Checksum), String> {
    let clock = clock();
    let a = site("aaa", &clock);
    let b = site("bbb", &clock);
    let pid = a
        .reg
        .register(document("shared-solver", ComponentKind::Code, &["solver".into()]), vec![git_source("shared")], AccessPolicy::public("lab", "aaa-user"), &a.user)
        .map_err(|e| e.to_string())?
        .pid;
    pull(&b, &a)?;
    clock.advance(5);
    let edit = |s: &Site, kw: &str| {
        let patch = MetadataDocument::new().with("keywords", json!([kw]));
        s.reg.update(&pid, RecordPatch { document: Some(patch), sources: None }, &s.user).map_err(|e| e.to_string())
    };
    edit(&b, "mirror-edit")?;
    edit(&a, "origin-edit")?;
    clock.advance(5);
    let report = b.reg.sync_pull(&remote_for(&a), &a.remote, &b.curator).map_err(|e| e.to_string())?;
    let conflict = report.conflicts.first().ok_or("no conflict reported")?;
    let local = b.reg.raw(&pid).unwrap();
    let origin = a.reg.raw(&pid).unwrap();
    ensure!(local.content_digest() == origin.content_digest(), "origin content did not win");
    let fork_pid = conflict.fork.as_ref().ok_or("losing edit was not forked")?;
    let fork = b.reg.raw(fork_pid).ok_or("fork record missing")?;
    ensure!(fork.pid.namespace() == "bbb", "fork {} minted outside the local namespace", fork.pid);
    ensure!(fork.document.keywords() == vec!["mirror-edit"], "fork lost the local edit");
    ensure!(fork.document.derived_from().contains(&pid.to_string()), "fork does not cite its origin");
    Ok((conflict.resolution, canonical(&fork.document), local.content_digest()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Expect {
    Allow,
    Stub,
    Deny(DenyReason),
}

/// Rule table written out by hand, independent of the authorizer.
fn oracle(p: &Principal, action: Action, policy: &AccessPolicy, now: Timestamp) -> Expect {
    let member = p.enclaves.contains(&policy.enclave);
    let owner = policy.owners.contains(&p.subject);
    let rank = |r: Role| match r {
        Role::Reader => 0,
        Role::Contributor => 1,
        Role::Curator => 2,
        Role::Admin => 3,
    };
    let role = p.roles().iter().map(|r| rank(*r)).max().unwrap_or(0);
    let embargoed = policy.embargo_until.is_some_and(|t| now < t);
    let visibility = match (policy.visibility, embargoed) {
        (Visibility::Public, true) => Visibility::Listed,
        (v, _) => v,
    };
    let gate = |min: usize| -> Option<Expect> {
        if role < min {
            Some(Expect::Deny(DenyReason::InsufficientRole))
        } else if !member {
            Some(Expect::Deny(DenyReason::EnclaveMismatch))
        } else {
            None
        }
    };
    match action {
        Action::Read | Action::Assess => {
            if owner || member || visibility == Visibility::Public {
                Expect::Allow
            } else if visibility == Visibility::Listed && action == Action::Read {
                Expect::Stub
            } else {
                Expect::Deny(DenyReason::EnclaveMismatch)
            }
        }
        Action::Register => gate(1).unwrap_or(Expect::Allow),
        Action::Update => gate(1).unwrap_or(if owner || role >= rank(policy.write_roles) {
            Expect::Allow
        } else {
            Expect::Deny(DenyReason::InsufficientRole)
        }),
        Action::Tombstone => gate(1).unwrap_or(if owner || role >= 2 {
            Expect::Allow
        } else {
            Expect::Deny(DenyReason::NotOwner)
        }),
        Action::Sync => gate(2).unwrap_or(Expect::Allow),
    }
}

fn enclave_authorization() -> Outcome {
    let mut rng = StdRng::seed_from_u64(SEED ^ 6);
    let now = Timestamp::from_unix(T0);
    let principals = [
        Principal::anonymous(),
        Principal::new("rita", "Rita", Role::Reader, ["alpha"]),
        contributor("carl", &["alpha"]),
        curator("cora", &["beta"]),
        Principal::new("adam", "Adam", Role::Admin, ["alpha", "beta"]),
    ];
    let subjects = ["rita", "carl", "cora", "adam", "olga"];
    let mut decisions = 0;
    let mut cross_allows = 0;
    for _ in 0..ORACLE_RECORDS {
        let enclave = *["alpha", "beta", "gamma"].choose(&mut rng).unwrap();
        let vis = *[Visibility::Public, Visibility::Listed, Visibility::Hidden].choose(&mut rng).unwrap();
        let mut policy = AccessPolicy::new(enclave, vis, *subjects.choose(&mut rng).unwrap());
        if rng.gen_bool(0.3) {
            policy.owners.insert(subjects.choose(&mut rng).unwrap().to_string());
        }
        policy.write_roles = *[Role::Contributor, Role::Curator, Role::Admin].choose(&mut rng).unwrap();
        if rng.gen_bool(0.3) {
            policy.embargo_until = Some(now.plus_secs(rng.gen_range(-100..100)));
        }
        for p in &principals {
            for action in Action::ALL {
                let got = match authorize(p, action, Target::Record(&policy), now) {
                    Decision::Allow => Expect::Allow,
                    Decision::AllowStub => Expect::Stub,
                    Decision::Deny(r) => Expect::Deny(r),
                };
                let want = oracle(p, action, &policy, now);
                ensure!(got == want, "{} {action:?} on {policy:?}: got {got:?}, oracle {want:?}", p.subject);
                let member = p.member_of(&policy.enclave);
                let open_read = matches!(action, Action::Read | Action::Assess)
                    && (policy.is_owner(&p.subject) || policy.effective_visibility(now) == Visibility::Public);
                if got == Expect::Allow && !member && !open_read {
                    cross_allows += 1;
                }
                decisions += 1;
            }
        }
    }
    ensure!(cross_allows == 0, "{cross_allows} cross-enclave allows");
    Ok(format!("{decisions} decisions match the rule table, 0 cross-enclave allows"))
}

fn embargo_clock() -> Outcome {
    let clock = clock();
    let reg = registry("olcf", &clock);
    let owner = contributor("owner", &["lab"]);
    let outsiders = [Principal::anonymous(), contributor("other", &["elsewhere"])];
    let until = Timestamp::from_unix(T0 + 3_600);
    let mut checked = 0;
    for vis in [Visibility::Public, Visibility::Listed, Visibility::Hidden] {
        let name = format!("embargoed-{}", vis.as_str());
        let pid = reg
            .register(document(&name, ComponentKind::Dataset, &["imaging".into()]), vec![git_source(&name)], AccessPolicy::new("lab", vis, "owner"), &owner)
            .map_err(|e| e.to_string())?
            .pid;
        reg.set_embargo(&pid, until, &owner).map_err(|e| e.to_string())?;
        let before = reg.raw(&pid).unwrap();
        let versions = reg.list_versions(&pid, &owner).map_err(|e| e.to_string())?.len();

        clock.set(until.plus_secs(-1));
        for p in &outsiders {
            match reg.resolve(&pid, p) {
                Ok(RecordView::Stub(_)) | Ok(RecordView::Hidden) | Err(Error::NotFound(_)) => {}
                other => return Err(format!("{} sees {pid} at T-1 as {other:?}", p.subject)),
            }
        }
        clock.set(until.plus_secs(1));
        for p in &outsiders {
            let view = reg.resolve(&pid, p);
            let ok = match vis {
                Visibility::Public => matches!(view, Ok(RecordView::Full(_))),
                Visibility::Listed => matches!(view, Ok(RecordView::Stub(_))),
                Visibility::Hidden => matches!(view, Ok(RecordView::Hidden) | Err(Error::NotFound(_))),
            };
            ensure!(ok, "{} sees {pid} at T+1 as {view:?}", p.subject);
        }
        let after = reg.raw(&pid).unwrap();
        ensure!(after == before, "{pid} was rewritten when the embargo lapsed");
        let versions_after = reg.list_versions(&pid, &owner).map_err(|e| e.to_string())?.len();
        ensure!(versions_after == versions, "{pid} gained versions on lapse");
        clock.set(Timestamp::from_unix(T0));
        checked += 1;
    }
    Ok(format!("{checked} visibilities flip at the boundary with no write"))
}

fn drift_detection() -> Outcome {
    let clock = clock();
    let fetcher = Arc::new(StaticFetcher::new());
    let reg = registry("olcf", &clock).with_fetcher(fetcher.clone());
    let owner = contributor("owner", &["lab"]);
    let mut rng = StdRng::seed_from_u64(SEED ^ 8);

    let locator = "https://artifacts.example.org/solver-1.0.tar.gz";
    let original = b"solver release 1.0".to_vec();
    fetcher.set(locator, original.clone());
    let source = SourceDescriptor::new(SourceScheme::Https, locator).with_checksum(Checksum::of(&original));
    let pid = reg
        .register(document("drifting-solver", ComponentKind::Code, &["solver".into()]), vec![source], AccessPolicy::public("lab", "owner"), &owner)
        .map_err(|e| e.to_string())?
        .pid;
    reg.run_watch_cycle(true).map_err(|e| e.to_string())?;
    ensure!(reg.raw(&pid).unwrap().status == RecordStatus::Active, "baseline poll marked {pid} stale");
    fetcher.set(locator, b"solver release 1.0 (rebuilt)".to_vec());
    reg.run_watch_cycle(true).map_err(|e| e.to_string())?;
    let drifted = reg.raw(&pid).unwrap();
    ensure!(drifted.status == RecordStatus::Stale, "{pid} is {:?} after drift", drifted.status);
    let verification = drifted.verification.ok_or("no verification stored")?;
    ensure!(verification.checksum_match == Some(false), "verification says {verification:?}");

    let mut quiet = Vec::new();
    for i in 0..5 {
        let loc = format!("https://artifacts.example.org/steady-{i}.tar.gz");
        let bytes = format!("steady artifact {i}").into_bytes();
        fetcher.set(&loc, bytes.clone());
        let src = SourceDescriptor::new(SourceScheme::Https, loc.clone()).with_checksum(Checksum::of(&bytes));
        let p = reg
            .register(document(&format!("steady-{i}"), ComponentKind::Code, &["mesh".into()]), vec![src], AccessPolicy::public("lab", "owner"), &owner)
            .map_err(|e| e.to_string())?
            .pid;
        quiet.push((p, loc, bytes));
    }
    let mut unreachable_polls = 0;
    for round in 0..DRIFT_QUIET_POLLS {
        for (_, loc, bytes) in &quiet {
            if rng.gen_bool(0.3) {
                fetcher.set_unreachable(loc);
                unreachable_polls += 1;
            } else {
                fetcher.set(loc, bytes.clone());
            }
        }
        clock.advance(rng.gen_range(1..600));
        reg.run_watch_cycle(true).map_err(|e| e.to_string())?;
        for (p, _, _) in &quiet {
            let status = reg.raw(p).unwrap().status;
            ensure!(status == RecordStatus::Active, "poll {round} turned {p} {status:?}");
        }
    }
    Ok(format!(
        "drift flagged in one cycle; {DRIFT_QUIET_POLLS} quiet cycles ({unreachable_polls} unreachable polls) left records active"
    ))
}

fn score(reg: &Registry, pid: &PersistentIdentifier, who: &Principal) -> Result<u32, String> {
    reg.assess(pid, who).map(|r| r.score).map_err(|e| e.to_string())
}

fn fair_monotonicity() -> Outcome {
    let clock = clock();
    let reg = registry("olcf", &clock);
    let owner = contributor("owner", &["lab"]);
    let mut rng = StdRng::seed_from_u64(SEED ^ 9);
    let mut steps = 0;
    let anchor = reg
        .register(document("anchor-lib", ComponentKind::Code, &["solver".into()]), vec![git_source("anchor")], AccessPolicy::public("lab", "owner"), &owner)
        .map_err(|e| e.to_string())?
        .pid;

    for i in 0..FAIR_RECORDS {
        let name = format!("fair-{i}");
        let mut doc = document(&name, *ComponentKind::ALL.choose(&mut rng).unwrap(), &random_keywords(&mut rng));
        if rng.gen_bool(0.5) {
            doc.set("description", format!("{name} short"));
        }
        if rng.gen_bool(0.3) {
            doc.set("derived_from", json!([anchor.to_string()]));
        }
        if rng.gen_bool(0.3) {
            doc.set("programming_language", "Fortran");
        }
        let pid = reg
            .register(doc, vec![git_source(&name)], AccessPolicy::public("lab", "owner"), &owner)
            .map_err(|e| e.to_string())?
            .pid;

        // license: the registry refuses unlicensed documents, so this step
        // is measured with the same rubric on a detached copy
        let stored = reg.raw(&pid).unwrap();
        let resolves = |r: &str| r.parse::<PersistentIdentifier>().is_ok_and(|p| reg.contains(&p));
        let ctx = AssessContext {
            indexed: true,
            history_len: 1,
            history_intact: true,
            resolves: &resolves,
        };
        let mut unlicensed = stored.clone();
        unlicensed.document.remove("license");
        let (without, with) = (evaluate(&unlicensed, &ctx).score, evaluate(&stored, &ctx).score);
        ensure!(with >= without, "{pid}: adding a license dropped {without} -> {with}");
        steps += 1;

        let mut enrichments = [0u8, 1, 2];
        enrichments.shuffle(&mut rng);
        for e in enrichments {
            let before = score(&reg, &pid, &owner)?;
            let current = reg.raw(&pid).unwrap();
            clock.advance(1);
            let what = match e {
                0 => {
                    let mut kws = current.document.keywords();
                    kws.push(format!("extra{i}"));
                    let patch = MetadataDocument::new().with("keywords", json!(kws));
                    reg.update(&pid, RecordPatch { document: Some(patch), sources: None }, &owner).map_err(|e| e.to_string())?;
                    "keyword"
                }
                1 => {
                    let mut sources = current.sources.clone();
                    sources.push(SourceDescriptor::new(SourceScheme::Https, format!("https://mirror.example.org/{name}.tgz")));
                    reg.update(&pid, RecordPatch { document: None, sources: Some(sources) }, &owner).map_err(|e| e.to_string())?;
                    "source"
                }
                _ => {
                    let line = json!({
                        "run_id": format!("run-{i}"),
                        "event": "start",
                        "timestamp": reg.now().to_string(),
                        "components": [pid.to_string()],
                    });
                    reg.ingest_provenance(&line.to_string(), &owner).map_err(|e| e.to_string())?;
                    "run link"
                }
            };
            let after = score(&reg, &pid, &owner)?;
            ensure!(after >= before, "{pid}: adding a {what} dropped the score {before} -> {after}");
            steps += 1;
        }
    }

    let minimal = MetadataDocument::new()
        .with("name", "bare-minimum")
        .with("description", "Minimal.")
        .with("kind", "code")
        .with("license", "MIT")
        .with("authors", json!([{"name": "Min"}]))
        .with("keywords", json!(["misc"]));
    let bare = reg
        .register(minimal, vec![git_source("bare")], AccessPolicy::public("lab", "owner"), &owner)
        .map_err(|e| e.to_string())?
        .pid;
    let bare_score = score(&reg, &bare, &owner)?;
    ensure!(bare_score >= FAIR_MIN_REGISTERED_SCORE, "minimal record scores {bare_score}");

    let full_doc = document("gold-standard", ComponentKind::Workflow, &["genomics".into()])
        .with("derived_from", json!([anchor.to_string()]));
    let full = reg
        .register(full_doc, vec![git_source("gold")], AccessPolicy::public("lab", "owner"), &owner)
        .map_err(|e| e.to_string())?
        .pid;
    let line = json!({"run_id": "gold-run", "event": "start", "timestamp": reg.now().to_string(), "components": [full.to_string()]});
    reg.ingest_provenance(&line.to_string(), &owner).map_err(|e| e.to_string())?;
    let best = reg.assess(&full, &owner).map_err(|e| e.to_string())?;
    ensure!(best.score == FAIR_MAX_SCORE && best.badge == Badge::Gold, "maximal fixture scores {} ({:?})", best.score, best.badge);
    Ok(format!("{steps} enrichments never lower the score; minimal {bare_score}, maximal {}/gold", best.score))
}

/// Does the directed graph on `n` nodes have a cycle? Brute force: acyclic
/// iff some permutation puts every edge forward.
fn has_cycle_brute(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        let mut pos = vec![0; n];
        for (i, &v) in perm.iter().enumerate() {
            pos[v] = i;
        }
        if edges.iter().all(|&(a, b)| pos[a] < pos[b]) {
            return false;
        }
        if !next_permutation(&mut perm) {
            return true;
        }
    }
}

fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) else {
        return false;
    };
    let j = (i..v.len()).rev().find(|&j| v[j] > v[i - 1]).unwrap();
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

fn generic_yaml(n: usize, edges: &[(usize, usize)]) -> String {
    let mut out = String::from("parameters:\n  - {id: input, type: File}\nsteps:\n");
    for i in 0..n {
        let inputs: Vec<String> = (0..n).map(|j| format!("in{j}")).collect();
        out.push_str(&format!("  - {{id: s{i}, tool: tool{i}, inputs: [{}], outputs: [out]}}\n", inputs.join(", ")));
    }
    out.push_str("edges:\n");
    if edges.is_empty() {
        out.push_str("  []\n");
    }
    for (a, b) in edges {
        out.push_str(&format!("  - {{from: s{a}.out, to: s{b}.in{a}}}\n"));
    }
    out
}

fn abstract_extraction() -> Outcome {
    let mut graphs = 0;
    let mut cyclic = 0;
    for n in 1..=DAG_MAX_STEPS {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (0..n).map(move |b| (a, b))).collect();
        for mask in 0u32..(1 << pairs.len()) {
            let edges: Vec<(usize, usize)> = pairs.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, e)| *e).collect();
            let yaml = generic_yaml(n, &edges);
            let result = extract_abstract_workflow(yaml.as_bytes(), "generic-yaml-steps");
            if has_cycle_brute(n, &edges) {
                cyclic += 1;
                ensure!(
                    matches!(result, Err(WorkflowError::CyclicWorkflow { .. })),
                    "cyclic graph {edges:?} on {n} steps answered {result:?}"
                );
            } else {
                let d = result.map_err(|e| format!("acyclic graph {edges:?} on {n} steps rejected: {e}"))?;
                ensure!(d.steps.len() == n, "{edges:?}: {} steps for {n}", d.steps.len());
                let want: BTreeSet<(String, String)> =
                    edges.iter().map(|(a, b)| (format!("s{a}.out"), format!("s{b}.in{a}"))).collect();
                let got: BTreeSet<(String, String)> = d.edges.iter().map(|e| (e.from.clone(), e.to.clone())).collect();
                ensure!(got == want, "{edges:?}: extracted edges {got:?}");
                let order = d.topological_order().map_err(|e| e.to_string())?;
                let pos: HashMap<&str, usize> = order.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
                ensure!(
                    edges.iter().all(|(a, b)| pos[format!("s{a}").as_str()] < pos[format!("s{b}").as_str()]),
                    "{edges:?}: order {order:?} is not topological"
                );
                let reparsed = componenthub_core::workflow::AbstractWorkflowDescriptor::from_yaml(&d.to_yaml())
                    .map_err(|e| e.to_string())?;
                ensure!(reparsed == d, "{edges:?}: descriptor does not survive its YAML form");
            }
            graphs += 1;
        }
    }
    Ok(format!("{graphs} graphs up to {DAG_MAX_STEPS} steps, {cyclic} cyclic rejected, the rest round-trip"))
}

fn credential_separation(logs: &LogBuffer) -> Outcome {
    let clock = clock();
    let authority = HmacTokenAuthority::new("acceptance-secret");
    let expires = Timestamp::from_unix(T0 + 86_400);
    let issue = |p: &Principal| authority.issue(p, expires);
    let tokens = [
        issue(&contributor("aaa-user", &["lab", "federation"])),
        issue(&curator("aaa-curator", &["lab", "federation"])),
        issue(&curator("bbb-curator", &["lab", "federation"])),
    ];
    let login = |i: usize| -> Result<Principal, String> {
        authenticate(&authority as &dyn TokenVerifier, Some(&tokens[i]), clock.now()).map_err(|e| e.to_string())
    };
    let a = site("aaa", &clock);
    let b = site("bbb", &clock);
    let (user, a_curator, b_curator) = (login(0)?, login(1)?, login(2)?);
    let mut rng = StdRng::seed_from_u64(SEED ^ 10);
    let mut pids = Vec::new();
    for i in 0..6 {
        let krate = synthetic_crate(&mut rng, &format!("secret-scan-{i}"));
        let r = a.reg.import_crate(&krate, AccessPolicy::public("lab", user.subject.clone()), &user).map_err(|e| e.to_string())?;
        pids.push(r.record.pid);
    }
    let leaky = document("leaky", ComponentKind::Code, &["misc".into()]).with("x_note", tokens[0].expose());
    match a.reg.register(leaky, vec![git_source("leaky")], AccessPolicy::public("lab", user.subject.clone()), &user) {
        Err(Error::InvalidDocument(_)) => {}
        other => return Err(format!("document carrying a token was accepted: {:?}", other.map(|r| r.pid))),
    }
    a.reg.assess(&pids[0], &a_curator).map_err(|e| e.to_string())?;
    a.reg.tombstone(&pids[1], "retired", &a_curator).map_err(|e| e.to_string())?;

    let mut surfaces: Vec<(String, Vec<u8>)> = Vec::new();
    for pid in &pids {
        match a.reg.download_crate(pid, &user, None) {
            Ok(zip) => surfaces.push((format!("crate {pid}"), zip)),
            Err(Error::Gone { metadata: Some(k), .. }) => surfaces.push((format!("tombstone crate {pid}"), k.metadata_json())),
            Err(e) => return Err(e.to_string()),
        }
        let tool = a.reg.trs_get_tool_version(&pid.to_string(), "1", &user).map_err(|e| e.to_string())?;
        surfaces.push((format!("trs {pid}"), serde_json::to_vec(&tool).unwrap()));
    }
    let page = a.reg.trs_list_tools(&ToolQuery::page(0, 100), &user).map_err(|e| e.to_string())?;
    surfaces.push(("trs listing".into(), serde_json::to_vec(&page).unwrap()));
    let report = b.reg.sync_pull(&remote_for(&a), &a.remote, &b_curator).map_err(|e| e.to_string())?;
    surfaces.push(("sync report".into(), serde_json::to_vec(&report).unwrap()));
    for (i, payload) in a.remote.served_payloads().into_iter().enumerate() {
        surfaces.push((format!("sync payload {i}"), payload));
    }
    for r in b.reg.all_records() {
        surfaces.push((format!("mirror {}", r.pid), serde_json::to_vec(&r).unwrap()));
    }
    surfaces.push(("logs".into(), logs.0.lock().unwrap().clone()));

    let needles: Vec<String> = tokens
        .iter()
        .flat_map(|t| {
            let raw = t.expose().to_string();
            let sig = raw.rsplit('.').next().unwrap_or_default().to_string();
            [raw, sig]
        })
        .collect();
    let scanned: usize = surfaces.iter().map(|(_, b)| b.len()).sum();
    for (label, bytes) in &surfaces {
        for needle in &needles {
            ensure!(
                !bytes.windows(needle.len()).any(|w| w == needle.as_bytes()),
                "{label} contains credential material"
            );
        }
    }
    ensure!(!logs.0.lock().unwrap().is_empty(), "log capture recorded nothing");
    Ok(format!("{} surfaces, {scanned} bytes, no token material", surfaces.len()))
}
