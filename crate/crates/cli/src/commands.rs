use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use chrono::{DateTime, TimeZone, Utc};
use souschef_core::analytics::build_report;
use souschef_core::corpus::{load_corpus, stratified_sample, SampleSpec};
use souschef_core::gateway::{
    read_revisions, revise_batch, write_revisions, CompletionBackend, IdentityMock, RemoteBackend,
    RequestDefaults, ResultStore, ScriptedMock,
};
use souschef_core::par::Exec;
use souschef_core::tasks::{export_tasks, import_responses, import_tasks, make_task_with_target};
use souschef_service::{Service, ServiceConfig};

use crate::manifest::{manifest_path, RunManifest, StageRecord};
use crate::{BackendKind, Cli, Command};

struct StageOutcome {
    inputs: BTreeMap<String, String>,
    outputs: Vec<PathBuf>,
    backend: Option<String>,
}

pub fn run(cli: &Cli) -> Result<()> {
    let started_at = Utc::now();
    let (stage, out) = match &cli.command {
        Command::Sample { .. } => ("sample", default_out(cli, "sample.jsonl")),
        Command::Revise { .. } => ("revise", default_out(cli, "revisions.jsonl")),
        Command::MakeTasks { .. } => ("make-tasks", default_out(cli, "tasks.jsonl")),
        Command::Analyze { .. } => ("analyze", default_out(cli, "report")),
        Command::Serve { .. } => return serve(cli),
    };
    let outcome = match &cli.command {
        Command::Sample { corpus, spec } => sample(corpus, spec.as_deref(), cli.seed, &out)?,
        Command::Revise { .. } => revise(cli, &out)?,
        Command::MakeTasks {
            sampled,
            revisions,
            target,
        } => make_tasks(sampled, revisions, cli.seed, *target, &out)?,
        Command::Analyze { tasks, responses, raw } => analyze(tasks, responses, *raw, &out)?,
        Command::Serve { .. } => unreachable!(),
    };

    let path = manifest_path(cli.manifest.as_deref(), &out);
    let mut manifest = RunManifest::load_or_new(&path, cli.seed, started_at)?;
    manifest.record(StageRecord {
        stage: stage.to_string(),
        seed: cli.seed,
        argv: std::env::args().collect(),
        inputs: outcome.inputs,
        outputs: outcome.outputs.iter().map(|p| p.display().to_string()).collect(),
        backend: outcome.backend,
        started_at,
        finished_at: Utc::now(),
    });
    manifest.save(&path)
}

fn default_out(cli: &Cli, name: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(name))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(())
}

fn path_input(name: &str, path: &Path) -> (String, String) {
    (name.to_string(), path.display().to_string())
}

fn sample(corpus: &Path, spec_path: Option<&Path>, seed: u64, out: &Path) -> Result<StageOutcome> {
    let spec = match spec_path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading spec {}", p.display()))?;
            let mut spec: SampleSpec = toml::from_str(&text).with_context(|| format!("parsing spec {}", p.display()))?;
            spec.seed = seed;
            spec
        }
        None => SampleSpec::standard(seed),
    };
    let loaded = load_corpus(corpus)?;
    log::info!(
        "loaded {} recipes from {} ({} skipped)",
        loaded.collection.len(),
        corpus.display(),
        loaded.skipped.len()
    );
    let sampled = stratified_sample(&loaded.collection, &spec)?;
    ensure_parent(out)?;
    sampled
        .write_jsonl(out)
        .with_context(|| format!("writing {}", out.display()))?;
    log::info!("wrote {} sampled recipes to {}", sampled.len(), out.display());

    let mut inputs = BTreeMap::from([path_input("corpus", corpus)]);
    if let Some(p) = spec_path {
        inputs.insert("spec".into(), p.display().to_string());
    }
    Ok(StageOutcome {
        inputs,
        outputs: vec![out.to_path_buf()],
        backend: None,
    })
}

/// `SOURCE_DATE_EPOCH` pins result timestamps for reproducible output.
fn fixed_time() -> Result<Option<DateTime<Utc>>> {
    match std::env::var("SOURCE_DATE_EPOCH") {
        Ok(v) => {
            let secs: i64 = v.trim().parse().context("SOURCE_DATE_EPOCH must be an integer")?;
            let t = Utc
                .timestamp_opt(secs, 0)
                .single()
                .ok_or_else(|| anyhow!("SOURCE_DATE_EPOCH out of range"))?;
            Ok(Some(t))
        }
        Err(_) => Ok(None),
    }
}

fn revise(cli: &Cli, out: &Path) -> Result<StageOutcome> {
    let Command::Revise {
        input,
        backend,
        fixtures,
        base_url,
        model,
        temperature,
        max_tokens,
        attempts,
        max_in_flight,
        results_dir,
    } = &cli.command
    else {
        unreachable!()
    };

    // Backend configuration is checked before any request is made.
    let backend: Box<dyn CompletionBackend> = match backend {
        BackendKind::Identity => Box::new(IdentityMock),
        BackendKind::Scripted => {
            let path = fixtures
                .as_deref()
                .ok_or_else(|| anyhow!("--fixtures is required for the scripted backend"))?;
            Box::new(ScriptedMock::from_file(path)?)
        }
        BackendKind::Remote => Box::new(RemoteBackend::from_env(base_url, model)?),
    };
    let defaults = RequestDefaults {
        temperature: *temperature,
        max_tokens: *max_tokens,
        attempt_budget: *attempts,
        fixed_time: fixed_time()?,
        ..RequestDefaults::default()
    };

    let recipes = load_corpus(input)?.collection;
    let store = ResultStore::new(results_dir)
        .with_context(|| format!("creating results directory {}", results_dir.display()))?;
    let results = revise_batch(
        recipes.as_slice(),
        backend.as_ref(),
        &defaults,
        *max_in_flight,
        Exec::default(),
        Some(&store),
    );

    let mut ok = Vec::new();
    let mut failures = 0usize;
    for (recipe, result) in recipes.iter().zip(results) {
        match result {
            Ok(r) => ok.push(r),
            Err(err) => {
                failures += 1;
                log::error!("revising {}: {err}", recipe.id);
            }
        }
    }
    ensure_parent(out)?;
    write_revisions(out, &ok).with_context(|| format!("writing {}", out.display()))?;
    log::info!("wrote {} revisions to {}", ok.len(), out.display());
    if failures > 0 {
        bail!("{failures} of {} recipes failed to revise", recipes.len());
    }
    Ok(StageOutcome {
        inputs: BTreeMap::from([path_input("input", input)]),
        outputs: vec![out.to_path_buf(), results_dir.clone()],
        backend: Some(backend.id()),
    })
}

/// Pairs each revision with its recipe by id. Recipes without a revision
/// are skipped with a warning.
fn make_tasks(sampled: &Path, revisions_path: &Path, seed: u64, target: u32, out: &Path) -> Result<StageOutcome> {
    let recipes = load_corpus(sampled)?.collection;
    let revisions =
        read_revisions(revisions_path).with_context(|| format!("reading {}", revisions_path.display()))?;
    let mut by_id: BTreeMap<&str, _> = BTreeMap::new();
    for r in &revisions {
        if recipes.get(&r.recipe_id).is_none() {
            bail!("revision for {:?} has no matching recipe in {}", r.recipe_id, sampled.display());
        }
        if by_id.insert(r.recipe_id.as_str(), r).is_some() {
            bail!("recipe {:?} has more than one revision", r.recipe_id);
        }
    }
    let mut tasks = Vec::new();
    for recipe in &recipes {
        match by_id.get(recipe.id.as_str()) {
            Some(revision) => tasks.push(
                make_task_with_target(recipe, revision, seed, target)
                    .with_context(|| format!("pairing recipe {:?} with revision {:?}", recipe.id, revision.recipe_id))?,
            ),
            None => log::warn!("recipe {} has no revision; skipped", recipe.id),
        }
    }
    ensure_parent(out)?;
    export_tasks(&tasks, out).with_context(|| format!("writing {}", out.display()))?;
    log::info!("wrote {} tasks to {}", tasks.len(), out.display());
    Ok(StageOutcome {
        inputs: BTreeMap::from([path_input("sampled", sampled), path_input("revisions", revisions_path)]),
        outputs: vec![out.to_path_buf()],
        backend: None,
    })
}

fn analyze(tasks_path: &Path, responses_path: &Path, raw: bool, out_dir: &Path) -> Result<StageOutcome> {
    let tasks = import_tasks(tasks_path).with_context(|| format!("reading {}", tasks_path.display()))?;
    for e in &tasks.errors {
        log::warn!("{}: {e}", tasks_path.display());
    }
    let responses = import_responses(responses_path, &tasks.records)
        .with_context(|| format!("reading {}", responses_path.display()))?;
    for e in &responses.errors {
        log::warn!("{}: rejected {e}", responses_path.display());
    }
    if responses.records.is_empty() {
        bail!("no valid responses in {}", responses_path.display());
    }
    let report = build_report(&tasks.records, &responses.records, raw)?;
    let text = report.render_text();
    print!("{text}");

    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let text_path = out_dir.join("report.txt");
    let json_path = out_dir.join("report.json");
    std::fs::write(&text_path, &text)?;
    let mut summary = report.clone();
    let audit = summary.audit.take();
    std::fs::write(&json_path, serde_json::to_string_pretty(&summary)? + "\n")?;
    let mut outputs = vec![text_path, json_path];
    if let Some(audit) = audit {
        let audit_path = out_dir.join("audit.json");
        std::fs::write(&audit_path, serde_json::to_string_pretty(&audit)? + "\n")?;
        outputs.push(audit_path);
    }
    Ok(StageOutcome {
        inputs: BTreeMap::from([path_input("tasks", tasks_path), path_input("responses", responses_path)]),
        outputs,
        backend: None,
    })
}

fn serve(cli: &Cli) -> Result<()> {
    let Command::Serve {
        tasks,
        host,
        port,
        log_path,
        deadline_minutes,
        target,
        static_dir,
    } = &cli.command
    else {
        unreachable!()
    };
    let imported = import_tasks(tasks).with_context(|| format!("reading {}", tasks.display()))?;
    if let Some(e) = imported.errors.first() {
        bail!("{}: {e}", tasks.display());
    }
    if imported.records.is_empty() {
        log::warn!("no tasks loaded; every request will report none available");
    }
    let config = ServiceConfig {
        deadline_minutes: *deadline_minutes,
        target_annotations: *target,
    };
    let service = Arc::new(Service::open(imported.records, log_path, config)?);
    let addr: SocketAddr = format!("{host}:{port}")
        .parse()
        .with_context(|| format!("invalid listen address {host}:{port}"))?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(souschef_service::http::serve(service, addr, static_dir.clone(), async {
        let _ = tokio::signal::ctrl_c().await;
    }))?;
    Ok(())
}
