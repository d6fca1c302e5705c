use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::Duration;

use anyhow::{anyhow, bail, Context};
use serde::{Deserialize, Serialize};

use coverage_core::concepts::{
    read_term_file, read_versioned_list, ConceptError, ConceptList, ConceptPipeline,
    FixtureSynsets, FixtureTranslator, HttpSynsets, HttpTranslator, PipelineInputs, RetryPolicy,
    SynsetSource, TaggedStream, TermSource, TranslationService,
};
use coverage_core::generation::{
    collect_run_embeddings, execute_plan, plan_run, run_dir, Capabilities, ExecuteOptions,
    GenerationError, GeneratorAdapter, HttpAdapter, PlanConfig, RunManifest, StubAdapter,
    MANIFEST_FILE,
};
use coverage_core::lang::Lang;
use coverage_core::metrics::{score_run, RunEmbeddings, ScoreConfig, ScoreTable};
use coverage_core::prompts::TemplateSet;
use coverage_core::report::{
    build_bundle, emit_report, template_ablation_diff, thumbnail_data_uri, BundleOptions, Format,
    Metric, Thumbnail,
};
use coverage_core::store::{read_embeddings, read_text_embeddings};

use crate::config::Config;
use crate::{BuildConceptsArgs, EmbedArgs, GenerateArgs, ReportArgs, ScoreArgs};

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_PIPELINE: u8 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn config(e: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_CONFIG,
            error: e.into(),
        }
    }

    pub fn pipeline(e: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_PIPELINE,
            error: e.into(),
        }
    }
}

type CmdResult<T = ()> = Result<T, Failure>;

trait OrExit<T> {
    fn or_config(self) -> CmdResult<T>;
    fn or_pipeline(self) -> CmdResult<T>;
}

impl<T, E: Into<anyhow::Error>> OrExit<T> for Result<T, E> {
    fn or_config(self) -> CmdResult<T> {
        self.map_err(Failure::config)
    }
    fn or_pipeline(self) -> CmdResult<T> {
        self.map_err(Failure::pipeline)
    }
}

fn require_file(path: &Path, what: &str) -> CmdResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::config(anyhow!("{what} not found: {}", path.display())))
    }
}

fn concept_failure(e: ConceptError) -> Failure {
    match e {
        ConceptError::Lang(_)
        | ConceptError::SourceNotInLanguages(_)
        | ConceptError::Config(_)
        | ConceptError::NoSources
        | ConceptError::NoClients => Failure::config(e),
        other => Failure::pipeline(other),
    }
}

fn generation_failure(e: GenerationError) -> Failure {
    match e {
        GenerationError::TooFewImages(_)
        | GenerationError::NoLanguages
        | GenerationError::NoConcepts
        | GenerationError::BadId(_)
        | GenerationError::UnknownLanguage(_)
        | GenerationError::Prompt(_)
        | GenerationError::PlanMismatch(_) => Failure::config(e),
        other => Failure::pipeline(other),
    }
}

// ------------------------------------------------------------ build-concepts

struct Services {
    translators: Vec<Box<dyn TranslationService>>,
    synsets: Box<dyn SynsetSource>,
    inputs: PipelineInputs,
}

fn order_by_priority<T>(mut items: Vec<(String, T)>, priority: &[String]) -> Vec<(String, T)> {
    items.sort_by_key(|(id, _)| {
        (
            priority.iter().position(|p| p == id).unwrap_or(priority.len()),
            id.clone(),
        )
    });
    items
}

fn fixture_services(cfg: &Config, dir: &Path) -> anyhow::Result<Services> {
    if !dir.is_dir() {
        bail!("fixtures directory not found: {}", dir.display());
    }
    let mut streams = Vec::new();
    let sources = dir.join("sources");
    let mut files: Vec<PathBuf> = fs::read_dir(&sources)
        .with_context(|| format!("reading {}", sources.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    files.sort();
    for f in files.iter().filter(|f| f.extension().is_some_and(|e| e == "txt")) {
        let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or("");
        let source: TermSource = stem
            .parse()
            .map_err(|e| anyhow!("{}: {e}", f.display()))?;
        let text = fs::read_to_string(f).with_context(|| format!("reading {}", f.display()))?;
        streams.push(TaggedStream { source, text });
    }
    let labels = dir.join("labels.txt");
    let label_set = if labels.is_file() {
        read_term_file(&labels)?
    } else {
        Vec::new()
    };
    let tdir = dir.join("translators");
    let mut found = Vec::new();
    for e in fs::read_dir(&tdir).with_context(|| format!("reading {}", tdir.display()))? {
        let p = e?.path();
        if p.is_dir() {
            let id = p.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            found.push((id, p));
        }
    }
    let translators = order_by_priority(found, &cfg.concepts.service_priority)
        .into_iter()
        .map(|(id, p)| Box::new(FixtureTranslator::new(id, p)) as Box<dyn TranslationService>)
        .collect();
    Ok(Services {
        translators,
        synsets: Box::new(FixtureSynsets::new(dir.join("synsets"))),
        inputs: PipelineInputs {
            streams,
            label_set,
            denylist: Vec::new(),
        },
    })
}

fn live_services(cfg: &Config) -> anyhow::Result<Services> {
    let c = &cfg.concepts;
    let timeout = Duration::from_secs(c.timeout_s);
    let mut streams = Vec::new();
    for s in &c.sources {
        let source: TermSource = s.source.parse().map_err(|e| anyhow!("{e}"))?;
        let text = fs::read_to_string(&s.path)
            .with_context(|| format!("reading {}", s.path.display()))?;
        streams.push(TaggedStream { source, text });
    }
    let label_set = match &c.label_set {
        Some(p) => read_term_file(p)?,
        None => Vec::new(),
    };
    let mut named = Vec::new();
    for (i, t) in c.translators.iter().enumerate() {
        let id = t.id.clone().unwrap_or_else(|| format!("service{i}"));
        named.push((id, t));
    }
    let mut translators: Vec<Box<dyn TranslationService>> = Vec::new();
    for (id, t) in order_by_priority(named, &c.service_priority) {
        translators.push(Box::new(HttpTranslator::new(id, &t.endpoint, t.api_key()?, timeout)?));
    }
    let syn = c
        .synsets
        .as_ref()
        .ok_or_else(|| anyhow!("concepts.synsets endpoint is required without --fixtures"))?;
    Ok(Services {
        translators,
        synsets: Box::new(HttpSynsets::new(&syn.endpoint, syn.api_key()?, timeout)?),
        inputs: PipelineInputs {
            streams,
            label_set,
            denylist: Vec::new(),
        },
    })
}

pub fn build_concepts(cfg: &Config, a: &BuildConceptsArgs) -> CmdResult {
    let mut services = match &a.fixtures {
        Some(dir) => fixture_services(cfg, dir),
        None => live_services(cfg),
    }
    .or_config()?;
    if let Some(p) = &a.denylist {
        require_file(p, "denylist")?;
        services.inputs.denylist = read_term_file(p).or_config()?;
    }
    let pipeline = ConceptPipeline {
        languages: cfg.languages.clone(),
        source_language: cfg.source_language.clone(),
        top_k: cfg.concepts.top_k,
        services: services.translators.iter().map(|b| b.as_ref()).collect(),
        synsets: services.synsets.as_ref(),
        retry: RetryPolicy {
            max_retries: cfg.concepts.max_retries,
            backoff_ms: cfg.concepts.backoff_ms,
        },
        max_in_flight: cfg.concepts.max_in_flight,
        version_label: a.label.clone().unwrap_or_else(|| cfg.concepts.version_label.clone()),
    };
    let out = pipeline.run(&services.inputs).map_err(concept_failure)?;
    let path = a.out.clone().unwrap_or_else(|| cfg.paths.concepts.clone());
    out.write(&path).map_err(concept_failure)?;
    eprintln!(
        "{} of {} terms kept; version {}",
        out.tally.emitted, out.tally.input_terms, out.version
    );
    for (reason, ds) in &out.tally.discards {
        eprintln!("  discarded ({reason}): {}", ds.len());
    }
    println!("{}", path.display());
    Ok(())
}

// ------------------------------------------------------------ generate

pub fn generate(cfg: &Config, a: &GenerateArgs) -> CmdResult {
    let g = &cfg.generation;
    let model = a
        .model
        .clone()
        .or_else(|| g.model_id.clone())
        .or_else(|| a.stub.then(|| "stub".to_string()))
        .ok_or_else(|| Failure::config(anyhow!("no model id: pass --model or set generation.model_id")))?;
    let concepts_path = a.concepts.clone().unwrap_or_else(|| cfg.paths.concepts.clone());
    require_file(&concepts_path, "concept list")?;
    let (list, version) = read_versioned_list(&concepts_path).map_err(concept_failure)?;

    let languages = a.languages.clone().unwrap_or_else(|| cfg.languages.clone());
    let templates = match &cfg.paths.templates {
        Some(p) => TemplateSet::load(p, &languages).or_config()?,
        None => TemplateSet::builtin(),
    };
    let plan_cfg = PlanConfig {
        model_id: model,
        languages: Some(languages),
        images_per_concept: a.n.unwrap_or(g.images_per_concept),
        variant_id: a.variant.clone().unwrap_or_else(|| g.variant_id.clone()),
        seed_policy: g.seed_policy,
        base_seed: g.base_seed,
        width: a.width.unwrap_or(g.width),
        height: a.height.unwrap_or(g.height),
        concept_limit: a.limit.or(g.concept_limit),
    };
    let plan = plan_run(&list, &version, &plan_cfg, &templates).map_err(generation_failure)?;

    let adapter: Box<dyn GeneratorAdapter> = match (&a.adapter_url, a.stub, &g.adapter.endpoint) {
        (_, true, _) => Box::new(StubAdapter::default()),
        (Some(url), _, _) | (None, false, Some(url)) => {
            let key = match &g.adapter.api_key_env {
                Some(var) => Some(
                    std::env::var(var)
                        .with_context(|| format!("environment variable {var} is not set"))
                        .or_config()?,
                ),
                None => None,
            };
            Box::new(
                HttpAdapter::new(
                    url.clone(),
                    key,
                    Capabilities {
                        accepts_seed: g.adapter.accepts_seed,
                        max_concurrency: g.adapter.max_concurrency.max(1),
                    },
                    Duration::from_secs(g.adapter.timeout_s),
                )
                .or_config()?,
            )
        }
        (None, false, None) => {
            return Err(Failure::config(anyhow!(
                "no generator: pass --stub, --adapter-url or set generation.adapter.endpoint"
            )))
        }
    };

    let root = a.root.clone().unwrap_or_else(|| cfg.paths.root.clone());
    let dir = run_dir(&root, &plan.model_id, &plan.variant_id);
    let mut opts = ExecuteOptions::new(&dir);
    opts.resume = a.resume;
    opts.max_retries = g.max_retries;
    opts.batch_size = g.batch_size;
    let manifest = execute_plan(&plan, adapter.as_ref(), &opts).map_err(generation_failure)?;
    let failed = manifest.failed_count();
    eprintln!(
        "{} entries, {} failed{}",
        manifest.entries.len(),
        failed,
        if manifest.degraded { " (run degraded)" } else { "" }
    );
    println!("{}", dir.display());
    Ok(())
}

// ------------------------------------------------------------ embed

/// Written by `embed`, read by `score`. Paths are relative to the run.
#[derive(Debug, Serialize, Deserialize)]
pub struct EmbeddingIndex {
    pub images: Vec<String>,
    pub texts: BTreeMap<Lang, String>,
}

pub const EMBEDDINGS_DIR: &str = "embeddings";
pub const INDEX_FILE: &str = "embeddings/index.json";

fn load_manifest(run: &Path) -> CmdResult<RunManifest> {
    let path = run.join(MANIFEST_FILE);
    require_file(&path, "run manifest")?;
    RunManifest::read(&path).or_pipeline()
}

fn run_child(argv: &[String], extra: &[&str]) -> anyhow::Result<Vec<String>> {
    let (prog, lead) = argv.split_first().ok_or_else(|| anyhow!("empty embedder command"))?;
    let out = Command::new(prog)
        .args(lead)
        .args(extra)
        .stdin(Stdio::null())
        .stderr(Stdio::inherit())
        .output()
        .with_context(|| format!("starting embedder {prog}"))?;
    if !out.status.success() {
        bail!("embedder {prog} {} exited with {}", extra.join(" "), out.status);
    }
    let stdout = String::from_utf8(out.stdout).context("embedder output is not UTF-8")?;
    Ok(stdout.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect())
}

fn relative_to(base: &Path, p: &Path) -> String {
    p.strip_prefix(base).unwrap_or(p).to_string_lossy().replace('\\', "/")
}

pub fn embed(cfg: &Config, a: &EmbedArgs) -> CmdResult {
    let manifest = load_manifest(&a.run)?;
    let argv = cfg.embedder_command(a.embedder_cmd.as_deref()).or_config()?;
    let text_langs = a
        .text_langs
        .clone()
        .unwrap_or_else(|| vec![cfg.source_language.clone()]);
    if let Some(l) = text_langs.iter().find(|l| !manifest.plan.languages.contains(l)) {
        return Err(Failure::config(anyhow!("language {l} is not part of this run")));
    }

    let emb_dir = a.run.join(EMBEDDINGS_DIR);
    fs::create_dir_all(&emb_dir).or_pipeline()?;
    let concepts_tsv = a.run.join("concepts.tsv");
    let list = ConceptList {
        languages: manifest.plan.languages.clone(),
        rows: manifest.plan.concepts.clone(),
    };
    fs::write(&concepts_tsv, list.to_tsv()).or_pipeline()?;

    let manifest_path = a.run.join(MANIFEST_FILE);
    let images_dir = emb_dir.join("images");
    let emitted = run_child(
        &argv,
        &[
            "images",
            "--manifest",
            &manifest_path.to_string_lossy(),
            "--out",
            &images_dir.to_string_lossy(),
        ],
    )
    .or_pipeline()?;
    let mut files = Vec::new();
    for line in &emitted {
        let p = PathBuf::from(line);
        read_embeddings(&p)
            .with_context(|| format!("embedder output {} failed validation", p.display()))
            .or_pipeline()?;
        files.push(p);
    }
    collect_run_embeddings(&manifest, &files).or_pipeline()?;

    let mut texts = BTreeMap::new();
    for l in &text_langs {
        let out = emb_dir.join(format!("text.{l}.emb"));
        run_child(
            &argv,
            &[
                "texts",
                "--concepts",
                &concepts_tsv.to_string_lossy(),
                "--lang",
                l.as_str(),
                "--out",
                &out.to_string_lossy(),
            ],
        )
        .or_pipeline()?;
        let set = read_text_embeddings(&out)
            .with_context(|| format!("embedder output {} failed validation", out.display()))
            .or_pipeline()?;
        if let Some(c) = manifest.plan.concepts.iter().find(|c| set.get(&c.concept_id).is_none()) {
            return Err(Failure::pipeline(anyhow!(
                "{} has no vector for concept {}",
                out.display(),
                c.concept_id
            )));
        }
        texts.insert(l.clone(), relative_to(&a.run, &out));
    }

    let mut images: Vec<String> = files.iter().map(|f| relative_to(&a.run, f)).collect();
    images.sort();
    let index = EmbeddingIndex { images, texts };
    let mut text = serde_json::to_string_pretty(&index).expect("index serializes");
    text.push('\n');
    fs::write(a.run.join(INDEX_FILE), text).or_pipeline()?;
    for f in &files {
        println!("{}", f.display());
    }
    Ok(())
}

// ------------------------------------------------------------ score

pub fn score(cfg: &Config, a: &ScoreArgs) -> CmdResult {
    let manifest = load_manifest(&a.run)?;
    let source = a.source_lang.clone().unwrap_or_else(|| cfg.source_language.clone());
    if !manifest.plan.languages.contains(&source) {
        return Err(Failure::config(anyhow!("source language {source} is not part of this run")));
    }
    let dt = cfg.dt_config(a.dt_mode.as_deref()).or_config()?;

    let index_path = a.run.join(INDEX_FILE);
    let index: EmbeddingIndex = fs::read_to_string(&index_path)
        .with_context(|| format!("reading {} (run `embed` first)", index_path.display()))
        .and_then(|t| serde_json::from_str(&t).context("parsing embedding index"))
        .or_pipeline()?;
    let files: Vec<PathBuf> = index.images.iter().map(|p| a.run.join(p)).collect();
    let images = collect_run_embeddings(&manifest, &files).or_pipeline()?;
    let text_rel = index.texts.get(&source).ok_or_else(|| {
        Failure::pipeline(anyhow!(
            "no {source} text embeddings; run `embed --text-langs {source}`"
        ))
    })?;
    let text = read_text_embeddings(&a.run.join(text_rel)).or_pipeline()?;

    let emb = RunEmbeddings {
        model_id: manifest.plan.model_id.clone(),
        images,
        text,
    };
    let table = score_run(
        &emb,
        &ScoreConfig {
            source_language: source,
            dt,
            thresholds: cfg.thresholds,
        },
    )
    .or_pipeline()?;
    let out = a.out.clone().unwrap_or_else(|| a.run.clone());
    fs::create_dir_all(&out).or_pipeline()?;
    let csv = out.join("scores.csv");
    let json = out.join("scores.json");
    fs::write(&csv, table.to_csv()).or_pipeline()?;
    fs::write(&json, table.to_json()).or_pipeline()?;
    if !table.skipped.is_empty() {
        eprintln!("{} populations skipped (fewer than 2 images)", table.skipped.len());
    }
    println!("{}", csv.display());
    println!("{}", json.display());
    Ok(())
}

// ------------------------------------------------------------ report

fn load_table(cfg: &Config, path: &Path) -> CmdResult<ScoreTable> {
    require_file(path, "score table")?;
    let text = fs::read_to_string(path).or_config()?;
    let table = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => ScoreTable::from_json(&text),
        Some("csv") => ScoreTable::from_csv(&text, cfg.thresholds),
        _ => return Err(Failure::config(anyhow!("{}: expected .json or .csv", path.display()))),
    };
    table
        .with_context(|| format!("reading {}", path.display()))
        .or_pipeline()
}

fn keys(t: &ScoreTable) -> BTreeSet<(String, Lang, String)> {
    t.rows
        .iter()
        .map(|r| (r.model_id.clone(), r.language.clone(), r.concept_id.clone()))
        .collect()
}

fn thumbnails(runs: &[PathBuf], wanted: &BTreeSet<(String, Lang, String)>) -> CmdResult<Vec<Thumbnail>> {
    let mut out = Vec::new();
    for run in runs {
        let m = load_manifest(run)?;
        let mut done = BTreeSet::new();
        for e in m.ok_entries() {
            let k = (m.plan.model_id.clone(), e.language.clone(), e.concept_id.clone());
            if !wanted.contains(&k) || !done.insert(k) {
                continue;
            }
            let Some(rel) = &e.image_path else { continue };
            out.push(Thumbnail {
                model_id: m.plan.model_id.clone(),
                language: e.language.clone(),
                concept_id: e.concept_id.clone(),
                data_uri: thumbnail_data_uri(&run.join(rel), 64).or_pipeline()?,
            });
        }
    }
    Ok(out)
}

pub fn report(cfg: &Config, a: &ReportArgs) -> CmdResult {
    let formats: Vec<Format> = a
        .formats
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_, _>>()
        .or_config()?;
    if formats.is_empty() {
        return Err(Failure::config(anyhow!("--formats selects nothing")));
    }
    let mut tables = a
        .tables
        .iter()
        .map(|p| load_table(cfg, p))
        .collect::<CmdResult<Vec<_>>>()?;
    let mut baseline = match &a.baseline {
        Some(p) => Some(load_table(cfg, p)?),
        None => None,
    };
    if baseline.is_none() && tables.len() == 2 && keys(&tables[0]) == keys(&tables[1]) {
        baseline = Some(tables.remove(0));
    }
    if tables.iter().all(|t| t.rows.is_empty()) {
        return Err(Failure::pipeline(anyhow!("score tables have no rows")));
    }
    if let Some(b) = &baseline {
        let merged: Vec<_> = tables.iter().flat_map(|t| t.rows.iter().cloned()).collect();
        template_ablation_diff(&b.rows, &merged).or_pipeline()?;
    }
    let mut opts = BundleOptions {
        bins: cfg.report.bins,
        rank_k: cfg.report.rank_k,
        ablation_baseline: baseline,
        ..Default::default()
    };
    if let Some(t) = &a.title {
        opts.title = t.clone();
    }
    let mut bundle = build_bundle(&tables, &opts).or_pipeline()?;
    if cfg.report.thumbnails && !a.runs.is_empty() {
        let wanted: BTreeSet<_> = bundle
            .rankings
            .iter()
            .filter(|r| r.metric == Metric::Xc)
            .flat_map(|r| {
                r.top.iter().take(1).chain(r.bottom.iter().take(1)).map(move |c| {
                    (r.model_id.clone(), r.language.clone(), c.concept_id.clone())
                })
            })
            .collect();
        opts.thumbnails = thumbnails(&a.runs, &wanted)?;
        bundle = build_bundle(&tables, &opts).or_pipeline()?;
    }
    let written = emit_report(&bundle, &a.out, &formats).or_pipeline()?;
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}
