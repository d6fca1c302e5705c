//! Run planning, execution against a generator adapter, and the run manifest.
//!
//! A run directory holds `manifest.json` and one image per entry at
//! `<lang>/<concept>/<i>.<ext>`. The run directory itself is
//! `<root>/runs/<model>/<variant>`; see [`run_dir`].

mod adapter;

pub use adapter::{
    format_from_content_type, AdapterError, Capabilities, GeneratedImage, GenerationRequest,
    GeneratorAdapter, HttpAdapter, StubAdapter,
};

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::concepts::{ConceptList, ConceptRow};
use crate::lang::Lang;
use crate::prompts::{render_prompt, PromptError, PromptTemplate, TemplateSet, DEFAULT_VARIANT};
use crate::store::{read_embeddings, EmbeddingSet, ImageKey, StoreError};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DEFAULT_IMAGES_PER_CONCEPT: u32 = 10;
/// A run whose failed share exceeds this is marked degraded.
pub const DEGRADED_FAILURE_RATE: f64 = 0.2;

#[derive(Debug, thiserror::Error)]
pub enum GenerationError {
    #[error("images_per_concept must be at least 2, got {0}")]
    TooFewImages(u32),
    #[error("run needs at least one language")]
    NoLanguages,
    #[error("run needs at least one concept")]
    NoConcepts,
    #[error("invalid model or variant id {0:?}: use letters, digits, '.', '_' or '-'")]
    BadId(String),
    #[error("language {0} is not in the concept list")]
    UnknownLanguage(Lang),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("existing manifest at {0} was produced by a different plan")]
    PlanMismatch(PathBuf),
    #[error("run interrupted after {completed} entries; rerun with resume")]
    Interrupted { completed: usize },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("no embedding for ok entry {0}")]
    MissingEmbedding(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> GenerationError + '_ {
    move |source| GenerationError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedPolicy {
    /// Every image of a population uses `base_seed`.
    FixedBase,
    /// Image `i` uses `base_seed + i`.
    #[default]
    PerImageSequential,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunPlan {
    pub model_id: String,
    pub languages: Vec<Lang>,
    pub concept_list_version: String,
    pub images_per_concept: u32,
    pub variant_id: String,
    pub seed_policy: SeedPolicy,
    pub base_seed: u64,
    pub width: u32,
    pub height: u32,
    /// The variant's template per language, so prompts can be re-rendered.
    pub templates: BTreeMap<Lang, PromptTemplate>,
    pub concepts: Vec<ConceptRow>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanConfig {
    pub model_id: String,
    /// Defaults to the concept list's languages.
    #[serde(default)]
    pub languages: Option<Vec<Lang>>,
    #[serde(default = "default_n")]
    pub images_per_concept: u32,
    #[serde(default = "default_variant")]
    pub variant_id: String,
    #[serde(default)]
    pub seed_policy: SeedPolicy,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_side")]
    pub width: u32,
    #[serde(default = "default_side")]
    pub height: u32,
    /// Keep only the first `k` concepts of the list.
    #[serde(default)]
    pub concept_limit: Option<usize>,
}

fn default_n() -> u32 {
    DEFAULT_IMAGES_PER_CONCEPT
}
fn default_variant() -> String {
    DEFAULT_VARIANT.to_string()
}
fn default_side() -> u32 {
    512
}

impl PlanConfig {
    pub fn new(model_id: &str) -> Self {
        Self {
            model_id: model_id.to_string(),
            languages: None,
            images_per_concept: DEFAULT_IMAGES_PER_CONCEPT,
            variant_id: default_variant(),
            seed_policy: SeedPolicy::default(),
            base_seed: 0,
            width: default_side(),
            height: default_side(),
            concept_limit: None,
        }
    }
}

fn check_id(id: &str) -> Result<(), GenerationError> {
    let ok = !id.is_empty()
        && id != "."
        && id != ".."
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'));
    if ok {
        Ok(())
    } else {
        Err(GenerationError::BadId(id.to_string()))
    }
}

pub fn plan_run(
    list: &ConceptList,
    version: &str,
    cfg: &PlanConfig,
    templates: &TemplateSet,
) -> Result<RunPlan, GenerationError> {
    if cfg.images_per_concept < 2 {
        return Err(GenerationError::TooFewImages(cfg.images_per_concept));
    }
    check_id(&cfg.model_id)?;
    check_id(&cfg.variant_id)?;
    let languages = cfg.languages.clone().unwrap_or_else(|| list.languages.clone());
    if languages.is_empty() {
        return Err(GenerationError::NoLanguages);
    }
    if let Some(l) = languages.iter().find(|l| !list.languages.contains(l)) {
        return Err(GenerationError::UnknownLanguage(l.clone()));
    }
    let mut concepts = list.rows.clone();
    if let Some(k) = cfg.concept_limit {
        concepts.truncate(k);
    }
    if concepts.is_empty() {
        return Err(GenerationError::NoConcepts);
    }
    let mut chosen = BTreeMap::new();
    for l in &languages {
        chosen.insert(l.clone(), templates.require(l, &cfg.variant_id)?.clone());
    }
    let plan = RunPlan {
        model_id: cfg.model_id.clone(),
        languages,
        concept_list_version: version.to_string(),
        images_per_concept: cfg.images_per_concept,
        variant_id: cfg.variant_id.clone(),
        seed_policy: cfg.seed_policy,
        base_seed: cfg.base_seed,
        width: cfg.width,
        height: cfg.height,
        templates: chosen,
        concepts,
    };
    plan.planned_entries()?;
    Ok(plan)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannedEntry {
    pub concept_id: String,
    pub language: Lang,
    pub index: u32,
    pub prompt_text: String,
    pub seed: u64,
    pub image_stem: String,
}

impl PlannedEntry {
    pub fn key(&self) -> EntryKey {
        (self.language.clone(), self.concept_id.clone(), self.index)
    }
}

/// `(language, concept_id, index)`.
pub type EntryKey = (Lang, String, u32);

/// Run directory for a model and prompt variant under `root`.
pub fn run_dir(root: &Path, model_id: &str, variant_id: &str) -> PathBuf {
    root.join("runs").join(model_id).join(variant_id)
}

/// Image path relative to the run directory, without extension.
pub fn image_stem(language: &Lang, concept_id: &str, index: u32) -> String {
    format!("{language}/{concept_id}/{index}")
}

impl RunPlan {
    pub fn seed_for(&self, index: u32) -> u64 {
        match self.seed_policy {
            SeedPolicy::FixedBase => self.base_seed,
            SeedPolicy::PerImageSequential => self.base_seed.wrapping_add(u64::from(index)),
        }
    }

    pub fn total_entries(&self) -> usize {
        self.languages.len() * self.concepts.len() * self.images_per_concept as usize
    }

    /// Entries in language, concept, index order.
    pub fn planned_entries(&self) -> Result<Vec<PlannedEntry>, GenerationError> {
        let mut out = Vec::with_capacity(self.total_entries());
        for lang in &self.languages {
            let t = self.templates.get(lang).ok_or_else(|| PromptError::NoTemplate {
                language: lang.clone(),
                variant_id: self.variant_id.clone(),
            })?;
            for row in &self.concepts {
                let prompt = render_prompt(t, row)?;
                for i in 0..self.images_per_concept {
                    out.push(PlannedEntry {
                        concept_id: row.concept_id.clone(),
                        language: lang.clone(),
                        index: i,
                        prompt_text: prompt.text.clone(),
                        seed: self.seed_for(i),
                        image_stem: image_stem(lang, &row.concept_id, i),
                    });
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub concept_id: String,
    pub language: Lang,
    pub index: u32,
    pub prompt_text: String,
    /// Absent when the adapter ignores seeds.
    pub seed: Option<u64>,
    /// Relative to the run directory; absent for failed entries.
    pub image_path: Option<String>,
    pub status: EntryStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ManifestEntry {
    pub fn key(&self) -> EntryKey {
        (self.language.clone(), self.concept_id.clone(), self.index)
    }

    pub fn image_key(&self) -> ImageKey {
        ImageKey {
            concept_id: self.concept_id.clone(),
            language: self.language.clone(),
            index: self.index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub plan: RunPlan,
    pub entries: Vec<ManifestEntry>,
    pub created_at: String,
    pub tool_version: String,
    pub degraded: bool,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self, GenerationError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let m: Self = serde_json::from_str(&text).map_err(|e| GenerationError::Manifest {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(GenerationError::Manifest {
                path: path.to_path_buf(),
                message: format!("unsupported schema version {}", m.schema_version),
            });
        }
        Ok(m)
    }

    /// Atomic: write to a temporary sibling, then rename.
    pub fn write(&self, path: &Path) -> Result<(), GenerationError> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, text).map_err(io_err(&tmp))?;
        fs::rename(&tmp, path).map_err(io_err(path))
    }

    pub fn ok_entries(&self) -> impl Iterator<Item = &ManifestEntry> + '_ {
        self.entries.iter().filter(|e| e.status == EntryStatus::Ok)
    }

    pub fn failed_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.status == EntryStatus::Failed)
            .count()
    }

    pub fn is_complete(&self) -> bool {
        self.entries.len() == self.plan.total_entries()
    }

    fn update_degraded(&mut self) {
        let total = self.plan.total_entries();
        self.degraded =
            total > 0 && self.failed_count() as f64 / total as f64 > DEGRADED_FAILURE_RATE;
    }

    fn sort(&mut self) {
        let order: BTreeMap<&Lang, usize> = self
            .plan
            .languages
            .iter()
            .enumerate()
            .map(|(i, l)| (l, i))
            .collect();
        let corder: BTreeMap<&str, usize> = self
            .plan
            .concepts
            .iter()
            .enumerate()
            .map(|(i, c)| (c.concept_id.as_str(), i))
            .collect();
        let rank = |e: &ManifestEntry| {
            (
                order.get(&e.language).copied().unwrap_or(usize::MAX),
                corder.get(e.concept_id.as_str()).copied().unwrap_or(usize::MAX),
                e.index,
            )
        };
        let mut entries = std::mem::take(&mut self.entries);
        entries.sort_by_key(|e| rank(e));
        self.entries = entries;
    }

    /// Prompts rendered again from the stored plan, in entry order.
    pub fn rerender(&self) -> Result<Vec<String>, GenerationError> {
        let planned: BTreeMap<EntryKey, String> = self
            .plan
            .planned_entries()?
            .into_iter()
            .map(|p| (p.key(), p.prompt_text))
            .collect();
        self.entries
            .iter()
            .map(|e| {
                planned.get(&e.key()).cloned().ok_or_else(|| GenerationError::Manifest {
                    path: PathBuf::new(),
                    message: format!("entry {}/{}/{} not in plan", e.language, e.concept_id, e.index),
                })
            })
            .collect()
    }

    /// Keys of ok entries grouped by population.
    pub fn ok_keys(&self) -> BTreeMap<(String, Lang), BTreeSet<u32>> {
        let mut out: BTreeMap<(String, Lang), BTreeSet<u32>> = BTreeMap::new();
        for e in self.ok_entries() {
            out.entry((e.concept_id.clone(), e.language.clone()))
                .or_default()
                .insert(e.index);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct ExecuteOptions<'a> {
    pub run_dir: PathBuf,
    pub resume: bool,
    /// Retries per entry after the first attempt, for retryable errors.
    pub max_retries: u32,
    pub retry_backoff: Duration,
    /// Manifest is rewritten after this many finished entries.
    pub batch_size: usize,
    pub cancel: Option<&'a AtomicBool>,
    pub tool_version: String,
}

impl ExecuteOptions<'_> {
    pub fn new(run_dir: impl Into<PathBuf>) -> Self {
        Self {
            run_dir: run_dir.into(),
            resume: false,
            max_retries: 2,
            retry_backoff: Duration::from_millis(200),
            batch_size: 16,
            cancel: None,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), std::io::Error> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

fn attempt(
    adapter: &dyn GeneratorAdapter,
    plan: &RunPlan,
    p: &PlannedEntry,
    accepts_seed: bool,
    opts: &ExecuteOptions<'_>,
) -> ManifestEntry {
    let seed = accepts_seed.then_some(p.seed);
    let req = GenerationRequest {
        prompt: p.prompt_text.clone(),
        seed,
        width: plan.width,
        height: plan.height,
    };
    let mut tries = 0;
    let result = loop {
        match adapter.generate(&req) {
            Err(e) if e.is_retryable() && tries < opts.max_retries => {
                std::thread::sleep(opts.retry_backoff * 2u32.saturating_pow(tries));
                tries += 1;
            }
            other => break other,
        }
    };
    let mut entry = ManifestEntry {
        concept_id: p.concept_id.clone(),
        language: p.language.clone(),
        index: p.index,
        prompt_text: p.prompt_text.clone(),
        seed,
        image_path: None,
        status: EntryStatus::Failed,
        error: None,
    };
    match result {
        Ok(img) => {
            let rel = format!("{}.{}", p.image_stem, img.format);
            match write_atomic(&opts.run_dir.join(&rel), &img.bytes) {
                Ok(()) => {
                    entry.image_path = Some(rel);
                    entry.status = EntryStatus::Ok;
                }
                Err(e) => entry.error = Some(format!("writing image: {e}")),
            }
        }
        Err(e) => entry.error = Some(e.to_string()),
    }
    entry
}

/// Generate every planned image not already present. With `resume`, ok
/// entries of an existing manifest for the same plan whose image file exists
/// are kept; everything else is (re)attempted.
pub fn execute_plan(
    plan: &RunPlan,
    adapter: &dyn GeneratorAdapter,
    opts: &ExecuteOptions<'_>,
) -> Result<RunManifest, GenerationError> {
    let manifest_path = opts.run_dir.join(MANIFEST_FILE);
    let mut manifest = match (opts.resume, manifest_path.exists()) {
        (true, true) => {
            let mut m = RunManifest::read(&manifest_path)?;
            if &m.plan != plan {
                return Err(GenerationError::PlanMismatch(manifest_path));
            }
            let dir = &opts.run_dir;
            m.entries.retain(|e| {
                e.status == EntryStatus::Ok
                    && e.image_path.as_ref().is_some_and(|p| dir.join(p).is_file())
            });
            m.tool_version = opts.tool_version.clone();
            m
        }
        _ => RunManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            plan: plan.clone(),
            entries: Vec::new(),
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            tool_version: opts.tool_version.clone(),
            degraded: false,
        },
    };

    let done: BTreeSet<EntryKey> = manifest.entries.iter().map(ManifestEntry::key).collect();
    let todo: Vec<PlannedEntry> = plan
        .planned_entries()?
        .into_iter()
        .filter(|p| !done.contains(&p.key()))
        .collect();

    let caps = adapter.capabilities();
    let workers = caps.max_concurrency.clamp(1, todo.len().max(1));
    let next = AtomicUsize::new(0);
    let cancelled = || opts.cancel.is_some_and(|c| c.load(Ordering::SeqCst));
    let batch = opts.batch_size.max(1);
    let mut write_result = Ok(());

    std::thread::scope(|s| {
        let (tx, rx) = mpsc::channel::<ManifestEntry>();
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, todo) = (&next, &todo);
            s.spawn(move || loop {
                if cancelled() {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(p) = todo.get(i) else { break };
                if tx.send(attempt(adapter, plan, p, caps.accepts_seed, opts)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut pending = 0;
        for entry in rx {
            manifest.entries.push(entry);
            pending += 1;
            if pending >= batch {
                pending = 0;
                manifest.sort();
                manifest.update_degraded();
                if let Err(e) = manifest.write(&manifest_path) {
                    write_result = Err(e);
                }
            }
        }
    });
    write_result?;

    manifest.sort();
    manifest.update_degraded();
    manifest.write(&manifest_path)?;
    if !manifest.is_complete() {
        return Err(GenerationError::Interrupted {
            completed: manifest.entries.len(),
        });
    }
    Ok(manifest)
}

/// Load the image embedding files the embedder emitted for a run and keep
/// only vectors of ok entries. Every ok entry must have a vector.
pub fn collect_run_embeddings(
    manifest: &RunManifest,
    files: &[PathBuf],
) -> Result<BTreeMap<(String, Lang), EmbeddingSet>, GenerationError> {
    let ok = manifest.ok_keys();
    let mut out: BTreeMap<(String, Lang), EmbeddingSet> = BTreeMap::new();
    for f in files {
        let set = read_embeddings(f)?;
        let set = set.filtered(|k| {
            ok.get(&(k.concept_id.clone(), k.language.clone()))
                .is_some_and(|idx| idx.contains(&k.index))
        });
        let mut groups: BTreeMap<(String, Lang), Vec<usize>> = BTreeMap::new();
        for (i, k) in set.keys().iter().enumerate() {
            groups
                .entry((k.concept_id.clone(), k.language.clone()))
                .or_default()
                .push(i);
        }
        for (pop, rows) in groups {
            let keep: BTreeSet<usize> = rows.into_iter().collect();
            let mut i = 0;
            let part = set.filtered(|_| {
                let k = keep.contains(&i);
                i += 1;
                k
            });
            out.insert(pop, part);
        }
    }
    for ((c, l), idx) in &ok {
        let have = out.get(&(c.clone(), l.clone()));
        for i in idx {
            let found = have.is_some_and(|s| {
                s.keys()
                    .iter()
                    .any(|k| k.index == *i)
            });
            if !found {
                return Err(GenerationError::MissingEmbedding(format!("{c}/{l}/{i}")));
            }
        }
    }
    Ok(out)
}
