//! Shared configuration file. TOML or JSON, chosen by extension.
//! Relative paths resolve against the working directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use coverage_core::generation::SeedPolicy;
use coverage_core::lang::Lang;
use coverage_core::metrics::{DtConfig, DtMode, PossessionThresholds};

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub languages: Vec<Lang>,
    pub source_language: Lang,
    pub paths: Paths,
    pub concepts: ConceptSettings,
    pub generation: GenerationSettings,
    pub dt: DtSettings,
    pub thresholds: PossessionThresholds,
    pub embedder: EmbedderSettings,
    pub report: ReportSettings,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Runs live under `<root>/runs/<model>/<variant>`.
    pub root: PathBuf,
    pub concepts: PathBuf,
    /// Prompt template file; built-in defaults when absent.
    pub templates: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceFile {
    pub source: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Endpoint {
    pub id: Option<String>,
    pub endpoint: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
}

impl Endpoint {
    pub fn api_key(&self) -> Result<Option<String>> {
        match &self.api_key_env {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .map(Some)
                .with_context(|| format!("environment variable {var} is not set")),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConceptSettings {
    pub version_label: String,
    pub top_k: usize,
    pub max_in_flight: usize,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub timeout_s: u64,
    /// Translator ids, most trusted first.
    pub service_priority: Vec<String>,
    pub sources: Vec<SourceFile>,
    pub label_set: Option<PathBuf>,
    pub translators: Vec<Endpoint>,
    pub synsets: Option<Endpoint>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdapterSettings {
    pub endpoint: Option<String>,
    pub api_key_env: Option<String>,
    pub accepts_seed: bool,
    pub max_concurrency: usize,
    pub timeout_s: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationSettings {
    pub model_id: Option<String>,
    pub images_per_concept: u32,
    pub variant_id: String,
    pub seed_policy: SeedPolicy,
    pub base_seed: u64,
    pub width: u32,
    pub height: u32,
    pub max_retries: u32,
    pub batch_size: usize,
    pub concept_limit: Option<usize>,
    pub adapter: AdapterSettings,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DtSettings {
    /// `sampled` or `exhaustive`.
    pub mode: String,
    pub draws: Option<usize>,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderSettings {
    /// Program and leading arguments; the stub embedder next to this binary
    /// when empty.
    pub command: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSettings {
    pub bins: usize,
    pub rank_k: usize,
    pub thumbnails: bool,
}

fn lang(c: &str) -> Lang {
    Lang::new(c).expect("valid built-in code")
}

impl Default for Config {
    fn default() -> Self {
        Self {
            languages: ["en", "es", "de", "zh", "ja", "he", "id"].map(lang).to_vec(),
            source_language: lang("en"),
            paths: Paths::default(),
            concepts: ConceptSettings::default(),
            generation: GenerationSettings::default(),
            dt: DtSettings::default(),
            thresholds: PossessionThresholds::default(),
            embedder: EmbedderSettings::default(),
            report: ReportSettings::default(),
        }
    }
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            root: PathBuf::from("out"),
            concepts: PathBuf::from("out/concepts.tsv"),
            templates: None,
        }
    }
}

impl Default for ConceptSettings {
    fn default() -> Self {
        Self {
            version_label: "concepts".into(),
            top_k: 2000,
            max_in_flight: 4,
            max_retries: 3,
            backoff_ms: 500,
            timeout_s: 30,
            service_priority: Vec::new(),
            sources: Vec::new(),
            label_set: None,
            translators: Vec::new(),
            synsets: None,
        }
    }
}

impl Default for AdapterSettings {
    fn default() -> Self {
        Self {
            endpoint: None,
            api_key_env: None,
            accepts_seed: true,
            max_concurrency: 2,
            timeout_s: 300,
        }
    }
}

impl Default for GenerationSettings {
    fn default() -> Self {
        Self {
            model_id: None,
            images_per_concept: coverage_core::generation::DEFAULT_IMAGES_PER_CONCEPT,
            variant_id: coverage_core::prompts::DEFAULT_VARIANT.into(),
            seed_policy: SeedPolicy::default(),
            base_seed: 0,
            width: 512,
            height: 512,
            max_retries: 2,
            batch_size: 16,
            concept_limit: None,
            adapter: AdapterSettings::default(),
        }
    }
}

impl Default for DtSettings {
    fn default() -> Self {
        Self {
            mode: "sampled".into(),
            draws: None,
            rng_seed: 0,
        }
    }
}

impl Default for ReportSettings {
    fn default() -> Self {
        Self {
            bins: coverage_core::report::DEFAULT_BINS,
            rank_k: 5,
            thumbnails: true,
        }
    }
}

/// `sampled`, `sampled:<draws>` or `exhaustive`.
pub fn parse_dt_mode(s: &str, default_draws: Option<usize>) -> Result<DtMode> {
    match s.split_once(':') {
        None if s == "exhaustive" => Ok(DtMode::Exhaustive),
        None if s == "sampled" => Ok(DtMode::Sampled {
            draws: default_draws,
        }),
        Some(("sampled", n)) => {
            let n: usize = n.parse().with_context(|| format!("bad draw count {n:?}"))?;
            if n == 0 {
                bail!("draw count must be positive");
            }
            Ok(DtMode::Sampled { draws: Some(n) })
        }
        _ => bail!("unknown dt mode {s:?}; expected sampled, sampled:<m> or exhaustive"),
    }
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let cfg = match path {
            None => Self::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                let ext = p.extension().and_then(|e| e.to_str()).unwrap_or("");
                match ext {
                    "json" => serde_json::from_str(&text)
                        .with_context(|| format!("parsing {}", p.display()))?,
                    "toml" => toml::from_str(&text)
                        .with_context(|| format!("parsing {}", p.display()))?,
                    other => bail!("config must be .toml or .json, got {other:?}"),
                }
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.languages.is_empty() {
            bail!("languages must not be empty");
        }
        if !self.languages.contains(&self.source_language) {
            bail!(
                "source_language {} is not among languages",
                self.source_language
            );
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(dup) = self.languages.iter().find(|l| !seen.insert(*l)) {
            bail!("language {dup} listed twice");
        }
        self.dt_config(None)?;
        Ok(())
    }

    pub fn dt_config(&self, mode_override: Option<&str>) -> Result<DtConfig> {
        let mode = parse_dt_mode(mode_override.unwrap_or(&self.dt.mode), self.dt.draws)?;
        Ok(DtConfig {
            mode,
            rng_seed: self.dt.rng_seed,
        })
    }

    /// Embedder argv prefix.
    pub fn embedder_command(&self, flag: Option<&str>) -> Result<Vec<String>> {
        if let Some(cmd) = flag {
            let parts: Vec<String> = cmd.split_whitespace().map(str::to_string).collect();
            if parts.is_empty() {
                bail!("--embedder-cmd is empty");
            }
            return Ok(parts);
        }
        if !self.embedder.command.is_empty() {
            return Ok(self.embedder.command.clone());
        }
        let exe = std::env::current_exe().context("locating this executable")?;
        let stub = exe.with_file_name(format!("coverage-stub-embedder{}", std::env::consts::EXE_SUFFIX));
        Ok(vec![stub.display().to_string()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_and_json_agree() {
        let dir = tempfile::tempdir().unwrap();
        let t = dir.path().join("c.toml");
        std::fs::write(&t, "languages = [\"en\", \"ja\"]\nsource_language = \"ja\"\n[dt]\nmode = \"exhaustive\"\n").unwrap();
        let j = dir.path().join("c.json");
        std::fs::write(&j, r#"{"languages": ["en", "ja"], "source_language": "ja", "dt": {"mode": "exhaustive"}}"#).unwrap();
        let a = Config::load(Some(&t)).unwrap();
        let b = Config::load(Some(&j)).unwrap();
        assert_eq!(a.languages, b.languages);
        assert_eq!(a.dt_config(None).unwrap(), b.dt_config(None).unwrap());
        assert_eq!(a.dt_config(None).unwrap().mode, DtMode::Exhaustive);
    }

    #[test]
    fn rejects_bad_configs() {
        let dir = tempfile::tempdir().unwrap();
        let cases = [
            "languages = [\"en\", \"EN!\"]\n",
            "languages = [\"es\"]\n",
            "languages = []\n",
            "unknown_key = 1\n",
            "[dt]\nmode = \"sometimes\"\n",
        ];
        for (i, c) in cases.iter().enumerate() {
            let p = dir.path().join(format!("c{i}.toml"));
            std::fs::write(&p, c).unwrap();
            assert!(Config::load(Some(&p)).is_err(), "{c}");
        }
    }

    #[test]
    fn dt_modes() {
        assert_eq!(parse_dt_mode("sampled:64", None).unwrap(), DtMode::Sampled { draws: Some(64) });
        assert_eq!(parse_dt_mode("sampled", Some(5)).unwrap(), DtMode::Sampled { draws: Some(5) });
        assert!(parse_dt_mode("sampled:0", None).is_err());
    }
}
