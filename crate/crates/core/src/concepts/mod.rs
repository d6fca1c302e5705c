//! Translation-aligned concept lists.
//!
//! The pipeline runs frequency-list ingestion, source-term selection, a
//! translator ensemble, melding, synset verification and a denylist
//! post-filter. Each stage is usable on its own; [`pipeline`] wires them
//! together and keeps discard accounting.

pub mod ingest;
pub mod meld;
pub mod pipeline;
pub mod synset;
pub mod translate;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::lang::{normalize_surface, InvalidLang, Lang};

pub use ingest::{ingest_frequency_lists, select_source_terms, IngestReport, TaggedStream};
pub use meld::{meld_translations, MeldOutcome, Melded, Melder};
pub use pipeline::{
    postfilter, read_term_file, ConceptPipeline, Discard, DiscardReason, DiscardTally,
    PipelineInputs, PipelineOutput,
};
pub use synset::{
    verify_against_synsets, FixtureSynsets, HttpSynsets, SynsetEvidence, SynsetSource,
    Verification,
};
pub use translate::{
    query_translators, FixtureTranslator, HttpTranslator, RetryPolicy, ServiceError,
    TranslationCandidates, TranslationService,
};

#[derive(Debug, thiserror::Error)]
pub enum ConceptError {
    #[error("no frequency sources given")]
    NoSources,
    #[error("no translation services configured")]
    NoClients,
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Lang(#[from] InvalidLang),
    #[error("source language {0} is not among the benchmark languages")]
    SourceNotInLanguages(Lang),
    #[error("{0}")]
    Config(String),
    #[error("JSON error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ConceptError + '_ {
    move |source| ConceptError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Where a source-language term came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermSource {
    TvCaptions,
    Fiction,
    LabelSet,
}

impl fmt::Display for TermSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TermSource::TvCaptions => "tv_captions",
            TermSource::Fiction => "fiction",
            TermSource::LabelSet => "label_set",
        })
    }
}

impl std::str::FromStr for TermSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tv_captions" | "tv" => Ok(Self::TvCaptions),
            "fiction" => Ok(Self::Fiction),
            "label_set" | "labels" => Ok(Self::LabelSet),
            other => Err(format!("unknown term source {other:?}")),
        }
    }
}

/// A candidate source-language term. Label-set terms carry rank 0 and always
/// survive selection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermCandidate {
    pub surface: String,
    pub frequency_rank: u32,
    pub source: TermSource,
}

impl TermCandidate {
    pub fn label(surface: &str) -> Option<Self> {
        let surface = normalize_term(surface)?;
        Some(Self {
            surface,
            frequency_rank: 0,
            source: TermSource::LabelSet,
        })
    }
}

/// Source-language term normalization: NFC, trimmed, lowercase, inner
/// whitespace collapsed. `None` for an empty result.
pub fn normalize_term(s: &str) -> Option<String> {
    let s = normalize_surface(s).to_lowercase();
    let s = s.split_whitespace().collect::<Vec<_>>().join(" ");
    (!s.is_empty()).then_some(s)
}

/// Which stage produced a language's surface.
pub const PROVENANCE_SOURCE: &str = "source";

/// One concept's aligned surfaces, one per benchmark language.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptRow {
    pub concept_id: String,
    pub surfaces: BTreeMap<Lang, String>,
    /// Service id (or `source`) that supplied each language's surface.
    pub provenance: BTreeMap<Lang, String>,
}

impl ConceptRow {
    pub fn surface(&self, lang: &Lang) -> Option<&str> {
        self.surfaces.get(lang).map(String::as_str)
    }
}

/// An ordered concept list with its language columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptList {
    pub languages: Vec<Lang>,
    pub rows: Vec<ConceptRow>,
}

impl ConceptList {
    /// Tab-separated rendering: header `concept_id<TAB>lang...`, one row per
    /// concept. Tabs and newlines inside surfaces are replaced by spaces.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("concept_id");
        for l in &self.languages {
            out.push('\t');
            out.push_str(l.as_str());
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.concept_id);
            for l in &self.languages {
                out.push('\t');
                let s = row.surface(l).unwrap_or("");
                out.push_str(&s.replace(['\t', '\n', '\r'], " "));
            }
            out.push('\n');
        }
        out
    }

    pub fn parse_tsv(path: &Path, text: &str) -> Result<Self, ConceptError> {
        let perr = |line: usize, message: String| ConceptError::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| perr(1, "empty file".into()))?;
        let mut cols = header.split('\t');
        if cols.next() != Some("concept_id") {
            return Err(perr(1, "header must start with concept_id".into()));
        }
        let languages = cols.map(Lang::new).collect::<Result<Vec<_>, _>>()?;
        if languages.is_empty() {
            return Err(perr(1, "no language columns".into()));
        }
        let mut rows = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != languages.len() + 1 {
                return Err(perr(
                    i + 1,
                    format!("expected {} fields, got {}", languages.len() + 1, fields.len()),
                ));
            }
            let mut surfaces = BTreeMap::new();
            for (l, s) in languages.iter().zip(&fields[1..]) {
                let s = normalize_surface(s);
                if s.is_empty() {
                    return Err(perr(i + 1, format!("empty surface for {l}")));
                }
                surfaces.insert(l.clone(), s);
            }
            rows.push(ConceptRow {
                concept_id: fields[0].to_string(),
                surfaces,
                provenance: BTreeMap::new(),
            });
        }
        Ok(Self { languages, rows })
    }

    pub fn read_tsv(path: &Path) -> Result<Self, ConceptError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse_tsv(path, &text)
    }

    pub fn get(&self, concept_id: &str) -> Option<&ConceptRow> {
        self.rows.iter().find(|r| r.concept_id == concept_id)
    }
}

/// Version tag for a concept list: `<label>+<12 hex chars of sha256(tsv)>`.
pub fn version_tag(label: &str, tsv: &str) -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(tsv.as_bytes());
    let hex: String = digest[..6].iter().map(|b| format!("{b:02x}")).collect();
    format!("{label}+{hex}")
}

/// Path of the JSON sidecar next to a concept-list TSV.
pub fn sidecar_path(tsv: &Path) -> PathBuf {
    let mut s = tsv.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Load a concept list and its version: the sidecar's `version` when the
/// sidecar exists, otherwise a tag computed from the TSV itself.
pub fn read_versioned_list(tsv: &Path) -> Result<(ConceptList, String), ConceptError> {
    let list = ConceptList::read_tsv(tsv)?;
    let side = sidecar_path(tsv);
    let version = match fs::read_to_string(&side) {
        Ok(text) => {
            let v: serde_json::Value =
                serde_json::from_str(&text).map_err(|source| ConceptError::Json {
                    path: side.clone(),
                    source,
                })?;
            v.get("version")
                .and_then(|x| x.as_str())
                .map(str::to_string)
                .ok_or_else(|| ConceptError::Config(format!("{}: no version field", side.display())))?
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => version_tag("unlabeled", &list.to_tsv()),
        Err(e) => return Err(io_err(&side)(e)),
    };
    Ok((list, version))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, pairs: &[(&str, &str)]) -> ConceptRow {
        ConceptRow {
            concept_id: id.into(),
            surfaces: pairs
                .iter()
                .map(|(l, s)| (Lang::new(l).unwrap(), s.to_string()))
                .collect(),
            provenance: BTreeMap::new(),
        }
    }

    #[test]
    fn tsv_round_trip() {
        let list = ConceptList {
            languages: vec![Lang::new("en").unwrap(), Lang::new("ja").unwrap()],
            rows: vec![
                row("dog", &[("en", "dog"), ("ja", "犬")]),
                row("tent", &[("en", "tent"), ("ja", "テント")]),
            ],
        };
        let tsv = list.to_tsv();
        assert!(tsv.starts_with("concept_id\ten\tja\n"));
        let back = ConceptList::parse_tsv(Path::new("x.tsv"), &tsv).unwrap();
        assert_eq!(back, list);
    }

    #[test]
    fn tsv_rejects_short_rows_and_empty_surfaces() {
        let p = Path::new("x.tsv");
        assert!(ConceptList::parse_tsv(p, "concept_id\ten\tes\ndog\tdog\n").is_err());
        assert!(ConceptList::parse_tsv(p, "concept_id\ten\tes\ndog\tdog\t \n").is_err());
        assert!(ConceptList::parse_tsv(p, "id\ten\n").is_err());
        assert!(ConceptList::parse_tsv(p, "concept_id\tEN\n").is_err());
    }

    #[test]
    fn term_normalization() {
        assert_eq!(normalize_term("  Dog "), Some("dog".into()));
        assert_eq!(normalize_term("Aquarium   Fish"), Some("aquarium fish".into()));
        assert_eq!(normalize_term("   "), None);
    }

    #[test]
    fn version_tag_is_content_addressed() {
        let a = version_tag("1.0", "concept_id\ten\n");
        assert_eq!(a, version_tag("1.0", "concept_id\ten\n"));
        assert_ne!(a, version_tag("1.0", "concept_id\tes\n"));
        assert!(a.starts_with("1.0+") && a.len() == 4 + 12);
    }
}
