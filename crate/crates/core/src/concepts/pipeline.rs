//! End-to-end concept-list construction with discard accounting.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ingest::{ingest_frequency_lists, select_source_terms, TaggedStream};
use super::meld::{MeldOutcome, Melder};
use super::synset::{verify_against_synsets, SynsetSource, Verification};
use super::translate::{query_many, RetryPolicy, ServiceError, TranslationService};
use super::{io_err, sidecar_path, version_tag, ConceptError, ConceptList, ConceptRow};
use crate::lang::{slugify, Lang};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscardReason {
    Untranslatable,
    UnfilledLanguage,
    NonNoun,
    SynsetMiss,
    Denylist,
}

impl DiscardReason {
    pub const ALL: [DiscardReason; 5] = [
        DiscardReason::Untranslatable,
        DiscardReason::UnfilledLanguage,
        DiscardReason::NonNoun,
        DiscardReason::SynsetMiss,
        DiscardReason::Denylist,
    ];
}

impl fmt::Display for DiscardReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DiscardReason::Untranslatable => "untranslatable",
            DiscardReason::UnfilledLanguage => "unfilled_language",
            DiscardReason::NonNoun => "non_noun",
            DiscardReason::SynsetMiss => "synset_miss",
            DiscardReason::Denylist => "denylist",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discard {
    pub term: String,
    pub detail: String,
}

/// `input_terms == emitted + Σ discards`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscardTally {
    pub input_terms: usize,
    pub emitted: usize,
    pub discards: BTreeMap<DiscardReason, Vec<Discard>>,
}

impl DiscardTally {
    pub fn count(&self, reason: DiscardReason) -> usize {
        self.discards.get(&reason).map_or(0, Vec::len)
    }

    pub fn total_discarded(&self) -> usize {
        self.discards.values().map(Vec::len).sum()
    }

    pub fn is_partition(&self) -> bool {
        self.input_terms == self.emitted + self.total_discarded()
    }

    fn push(&mut self, reason: DiscardReason, term: &str, detail: impl Into<String>) {
        self.discards.entry(reason).or_default().push(Discard {
            term: term.to_string(),
            detail: detail.into(),
        });
    }
}

/// Drop rows whose concept id matches a denylisted source surface. Order is
/// preserved; returns `(kept, removed)`.
pub fn postfilter(rows: Vec<ConceptRow>, denylist: &[String]) -> (Vec<ConceptRow>, Vec<ConceptRow>) {
    let deny: HashSet<String> = denylist.iter().map(|d| slugify(d)).collect();
    rows.into_iter().partition(|r| !deny.contains(&r.concept_id))
}

pub struct ConceptPipeline<'a> {
    pub languages: Vec<Lang>,
    pub source_language: Lang,
    pub top_k: usize,
    /// Ensemble members in priority order.
    pub services: Vec<&'a dyn TranslationService>,
    pub synsets: &'a dyn SynsetSource,
    pub retry: RetryPolicy,
    pub max_in_flight: usize,
    pub version_label: String,
}

#[derive(Debug, Clone, Default)]
pub struct PipelineInputs {
    pub streams: Vec<TaggedStream>,
    pub label_set: Vec<String>,
    pub denylist: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub version: String,
    pub source_language: Lang,
    pub list: ConceptList,
    pub tally: DiscardTally,
    pub malformed_lines: usize,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    version: &'a str,
    languages: &'a [Lang],
    source_language: &'a Lang,
    input_terms: usize,
    emitted: usize,
    malformed_lines: usize,
    discard_counts: BTreeMap<String, usize>,
    discards: &'a BTreeMap<DiscardReason, Vec<Discard>>,
    provenance: BTreeMap<&'a str, &'a BTreeMap<Lang, String>>,
}

impl PipelineOutput {
    pub fn sidecar_json(&self) -> String {
        let sidecar = Sidecar {
            version: &self.version,
            languages: &self.list.languages,
            source_language: &self.source_language,
            input_terms: self.tally.input_terms,
            emitted: self.tally.emitted,
            malformed_lines: self.malformed_lines,
            discard_counts: DiscardReason::ALL
                .iter()
                .map(|r| (r.to_string(), self.tally.count(*r)))
                .collect(),
            discards: &self.tally.discards,
            provenance: self
                .list
                .rows
                .iter()
                .map(|r| (r.concept_id.as_str(), &r.provenance))
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
        s.push('\n');
        s
    }

    /// Write the TSV list and its `<path>.json` sidecar.
    pub fn write(&self, tsv_path: &Path) -> Result<(), ConceptError> {
        if let Some(parent) = tsv_path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        fs::write(tsv_path, self.list.to_tsv()).map_err(io_err(tsv_path))?;
        let side = sidecar_path(tsv_path);
        fs::write(&side, self.sidecar_json()).map_err(io_err(&side))
    }
}

impl ConceptPipeline<'_> {
    fn lookup_synset(&self, term: &str) -> Result<super::SynsetEvidence, ServiceError> {
        let mut attempt = 0;
        loop {
            match self.synsets.lookup(term) {
                Err(ServiceError::RateLimited | ServiceError::Timeout)
                    if attempt < self.retry.max_retries =>
                {
                    let d = self.retry.backoff_ms.saturating_mul(1 << attempt.min(16));
                    if d > 0 {
                        std::thread::sleep(std::time::Duration::from_millis(d));
                    }
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    pub fn run(&self, inputs: &PipelineInputs) -> Result<PipelineOutput, ConceptError> {
        if !self.languages.contains(&self.source_language) {
            return Err(ConceptError::SourceNotInLanguages(self.source_language.clone()));
        }
        if self.services.is_empty() {
            return Err(ConceptError::NoClients);
        }
        let ingested = ingest_frequency_lists(&inputs.streams)?;
        let selected = select_source_terms(&ingested.candidates, self.top_k, &inputs.label_set);

        let mut tally = DiscardTally {
            input_terms: selected.len(),
            ..Default::default()
        };

        // Concept ids must be unique, non-empty slugs.
        let mut seen = HashSet::new();
        let mut terms = Vec::new();
        for c in &selected {
            let slug = slugify(&c.surface);
            if slug.is_empty() || !seen.insert(slug.clone()) {
                tally.push(
                    DiscardReason::Untranslatable,
                    &c.surface,
                    format!("unusable concept id {slug:?}"),
                );
            } else {
                terms.push(c.surface.clone());
            }
        }

        let targets: Vec<Lang> = self
            .languages
            .iter()
            .filter(|l| **l != self.source_language)
            .cloned()
            .collect();
        let candidates = query_many(
            &terms,
            &self.source_language,
            &targets,
            &self.services,
            &self.retry,
            self.max_in_flight,
        )?;

        let melder = Melder {
            languages: self.languages.clone(),
            source_language: self.source_language.clone(),
            priority: self.services.iter().map(|s| s.id().to_string()).collect(),
        };

        let mut rows = Vec::new();
        for cand in &candidates {
            let term = &cand.source_term;
            if cand.is_untranslatable() {
                let why: Vec<String> =
                    cand.failures.iter().map(|(s, e)| format!("{s}: {e}")).collect();
                tally.push(DiscardReason::Untranslatable, term, why.join("; "));
                continue;
            }
            let melded = match melder.meld(cand) {
                MeldOutcome::Melded(m) => m,
                MeldOutcome::Discard { missing } => {
                    let missing: Vec<&str> = missing.iter().map(Lang::as_str).collect();
                    tally.push(
                        DiscardReason::UnfilledLanguage,
                        term,
                        format!("missing {}", missing.join(",")),
                    );
                    continue;
                }
            };
            let evidence = match self.lookup_synset(term) {
                Ok(e) => e,
                Err(e) => {
                    tally.push(DiscardReason::SynsetMiss, term, format!("lookup failed: {e}"));
                    continue;
                }
            };
            match verify_against_synsets(&slugify(term), &melded, &evidence) {
                Verification::Kept(row) => rows.push(row),
                Verification::NonNoun => tally.push(DiscardReason::NonNoun, term, "not a noun"),
                Verification::Miss { language } => tally.push(
                    DiscardReason::SynsetMiss,
                    term,
                    format!(
                        "{language} surface {:?} not linked",
                        melded.surfaces.get(&language).map(String::as_str).unwrap_or("")
                    ),
                ),
            }
        }

        let (kept, removed) = postfilter(rows, &inputs.denylist);
        for r in &removed {
            let term = r.surface(&self.source_language).unwrap_or(&r.concept_id);
            tally.push(DiscardReason::Denylist, term, "denylisted");
        }
        tally.emitted = kept.len();
        debug_assert!(tally.is_partition());

        let list = ConceptList {
            languages: self.languages.clone(),
            rows: kept,
        };
        let version = version_tag(&self.version_label, &list.to_tsv());
        Ok(PipelineOutput {
            version,
            source_language: self.source_language.clone(),
            list,
            tally,
            malformed_lines: ingested.malformed,
        })
    }
}

/// Read a one-term-per-line file (label set, denylist). Blank lines and
/// `#` comments are ignored.
pub fn read_term_file(path: &Path) -> Result<Vec<String>, ConceptError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::concepts::synset::SynsetEvidence;
    use crate::concepts::translate::tests::Scripted;
    use crate::concepts::TermSource;
    use std::collections::BTreeSet;

    fn l(c: &str) -> Lang {
        Lang::new(c).unwrap()
    }

    fn row(id: &str) -> ConceptRow {
        ConceptRow {
            concept_id: id.into(),
            surfaces: BTreeMap::new(),
            provenance: BTreeMap::new(),
        }
    }

    #[test]
    fn postfilter_removes_denylisted() {
        let (kept, removed) = postfilter(vec![row("dog"), row("hike"), row("sea")], &["Hike".into()]);
        let ids: Vec<&str> = kept.iter().map(|r| r.concept_id.as_str()).collect();
        assert_eq!(ids, ["dog", "sea"]);
        assert_eq!(removed.len(), 1);
    }

    #[test]
    fn postfilter_empty_denylist_is_identity() {
        let rows = vec![row("b"), row("a")];
        let (kept, removed) = postfilter(rows.clone(), &[]);
        assert_eq!(kept, rows);
        assert!(removed.is_empty());
    }

    struct MapSynsets(BTreeMap<&'static str, SynsetEvidence>);

    impl SynsetSource for MapSynsets {
        fn lookup(&self, term: &str) -> Result<SynsetEvidence, ServiceError> {
            self.0.get(term).cloned().ok_or(ServiceError::NotFound)
        }
    }

    fn ev(noun: bool, pairs: &[(&str, &str)]) -> SynsetEvidence {
        SynsetEvidence {
            source_term: String::new(),
            is_noun: noun,
            linked_surfaces: pairs
                .iter()
                .map(|(k, v)| (l(k), BTreeSet::from([v.to_string()])))
                .collect(),
        }
    }

    #[test]
    fn accounting_partitions_inputs() {
        // Only "dog" and "hike" translate fully; the scripted service answers
        // every term identically so the synsets decide.
        let svc = Scripted::ok("g", &[("es", "perro")]);
        let synsets = MapSynsets(BTreeMap::from([
            ("dog", ev(true, &[("en", "dog"), ("es", "perro")])),
            ("hike", ev(true, &[("en", "hike"), ("es", "perro")])),
            ("run", ev(false, &[])),
            ("sea", ev(true, &[("en", "sea"), ("es", "mar")])),
        ]));
        let p = ConceptPipeline {
            languages: vec![l("en"), l("es")],
            source_language: l("en"),
            top_k: 10,
            services: vec![&svc],
            synsets: &synsets,
            retry: RetryPolicy::none(),
            max_in_flight: 2,
            version_label: "t".into(),
        };
        let inputs = PipelineInputs {
            streams: vec![TaggedStream::new(
                TermSource::Fiction,
                "dog\nhike\nrun\nsea\nghost\n\n",
            )],
            label_set: vec![],
            denylist: vec!["hike".into()],
        };
        let out = p.run(&inputs).unwrap();
        assert_eq!(out.tally.input_terms, 5);
        assert_eq!(out.tally.emitted, 1);
        assert_eq!(out.tally.count(DiscardReason::NonNoun), 1);
        // sea: "perro" not linked; ghost: no synset
        assert_eq!(out.tally.count(DiscardReason::SynsetMiss), 2);
        assert_eq!(out.tally.count(DiscardReason::Denylist), 1);
        assert!(out.tally.is_partition());
        assert_eq!(out.malformed_lines, 1);
        assert_eq!(out.list.rows[0].concept_id, "dog");
        assert_eq!(out.list.rows[0].provenance[&l("es")], "g");
    }

    #[test]
    fn source_language_must_be_configured() {
        let svc = Scripted::ok("g", &[]);
        let synsets = MapSynsets(BTreeMap::new());
        let p = ConceptPipeline {
            languages: vec![l("es")],
            source_language: l("en"),
            top_k: 10,
            services: vec![&svc],
            synsets: &synsets,
            retry: RetryPolicy::none(),
            max_in_flight: 1,
            version_label: "t".into(),
        };
        assert!(matches!(
            p.run(&PipelineInputs::default()),
            Err(ConceptError::SourceNotInLanguages(_))
        ));
    }
}
