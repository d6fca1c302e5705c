//! Knowledge-graph verification of melded rows.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::meld::Melded;
use super::translate::ServiceError;
use super::{ConceptError, ConceptRow};
use crate::lang::{fold, slugify, Lang};

/// What the knowledge graph knows about a source term: whether it is a noun
/// and which surfaces are linked to its node in each language.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynsetEvidence {
    pub source_term: String,
    pub is_noun: bool,
    #[serde(alias = "linked")]
    pub linked_surfaces: BTreeMap<Lang, BTreeSet<String>>,
}

pub trait SynsetSource: Send + Sync {
    fn lookup(&self, term: &str) -> Result<SynsetEvidence, ServiceError>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verification {
    Kept(ConceptRow),
    NonNoun,
    /// The melded surface for `language` is not linked to the synset.
    Miss { language: Lang },
}

/// Keep a melded row only if the term is a noun and every language's surface
/// appears (case-folded) among that language's linked surfaces.
pub fn verify_against_synsets(
    concept_id: &str,
    melded: &Melded,
    evidence: &SynsetEvidence,
) -> Verification {
    if !evidence.is_noun {
        return Verification::NonNoun;
    }
    for (lang, surface) in &melded.surfaces {
        let linked = evidence
            .linked_surfaces
            .get(lang)
            .is_some_and(|set| set.iter().any(|s| fold(s) == fold(surface)));
        if !linked {
            return Verification::Miss {
                language: lang.clone(),
            };
        }
    }
    Verification::Kept(ConceptRow {
        concept_id: concept_id.to_string(),
        surfaces: melded.surfaces.clone(),
        provenance: melded.provenance.clone(),
    })
}

#[derive(Deserialize)]
struct EvidenceBody {
    is_noun: bool,
    #[serde(default, alias = "linked_surfaces")]
    linked: BTreeMap<String, Vec<String>>,
}

impl EvidenceBody {
    fn into_evidence(self, term: &str) -> SynsetEvidence {
        SynsetEvidence {
            source_term: term.to_string(),
            is_noun: self.is_noun,
            linked_surfaces: self
                .linked
                .into_iter()
                .filter_map(|(l, v)| Lang::new(&l).ok().map(|l| (l, v.into_iter().collect())))
                .collect(),
        }
    }
}

/// Replays `<dir>/<slug(term)>.json` holding
/// `{"is_noun": bool, "linked": {"<lang>": ["surface", ...]}}`.
#[derive(Debug, Clone)]
pub struct FixtureSynsets {
    dir: PathBuf,
}

impl FixtureSynsets {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
}

impl SynsetSource for FixtureSynsets {
    fn lookup(&self, term: &str) -> Result<SynsetEvidence, ServiceError> {
        let path = self.dir.join(format!("{}.json", slugify(term)));
        let raw = std::fs::read(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                ServiceError::NotFound
            } else {
                ServiceError::Failed(format!("{}: {e}", path.display()))
            }
        })?;
        let body: EvidenceBody = serde_json::from_slice(&raw)
            .map_err(|e| ServiceError::Failed(format!("{}: {e}", path.display())))?;
        Ok(body.into_evidence(term))
    }
}

/// Live lookup: `GET <endpoint>?lemma=<term>` returning the fixture JSON shape.
pub struct HttpSynsets {
    endpoint: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpSynsets {
    pub fn new(
        endpoint: impl Into<String>,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Result<Self, ConceptError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ConceptError::Config(format!("HTTP client: {e}")))?;
        Ok(Self {
            endpoint: endpoint.into(),
            api_key,
            client,
        })
    }
}

impl SynsetSource for HttpSynsets {
    fn lookup(&self, term: &str) -> Result<SynsetEvidence, ServiceError> {
        let mut url = reqwest::Url::parse(&self.endpoint)
            .map_err(|e| ServiceError::Failed(format!("bad endpoint: {e}")))?;
        url.query_pairs_mut().append_pair("lemma", term);
        let mut req = self.client.get(url);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                ServiceError::Timeout
            } else {
                ServiceError::Failed(e.to_string())
            }
        })?;
        match resp.status().as_u16() {
            429 => return Err(ServiceError::RateLimited),
            404 => return Err(ServiceError::NotFound),
            s if !(200..300).contains(&s) => {
                return Err(ServiceError::Failed(format!("HTTP {s}")))
            }
            _ => {}
        }
        let body: EvidenceBody = resp
            .json()
            .map_err(|e| ServiceError::Failed(format!("bad response body: {e}")))?;
        Ok(body.into_evidence(term))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l(c: &str) -> Lang {
        Lang::new(c).unwrap()
    }

    fn melded(pairs: &[(&str, &str)]) -> Melded {
        Melded {
            surfaces: pairs.iter().map(|(k, v)| (l(k), v.to_string())).collect(),
            provenance: pairs.iter().map(|(k, _)| (l(k), "g".to_string())).collect(),
        }
    }

    fn evidence(is_noun: bool, pairs: &[(&str, &[&str])]) -> SynsetEvidence {
        SynsetEvidence {
            source_term: "dog".into(),
            is_noun,
            linked_surfaces: pairs
                .iter()
                .map(|(k, v)| (l(k), v.iter().map(|s| s.to_string()).collect()))
                .collect(),
        }
    }

    #[test]
    fn all_linked_is_kept() {
        let m = melded(&[("en", "dog"), ("es", "perro"), ("de", "Hund")]);
        let e = evidence(true, &[("en", &["dog", "hound"]), ("es", &["Perro", "can"]), ("de", &["hund"])]);
        match verify_against_synsets("dog", &m, &e) {
            Verification::Kept(row) => {
                assert_eq!(row.concept_id, "dog");
                assert_eq!(row.surfaces.len(), 3);
                assert_eq!(row.provenance[&l("es")], "g");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_noun_discarded() {
        let m = melded(&[("en", "run")]);
        assert_eq!(
            verify_against_synsets("run", &m, &evidence(false, &[("en", &["run"])])),
            Verification::NonNoun
        );
    }

    #[test]
    fn unlinked_surface_discarded() {
        let m = melded(&[("en", "dog"), ("es", "perro")]);
        let e = evidence(true, &[("en", &["dog"]), ("es", &["can"])]);
        assert_eq!(
            verify_against_synsets("dog", &m, &e),
            Verification::Miss { language: l("es") }
        );
        let e = evidence(true, &[("en", &["dog"])]);
        assert_eq!(
            verify_against_synsets("dog", &m, &e),
            Verification::Miss { language: l("es") }
        );
    }

    #[test]
    fn fixture_lookup() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("dog.json"),
            r#"{"is_noun": true, "linked": {"es": ["perro"], "zz!": ["x"]}}"#,
        )
        .unwrap();
        let s = FixtureSynsets::new(dir.path());
        let e = s.lookup("Dog").unwrap();
        assert!(e.is_noun);
        assert_eq!(e.linked_surfaces.len(), 1);
        assert_eq!(s.lookup("cat"), Err(ServiceError::NotFound));
    }
}
