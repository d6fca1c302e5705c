//! Scores over embedding populations and the per-run score table.

mod kernel;
mod possession;

pub use kernel::{
    cosine, cross_consistency, default_draws, inverse_distinctiveness, self_consistency,
    word_correctness, DtConfig, DtMode, Pool, MAX_DEFAULT_DRAWS,
};
pub use possession::{classify_possession, PossessionStatus, PossessionThresholds};

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::lang::Lang;
use crate::store::{EmbeddingSet, TextEmbeddingSet};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("zero-norm vector")]
    ZeroNorm,
    #[error("need at least 2 images, got {0}")]
    TooFewImages(usize),
    #[error("empty image set")]
    EmptySet,
    #[error("no other concepts to compare against")]
    EmptyPool,
    #[error("text vector is not unit norm (norm {0})")]
    NotUnitNorm(f64),
    #[error("sampled mode needs at least one draw")]
    ZeroDraws,
    #[error("no text embedding for concept {0}")]
    MissingText(String),
    #[error("no embeddings for {concept_id}/{language}")]
    MissingImages { concept_id: String, language: Lang },
    #[error("bad score table: {0}")]
    Table(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptScores {
    pub model_id: String,
    pub language: Lang,
    pub concept_id: String,
    /// Absent when the language has no other concept to form a pool.
    pub dt: Option<f64>,
    pub sc: f64,
    /// Absent when the source language has no images for the concept.
    pub xc: Option<f64>,
    pub wc: f64,
    pub n_effective: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedPopulation {
    pub concept_id: String,
    pub language: Lang,
    pub n_effective: usize,
}

/// Image embeddings of one run keyed by `(concept_id, language)`, plus the
/// source-language text embeddings of every concept.
#[derive(Debug, Clone)]
pub struct RunEmbeddings {
    pub model_id: String,
    pub images: BTreeMap<(String, Lang), EmbeddingSet>,
    pub text: TextEmbeddingSet,
}

#[derive(Debug, Clone)]
pub struct ScoreConfig {
    pub source_language: Lang,
    pub dt: DtConfig,
    pub thresholds: PossessionThresholds,
}

/// Per-population seed so sampled scores do not depend on scheduling.
fn row_seed(base: u64, language: &Lang, concept_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update(language.as_str().as_bytes());
    h.update([0]);
    h.update(concept_id.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Score every population with at least two images. Rows are ordered by
/// language, then concept.
pub fn score_run(emb: &RunEmbeddings, cfg: &ScoreConfig) -> Result<ScoreTable, MetricError> {
    let mut by_lang: BTreeMap<&Lang, Vec<(&str, &EmbeddingSet)>> = BTreeMap::new();
    for ((c, l), set) in &emb.images {
        by_lang.entry(l).or_default().push((c.as_str(), set));
    }
    let jobs: Vec<(&String, &Lang, &EmbeddingSet)> =
        emb.images.iter().map(|((c, l), s)| (c, l, s)).collect();

    let results: Vec<Result<Option<ConceptScores>, MetricError>> = jobs
        .par_iter()
        .map(|&(concept, lang, set)| {
            if set.len() < 2 {
                return Ok(None);
            }
            let target = set.vectors();
            let sc = self_consistency(target)?;
            let xc = match emb
                .images
                .get(&(concept.clone(), cfg.source_language.clone()))
            {
                Some(src) if !src.is_empty() => Some(cross_consistency(target, src.vectors())?),
                _ => None,
            };
            let text = emb
                .text
                .get(concept)
                .ok_or_else(|| MetricError::MissingText(concept.clone()))?;
            let wc = word_correctness(text, target)?;
            let others = by_lang[lang].iter().map(|(c, s)| (*c, s.vectors()));
            let dt = match Pool::excluding(concept, others) {
                Ok(pool) => {
                    let dcfg = DtConfig {
                        mode: cfg.dt.mode,
                        rng_seed: row_seed(cfg.dt.rng_seed, lang, concept),
                    };
                    Some(inverse_distinctiveness(target, &pool, &dcfg)?)
                }
                Err(MetricError::EmptyPool) => None,
                Err(e) => return Err(e),
            };
            Ok(Some(ConceptScores {
                model_id: emb.model_id.clone(),
                language: lang.clone(),
                concept_id: concept.clone(),
                dt,
                sc,
                xc,
                wc,
                n_effective: set.len(),
            }))
        })
        .collect();

    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (r, &(concept, lang, set)) in results.into_iter().zip(&jobs) {
        match r? {
            Some(row) => rows.push(row),
            None => skipped.push(SkippedPopulation {
                concept_id: concept.clone(),
                language: lang.clone(),
                n_effective: set.len(),
            }),
        }
    }
    let mut table = ScoreTable {
        rows,
        thresholds: cfg.thresholds,
        skipped,
    };
    table.sort();
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub rows: Vec<ConceptScores>,
    pub thresholds: PossessionThresholds,
    #[serde(default)]
    pub skipped: Vec<SkippedPopulation>,
}

pub const CSV_HEADER: &str = "model,language,concept,dt,sc,xc,wc,n_effective,possessed";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ScoreTable {
    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| {
            (&a.model_id, &a.language, &a.concept_id).cmp(&(&b.model_id, &b.language, &b.concept_id))
        });
        self.skipped
            .sort_by(|a, b| (&a.language, &a.concept_id).cmp(&(&b.language, &b.concept_id)));
    }

    pub fn possession(&self, row: &ConceptScores) -> PossessionStatus {
        classify_possession(row.xc, row.wc, &self.thresholds)
    }

    /// Absent scores are empty cells.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.model_id,
                r.language,
                r.concept_id,
                opt(r.dt),
                r.sc,
                opt(r.xc),
                r.wc,
                r.n_effective,
                self.possession(r).possessed
            );
        }
        out
    }

    /// Parse [`Self::to_csv`] output. The `possessed` column is recomputed
    /// from `thresholds`, not read.
    pub fn from_csv(text: &str, thresholds: PossessionThresholds) -> Result<Self, MetricError> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim_end() == CSV_HEADER => {}
            other => {
                return Err(MetricError::Table(format!(
                    "expected header {CSV_HEADER:?}, got {other:?}"
                )))
            }
        }
        let bad = |n: usize, what: &str| MetricError::Table(format!("line {}: {what}", n + 2));
        let num = |n: usize, s: &str| s.parse::<f64>().map_err(|_| bad(n, &format!("bad number {s:?}")));
        let opt_num = |n: usize, s: &str| {
            if s.is_empty() {
                Ok(None)
            } else {
                num(n, s).map(Some)
            }
        };
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 9 {
                return Err(bad(n, &format!("expected 9 fields, got {}", f.len())));
            }
            rows.push(ConceptScores {
                model_id: f[0].to_string(),
                language: Lang::new(f[1]).map_err(|e| bad(n, &e.to_string()))?,
                concept_id: f[2].to_string(),
                dt: opt_num(n, f[3])?,
                sc: num(n, f[4])?,
                xc: opt_num(n, f[5])?,
                wc: num(n, f[6])?,
                n_effective: f[7].parse().map_err(|_| bad(n, "bad n_effective"))?,
            });
        }
        Ok(Self {
            rows,
            thresholds,
            skipped: Vec::new(),
        })
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Row<'a> {
            #[serde(flatten)]
            scores: &'a ConceptScores,
            possessed: bool,
        }
        #[derive(Serialize)]
        struct Doc<'a> {
            thresholds: &'a PossessionThresholds,
            rows: Vec<Row<'a>>,
            skipped: &'a [SkippedPopulation],
        }
        let doc = Doc {
            thresholds: &self.thresholds,
            rows: self
                .rows
                .iter()
                .map(|r| Row {
                    scores: r,
                    possessed: self.possession(r).possessed,
                })
                .collect(),
            skipped: &self.skipped,
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("score table serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, MetricError> {
        let mut t: Self = serde_json::from_str(text).map_err(|e| MetricError::Table(e.to_string()))?;
        t.sort();
        Ok(t)
    }
}
