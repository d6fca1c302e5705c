//! Frequency-list ingestion and source-term selection.

use std::collections::BTreeMap;

use super::{normalize_term, ConceptError, TermCandidate, TermSource};

/// One frequency list: UTF-8 text, one term per line, optionally followed by
/// whitespace and an integer count.
#[derive(Debug, Clone)]
pub struct TaggedStream {
    pub source: TermSource,
    pub text: String,
}

impl TaggedStream {
    pub fn new(source: TermSource, text: impl Into<String>) -> Self {
        Self {
            source,
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub candidates: Vec<TermCandidate>,
    pub malformed: usize,
    /// `(stream index, 1-based line number)` of each skipped line.
    pub malformed_lines: Vec<(usize, usize)>,
}

struct Parsed {
    term: String,
    count: Option<u64>,
}

fn parse_line(line: &str) -> Option<Parsed> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    match tokens.as_slice() {
        [] => None,
        [only] => {
            if only.parse::<u64>().is_ok() {
                return None;
            }
            normalize_term(only).map(|term| Parsed { term, count: None })
        }
        [head @ .., last] => match last.parse::<u64>() {
            Ok(count) => normalize_term(&head.join(" ")).map(|term| Parsed {
                term,
                count: Some(count),
            }),
            Err(_) => normalize_term(&tokens.join(" ")).map(|term| Parsed { term, count: None }),
        },
    }
}

/// Rank each stream, then merge keeping each surface's best (lowest) rank.
///
/// Within a stream, ranks follow descending count when every line carries a
/// count (ties keep line order) and plain line order otherwise. Label-set
/// streams rank every entry 0. Output is ordered by `(rank, surface)`.
pub fn ingest_frequency_lists(streams: &[TaggedStream]) -> Result<IngestReport, ConceptError> {
    if streams.is_empty() {
        return Err(ConceptError::NoSources);
    }
    let mut report = IngestReport::default();
    let mut best: BTreeMap<String, TermCandidate> = BTreeMap::new();

    for (si, stream) in streams.iter().enumerate() {
        let mut parsed = Vec::new();
        for (li, line) in stream.text.lines().enumerate() {
            match parse_line(line) {
                Some(p) => parsed.push(p),
                None => {
                    report.malformed += 1;
                    report.malformed_lines.push((si, li + 1));
                }
            }
        }
        if parsed.iter().all(|p| p.count.is_some()) {
            // stable: equal counts keep line order
            parsed.sort_by_key(|p| std::cmp::Reverse(p.count));
        }
        for (pos, p) in parsed.into_iter().enumerate() {
            let rank = match stream.source {
                TermSource::LabelSet => 0,
                _ => pos as u32 + 1,
            };
            let cand = TermCandidate {
                surface: p.term.clone(),
                frequency_rank: rank,
                source: stream.source,
            };
            match best.get(&p.term) {
                Some(prev) if prev.frequency_rank <= rank => {}
                _ => {
                    best.insert(p.term, cand);
                }
            }
        }
    }

    let mut out: Vec<TermCandidate> = best.into_values().collect();
    out.sort_by(|a, b| {
        (a.frequency_rank, &a.surface).cmp(&(b.frequency_rank, &b.surface))
    });
    report.candidates = out;
    Ok(report)
}

/// Keep the `top_k` best-ranked frequency terms plus every label-set term.
/// Duplicates collapse onto the label-set entry. Output is ordered by
/// `(rank, surface)`.
pub fn select_source_terms(
    candidates: &[TermCandidate],
    top_k: usize,
    label_set: &[String],
) -> Vec<TermCandidate> {
    let mut freq: Vec<&TermCandidate> = candidates
        .iter()
        .filter(|c| c.source != TermSource::LabelSet)
        .collect();
    freq.sort_by(|a, b| (a.frequency_rank, &a.surface).cmp(&(b.frequency_rank, &b.surface)));

    let mut chosen: BTreeMap<String, TermCandidate> = BTreeMap::new();
    for c in freq.into_iter().take(top_k) {
        chosen.entry(c.surface.clone()).or_insert_with(|| c.clone());
    }
    let labels = candidates
        .iter()
        .filter(|c| c.source == TermSource::LabelSet)
        .cloned()
        .chain(label_set.iter().filter_map(|s| TermCandidate::label(s)));
    for l in labels {
        chosen.insert(l.surface.clone(), l);
    }

    let mut out: Vec<TermCandidate> = chosen.into_values().collect();
    out.sort_by(|a, b| (a.frequency_rank, &a.surface).cmp(&(b.frequency_rank, &b.surface)));
    out
}
