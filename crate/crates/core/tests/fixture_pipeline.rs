use std::path::{Path, PathBuf};

use coverage_core::concepts::{
    read_term_file, ConceptPipeline, DiscardReason, FixtureSynsets, FixtureTranslator,
    PipelineInputs, RetryPolicy, TaggedStream, TermSource, TranslationService,
};
use coverage_core::lang::Lang;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/concepts-v1")
}

fn langs() -> Vec<Lang> {
    ["en", "es", "de", "zh", "ja", "he", "id"]
        .iter()
        .map(|c| Lang::new(c).unwrap())
        .collect()
}

fn inputs(dir: &Path) -> PipelineInputs {
    let read = |f: &str| std::fs::read_to_string(dir.join("sources").join(f)).unwrap();
    PipelineInputs {
        streams: vec![
            TaggedStream::new(TermSource::TvCaptions, read("tv_captions.txt")),
            TaggedStream::new(TermSource::Fiction, read("fiction.txt")),
        ],
        label_set: read_term_file(&dir.join("labels.txt")).unwrap(),
        denylist: read_term_file(&dir.join("denylist.txt")).unwrap(),
    }
}

fn translators(dir: &Path, order: &[&str]) -> Vec<FixtureTranslator> {
    order
        .iter()
        .map(|id| FixtureTranslator::new(*id, dir.join("translators").join(id)))
        .collect()
}

fn run(order: &[&str]) -> coverage_core::concepts::PipelineOutput {
    let dir = fixtures();
    let ts = translators(&dir, order);
    let synsets = FixtureSynsets::new(dir.join("synsets"));
    let p = ConceptPipeline {
        languages: langs(),
        source_language: Lang::new("en").unwrap(),
        top_k: 2000,
        services: ts.iter().map(|t| t as &dyn TranslationService).collect(),
        synsets: &synsets,
        retry: RetryPolicy {
            max_retries: 1,
            backoff_ms: 1,
        },
        max_in_flight: 8,
        version_label: "fixture".into(),
    };
    p.run(&inputs(&dir)).unwrap()
}

#[test]
fn library_pipeline_matches_gold_list() {
    let out = run(&["google", "bing", "baidu", "itranslate"]);
    let expected = std::fs::read_to_string(fixtures().join("expected.tsv")).unwrap();
    assert_eq!(out.list.to_tsv(), expected);
    assert!(out.tally.is_partition());
    assert_eq!(out.tally.input_terms, 215);
    assert_eq!(out.malformed_lines, 2);
    for (reason, n) in [
        (DiscardReason::Untranslatable, 5),
        (DiscardReason::UnfilledLanguage, 3),
        (DiscardReason::NonNoun, 5),
        (DiscardReason::SynsetMiss, 4),
        (DiscardReason::Denylist, 5),
    ] {
        assert_eq!(out.tally.count(reason), n, "{reason}");
    }
    assert!(out.version.starts_with("fixture+"));
}

#[test]
fn lesser_service_order_does_not_change_the_list() {
    let a = run(&["google", "bing", "baidu", "itranslate"]);
    let b = run(&["google", "bing", "itranslate", "baidu"]);
    assert_eq!(a.list.to_tsv(), b.list.to_tsv());
}

#[test]
fn provenance_records_fills() {
    let out = run(&["google", "bing", "baidu", "itranslate"]);
    let he = Lang::new("he").unwrap();
    let filled = out
        .list
        .rows
        .iter()
        .filter(|r| r.provenance.get(&he).map(String::as_str) == Some("itranslate"))
        .count();
    assert!(filled > 0);
    for r in &out.list.rows {
        assert_eq!(r.provenance.len(), 7, "{}", r.concept_id);
    }
}
