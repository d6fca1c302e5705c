//! Translator ensemble clients.
//!
//! A [`TranslationService`] answers one source term with a language→surface
//! map. Two implementations ship: [`FixtureTranslator`] replays recorded JSON
//! files and [`HttpTranslator`] speaks a small JSON protocol to a live
//! endpoint or proxy.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::ConceptError;
use crate::lang::{normalize_surface, slugify, Lang};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ServiceError {
    #[error("rate limited")]
    RateLimited,
    #[error("timed out")]
    Timeout,
    #[error("no translation available")]
    NotFound,
    #[error("{0}")]
    Failed(String),
}

impl ServiceError {
    fn retryable(&self) -> bool {
        matches!(self, ServiceError::RateLimited | ServiceError::Timeout)
    }
}

pub trait TranslationService: Send + Sync {
    fn id(&self) -> &str;

    fn translate(
        &self,
        term: &str,
        source: &Lang,
        targets: &[Lang],
    ) -> Result<BTreeMap<Lang, String>, ServiceError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    /// Delay before the first retry; doubles on each further attempt.
    pub backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            backoff_ms: 500,
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            max_retries: 0,
            backoff_ms: 0,
        }
    }

    fn delay(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.backoff_ms.saturating_mul(1u64 << attempt.min(16)))
    }
}

/// Everything the ensemble returned for one source term.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationCandidates {
    pub source_term: String,
    pub per_service: BTreeMap<String, BTreeMap<Lang, String>>,
    pub service_language_counts: BTreeMap<String, usize>,
    /// Services that produced nothing, with the reason.
    pub failures: BTreeMap<String, String>,
}

impl TranslationCandidates {
    pub fn is_untranslatable(&self) -> bool {
        self.per_service.is_empty()
    }
}

fn call_with_retry(
    client: &dyn TranslationService,
    term: &str,
    source: &Lang,
    targets: &[Lang],
    retry: &RetryPolicy,
) -> Result<BTreeMap<Lang, String>, ServiceError> {
    let mut attempt = 0;
    loop {
        match client.translate(term, source, targets) {
            Err(e) if e.retryable() && attempt < retry.max_retries => {
                let d = retry.delay(attempt);
                log::debug!("{}: {e} for {term:?}, retrying in {d:?}", client.id());
                if !d.is_zero() {
                    thread::sleep(d);
                }
                attempt += 1;
            }
            other => return other,
        }
    }
}

/// Ask every client for `term`. A failing client leaves its entry absent and
/// never aborts the term.
pub fn query_translators(
    term: &str,
    source: &Lang,
    targets: &[Lang],
    clients: &[&dyn TranslationService],
    retry: &RetryPolicy,
) -> Result<TranslationCandidates, ConceptError> {
    if clients.is_empty() {
        return Err(ConceptError::NoClients);
    }
    let mut out = TranslationCandidates {
        source_term: term.to_string(),
        ..Default::default()
    };
    for client in clients {
        match call_with_retry(*client, term, source, targets, retry) {
            Ok(map) => {
                let kept: BTreeMap<Lang, String> = map
                    .into_iter()
                    .filter(|(l, _)| targets.contains(l))
                    .map(|(l, s)| (l, normalize_surface(&s)))
                    .filter(|(_, s)| !s.is_empty())
                    .collect();
                if kept.is_empty() {
                    out.failures
                        .insert(client.id().to_string(), "empty response".into());
                } else {
                    out.service_language_counts
                        .insert(client.id().to_string(), kept.len());
                    out.per_service.insert(client.id().to_string(), kept);
                }
            }
            Err(e) => {
                out.failures.insert(client.id().to_string(), e.to_string());
            }
        }
    }
    Ok(out)
}

/// Query many terms with at most `max_in_flight` concurrent requests per
/// service. Results come back in input order.
pub fn query_many(
    terms: &[String],
    source: &Lang,
    targets: &[Lang],
    clients: &[&dyn TranslationService],
    retry: &RetryPolicy,
    max_in_flight: usize,
) -> Result<Vec<TranslationCandidates>, ConceptError> {
    if clients.is_empty() {
        return Err(ConceptError::NoClients);
    }
    let workers = max_in_flight.max(1).min(terms.len().max(1));
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<TranslationCandidates>>> = Mutex::new(vec![None; terms.len()]);
    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(term) = terms.get(i) else { break };
                // clients is non-empty, so this cannot fail
                let c = query_translators(term, source, targets, clients, retry)
                    .expect("non-empty client list");
                results.lock().unwrap()[i] = Some(c);
            });
        }
    });
    Ok(results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|c| c.expect("every term visited"))
        .collect())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum FixtureBody {
    Error { error: String },
    Map(BTreeMap<String, String>),
}

/// Replays `<dir>/<slug(term)>.json`. A file holds either the raw
/// language→surface map or `{"error": "rate_limited" | "timeout" | ...}`.
/// A missing file means the service had no answer.
#[derive(Debug, Clone)]
pub struct FixtureTranslator {
    id: String,
    dir: PathBuf,
}

impl FixtureTranslator {
    pub fn new(id: impl Into<String>, dir: impl Into<PathBuf>) -> Self {
        Self {
            id: id.into(),
            dir: dir.into(),
        }
    }
}

impl TranslationService for FixtureTranslator {
    fn id(&self) -> &str {
        &self.id
    }

    fn translate(
        &self,
        term: &str,
        _source: &Lang,
        targets: &[Lang],
    ) -> Result<BTreeMap<Lang, String>, ServiceError> {
        let path = self.dir.join(format!("{}.json", slugify(term)));
        let raw = match std::fs::read(&path) {
            Ok(raw) => raw,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(ServiceError::NotFound)
            }
            Err(e) => return Err(ServiceError::Failed(format!("{}: {e}", path.display()))),
        };
        let body: FixtureBody = serde_json::from_slice(&raw)
            .map_err(|e| ServiceError::Failed(format!("{}: {e}", path.display())))?;
        match body {
            FixtureBody::Error { error } => Err(match error.as_str() {
                "rate_limited" => ServiceError::RateLimited,
                "timeout" => ServiceError::Timeout,
                _ => ServiceError::Failed(error),
            }),
            FixtureBody::Map(map) => Ok(map
                .into_iter()
                .filter_map(|(l, s)| Lang::new(&l).ok().map(|l| (l, s)))
                .filter(|(l, _)| targets.contains(l))
                .collect()),
        }
    }
}

#[derive(Serialize)]
struct HttpRequest<'a> {
    text: &'a str,
    source: &'a str,
    targets: Vec<&'a str>,
}

#[derive(Deserialize)]
struct HttpResponse {
    translations: BTreeMap<String, String>,
}

/// Live client for a JSON translation endpoint.
///
/// Request: `POST <endpoint>` with `{"text", "source", "targets": [..]}` and,
/// when a key is configured, `Authorization: Bearer <key>`.
/// Response: `{"translations": {"<lang>": "<surface>", ...}}`.
/// HTTP 429 maps to [`ServiceError::RateLimited`].
pub struct HttpTranslator {
    id: String,
    endpoint: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpTranslator {
    pub fn new(
        id: impl Into<String>,
        endpoint: impl Into<String>,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Result<Self, ConceptError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ConceptError::Config(format!("HTTP client: {e}")))?;
        Ok(Self {
            id: id.into(),
            endpoint: endpoint.into(),
            api_key,
            client,
        })
    }
}

impl TranslationService for HttpTranslator {
    fn id(&self) -> &str {
        &self.id
    }

    fn translate(
        &self,
        term: &str,
        source: &Lang,
        targets: &[Lang],
    ) -> Result<BTreeMap<Lang, String>, ServiceError> {
        let body = HttpRequest {
            text: term,
            source: source.as_str(),
            targets: targets.iter().map(Lang::as_str).collect(),
        };
        let mut req = self.client.post(&self.endpoint).json(&body);
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
        let status = resp.status();
        if status.as_u16() == 429 {
            return Err(ServiceError::RateLimited);
        }
        if status.as_u16() == 404 {
            return Err(ServiceError::NotFound);
        }
        if !status.is_success() {
            return Err(ServiceError::Failed(format!("HTTP {status}")));
        }
        let parsed: HttpResponse = resp
            .json()
            .map_err(|e| ServiceError::Failed(format!("bad response body: {e}")))?;
        Ok(parsed
            .translations
            .into_iter()
            .filter_map(|(l, s)| Lang::new(&l).ok().map(|l| (l, s)))
            .collect())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use std::sync::atomic::AtomicU32;

    pub(crate) fn langs(codes: &[&str]) -> Vec<Lang> {
        codes.iter().map(|c| Lang::new(c).unwrap()).collect()
    }

    /// Scripted in-memory service.
    pub(crate) struct Scripted {
        pub id: &'static str,
        pub map: Vec<(&'static str, &'static str)>,
        pub fail_first: u32,
        pub error: ServiceError,
        pub calls: AtomicU32,
    }

    impl Scripted {
        pub(crate) fn ok(id: &'static str, map: &[(&'static str, &'static str)]) -> Self {
            Self {
                id,
                map: map.to_vec(),
                fail_first: 0,
                error: ServiceError::Timeout,
                calls: AtomicU32::new(0),
            }
        }
    }

    impl TranslationService for Scripted {
        fn id(&self) -> &str {
            self.id
        }

        fn translate(
            &self,
            _term: &str,
            _source: &Lang,
            _targets: &[Lang],
        ) -> Result<BTreeMap<Lang, String>, ServiceError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.fail_first {
                return Err(self.error.clone());
            }
            Ok(self
                .map
                .iter()
                .map(|(l, s)| (Lang::new(l).unwrap(), s.to_string()))
                .collect())
        }
    }

    #[test]
    fn partial_failure_leaves_others_intact() {
        let a = Scripted::ok("a", &[("es", "perro"), ("de", "Hund")]);
        let b = Scripted {
            fail_first: u32::MAX,
            ..Scripted::ok("b", &[])
        };
        let en = Lang::new("en").unwrap();
        let c = query_translators(
            "dog",
            &en,
            &langs(&["es", "de"]),
            &[&a, &b],
            &RetryPolicy::none(),
        )
        .unwrap();
        assert_eq!(c.per_service.len(), 1);
        assert_eq!(c.service_language_counts["a"], 2);
        assert_eq!(c.failures["b"], "timed out");
        assert!(!c.is_untranslatable());
    }

    #[test]
    fn zero_clients_is_config_error() {
        let en = Lang::new("en").unwrap();
        assert!(matches!(
            query_translators("dog", &en, &[], &[], &RetryPolicy::none()),
            Err(ConceptError::NoClients)
        ));
    }

    #[test]
    fn rate_limit_retried_then_succeeds() {
        let a = Scripted {
            fail_first: 2,
            error: ServiceError::RateLimited,
            ..Scripted::ok("a", &[("es", "perro")])
        };
        let en = Lang::new("en").unwrap();
        let retry = RetryPolicy {
            max_retries: 2,
            backoff_ms: 0,
        };
        let c = query_translators("dog", &en, &langs(&["es"]), &[&a], &retry).unwrap();
        assert_eq!(c.per_service["a"][&Lang::new("es").unwrap()], "perro");
        assert_eq!(a.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn rate_limit_exhausted_is_absent() {
        let a = Scripted {
            fail_first: 10,
            error: ServiceError::RateLimited,
            ..Scripted::ok("a", &[("es", "perro")])
        };
        let en = Lang::new("en").unwrap();
        let retry = RetryPolicy {
            max_retries: 1,
            backoff_ms: 0,
        };
        let c = query_translators("dog", &en, &langs(&["es"]), &[&a], &retry).unwrap();
        assert!(c.is_untranslatable());
        assert_eq!(a.calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn non_benchmark_languages_dropped() {
        let a = Scripted::ok("a", &[("es", " perro "), ("fr", "chien")]);
        let en = Lang::new("en").unwrap();
        let c = query_translators("dog", &en, &langs(&["es"]), &[&a], &RetryPolicy::none())
            .unwrap();
        assert_eq!(c.service_language_counts["a"], 1);
        assert_eq!(c.per_service["a"][&Lang::new("es").unwrap()], "perro");
    }

    #[test]
    fn fixture_replay() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("dog.json"),
            r#"{"es": "perro", "de": "Hund", "xx-bad!": "?"}"#,
        )
        .unwrap();
        std::fs::write(dir.path().join("cat.json"), r#"{"error": "rate_limited"}"#).unwrap();
        let f = FixtureTranslator::new("g", dir.path());
        let en = Lang::new("en").unwrap();
        let t = langs(&["es", "de"]);
        let m = f.translate("dog", &en, &t).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(f.translate("cat", &en, &t), Err(ServiceError::RateLimited));
        assert_eq!(f.translate("cow", &en, &t), Err(ServiceError::NotFound));
    }

    #[test]
    fn query_many_preserves_order() {
        let a = Scripted::ok("a", &[("es", "x")]);
        let en = Lang::new("en").unwrap();
        let terms: Vec<String> = (0..20).map(|i| format!("t{i}")).collect();
        let out = query_many(&terms, &en, &langs(&["es"]), &[&a], &RetryPolicy::none(), 4)
            .unwrap();
        let got: Vec<&str> = out.iter().map(|c| c.source_term.as_str()).collect();
        let want: Vec<&str> = terms.iter().map(String::as_str).collect();
        assert_eq!(got, want);
    }
}
