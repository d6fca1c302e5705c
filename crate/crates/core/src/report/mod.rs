//! Aggregates, distributions, correlations and rankings over score tables,
//! and their CSV / JSON / HTML emission.

mod html;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::lang::Lang;
use crate::metrics::{ConceptScores, ScoreTable};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("score table is empty")]
    EmptyTable,
    #[error("invalid histogram: {0}")]
    BadSpec(String),
    #[error("{a} and {b} share no concepts with a {metric} score")]
    NoCommonConcepts { a: Lang, b: Lang, metric: Metric },
    #[error("tables cover different keys; only in first: [{}]; only in second: [{}]", .only_a.join(", "), .only_b.join(", "))]
    KeyMismatch {
        only_a: Vec<String>,
        only_b: Vec<String>,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown report format {0:?}")]
    UnknownFormat(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Dt,
    Sc,
    Xc,
    Wc,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Dt, Metric::Sc, Metric::Xc, Metric::Wc];

    pub fn of(self, r: &ConceptScores) -> Option<f64> {
        match self {
            Metric::Dt => r.dt,
            Metric::Sc => Some(r.sc),
            Metric::Xc => r.xc,
            Metric::Wc => Some(r.wc),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Dt => "dt",
            Metric::Sc => "sc",
            Metric::Xc => "xc",
            Metric::Wc => "wc",
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown metric {s:?}; expected dt, sc, xc or wc"))
    }
}

/// Integer percent, rounding halves away from zero.
pub fn percent(x: f64) -> i64 {
    (x * 100.0).round() as i64
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for x in xs {
        sum += x;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

// ---------------------------------------------------------------- aggregates

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageAggregate {
    pub model_id: String,
    pub language: Lang,
    /// Over rows with an Xc score; absent if none has one.
    pub mean_xc: Option<f64>,
    pub mean_wc: f64,
    pub concept_count: usize,
}

/// Per-(model, language) means plus the row and column averages of the
/// model × language matrix, for one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricMatrix {
    pub metric: Metric,
    pub models: Vec<String>,
    pub languages: Vec<Lang>,
    /// `cells[model][language]`.
    pub cells: Vec<Vec<Option<f64>>>,
    pub row_means: Vec<Option<f64>>,
    pub column_means: Vec<Option<f64>>,
    pub overall: Option<f64>,
}

pub fn aggregate_by_language(rows: &[ConceptScores]) -> Result<Vec<LanguageAggregate>, ReportError> {
    if rows.is_empty() {
        return Err(ReportError::EmptyTable);
    }
    let mut groups: BTreeMap<(&str, &Lang), Vec<&ConceptScores>> = BTreeMap::new();
    for r in rows {
        groups.entry((&r.model_id, &r.language)).or_default().push(r);
    }
    Ok(groups
        .into_iter()
        .map(|((m, l), rs)| LanguageAggregate {
            model_id: m.to_string(),
            language: l.clone(),
            mean_xc: mean(rs.iter().filter_map(|r| r.xc)),
            mean_wc: mean(rs.iter().map(|r| r.wc)).expect("group is non-empty"),
            concept_count: rs.len(),
        })
        .collect())
}

pub fn metric_matrix(rows: &[ConceptScores], metric: Metric) -> MetricMatrix {
    let models: Vec<String> = rows
        .iter()
        .map(|r| r.model_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let languages: Vec<Lang> = rows
        .iter()
        .map(|r| r.language.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut acc: BTreeMap<(&str, &Lang), Vec<f64>> = BTreeMap::new();
    for r in rows {
        if let Some(v) = metric.of(r) {
            acc.entry((&r.model_id, &r.language)).or_default().push(v);
        }
    }
    let cells: Vec<Vec<Option<f64>>> = models
        .iter()
        .map(|m| {
            languages
                .iter()
                .map(|l| acc.get(&(m.as_str(), l)).and_then(|v| mean(v.iter().copied())))
                .collect()
        })
        .collect();
    let row_means = cells.iter().map(|row| mean(row.iter().flatten().copied())).collect();
    let column_means = (0..languages.len())
        .map(|j| mean(cells.iter().filter_map(|row| row[j])))
        .collect();
    let overall = mean(cells.iter().flatten().flatten().copied());
    MetricMatrix {
        metric,
        models,
        languages,
        cells,
        row_means,
        column_means,
        overall,
    }
}

fn pct_cell(v: Option<f64>) -> String {
    v.map(|x| percent(x).to_string()).unwrap_or_default()
}

impl MetricMatrix {
    /// ×100 integers; last column and last row are averages.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model");
        for l in &self.languages {
            let _ = write!(out, ",{l}");
        }
        out.push_str(",avg\n");
        for (i, m) in self.models.iter().enumerate() {
            out.push_str(m);
            for c in &self.cells[i] {
                let _ = write!(out, ",{}", pct_cell(*c));
            }
            let _ = writeln!(out, ",{}", pct_cell(self.row_means[i]));
        }
        out.push_str("avg");
        for c in &self.column_means {
            let _ = write!(out, ",{}", pct_cell(*c));
        }
        let _ = writeln!(out, ",{}", pct_cell(self.overall));
        out
    }
}

pub const AGGREGATE_CSV_HEADER: &str = "model,language,mean_xc,mean_wc,concept_count";

pub fn aggregates_csv(aggs: &[LanguageAggregate]) -> String {
    let mut out = format!("{AGGREGATE_CSV_HEADER}\n");
    for a in aggs {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            a.model_id,
            a.language,
            pct_cell(a.mean_xc),
            percent(a.mean_wc),
            a.concept_count
        );
    }
    out
}

// ---------------------------------------------------------------- histograms

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub metric: Metric,
    pub bin_count: usize,
    pub range: (f64, f64),
}

pub const DEFAULT_BINS: usize = 20;

impl HistogramSpec {
    pub fn new(metric: Metric) -> Self {
        Self {
            metric,
            bin_count: DEFAULT_BINS,
            range: (-1.0, 1.0),
        }
    }

    fn validate(&self) -> Result<(), ReportError> {
        let (lo, hi) = self.range;
        if self.bin_count < 2 {
            return Err(ReportError::BadSpec(format!("bin_count {} < 2", self.bin_count)));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(ReportError::BadSpec(format!("range [{lo}, {hi}]")));
        }
        Ok(())
    }

    pub fn edges(&self) -> Vec<f64> {
        let (lo, hi) = self.range;
        let w = (hi - lo) / self.bin_count as f64;
        (0..=self.bin_count)
            .map(|i| if i == self.bin_count { hi } else { lo + w * i as f64 })
            .collect()
    }

    /// Bins are half-open except the last, which includes `hi`. Values
    /// outside the range land in the nearest edge bin.
    pub fn bin_of(&self, x: f64) -> usize {
        let (lo, hi) = self.range;
        let t = ((x - lo) / (hi - lo) * self.bin_count as f64).floor();
        (t.max(0.0) as usize).min(self.bin_count - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub model_id: String,
    /// Absent when not grouped by language.
    pub language: Option<Lang>,
    pub metric: Metric,
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Rows in the group without this metric.
    pub missing: usize,
    /// The group had no rows.
    pub empty: bool,
}

impl Histogram {
    pub fn rows(&self) -> usize {
        self.counts.iter().sum::<usize>() + self.missing
    }
}

/// One histogram per model (and per language if `group_by_language`).
/// `languages` lists groups to emit even when they have no rows.
pub fn histogram(
    rows: &[ConceptScores],
    spec: &HistogramSpec,
    group_by_language: bool,
    languages: &[Lang],
) -> Result<Vec<Histogram>, ReportError> {
    spec.validate()?;
    let mut groups: BTreeMap<(String, Option<Lang>), Vec<&ConceptScores>> = BTreeMap::new();
    let models: BTreeSet<&str> = rows.iter().map(|r| r.model_id.as_str()).collect();
    if group_by_language {
        for m in &models {
            for l in languages {
                groups.entry((m.to_string(), Some(l.clone()))).or_default();
            }
        }
    }
    for r in rows {
        let lang = group_by_language.then(|| r.language.clone());
        groups.entry((r.model_id.clone(), lang)).or_default().push(r);
    }
    Ok(groups
        .into_iter()
        .map(|((model_id, language), rs)| {
            let mut counts = vec![0; spec.bin_count];
            let mut missing = 0;
            for r in &rs {
                match spec.metric.of(r).filter(|x| x.is_finite()) {
                    Some(x) => counts[spec.bin_of(x)] += 1,
                    None => missing += 1,
                }
            }
            Histogram {
                model_id,
                language,
                metric: spec.metric,
                edges: spec.edges(),
                counts,
                missing,
                empty: rs.is_empty(),
            }
        })
        .collect())
}

// ---------------------------------------------------------------- scatter

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub model_id: String,
    pub concept_id: String,
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scatter {
    pub metric: Metric,
    pub language_a: Lang,
    pub language_b: Lang,
    pub points: Vec<ScatterPoint>,
    /// Absent when either coordinate has zero variance.
    pub pearson_r: Option<f64>,
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let mx = mean(xs.iter().copied())?;
    let my = mean(ys.iter().copied())?;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// One point per (model, concept) scored in both languages.
pub fn cross_language_scatter(
    rows: &[ConceptScores],
    a: &Lang,
    b: &Lang,
    metric: Metric,
) -> Result<Scatter, ReportError> {
    let index = |l: &Lang| -> BTreeMap<(&str, &str), f64> {
        rows.iter()
            .filter(|r| &r.language == l)
            .filter_map(|r| metric.of(r).map(|v| ((r.model_id.as_str(), r.concept_id.as_str()), v)))
            .collect()
    };
    let (ia, ib) = (index(a), index(b));
    let points: Vec<ScatterPoint> = ia
        .iter()
        .filter_map(|(k, va)| {
            ib.get(k).map(|vb| ScatterPoint {
                model_id: k.0.to_string(),
                concept_id: k.1.to_string(),
                a: *va,
                b: *vb,
            })
        })
        .collect();
    if points.is_empty() {
        return Err(ReportError::NoCommonConcepts {
            a: a.clone(),
            b: b.clone(),
            metric,
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.a).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.b).collect();
    Ok(Scatter {
        metric,
        language_a: a.clone(),
        language_b: b.clone(),
        pearson_r: pearson(&xs, &ys),
        points,
    })
}

// ---------------------------------------------------------------- rankings

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Order {
    Ascending,
    Descending,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedConcept {
    pub concept_id: String,
    pub value: Option<f64>,
}

/// All concepts of one (model, language), sorted by `metric` with ties and
/// missing values broken by concept id. Missing values always sort last.
pub fn rank_concepts(
    rows: &[ConceptScores],
    model_id: &str,
    language: &Lang,
    metric: Metric,
    order: Order,
) -> Vec<RankedConcept> {
    let mut out: Vec<RankedConcept> = rows
        .iter()
        .filter(|r| r.model_id == model_id && &r.language == language)
        .map(|r| RankedConcept {
            concept_id: r.concept_id.clone(),
            value: metric.of(r),
        })
        .collect();
    out.sort_by(|x, y| {
        let by_value = match (x.value, y.value) {
            (Some(a), Some(b)) => match order {
                Order::Ascending => a.total_cmp(&b),
                Order::Descending => b.total_cmp(&a),
            },
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => std::cmp::Ordering::Equal,
        };
        by_value.then_with(|| x.concept_id.cmp(&y.concept_id))
    });
    out
}

pub fn top_k(ranked: &[RankedConcept], k: usize) -> &[RankedConcept] {
    &ranked[..k.min(ranked.len())]
}

pub fn bottom_k(ranked: &[RankedConcept], k: usize) -> Vec<RankedConcept> {
    let scored: Vec<&RankedConcept> = ranked.iter().filter(|r| r.value.is_some()).collect();
    scored[scored.len().saturating_sub(k)..]
        .iter()
        .rev()
        .map(|r| (*r).clone())
        .collect()
}

// ---------------------------------------------------------------- ablation

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDelta {
    pub model_id: String,
    pub language: Lang,
    pub concept_id: String,
    pub dt: Option<f64>,
    pub sc: f64,
    pub xc: Option<f64>,
    pub wc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageDeltaSummary {
    pub language: Lang,
    pub rows: usize,
    pub mean_abs_dt: Option<f64>,
    pub mean_abs_sc: f64,
    pub mean_abs_xc: Option<f64>,
    pub mean_abs_wc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationDiff {
    pub deltas: Vec<ScoreDelta>,
    pub summary: Vec<LanguageDeltaSummary>,
}

type RowKey<'a> = (&'a str, &'a Lang, &'a str);

fn key_of(r: &ConceptScores) -> RowKey<'_> {
    (&r.model_id, &r.language, &r.concept_id)
}

/// Deltas are `b − a`. Both tables must cover exactly the same keys.
pub fn template_ablation_diff(a: &[ConceptScores], b: &[ConceptScores]) -> Result<AblationDiff, ReportError> {
    let ia: BTreeMap<RowKey<'_>, &ConceptScores> = a.iter().map(|r| (key_of(r), r)).collect();
    let ib: BTreeMap<RowKey<'_>, &ConceptScores> = b.iter().map(|r| (key_of(r), r)).collect();
    let fmt = |k: &RowKey<'_>| format!("{}/{}/{}", k.0, k.1, k.2);
    let only_a: Vec<String> = ia.keys().filter(|k| !ib.contains_key(*k)).map(fmt).collect();
    let only_b: Vec<String> = ib.keys().filter(|k| !ia.contains_key(*k)).map(fmt).collect();
    if !only_a.is_empty() || !only_b.is_empty() {
        return Err(ReportError::KeyMismatch { only_a, only_b });
    }
    let sub = |x: Option<f64>, y: Option<f64>| x.zip(y).map(|(x, y)| y - x);
    let deltas: Vec<ScoreDelta> = ia
        .iter()
        .map(|(k, ra)| {
            let rb = ib[k];
            ScoreDelta {
                model_id: k.0.to_string(),
                language: k.1.clone(),
                concept_id: k.2.to_string(),
                dt: sub(ra.dt, rb.dt),
                sc: rb.sc - ra.sc,
                xc: sub(ra.xc, rb.xc),
                wc: rb.wc - ra.wc,
            }
        })
        .collect();
    let mut by_lang: BTreeMap<&Lang, Vec<&ScoreDelta>> = BTreeMap::new();
    for d in &deltas {
        by_lang.entry(&d.language).or_default().push(d);
    }
    let summary = by_lang
        .into_iter()
        .map(|(l, ds)| LanguageDeltaSummary {
            language: l.clone(),
            rows: ds.len(),
            mean_abs_dt: mean(ds.iter().filter_map(|d| d.dt.map(f64::abs))),
            mean_abs_sc: mean(ds.iter().map(|d| d.sc.abs())).unwrap_or(0.0),
            mean_abs_xc: mean(ds.iter().filter_map(|d| d.xc.map(f64::abs))),
            mean_abs_wc: mean(ds.iter().map(|d| d.wc.abs())).unwrap_or(0.0),
        })
        .collect();
    Ok(AblationDiff { deltas, summary })
}

// ---------------------------------------------------------------- bundle

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thumbnail {
    pub model_id: String,
    pub language: Lang,
    pub concept_id: String,
    /// `data:image/png;base64,...`
    pub data_uri: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub model_id: String,
    pub language: Lang,
    pub metric: Metric,
    pub top: Vec<RankedConcept>,
    pub bottom: Vec<RankedConcept>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub title: String,
    pub table: ScoreTable,
    pub aggregates: Vec<LanguageAggregate>,
    pub matrices: Vec<MetricMatrix>,
    pub histograms: Vec<Histogram>,
    pub scatters: Vec<Scatter>,
    pub rankings: Vec<Ranking>,
    pub ablation: Option<AblationDiff>,
    pub thumbnails: Vec<Thumbnail>,
}

#[derive(Debug, Clone)]
pub struct BundleOptions {
    pub title: String,
    pub bins: usize,
    /// Language pairs to correlate; defaults to each language against the
    /// first one.
    pub scatter_pairs: Option<Vec<(Lang, Lang)>>,
    pub scatter_metric: Metric,
    pub rank_metric: Metric,
    pub rank_k: usize,
    pub ablation_baseline: Option<ScoreTable>,
    pub thumbnails: Vec<Thumbnail>,
}

impl Default for BundleOptions {
    fn default() -> Self {
        Self {
            title: "Concept coverage report".into(),
            bins: DEFAULT_BINS,
            scatter_pairs: None,
            scatter_metric: Metric::Xc,
            rank_metric: Metric::Xc,
            rank_k: 5,
            ablation_baseline: None,
            thumbnails: Vec::new(),
        }
    }
}

/// Merge tables (all models) and compute every derived artifact.
pub fn build_bundle(tables: &[ScoreTable], opts: &BundleOptions) -> Result<ReportBundle, ReportError> {
    let first = tables.first().ok_or(ReportError::EmptyTable)?;
    let mut table = ScoreTable {
        rows: tables.iter().flat_map(|t| t.rows.iter().cloned()).collect(),
        thresholds: first.thresholds,
        skipped: tables.iter().flat_map(|t| t.skipped.iter().cloned()).collect(),
    };
    table.sort();
    let rows = &table.rows;
    let aggregates = aggregate_by_language(rows)?;
    let matrices = Metric::ALL.iter().map(|m| metric_matrix(rows, *m)).collect();
    let languages: Vec<Lang> = rows
        .iter()
        .map(|r| r.language.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut histograms = Vec::new();
    for m in Metric::ALL {
        let spec = HistogramSpec {
            bin_count: opts.bins,
            ..HistogramSpec::new(m)
        };
        histograms.extend(histogram(rows, &spec, true, &languages)?);
    }
    let pairs = opts.scatter_pairs.clone().unwrap_or_else(|| {
        languages
            .iter()
            .skip(1)
            .map(|l| (languages[0].clone(), l.clone()))
            .collect()
    });
    let mut scatters = Vec::new();
    for (a, b) in &pairs {
        match cross_language_scatter(rows, a, b, opts.scatter_metric) {
            Ok(s) => scatters.push(s),
            Err(ReportError::NoCommonConcepts { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    let mut rankings = Vec::new();
    let groups: BTreeSet<(&str, &Lang)> = rows.iter().map(|r| (r.model_id.as_str(), &r.language)).collect();
    for (m, l) in groups {
        let ranked = rank_concepts(rows, m, l, opts.rank_metric, Order::Descending);
        rankings.push(Ranking {
            model_id: m.to_string(),
            language: l.clone(),
            metric: opts.rank_metric,
            top: top_k(&ranked, opts.rank_k).to_vec(),
            bottom: bottom_k(&ranked, opts.rank_k),
        });
    }
    let ablation = opts
        .ablation_baseline
        .as_ref()
        .map(|base| template_ablation_diff(&base.rows, rows))
        .transpose()?;
    let mut thumbnails = opts.thumbnails.clone();
    thumbnails.sort_by(|a, b| {
        (&a.model_id, &a.language, &a.concept_id).cmp(&(&b.model_id, &b.language, &b.concept_id))
    });
    Ok(ReportBundle {
        title: opts.title.clone(),
        table,
        aggregates,
        matrices,
        histograms,
        scatters,
        rankings,
        ablation,
        thumbnails,
    })
}

/// PNG thumbnail of at most `side` pixels, as a data URI.
pub fn thumbnail_data_uri(image_path: &Path, side: u32) -> Result<String, ReportError> {
    use base64::Engine as _;
    let bytes = fs::read(image_path).map_err(|source| ReportError::Io {
        path: image_path.to_path_buf(),
        source,
    })?;
    let img = image::load_from_memory(&bytes).map_err(|e| ReportError::Io {
        path: image_path.to_path_buf(),
        source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
    })?;
    let small = img.thumbnail(side, side);
    let mut png = Vec::new();
    small
        .write_to(&mut std::io::Cursor::new(&mut png), image::ImageFormat::Png)
        .map_err(|e| ReportError::Io {
            path: image_path.to_path_buf(),
            source: std::io::Error::other(e),
        })?;
    Ok(format!(
        "data:image/png;base64,{}",
        base64::engine::general_purpose::STANDARD.encode(png)
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Format {
    Csv,
    Json,
    Html,
}

impl std::str::FromStr for Format {
    type Err = ReportError;
    fn from_str(s: &str) -> Result<Self, ReportError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "html" => Ok(Format::Html),
            other => Err(ReportError::UnknownFormat(other.to_string())),
        }
    }
}

impl ReportBundle {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("bundle serializes");
        s.push('\n');
        s
    }

    pub fn to_html(&self) -> String {
        html::render(self)
    }
}

/// Write the requested formats into `dir`; returns the written paths in
/// a fixed order.
pub fn emit_report(bundle: &ReportBundle, dir: &Path, formats: &[Format]) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(dir).map_err(|source| ReportError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let formats: BTreeSet<Format> = formats.iter().copied().collect();
    let mut files: Vec<(&str, String)> = Vec::new();
    if formats.contains(&Format::Csv) {
        files.push(("scores.csv", bundle.table.to_csv()));
        files.push(("language_means.csv", aggregates_csv(&bundle.aggregates)));
        for m in &bundle.matrices {
            let name = match m.metric {
                Metric::Dt => "matrix_dt.csv",
                Metric::Sc => "matrix_sc.csv",
                Metric::Xc => "matrix_xc.csv",
                Metric::Wc => "matrix_wc.csv",
            };
            files.push((name, m.to_csv()));
        }
    }
    if formats.contains(&Format::Json) {
        files.push(("report.json", bundle.to_json()));
    }
    if formats.contains(&Format::Html) {
        files.push(("report.html", bundle.to_html()));
    }
    let mut out = Vec::new();
    for (name, text) in files {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|source| ReportError::Io {
            path: path.clone(),
            source,
        })?;
        out.push(path);
    }
    Ok(out)
}
