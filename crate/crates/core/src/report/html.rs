//! Single-file HTML rendering. No external resources are referenced.

use std::fmt::Write as _;

use super::{percent, Histogram, Metric, MetricMatrix, ReportBundle, Scatter};

const STYLE: &str = "body{font-family:system-ui,sans-serif;margin:2em;color:#222}\
table{border-collapse:collapse;margin:1em 0}th,td{border:1px solid #ccc;padding:2px 8px;text-align:right}\
th{background:#f0f0f0;cursor:pointer}td.l,th.l{text-align:left}\
.grid{display:flex;flex-wrap:wrap;gap:1em}.card{border:1px solid #ddd;padding:.5em}\
.ok{color:#17692a}.no{color:#a31515}svg{background:#fafafa}img{image-rendering:pixelated}";

const SCRIPT: &str = "document.querySelectorAll('table.sortable th').forEach(function(th){\
th.addEventListener('click',function(){var t=th.closest('table'),i=Array.prototype.indexOf.call(th.parentNode.children,th),\
b=t.tBodies[0],rows=Array.from(b.rows),asc=th.dataset.asc!=='1';th.dataset.asc=asc?'1':'0';\
rows.sort(function(x,y){var a=x.cells[i].textContent,c=y.cells[i].textContent,na=parseFloat(a),nc=parseFloat(c);\
var r=(isNaN(na)||isNaN(nc))?a.localeCompare(c):na-nc;return asc?r:-r;});rows.forEach(function(r){b.appendChild(r);});});});";

pub(super) fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

fn num(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_default()
}

fn pct(v: Option<f64>) -> String {
    v.map(|x| percent(x).to_string()).unwrap_or_default()
}

fn matrix(out: &mut String, m: &MetricMatrix) {
    let _ = write!(out, "<h3>{} (×100)</h3><table><thead><tr><th class=l>model</th>", m.metric);
    for l in &m.languages {
        let _ = write!(out, "<th>{}</th>", esc(l.as_str()));
    }
    out.push_str("<th>avg</th></tr></thead><tbody>");
    for (i, model) in m.models.iter().enumerate() {
        let _ = write!(out, "<tr><td class=l>{}</td>", esc(model));
        for c in &m.cells[i] {
            let _ = write!(out, "<td>{}</td>", pct(*c));
        }
        let _ = write!(out, "<td>{}</td></tr>", pct(m.row_means[i]));
    }
    out.push_str("<tr><td class=l>avg</td>");
    for c in &m.column_means {
        let _ = write!(out, "<td>{}</td>", pct(*c));
    }
    let _ = write!(out, "<td>{}</td></tr></tbody></table>", pct(m.overall));
}

fn histogram_svg(out: &mut String, h: &Histogram) {
    const W: f64 = 200.0;
    const H: f64 = 80.0;
    let max = h.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let bw = W / h.counts.len() as f64;
    let lang = h.language.as_ref().map(|l| l.as_str()).unwrap_or("all");
    let _ = write!(
        out,
        "<div class=card><div>{} {} {}{}</div><svg width={W} height={H} viewBox=\"0 0 {W} {H}\">",
        esc(&h.model_id),
        esc(lang),
        h.metric,
        if h.empty { " (no rows)" } else { "" }
    );
    for (i, c) in h.counts.iter().enumerate() {
        let bh = *c as f64 / max * (H - 2.0);
        let _ = write!(
            out,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#4a78b5\"><title>[{:.2}, {:.2}): {c}</title></rect>",
            i as f64 * bw,
            H - bh,
            (bw - 1.0).max(0.5),
            bh,
            h.edges[i],
            h.edges[i + 1]
        );
    }
    let _ = write!(
        out,
        "</svg><div>{:.1} … {:.1}; n={} missing={}</div></div>",
        h.edges[0],
        h.edges[h.edges.len() - 1],
        h.rows(),
        h.missing
    );
}

fn scatter_svg(out: &mut String, s: &Scatter) {
    const S: f64 = 200.0;
    let (lo, hi) = s
        .points
        .iter()
        .flat_map(|p| [p.a, p.b])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    let map = |v: f64| 5.0 + (v - lo) / (hi - lo) * (S - 10.0);
    let r = s.pearson_r.map(|r| format!("{r:.3}")).unwrap_or_else(|| "n/a".into());
    let _ = write!(
        out,
        "<div class=card><div>{} vs {} ({}), r = {r}</div><svg width={S} height={S} viewBox=\"0 0 {S} {S}\">\
<line x1=\"0\" y1=\"{S}\" x2=\"{S}\" y2=\"0\" stroke=\"#ccc\"/>",
        esc(s.language_a.as_str()),
        esc(s.language_b.as_str()),
        s.metric
    );
    for p in &s.points {
        let _ = write!(
            out,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"#b5584a\"><title>{} {}: {:.3}, {:.3}</title></circle>",
            map(p.a),
            S - map(p.b),
            esc(&p.model_id),
            esc(&p.concept_id),
            p.a,
            p.b
        );
    }
    out.push_str("</svg></div>");
}

pub(super) fn render(b: &ReportBundle) -> String {
    let mut out = String::new();
    let _ = write!(
        out,
        "<!DOCTYPE html><html><head><meta charset=\"utf-8\"><title>{t}</title><style>{STYLE}</style></head><body><h1>{t}</h1>",
        t = esc(&b.title)
    );

    out.push_str("<h2>Language averages</h2>");
    for m in b.matrices.iter().filter(|m| matches!(m.metric, Metric::Xc | Metric::Wc)) {
        matrix(&mut out, m);
    }

    out.push_str("<h2>Distributions</h2>");
    for metric in Metric::ALL {
        let _ = write!(out, "<h3>{metric}</h3><div class=grid>");
        for h in b.histograms.iter().filter(|h| h.metric == metric) {
            histogram_svg(&mut out, h);
        }
        out.push_str("</div>");
    }

    if !b.scatters.is_empty() {
        out.push_str("<h2>Cross-language correlation</h2><div class=grid>");
        for s in &b.scatters {
            scatter_svg(&mut out, s);
        }
        out.push_str("</div>");
    }

    out.push_str("<h2>Concept rankings</h2><div class=grid>");
    for r in &b.rankings {
        let _ = write!(
            out,
            "<div class=card><div>{} {} by {}</div><table><thead><tr><th class=l>top</th><th></th><th class=l>bottom</th><th></th></tr></thead><tbody>",
            esc(&r.model_id),
            esc(r.language.as_str()),
            r.metric
        );
        for i in 0..r.top.len().max(r.bottom.len()) {
            let cell = |x: Option<&super::RankedConcept>| match x {
                Some(c) => format!("<td class=l>{}</td><td>{}</td>", esc(&c.concept_id), num(c.value)),
                None => "<td></td><td></td>".to_string(),
            };
            let _ = write!(out, "<tr>{}{}</tr>", cell(r.top.get(i)), cell(r.bottom.get(i)));
        }
        out.push_str("</tbody></table></div>");
    }
    out.push_str("</div>");

    if let Some(ab) = &b.ablation {
        out.push_str("<h2>Template ablation</h2><table class=sortable><thead><tr><th class=l>language</th><th>rows</th><th>mean |Δdt|</th><th>mean |Δsc|</th><th>mean |Δxc|</th><th>mean |Δwc|</th></tr></thead><tbody>");
        for s in &ab.summary {
            let _ = write!(
                out,
                "<tr><td class=l>{}</td><td>{}</td><td>{}</td><td>{:.3}</td><td>{}</td><td>{:.3}</td></tr>",
                esc(s.language.as_str()),
                s.rows,
                num(s.mean_abs_dt),
                s.mean_abs_sc,
                num(s.mean_abs_xc),
                s.mean_abs_wc
            );
        }
        out.push_str("</tbody></table>");
    }

    if !b.thumbnails.is_empty() {
        out.push_str("<h2>Samples</h2><div class=grid>");
        for t in &b.thumbnails {
            let _ = write!(
                out,
                "<div class=card><img src=\"{}\" width=64 height=64 alt=\"\"><div>{} {} {}</div></div>",
                esc(&t.data_uri),
                esc(&t.model_id),
                esc(t.language.as_str()),
                esc(&t.concept_id)
            );
        }
        out.push_str("</div>");
    }

    out.push_str("<h2>All scores</h2><table class=sortable><thead><tr><th class=l>model</th><th class=l>language</th><th class=l>concept</th><th>dt</th><th>sc</th><th>xc</th><th>wc</th><th>n</th><th>possessed</th></tr></thead><tbody>");
    for r in &b.table.rows {
        let p = b.table.possession(r).possessed;
        let _ = write!(
            out,
            "<tr><td class=l>{}</td><td class=l>{}</td><td class=l>{}</td><td>{}</td><td>{:.3}</td><td>{}</td><td>{:.3}</td><td>{}</td><td class={}>{}</td></tr>",
            esc(&r.model_id),
            esc(r.language.as_str()),
            esc(&r.concept_id),
            num(r.dt),
            r.sc,
            num(r.xc),
            r.wc,
            r.n_effective,
            if p { "ok" } else { "no" },
            if p { "✓" } else { "✗" }
        );
    }
    out.push_str("</tbody></table>");
    if !b.table.skipped.is_empty() {
        out.push_str("<h3>Skipped populations (fewer than 2 images)</h3><ul>");
        for s in &b.table.skipped {
            let _ = write!(
                out,
                "<li>{} {} (n={})</li>",
                esc(s.language.as_str()),
                esc(&s.concept_id),
                s.n_effective
            );
        }
        out.push_str("</ul>");
    }
    let _ = writeln!(out, "<script>{SCRIPT}</script></body></html>");
    out
}
