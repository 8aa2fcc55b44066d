//! Static SVG and HTML reports.

use std::fmt::Write;

use ehr_fusion::attribution::{Granularity, NoteAttribution, VariableSummary};
use ehr_fusion::data::ClinicalEpisode;

pub const TOP_VARIABLES: usize = 10;

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            '\n' => out.push_str("\\n"),
            _ => out.push(c),
        }
    }
    out
}

/// Horizontal bars of mean |Shapley| for the top variables. Red bars raise
/// the predicted risk on average, blue bars lower it.
pub fn shapley_bar_chart(ranked: &[&VariableSummary]) -> String {
    let top = &ranked[..ranked.len().min(TOP_VARIABLES)];
    let (label_w, bar_w, row_h, pad) = (260.0, 360.0, 26.0, 40.0);
    let width = label_w + bar_w + 120.0;
    let height = pad * 2.0 + row_h * top.len() as f64;
    let max = top
        .iter()
        .map(|v| v.mean_abs)
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="13">"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="10" y="22" font-size="15">Top {} clinical variables by mean |Shapley value|</text>"#,
        top.len()
    );
    for (i, v) in top.iter().enumerate() {
        let y = pad + row_h * i as f64;
        let len = if max > 0.0 { bar_w * v.mean_abs / max } else { 0.0 };
        let color = if v.mean_signed >= 0.0 { "#c0392b" } else { "#2e6da4" };
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            label_w - 8.0,
            y + 17.0,
            escape(&v.variable)
        );
        let _ = writeln!(
            svg,
            r#"<rect class="bar" x="{label_w}" y="{}" width="{len:.3}" height="{}" fill="{color}"><title>mean |phi| {:.6}, mean phi {:.6}</title></rect>"#,
            y + 4.0,
            row_h - 8.0,
            v.mean_abs,
            v.mean_signed
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.3}" y="{}">{:.4}</text>"#,
            label_w + len + 6.0,
            y + 17.0,
            v.mean_abs
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Notes of each episode with every token shaded green in proportion to its
/// positive attribution, plus the top-word frequency table.
pub fn token_report_html(
    attributions: &[NoteAttribution],
    episodes: &[&ClinicalEpisode],
    frequency: &[(String, usize)],
    top_k: usize,
) -> String {
    let mut html = String::from(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Note token attributions</title>\n\
<style>body{font-family:sans-serif;max-width:60em;margin:2em auto}\
.note{margin:.4em 0;line-height:1.8}.tok{padding:1px 2px;border-radius:3px}\
table{border-collapse:collapse}td,th{border:1px solid #ccc;padding:2px 8px}</style></head><body>\n",
    );
    let _ = writeln!(html, "<h1>Words most often in a note's top {top_k}</h1>");
    html.push_str("<table><tr><th>word</th><th>notes</th></tr>\n");
    for (word, count) in frequency {
        let _ = writeln!(html, "<tr><td>{}</td><td>{count}</td></tr>", escape(word));
    }
    html.push_str("</table>\n");
    for (att, ep) in attributions.iter().zip(episodes) {
        let _ = writeln!(
            html,
            "<h2>{} (label {}, predicted {:.4}, residual {:.3e})</h2>",
            escape(&att.episode),
            att.label,
            att.prediction,
            att.residual
        );
        match att.granularity {
            Granularity::Token => {
                let max = att.tokens.iter().map(|t| t.score).fold(0.0, f64::max);
                let mut note = usize::MAX;
                for t in &att.tokens {
                    if t.note != note {
                        if note != usize::MAX {
                            html.push_str("</div>\n");
                        }
                        note = t.note;
                        let _ = write!(html, "<div class=\"note\"><b>hour {}:</b> ", t.hour);
                    }
                    let alpha = if max > 0.0 { (t.score / max).max(0.0) } else { 0.0 };
                    let _ = write!(
                        html,
                        "<span class=\"tok\" style=\"background:rgba(0,128,0,{alpha:.3})\" title=\"{:.6}\">{}</span> ",
                        t.score,
                        escape(&t.token)
                    );
                }
                if note != usize::MAX {
                    html.push_str("</div>\n");
                }
            }
            Granularity::Hour => {
                let max = att.hours.iter().map(|h| h.score).fold(0.0, f64::max);
                for h in &att.hours {
                    let alpha = if max > 0.0 { (h.score / max).max(0.0) } else { 0.0 };
                    let text: Vec<&str> = ep
                        .note_events
                        .iter()
                        .filter(|n| n.hour.floor() as usize == h.hour)
                        .flat_map(|n| n.tokens.iter().map(String::as_str))
                        .collect();
                    let _ = writeln!(
                        html,
                        "<div class=\"note\" style=\"background:rgba(0,128,0,{alpha:.3})\" title=\"{:.6}\"><b>hour {}:</b> {}</div>",
                        h.score,
                        h.hour,
                        escape(&text.join(" "))
                    );
                }
            }
        }
    }
    html.push_str("</body></html>\n");
    html
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(name: &str, v: f64) -> VariableSummary {
        VariableSummary {
            variable: name.into(),
            mean_abs: v.abs(),
            mean_signed: v,
            stderr: 0.0,
            ci95: (v, v),
            estimator: "exact".into(),
        }
    }

    #[test]
    fn bar_chart_keeps_ten_bars() {
        let all: Vec<VariableSummary> = (0..17).map(|i| summary(&format!("v<{i}>"), i as f64 - 8.0)).collect();
        let refs: Vec<&VariableSummary> = all.iter().collect();
        let svg = shapley_bar_chart(&refs);
        assert_eq!(svg.matches("<rect class=\"bar\"").count(), 10);
        assert!(svg.contains("v&lt;3&gt;"));
        let three = shapley_bar_chart(&refs[..3]);
        assert_eq!(three.matches("<rect class=\"bar\"").count(), 3);
    }
}
