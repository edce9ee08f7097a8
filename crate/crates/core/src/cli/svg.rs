//! Static SVG line charts for the metric panels.

use std::fmt::Write;

pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub points: Vec<(f64, f64)>,
}

const W: f64 = 420.0;
const H: f64 = 300.0;
const MARGIN: f64 = 60.0;

fn transform(v: f64, log: bool) -> Option<f64> {
    if log {
        (v > 0.0).then(|| v.log10())
    } else {
        Some(v)
    }
}

fn render_panel(out: &mut String, p: &Panel, ox: f64, oy: f64) {
    let pts: Vec<(f64, f64)> = p
        .points
        .iter()
        .filter_map(|&(x, y)| Some((transform(x, p.log_x)?, y)))
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    let (pw, ph) = (W - 1.5 * MARGIN, H - 1.5 * MARGIN);
    let _ = writeln!(
        out,
        r#"<g transform="translate({ox},{oy})"><text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        p.title
    );
    let _ = writeln!(
        out,
        r#"<rect x="{MARGIN}" y="{}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#,
        MARGIN / 2.0
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="11">{}{}</text>"#,
        MARGIN + pw / 2.0,
        H - 8.0,
        p.x_label,
        if p.log_x { " (log)" } else { "" }
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" text-anchor="middle" font-size="11" transform="rotate(-90 14 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        p.y_label
    );
    if pts.len() >= 2 {
        let (xmin, xmax) = pts.iter().fold((f64::MAX, f64::MIN), |(a, b), &(x, _)| (a.min(x), b.max(x)));
        let (ymin, ymax) = pts.iter().fold((f64::MAX, f64::MIN), |(a, b), &(_, y)| (a.min(y), b.max(y)));
        let ymin = ymin.min(0.0);
        let sx = if xmax > xmin { pw / (xmax - xmin) } else { 0.0 };
        let sy = if ymax > ymin { ph / (ymax - ymin) } else { 0.0 };
        let path: Vec<String> = pts
            .iter()
            .map(|&(x, y)| {
                format!(
                    "{:.2},{:.2}",
                    MARGIN + (x - xmin) * sx,
                    MARGIN / 2.0 + ph - (y - ymin) * sy
                )
            })
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{}"/>"#,
            path.join(" ")
        );
        let fmt_x = |v: f64| if p.log_x { format!("{:.3e}", 10f64.powf(v)) } else { format!("{v:.3}") };
        let _ = writeln!(
            out,
            r#"<text x="{MARGIN}" y="{}" font-size="9">{}</text><text x="{}" y="{}" font-size="9" text-anchor="end">{}</text>"#,
            MARGIN / 2.0 + ph + 12.0,
            fmt_x(xmin),
            MARGIN + pw,
            MARGIN / 2.0 + ph + 12.0,
            fmt_x(xmax)
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="9" text-anchor="end">{ymax:.3e}</text>"#,
            MARGIN - 2.0,
            MARGIN / 2.0 + 8.0
        );
    }
    out.push_str("</g>\n");
}

/// Lays panels out in a 2-column grid.
pub fn render(panels: &[Panel]) -> String {
    let rows = panels.len().div_ceil(2);
    let mut out = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif">"#,
        2.0 * W,
        rows as f64 * H
    );
    out.push('\n');
    for (i, p) in panels.iter().enumerate() {
        render_panel(&mut out, p, (i % 2) as f64 * W, (i / 2) as f64 * H);
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_every_panel() {
        let panel = |log_x| Panel {
            title: "t".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            log_x,
            points: vec![(0.0, 1.0), (1.0, 2.0), (10.0, 3.0)],
        };
        let svg = render(&[panel(true), panel(false), panel(true)]);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
