//! Minimal SVG charts on a fixed 800x600 canvas.

use std::fmt::Write;

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 600.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 50.0;
const MARGIN_BOTTOM: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"];

pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(title: &str) -> String {
    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(out, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##).unwrap();
    writeln!(out, r#"<text x="{}" y="28" text-anchor="middle" font-size="16">{}</text>"#, WIDTH / 2.0, escape(title))
        .unwrap();
    out
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) =
        values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= 1e-12 * hi.abs().max(1.0) {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

/// Line chart with one polyline per series and a legend.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (x0, x1) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let (y0, y1) = (y0.min(0.0), y1);
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let px = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * plot_w;
    let py = |y: f64| MARGIN_TOP + plot_h - (y - y0) / (y1 - y0) * plot_h;

    let mut out = header(title);
    let bottom = MARGIN_TOP + plot_h;
    let right = MARGIN_LEFT + plot_w;
    writeln!(
        out,
        r##"<path d="M{MARGIN_LEFT} {MARGIN_TOP} L{MARGIN_LEFT} {bottom} L{right} {bottom}" fill="none" stroke="#000000"/>"##
    )
    .unwrap();
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, px(fx), bottom + 18.0, tick(fx))
            .unwrap();
        writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            MARGIN_LEFT - 6.0,
            py(fy) + 4.0,
            tick(fy)
        )
        .unwrap();
    }
    writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 15.0,
        escape(x_label)
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0,
        escape(y_label)
    )
    .unwrap();

    for (i, s) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        writeln!(out, r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#, pts.join(" "))
            .unwrap();
        let ly = MARGIN_TOP + 10.0 + 18.0 * i as f64;
        writeln!(
            out,
            r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{colour}" stroke-width="3"/>"#,
            right - 120.0,
            right - 100.0
        )
        .unwrap();
        writeln!(out, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, right - 94.0, ly + 4.0, escape(s.label)).unwrap();
    }
    out.push_str("</svg>\n");
    out
}

/// Pie chart of nonnegative fractions.
pub fn pie_chart(title: &str, slices: &[(&str, f64)]) -> String {
    let mut out = header(title);
    let (cx, cy, r) = (WIDTH / 2.0 - 80.0, HEIGHT / 2.0 + 20.0, 220.0);
    let total: f64 = slices.iter().map(|(_, v)| v.max(0.0)).sum();
    let mut angle = -std::f64::consts::FRAC_PI_2;
    for (i, (label, value)) in slices.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let frac = if total > 0.0 { value.max(0.0) / total } else { 0.0 };
        let sweep = frac * std::f64::consts::TAU;
        if frac >= 1.0 - 1e-12 {
            writeln!(out, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="{r:.2}" fill="{colour}"/>"#).unwrap();
        } else if frac > 0.0 {
            let (x0, y0) = (cx + r * angle.cos(), cy + r * angle.sin());
            let end = angle + sweep;
            let (x1, y1) = (cx + r * end.cos(), cy + r * end.sin());
            let large = if sweep > std::f64::consts::PI { 1 } else { 0 };
            writeln!(
                out,
                r##"<path d="M{cx:.2} {cy:.2} L{x0:.2} {y0:.2} A{r:.2} {r:.2} 0 {large} 1 {x1:.2} {y1:.2} Z" fill="{colour}" stroke="#ffffff"/>"##
            )
            .unwrap();
        }
        angle += sweep;
        let ly = 90.0 + 22.0 * i as f64;
        writeln!(
            out,
            r#"<rect x="{:.2}" y="{:.2}" width="14" height="14" fill="{colour}"/>"#,
            WIDTH - 190.0,
            ly - 11.0
        )
        .unwrap();
        writeln!(out, r#"<text x="{:.2}" y="{ly:.2}">{} {:.1}%</text>"#, WIDTH - 170.0, escape(label), 100.0 * frac)
            .unwrap();
    }
    out.push_str("</svg>\n");
    out
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_chart_has_one_polyline_per_series() {
        let s = [
            Series { label: "a", points: vec![(0.0, 1.0), (1.0, 2.0)] },
            Series { label: "b", points: vec![(0.0, 0.0), (1.0, 0.0)] },
        ];
        let svg = line_chart("t", "x", "y", &s);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains(r#"viewBox="0 0 800 600""#));
    }

    #[test]
    fn pie_chart_handles_single_full_slice() {
        let svg = pie_chart("p", &[("all", 1.0), ("none", 0.0)]);
        assert!(svg.contains("<circle"));
        assert!(!svg.contains("<path d=\"M"));
    }

    #[test]
    fn constant_series_does_not_divide_by_zero() {
        let svg = line_chart("t", "x", "y", &[Series { label: "z", points: vec![(0.0, 0.0), (1.0, 0.0)] }]);
        assert!(!svg.contains("NaN"));
    }
}
