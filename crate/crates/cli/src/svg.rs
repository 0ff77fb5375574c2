//! Grouped bar charts of selection frequencies, written as plain SVG text.

use std::fmt::Write;

use pacs_core::sim::FrequencyRow;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

const LEFT: f64 = 56.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 48.0;
const PLOT_HEIGHT: f64 = 240.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// One group per covariate, one bar per series, frequencies on `[0, 1]`.
pub fn grouped_bar_chart(title: &str, covariates: &[String], series: &[(String, Vec<f64>)]) -> String {
    let k = series.len().max(1) as f64;
    let bar = if covariates.len() > 40 { 3.0 } else { 8.0 };
    let group = k * bar + 6.0;
    let plot_width = (covariates.len() as f64 * group).max(120.0);
    let width = LEFT + plot_width + RIGHT;
    let height = TOP + PLOT_HEIGHT + BOTTOM;
    let y_of = |f: f64| TOP + PLOT_HEIGHT * (1.0 - f.clamp(0.0, 1.0));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="20" font-size="14" text-anchor="middle">{}</text>"#,
        LEFT + plot_width / 2.0,
        escape(title)
    );
    for tick in 0..=4 {
        let f = f64::from(tick) * 0.25;
        let y = y_of(f);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#dddddd"/>"##,
            LEFT + plot_width
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{f:.2}</text>"#,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">selection frequency</text>"#,
        TOP + PLOT_HEIGHT / 2.0,
        TOP + PLOT_HEIGHT / 2.0
    );

    let label_every = if covariates.len() > 30 { 5 } else { 1 };
    for (j, name) in covariates.iter().enumerate() {
        let x0 = LEFT + j as f64 * group + 3.0;
        for (i, (_, values)) in series.iter().enumerate() {
            let f = values.get(j).copied().unwrap_or(0.0);
            if !f.is_finite() {
                continue;
            }
            let y = y_of(f);
            let _ = writeln!(
                s,
                r#"<rect x="{:.1}" y="{y:.1}" width="{bar:.1}" height="{:.1}" fill="{}"/>"#,
                x0 + i as f64 * bar,
                TOP + PLOT_HEIGHT - y,
                PALETTE[i % PALETTE.len()]
            );
        }
        if j % label_every == 0 {
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                x0 + k * bar / 2.0,
                TOP + PLOT_HEIGHT + 16.0,
                escape(name)
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/>"#,
        TOP + PLOT_HEIGHT,
        LEFT + plot_width,
        TOP + PLOT_HEIGHT
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">covariate</text>"#,
        LEFT + plot_width / 2.0,
        height - 10.0
    );

    let lx = LEFT + plot_width + 16.0;
    for (i, (name, _)) in series.iter().enumerate() {
        let y = TOP + 8.0 + i as f64 * 18.0;
        let _ = writeln!(
            s,
            r#"<rect x="{lx:.1}" y="{y:.1}" width="12" height="12" fill="{}"/>"#,
            PALETTE[i % PALETTE.len()]
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 18.0,
            y + 10.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Chart of a cell's frequency table; methods and covariates keep their
/// first-seen order.
pub fn frequency_chart(title: &str, rows: &[FrequencyRow]) -> String {
    let mut covariates: Vec<String> = Vec::new();
    let mut series: Vec<(String, Vec<f64>)> = Vec::new();
    for r in rows {
        let j = match covariates.iter().position(|c| *c == r.covariate) {
            Some(j) => j,
            None => {
                covariates.push(r.covariate.clone());
                covariates.len() - 1
            }
        };
        let i = match series.iter().position(|(m, _)| *m == r.method) {
            Some(i) => i,
            None => {
                series.push((r.method.clone(), Vec::new()));
                series.len() - 1
            }
        };
        let values = &mut series[i].1;
        if values.len() <= j {
            values.resize(j + 1, f64::NAN);
        }
        values[j] = r.frequency;
    }
    grouped_bar_chart(title, &covariates, &series)
}
