//! Self-contained SVG line charts with ±1 std bands.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;

/// One series: points `(x, mean, std)` drawn as a line inside a shaded band.
#[derive(Debug, Clone)]
pub struct Band {
    pub label: String,
    pub color: String,
    pub points: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, Default)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub bands: Vec<Band>,
    /// Horizontal dashed reference line and its legend label.
    pub reference: Option<(String, f64)>,
}

fn fmt_num(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn fmt_tick(v: f64, step: f64) -> String {
    let decimals = (0..8)
        .find(|&d| {
            let scaled = step * 10f64.powi(d as i32);
            (scaled - scaled.round()).abs() < 1e-9 * scaled.max(1.0)
        })
        .unwrap_or(8);
    let s = format!("{v:.decimals$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

/// Roughly `target` evenly spaced round tick values covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64, target: usize) -> (Vec<f64>, f64) {
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let start = (lo / step).ceil() as i64;
    let end = (hi / step).floor() as i64;
    ((start..=end).map(|k| k as f64 * step).collect(), step)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

pub fn render_chart(chart: &Chart) -> String {
    let mut x_lo = f64::INFINITY;
    let mut x_hi = f64::NEG_INFINITY;
    let mut y_lo = f64::INFINITY;
    let mut y_hi = f64::NEG_INFINITY;
    for b in &chart.bands {
        for &(x, m, s) in &b.points {
            x_lo = x_lo.min(x);
            x_hi = x_hi.max(x);
            y_lo = y_lo.min(m - s);
            y_hi = y_hi.max(m + s);
        }
    }
    if let Some((_, r)) = &chart.reference {
        y_lo = y_lo.min(*r);
        y_hi = y_hi.max(*r);
    }
    if !x_lo.is_finite() {
        (x_lo, x_hi) = (0.0, 1.0);
    }
    if !y_lo.is_finite() {
        (y_lo, y_hi) = (0.0, 1.0);
    }
    if x_hi - x_lo <= 0.0 {
        x_hi = x_lo + 1.0;
    }
    if y_hi - y_lo <= 1e-12 * y_hi.abs().max(1.0) {
        let pad = 0.5 * y_hi.abs().max(1e-3);
        y_lo -= pad;
        y_hi += pad;
    } else {
        let pad = 0.05 * (y_hi - y_lo);
        y_lo -= pad;
        y_hi += pad;
    }

    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * pw;
    let sy = |y: f64| TOP + (y_hi - y) / (y_hi - y_lo) * ph;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        out,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        fmt_num(WIDTH / 2.0),
        escape(&chart.title)
    );

    // Grid and ticks.
    let (xt, xstep) = ticks(x_lo, x_hi, 8);
    for x in xt {
        let px = fmt_num(sx(x));
        let _ = writeln!(
            out,
            r##"<line x1="{px}" y1="{}" x2="{px}" y2="{}" stroke="#e5e5e5"/><text x="{px}" y="{}" text-anchor="middle">{}</text>"##,
            fmt_num(TOP),
            fmt_num(TOP + ph),
            fmt_num(TOP + ph + 16.0),
            fmt_tick(x, xstep)
        );
    }
    let (yt, ystep) = ticks(y_lo, y_hi, 6);
    for y in yt {
        let py = fmt_num(sy(y));
        let _ = writeln!(
            out,
            r##"<line x1="{}" y1="{py}" x2="{}" y2="{py}" stroke="#e5e5e5"/><text x="{}" y="{py}" text-anchor="end" dominant-baseline="middle">{}</text>"##,
            fmt_num(LEFT),
            fmt_num(LEFT + pw),
            fmt_num(LEFT - 6.0),
            fmt_tick(y, ystep)
        );
    }
    let _ = writeln!(
        out,
        r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#333"/>"##,
        fmt_num(LEFT),
        fmt_num(TOP),
        fmt_num(pw),
        fmt_num(ph)
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        fmt_num(LEFT + pw / 2.0),
        fmt_num(HEIGHT - 14.0),
        escape(&chart.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
        fmt_num(TOP + ph / 2.0),
        escape(&chart.y_label)
    );

    for b in &chart.bands {
        let color = escape(&b.color);
        if b.points.is_empty() {
            continue;
        }
        let upper = b
            .points
            .iter()
            .map(|&(x, m, s)| format!("{},{}", fmt_num(sx(x)), fmt_num(sy(m + s))));
        let lower = b
            .points
            .iter()
            .rev()
            .map(|&(x, m, s)| format!("{},{}", fmt_num(sx(x)), fmt_num(sy(m - s))));
        let poly: Vec<String> = upper.chain(lower).collect();
        let _ = writeln!(
            out,
            r#"<polygon class="band" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            poly.join(" ")
        );
        let line: Vec<String> = b
            .points
            .iter()
            .map(|&(x, m, _)| format!("{},{}", fmt_num(sx(x)), fmt_num(sy(m))))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline class="mean" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            line.join(" ")
        );
    }
    if let Some((_, r)) = &chart.reference {
        let py = fmt_num(sy(*r));
        let _ = writeln!(
            out,
            r##"<line class="reference" x1="{}" y1="{py}" x2="{}" y2="{py}" stroke="#444" stroke-width="1.5" stroke-dasharray="6 4"/>"##,
            fmt_num(LEFT),
            fmt_num(LEFT + pw)
        );
    }

    // Legend.
    let mut ly = TOP + 14.0;
    let lx = LEFT + pw - 150.0;
    for b in &chart.bands {
        let _ = writeln!(
            out,
            r#"<rect x="{}" y="{}" width="22" height="10" fill="{}" fill-opacity="0.35"/><text x="{}" y="{}">{}</text>"#,
            fmt_num(lx),
            fmt_num(ly - 9.0),
            escape(&b.color),
            fmt_num(lx + 28.0),
            fmt_num(ly),
            escape(&b.label)
        );
        ly += 18.0;
    }
    if let Some((label, _)) = &chart.reference {
        let _ = writeln!(
            out,
            r##"<line x1="{x0}" y1="{y}" x2="{x1}" y2="{y}" stroke="#444" stroke-dasharray="6 4"/><text x="{xt}" y="{yt}">{label}</text>"##,
            x0 = fmt_num(lx),
            y = fmt_num(ly - 4.0),
            x1 = fmt_num(lx + 22.0),
            xt = fmt_num(lx + 28.0),
            yt = fmt_num(ly),
            label = escape(label)
        );
    }
    out.push_str("</svg>\n");
    out
}
