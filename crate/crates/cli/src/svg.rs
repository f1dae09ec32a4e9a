//! Self-contained SVG charts.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    /// `(x, mean, stddev)`.
    pub points: Vec<(f64, f64, f64)>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Step of roughly five "nice" ticks over `span`.
fn tick_step(span: f64) -> f64 {
    if !(span > 0.0) {
        return 1.0;
    }
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let r = raw / mag;
    let nice = if r < 1.5 {
        1.0
    } else if r < 3.5 {
        2.0
    } else if r < 7.5 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn ticks(lo: f64, hi: f64) -> (f64, f64, Vec<f64>) {
    let (lo, hi) = if hi - lo > 0.0 { (lo, hi) } else { (lo - 1.0, hi + 1.0) };
    let step = tick_step(hi - lo);
    let a = (lo / step).floor() * step;
    let b = (hi / step).ceil() * step;
    let n = ((b - a) / step).round() as usize;
    (a, b, (0..=n).map(|i| a + i as f64 * step).collect())
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e5).contains(&a) {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>
"#,
        LEFT + (W - LEFT - RIGHT) / 2.0,
        esc(title)
    );
}

/// Line chart with ±stddev error bars.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, m, s) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(m - s);
        y1 = y1.max(m + s);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let (xa, xb, xt) = ticks(x0, x1);
    let (ya, yb, yt) = ticks(y0, y1);
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - xa) / (xb - xa) * pw;
    let py = |y: f64| TOP + ph - (y - ya) / (yb - ya) * ph;

    let mut out = String::new();
    header(&mut out, title);
    let _ = writeln!(out, r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##);
    for &t in &xt {
        let x = px(t);
        let _ = writeln!(
            out,
            r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#eee"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            TOP + ph,
            TOP + ph + 16.0,
            fmt_tick(t)
        );
    }
    for &t in &yt {
        let y = py(t);
        let _ = writeln!(
            out,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#eee"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            y + 4.0,
            fmt_tick(t)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        H - 14.0,
        esc(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text transform="translate(18 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
        TOP + ph / 2.0,
        esc(y_label)
    );
    for (i, s) in series.iter().enumerate() {
        let c = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = s.points.iter().map(|&(x, m, _)| format!("{:.2},{:.2}", px(x), py(m))).collect();
        let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="2"/>"#, path.join(" "));
        for &(x, m, sd) in &s.points {
            let (cx, cy) = (px(x), py(m));
            if sd > 0.0 {
                let _ = writeln!(
                    out,
                    r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="{c}"/>"#,
                    py(m - sd),
                    py(m + sd)
                );
            }
            let _ = writeln!(out, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="3" fill="{c}"/>"#);
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = W - RIGHT + 12.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{c}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 18.0,
            lx + 24.0,
            ly + 4.0,
            esc(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Blue-to-yellow ramp, `t` in `[0, 1]`.
fn ramp(t: f64) -> String {
    const STOPS: [(f64, f64, f64); 5] =
        [(68.0, 1.0, 84.0), (59.0, 82.0, 139.0), (33.0, 145.0, 140.0), (94.0, 201.0, 98.0), (253.0, 231.0, 37.0)];
    let t = t.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (t.floor() as usize).min(STOPS.len() - 2);
    let f = t - i as f64;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    let mix = |u: f64, v: f64| (u + (v - u) * f).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Heat map of `values[row][col]` on a log10 colour scale; row 0 is drawn
/// at the bottom, column 0 at the left.
pub fn heat_map(title: &str, values: &[Vec<f64>], legend: &str) -> String {
    let rows = values.len();
    let cols = values.first().map_or(0, Vec::len);
    let logs: Vec<Vec<f64>> = values.iter().map(|r| r.iter().map(|v| v.max(f64::MIN_POSITIVE).log10()).collect()).collect();
    let lo = logs.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let side = (H - TOP - BOTTOM).min(W - LEFT - RIGHT);
    let cell = side / rows.max(cols).max(1) as f64;

    let mut out = String::new();
    header(&mut out, title);
    for (r, row) in logs.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            let x = LEFT + c as f64 * cell;
            let y = TOP + (rows - 1 - r) as f64 * cell;
            let _ = writeln!(
                out,
                r#"<rect x="{x:.3}" y="{y:.3}" width="{:.3}" height="{:.3}" fill="{}"/>"#,
                cell + 0.05,
                cell + 0.05,
                ramp((v - lo) / span)
            );
        }
    }
    let bottom = TOP + rows as f64 * cell;
    let _ = writeln!(out, r#"<text x="{LEFT}" y="{:.2}">0</text>"#, bottom + 16.0);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">column</text>"#,
        LEFT + cols as f64 * cell / 2.0,
        bottom + 30.0
    );
    let _ = writeln!(
        out,
        r#"<text transform="translate(40 {:.2}) rotate(-90)" text-anchor="middle">row</text>"#,
        TOP + rows as f64 * cell / 2.0
    );

    let bx = LEFT + cols as f64 * cell + 20.0;
    let bars = 50;
    let bh = side / bars as f64;
    for i in 0..bars {
        let t = i as f64 / (bars - 1) as f64;
        let y = TOP + side - (i + 1) as f64 * bh;
        let _ = writeln!(out, r#"<rect x="{bx:.2}" y="{y:.3}" width="16" height="{:.3}" fill="{}"/>"#, bh + 0.05, ramp(t));
    }
    let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}">1e{hi:.2}</text>"#, bx + 22.0, TOP + 10.0);
    let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}">1e{lo:.2}</text>"#, bx + 22.0, TOP + side);
    let _ = writeln!(
        out,
        r#"<text transform="translate({:.2} {:.2}) rotate(-90)" text-anchor="middle">{} (log scale)</text>"#,
        bx + 90.0,
        TOP + side / 2.0,
        esc(legend)
    );
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_cover_the_range() {
        let (a, b, t) = ticks(0.3, 9.7);
        assert!(a <= 0.3 && b >= 9.7);
        assert_eq!(t.first(), Some(&0.0));
        assert_eq!(t.last(), Some(&10.0));
        let (a, b, _) = ticks(5.0, 5.0);
        assert!(a < 5.0 && b > 5.0);
    }

    #[test]
    fn chart_is_well_formed() {
        let s = Series { label: "K=2 <a&b>".into(), points: vec![(0.0, 1.0, 0.1), (10.0, 2.0, 0.0)] };
        let svg = line_chart("t", "x", "y", &[s]);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("K=2 &lt;a&amp;b&gt;"));
        assert_eq!(svg.matches("<circle").count(), 2);
    }

    #[test]
    fn heat_map_origin_is_bottom_left() {
        let v = vec![vec![1.0, 10.0], vec![100.0, 1000.0]];
        let svg = heat_map("e", &v, "cycles");
        assert_eq!(svg.matches("<rect").count(), 1 + 4 + 50);
        // the smallest value, row 0 col 0, sits in the lower-left cell
        let first = svg.lines().find(|l| l.starts_with("<rect x=\"70.000\"")).unwrap();
        assert!(first.contains(&ramp(0.0)), "{first}");
        assert!(ramp(1.0) == "#fde725");
    }
}
