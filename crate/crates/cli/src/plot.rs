//! Static SVG line charts.

use std::fmt::Write as _;

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 40.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// One polyline. `offset` shifts it right along the shared x axis.
pub struct Line<'a> {
    pub label: &'a str,
    pub values: &'a [f64],
    pub offset: usize,
}

impl<'a> Line<'a> {
    pub fn new(label: &'a str, values: &'a [f64]) -> Self {
        Line {
            label,
            values,
            offset: 0,
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders `lines` on linear axes with the y range and x extent labelled.
/// Non-finite values break the line.
pub fn line_chart(title: &str, lines: &[Line]) -> String {
    let finite = lines.iter().flat_map(|l| l.values.iter().copied()).filter(|v| v.is_finite());
    let (mut lo, mut hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    let (y_lo, y_hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    let x_max = lines
        .iter()
        .map(|l| (l.offset + l.values.len()).saturating_sub(1))
        .max()
        .unwrap_or(0)
        .max(1) as f64;

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let px = |i: f64| MARGIN_LEFT + plot_w * i / x_max;
    let py = |v: f64| MARGIN_TOP + plot_h * (1.0 - (v - y_lo) / (y_hi - y_lo));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (x0, x1, y0, y1) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT, MARGIN_TOP, HEIGHT - MARGIN_BOTTOM);
    let _ = writeln!(
        s,
        r#"<polyline points="{x0},{y0} {x0},{y1} {x1},{y1}" fill="none" stroke="black" stroke-width="1"/>"#
    );
    let label = |s: &mut String, x: f64, y: f64, anchor: &str, text: String| {
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{y:.1}" font-family="sans-serif" font-size="11" text-anchor="{anchor}">{text}</text>"#
        );
    };
    label(&mut s, x0 - 6.0, y0 + 4.0, "end", format!("max {}", fmt_tick(y_hi)));
    label(&mut s, x0 - 6.0, y1, "end", format!("min {}", fmt_tick(y_lo)));
    label(&mut s, x0, y1 + 16.0, "middle", "0".into());
    label(&mut s, x1, y1 + 16.0, "middle", format!("{}", x_max as usize));

    for (k, line) in lines.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mut segment = Vec::new();
        let flush = |seg: &mut Vec<String>, s: &mut String| {
            if seg.len() > 1 {
                let _ = writeln!(
                    s,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.2"/>"#,
                    seg.join(" ")
                );
            }
            seg.clear();
        };
        for (i, &v) in line.values.iter().enumerate() {
            if v.is_finite() {
                segment.push(format!("{:.2},{:.2}", px((line.offset + i) as f64), py(v)));
            } else {
                flush(&mut segment, &mut s);
            }
        }
        flush(&mut segment, &mut s);
        let ly = MARGIN_TOP + 14.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{:.1}" y="{:.1}" width="10" height="3" fill="{color}"/>"#,
            x1 - 150.0,
            ly - 4.0
        );
        label(&mut s, x1 - 135.0, ly, "start", escape(line.label));
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 1000.0 || v.abs() < 0.01 && v != 0.0 {
        format!("{v:.3e}")
    } else {
        format!("{v:.3}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn viewport_and_labels() {
        let v = [1.0, 3.0, 2.0];
        let svg = line_chart("close <IBM>", &[Line::new("close", &v)]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains(r#"viewBox="0 0 800 400""#));
        assert!(svg.contains("max 3.000"));
        assert!(svg.contains("min 1.000"));
        assert!(svg.contains("close &lt;IBM&gt;"));
        assert_eq!(svg.matches("stroke=\"#1f77b4\"").count(), 1);
    }

    #[test]
    fn gaps_split_lines_and_constant_series_render() {
        let v = [1.0, 1.0, f64::NAN, 1.0, 1.0];
        let svg = line_chart("flat", &[Line::new("x", &v)]);
        assert_eq!(svg.matches("stroke=\"#1f77b4\"").count(), 2);
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn offset_lines_share_axis() {
        let a = [0.0, 1.0, 2.0, 3.0];
        let b = [5.0, 6.0];
        let svg = line_chart(
            "t",
            &[
                Line::new("a", &a),
                Line {
                    label: "b",
                    values: &b,
                    offset: 4,
                },
            ],
        );
        assert!(svg.contains(">5</text>"));
        assert!(svg.contains(&format!("{:.2},", WIDTH - MARGIN_RIGHT)));
    }
}
