//! Minimal SVG charts: lines, bars and scatter points on linear axes.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;
const COLOURS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

pub struct Series<'a> {
    pub name: &'a str,
    pub points: Vec<(f64, f64)>,
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn fit<'a>(points: impl Iterator<Item = &'a (f64, f64)>) -> Frame {
        let (mut x, mut y) = ((f64::INFINITY, f64::NEG_INFINITY), (f64::INFINITY, f64::NEG_INFINITY));
        for &(a, b) in points.filter(|(a, b)| a.is_finite() && b.is_finite()) {
            x = (x.0.min(a), x.1.max(a));
            y = (y.0.min(b), y.1.max(b));
        }
        let pad = |(lo, hi): (f64, f64)| {
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo, hi)
            }
        };
        Frame { x: pad(x), y: pad(y) }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(svg: &mut String, title: &str, x_label: &str, y_label: &str, frame: &Frame) {
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>
<line x1="{MARGIN}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>
<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{b}" stroke="black"/>
<text x="{}" y="{}" text-anchor="middle">{}</text>
<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>
"#,
        WIDTH / 2.0,
        escape(title),
        WIDTH / 2.0,
        HEIGHT - 14.0,
        escape(x_label),
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label),
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN,
    );
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let (xv, yv) = (frame.x.0 + t * (frame.x.1 - frame.x.0), frame.y.0 + t * (frame.y.1 - frame.y.0));
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            frame.px(xv),
            HEIGHT - MARGIN + 16.0,
            tick(xv),
            MARGIN - 6.0,
            frame.py(yv) + 4.0,
            tick(yv)
        );
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 1e4 || (v != 0.0 && v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}

fn legend(svg: &mut String, names: &[&str]) {
    for (i, name) in names.iter().enumerate() {
        let y = MARGIN + 14.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            WIDTH - MARGIN - 120.0,
            y - 9.0,
            COLOURS[i % COLOURS.len()],
            WIDTH - MARGIN - 105.0,
            y,
            escape(name)
        );
    }
}

pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let frame = Frame::fit(series.iter().flat_map(|s| &s.points));
    let mut svg = String::new();
    header(&mut svg, title, x_label, y_label, &frame);
    for (i, s) in series.iter().enumerate() {
        let path: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            COLOURS[i % COLOURS.len()],
            path.join(" ")
        );
    }
    legend(&mut svg, &series.iter().map(|s| s.name).collect::<Vec<_>>());
    svg.push_str("</svg>\n");
    svg
}

pub fn scatter(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64)]) -> String {
    let frame = Frame::fit(points.iter());
    let mut svg = String::new();
    header(&mut svg, title, x_label, y_label, &frame);
    for &(x, y) in points.iter().filter(|(x, y)| x.is_finite() && y.is_finite()) {
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}" fill-opacity="0.7"/>"#,
            frame.px(x),
            frame.py(y),
            COLOURS[0]
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Vertical bars from zero, one per label.
pub fn bar_chart(title: &str, y_label: &str, bars: &[(String, f64)]) -> String {
    let lo = bars.iter().map(|b| b.1).fold(0.0, f64::min);
    let hi = bars.iter().map(|b| b.1).fold(0.0, f64::max);
    let frame = Frame::fit([(0.0, lo), (bars.len().max(1) as f64, hi)].iter());
    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>
<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>
"#,
        WIDTH / 2.0,
        escape(title),
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
    let zero = frame.py(0.0);
    let _ = writeln!(svg, r#"<line x1="{MARGIN}" y1="{zero:.2}" x2="{}" y2="{zero:.2}" stroke="black"/>"#, WIDTH - MARGIN);
    for (i, (label, v)) in bars.iter().enumerate() {
        let (x0, x1) = (frame.px(i as f64 + 0.1), frame.px(i as f64 + 0.9));
        let y = frame.py(*v);
        let _ = writeln!(
            svg,
            r#"<rect x="{x0:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/><text x="{:.2}" y="{}" text-anchor="middle">{}</text><text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            y.min(zero),
            x1 - x0,
            (y - zero).abs(),
            COLOURS[0],
            (x0 + x1) / 2.0,
            HEIGHT - MARGIN + 16.0,
            escape(label),
            (x0 + x1) / 2.0,
            y.min(zero) - 4.0,
            tick(*v)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_well_formed_and_deterministic() {
        let s = [Series { name: "a<b", points: vec![(0.0, 1.0), (1.0, 3.0), (2.0, f64::NAN)] }];
        let a = line_chart("t", "x", "y", &s);
        assert_eq!(a, line_chart("t", "x", "y", &s));
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert!(a.contains("a&lt;b") && !a.contains("NaN"));
        assert_eq!(bar_chart("b", "y", &[("x".into(), -2.0), ("y".into(), 5.0)]).matches("<rect x=").count(), 2);
        assert_eq!(scatter("s", "x", "y", &[(1.0, 1.0); 3]).matches("<circle").count(), 3);
    }
}
