//! Minimal static line/scatter plots as SVG text.

use std::fmt::Write;

use chrono::{Duration, NaiveDate};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 130.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

const PALETTE: [&str; 5] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Default)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub lines: Vec<Series>,
    /// Drawn as unfilled circles.
    pub scatter: Option<Series>,
    /// Calendar date of x = 0; ticks are labeled with dates when set.
    pub t0: Option<NaiveDate>,
}

/// Tick positions at 1, 2 or 5 × 10^k covering `[lo, hi]`.
pub fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let raw = (hi - lo) / target.max(1) as f64;
    let magnitude = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * magnitude)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * magnitude);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.2}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

impl Plot {
    pub fn render(&self) -> String {
        let all: Vec<(f64, f64)> = self
            .lines
            .iter()
            .chain(self.scatter.iter())
            .flat_map(|s| s.points.iter().copied())
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .collect();
        let (mut x_lo, mut x_hi) = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
        let (mut y_lo, mut y_hi) = all.iter().fold((0f64, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
        if !x_lo.is_finite() {
            (x_lo, x_hi) = (0.0, 1.0);
        }
        if x_hi <= x_lo {
            x_hi = x_lo + 1.0;
        }
        if !y_hi.is_finite() || y_hi <= y_lo {
            y_hi = y_lo + 1.0;
        }
        y_hi *= 1.05;
        if y_lo < 0.0 {
            y_lo *= 1.05;
        }

        let plot_w = WIDTH - LEFT - RIGHT;
        let plot_h = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
        let sy = |y: f64| TOP + (1.0 - (y - y_lo) / (y_hi - y_lo)) * plot_h;

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            LEFT + plot_w / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            svg,
            r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
        );

        for x in nice_ticks(x_lo, x_hi, 8) {
            let px = sx(x);
            let label = match self.t0 {
                Some(d) if x.fract() == 0.0 => (d + Duration::days(x as i64)).format("%b %d").to_string(),
                _ => tick_label(x),
            };
            let _ = writeln!(
                svg,
                r#"<line x1="{px:.2}" y1="{}" x2="{px:.2}" y2="{}" stroke="black"/><text x="{px:.2}" y="{}" text-anchor="middle">{label}</text>"#,
                TOP + plot_h,
                TOP + plot_h + 5.0,
                TOP + plot_h + 19.0
            );
        }
        for y in nice_ticks(y_lo, y_hi, 6) {
            let py = sy(y);
            let _ = writeln!(
                svg,
                r##"<line x1="{}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="black"/><line x1="{LEFT}" y1="{py:.2}" x2="{}" y2="{py:.2}" stroke="#dddddd"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
                LEFT - 5.0,
                LEFT + plot_w,
                LEFT - 8.0,
                py + 4.0,
                tick_label(y)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            LEFT + plot_w / 2.0,
            HEIGHT - 15.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
            TOP + plot_h / 2.0,
            escape(&self.y_label)
        );

        let mut legend = Vec::new();
        for (i, series) in self.lines.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let path: Vec<String> = series
                .points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y)))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
                path.join(" ")
            );
            legend.push((series.name.as_str(), color, false));
        }
        if let Some(scatter) = &self.scatter {
            for (x, y) in scatter.points.iter().filter(|(x, y)| x.is_finite() && y.is_finite()) {
                let _ = writeln!(
                    svg,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="none" stroke="black"/>"#,
                    sx(*x),
                    sy(*y)
                );
            }
            legend.push((scatter.name.as_str(), "black", true));
        }
        for (i, (name, color, circle)) in legend.iter().enumerate() {
            let ly = TOP + 12.0 + 20.0 * i as f64;
            let lx = LEFT + plot_w + 12.0;
            if *circle {
                let _ = writeln!(svg, r#"<circle cx="{}" cy="{ly}" r="4" fill="none" stroke="{color}"/>"#, lx + 10.0);
            } else {
                let _ = writeln!(
                    svg,
                    r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
                    lx + 20.0
                );
            }
            let _ = writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(name));
        }
        svg.push_str("</svg>\n");
        svg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round_and_inside() {
        assert_eq!(nice_ticks(0.0, 14.0, 7), vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0]);
        let t = nice_ticks(0.0, 94.7, 6);
        assert_eq!(t, vec![0.0, 20.0, 40.0, 60.0, 80.0]);
        assert_eq!(nice_ticks(3.0, 3.0, 5), vec![3.0]);
    }

    #[test]
    fn renders_series_and_scatter() {
        let plot = Plot {
            title: "S & I".into(),
            x_label: "day".into(),
            y_label: "thousands".into(),
            lines: vec![
                Series { name: "S".into(), points: vec![(0.0, 150.0), (1.0, 100.0), (2.0, 20.0)] },
                Series { name: "I".into(), points: vec![(0.0, 2.0), (1.0, 40.0), (2.0, 60.0)] },
            ],
            scatter: Some(Series { name: "data".into(), points: vec![(0.0, 2.5), (1.0, 38.0), (2.0, f64::NAN)] }),
            t0: NaiveDate::from_ymd_opt(2015, 1, 17),
        };
        let svg = plot.render();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        // two data circles plus one legend circle; NaN skipped
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.contains("S &amp; I"));
        assert!(svg.contains("Jan 17"));
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn empty_plot_is_still_valid() {
        let svg = Plot::default().render();
        assert!(svg.contains("</svg>"));
    }
}
