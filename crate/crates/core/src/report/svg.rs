//! Minimal deterministic SVG line charts. Hand-rolled so that emitting the
//! same data twice produces identical bytes; no fonts are measured and no
//! randomness enters layout.

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 48.0;

pub const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#7f7f7f", "#2ca02c", "#9467bd", "#ff7f0e",
];

/// One plotted series, optionally with a confidence band.
#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub color: String,
    pub dashed: bool,
    pub points: Vec<(f64, f64)>,
    /// Per-x (low, high) band, drawn as a translucent polygon.
    pub band: Option<Vec<(f64, f64, f64)>>,
}

#[derive(Debug, Clone)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Fixed y-range; autoscaled from the data when absent.
    pub y_range: Option<(f64, f64)>,
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

fn tick_label(v: f64) -> String {
    if (v - v.round()).abs() < 1e-9 {
        format!("{}", v.round() as i64)
    } else {
        format!("{v:.2}")
    }
}

impl Chart {
    pub fn render_svg(&self) -> String {
        let xs: Vec<f64> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().map(|p| p.0))
            .collect();
        let mut ys: Vec<f64> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().map(|p| p.1))
            .collect();
        for s in &self.series {
            if let Some(band) = &s.band {
                ys.extend(band.iter().flat_map(|&(_, lo, hi)| [lo, hi]));
            }
        }

        let (x_min, x_max) = min_max(&xs).unwrap_or((0.0, 1.0));
        let (y_min, y_max) = self
            .y_range
            .or_else(|| min_max(&ys))
            .unwrap_or((0.0, 1.0));
        let x_span = if x_max > x_min { x_max - x_min } else { 1.0 };
        let y_span = if y_max > y_min { y_max - y_min } else { 1.0 };

        let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        let px = |x: f64| MARGIN_LEFT + (x - x_min) / x_span * plot_w;
        let py = |y: f64| MARGIN_TOP + (1.0 - (y - y_min) / y_span) * plot_h;

        let mut svg = String::new();
        svg.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
             viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
        ));
        svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\" \
             text-anchor=\"middle\">{}</text>\n",
            fmt(WIDTH / 2.0),
            escape(&self.title)
        ));

        // axes
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
            fmt(MARGIN_LEFT),
            fmt(HEIGHT - MARGIN_BOTTOM),
            fmt(WIDTH - MARGIN_RIGHT),
            fmt(HEIGHT - MARGIN_BOTTOM)
        ));
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
            fmt(MARGIN_LEFT),
            fmt(MARGIN_TOP),
            fmt(MARGIN_LEFT),
            fmt(HEIGHT - MARGIN_BOTTOM)
        ));

        // ticks: 5 per axis
        for i in 0..=4 {
            let t = i as f64 / 4.0;
            let xv = x_min + t * x_span;
            let yv = y_min + t * y_span;
            let x = px(xv);
            let y = py(yv);
            svg.push_str(&format!(
                "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
                fmt(x),
                fmt(HEIGHT - MARGIN_BOTTOM),
                fmt(x),
                fmt(HEIGHT - MARGIN_BOTTOM + 4.0)
            ));
            svg.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" \
                 text-anchor=\"middle\">{}</text>\n",
                fmt(x),
                fmt(HEIGHT - MARGIN_BOTTOM + 16.0),
                tick_label(xv)
            ));
            svg.push_str(&format!(
                "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
                fmt(MARGIN_LEFT - 4.0),
                fmt(y),
                fmt(MARGIN_LEFT),
                fmt(y)
            ));
            svg.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" \
                 text-anchor=\"end\">{}</text>\n",
                fmt(MARGIN_LEFT - 8.0),
                fmt(y + 4.0),
                tick_label(yv)
            ));
        }

        // axis labels
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
             text-anchor=\"middle\">{}</text>\n",
            fmt(MARGIN_LEFT + plot_w / 2.0),
            fmt(HEIGHT - 8.0),
            escape(&self.x_label)
        ));
        svg.push_str(&format!(
            "<text x=\"16\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
             text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
            fmt(MARGIN_TOP + plot_h / 2.0),
            fmt(MARGIN_TOP + plot_h / 2.0),
            escape(&self.y_label)
        ));

        // bands first so lines draw on top
        for series in &self.series {
            if let Some(band) = &series.band {
                if band.len() >= 2 {
                    let mut d = String::from("M");
                    for (i, &(x, _, hi)) in band.iter().enumerate() {
                        if i > 0 {
                            d.push_str(" L");
                        }
                        d.push_str(&format!("{},{}", fmt(px(x)), fmt(py(hi))));
                    }
                    for &(x, lo, _) in band.iter().rev() {
                        d.push_str(&format!(" L{},{}", fmt(px(x)), fmt(py(lo))));
                    }
                    d.push_str(" Z");
                    svg.push_str(&format!(
                        "<path d=\"{d}\" fill=\"{}\" fill-opacity=\"0.15\" stroke=\"none\"/>\n",
                        series.color
                    ));
                }
            }
        }

        for series in &self.series {
            if series.points.is_empty() {
                continue;
            }
            let pts: Vec<String> = series
                .points
                .iter()
                .map(|&(x, y)| format!("{},{}", fmt(px(x)), fmt(py(y))))
                .collect();
            let dash = if series.dashed {
                " stroke-dasharray=\"6 4\""
            } else {
                ""
            };
            svg.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"{dash}/>\n",
                pts.join(" "),
                series.color
            ));
            for &(x, y) in &series.points {
                svg.push_str(&format!(
                    "<circle cx=\"{}\" cy=\"{}\" r=\"2.5\" fill=\"{}\"/>\n",
                    fmt(px(x)),
                    fmt(py(y)),
                    series.color
                ));
            }
        }

        // legend
        for (i, series) in self.series.iter().enumerate() {
            let y = MARGIN_TOP + 14.0 * i as f64;
            svg.push_str(&format!(
                "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"2\"/>\n",
                fmt(WIDTH - MARGIN_RIGHT - 120.0),
                fmt(y),
                fmt(WIDTH - MARGIN_RIGHT - 100.0),
                fmt(y),
                series.color
            ));
            svg.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
                fmt(WIDTH - MARGIN_RIGHT - 94.0),
                fmt(y + 4.0),
                escape(&series.name)
            ));
        }

        svg.push_str("</svg>\n");
        svg
    }
}

fn min_max(values: &[f64]) -> Option<(f64, f64)> {
    let mut iter = values.iter().copied().filter(|v| v.is_finite());
    let first = iter.next()?;
    let (mut lo, mut hi) = (first, first);
    for v in iter {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Some((lo, hi))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rendering_is_deterministic() {
        let chart = Chart {
            title: "flip rate".into(),
            x_label: "|alpha|".into(),
            y_label: "rate".into(),
            series: vec![Series {
                name: "probe".into(),
                color: PALETTE[0].into(),
                dashed: false,
                points: vec![(0.0, 0.0), (2.0, 0.5), (4.0, 0.9)],
                band: Some(vec![(0.0, 0.0, 0.1), (2.0, 0.4, 0.6), (4.0, 0.8, 1.0)]),
            }],
            y_range: Some((0.0, 1.0)),
        };
        let a = chart.render_svg();
        let b = chart.render_svg();
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.contains("polyline"));
        assert!(a.contains("flip rate"));
    }
}
