//! Minimal deterministic SVG line plots. All coordinates are formatted
//! with fixed precision so identical inputs produce byte-identical files.

use std::fmt::Write as _;

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 520.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;

pub const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Symmetric error bars per point.
    pub err: Option<Vec<f64>>,
    pub color: String,
    pub markers: bool,
}

impl Series {
    pub fn line(label: &str, points: Vec<(f64, f64)>, color: &str) -> Self {
        Self {
            label: label.into(),
            points,
            err: None,
            color: color.into(),
            markers: false,
        }
    }

    pub fn with_markers(mut self) -> Self {
        self.markers = true;
        self
    }

    pub fn with_err(mut self, err: Vec<f64>) -> Self {
        self.err = Some(err);
        self
    }
}

#[derive(Debug, Clone, Default)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub y_range: Option<(f64, f64)>,
    /// Horizontal reference lines (value, label, color).
    pub hlines: Vec<(f64, String, String)>,
}

fn nice(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e4).contains(&a) {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.').to_string();
        if s.is_empty() {
            "0".into()
        } else {
            s
        }
    } else {
        format!("{v:.2e}")
    }
}

impl Plot {
    fn data_range(&self) -> ((f64, f64), (f64, f64)) {
        let mut xmin = f64::INFINITY;
        let mut xmax = f64::NEG_INFINITY;
        let mut ymin = f64::INFINITY;
        let mut ymax = f64::NEG_INFINITY;
        for s in &self.series {
            for (i, &(x, y)) in s.points.iter().enumerate() {
                let e = s.err.as_ref().map(|e| e[i]).unwrap_or(0.0);
                xmin = xmin.min(x);
                xmax = xmax.max(x);
                ymin = ymin.min(y - e);
                ymax = ymax.max(y + e);
            }
        }
        for (v, _, _) in &self.hlines {
            ymin = ymin.min(*v);
            ymax = ymax.max(*v);
        }
        if !xmin.is_finite() {
            (xmin, xmax) = (0.0, 1.0);
        }
        if !ymin.is_finite() {
            (ymin, ymax) = (0.0, 1.0);
        }
        if let Some((lo, hi)) = self.y_range {
            (ymin, ymax) = (lo, hi);
        } else {
            let pad = ((ymax - ymin) * 0.05).max(1e-12);
            ymin -= pad;
            ymax += pad;
        }
        if xmax == xmin {
            xmax = xmin + 1.0;
        }
        if ymax == ymin {
            ymax = ymin + 1.0;
        }
        ((xmin, xmax), (ymin, ymax))
    }

    pub fn render(&self) -> String {
        let ((xmin, xmax), (ymin, ymax)) = self.data_range();
        let px = |x: f64| MARGIN_L + (x - xmin) / (xmax - xmin) * (WIDTH - MARGIN_L - MARGIN_R);
        let py = |y: f64| {
            HEIGHT - MARGIN_B - (y - ymin) / (ymax - ymin) * (HEIGHT - MARGIN_T - MARGIN_B)
        };

        let mut out = String::new();
        let _ = writeln!(
            out,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
        );
        let _ = writeln!(
            out,
            "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>"
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"22\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">{}</text>",
            (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
            escape(&self.title)
        );

        // axes
        let _ = writeln!(
            out,
            "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>",
            MARGIN_L,
            HEIGHT - MARGIN_B,
            WIDTH - MARGIN_R,
            HEIGHT - MARGIN_B
        );
        let _ = writeln!(
            out,
            "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>",
            MARGIN_L,
            MARGIN_T,
            MARGIN_L,
            HEIGHT - MARGIN_B
        );

        // ticks
        for i in 0..=5 {
            let fx = xmin + (xmax - xmin) * i as f64 / 5.0;
            let x = px(fx);
            let _ = writeln!(
                out,
                "<line x1=\"{x:.2}\" y1=\"{:.1}\" x2=\"{x:.2}\" y2=\"{:.1}\" stroke=\"black\"/>",
                HEIGHT - MARGIN_B,
                HEIGHT - MARGIN_B + 5.0
            );
            let _ = writeln!(
                out,
                "<text x=\"{x:.2}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{}</text>",
                HEIGHT - MARGIN_B + 18.0,
                nice(fx)
            );
            let fy = ymin + (ymax - ymin) * i as f64 / 5.0;
            let y = py(fy);
            let _ = writeln!(
                out,
                "<line x1=\"{:.1}\" y1=\"{y:.2}\" x2=\"{:.1}\" y2=\"{y:.2}\" stroke=\"black\"/>",
                MARGIN_L - 5.0,
                MARGIN_L
            );
            let _ = writeln!(
                out,
                "<text x=\"{:.1}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{}</text>",
                MARGIN_L - 8.0,
                y + 4.0,
                nice(fy)
            );
        }
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">{}</text>",
            (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            "<text x=\"18\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 {:.1})\">{}</text>",
            (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
            (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
            escape(&self.y_label)
        );

        for (v, label, color) in &self.hlines {
            let y = py(*v);
            let _ = writeln!(
                out,
                "<line x1=\"{:.1}\" y1=\"{y:.2}\" x2=\"{:.1}\" y2=\"{y:.2}\" stroke=\"{color}\" stroke-dasharray=\"6 4\"/>",
                MARGIN_L,
                WIDTH - MARGIN_R
            );
            let _ = writeln!(
                out,
                "<text x=\"{:.1}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{color}\" text-anchor=\"end\">{}</text>",
                WIDTH - MARGIN_R - 4.0,
                y - 4.0,
                escape(label)
            );
        }

        for s in &self.series {
            if s.points.is_empty() {
                continue;
            }
            if let Some(errs) = &s.err {
                for (i, &(x, y)) in s.points.iter().enumerate() {
                    let e = errs[i];
                    if e > 0.0 {
                        let _ = writeln!(
                            out,
                            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"{}\" stroke-width=\"1\"/>",
                            px(x),
                            py(y - e),
                            px(x),
                            py(y + e),
                            s.color
                        );
                    }
                }
            }
            let mut path = String::new();
            for (i, &(x, y)) in s.points.iter().enumerate() {
                let _ = write!(
                    path,
                    "{}{:.2},{:.2}",
                    if i == 0 { "M" } else { " L" },
                    px(x),
                    py(y)
                );
            }
            let _ = writeln!(
                out,
                "<path d=\"{path}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>",
                s.color
            );
            if s.markers {
                for &(x, y) in &s.points {
                    let _ = writeln!(
                        out,
                        "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"{}\"/>",
                        px(x),
                        py(y),
                        s.color
                    );
                }
            }
        }

        // legend
        for (i, s) in self.series.iter().enumerate() {
            let y = MARGIN_T + 14.0 + 16.0 * i as f64;
            let x = WIDTH - MARGIN_R - 170.0;
            let _ = writeln!(
                out,
                "<line x1=\"{x:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"{}\" stroke-width=\"2\"/>",
                x + 22.0,
                s.color
            );
            let _ = writeln!(
                out,
                "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
                x + 28.0,
                y + 4.0,
                escape(&s.label)
            );
        }

        out.push_str("</svg>\n");
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rendering_is_deterministic() {
        let plot = Plot {
            title: "t".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            series: vec![
                Series::line("a", vec![(0.0, 0.1), (0.5, 0.9), (1.0, 0.4)], PALETTE[0])
                    .with_err(vec![0.01, 0.02, 0.01])
                    .with_markers(),
            ],
            y_range: Some((0.0, 1.0)),
            hlines: vec![(0.5, "ref".into(), "#888888".into())],
        };
        let a = plot.render();
        let b = plot.render();
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.ends_with("</svg>\n"));
        assert!(a.contains("<path"));
    }

    #[test]
    fn empty_plot_still_renders() {
        let p = Plot::default();
        let svg = p.render();
        assert!(svg.contains("</svg>"));
    }
}
