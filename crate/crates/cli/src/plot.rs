//! Minimal static SVG line plots (no dependencies): one panel per metric,
//! multiple series per panel.

const PANEL_W: f64 = 360.0;
const PANEL_H: f64 = 270.0;
const MARGIN_L: f64 = 58.0;
const MARGIN_R: f64 = 14.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 42.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Clone, Debug)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 1000.0 || v.abs() < 0.01 {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn panel_svg(panel: &Panel, ox: f64, oy: f64) -> String {
    let mut s = format!("<g transform=\"translate({ox},{oy})\">\n");
    let (mut xmin, mut xmax) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
    for series in &panel.series {
        for &(x, y) in &series.points {
            xmin = xmin.min(x);
            xmax = xmax.max(x);
            ymin = ymin.min(y);
            ymax = ymax.max(y);
        }
    }
    if !xmin.is_finite() {
        (xmin, xmax, ymin, ymax) = (0.0, 1.0, 0.0, 1.0);
    }
    if (xmax - xmin).abs() < 1e-12 {
        xmax = xmin + 1.0;
    }
    if (ymax - ymin).abs() < 1e-12 {
        ymax = ymin + 1.0;
    }
    let iw = PANEL_W - MARGIN_L - MARGIN_R;
    let ih = PANEL_H - MARGIN_T - MARGIN_B;
    let px = |x: f64| MARGIN_L + (x - xmin) / (xmax - xmin) * iw;
    let py = |y: f64| MARGIN_T + (1.0 - (y - ymin) / (ymax - ymin)) * ih;

    s.push_str(&format!(
        "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{iw}\" height=\"{ih}\" fill=\"none\" stroke=\"#888\"/>\n"
    ));
    s.push_str(&format!(
        "<text x=\"{}\" y=\"16\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\">{}</text>\n",
        PANEL_W / 2.0,
        panel.title
    ));
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">{}</text>\n",
        PANEL_W / 2.0,
        PANEL_H - 6.0,
        panel.x_label
    ));
    s.push_str(&format!(
        "<text x=\"14\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\" transform=\"rotate(-90 14 {})\">{}</text>\n",
        PANEL_H / 2.0,
        PANEL_H / 2.0,
        panel.y_label
    ));
    // Axis extremes.
    for (v, x, y, anchor) in [
        (xmin, px(xmin), PANEL_H - MARGIN_B + 14.0, "middle"),
        (xmax, px(xmax), PANEL_H - MARGIN_B + 14.0, "middle"),
    ] {
        s.push_str(&format!(
            "<text x=\"{x}\" y=\"{y}\" text-anchor=\"{anchor}\" font-size=\"10\" font-family=\"sans-serif\">{}</text>\n",
            fmt_tick(v)
        ));
    }
    for v in [ymin, ymax] {
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"10\" font-family=\"sans-serif\">{}</text>\n",
            MARGIN_L - 4.0,
            py(v) + 3.0,
            fmt_tick(v)
        ));
    }
    for (si, series) in panel.series.iter().enumerate() {
        let color = COLORS[si % COLORS.len()];
        let mut sorted = series.points.clone();
        sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let path: Vec<String> = sorted.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        s.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            path.join(" ")
        ));
        for &(x, y) in &sorted {
            s.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.4\" fill=\"{color}\"/>\n",
                px(x),
                py(y)
            ));
        }
        // Legend entry.
        let ly = MARGIN_T + 12.0 + 14.0 * si as f64;
        s.push_str(&format!(
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            MARGIN_L + 6.0,
            MARGIN_L + 26.0
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"10\" font-family=\"sans-serif\">{}</text>\n",
            MARGIN_L + 30.0,
            ly + 3.0,
            series.name
        ));
    }
    s.push_str("</g>\n");
    s
}

/// Renders panels in a grid, `cols` wide.
pub fn render_grid(panels: &[Panel], cols: usize) -> String {
    let cols = cols.max(1);
    let rows = panels.len().div_ceil(cols);
    let width = PANEL_W * cols as f64;
    let height = PANEL_H * rows as f64;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    for (i, panel) in panels.iter().enumerate() {
        let ox = (i % cols) as f64 * PANEL_W;
        let oy = (i / cols) as f64 * PANEL_H;
        svg.push_str(&panel_svg(panel, ox, oy));
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_renders_wellformed_svg() {
        let panel = Panel {
            title: "metric".into(),
            x_label: "depth".into(),
            y_label: "value".into(),
            series: vec![
                Series {
                    name: "single".into(),
                    points: vec![(1.0, 3.4), (2.0, 3.1), (3.0, 3.0)],
                },
                Series {
                    name: "multi".into(),
                    points: vec![(1.0, 3.2), (2.0, 3.0), (3.0, 2.9)],
                },
            ],
        };
        let svg = render_grid(&[panel.clone(), panel], 2);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 4);
    }
}
