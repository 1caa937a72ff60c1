//! Small deterministic SVG renderer for log-count plots. Output is a pure
//! function of the inputs: fixed canvas, fixed formatting, no clocks and no
//! randomness, so rerenders are byte-identical.

use crate::segfit::SegmentedFit;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 62.0;
const MARGIN_RIGHT: f64 = 18.0;
const MARGIN_TOP: f64 = 34.0;
const MARGIN_BOTTOM: f64 = 42.0;

/// Provenance strings embedded in the output.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotMeta {
    pub title: String,
    pub config_hash: Option<String>,
    pub build_id: String,
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    /// Data ranges padded so degenerate spans still render.
    fn around(xs: impl Iterator<Item = f64>, ys: impl Iterator<Item = f64>) -> Frame {
        let mut x0 = f64::INFINITY;
        let mut x1 = f64::NEG_INFINITY;
        let mut y0 = f64::INFINITY;
        let mut y1 = f64::NEG_INFINITY;
        for x in xs {
            if x.is_finite() {
                x0 = x0.min(x);
                x1 = x1.max(x);
            }
        }
        for y in ys {
            if y.is_finite() {
                y0 = y0.min(y);
                y1 = y1.max(y);
            }
        }
        if x0 > x1 {
            x0 = 0.0;
            x1 = 1.0;
        }
        if y0 > y1 {
            y0 = 0.0;
            y1 = 1.0;
        }
        if x1 - x0 < 1e-9 {
            x0 -= 1.0;
            x1 += 1.0;
        }
        let pad = ((y1 - y0) * 0.08).max(0.1);
        Frame { x0, x1, y0: y0 - pad, y1: y1 + pad }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_BOTTOM
            - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.3}")
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(meta: &PlotMeta, out: &mut String) {
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    out.push_str("<metadata>");
    out.push_str(&format!("build={}", xml_escape(&meta.build_id)));
    if let Some(h) = &meta.config_hash {
        out.push_str(&format!(" config-sha256={}", xml_escape(h)));
    }
    out.push_str("</metadata>\n");
    out.push_str(&format!(
        "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"22\" font-family=\"monospace\" font-size=\"15\">{}</text>\n",
        MARGIN_LEFT,
        xml_escape(&meta.title)
    ));
}

fn axes(frame: &Frame, out: &mut String) {
    let bx0 = MARGIN_LEFT;
    let bx1 = WIDTH - MARGIN_RIGHT;
    let by0 = MARGIN_TOP;
    let by1 = HEIGHT - MARGIN_BOTTOM;
    out.push_str(&format!(
        "<rect x=\"{bx0}\" y=\"{by0}\" width=\"{}\" height=\"{}\" fill=\"none\" \
         stroke=\"black\" stroke-width=\"1\"/>\n",
        bx1 - bx0,
        by1 - by0
    ));
    for k in 0..=4 {
        let fx = frame.x0 + (frame.x1 - frame.x0) * k as f64 / 4.0;
        let fy = frame.y0 + (frame.y1 - frame.y0) * k as f64 / 4.0;
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\" \
             text-anchor=\"middle\">{}</text>\n",
            fmt(frame.px(fx)),
            HEIGHT - MARGIN_BOTTOM + 16.0,
            fmt(fx)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\" \
             text-anchor=\"end\">{}</text>\n",
            MARGIN_LEFT - 6.0,
            fmt(frame.py(fy) + 4.0),
            fmt(fy)
        ));
    }
}

fn polyline(frame: &Frame, pts: &[(f64, f64)], style: &str, out: &mut String) {
    let coords: Vec<String> = pts
        .iter()
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|&(x, y)| format!("{},{}", fmt(frame.px(x)), fmt(frame.py(y))))
        .collect();
    if coords.len() < 2 {
        return;
    }
    out.push_str(&format!(
        "<polyline points=\"{}\" fill=\"none\" {style}/>\n",
        coords.join(" ")
    ));
}

fn scatter(frame: &Frame, pts: &[(f64, f64)], out: &mut String) {
    for &(x, y) in pts {
        if x.is_finite() && y.is_finite() {
            out.push_str(&format!(
                "<circle cx=\"{}\" cy=\"{}\" r=\"2.5\" fill=\"black\"/>\n",
                fmt(frame.px(x)),
                fmt(frame.py(y))
            ));
        }
    }
}

/// Log counts with a fitted piecewise-linear trend and its breakpoints.
pub fn fit_plot(points: &[(f64, f64)], fit: &SegmentedFit, meta: &PlotMeta) -> String {
    let frame = Frame::around(
        points.iter().map(|p| p.0),
        points.iter().map(|p| p.1).chain(points.iter().map(|p| fit.evaluate(p.0))),
    );
    let mut out = String::new();
    header(meta, &mut out);
    axes(&frame, &mut out);
    for &b in &fit.breakpoints {
        if b.is_finite() {
            out.push_str(&format!(
                "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"gray\" \
                 stroke-dasharray=\"4 3\"/>\n",
                fmt(frame.px(b)),
                fmt(MARGIN_TOP),
                fmt(HEIGHT - MARGIN_BOTTOM)
            ));
        }
    }
    // sample the fit densely enough to show the kinks
    let n = 200;
    let curve: Vec<(f64, f64)> = (0..=n)
        .map(|k| {
            let x = frame.x0 + (frame.x1 - frame.x0) * k as f64 / n as f64;
            (x, fit.evaluate(x))
        })
        .collect();
    polyline(&frame, &curve, "stroke=\"crimson\" stroke-width=\"1.5\"", &mut out);
    scatter(&frame, points, &mut out);
    out.push_str("</svg>\n");
    out
}

/// Log counts with a forecast envelope and threshold slope rays anchored at
/// the last observation.
pub fn monitor_plot(
    points: &[(f64, f64)],
    envelope: &[(f64, f64, f64)],
    rays: &[(String, f64)],
    meta: &PlotMeta,
) -> String {
    let anchor = points.last().copied().unwrap_or((0.0, 0.0));
    let horizon = envelope.last().map(|e| e.0 - anchor.0).unwrap_or(10.0).max(1.0);
    let ray_pts = |slope: f64| {
        [(anchor.0, anchor.1), (anchor.0 + horizon, anchor.1 + slope * horizon)]
    };
    let frame = Frame::around(
        points
            .iter()
            .map(|p| p.0)
            .chain(envelope.iter().map(|e| e.0)),
        points
            .iter()
            .map(|p| p.1)
            .chain(envelope.iter().flat_map(|e| [e.1, e.2]))
            .chain(rays.iter().filter(|r| r.1.is_finite()).map(|r| anchor.1 + r.1 * horizon)),
    );
    let mut out = String::new();
    header(meta, &mut out);
    axes(&frame, &mut out);
    if envelope.len() >= 2 {
        let mut ring: Vec<(f64, f64)> = envelope.iter().map(|&(t, lo, _)| (t, lo)).collect();
        ring.extend(envelope.iter().rev().map(|&(t, _, hi)| (t, hi)));
        let coords: Vec<String> = ring
            .iter()
            .map(|&(x, y)| format!("{},{}", fmt(frame.px(x)), fmt(frame.py(y))))
            .collect();
        out.push_str(&format!(
            "<polygon points=\"{}\" fill=\"lightsteelblue\" fill-opacity=\"0.45\" \
             stroke=\"steelblue\"/>\n",
            coords.join(" ")
        ));
    }
    for (name, slope) in rays {
        if !slope.is_finite() {
            continue;
        }
        let pts = ray_pts(*slope);
        polyline(
            &frame,
            &pts,
            "stroke=\"darkorange\" stroke-width=\"1.2\" stroke-dasharray=\"6 3\"",
            &mut out,
        );
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"10\" \
             fill=\"darkorange\">{}</text>\n",
            fmt(frame.px(pts[1].0) - 4.0),
            fmt(frame.py(pts[1].1) - 4.0),
            xml_escape(name)
        ));
    }
    scatter(&frame, points, &mut out);
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segfit::{fit_segmented_dp, LossKind};

    fn meta() -> PlotMeta {
        PlotMeta {
            title: "demo <series>".into(),
            config_hash: Some("abc123".into()),
            build_id: "test-build".into(),
        }
    }

    #[test]
    fn fit_plot_is_deterministic_and_complete() {
        let series = crate::series::LogSeries {
            label: "demo".into(),
            epoch: chrono::NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
            points: (0..20)
                .map(|d| (d, if d < 10 { 0.2 * d as f64 } else { 2.0 - 0.1 * (d - 10) as f64 }))
                .collect(),
        };
        let pts: Vec<(f64, f64)> = series.points.iter().map(|&(d, z)| (d as f64, z)).collect();
        let fit = fit_segmented_dp(&series, 2, LossKind::L2).unwrap();
        let a = fit_plot(&pts, &fit, &meta());
        let b = fit_plot(&pts, &fit, &meta());
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.ends_with("</svg>\n"));
        assert_eq!(a.matches("<circle").count(), 20);
        assert!(a.contains("config-sha256=abc123"));
        assert!(a.contains("build=test-build"));
        assert!(a.contains("demo &lt;series&gt;"));
        assert!(a.contains("stroke-dasharray=\"4 3\""));
        assert!(!a.contains("NaN"));
    }

    #[test]
    fn monitor_plot_draws_envelope_and_rays() {
        let pts: Vec<(f64, f64)> = (0..10).map(|d| (d as f64, 0.1 * d as f64)).collect();
        let env: Vec<(f64, f64, f64)> = (0..=7)
            .map(|k| {
                let t = 9.0 + k as f64;
                (t, 0.9 + 0.08 * k as f64 - 0.2, 0.9 + 0.12 * k as f64 + 0.2)
            })
            .collect();
        let rays = vec![("warn".to_string(), 0.15), ("inf".to_string(), f64::INFINITY)];
        let svg = monitor_plot(&pts, &env, &rays, &meta());
        assert!(svg.contains("<polygon"));
        assert_eq!(svg.matches("stroke=\"darkorange\"").count(), 1);
        assert!(svg.contains(">warn</text>"));
        assert!(!svg.contains("NaN"));
        assert_eq!(svg, monitor_plot(&pts, &env, &rays, &meta()));
    }

    #[test]
    fn degenerate_input_still_renders() {
        let pts = [(5.0, 2.0)];
        let env: Vec<(f64, f64, f64)> = Vec::new();
        let svg = monitor_plot(&pts, &env, &[], &meta());
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("<circle"));
    }
}
