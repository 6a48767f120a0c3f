//! Minimal self-contained SVG line charts: linear or log₁₀ x-axis, multiple
//! traces with solid/dashed styling, tick labels, axis titles, and a legend.
//! Output is deterministic for identical inputs.

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 78.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 44.0;
const MARGIN_BOTTOM: f64 = 58.0;

pub struct Trace {
    pub label: String,
    pub color: &'static str,
    pub dashed: bool,
    pub points: Vec<(f64, f64)>,
}

pub struct ChartSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
}

/// One standalone SVG document containing the given charts stacked
/// vertically.
pub fn stacked_svg(charts: &[(ChartSpec, Vec<Trace>)]) -> String {
    let total_h = HEIGHT * charts.len() as f64;
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{total_h}\" \
         viewBox=\"0 0 {WIDTH} {total_h}\" font-family=\"Helvetica, Arial, sans-serif\">\n"
    ));
    out.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{total_h}\" fill=\"white\"/>\n"
    ));
    for (i, (spec, traces)) in charts.iter().enumerate() {
        out.push_str(&format!(
            "<g transform=\"translate(0,{})\">\n",
            HEIGHT * i as f64
        ));
        render_chart(&mut out, spec, traces);
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    out
}

/// Single-chart convenience wrapper around [`stacked_svg`].
pub fn chart_svg(spec: ChartSpec, traces: Vec<Trace>) -> String {
    stacked_svg(&[(spec, traces)])
}

fn render_chart(out: &mut String, spec: &ChartSpec, traces: &[Trace]) {
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;

    let xs = traces
        .iter()
        .flat_map(|t| t.points.iter().map(|p| p.0))
        .filter(|v| v.is_finite() && (!spec.log_x || *v > 0.0));
    let ys = traces
        .iter()
        .flat_map(|t| t.points.iter().map(|p| p.1))
        .filter(|v| v.is_finite());
    let (mut x_min, mut x_max) = bounds(xs);
    let (mut y_min, mut y_max) = bounds(ys);
    if spec.log_x {
        x_min = x_min.log10();
        x_max = x_max.log10();
    }
    if x_max - x_min < 1e-12 {
        x_max = x_min + 1.0;
    }
    if y_max - y_min < 1e-12 {
        y_min -= 0.5;
        y_max += 0.5;
    } else {
        let pad = 0.05 * (y_max - y_min);
        y_min -= pad;
        y_max += pad;
    }

    let map_x = |x: f64| -> f64 {
        let v = if spec.log_x { x.log10() } else { x };
        MARGIN_LEFT + (v - x_min) / (x_max - x_min) * plot_w
    };
    let map_y =
        |y: f64| -> f64 { MARGIN_TOP + (1.0 - (y - y_min) / (y_max - y_min)) * plot_h };

    // Frame and title.
    out.push_str(&format!(
        "<rect x=\"{MARGIN_LEFT}\" y=\"{MARGIN_TOP}\" width=\"{plot_w}\" height=\"{plot_h}\" \
         fill=\"none\" stroke=\"#333\" stroke-width=\"1\"/>\n"
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"17\" fill=\"#111\">{}</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        MARGIN_TOP - 16.0,
        escape(&spec.title)
    ));

    // X ticks.
    if spec.log_x {
        let lo = x_min.floor() as i32;
        let hi = x_max.ceil() as i32;
        for exp in lo..=hi {
            let v = f64::from(exp);
            if v < x_min - 1e-9 || v > x_max + 1e-9 {
                continue;
            }
            let px = MARGIN_LEFT + (v - x_min) / (x_max - x_min) * plot_w;
            tick_x(out, px, plot_h, &format_tick(10f64.powi(exp)));
        }
    } else {
        for v in nice_ticks(x_min, x_max) {
            tick_x(out, map_x(v), plot_h, &format_tick(v));
        }
    }
    // Y ticks.
    for v in nice_ticks(y_min, y_max) {
        let py = map_y(v);
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{py}\" x2=\"{MARGIN_LEFT}\" y2=\"{py}\" stroke=\"#333\"/>\n",
            MARGIN_LEFT - 5.0
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"12\" fill=\"#333\">{}</text>\n",
            MARGIN_LEFT - 8.0,
            py + 4.0,
            format_tick(v)
        ));
    }

    // Axis labels.
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"14\" fill=\"#111\">{}</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        MARGIN_TOP + plot_h + 42.0,
        escape(&spec.x_label)
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"14\" fill=\"#111\" \
         transform=\"rotate(-90 {} {})\">{}</text>\n",
        MARGIN_LEFT - 56.0,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_LEFT - 56.0,
        MARGIN_TOP + plot_h / 2.0,
        escape(&spec.y_label)
    ));

    // Traces.
    for trace in traces {
        let dash = if trace.dashed {
            " stroke-dasharray=\"9,6\""
        } else {
            ""
        };
        let mut points = String::new();
        for &(x, y) in &trace.points {
            if !x.is_finite() || !y.is_finite() || (spec.log_x && x <= 0.0) {
                continue;
            }
            points.push_str(&format!("{:.2},{:.2} ", map_x(x), map_y(y)));
        }
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\"{dash} points=\"{}\"/>\n",
            trace.color,
            points.trim_end()
        ));
    }

    // Legend (top-right inside the frame).
    for (i, trace) in traces.iter().enumerate() {
        let ly = MARGIN_TOP + 20.0 + 20.0 * i as f64;
        let lx = MARGIN_LEFT + plot_w - 180.0;
        let dash = if trace.dashed {
            " stroke-dasharray=\"9,6\""
        } else {
            ""
        };
        out.push_str(&format!(
            "<line x1=\"{lx}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{}\" stroke-width=\"2\"{dash}/>\n",
            lx + 34.0,
            trace.color
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"13\" fill=\"#111\">{}</text>\n",
            lx + 42.0,
            ly + 4.0,
            escape(&trace.label)
        ));
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo > hi {
        (0.0, 1.0)
    } else {
        (lo, hi)
    }
}

fn tick_x(out: &mut String, px: f64, plot_h: f64, label: &str) {
    let base = MARGIN_TOP + plot_h;
    out.push_str(&format!(
        "<line x1=\"{px}\" y1=\"{base}\" x2=\"{px}\" y2=\"{}\" stroke=\"#333\"/>\n",
        base + 5.0
    ));
    out.push_str(&format!(
        "<text x=\"{px}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\" fill=\"#333\">{label}</text>\n",
        base + 20.0
    ));
}

/// Roughly five ticks on a 1–2–5 ladder covering [lo, hi].
fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let step = if norm <= 1.0 {
        mag
    } else if norm <= 2.0 {
        2.0 * mag
    } else if norm <= 5.0 {
        5.0 * mag
    } else {
        10.0 * mag
    };
    let mut ticks = Vec::new();
    let mut k = (lo / step).ceil() as i64;
    while (k as f64) * step <= hi + 1e-9 * span {
        ticks.push(k as f64 * step);
        k += 1;
        if ticks.len() > 20 {
            break;
        }
    }
    ticks
}

/// Compact tick label: fixed precision with trailing zeros trimmed.
fn format_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    let s = if a >= 1e5 || a < 1e-3 {
        format!("{v:e}")
    } else {
        let t = format!("{v:.4}");
        let t = t.trim_end_matches('0').trim_end_matches('.').to_string();
        t
    };
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
