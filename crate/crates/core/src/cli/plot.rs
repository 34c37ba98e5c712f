//! Minimal SVG line chart of true versus predicted speed along a trip.

use std::fmt::Write;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 320.0;
const MARGIN_L: f64 = 56.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 32.0;
const MARGIN_B: f64 = 40.0;

struct Frame {
    n: usize,
    lo: f64,
    hi: f64,
}

impl Frame {
    fn x(&self, i: usize) -> f64 {
        let span = (self.n.max(2) - 1) as f64;
        MARGIN_L + (WIDTH - MARGIN_L - MARGIN_R) * i as f64 / span
    }

    fn y(&self, v: f64) -> f64 {
        let h = HEIGHT - MARGIN_T - MARGIN_B;
        MARGIN_T + h * (1.0 - (v - self.lo) / (self.hi - self.lo))
    }

    fn polyline(&self, values: &[f64], color: &str) -> String {
        let mut pts = String::new();
        for (i, v) in values.iter().enumerate() {
            if i > 0 {
                pts.push(' ');
            }
            let _ = write!(pts, "{:.2},{:.2}", self.x(i), self.y(*v));
        }
        format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{pts}\"/>\n"
        )
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Both series are drawn against the point index; the vertical axis starts at
/// zero and is rounded up to a multiple of 50 km/h.
pub fn speed_profile_svg(title: &str, truth: &[f64], predicted: &[f64]) -> String {
    let max = truth
        .iter()
        .chain(predicted)
        .copied()
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max);
    let frame = Frame {
        n: truth.len().max(predicted.len()),
        lo: 0.0,
        hi: ((max / 50.0).ceil() * 50.0).max(50.0),
    };
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"11\">"
    );
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    let _ = writeln!(s, "<text x=\"{MARGIN_L}\" y=\"20\" font-size=\"13\">{}</text>", escape(title));

    let (x0, x1) = (MARGIN_L, WIDTH - MARGIN_R);
    let (y0, y1) = (MARGIN_T, HEIGHT - MARGIN_B);
    let _ = writeln!(s, "<line x1=\"{x0}\" y1=\"{y1}\" x2=\"{x1}\" y2=\"{y1}\" stroke=\"black\"/>");
    let _ = writeln!(s, "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>");
    let ticks = 5;
    for t in 0..=ticks {
        let v = frame.hi * f64::from(t) / f64::from(ticks);
        let y = frame.y(v);
        let _ = writeln!(
            s,
            "<line x1=\"{x0}\" y1=\"{y:.2}\" x2=\"{x1}\" y2=\"{y:.2}\" stroke=\"#ddd\"/><text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{v:.0}</text>",
            x0 - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">point index</text>",
        (x0 + x1) / 2.0,
        HEIGHT - 8.0
    );
    let _ = writeln!(
        s,
        "<text x=\"14\" y=\"{:.2}\" transform=\"rotate(-90 14 {:.2})\" text-anchor=\"middle\">speed (km/h)</text>",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    s.push_str(&frame.polyline(truth, "black"));
    s.push_str(&frame.polyline(predicted, "#d62728"));
    let lx = x1 - 150.0;
    let _ = writeln!(
        s,
        "<line x1=\"{lx}\" y1=\"16\" x2=\"{}\" y2=\"16\" stroke=\"black\"/><text x=\"{}\" y=\"20\">true</text>",
        lx + 20.0,
        lx + 24.0
    );
    let _ = writeln!(
        s,
        "<line x1=\"{}\" y1=\"16\" x2=\"{}\" y2=\"16\" stroke=\"#d62728\"/><text x=\"{}\" y=\"20\">predicted</text>",
        lx + 64.0,
        lx + 84.0,
        lx + 88.0
    );
    s.push_str("</svg>\n");
    s
}
