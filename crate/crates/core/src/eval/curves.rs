use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::IterationTrace;

/// `‖x^{k+1} − x^k‖` against `k` for one (backend, scenario) pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSeries {
    pub backend: String,
    pub scenario: usize,
    pub step_norms: Vec<f64>,
}

pub fn iteration_curves(traces: &[(&str, usize, &IterationTrace)]) -> Result<Vec<CurveSeries>> {
    if traces.is_empty() {
        return Err(Error::InvalidArgument("no traces to plot".into()));
    }
    Ok(traces
        .iter()
        .map(|(b, s, t)| CurveSeries {
            backend: b.to_string(),
            scenario: *s,
            step_norms: t.step_norms.clone(),
        })
        .collect())
}

/// Long format: `backend,scenario,k,step_norm` with `k` starting at 1.
pub fn curves_csv(series: &[CurveSeries]) -> String {
    let mut out = String::from("backend,scenario,k,step_norm\n");
    for s in series {
        for (k, v) in s.step_norms.iter().enumerate() {
            writeln!(out, "{},{},{},{}", s.backend, s.scenario, k + 1, v).unwrap();
        }
    }
    out
}

const W: f64 = 720.0;
const H: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Log-scale line plot of the series as a standalone SVG document. Zero
/// and non-finite norms are left out; `tol` draws a dashed threshold.
pub fn curves_svg(series: &[CurveSeries], tol: Option<f64>) -> String {
    let positive = |v: &f64| v.is_finite() && *v > 0.0;
    let vals = series
        .iter()
        .flat_map(|s| s.step_norms.iter().copied())
        .chain(tol)
        .filter(positive);
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    let (d_lo, mut d_hi) = if lo.is_finite() {
        (lo.log10().floor(), hi.log10().ceil())
    } else {
        (-1.0, 0.0)
    };
    if d_hi <= d_lo {
        d_hi = d_lo + 1.0;
    }
    let k_max = series
        .iter()
        .map(|s| s.step_norms.len())
        .max()
        .unwrap_or(0)
        .max(2) as f64;
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let px = |k: f64| LEFT + (k - 1.0) / (k_max - 1.0) * pw;
    let py = |v: f64| TOP + (d_hi - v.log10()) / (d_hi - d_lo) * ph;

    let mut out = String::new();
    writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#).unwrap();
    writeln!(
        out,
        r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#
    )
    .unwrap();
    writeln!(
        out,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    )
    .unwrap();
    let mut d = d_lo;
    while d <= d_hi {
        let y = py(10f64.powf(d));
        writeln!(
            out,
            r##"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/>"##,
            LEFT + pw
        )
        .unwrap();
        writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">1e{d}</text>"#,
            LEFT - 6.0,
            y + 4.0
        )
        .unwrap();
        d += 1.0;
    }
    let step = nice_step(k_max);
    let mut k = 1.0;
    while k <= k_max {
        let x = px(k);
        writeln!(
            out,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{k}</text>"#,
            TOP + ph + 16.0
        )
        .unwrap();
        k = if k == 1.0 && step > 1.0 {
            step
        } else {
            k + step
        };
    }
    writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">iteration k</text>"#,
        LEFT + pw / 2.0,
        H - 10.0
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">‖x(k+1) − x(k)‖</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    )
    .unwrap();
    if let Some(t) = tol.filter(positive) {
        let y = py(t);
        writeln!(out, r#"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="gray" stroke-dasharray="6 4"/>"#, LEFT + pw).unwrap();
    }
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = s
            .step_norms
            .iter()
            .enumerate()
            .filter(|(_, v)| positive(v))
            .map(|(k, v)| format!("{:.1},{:.1}", px(k as f64 + 1.0), py(*v)))
            .collect();
        writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        )
        .unwrap();
        let ly = TOP + 14.0 * i as f64 + 8.0;
        let lx = LEFT + pw + 12.0;
        writeln!(out, r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#, lx + 18.0).unwrap();
        writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}">{} s{}</text>"#,
            lx + 24.0,
            ly + 4.0,
            escape(&s.backend),
            s.scenario
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}

fn nice_step(k_max: f64) -> f64 {
    let raw = (k_max / 8.0).max(1.0);
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
