//! Log-log line charts of trial reports as standalone SVG.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::harness::TrialReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum PlotKind {
    /// Norm of the running bias against the number of runs.
    BiasVsRuns,
    /// MSE against the total number of measurements.
    #[value(name = "mse_vs_T")]
    MseVsT,
    /// MSE against the noise variance.
    MseVsNoise,
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        <PlotKind as clap::ValueEnum>::from_str(s, false).map_err(|_| Error::Config(format!("unknown plot kind {s:?}")))
    }
}

#[derive(Debug, Clone)]
struct Series {
    label: String,
    points: Vec<(f64, f64)>,
    reference: bool,
}

const PALETTE: [&str; 10] =
    ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 230.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

fn distinct(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for v in values {
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn sweep_series(report: &TrialReport, over_noise: bool) -> Result<Vec<Series>> {
    let cfg = &report.config;
    let (sweep, other): (Vec<f64>, Vec<f64>) = if over_noise {
        (distinct(cfg.sigma2.iter().copied()), distinct(cfg.repeats.iter().map(|&t| t as f64)))
    } else {
        (distinct(cfg.repeats.iter().map(|&t| t as f64)), distinct(cfg.sigma2.iter().copied()))
    };
    if sweep.len() < 2 {
        let what = if over_noise { "sigma2 values" } else { "repeat counts" };
        return Err(Error::Config(format!("plot needs at least two {what}, report has {}", sweep.len())));
    }
    let key = |x: f64, o: f64| if over_noise { (o as usize, x) } else { (x as usize, o) };
    let suffix = |o: f64| match (other.len(), over_noise) {
        (1, _) => String::new(),
        (_, true) => format!(" T={o}"),
        (_, false) => format!(" σ²={o}"),
    };
    let mut series = Vec::new();
    for &o in &other {
        for name in &cfg.estimators {
            let points = sweep
                .iter()
                .filter_map(|&x| {
                    let (t, s2) = key(x, o);
                    let cell = report.cell(name, t, s2)?;
                    let px = if over_noise { s2 } else { cell.m as f64 };
                    Some((px, cell.stats.as_ref()?.mse))
                })
                .collect();
            series.push(Series { label: format!("{name}{}", suffix(o)), points, reference: false });
        }
        let points = sweep
            .iter()
            .filter_map(|&x| {
                let (t, s2) = key(x, o);
                let b = report.baselines.iter().find(|b| b.repeats == t && b.sigma2 == s2)?;
                let px = if over_noise { s2 } else { b.m as f64 };
                Some((px, b.fisher.as_ref()?.crlb))
            })
            .collect();
        series.push(Series { label: format!("CRLB{}", suffix(o)), points, reference: true });
    }
    Ok(series)
}

fn bias_series(report: &TrialReport) -> Result<Vec<Series>> {
    let multi = report.baselines.len() > 1;
    let mut series = Vec::new();
    for cell in &report.cells {
        let points: Vec<(f64, f64)> =
            cell.progress.iter().map(|c| (c.runs as f64, c.bias.iter().map(|b| b * b).sum::<f64>().sqrt())).collect();
        let label = if multi {
            format!("{} T={} σ²={}", cell.estimator, cell.repeats, cell.sigma2)
        } else {
            cell.estimator.clone()
        };
        series.push(Series { label, points, reference: false });
    }
    if series.iter().all(|s| s.points.len() < 2) {
        return Err(Error::Config("bias_vs_runs needs at least two runs per cell".into()));
    }
    for b in &report.baselines {
        let Some(f) = &b.fisher else { continue };
        let runs: Vec<usize> = report
            .cells
            .iter()
            .filter(|c| c.repeats == b.repeats && c.sigma2 == b.sigma2)
            .flat_map(|c| c.progress.iter().map(|p| p.runs))
            .collect();
        let points =
            distinct(runs.into_iter().map(|r| r as f64)).into_iter().map(|n| (n, (f.crlb / n).sqrt())).collect();
        let label = if multi { format!("√(CRLB/N) T={} σ²={}", b.repeats, b.sigma2) } else { "√(CRLB/N)".into() };
        series.push(Series { label, points, reference: true });
    }
    Ok(series)
}

fn decade_range(values: impl Iterator<Item = f64>) -> Option<(i32, i32)> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| *v > 0.0 && v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo > hi {
        return None;
    }
    let lo = lo.log10().floor() as i32;
    let hi = (hi.log10().ceil() as i32).max(lo + 1);
    Some((lo, hi))
}

fn tick_label(e: i32) -> String {
    match e {
        0 => "1".into(),
        1 => "10".into(),
        _ => format!("1e{e}"),
    }
}

fn render(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Result<String> {
    let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let ys = series.iter().flat_map(|s| s.points.iter().map(|p| p.1));
    let (Some((x0, x1)), Some((y0, y1))) = (decade_range(xs), decade_range(ys)) else {
        return Err(Error::Config("nothing positive to plot on log axes".into()));
    };
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x.log10() - x0 as f64) / (x1 - x0) as f64 * pw;
    let sy = |y: f64| TOP + ph - (y.log10() - y0 as f64) / (y1 - y0) as f64 * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + pw / 2.0,
        escape(title)
    );
    for e in x0..=x1 {
        let x = sx(10f64.powi(e));
        let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#dddddd"/>"##, TOP + ph);
        let _ =
            writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, tick_label(e));
    }
    for e in y0..=y1 {
        let y = sy(10f64.powi(e));
        let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##, LEFT + pw);
        let _ =
            writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, y + 4.0, tick_label(e));
    }
    let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    let _ = writeln!(
        s,
        r#"<text class="x-label" x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 16.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text class="y-label" x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(y_label)
    );

    let mut color = 0;
    for (i, series) in series.iter().enumerate() {
        let (stroke, dash) = if series.reference {
            ("#000000", r#" stroke-dasharray="6 4""#)
        } else {
            color += 1;
            (PALETTE[(color - 1) % PALETTE.len()], "")
        };
        let pts: Vec<String> = series
            .points
            .iter()
            .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        if !pts.is_empty() {
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{stroke}" stroke-width="1.8"{dash} points="{}"/>"#,
                pts.join(" ")
            );
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 14.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{stroke}" stroke-width="1.8"{dash}/>"#,
            lx + 24.0
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 30.0, ly + 4.0, escape(&series.label));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Render `kind` for `report`. Fails with a configuration error when the
/// report lacks the sweep the kind needs.
pub fn render_svg(report: &TrialReport, kind: PlotKind) -> Result<String> {
    match kind {
        PlotKind::MseVsT => render(
            &format!("{}: MSE vs measurements", report.name),
            "m (total measurements)",
            "MSE",
            &sweep_series(report, false)?,
        ),
        PlotKind::MseVsNoise => {
            render(&format!("{}: MSE vs noise variance", report.name), "σ²", "MSE", &sweep_series(report, true)?)
        }
        PlotKind::BiasVsRuns => {
            render(&format!("{}: bias vs Monte-Carlo runs", report.name), "runs", "‖mean error‖", &bias_series(report)?)
        }
    }
}

pub fn emit_svg(report: &TrialReport, kind: PlotKind, path: &Path) -> Result<()> {
    let svg = render_svg(report, kind)?;
    std::fs::write(path, svg).map_err(Error::io(path))
}
