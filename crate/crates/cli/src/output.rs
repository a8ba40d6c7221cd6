//! CSV tables, minimal SVG line charts and run manifests.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::CliError;

/// A table whose rows are written in insertion order.
#[derive(Clone, Debug)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| *h == name)
    }

    pub fn failed_rows(&self) -> usize {
        match self.column("error") {
            Some(k) => self.rows.iter().filter(|r| !r[k].is_empty()).count(),
            None => 0,
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest round-trip representation (exponent form for small and large
/// magnitudes); empty for NaN, which marks a failed point.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else if x == 0.0 {
        "0".into()
    } else {
        format!("{x:?}")
    }
}

#[derive(Clone, Debug)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];
const W: f64 = 640.0;
const H: f64 = 360.0;
const MARGIN: (f64, f64, f64, f64) = (70.0, 160.0, 40.0, 50.0); // left, right, top, bottom

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn bounds(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-300 {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

fn chart_body(c: &Chart, y0: f64, out: &mut String) {
    let (l, r, t, b) = MARGIN;
    let finite = |s: &Series| s.points.iter().filter(|(x, y)| x.is_finite() && y.is_finite()).copied().collect::<Vec<_>>();
    let all: Vec<(f64, f64)> = c.series.iter().flat_map(finite).collect();
    let (x_lo, x_hi) = bounds(all.iter().map(|p| p.0));
    let (y_lo, y_hi) = bounds(all.iter().map(|p| p.1));
    let px = |x: f64| l + (x - x_lo) / (x_hi - x_lo) * (W - l - r);
    let py = |y: f64| y0 + t + (y_hi - y) / (y_hi - y_lo) * (H - t - b);

    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, y0 + 22.0, escape(&c.title));
    let _ = writeln!(
        out,
        r#"<rect x="{l}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        y0 + t,
        W - l - r,
        H - t - b
    );
    for k in 0..=4 {
        let fx = x_lo + (x_hi - x_lo) * k as f64 / 4.0;
        let fy = y_lo + (y_hi - y_lo) * k as f64 / 4.0;
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="11">{fx:.3}</text>"#, px(fx), y0 + H - b + 16.0);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-size="11">{fy:.3e}</text>"#, l - 6.0, py(fy) + 4.0);
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle" font-size="13">{}</text>"#, (l + W - r) / 2.0, y0 + H - 8.0, escape(&c.x_label));
    let _ = writeln!(
        out,
        r#"<text x="16" y="{0}" text-anchor="middle" font-size="13" transform="rotate(-90 16 {0})">{1}</text>"#,
        y0 + H / 2.0,
        escape(&c.y_label)
    );
    for (k, s) in c.series.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let pts = finite(s);
        if !pts.is_empty() {
            let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
            let _ = writeln!(out, r#"<polyline fill="none" stroke="{colour}" stroke-width="1.8" points="{}"/>"#, path.join(" "));
            for &(x, y) in &pts {
                let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{colour}"/>"#, px(x), py(y));
            }
        }
        let ly = y0 + t + 16.0 * k as f64 + 8.0;
        let _ = writeln!(out, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="2"/>"#, W - r + 10.0, W - r + 30.0);
        let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="11">{}</text>"#, W - r + 34.0, ly + 4.0, escape(&s.name));
    }
}

/// Stack the charts vertically in one SVG document.
pub fn render_svg(charts: &[Chart]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{}" font-family="sans-serif">"#,
        H * charts.len() as f64
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (k, c) in charts.iter().enumerate() {
        chart_body(c, H * k as f64, &mut out);
    }
    out.push_str("</svg>\n");
    out
}

/// Collects the files a command writes and emits its manifest last.
pub struct RunRecord {
    pub command: String,
    pub out_dir: PathBuf,
    pub outputs: Vec<String>,
    pub threads: usize,
    started: Instant,
}

impl RunRecord {
    pub fn new(command: &str, out_dir: &Path, threads: usize) -> Self {
        Self {
            command: command.to_string(),
            out_dir: out_dir.to_path_buf(),
            outputs: Vec::new(),
            threads,
            started: Instant::now(),
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn write_table(&mut self, name: &str, t: &Table) -> Result<(), CliError> {
        t.write(&self.path(name))?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        std::fs::write(self.path(name), text)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, v: &T) -> Result<(), CliError> {
        self.write_text(name, &(serde_json::to_string_pretty(v)? + "\n"))
    }

    /// `<command>_manifest.json`: resolved config, versions, tolerances,
    /// wall time, outputs and any extra fields.
    pub fn finish(self, cfg: &RunConfig, failed_points: usize, extra: Value) -> Result<PathBuf, CliError> {
        let manifest = json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "core_version": gge_core::VERSION,
            "config": cfg,
            "tolerances": tolerances(),
            "threads": self.threads,
            "wall_time_s": self.started.elapsed().as_secs_f64(),
            "outputs": self.outputs,
            "failed_points": failed_points,
            "extra": extra,
        });
        let path = self.path(&format!("{}_manifest.json", self.command));
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(path)
    }
}

pub fn tolerances() -> Value {
    let tg = gge_core::ensembles::TggeOptions::default();
    json!({
        "tgge_tol": tg.tol,
        "tgge_max_iter": tg.max_iter,
        "degeneracy_rtol": gge_core::ensembles::DEGENERACY_RTOL,
        "steady_state_nullity_ratio": gge_core::liouville::NULLITY_RATIO,
        "thermal_denominator_min": gge_core::observables::THERMAL_DENOMINATOR_MIN,
        "ion_leakage_bound": gge_core::ion::LEAKAGE_BOUND,
        "effops_validity_ratio": gge_core::effops::VALIDITY_RATIO,
    })
}

/// Fails early when the output directory cannot be created or written.
pub fn prepare_out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
    let probe = dir.join(".gge-write-probe");
    std::fs::write(&probe, b"").map_err(|e| CliError::Config(format!("{} is not writable: {e}", dir.display())))?;
    let _ = std::fs::remove_file(probe);
    Ok(())
}
