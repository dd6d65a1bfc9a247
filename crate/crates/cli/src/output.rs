//! Report, tables and plots. Everything is rendered in memory first so a
//! failing run leaves the output directory untouched.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use plotters::prelude::*;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::experiments::{Outcome, Plot};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(s, "{b:02x}");
    }
    s
}

pub fn report(config_bytes: &[u8], grid: &magdecay::Grid3D, outcomes: &[Outcome]) -> Value {
    let mut results = serde_json::Map::new();
    let mut assertions = Vec::new();
    for o in outcomes {
        results.insert(o.name.into(), o.result.clone());
        for a in &o.assertions {
            assertions.push(json!({ "experiment": o.name, "name": a.name, "value": a.value, "tolerance": a.tolerance, "pass": a.pass }));
        }
    }
    json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config_sha256": sha256_hex(config_bytes),
        "grid": { "n": grid.n, "L": grid.l, "h": grid.h() },
        "results": results,
        "assertions": assertions,
    })
}

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>, String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| e.to_string())?;
    for r in rows {
        w.write_record(r).map_err(|e| e.to_string())?;
    }
    w.into_inner().map_err(|e| e.to_string())
}

fn render(plot: &Plot) -> Result<String, String> {
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (720, 480)).into_drawing_area();
        root.fill(&WHITE).map_err(|e| e.to_string())?;
        match plot {
            Plot::Decay { t, y, exponent, anchor, window } => {
                let pts: Vec<(f64, f64)> = t.iter().zip(y).filter(|(t, y)| **t > 0.0 && **y > 0.0).map(|(t, y)| (*t, *y)).collect();
                let (t0, t1) = bounds(pts.iter().map(|p| p.0));
                let (y0, y1) = bounds(pts.iter().map(|p| p.1));
                let mut chart = ChartBuilder::on(&root)
                    .margin(10)
                    .x_label_area_size(40)
                    .y_label_area_size(60)
                    .build_cartesian_2d((t0..t1).log_scale(), (y0..y1).log_scale())
                    .map_err(|e| e.to_string())?;
                chart.configure_mesh().x_desc("t").y_desc("sup |f(t)|").draw().map_err(|e| e.to_string())?;
                chart.draw_series(pts.iter().map(|p| Circle::new(*p, 2, BLUE.filled()))).map_err(|e| e.to_string())?;
                let (ta, ya) = *anchor;
                let line = (0..=50).map(|i| {
                    let t = window.0 + (window.1 - window.0) * i as f64 / 50.0;
                    (t, ya * (t / ta).powf(*exponent))
                });
                chart.draw_series(LineSeries::new(line, &RED)).map_err(|e| e.to_string())?;
            }
            Plot::Ladder { energies, near_zero } => {
                let (e0, e1) = bounds(energies.iter().copied().chain([-near_zero, *near_zero]));
                let mut chart = ChartBuilder::on(&root)
                    .margin(10)
                    .x_label_area_size(40)
                    .y_label_area_size(60)
                    .build_cartesian_2d(0.0..1.0, e0..e1)
                    .map_err(|e| e.to_string())?;
                chart.configure_mesh().disable_x_mesh().y_desc("energy").draw().map_err(|e| e.to_string())?;
                for e in energies {
                    chart.draw_series(LineSeries::new([(0.2, *e), (0.8, *e)], &BLUE)).map_err(|e| e.to_string())?;
                }
                for z in [-near_zero, *near_zero] {
                    chart.draw_series(LineSeries::new([(0.0, z), (1.0, z)], &RED)).map_err(|e| e.to_string())?;
                }
            }
            Plot::Traces { series } => {
                let (t0, t1) = bounds(series.iter().flat_map(|s| s.1.iter().copied()));
                let (y0, y1) = bounds(series.iter().flat_map(|s| s.2.iter().copied()));
                let mut chart = ChartBuilder::on(&root)
                    .margin(10)
                    .x_label_area_size(40)
                    .y_label_area_size(60)
                    .build_cartesian_2d(t0..t1, y0..y1)
                    .map_err(|e| e.to_string())?;
                chart.configure_mesh().x_desc("t").y_desc("kernel").draw().map_err(|e| e.to_string())?;
                for (i, (label, t, y)) in series.iter().enumerate() {
                    let color = Palette99::pick(i).to_rgba();
                    chart
                        .draw_series(LineSeries::new(t.iter().copied().zip(y.iter().copied()), color))
                        .map_err(|e| e.to_string())?
                        .label(label.clone())
                        .legend(move |(x, y)| PathElement::new([(x, y), (x + 16, y)], color));
                }
                chart.configure_series_labels().background_style(WHITE).border_style(BLACK).draw().map_err(|e| e.to_string())?;
            }
        }
        root.present().map_err(|e| e.to_string())?;
    }
    Ok(svg)
}

fn bounds(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v.filter(|x| x.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        (lo - 0.5, lo + 0.5)
    }
}

/// Renders every artifact, then writes them all.
pub fn write_all(dir: &Path, report: &Value, outcomes: &[Outcome], plots: bool, timestamps: &Value) -> Result<(), String> {
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    let mut text = serde_json::to_string_pretty(report).map_err(|e| e.to_string())?;
    text.push('\n');
    files.push(("report.json".into(), text.into_bytes()));
    files.push(("timestamps.json".into(), serde_json::to_vec_pretty(timestamps).map_err(|e| e.to_string())?));
    for o in outcomes {
        for t in &o.tables {
            files.push((t.file.clone(), csv_bytes(&t.header, &t.rows)?));
        }
        if plots {
            for (name, p) in &o.plots {
                files.push((name.clone(), render(p)?.into_bytes()));
            }
        }
    }
    fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    for (name, bytes) in files {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    Ok(())
}
