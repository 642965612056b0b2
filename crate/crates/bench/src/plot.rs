//! SVG figures from the CSV artifacts. Presentation only: nothing here feeds back into a run.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};

use plotters::prelude::*;
use serde::{Deserialize, Serialize};

use crate::report::read_table;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlotKind {
    /// One panel per column against `t`, with `r_i` drawn over `x_i`.
    Timeseries,
    /// Stability lobes, optionally with an iteration log or a stability grid on top.
    Lobes,
    /// Mean accuracy and steady-state error against noise ratio, per method.
    Report,
}

#[derive(Debug, thiserror::Error)]
pub enum PlotError {
    #[error("{path}: missing columns {columns:?}")]
    MissingColumns { path: String, columns: Vec<String> },
    #[error("{path}: no data rows")]
    Empty { path: String },
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn load(path: &Path, required: &[&str]) -> anyhow::Result<Self> {
        let (header, rows) = read_table(path)?;
        let missing: Vec<String> = required.iter().filter(|c| !header.iter().any(|h| h == *c)).map(|c| c.to_string()).collect();
        if !missing.is_empty() {
            return Err(PlotError::MissingColumns { path: path.display().to_string(), columns: missing }.into());
        }
        if rows.is_empty() {
            return Err(PlotError::Empty { path: path.display().to_string() }.into());
        }
        Ok(Self { header, rows })
    }

    fn col(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Numeric column; unparsable cells (blank, "diverged") become NaN.
    fn values(&self, name: &str) -> Vec<f64> {
        let i = self.col(name).expect("checked column");
        self.rows.iter().map(|r| r[i].parse().unwrap_or(f64::NAN)).collect()
    }

    fn strings(&self, name: &str) -> Vec<&str> {
        let i = self.col(name).expect("checked column");
        self.rows.iter().map(|r| r[i].as_str()).collect()
    }
}

fn pe<E: Display>(e: E) -> anyhow::Error {
    anyhow::anyhow!("drawing failed: {e}")
}

fn range(vals: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.into_iter().filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { lo.abs().max(1.0) * 0.1 };
    (lo - pad, hi + pad)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "plot".into())
}

/// Renders `input` as `kind` into `out_dir` and returns the files written. `overlay` is an
/// optimization log or a stability grid for [`PlotKind::Lobes`].
pub fn render_plots(input: &Path, kind: PlotKind, out_dir: &Path, overlay: Option<&Path>) -> anyhow::Result<Vec<PathBuf>> {
    match kind {
        PlotKind::Timeseries => timeseries(input, out_dir).map(|p| vec![p]),
        PlotKind::Lobes => lobes(input, overlay, out_dir).map(|p| vec![p]),
        PlotKind::Report => report(input, out_dir),
    }
}

fn timeseries(input: &Path, out_dir: &Path) -> anyhow::Result<PathBuf> {
    let table = Table::load(input, &["t"])?;
    let panels: Vec<&String> = table.header.iter().filter(|h| *h != "t" && *h != "objective" && !h.starts_with("r_")).collect();
    if panels.is_empty() {
        return Err(PlotError::MissingColumns { path: input.display().to_string(), columns: vec!["<any series>".into()] }.into());
    }
    let t = table.values("t");
    let out = out_dir.join(format!("{}.svg", stem(input)));
    let root = SVGBackend::new(&out, (900, 220 * panels.len() as u32)).into_drawing_area();
    root.fill(&WHITE).map_err(pe)?;
    let areas = root.split_evenly((panels.len(), 1));
    let (t0, t1) = range(t.iter().copied());
    for (area, name) in areas.iter().zip(&panels) {
        let y = table.values(name);
        let reference = name.strip_prefix("x_").map(|i| format!("r_{i}")).filter(|r| table.col(r).is_some());
        let r = reference.as_ref().map(|c| table.values(c));
        let (y0, y1) = range(y.iter().chain(r.iter().flatten()).copied());
        let mut chart = ChartBuilder::on(area)
            .margin(8)
            .x_label_area_size(28)
            .y_label_area_size(60)
            .build_cartesian_2d(t0..t1, y0..y1)
            .map_err(pe)?;
        chart.configure_mesh().x_desc("t").y_desc(name.as_str()).draw().map_err(pe)?;
        let pts = |v: &[f64]| t.iter().zip(v).filter(|(a, b)| a.is_finite() && b.is_finite()).map(|(a, b)| (*a, *b)).collect::<Vec<_>>();
        chart.draw_series(LineSeries::new(pts(&y), &BLUE)).map_err(pe)?;
        if let Some(r) = r {
            chart.draw_series(LineSeries::new(pts(&r), RED.stroke_width(1))).map_err(pe)?;
        }
    }
    root.present().map_err(pe)?;
    Ok(out.clone())
}

fn lobes(input: &Path, overlay: Option<&Path>, out_dir: &Path) -> anyhow::Result<PathBuf> {
    let table = Table::load(input, &["lobe_index", "omega_rps", "blim_mm"])?;
    let over = overlay.map(|p| Table::load(p, &["omega_rps", "b_mm"])).transpose()?;
    let idx = table.values("lobe_index");
    let om = table.values("omega_rps");
    let bl = table.values("blim_mm");
    let ((x0, x1), (_, y1)) = match &over {
        Some(o) => {
            let (a, b) = range(o.values("omega_rps"));
            let (_, c) = range(o.values("b_mm"));
            ((a - 0.1 * (b - a), b + 0.1 * (b - a)), (0.0, c * 1.3))
        }
        None => {
            let min_b = bl.iter().copied().fold(f64::INFINITY, f64::min);
            (range(om.iter().copied().filter(|w| *w < 2000.0)), (0.0, 4.0 * min_b))
        }
    };
    let out = out_dir.join(format!("{}.svg", stem(input)));
    let root = SVGBackend::new(&out, (900, 600)).into_drawing_area();
    root.fill(&WHITE).map_err(pe)?;
    let mut chart = ChartBuilder::on(&root)
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(50)
        .build_cartesian_2d(x0..x1, 0.0..y1)
        .map_err(pe)?;
    chart.configure_mesh().x_desc("spindle speed (rps)").y_desc("chip width (mm)").draw().map_err(pe)?;
    let mut by_lobe: BTreeMap<i64, Vec<(f64, f64)>> = BTreeMap::new();
    for i in 0..idx.len() {
        if om[i] >= x0 && om[i] <= x1 && bl[i] <= y1 {
            by_lobe.entry(idx[i] as i64).or_default().push((om[i], bl[i]));
        }
    }
    for pts in by_lobe.values_mut() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        chart.draw_series(LineSeries::new(pts.clone(), &MAGENTA)).map_err(pe)?;
    }
    if let Some(o) = over {
        let w = o.values("omega_rps");
        let b = o.values("b_mm");
        let stable: Vec<bool> = o.col("stable").map(|_| o.strings("stable").iter().map(|s| *s == "true").collect()).unwrap_or(vec![true; w.len()]);
        if o.col("iteration").is_some() {
            let path: Vec<(f64, f64)> = (0..w.len()).filter(|&i| stable[i]).map(|i| (w[i], b[i])).collect();
            chart.draw_series(LineSeries::new(path.clone(), BLACK.stroke_width(1))).map_err(pe)?;
            chart.draw_series((0..w.len()).map(|i| Circle::new((w[i], b[i]), 3, if stable[i] { BLACK.filled() } else { RED.into() }))).map_err(pe)?;
            if let (Some(s), Some(e)) = (path.first(), path.last()) {
                chart.draw_series(std::iter::once(TriangleMarker::new(*s, 8, GREEN.filled()))).map_err(pe)?;
                chart.draw_series(std::iter::once(Cross::new(*e, 8, RED.stroke_width(2)))).map_err(pe)?;
            }
        } else {
            chart
                .draw_series((0..w.len()).map(|i| Circle::new((w[i], b[i]), 2, if stable[i] { BLUE.filled() } else { RED.filled() })))
                .map_err(pe)?;
        }
    }
    root.present().map_err(pe)?;
    Ok(out.clone())
}

fn report(input: &Path, out_dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let table = Table::load(input, &["method", "noise_ratio"])?;
    let methods = table.strings("method");
    let noise = table.values("noise_ratio");
    let mut levels: Vec<f64> = noise.clone();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let mut written = Vec::new();
    for (col, log) in [("accuracy", false), ("e_ss", true)] {
        if table.col(col).is_none() {
            continue;
        }
        let vals = table.values(col);
        // method -> level index -> (sum, count)
        let mut agg: BTreeMap<&str, BTreeMap<usize, (f64, usize)>> = BTreeMap::new();
        for i in 0..vals.len() {
            let v = if log { vals[i].log10() } else { vals[i] };
            if v.is_finite() {
                let li = levels.iter().position(|l| *l == noise[i]).expect("level");
                let e = agg.entry(methods[i]).or_default().entry(li).or_insert((0.0, 0));
                e.0 += v;
                e.1 += 1;
            }
        }
        if agg.is_empty() {
            continue;
        }
        let out = out_dir.join(format!("{}_{col}.svg", stem(input)));
        let (y0, y1) = range(agg.values().flat_map(|m| m.values().map(|(s, n)| s / *n as f64)));
        let root = SVGBackend::new(&out, (800, 500)).into_drawing_area();
        root.fill(&WHITE).map_err(pe)?;
        let labels = levels.clone();
        let mut chart = ChartBuilder::on(&root)
            .margin(10)
            .caption(if log { "log10 mean steady-state error" } else { "mean exactly recovered equations" }, ("sans-serif", 18))
            .x_label_area_size(35)
            .y_label_area_size(50)
            .build_cartesian_2d(-0.5..(levels.len() as f64 - 0.5), y0..y1)
            .map_err(pe)?;
        chart
            .configure_mesh()
            .x_desc("noise ratio")
            .x_labels(levels.len())
            .x_label_formatter(&|x| labels.get(x.round() as usize).map(|l| l.to_string()).unwrap_or_default())
            .draw()
            .map_err(pe)?;
        for (k, (m, pts)) in agg.iter().enumerate() {
            let color = Palette99::pick(k).to_rgba();
            let series: Vec<(f64, f64)> = pts.iter().map(|(li, (s, n))| (*li as f64, s / *n as f64)).collect();
            chart
                .draw_series(LineSeries::new(series.clone(), color.stroke_width(2)))
                .map_err(pe)?
                .label(*m)
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 15, y)], color));
            chart.draw_series(series.into_iter().map(|p| Circle::new(p, 3, color.filled()))).map_err(pe)?;
        }
        chart.configure_series_labels().background_style(WHITE).border_style(BLACK).draw().map_err(pe)?;
        root.present().map_err(pe)?;
        written.push(out.clone());
    }
    if written.is_empty() {
        return Err(PlotError::MissingColumns { path: input.display().to_string(), columns: vec!["accuracy or e_ss values".into()] }.into());
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    #[test]
    fn missing_columns_are_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.csv");
        fs::write(&p, "lobe_index,omega\n0,1\n").unwrap();
        let e = render_plots(&p, PlotKind::Lobes, dir.path(), None).unwrap_err();
        let e = e.downcast::<PlotError>().unwrap();
        assert!(matches!(e, PlotError::MissingColumns { ref columns, .. } if columns == &["omega_rps", "blim_mm"]), "{e}");
    }

    #[test]
    fn empty_report_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("report.csv");
        fs::write(&p, crate::report::COLUMNS.join(",") + "\n").unwrap();
        let e = render_plots(&p, PlotKind::Report, dir.path(), None).unwrap_err();
        assert!(matches!(e.downcast_ref::<PlotError>(), Some(PlotError::Empty { .. })));
        let svgs = fs::read_dir(dir.path()).unwrap().filter(|f| f.as_ref().unwrap().path().extension().is_some_and(|x| x == "svg")).count();
        assert_eq!(svgs, 0);
    }

    #[test]
    fn timeseries_panels_with_reference() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cl.csv");
        let mut s = String::from("t,x_1,x_2,r_1,r_2,u_1,objective\n");
        for i in 0..50 {
            let t = i as f64 * 0.1;
            s += &format!("{t},{},{},0,0,1,2\n", t.sin(), t.cos());
        }
        fs::write(&p, s).unwrap();
        let out = render_plots(&p, PlotKind::Timeseries, dir.path(), None).unwrap();
        let svg = fs::read_to_string(&out[0]).unwrap();
        assert!(svg.contains("x_1") && svg.contains("x_2") && svg.contains("u_1"));
        assert!(!svg.contains(">\nobjective\n<"));
    }
}
