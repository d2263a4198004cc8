//! Delimited-text tables and static PNG plots for evaluation reports,
//! win rates and loss curves.
//!
//! Layout under an output directory: `report.csv`, `wins.csv`,
//! `curves.csv` and `plots/*.png`. Identical inputs give byte-identical
//! tables.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use prefalign_core::align::LossCurve;
use prefalign_core::eval::{EvalReport, WinRateResult};

use crate::error::{Error, Result};
use crate::io;

/// One evaluated model.
#[derive(Debug, Clone, Copy)]
pub struct NamedReport<'a> {
    pub name: &'a str,
    pub report: &'a EvalReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WinRow {
    pub a: String,
    pub b: String,
    pub result: WinRateResult,
}

pub const REPORT_HEADER: &str = "name,consistency,realism,aesthetic,average,rows,seed,config_hash";

pub fn report_csv(reports: &[NamedReport<'_>], seed: u64, config_hash: &str) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in reports {
        let m = r.report.means;
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6},{},{seed},{config_hash}",
            r.name,
            m.consistency,
            m.realism,
            m.aesthetic,
            r.report.average,
            r.report.rows.len()
        );
    }
    out
}

/// Rows ranked by composite average (ties keep input order), with the
/// difference to `baseline` when it is present.
pub fn ablation_table(reports: &[NamedReport<'_>], baseline: &str) -> String {
    let base = reports.iter().find(|r| r.name == baseline).map(|r| r.report.average);
    let mut ranked: Vec<&NamedReport<'_>> = reports.iter().collect();
    ranked.sort_by(|a, b| b.report.average.total_cmp(&a.report.average));
    let mut out = String::from("rank,name,average,delta_vs_origin,consistency,realism,aesthetic\n");
    for (i, r) in ranked.iter().enumerate() {
        let m = r.report.means;
        let delta = base.map_or(String::new(), |b| format!("{:+.6}", r.report.average - b));
        let _ = writeln!(
            out,
            "{},{},{:.6},{delta},{:.6},{:.6},{:.6}",
            i + 1,
            r.name,
            r.report.average,
            m.consistency,
            m.realism,
            m.aesthetic
        );
    }
    out
}

pub fn wins_csv(rows: &[WinRow]) -> String {
    let mut out = String::from("a,b,wins,losses,ties,win_rate,p_value\n");
    for r in rows {
        let w = r.result;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.6},{:.6e}",
            r.a,
            r.b,
            w.wins,
            w.losses,
            w.ties,
            w.win_rate(),
            w.p_value()
        );
    }
    out
}

/// Parsed `curves.csv`: a long table keyed by `(variant, step)` with one
/// column per loss component across all variants.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveTable {
    pub components: Vec<String>,
    pub rows: Vec<CurveRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub step: usize,
    pub variant: String,
    pub loss: f64,
    /// Aligned with [`CurveTable::components`]; `None` where the variant
    /// does not log that component.
    pub components: Vec<Option<f64>>,
}

impl CurveTable {
    pub fn from_curves(curves: &[LossCurve]) -> Self {
        let components: Vec<String> = curves
            .iter()
            .flat_map(|c| c.component_names().iter().map(|s| s.to_string()))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut rows = Vec::new();
        for c in curves {
            let names = c.component_names();
            for p in &c.points {
                rows.push(CurveRow {
                    step: p.step,
                    variant: c.variant.as_str().to_string(),
                    loss: p.loss,
                    components: components
                        .iter()
                        .map(|name| names.iter().position(|n| n == name).map(|i| p.components[i]))
                        .collect(),
                });
            }
        }
        Self { components, rows }
    }

    /// Rows of `other` replace this table's rows for the same variants.
    pub fn merge(&self, other: &CurveTable) -> CurveTable {
        let replaced = other.variants();
        let components: Vec<String> = self
            .components
            .iter()
            .chain(&other.components)
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let remap = |t: &CurveTable, r: &CurveRow| CurveRow {
            components: components
                .iter()
                .map(|c| t.components.iter().position(|n| n == c).and_then(|i| r.components[i]))
                .collect(),
            ..r.clone()
        };
        let rows = self
            .rows
            .iter()
            .filter(|r| !replaced.contains(&r.variant))
            .map(|r| remap(self, r))
            .chain(other.rows.iter().map(|r| remap(other, r)))
            .collect();
        CurveTable { components, rows }
    }

    pub fn variants(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.variant) {
                out.push(r.variant.clone());
            }
        }
        out
    }

    /// `loss` or a component series for one variant, in step order.
    pub fn series(&self, variant: &str, column: &str) -> Option<Vec<f64>> {
        let idx = match column {
            "loss" => None,
            c => Some(self.components.iter().position(|n| n == c)?),
        };
        let out: Option<Vec<f64>> = self
            .rows
            .iter()
            .filter(|r| r.variant == variant)
            .map(|r| match idx {
                None => Some(r.loss),
                Some(i) => r.components[i],
            })
            .collect();
        out.filter(|v| !v.is_empty())
    }

    /// Columns with data for a variant: `loss` then its components.
    pub fn columns_for(&self, variant: &str) -> Vec<String> {
        let mut out = vec!["loss".to_string()];
        out.extend(
            self.components
                .iter()
                .filter(|c| self.series(variant, c).is_some())
                .cloned(),
        );
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,variant,loss");
        for c in &self.components {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},{},{:.9}", r.step, r.variant, r.loss);
            for v in &r.components {
                match v {
                    Some(x) => {
                        let _ = write!(out, ",{x:.9}");
                    }
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().ok_or("empty curves file")?.split(',').collect();
        if header.len() < 3 || header[..3] != ["step", "variant", "loss"] {
            return Err(format!("unexpected header {:?}", header));
        }
        let components: Vec<String> = header[3..].iter().map(|s| s.to_string()).collect();
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != header.len() {
                return Err(format!("line {}: {} fields, expected {}", n + 2, f.len(), header.len()));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| format!("line {}: {e}", n + 2));
            rows.push(CurveRow {
                step: f[0].parse().map_err(|e| format!("line {}: {e}", n + 2))?,
                variant: f[1].to_string(),
                loss: num(f[2])?,
                components: f[3..]
                    .iter()
                    .map(|s| if s.is_empty() { Ok(None) } else { num(s).map(Some) })
                    .collect::<std::result::Result<_, _>>()?,
            });
        }
        Ok(Self { components, rows })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = io::read_file(path)?;
        let text = String::from_utf8(bytes).map_err(|e| Error::format(path, e))?;
        Self::parse(&text).map_err(|e| Error::format(path, e))
    }
}

const PALETTE: [[u8; 3]; 6] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
];
const W: u32 = 640;
const H: u32 = 400;
const MARGIN: u32 = 40;

struct Canvas {
    img: RgbImage,
}

impl Canvas {
    fn new() -> Self {
        let mut c = Self {
            img: RgbImage::from_pixel(W, H, Rgb([255, 255, 255])),
        };
        let axis = Rgb([0, 0, 0]);
        c.line((MARGIN as f64, MARGIN as f64), (MARGIN as f64, (H - MARGIN) as f64), axis);
        c.line(
            (MARGIN as f64, (H - MARGIN) as f64),
            ((W - MARGIN) as f64, (H - MARGIN) as f64),
            axis,
        );
        c
    }

    fn put(&mut self, x: i64, y: i64, color: Rgb<u8>) {
        if x >= 0 && y >= 0 && (x as u32) < W && (y as u32) < H {
            self.img.put_pixel(x as u32, y as u32, color);
        }
    }

    fn line(&mut self, a: (f64, f64), b: (f64, f64), color: Rgb<u8>) {
        let steps = (b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil().max(1.0) as usize;
        for i in 0..=steps {
            let t = i as f64 / steps as f64;
            let x = a.0 + t * (b.0 - a.0);
            let y = a.1 + t * (b.1 - a.1);
            self.put(x.round() as i64, y.round() as i64, color);
        }
    }

    fn rect(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, color: Rgb<u8>) {
        for y in y0.round() as i64..y1.round() as i64 {
            for x in x0.round() as i64..x1.round() as i64 {
                self.put(x, y, color);
            }
        }
    }

    fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        self.img.save(path).map_err(|e| Error::Plot(format!("{}: {e}", path.display())))
    }
}

fn color(i: usize) -> Rgb<u8> {
    Rgb(PALETTE[i % PALETTE.len()])
}

/// Line chart, one polyline per series, shared y range. Non-finite points
/// are skipped.
pub fn plot_lines(path: &Path, series: &[Vec<f64>]) -> Result<()> {
    let mut canvas = Canvas::new();
    let finite = series.iter().flatten().copied().filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if lo.is_finite() {
        let span = if hi > lo { hi - lo } else { 1.0 };
        let n = series.iter().map(Vec::len).max().unwrap_or(1).max(2) - 1;
        let pw = (W - 2 * MARGIN) as f64;
        let ph = (H - 2 * MARGIN) as f64;
        let at = |i: usize, v: f64| {
            (
                MARGIN as f64 + pw * i as f64 / n as f64,
                (H - MARGIN) as f64 - ph * (v - lo) / span,
            )
        };
        for (k, s) in series.iter().enumerate() {
            let mut prev = None;
            for (i, &v) in s.iter().enumerate() {
                if !v.is_finite() {
                    prev = None;
                    continue;
                }
                let p = at(i, v);
                if let Some(q) = prev {
                    canvas.line(q, p, color(k));
                }
                prev = Some(p);
            }
        }
    }
    canvas.save(path)
}

/// Bar chart of values in `[0, 1]`, one bar per entry.
pub fn plot_bars(path: &Path, values: &[f64]) -> Result<()> {
    let mut canvas = Canvas::new();
    if !values.is_empty() {
        let pw = (W - 2 * MARGIN) as f64;
        let ph = (H - 2 * MARGIN) as f64;
        let slot = pw / values.len() as f64;
        for (i, v) in values.iter().enumerate() {
            let v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
            let x0 = MARGIN as f64 + slot * (i as f64 + 0.15);
            let x1 = MARGIN as f64 + slot * (i as f64 + 0.85);
            canvas.rect(x0, (H - MARGIN) as f64 - ph * v, x1, (H - MARGIN) as f64, color(i));
        }
    }
    canvas.save(path)
}

/// Write whatever is non-empty; returns the paths written. An empty curve
/// list writes no curve file.
pub fn emit(
    out_dir: &Path,
    reports: &[NamedReport<'_>],
    wins: &[WinRow],
    curves: &[LossCurve],
    seed: u64,
    config_hash: &str,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let plots = out_dir.join("plots");
    if !reports.is_empty() {
        let p = out_dir.join("report.csv");
        io::write_file(&p, report_csv(reports, seed, config_hash).as_bytes())?;
        written.push(p);
        let p = plots.join("metrics.png");
        plot_bars(&p, &reports.iter().map(|r| r.report.average).collect::<Vec<_>>())?;
        written.push(p);
    }
    if !wins.is_empty() {
        let p = out_dir.join("wins.csv");
        io::write_file(&p, wins_csv(wins).as_bytes())?;
        written.push(p);
        let p = plots.join("wins.png");
        plot_bars(&p, &wins.iter().map(|w| w.result.win_rate()).collect::<Vec<_>>())?;
        written.push(p);
    }
    if !curves.is_empty() {
        let table = CurveTable::from_curves(curves);
        let p = out_dir.join("curves.csv");
        io::write_file(&p, table.to_csv().as_bytes())?;
        written.push(p);
        written.extend(plot_curves(&plots, &table)?);
    }
    Ok(written)
}

/// One `curves_<variant>.png` per variant with a series per column.
pub fn plot_curves(dir: &Path, table: &CurveTable) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for v in table.variants() {
        let series: Vec<Vec<f64>> = table
            .columns_for(&v)
            .iter()
            .filter_map(|c| table.series(&v, c))
            .collect();
        let p = dir.join(format!("curves_{v}.png"));
        plot_lines(&p, &series)?;
        out.push(p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use prefalign_core::align::{CurvePoint, Variant};
    use prefalign_core::eval::EvalRow;
    use prefalign_core::world::Scores;

    fn report(v: f64) -> EvalReport {
        let s = Scores {
            consistency: v,
            realism: v,
            aesthetic: v,
        };
        EvalReport::from_rows(vec![EvalRow { prompt: 0, seed: 1, scores: s }], vec![1]).unwrap()
    }

    fn curves() -> Vec<LossCurve> {
        let pt = |step, loss: f64, c: Vec<f64>| CurvePoint {
            step,
            loss,
            components: c,
        };
        vec![
            LossCurve {
                variant: Variant::CrossVal,
                points: vec![pt(0, 0.69, vec![]), pt(1, 0.5, vec![])],
            },
            LossCurve {
                variant: Variant::RetainDiscarded,
                points: vec![pt(0, 1.38, vec![0.69, 0.69]), pt(1, 0.9, vec![0.6, 0.3])],
            },
        ]
    }

    #[test]
    fn curves_roundtrip() {
        let t = CurveTable::from_curves(&curves());
        assert_eq!(t.components, vec!["image_contrast", "text_contrast"]);
        let back = CurveTable::parse(&t.to_csv()).unwrap();
        assert_eq!(back.variants(), vec!["cross_val", "retain_discarded"]);
        assert_eq!(back.series("retain_discarded", "text_contrast").unwrap(), vec![0.69, 0.3]);
        assert_eq!(back.series("cross_val", "text_contrast"), None);
        assert_eq!(back.columns_for("retain_discarded").len(), 3);
        assert!(CurveTable::parse("a,b\n").is_err());
        let only_cv = CurveTable::from_curves(&curves()[..1]);
        let merged = only_cv.merge(&CurveTable::from_curves(&curves()[1..]));
        assert_eq!(merged, t);
        assert_eq!(t.merge(&only_cv).rows.len(), 4);
    }

    #[test]
    fn emit_is_deterministic_and_skips_empty_curves() {
        let (a, b) = (report(0.4), report(0.5));
        let reports = [NamedReport { name: "origin", report: &a }, NamedReport { name: "cross_val", report: &b }];
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let w1 = emit(d1.path(), &reports, &[], &[], 0, "h").unwrap();
        emit(d2.path(), &reports, &[], &[], 0, "h").unwrap();
        assert!(!d1.path().join("curves.csv").exists());
        assert!(w1.iter().any(|p| p.ends_with("plots/metrics.png")));
        let r1 = std::fs::read(d1.path().join("report.csv")).unwrap();
        assert_eq!(r1, std::fs::read(d2.path().join("report.csv")).unwrap());
    }

    #[test]
    fn ablation_is_ranked() {
        let (a, b) = (report(0.4), report(0.5));
        let t = ablation_table(
            &[NamedReport { name: "origin", report: &a }, NamedReport { name: "sft", report: &b }],
            "origin",
        );
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[1].starts_with("1,sft,0.500000,+0.100000"));
        assert!(lines[2].starts_with("2,origin"));
    }
}
