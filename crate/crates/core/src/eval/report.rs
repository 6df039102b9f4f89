use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use super::{EvalReport, PrPoint};

/// `threshold,precision,recall` rows, highest threshold first.
pub fn write_pr_csv(curve: &[PrPoint]) -> String {
    let mut s = String::from("threshold,precision,recall\n");
    for p in curve {
        writeln!(s, "{},{},{}", p.threshold, p.precision, p.recall).unwrap();
    }
    s
}

/// Precision (y) against recall (x) as a standalone SVG document.
pub fn render_svg(curve: &[PrPoint], title: &str) -> String {
    const SIZE: f64 = 400.0;
    const MARGIN: f64 = 40.0;
    let plot = SIZE - 2.0 * MARGIN;
    let x = |r: f64| MARGIN + r * plot;
    let y = |p: f64| SIZE - MARGIN - p * plot;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{SIZE}" height="{SIZE}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{plot}" height="{plot}" fill="none" stroke="black"/>"#
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="14" text-anchor="middle">{title}</text>"#,
        SIZE / 2.0,
        MARGIN - 12.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">recall</text>"#,
        SIZE / 2.0,
        SIZE - 10.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="12" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 12 {})">precision</text>"#,
        SIZE / 2.0,
        SIZE / 2.0
    )
    .unwrap();
    if !curve.is_empty() {
        let pts: Vec<String> = std::iter::once((0.0, curve[0].precision))
            .chain(curve.iter().map(|p| (p.recall, p.precision)))
            .map(|(r, p)| format!("{:.2},{:.2}", x(r), y(p)))
            .collect();
        writeln!(
            s,
            r#"<polyline fill="none" stroke="steelblue" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `report.json`, `pr.csv` (first class) plus `pr_class<id>.csv` for
/// any further classes, and optionally `pr.svg`. Returns the written paths.
pub fn emit_report(report: &EvalReport, out_dir: &Path, svg: bool) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, body: String| -> io::Result<()> {
        let p = out_dir.join(name);
        fs::write(&p, body)?;
        written.push(p);
        Ok(())
    };
    let mut json = serde_json::to_string_pretty(report).map_err(io::Error::other)?;
    json.push('\n');
    put("report.json".into(), json)?;

    let empty = Vec::new();
    let first = report.classes.first().map_or(&empty, |c| &c.curve);
    put("pr.csv".into(), write_pr_csv(first))?;
    for c in report.classes.iter().skip(1) {
        put(format!("pr_class{}.csv", c.class_id), write_pr_csv(&c.curve))?;
    }
    if svg {
        let title = match report.classes.first() {
            Some(c) => format!("class {} AP {:.3}", c.class_id, c.ap),
            None => "no classes".to_string(),
        };
        put("pr.svg".into(), render_svg(first, &title))?;
    }
    Ok(written)
}
