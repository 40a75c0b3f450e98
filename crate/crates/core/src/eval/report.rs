//! Report artifacts: summary CSV, full JSON, and one ROC overlay figure
//! per task (raw solid, transformed dashed).

use super::{EvalReport, RocCurve};
use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug)]
pub struct ReportPaths {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub figures: Vec<PathBuf>,
}

/// Writes `report.csv`, `report.json` and `roc_{task}.svg` under
/// `out_dir`. The raw report comes first in every artifact.
pub fn build_report(raw: &EvalReport, transformed: &[EvalReport], out_dir: &Path) -> Result<ReportPaths> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;

    let csv_path = out_dir.join("report.csv");
    let mut csv = String::from("domain,alpha,beta,gamma,verification_auc,gender_auc,activity_auc,n_pairs,n_windows\n");
    for report in std::iter::once(raw).chain(transformed.iter()) {
        let (a, b, g) = match &report.weights {
            Some(w) => (format!("{}", w.alpha()), format!("{}", w.beta()), format!("{}", w.gamma())),
            None => (String::new(), String::new(), String::new()),
        };
        writeln!(
            csv,
            "{},{a},{b},{g},{},{},{},{},{}",
            report.domain,
            report.verification_auc,
            report.gender_auc,
            report.activity_macro_auc,
            report.n_genuine + report.n_impostor,
            report.n_windows
        )
        .expect("string write");
    }
    std::fs::write(&csv_path, csv).map_err(|e| Error::io(csv_path.display().to_string(), e))?;

    let json_path = out_dir.join("report.json");
    let all: Vec<&EvalReport> = std::iter::once(raw).chain(transformed.iter()).collect();
    let json = serde_json::to_string_pretty(&all).expect("serializable reports");
    std::fs::write(&json_path, json).map_err(|e| Error::io(json_path.display().to_string(), e))?;

    let mut figures = Vec::new();
    for (task, pick) in [
        ("verification", (|r: &EvalReport| &r.roc_verification) as fn(&EvalReport) -> &RocCurve),
        ("gender", |r| &r.roc_gender),
        ("activity", |r| &r.roc_activity),
    ] {
        let path = out_dir.join(format!("roc_{task}.svg"));
        let mut curves = vec![(
            format!("raw (AUC {:.3})", task_auc(raw, task)),
            pick(raw).clone(),
            false,
        )];
        for t in transformed {
            let label = match &t.weights {
                Some(w) => format!("transformed {} (AUC {:.3})", w, task_auc(t, task)),
                None => format!("transformed (AUC {:.3})", task_auc(t, task)),
            };
            curves.push((label, pick(t).clone(), true));
        }
        let svg = render_roc_svg(task, &curves);
        std::fs::write(&path, svg).map_err(|e| Error::io(path.display().to_string(), e))?;
        figures.push(path);
    }

    Ok(ReportPaths { csv: csv_path, json: json_path, figures })
}

fn task_auc(report: &EvalReport, task: &str) -> f64 {
    match task {
        "verification" => report.verification_auc,
        "gender" => report.gender_auc,
        _ => report.activity_macro_auc,
    }
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Minimal standalone SVG: axes, chance diagonal, one polyline per curve
/// (dashed for transformed domains), text legend.
fn render_roc_svg(task: &str, curves: &[(String, RocCurve, bool)]) -> String {
    let (width, height) = (640.0, 480.0);
    let (ml, mr, mt, mb) = (60.0, 20.0, 40.0, 50.0);
    let pw = width - ml - mr;
    let ph = height - mt - mb;
    let x = |fpr: f64| ml + fpr * pw;
    let y = |tpr: f64| mt + (1.0 - tpr) * ph;

    let mut svg = String::new();
    write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    )
    .unwrap();
    svg.push_str(r#"<rect width="100%" height="100%" fill="white"/>"#);
    write!(
        svg,
        r#"<text x="{:.1}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">ROC — {task}</text>"#,
        ml + pw / 2.0
    )
    .unwrap();
    // axes
    write!(
        svg,
        r#"<line x1="{ml}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/><line x1="{ml}" y1="{mt}" x2="{ml}" y2="{:.1}" stroke="black"/>"#,
        mt + ph,
        ml + pw,
        mt + ph,
        mt + ph
    )
    .unwrap();
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        write!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">{tick}</text>"#,
            x(tick),
            mt + ph + 18.0
        )
        .unwrap();
        write!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{tick}</text>"#,
            ml - 6.0,
            y(tick) + 4.0
        )
        .unwrap();
    }
    write!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="13" text-anchor="middle">false positive rate</text>"#,
        ml + pw / 2.0,
        height - 12.0
    )
    .unwrap();
    write!(
        svg,
        r#"<text x="16" y="{:.1}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 16 {:.1})">true positive rate</text>"#,
        mt + ph / 2.0,
        mt + ph / 2.0
    )
    .unwrap();
    // chance diagonal
    write!(
        svg,
        r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#bbbbbb" stroke-dasharray="2,4"/>"##,
        x(0.0),
        y(0.0),
        x(1.0),
        y(1.0)
    )
    .unwrap();

    for (i, (label, curve, dashed)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut path = String::new();
        for (j, (fpr, tpr)) in curve.points.iter().enumerate() {
            let cmd = if j == 0 { 'M' } else { 'L' };
            write!(path, "{cmd}{:.2},{:.2} ", x(*fpr), y(*tpr)).unwrap();
        }
        let dash = if *dashed { r#" stroke-dasharray="6,4""# } else { "" };
        write!(
            svg,
            r#"<path d="{path}" fill="none" stroke="{color}" stroke-width="1.8"{dash}/>"#
        )
        .unwrap();
        let ly = mt + 16.0 + i as f64 * 16.0;
        write!(
            svg,
            r#"<line x1="{:.1}" y1="{ly}" x2="{:.1}" y2="{ly}" stroke="{color}" stroke-width="1.8"{dash}/><text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11">{label}</text>"#,
            ml + pw - 220.0,
            ml + pw - 190.0,
            ml + pw - 184.0,
            ly + 4.0
        )
        .unwrap();
    }
    svg.push_str("</svg>");
    svg
}
