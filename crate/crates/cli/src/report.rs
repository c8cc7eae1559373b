//! Result files and the summary tables built from them.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use eccl_core::diagnostics::{delta_task, DiagnosticsReport};
use eccl_core::eta::SuiteSummary;
use eccl_core::io::{from_versioned_json, versioned_json, write_atomic};
use eccl_core::variants::VariantKind;
use eccl_core::Result;
use serde::{Deserialize, Serialize};

pub const RESULT_SCHEMA: &str = "eccl-result/v1";
pub const RESULT_FILE: &str = "result.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub condition: String,
    pub n: usize,
    pub n_invalid: usize,
    pub steps_mean: f64,
    pub ecc_mean: f64,
    pub success_dir: f64,
    pub success_eta: f64,
    pub delta: f64,
    pub diagnostics: Option<DiagnosticsReport>,
}

impl ReportRow {
    pub fn from_summary(condition: impl Into<String>, s: &SuiteSummary, diagnostics: Option<DiagnosticsReport>) -> Self {
        ReportRow {
            condition: condition.into(),
            n: s.n,
            n_invalid: s.n_invalid,
            steps_mean: s.exploration_steps_mean,
            ecc_mean: s.ecc_mean,
            success_dir: s.success_dir,
            success_eta: s.success_eta,
            delta: delta_task(s.success_eta, s.success_dir),
            diagnostics,
        }
    }
}

/// One evaluated condition, as written by `eta --suite` and `train --eval`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub row: ReportRow,
    /// `(task, explore)` training ratio, for sweep tables.
    pub ratio: Option<(u32, u32)>,
    pub variant: Option<VariantKind>,
    /// Mean exploration coverage at each step budget.
    pub budget_curve: Option<Vec<(usize, f64)>>,
}

impl ResultFile {
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join(RESULT_FILE), versioned_json(RESULT_SCHEMA, self).as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        from_versioned_json(RESULT_SCHEMA, &std::fs::read_to_string(path)?)
    }
}

fn find_results(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<std::io::Result<Vec<_>>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let p = e.path();
        if p.is_dir() {
            find_results(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == RESULT_FILE) {
            out.push(p);
        }
    }
    Ok(())
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub ratio_sweep: Vec<(String, (u32, u32), ReportRow)>,
    pub variants: Vec<(VariantKind, ReportRow)>,
    pub budget_curves: Vec<(String, Vec<(usize, f64)>)>,
    pub warnings: Vec<String>,
}

fn ratio_label(r: (u32, u32)) -> String {
    match r {
        (0, _) => "explore-only".into(),
        (_, 0) => "task-only".into(),
        (t, e) => format!("{t}:{e}"),
    }
}

/// Gather every result file under `dir`. Unreadable files and conditions
/// listed in `expect` but absent are reported as warnings.
pub fn build_report(dir: &Path, expect: &[String]) -> Result<Report> {
    let mut paths = Vec::new();
    find_results(dir, &mut paths)?;
    let mut report = Report::default();
    let mut files = Vec::new();
    for p in paths {
        match ResultFile::read(&p) {
            Ok(f) => files.push(f),
            Err(e) => report.warnings.push(format!("{}: {e}; row omitted", p.display())),
        }
    }
    files.sort_by(|a, b| a.row.condition.cmp(&b.row.condition));
    for c in expect {
        if !files.iter().any(|f| &f.row.condition == c) {
            report.warnings.push(format!("condition `{c}` has no results; row omitted"));
        }
    }
    for f in &files {
        report.rows.push(f.row.clone());
        if let Some(r) = f.ratio {
            report.ratio_sweep.push((ratio_label(r), r, f.row.clone()));
        }
        if let Some(v) = f.variant {
            report.variants.push((v, f.row.clone()));
        }
        if let Some(c) = &f.budget_curve {
            report.budget_curves.push((f.row.condition.clone(), c.clone()));
        }
    }
    // By task share t/(t+e): explore-only first, task-only last.
    report.ratio_sweep.sort_by(|(_, a, ra), (_, b, rb)| {
        let lhs = a.0 as u64 * (b.0 + b.1) as u64;
        let rhs = b.0 as u64 * (a.0 + a.1) as u64;
        lhs.cmp(&rhs).then(a.cmp(b)).then(ra.condition.cmp(&rb.condition))
    });
    report.variants.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.condition.cmp(&b.1.condition)));
    Ok(report)
}

fn pct(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

impl Report {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "Conditions");
        let _ = writeln!(s, "{:<32} {:>5} {:>7} {:>7} {:>7} {:>7} {:>7}", "condition", "n", "steps", "ECC%", "Dir%", "EtA%", "Δ");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<32} {:>5} {:>7.1} {:>7} {:>7} {:>7} {:>+7.1}",
                r.condition,
                r.n,
                r.steps_mean,
                pct(r.ecc_mean),
                pct(r.success_dir),
                pct(r.success_eta),
                100.0 * r.delta
            );
        }
        if !self.ratio_sweep.is_empty() {
            let _ = writeln!(s, "\nRatio sweep (task:explore)");
            let _ = writeln!(s, "{:<14} {:>7} {:>7} {:>7} {:>7}", "ratio", "Dir%", "EtA%", "Δ", "ECC%");
            for (label, _, r) in &self.ratio_sweep {
                let _ = writeln!(
                    s,
                    "{:<14} {:>7} {:>7} {:>+7.1} {:>7}",
                    label,
                    pct(r.success_dir),
                    pct(r.success_eta),
                    100.0 * r.delta,
                    pct(r.ecc_mean)
                );
            }
        }
        if !self.variants.is_empty() {
            let _ = writeln!(s, "\nVariant robustness");
            let _ = writeln!(s, "{:<22} {:<24} {:>5} {:>7} {:>7} {:>7}", "variant", "condition", "n", "Dir%", "EtA%", "Δ");
            for (v, r) in &self.variants {
                let _ = writeln!(
                    s,
                    "{:<22} {:<24} {:>5} {:>7} {:>7} {:>+7.1}",
                    v.name(),
                    r.condition,
                    r.n,
                    pct(r.success_dir),
                    pct(r.success_eta),
                    100.0 * r.delta
                );
            }
        }
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("condition,n,n_invalid,steps_mean,ecc_mean,success_dir,success_eta,delta\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.condition, r.n, r.n_invalid, r.steps_mean, r.ecc_mean, r.success_dir, r.success_eta, r.delta
            );
        }
        s
    }

    /// Plot-ready series: ratio sweep, variant bars and budget curves.
    pub fn plot_data(&self) -> String {
        let v = serde_json::json!({
            "ratio_sweep": self.ratio_sweep.iter().map(|(l, r, row)| serde_json::json!({
                "label": l, "task": r.0, "explore": r.1,
                "success_dir": row.success_dir, "success_eta": row.success_eta, "delta": row.delta, "ecc": row.ecc_mean,
            })).collect::<Vec<_>>(),
            "variants": self.variants.iter().map(|(k, row)| serde_json::json!({
                "variant": k.name(), "condition": row.condition,
                "success_dir": row.success_dir, "success_eta": row.success_eta, "delta": row.delta,
            })).collect::<Vec<_>>(),
            "budget_curves": self.budget_curves.iter().map(|(c, pts)| serde_json::json!({
                "condition": c, "points": pts,
            })).collect::<Vec<_>>(),
        });
        versioned_json("eccl-plot/v1", &v)
    }

    pub fn write(&self, out: &Path) -> Result<()> {
        write_atomic(&out.join("report.txt"), self.to_text().as_bytes())?;
        write_atomic(&out.join("report.csv"), self.to_csv().as_bytes())?;
        write_atomic(&out.join("plot_data.json"), self.plot_data().as_bytes())
    }
}
