use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::experiment::{ResultTable, RunReport};
use crate::error::{Error, Result};

pub const SUMMARY_FILE: &str = "summary.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const F1_TABLE_FILE: &str = "table_f1.csv";
pub const AUC_TABLE_FILE: &str = "table_auc.csv";

/// Lowercase ASCII name safe for file paths.
pub fn slug(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fmt_u<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    name: &'a str,
    crate_version: &'a str,
    base_seed: u64,
    seeds: &'a [u64],
    window_size: usize,
    splits: Vec<&'a crate::data::SplitManifest>,
}

/// Writes `values` as a CSV with one row per method and one column per
/// dataset. Values use the shortest representation that parses back exactly.
pub fn write_table_csv(
    path: &Path,
    table: &ResultTable,
    values: &[Vec<Option<f64>>],
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["model".to_string()];
    header.extend(table.datasets.iter().cloned());
    w.write_record(&header)?;
    for (m, row) in table.methods.iter().zip(values) {
        let mut rec = vec![m.clone()];
        rec.extend(row.iter().map(|v| fmt_opt(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Method names, dataset names and the cell values of a parsed table.
pub type ParsedTable = (Vec<String>, Vec<String>, Vec<Vec<Option<f64>>>);

/// Parses a table written by [`write_table_csv`].
pub fn read_table_csv(path: &Path) -> Result<ParsedTable> {
    let mut r = csv::Reader::from_path(path)?;
    let datasets: Vec<String> = r.headers()?.iter().skip(1).map(str::to_string).collect();
    let mut methods = Vec::new();
    let mut values = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        methods.push(rec.get(0).unwrap_or_default().to_string());
        let row = rec
            .iter()
            .skip(1)
            .map(|v| {
                if v.is_empty() {
                    Ok(None)
                } else {
                    v.parse::<f64>()
                        .map(Some)
                        .map_err(|e| Error::Output(format!("{}: `{v}`: {e}", path.display())))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        values.push(row);
    }
    Ok((methods, datasets, values))
}

/// Writes the summary JSON, the seed/split manifest, the f1 and AUC tables,
/// and per dataset a per-repeat metrics CSV and a ROC-point CSV for every
/// method. Refuses a non-empty `out_dir` unless `force` is set.
pub fn emit_report(report: &RunReport, out_dir: &Path, force: bool) -> Result<Vec<PathBuf>> {
    if out_dir.exists() {
        let occupied = fs::read_dir(out_dir)?.next().is_some();
        if occupied && !force {
            return Err(Error::Output(format!(
                "`{}` already exists and is not empty; pass --force to overwrite",
                out_dir.display()
            )));
        }
    }
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    let summary = out_dir.join(SUMMARY_FILE);
    fs::write(&summary, serde_json::to_string_pretty(report)? + "\n")?;
    written.push(summary);

    let manifest = Manifest {
        schema_version: report.schema_version,
        name: &report.name,
        crate_version: &report.crate_version,
        base_seed: report.base_seed,
        seeds: &report.seeds,
        window_size: report.window_size,
        splits: report.datasets.iter().map(|d| &d.manifest).collect(),
    };
    let path = out_dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    written.push(path);

    for (file, values) in [
        (F1_TABLE_FILE, &report.table.f1),
        (AUC_TABLE_FILE, &report.table.auc),
    ] {
        let path = out_dir.join(file);
        write_table_csv(&path, &report.table, values)?;
        written.push(path);
    }

    for ds in &report.datasets {
        let dir = out_dir.join(slug(&ds.name));
        fs::create_dir_all(&dir)?;
        for m in &ds.methods {
            let path = dir.join(format!("metrics_{}.csv", slug(&m.method)));
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record([
                "repeat",
                "seed",
                "best",
                "percentile",
                "threshold",
                "tp",
                "fp",
                "tn",
                "fn",
                "accuracy",
                "precision",
                "recall",
                "f1",
                "auc",
                "label_free_f1",
            ])?;
            for r in &m.repeats {
                let p = r.report.best();
                let c = p.confusion;
                let label_free = r.report.label_free.map(|i| r.report.points[i].metrics.f1);
                w.write_record([
                    r.repeat.to_string(),
                    r.seed.to_string(),
                    (m.best_repeat == Some(r.repeat)).to_string(),
                    fmt_u(p.percentile),
                    fmt_opt(p.threshold),
                    c.tp.to_string(),
                    c.fp.to_string(),
                    c.tn.to_string(),
                    c.fn_.to_string(),
                    p.metrics.accuracy.to_string(),
                    p.metrics.precision.to_string(),
                    p.metrics.recall.to_string(),
                    p.metrics.f1.to_string(),
                    fmt_opt(r.report.auc),
                    fmt_opt(label_free),
                ])?;
            }
            w.flush()?;
            written.push(path);

            if let Some(best) = m.best() {
                let path = dir.join(format!("roc_{}.csv", slug(&m.method)));
                let mut w = csv::Writer::from_path(&path)?;
                w.write_record(["percentile", "threshold", "fpr", "tpr", "f1"])?;
                for p in &best.report.points {
                    w.write_record([
                        fmt_u(p.percentile),
                        fmt_opt(p.threshold),
                        p.fpr.to_string(),
                        p.tpr.to_string(),
                        p.metrics.f1.to_string(),
                    ])?;
                }
                w.flush()?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

pub fn load_report(run_dir: &Path) -> Result<RunReport> {
    let path = run_dir.join(SUMMARY_FILE);
    let text =
        fs::read_to_string(&path).map_err(|e| Error::Output(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Markdown table of one metric; the best method per dataset (two-decimal
/// cut) is marked with `*`.
pub fn render_table(table: &ResultTable, values: &[Vec<Option<f64>>], title: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "| {title} | {} |", table.datasets.join(" | "));
    let _ = writeln!(out, "|---|{}", "---|".repeat(table.datasets.len()));
    let best: Vec<Vec<usize>> = (0..table.datasets.len())
        .map(|d| table.best_methods(values, d))
        .collect();
    for (m, name) in table.methods.iter().enumerate() {
        let cells: Vec<String> = values[m]
            .iter()
            .enumerate()
            .map(|(d, v)| match v {
                Some(x) if best[d].contains(&m) => format!("{x:.2}*"),
                Some(x) => format!("{x:.2}"),
                None => "n/a".into(),
            })
            .collect();
        let _ = writeln!(out, "| {name} | {} |", cells.join(" | "));
    }
    out
}

/// Human-readable summary: both tables plus the statistical tests.
pub fn render_report(report: &RunReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# {} ({} repeats, base seed {})\n",
        report.name, report.repeats, report.base_seed
    );
    out += &render_table(&report.table, &report.table.f1, "f1");
    out.push('\n');
    out += &render_table(&report.table, &report.table.auc, "AUC");
    for ds in &report.datasets {
        for m in ds.methods.iter().filter(|m| m.error.is_some()) {
            let _ = writeln!(
                out,
                "\n{} on {} failed: {}",
                m.method,
                ds.name,
                m.error.as_deref().unwrap_or_default()
            );
        }
        if let Some(b) = &ds.best_method {
            let _ = writeln!(out, "\n## {}: per-repeat f1 against {b}", ds.name);
            for t in &ds.ttests {
                let p = |r: &Option<crate::eval::TestResult>| {
                    r.map(|r| format!("{:.4}", r.p_value))
                        .unwrap_or_else(|| "n/a".into())
                };
                let _ = writeln!(
                    out,
                    "- {}: Welch p = {}, pooled p = {}",
                    t.method,
                    p(&t.welch),
                    p(&t.student)
                );
            }
        }
    }
    for c in &report.cross_dataset {
        let _ = writeln!(out, "\n## {} across datasets", c.metric);
        match &c.friedman {
            Some(f) => {
                let _ = writeln!(
                    out,
                    "- Friedman: statistic {:.4}, p = {:.6}",
                    f.statistic, f.p_value
                );
            }
            None => {
                let _ = writeln!(out, "- Friedman: {}", c.note.as_deref().unwrap_or("n/a"));
            }
        }
        for t in &c.ttests {
            if let Some(s) = t.student {
                let _ = writeln!(
                    out,
                    "- {} vs {}: pooled p = {:.4}",
                    t.method, t.versus, s.p_value
                );
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slugs() {
        assert_eq!(slug("VAE SL Avg"), "vae_sl_avg");
        assert_eq!(slug("  a--b "), "a_b");
    }

    #[test]
    fn table_round_trip() {
        let table = ResultTable {
            methods: vec!["PCA".into(), "VAE Err".into()],
            datasets: vec!["a".into(), "b".into()],
            f1: vec![
                vec![Some(0.1 + 0.2), None],
                vec![Some(1.0 / 3.0), Some(0.5)],
            ],
            auc: vec![vec![None, None], vec![None, None]],
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_table_csv(&p, &table, &table.f1).unwrap();
        let (m, d, v) = read_table_csv(&p).unwrap();
        assert_eq!(
            (m, d, v),
            (
                table.methods.clone(),
                table.datasets.clone(),
                table.f1.clone()
            )
        );
        let md = render_table(&table, &table.f1, "f1");
        assert!(md.contains("| VAE Err | 0.33* | 0.50* |"));
    }
}
