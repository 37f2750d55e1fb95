//! File outputs: JSONL reports, CSV aggregates, and the run manifest.
//!
//! Everything written here is deterministic for a fixed master seed;
//! nothing embeds timestamps unless timing capture was requested
//! explicitly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::AttackReport;
use crate::error::{Result, SniaError};

pub fn write_reports_jsonl(reports: &[AttackReport], path: &Path) -> Result<()> {
    ensure_parent(path)?;
    let mut w = BufWriter::new(File::create(path)?);
    for r in reports {
        let line = serde_json::to_string(r).map_err(|e| SniaError::Validation(format!("serialize report: {e}")))?;
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_reports_jsonl(path: &Path) -> Result<Vec<AttackReport>> {
    let file = File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let report: AttackReport = serde_json::from_str(&line).map_err(|e| SniaError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(report);
    }
    Ok(out)
}

/// `success_rates.csv`: one row per targeted label, one column per
/// attacker, rates as percentages with stable shortest-round-trip
/// formatting.
pub fn write_success_rates_csv(rates: &[Vec<f64>], columns: &[String], path: &Path) -> Result<()> {
    ensure_parent(path)?;
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "y_t,{}", columns.join(","))?;
    for (label, row) in rates.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| format_cell(*v * 100.0)).collect();
        writeln!(w, "{label},{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// `heatmap.csv`: rows are original (clean) labels, columns targeted
/// labels.
pub fn write_heatmap_csv(matrix: &[Vec<f64>], path: &Path) -> Result<()> {
    ensure_parent(path)?;
    let mut w = BufWriter::new(File::create(path)?);
    let cols: Vec<String> = (0..matrix.len()).map(|j| format!("to_{j}")).collect();
    writeln!(w, "from,{}", cols.join(","))?;
    for (i, row) in matrix.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| format_cell(*v)).collect();
        writeln!(w, "{i},{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// `sweep.csv`: budget curve points, label-major.
pub fn write_sweep_csv(rows: &[super::suite::SweepRow], path: &Path) -> Result<()> {
    ensure_parent(path)?;
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "budget,y_t,mean_final_prob")?;
    for r in rows {
        writeln!(w, "{},{},{}", r.budget, r.label, format_cell(r.mean_final_prob))?;
    }
    w.flush()?;
    Ok(())
}

/// `manifest.tsv`: the artifacts a run produced plus the hash of its
/// configuration.
pub fn write_manifest(artifacts: &[&Path], config_canonical: &str, path: &Path) -> Result<()> {
    ensure_parent(path)?;
    let mut hasher = Sha256::new();
    hasher.update(config_canonical.as_bytes());
    let hash = hex_string(&hasher.finalize());
    let mut names: Vec<String> = artifacts
        .iter()
        .map(|p| {
            p.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string())
        })
        .collect();
    names.sort();
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "config_hash\t{hash}")?;
    for name in names {
        writeln!(w, "artifact\t{name}")?;
    }
    w.flush()?;
    Ok(())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn format_cell(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v}")
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_report() -> AttackReport {
        AttackReport {
            target: 3,
            label: 1,
            clean_label: 0,
            attacker: "mostattr".into(),
            victim: "gcn".into(),
            success: true,
            clean_prob: 0.25,
            final_prob: 0.75,
            delta_prob: 0.5,
            steps: 4,
            queries: 1,
            wall_time_ms: None,
        }
    }

    #[test]
    fn jsonl_round_trips_and_skips_unset_timing() {
        let dir = std::env::temp_dir().join(format!("snia-out-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("reports.jsonl");
        write_reports_jsonl(&[sample_report()], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(!text.contains("wall_time_ms"));
        let back = read_reports_jsonl(&path).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].final_prob, 0.75);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn csv_and_manifest_are_deterministic() {
        let dir = std::env::temp_dir().join(format!("snia-out2-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let rates = vec![vec![0.5, f64::NAN], vec![0.123456789, 1.0]];
        let cols = vec!["a".to_string(), "b".to_string()];
        let p1 = dir.join("r1.csv");
        let p2 = dir.join("r2.csv");
        write_success_rates_csv(&rates, &cols, &p1).unwrap();
        write_success_rates_csv(&rates, &cols, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        let m1 = dir.join("m1.tsv");
        write_manifest(&[&p1, &p2], "seed = 1\n", &m1).unwrap();
        let text = std::fs::read_to_string(&m1).unwrap();
        assert!(text.starts_with("config_hash\t"));
        assert!(text.contains("artifact\tr1.csv"));
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
