//! Rendering of result tables: aligned text for the terminal, CSV with a
//! header row for downstream tooling.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use plansteer_core::eval::{
    AblationTable, CrossvalOutput, CrossvalSummary, FoldReport, PercentileBand, QueryOutcome,
};
use plansteer_core::HintSet;

/// Monospace table: headers, then rows, columns padded to the widest cell.
/// Cells that parse as numbers are right-aligned.
pub fn render_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let columns = headers.len();
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let numeric: Vec<bool> = (0..columns)
        .map(|c| {
            !rows.is_empty() && rows.iter().all(|row| row[c].parse::<f64>().is_ok())
        })
        .collect();

    let mut out = String::new();
    for (c, header) in headers.iter().enumerate() {
        if c > 0 {
            out.push_str("  ");
        }
        let _ = write!(out, "{:<width$}", header, width = widths[c]);
    }
    out.push('\n');
    for row in rows {
        for (c, cell) in row.iter().enumerate() {
            if c > 0 {
                out.push_str("  ");
            }
            if numeric[c] {
                let _ = write!(out, "{:>width$}", cell, width = widths[c]);
            } else {
                let _ = write!(out, "{:<width$}", cell, width = widths[c]);
            }
        }
        out.push('\n');
    }
    out
}

fn csv_field(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// CSV document from a header row and data rows.
pub fn render_csv(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    out.push_str(&headers.iter().map(|h| csv_field(h)).collect::<Vec<_>>().join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.iter().map(|f| csv_field(f)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

fn ms(value: f64) -> String {
    format!("{value:.3}")
}

fn pct(value: f64) -> String {
    format!("{value:.2}")
}

pub const FOLD_HEADERS: [&str; 8] = [
    "fold_index",
    "total_default_ms",
    "total_chosen_ms",
    "speedup_pct",
    "n_faster",
    "n_slower",
    "n_unchanged",
    "n_timeouts",
];

pub fn fold_rows(folds: &[FoldReport], exact: bool) -> Vec<Vec<String>> {
    folds
        .iter()
        .map(|f| {
            vec![
                f.fold_index.to_string(),
                if exact { f.total_default_ms.to_string() } else { ms(f.total_default_ms) },
                if exact { f.total_chosen_ms.to_string() } else { ms(f.total_chosen_ms) },
                if exact { f.speedup_pct.to_string() } else { pct(f.speedup_pct) },
                f.n_faster.to_string(),
                f.n_slower.to_string(),
                f.n_unchanged.to_string(),
                f.n_timeouts.to_string(),
            ]
        })
        .collect()
}

pub const BAND_HEADERS: [&str; 4] = [
    "upper_bound",
    "mean_default_ms",
    "mean_boosted_ms",
    "boost_pct",
];

pub fn band_rows(bands: &[PercentileBand], exact: bool) -> Vec<Vec<String>> {
    bands
        .iter()
        .map(|b| {
            vec![
                format!("{:.1}", b.upper_bound),
                if exact { b.mean_default_ms.to_string() } else { ms(b.mean_default_ms) },
                if exact { b.mean_boosted_ms.to_string() } else { ms(b.mean_boosted_ms) },
                if exact { b.boost_pct.to_string() } else { pct(b.boost_pct) },
            ]
        })
        .collect()
}

pub const OUTCOME_HEADERS: [&str; 7] = [
    "query_id",
    "fold_index",
    "default_ms",
    "chosen_ms",
    "hints_applied",
    "plan_changed",
    "timed_out",
];

pub fn outcome_rows(outcomes: &[QueryOutcome]) -> Vec<Vec<String>> {
    outcomes
        .iter()
        .map(|o| {
            vec![
                o.query_id.clone(),
                o.fold_index.to_string(),
                o.default_ms.to_string(),
                o.chosen_ms.to_string(),
                o.hints_applied.format_bits(),
                o.plan_changed.to_string(),
                o.timed_out.to_string(),
            ]
        })
        .collect()
}

pub const ABLATION_HEADERS: [&str; 4] = [
    "metric",
    "consistency_check",
    "total_speedup_pct",
    "n_timeouts",
];

pub fn ablation_rows(table: &AblationTable, exact: bool) -> Vec<Vec<String>> {
    table
        .rows
        .iter()
        .map(|r| {
            vec![
                r.metric.to_string(),
                if r.consistency_check { "on" } else { "off" }.to_string(),
                if exact { r.total_speedup_pct.to_string() } else { pct(r.total_speedup_pct) },
                r.n_timeouts.to_string(),
            ]
        })
        .collect()
}

pub const FREQUENCY_HEADERS: [&str; 2] = ["hint_set", "count"];

pub fn frequency_rows(rows: &[(HintSet, usize)]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|(hints, count)| vec![hints.format_bits(), count.to_string()])
        .collect()
}

pub fn summary_lines(summary: &CrossvalSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "mean_fold_speedup_pct      {}", pct(summary.mean_fold_speedup_pct));
    let _ = writeln!(out, "total_speedup_pct          {}", pct(summary.total_speedup_pct));
    let _ = writeln!(out, "max_achievable_speedup_pct {}", pct(summary.max_achievable_speedup_pct));
    let _ = writeln!(out, "frac_faster                {:.4}", summary.frac_faster);
    let _ = writeln!(out, "frac_slower                {:.4}", summary.frac_slower);
    let _ = writeln!(out, "frac_unchanged             {:.4}", summary.frac_unchanged);
    let _ = writeln!(out, "p90_change_pct             {}", pct(summary.p90_change_pct));
    let _ = writeln!(out, "median_change_pct          {}", pct(summary.median_change_pct));
    out
}

pub fn summary_json(summary: &CrossvalSummary) -> String {
    serde_json::json!({
        "mean_fold_speedup_pct": summary.mean_fold_speedup_pct,
        "total_speedup_pct": summary.total_speedup_pct,
        "max_achievable_speedup_pct": summary.max_achievable_speedup_pct,
        "frac_faster": summary.frac_faster,
        "frac_slower": summary.frac_slower,
        "frac_unchanged": summary.frac_unchanged,
        "p90_change_pct": summary.p90_change_pct,
        "median_change_pct": summary.median_change_pct,
    })
    .to_string()
}

/// Writes folds.csv, bands.csv, outcomes.csv, and summary.json under `dir`.
pub fn write_crossval_reports(output: &CrossvalOutput, dir: &Path) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(
        dir.join("folds.csv"),
        render_csv(&FOLD_HEADERS, &fold_rows(&output.folds, true)),
    )?;
    fs::write(
        dir.join("bands.csv"),
        render_csv(&BAND_HEADERS, &band_rows(&output.bands, true)),
    )?;
    fs::write(
        dir.join("outcomes.csv"),
        render_csv(&OUTCOME_HEADERS, &outcome_rows(&output.outcomes)),
    )?;
    fs::write(dir.join("summary.json"), summary_json(&output.summary) + "\n")?;
    Ok(())
}
