//! Mean/std summaries and report tables.

use serde::{Deserialize, Serialize};

use super::TrialReport;

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

/// A fraction as a percentage with one decimal, halves rounded away from zero.
pub fn percent(value: f64) -> String {
    let tenths = (value * 1000.0).round();
    let tenths = if tenths == 0.0 { 0.0 } else { tenths };
    format!("{:.1}", tenths / 10.0)
}

/// `MEAN_{STD}` in percent.
pub fn format_cell(mean: f64, std: f64) -> String {
    format!("{}_{{{}}}", percent(mean), percent(std))
}

pub const INCOMPLETE: &str = "—";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportStyle {
    Markdown,
    Tsv,
}

impl std::str::FromStr for ReportStyle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "markdown" | "md" => Ok(ReportStyle::Markdown),
            "tsv" => Ok(ReportStyle::Tsv),
            other => Err(format!(
                "unknown report style {other:?} (expected markdown or tsv)"
            )),
        }
    }
}

fn push_unique(list: &mut Vec<String>, value: &str) {
    if !list.iter().any(|v| v == value) {
        list.push(value.to_string());
    }
}

/// Renders reports as a table: one row per dataset and amount, one column per arm,
/// both in first-appearance order. Incomplete cells print as [`INCOMPLETE`] and are listed
/// in a footnote.
pub fn format_report(reports: &[TrialReport], style: ReportStyle) -> String {
    let mut rows: Vec<(String, String)> = Vec::new();
    let mut columns: Vec<String> = Vec::new();
    for r in reports {
        let key = (r.dataset.clone(), r.amount.clone());
        if !rows.contains(&key) {
            rows.push(key);
        }
        push_unique(&mut columns, &r.arm);
    }

    let mut header = vec!["Dataset".to_string(), "Amount".to_string()];
    header.extend(columns.iter().cloned());
    let mut table: Vec<Vec<String>> = Vec::new();
    let mut notes: Vec<String> = Vec::new();
    for (dataset, amount) in &rows {
        let mut line = vec![dataset.clone(), amount.clone()];
        for col in &columns {
            let cell = reports
                .iter()
                .find(|r| &r.dataset == dataset && &r.amount == amount && &r.arm == col);
            line.push(match cell {
                Some(r) => match r.summary() {
                    Some((mean, std)) => format_cell(mean, std),
                    None => {
                        let failed = r.trials.iter().filter(|t| t.accuracy.is_none()).count();
                        let reason = r
                            .trials
                            .iter()
                            .find_map(|t| t.error.clone())
                            .unwrap_or_default();
                        notes.push(format!(
                            "{dataset} {amount} {col}: {failed}/{} trials failed ({reason})",
                            r.trials.len()
                        ));
                        INCOMPLETE.to_string()
                    }
                },
                None => String::new(),
            });
        }
        table.push(line);
    }

    let mut out = String::new();
    match style {
        ReportStyle::Markdown => {
            out.push_str(&format!("| {} |\n", header.join(" | ")));
            out.push_str(&format!("|{}\n", "---|".repeat(header.len())));
            for line in &table {
                out.push_str(&format!("| {} |\n", line.join(" | ")));
            }
        }
        ReportStyle::Tsv => {
            out.push_str(&header.join("\t"));
            out.push('\n');
            for line in &table {
                out.push_str(&line.join("\t"));
                out.push('\n');
            }
        }
    }
    if !notes.is_empty() {
        out.push('\n');
        for note in notes {
            out.push_str(&format!("{INCOMPLETE} {note}\n"));
        }
    }
    out
}
