//! Orientation evaluation reports: a plain-text table, CSV and JSON.

use serde::Serialize;

use crate::error::Result;
use crate::orientation::OrientationStats;

use super::round_sig9;

fn count(frac: f64, n: usize) -> usize {
    (frac * n as f64).round() as usize
}

/// Text table with one row per method: mean and standard deviation of the
/// angular error, and the fractions (with counts) at or below 3 and 10
/// degrees.
pub fn orientation_table(stats: &[OrientationStats]) -> String {
    let rows: Vec<[String; 4]> = stats
        .iter()
        .map(|s| {
            [
                s.method.description().to_string(),
                format!("{:.2} ± {:.2}", s.mean_deg, s.std_deg),
                format!("{:.2} ({}/{})", s.frac_le_3, count(s.frac_le_3, s.n), s.n),
                format!("{:.2} ({}/{})", s.frac_le_10, count(s.frac_le_10, s.n), s.n),
            ]
        })
        .collect();
    let header = ["Method", "Mean ± Std (deg)", "Fraction <= 3 deg", "Fraction <= 10 deg"].map(String::from);
    let width: Vec<usize> = (0..4).map(|c| rows.iter().chain([&header]).map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
    let line = |r: &[String; 4]| {
        let cells: Vec<String> = r.iter().zip(&width).map(|(c, &w)| format!("{c}{}", " ".repeat(w - c.chars().count()))).collect();
        format!("| {} |\n", cells.join(" | "))
    };
    let rule = format!("|{}|\n", width.iter().map(|w| "-".repeat(w + 2)).collect::<Vec<_>>().join("|"));
    let mut out = line(&header);
    out.push_str(&rule);
    for r in &rows {
        out.push_str(&line(r));
    }
    out
}

pub fn orientation_report_csv(stats: &[OrientationStats]) -> String {
    let mut out = String::from("method,mean_deg,std_deg,frac_le_3,count_le_3,frac_le_10,count_le_10,n,failures\n");
    for s in stats {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            s.method,
            round_sig9(s.mean_deg),
            round_sig9(s.std_deg),
            round_sig9(s.frac_le_3),
            count(s.frac_le_3, s.n),
            round_sig9(s.frac_le_10),
            count(s.frac_le_10, s.n),
            s.n,
            s.failures
        ));
    }
    out
}

#[derive(Serialize)]
struct Row {
    method: String,
    description: &'static str,
    mean_deg: f64,
    std_deg: f64,
    frac_le_3: f64,
    count_le_3: usize,
    frac_le_10: f64,
    count_le_10: usize,
    n: usize,
    failures: usize,
}

#[derive(Serialize)]
struct Report {
    seed: u64,
    methods: Vec<Row>,
}

/// JSON report for a suite generated from `seed`.
pub fn orientation_report_json(stats: &[OrientationStats], seed: u64) -> Result<Vec<u8>> {
    let methods = stats
        .iter()
        .map(|s| Row {
            method: s.method.to_string(),
            description: s.method.description(),
            mean_deg: round_sig9(s.mean_deg),
            std_deg: round_sig9(s.std_deg),
            frac_le_3: round_sig9(s.frac_le_3),
            count_le_3: count(s.frac_le_3, s.n),
            frac_le_10: round_sig9(s.frac_le_10),
            count_le_10: count(s.frac_le_10, s.n),
            n: s.n,
            failures: s.failures,
        })
        .collect();
    super::to_json_bytes(&Report { seed, methods })
}
