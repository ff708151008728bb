use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use super::{relative_change, BenchReport, PassRate};

pub const REPORT_SCHEMA_VERSION: &str = "codegrad.report/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Markdown,
    Csv,
}

impl ReportFormat {
    pub fn parse(text: &str) -> Option<Self> {
        match text.to_ascii_lowercase().as_str() {
            "json" => Some(ReportFormat::Json),
            "markdown" | "md" => Some(ReportFormat::Markdown),
            "csv" => Some(ReportFormat::Csv),
            _ => None,
        }
    }
}

/// `0.628↑12.5%` style cell: the new rate and its change relative to `base`.
pub fn format_with_change(new: PassRate, base: Option<PassRate>) -> String {
    let Some(base) = base else {
        return new.to_string();
    };
    match relative_change(new.value(), base.value()) {
        None => new.to_string(),
        Some(c) => {
            let c = (c * 10.0).round() / 10.0;
            let arrow = if c > 0.0 {
                '↑'
            } else if c < 0.0 {
                '↓'
            } else {
                '→'
            };
            format!("{new}{arrow}{:.1}%", c.abs())
        }
    }
}

pub fn emit_report(report: &BenchReport, format: ReportFormat, baseline: Option<&BenchReport>) -> String {
    match format {
        ReportFormat::Json => serde_json::to_string_pretty(report).expect("report serializes") + "\n",
        ReportFormat::Markdown => markdown(report, baseline),
        ReportFormat::Csv => csv_text(report),
    }
}

fn markdown(report: &BenchReport, baseline: Option<&BenchReport>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Benchmark report: {}\n", report.label);
    let _ = writeln!(
        out,
        "Dataset `{}`: {} task(s) run, {} record(s) skipped.\n",
        report.dataset,
        report.rows.len(),
        report.skipped_records
    );

    out.push_str("## Overall pass@1\n\n| Method | pass@1 | Passed / total |\n|---|---|---|\n");
    if let Some(b) = baseline {
        let _ = writeln!(out, "| {} | {} | {}/{} |", b.label, b.overall, b.overall.passed, b.overall.total);
    }
    let _ = writeln!(
        out,
        "| {} | {} | {}/{} |",
        report.label,
        format_with_change(report.overall, baseline.map(|b| b.overall)),
        report.overall.passed,
        report.overall.total
    );

    bucket_table(&mut out, "Difficulty", &report.by_difficulty, baseline.map(|b| &b.by_difficulty), report, baseline);
    bucket_table(&mut out, "Category", &report.by_category, baseline.map(|b| &b.by_category), report, baseline);
    out
}

fn bucket_table(
    out: &mut String,
    title: &str,
    current: &BTreeMap<String, PassRate>,
    base: Option<&BTreeMap<String, PassRate>>,
    report: &BenchReport,
    baseline: Option<&BenchReport>,
) {
    let _ = write!(out, "\n## pass@1 by {}\n\n| {title} |", title.to_lowercase());
    if let Some(b) = baseline {
        let _ = write!(out, " {} |", b.label);
    }
    let _ = writeln!(out, " {} |", report.label);
    out.push_str(if baseline.is_some() { "|---|---|---|\n" } else { "|---|---|\n" });
    let keys: BTreeSet<&String> = current.keys().chain(base.into_iter().flat_map(|b| b.keys())).collect();
    for key in keys {
        let _ = write!(out, "| {key} |");
        let old = base.and_then(|b| b.get(key)).copied();
        if base.is_some() {
            let _ = write!(out, " {} |", old.map_or("-".to_string(), |r| r.to_string()));
        }
        let cell = current.get(key).map_or("-".to_string(), |&r| format_with_change(r, old));
        let _ = writeln!(out, " {cell} |");
    }
}

const CSV_HEADER: [&str; 13] = [
    "kind",
    "key",
    "difficulty",
    "category",
    "status",
    "passed",
    "total",
    "pass_at_1",
    "iterations",
    "forward_calls",
    "backward_calls",
    "judge_calls",
    "wall_ms",
];

fn csv_text(report: &BenchReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for r in &report.rows {
        let passed = u32::from(r.passed);
        w.write_record([
            "task",
            &r.task_id,
            r.difficulty.as_deref().unwrap_or(""),
            r.category.as_deref().unwrap_or(""),
            r.status.as_str(),
            &passed.to_string(),
            "1",
            &format!("{passed}.000"),
            &r.iterations.to_string(),
            &r.forward_calls.to_string(),
            &r.backward_calls.to_string(),
            &r.judge_calls.to_string(),
            &r.wall_ms.to_string(),
        ])
        .expect("in-memory write");
    }
    let mut aggregate = |kind: &str, key: &str, rate: PassRate| {
        w.write_record([
            kind,
            key,
            "",
            "",
            "",
            &rate.passed.to_string(),
            &rate.total.to_string(),
            &rate.to_string(),
            "",
            "",
            "",
            "",
            "",
        ])
        .expect("in-memory write");
    };
    aggregate("overall", "all", report.overall);
    for (k, r) in &report.by_difficulty {
        aggregate("difficulty", k, *r);
    }
    for (k, r) in &report.by_category {
        aggregate("category", k, *r);
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8 input")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::TaskRow;
    use crate::refine::{RunConfig, TaskStatus};

    fn report(label: &str, outcomes: &[(&str, bool, &str)]) -> BenchReport {
        let rows = outcomes
            .iter()
            .map(|(id, passed, diff)| TaskRow {
                task_id: id.to_string(),
                difficulty: Some(diff.to_string()),
                category: Some("misc, general".into()),
                status: TaskStatus::UnverifiedBest,
                passed: *passed,
                iterations: 2,
                forward_calls: 5,
                backward_calls: 3,
                judge_calls: 0,
                wall_ms: 12,
                error: None,
            })
            .collect();
        BenchReport::new(label, "fixture", RunConfig::default(), rows, 1).unwrap()
    }

    #[test]
    fn change_cells() {
        let new = PassRate { passed: 628, total: 1000 };
        let old = PassRate { passed: 558, total: 1000 };
        assert_eq!(format_with_change(new, Some(old)), "0.628↑12.5%");
        assert_eq!(format_with_change(old, Some(new)), "0.558↓11.1%");
        assert_eq!(format_with_change(new, Some(new)), "0.628→0.0%");
        assert_eq!(format_with_change(new, Some(PassRate { passed: 0, total: 4 })), "0.628");
        assert_eq!(format_with_change(new, None), "0.628");
    }

    #[test]
    fn json_is_lossless() {
        let r = report("codegrad", &[("a", true, "easy"), ("b", false, "hard")]);
        let text = emit_report(&r, ReportFormat::Json, None);
        let back: BenchReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
        assert!(text.contains(REPORT_SCHEMA_VERSION));
    }

    #[test]
    fn markdown_with_baseline_has_arrows() {
        let base = report("baseline", &[("a", false, "easy"), ("b", true, "hard"), ("c", false, "easy")]);
        let new = report("codegrad", &[("a", true, "easy"), ("b", true, "hard"), ("c", false, "easy")]);
        let md = emit_report(&new, ReportFormat::Markdown, Some(&base));
        assert!(md.contains("| codegrad | 0.667↑100.0% | 2/3 |"), "{md}");
        assert!(md.contains("| easy | 0.000 | 0.500 |"), "{md}");
        assert!(md.contains("| hard | 1.000 | 1.000→0.0% |"), "{md}");
    }

    #[test]
    fn csv_rows_and_aggregates() {
        let r = report("codegrad", &[("a", true, "easy"), ("b", false, "hard")]);
        let text = emit_report(&r, ReportFormat::Csv, None);
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        let rows: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
        assert_eq!(rows.len(), 2 + 1 + 2 + 1);
        assert_eq!(&rows[0][3], "misc, general");
        assert_eq!(&rows[2][0], "overall");
        assert_eq!(&rows[2][7], "0.500");
    }
}
