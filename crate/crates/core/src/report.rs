//! Markdown report of a finished run.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::benchmark::{CellOutcome, CellStatus, ExternalOutcome, RunSummary};
use crate::dataset::Computed;
use crate::evaluation::{Interval, Metric, MetricReport};
use crate::features::FeatureSet;
use crate::timing::TimingReport;

/// `0.691<br>(0.593, 0.784)`, with the point value in bold when `best`.
pub fn format_interval(i: &Interval, best: bool) -> String {
    let point = format!("{:.3}", i.point);
    let point = if best { format!("**{point}**") } else { point };
    format!("{point}<br>({:.3}, {:.3})", i.ci_low, i.ci_high)
}

fn fmt_p(c: &Computed<crate::stats::TestResult>) -> String {
    match c {
        Computed::Value(t) => format!("{:.3}", t.p_value),
        Computed::NotComputable { reason } => format!("n/a ({reason})"),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.1}"))
}

/// One results table. Rows are (label, report) pairs; the best point value
/// of every metric column is bold (all ties included).
fn metric_table(out: &mut String, rows: &[(String, Option<String>, &MetricReport)]) {
    let best: BTreeMap<Metric, f64> = Metric::ALL
        .iter()
        .map(|&m| {
            let b = rows.iter().map(|(_, _, r)| r.get(m).point).fold(f64::NEG_INFINITY, f64::max);
            (m, b)
        })
        .collect();
    out.push_str("| Model | CV BA |");
    for m in Metric::ALL {
        let _ = write!(out, " {} |", m.title());
    }
    out.push('\n');
    out.push_str("|---|---|");
    for _ in Metric::ALL {
        out.push_str("---|");
    }
    out.push('\n');
    for (label, cv, r) in rows {
        let _ = write!(out, "| {label} | {} |", cv.as_deref().unwrap_or("-"));
        for m in Metric::ALL {
            let i = r.get(m);
            let _ = write!(out, " {} |", format_interval(i, i.point == best[&m]));
        }
        out.push('\n');
    }
    out.push('\n');
}

fn model_label(c: &CellOutcome) -> String {
    format!("{} / {}", c.key.algorithm.as_str(), c.key.variant.as_str())
}

pub fn render_report(summary: &RunSummary, timings: &[TimingReport]) -> String {
    let mut out = String::new();
    let cfg = &summary.config;
    out.push_str("# Benchmark report\n\n");
    let _ = writeln!(
        out,
        "- Training rows: {} ({} malignant)\n- Held-out rows: {} ({} malignant)\n- Seed: {}; folds: {}; feature selection scope: {}; bootstrap resamples: {}",
        summary.n_train,
        summary.n_train_malignant,
        summary.n_test,
        summary.n_test_malignant,
        cfg.seed,
        cfg.folds,
        cfg.select_scope,
        cfg.bootstrap_resamples
    );
    if let Some(t) = summary.mfcc_target_frames {
        let _ = writeln!(out, "- MFCC length: {t} frames (mean over training recordings)");
    }
    let _ = writeln!(
        out,
        "- Cells: {} run, {} failed\n\nIntervals are 95% percentile-bootstrap intervals over the held-out rows.\n",
        summary.cells.len(),
        summary.n_failed()
    );

    let ok: Vec<&CellOutcome> = summary.cells.iter().filter(|c| c.status == CellStatus::Ok).collect();
    for set in FeatureSet::ALL {
        let rows: Vec<(String, Option<String>, &MetricReport)> = ok
            .iter()
            .filter(|c| c.key.feature_set == set)
            .filter_map(|c| {
                c.holdout
                    .as_ref()
                    .map(|h| (model_label(c), c.cv_mean_balanced_accuracy.map(|v| format!("{v:.3}")), h))
            })
            .collect();
        if rows.is_empty() {
            continue;
        }
        let _ = writeln!(out, "## Held-out results: {set}\n");
        metric_table(&mut out, &rows);
    }

    let ext_names: Vec<String> = {
        let mut v: Vec<String> = ok.iter().flat_map(|c| c.external.keys().cloned()).collect();
        v.sort();
        v.dedup();
        v
    };
    for name in &ext_names {
        let _ = writeln!(out, "## External evaluation: {name}\n");
        for set in FeatureSet::ALL {
            let rows: Vec<(String, Option<String>, &MetricReport)> = ok
                .iter()
                .filter(|c| c.key.feature_set == set)
                .filter_map(|c| match c.external.get(name) {
                    Some(ExternalOutcome::Evaluated(r)) => Some((model_label(c), None, r)),
                    _ => None,
                })
                .collect();
            if !rows.is_empty() {
                let _ = writeln!(out, "### {set}\n");
                metric_table(&mut out, &rows);
            }
        }
        let skipped: Vec<String> = ok
            .iter()
            .filter_map(|c| match c.external.get(name) {
                Some(ExternalOutcome::Skipped { reason }) => Some(format!("- {}: skipped, {reason}", c.id)),
                Some(ExternalOutcome::Failed { error }) => Some(format!("- {}: failed, {error}", c.id)),
                _ => None,
            })
            .collect();
        if !skipped.is_empty() {
            out.push_str(&skipped.join("\n"));
            out.push_str("\n\n");
        }
    }

    let fair: Vec<&CellOutcome> = ok.iter().copied().filter(|c| c.fairness.is_some()).collect();
    if !fair.is_empty() {
        out.push_str("## Sex and age versus correctness (held-out rows)\n\n");
        out.push_str("| Cell | Correct M/F | Incorrect M/F | Fisher p | Mean age correct | Mean age incorrect | Welch p |\n");
        out.push_str("|---|---|---|---|---|---|---|\n");
        for c in fair {
            let f = c.fairness.as_ref().expect("filtered");
            let t = &f.gender_table;
            let _ = writeln!(
                out,
                "| {} | {}/{} | {}/{} | {} | {} | {} | {} |",
                c.id,
                t.a,
                t.c,
                t.b,
                t.d,
                fmt_p(&f.gender),
                fmt_opt(f.ages_correct.mean),
                fmt_opt(f.ages_incorrect.mean),
                fmt_p(&f.age)
            );
        }
        out.push('\n');
    }

    if !timings.is_empty() {
        out.push_str("## Inference time per file (seconds)\n\n");
        let _ = writeln!(out, "{}\n", timings[0].environment);
        out.push_str("| Model | Stage | Min | Median | p95 | Max |\n|---|---|---|---|---|---|\n");
        for t in timings {
            for (stage, s) in &t.summary {
                let _ = writeln!(
                    out,
                    "| {} | {} | {:.4} | {:.4} | {:.4} | {:.4} |",
                    t.model_id,
                    stage.as_str(),
                    s.min,
                    s.median,
                    s.p95,
                    s.max
                );
            }
        }
        out.push('\n');
    }

    let failed: Vec<&CellOutcome> = summary.cells.iter().filter(|c| c.status == CellStatus::Failed).collect();
    if !failed.is_empty() {
        out.push_str("## Failed cells\n\n");
        for c in failed {
            let _ = writeln!(out, "- {}: {}", c.id, c.error.as_deref().unwrap_or("unknown error"));
        }
        out.push('\n');
    }
    let notes: Vec<String> = ok
        .iter()
        .flat_map(|c| c.deviation_notes.iter().map(move |n| format!("- {}: {n}", c.id)))
        .collect();
    if !notes.is_empty() {
        out.push_str("## Notes\n\n");
        out.push_str(&notes.join("\n"));
        out.push('\n');
    }
    out
}
