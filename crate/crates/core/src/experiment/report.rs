//! Markdown rendering of result tables.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::Path;

use super::output::{self, ResultRow, SignificanceSummaryRow};
use crate::error::Result;

/// Model columns in a fixed order; unknown tags go last alphabetically.
fn model_rank(tag: &str) -> (usize, String) {
    let known = ["baseline", "sociodemographic", "random", "majority_toxic"];
    (
        known.iter().position(|k| *k == tag).unwrap_or(known.len()),
        tag.to_string(),
    )
}

fn push_unique(list: &mut Vec<String>, item: &str) {
    if !list.iter().any(|x| x == item) {
        list.push(item.to_string());
    }
}

/// Per-attribute tables of mean ± std macro-F1 (groups × models). The
/// highest mean of each group, compared at four decimals, is bold; ties
/// are all bold. Significance counts follow each table when available.
pub fn render_tables(results: &[ResultRow], significance: &[SignificanceSummaryRow]) -> String {
    let mut attributes: Vec<String> = Vec::new();
    for r in results {
        push_unique(&mut attributes, &r.attribute);
    }
    for s in significance {
        push_unique(&mut attributes, &s.attribute);
    }

    let mut out = String::new();
    for attr in &attributes {
        let rows: Vec<&ResultRow> = results.iter().filter(|r| &r.attribute == attr).collect();
        let mut groups: Vec<String> = Vec::new();
        let mut models: Vec<String> = Vec::new();
        for r in &rows {
            push_unique(&mut groups, &r.group);
            push_unique(&mut models, &r.model);
        }
        models.sort_by_key(|m| model_rank(m));
        let cell: BTreeMap<(&str, &str), &ResultRow> = rows
            .iter()
            .map(|r| ((r.group.as_str(), r.model.as_str()), *r))
            .collect();

        let _ = writeln!(out, "## {attr}\n");
        if !rows.is_empty() {
            let _ = writeln!(out, "| group | {} |", models.join(" | "));
            let _ = writeln!(out, "|---|{}", "---|".repeat(models.len()));
            for g in &groups {
                let best = models
                    .iter()
                    .filter_map(|m| cell.get(&(g.as_str(), m.as_str())))
                    .map(|r| format!("{:.4}", r.mean_macro_f1))
                    .max_by(|a, b| a.parse::<f64>().unwrap_or(f64::NAN).total_cmp(&b.parse().unwrap_or(f64::NAN)));
                let cells: Vec<String> = models
                    .iter()
                    .map(|m| match cell.get(&(g.as_str(), m.as_str())) {
                        Some(r) => {
                            let mean = format!("{:.4}", r.mean_macro_f1);
                            let text = format!("{mean} ± {:.4}", r.std_macro_f1);
                            if Some(&mean) == best.as_ref() {
                                format!("**{text}**")
                            } else {
                                text
                            }
                        }
                        None => "n/a".to_string(),
                    })
                    .collect();
                let _ = writeln!(out, "| {g} | {} |", cells.join(" | "));
            }
            out.push('\n');
        }

        let sig: Vec<&SignificanceSummaryRow> =
            significance.iter().filter(|s| &s.attribute == attr).collect();
        if !sig.is_empty() {
            let mut comparisons: Vec<String> = Vec::new();
            let mut sig_groups: Vec<String> = Vec::new();
            for s in &sig {
                push_unique(&mut comparisons, &s.comparison);
                push_unique(&mut sig_groups, &s.group);
            }
            let counts: BTreeMap<(&str, &str), &SignificanceSummaryRow> = sig
                .iter()
                .map(|s| ((s.group.as_str(), s.comparison.as_str()), *s))
                .collect();
            let _ = writeln!(out, "Significant folds (raw / Bonferroni-corrected):\n");
            let _ = writeln!(out, "| group | {} |", comparisons.join(" | "));
            let _ = writeln!(out, "|---|{}", "---|".repeat(comparisons.len()));
            for g in &sig_groups {
                let cells: Vec<String> = comparisons
                    .iter()
                    .map(|c| match counts.get(&(g.as_str(), c.as_str())) {
                        Some(s) => format!("{} / {}", s.significant_count, s.bonferroni_count),
                        None => "n/a".to_string(),
                    })
                    .collect();
                let _ = writeln!(out, "| {g} | {} |", cells.join(" | "));
            }
            out.push('\n');
        }
    }
    out
}

/// Renders the tables of a results directory.
pub fn render_dir(dir: &Path) -> Result<String> {
    let results: Vec<ResultRow> = output::read_rows(&dir.join(output::RESULTS_FILE))?;
    let sig_path = dir.join(output::SIGNIFICANCE_SUMMARY_FILE);
    let significance = if sig_path.exists() {
        output::read_rows(&sig_path)?
    } else {
        Vec::new()
    };
    Ok(render_tables(&results, &significance))
}
