use std::collections::BTreeSet;
use std::str::FromStr;

use serde_json::{json, Map, Value};

use crate::report::Report;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Table,
    Csv,
    JsonLines,
}

impl FromStr for TableFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(TableFormat::Table),
            "csv" => Ok(TableFormat::Csv),
            "json-lines" => Ok(TableFormat::JsonLines),
            other => Err(format!("unknown format {other:?} (table, csv, json-lines)")),
        }
    }
}

/// A rendered table: a name, a header row and string cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub name: &'static str,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// Prints up to two decimals and drops trailing zeros: 56 → "56", 25.5 → "25.5".
pub fn number(v: f64) -> String {
    let s = format!("{v:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

/// Plan errors: one row per scenario, one column per policy. Counts carry a
/// trailing "+" when the plan was too noisy to count reliably.
pub fn plan_error_table(report: &Report) -> Table {
    let policies: BTreeSet<&str> = report
        .plan_errors
        .iter()
        .flat_map(|r| r.policies.keys().map(String::as_str))
        .collect();
    let mut header = vec!["GamePlay".to_string(), "# of actions".to_string()];
    header.extend(policies.iter().map(|p| p.to_string()));
    let rows = report
        .plan_errors
        .iter()
        .map(|r| {
            let mut row = vec![r.scenario.clone(), r.n_actions.to_string()];
            row.extend(policies.iter().map(|p| {
                r.policies
                    .get(*p)
                    .map(|e| e.rendered_total())
                    .unwrap_or_default()
            }));
            row
        })
        .collect();
    Table {
        name: "plan_errors",
        header,
        rows,
    }
}

/// Success rates, one row per condition in manifest order. Rates are
/// percentages of episodes.
pub fn success_table(report: &Report) -> Table {
    let header = [
        "Condition",
        "Episodes",
        "Success rate (%)",
        "Mean steps to success",
        "Mean cumulative reward",
        "Wins by agent",
        "Complete",
    ]
    .map(String::from)
    .to_vec();
    let rows = report
        .conditions
        .iter()
        .map(|c| {
            let wins: Vec<String> = c
                .win_counts
                .iter()
                .map(|(id, n)| format!("{id}:{n}"))
                .collect();
            vec![
                c.condition.name().to_string(),
                c.episodes.to_string(),
                number(c.success_rate),
                c.mean_steps_to_success.map(number).unwrap_or_else(|| "-".into()),
                c.mean_cumulative_reward.map(number).unwrap_or_else(|| "-".into()),
                wins.join(" "),
                if c.incomplete { "no" } else { "yes" }.to_string(),
            ]
        })
        .collect();
    Table {
        name: "success_rates",
        header,
        rows,
    }
}

pub fn tables(report: &Report) -> Vec<Table> {
    vec![plan_error_table(report), success_table(report)]
}

fn render_text(t: &Table) -> String {
    let mut widths: Vec<usize> = t.header.iter().map(|h| h.chars().count()).collect();
    for row in &t.rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| -> String {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        format!("| {} |\n", padded.join(" | "))
    };
    let mut out = line(&t.header);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&format!("|-{}-|\n", rule.join("-|-")));
    for row in &t.rows {
        out.push_str(&line(row));
    }
    out
}

/// One table as a standalone CSV document.
pub fn render_csv(t: &Table) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(Vec::new());
    w.write_record(&t.header).expect("in-memory write");
    for row in &t.rows {
        w.write_record(row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

fn render_json_lines(t: &Table) -> String {
    let mut out = String::new();
    for row in &t.rows {
        let mut obj = Map::new();
        obj.insert("table".into(), json!(t.name));
        for (h, c) in t.header.iter().zip(row) {
            obj.insert(h.clone(), Value::String(c.clone()));
        }
        out.push_str(&serde_json::to_string(&Value::Object(obj)).expect("json"));
        out.push('\n');
    }
    out
}

/// Both tables in the requested format. Text and CSV tables are separated by
/// a blank line and preceded by a `# name` line; JSON lines carry a `table`
/// field instead.
pub fn emit_tables(report: &Report, format: TableFormat) -> String {
    let ts = tables(report);
    match format {
        TableFormat::JsonLines => ts.iter().map(render_json_lines).collect(),
        TableFormat::Table | TableFormat::Csv => ts
            .iter()
            .map(|t| {
                let body = if format == TableFormat::Table {
                    render_text(t)
                } else {
                    render_csv(t)
                };
                format!("# {}\n{body}", t.name)
            })
            .collect::<Vec<_>>()
            .join("\n"),
    }
}
