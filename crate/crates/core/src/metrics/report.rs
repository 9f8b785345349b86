use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleScores {
    pub query_id: String,
    pub rouge_l: f64,
    pub bleu_4: f64,
    #[serde(default)]
    pub geval: Option<u8>,
    /// Externally computed; not produced by this crate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bertscore: Option<f64>,
    #[serde(default)]
    pub category: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub count: usize,
    pub rouge_l: f64,
    pub bleu_4: f64,
    pub geval: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bertscore: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_example: Vec<ExampleScores>,
    pub aggregates: Aggregates,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_by: Option<BTreeMap<String, Aggregates>>,
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn aggregate(rows: &[&ExampleScores]) -> Aggregates {
    Aggregates {
        count: rows.len(),
        rouge_l: mean_of(rows.iter().map(|r| r.rouge_l)).unwrap_or(0.0),
        bleu_4: mean_of(rows.iter().map(|r| r.bleu_4)).unwrap_or(0.0),
        geval: mean_of(rows.iter().filter_map(|r| r.geval.map(f64::from))),
        bertscore: mean_of(rows.iter().filter_map(|r| r.bertscore)),
    }
}

fn check_row(row: &ExampleScores) -> Result<()> {
    let unit = |v: f64| (0.0..=1.0).contains(&v);
    if !unit(row.rouge_l) || !unit(row.bleu_4) || row.bertscore.is_some_and(|b| !b.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "query `{}`: metric outside [0, 1]",
            row.query_id
        )));
    }
    if row.geval.is_some_and(|g| !(1..=5).contains(&g)) {
        return Err(Error::InvalidArgument(format!(
            "query `{}`: G-Eval score outside 1..=5",
            row.query_id
        )));
    }
    Ok(())
}

/// Means over all rows (in input order) and, with `group_by_category`, per
/// category. Rows without a category group under `"(none)"`.
pub fn aggregate_report(rows: Vec<ExampleScores>, group_by_category: bool) -> Result<MetricReport> {
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    rows.iter().try_for_each(check_row)?;
    let all: Vec<&ExampleScores> = rows.iter().collect();
    let aggregates = aggregate(&all);
    let group_by = group_by_category.then(|| {
        let mut groups: BTreeMap<String, Vec<&ExampleScores>> = BTreeMap::new();
        for row in &rows {
            let key = row.category.clone().unwrap_or_else(|| "(none)".to_string());
            groups.entry(key).or_default().push(row);
        }
        groups
            .into_iter()
            .map(|(k, members)| (k, aggregate(&members)))
            .collect()
    });
    Ok(MetricReport {
        per_example: rows,
        aggregates,
        group_by,
    })
}

impl MetricReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Columns `query_id, rouge_l, bleu_4, geval, category`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["query_id", "rouge_l", "bleu_4", "geval", "category"])
            .expect("in-memory write");
        for row in &self.per_example {
            w.write_record([
                row.query_id.clone(),
                row.rouge_l.to_string(),
                row.bleu_4.to_string(),
                row.geval.map(|g| g.to_string()).unwrap_or_default(),
                row.category.clone().unwrap_or_default(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8 csv")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn row(id: &str, r: f64, b: f64, cat: Option<&str>) -> ExampleScores {
        ExampleScores {
            query_id: id.into(),
            rouge_l: r,
            bleu_4: b,
            geval: None,
            bertscore: None,
            category: cat.map(str::to_string),
        }
    }

    #[test]
    fn single_row() {
        let rep = aggregate_report(vec![row("q", 0.25, 0.5, None)], false).unwrap();
        assert_eq!(rep.aggregates.rouge_l, 0.25);
        assert_eq!(rep.aggregates.bleu_4, 0.5);
        assert_eq!(rep.aggregates.geval, None);
    }

    #[test]
    fn two_rows_mean() {
        let rep = aggregate_report(vec![row("a", 0.2, 0.2, None), row("b", 0.4, 0.4, None)], false)
            .unwrap();
        assert!((rep.aggregates.rouge_l - 0.3).abs() < 1e-12);
    }

    #[test]
    fn many_rows_match_independent_sum() {
        let mut rng = crate::seed::rng(21);
        let rows: Vec<ExampleScores> = (0..100)
            .map(|i| row(&format!("q{i}"), rng.random(), rng.random(), None))
            .collect();
        let reference: f64 = rows.iter().rev().map(|r| r.rouge_l).sum::<f64>() / 100.0;
        let rep = aggregate_report(rows, false).unwrap();
        assert!((rep.aggregates.rouge_l - reference).abs() < 1e-12);
    }

    #[test]
    fn groups_by_category() {
        let mut rows = vec![
            row("a", 1.0, 1.0, Some("food")),
            row("b", 0.0, 0.0, Some("cars")),
            row("c", 0.5, 0.5, Some("food")),
        ];
        rows[0].geval = Some(5);
        let rep = aggregate_report(rows, true).unwrap();
        let groups = rep.group_by.unwrap();
        assert_eq!(groups["food"].count, 2);
        assert_eq!(groups["food"].rouge_l, 0.75);
        assert_eq!(groups["food"].geval, Some(5.0));
        assert_eq!(groups["cars"].geval, None);
    }

    #[test]
    fn rejects_empty_and_out_of_range() {
        assert!(matches!(aggregate_report(vec![], false), Err(Error::EmptyInput)));
        assert!(aggregate_report(vec![row("a", 1.5, 0.0, None)], false).is_err());
        let mut r = row("a", 0.5, 0.0, None);
        r.geval = Some(6);
        assert!(aggregate_report(vec![r], false).is_err());
    }

    #[test]
    fn csv_columns() {
        let rep = aggregate_report(vec![row("a", 1.0, 0.5, Some("x"))], false).unwrap();
        assert_eq!(rep.to_csv(), "query_id,rouge_l,bleu_4,geval,category\na,1,0.5,,x\n");
    }
}
