//! Accuracy curves as plain CSV: one row per record plus a mean row per
//! (strategy, iteration) with repetition `mean`.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use crate::harness::RunReport;
use crate::strategies::StrategyId;

pub const CURVE_COLUMNS: &str = "strategy,repetition,iteration,labeled_count,test_accuracy";

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub strategy: StrategyId,
    /// `None` on mean rows.
    pub repetition: Option<usize>,
    pub iteration: usize,
    pub labeled_count: usize,
    pub test_accuracy: f64,
}

pub fn curve_rows(report: &RunReport) -> Vec<CurveRow> {
    let mut rows = Vec::new();
    let mut means: BTreeMap<(usize, usize), (usize, f64, usize)> = BTreeMap::new();
    let order = |s: StrategyId| {
        report
            .config
            .strategies
            .iter()
            .position(|&x| x == s)
            .unwrap_or(usize::MAX)
    };
    for r in &report.records {
        rows.push(CurveRow {
            strategy: r.strategy,
            repetition: Some(r.repetition),
            iteration: r.iteration,
            labeled_count: r.labeled_count,
            test_accuracy: r.test_accuracy,
        });
        let slot = means
            .entry((order(r.strategy), r.iteration))
            .or_insert((r.labeled_count, 0.0, 0));
        slot.1 += r.test_accuracy;
        slot.2 += 1;
    }
    let strategy_at = |i: usize| {
        report
            .records
            .iter()
            .map(|r| r.strategy)
            .find(|&s| order(s) == i)
            .expect("strategy present in records")
    };
    for ((s, iteration), (labeled_count, sum, n)) in means {
        rows.push(CurveRow {
            strategy: strategy_at(s),
            repetition: None,
            iteration,
            labeled_count,
            test_accuracy: sum / n as f64,
        });
    }
    rows
}

pub fn curves_csv(report: &RunReport) -> String {
    let mut out = format!("{CURVE_COLUMNS}\n");
    for row in curve_rows(report) {
        let rep = row.repetition.map_or("mean".to_string(), |r| r.to_string());
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.strategy, rep, row.iteration, row.labeled_count, row.test_accuracy
        ));
    }
    out
}

pub fn export_curves(report: &RunReport, path: &Path) -> io::Result<()> {
    if report.records.is_empty() {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "report has no records"));
    }
    fs::write(path, curves_csv(report))
}

pub fn parse_curves(text: &str) -> Result<Vec<CurveRow>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(CURVE_COLUMNS) {
        return Err("missing curve header".into());
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let bad = || format!("malformed curve row `{line}`");
            let f: Vec<&str> = line.split(',').collect();
            let [s, rep, it, n, acc] = f[..] else {
                return Err(bad());
            };
            Ok(CurveRow {
                strategy: s.parse()?,
                repetition: if rep == "mean" {
                    None
                } else {
                    Some(rep.parse().map_err(|_| bad())?)
                },
                iteration: it.parse().map_err(|_| bad())?,
                labeled_count: n.parse().map_err(|_| bad())?,
                test_accuracy: acc.parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{ALConfig, IterationRecord};

    fn report(reps: usize, p: usize) -> RunReport {
        let cfg = ALConfig {
            strategies: vec![StrategyId::Random],
            p,
            repetitions: reps,
            ..Default::default()
        };
        let mut records = Vec::new();
        for rep in 0..reps {
            for it in 0..=p {
                records.push(IterationRecord {
                    repetition: rep,
                    iteration: it,
                    strategy: StrategyId::Random,
                    labeled_count: 100 * (it + 1),
                    test_accuracy: 1.0 / (3.0 + rep as f64 + it as f64 * 0.7),
                    wall_ms: 0,
                    selection: None,
                });
            }
        }
        RunReport::new(cfg, records)
    }

    #[test]
    fn row_counts() {
        let rows = curve_rows(&report(1, 10));
        assert_eq!(rows.iter().filter(|r| r.repetition.is_some()).count(), 11);
        assert_eq!(rows.iter().filter(|r| r.repetition.is_none()).count(), 11);
    }

    #[test]
    fn mean_rows_and_round_trip() {
        let rep = report(3, 4);
        let parsed = parse_curves(&curves_csv(&rep)).unwrap();
        for it in 0..=4 {
            let vals: Vec<f64> = rep.records.iter().filter(|r| r.iteration == it).map(|r| r.test_accuracy).collect();
            let mean = vals.iter().sum::<f64>() / 3.0;
            let row = parsed.iter().find(|r| r.repetition.is_none() && r.iteration == it).unwrap();
            assert!((row.test_accuracy - mean).abs() < 1e-12);
        }
        let data: Vec<f64> = parsed.iter().filter(|r| r.repetition.is_some()).map(|r| r.test_accuracy).collect();
        let original: Vec<f64> = rep.records.iter().map(|r| r.test_accuracy).collect();
        assert_eq!(data, original);
    }

    #[test]
    fn empty_report_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let empty = RunReport::new(ALConfig::default(), Vec::new());
        assert!(export_curves(&empty, &dir.path().join("c.csv")).is_err());
    }
}
