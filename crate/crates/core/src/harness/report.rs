//! Per-iteration records and their CSV form.

use std::fmt::Write as _;

use crate::strategies::{SelectionResult, StrategyId};

use super::config::ALConfig;
use super::HarnessError;

pub const REPORT_COLUMNS: &str = "repetition,iteration,strategy,labeled_count,test_accuracy,wall_ms";
pub const DIAGNOSTIC_COLUMNS: &str =
    "repetition,iteration,strategy,selected,mean_max_posterior,mean_margin,mean_divergence,mean_centroid_distance";

/// Averages of the scores of the instances picked at one step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SelectionSummary {
    pub selected: usize,
    pub mean_max_posterior: Option<f64>,
    pub mean_margin: Option<f64>,
    pub mean_divergence: Option<f64>,
    pub mean_centroid_distance: Option<f64>,
}

impl SelectionSummary {
    pub fn of(result: &SelectionResult) -> Self {
        Self {
            selected: result.chosen.len(),
            mean_max_posterior: result.chosen_mean(|d| d.max_posterior),
            mean_margin: result.chosen_mean(|d| d.margin),
            mean_divergence: result.chosen_mean(|d| d.mean_divergence),
            mean_centroid_distance: result.chosen_mean(|d| d.centroid_distance),
        }
    }

    fn fields(&self) -> String {
        let f = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        format!(
            "{},{},{},{},{}",
            self.selected,
            f(self.mean_max_posterior),
            f(self.mean_margin),
            f(self.mean_divergence),
            f(self.mean_centroid_distance)
        )
    }

    fn parse_fields(fields: &[&str]) -> Result<Self, HarnessError> {
        let f = |s: &str| -> Result<Option<f64>, HarnessError> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad_row(s))
            }
        };
        match fields {
            [n, a, b, c, d] => Ok(Self {
                selected: n.parse().map_err(|_| bad_row(n))?,
                mean_max_posterior: f(a)?,
                mean_margin: f(b)?,
                mean_divergence: f(c)?,
                mean_centroid_distance: f(d)?,
            }),
            _ => Err(bad_row(&fields.join(","))),
        }
    }
}

/// Accuracy of the model trained at one step. `selection` describes the
/// batch chosen right after; the final step has none.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub repetition: usize,
    pub iteration: usize,
    pub strategy: StrategyId,
    pub labeled_count: usize,
    pub test_accuracy: f64,
    pub wall_ms: u64,
    pub selection: Option<SelectionSummary>,
}

fn bad_row(row: &str) -> HarnessError {
    HarnessError::Report(format!("malformed row `{row}`"))
}

impl IterationRecord {
    pub fn report_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.repetition, self.iteration, self.strategy, self.labeled_count, self.test_accuracy, self.wall_ms
        )
    }

    pub fn parse_report_line(line: &str) -> Result<Self, HarnessError> {
        let fields: Vec<&str> = line.split(',').collect();
        let [rep, iter, strategy, labeled, acc, wall] = fields[..] else {
            return Err(bad_row(line));
        };
        Ok(Self {
            repetition: rep.parse().map_err(|_| bad_row(line))?,
            iteration: iter.parse().map_err(|_| bad_row(line))?,
            strategy: strategy.parse().map_err(|_| bad_row(line))?,
            labeled_count: labeled.parse().map_err(|_| bad_row(line))?,
            test_accuracy: acc.parse().map_err(|_| bad_row(line))?,
            wall_ms: wall.parse().map_err(|_| bad_row(line))?,
            selection: None,
        })
    }

    /// Report fields followed by the selection summary, `-` when absent.
    pub(crate) fn full_line(&self) -> String {
        match &self.selection {
            Some(s) => format!("{},{}", self.report_line(), s.fields()),
            None => format!("{},-", self.report_line()),
        }
    }

    pub(crate) fn parse_full_line(line: &str) -> Result<Self, HarnessError> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 7 {
            return Err(bad_row(line));
        }
        let mut record = Self::parse_report_line(&fields[..6].join(","))?;
        record.selection = match &fields[6..] {
            ["-"] => None,
            rest => Some(SelectionSummary::parse_fields(rest)?),
        };
        Ok(record)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub config: ALConfig,
    /// Ordered by strategy (config order), repetition, iteration.
    pub records: Vec<IterationRecord>,
}

impl RunReport {
    pub fn new(config: ALConfig, mut records: Vec<IterationRecord>) -> Self {
        let order = |s: StrategyId| config.strategies.iter().position(|&x| x == s);
        records.sort_by_key(|r| (order(r.strategy), r.repetition, r.iteration));
        Self { config, records }
    }

    pub fn records_for(&self, strategy: StrategyId) -> impl Iterator<Item = &IterationRecord> {
        self.records.iter().filter(move |r| r.strategy == strategy)
    }

    /// Mean test accuracy across repetitions for each iteration.
    pub fn mean_curve(&self, strategy: StrategyId) -> Vec<f64> {
        let mut sums = vec![(0.0, 0usize); self.config.p + 1];
        for r in self.records_for(strategy) {
            if let Some(slot) = sums.get_mut(r.iteration) {
                slot.0 += r.test_accuracy;
                slot.1 += 1;
            }
        }
        sums.into_iter()
            .map(|(s, n)| if n == 0 { f64::NAN } else { s / n as f64 })
            .collect()
    }

    fn header(&self) -> String {
        let cfg = &self.config;
        let mut out = String::from("# alexbench report v1\n");
        for (k, v) in cfg.echo() {
            let _ = writeln!(out, "# {k}={v}");
        }
        let _ = writeln!(out, "# seed_set_size={}", cfg.seed_size());
        let _ = writeln!(out, "# step_batch={}", cfg.batch_size());
        let _ = writeln!(out, "# candidates={}", cfg.candidate_size());
        let _ = writeln!(out, "# final_labeled_constant_batch={}", cfg.final_labeled());
        let _ = writeln!(out, "# final_labeled_p_times_seed={}", cfg.p * cfg.seed_size());
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header();
        out.push_str(REPORT_COLUMNS);
        out.push('\n');
        for r in &self.records {
            out.push_str(&r.report_line());
            out.push('\n');
        }
        out
    }

    pub fn diagnostics_csv(&self) -> String {
        let mut out = self.header();
        out.push_str(DIAGNOSTIC_COLUMNS);
        out.push('\n');
        for r in &self.records {
            if let Some(s) = &r.selection {
                let _ = writeln!(out, "{},{},{},{}", r.repetition, r.iteration, r.strategy, s.fields());
            }
        }
        out
    }

    /// Reads a report written by [`RunReport::to_csv`]. The config is
    /// rebuilt from the header echo; selection summaries are not part of
    /// the file.
    pub fn parse_csv(text: &str) -> Result<Self, HarnessError> {
        let mut config = ALConfig::default();
        let mut records = Vec::new();
        let mut seen_columns = false;
        for line in text.lines() {
            if let Some(comment) = line.strip_prefix("# ") {
                if let Some((k, v)) = comment.split_once('=') {
                    if super::config::KEYS.contains(&k) {
                        config.set(k, v)?;
                    }
                }
            } else if line == REPORT_COLUMNS {
                seen_columns = true;
            } else if !line.is_empty() && !line.starts_with('#') {
                if !seen_columns {
                    return Err(HarnessError::Report("missing column header".into()));
                }
                records.push(IterationRecord::parse_report_line(line)?);
            }
        }
        if !seen_columns {
            return Err(HarnessError::Report("missing column header".into()));
        }
        Ok(Self { config, records })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(iteration: usize, acc: f64) -> IterationRecord {
        IterationRecord {
            repetition: 1,
            iteration,
            strategy: StrategyId::Margin,
            labeled_count: 10 + iteration,
            test_accuracy: acc,
            wall_ms: 0,
            selection: None,
        }
    }

    #[test]
    fn csv_round_trip() {
        let cfg = ALConfig {
            strategies: vec![StrategyId::Margin],
            p: 1,
            ..Default::default()
        };
        let report = RunReport::new(cfg, vec![record(1, 0.1 + 0.2), record(0, 1.0 / 3.0)]);
        assert_eq!(report.records[0].iteration, 0);
        let text = report.to_csv();
        assert!(text.contains("# final_labeled_constant_batch=200\n"));
        assert!(text.contains("# final_labeled_p_times_seed=100\n"));
        let back = RunReport::parse_csv(&text).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn full_line_round_trip() {
        let mut r = record(3, 0.75);
        assert_eq!(IterationRecord::parse_full_line(&r.full_line()).unwrap(), r);
        r.selection = Some(SelectionSummary {
            selected: 100,
            mean_max_posterior: Some(0.4),
            mean_divergence: Some(1.25),
            ..Default::default()
        });
        assert_eq!(IterationRecord::parse_full_line(&r.full_line()).unwrap(), r);
    }

    #[test]
    fn malformed_rows() {
        assert!(IterationRecord::parse_report_line("0,0,rs,10").is_err());
        assert!(IterationRecord::parse_report_line("0,0,xx,10,0.5,0").is_err());
        assert!(RunReport::parse_csv("0,0,rs,10,0.5,0\n").is_err());
    }
}
