//! Per-episode results and the aggregate metrics report.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Cell;
use crate::sim::episode::Mode;
use crate::stats::clopper_pearson;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Found,
    FalsePositive,
    TerminatedNotFound,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetResult {
    pub index: usize,
    pub query: String,
    pub goal_id: String,
    pub outcome: Outcome,
    pub steps: usize,
    pub path_length_m: f64,
    pub final_cell: Cell,
    pub validations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub episode_id: String,
    pub mode: Mode,
    pub pipeline: String,
    pub seed: u64,
    pub config_fingerprint: String,
    pub total_targets: usize,
    /// One entry per attempted target, in order.
    pub outcomes: Vec<TargetResult>,
    /// Set when the episode was aborted by an internal error.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl EpisodeResult {
    pub fn found(&self) -> usize {
        self.count(Outcome::Found)
    }

    pub fn attempted(&self) -> usize {
        self.outcomes.len()
    }

    pub fn count(&self, o: Outcome) -> usize {
        self.outcomes.iter().filter(|t| t.outcome == o).count()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invariant(format!("{}: {m}", self.episode_id)));
        if self.total_targets == 0 || self.outcomes.len() > self.total_targets {
            return bad(format!("{} outcomes for {} targets", self.outcomes.len(), self.total_targets));
        }
        if self.mode == Mode::Multion {
            if let Some(i) = self.outcomes.iter().position(|t| t.outcome != Outcome::Found) {
                if i + 1 != self.outcomes.len() {
                    return bad("multion episode continued after a miss".into());
                }
            }
        }
        Ok(())
    }
}

/// A ratio with its exact counts and 95% Clopper-Pearson interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub value: f64,
    pub numerator: u64,
    pub denominator: u64,
    pub ci95: [f64; 2],
}

impl Rate {
    pub fn new(numerator: u64, denominator: u64) -> Self {
        let value = if denominator == 0 {
            0.0
        } else {
            numerator as f64 / denominator as f64
        };
        let (lo, hi) = clopper_pearson(numerator, denominator, 0.95);
        Self {
            value,
            numerator,
            denominator,
            ci95: [lo, hi],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub episodes: usize,
    /// Episodes with every target found.
    pub sr: Rate,
    /// Mean fraction of targets found per episode; counts are found over
    /// all targets.
    pub pr: Rate,
    /// Found over attempted targets.
    pub srat: Rate,
    /// Wrong FOUND calls over attempted targets.
    pub fp: Rate,
    /// Searches ended without FOUND over attempted targets.
    pub tnf: Rate,
    pub budget_exhausted: u64,
    pub aborted_episodes: u64,
}

/// Headline numbers of a report, without counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub srat: f64,
    pub pr: f64,
    pub sr: f64,
    pub fp: f64,
    pub tnf: f64,
}

impl ReportRow {
    pub const HEADER: &'static str = "SRAT    Pr      SR      FP      TNF";

    pub fn format(&self) -> String {
        format!(
            "{:<8.2}{:<8.2}{:<8.2}{:<8.2}{:.2}",
            self.srat, self.pr, self.sr, self.fp, self.tnf
        )
    }

    /// Inverse of [`ReportRow::format`].
    pub fn parse(line: &str) -> Result<Self> {
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| Error::Argument(format!("bad report cell {t:?}: {e}"))))
            .collect::<Result<_>>()?;
        let [srat, pr, sr, fp, tnf] = v[..] else {
            return Err(Error::Argument(format!("expected 5 columns, got {}", v.len())));
        };
        Ok(Self { srat, pr, sr, fp, tnf })
    }
}

/// Aggregates episode results. Order of `results` does not matter.
pub fn aggregate(results: &[EpisodeResult]) -> Result<MetricsReport> {
    if results.is_empty() {
        return Err(Error::Argument("cannot aggregate zero episodes".into()));
    }
    let mut sr = 0;
    let mut found = 0;
    let mut total = 0;
    let mut attempted = 0;
    let mut fp = 0;
    let mut tnf = 0;
    let mut budget = 0;
    let mut aborted = 0;
    let mut pr_sum = 0.0;
    for r in results {
        let f = r.found();
        if f == r.total_targets {
            sr += 1;
        }
        pr_sum += f as f64 / r.total_targets as f64;
        found += f;
        total += r.total_targets;
        attempted += r.attempted();
        fp += r.count(Outcome::FalsePositive);
        tnf += r.count(Outcome::TerminatedNotFound);
        budget += r.count(Outcome::BudgetExhausted);
        aborted += usize::from(r.error.is_some());
    }
    let n = results.len();
    let mut pr = Rate::new(found as u64, total as u64);
    pr.value = pr_sum / n as f64;
    Ok(MetricsReport {
        episodes: n,
        sr: Rate::new(sr as u64, n as u64),
        pr,
        srat: Rate::new(found as u64, attempted as u64),
        fp: Rate::new(fp as u64, attempted as u64),
        tnf: Rate::new(tnf as u64, attempted as u64),
        budget_exhausted: budget as u64,
        aborted_episodes: aborted as u64,
    })
}

impl MetricsReport {
    pub fn row(&self) -> ReportRow {
        ReportRow {
            srat: self.srat.value,
            pr: self.pr.value,
            sr: self.sr.value,
            fp: self.fp.value,
            tnf: self.tnf.value,
        }
    }

    /// Human-readable table with counts and intervals.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "episodes: {}", self.episodes);
        let _ = writeln!(s, "{:<6}{:>8}{:>12}   95% CI", "metric", "value", "count");
        for (name, r) in [
            ("SR", &self.sr),
            ("Pr", &self.pr),
            ("SRAT", &self.srat),
            ("FP", &self.fp),
            ("TNF", &self.tnf),
        ] {
            let _ = writeln!(
                s,
                "{:<6}{:>8.3}{:>12}   [{:.3}, {:.3}]",
                name,
                r.value,
                format!("{}/{}", r.numerator, r.denominator),
                r.ci95[0],
                r.ci95[1]
            );
        }
        let _ = writeln!(s, "budget exhausted: {}", self.budget_exhausted);
        if self.aborted_episodes > 0 {
            let _ = writeln!(s, "aborted episodes: {}", self.aborted_episodes);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(i: usize, o: Outcome) -> TargetResult {
        TargetResult {
            index: i,
            query: format!("q{i}"),
            goal_id: format!("g{i}"),
            outcome: o,
            steps: 10,
            path_length_m: 1.0,
            final_cell: Cell::new(0, 0),
            validations: 0,
        }
    }

    fn ep(id: &str, mode: Mode, outcomes: &[Outcome]) -> EpisodeResult {
        EpisodeResult {
            episode_id: id.into(),
            mode,
            pipeline: "divnav".into(),
            seed: 0,
            config_fingerprint: String::new(),
            total_targets: 3,
            outcomes: outcomes.iter().enumerate().map(|(i, &o)| t(i, o)).collect(),
            error: None,
        }
    }

    #[test]
    fn two_of_three() {
        use Outcome::*;
        let r = aggregate(&[ep("a", Mode::Multion, &[Found, Found, FalsePositive])]).unwrap();
        assert!((r.pr.value - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.sr.value, 0.0);
        assert_eq!((r.fp.numerator, r.fp.denominator), (1, 3));
    }

    #[test]
    fn empty_is_an_error() {
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn multion_rule() {
        use Outcome::*;
        assert!(ep("a", Mode::Multion, &[FalsePositive, Found]).validate().is_err());
        assert!(ep("a", Mode::Realworld, &[FalsePositive, Found]).validate().is_ok());
        assert!(ep("a", Mode::Multion, &[Found, TerminatedNotFound]).validate().is_ok());
    }

    #[test]
    fn row_round_trip() {
        let row = ReportRow {
            srat: 0.30,
            pr: 0.14,
            sr: 0.04,
            fp: 0.44,
            tnf: 0.25,
        };
        assert_eq!(ReportRow::parse(&row.format()).unwrap(), row);
        let j = serde_json::to_string(&row).unwrap();
        assert_eq!(serde_json::from_str::<ReportRow>(&j).unwrap(), row);
    }
}
