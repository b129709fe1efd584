//! Evaluation metrics: accuracy tables partitioned by problem difficulty,
//! pass@n, self-consistency voting, the iteration-accuracy area under the
//! curve, and the bargaining profit/utility/reward family.
//!
//! Everything here is a pure function over immutable inputs. Outcome logs
//! are line-delimited JSON; reports render to aligned text and CSV.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("a curve needs at least 2 points")]
    TooFewPoints,
    #[error("iteration curve must cover a contiguous 1..N range")]
    NonContiguous,
    #[error("seller and buyer targets coincide")]
    DegenerateRange,
    #[error("empty input")]
    EmptyInput,
    #[error("successful deal is missing its price")]
    MissingPrice,
}

/// One evaluated search run, as persisted to `outcomes.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub instance_id: String,
    pub method: String,
    pub correct: bool,
    /// Minimum plan length of the instance; the difficulty partition key.
    pub steps_required: Option<u32>,
    pub iterations_used: u32,
    pub wall_time_ms: u64,
}

/// Accuracy as a function of search iteration count, over 1..N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationCurve {
    points: BTreeMap<u32, f64>,
}

impl IterationCurve {
    /// Accepts only a contiguous domain starting at iteration 1.
    pub fn new(points: BTreeMap<u32, f64>) -> Result<Self, MetricError> {
        let n = points.len() as u32;
        let contiguous = points.keys().copied().eq(1..=n);
        if !contiguous {
            return Err(MetricError::NonContiguous);
        }
        Ok(Self { points })
    }

    pub fn from_accuracies(accuracies: &[f64]) -> Result<Self, MetricError> {
        Self::new(
            accuracies
                .iter()
                .enumerate()
                .map(|(i, &a)| (i as u32 + 1, a))
                .collect(),
        )
    }

    pub fn points(&self) -> &BTreeMap<u32, f64> {
        &self.points
    }
}

/// One bargaining episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DealRecord {
    pub success: bool,
    /// Final deal price; present whenever `success` is true.
    pub price: Option<f64>,
    pub seller_target: f64,
    pub buyer_target: f64,
}

/// True when any of the first `n` samples is correct.
pub fn pass_at_n(samples: &[bool], n: usize) -> Result<bool, MetricError> {
    if samples.len() < n {
        return Err(MetricError::InsufficientSamples {
            needed: n,
            got: samples.len(),
        });
    }
    Ok(samples[..n].iter().any(|&s| s))
}

/// Canonical comparison key for a free-text answer: numeric answers
/// compare by value (currency signs and commas stripped), everything else
/// by trimmed text.
fn canonical_answer(answer: &str) -> String {
    let stripped = answer.trim().trim_start_matches('$').replace(',', "");
    match stripped.parse::<f64>() {
        // Ryu formatting gives one canonical rendering per value, so
        // "8", "8.0" and "8.00" all map to the same key.
        Ok(v) => format!("num:{v}"),
        Err(_) => format!("txt:{}", answer.trim()),
    }
}

/// Majority vote over the first `n` answers. Ties, including the
/// all-distinct case, go to the earliest answer; the winner is reported
/// in its first-seen spelling.
pub fn self_consistency_vote(answers: &[String], n: usize) -> Result<String, MetricError> {
    if answers.is_empty() || answers.len() < n || n == 0 {
        return Err(MetricError::InsufficientSamples {
            needed: n.max(1),
            got: answers.len(),
        });
    }
    let mut counts: Vec<(String, usize, usize)> = Vec::new(); // key, count, first index
    for (i, answer) in answers[..n].iter().enumerate() {
        let key = canonical_answer(answer);
        match counts.iter_mut().find(|(k, _, _)| *k == key) {
            Some((_, c, _)) => *c += 1,
            None => counts.push((key, 1, i)),
        }
    }
    let (_, _, first) = counts
        .iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.2.cmp(&a.2)))
        .unwrap();
    Ok(answers[*first].clone())
}

/// Trapezoidal area under the curve over iterations 1..N, normalized by
/// N−1 so a constant curve returns its constant.
pub fn auc(curve: &IterationCurve) -> Result<f64, MetricError> {
    let values: Vec<f64> = curve.points.values().copied().collect();
    if values.len() < 2 {
        return Err(MetricError::TooFewPoints);
    }
    let area: f64 = values.windows(2).map(|w| (w[0] + w[1]) / 2.0).sum();
    Ok(area / (values.len() - 1) as f64)
}

/// Normalized deal price: −1 at the buyer's target, +1 at the seller's.
pub fn profit(p: f64, p_s: f64, p_b: f64) -> Result<f64, MetricError> {
    if p_s == p_b {
        return Err(MetricError::DegenerateRange);
    }
    Ok((2.0 * p - p_s - p_b) / (p_s - p_b))
}

fn deal_profit(deal: &DealRecord) -> Result<f64, MetricError> {
    let price = deal.price.ok_or(MetricError::MissingPrice)?;
    profit(price, deal.seller_target, deal.buyer_target)
}

/// Average profit over all deals, counting an unsuccessful deal as 0.
pub fn utility(deals: &[DealRecord]) -> Result<f64, MetricError> {
    if deals.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let total: f64 = deals
        .iter()
        .map(|d| if d.success { deal_profit(d) } else { Ok(0.0) })
        .sum::<Result<f64, _>>()?;
    Ok(total / deals.len() as f64)
}

/// Fraction of successful deals.
pub fn agreement_rate(deals: &[DealRecord]) -> Result<f64, MetricError> {
    if deals.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    Ok(deals.iter().filter(|d| d.success).count() as f64 / deals.len() as f64)
}

/// Average profit over successful deals only; absent when none succeeded.
pub fn mean_profit(deals: &[DealRecord]) -> Result<Option<f64>, MetricError> {
    if deals.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let successes: Vec<&DealRecord> = deals.iter().filter(|d| d.success).collect();
    if successes.is_empty() {
        return Ok(None);
    }
    let total: f64 = successes
        .iter()
        .map(|d| deal_profit(d))
        .sum::<Result<f64, _>>()?;
    Ok(Some(total / successes.len() as f64))
}

/// Profit on success, minus the penalty on failure. A larger `l_penalty`
/// therefore discourages walking away; the preset values are 0
/// (encourage profit) and 1 (encourage agreement).
pub fn reward(deal: &DealRecord, l_penalty: f64) -> Result<f64, MetricError> {
    if deal.success {
        deal_profit(deal)
    } else {
        Ok(-l_penalty)
    }
}

/// Accuracy per difficulty bucket per method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub methods: Vec<String>,
    /// Buckets present in the data, ascending; `None` collects outcomes
    /// without a step count.
    pub buckets: Vec<Option<u32>>,
    /// (method, bucket) -> (correct, total).
    pub cells: BTreeMap<String, BTreeMap<String, (usize, usize)>>,
    /// Baseline and guided method tags for the relative-improvement
    /// annotation.
    pub compare: Option<(String, String)>,
}

fn bucket_key(bucket: &Option<u32>) -> String {
    bucket.map_or_else(|| "-".to_string(), |s| s.to_string())
}

/// Buckets outcomes by method and minimum plan length.
pub fn step_partitioned_report(outcomes: &[RunOutcome]) -> Report {
    let mut methods: Vec<String> = outcomes.iter().map(|o| o.method.clone()).collect();
    methods.sort();
    methods.dedup();
    let mut buckets: Vec<Option<u32>> = outcomes.iter().map(|o| o.steps_required).collect();
    buckets.sort();
    buckets.dedup();
    let mut cells: BTreeMap<String, BTreeMap<String, (usize, usize)>> = BTreeMap::new();
    for outcome in outcomes {
        let cell = cells
            .entry(outcome.method.clone())
            .or_default()
            .entry(bucket_key(&outcome.steps_required))
            .or_insert((0, 0));
        cell.1 += 1;
        if outcome.correct {
            cell.0 += 1;
        }
    }
    Report {
        methods,
        buckets,
        cells,
        compare: None,
    }
}

impl Report {
    pub fn with_compare(mut self, baseline: &str, guided: &str) -> Self {
        self.compare = Some((baseline.to_string(), guided.to_string()));
        self
    }

    fn accuracy(&self, method: &str, bucket: &Option<u32>) -> Option<f64> {
        self.cells
            .get(method)
            .and_then(|row| row.get(&bucket_key(bucket)))
            .map(|&(correct, total)| correct as f64 / total as f64)
    }

    fn cell_text(&self, method: &str, bucket: &Option<u32>) -> String {
        let Some(acc) = self.accuracy(method, bucket) else {
            return "-".to_string();
        };
        let mut text = format!("{:.1}%", acc * 100.0);
        if let Some((baseline, guided)) = &self.compare {
            if method == guided {
                if let Some(base) = self.accuracy(baseline, bucket) {
                    if base > 0.0 {
                        let rel = (acc - base) / base * 100.0;
                        let _ = write!(text, " ({rel:+.1}%)");
                    }
                }
            }
        }
        text
    }

    /// Aligned-text table: one row per step bucket plus an overall row.
    pub fn render_text(&self) -> String {
        let mut rows: Vec<Vec<String>> = Vec::new();
        let mut header = vec!["steps".to_string()];
        header.extend(self.methods.iter().cloned());
        rows.push(header);
        for bucket in &self.buckets {
            let mut row = vec![bucket_key(bucket)];
            for method in &self.methods {
                row.push(self.cell_text(method, bucket));
            }
            rows.push(row);
        }
        let mut all_row = vec!["all".to_string()];
        for method in &self.methods {
            let totals = self.cells.get(method).map(|row| {
                row.values()
                    .fold((0usize, 0usize), |acc, &(c, t)| (acc.0 + c, acc.1 + t))
            });
            all_row.push(match totals {
                Some((c, t)) if t > 0 => format!("{:.1}%", c as f64 / t as f64 * 100.0),
                _ => "-".to_string(),
            });
        }
        rows.push(all_row);

        let widths: Vec<usize> = (0..rows[0].len())
            .map(|col| rows.iter().map(|r| r[col].len()).max().unwrap())
            .collect();
        let mut out = String::new();
        for row in rows {
            let line: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(i, cell)| format!("{cell:<width$}", width = widths[i]))
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        out
    }

    pub fn render_csv(&self) -> String {
        let mut out = String::from("method,steps,correct,total,accuracy\n");
        for (method, row) in &self.cells {
            for (bucket, &(correct, total)) in row {
                let _ = writeln!(
                    out,
                    "{method},{bucket},{correct},{total},{:.4}",
                    correct as f64 / total as f64
                );
            }
        }
        out
    }
}

/// Appends outcomes to a line-delimited JSON log.
pub fn write_outcomes(path: &Path, outcomes: &[RunOutcome]) -> std::io::Result<()> {
    use std::io::Write;
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    for outcome in outcomes {
        writeln!(file, "{}", serde_json::to_string(outcome)?)?;
    }
    Ok(())
}

pub fn read_outcomes(path: &Path) -> std::io::Result<Vec<RunOutcome>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Into::into))
        .collect()
}
