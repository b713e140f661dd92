//! Arbitration classification metrics, episode driving metrics and report
//! rendering.
//!
//! Positive class: the human plan is correct. Prediction: the arbiter
//! selected the human plan. An alternative plan counts as not selected.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arbitration::Choice;
use crate::sim::EpisodeResult;

/// Score multiplier applied to an episode that collided.
pub const COLLISION_PENALTY: f64 = 0.6;

/// Report column: header and accessor.
type Column<M, T> = (&'static str, fn(&M) -> T);

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("driving metrics need at least one episode")]
    EmptyResultSet,
    #[error("unknown report format `{0}` (expected json, csv or markdown)")]
    UnknownFormat(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialLabel {
    Tp,
    Fp,
    Tn,
    Fn,
}

pub fn label_trial(human_correct: bool, choice: Choice) -> TrialLabel {
    match (human_correct, choice == Choice::Human) {
        (true, true) => TrialLabel::Tp,
        (false, true) => TrialLabel::Fp,
        (true, false) => TrialLabel::Fn,
        (false, false) => TrialLabel::Tn,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn add(&mut self, label: TrialLabel) {
        match label {
            TrialLabel::Tp => self.tp += 1,
            TrialLabel::Fp => self.fp += 1,
            TrialLabel::Tn => self.tn += 1,
            TrialLabel::Fn => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn merge(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }
}

impl FromIterator<TrialLabel> for ConfusionCounts {
    fn from_iter<I: IntoIterator<Item = TrialLabel>>(iter: I) -> Self {
        let mut c = ConfusionCounts::default();
        for label in iter {
            c.add(label);
        }
        c
    }
}

/// Percentages in `[0, 100]`; `None` where the denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

pub fn classification_metrics(c: &ConfusionCounts) -> ClassificationMetrics {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = match (precision, recall) {
        (Some(_), Some(_)) => ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_),
        _ => None,
    };
    ClassificationMetrics {
        accuracy: ratio(c.tp + c.tn, c.total()),
        precision,
        recall,
        f1,
    }
}

/// Fractions in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrivingMetrics {
    pub collision_rate: f64,
    pub route_completion_rate: f64,
    pub average_score: f64,
}

pub fn episode_score(collided: bool, route_completion: f64) -> f64 {
    if collided {
        route_completion * COLLISION_PENALTY
    } else {
        route_completion
    }
}

/// Aggregates `(collided, route_completion)` outcomes.
pub fn driving_metrics_from<I>(outcomes: I) -> Result<DrivingMetrics, MetricsError>
where
    I: IntoIterator<Item = (bool, f64)>,
{
    let (mut n, mut collisions, mut completion, mut score) = (0usize, 0usize, 0.0, 0.0);
    for (collided, c) in outcomes {
        n += 1;
        collisions += collided as usize;
        completion += c;
        score += episode_score(collided, c);
    }
    if n == 0 {
        return Err(MetricsError::EmptyResultSet);
    }
    let n = n as f64;
    Ok(DrivingMetrics {
        collision_rate: collisions as f64 / n,
        route_completion_rate: completion / n,
        average_score: score / n,
    })
}

pub fn driving_metrics(results: &[EpisodeResult]) -> Result<DrivingMetrics, MetricsError> {
    driving_metrics_from(results.iter().map(|r| (r.collided, r.route_completion)))
}

pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(MetricsError::UnknownFormat(other.to_string())),
        }
    }
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
            ReportFormat::Markdown => "md",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationRow {
    pub reliability: f64,
    pub arbiter: String,
    pub counts: ConfusionCounts,
    pub metrics: ClassificationMetrics,
}

impl ClassificationRow {
    pub fn new(reliability: f64, arbiter: impl Into<String>, counts: ConfusionCounts) -> Self {
        Self {
            reliability,
            arbiter: arbiter.into(),
            metrics: classification_metrics(&counts),
            counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrivingRow {
    pub system: String,
    pub episodes: usize,
    pub metrics: DrivingMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Report {
    Classification { rows: Vec<ClassificationRow> },
    Driving { rows: Vec<DrivingRow> },
}

/// Column heading for an arbiter name.
pub fn arbiter_heading(name: &str) -> String {
    match name {
        "naive" => "Naive".into(),
        "decision-tree" => "D. Tree".into(),
        "stub-vlm" => "VLM (stub)".into(),
        "vlm" => "VLM".into(),
        "oracle" => "Oracle".into(),
        other => other.into(),
    }
}

fn pct(x: Option<f64>) -> String {
    x.map(|v| format!("{:.2}", round2(v))).unwrap_or_default()
}

fn pct_md(x: Option<f64>) -> String {
    x.map(|v| format!("{:.2}", round2(v))).unwrap_or_else(|| "n/a".into())
}

fn unique<'a>(items: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut out: Vec<&str> = Vec::new();
    for s in items {
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

fn json_value(report: &Report) -> serde_json::Value {
    let round = |x: Option<f64>| x.map(round2);
    match report {
        Report::Classification { rows } => serde_json::json!({
            "kind": "classification",
            "rows": rows.iter().map(|r| serde_json::json!({
                "reliability": r.reliability,
                "arbiter": r.arbiter,
                "trials": r.counts.total(),
                "counts": r.counts,
                "accuracy": round(r.metrics.accuracy),
                "precision": round(r.metrics.precision),
                "recall": round(r.metrics.recall),
                "f1": round(r.metrics.f1),
            })).collect::<Vec<_>>(),
        }),
        Report::Driving { rows } => serde_json::json!({
            "kind": "driving",
            "rows": rows.iter().map(|r| serde_json::json!({
                "system": r.system,
                "episodes": r.episodes,
                "collision_rate": round2(100.0 * r.metrics.collision_rate),
                "route_completion_rate": round2(100.0 * r.metrics.route_completion_rate),
                "average_score": round2(100.0 * r.metrics.average_score),
            })).collect::<Vec<_>>(),
        }),
    }
}

/// Renders `report`. Percentages carry two decimals; JSON keys are sorted.
pub fn emit_report(report: &Report, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            // serde_json's default map is ordered by key
            let mut s = serde_json::to_string_pretty(&json_value(report)).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Csv => emit_csv(report),
        ReportFormat::Markdown => emit_markdown(report),
    }
}

fn emit_csv(report: &Report) -> String {
    let mut out = String::new();
    match report {
        Report::Classification { rows } => {
            out.push_str("reliability,arbiter,trials,tp,fp,tn,fn,accuracy,precision,recall,f1\n");
            for r in rows {
                let m = &r.metrics;
                let c = &r.counts;
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    r.reliability,
                    r.arbiter,
                    c.total(),
                    c.tp,
                    c.fp,
                    c.tn,
                    c.fn_,
                    pct(m.accuracy),
                    pct(m.precision),
                    pct(m.recall),
                    pct(m.f1)
                );
            }
        }
        Report::Driving { rows } => {
            out.push_str("system,episodes,collision_rate,route_completion_rate,average_score\n");
            for r in rows {
                let m = &r.metrics;
                let _ = writeln!(
                    out,
                    "{},{},{:.2},{:.2},{:.2}",
                    r.system,
                    r.episodes,
                    round2(100.0 * m.collision_rate),
                    round2(100.0 * m.route_completion_rate),
                    round2(100.0 * m.average_score)
                );
            }
        }
    }
    out
}

fn emit_markdown(report: &Report) -> String {
    let mut out = String::new();
    match report {
        Report::Classification { rows } => {
            let arbiters = unique(rows.iter().map(|r| r.arbiter.as_str()));
            let mut levels: Vec<f64> = Vec::new();
            for r in rows {
                if !levels.contains(&r.reliability) {
                    levels.push(r.reliability);
                }
            }
            let metrics: [Column<ClassificationMetrics, Option<f64>>; 4] = [
                ("Accuracy (%)", |m| m.accuracy),
                ("Precision (%)", |m| m.precision),
                ("Recall (%)", |m| m.recall),
                ("F1 (%)", |m| m.f1),
            ];
            out.push_str("| Mock human |");
            for (name, _) in &metrics {
                for a in &arbiters {
                    let _ = write!(out, " {name} {} |", arbiter_heading(a));
                }
            }
            out.push_str("\n|---|");
            out.push_str(&"---:|".repeat(metrics.len() * arbiters.len()));
            out.push('\n');
            for level in levels {
                let _ = write!(out, "| {}% |", round2(level * 100.0));
                for (_, get) in &metrics {
                    for a in &arbiters {
                        let cell = rows
                            .iter()
                            .find(|r| r.reliability == level && r.arbiter == *a)
                            .map(|r| pct_md(get(&r.metrics)))
                            .unwrap_or_else(|| "n/a".into());
                        let _ = write!(out, " {cell} |");
                    }
                }
                out.push('\n');
            }
        }
        Report::Driving { rows } => {
            out.push_str("| Metric |");
            for r in rows {
                let _ = write!(out, " {} |", r.system);
            }
            out.push_str("\n|---|");
            out.push_str(&"---:|".repeat(rows.len()));
            out.push('\n');
            let lines: [Column<DrivingMetrics, f64>; 3] = [
                ("Collision Rate (%) ↓", |m| m.collision_rate),
                ("Route Completion Rate (%) ↑", |m| m.route_completion_rate),
                ("Average Score (%) ↑", |m| m.average_score),
            ];
            for (name, get) in lines {
                let _ = write!(out, "| {name} |");
                for r in rows {
                    let _ = write!(out, " {:.2} |", round2(100.0 * get(&r.metrics)));
                }
                out.push('\n');
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn label_mapping() {
        assert_eq!(label_trial(true, Choice::Human), TrialLabel::Tp);
        assert_eq!(label_trial(false, Choice::Human), TrialLabel::Fp);
        assert_eq!(label_trial(false, Choice::Autonomy), TrialLabel::Tn);
        assert_eq!(label_trial(true, Choice::Alternative), TrialLabel::Fn);
        assert_eq!(label_trial(false, Choice::Alternative), TrialLabel::Tn);
    }

    #[test]
    fn naive_closed_form_at_three_quarters() {
        let c = ConfusionCounts {
            tp: 300,
            fp: 100,
            tn: 0,
            fn_: 0,
        };
        let m = classification_metrics(&c);
        assert_eq!(round2(m.accuracy.unwrap()), 75.0);
        assert_eq!(round2(m.precision.unwrap()), 75.0);
        assert_eq!(m.recall, Some(100.0));
        assert_eq!(round2(m.f1.unwrap()), 85.71);
    }

    #[test]
    fn absent_denominators() {
        let all_rejected = ConfusionCounts {
            tp: 0,
            fp: 0,
            tn: 5,
            fn_: 0,
        };
        let m = classification_metrics(&all_rejected);
        assert_eq!(m.accuracy, Some(100.0));
        assert_eq!((m.precision, m.recall, m.f1), (None, None, None));
        assert_eq!(classification_metrics(&ConfusionCounts::default()).accuracy, None);
    }

    #[test]
    fn driving_examples() {
        let one = driving_metrics_from([(true, 0.5)]).unwrap();
        assert_abs_diff_eq!(one.average_score, 0.3, epsilon = 1e-12);
        let two = driving_metrics_from([(false, 1.0), (true, 0.5)]).unwrap();
        assert_abs_diff_eq!(two.collision_rate, 0.5);
        assert_abs_diff_eq!(two.route_completion_rate, 0.75);
        assert_abs_diff_eq!(two.average_score, 0.65, epsilon = 1e-12);
        assert_eq!(driving_metrics_from([]), Err(MetricsError::EmptyResultSet));
        assert_eq!(driving_metrics(&[]), Err(MetricsError::EmptyResultSet));
    }

    fn sample() -> Report {
        Report::Classification {
            rows: vec![
                ClassificationRow::new(
                    0.75,
                    "naive",
                    ConfusionCounts {
                        tp: 3,
                        fp: 1,
                        tn: 0,
                        fn_: 0,
                    },
                ),
                ClassificationRow::new(
                    0.75,
                    "oracle",
                    ConfusionCounts {
                        tp: 3,
                        fp: 0,
                        tn: 1,
                        fn_: 0,
                    },
                ),
            ],
        }
    }

    #[test]
    fn csv_has_header_and_row_per_arbiter() {
        let csv = emit_report(&sample(), ReportFormat::Csv);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "0.75,naive,4,3,1,0,0,75.00,75.00,100.00,85.71");
    }

    #[test]
    fn json_keys_are_sorted_and_parse_back() {
        let json = emit_report(&sample(), ReportFormat::Json);
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        let row = v["rows"][0].as_object().unwrap();
        let keys: Vec<_> = row.keys().cloned().collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert_eq!(row["f1"], 85.71);
        assert!(json.find("\"accuracy\"").unwrap() < json.find("\"arbiter\"").unwrap());
    }

    #[test]
    fn markdown_layout() {
        let md = emit_report(&sample(), ReportFormat::Markdown);
        let lines: Vec<_> = md.lines().collect();
        assert!(lines[0].starts_with("| Mock human | Accuracy (%) Naive | Accuracy (%) Oracle |"));
        assert_eq!(
            lines[2],
            "| 75% | 75.00 | 100.00 | 75.00 | 100.00 | 100.00 | 100.00 | 85.71 | 100.00 |"
        );
        let d = Report::Driving {
            rows: vec![
                DrivingRow {
                    system: "Pure autonomy".into(),
                    episodes: 2,
                    metrics: driving_metrics_from([(true, 0.5), (false, 1.0)]).unwrap(),
                },
                DrivingRow {
                    system: "Shared autonomy".into(),
                    episodes: 2,
                    metrics: driving_metrics_from([(false, 1.0), (false, 1.0)]).unwrap(),
                },
            ],
        };
        let md = emit_report(&d, ReportFormat::Markdown);
        assert!(md.contains("| Collision Rate (%) ↓ | 50.00 | 0.00 |"));
        assert_eq!(emit_report(&d, ReportFormat::Csv).lines().count(), 3);
    }
}
