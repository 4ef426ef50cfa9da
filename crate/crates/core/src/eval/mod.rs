//! Response parsing, degenerate-answer classification and per-cell accuracy
//! with bootstrap standard deviations.

pub mod report;

use std::collections::BTreeMap;
use std::sync::OnceLock;

use rand::Rng as _;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::encoding::Encoding;
use crate::prng;
use crate::runner::ModelResponse;
use crate::tasks::{Answer, CellKey, TaskInstance, TaskKind};

pub use report::{emit_report, heatmap_svg, line_chart_svg, ReportError, REPORT_FORMAT_VERSION};

pub const DEFAULT_REPETITION_THRESHOLD: usize = 10;
pub const DEFAULT_BOOTSTRAP_RESAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degeneration {
    None,
    NoFinalAnswer,
    Repetition,
    SelfContradiction,
    FormatViolation,
}

impl Degeneration {
    pub const DEGENERATE: [Degeneration; 4] = [
        Self::NoFinalAnswer,
        Self::Repetition,
        Self::SelfContradiction,
        Self::FormatViolation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::NoFinalAnswer => "no_final_answer",
            Self::Repetition => "repetition",
            Self::SelfContradiction => "self_contradiction",
            Self::FormatViolation => "format_violation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerKind {
    YesNo,
    Integer,
    Degenerate,
}

/// `kind == Degenerate` exactly when `degeneration != None`, and `value` is
/// set exactly when the answer is not degenerate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedAnswer {
    pub kind: AnswerKind,
    pub value: Option<Answer>,
    pub degeneration: Degeneration,
    pub subcounts: Option<(u32, u32)>,
}

impl ParsedAnswer {
    fn answer(value: Answer, subcounts: Option<(u32, u32)>) -> Self {
        let kind = match value {
            Answer::YesNo(_) => AnswerKind::YesNo,
            Answer::Count(_) => AnswerKind::Integer,
        };
        Self {
            kind,
            value: Some(value),
            degeneration: Degeneration::None,
            subcounts,
        }
    }

    fn degenerate(degeneration: Degeneration, subcounts: Option<(u32, u32)>) -> Self {
        Self {
            kind: AnswerKind::Degenerate,
            value: None,
            degeneration,
            subcounts,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.degeneration != Degeneration::None
    }
}

/// Longest run of consecutive identical sentences after lowercasing and
/// whitespace normalization.
pub fn longest_repeated_run(text: &str) -> usize {
    let sentences: Vec<String> = text
        .split(['.', '!', '?', '\n'])
        .map(|s| s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase())
        .filter(|s| !s.is_empty())
        .collect();
    let mut best = 0;
    let mut run = 0;
    for (i, s) in sentences.iter().enumerate() {
        run = if i > 0 && sentences[i - 1] == *s { run + 1 } else { 1 };
        best = best.max(run);
    }
    best
}

fn final_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)final\s+answer\s*[:\-]\s*(.*)").expect("valid regex"))
}

fn subcount_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)common\s+connections?\s+between\s+node\s+(\d+)\s+and\s+node\s+(\d+)\D{0,20}?(?:is|are|:|=)\s*(\d+)")
            .expect("valid regex")
    })
}

fn yes_no_word() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(yes|no)\b").expect("valid regex"))
}

fn integer() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\d+").expect("valid regex"))
}

/// The single yes/no word in `text`, if exactly one distinct one occurs.
fn yes_no(text: &str) -> Option<bool> {
    let mut found = yes_no_word().find_iter(text).map(|m| m.as_str().eq_ignore_ascii_case("yes"));
    let first = found.next()?;
    found.all(|v| v == first).then_some(first)
}

fn single_integer(text: &str) -> Option<u32> {
    let mut found = integer().find_iter(text);
    let value = found.next()?.as_str().parse().ok()?;
    found.next().is_none().then_some(value)
}

/// First stated count for the unordered node pair `(a, b)`.
fn stated_count(text: &str, a: u32, b: u32) -> Option<u32> {
    subcount_pattern().captures_iter(text).find_map(|c| {
        let x: u32 = c[1].parse().ok()?;
        let y: u32 = c[2].parse().ok()?;
        ((x, y) == (a, b) || (x, y) == (b, a)).then(|| c[3].parse().ok()).flatten()
    })
}

/// Classifies a raw response. Precedence: repetition, then a missing final
/// answer at the token limit, then self-contradiction, then format
/// violation.
pub fn parse_answer(response: &ModelResponse, instance: &TaskInstance, repetition_threshold: usize) -> ParsedAnswer {
    parse_text(&response.raw_text, response.truncated(), instance, repetition_threshold)
}

pub fn parse_text(text: &str, truncated: bool, instance: &TaskInstance, repetition_threshold: usize) -> ParsedAnswer {
    let subcounts = match (instance.task, instance.provenance.nodes.as_slice()) {
        (TaskKind::Similarity, &[i, j, k]) => stated_count(text, i, j).zip(stated_count(text, j, k)),
        _ => None,
    };
    if longest_repeated_run(text) >= repetition_threshold {
        return ParsedAnswer::degenerate(Degeneration::Repetition, subcounts);
    }
    let marker = final_marker().captures_iter(text).last().map(|c| c[1].trim().to_string());
    let last_line = text.lines().map(str::trim).rfind(|l| !l.is_empty()).unwrap_or("");
    let missing = if truncated { Degeneration::NoFinalAnswer } else { Degeneration::FormatViolation };

    match instance.task {
        TaskKind::Similarity => {
            let Some(stated) = marker.as_deref().and_then(yes_no) else {
                return ParsedAnswer::degenerate(if marker.is_none() { missing } else { Degeneration::FormatViolation }, subcounts);
            };
            if let (Some((first, second)), Some(template)) = (subcounts, instance.provenance.template) {
                if template.compare(first as usize, second as usize) != stated {
                    return ParsedAnswer::degenerate(Degeneration::SelfContradiction, subcounts);
                }
            }
            ParsedAnswer::answer(Answer::YesNo(stated), subcounts)
        }
        TaskKind::EdgeExistence => match yes_no(marker.as_deref().unwrap_or(last_line)) {
            Some(v) => ParsedAnswer::answer(Answer::YesNo(v), None),
            None if last_line.is_empty() || truncated => ParsedAnswer::degenerate(missing, None),
            None => ParsedAnswer::degenerate(Degeneration::FormatViolation, None),
        },
        TaskKind::CommonConnection => match single_integer(marker.as_deref().unwrap_or(last_line)) {
            Some(v) => ParsedAnswer::answer(Answer::Count(v), None),
            None if last_line.is_empty() || truncated => ParsedAnswer::degenerate(missing, None),
            None => ParsedAnswer::degenerate(Degeneration::FormatViolation, None),
        },
    }
}

/// Scoring result for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub instance_id: String,
    pub task: TaskKind,
    pub encoding: Encoding,
    pub cell: CellKey,
    pub correct: bool,
    pub degeneration: Degeneration,
    pub positions: Vec<f64>,
    pub normalized_distances: Vec<f64>,
}

/// Matches instances to responses by id and parses each answer. Instances
/// whose request failed at the backend are left out and returned by id.
pub fn outcomes(
    instances: &[TaskInstance],
    responses: &[ModelResponse],
    repetition_threshold: usize,
) -> (Vec<Outcome>, Vec<String>) {
    let by_id: BTreeMap<&str, &ModelResponse> = responses.iter().map(|r| (r.instance_id.as_str(), r)).collect();
    let mut out = Vec::with_capacity(instances.len());
    let mut failed = Vec::new();
    for instance in instances {
        let Some(response) = by_id.get(instance.id.as_str()).filter(|r| r.error.is_none()) else {
            failed.push(instance.id.clone());
            continue;
        };
        let parsed = parse_answer(response, instance, repetition_threshold);
        out.push(Outcome {
            instance_id: instance.id.clone(),
            task: instance.task,
            encoding: instance.encoding,
            cell: instance.cell,
            correct: !parsed.is_degenerate() && parsed.value == Some(instance.ground_truth),
            degeneration: parsed.degeneration,
            positions: instance.measurements.positions.clone(),
            normalized_distances: instance.measurements.normalized_distances.clone(),
        });
    }
    (out, failed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCell {
    pub task: TaskKind,
    pub encoding: Encoding,
    pub cell: CellKey,
    pub n: usize,
    pub correct: usize,
    /// Percentage of non-degenerate exact matches.
    pub accuracy: f64,
    /// Population standard deviation of bootstrap accuracies, in percent.
    pub stddev: f64,
    pub degeneration_rate: f64,
    pub degenerate: BTreeMap<Degeneration, usize>,
    /// Mean normalized position of each piece of relevant information.
    pub mean_positions: Vec<f64>,
    pub mean_normalized_distances: Vec<f64>,
}

fn mean_columns(rows: &[&Outcome], pick: impl Fn(&Outcome) -> &[f64]) -> Vec<f64> {
    let width = rows.iter().map(|o| pick(o).len()).min().unwrap_or(0);
    (0..width)
        .map(|c| rows.iter().map(|o| pick(o)[c]).sum::<f64>() / rows.len() as f64)
        .collect()
}

/// Population standard deviation of `resamples` bootstrap accuracies over
/// the given correctness flags. Depends only on the multiset of flags.
pub fn bootstrap_stddev(correct: &[bool], resamples: usize, seed: u64) -> f64 {
    if correct.is_empty() || resamples == 0 {
        return 0.0;
    }
    let mut sorted = correct.to_vec();
    sorted.sort_unstable();
    let mut rng = prng::rng_from(seed);
    let n = sorted.len();
    let accs: Vec<f64> = (0..resamples)
        .map(|_| {
            let hits = (0..n).filter(|_| sorted[rng.random_range(0..n)]).count();
            100.0 * hits as f64 / n as f64
        })
        .collect();
    let mean = accs.iter().sum::<f64>() / resamples as f64;
    (accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / resamples as f64).sqrt()
}

/// Aggregates outcomes into cells keyed by (task, encoding, cell). Each
/// cell's bootstrap stream is derived from `seed` and the cell identity.
pub fn score(outcomes: &[Outcome], resamples: usize, seed: u64) -> Vec<AccuracyCell> {
    let mut groups: BTreeMap<(TaskKind, Encoding, CellKey), Vec<&Outcome>> = BTreeMap::new();
    for o in outcomes {
        groups.entry((o.task, o.encoding, o.cell)).or_default().push(o);
    }
    groups
        .into_iter()
        .map(|((task, encoding, cell), mut rows)| {
            rows.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
            let n = rows.len();
            let flags: Vec<bool> = rows.iter().map(|o| o.correct).collect();
            let correct = flags.iter().filter(|&&c| c).count();
            let mut degenerate: BTreeMap<Degeneration, usize> = Degeneration::DEGENERATE.iter().map(|&d| (d, 0)).collect();
            for o in &rows {
                if let Some(count) = degenerate.get_mut(&o.degeneration) {
                    *count += 1;
                }
            }
            let degenerate_total: usize = degenerate.values().sum();
            let cell_seed = prng::derive_seed(seed, &["bootstrap", task.as_str(), encoding.as_str(), &cell.to_string()]);
            AccuracyCell {
                task,
                encoding,
                cell,
                n,
                correct,
                accuracy: 100.0 * correct as f64 / n as f64,
                stddev: bootstrap_stddev(&flags, resamples, cell_seed),
                degeneration_rate: 100.0 * degenerate_total as f64 / n as f64,
                degenerate,
                mean_positions: mean_columns(&rows, |o| &o.positions),
                mean_normalized_distances: mean_columns(&rows, |o| &o.normalized_distances),
            }
        })
        .collect()
}
