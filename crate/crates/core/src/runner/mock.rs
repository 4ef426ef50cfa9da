//! Deterministic mock model with planted position and distance effects:
//! success probability `γ·G(p1)·G(p2)·H(d)` for two-position tasks and
//! `G(p)` for edge existence.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{BackendError, ChatBackend, ChatCompletion, ChatRequest};
use crate::graph::QuestionTemplate;
use crate::prng::{self, derive_seed};
use crate::tasks::prompt::{subcount_line, FINAL_ANSWER_MARKER};
use crate::tasks::{Answer, TaskInstance, TaskKind};

/// A planted function on `[0, 1]` (positions) or on normalized distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Curve {
    Constant { value: f64 },
    /// Piecewise-linear through `(x, y)` points sorted by `x`, flat beyond
    /// the end points.
    Table { points: Vec<(f64, f64)> },
    /// `1 / (1 + x)`.
    InverseDistance,
}

impl Curve {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Curve::Constant { value } => *value,
            Curve::InverseDistance => 1.0 / (1.0 + x.max(0.0)),
            Curve::Table { points } => interpolate(points, x),
        }
    }

    pub fn validate(&self, name: &str) -> Result<(), String> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        match self {
            Curve::Constant { value } if !in_unit(*value) => Err(format!("{name}: value {value} outside [0, 1]")),
            Curve::Table { points } if points.is_empty() => Err(format!("{name}: table needs at least one point")),
            Curve::Table { points } => {
                if let Some((_, y)) = points.iter().find(|(_, y)| !in_unit(*y)) {
                    return Err(format!("{name}: table value {y} outside [0, 1]"));
                }
                if points.windows(2).any(|w| w[0].0 >= w[1].0) {
                    return Err(format!("{name}: table x values must be strictly increasing"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Piecewise-linear interpolation with constant extrapolation; exact at
/// every breakpoint.
pub fn interpolate(points: &[(f64, f64)], x: f64) -> f64 {
    let Some(&(x0, y0)) = points.first() else {
        return 0.0;
    };
    if x <= x0 {
        return y0;
    }
    for w in points.windows(2) {
        let ((xa, ya), (xb, yb)) = (w[0], w[1]);
        if x == xb {
            return yb;
        }
        if x < xb {
            return ya + (yb - ya) * (x - xa) / (xb - xa);
        }
    }
    points[points.len() - 1].1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockModel {
    pub planted_g: Curve,
    pub planted_h: Curve,
    #[serde(default = "unit")]
    pub gamma: f64,
    #[serde(default)]
    pub degeneration_rate: f64,
    #[serde(default)]
    pub seed: u64,
}

fn unit() -> f64 {
    1.0
}

/// Sentence looped by repetition-style degenerate answers.
pub const REPEATED_SENTENCE: &str = "Let me check the connections again.";
const UNSURE: &str = "I am not sure how to answer this.";

impl MockModel {
    pub fn validate(&self) -> Result<(), String> {
        self.planted_g.validate("planted_g")?;
        self.planted_h.validate("planted_h")?;
        for (name, v) in [("gamma", self.gamma), ("degeneration_rate", self.degeneration_rate)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} {v} outside [0, 1]"));
            }
        }
        Ok(())
    }

    /// Planted probability of a correct answer.
    pub fn success_probability(&self, instance: &TaskInstance) -> f64 {
        let m = &instance.measurements;
        let g = |i: usize| self.planted_g.eval(m.positions.get(i).copied().unwrap_or(0.0));
        let h = |i: usize| self.planted_h.eval(m.normalized_distances.get(i).copied().unwrap_or(0.0));
        let p = match instance.task {
            TaskKind::EdgeExistence => g(0),
            TaskKind::CommonConnection => self.gamma * g(0) * g(1) * h(0),
            TaskKind::Similarity => self.gamma * g(0) * g(2) * h(0) * h(1),
        };
        p.clamp(0.0, 1.0)
    }

    /// The mock's response text and whether it ran to the token limit.
    pub fn answer(&self, instance: &TaskInstance, max_tokens: u32) -> (String, bool) {
        let stream = derive_seed(self.seed, &["mock", &instance.id, &prng::sha256_hex(instance.prompt.full_text())]);
        let mut rng = prng::rng_from(stream);
        if rng.random::<f64>() < self.degeneration_rate {
            let cot = instance.task == TaskKind::Similarity;
            return match (rng.random_bool(0.5), cot) {
                (true, _) => (repetition(max_tokens), true),
                (false, true) => (similarity_text(instance, Style::SelfContradiction), false),
                (false, false) => (UNSURE.to_string(), false),
            };
        }
        let correct = rng.random::<f64>() < self.success_probability(instance);
        let text = match (instance.task, instance.ground_truth) {
            (TaskKind::Similarity, _) => {
                similarity_text(instance, if correct { Style::Correct } else { Style::Incorrect })
            }
            (_, Answer::YesNo(truth)) => Answer::YesNo(truth == correct).to_string(),
            (_, Answer::Count(truth)) if correct => truth.to_string(),
            (_, Answer::Count(truth)) => {
                let offset = rng.random_range(1..=3);
                let wrong = if truth >= offset && rng.random_bool(0.5) { truth - offset } else { truth + offset };
                wrong.to_string()
            }
        };
        (text, false)
    }
}

fn repetition(max_tokens: u32) -> String {
    // The sentence is 7 tokens; loop until the limit is certainly reached.
    let count = (max_tokens as usize / 7 + 1).max(12);
    vec![REPEATED_SENTENCE; count].join(" ")
}

#[derive(Clone, Copy)]
enum Style {
    Correct,
    Incorrect,
    SelfContradiction,
}

fn similarity_text(instance: &TaskInstance, style: Style) -> String {
    let nodes = &instance.provenance.nodes;
    let (i, j, k) = (nodes[0], nodes[1], nodes[2]);
    let template = instance.provenance.template.unwrap_or(QuestionTemplate::GreaterJkOverIj);
    let graph = instance.provenance.graph.generate().ok();
    let count = |a, b| {
        graph
            .as_ref()
            .and_then(|g| g.common_connections(a, b).ok())
            .map_or(0, |c| c.len())
    };
    let (mut first, mut second) = (count(i, j), count(j, k));
    let truth = template.compare(first, second);
    let verdict = match style {
        Style::Correct => truth,
        Style::SelfContradiction => !truth,
        Style::Incorrect => {
            if first != second {
                std::mem::swap(&mut first, &mut second);
            } else {
                match template {
                    QuestionTemplate::GreaterJkOverIj => second += 1,
                    QuestionTemplate::GreaterIjOverJk => first += 1,
                }
            }
            !truth
        }
    };
    let relation = match first.cmp(&second) {
        std::cmp::Ordering::Less => "less than",
        std::cmp::Ordering::Equal => "equal to",
        std::cmp::Ordering::Greater => "greater than",
    };
    format!(
        "{}.\n{}.\n{first} is {relation} {second}.\n{FINAL_ANSWER_MARKER} {}",
        subcount_line(i, j, first),
        subcount_line(j, k, second),
        Answer::YesNo(verdict)
    )
}

/// Backend wrapper that answers from a [`MockModel`].
#[derive(Debug, Clone)]
pub struct MockBackend {
    pub model: MockModel,
}

impl ChatBackend for MockBackend {
    fn complete(&self, instance: &TaskInstance, request: &ChatRequest) -> Result<ChatCompletion, BackendError> {
        let (text, truncated) = self.model.answer(instance, request.max_tokens);
        Ok(ChatCompletion {
            text,
            finish_reason: Some(if truncated { "length" } else { "stop" }.to_string()),
            usage: None,
            raw_body: None,
        })
    }

    fn kind(&self) -> &'static str {
        "mock"
    }

    fn cacheable(&self) -> bool {
        false
    }
}
