//! Task-specific quality metrics.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, CompletionRequest, ModelBackend};
use crate::embed::tokenize;

/// A solution quality in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QualityScore(f64);

impl QualityScore {
    pub const ZERO: QualityScore = QualityScore(0.0);
    pub const ONE: QualityScore = QualityScore(1.0);

    pub fn new(value: f64) -> Option<Self> {
        (0.0..=1.0).contains(&value).then_some(QualityScore(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScoreError {
    MissingReference,
    Backend(BackendError),
    /// Judge reply did not contain a rating in `[0, 1]`.
    Malformed(String),
}

impl fmt::Display for ScoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoreError::MissingReference => f.write_str("scorer has no reference for this task"),
            ScoreError::Backend(e) => write!(f, "quality judge failed: {e}"),
            ScoreError::Malformed(m) => write!(f, "quality judge reply has no rating: {m}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ScoreError {}

impl From<BackendError> for ScoreError {
    fn from(e: BackendError) -> Self {
        ScoreError::Backend(e)
    }
}

pub trait QualityScorer {
    fn score(&self, task: &str, solution: &str) -> Result<QualityScore, ScoreError>;
}

impl<S: QualityScorer + ?Sized> QualityScorer for &S {
    fn score(&self, task: &str, solution: &str) -> Result<QualityScore, ScoreError> {
        (**self).score(task, solution)
    }
}

pub fn score_solution(
    task: &str,
    solution: &str,
    scorer: &dyn QualityScorer,
) -> Result<QualityScore, ScoreError> {
    scorer.score(task, solution)
}

fn binary(hit: bool) -> QualityScore {
    if hit {
        QualityScore::ONE
    } else {
        QualityScore::ZERO
    }
}

/// Every number that appears in `text`, in order. Thousands separators are dropped.
pub fn extract_numbers(text: &str) -> Vec<f64> {
    let mut out = Vec::new();
    let mut current = String::new();
    let flush = |current: &mut String, out: &mut Vec<f64>| {
        let s = current.trim_end_matches(['.', ',']);
        if s.chars().any(|c| c.is_ascii_digit()) {
            if let Ok(v) = s.replace(',', "").parse::<f64>() {
                out.push(v);
            }
        }
        current.clear();
    };
    let mut prev: Option<char> = None;
    for c in text.chars() {
        let starts_negative =
            c == '-' && current.is_empty() && !prev.is_some_and(|p| p.is_alphanumeric());
        if c.is_ascii_digit() || starts_negative || (!current.is_empty() && (c == '.' || c == ','))
        {
            current.push(c);
        } else {
            flush(&mut current, &mut out);
        }
        prev = Some(c);
    }
    flush(&mut current, &mut out);
    out
}

fn normalize_text(s: &str) -> String {
    let words: Vec<String> = tokenize(s).collect();
    words.join(" ")
}

/// Exact match against a gold answer. Numeric golds compare against the last
/// number in the solution; other golds compare normalized text.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExactMatch {
    pub gold: Option<String>,
}

impl QualityScorer for ExactMatch {
    fn score(&self, _task: &str, solution: &str) -> Result<QualityScore, ScoreError> {
        let gold = self.gold.as_deref().ok_or(ScoreError::MissingReference)?;
        let numeric = gold
            .trim()
            .trim_end_matches('.')
            .replace(',', "")
            .parse::<f64>();
        if let Ok(target) = numeric {
            let hit = extract_numbers(solution)
                .last()
                .is_some_and(|v| libm::fabs(v - target) < 1e-9);
            return Ok(binary(hit));
        }
        Ok(binary(normalize_text(gold) == normalize_text(solution)))
    }
}

/// Letter-choice accuracy (`A`..`J`).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MultipleChoice {
    pub gold: Option<String>,
}

fn is_option_letter(c: char) -> bool {
    ('A'..='J').contains(&c)
}

/// Extracts the chosen option letter: after an `answer` label if there is
/// one, else the first parenthesized letter, else a lone letter.
pub fn extract_choice(text: &str) -> Option<char> {
    let lower = text.to_ascii_lowercase();
    if let Some(pos) = lower.rfind("answer") {
        let tail = &text[pos + "answer".len()..];
        let letter = tail
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .find(|w| w.len() == 1 && w.chars().all(is_option_letter));
        if let Some(w) = letter {
            return w.chars().next();
        }
    }
    let chars: Vec<char> = text.chars().collect();
    for w in chars.windows(3) {
        if w[0] == '(' && is_option_letter(w[1]) && w[2] == ')' {
            return Some(w[1]);
        }
    }
    let t = text.trim().trim_end_matches(['.', ')']);
    let mut it = t.chars();
    match (it.next(), it.next()) {
        (Some(c), None) if is_option_letter(c.to_ascii_uppercase()) => Some(c.to_ascii_uppercase()),
        _ => None,
    }
}

impl QualityScorer for MultipleChoice {
    fn score(&self, _task: &str, solution: &str) -> Result<QualityScore, ScoreError> {
        let gold = self
            .gold
            .as_deref()
            .and_then(|g| g.trim().chars().next())
            .ok_or(ScoreError::MissingReference)?
            .to_ascii_uppercase();
        Ok(binary(extract_choice(solution) == Some(gold)))
    }
}

/// Fraction of required concepts whose surface form occurs in the solution.
/// Single-word concepts also match common inflections (`dog` in `dogs`).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConceptCoverage {
    pub concepts: Vec<String>,
}

const INFLECTIONS: [&str; 6] = ["", "s", "es", "d", "ed", "ing"];

fn token_matches(token: &str, concept: &str) -> bool {
    token
        .strip_prefix(concept)
        .is_some_and(|suffix| INFLECTIONS.contains(&suffix))
}

impl QualityScorer for ConceptCoverage {
    fn score(&self, _task: &str, solution: &str) -> Result<QualityScore, ScoreError> {
        if self.concepts.is_empty() {
            return Err(ScoreError::MissingReference);
        }
        let tokens: Vec<String> = tokenize(solution).collect();
        let covered = self
            .concepts
            .iter()
            .filter(|concept| {
                let parts: Vec<String> = tokenize(concept).collect();
                match parts.len() {
                    0 => false,
                    1 => tokens.iter().any(|t| token_matches(t, &parts[0])),
                    n => tokens.windows(n).any(|w| w == parts.as_slice()),
                }
            })
            .count();
        Ok(QualityScore(covered as f64 / self.concepts.len() as f64))
    }
}

pub const DEFAULT_JUDGE_RUBRIC: &str = "You are grading a solution to a task.\n\
Rate how completely and correctly the solution accomplishes the task on a scale from 0 to 1.\n\
Reply with a line `RATING: <number between 0 and 1>`.\n\n\
### Task\n{task}\n\n### Solution\n{solution}\n";

pub const JUDGE_PROFILE: &str = "quality_judge";

/// Quality rated by a model against a fixed rubric.
#[derive(Debug, Clone)]
pub struct LlmJudge<B> {
    pub backend: B,
    pub rubric: String,
}

impl<B: ModelBackend> LlmJudge<B> {
    pub fn new(backend: B) -> Self {
        LlmJudge {
            backend,
            rubric: String::from(DEFAULT_JUDGE_RUBRIC),
        }
    }
}

/// First number in `[0, 1]` in a judge reply, preferring a `RATING:` line.
pub fn parse_rating(reply: &str) -> Option<f64> {
    let lower = reply.to_ascii_lowercase();
    let region = lower.find("rating").map_or(reply, |p| &reply[p..]);
    extract_numbers(region)
        .into_iter()
        .next()
        .filter(|v| (0.0..=1.0).contains(v))
}

impl<B: ModelBackend> QualityScorer for LlmJudge<B> {
    fn score(&self, task: &str, solution: &str) -> Result<QualityScore, ScoreError> {
        let prompt = self
            .rubric
            .replace("{task}", task)
            .replace("{solution}", solution);
        let request = CompletionRequest {
            temperature: 0.0,
            profile: String::from(JUDGE_PROFILE),
            ..CompletionRequest::new(prompt)
        };
        let reply = self.backend.complete(&request)?;
        parse_rating(&reply.text)
            .and_then(QualityScore::new)
            .ok_or_else(|| ScoreError::Malformed(reply.text))
    }
}

/// Table lookup keyed by trimmed solution text. Meant for tests and replays.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScriptedScorer {
    pub table: BTreeMap<String, f64>,
    #[serde(default)]
    pub default: Option<f64>,
}

impl ScriptedScorer {
    pub fn with(mut self, solution: &str, score: f64) -> Self {
        self.table.insert(String::from(solution.trim()), score);
        self
    }

    pub fn or_default(mut self, score: f64) -> Self {
        self.default = Some(score);
        self
    }
}

impl QualityScorer for ScriptedScorer {
    fn score(&self, _task: &str, solution: &str) -> Result<QualityScore, ScoreError> {
        let v = self
            .table
            .get(solution.trim())
            .copied()
            .or(self.default)
            .ok_or(ScoreError::MissingReference)?;
        QualityScore::new(v).ok_or_else(|| ScoreError::Malformed(format!("scripted score {v}")))
    }
}
