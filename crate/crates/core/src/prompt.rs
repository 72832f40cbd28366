//! Prompt templates and structured-output parsing for the five decision steps.

use alloc::borrow::ToOwned;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::experience::ExperienceEntry;
use crate::step::DecisionStepType;

pub const INPUT_PLACEHOLDER: &str = "{input}";

const JUDGE_TEMPLATE: &str = "You are one agent in a team. Decide whether you can solve the \
following task on your own, without splitting it into subtasks.\n\
Reply with a single line `DECISION: yes` or `DECISION: no`.\n\n{input}\n";

const DECOMPOSE_TEMPLATE: &str = "Split the following task into smaller subtasks that teammates \
can solve independently.\nReply with a numbered list, one subtask per line (`1. ...`).\n\n{input}\n";

const SOLVE_TEMPLATE: &str = "Solve the following task.\n\
Reply with `SOLUTION:` followed by your solution.\n\n{input}\n";

const CRITIQUE_TEMPLATE: &str = "Review the proposed solution to the task below.\n\
If it is adequate reply `VERDICT: adequate`. Otherwise reply `VERDICT: inadequate` followed by \
a line `CRITIQUE:` that says what must be fixed.\n\n{input}\n";

const AGGREGATE_TEMPLATE: &str = "Combine the sub-solutions below into one complete solution \
for the task.\nReply with `SOLUTION:` followed by the combined solution.\n\n{input}\n";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    templates: [String; 5],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissingPlaceholder(pub DecisionStepType);

impl fmt::Display for MissingPlaceholder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "template for {} lacks the {INPUT_PLACEHOLDER} placeholder",
            self.0
        )
    }
}

#[cfg(feature = "std")]
impl std::error::Error for MissingPlaceholder {}

fn slot(step: DecisionStepType) -> usize {
    match step {
        DecisionStepType::SolvabilityJudge => 0,
        DecisionStepType::Decompose => 1,
        DecisionStepType::Solve => 2,
        DecisionStepType::Critique => 3,
        DecisionStepType::Aggregate => 4,
    }
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            templates: [
                JUDGE_TEMPLATE.to_owned(),
                DECOMPOSE_TEMPLATE.to_owned(),
                SOLVE_TEMPLATE.to_owned(),
                CRITIQUE_TEMPLATE.to_owned(),
                AGGREGATE_TEMPLATE.to_owned(),
            ],
        }
    }
}

impl PromptTemplates {
    pub fn get(&self, step: DecisionStepType) -> &str {
        &self.templates[slot(step)]
    }

    pub fn set(
        &mut self,
        step: DecisionStepType,
        template: String,
    ) -> Result<(), MissingPlaceholder> {
        if !template.contains(INPUT_PLACEHOLDER) {
            return Err(MissingPlaceholder(step));
        }
        self.templates[slot(step)] = template;
        Ok(())
    }

    /// Fills the step template. Each exemplar becomes an
    /// `### Example` block placed before the current input.
    pub fn render(
        &self,
        step: DecisionStepType,
        state: &str,
        exemplars: &[&ExperienceEntry],
    ) -> String {
        let mut body = String::new();
        for e in exemplars {
            body.push_str("### Example\nInput: ");
            body.push_str(&e.state);
            body.push_str("\nOutput: ");
            body.push_str(&e.action);
            body.push_str("\n\n");
        }
        body.push_str("### Input\n");
        body.push_str(state);
        self.get(step).replace(INPUT_PLACEHOLDER, &body)
    }
}

/// Renders with the built-in templates.
pub fn render_prompt(
    step: DecisionStepType,
    state: &str,
    exemplar: Option<&ExperienceEntry>,
) -> String {
    let exemplars: Vec<&ExperienceEntry> = exemplar.into_iter().collect();
    PromptTemplates::default().render(step, state, &exemplars)
}

pub fn format_reminder(step: DecisionStepType) -> &'static str {
    match step {
        DecisionStepType::SolvabilityJudge => {
            "Your previous reply could not be parsed. Answer with exactly one line: `DECISION: yes` or `DECISION: no`."
        }
        DecisionStepType::Decompose => {
            "Your previous reply could not be parsed. Answer with a numbered list of subtasks, one per line (`1. ...`)."
        }
        DecisionStepType::Solve | DecisionStepType::Aggregate => {
            "Your previous reply could not be parsed. Answer with `SOLUTION:` followed by a non-empty solution."
        }
        DecisionStepType::Critique => {
            "Your previous reply could not be parsed. Answer with `VERDICT: adequate` or `VERDICT: inadequate` and a `CRITIQUE:` line."
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Adequate,
    Inadequate(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decision {
    Solvable(bool),
    Subtasks(Vec<String>),
    Verdict(Verdict),
    Solution(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub step: DecisionStepType,
    pub reason: &'static str,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "malformed {} response: {}", self.step, self.reason)
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ParseError {}

/// Returns the text after `label:` (case-insensitive) on the first line that
/// starts with it, plus every following line.
fn labelled<'a>(raw: &'a str, label: &str) -> Option<(&'a str, &'a str)> {
    let mut offset = 0;
    for line in raw.split_inclusive('\n') {
        let trimmed = line.trim_start_matches(['*', '#', '`', ' ', '\t']);
        if trimmed.len() > label.len()
            && trimmed.is_char_boundary(label.len())
            && trimmed[..label.len()].eq_ignore_ascii_case(label)
            && trimmed[label.len()..].starts_with(':')
        {
            let start = offset + (line.len() - trimmed.len()) + label.len() + 1;
            let line_end = offset + line.len();
            let value = raw[start..line_end].trim_start_matches(['*', '`', ' ', '\t']);
            return Some((value, &raw[line_end..]));
        }
        offset += line.len();
    }
    None
}

fn clean_word(s: &str) -> String {
    s.trim()
        .trim_matches(|c: char| !c.is_alphanumeric())
        .chars()
        .flat_map(char::to_lowercase)
        .collect()
}

fn list_item(line: &str) -> Option<&str> {
    let t = line.trim();
    if let Some(rest) = t.strip_prefix("- ").or_else(|| t.strip_prefix("* ")) {
        return Some(rest.trim());
    }
    let digits = t.find(|c: char| !c.is_ascii_digit())?;
    if digits == 0 {
        return None;
    }
    let rest = &t[digits..];
    let rest = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')'))?;
    Some(rest.trim())
}

/// Extracts the structured decision carried by a raw model reply.
pub fn parse_structured(step: DecisionStepType, raw: &str) -> Result<Decision, ParseError> {
    let err = |reason| ParseError { step, reason };
    match step {
        DecisionStepType::SolvabilityJudge => {
            let (value, _) = labelled(raw, "decision").ok_or(err("missing DECISION field"))?;
            let word = clean_word(value.split_whitespace().next().unwrap_or(""));
            match word.as_str() {
                "yes" => Ok(Decision::Solvable(true)),
                "no" => Ok(Decision::Solvable(false)),
                _ => Err(err("DECISION must be yes or no")),
            }
        }
        DecisionStepType::Decompose => {
            let items: Vec<String> = raw
                .lines()
                .filter_map(list_item)
                .filter(|s| !s.is_empty())
                .map(ToOwned::to_owned)
                .collect();
            if items.is_empty() {
                Err(err("no subtask list found"))
            } else {
                Ok(Decision::Subtasks(items))
            }
        }
        DecisionStepType::Critique => {
            let (value, rest) = labelled(raw, "verdict").ok_or(err("missing VERDICT field"))?;
            let word = clean_word(value.split_whitespace().next().unwrap_or(""));
            if word == "adequate" {
                return Ok(Decision::Verdict(Verdict::Adequate));
            }
            if word.is_empty() {
                return Err(err("empty VERDICT field"));
            }
            let critique = match labelled(raw, "critique") {
                Some((first, more)) => {
                    let mut s = String::from(first.trim());
                    if !more.trim().is_empty() {
                        s.push('\n');
                        s.push_str(more.trim());
                    }
                    s
                }
                None => {
                    let tail = value.trim_start().get(word.len()..).unwrap_or("").trim();
                    let mut s = String::from(tail);
                    if !rest.trim().is_empty() {
                        if !s.is_empty() {
                            s.push('\n');
                        }
                        s.push_str(rest.trim());
                    }
                    s
                }
            };
            let critique = if critique.is_empty() {
                String::from("The solution is inadequate.")
            } else {
                critique
            };
            Ok(Decision::Verdict(Verdict::Inadequate(critique)))
        }
        DecisionStepType::Solve | DecisionStepType::Aggregate => {
            let text = match labelled(raw, "solution") {
                Some((first, more)) => {
                    let mut s = String::from(first.trim());
                    if !more.trim().is_empty() {
                        if !s.is_empty() {
                            s.push('\n');
                        }
                        s.push_str(more.trim_end());
                    }
                    s
                }
                None => String::from(raw.trim()),
            };
            if text.trim().is_empty() {
                Err(err("empty solution"))
            } else {
                Ok(Decision::Solution(text))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::AgentId;
    use alloc::vec;

    fn entry(state: &str, action: &str) -> ExperienceEntry {
        ExperienceEntry {
            agent: AgentId(0),
            step_type: DecisionStepType::Solve,
            state: state.into(),
            action: action.into(),
            reward: 1.0,
            embedding: Vec::new(),
            task_id: "t".into(),
            step_index: 0,
        }
    }

    #[test]
    fn prompt_without_exemplar() {
        let p = render_prompt(DecisionStepType::Solve, "2+2?", None);
        assert!(p.contains("2+2?"));
        assert!(!p.contains("### Example"));
    }

    #[test]
    fn exemplar_block_precedes_input() {
        let e = entry("1+1?", "2");
        let p = render_prompt(DecisionStepType::Solve, "2+2?", Some(&e));
        let ex = p.find("### Example\nInput: 1+1?\nOutput: 2").unwrap();
        assert!(ex < p.find("2+2?").unwrap());
        assert_eq!(p, render_prompt(DecisionStepType::Solve, "2+2?", Some(&e)));
    }

    #[test]
    fn template_override_requires_placeholder() {
        let mut t = PromptTemplates::default();
        assert!(t.set(DecisionStepType::Solve, "no slot".into()).is_err());
        t.set(DecisionStepType::Solve, "S> {input}".into()).unwrap();
        assert_eq!(
            t.render(DecisionStepType::Solve, "q", &[]),
            "S> ### Input\nq"
        );
    }

    #[test]
    fn parses_judge() {
        assert_eq!(
            parse_structured(DecisionStepType::SolvabilityJudge, "DECISION: yes\nbecause"),
            Ok(Decision::Solvable(true))
        );
        assert_eq!(
            parse_structured(
                DecisionStepType::SolvabilityJudge,
                "thinking...\n**Decision:** No."
            ),
            Ok(Decision::Solvable(false))
        );
        assert!(parse_structured(DecisionStepType::SolvabilityJudge, "maybe").is_err());
    }

    #[test]
    fn parses_subtask_list() {
        let raw = "Plan:\n1. parse input\n2) compute sum\n3. format output\n";
        assert_eq!(
            parse_structured(DecisionStepType::Decompose, raw),
            Ok(Decision::Subtasks(vec![
                "parse input".into(),
                "compute sum".into(),
                "format output".into()
            ]))
        );
        assert!(parse_structured(DecisionStepType::Decompose, "just do it").is_err());
    }

    #[test]
    fn parses_verdicts() {
        assert_eq!(
            parse_structured(DecisionStepType::Critique, "VERDICT: adequate"),
            Ok(Decision::Verdict(Verdict::Adequate))
        );
        assert_eq!(
            parse_structured(
                DecisionStepType::Critique,
                "VERDICT: inadequate\nCRITIQUE: off by one"
            ),
            Ok(Decision::Verdict(Verdict::Inadequate("off by one".into())))
        );
        assert_eq!(
            parse_structured(
                DecisionStepType::Critique,
                "VERDICT: inadequate\nmissing units"
            ),
            Ok(Decision::Verdict(Verdict::Inadequate(
                "missing units".into()
            )))
        );
        assert!(parse_structured(DecisionStepType::Critique, "looks fine").is_err());
    }

    #[test]
    fn parses_solutions() {
        assert_eq!(
            parse_structured(DecisionStepType::Solve, "SOLUTION: 42"),
            Ok(Decision::Solution("42".into()))
        );
        assert_eq!(
            parse_structured(DecisionStepType::Aggregate, "  plain text  "),
            Ok(Decision::Solution("plain text".into()))
        );
        assert!(parse_structured(DecisionStepType::Solve, "SOLUTION:   ").is_err());
    }
}
