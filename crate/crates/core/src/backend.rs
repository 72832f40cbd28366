//! Chat-completion boundary and the deterministic scripted backend.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::graph::AgentId;
use crate::step::DecisionStepType;

pub const DEFAULT_TEMPERATURE: f64 = 0.2;
pub const DEFAULT_MAX_TOKENS: u32 = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Decision step this request serves, if any. Quality-judge requests carry none.
    pub step: Option<DecisionStepType>,
    pub agent: Option<AgentId>,
    pub profile: String,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        CompletionRequest {
            prompt: prompt.into(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            step: None,
            agent: None,
            profile: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl TokenUsage {
    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

impl AddAssign<&CompletionResponse> for TokenUsage {
    fn add_assign(&mut self, rhs: &CompletionResponse) {
        self.prompt_tokens += rhs.prompt_tokens;
        self.completion_tokens += rhs.completion_tokens;
    }
}

impl AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: TokenUsage) {
        self.prompt_tokens += rhs.prompt_tokens;
        self.completion_tokens += rhs.completion_tokens;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendError {
    /// Transport failure that survived the retry policy.
    Transport(String),
    Auth(String),
    Http {
        status: u16,
        body: String,
    },
    InvalidResponse(String),
    BudgetExceeded {
        used: u64,
        cap: u64,
    },
    /// Scripted backend had no matching rule and no fallback.
    Script(String),
}

impl fmt::Display for BackendError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendError::Transport(m) => write!(f, "transport error: {m}"),
            BackendError::Auth(m) => write!(f, "authentication failed: {m}"),
            BackendError::Http { status, body } => write!(f, "http {status}: {body}"),
            BackendError::InvalidResponse(m) => write!(f, "invalid provider response: {m}"),
            BackendError::BudgetExceeded { used, cap } => {
                write!(f, "token budget exceeded: {used} > {cap}")
            }
            BackendError::Script(m) => write!(f, "no script rule matched: {m}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for BackendError {}

pub trait ModelBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError>;
}

impl<B: ModelBackend + ?Sized> ModelBackend for &B {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        (**self).complete(request)
    }
}

pub fn whitespace_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

/// One ordered script rule. Every present matcher must hold.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<DecisionStepType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    pub response: String,
}

impl ScriptRule {
    pub fn on_step(step: DecisionStepType, response: impl Into<String>) -> Self {
        ScriptRule {
            step: Some(step),
            response: response.into(),
            ..ScriptRule::default()
        }
    }

    pub fn containing(mut self, needle: impl Into<String>) -> Self {
        self.contains = Some(needle.into());
        self
    }

    pub fn matches(&self, request: &CompletionRequest) -> bool {
        self.step.map_or(true, |s| request.step == Some(s))
            && self
                .profile
                .as_deref()
                .map_or(true, |p| request.profile == p)
            && self
                .contains
                .as_deref()
                .map_or(true, |c| request.prompt.contains(c))
    }
}

/// Answers from an ordered rule list; the first matching rule wins.
///
/// Token counts are whitespace token counts of the prompt and the response,
/// so the backend is a pure function of `(script, request)`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScriptedBackend {
    pub rules: Vec<ScriptRule>,
    #[serde(default)]
    pub fallback: Option<String>,
}

impl ScriptedBackend {
    pub fn new(rules: Vec<ScriptRule>) -> Self {
        ScriptedBackend {
            rules,
            fallback: None,
        }
    }

    pub fn with_fallback(mut self, text: impl Into<String>) -> Self {
        self.fallback = Some(text.into());
        self
    }

    pub fn rule(mut self, rule: ScriptRule) -> Self {
        self.rules.push(rule);
        self
    }
}

impl ModelBackend for ScriptedBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let text = self
            .rules
            .iter()
            .find(|r| r.matches(request))
            .map(|r| r.response.clone())
            .or_else(|| self.fallback.clone())
            .ok_or_else(|| {
                let step = request.step.map_or("none", DecisionStepType::as_str);
                BackendError::Script(alloc::format!("step={step} profile={}", request.profile))
            })?;
        Ok(CompletionResponse {
            prompt_tokens: whitespace_tokens(&request.prompt),
            completion_tokens: whitespace_tokens(&text),
            text,
        })
    }
}

/// Pseudo-random but well-formed replies derived from a hash of the seed,
/// the step type and the prompt. Used to fuzz the workflow engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FuzzBackend {
    pub seed: u64,
}

impl FuzzBackend {
    fn hash(&self, request: &CompletionRequest) -> u64 {
        let mut bytes = Vec::with_capacity(request.prompt.len() + 16);
        bytes.extend_from_slice(&self.seed.to_le_bytes());
        bytes.extend_from_slice(
            request
                .step
                .map_or("none", DecisionStepType::as_str)
                .as_bytes(),
        );
        bytes.extend_from_slice(request.prompt.as_bytes());
        crate::embed::fnv1a64(&bytes)
    }
}

impl ModelBackend for FuzzBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let h = self.hash(request);
        let text = match request.step {
            Some(DecisionStepType::SolvabilityJudge) => String::from(if h % 2 == 0 {
                "DECISION: yes"
            } else {
                "DECISION: no"
            }),
            Some(DecisionStepType::Decompose) => {
                let n = 1 + (h % 4);
                let mut s = String::from("Subtasks:");
                for i in 0..n {
                    s.push_str(&alloc::format!(
                        "\n{}. subtask {:x}",
                        i + 1,
                        (h >> 8).wrapping_add(i)
                    ));
                }
                s
            }
            Some(DecisionStepType::Critique) => {
                if h % 3 == 0 {
                    String::from("VERDICT: adequate")
                } else {
                    alloc::format!("VERDICT: inadequate\nCRITIQUE: revise {:x}", h >> 16)
                }
            }
            _ => alloc::format!("SOLUTION: answer {:x}", h >> 4),
        };
        Ok(CompletionResponse {
            prompt_tokens: whitespace_tokens(&request.prompt),
            completion_tokens: whitespace_tokens(&text),
            text,
        })
    }
}
