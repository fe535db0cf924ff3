//! Deterministic scripted model.
//!
//! Rules are tried in order; the first whose matcher accepts the transcript
//! produces the response. Responses are a pure function of the transcript.
//!
//! Script file schema (JSON):
//!
//! ```json
//! {
//!   "strict": false,
//!   "default": "INSUFFICIENT",
//!   "rules": [
//!     { "when": { "contains": ["TASK: prune"], "scope": "last_user" },
//!       "respond": { "score_lines": { "weights": { "aunt": 0.9 }, "default": 0.1 } } },
//!     { "when": { "contains": ["TASK: reasoning-check", "Rex"] },
//!       "respond": "SUFFICIENT" }
//!   ]
//! }
//! ```
//!
//! `respond` is either a literal string or one of the generators:
//! `score_lines` (scores every `[n] ...` line by the largest matching keyword
//! weight), `pick_lines` (selects `[n] ...` lines containing any keyword),
//! `judge_by_match` (compares the `GOLD:` and `PREDICTION:` lines).

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::{validate_conversation, ChatModel, ChatTurn, ModelError, ModelResponse, Role};
use crate::text::{normalize_answer, numbered_lines};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    /// Only the final user turn.
    #[default]
    LastUser,
    /// Every turn, joined.
    Transcript,
}

type Predicate = Arc<dyn Fn(&[ChatTurn]) -> bool + Send + Sync>;
type Generator = Arc<dyn Fn(&[ChatTurn]) -> String + Send + Sync>;

#[derive(Clone)]
pub enum Matcher {
    /// All needles must occur (case-sensitive) and none of `absent` may.
    Contains {
        needles: Vec<String>,
        absent: Vec<String>,
        scope: Scope,
    },
    Predicate(Predicate),
}

impl Matcher {
    pub fn contains(needle: impl Into<String>) -> Self {
        Self::all_of([needle])
    }

    pub fn all_of<I, S>(needles: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Matcher::Contains {
            needles: needles.into_iter().map(Into::into).collect(),
            absent: Vec::new(),
            scope: Scope::LastUser,
        }
    }

    pub fn predicate(f: impl Fn(&[ChatTurn]) -> bool + Send + Sync + 'static) -> Self {
        Matcher::Predicate(Arc::new(f))
    }

    fn matches(&self, conversation: &[ChatTurn]) -> bool {
        match self {
            Matcher::Contains { needles, absent, scope } => {
                let hay = scoped_text(conversation, *scope);
                needles.iter().all(|n| hay.contains(n.as_str())) && !absent.iter().any(|n| hay.contains(n.as_str()))
            }
            Matcher::Predicate(p) => p(conversation),
        }
    }
}

impl fmt::Debug for Matcher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Matcher::Contains { needles, .. } => write!(f, "Contains({needles:?})"),
            Matcher::Predicate(_) => f.write_str("Predicate(..)"),
        }
    }
}

fn scoped_text(conversation: &[ChatTurn], scope: Scope) -> String {
    match scope {
        Scope::LastUser => conversation
            .iter()
            .rev()
            .find(|t| t.role == Role::User)
            .map(|t| t.text.clone())
            .unwrap_or_default(),
        Scope::Transcript => conversation
            .iter()
            .map(|t| t.text.as_str())
            .collect::<Vec<_>>()
            .join("\n"),
    }
}

fn last_user(conversation: &[ChatTurn]) -> &str {
    conversation
        .iter()
        .rev()
        .find(|t| t.role == Role::User)
        .map_or("", |t| t.text.as_str())
}

#[derive(Clone)]
pub enum Responder {
    Text(String),
    /// Scores every numbered line by the largest weight among keywords it
    /// contains (case-insensitive); emits `{"scores": {"n": w, ...}}`.
    ScoreLines {
        weights: BTreeMap<String, f64>,
        default: f64,
    },
    /// Emits `{"selected": [n, ...]}` for numbered lines containing any keyword.
    PickLines {
        keywords: Vec<String>,
        limit: Option<usize>,
    },
    /// CORRECT iff the normalized `PREDICTION:` line equals the `GOLD:` line.
    JudgeByMatch,
    Generate(Generator),
}

impl Responder {
    pub fn text(s: impl Into<String>) -> Self {
        Responder::Text(s.into())
    }

    pub fn generate(f: impl Fn(&[ChatTurn]) -> String + Send + Sync + 'static) -> Self {
        Responder::Generate(Arc::new(f))
    }

    fn respond(&self, conversation: &[ChatTurn]) -> String {
        match self {
            Responder::Text(t) => t.clone(),
            Responder::ScoreLines { weights, default } => {
                let prompt = last_user(conversation);
                let mut scores = serde_json::Map::new();
                for (n, line) in numbered_lines(prompt) {
                    let lower = line.to_lowercase();
                    let score = weights
                        .iter()
                        .filter(|(k, _)| lower.contains(&k.to_lowercase()))
                        .map(|(_, w)| *w)
                        .fold(None, |acc: Option<f64>, w| Some(acc.map_or(w, |a| a.max(w))))
                        .unwrap_or(*default);
                    scores.insert(n.to_string(), serde_json::json!(score));
                }
                format!("```json\n{}\n```", serde_json::json!({ "scores": scores }))
            }
            Responder::PickLines { keywords, limit } => {
                let prompt = last_user(conversation);
                let picked: Vec<usize> = numbered_lines(prompt)
                    .into_iter()
                    .filter(|(_, line)| {
                        let lower = line.to_lowercase();
                        keywords.iter().any(|k| lower.contains(&k.to_lowercase()))
                    })
                    .map(|(n, _)| n)
                    .take(limit.unwrap_or(usize::MAX))
                    .collect();
                format!("```json\n{}\n```", serde_json::json!({ "selected": picked }))
            }
            Responder::JudgeByMatch => {
                let prompt = last_user(conversation);
                let field = |tag: &str| prompt.lines().find_map(|l| l.strip_prefix(tag)).map(normalize_answer);
                match (field("GOLD:"), field("PREDICTION:")) {
                    (Some(g), Some(p)) if g == p => "Prediction matches the gold answer.\nCORRECT",
                    _ => "Prediction does not match the gold answer.\nINCORRECT",
                }
                .to_string()
            }
            Responder::Generate(f) => f(conversation),
        }
    }
}

impl fmt::Debug for Responder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Responder::Text(t) => write!(f, "Text({t:?})"),
            Responder::ScoreLines { .. } => f.write_str("ScoreLines"),
            Responder::PickLines { .. } => f.write_str("PickLines"),
            Responder::JudgeByMatch => f.write_str("JudgeByMatch"),
            Responder::Generate(_) => f.write_str("Generate(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Rule {
    pub matcher: Matcher,
    pub responder: Responder,
}

#[derive(Debug, Clone, Default)]
pub struct ScriptedMock {
    rules: Vec<Rule>,
    default: Option<String>,
    strict: bool,
}

impl ScriptedMock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rule(mut self, matcher: Matcher, responder: Responder) -> Self {
        self.rules.push(Rule { matcher, responder });
        self
    }

    pub fn when(self, needle: &str, response: &str) -> Self {
        self.rule(Matcher::contains(needle), Responder::text(response))
    }

    pub fn with_default(mut self, response: impl Into<String>) -> Self {
        self.default = Some(response.into());
        self
    }

    /// Strict mocks fail with [`ModelError::NoMatch`] instead of falling back.
    pub fn strict(mut self, strict: bool) -> Self {
        self.strict = strict;
        self
    }

    pub fn from_script(script: MockScript) -> Self {
        let rules = script
            .rules
            .into_iter()
            .map(|r| Rule {
                matcher: Matcher::Contains {
                    needles: r.when.contains,
                    absent: r.when.absent,
                    scope: r.when.scope,
                },
                responder: r.respond.into(),
            })
            .collect();
        Self {
            rules,
            default: script.default,
            strict: script.strict,
        }
    }

    pub fn from_json(json: &str) -> Result<Self, ModelError> {
        let script: MockScript =
            serde_json::from_str(json).map_err(|e| ModelError::Config(format!("mock script: {e}")))?;
        Ok(Self::from_script(script))
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let json = std::fs::read_to_string(path).map_err(|e| ModelError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&json)
    }

    fn request_id(conversation: &[ChatTurn]) -> String {
        let mut h = Sha256::new();
        for t in conversation {
            h.update(t.text.as_bytes());
            h.update([0u8]);
        }
        format!("mock-{}", hex::encode(&h.finalize()[..6]))
    }
}

impl ChatModel for ScriptedMock {
    fn complete(&self, conversation: &[ChatTurn]) -> Result<ModelResponse, ModelError> {
        validate_conversation(conversation)?;
        if let Some(rule) = self.rules.iter().find(|r| r.matcher.matches(conversation)) {
            return Ok(ModelResponse::text(rule.responder.respond(conversation)));
        }
        match (&self.default, self.strict) {
            (Some(d), false) => Ok(ModelResponse::text(d.clone())),
            (None, false) => Ok(ModelResponse::text("")),
            (_, true) => Err(ModelError::NoMatch {
                request_id: Self::request_id(conversation),
            }),
        }
    }

    fn max_parallelism(&self) -> usize {
        4
    }
}

/// Deserialized mock script file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    #[serde(default)]
    pub strict: bool,
    #[serde(default)]
    pub default: Option<String>,
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptRule {
    pub when: ScriptMatcher,
    pub respond: ScriptResponse,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptMatcher {
    #[serde(default)]
    pub contains: Vec<String>,
    #[serde(default)]
    pub absent: Vec<String>,
    #[serde(default)]
    pub scope: Scope,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ScriptResponse {
    Text(String),
    Generator(ScriptGenerator),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ScriptGenerator {
    ScoreLines {
        weights: BTreeMap<String, f64>,
        #[serde(default)]
        default: f64,
    },
    PickLines {
        keywords: Vec<String>,
        #[serde(default)]
        limit: Option<usize>,
    },
    JudgeByMatch {},
}

impl From<ScriptResponse> for Responder {
    fn from(r: ScriptResponse) -> Self {
        match r {
            ScriptResponse::Text(t) => Responder::Text(t),
            ScriptResponse::Generator(ScriptGenerator::ScoreLines { weights, default }) => {
                Responder::ScoreLines { weights, default }
            }
            ScriptResponse::Generator(ScriptGenerator::PickLines { keywords, limit }) => {
                Responder::PickLines { keywords, limit }
            }
            ScriptResponse::Generator(ScriptGenerator::JudgeByMatch {}) => Responder::JudgeByMatch,
        }
    }
}
