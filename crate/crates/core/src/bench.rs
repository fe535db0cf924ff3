//! Evaluation harness: QA items grounded in a Vaccount, pluggable answerers,
//! exact-match and judge scoring, and per-(task, difficulty) accuracy.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, warn};

use crate::graph::LifeGraph;
use crate::media::{DirMediaStore, MediaStore};
use crate::model::{fan_out, ChatModel, ChatTurn, Responder, ScriptedMock};
use crate::prompts;
use crate::retrieval::{parse_verdict, Query, RetrievalConfig, Retriever};
use crate::text::normalize_answer;
use crate::vaccount::{Vaccount, VaccountError};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Vaccount(#[from] VaccountError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid QA data:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error("item {id}: {scorer} scoring does not apply to {answer_type} items")]
    WrongAnswerType {
        id: String,
        scorer: &'static str,
        answer_type: AnswerType,
    },
    #[error("answer script {path}: {reason}")]
    Script { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    RelationalConceptIdentification,
    HistoricalRetrievalAndUnderstanding,
}

impl Category {
    pub fn title(self) -> &'static str {
        match self {
            Category::RelationalConceptIdentification => "Relational Concept Identification",
            Category::HistoricalRetrievalAndUnderstanding => "Historical Retrieval and Understanding",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    TextConceptQa,
    VisualConceptRecognition,
    ConceptVqa,
    SceneAndActivity,
    DirectPersonCentric,
    RelationalPersonCentric,
    FineGrainedScene,
    PreferenceAndPersona,
    FrequencyAndCounting,
    RelationalTemporalReasoning,
}

impl TaskKind {
    pub const ALL: [TaskKind; 10] = [
        TaskKind::TextConceptQa,
        TaskKind::VisualConceptRecognition,
        TaskKind::ConceptVqa,
        TaskKind::SceneAndActivity,
        TaskKind::DirectPersonCentric,
        TaskKind::RelationalPersonCentric,
        TaskKind::FineGrainedScene,
        TaskKind::PreferenceAndPersona,
        TaskKind::FrequencyAndCounting,
        TaskKind::RelationalTemporalReasoning,
    ];

    pub fn category(self) -> Category {
        match self {
            TaskKind::TextConceptQa | TaskKind::VisualConceptRecognition | TaskKind::ConceptVqa => {
                Category::RelationalConceptIdentification
            }
            _ => Category::HistoricalRetrievalAndUnderstanding,
        }
    }

    /// `event_centric` or `complex_logical` for historical tasks.
    pub fn subcategory(self) -> Option<&'static str> {
        match self {
            TaskKind::SceneAndActivity
            | TaskKind::DirectPersonCentric
            | TaskKind::RelationalPersonCentric
            | TaskKind::FineGrainedScene => Some("event_centric"),
            TaskKind::PreferenceAndPersona | TaskKind::FrequencyAndCounting | TaskKind::RelationalTemporalReasoning => {
                Some("complex_logical")
            }
            _ => None,
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            TaskKind::TextConceptQa => "Text Concept QA",
            TaskKind::VisualConceptRecognition => "Visual Concept Recognition",
            TaskKind::ConceptVqa => "Concept VQA",
            TaskKind::SceneAndActivity => "Scene and Activity",
            TaskKind::DirectPersonCentric => "Direct Person-Centric",
            TaskKind::RelationalPersonCentric => "Relational Person-Centric",
            TaskKind::FineGrainedScene => "Fine-Grained Scene",
            TaskKind::PreferenceAndPersona => "Preference and Persona",
            TaskKind::FrequencyAndCounting => "Frequency and Counting",
            TaskKind::RelationalTemporalReasoning => "Relational Temporal Reasoning",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.title())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerType {
    MultipleChoice,
    Binary,
    Open,
}

impl fmt::Display for AnswerType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnswerType::MultipleChoice => "multiple_choice",
            AnswerType::Binary => "binary",
            AnswerType::Open => "open",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QAItem {
    pub id: String,
    pub vaccount_id: String,
    pub task: TaskKind,
    /// Derived from `task` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<Category>,
    pub difficulty: Difficulty,
    pub input_text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub input_media: Vec<String>,
    pub answer_type: AnswerType,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub choices: Vec<String>,
    pub gold: String,
}

impl QAItem {
    pub fn category(&self) -> Category {
        self.category.unwrap_or_else(|| self.task.category())
    }

    /// Problems with this item, empty when valid.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.id.trim().is_empty() {
            out.push("empty id".to_string());
        }
        if self.input_text.trim().is_empty() {
            out.push("empty input_text".to_string());
        }
        if let Some(c) = self.category {
            if c != self.task.category() {
                out.push(format!("category {c:?} does not match task {}", self.task));
            }
        }
        let gold = normalize_answer(&self.gold);
        match self.answer_type {
            AnswerType::MultipleChoice => {
                if self.choices.len() < 2 {
                    out.push("multiple_choice needs at least 2 choices".to_string());
                }
                if !self.choices.iter().any(|c| normalize_answer(c) == gold) {
                    out.push(format!("gold {:?} is not one of the choices", self.gold));
                }
            }
            AnswerType::Binary => {
                if gold != "yes" && gold != "no" {
                    out.push(format!("binary gold must be yes or no, got {:?}", self.gold));
                }
                if !self.choices.is_empty() {
                    out.push("choices are only allowed on multiple_choice items".to_string());
                }
            }
            AnswerType::Open => {
                if gold.is_empty() {
                    out.push("empty gold".to_string());
                }
                if !self.choices.is_empty() {
                    out.push("choices are only allowed on multiple_choice items".to_string());
                }
            }
        }
        out
    }

    /// The question as posed to an answerer, with lettered options for
    /// multiple-choice items.
    pub fn prompt_text(&self) -> String {
        match self.answer_type {
            AnswerType::MultipleChoice => {
                let mut s = self.input_text.trim().to_string();
                s.push_str("\nOptions:");
                for (i, c) in self.choices.iter().enumerate() {
                    let _ = write!(s, "\n{}) {c}", choice_letter(i));
                }
                s.push_str("\nAnswer with the letter of the correct option.");
                s
            }
            AnswerType::Binary => format!("{}\nAnswer yes or no.", self.input_text.trim()),
            AnswerType::Open => self.input_text.trim().to_string(),
        }
    }
}

fn choice_letter(i: usize) -> char {
    (b'A' + (i % 26) as u8) as char
}

/// QA file for a Vaccount document: `family.json` → `family.qa.jsonl`.
pub fn qa_path_for(vaccount_path: &Path) -> PathBuf {
    let stem = vaccount_path.file_stem().and_then(|s| s.to_str()).unwrap_or("vaccount");
    vaccount_path.with_file_name(format!("{stem}.qa.jsonl"))
}

/// Parses JSON-lines QA data and validates every item against `vaccount`
/// and `store`. All problems are collected before failing.
pub fn parse_qa(text: &str, vaccount: &Vaccount, store: &dyn MediaStore) -> Result<Vec<QAItem>, BenchError> {
    let mut items = Vec::new();
    let mut problems = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item: QAItem = match serde_json::from_str(line) {
            Ok(item) => item,
            Err(e) => {
                problems.push(format!("line {}: {e}", i + 1));
                continue;
            }
        };
        let mut own = item.problems();
        if item.vaccount_id != vaccount.id {
            own.push(format!(
                "vaccount_id {:?} does not match {:?}",
                item.vaccount_id, vaccount.id
            ));
        }
        for m in &item.input_media {
            if !store.contains(m) {
                own.push(format!("input media {m:?} not found"));
            }
        }
        if !seen.insert(item.id.clone()) {
            own.push("duplicate id".to_string());
        }
        problems.extend(own.into_iter().map(|p| format!("item {}: {p}", item.id)));
        items.push(item);
    }
    if problems.is_empty() {
        Ok(items)
    } else {
        Err(BenchError::Invalid(problems))
    }
}

/// Loads a Vaccount and its co-located QA file.
pub fn load_vaccount_qa(path: impl AsRef<Path>) -> Result<(Vaccount, DirMediaStore, Vec<QAItem>), BenchError> {
    let path = path.as_ref();
    let (vaccount, store) = Vaccount::load(path)?;
    let qa = qa_path_for(path);
    let text = fs::read_to_string(&qa).map_err(|source| BenchError::Io {
        path: qa.clone(),
        source,
    })?;
    let items = parse_qa(&text, &vaccount, &store)?;
    Ok((vaccount, store, items))
}

/// Exact match for multiple-choice and binary items. A multiple-choice
/// prediction may be the bare option letter or the option text.
pub fn score_exact(prediction: &str, item: &QAItem) -> Result<bool, BenchError> {
    let pred = normalize_answer(prediction);
    let gold = normalize_answer(&item.gold);
    match item.answer_type {
        AnswerType::Binary => Ok(pred == gold),
        AnswerType::MultipleChoice => {
            if pred == gold {
                return Ok(true);
            }
            let mut chars = pred.chars();
            if let (Some(c), None) = (chars.next(), chars.next()) {
                if c.is_ascii_lowercase() {
                    let idx = (c as u8 - b'a') as usize;
                    return Ok(item.choices.get(idx).is_some_and(|ch| normalize_answer(ch) == gold));
                }
            }
            Ok(false)
        }
        AnswerType::Open => Err(BenchError::WrongAnswerType {
            id: item.id.clone(),
            scorer: "exact",
            answer_type: item.answer_type,
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct JudgeVerdict {
    /// `None` when the verdict could not be parsed.
    pub correct: Option<bool>,
    pub rationale: String,
}

/// Asks `judge` whether an open-ended prediction matches the gold answer.
pub fn score_judge(prediction: &str, item: &QAItem, judge: &dyn ChatModel) -> Result<JudgeVerdict, BenchError> {
    if item.answer_type != AnswerType::Open {
        return Err(BenchError::WrongAnswerType {
            id: item.id.clone(),
            scorer: "judge",
            answer_type: item.answer_type,
        });
    }
    let prompt = prompts::render(
        prompts::JUDGE,
        &[
            ("question", item.input_text.trim()),
            ("gold", item.gold.trim()),
            ("prediction", prediction.trim()),
        ],
    );
    let conversation = [ChatTurn::system(prompts::SYSTEM.trim_end()), ChatTurn::user(prompt)];
    Ok(match judge.complete(&conversation) {
        Ok(r) => JudgeVerdict {
            correct: parse_verdict(&r.text, "CORRECT", "INCORRECT"),
            rationale: r.text.trim().to_string(),
        },
        Err(e) => {
            warn!(item = %item.id, error = %e, "judge failed");
            JudgeVerdict {
                correct: None,
                rationale: format!("judge error: {e}"),
            }
        }
    })
}

/// Judge that compares normalized gold and prediction, for offline runs.
pub fn match_judge() -> ScriptedMock {
    ScriptedMock::new().rule(crate::model::Matcher::contains("TASK: judge"), Responder::JudgeByMatch)
}

/// Anything that maps a QA item to an answer string.
pub trait Answerer: Send + Sync {
    fn name(&self) -> String;
    fn answer(&self, item: &QAItem) -> Result<String, String>;
}

/// Repeats the question; a floor for sanity checks.
pub struct EchoAnswerer;

impl Answerer for EchoAnswerer {
    fn name(&self) -> String {
        "echo".to_string()
    }

    fn answer(&self, item: &QAItem) -> Result<String, String> {
        Ok(item.input_text.clone())
    }
}

/// Canned answers keyed by item id, from a JSON object. A `null` value or a
/// missing id makes that item fail.
pub struct ScriptAnswerer {
    name: String,
    answers: BTreeMap<String, Option<String>>,
}

impl ScriptAnswerer {
    pub fn new(name: impl Into<String>, answers: BTreeMap<String, Option<String>>) -> Self {
        Self {
            name: name.into(),
            answers,
        }
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, BenchError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| BenchError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let answers = serde_json::from_str(&text).map_err(|e| BenchError::Script {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("script");
        Ok(Self::new(format!("script:{stem}"), answers))
    }
}

impl Answerer for ScriptAnswerer {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn answer(&self, item: &QAItem) -> Result<String, String> {
        match self.answers.get(&item.id) {
            Some(Some(a)) => Ok(a.clone()),
            Some(None) => Err("scripted failure".to_string()),
            None => Err("no scripted answer".to_string()),
        }
    }
}

/// Retrieval-augmented answers over a life graph.
pub struct LifeGraphAnswerer<'a> {
    pub graph: &'a LifeGraph,
    pub model: &'a dyn ChatModel,
    pub media: Option<&'a dyn MediaStore>,
    pub config: RetrievalConfig,
}

impl Answerer for LifeGraphAnswerer<'_> {
    fn name(&self) -> String {
        format!("lifegraph(d={},k={})", self.config.depth, self.config.width)
    }

    fn answer(&self, item: &QAItem) -> Result<String, String> {
        let mut media = Vec::new();
        for m in &item.input_media {
            let store = self.media.ok_or_else(|| format!("no media store for {m}"))?;
            media.push(store.fetch(m).map_err(|e| e.to_string())?);
        }
        let query = Query {
            text: item.prompt_text(),
            media,
            vaccount: Some(item.vaccount_id.clone()),
        };
        let mut r = Retriever::new(self.graph, self.model).with_config(self.config.clone());
        if let Some(m) = self.media {
            r = r.with_media(m);
        }
        r.answer(&query).map(|a| a.text).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Correct,
    Incorrect,
    Unanswered,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ItemResult {
    pub id: String,
    pub task: TaskKind,
    pub difficulty: Difficulty,
    pub answer_type: AnswerType,
    /// `exact` or `judge`.
    pub scorer: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prediction: Option<String>,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellReport {
    pub task: TaskKind,
    pub category: Category,
    pub difficulty: Difficulty,
    pub total: usize,
    pub correct: usize,
    pub incorrect: usize,
    pub unanswered: usize,
    /// correct / (correct + incorrect); `None` when nothing was answered.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub vaccount: String,
    pub answerer: String,
    pub items: usize,
    pub cells: Vec<CellReport>,
    pub results: Vec<ItemResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalConfig {
    pub parallelism: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { parallelism: 4 }
    }
}

fn evaluate_item(item: &QAItem, answerer: &dyn Answerer, judge: &dyn ChatModel) -> ItemResult {
    let scorer = match item.answer_type {
        AnswerType::Open => "judge",
        _ => "exact",
    };
    let mut result = ItemResult {
        id: item.id.clone(),
        task: item.task,
        difficulty: item.difficulty,
        answer_type: item.answer_type,
        scorer,
        prediction: None,
        verdict: Verdict::Unanswered,
        rationale: None,
        error: None,
    };
    let prediction = match answerer.answer(item) {
        Ok(p) => p,
        Err(e) => {
            debug!(item = %item.id, error = %e, "answerer failed");
            result.error = Some(e);
            return result;
        }
    };
    let verdict = if item.answer_type == AnswerType::Open {
        score_judge(&prediction, item, judge).map(|v| {
            result.rationale = Some(v.rationale);
            v.correct
        })
    } else {
        score_exact(&prediction, item).map(Some)
    };
    result.verdict = match verdict {
        Ok(Some(true)) => Verdict::Correct,
        Ok(Some(false)) => Verdict::Incorrect,
        Ok(None) => Verdict::Unanswered,
        Err(e) => {
            result.error = Some(e.to_string());
            Verdict::Unanswered
        }
    };
    result.prediction = Some(prediction);
    result
}

/// Aggregates item results into per-(task, difficulty) cells in task order.
pub fn aggregate(results: &[ItemResult]) -> Vec<CellReport> {
    let mut cells: BTreeMap<(usize, Difficulty), CellReport> = BTreeMap::new();
    for r in results {
        let order = TaskKind::ALL.iter().position(|t| *t == r.task).unwrap_or(usize::MAX);
        let cell = cells.entry((order, r.difficulty)).or_insert(CellReport {
            task: r.task,
            category: r.task.category(),
            difficulty: r.difficulty,
            total: 0,
            correct: 0,
            incorrect: 0,
            unanswered: 0,
            accuracy: None,
        });
        cell.total += 1;
        match r.verdict {
            Verdict::Correct => cell.correct += 1,
            Verdict::Incorrect => cell.incorrect += 1,
            Verdict::Unanswered => cell.unanswered += 1,
        }
    }
    cells
        .into_values()
        .map(|mut c| {
            let answered = c.correct + c.incorrect;
            c.accuracy = (answered > 0).then(|| c.correct as f64 / answered as f64);
            c
        })
        .collect()
}

/// Answers and scores every item. Items run concurrently up to
/// `config.parallelism`; results keep the input order.
pub fn run_eval(
    vaccount: &str,
    items: &[QAItem],
    answerer: &dyn Answerer,
    judge: &dyn ChatModel,
    config: EvalConfig,
) -> EvalReport {
    let results = fan_out(items, config.parallelism, |item| evaluate_item(item, answerer, judge));
    EvalReport {
        vaccount: vaccount.to_string(),
        answerer: answerer.name(),
        items: items.len(),
        cells: aggregate(&results),
        results,
    }
}

impl EvalReport {
    /// Plain-text accuracy table, one block per task category.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "answerer: {}  vaccount: {}  items: {}\n",
            self.answerer, self.vaccount, self.items
        );
        for cat in [
            Category::RelationalConceptIdentification,
            Category::HistoricalRetrievalAndUnderstanding,
        ] {
            let rows: Vec<&CellReport> = self.cells.iter().filter(|c| c.category == cat).collect();
            if rows.is_empty() {
                continue;
            }
            let _ = writeln!(out, "\n{}", cat.title());
            let _ = writeln!(
                out,
                "{:<30} {:<10} {:>8} {:>8} {:>10} {:>11}",
                "task", "difficulty", "accuracy", "correct", "incorrect", "unanswered"
            );
            for c in rows {
                let acc = c.accuracy.map_or_else(|| "-".to_string(), |a| format!("{a:.4}"));
                let _ = writeln!(
                    out,
                    "{:<30} {:<10} {:>8} {:>8} {:>10} {:>11}",
                    c.task.title(),
                    c.difficulty.to_string(),
                    acc,
                    c.correct,
                    c.incorrect,
                    c.unanswered
                );
            }
        }
        out
    }
}
