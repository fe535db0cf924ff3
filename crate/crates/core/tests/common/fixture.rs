//! The bundled family fixture and an anchoring oracle that reads the mock
//! script directly instead of going through the construction code.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use lifegraph::construction::{BuildReport, GraphBuilder};
use lifegraph::graph::{EntityKind, LifeGraph, MediaRef};
use lifegraph::media::DirMediaStore;
use lifegraph::model::ScriptedMock;
use lifegraph::vaccount::Vaccount;
use serde_json::Value;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn vaccount_path() -> PathBuf {
    fixtures().join("vaccount/family.json")
}

pub fn script_path() -> PathBuf {
    fixtures().join("mock/script.json")
}

pub fn load() -> (Vaccount, DirMediaStore, ScriptedMock) {
    let (va, store) = Vaccount::load(vaccount_path()).expect("fixture vaccount");
    let mock = ScriptedMock::from_path(script_path()).expect("fixture script");
    (va, store, mock)
}

pub fn build() -> (LifeGraph, BuildReport, Vaccount, DirMediaStore, ScriptedMock) {
    let (va, store, mock) = load();
    let (g, report) = GraphBuilder::new(&mock)
        .with_media(&store)
        .build(&va)
        .expect("fixture build");
    (g, report, va, store, mock)
}

pub fn queries() -> Vec<String> {
    std::fs::read_to_string(fixtures().join("queries.txt"))
        .expect("queries")
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect()
}

fn key(label: &str) -> String {
    label.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Entity candidates the script hands out, by batch key: `"scaffold"` or
/// the first image id of the history batch.
pub fn scripted_candidates() -> BTreeMap<String, BTreeSet<String>> {
    let script: Value = serde_json::from_str(&std::fs::read_to_string(script_path()).unwrap()).unwrap();
    let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for rule in script["rules"].as_array().unwrap() {
        let contains: Vec<&str> = rule["when"]["contains"]
            .as_array()
            .map(|a| a.iter().filter_map(Value::as_str).collect())
            .unwrap_or_default();
        if contains.first() != Some(&"TASK: extract-entities") {
            continue;
        }
        let batch = if contains.contains(&"STEP: scaffold") {
            "scaffold".to_string()
        } else {
            contains.last().unwrap().to_string()
        };
        let text = rule["respond"].as_str().unwrap();
        let body = text.trim().trim_start_matches("```json").trim_end_matches("```");
        let json: Value = serde_json::from_str(body.trim()).unwrap();
        let names = json["entities"]
            .as_array()
            .unwrap()
            .iter()
            .map(|e| key(e["name"].as_str().unwrap()));
        out.entry(batch).or_default().extend(names);
    }
    out
}

/// Checks that every element carries resolvable refs and that both ends of
/// every edge (and every attribute entity) are candidates of the batch its
/// refs come from, a concept, or that batch's date.
pub fn check_anchoring(g: &LifeGraph, va: &Vaccount) -> Result<(), String> {
    let candidates = scripted_candidates();
    let concepts: BTreeSet<String> = va.concepts.iter().map(|c| key(&c.name)).collect();
    let portraits: BTreeSet<&str> = va.concepts.iter().map(|c| c.portrait.as_str()).collect();
    // image -> (batch key, date)
    let mut image_batch = BTreeMap::new();
    for ev in &va.history {
        for img in &ev.images {
            image_batch.insert(img.as_str(), (ev.images[0].clone(), ev.date));
        }
    }
    let allowed_for = |r: &MediaRef| -> Result<BTreeSet<String>, String> {
        let mut allowed = concepts.clone();
        if portraits.contains(r.media_id.as_str()) {
            if r.date.is_some() {
                return Err(format!("portrait ref {} carries a date", r.media_id));
            }
            allowed.extend(candidates.get("scaffold").cloned().unwrap_or_default());
        } else if let Some((batch, date)) = image_batch.get(r.media_id.as_str()) {
            if r.date != Some(*date) {
                return Err(format!("ref {} dated {:?}, event is {date}", r.media_id, r.date));
            }
            allowed.extend(candidates.get(batch).cloned().unwrap_or_default());
            allowed.insert(date.to_string());
        } else {
            return Err(format!("ref {} is not in the vaccount", r.media_id));
        }
        Ok(allowed)
    };
    for n in g.nodes() {
        if n.source_refs.is_empty() {
            return Err(format!("node {} has no source refs", n.label));
        }
        for r in &n.source_refs {
            allowed_for(r)?;
        }
    }
    for e in g.edges() {
        if e.source_refs.is_empty() {
            return Err(format!("edge {} has no source refs", e.relation));
        }
        let mut ends: Vec<&lifegraph::graph::NodeId> = e.endpoints().to_vec();
        ends.extend(e.attr_entities().map(|(_, n)| n));
        // Anchored if some ref's batch explains every participant.
        let mut anchored = false;
        for r in &e.source_refs {
            let allowed = allowed_for(r)?;
            if ends
                .iter()
                .all(|id| g.node(id).is_some_and(|n| allowed.contains(&key(&n.label))))
            {
                anchored = true;
            }
        }
        if !anchored {
            let s = &g.node(&e.subject).unwrap().label;
            let o = &g.node(&e.object).unwrap().label;
            return Err(format!("({s}, {}, {o}) is not anchored by any of its refs", e.relation));
        }
    }
    // Every event node links to exactly one date.
    for n in g.nodes().filter(|n| n.kind == EntityKind::Event) {
        let dates = g
            .neighbors(&n.id)
            .unwrap()
            .into_iter()
            .filter(|nb| nb.node.kind == EntityKind::Date)
            .count();
        if dates != 1 {
            return Err(format!("event {} has {dates} date links", n.label));
        }
    }
    Ok(())
}

/// Delegates to `inner` but declares every context sufficient.
pub struct AlwaysSufficient<M>(pub M);

impl<M: lifegraph::model::ChatModel> lifegraph::model::ChatModel for AlwaysSufficient<M> {
    fn complete(
        &self,
        conversation: &[lifegraph::model::ChatTurn],
    ) -> Result<lifegraph::model::ModelResponse, lifegraph::model::ModelError> {
        let last = conversation.last().map_or("", |t| t.text.as_str());
        if last.contains("TASK: reasoning-check") {
            return Ok(lifegraph::model::ModelResponse::text("SUFFICIENT"));
        }
        self.0.complete(conversation)
    }

    fn max_parallelism(&self) -> usize {
        self.0.max_parallelism()
    }
}

pub fn qa_path() -> PathBuf {
    fixtures().join("vaccount/family.qa.jsonl")
}

pub fn mixed_answers_path() -> PathBuf {
    fixtures().join("answers/mixed.json")
}

/// Worked out by hand from `answers/mixed.json` against the gold answers:
/// (task, difficulty, correct, incorrect, unanswered).
pub const MIXED_TABLE: [(&str, &str, usize, usize, usize); 13] = [
    ("text_concept_qa", "easy", 2, 0, 0),
    ("text_concept_qa", "medium", 0, 1, 1),
    ("visual_concept_recognition", "easy", 1, 2, 0),
    ("visual_concept_recognition", "medium", 2, 0, 1),
    ("concept_vqa", "easy", 1, 1, 0),
    ("concept_vqa", "medium", 2, 0, 0),
    ("scene_and_activity", "medium", 2, 1, 1),
    ("direct_person_centric", "medium", 3, 1, 0),
    ("relational_person_centric", "medium", 2, 1, 1),
    ("fine_grained_scene", "medium", 2, 2, 0),
    ("preference_and_persona", "medium", 2, 0, 1),
    ("frequency_and_counting", "hard", 2, 2, 0),
    ("relational_temporal_reasoning", "hard", 1, 1, 1),
];

/// Cells of an eval report as (task, difficulty, correct, incorrect,
/// unanswered), using the serialized names.
pub fn report_cells(report: &lifegraph::bench::EvalReport) -> Vec<(String, String, usize, usize, usize)> {
    report
        .cells
        .iter()
        .map(|c| {
            let name = |v: Value| v.as_str().unwrap().to_string();
            (
                name(serde_json::to_value(c.task).unwrap()),
                name(serde_json::to_value(c.difficulty).unwrap()),
                c.correct,
                c.incorrect,
                c.unanswered,
            )
        })
        .collect()
}
