//! Beam-search retrieval over a life graph and the answer wrapper.
//!
//! One run seeds the beam with the top entities for the query, then per
//! iteration searches all (relation, entity) steps off the frontier, lets the
//! model prune them to the best `width`, extends the paths, optionally fetches
//! source records, and stops as soon as the model judges the context
//! sufficient or the depth limit is reached.

mod path;
mod prune;
mod refs;
mod seeds;

pub use path::{render_paths, Path, Step};
pub use prune::{
    prune, rank_candidates, rank_order, search_candidates, Candidate, PruneOutcome, PruneScore, FALLBACK_SCORE,
};
pub use refs::{
    available_refs, fetch_references, parse_verdict, reasoning_check, render_refs, FetchOutcome, Reference,
};
pub use seeds::{
    lexical_ranking, lexical_score, top_entities, ATTR_TOKEN_WEIGHT, FULL_LABEL_BONUS, LABEL_TOKEN_WEIGHT,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, info_span};

use crate::graph::{LifeGraph, NodeId};
use crate::media::MediaStore;
use crate::model::{ChatModel, ChatTurn, MediaPayload, ModelError};
use crate::prompts;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RetrievalError {
    #[error("graph is empty")]
    EmptyGraph,
    #[error("query text is empty")]
    EmptyQuery,
    #[error("invalid retrieval config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    /// Depth limit `d`.
    pub depth: usize,
    /// Beam width `k`, also the number of seed entities.
    pub width: usize,
    pub with_refs: bool,
    pub max_refs: usize,
    /// When false the lexical ranking alone picks the seeds.
    pub model_seed_selection: bool,
    /// Candidates per prune request.
    pub prune_chunk: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            depth: 3,
            width: 3,
            with_refs: true,
            max_refs: 8,
            model_seed_selection: true,
            prune_chunk: 40,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.depth == 0 {
            return Err(RetrievalError::InvalidConfig("depth must be at least 1".into()));
        }
        if self.width == 0 {
            return Err(RetrievalError::InvalidConfig("width must be at least 1".into()));
        }
        if self.prune_chunk == 0 {
            return Err(RetrievalError::InvalidConfig("prune_chunk must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub text: String,
    pub media: Vec<MediaPayload>,
    pub vaccount: Option<String>,
}

impl Query {
    pub fn new(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            media: Vec::new(),
            vaccount: None,
        }
    }

    pub fn with_media(mut self, media: Vec<MediaPayload>) -> Self {
        self.media = media;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationTrace {
    pub depth: usize,
    pub candidates: usize,
    pub retained: Vec<PruneScore>,
    pub refs_added: Vec<String>,
    pub refs_ignored: Vec<String>,
    pub sufficient: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievedContext {
    pub seeds: Vec<NodeId>,
    /// Every retained path in discovery order: the seeds, then each
    /// iteration's extensions in rank order.
    pub paths: Vec<Path>,
    pub refs: Vec<Reference>,
    pub effective_depth: usize,
    pub iterations: Vec<IterationTrace>,
}

impl RetrievedContext {
    /// Retained paths that are not a prefix of another retained path.
    pub fn leaf_paths(&self) -> Vec<Path> {
        leaf_paths(&self.paths)
    }

    pub fn render_paths(&self, graph: &LifeGraph) -> String {
        render_paths(graph, &self.leaf_paths())
    }
}

fn is_prefix(short: &Path, long: &Path) -> bool {
    short.start == long.start && short.len() < long.len() && long.steps[..short.len()] == short.steps[..]
}

pub fn leaf_paths(paths: &[Path]) -> Vec<Path> {
    paths
        .iter()
        .filter(|p| !paths.iter().any(|q| is_prefix(p, q)))
        .cloned()
        .collect()
}

#[derive(Debug, Error)]
pub enum AnswerError {
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("answer generation failed: {source}")]
    Model {
        source: ModelError,
        context: Box<RetrievedContext>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Answer {
    pub text: String,
    pub context: RetrievedContext,
}

pub struct Retriever<'a> {
    graph: &'a LifeGraph,
    model: &'a dyn ChatModel,
    media: Option<&'a dyn MediaStore>,
    config: RetrievalConfig,
}

impl<'a> Retriever<'a> {
    pub fn new(graph: &'a LifeGraph, model: &'a dyn ChatModel) -> Self {
        Self {
            graph,
            model,
            media: None,
            config: RetrievalConfig::default(),
        }
    }

    pub fn with_media(mut self, store: &'a dyn MediaStore) -> Self {
        self.media = Some(store);
        self
    }

    pub fn with_config(mut self, config: RetrievalConfig) -> Self {
        self.config = config;
        self
    }

    pub fn config(&self) -> &RetrievalConfig {
        &self.config
    }

    pub fn retrieve(&self, query: &Query) -> Result<RetrievedContext, RetrievalError> {
        let cfg = &self.config;
        cfg.validate()?;
        if query.text.trim().is_empty() {
            return Err(RetrievalError::EmptyQuery);
        }
        let graph = self.graph;
        let _span = info_span!("retrieve", depth = cfg.depth, width = cfg.width).entered();
        let seed_model = cfg.model_seed_selection.then_some(self.model);
        let seeds = top_entities(&query.text, graph, cfg.width, seed_model)?;
        let mut paths: Vec<Path> = seeds.iter().cloned().map(Path::seed).collect();
        let mut frontier = paths.clone();
        let mut refs: Vec<Reference> = Vec::new();
        let mut iterations = Vec::new();
        let mut effective_depth = 0;

        for depth in 1..=cfg.depth {
            effective_depth = depth;
            let candidates = search_candidates(graph, &frontier);
            if candidates.is_empty() {
                debug!(depth, "frontier exhausted");
                iterations.push(IterationTrace {
                    depth,
                    candidates: 0,
                    retained: Vec::new(),
                    refs_added: Vec::new(),
                    refs_ignored: Vec::new(),
                    sufficient: false,
                });
                break;
            }
            let leaves = leaf_paths(&paths);
            let pruned = prune(
                self.model,
                &query.text,
                graph,
                &frontier,
                &leaves,
                &candidates,
                cfg.width,
                cfg.prune_chunk,
            );
            let extended: Vec<Path> = pruned
                .retained
                .iter()
                .map(|s| frontier[s.candidate.origin].extended(s.candidate.step()))
                .collect();
            debug_assert!(extended.iter().all(|p| p.is_valid_in(graph)));
            paths.extend(extended.iter().cloned());
            frontier = extended;

            let leaves = leaf_paths(&paths);
            let fetched = match (cfg.with_refs, self.media) {
                (true, Some(store)) => {
                    fetch_references(self.model, &query.text, graph, &leaves, store, &mut refs, cfg.max_refs)
                }
                _ => FetchOutcome::default(),
            };
            let sufficient = reasoning_check(self.model, &query.text, graph, &leaves, &refs, cfg.with_refs);
            iterations.push(IterationTrace {
                depth,
                candidates: candidates.len(),
                retained: pruned.retained,
                refs_added: fetched.added,
                refs_ignored: fetched.ignored,
                sufficient,
            });
            if sufficient {
                break;
            }
        }

        Ok(RetrievedContext {
            seeds,
            paths,
            refs,
            effective_depth,
            iterations,
        })
    }

    /// The final generation conversation for a retrieved context.
    pub fn answer_conversation(&self, query: &Query, context: &RetrievedContext) -> Vec<ChatTurn> {
        let refs: &[Reference] = if self.config.with_refs { &context.refs } else { &[] };
        let prompt = prompts::render(
            prompts::ANSWER,
            &[
                ("query", &query.text),
                ("paths", &context.render_paths(self.graph)),
                ("refs", &render_refs(refs)),
            ],
        );
        let mut media = query.media.clone();
        media.extend(refs.iter().map(|r| r.payload.clone()));
        vec![
            ChatTurn::system(prompts::SYSTEM.trim_end()),
            ChatTurn::user_with_media(prompt, media),
        ]
    }

    pub fn answer(&self, query: &Query) -> Result<Answer, AnswerError> {
        let context = self.retrieve(query)?;
        let conversation = self.answer_conversation(query, &context);
        match self.model.complete(&conversation) {
            Ok(r) => Ok(Answer {
                text: r.text.trim().to_string(),
                context,
            }),
            Err(source) => Err(AnswerError::Model {
                source,
                context: Box::new(context),
            }),
        }
    }
}
