//! A user's personal knowledge space: concepts (people and animals with a
//! persona and portrait) plus dated multimodal history.
//!
//! On disk this is one JSON document:
//!
//! ```json
//! {
//!   "account_id": "va-001",
//!   "media_dir": "media",
//!   "concepts": [
//!     {"name": "David", "persona": "...", "relation_to_owner": "self", "portrait": "david.jpg"}
//!   ],
//!   "history": [
//!     {"date": "2023-12-24", "description": "...", "images": ["img_001.jpg"]}
//!   ]
//! }
//! ```
//!
//! `media_dir` is resolved relative to the document and defaults to `media`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{normalize_label, MediaRef};
use crate::media::{DirMediaStore, MediaStore};

#[derive(Debug, Error)]
pub enum VaccountError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid vaccount JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid vaccount: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Concept {
    pub name: String,
    #[serde(default)]
    pub persona: String,
    #[serde(default)]
    pub relation_to_owner: String,
    pub portrait: String,
}

impl Concept {
    pub fn portrait_ref(&self) -> MediaRef {
        MediaRef::new(self.portrait.clone(), None)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEvent {
    pub date: NaiveDate,
    pub description: String,
    pub images: Vec<String>,
}

impl HistoryEvent {
    /// Every image shares the event's date.
    pub fn image_refs(&self) -> impl Iterator<Item = MediaRef> + '_ {
        self.images
            .iter()
            .map(move |id| MediaRef::new(id.clone(), Some(self.date)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vaccount {
    #[serde(rename = "account_id")]
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub media_dir: Option<PathBuf>,
    pub concepts: Vec<Concept>,
    #[serde(default)]
    pub history: Vec<HistoryEvent>,
}

impl Vaccount {
    /// Parses and validates; history is stably sorted by date.
    pub fn from_json(json: &str) -> Result<Self, VaccountError> {
        let mut va: Vaccount = serde_json::from_str(json)?;
        va.history.sort_by_key(|e| e.date);
        va.validate()?;
        Ok(va)
    }

    /// Loads the document and its media directory, checking that every
    /// referenced media id resolves.
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, DirMediaStore), VaccountError> {
        let path = path.as_ref();
        let json = std::fs::read_to_string(path).map_err(|source| VaccountError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let va = Self::from_json(&json)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let store = DirMediaStore::new(base.join(va.media_dir.as_deref().unwrap_or(Path::new("media"))));
        va.check_media(&store)?;
        Ok((va, store))
    }

    pub fn validate(&self) -> Result<(), VaccountError> {
        let mut problems = Vec::new();
        if self.id.trim().is_empty() {
            problems.push("account_id is empty".to_string());
        }
        if self.concepts.is_empty() {
            problems.push("at least one concept is required".to_string());
        }
        let mut names = BTreeSet::new();
        for c in &self.concepts {
            let norm = normalize_label(&c.name);
            if norm.is_empty() {
                problems.push("concept with empty name".to_string());
            } else if !names.insert(norm) {
                problems.push(format!("duplicate concept name {:?}", c.name));
            }
            if c.portrait.trim().is_empty() {
                problems.push(format!("concept {:?} has no portrait", c.name));
            }
        }
        let mut images = BTreeSet::new();
        for (i, e) in self.history.iter().enumerate() {
            if e.images.is_empty() {
                problems.push(format!("history event {i} ({}) has no images", e.date));
            }
            for id in &e.images {
                if id.trim().is_empty() {
                    problems.push(format!("history event {i} has an empty media id"));
                } else if !images.insert(id.as_str()) {
                    problems.push(format!("media id {id:?} appears in more than one event"));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(VaccountError::Invalid(problems))
        }
    }

    pub fn check_media(&self, store: &dyn MediaStore) -> Result<(), VaccountError> {
        let missing: Vec<String> = self
            .media_ids()
            .filter(|id| !store.contains(id))
            .map(|id| format!("media id {id:?} does not resolve"))
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(VaccountError::Invalid(missing))
        }
    }

    /// Portraits followed by history images.
    pub fn media_ids(&self) -> impl Iterator<Item = &str> {
        self.concepts
            .iter()
            .map(|c| c.portrait.as_str())
            .chain(self.history.iter().flat_map(|e| e.images.iter().map(String::as_str)))
    }

    pub fn concept(&self, name: &str) -> Option<&Concept> {
        let norm = normalize_label(name);
        self.concepts.iter().find(|c| normalize_label(&c.name) == norm)
    }
}
