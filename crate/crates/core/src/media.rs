//! Resolution of media ids to payloads.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::model::MediaPayload;

#[derive(Debug, Error)]
pub enum MediaError {
    #[error("media id {0:?} not found")]
    NotFound(String),
    #[error("media id {0:?} is not a plain file name")]
    InvalidId(String),
    #[error("reading media {id:?}: {source}")]
    Io {
        id: String,
        #[source]
        source: std::io::Error,
    },
}

pub trait MediaStore: Send + Sync {
    fn fetch(&self, media_id: &str) -> Result<MediaPayload, MediaError>;

    fn contains(&self, media_id: &str) -> bool;
}

pub fn mime_for(media_id: &str) -> &'static str {
    let ext = Path::new(media_id)
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("png") => "image/png",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        Some("txt") => "text/plain",
        Some("md") => "text/markdown",
        _ => "application/octet-stream",
    }
}

/// Media ids are file names under `root`.
#[derive(Debug, Clone)]
pub struct DirMediaStore {
    root: PathBuf,
}

impl DirMediaStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path_for(&self, media_id: &str) -> Result<PathBuf, MediaError> {
        let bad = media_id.is_empty() || media_id.contains(['/', '\\']) || media_id == "." || media_id == "..";
        if bad {
            return Err(MediaError::InvalidId(media_id.to_string()));
        }
        Ok(self.root.join(media_id))
    }
}

impl MediaStore for DirMediaStore {
    fn fetch(&self, media_id: &str) -> Result<MediaPayload, MediaError> {
        let path = self.path_for(media_id)?;
        let data = std::fs::read(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                MediaError::NotFound(media_id.to_string())
            } else {
                MediaError::Io {
                    id: media_id.to_string(),
                    source: e,
                }
            }
        })?;
        Ok(MediaPayload {
            media_id: media_id.to_string(),
            mime: mime_for(media_id).to_string(),
            data,
        })
    }

    fn contains(&self, media_id: &str) -> bool {
        self.path_for(media_id).map(|p| p.is_file()).unwrap_or(false)
    }
}

#[derive(Debug, Clone, Default)]
pub struct MemoryMediaStore {
    items: BTreeMap<String, MediaPayload>,
}

impl MemoryMediaStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, media_id: impl Into<String>, data: impl Into<Vec<u8>>) {
        let media_id = media_id.into();
        let mime = mime_for(&media_id).to_string();
        self.items.insert(
            media_id.clone(),
            MediaPayload {
                media_id,
                mime,
                data: data.into(),
            },
        );
    }

    pub fn with(mut self, media_id: impl Into<String>, data: impl Into<Vec<u8>>) -> Self {
        self.insert(media_id, data);
        self
    }
}

impl MediaStore for MemoryMediaStore {
    fn fetch(&self, media_id: &str) -> Result<MediaPayload, MediaError> {
        self.items
            .get(media_id)
            .cloned()
            .ok_or_else(|| MediaError::NotFound(media_id.to_string()))
    }

    fn contains(&self, media_id: &str) -> bool {
        self.items.contains_key(media_id)
    }
}

impl<S: MediaStore + ?Sized> MediaStore for &S {
    fn fetch(&self, media_id: &str) -> Result<MediaPayload, MediaError> {
        (**self).fetch(media_id)
    }

    fn contains(&self, media_id: &str) -> bool {
        (**self).contains(media_id)
    }
}
