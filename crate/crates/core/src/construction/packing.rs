use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::vaccount::HistoryEvent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackingConfig {
    pub capacity: u64,
    pub image_cost: u64,
}

impl Default for PackingConfig {
    fn default() -> Self {
        Self {
            capacity: 2048,
            image_cost: 256,
        }
    }
}

impl PackingConfig {
    /// Images times `image_cost` plus a token estimate of the description
    /// (one token per four characters, rounded up).
    pub fn weight(&self, event: &HistoryEvent) -> u64 {
        let chars = event.description.chars().count() as u64;
        event.images.len() as u64 * self.image_cost + chars.div_ceil(4)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExtractionBatch {
    pub events: Vec<HistoryEvent>,
    pub weight: u64,
    /// A single event heavier than the capacity.
    pub over_capacity: bool,
}

impl ExtractionBatch {
    pub fn media_ids(&self) -> impl Iterator<Item = &str> {
        self.events.iter().flat_map(|e| e.images.iter().map(String::as_str))
    }
}

/// Greedy sequential packing: each event joins the open batch if it still
/// fits, otherwise it opens a new one. Input order is preserved, so callers
/// pass history in chronological order.
pub fn pack_batches(history: &[HistoryEvent], config: &PackingConfig) -> Vec<ExtractionBatch> {
    let mut batches: Vec<ExtractionBatch> = Vec::new();
    for event in history {
        let w = config.weight(event);
        match batches.last_mut() {
            Some(open) if !open.over_capacity && open.weight + w <= config.capacity => {
                open.events.push(event.clone());
                open.weight += w;
            }
            _ => {
                let over = w > config.capacity;
                if over {
                    warn!(date = %event.date, weight = w, capacity = config.capacity, "event exceeds batch capacity; packing alone");
                }
                batches.push(ExtractionBatch {
                    events: vec![event.clone()],
                    weight: w,
                    over_capacity: over,
                });
            }
        }
    }
    batches
}
