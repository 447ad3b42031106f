//! Confidence-filtered candidate selection and the class-rebalanced memory
//! buffer, with a classic reservoir buffer as the baseline.

use std::collections::BTreeMap;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::patchgraph::FeatureMap;

/// A single-label cut-out stored for replay.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryItem {
    pub crop: FeatureMap,
    pub label: usize,
    pub confidence: f64,
    pub source_task: usize,
}

impl MemoryItem {
    pub fn area(&self) -> usize {
        self.crop.n_patches()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionPolicy {
    /// Threshold for classes seen less than half as often as the most
    /// frequent one.
    pub tau1: f64,
    pub tau2: f64,
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        Self {
            tau1: 0.6,
            tau2: 0.8,
        }
    }
}

impl SelectionPolicy {
    pub const SECOND_MAX_CAP: f64 = 0.5;

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.tau1 && self.tau1 < self.tau2 && self.tau2 < 1.0) {
            return Err(Error::config(
                "selection",
                format!("need 0 < tau1 < tau2 < 1, got {} and {}", self.tau1, self.tau2),
            ));
        }
        Ok(())
    }

    /// Confidence threshold for `class` given stream label frequencies.
    pub fn threshold_for(&self, class: usize, stream_freq: &[u64]) -> f64 {
        let max = stream_freq.iter().copied().max().unwrap_or(0);
        let f = stream_freq.get(class).copied().unwrap_or(0);
        if 2 * f < max {
            self.tau1
        } else {
            self.tau2
        }
    }

    /// Returns the admitted label and its confidence, if any.
    pub fn admit(&self, p_obj: &[f64], stream_freq: &[u64]) -> Option<(usize, f64)> {
        let ((label, _), _) = top_two(p_obj)?;
        self.admit_at(p_obj, self.threshold_for(label, stream_freq))
    }

    /// Single-threshold variant of [`SelectionPolicy::admit`].
    pub fn admit_at(&self, p_obj: &[f64], tau: f64) -> Option<(usize, f64)> {
        let ((label, conf), second) = top_two(p_obj)?;
        (conf > tau && second < Self::SECOND_MAX_CAP).then_some((label, conf))
    }
}

/// Argmax with its value, and the second-largest value.
fn top_two(p_obj: &[f64]) -> Option<((usize, f64), f64)> {
    let mut top = None::<(usize, f64)>;
    let mut second = f64::NEG_INFINITY;
    for (c, &p) in p_obj.iter().enumerate() {
        match top {
            Some((_, t)) if p <= t => second = second.max(p),
            Some((_, t)) => {
                second = t;
                top = Some((c, p));
            }
            None => top = Some((c, p)),
        }
    }
    top.map(|t| (t, second))
}

pub fn select_candidates(
    crops: Vec<(FeatureMap, Vec<f64>)>,
    policy: &SelectionPolicy,
    stream_freq: &[u64],
    source_task: usize,
) -> Vec<MemoryItem> {
    crops
        .into_iter()
        .filter_map(|(crop, p)| {
            policy.admit(&p, stream_freq).map(|(label, confidence)| MemoryItem {
                crop,
                label,
                confidence,
                source_task,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Accounting {
    #[default]
    Count,
    Area,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    Inserted,
    /// Inserted after evicting this many items.
    Replaced(usize),
    Rejected,
}

#[derive(Debug, Clone)]
pub struct MemoryBuffer {
    items: Vec<MemoryItem>,
    capacity: usize,
    accounting: Accounting,
    class_counts: Vec<usize>,
    used_area: usize,
    /// Running histogram of observed stream labels.
    pub stream_class_freq: Vec<u64>,
}

impl MemoryBuffer {
    pub fn new(capacity: usize, accounting: Accounting, n_classes: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("buffer.capacity", "must be positive"));
        }
        Ok(Self {
            items: Vec::new(),
            capacity,
            accounting,
            class_counts: vec![0; n_classes],
            used_area: 0,
            stream_class_freq: vec![0; n_classes],
        })
    }

    pub fn items(&self) -> &[MemoryItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn accounting(&self) -> Accounting {
        self.accounting
    }

    pub fn used(&self) -> usize {
        match self.accounting {
            Accounting::Count => self.items.len(),
            Accounting::Area => self.used_area,
        }
    }

    fn cost(&self, item: &MemoryItem) -> usize {
        match self.accounting {
            Accounting::Count => 1,
            Accounting::Area => item.area(),
        }
    }

    fn fits(&self, item: &MemoryItem) -> bool {
        self.used() + self.cost(item) <= self.capacity
    }

    pub fn observe_stream_labels(&mut self, labels: &[usize]) {
        for &c in labels {
            self.grow_classes(c + 1);
            self.stream_class_freq[c] += 1;
        }
    }

    fn grow_classes(&mut self, n: usize) {
        if self.class_counts.len() < n {
            self.class_counts.resize(n, 0);
            self.stream_class_freq.resize(n, 0);
        }
    }

    fn check_item(&self, item: &MemoryItem) -> Result<()> {
        if !(item.confidence > 0.0 && item.confidence <= 1.0) {
            return Err(Error::Shape(format!("confidence {} outside (0, 1]", item.confidence)));
        }
        if self.cost(item) > self.capacity {
            return Err(Error::Oversize {
                area: item.area(),
                capacity: self.capacity,
            });
        }
        Ok(())
    }

    fn push(&mut self, item: MemoryItem) {
        self.grow_classes(item.label + 1);
        self.class_counts[item.label] += 1;
        self.used_area += item.area();
        self.items.push(item);
    }

    fn remove_at(&mut self, idx: usize) -> MemoryItem {
        let item = self.items.swap_remove(idx);
        self.class_counts[item.label] -= 1;
        self.used_area -= item.area();
        item
    }

    /// Class with the most items, ties broken uniformly at random.
    fn most_frequent_class(&self, rng: &mut impl Rng) -> Option<usize> {
        let max = *self.class_counts.iter().max()?;
        if max == 0 {
            return None;
        }
        let tied: Vec<usize> = (0..self.class_counts.len())
            .filter(|&c| self.class_counts[c] == max)
            .collect();
        Some(tied[rng.gen_range(0..tied.len())])
    }

    fn evict_from_most_frequent(&mut self, rng: &mut impl Rng) -> bool {
        let Some(class) = self.most_frequent_class(rng) else {
            return false;
        };
        let k = rng.gen_range(0..self.class_counts[class]);
        let idx = self
            .items
            .iter()
            .enumerate()
            .filter(|(_, it)| it.label == class)
            .nth(k)
            .map(|(i, _)| i)
            .expect("class count matches items");
        self.remove_at(idx);
        true
    }

    /// Class-rebalanced reservoir insertion.
    pub fn insert(&mut self, item: MemoryItem, rng: &mut impl Rng) -> Result<InsertOutcome> {
        self.check_item(&item)?;
        if self.fits(&item) {
            self.push(item);
            return Ok(InsertOutcome::Inserted);
        }
        let m = self.class_counts.get(item.label).copied().unwrap_or(0);
        let m_max = self.class_counts.iter().copied().max().unwrap_or(0);
        let accept = if m_max == 0 {
            1.0
        } else {
            1.0 - m as f64 / m_max as f64
        };
        if !rng.gen_bool(accept.clamp(0.0, 1.0)) {
            return Ok(InsertOutcome::Rejected);
        }
        let mut evicted = 0;
        while !self.fits(&item) && self.evict_from_most_frequent(rng) {
            evicted += 1;
        }
        self.push(item);
        Ok(InsertOutcome::Replaced(evicted))
    }

    /// Classic reservoir sampling; `seen_count` counts this item.
    pub fn vanilla_reservoir_insert(
        &mut self,
        item: MemoryItem,
        seen_count: u64,
        rng: &mut impl Rng,
    ) -> Result<InsertOutcome> {
        self.check_item(&item)?;
        if self.fits(&item) {
            self.push(item);
            return Ok(InsertOutcome::Inserted);
        }
        if self.items.is_empty() {
            return Ok(InsertOutcome::Rejected);
        }
        let slot = rng.gen_range(0..seen_count.max(1));
        if slot >= self.items.len() as u64 {
            return Ok(InsertOutcome::Rejected);
        }
        let mut idx = slot as usize;
        let mut evicted = 0;
        loop {
            self.remove_at(idx);
            evicted += 1;
            if self.fits(&item) || self.items.is_empty() {
                break;
            }
            idx = rng.gen_range(0..self.items.len());
        }
        self.push(item);
        Ok(InsertOutcome::Replaced(evicted))
    }

    /// Uniform without replacement, or with replacement when `batch_size`
    /// exceeds the buffer.
    pub fn sample_replay_batch(&self, batch_size: usize, rng: &mut impl Rng) -> Result<Vec<&MemoryItem>> {
        if self.items.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let n = self.items.len();
        if batch_size <= n {
            Ok(sample_indices(rng, n, batch_size)
                .into_iter()
                .map(|i| &self.items[i])
                .collect())
        } else {
            Ok((0..batch_size).map(|_| &self.items[rng.gen_range(0..n)]).collect())
        }
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        self.class_counts.clone()
    }

    /// Max over min class count among classes present in the buffer.
    pub fn balance_ratio(&self) -> Option<f64> {
        let present: Vec<usize> = self.class_counts.iter().copied().filter(|&c| c > 0).collect();
        let max = *present.iter().max()?;
        let min = *present.iter().min()?;
        Some(max as f64 / min as f64)
    }

    pub fn snapshot(&self) -> BufferSnapshot {
        BufferSnapshot {
            schema_version: 1,
            capacity: self.capacity,
            accounting: self.accounting,
            used: self.used(),
            class_histogram: self
                .class_counts
                .iter()
                .enumerate()
                .filter(|(_, &n)| n > 0)
                .map(|(c, &n)| (c, n))
                .collect(),
            items: self
                .items
                .iter()
                .map(|it| ItemMeta {
                    labels: vec![it.label],
                    confidence: it.confidence,
                    area: it.area(),
                    crop_h: it.crop.grid_h(),
                    crop_w: it.crop.grid_w(),
                    source_task: it.source_task,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemMeta {
    pub labels: Vec<usize>,
    pub confidence: f64,
    pub area: usize,
    pub crop_h: usize,
    pub crop_w: usize,
    pub source_task: usize,
}

/// Buffer contents without the crops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferSnapshot {
    pub schema_version: u32,
    pub capacity: usize,
    pub accounting: Accounting,
    pub used: usize,
    pub class_histogram: BTreeMap<usize, usize>,
    pub items: Vec<ItemMeta>,
}
