//! Chunk-granularity edge cache: admit-all, LRU replacement.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identity of one representation of one chunk, `v_{j,k,m}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ContentKey {
    pub video: u32,
    pub chunk: u32,
    pub quality: usize,
}

impl ContentKey {
    pub fn new(video: u32, chunk: u32, quality: usize) -> Self {
        Self {
            video,
            chunk,
            quality,
        }
    }
}

// (caller tick, internal sequence): ties on the tick are broken by call order.
type Recency = (u64, u64);

#[derive(Debug, Clone, Copy)]
struct Entry {
    size_bits: u64,
    recency: Recency,
}

#[derive(Debug, Clone)]
pub struct CacheState {
    capacity_bits: u64,
    used_bits: u64,
    entries: BTreeMap<ContentKey, Entry>,
    order: BTreeMap<Recency, ContentKey>,
    seq: u64,
}

impl CacheState {
    pub fn new(capacity_bits: u64) -> Self {
        Self {
            capacity_bits,
            used_bits: 0,
            entries: BTreeMap::new(),
            order: BTreeMap::new(),
            seq: 0,
        }
    }

    pub fn capacity_bits(&self) -> u64 {
        self.capacity_bits
    }

    pub fn used_bits(&self) -> u64 {
        self.used_bits
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Presence query (`x_{j,k,m}`). Does not count as a use.
    pub fn contains(&self, key: &ContentKey) -> bool {
        self.entries.contains_key(key)
    }

    fn next_recency(&mut self, now: u64) -> Recency {
        self.seq += 1;
        (now, self.seq)
    }

    /// Admit `key`, evicting least-recently-touched entries until it fits.
    /// Returns the evicted keys in eviction order.
    pub fn insert(&mut self, key: ContentKey, size_bits: u64, now: u64) -> Result<Vec<ContentKey>> {
        if size_bits > self.capacity_bits {
            return Err(Error::Oversized {
                size_bits,
                capacity_bits: self.capacity_bits,
            });
        }
        if self.entries.contains_key(&key) {
            self.touch(&key, now);
            return Ok(Vec::new());
        }
        let mut evicted = Vec::new();
        while self.used_bits + size_bits > self.capacity_bits {
            let (_, victim) = self
                .order
                .pop_first()
                .expect("used bits imply at least one entry");
            let e = self
                .entries
                .remove(&victim)
                .expect("order and entries agree");
            self.used_bits -= e.size_bits;
            evicted.push(victim);
        }
        let recency = self.next_recency(now);
        self.entries.insert(key, Entry { size_bits, recency });
        self.order.insert(recency, key);
        self.used_bits += size_bits;
        Ok(evicted)
    }

    /// Mark a cache hit as a use. Missing keys are ignored.
    pub fn touch(&mut self, key: &ContentKey, now: u64) {
        if !self.entries.contains_key(key) {
            return;
        }
        let recency = self.next_recency(now);
        let entry = self.entries.get_mut(key).unwrap();
        self.order.remove(&entry.recency);
        entry.recency = recency;
        self.order.insert(recency, *key);
    }

    /// Keys from least to most recently used.
    pub fn lru_order(&self) -> Vec<ContentKey> {
        self.order.values().copied().collect()
    }
}
