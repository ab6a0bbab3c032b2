//! Read-only frame sequence with a shared, bounded cache of search levels.

use std::collections::HashMap;
use std::hash::Hash;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{invalid, Result};
use crate::frames::{band_limit, resample_bicubic, Frame};
use crate::retrieval::zncc::SearchLevels;
use crate::retrieval::{check_origin, retrieve_global, GlobalRetrieval, SearchConfig};
use crate::scalar::Real;

/// Default cache budget in bytes.
pub const DEFAULT_CACHE_BYTES: usize = 256 << 20;

struct Slot<V> {
    cell: Arc<OnceLock<Arc<V>>>,
    last_used: u64,
    bytes: usize,
}

struct CacheState<K, V> {
    slots: HashMap<K, Slot<V>>,
    tick: u64,
    total: usize,
}

/// Initialize-once cache with least-recently-used eviction under a byte
/// budget. Values are pure functions of their key, so an evicted entry that
/// is rebuilt is identical to the original.
pub struct OnceCache<K, V> {
    state: Mutex<CacheState<K, V>>,
    budget: usize,
}

impl<K: Eq + Hash + Clone, V> OnceCache<K, V> {
    pub fn new(budget: usize) -> Self {
        Self {
            state: Mutex::new(CacheState {
                slots: HashMap::new(),
                tick: 0,
                total: 0,
            }),
            budget,
        }
    }

    pub fn get_or_init(&self, key: K, build: impl FnOnce() -> V, size: impl Fn(&V) -> usize) -> Arc<V> {
        let cell = {
            let mut st = self.state.lock().expect("cache lock");
            st.tick += 1;
            let tick = st.tick;
            let slot = st.slots.entry(key.clone()).or_insert_with(|| Slot {
                cell: Arc::new(OnceLock::new()),
                last_used: tick,
                bytes: 0,
            });
            slot.last_used = tick;
            slot.cell.clone()
        };
        let mut fresh = false;
        let value = cell
            .get_or_init(|| {
                fresh = true;
                Arc::new(build())
            })
            .clone();
        if fresh {
            let bytes = size(&value);
            let mut st = self.state.lock().expect("cache lock");
            if let Some(slot) = st.slots.get_mut(&key) {
                slot.bytes = bytes;
                st.total += bytes;
            }
            while st.total > self.budget && st.slots.len() > 1 {
                let victim = st
                    .slots
                    .iter()
                    .filter(|(k, s)| **k != key && s.bytes > 0)
                    .min_by_key(|(_, s)| s.last_used)
                    .map(|(k, _)| k.clone());
                let Some(victim) = victim else { break };
                if let Some(s) = st.slots.remove(&victim) {
                    st.total -= s.bytes;
                }
            }
        }
        value
    }

    pub fn len(&self) -> usize {
        self.state.lock().expect("cache lock").slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bytes(&self) -> usize {
        self.state.lock().expect("cache lock").total
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct SearchKey {
    frame: usize,
    scale_bits: u64,
    factor: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct UpsampleKey {
    frame: usize,
    scale_bits: u64,
}

/// The video being processed: color frames, their luma, and the caches of
/// derived search images.
pub struct FrameStore<T> {
    frames: Vec<Frame<T>>,
    lumas: Vec<Frame<T>>,
    levels: OnceCache<SearchKey, SearchLevels<T>>,
    upsampled: OnceCache<UpsampleKey, Frame<T>>,
    retrievals: OnceCache<(usize, (usize, usize), String), GlobalRetrieval<T>>,
}

impl<T: Real> FrameStore<T> {
    pub fn new(frames: Vec<Frame<T>>) -> Result<Self> {
        Self::with_cache_budget(frames, DEFAULT_CACHE_BYTES)
    }

    /// `budget` bytes are shared between band-limited search levels (3/4),
    /// upsampled query frames (3/16) and memoized global retrievals (1/16).
    pub fn with_cache_budget(frames: Vec<Frame<T>>, budget: usize) -> Result<Self> {
        let Some(first) = frames.first() else {
            return Err(invalid("empty video"));
        };
        let shape = (first.width(), first.height(), first.channels());
        if let Some(bad) = frames
            .iter()
            .position(|f| (f.width(), f.height(), f.channels()) != shape)
        {
            return Err(invalid(format!("frame {bad} differs in size from frame 0")));
        }
        let lumas = frames.iter().map(Frame::luma).collect();
        Ok(Self {
            frames,
            lumas,
            levels: OnceCache::new(budget / 4 * 3),
            upsampled: OnceCache::new(budget / 16 * 3),
            retrievals: OnceCache::new(budget / 16),
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.frames[0].dims()
    }

    pub fn frame(&self, t: usize) -> &Frame<T> {
        &self.frames[t]
    }

    pub fn frames(&self) -> &[Frame<T>] {
        &self.frames
    }

    pub fn luma(&self, t: usize) -> &Frame<T> {
        &self.lumas[t]
    }

    /// Search levels of frame `t` band-limited by `scale` (`scale == 1`
    /// leaves the frame untouched).
    pub fn search_levels(&self, t: usize, scale: f64, factor: usize) -> Arc<SearchLevels<T>> {
        let key = SearchKey {
            frame: t,
            scale_bits: scale.to_bits(),
            factor,
        };
        self.levels.get_or_init(
            key,
            || {
                let base = if scale > 1.0 {
                    band_limit(&self.lumas[t], scale).expect("scale > 1")
                } else {
                    self.lumas[t].clone()
                };
                SearchLevels::new(base, factor)
            },
            SearchLevels::bytes,
        )
    }

    /// Luma of frame `t` bicubically upsampled by `scale`.
    pub fn upsampled_luma(&self, t: usize, scale: f64) -> Arc<Frame<T>> {
        let key = UpsampleKey {
            frame: t,
            scale_bits: scale.to_bits(),
        };
        self.upsampled.get_or_init(
            key,
            || resample_bicubic(&self.lumas[t], scale).expect("positive scale"),
            |f| f.data().len() * std::mem::size_of::<T>(),
        )
    }

    /// [`retrieve_global`] memoized per frame, origin and search settings.
    pub fn global_retrieval(
        &self,
        t: usize,
        origin: (usize, usize),
        cfg: &SearchConfig,
    ) -> Result<Arc<GlobalRetrieval<T>>> {
        check_origin(self, t, origin, cfg.patch_size)?;
        let key = (t, origin, format!("{cfg:?}"));
        Ok(self.retrievals.get_or_init(
            key,
            || retrieve_global(self, t, origin, cfg).expect("arguments checked"),
            |r| 64 * (r.candidates.len() + r.skipped.len()) + 64,
        ))
    }

    pub fn cache_bytes(&self) -> usize {
        self.levels.bytes() + self.upsampled.bytes() + self.retrievals.bytes()
    }
}
