//! The bounded send buffer and its eviction policies.
//!
//! Entries form a doubly linked list (oldest first) over a slot arena, so an
//! entry can leave from any position in O(1). With score tracking enabled,
//! each entry carries the similarity between its previous and next neighbors:
//! the adjacency that would remain if it were dropped. The head's previous
//! neighbor is the most recently dequeued frame; before the first dequeue the
//! head has no predecessor and its score is [`Score::Free`]. The last entry
//! has no successor yet and is never a candidate ([`Score::Tail`]).
//!
//! Scores live in an addressable max-heap keyed by (score, oldest first), so
//! the ORBBuf victim is found and replaced in O(log L). Every arrival performs
//! at most three score recomputations: the victim's two former neighbors and
//! the former tail once the new frame is appended.
//!
//! Features are extracted lazily, the first time a score computation needs
//! them, and cached on the entry.

mod heap;
mod policy;

use std::cmp::Reverse;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

pub use heap::IndexedMaxHeap;
pub use policy::{Policy, PolicyKind, UnknownPolicy};

use crate::features::{FeatureSet, FeatureSource};
use crate::frame_io::Frame;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Score {
    /// Head without predecessor context; always the preferred victim.
    Free,
    Count(u32),
    /// Last entry; not evictable until a successor arrives.
    Tail,
    /// Score tracking is disabled for this buffer.
    Untracked,
}

/// Heap priority: Free outranks any count; equal scores prefer the oldest id.
type ScoreKey = (u8, u32, Reverse<u64>);

fn score_key(score: Score, id: u64) -> Option<ScoreKey> {
    match score {
        Score::Free => Some((1, 0, Reverse(id))),
        Score::Count(c) => Some((0, c, Reverse(id))),
        Score::Tail | Score::Untracked => None,
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BufferError {
    #[error("frame {incoming} arrived out of order (latest known id {latest})")]
    OutOfOrder { incoming: u64, latest: u64 },
    #[error("buffer capacity must be at least 1")]
    ZeroCapacity,
    #[error("buffer is empty")]
    Empty,
    #[error("policy needs eviction scores but score tracking is disabled")]
    ScoresDisabled,
}

/// Opaque reference to a buffered entry, valid until the buffer is mutated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EntryHandle(usize);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnqueueOutcome {
    pub inserted: u64,
    pub dropped: Option<u64>,
    /// Score recomputations caused by this arrival.
    pub updates_performed: u32,
    /// Feature extractions caused by this arrival.
    pub extractions: u32,
}

/// How the ORBBuf victim is located. `LinearScan` exists to cross-check the index.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum VictimSearch {
    #[default]
    Indexed,
    LinearScan,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BufferStats {
    pub extractions_enqueue: u64,
    pub extractions_dequeue: u64,
    pub similarity_evals: u64,
    pub max_updates_per_arrival: u32,
}

impl BufferStats {
    pub fn extractions(&self) -> u64 {
        self.extractions_enqueue + self.extractions_dequeue
    }
}

/// Capacity in frames, or in seconds of stream at a given rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CapacitySpec {
    Frames(usize),
    Seconds(f64),
}

impl CapacitySpec {
    pub fn to_frames(self, fps: f64) -> usize {
        match self {
            CapacitySpec::Frames(n) => n,
            // 1s at 25 fps is 25 frames, not 26.
            CapacitySpec::Seconds(s) => (s * fps - 1e-9).ceil().max(0.0) as usize,
        }
    }
}

impl FromStr for CapacitySpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let parsed = if let Some(secs) = s.strip_suffix('s') {
            secs.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v > 0.0)
                .map(CapacitySpec::Seconds)
        } else {
            s.parse::<usize>().ok().filter(|&n| n > 0).map(CapacitySpec::Frames)
        };
        parsed.ok_or_else(|| format!("invalid capacity {s:?} (expected frames like \"25\" or seconds like \"1s\")"))
    }
}

impl fmt::Display for CapacitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CapacitySpec::Frames(n) => write!(f, "{n}"),
            CapacitySpec::Seconds(s) => write!(f, "{s}s"),
        }
    }
}

#[derive(Clone, Debug)]
struct Entry {
    frame: Frame,
    features: Option<Arc<FeatureSet>>,
    score: Score,
    prev: Option<usize>,
    next: Option<usize>,
}

#[derive(Clone, Debug)]
struct SentFrame {
    frame: Frame,
    features: Option<Arc<FeatureSet>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Context {
    Slot(usize),
    LastSent,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Phase {
    Enqueue,
    Dequeue,
}

pub struct SendBuffer {
    capacity: usize,
    slots: Vec<Option<Entry>>,
    vacant: Vec<usize>,
    head: Option<usize>,
    tail: Option<usize>,
    len: usize,
    last_sent: Option<SentFrame>,
    index: IndexedMaxHeap<ScoreKey>,
    source: Arc<dyn FeatureSource>,
    track_scores: bool,
    search: VictimSearch,
    stats: BufferStats,
    phase: Phase,
    round_updates: u32,
    round_extractions: u32,
}

impl fmt::Debug for SendBuffer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SendBuffer")
            .field("capacity", &self.capacity)
            .field("entries", &self.scores())
            .field("last_sent", &self.last_sent_id())
            .finish()
    }
}

impl SendBuffer {
    pub fn new(capacity: usize, source: Arc<dyn FeatureSource>, track_scores: bool) -> Result<Self, BufferError> {
        if capacity == 0 {
            return Err(BufferError::ZeroCapacity);
        }
        Ok(Self {
            capacity,
            slots: Vec::with_capacity(capacity + 1),
            vacant: Vec::new(),
            head: None,
            tail: None,
            len: 0,
            last_sent: None,
            index: IndexedMaxHeap::new(),
            source,
            track_scores,
            search: VictimSearch::Indexed,
            stats: BufferStats::default(),
            phase: Phase::Enqueue,
            round_updates: 0,
            round_extractions: 0,
        })
    }

    /// A buffer that tracks scores only if `policy` needs them.
    pub fn for_policy(
        capacity: usize,
        policy: PolicyKind,
        source: Arc<dyn FeatureSource>,
    ) -> Result<Self, BufferError> {
        Self::new(capacity, source, policy.needs_scores())
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_full(&self) -> bool {
        self.len >= self.capacity
    }

    pub fn tracks_scores(&self) -> bool {
        self.track_scores
    }

    pub fn stats(&self) -> BufferStats {
        self.stats
    }

    pub fn set_victim_search(&mut self, search: VictimSearch) {
        self.search = search;
    }

    pub fn last_sent_id(&self) -> Option<u64> {
        self.last_sent.as_ref().map(|s| s.frame.id)
    }

    fn entry(&self, slot: usize) -> &Entry {
        self.slots[slot].as_ref().expect("live slot")
    }

    fn entry_mut(&mut self, slot: usize) -> &mut Entry {
        self.slots[slot].as_mut().expect("live slot")
    }

    fn slots_in_order(&self) -> impl Iterator<Item = usize> + '_ {
        std::iter::successors(self.head, |&s| self.entry(s).next)
    }

    /// Frame ids, oldest first.
    pub fn ids(&self) -> Vec<u64> {
        self.slots_in_order().map(|s| self.entry(s).frame.id).collect()
    }

    /// `(frame id, score)` pairs, oldest first.
    pub fn scores(&self) -> Vec<(u64, Score)> {
        self.slots_in_order()
            .map(|s| {
                let e = self.entry(s);
                (e.frame.id, e.score)
            })
            .collect()
    }

    pub fn frames(&self) -> impl Iterator<Item = &Frame> + '_ {
        self.slots_in_order().map(|s| &self.entry(s).frame)
    }

    pub fn head_handle(&self) -> Option<EntryHandle> {
        self.head.map(EntryHandle)
    }

    pub fn tail_handle(&self) -> Option<EntryHandle> {
        self.tail.map(EntryHandle)
    }

    /// Handle of the entry at `position` (0 = oldest).
    pub fn handle_at(&self, position: usize) -> Option<EntryHandle> {
        self.slots_in_order().nth(position).map(EntryHandle)
    }

    pub fn position_of(&self, handle: EntryHandle) -> Option<usize> {
        self.slots_in_order().position(|s| s == handle.0)
    }

    pub fn id_of(&self, handle: EntryHandle) -> u64 {
        self.entry(handle.0).frame.id
    }

    /// The evictable entry with the greatest score, oldest on ties.
    ///
    /// If only the tail is present it is returned: with capacity 1 there is
    /// no other candidate.
    pub fn max_score_handle(&self) -> Result<EntryHandle, BufferError> {
        if !self.track_scores {
            return Err(BufferError::ScoresDisabled);
        }
        let best = match self.search {
            VictimSearch::Indexed => self.index.peek().map(|(_, slot)| slot),
            VictimSearch::LinearScan => self
                .slots_in_order()
                .filter_map(|s| score_key(self.entry(s).score, self.entry(s).frame.id).map(|k| (k, s)))
                .max_by_key(|&(k, _)| k)
                .map(|(_, s)| s),
        };
        best.or(self.tail).map(EntryHandle).ok_or(BufferError::Empty)
    }

    fn features(&mut self, ctx: Context) -> Arc<FeatureSet> {
        let cached = match ctx {
            Context::Slot(s) => self.entry(s).features.clone(),
            Context::LastSent => self.last_sent.as_ref().and_then(|l| l.features.clone()),
        };
        if let Some(f) = cached {
            return f;
        }
        let computed = match ctx {
            Context::Slot(s) => self.source.extract(&self.entry(s).frame),
            Context::LastSent => self.source.extract(&self.last_sent.as_ref().expect("last sent").frame),
        };
        match self.phase {
            Phase::Enqueue => self.stats.extractions_enqueue += 1,
            Phase::Dequeue => self.stats.extractions_dequeue += 1,
        }
        self.round_extractions += 1;
        match ctx {
            Context::Slot(s) => self.entry_mut(s).features = Some(computed.clone()),
            Context::LastSent => self.last_sent.as_mut().expect("last sent").features = Some(computed.clone()),
        }
        computed
    }

    fn previous_context(&self, slot: usize) -> Option<Context> {
        match self.entry(slot).prev {
            Some(p) => Some(Context::Slot(p)),
            None => self.last_sent.as_ref().map(|_| Context::LastSent),
        }
    }

    fn set_score(&mut self, slot: usize, score: Score) {
        let id = self.entry(slot).frame.id;
        self.entry_mut(slot).score = score;
        match score_key(score, id) {
            Some(key) => self.index.upsert(slot, key),
            None => {
                self.index.remove(slot);
            }
        }
    }

    /// Recomputes the score of `slot` from its current neighbors.
    fn refresh_score(&mut self, slot: usize) {
        if !self.track_scores {
            return;
        }
        let Some(next) = self.entry(slot).next else {
            self.set_score(slot, Score::Tail);
            return;
        };
        let score = match self.previous_context(slot) {
            None => Score::Free,
            Some(prev) => {
                let a = self.features(prev);
                let b = self.features(Context::Slot(next));
                self.stats.similarity_evals += 1;
                Score::Count(self.source.similarity(&a, &b))
            }
        };
        self.set_score(slot, score);
        self.round_updates += 1;
    }

    fn unlink(&mut self, slot: usize) -> Entry {
        self.index.remove(slot);
        let entry = self.slots[slot].take().expect("live slot");
        match entry.prev {
            Some(p) => self.entry_mut(p).next = entry.next,
            None => self.head = entry.next,
        }
        match entry.next {
            Some(n) => self.entry_mut(n).prev = entry.prev,
            None => self.tail = entry.prev,
        }
        self.vacant.push(slot);
        self.len -= 1;
        entry
    }

    fn remove_entry(&mut self, slot: usize) -> Frame {
        let entry = self.unlink(slot);
        if let Some(p) = entry.prev {
            self.refresh_score(p);
        }
        if let Some(n) = entry.next {
            self.refresh_score(n);
        }
        entry.frame
    }

    fn append(&mut self, frame: Frame) {
        let entry = Entry {
            frame,
            features: None,
            score: if self.track_scores {
                Score::Tail
            } else {
                Score::Untracked
            },
            prev: self.tail,
            next: None,
        };
        let slot = match self.vacant.pop() {
            Some(s) => {
                self.slots[s] = Some(entry);
                s
            }
            None => {
                self.slots.push(Some(entry));
                self.slots.len() - 1
            }
        };
        match self.tail {
            Some(t) => self.entry_mut(t).next = Some(slot),
            None => self.head = Some(slot),
        }
        let former_tail = self.tail.replace(slot);
        self.len += 1;
        if let Some(t) = former_tail {
            self.refresh_score(t);
        }
    }

    fn latest_id(&self) -> Option<u64> {
        self.tail
            .map(|t| self.entry(t).frame.id)
            .or_else(|| self.last_sent_id())
    }

    /// Inserts `frame`, evicting one entry chosen by `policy` if the buffer is full.
    pub fn enqueue(&mut self, frame: Frame, policy: &mut Policy) -> Result<EnqueueOutcome, BufferError> {
        if let Some(latest) = self.latest_id() {
            if frame.id <= latest {
                return Err(BufferError::OutOfOrder {
                    incoming: frame.id,
                    latest,
                });
            }
        }
        self.phase = Phase::Enqueue;
        self.round_updates = 0;
        self.round_extractions = 0;

        let inserted = frame.id;
        let mut dropped = None;
        if self.is_full() {
            let victim = policy.choose_victim(self)?;
            dropped = Some(self.remove_entry(victim.0).id);
        }
        self.append(frame);

        self.stats.max_updates_per_arrival = self.stats.max_updates_per_arrival.max(self.round_updates);
        Ok(EnqueueOutcome {
            inserted,
            dropped,
            updates_performed: self.round_updates,
            extractions: self.round_extractions,
        })
    }

    /// Removes and returns the oldest frame, which becomes the head's predecessor.
    pub fn dequeue_for_send(&mut self) -> Option<Frame> {
        let head = self.head?;
        self.phase = Phase::Dequeue;
        let entry = self.unlink(head);
        let frame = entry.frame.clone();
        self.last_sent = Some(SentFrame {
            frame: entry.frame,
            features: entry.features,
        });
        if let Some(new_head) = self.head {
            self.refresh_score(new_head);
        }
        self.phase = Phase::Enqueue;
        Some(frame)
    }

    fn fresh_features(&self, ctx: Context) -> Arc<FeatureSet> {
        let (cached, frame) = match ctx {
            Context::Slot(s) => (self.entry(s).features.clone(), &self.entry(s).frame),
            Context::LastSent => {
                let l = self.last_sent.as_ref().expect("last sent");
                (l.features.clone(), &l.frame)
            }
        };
        cached.unwrap_or_else(|| self.source.extract(frame))
    }

    /// Recomputes every score from current neighbors and checks it against
    /// the stored value and the index. Does not populate feature caches.
    pub fn verify_scores(&self) -> bool {
        let order: Vec<usize> = self.slots_in_order().collect();
        if order.len() != self.len {
            return false;
        }
        if !self.track_scores {
            return self.index.is_empty() && order.iter().all(|&s| self.entry(s).score == Score::Untracked);
        }
        let mut indexed = 0;
        for (pos, &slot) in order.iter().enumerate() {
            let entry = self.entry(slot);
            let expected = if pos + 1 == order.len() {
                Score::Tail
            } else {
                match self.previous_context(slot) {
                    None => Score::Free,
                    Some(prev) => {
                        let a = self.fresh_features(prev);
                        let b = self.fresh_features(Context::Slot(order[pos + 1]));
                        Score::Count(self.source.similarity(&a, &b))
                    }
                }
            };
            if entry.score != expected {
                return false;
            }
            let key = score_key(expected, entry.frame.id);
            if self.index.key(slot) != key {
                return false;
            }
            indexed += key.is_some() as usize;
        }
        indexed == self.index.len()
    }

    /// Overwrites the stored score at `position` without touching the index.
    #[doc(hidden)]
    pub fn corrupt_score_for_test(&mut self, position: usize, score: Score) {
        let slot = self.slots_in_order().nth(position).expect("position in range");
        self.entry_mut(slot).score = score;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{Descriptor, FeatureSet};

    /// Frame id `i` carries descriptors `i..i+width` of a fixed random pool.
    struct Windowed {
        pool: Vec<Descriptor>,
        width: usize,
    }

    impl FeatureSource for Windowed {
        fn extract(&self, frame: &Frame) -> Arc<FeatureSet> {
            let start = frame.id as usize;
            Arc::new(FeatureSet {
                frame_id: frame.id,
                keypoints: vec![],
                descriptors: self.pool[start..start + self.width].to_vec(),
            })
        }

        fn similarity(&self, a: &FeatureSet, b: &FeatureSet) -> u32 {
            crate::features::match_count(&a.descriptors, &b.descriptors, 64)
        }
    }

    fn windowed(width: usize) -> Arc<dyn FeatureSource> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let pool = (0..200 + width)
            .map(|_| Descriptor([rng.random(), rng.random(), rng.random(), rng.random()]))
            .collect();
        Arc::new(Windowed { pool, width })
    }

    fn frame(id: u64) -> Frame {
        Frame::new(id, id as f64 * 40.0, 1, 1, vec![0])
    }

    fn fill(buffer: &mut SendBuffer, policy: &mut Policy, ids: impl IntoIterator<Item = u64>) {
        for id in ids {
            buffer.enqueue(frame(id), policy).unwrap();
        }
    }

    #[test]
    fn not_full_appends() {
        let mut b = SendBuffer::new(3, windowed(10), false).unwrap();
        let mut p = Policy::new(PolicyKind::DropOldest, 0);
        fill(&mut b, &mut p, [1, 2]);
        let out = b.enqueue(frame(3), &mut p).unwrap();
        assert_eq!(out.dropped, None);
        assert_eq!(b.ids(), vec![1, 2, 3]);
    }

    #[test]
    fn drop_oldest_and_youngest() {
        for (kind, ids, dropped) in [
            (PolicyKind::DropOldest, vec![2, 3, 4], 1),
            (PolicyKind::DropYoungest, vec![1, 2, 4], 3),
        ] {
            let mut b = SendBuffer::new(3, windowed(10), false).unwrap();
            let mut p = Policy::new(kind, 0);
            fill(&mut b, &mut p, [1, 2, 3]);
            let out = b.enqueue(frame(4), &mut p).unwrap();
            assert_eq!(out.dropped, Some(dropped));
            assert_eq!(b.ids(), ids);
        }
    }

    #[test]
    fn out_of_order_is_rejected() {
        let mut b = SendBuffer::new(3, windowed(10), true).unwrap();
        let mut p = Policy::new(PolicyKind::OrbBuf, 0);
        fill(&mut b, &mut p, [5]);
        assert_eq!(
            b.enqueue(frame(5), &mut p),
            Err(BufferError::OutOfOrder { incoming: 5, latest: 5 })
        );
        b.dequeue_for_send();
        assert!(b.enqueue(frame(4), &mut p).is_err());
    }

    #[test]
    fn fifo_dequeue() {
        let mut b = SendBuffer::new(4, windowed(10), true).unwrap();
        let mut p = Policy::new(PolicyKind::OrbBuf, 0);
        fill(&mut b, &mut p, [5, 7, 9]);
        assert_eq!(b.dequeue_for_send().map(|f| f.id), Some(5));
        assert_eq!(b.ids(), vec![7, 9]);
        // Head 7 now scores sim(5, 9): windows 5..15 and 9..19 share 6.
        assert_eq!(b.scores(), vec![(7, Score::Count(6)), (9, Score::Tail)]);
        assert!(b.verify_scores());
    }

    #[test]
    fn head_is_free_only_without_sent_context() {
        let mut b = SendBuffer::new(4, windowed(10), true).unwrap();
        let mut p = Policy::new(PolicyKind::OrbBuf, 0);
        fill(&mut b, &mut p, [1, 2]);
        assert_eq!(b.scores()[0].1, Score::Free);
        b.dequeue_for_send();
        b.dequeue_for_send();
        assert!(b.dequeue_for_send().is_none());
        fill(&mut b, &mut p, [3, 4]);
        assert_eq!(b.scores(), vec![(3, Score::Count(8)), (4, Score::Tail)]);
    }

    #[test]
    fn identical_frames_evict_head() {
        // Width 0 windows: every set is empty, so all counts are 0 and the
        // Free head outranks them.
        let mut b = SendBuffer::new(4, windowed(0), true).unwrap();
        let mut p = Policy::new(PolicyKind::OrbBuf, 0);
        fill(&mut b, &mut p, [1, 2, 3, 4]);
        let out = b.enqueue(frame(5), &mut p).unwrap();
        assert_eq!(out.dropped, Some(1));
    }

    #[test]
    fn capacity_one_orbbuf_replaces_the_only_entry() {
        let mut b = SendBuffer::new(1, windowed(10), true).unwrap();
        let mut p = Policy::new(PolicyKind::OrbBuf, 0);
        fill(&mut b, &mut p, [1]);
        assert_eq!(b.enqueue(frame(2), &mut p).unwrap().dropped, Some(1));
        assert_eq!(b.ids(), vec![2]);
    }

    #[test]
    fn orbbuf_requires_tracking() {
        let mut b = SendBuffer::new(2, windowed(10), false).unwrap();
        let mut p = Policy::new(PolicyKind::OrbBuf, 0);
        fill(&mut b, &mut p, [1, 2]);
        assert_eq!(b.enqueue(frame(3), &mut p), Err(BufferError::ScoresDisabled));
    }

    #[test]
    fn corrupted_score_fails_verification() {
        let mut b = SendBuffer::new(4, windowed(10), true).unwrap();
        let mut p = Policy::new(PolicyKind::OrbBuf, 0);
        fill(&mut b, &mut p, [1, 2, 3, 4]);
        assert!(b.verify_scores());
        b.corrupt_score_for_test(1, Score::Count(999));
        assert!(!b.verify_scores());
    }

    #[test]
    fn untracked_buffer_never_extracts() {
        let mut b = SendBuffer::new(3, windowed(10), false).unwrap();
        for kind in [PolicyKind::DropOldest, PolicyKind::DropYoungest, PolicyKind::Random] {
            let mut p = Policy::new(kind, 3);
            for id in 0..20 {
                b.enqueue(frame(100 * kind as u64 + id), &mut p).unwrap();
                if id % 3 == 0 {
                    b.dequeue_for_send();
                }
            }
        }
        assert_eq!(b.stats().extractions(), 0);
        assert!(b.verify_scores());
    }

    #[test]
    fn capacity_parsing() {
        assert_eq!("25".parse::<CapacitySpec>().unwrap().to_frames(25.0), 25);
        assert_eq!("1s".parse::<CapacitySpec>().unwrap().to_frames(25.0), 25);
        assert_eq!("2s".parse::<CapacitySpec>().unwrap().to_frames(10.0), 20);
        assert_eq!("0.5s".parse::<CapacitySpec>().unwrap().to_frames(25.0), 13);
        assert!("0".parse::<CapacitySpec>().is_err());
        assert!("abc".parse::<CapacitySpec>().is_err());
    }
}
