//! Network impairment and the discrete-event queue.

use rand::Rng;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::scenario::Impairment;

/// Delay for one message, or `None` when it is lost. Delay is latency plus
/// a whole number of milliseconds drawn uniformly from `0..=jitter`.
pub fn impair(imp: &Impairment, rng: &mut impl Rng) -> Option<i64> {
    // draw both numbers every time so the stream does not depend on outcomes
    let lost = rng.random::<f64>() < imp.loss;
    let jitter = if imp.jitter_ms > 0 { rng.random_range(0..=imp.jitter_ms) } else { 0 };
    (!lost).then_some(imp.latency_ms + jitter)
}

struct Entry<T> {
    time: i64,
    seq: u64,
    item: T,
}

impl<T> PartialEq for Entry<T> {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}

impl<T> Eq for Entry<T> {}

impl<T> PartialOrd for Entry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T> Ord for Entry<T> {
    // reversed: the heap pops the earliest (time, seq) first
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

/// Items come out in time order, ties in insertion order.
pub struct EventQueue<T> {
    heap: BinaryHeap<Entry<T>>,
    next_seq: u64,
}

impl<T> Default for EventQueue<T> {
    fn default() -> Self {
        Self { heap: BinaryHeap::new(), next_seq: 0 }
    }
}

impl<T> EventQueue<T> {
    /// Returns the sequence number assigned to the item.
    pub fn push(&mut self, time: i64, item: T) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Entry { time, seq, item });
        seq
    }

    /// Pops the next item due strictly before `until`.
    pub fn pop_before(&mut self, until: i64) -> Option<(i64, u64, T)> {
        if self.heap.peek()?.time >= until {
            return None;
        }
        self.heap.pop().map(|e| (e.time, e.seq, e.item))
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
