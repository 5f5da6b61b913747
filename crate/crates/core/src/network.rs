//! Cumulative directed event counts with out/in neighbour indexes.

use crate::error::DataError;
use crate::events::{ActorId, RelationalEvent};

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    n_actors: usize,
    counts: Vec<u32>,
    out_nbrs: Vec<Vec<ActorId>>,
    in_nbrs: Vec<Vec<ActorId>>,
    clock: f64,
    total: u64,
}

impl NetworkState {
    pub fn new(n_actors: usize) -> Self {
        Self {
            n_actors,
            counts: vec![0; n_actors * n_actors],
            out_nbrs: vec![Vec::new(); n_actors],
            in_nbrs: vec![Vec::new(); n_actors],
            clock: 0.0,
            total: 0,
        }
    }

    /// Applies one event and returns the new `sender -> receiver` count.
    /// A return value of 1 means the dyad was observed for the first time.
    pub fn apply_event(&mut self, e: &RelationalEvent) -> Result<u32, DataError> {
        let (i, j) = (e.sender.0, e.receiver.0);
        for id in [i, j] {
            if id >= self.n_actors {
                return Err(DataError::ActorOutOfRange {
                    id,
                    n_actors: self.n_actors,
                });
            }
        }
        if e.time < self.clock {
            return Err(DataError::TimeRegression {
                index: self.total as usize,
                time: e.time,
                clock: self.clock,
            });
        }
        let c = &mut self.counts[i * self.n_actors + j];
        *c += 1;
        let new = *c;
        if new == 1 {
            self.out_nbrs[i].push(e.receiver);
            self.in_nbrs[j].push(e.sender);
        }
        self.clock = e.time;
        self.total += 1;
        Ok(new)
    }

    #[inline]
    pub fn count(&self, from: ActorId, to: ActorId) -> u32 {
        self.counts[from.0 * self.n_actors + to.0]
    }

    #[inline]
    pub fn has_edge(&self, from: ActorId, to: ActorId) -> bool {
        self.count(from, to) > 0
    }

    /// Actors `k` with at least one `actor -> k` event, in first-seen order.
    pub fn out_neighbors(&self, actor: ActorId) -> &[ActorId] {
        &self.out_nbrs[actor.0]
    }

    /// Actors `k` with at least one `k -> actor` event, in first-seen order.
    pub fn in_neighbors(&self, actor: ActorId) -> &[ActorId] {
        &self.in_nbrs[actor.0]
    }

    pub fn n_actors(&self) -> usize {
        self.n_actors
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn total_events(&self) -> u64 {
        self.total
    }

    pub fn counts_sum(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }
}
