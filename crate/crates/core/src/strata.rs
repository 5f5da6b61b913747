//! Reciprocity and triadic-closure indicators, and the time-varying
//! four-level stratification (Spontaneous, R, T, RT) of every ordered dyad.
//!
//! For a candidate event `a -> b` the triadic contracts are:
//!
//! | kind              | prior events required for some k ∉ {a, b} |
//! |-------------------|--------------------------------------------|
//! | Cyclic            | `b -> k` and `k -> a`                      |
//! | Transitive        | `a -> k` and `k -> b`                      |
//! | SendingBalance    | `a -> k` and `b -> k`                      |
//! | ReceivingBalance  | `k -> a` and `k -> b`                      |
//!
//! Reciprocity for `a -> b` requires a prior `b -> a`. Indicators are binary
//! and permanent, so labels only move up the order
//! `Spontaneous <= {R, T} <= RT`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{DataError, StrataError};
use crate::events::{ActorId, EventHistory, RelationalEvent};
use crate::network::NetworkState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriadicKind {
    Cyclic,
    Transitive,
    SendingBalance,
    ReceivingBalance,
}

impl TriadicKind {
    pub const ALL: [TriadicKind; 4] = [
        TriadicKind::Cyclic,
        TriadicKind::Transitive,
        TriadicKind::SendingBalance,
        TriadicKind::ReceivingBalance,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TriadicKind::Cyclic => "cyclic",
            TriadicKind::Transitive => "transitive",
            TriadicKind::SendingBalance => "sending_balance",
            TriadicKind::ReceivingBalance => "receiving_balance",
        }
    }
}

impl fmt::Display for TriadicKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TriadicKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "cyclic" => Ok(Self::Cyclic),
            "transitive" => Ok(Self::Transitive),
            "sending_balance" | "sending" => Ok(Self::SendingBalance),
            "receiving_balance" | "receiving" => Ok(Self::ReceivingBalance),
            other => Err(format!("unknown triadic kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StratumLabel {
    Spontaneous = 0,
    R = 1,
    T = 2,
    RT = 3,
}

impl StratumLabel {
    pub const ALL: [StratumLabel; 4] = [
        StratumLabel::Spontaneous,
        StratumLabel::R,
        StratumLabel::T,
        StratumLabel::RT,
    ];

    pub fn from_flags(reciprocal: bool, triadic: bool) -> Self {
        match (reciprocal, triadic) {
            (false, false) => Self::Spontaneous,
            (true, false) => Self::R,
            (false, true) => Self::T,
            (true, true) => Self::RT,
        }
    }

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn reciprocal(self) -> bool {
        self.index() & 1 == 1
    }

    pub fn triadic(self) -> bool {
        self.index() & 2 == 2
    }

    /// Partial order: `self <= other` when every indicator of `self` holds in `other`.
    pub fn le(self, other: Self) -> bool {
        self.index() & !other.index() == 0
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Spontaneous => "spontaneous",
            Self::R => "R",
            Self::T => "T",
            Self::RT => "RT",
        }
    }
}

impl fmt::Display for StratumLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn check_dyad(i: ActorId, j: ActorId) -> Result<(), StrataError> {
    if i == j {
        Err(StrataError::SelfDyad(i.0))
    } else {
        Ok(())
    }
}

/// True when a `j -> i` event has already occurred.
pub fn has_reciprocal(state: &NetworkState, i: ActorId, j: ActorId) -> Result<bool, StrataError> {
    check_dyad(i, j)?;
    Ok(state.has_edge(j, i))
}

/// True when some third actor witnesses a `kind` closure for candidate `i -> j`.
pub fn has_triad(
    kind: TriadicKind,
    state: &NetworkState,
    i: ActorId,
    j: ActorId,
) -> Result<bool, StrataError> {
    check_dyad(i, j)?;
    let found = match kind {
        TriadicKind::Transitive => state
            .out_neighbors(i)
            .iter()
            .any(|&k| k != j && state.has_edge(k, j)),
        TriadicKind::Cyclic => state
            .out_neighbors(j)
            .iter()
            .any(|&k| k != i && state.has_edge(k, i)),
        TriadicKind::SendingBalance => state
            .out_neighbors(i)
            .iter()
            .any(|&k| k != j && state.has_edge(j, k)),
        TriadicKind::ReceivingBalance => state
            .in_neighbors(i)
            .iter()
            .any(|&k| k != j && state.has_edge(k, j)),
    };
    Ok(found)
}

pub fn stratum_of(
    state: &NetworkState,
    i: ActorId,
    j: ActorId,
    kind: TriadicKind,
) -> Result<StratumLabel, StrataError> {
    Ok(StratumLabel::from_flags(
        has_reciprocal(state, i, j)?,
        has_triad(kind, state, i, j)?,
    ))
}

/// A label change caused by one event: dyad index `sender * n + receiver`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Upgrade {
    pub dyad: usize,
    pub from: StratumLabel,
    pub to: StratumLabel,
}

/// Maintains the network state and every dyad's current label, updating
/// only the dyads a new event can affect.
#[derive(Debug, Clone)]
pub struct StrataTracker {
    kind: TriadicKind,
    state: NetworkState,
    labels: Vec<StratumLabel>,
    stamp: Vec<u64>,
    old: Vec<StratumLabel>,
    touched: Vec<usize>,
}

impl StrataTracker {
    pub fn new(n_actors: usize, kind: TriadicKind) -> Self {
        let nn = n_actors * n_actors;
        Self {
            kind,
            state: NetworkState::new(n_actors),
            labels: vec![StratumLabel::Spontaneous; nn],
            stamp: vec![0; nn],
            old: vec![StratumLabel::Spontaneous; nn],
            touched: Vec::new(),
        }
    }

    pub fn kind(&self) -> TriadicKind {
        self.kind
    }

    pub fn state(&self) -> &NetworkState {
        &self.state
    }

    #[inline]
    pub fn label(&self, i: ActorId, j: ActorId) -> StratumLabel {
        self.labels[i.0 * self.state.n_actors() + j.0]
    }

    pub fn labels(&self) -> &[StratumLabel] {
        &self.labels
    }

    fn upgrade(&mut self, x: ActorId, y: ActorId, flag: usize) {
        let n = self.state.n_actors();
        let d = x.0 * n + y.0;
        let cur = self.labels[d];
        if cur.index() & flag == flag {
            return;
        }
        let stamp = self.state.total_events();
        if self.stamp[d] != stamp {
            self.stamp[d] = stamp;
            self.old[d] = cur;
            self.touched.push(d);
        }
        self.labels[d] = StratumLabel::ALL[cur.index() | flag];
    }

    /// Applies `e` and appends the resulting label changes to `out`.
    pub fn apply(&mut self, e: &RelationalEvent, out: &mut Vec<Upgrade>) -> Result<(), DataError> {
        let first = self.state.apply_event(e)? == 1;
        if !first {
            return Ok(());
        }
        let (a, b) = (e.sender, e.receiver);
        self.touched.clear();
        self.upgrade(b, a, 1);

        // Candidate dyads gaining a witness from the new a -> b arc.
        let mut cands: Vec<(ActorId, ActorId)> = Vec::new();
        let st = &self.state;
        match self.kind {
            TriadicKind::Transitive => {
                cands.extend(
                    st.out_neighbors(b)
                        .iter()
                        .filter(|&&y| y != a)
                        .map(|&y| (a, y)),
                );
                cands.extend(
                    st.in_neighbors(a)
                        .iter()
                        .filter(|&&x| x != b)
                        .map(|&x| (x, b)),
                );
            }
            TriadicKind::Cyclic => {
                cands.extend(
                    st.out_neighbors(b)
                        .iter()
                        .filter(|&&x| x != a)
                        .map(|&x| (x, a)),
                );
                cands.extend(
                    st.in_neighbors(a)
                        .iter()
                        .filter(|&&y| y != b)
                        .map(|&y| (b, y)),
                );
            }
            TriadicKind::SendingBalance => {
                cands.extend(
                    st.in_neighbors(b)
                        .iter()
                        .filter(|&&y| y != a)
                        .map(|&y| (a, y)),
                );
                cands.extend(
                    st.in_neighbors(b)
                        .iter()
                        .filter(|&&x| x != a)
                        .map(|&x| (x, a)),
                );
            }
            TriadicKind::ReceivingBalance => {
                cands.extend(
                    st.out_neighbors(a)
                        .iter()
                        .filter(|&&y| y != b)
                        .map(|&y| (b, y)),
                );
                cands.extend(
                    st.out_neighbors(a)
                        .iter()
                        .filter(|&&x| x != b)
                        .map(|&x| (x, b)),
                );
            }
        }
        for (x, y) in cands {
            self.upgrade(x, y, 2);
        }
        for &d in &self.touched {
            out.push(Upgrade {
                dyad: d,
                from: self.old[d],
                to: self.labels[d],
            });
        }
        Ok(())
    }
}

/// Label history of one ordered dyad: `(time, label)` pairs, the first at
/// time 0. A label recorded at time `t` applies to events strictly after `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct StratumTimeline {
    pub dyad: (ActorId, ActorId),
    pub transitions: Vec<(f64, StratumLabel)>,
}

impl StratumTimeline {
    /// Label seen by an event at time `t` (state of all events before `t`).
    pub fn label_before(&self, t: f64) -> StratumLabel {
        self.transitions
            .iter()
            .take_while(|(time, _)| *time < t)
            .last()
            .map_or(StratumLabel::Spontaneous, |&(_, l)| l)
    }
}

/// Timelines for every ordered dyad of a history.
#[derive(Debug, Clone, PartialEq)]
pub struct Timelines {
    n_actors: usize,
    kind: TriadicKind,
    transitions: Vec<Vec<(f64, StratumLabel)>>,
}

impl Timelines {
    pub fn n_actors(&self) -> usize {
        self.n_actors
    }

    pub fn kind(&self) -> TriadicKind {
        self.kind
    }

    pub fn get(&self, i: ActorId, j: ActorId) -> Option<StratumTimeline> {
        if i == j || i.0 >= self.n_actors || j.0 >= self.n_actors {
            return None;
        }
        Some(StratumTimeline {
            dyad: (i, j),
            transitions: self.transitions[i.0 * self.n_actors + j.0].clone(),
        })
    }

    pub fn transitions(&self, i: ActorId, j: ActorId) -> &[(f64, StratumLabel)] {
        &self.transitions[i.0 * self.n_actors + j.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = StratumTimeline> + '_ {
        let n = self.n_actors;
        (0..n * n)
            .filter(move |d| d / n != d % n)
            .map(move |d| StratumTimeline {
                dyad: (ActorId(d / n), ActorId(d % n)),
                transitions: self.transitions[d].clone(),
            })
    }

    /// CSV `from,to,time,label`, one row per transition.
    pub fn write_csv<W: Write>(&self, writer: W, history: &EventHistory) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["from", "to", "time", "label"])?;
        for tl in self.iter() {
            for (t, l) in &tl.transitions {
                w.write_record([
                    history.symbols().label(tl.dyad.0),
                    history.symbols().label(tl.dyad.1),
                    &format!("{t}"),
                    l.as_str(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Single pass over the history recording each dyad's label changes.
pub fn build_timelines(history: &EventHistory, kind: TriadicKind) -> Timelines {
    let n = history.n_actors();
    let mut transitions = vec![vec![(0.0, StratumLabel::Spontaneous)]; n * n];
    let mut tracker = StrataTracker::new(n, kind);
    let mut ups = Vec::new();
    for e in history.events() {
        ups.clear();
        tracker.apply(e, &mut ups).expect("validated history");
        for u in &ups {
            let tl = &mut transitions[u.dyad];
            let last = tl.last_mut().unwrap();
            if last.0 == e.time {
                last.1 = u.to;
            } else {
                tl.push((e.time, u.to));
            }
        }
    }
    Timelines {
        n_actors: n,
        kind,
        transitions,
    }
}
