//! Per-event stratified risk sets: the input to every likelihood routine.
//!
//! Full risk sets are not materialized. Every dyad starts Spontaneous and the
//! label upgrades produced after each event are stored in event order, so a
//! likelihood pass replays them while keeping per-stratum sums. Sampled risk
//! sets (event dyad plus `m` same-stratum controls) are stored explicitly.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::EstimationError;
use crate::events::EventHistory;
use crate::strata::{StrataTracker, StratumLabel, TriadicKind, Upgrade};

/// Actor count above which the default risk-set policy switches to sampling.
pub const FULL_RISK_SET_MAX_ACTORS: usize = 120;
pub const DEFAULT_SAMPLED_CONTROLS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskPolicy {
    Full,
    Sampled { m: usize, seed: u64 },
}

impl RiskPolicy {
    /// Full for small networks, 50 sampled controls otherwise.
    pub fn default_for(n_actors: usize, seed: u64) -> Self {
        if n_actors <= FULL_RISK_SET_MAX_ACTORS {
            RiskPolicy::Full
        } else {
            RiskPolicy::Sampled {
                m: DEFAULT_SAMPLED_CONTROLS,
                seed,
            }
        }
    }
}

impl fmt::Display for RiskPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RiskPolicy::Full => f.write_str("full"),
            RiskPolicy::Sampled { m, seed } => write!(f, "sampled:{m}:{seed}"),
        }
    }
}

impl FromStr for RiskPolicy {
    type Err = String;
    /// `full`, `sampled:<m>` or `sampled:<m>:<seed>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let policy = match parts.as_slice() {
            ["full"] => Ok(RiskPolicy::Full),
            ["sampled", m] => Ok(RiskPolicy::Sampled {
                m: m.parse().map_err(|_| format!("bad m `{m}`"))?,
                seed: 0,
            }),
            ["sampled", m, seed] => Ok(RiskPolicy::Sampled {
                m: m.parse().map_err(|_| format!("bad m `{m}`"))?,
                seed: seed.parse().map_err(|_| format!("bad seed `{seed}`"))?,
            }),
            _ => Err(format!("unknown risk policy `{s}`")),
        }?;
        if matches!(policy, RiskPolicy::Sampled { m: 0, .. }) {
            return Err("sampled risk sets need at least one control".into());
        }
        Ok(policy)
    }
}

/// Time-invariant covariates per ordered dyad, `p` values each.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadCovariates {
    n_actors: usize,
    p: usize,
    values: Vec<f64>,
}

impl DyadCovariates {
    pub fn empty(n_actors: usize) -> Self {
        Self {
            n_actors,
            p: 0,
            values: Vec::new(),
        }
    }

    /// `values` laid out as `[(i * n + j) * p + k]`.
    pub fn new(n_actors: usize, p: usize, values: Vec<f64>) -> Result<Self, EstimationError> {
        if values.len() != n_actors * n_actors * p {
            return Err(EstimationError::InvalidInput(format!(
                "covariate array has {} values, expected {}",
                values.len(),
                n_actors * n_actors * p
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EstimationError::InvalidInput(
                "covariates must be finite".into(),
            ));
        }
        Ok(Self {
            n_actors,
            p,
            values,
        })
    }

    pub fn from_fn(
        n_actors: usize,
        p: usize,
        f: impl Fn(usize, usize, usize) -> f64,
    ) -> Result<Self, EstimationError> {
        let mut values = Vec::with_capacity(n_actors * n_actors * p);
        for i in 0..n_actors {
            for j in 0..n_actors {
                for k in 0..p {
                    values.push(if i == j { 0.0 } else { f(i, j, k) });
                }
            }
        }
        Self::new(n_actors, p, values)
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn row(&self, dyad: usize) -> &[f64] {
        &self.values[dyad * self.p..(dyad + 1) * self.p]
    }

    pub fn n_actors(&self) -> usize {
        self.n_actors
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord {
    pub time: f64,
    pub sender: usize,
    pub receiver: usize,
    pub stratum: StratumLabel,
}

impl EventRecord {
    #[inline]
    pub fn dyad(&self, n_actors: usize) -> usize {
        self.sender * n_actors + self.receiver
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum RiskSets {
    /// `upgrades[offsets[e]..offsets[e + 1]]` take effect after event `e`.
    Full {
        upgrades: Vec<Upgrade>,
        offsets: Vec<usize>,
    },
    /// Members of event `e`'s risk set, event dyad first.
    Sampled {
        members: Vec<usize>,
        offsets: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelData {
    n_actors: usize,
    kind: TriadicKind,
    policy: RiskPolicy,
    events: Vec<EventRecord>,
    pool_sizes: Vec<usize>,
    covariates: DyadCovariates,
    pub(crate) risk: RiskSets,
    singleton_risk_sets: usize,
}

/// Builds stratified risk sets from the strictly-prior state of each event.
pub fn build_model_data(
    history: &EventHistory,
    kind: TriadicKind,
    policy: RiskPolicy,
) -> Result<ModelData, EstimationError> {
    let n = history.n_actors();
    if history.is_empty() {
        return Err(EstimationError::InvalidInput(
            "history has no events".into(),
        ));
    }
    if n < 2 {
        return Err(EstimationError::InvalidInput(
            "need at least two actors".into(),
        ));
    }
    let mut tracker = StrataTracker::new(n, kind);
    let mut events = Vec::with_capacity(history.len());
    let mut pool_sizes = Vec::with_capacity(history.len());
    let mut stratum_sizes = [n * (n - 1), 0, 0, 0];
    let mut ups = Vec::new();

    // Explicit pools are only kept for the sampled policy.
    let sampled = matches!(policy, RiskPolicy::Sampled { .. });
    let mut pools: [Vec<usize>; 4] = Default::default();
    let mut pos = vec![usize::MAX; if sampled { n * n } else { 0 }];
    if sampled {
        for d in (0..n * n).filter(|d| d / n != d % n) {
            pos[d] = pools[0].len();
            pools[0].push(d);
        }
    }
    let mut rng = match policy {
        RiskPolicy::Sampled { seed, .. } => ChaCha8Rng::seed_from_u64(seed),
        RiskPolicy::Full => ChaCha8Rng::seed_from_u64(0),
    };

    let mut all_upgrades = Vec::new();
    let mut offsets = vec![0];
    let mut members = Vec::new();
    let mut member_offsets = vec![0];
    let mut singletons = 0;

    for e in history.events() {
        let (a, b) = (e.sender.0, e.receiver.0);
        let stratum = tracker.label(e.sender, e.receiver);
        let s = stratum.index();
        pool_sizes.push(stratum_sizes[s]);
        if stratum_sizes[s] == 1 {
            singletons += 1;
        }
        events.push(EventRecord {
            time: e.time,
            sender: a,
            receiver: b,
            stratum,
        });

        if let RiskPolicy::Sampled { m, .. } = policy {
            let d = a * n + b;
            let pool = &pools[s];
            let pe = pos[d];
            members.push(d);
            let others = pool.len() - 1;
            if m >= others {
                members.extend(pool.iter().copied().filter(|&x| x != d));
            } else {
                for i in rand::seq::index::sample(&mut rng, others, m).into_iter() {
                    let idx = if i >= pe { i + 1 } else { i };
                    members.push(pool[idx]);
                }
            }
            member_offsets.push(members.len());
        }

        ups.clear();
        tracker
            .apply(e, &mut ups)
            .map_err(|err| EstimationError::InvalidInput(err.to_string()))?;
        for u in &ups {
            stratum_sizes[u.from.index()] -= 1;
            stratum_sizes[u.to.index()] += 1;
            if sampled {
                let from = &mut pools[u.from.index()];
                let p = pos[u.dyad];
                from.swap_remove(p);
                if p < from.len() {
                    pos[from[p]] = p;
                }
                pos[u.dyad] = pools[u.to.index()].len();
                pools[u.to.index()].push(u.dyad);
            }
        }
        if !sampled {
            all_upgrades.extend_from_slice(&ups);
            offsets.push(all_upgrades.len());
        }
    }

    let risk = if sampled {
        RiskSets::Sampled {
            members,
            offsets: member_offsets,
        }
    } else {
        RiskSets::Full {
            upgrades: all_upgrades,
            offsets,
        }
    };
    Ok(ModelData {
        n_actors: n,
        kind,
        policy,
        events,
        pool_sizes,
        covariates: DyadCovariates::empty(n),
        risk,
        singleton_risk_sets: singletons,
    })
}

impl ModelData {
    pub fn with_covariates(mut self, covariates: DyadCovariates) -> Result<Self, EstimationError> {
        if covariates.n_actors() != self.n_actors {
            return Err(EstimationError::InvalidInput(
                "covariates built for a different actor count".into(),
            ));
        }
        self.covariates = covariates;
        Ok(self)
    }

    pub fn n_actors(&self) -> usize {
        self.n_actors
    }

    pub fn n_fixed(&self) -> usize {
        self.covariates.p()
    }

    pub fn kind(&self) -> TriadicKind {
        self.kind
    }

    pub fn policy(&self) -> RiskPolicy {
        self.policy
    }

    pub fn events(&self) -> &[EventRecord] {
        &self.events
    }

    pub fn covariates(&self) -> &DyadCovariates {
        &self.covariates
    }

    /// Number of same-stratum dyads at each event, including the event dyad.
    pub fn pool_sizes(&self) -> &[usize] {
        &self.pool_sizes
    }

    /// Events whose stratum held only the event dyad.
    pub fn singleton_risk_sets(&self) -> usize {
        self.singleton_risk_sets
    }

    /// Size of the risk set actually used in the likelihood for event `e`.
    pub fn risk_set_size(&self, e: usize) -> usize {
        match &self.risk {
            RiskSets::Full { .. } => self.pool_sizes[e],
            RiskSets::Sampled { offsets, .. } => offsets[e + 1] - offsets[e],
        }
    }

    /// Every risk set as `(sender, receiver)` pairs. Full risk sets are
    /// materialized by replaying the label upgrades, so this is meant for
    /// inspection and tests on small data.
    pub fn risk_sets(&self) -> Vec<Vec<(usize, usize)>> {
        let n = self.n_actors;
        match &self.risk {
            RiskSets::Sampled { members, offsets } => (0..self.events.len())
                .map(|e| {
                    members[offsets[e]..offsets[e + 1]]
                        .iter()
                        .map(|&d| (d / n, d % n))
                        .collect()
                })
                .collect(),
            RiskSets::Full { upgrades, offsets } => {
                let mut labels = vec![StratumLabel::Spontaneous; n * n];
                let mut out = Vec::with_capacity(self.events.len());
                for (e, rec) in self.events.iter().enumerate() {
                    out.push(
                        (0..n * n)
                            .filter(|&d| d / n != d % n && labels[d] == rec.stratum)
                            .map(|d| (d / n, d % n))
                            .collect(),
                    );
                    for u in &upgrades[offsets[e]..offsets[e + 1]] {
                        labels[u.dyad] = u.to;
                    }
                }
                out
            }
        }
    }

    pub fn risk_set(&self, e: usize) -> Vec<(usize, usize)> {
        match &self.risk {
            RiskSets::Sampled { members, offsets } => members[offsets[e]..offsets[e + 1]]
                .iter()
                .map(|&d| (d / self.n_actors, d % self.n_actors))
                .collect(),
            RiskSets::Full { .. } => self.risk_sets().swap_remove(e),
        }
    }
}
