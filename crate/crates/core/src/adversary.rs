//! Blocking strategies.
//!
//! A strategy sees an [`Observation`]: a snapshot of the system at the start
//! of round `t - lateness`, the per-round budget and, for the strongly
//! adaptive strategy only, the pending outcome of the current round. It
//! returns the set of nodes to block in round `t`.

use std::collections::{BTreeMap, BTreeSet};

use crate::config::AdversaryKind;
use crate::rng::Stream;
use crate::types::{BinaryValue, Bit, NodeId, SystemSnapshot};

/// Nodes blocked in one round; sorted and free of duplicates.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BlockSet(Vec<NodeId>);

impl BlockSet {
    pub fn empty() -> Self {
        BlockSet(Vec::new())
    }

    pub fn new(mut ids: Vec<NodeId>) -> Self {
        ids.sort_unstable();
        ids.dedup();
        BlockSet(ids)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.0.binary_search(&id).is_ok()
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.0
    }

    pub fn mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for id in &self.0 {
            m[id.index()] = true;
        }
        m
    }
}

/// Current-round data that only a strongly adaptive adversary gets to see.
#[derive(Debug, Clone, Copy)]
pub enum Pending<'a> {
    /// Binary majority: the value every node will hold at the end of this
    /// round if it is not blocked.
    Binary { tentative: &'a [BinaryValue] },
    /// Median rule: start-of-round values, pull targets drawn this round and
    /// the value each node adopts if none of its exchanges is killed.
    Median {
        own: &'a [Bit],
        targets: &'a [[NodeId; 2]],
        tentative: &'a [Bit],
    },
}

#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub snapshot: &'a SystemSnapshot,
    pub round: u32,
    pub budget: usize,
    pub pending: Option<Pending<'a>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Strategy(pub AdversaryKind);

impl Strategy {
    pub fn needs_pending(self) -> bool {
        self.0 == AdversaryKind::StrongBalancer
    }

    pub fn choose(self, obs: &Observation<'_>, rng: &mut Stream) -> BlockSet {
        match self.0 {
            AdversaryKind::None => adv_none(obs),
            AdversaryKind::Random => adv_random(obs, rng),
            AdversaryKind::LateBalancer => adv_late_balancer(obs),
            AdversaryKind::StrongBalancer => adv_strong_balancer(obs),
        }
    }
}

pub fn adv_none(_obs: &Observation<'_>) -> BlockSet {
    BlockSet::empty()
}

/// Uniform subset of size `min(budget, n)`.
pub fn adv_random(obs: &Observation<'_>, rng: &mut Stream) -> BlockSet {
    let n = obs.snapshot.n();
    let size = obs.budget.min(n);
    BlockSet::new(
        rand::seq::index::sample(rng, n, size)
            .into_iter()
            .map(NodeId::from)
            .collect(),
    )
}

/// Blocks the lowest-id holders of the observed majority value (ties count
/// as zero). Undefined nodes are never blocked; leftover budget is unused.
pub fn adv_late_balancer(obs: &Observation<'_>) -> BlockSet {
    let Some(values) = obs.snapshot.binary_values() else {
        return BlockSet::empty();
    };
    let zeros = values.iter().filter(|v| **v == BinaryValue::Zero).count();
    let ones = values.iter().filter(|v| **v == BinaryValue::One).count();
    let target = if ones > zeros {
        BinaryValue::One
    } else {
        BinaryValue::Zero
    };
    BlockSet::new(
        values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v == target)
            .take(obs.budget)
            .map(|(i, _)| NodeId::from(i))
            .collect(),
    )
}

/// Greedy current-round balancer: repeatedly blocks the node whose removal
/// brings the pending imbalance closest to zero, lowest id on ties, and stops
/// once no block strictly reduces `|Y - X|` or the budget is spent.
pub fn adv_strong_balancer(obs: &Observation<'_>) -> BlockSet {
    match obs.pending {
        None => BlockSet::empty(),
        Some(Pending::Binary { tentative }) => strong_binary(tentative, obs.budget),
        Some(Pending::Median {
            own,
            targets,
            tentative,
        }) => strong_median(own, targets, tentative, obs.budget),
    }
}

fn strong_binary(tentative: &[BinaryValue], budget: usize) -> BlockSet {
    let d: i64 = tentative.iter().filter_map(|v| v.bit()).map(Bit::sign).sum();
    if d == 0 {
        return BlockSet::empty();
    }
    let majority = if d > 0 { Bit::One } else { Bit::Zero };
    let take = budget.min(d.unsigned_abs() as usize);
    BlockSet::new(
        tentative
            .iter()
            .enumerate()
            .filter(|(_, v)| v.bit() == Some(majority))
            .take(take)
            .map(|(i, _)| NodeId::from(i))
            .collect(),
    )
}

/// Blocking `w` freezes `w` and every node that pulled from `w`: they keep
/// their start-of-round value. The marginal effect of a candidate on
/// `D = Y - X` is the sum of the swings of the not-yet-frozen nodes it would
/// freeze. Candidates are bucketed by effect so each greedy step is cheap.
fn strong_median(own: &[Bit], targets: &[[NodeId; 2]], tentative: &[Bit], budget: usize) -> BlockSet {
    let n = own.len();
    let swing: Vec<i64> = (0..n).map(|u| own[u].sign() - tentative[u].sign()).collect();
    let distinct_targets = |u: usize| {
        let [a, b] = targets[u];
        let a = (a.index() != u).then_some(a.index());
        let b = (b.index() != u && b != targets[u][0]).then_some(b.index());
        a.into_iter().chain(b)
    };
    let mut pullers: Vec<Vec<u32>> = vec![Vec::new(); n];
    for u in 0..n {
        if swing[u] != 0 {
            for x in distinct_targets(u) {
                pullers[x].push(u as u32);
            }
        }
    }
    let mut frozen = vec![false; n];
    let effect_of = |w: usize, frozen: &[bool]| -> i64 {
        let own_part = if frozen[w] { 0 } else { swing[w] };
        own_part
            + pullers[w]
                .iter()
                .filter(|&&u| !frozen[u as usize])
                .map(|&u| swing[u as usize])
                .sum::<i64>()
    };
    let mut effect: Vec<i64> = (0..n).map(|w| effect_of(w, &frozen)).collect();
    let mut buckets: BTreeMap<i64, BTreeSet<u32>> = BTreeMap::new();
    for (w, &e) in effect.iter().enumerate() {
        if e != 0 {
            buckets.entry(e).or_default().insert(w as u32);
        }
    }
    let mut d: i64 = tentative.iter().map(|b| b.sign()).sum();
    let mut chosen = Vec::new();
    while chosen.len() < budget && d != 0 {
        let mut best: Option<(i64, u32, i64)> = None;
        for (&e, ids) in &buckets {
            let score = (d + e).abs();
            let first = *ids.first().expect("buckets are never left empty");
            let better = match best {
                None => true,
                Some((s, id, _)) => score < s || (score == s && first < id),
            };
            if better {
                best = Some((score, first, e));
            }
        }
        let Some((score, w, e)) = best else { break };
        if score >= d.abs() {
            break;
        }
        chosen.push(NodeId(w));
        d += e;
        let w = w as usize;
        let mut newly = Vec::new();
        if !frozen[w] {
            newly.push(w);
        }
        newly.extend(pullers[w].iter().map(|&u| u as usize).filter(|&u| !frozen[u]));
        for &u in &newly {
            frozen[u] = true;
        }
        let mut touched: BTreeSet<usize> = BTreeSet::new();
        for &u in &newly {
            touched.insert(u);
            touched.extend(distinct_targets(u));
        }
        touched.insert(w);
        for c in touched {
            let new_e = effect_of(c, &frozen);
            let old_e = effect[c];
            if new_e == old_e {
                continue;
            }
            if old_e != 0 {
                let set = buckets.get_mut(&old_e).expect("bucket exists");
                set.remove(&(c as u32));
                if set.is_empty() {
                    buckets.remove(&old_e);
                }
            }
            if new_e != 0 {
                buckets.entry(new_e).or_default().insert(c as u32);
            }
            effect[c] = new_e;
        }
    }
    BlockSet::new(chosen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_streams;
    use crate::types::SnapshotValues;
    use BinaryValue::{One as O, Undefined as U, Zero as Z};

    fn snapshot(values: Vec<BinaryValue>) -> SystemSnapshot {
        let n = values.len();
        SystemSnapshot {
            round: 1,
            values: SnapshotValues::Binary(values),
            blocked_now: vec![false; n],
            active: vec![false; n],
            decided: vec![None; n],
        }
    }

    fn obs(snap: &SystemSnapshot, budget: usize) -> Observation<'_> {
        Observation {
            snapshot: snap,
            round: 3,
            budget,
            pending: None,
        }
    }

    fn ids(v: &[u32]) -> Vec<NodeId> {
        v.iter().map(|&i| NodeId(i)).collect()
    }

    #[test]
    fn none_blocks_nothing() {
        let snap = snapshot(vec![O; 10]);
        assert!(adv_none(&obs(&snap, 5)).is_empty());
        assert!(adv_none(&obs(&snap, 0)).is_empty());
    }

    #[test]
    fn random_sizes() {
        let snap = snapshot(vec![O; 10]);
        let mut s = derive_streams(3, 0);
        assert_eq!(adv_random(&obs(&snap, 3), &mut s.adversary).len(), 3);
        assert!(adv_random(&obs(&snap, 0), &mut s.adversary).is_empty());
        assert_eq!(adv_random(&obs(&snap, 10), &mut s.adversary).ids(), ids(&(0..10).collect::<Vec<_>>()));
        assert_eq!(adv_random(&obs(&snap, 25), &mut s.adversary).len(), 10);
    }

    #[test]
    fn late_balancer_blocks_majority_holders() {
        // 60 ones then 40 zeros
        let mut v = vec![O; 60];
        v.extend(vec![Z; 40]);
        let snap = snapshot(v);
        assert_eq!(adv_late_balancer(&obs(&snap, 10)).ids(), ids(&(0..10).collect::<Vec<_>>()));

        let mut v = vec![O; 5];
        v.extend(vec![Z; 95]);
        let snap = snapshot(v);
        assert_eq!(adv_late_balancer(&obs(&snap, 10)).ids(), ids(&(5..15).collect::<Vec<_>>()));

        let mut v = vec![U; 97];
        v[10] = O;
        v[50] = O;
        v[90] = O;
        let snap = snapshot(v);
        assert_eq!(adv_late_balancer(&obs(&snap, 10)).ids(), ids(&[10, 50, 90]));
    }

    #[test]
    fn late_balancer_tie_goes_to_zero() {
        let snap = snapshot(vec![O, Z, O, Z]);
        assert_eq!(adv_late_balancer(&obs(&snap, 1)).ids(), ids(&[1]));
    }

    #[test]
    fn strong_binary_levels_the_pending_imbalance() {
        // D = +2: two blocks of one-holders level it, extra budget is unused.
        let tentative = [Z, Z, O, O, O, O];
        assert_eq!(strong_binary(&tentative, 1).ids(), ids(&[2]));
        assert_eq!(strong_binary(&tentative, 5).ids(), ids(&[2, 3]));
        assert!(strong_binary(&tentative, 0).is_empty());
        assert!(strong_binary(&[O, Z], 3).is_empty());
    }

    #[test]
    fn strong_median_picks_the_flip_that_zeroes_delta() {
        // Node 3 changes 0 -> 1 by pulling the ones held by 4 and 5; every
        // other node is stable. Pending D = Y - X = +2.
        use Bit::{One as B1, Zero as B0};
        let own = [B0, B1, B0, B0, B1, B1];
        let tentative = [B0, B1, B0, B1, B1, B1];
        let t = |a: u32, b: u32| [NodeId(a), NodeId(b)];
        let targets = [t(0, 2), t(1, 4), t(0, 2), t(4, 5), t(4, 5), t(5, 4)];
        // Blocking 3, 4 or 5 freezes node 3 and levels D; 3 is the lowest id.
        assert_eq!(strong_median(&own, &targets, &tentative, 1).ids(), ids(&[3]));
        assert_eq!(strong_median(&own, &targets, &tentative, 4).ids(), ids(&[3]));
        assert!(strong_median(&own, &targets, &tentative, 0).is_empty());
    }
}
