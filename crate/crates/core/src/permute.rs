//! Permutation generation: unbiased shuffling, grouping-and-rotation,
//! position-aware augmentation and controlled placement of the relevant passage.

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::types::{CandidateList, Ranking, RelevanceJudgments};

/// Training instances produced by an augmentation strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSet {
    pub instances: Vec<(CandidateList, Ranking)>,
    /// Number of augmented instances per source instance.
    pub augmentation_factor: usize,
}

impl AugmentedSet {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}

/// A uniformly random ordering of `0..k` (Durstenfeld's in-place variant).
pub fn fisher_yates_order(k: usize, rng: &mut RngStream) -> Vec<usize> {
    let mut order: Vec<usize> = (0..k).collect();
    for i in (1..k).rev() {
        let j = rng.below(i + 1);
        order.swap(i, j);
    }
    order
}

pub fn fisher_yates_shuffle(list: &CandidateList, rng: &mut RngStream) -> CandidateList {
    let order = fisher_yates_order(list.len(), rng);
    list.reordered(&order)
        .expect("fisher_yates_order yields a permutation")
}

/// Contiguous group boundaries: the first `k mod n` groups take one extra element.
fn group_bounds(k: usize, n: usize) -> Vec<(usize, usize)> {
    let base = k / n;
    let extra = k % n;
    let mut start = 0;
    (0..n)
        .map(|g| {
            let len = base + usize::from(g < extra);
            let span = (start, start + len);
            start += len;
            span
        })
        .collect()
}

/// Orderings produced by splitting `0..k` into `n` groups and rotating the
/// group sequence left by `r = 0..n`.
pub fn group_rotation_orders(k: usize, n: usize) -> Result<Vec<Vec<usize>>> {
    if n == 0 {
        return Err(Error::InvalidArgument("group count must be positive".into()));
    }
    if n > k {
        return Err(Error::InvalidArgument(format!(
            "group count {n} exceeds list length {k}"
        )));
    }
    let groups = group_bounds(k, n);
    Ok((0..n)
        .map(|r| {
            (0..n)
                .flat_map(|g| {
                    let (s, e) = groups[(g + r) % n];
                    s..e
                })
                .collect()
        })
        .collect())
}

pub fn group_rotate(shuffled: &CandidateList, n: usize) -> Result<Vec<CandidateList>> {
    group_rotation_orders(shuffled.len(), n)?
        .iter()
        .map(|order| shuffled.reordered(order))
        .collect()
}

/// Applies `order` to an instance and carries the true ranks along with the passages.
pub fn reorder_instance(
    list: &CandidateList,
    truth: &Ranking,
    order: &[usize],
) -> Result<(CandidateList, Ranking)> {
    let ranks = truth.ranks()?;
    if ranks.len() != list.len() {
        return Err(Error::DimensionMismatch {
            what: "true ranking",
            expected: list.len(),
            actual: ranks.len(),
        });
    }
    let reordered = list.reordered(order)?;
    let relabeled = Ranking::complete(order.iter().map(|&i| ranks[i]).collect())?;
    Ok((reordered, relabeled))
}

fn shared_k(dataset: &[(CandidateList, Ranking)]) -> Result<usize> {
    let k = dataset
        .first()
        .map(|(l, _)| l.len())
        .ok_or(Error::EmptyInput("augmentation dataset"))?;
    for (l, r) in dataset {
        if l.len() != k || r.len() != k {
            return Err(Error::DimensionMismatch {
                what: "augmentation instance",
                expected: k,
                actual: l.len().max(r.len()),
            });
        }
    }
    Ok(k)
}

/// Position-aware augmentation: one Fisher-Yates shuffle per instance followed
/// by grouping-and-rotation into `n` orderings.
///
/// Instance `i` draws from `rng.derive(i)`, so the output does not depend on
/// how instances are scheduled.
pub fn pos_aug(
    dataset: &[(CandidateList, Ranking)],
    n: usize,
    rng: &RngStream,
) -> Result<AugmentedSet> {
    let k = shared_k(dataset)?;
    let rotations = group_rotation_orders(k, n)?;
    let mut instances = Vec::with_capacity(dataset.len() * n);
    for (idx, (list, truth)) in dataset.iter().enumerate() {
        let mut stream = rng.derive(idx as u64);
        let shuffle = fisher_yates_order(k, &mut stream);
        for rot in &rotations {
            let order: Vec<usize> = rot.iter().map(|&j| shuffle[j]).collect();
            instances.push(reorder_instance(list, truth, &order)?);
        }
    }
    Ok(AugmentedSet {
        instances,
        augmentation_factor: n,
    })
}

/// Random augmentation baseline: `n` independent Fisher-Yates shuffles per instance.
pub fn random_aug(
    dataset: &[(CandidateList, Ranking)],
    n: usize,
    rng: &RngStream,
) -> Result<AugmentedSet> {
    shared_k(dataset)?;
    if n == 0 {
        return Err(Error::InvalidArgument("augmentation factor must be positive".into()));
    }
    let mut instances = Vec::with_capacity(dataset.len() * n);
    for (idx, (list, truth)) in dataset.iter().enumerate() {
        let mut stream = rng.derive(idx as u64);
        for _ in 0..n {
            let order = fisher_yates_order(list.len(), &mut stream);
            instances.push(reorder_instance(list, truth, &order)?);
        }
    }
    Ok(AugmentedSet {
        instances,
        augmentation_factor: n,
    })
}

/// Index of the highest-graded passage, ties broken by input position.
pub fn most_relevant_index(list: &CandidateList, judgments: &RelevanceJudgments) -> Result<usize> {
    let mut best: Option<(usize, u32)> = None;
    for (i, p) in list.passages().iter().enumerate() {
        let g = judgments.grade(list.query_id(), &p.passage_id);
        if g > 0 && best.is_none_or(|(_, bg)| g > bg) {
            best = Some((i, g));
        }
    }
    best.map(|(i, _)| i).ok_or_else(|| Error::NoRelevantPassage {
        query_id: list.query_id().to_owned(),
    })
}

/// Moves the relevant passage to 1-based `position`; the others keep their relative order.
pub fn place_relevant_at(
    list: &CandidateList,
    judgments: &RelevanceJudgments,
    position: usize,
) -> Result<CandidateList> {
    let k = list.len();
    if position == 0 || position > k {
        return Err(Error::InvalidArgument(format!(
            "position {position} outside 1..={k}"
        )));
    }
    let rel = most_relevant_index(list, judgments)?;
    let mut order: Vec<usize> = (0..k).filter(|&i| i != rel).collect();
    order.insert(position - 1, rel);
    list.reordered(&order)
}
