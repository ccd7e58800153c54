//! Inference-side machinery: windowed reranking with fallback completion,
//! sliding windows over long lists, reciprocal rank fusion and Kemeny
//! aggregation of rankings obtained from different input orders.

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::scorer::{score, ScorerParams};
use crate::types::{complete_ranking, CandidateList, Ranking};

/// Sort by descending score, ties by ascending input position.
pub fn rank_by_scores(scores: &[f64]) -> Ranking {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    Ranking::from_order(&order).expect("sorted indices form a permutation")
}

/// Deterministic single-window rerank.
pub fn rerank(params: &ScorerParams, list: &CandidateList) -> Result<Ranking> {
    Ok(rank_by_scores(&score(params, list)?))
}

/// Reranks one window where each passage is independently dropped from the
/// model's output with probability `p_fail`; dropped passages are appended in
/// input order.
pub fn rerank_window(
    params: &ScorerParams,
    list: &CandidateList,
    p_fail: f64,
    rng: &mut RngStream,
) -> Result<Ranking> {
    if !(0.0..1.0).contains(&p_fail) {
        return Err(Error::InvalidArgument(format!("p_fail {p_fail} outside [0, 1)")));
    }
    let scores = score(params, list)?;
    if p_fail == 0.0 {
        return Ok(rank_by_scores(&scores));
    }
    let mut survivors: Vec<usize> = (0..list.len()).filter(|_| rng.unit() >= p_fail).collect();
    survivors.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut assignment = vec![None; list.len()];
    for (r, &i) in survivors.iter().enumerate() {
        assignment[i] = Some(r + 1);
    }
    complete_ranking(&Ranking::partial(assignment)?, list)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowConfig {
    pub window_size: usize,
    pub step: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            window_size: 20,
            step: 10,
        }
    }
}

/// Reranks a long list by overlapping windows, starting from the bottom.
pub fn sliding_window_rerank(
    params: &ScorerParams,
    full_list: &CandidateList,
    cfg: &WindowConfig,
) -> Result<Ranking> {
    let WindowConfig { window_size, step } = *cfg;
    if step == 0 || step > window_size {
        return Err(Error::InvalidArgument(format!(
            "step {step} must lie in 1..={window_size}"
        )));
    }
    let total = full_list.len();
    if total < window_size {
        return Err(Error::InvalidArgument(format!(
            "list of {total} passages is shorter than the window {window_size}"
        )));
    }
    let mut order: Vec<usize> = (0..total).collect();
    let mut start = total - window_size;
    loop {
        let slice = &order[start..start + window_size];
        let window = CandidateList::new(
            full_list.query_id(),
            slice.iter().map(|&i| full_list.passages()[i].clone()).collect(),
        )?;
        let local = rerank(params, &window)?.order()?;
        let reordered: Vec<usize> = local.iter().map(|&j| slice[j]).collect();
        order[start..start + window_size].copy_from_slice(&reordered);
        if start == 0 {
            break;
        }
        start = start.saturating_sub(step);
    }
    Ranking::from_order(&order)
}

/// Rankings over one candidate set, indexed by a shared candidate order.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionInput {
    pub rankings: Vec<Ranking>,
    pub rrf_c: f64,
}

impl FusionInput {
    pub fn new(rankings: Vec<Ranking>) -> Self {
        Self {
            rankings,
            rrf_c: 60.0,
        }
    }

    fn validate(&self) -> Result<usize> {
        let k = self
            .rankings
            .first()
            .ok_or(Error::EmptyInput("fusion rankings"))?
            .len();
        for r in &self.rankings {
            if r.len() != k {
                return Err(Error::DimensionMismatch {
                    what: "fused ranking",
                    expected: k,
                    actual: r.len(),
                });
            }
            if !r.is_complete() {
                return Err(Error::IncompletePermutation);
            }
        }
        Ok(k)
    }
}

/// `Σ_r 1 / (c + rank_r(i))` for every candidate.
pub fn rrf_scores(inp: &FusionInput) -> Result<Vec<f64>> {
    let k = inp.validate()?;
    if !(inp.rrf_c > 0.0) {
        return Err(Error::InvalidArgument(format!("rrf constant {} must be positive", inp.rrf_c)));
    }
    let mut scores = vec![0.0; k];
    for r in &inp.rankings {
        for (s, rank) in scores.iter_mut().zip(r.ranks()?) {
            *s += 1.0 / (inp.rrf_c + rank as f64);
        }
    }
    Ok(scores)
}

/// Reciprocal rank fusion; ties go to the earlier position in the first ranking.
pub fn rrf_fuse(inp: &FusionInput) -> Result<Ranking> {
    let scores = rrf_scores(inp)?;
    let first = inp.rankings[0].ranks()?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(first[a].cmp(&first[b])));
    Ranking::from_order(&order)
}

/// `prefer[a][b]` = number of rankings placing `a` above `b`.
fn preference_matrix(rankings: &[Ranking], k: usize) -> Result<Vec<Vec<u32>>> {
    let mut prefer = vec![vec![0u32; k]; k];
    for r in rankings {
        let ranks = r.ranks()?;
        for a in 0..k {
            for b in 0..k {
                if ranks[a] < ranks[b] {
                    prefer[a][b] += 1;
                }
            }
        }
    }
    Ok(prefer)
}

/// Total Kendall distance of an ordering, from the preference matrix.
fn order_cost(order: &[usize], prefer: &[Vec<u32>]) -> u64 {
    let mut cost = 0u64;
    for i in 0..order.len() {
        for j in i + 1..order.len() {
            cost += u64::from(prefer[order[j]][order[i]]);
        }
    }
    cost
}

/// `Σ_r kendall_tau(candidate, r)`.
pub fn total_kendall_distance(candidate: &Ranking, rankings: &[Ranking]) -> Result<u64> {
    rankings
        .iter()
        .map(|r| crate::types::kendall_tau(candidate, r).map(|d| d as u64))
        .sum()
}

fn next_permutation(v: &mut [usize]) -> bool {
    let n = v.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

fn exact_kemeny(prefer: &[Vec<u32>], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..k).collect();
    let mut best = order.clone();
    let mut best_cost = order_cost(&order, prefer);
    while next_permutation(&mut order) {
        let c = order_cost(&order, prefer);
        if c < best_cost {
            best_cost = c;
            best.copy_from_slice(&order);
        }
    }
    best
}

/// Ascending sum of ranks, ties by the first ranking.
pub fn borda_order(inp: &FusionInput) -> Result<Vec<usize>> {
    let k = inp.validate()?;
    let mut totals = vec![0usize; k];
    for r in &inp.rankings {
        for (t, rank) in totals.iter_mut().zip(r.ranks()?) {
            *t += rank;
        }
    }
    let first = inp.rankings[0].ranks()?;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| totals[a].cmp(&totals[b]).then(first[a].cmp(&first[b])));
    Ok(order)
}

/// Moves single elements to new positions while that lowers the cost.
/// Adjacent transpositions are the length-one moves of this neighbourhood.
fn insertion_local_search(order: &mut Vec<usize>, prefer: &[Vec<u32>]) {
    let k = order.len();
    loop {
        let mut improved = false;
        for from in 0..k {
            // delta of moving order[from] to each target, computed incrementally
            let x = order[from];
            let mut best_delta = 0i64;
            let mut best_to = from;
            let mut delta = 0i64;
            for to in (0..from).rev() {
                let y = order[to];
                delta += i64::from(prefer[y][x]) - i64::from(prefer[x][y]);
                if delta < best_delta {
                    best_delta = delta;
                    best_to = to;
                }
            }
            delta = 0;
            for to in from + 1..k {
                let y = order[to];
                delta += i64::from(prefer[x][y]) - i64::from(prefer[y][x]);
                if delta < best_delta {
                    best_delta = delta;
                    best_to = to;
                }
            }
            if best_to != from {
                let x = order.remove(from);
                order.insert(best_to, x);
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
}

/// Heuristic Kemeny aggregation: local search started from the Borda order and
/// from each input ranking; the cheapest local optimum wins, Borda first on ties.
pub fn kemeny_local_search(inp: &FusionInput) -> Result<Ranking> {
    let k = inp.validate()?;
    let prefer = preference_matrix(&inp.rankings, k)?;
    let mut starts = vec![borda_order(inp)?];
    for r in &inp.rankings {
        let o = r.order()?;
        if !starts.contains(&o) {
            starts.push(o);
        }
    }
    let mut best: Option<(u64, Vec<usize>)> = None;
    for mut order in starts {
        insertion_local_search(&mut order, &prefer);
        let c = order_cost(&order, &prefer);
        if best.as_ref().is_none_or(|(bc, _)| c < *bc) {
            best = Some((c, order));
        }
    }
    Ranking::from_order(&best.expect("at least one start").1)
}

/// Central ranking minimizing the total Kendall distance to the inputs: exact
/// enumeration for `k <= exact_limit`, local search otherwise.
pub fn permsc_aggregate(inp: &FusionInput, exact_limit: usize) -> Result<Ranking> {
    let k = inp.validate()?;
    if k <= exact_limit {
        let prefer = preference_matrix(&inp.rankings, k)?;
        Ranking::from_order(&exact_kemeny(&prefer, k))
    } else {
        kemeny_local_search(inp)
    }
}

pub const DEFAULT_EXACT_LIMIT: usize = 8;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::PassageRef;

    fn positional_list(k: usize) -> CandidateList {
        CandidateList::new(
            "q",
            (0..k)
                .map(|i| PassageRef::new(format!("p{i}"), vec![i as f64]))
                .collect(),
        )
        .unwrap()
    }

    fn params(weight: f64, k: usize) -> ScorerParams {
        ScorerParams {
            content_weights: vec![weight],
            position_weights: vec![0.0; k],
            bias_scale: 0.0,
        }
    }

    #[test]
    fn decreasing_scores_give_identity() {
        let l = positional_list(5);
        let r = rerank_window(&params(-1.0, 5), &l, 0.0, &mut RngStream::new(0, 0)).unwrap();
        assert_eq!(r, Ranking::identity(5));
    }

    #[test]
    fn total_failure_falls_back_to_input_order() {
        let l = positional_list(5);
        let r = rerank_window(&params(1.0, 5), &l, 1.0 - 1e-12, &mut RngStream::new(0, 0)).unwrap();
        assert_eq!(r, Ranking::identity(5));
    }

    #[test]
    fn sort_check() {
        let r = rank_by_scores(&[0.1, 0.9, 0.5]);
        assert_eq!(r.ranks().unwrap(), vec![3, 1, 2]);
        let tied = rank_by_scores(&[1.0, 2.0, 1.0]);
        assert_eq!(tied.ranks().unwrap(), vec![2, 1, 3]);
    }

    #[test]
    fn p_fail_outside_range_rejected() {
        let l = positional_list(2);
        assert!(rerank_window(&params(1.0, 2), &l, 1.0, &mut RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn single_window_matches_rerank() {
        let l = positional_list(20);
        let p = params(1.0, 20);
        let cfg = WindowConfig::default();
        assert_eq!(sliding_window_rerank(&p, &l, &cfg).unwrap(), rerank(&p, &l).unwrap());
    }

    #[test]
    fn bottom_passages_bubble_to_the_top() {
        // scores grow with input position, so the scorer prefers late passages
        let l = positional_list(30);
        let r = sliding_window_rerank(&params(1.0, 20), &l, &WindowConfig::default()).unwrap();
        let order = r.order().unwrap();
        let mut top: Vec<usize> = order[..10].to_vec();
        top.sort_unstable();
        assert_eq!(top, (20..30).collect::<Vec<_>>());
    }

    #[test]
    fn sorted_input_is_a_fixed_point() {
        let l = positional_list(45);
        let r = sliding_window_rerank(&params(-1.0, 20), &l, &WindowConfig::default()).unwrap();
        assert_eq!(r, Ranking::identity(45));
    }

    #[test]
    fn window_config_errors() {
        let l = positional_list(30);
        let p = params(1.0, 20);
        let bad = WindowConfig {
            window_size: 20,
            step: 21,
        };
        assert!(sliding_window_rerank(&p, &l, &bad).is_err());
        assert!(sliding_window_rerank(&p, &positional_list(10), &WindowConfig::default()).is_err());
    }

    #[test]
    fn rrf_examples() {
        let a = Ranking::complete(vec![3, 1, 2]).unwrap();
        assert_eq!(rrf_fuse(&FusionInput::new(vec![a.clone()])).unwrap(), a);

        let fwd = Ranking::complete(vec![1, 2]).unwrap();
        let rev = Ranking::complete(vec![2, 1]).unwrap();
        let inp = FusionInput::new(vec![rev.clone(), fwd.clone()]);
        let s = rrf_scores(&inp).unwrap();
        assert_eq!(s[0], s[1]);
        assert_eq!(rrf_fuse(&inp).unwrap(), rev);

        let inp = FusionInput::new(vec![
            Ranking::complete(vec![1, 2, 3]).unwrap(),
            Ranking::complete(vec![1, 3, 2]).unwrap(),
        ]);
        assert_eq!(rrf_fuse(&inp).unwrap().rank_of(0), Some(1));
    }

    #[test]
    fn rrf_rejects_mismatched_inputs() {
        let inp = FusionInput::new(vec![Ranking::identity(2), Ranking::identity(3)]);
        assert!(rrf_fuse(&inp).is_err());
        assert!(rrf_fuse(&FusionInput::new(vec![])).is_err());
    }

    #[test]
    fn identical_inputs_aggregate_to_themselves() {
        let r = Ranking::complete(vec![2, 4, 1, 3]).unwrap();
        let inp = FusionInput::new(vec![r.clone(); 3]);
        for limit in [0, DEFAULT_EXACT_LIMIT] {
            let agg = permsc_aggregate(&inp, limit).unwrap();
            assert_eq!(agg, r);
            assert_eq!(total_kendall_distance(&agg, &inp.rankings).unwrap(), 0);
        }
    }

    #[test]
    fn majority_identity_wins() {
        let id = Ranking::identity(4);
        let rev = Ranking::complete(vec![4, 3, 2, 1]).unwrap();
        let inp = FusionInput::new(vec![id.clone(), id.clone(), rev]);
        let agg = permsc_aggregate(&inp, DEFAULT_EXACT_LIMIT).unwrap();
        assert_eq!(agg, id);
        assert_eq!(total_kendall_distance(&agg, &inp.rankings).unwrap(), 6);
    }

    #[test]
    fn local_search_never_worse_than_borda() {
        let inp = FusionInput::new(vec![
            Ranking::complete(vec![1, 2, 3, 4, 5, 6, 7, 8, 9, 10]).unwrap(),
            Ranking::complete(vec![3, 1, 2, 5, 4, 7, 6, 10, 8, 9]).unwrap(),
            Ranking::complete(vec![10, 9, 1, 2, 3, 4, 5, 6, 7, 8]).unwrap(),
        ]);
        let borda = Ranking::from_order(&borda_order(&inp).unwrap()).unwrap();
        let agg = permsc_aggregate(&inp, 0).unwrap();
        assert!(
            total_kendall_distance(&agg, &inp.rankings).unwrap()
                <= total_kendall_distance(&borda, &inp.rankings).unwrap()
        );
    }
}
