//! NDCG@k and the measurement protocols built on it: controlled positional
//! sweeps, original- versus shuffled-order evaluation and run variance.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::permute::{fisher_yates_shuffle, place_relevant_at};
use crate::rerank::rerank;
use crate::rng::{streams, RngStream};
use crate::scorer::ScorerParams;
use crate::types::{CandidateList, Ranking, RelevanceJudgments};

/// Cutoff used by every report in this crate.
pub const NDCG_CUTOFF: usize = 10;

/// `Σ_{r ≤ k_cut} (2^rel_r - 1) / log2(r + 1)` over grades listed in rank order.
pub fn dcg(grades_in_rank_order: &[u32], k_cut: usize) -> f64 {
    grades_in_rank_order
        .iter()
        .take(k_cut)
        .enumerate()
        .map(|(r, &g)| (2f64.powi(g as i32) - 1.0) / ((r + 2) as f64).log2())
        .sum()
}

/// NDCG@k_cut of a ranking of `list`; the ideal ordering is taken over the
/// passages of the list. Lists without relevant passages score 0.
pub fn ndcg_at_k(
    ranking: &Ranking,
    list: &CandidateList,
    judgments: &RelevanceJudgments,
    k_cut: usize,
) -> Result<f64> {
    if k_cut < 1 {
        return Err(Error::InvalidArgument("k_cut must be at least 1".into()));
    }
    if ranking.len() != list.len() {
        return Err(Error::DimensionMismatch {
            what: "ranking",
            expected: list.len(),
            actual: ranking.len(),
        });
    }
    let grades = judgments.grades_for(list);
    let ranked: Vec<u32> = ranking.order()?.into_iter().map(|i| grades[i]).collect();
    let mut ideal = grades;
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg(&ideal, k_cut);
    if idcg == 0.0 {
        return Ok(0.0);
    }
    Ok(dcg(&ranked, k_cut) / idcg)
}

/// Population variance.
pub fn population_variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Entry `p - 1` is the mean NDCG when the relevant passage sits at position `p`.
    pub per_position_ndcg: Vec<f64>,
    /// Population variance of `per_position_ndcg`.
    pub variance: f64,
    pub num_queries: usize,
}

impl SweepResult {
    pub fn mean(&self) -> f64 {
        self.per_position_ndcg.iter().sum::<f64>() / self.per_position_ndcg.len() as f64
    }
}

/// Moves each query's relevant passage through every input position and
/// averages NDCG@k_cut per position.
pub fn positional_sweep(
    params: &ScorerParams,
    lists: &[CandidateList],
    judgments: &RelevanceJudgments,
    k_cut: usize,
) -> Result<SweepResult> {
    let k = lists
        .first()
        .ok_or(Error::EmptyInput("sweep dataset"))?
        .len();
    let mut sums = vec![0.0; k];
    for list in lists {
        if list.len() != k {
            return Err(Error::DimensionMismatch {
                what: "sweep list length",
                expected: k,
                actual: list.len(),
            });
        }
        for (p, sum) in sums.iter_mut().enumerate() {
            let placed = place_relevant_at(list, judgments, p + 1)?;
            let ranking = rerank(params, &placed)?;
            *sum += ndcg_at_k(&ranking, &placed, judgments, k_cut)?;
        }
    }
    let per_position_ndcg: Vec<f64> = sums.iter().map(|s| s / lists.len() as f64).collect();
    Ok(SweepResult {
        variance: population_variance(&per_position_ndcg),
        per_position_ndcg,
        num_queries: lists.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderMode {
    Original,
    /// Each query is Fisher-Yates shuffled from stream `(seed, query index)`.
    Shuffled { seed: u64 },
}

impl OrderMode {
    pub fn label(&self) -> &'static str {
        match self {
            OrderMode::Original => "original",
            OrderMode::Shuffled { .. } => "shuffled",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            OrderMode::Original => None,
            OrderMode::Shuffled { seed } => Some(*seed),
        }
    }

    /// The list as presented to the reranker for query index `idx`.
    pub fn arrange(&self, list: &CandidateList, idx: usize) -> CandidateList {
        match self {
            OrderMode::Original => list.clone(),
            OrderMode::Shuffled { seed } => {
                let mut rng = RngStream::new(*seed, streams::EVAL).derive(idx as u64);
                fisher_yates_shuffle(list, &mut rng)
            }
        }
    }
}

impl fmt::Display for OrderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mean_ndcg_at_10: f64,
    pub per_query: BTreeMap<String, f64>,
    pub order_mode: OrderMode,
}

impl EvalReport {
    pub fn seed(&self) -> Option<u64> {
        self.order_mode.seed()
    }
}

/// Reranks every list as arranged by `mode`; returns the presented lists and rankings.
pub fn rerank_dataset(
    params: &ScorerParams,
    lists: &[CandidateList],
    mode: OrderMode,
) -> Result<Vec<(CandidateList, Ranking)>> {
    lists
        .iter()
        .enumerate()
        .map(|(idx, list)| {
            let arranged = mode.arrange(list, idx);
            let ranking = rerank(params, &arranged)?;
            Ok((arranged, ranking))
        })
        .collect()
}

/// Aggregates NDCG@10 over already-reranked lists.
pub fn report_from_rankings(
    reranked: &[(CandidateList, Ranking)],
    judgments: &RelevanceJudgments,
    mode: OrderMode,
) -> Result<EvalReport> {
    if reranked.is_empty() {
        return Err(Error::EmptyInput("evaluation dataset"));
    }
    let mut per_query = BTreeMap::new();
    for (list, ranking) in reranked {
        let v = ndcg_at_k(ranking, list, judgments, NDCG_CUTOFF)?;
        if per_query.insert(list.query_id().to_owned(), v).is_some() {
            return Err(Error::InvalidArgument(format!(
                "query {} evaluated twice",
                list.query_id()
            )));
        }
    }
    let mean_ndcg_at_10 = per_query.values().sum::<f64>() / per_query.len() as f64;
    Ok(EvalReport {
        mean_ndcg_at_10,
        per_query,
        order_mode: mode,
    })
}

pub fn evaluate(
    params: &ScorerParams,
    lists: &[CandidateList],
    judgments: &RelevanceJudgments,
    mode: OrderMode,
) -> Result<EvalReport> {
    report_from_rankings(&rerank_dataset(params, lists, mode)?, judgments, mode)
}

/// Population variance of the reports' mean NDCG@10, in percentage points squared.
pub fn run_variance(reports: &[EvalReport]) -> Result<f64> {
    if reports.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "run variance needs at least 2 reports, got {}",
            reports.len()
        )));
    }
    let pct: Vec<f64> = reports.iter().map(|r| 100.0 * r.mean_ndcg_at_10).collect();
    Ok(population_variance(&pct))
}
