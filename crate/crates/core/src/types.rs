//! Domain data model: candidate lists, rankings, judgments and run records.
//!
//! Input positions and ranks are 1-based at every public boundary. Internally a
//! [`Ranking`] is indexed by 0-based list index, so `rank_of(0)` is the output
//! rank of the passage at input position 1.

use std::collections::{BTreeMap, HashSet};

use crate::error::{Error, Result};

/// A candidate passage: an opaque id, a feature vector and an optional grade.
#[derive(Debug, Clone, PartialEq)]
pub struct PassageRef {
    pub passage_id: String,
    pub features: Vec<f64>,
    pub relevance_label: Option<u32>,
}

impl PassageRef {
    pub fn new(passage_id: impl Into<String>, features: Vec<f64>) -> Self {
        Self {
            passage_id: passage_id.into(),
            features,
            relevance_label: None,
        }
    }

    pub fn with_label(mut self, label: u32) -> Self {
        self.relevance_label = Some(label);
        self
    }
}

/// A query together with an ordered window of candidate passages.
///
/// The passage stored at index `i` sits at input position `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateList {
    query_id: String,
    query_features: Option<Vec<f64>>,
    passages: Vec<PassageRef>,
    provenance: String,
}

impl CandidateList {
    /// Validates ids and feature dimensions.
    pub fn new(query_id: impl Into<String>, passages: Vec<PassageRef>) -> Result<Self> {
        let query_id = query_id.into();
        if passages.is_empty() {
            return Err(Error::InvalidCandidates(format!(
                "query {query_id} has no passages"
            )));
        }
        let dim = passages[0].features.len();
        let mut seen = HashSet::with_capacity(passages.len());
        for p in &passages {
            if p.passage_id.is_empty() {
                return Err(Error::InvalidCandidates(format!(
                    "empty passage id in query {query_id}"
                )));
            }
            if !seen.insert(p.passage_id.as_str()) {
                return Err(Error::InvalidCandidates(format!(
                    "duplicate passage id {} in query {query_id}",
                    p.passage_id
                )));
            }
            if p.features.len() != dim {
                return Err(Error::DimensionMismatch {
                    what: "passage features",
                    expected: dim,
                    actual: p.features.len(),
                });
            }
        }
        Ok(Self {
            query_id,
            query_features: None,
            passages,
            provenance: String::from("synthetic"),
        })
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    pub fn with_query_features(mut self, features: Vec<f64>) -> Self {
        self.query_features = Some(features);
        self
    }

    pub fn query_id(&self) -> &str {
        &self.query_id
    }

    pub fn query_features(&self) -> Option<&[f64]> {
        self.query_features.as_deref()
    }

    pub fn passages(&self) -> &[PassageRef] {
        &self.passages
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// Number of candidates `k`.
    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    /// Feature dimension shared by all passages.
    pub fn feature_dim(&self) -> usize {
        self.passages[0].features.len()
    }

    /// 0-based index of a passage id.
    pub fn index_of(&self, passage_id: &str) -> Option<usize> {
        self.passages.iter().position(|p| p.passage_id == passage_id)
    }

    /// Builds a new list whose passage at index `j` is `self.passages()[order[j]]`.
    ///
    /// `order` must be a permutation of `0..len`.
    pub fn reordered(&self, order: &[usize]) -> Result<Self> {
        check_permutation(order, self.len())?;
        Ok(Self {
            query_id: self.query_id.clone(),
            query_features: self.query_features.clone(),
            passages: order.iter().map(|&i| self.passages[i].clone()).collect(),
            provenance: self.provenance.clone(),
        })
    }
}

fn check_permutation(order: &[usize], k: usize) -> Result<()> {
    if order.len() != k {
        return Err(Error::DimensionMismatch {
            what: "reordering",
            expected: k,
            actual: order.len(),
        });
    }
    let mut seen = vec![false; k];
    for &i in order {
        if i >= k || std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidArgument(format!(
                "reordering {order:?} is not a permutation of 0..{k}"
            )));
        }
    }
    Ok(())
}

/// Output ranks per input position, possibly with unassigned entries.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Ranking {
    assignment: Vec<Option<usize>>,
}

impl Ranking {
    /// A complete ranking; `ranks[i]` is the 1-based rank of input position `i + 1`.
    pub fn complete(ranks: Vec<usize>) -> Result<Self> {
        let k = ranks.len();
        let mut seen = vec![false; k];
        for &r in &ranks {
            if r == 0 || r > k || std::mem::replace(&mut seen[r - 1], true) {
                return Err(Error::InvalidRanking(format!(
                    "{ranks:?} is not a bijection onto 1..={k}"
                )));
            }
        }
        Ok(Self {
            assignment: ranks.into_iter().map(Some).collect(),
        })
    }

    /// A possibly partial ranking. Assigned ranks must be distinct and form `1..=m`.
    pub fn partial(assignment: Vec<Option<usize>>) -> Result<Self> {
        let k = assignment.len();
        let assigned: Vec<usize> = assignment.iter().flatten().copied().collect();
        let m = assigned.len();
        let mut seen = vec![false; m];
        for &r in &assigned {
            if r == 0 || r > m || std::mem::replace(&mut seen[r - 1], true) {
                return Err(Error::InvalidRanking(format!(
                    "assigned ranks {assigned:?} do not form 1..={m} (k = {k})"
                )));
            }
        }
        Ok(Self { assignment })
    }

    pub fn identity(k: usize) -> Self {
        Self {
            assignment: (1..=k).map(Some).collect(),
        }
    }

    /// Builds a complete ranking from an ordering: `order[r]` is the 0-based
    /// input index of the passage placed at rank `r + 1`.
    pub fn from_order(order: &[usize]) -> Result<Self> {
        let k = order.len();
        check_permutation(order, k).map_err(|_| {
            Error::InvalidRanking(format!("{order:?} is not an ordering of 0..{k}"))
        })?;
        let mut ranks = vec![0; k];
        for (r, &i) in order.iter().enumerate() {
            ranks[i] = r + 1;
        }
        Ok(Self {
            assignment: ranks.into_iter().map(Some).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.assignment.iter().all(Option::is_some)
    }

    /// Number of assigned entries.
    pub fn assigned(&self) -> usize {
        self.assignment.iter().flatten().count()
    }

    pub fn assignment(&self) -> &[Option<usize>] {
        &self.assignment
    }

    /// Rank of the passage at 0-based index `i`.
    pub fn rank_of(&self, i: usize) -> Option<usize> {
        self.assignment.get(i).copied().flatten()
    }

    /// Ranks of a complete ranking.
    pub fn ranks(&self) -> Result<Vec<usize>> {
        self.assignment
            .iter()
            .map(|r| r.ok_or(Error::IncompletePermutation))
            .collect()
    }

    /// 0-based input indices in rank order (complete rankings only).
    pub fn order(&self) -> Result<Vec<usize>> {
        let ranks = self.ranks()?;
        let mut order = vec![0; ranks.len()];
        for (i, r) in ranks.into_iter().enumerate() {
            order[r - 1] = i;
        }
        Ok(order)
    }
}

/// Swaps the "input position → rank" and "rank → input position" views.
pub fn invert_ranking(r: &Ranking) -> Result<Ranking> {
    let order = r.order()?;
    Ok(Ranking {
        assignment: order.into_iter().map(|i| Some(i + 1)).collect(),
    })
}

/// Number of passage pairs ordered differently by `a` and `b`.
pub fn kendall_tau(a: &Ranking, b: &Ranking) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            what: "kendall_tau",
            expected: a.len(),
            actual: b.len(),
        });
    }
    let ra = a.ranks()?;
    let rb = b.ranks()?;
    let k = ra.len();
    let mut discordant = 0;
    for i in 0..k {
        for j in i + 1..k {
            if (ra[i] < ra[j]) != (rb[i] < rb[j]) {
                discordant += 1;
            }
        }
    }
    Ok(discordant)
}

/// Fills unassigned passages with ranks `m+1..=k` in ascending input position.
pub fn complete_ranking(partial: &Ranking, original_order: &CandidateList) -> Result<Ranking> {
    if partial.len() != original_order.len() {
        return Err(Error::DimensionMismatch {
            what: "complete_ranking",
            expected: original_order.len(),
            actual: partial.len(),
        });
    }
    // Re-validate the prefix property for rankings built by hand.
    let partial = Ranking::partial(partial.assignment.clone())?;
    let mut next = partial.assigned();
    let assignment = partial
        .assignment
        .iter()
        .map(|r| {
            Some(r.unwrap_or_else(|| {
                next += 1;
                next
            }))
        })
        .collect();
    Ok(Ranking { assignment })
}

/// Graded relevance per (query id, passage id).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RelevanceJudgments {
    entries: BTreeMap<(String, String), u32>,
}

impl RelevanceJudgments {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a judgment; a second entry for the same pair is rejected.
    pub fn insert(
        &mut self,
        query_id: impl Into<String>,
        passage_id: impl Into<String>,
        grade: u32,
    ) -> Result<()> {
        let key = (query_id.into(), passage_id.into());
        if self.entries.contains_key(&key) {
            return Err(Error::InvalidArgument(format!(
                "duplicate judgment for query {} passage {}",
                key.0, key.1
            )));
        }
        self.entries.insert(key, grade);
        Ok(())
    }

    /// Grade of a passage; unjudged passages count as 0.
    pub fn grade(&self, query_id: &str, passage_id: &str) -> u32 {
        // BTreeMap<(String, String), _> cannot be probed with borrowed halves.
        self.entries
            .get(&(query_id.to_owned(), passage_id.to_owned()))
            .copied()
            .unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries sorted by (query id, passage id).
    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, u32)> {
        self.entries
            .iter()
            .map(|((q, p), g)| (q.as_str(), p.as_str(), *g))
    }

    /// Grades for every passage of `list`, in input order.
    pub fn grades_for(&self, list: &CandidateList) -> Vec<u32> {
        list.passages()
            .iter()
            .map(|p| self.grade(list.query_id(), &p.passage_id))
            .collect()
    }

    pub fn extend(&mut self, other: &RelevanceJudgments) -> Result<()> {
        for (q, p, g) in other.iter() {
            self.insert(q, p, g)?;
        }
        Ok(())
    }
}

/// One line of a TREC run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub query_id: String,
    pub passage_id: String,
    pub rank: usize,
    pub score: f64,
    pub tag: String,
}

/// Run records for one reranked list. The score column carries `k + 1 - rank`
/// when no model scores are supplied.
pub fn run_records(
    list: &CandidateList,
    ranking: &Ranking,
    scores: Option<&[f64]>,
    tag: &str,
) -> Result<Vec<RunRecord>> {
    if ranking.len() != list.len() {
        return Err(Error::DimensionMismatch {
            what: "run records",
            expected: list.len(),
            actual: ranking.len(),
        });
    }
    let k = list.len();
    let order = ranking.order()?;
    Ok(order
        .into_iter()
        .enumerate()
        .map(|(r, i)| RunRecord {
            query_id: list.query_id().to_owned(),
            passage_id: list.passages()[i].passage_id.clone(),
            rank: r + 1,
            score: scores.map_or((k - r) as f64, |s| s[i]),
            tag: tag.to_owned(),
        })
        .collect())
}

/// Checks that ranks are distinct and contiguous from 1 within each query.
pub fn validate_run(records: &[RunRecord]) -> Result<()> {
    let mut per_query: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for rec in records {
        per_query.entry(&rec.query_id).or_default().push(rec.rank);
    }
    for (query, mut ranks) in per_query {
        ranks.sort_unstable();
        if ranks.iter().enumerate().any(|(i, &r)| r != i + 1) {
            return Err(Error::InvalidRanking(format!(
                "ranks of query {query} are not contiguous from 1"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn list(k: usize) -> CandidateList {
        let passages = (0..k)
            .map(|i| PassageRef::new(format!("p{i}"), vec![i as f64]))
            .collect();
        CandidateList::new("q", passages).unwrap()
    }

    #[test]
    fn invert_examples() {
        let id = Ranking::complete(vec![1, 2, 3]).unwrap();
        assert_eq!(invert_ranking(&id).unwrap(), id);

        let r = Ranking::complete(vec![2, 3, 1]).unwrap();
        let inv = invert_ranking(&r).unwrap();
        assert_eq!(inv, Ranking::complete(vec![3, 1, 2]).unwrap());
        // composing the two gives the identity
        let ranks = r.ranks().unwrap();
        let inv_ranks = inv.ranks().unwrap();
        for i in 0..3 {
            assert_eq!(inv_ranks[ranks[i] - 1], i + 1);
        }

        let t = Ranking::complete(vec![2, 1]).unwrap();
        assert_eq!(invert_ranking(&t).unwrap(), t);
    }

    #[test]
    fn invert_rejects_partial() {
        let p = Ranking::partial(vec![Some(1), None]).unwrap();
        assert_eq!(invert_ranking(&p), Err(Error::IncompletePermutation));
        assert_eq!(
            Error::IncompletePermutation.to_string(),
            "incomplete permutation"
        );
    }

    #[test]
    fn kendall_examples() {
        let a = Ranking::identity(4);
        assert_eq!(kendall_tau(&a, &a).unwrap(), 0);
        let rev = Ranking::complete(vec![4, 3, 2, 1]).unwrap();
        assert_eq!(kendall_tau(&a, &rev).unwrap(), 6);
        let b = Ranking::complete(vec![2, 1, 4, 3]).unwrap();
        assert_eq!(kendall_tau(&a, &b).unwrap(), 2);
        assert!(kendall_tau(&a, &Ranking::identity(3)).is_err());
    }

    #[test]
    fn complete_examples() {
        let l4 = list(4);
        let full = Ranking::complete(vec![3, 1, 4, 2]).unwrap();
        assert_eq!(complete_ranking(&full, &l4).unwrap(), full);

        let p = Ranking::partial(vec![None, None, Some(1), None]).unwrap();
        assert_eq!(
            complete_ranking(&p, &l4).unwrap(),
            Ranking::complete(vec![2, 3, 1, 4]).unwrap()
        );

        let none = Ranking::partial(vec![None; 3]).unwrap();
        assert_eq!(complete_ranking(&none, &list(3)).unwrap(), Ranking::identity(3));
    }

    #[test]
    fn partial_must_be_prefix() {
        assert!(Ranking::partial(vec![Some(2), None, None]).is_err());
        assert!(Ranking::partial(vec![Some(1), Some(1), None]).is_err());
        assert!(Ranking::complete(vec![1, 3]).is_err());
    }

    #[test]
    fn candidate_list_validation() {
        let dup = vec![
            PassageRef::new("a", vec![0.0]),
            PassageRef::new("a", vec![1.0]),
        ];
        assert!(CandidateList::new("q", dup).is_err());
        let dims = vec![
            PassageRef::new("a", vec![0.0]),
            PassageRef::new("b", vec![1.0, 2.0]),
        ];
        assert!(CandidateList::new("q", dims).is_err());
        assert!(CandidateList::new("q", vec![]).is_err());
        assert!(CandidateList::new("q", vec![PassageRef::new("", vec![])]).is_err());
    }

    #[test]
    fn judgments_reject_duplicates() {
        let mut j = RelevanceJudgments::new();
        j.insert("q", "a", 2).unwrap();
        assert!(j.insert("q", "a", 1).is_err());
        assert_eq!(j.grade("q", "a"), 2);
        assert_eq!(j.grade("q", "b"), 0);
    }

    #[test]
    fn run_records_follow_rank_order() {
        let l = list(3);
        let r = Ranking::complete(vec![3, 1, 2]).unwrap();
        let recs = run_records(&l, &r, None, "t").unwrap();
        let ids: Vec<_> = recs.iter().map(|r| r.passage_id.as_str()).collect();
        assert_eq!(ids, ["p1", "p2", "p0"]);
        validate_run(&recs).unwrap();
        let mut bad = recs.clone();
        bad[2].rank = 5;
        assert!(validate_run(&bad).is_err());
    }
}
