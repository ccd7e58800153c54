//! Positional-transition propensities estimated from a reranker's behavior on
//! randomized inputs, plus the transition-count diagnostics behind them.

use crate::error::{Error, Result};
use crate::types::{complete_ranking, CandidateList, Ranking};

/// Cell `(i, r)` counts how often the passage at input position `i` received output rank `r`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionCounts {
    k: usize,
    counts: Vec<u64>,
    observations: u64,
    shuffles_per_query: u64,
}

impl TransitionCounts {
    pub fn zeros(k: usize) -> Self {
        Self {
            k,
            counts: vec![0; k * k],
            observations: 0,
            shuffles_per_query: 1,
        }
    }

    /// Builds counts from a dense row-major matrix; each row must hold the same total.
    pub fn from_matrix(k: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != k * k {
            return Err(Error::DimensionMismatch {
                what: "transition counts",
                expected: k * k,
                actual: counts.len(),
            });
        }
        let observations = counts[..k].iter().sum::<u64>();
        for row in counts.chunks(k) {
            if row.iter().sum::<u64>() != observations {
                return Err(Error::InvalidArgument(
                    "transition count rows have unequal totals".into(),
                ));
            }
        }
        Ok(Self {
            k,
            counts,
            observations,
            shuffles_per_query: 1,
        })
    }

    /// Records how the observations split into `|Q|` queries × `n` shuffles.
    pub fn with_shuffles_per_query(mut self, n: u64) -> Result<Self> {
        if n == 0 || self.observations % n != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} observations do not split into {n} shuffles per query",
                self.observations
            )));
        }
        self.shuffles_per_query = n;
        Ok(self)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Count for 1-based input position and output rank.
    pub fn get(&self, input_position: usize, output_rank: usize) -> u64 {
        self.counts[(input_position - 1) * self.k + output_rank - 1]
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.counts
    }

    /// Number of reranked lists observed, `|Q|·n`.
    pub fn observations(&self) -> u64 {
        self.observations
    }

    pub fn shuffles_per_query(&self) -> u64 {
        self.shuffles_per_query
    }

    pub fn total_queries(&self) -> u64 {
        self.observations / self.shuffles_per_query
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.chunks(self.k).map(|r| r.iter().sum()).collect()
    }

    /// Adds one complete ranking.
    pub fn observe(&mut self, ranking: &Ranking) -> Result<()> {
        if ranking.len() != self.k {
            return Err(Error::DimensionMismatch {
                what: "observed ranking",
                expected: self.k,
                actual: ranking.len(),
            });
        }
        for (i, r) in ranking.ranks()?.into_iter().enumerate() {
            self.counts[i * self.k + r - 1] += 1;
        }
        self.observations += 1;
        Ok(())
    }

    /// Merges partial counts; the result is independent of merge order.
    pub fn merge(&mut self, other: &TransitionCounts) -> Result<()> {
        if other.k != self.k {
            return Err(Error::DimensionMismatch {
                what: "merged counts",
                expected: self.k,
                actual: other.k,
            });
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.observations += other.observations;
        Ok(())
    }

    /// Ratio of the largest to the smallest cell; infinite when a cell is empty.
    pub fn max_min_ratio(&self) -> f64 {
        let max = self.counts.iter().copied().max().unwrap_or(0) as f64;
        let min = self.counts.iter().copied().min().unwrap_or(0) as f64;
        max / min
    }

    pub fn max_cell(&self) -> u64 {
        self.counts.iter().copied().max().unwrap_or(0)
    }
}

/// Counts input-position → output-rank transitions. Partial rankings are
/// completed with the input-order fallback first.
pub fn count_transitions<'a, I>(observations: I) -> Result<TransitionCounts>
where
    I: IntoIterator<Item = (&'a CandidateList, &'a Ranking)>,
{
    let mut counts: Option<TransitionCounts> = None;
    for (list, ranking) in observations {
        let acc = counts.get_or_insert_with(|| TransitionCounts::zeros(list.len()));
        if list.len() != acc.k {
            return Err(Error::DimensionMismatch {
                what: "observation list length",
                expected: acc.k,
                actual: list.len(),
            });
        }
        if ranking.is_complete() {
            acc.observe(ranking)?;
        } else {
            acc.observe(&complete_ranking(ranking, list)?)?;
        }
    }
    counts.ok_or(Error::EmptyInput("transition observations"))
}

/// Transition propensities `ω`; values are read through the clamp at `epsilon_floor`.
#[derive(Debug, Clone, PartialEq)]
pub struct PropensityMatrix {
    k: usize,
    raw: Vec<f64>,
    epsilon_floor: f64,
}

impl PropensityMatrix {
    pub fn new(k: usize, raw: Vec<f64>, epsilon_floor: f64) -> Result<Self> {
        if raw.len() != k * k {
            return Err(Error::DimensionMismatch {
                what: "propensity matrix",
                expected: k * k,
                actual: raw.len(),
            });
        }
        if raw.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument(
                "propensities must be finite and nonnegative".into(),
            ));
        }
        if !(epsilon_floor.is_finite() && epsilon_floor >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "invalid propensity floor {epsilon_floor}"
            )));
        }
        Ok(Self {
            k,
            raw,
            epsilon_floor,
        })
    }

    /// Every cell `1/k²`, the propensities of a position-blind reranker.
    pub fn uniform(k: usize) -> Self {
        let v = 1.0 / (k * k) as f64;
        Self {
            k,
            raw: vec![v; k * k],
            epsilon_floor: v,
        }
    }

    /// Builds a matrix from already-clamped values, taking the smallest one as the floor.
    pub fn from_clamped(k: usize, values: Vec<f64>) -> Result<Self> {
        let floor = values.iter().copied().fold(f64::INFINITY, f64::min);
        Self::new(k, values, if floor.is_finite() { floor } else { 0.0 })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn epsilon_floor(&self) -> f64 {
        self.epsilon_floor
    }

    /// Clamped `ω` at 1-based input position and output rank.
    pub fn omega(&self, input_position: usize, output_rank: usize) -> f64 {
        self.raw(input_position, output_rank).max(self.epsilon_floor)
    }

    /// Pre-clamp value.
    pub fn raw(&self, input_position: usize, output_rank: usize) -> f64 {
        self.raw[(input_position - 1) * self.k + output_rank - 1]
    }

    /// Clamped values, row-major.
    pub fn clamped(&self) -> Vec<f64> {
        self.raw.iter().map(|v| v.max(self.epsilon_floor)).collect()
    }

    pub fn raw_row_sums(&self) -> Vec<f64> {
        self.raw.chunks(self.k).map(|r| r.iter().sum()).collect()
    }

    pub fn raw_total(&self) -> f64 {
        self.raw.iter().sum()
    }

    /// Multiplies every entry (and the floor) by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            k: self.k,
            raw: self.raw.iter().map(|v| v * factor).collect(),
            epsilon_floor: self.epsilon_floor * factor,
        }
    }
}

/// `ω[i][r] = count(i → r) / (|Q|·k·n)`, clamped at one pseudo-observation `1/(|Q|·k·n)`.
pub fn estimate_propensities(counts: &TransitionCounts) -> Result<PropensityMatrix> {
    let denom = counts.observations() as f64 * counts.k() as f64;
    if denom == 0.0 {
        return Err(Error::InvalidArgument(
            "propensity denominator |Q|·k·n is zero".into(),
        ));
    }
    let raw = counts.as_slice().iter().map(|&c| c as f64 / denom).collect();
    PropensityMatrix::new(counts.k(), raw, 1.0 / denom)
}

/// One heatmap cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeatmapCell {
    pub input_position: usize,
    pub output_rank: usize,
    pub count: u64,
}

/// Dense `k²` table of the counts, row-major by input position.
pub fn propensity_heatmap(counts: &TransitionCounts) -> Vec<HeatmapCell> {
    let k = counts.k();
    (1..=k)
        .flat_map(|i| {
            (1..=k).map(move |r| HeatmapCell {
                input_position: i,
                output_rank: r,
                count: counts.get(i, r),
            })
        })
        .collect()
}

/// Re-aggregates a heatmap table into counts.
pub fn counts_from_heatmap(k: usize, cells: &[HeatmapCell]) -> Result<TransitionCounts> {
    let mut dense = vec![0u64; k * k];
    for c in cells {
        if c.input_position == 0 || c.input_position > k || c.output_rank == 0 || c.output_rank > k
        {
            return Err(Error::InvalidArgument(format!(
                "heatmap cell ({}, {}) outside 1..={k}",
                c.input_position, c.output_rank
            )));
        }
        dense[(c.input_position - 1) * k + c.output_rank - 1] += c.count;
    }
    TransitionCounts::from_matrix(k, dense)
}
