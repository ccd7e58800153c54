//! Listwise and pairwise training objectives with analytic gradients with
//! respect to the per-passage scores.
//!
//! | Variant | Objective |
//! |---------|-----------|
//! | `Lm` | Plackett-Luce negative log-likelihood of the true identifier sequence |
//! | `Rank` | rank-weighted pairwise logistic loss |
//! | `RankIps` | `Rank` with each pair divided by the product of its propensities |
//! | `First` | `λ·Rank + Lm` |
//! | `DebiasFirst` | `λ·RankIps + Lm` |

use std::fmt;

use crate::error::{Error, Result};
use crate::propensity::PropensityMatrix;
use crate::types::Ranking;

/// Loss value and its gradient with respect to the scores.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grad_scores: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossVariant {
    Rank,
    RankIps,
    Lm,
    First,
    DebiasFirst,
}

impl LossVariant {
    pub const ALL: [LossVariant; 5] = [
        LossVariant::Rank,
        LossVariant::RankIps,
        LossVariant::Lm,
        LossVariant::First,
        LossVariant::DebiasFirst,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossVariant::Rank => "rank",
            LossVariant::RankIps => "rank-ips",
            LossVariant::Lm => "lm",
            LossVariant::First => "first",
            LossVariant::DebiasFirst => "debiasfirst",
        }
    }

    pub fn uses_propensities(self) -> bool {
        matches!(self, LossVariant::RankIps | LossVariant::DebiasFirst)
    }
}

impl fmt::Display for LossVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LossVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossVariant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown loss variant {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub lambda: f64,
    pub variant: LossVariant,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            variant: LossVariant::DebiasFirst,
        }
    }
}

impl LossConfig {
    pub fn new(variant: LossVariant) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }
}

fn check_inputs(scores: &[f64], truth: &Ranking) -> Result<Vec<usize>> {
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores"));
    }
    if truth.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            what: "true ranking",
            expected: scores.len(),
            actual: truth.len(),
        });
    }
    truth.ranks()
}

/// `log(1 + exp(z))` without overflow.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Plackett-Luce negative log-likelihood of the true ranking:
/// `Σ_t [ logsumexp(s over passages not yet emitted) - s_{y_t} ]`.
pub fn lm_loss(scores: &[f64], truth: &Ranking) -> Result<LossValue> {
    check_inputs(scores, truth)?;
    let order = truth.order()?;
    let k = order.len();
    let s: Vec<f64> = order.iter().map(|&i| scores[i]).collect();

    // suffix log-sum-exp: lse[t] = log Σ_{u ≥ t} exp(s[u])
    let mut lse = vec![0.0; k];
    let mut running = f64::NEG_INFINITY;
    for t in (0..k).rev() {
        running = log_add_exp(running, s[t]);
        lse[t] = running;
    }

    let value = (0..k).map(|t| lse[t] - s[t]).sum::<f64>();

    // d/ds[u] = Σ_{t ≤ u} softmax_t(u) - 1
    let mut grad_sorted = vec![0.0; k];
    for (u, g) in grad_sorted.iter_mut().enumerate() {
        let mass: f64 = (0..=u).map(|t| (s[u] - lse[t]).exp()).sum();
        *g = mass - 1.0;
    }
    let mut grad_scores = vec![0.0; k];
    for (t, &i) in order.iter().enumerate() {
        grad_scores[i] = grad_sorted[t];
    }
    Ok(LossValue {
        value: value.max(0.0),
        grad_scores,
    })
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Shared pairwise core; `pair_weight(a, b, rank_a, rank_b)` gives the weight
/// of the pair where `a` is ranked above `b`.
fn weighted_pairwise<F>(scores: &[f64], ranks: &[usize], mut pair_weight: F) -> Result<LossValue>
where
    F: FnMut(usize, usize, usize, usize) -> Result<f64>,
{
    let k = scores.len();
    let mut value = 0.0;
    let mut grad_scores = vec![0.0; k];
    for a in 0..k {
        for b in 0..k {
            if ranks[a] >= ranks[b] {
                continue;
            }
            let w = pair_weight(a, b, ranks[a], ranks[b])?;
            let z = scores[b] - scores[a];
            value += w * softplus(z);
            let g = w * sigmoid(z);
            grad_scores[b] += g;
            grad_scores[a] -= g;
        }
    }
    Ok(LossValue { value, grad_scores })
}

/// `Σ_{π(a) < π(b)} log(1 + exp(s_b - s_a)) / (π(a) + π(b))`.
pub fn rank_loss(scores: &[f64], truth: &Ranking) -> Result<LossValue> {
    let ranks = check_inputs(scores, truth)?;
    weighted_pairwise(scores, &ranks, |_, _, ra, rb| Ok(1.0 / (ra + rb) as f64))
}

/// `rank_loss` with each pair further divided by `ω[a, π(a)] · ω[b, π(b)]`,
/// where `a`, `b` are input positions and `π` the true ranks.
pub fn rank_ips_loss(
    scores: &[f64],
    truth: &Ranking,
    omega: &PropensityMatrix,
) -> Result<LossValue> {
    let ranks = check_inputs(scores, truth)?;
    if omega.k() < scores.len() {
        return Err(Error::DimensionMismatch {
            what: "propensity matrix",
            expected: scores.len(),
            actual: omega.k(),
        });
    }
    let prop = |i: usize, r: usize| -> Result<f64> {
        let w = omega.omega(i + 1, r);
        if w > 0.0 {
            Ok(w)
        } else {
            Err(Error::UnclampedPropensity {
                input_position: i + 1,
                output_rank: r,
            })
        }
    };
    weighted_pairwise(scores, &ranks, |a, b, ra, rb| {
        Ok(1.0 / ((ra + rb) as f64 * prop(a, ra)? * prop(b, rb)?))
    })
}

/// The configured objective; `Rank` and `RankIps` ignore `λ`.
pub fn joint_loss(
    cfg: &LossConfig,
    scores: &[f64],
    truth: &Ranking,
    omega: Option<&PropensityMatrix>,
) -> Result<LossValue> {
    if !cfg.lambda.is_finite() || cfg.lambda < 0.0 {
        return Err(Error::InvalidArgument(format!("invalid lambda {}", cfg.lambda)));
    }
    let ips = |omega: Option<&PropensityMatrix>| {
        omega
            .ok_or(Error::MissingPropensity(cfg.variant.name()))
            .and_then(|w| rank_ips_loss(scores, truth, w))
    };
    match cfg.variant {
        LossVariant::Lm => lm_loss(scores, truth),
        LossVariant::Rank => rank_loss(scores, truth),
        LossVariant::RankIps => ips(omega),
        LossVariant::First => Ok(combine(cfg.lambda, rank_loss(scores, truth)?, lm_loss(scores, truth)?)),
        LossVariant::DebiasFirst => Ok(combine(cfg.lambda, ips(omega)?, lm_loss(scores, truth)?)),
    }
}

fn combine(lambda: f64, rank: LossValue, lm: LossValue) -> LossValue {
    LossValue {
        value: lambda * rank.value + lm.value,
        grad_scores: rank
            .grad_scores
            .iter()
            .zip(&lm.grad_scores)
            .map(|(r, l)| lambda * r + l)
            .collect(),
    }
}
