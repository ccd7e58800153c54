//! A linear relevance scorer with an explicit per-position logit, and a
//! synthetic data generator with controllable positional skew of relevance.
//!
//! The scorer stands in for the first-token identifier logits of a listwise
//! reranker:
//!
//! ```text
//! score[i] = <content_weights, features_i> + bias_scale * position_weights[i]
//! ```

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{streams, RngStream};
use crate::types::{CandidateList, PassageRef, Ranking, RelevanceJudgments};

#[derive(Debug, Clone, PartialEq)]
pub struct ScorerParams {
    pub content_weights: Vec<f64>,
    /// One additive logit per input position.
    pub position_weights: Vec<f64>,
    /// Fixed multiplier on the position pathway.
    pub bias_scale: f64,
}

impl ScorerParams {
    pub fn zeros(d: usize, k: usize, bias_scale: f64) -> Self {
        Self {
            content_weights: vec![0.0; d],
            position_weights: vec![0.0; k],
            bias_scale,
        }
    }

    /// Zero content weights and a linear positional prior falling from
    /// `strength` at position 1 to 0 at position `k`.
    pub fn with_position_prior(d: usize, k: usize, bias_scale: f64, strength: f64) -> Self {
        let denom = (k.max(2) - 1) as f64;
        Self {
            content_weights: vec![0.0; d],
            position_weights: (0..k)
                .map(|i| strength * (1.0 - i as f64 / denom))
                .collect(),
            bias_scale,
        }
    }

    pub fn dim(&self) -> usize {
        self.content_weights.len()
    }

    /// Largest window this scorer accepts.
    pub fn window(&self) -> usize {
        self.position_weights.len()
    }

    /// Max minus min of the position weights.
    pub fn position_spread(&self) -> f64 {
        let max = self.position_weights.iter().copied().fold(f64::MIN, f64::max);
        let min = self.position_weights.iter().copied().fold(f64::MAX, f64::min);
        max - min
    }

    pub fn is_finite(&self) -> bool {
        self.bias_scale.is_finite()
            && self
                .content_weights
                .iter()
                .chain(&self.position_weights)
                .all(|v| v.is_finite())
    }

    fn check(&self, list: &CandidateList) -> Result<()> {
        if list.feature_dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "feature dimension",
                expected: self.dim(),
                actual: list.feature_dim(),
            });
        }
        if list.len() > self.window() {
            return Err(Error::DimensionMismatch {
                what: "candidate window",
                expected: self.window(),
                actual: list.len(),
            });
        }
        if list
            .passages()
            .iter()
            .any(|p| p.features.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::NonFinite("passage features"));
        }
        Ok(())
    }
}

/// Gradient with respect to every scorer parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradient {
    pub content_weights: Vec<f64>,
    pub position_weights: Vec<f64>,
}

impl ParamGradient {
    pub fn zeros_like(params: &ScorerParams) -> Self {
        Self {
            content_weights: vec![0.0; params.dim()],
            position_weights: vec![0.0; params.window()],
        }
    }

    pub fn add_scaled(&mut self, other: &ParamGradient, factor: f64) {
        for (a, b) in self.content_weights.iter_mut().zip(&other.content_weights) {
            *a += factor * b;
        }
        for (a, b) in self.position_weights.iter_mut().zip(&other.position_weights) {
            *a += factor * b;
        }
    }

    /// Flattened as content weights followed by position weights.
    pub fn flatten(&self) -> Vec<f64> {
        self.content_weights
            .iter()
            .chain(&self.position_weights)
            .copied()
            .collect()
    }
}

pub fn score(params: &ScorerParams, list: &CandidateList) -> Result<Vec<f64>> {
    params.check(list)?;
    Ok(list
        .passages()
        .iter()
        .zip(&params.position_weights)
        .map(|(p, pw)| dot(&params.content_weights, &p.features) + params.bias_scale * pw)
        .collect())
}

/// Per-passage derivatives of the scores.
///
/// `d score[i] / d content_weights = features_i` and
/// `d score[i] / d position_weights[j] = bias_scale` when `i == j`, else 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreJacobian {
    pub content: Vec<Vec<f64>>,
    pub position_scale: f64,
    window: usize,
}

impl ScoreJacobian {
    /// Chain rule: parameter gradient of a loss given its gradient w.r.t. the scores.
    pub fn backprop(&self, grad_scores: &[f64]) -> ParamGradient {
        let d = self.content.first().map_or(0, Vec::len);
        let mut content = vec![0.0; d];
        for (g, feats) in grad_scores.iter().zip(&self.content) {
            for (c, f) in content.iter_mut().zip(feats) {
                *c += g * f;
            }
        }
        let mut position = vec![0.0; self.window];
        for (p, g) in position.iter_mut().zip(grad_scores) {
            *p = self.position_scale * g;
        }
        ParamGradient {
            content_weights: content,
            position_weights: position,
        }
    }
}

pub fn score_gradient(params: &ScorerParams, list: &CandidateList) -> Result<ScoreJacobian> {
    params.check(list)?;
    Ok(ScoreJacobian {
        content: list.passages().iter().map(|p| p.features.clone()).collect(),
        position_scale: params.bias_scale,
        window: params.window(),
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Synthetic benchmark configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_queries: usize,
    pub k: usize,
    pub d: usize,
    /// Decay rate of the relevant passage's input-position distribution,
    /// `P(position p) ∝ exp(-skew · (p - 1))`; 0 is uniform.
    pub relevance_position_skew: f64,
    /// Grades handed to the relevant passages of a query, highest first.
    pub label_grades: Vec<u32>,
    pub relevant_per_query: usize,
    /// Shift of relevant passages along the ground-truth direction.
    pub relevance_shift: f64,
    /// Noise on the latent relevance that orders non-relevant passages.
    pub noise_sigma: f64,
    pub seed: u64,
    /// Seed of the ground-truth relevance direction; datasets meant to be
    /// evaluated against each other must share it.
    pub direction_seed: u64,
    pub query_prefix: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_queries: 100,
            k: 20,
            d: 8,
            relevance_position_skew: 0.5,
            label_grades: vec![1],
            relevant_per_query: 1,
            relevance_shift: 1.5,
            noise_sigma: 0.5,
            seed: 2024,
            direction_seed: 0,
            query_prefix: "q".into(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidArgument("synthetic k must be at least 2".into()));
        }
        if self.d == 0 {
            return Err(Error::InvalidArgument("feature dimension must be positive".into()));
        }
        if !(self.relevance_position_skew >= 0.0 && self.relevance_position_skew.is_finite()) {
            return Err(Error::InvalidArgument("skew must be finite and nonnegative".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidArgument("noise_sigma must be finite and nonnegative".into()));
        }
        if self.relevant_per_query == 0 || self.relevant_per_query > self.k {
            return Err(Error::InvalidArgument(format!(
                "relevant_per_query must lie in 1..={}",
                self.k
            )));
        }
        if self.label_grades.is_empty() || self.label_grades.contains(&0) {
            return Err(Error::InvalidArgument("label grades must be nonempty and positive".into()));
        }
        Ok(())
    }
}

/// Generated queries with true rankings and the matching judgments.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub instances: Vec<(CandidateList, Ranking)>,
    pub judgments: RelevanceJudgments,
    /// Unit vector along which relevant passages are shifted.
    pub direction: Vec<f64>,
}

impl SynthDataset {
    pub fn lists(&self) -> Vec<CandidateList> {
        self.instances.iter().map(|(l, _)| l.clone()).collect()
    }
}

/// Draws a 1-based position from `P(p) ∝ exp(-skew·(p-1))` among free positions.
fn draw_position(free: &[usize], skew: f64, rng: &mut RngStream) -> usize {
    let weights: Vec<f64> = free.iter().map(|&p| (-skew * p as f64).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.unit() * total;
    for (w, &p) in weights.iter().zip(free) {
        if u < *w {
            return p;
        }
        u -= w;
    }
    *free.last().expect("at least one free position")
}

fn normal(rng: &mut RngStream) -> f64 {
    StandardNormal.sample(rng)
}

/// Generates a dataset with relevant passages concentrated at early input positions.
///
/// True rankings order passages by grade, then latent relevance
/// `<direction, features> + noise`, then input position.
pub fn synth_generate(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let base = RngStream::new(cfg.seed, streams::SYNTH);

    let mut dir_rng = RngStream::new(cfg.direction_seed, streams::SYNTH).derive(u64::MAX);
    let mut direction: Vec<f64> = (0..cfg.d).map(|_| normal(&mut dir_rng)).collect();
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    direction.iter_mut().for_each(|v| *v /= norm);

    let mut grades_desc = cfg.label_grades.clone();
    grades_desc.sort_unstable_by(|a, b| b.cmp(a));

    let mut instances = Vec::with_capacity(cfg.num_queries);
    let mut judgments = RelevanceJudgments::new();
    for q in 0..cfg.num_queries {
        let mut rng = base.derive(q as u64);
        let query_id = format!("{}{}", cfg.query_prefix, q);

        let mut free: Vec<usize> = (0..cfg.k).collect();
        let mut grades = vec![0u32; cfg.k];
        for j in 0..cfg.relevant_per_query {
            let p = draw_position(&free, cfg.relevance_position_skew, &mut rng);
            free.retain(|&f| f != p);
            grades[p] = grades_desc[j % grades_desc.len()];
        }

        let mut latent = Vec::with_capacity(cfg.k);
        let mut passages = Vec::with_capacity(cfg.k);
        for (i, &grade) in grades.iter().enumerate() {
            let mut features: Vec<f64> = (0..cfg.d).map(|_| normal(&mut rng)).collect();
            if grade > 0 {
                for (f, u) in features.iter_mut().zip(&direction) {
                    *f += cfg.relevance_shift * u;
                }
            }
            latent.push(dot(&direction, &features) + cfg.noise_sigma * normal(&mut rng));
            let passage_id = format!("{query_id}_d{i}");
            if grade > 0 {
                judgments.insert(query_id.clone(), passage_id.clone(), grade)?;
            }
            passages.push(PassageRef::new(passage_id, features).with_label(grade));
        }

        let mut order: Vec<usize> = (0..cfg.k).collect();
        order.sort_by(|&a, &b| {
            grades[b]
                .cmp(&grades[a])
                .then(latent[b].total_cmp(&latent[a]))
                .then(a.cmp(&b))
        });
        let truth = Ranking::from_order(&order)?;
        let list = CandidateList::new(query_id, passages)?.with_provenance("synthetic");
        instances.push((list, truth));
    }

    Ok(SynthDataset {
        instances,
        judgments,
        direction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn list(features: &[&[f64]]) -> CandidateList {
        CandidateList::new(
            "q",
            features
                .iter()
                .enumerate()
                .map(|(i, f)| PassageRef::new(format!("p{i}"), f.to_vec()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn zero_params_score_zero() {
        let p = ScorerParams::zeros(2, 3, 0.0);
        let l = list(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]);
        assert_eq!(score(&p, &l).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn hand_arithmetic() {
        let p = ScorerParams {
            content_weights: vec![1.0],
            position_weights: vec![0.5, 0.0],
            bias_scale: 1.0,
        };
        let l = list(&[&[2.0], &[3.0]]);
        assert_eq!(score(&p, &l).unwrap(), vec![2.5, 3.0]);
    }

    #[test]
    fn position_free_scorer_is_equivariant() {
        let p = ScorerParams {
            content_weights: vec![0.3, -1.2],
            position_weights: vec![5.0, -2.0, 1.0],
            bias_scale: 0.0,
        };
        let l = list(&[&[1.0, 2.0], &[-3.0, 0.5], &[0.7, 0.1]]);
        let s = score(&p, &l).unwrap();
        let perm = [2, 0, 1];
        let sp = score(&p, &l.reordered(&perm).unwrap()).unwrap();
        for (j, &i) in perm.iter().enumerate() {
            assert_eq!(sp[j], s[i]);
        }
    }

    #[test]
    fn non_finite_features_rejected() {
        let p = ScorerParams::zeros(1, 2, 1.0);
        let l = list(&[&[f64::NAN], &[0.0]]);
        assert_eq!(score(&p, &l), Err(Error::NonFinite("passage features")));
    }

    #[test]
    fn oversized_window_rejected() {
        let p = ScorerParams::zeros(1, 1, 1.0);
        let l = list(&[&[0.0], &[0.0]]);
        assert!(score(&p, &l).is_err());
    }

    #[test]
    fn jacobian_special_cases() {
        let p = ScorerParams {
            content_weights: vec![1.0, 2.0],
            position_weights: vec![0.1, 0.2],
            bias_scale: 0.0,
        };
        let l = list(&[&[0.0, 0.0], &[0.0, 0.0]]);
        let g = score_gradient(&p, &l).unwrap().backprop(&[1.0, -2.0]);
        assert_eq!(g.content_weights, vec![0.0, 0.0]);
        assert_eq!(g.position_weights, vec![0.0, 0.0]);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let params = ScorerParams {
            content_weights: vec![0.4, -0.7, 1.1],
            position_weights: vec![0.3, -0.2, 0.9, 0.0],
            bias_scale: 1.7,
        };
        let l = list(&[&[1.0, -2.0, 0.5], &[0.3, 0.3, -1.0], &[2.2, 0.0, 1.4]]);
        let jac = score_gradient(&params, &l).unwrap();
        let h = 1e-5;
        for i in 0..l.len() {
            let mut unit = vec![0.0; l.len()];
            unit[i] = 1.0;
            let analytic = jac.backprop(&unit).flatten();
            let n_content = params.dim();
            for (pi, a) in analytic.iter().enumerate() {
                let bump = |delta: f64| {
                    let mut p = params.clone();
                    if pi < n_content {
                        p.content_weights[pi] += delta;
                    } else {
                        p.position_weights[pi - n_content] += delta;
                    }
                    score(&p, &l).unwrap()[i]
                };
                let numeric = (bump(h) - bump(-h)) / (2.0 * h);
                let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
                assert!(rel < 1e-6 || (a - numeric).abs() < 1e-10, "param {pi}: {a} vs {numeric}");
            }
        }
    }

    #[test]
    fn synth_is_deterministic_and_well_formed() {
        let cfg = SynthConfig {
            num_queries: 20,
            ..SynthConfig::default()
        };
        let a = synth_generate(&cfg).unwrap();
        let b = synth_generate(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.instances.len(), 20);
        assert_eq!(a.judgments.len(), 20);
        for (l, truth) in &a.instances {
            assert_eq!(l.len(), 20);
            assert!(truth.is_complete());
            // relevant passage is ranked first
            let rel = l
                .passages()
                .iter()
                .position(|p| p.relevance_label == Some(1))
                .unwrap();
            assert_eq!(truth.rank_of(rel), Some(1));
        }
    }

    #[test]
    fn synth_validates() {
        let bad = SynthConfig {
            k: 1,
            ..SynthConfig::default()
        };
        assert!(synth_generate(&bad).is_err());
    }

    #[test]
    fn graded_relevant_passages_lead_the_truth() {
        let cfg = SynthConfig {
            num_queries: 5,
            label_grades: vec![1, 3],
            relevant_per_query: 2,
            ..SynthConfig::default()
        };
        let ds = synth_generate(&cfg).unwrap();
        for (l, truth) in &ds.instances {
            let order = truth.order().unwrap();
            let top: Vec<_> = order[..2]
                .iter()
                .map(|&i| l.passages()[i].relevance_label.unwrap())
                .collect();
            assert_eq!(top, vec![3, 1]);
        }
    }
}
