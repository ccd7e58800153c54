//! The reference synthetic benchmark: a skewed training set, a First-style
//! reference scorer, propensities estimated from it on shuffled inputs, and
//! the debiased variants trained against those propensities.

use crate::error::{Error, Result};
use crate::eval::{evaluate, positional_sweep, rerank_dataset, OrderMode, SweepResult, EvalReport, report_from_rankings};
use crate::loss::{LossConfig, LossVariant};
use crate::permute::{fisher_yates_shuffle, pos_aug, random_aug};
use crate::propensity::{count_transitions, estimate_propensities, PropensityMatrix, TransitionCounts};
use crate::rerank::{permsc_aggregate, rerank_window, FusionInput, DEFAULT_EXACT_LIMIT};
use crate::rng::{streams, RngStream};
use crate::scorer::{synth_generate, ScorerParams, SynthConfig, SynthDataset};
use crate::train::{train, TrainConfig, TrainReport};
use crate::types::{CandidateList, Ranking, RelevanceJudgments};

/// Reranks `n` independent shuffles of every list with `reference` and
/// estimates propensities from the observed transitions.
pub fn estimate_from_reranker(
    reference: &ScorerParams,
    lists: &[CandidateList],
    shuffles: usize,
    p_fail: f64,
    seed: u64,
) -> Result<(TransitionCounts, PropensityMatrix)> {
    if shuffles == 0 {
        return Err(Error::InvalidArgument("shuffles per query must be positive".into()));
    }
    let base = RngStream::new(seed, streams::PROPENSITY);
    let mut observations = Vec::with_capacity(lists.len() * shuffles);
    for (q, list) in lists.iter().enumerate() {
        let mut shuffle_rng = base.derive(2 * q as u64);
        let mut fail_rng = base.derive(2 * q as u64 + 1);
        for _ in 0..shuffles {
            let shuffled = fisher_yates_shuffle(list, &mut shuffle_rng);
            let ranking = rerank_window(reference, &shuffled, p_fail, &mut fail_rng)?;
            observations.push((shuffled, ranking));
        }
    }
    let counts = count_transitions(observations.iter().map(|(l, r)| (l, r)))?
        .with_shuffles_per_query(shuffles as u64)?;
    let omega = estimate_propensities(&counts)?;
    Ok((counts, omega))
}

/// How the training set is expanded before fine-tuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Augmentation {
    None,
    /// `n` independent Fisher-Yates shuffles per instance.
    Random(usize),
    /// One shuffle, then grouping-and-rotation into `n` orderings.
    PositionAware(usize),
}

impl Augmentation {
    pub fn apply(
        self,
        data: &[(CandidateList, Ranking)],
        seed: u64,
    ) -> Result<Vec<(CandidateList, Ranking)>> {
        let rng = RngStream::new(seed, streams::AUGMENT);
        Ok(match self {
            Augmentation::None => data.to_vec(),
            Augmentation::Random(n) => random_aug(data, n, &rng)?.instances,
            Augmentation::PositionAware(n) => pos_aug(data, n, &rng)?.instances,
        })
    }
}

/// Learning rate for a loss variant. IPS terms carry a factor of roughly `k⁴`
/// (exactly `k⁴` under uniform propensities), so their step is divided by it.
pub fn effective_learning_rate(base: f64, variant: LossVariant, k: usize) -> f64 {
    if variant.uses_propensities() {
        base / (k as f64).powi(4)
    } else {
        base
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub train_data: SynthConfig,
    pub eval_data: SynthConfig,
    pub bias_scale: f64,
    /// Initial positional logit gap between the first and last input position.
    pub prior_strength: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lambda: f64,
    pub augmentation: usize,
    pub propensity_queries: usize,
    pub propensity_shuffles: usize,
    pub shuffled_runs: usize,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        let train_data = SynthConfig {
            num_queries: 1000,
            k: 20,
            d: 8,
            relevance_position_skew: 0.5,
            seed: 7,
            query_prefix: "train".into(),
            ..SynthConfig::default()
        };
        let eval_data = SynthConfig {
            num_queries: 200,
            seed: 8,
            query_prefix: "eval".into(),
            ..train_data.clone()
        };
        Self {
            train_data,
            eval_data,
            bias_scale: 1.0,
            prior_strength: 2.0,
            learning_rate: 0.05,
            epochs: 3,
            batch_size: 8,
            lambda: 0.1,
            augmentation: 10,
            propensity_queries: 300,
            propensity_shuffles: 10,
            shuffled_runs: 20,
            seed: 42,
        }
    }
}

impl BenchmarkConfig {
    pub fn k(&self) -> usize {
        self.train_data.k
    }

    pub fn init_params(&self) -> ScorerParams {
        ScorerParams::with_position_prior(
            self.train_data.d,
            self.train_data.k,
            self.bias_scale,
            self.prior_strength,
        )
    }

    pub fn train_config(&self, variant: LossVariant) -> TrainConfig {
        TrainConfig {
            learning_rate: effective_learning_rate(self.learning_rate, variant, self.k()),
            epochs: self.epochs,
            batch_size: self.batch_size,
            loss: LossConfig {
                lambda: self.lambda,
                variant,
            },
            seed: self.seed,
            shuffle_each_epoch: true,
            momentum: 0.0,
        }
    }
}

/// Generated data shared by every variant.
#[derive(Debug, Clone)]
pub struct BenchmarkData {
    pub train: SynthDataset,
    pub eval: SynthDataset,
    pub eval_lists: Vec<CandidateList>,
}

impl BenchmarkData {
    pub fn generate(cfg: &BenchmarkConfig) -> Result<Self> {
        let train = synth_generate(&cfg.train_data)?;
        let eval = synth_generate(&cfg.eval_data)?;
        let eval_lists = eval.lists();
        Ok(Self {
            train,
            eval,
            eval_lists,
        })
    }
}

pub fn train_variant(
    cfg: &BenchmarkConfig,
    data: &BenchmarkData,
    augmentation: Augmentation,
    variant: LossVariant,
    omega: Option<&PropensityMatrix>,
) -> Result<TrainReport> {
    let instances = augmentation.apply(&data.train.instances, cfg.seed)?;
    let omega = omega.filter(|_| variant.uses_propensities());
    train(&instances, &cfg.init_params(), &cfg.train_config(variant), omega)
}

/// Sweep, original- and shuffled-order evaluations, and Kemeny aggregation of
/// the shuffled runs for one trained scorer.
#[derive(Debug, Clone)]
pub struct VariantMetrics {
    pub sweep: SweepResult,
    pub original: EvalReport,
    pub shuffled: Vec<EvalReport>,
    pub aggregated: EvalReport,
}

impl VariantMetrics {
    pub fn mean_shuffled(&self) -> f64 {
        self.shuffled.iter().map(|r| r.mean_ndcg_at_10).sum::<f64>() / self.shuffled.len() as f64
    }

    /// Aggregated NDCG minus the mean of the individual shuffled runs.
    pub fn aggregation_gain(&self) -> f64 {
        self.aggregated.mean_ndcg_at_10 - self.mean_shuffled()
    }
}

/// Kemeny-aggregates, per query, the rankings produced under several input
/// orders. Rankings are mapped back to the original candidate order first.
pub fn aggregate_runs(
    lists: &[CandidateList],
    runs: &[Vec<(CandidateList, Ranking)>],
) -> Result<Vec<(CandidateList, Ranking)>> {
    lists
        .iter()
        .enumerate()
        .map(|(q, list)| {
            let rankings = runs
                .iter()
                .map(|run| {
                    let (presented, ranking) = &run[q];
                    let mut ranks = vec![0; list.len()];
                    for (j, p) in presented.passages().iter().enumerate() {
                        let i = list.index_of(&p.passage_id).ok_or_else(|| {
                            Error::InvalidArgument(format!(
                                "passage {} not in query {}",
                                p.passage_id,
                                list.query_id()
                            ))
                        })?;
                        ranks[i] = ranking.rank_of(j).ok_or(Error::IncompletePermutation)?;
                    }
                    Ranking::complete(ranks)
                })
                .collect::<Result<Vec<_>>>()?;
            let central = permsc_aggregate(&FusionInput::new(rankings), DEFAULT_EXACT_LIMIT)?;
            Ok((list.clone(), central))
        })
        .collect()
}

pub fn measure(
    cfg: &BenchmarkConfig,
    params: &ScorerParams,
    lists: &[CandidateList],
    judgments: &RelevanceJudgments,
) -> Result<VariantMetrics> {
    let sweep = positional_sweep(params, lists, judgments, crate::eval::NDCG_CUTOFF)?;
    let original = evaluate(params, lists, judgments, OrderMode::Original)?;
    let mut shuffled = Vec::with_capacity(cfg.shuffled_runs);
    let mut runs = Vec::with_capacity(cfg.shuffled_runs);
    for r in 0..cfg.shuffled_runs {
        let mode = OrderMode::Shuffled {
            seed: cfg.seed.wrapping_add(1000 + r as u64),
        };
        let run = rerank_dataset(params, lists, mode)?;
        shuffled.push(report_from_rankings(&run, judgments, mode)?);
        runs.push(run);
    }
    let aggregated = report_from_rankings(&aggregate_runs(lists, &runs)?, judgments, OrderMode::Original)?;
    Ok(VariantMetrics {
        sweep,
        original,
        shuffled,
        aggregated,
    })
}

/// Named training recipes of the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recipe {
    /// `λ·Rank + LM` on the raw skewed data; also the propensity reference.
    First,
    /// `λ·RankIps + LM` on position-aware augmented data.
    DebiasFirst,
    /// DebiasFirst loss without augmentation.
    NoAug,
    /// DebiasFirst loss with random-shuffle augmentation.
    RandAug,
    /// Rank loss only, no augmentation.
    Rank,
    /// Rank-IPS loss only, no augmentation.
    RankIps,
}

impl Recipe {
    pub const ALL: [Recipe; 6] = [
        Recipe::First,
        Recipe::DebiasFirst,
        Recipe::NoAug,
        Recipe::RandAug,
        Recipe::Rank,
        Recipe::RankIps,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Recipe::First => "first",
            Recipe::DebiasFirst => "debiasfirst",
            Recipe::NoAug => "noaug",
            Recipe::RandAug => "randaug",
            Recipe::Rank => "rank",
            Recipe::RankIps => "rank-ips",
        }
    }

    pub fn plan(self, n: usize) -> (Augmentation, LossVariant) {
        match self {
            Recipe::First => (Augmentation::None, LossVariant::First),
            Recipe::DebiasFirst => (Augmentation::PositionAware(n), LossVariant::DebiasFirst),
            Recipe::NoAug => (Augmentation::None, LossVariant::DebiasFirst),
            Recipe::RandAug => (Augmentation::Random(n), LossVariant::DebiasFirst),
            Recipe::Rank => (Augmentation::None, LossVariant::Rank),
            Recipe::RankIps => (Augmentation::None, LossVariant::RankIps),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RecipeOutcome {
    pub recipe: Recipe,
    pub report: TrainReport,
    pub metrics: VariantMetrics,
}

#[derive(Debug, Clone)]
pub struct BenchmarkOutcome {
    pub counts: TransitionCounts,
    pub omega: PropensityMatrix,
    pub recipes: Vec<RecipeOutcome>,
}

impl BenchmarkOutcome {
    pub fn get(&self, recipe: Recipe) -> &RecipeOutcome {
        self.recipes
            .iter()
            .find(|o| o.recipe == recipe)
            .expect("every recipe is run")
    }
}

/// Trains the First reference, estimates propensities from it on shuffled
/// training queries, then trains and measures every recipe in `recipes`.
pub fn run_benchmark(cfg: &BenchmarkConfig, recipes: &[Recipe]) -> Result<BenchmarkOutcome> {
    let data = BenchmarkData::generate(cfg)?;
    let reference = train_variant(cfg, &data, Augmentation::None, LossVariant::First, None)?;
    let est_lists: Vec<CandidateList> = data
        .train
        .instances
        .iter()
        .take(cfg.propensity_queries)
        .map(|(l, _)| l.clone())
        .collect();
    let (counts, omega) = estimate_from_reranker(
        &reference.final_params,
        &est_lists,
        cfg.propensity_shuffles,
        0.0,
        cfg.seed,
    )?;

    let mut outcomes = Vec::with_capacity(recipes.len());
    for &recipe in recipes {
        let report = if recipe == Recipe::First {
            reference.clone()
        } else {
            let (aug, variant) = recipe.plan(cfg.augmentation);
            train_variant(cfg, &data, aug, variant, Some(&omega))?
        };
        let metrics = measure(cfg, &report.final_params, &data.eval_lists, &data.eval.judgments)?;
        outcomes.push(RecipeOutcome {
            recipe,
            report,
            metrics,
        });
    }
    Ok(BenchmarkOutcome {
        counts,
        omega,
        recipes: outcomes,
    })
}
