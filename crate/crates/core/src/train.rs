//! Mini-batch gradient descent over [`ScorerParams`] and gradient verification.

use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::loss::{joint_loss, LossConfig};
use crate::permute::fisher_yates_order;
use crate::propensity::PropensityMatrix;
use crate::rng::{streams, RngStream};
use crate::scorer::{score, score_gradient, ParamGradient, ScorerParams};
use crate::types::{CandidateList, Ranking};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: LossConfig,
    pub seed: u64,
    pub shuffle_each_epoch: bool,
    /// Heavy-ball coefficient; 0 is plain SGD.
    pub momentum: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 3,
            batch_size: 8,
            loss: LossConfig::default(),
            seed: 0,
            shuffle_each_epoch: true,
            momentum: 0.0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "invalid learning rate {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "epochs and batch_size must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument(format!(
                "momentum {} outside [0, 1)",
                self.momentum
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Mean instance loss per epoch, evaluated at the parameters used for each batch.
    pub loss_curve: Vec<f64>,
    pub final_params: ScorerParams,
    pub wall_time: Duration,
    pub seed: u64,
}

impl TrainReport {
    /// Equality of everything except wall time.
    pub fn same_outcome(&self, other: &TrainReport) -> bool {
        self.loss_curve == other.loss_curve
            && self.final_params == other.final_params
            && self.seed == other.seed
    }
}

/// Loss of one instance and its parameter gradient.
pub fn instance_loss(
    params: &ScorerParams,
    list: &CandidateList,
    truth: &Ranking,
    loss: &LossConfig,
    omega: Option<&PropensityMatrix>,
) -> Result<(f64, ParamGradient)> {
    let scores = score(params, list)?;
    let lv = joint_loss(loss, &scores, truth, omega)?;
    let jac = score_gradient(params, list)?;
    Ok((lv.value, jac.backprop(&lv.grad_scores)))
}

fn check_omega(cfg: &TrainConfig, omega: Option<&PropensityMatrix>) -> Result<()> {
    match (cfg.loss.variant.uses_propensities(), omega.is_some()) {
        (true, false) => Err(Error::MissingPropensity(cfg.loss.variant.name())),
        (false, true) => Err(Error::InvalidArgument(format!(
            "loss variant {} does not take propensities",
            cfg.loss.variant
        ))),
        _ => Ok(()),
    }
}

pub fn train(
    dataset: &[(CandidateList, Ranking)],
    init: &ScorerParams,
    cfg: &TrainConfig,
    omega: Option<&PropensityMatrix>,
) -> Result<TrainReport> {
    cfg.validate()?;
    check_omega(cfg, omega)?;
    if dataset.is_empty() {
        return Err(Error::EmptyInput("training dataset"));
    }
    let start = Instant::now();
    let epoch_rng = RngStream::new(cfg.seed, streams::TRAIN);
    let mut params = init.clone();
    let mut velocity = ParamGradient::zeros_like(&params);
    let mut loss_curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let order: Vec<usize> = if cfg.shuffle_each_epoch {
            fisher_yates_order(dataset.len(), &mut epoch_rng.derive(epoch as u64))
        } else {
            (0..dataset.len()).collect()
        };
        let mut epoch_loss = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let diverged = || Error::Divergence {
                epoch: epoch + 1,
                batch: b + 1,
            };
            let mut grad = ParamGradient::zeros_like(&params);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let (list, truth) = &dataset[i];
                let (value, g) = instance_loss(&params, list, truth, &cfg.loss, omega)
                    .map_err(|e| match e {
                        Error::NonFinite(_) => diverged(),
                        other => other,
                    })?;
                if !value.is_finite() {
                    return Err(diverged());
                }
                epoch_loss += value;
                grad.add_scaled(&g, scale);
            }
            step(&mut params, &mut velocity, &grad, cfg);
            if !params.is_finite() {
                return Err(diverged());
            }
        }
        loss_curve.push(epoch_loss / dataset.len() as f64);
    }

    Ok(TrainReport {
        loss_curve,
        final_params: params,
        wall_time: start.elapsed(),
        seed: cfg.seed,
    })
}

fn step(params: &mut ScorerParams, velocity: &mut ParamGradient, grad: &ParamGradient, cfg: &TrainConfig) {
    let mu = cfg.momentum;
    let lr = cfg.learning_rate;
    let update = |p: &mut [f64], v: &mut [f64], g: &[f64]| {
        for ((p, v), g) in p.iter_mut().zip(v.iter_mut()).zip(g) {
            *v = mu * *v + g;
            *p -= lr * *v;
        }
    };
    update(
        &mut params.content_weights,
        &mut velocity.content_weights,
        &grad.content_weights,
    );
    update(
        &mut params.position_weights,
        &mut velocity.position_weights,
        &grad.position_weights,
    );
}

/// Analytic versus central-difference gradient of one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub analytic: f64,
    pub numeric: f64,
    pub abs_error: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tol
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares the chain-rule parameter gradient with central differences of step `h`.
pub fn grad_check(
    loss: &LossConfig,
    params: &ScorerParams,
    instance: (&CandidateList, &Ranking),
    omega: Option<&PropensityMatrix>,
    h: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step {h} must be positive")));
    }
    let (list, truth) = instance;
    let (_, analytic) = instance_loss(params, list, truth, loss, omega)?;
    let eval = |p: &ScorerParams| -> Result<f64> {
        Ok(joint_loss(loss, &score(p, list)?, truth, omega)?.value)
    };

    let d = params.dim();
    let mut checks = Vec::new();
    for (idx, a) in analytic.flatten().into_iter().enumerate() {
        let bump = |delta: f64| {
            let mut p = params.clone();
            if idx < d {
                p.content_weights[idx] += delta;
            } else {
                p.position_weights[idx - d] += delta;
            }
            eval(&p)
        };
        let numeric = (bump(h)? - bump(-h)?) / (2.0 * h);
        let name = if idx < d {
            format!("content_weights[{}]", idx + 1)
        } else {
            format!("position_weights[{}]", idx - d + 1)
        };
        checks.push(ParamCheck {
            name,
            analytic: a,
            numeric,
            abs_error: (a - numeric).abs(),
            rel_error: relative_error(a, numeric),
        });
    }
    let max_rel_error = checks.iter().map(|c| c.rel_error).fold(0.0, f64::max);
    let max_abs_error = checks.iter().map(|c| c.abs_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        params: checks,
        max_rel_error,
        max_abs_error,
        tol,
    })
}
