//! Flat `key = value` experiment configuration. Each key is also a `--key`
//! flag; flags override the file, which overrides the defaults.

use std::fmt::{self, Display, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Arg, ArgMatches, Args, FromArgMatches};
use debiasfirst::experiment::BenchmarkConfig;
use debiasfirst::{LossConfig, LossVariant, SynthConfig, TrainConfig, WindowConfig};

use crate::error::{CliError, CliResult};

macro_rules! string_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq)]
        pub enum $name { $($variant),+ }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(format!(
                        "expected one of {}, got {s:?}",
                        [$($text),+].join("|")
                    )),
                }
            }
        }

        impl Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($name::$variant => $text),+ })
            }
        }
    };
}

string_enum!(AugmentKind { None => "none", Random => "random", PosAug => "posaug" });
string_enum!(EvalMode { Original => "original", Shuffled => "shuffled", Both => "both" });
string_enum!(FusionMethod { Permsc => "permsc", Rrf => "rrf" });

/// Comma-separated relevance grades.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grades(pub Vec<u32>);

impl FromStr for Grades {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|g| g.trim().parse::<u32>().map_err(|e| format!("grade {g:?}: {e}")))
            .collect::<Result<_, _>>()
            .map(Grades)
    }
}

impl Display for Grades {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(u32::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

macro_rules! config {
    ($($key:ident : $ty:ty = $default:expr, $help:literal;)*) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct Config {
            $(#[doc = $help] pub $key: $ty,)*
        }

        impl Default for Config {
            fn default() -> Self {
                Self { $($key: $default.into(),)* }
            }
        }

        impl Config {
            pub const KEYS: &'static [(&'static str, &'static str)] = &[$((stringify!($key), $help),)*];

            pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
                match key {
                    $(stringify!($key) => {
                        self.$key = value
                            .parse::<$ty>()
                            .map_err(|e| format!("invalid value {value:?} for {key}: {e}"))?;
                    })*
                    _ => return Err(format!("unknown config key {key:?}")),
                }
                Ok(())
            }

            /// Every key with its current value, one `key = value` per line.
            pub fn dump(&self) -> String {
                let mut out = String::new();
                $(writeln!(out, "{} = {}", stringify!($key), self.$key).unwrap();)*
                out
            }
        }
    };
}

config! {
    out_dir: String = "out", "output directory of eval, benchmark and pipeline";
    candidates: String = "candidates.jsonl", "candidate lists (JSON lines)";
    qrels: String = "qrels.txt", "relevance judgments (TREC qrels)";
    params: String = "params.csv", "scorer parameters read by rerank/eval/sweep/estimate-propensity, written by train";
    init_params: String = "", "initial parameters for train; empty uses the positional prior";
    propensity: String = "propensity.csv", "propensity matrix CSV";
    counts: String = "", "optional transition-count CSV written by estimate-propensity";
    augmented: String = "augmented.jsonl", "output of augment";
    curve: String = "train_curve.csv", "per-epoch loss written by train";
    run: String = "run.txt", "run file written by rerank and aggregate";
    sweep: String = "sweep.csv", "positional sweep report";
    report: String = "scores.csv", "per-query report written by score-run";
    histogram: String = "positions.csv", "relevant-position histogram written by diagnose";
    num_queries: usize = 100usize, "synthetic queries";
    eval_queries: usize = 100usize, "synthetic evaluation queries in the pipeline";
    k: usize = 20usize, "candidates per query";
    d: usize = 8usize, "feature dimension";
    skew: f64 = 0.5, "decay of the relevant passage's position distribution";
    label_grades: Grades = Grades(vec![1]), "grades of the relevant passages, highest first";
    relevant_per_query: usize = 1usize, "relevant passages per query";
    relevance_shift: f64 = 1.5, "feature shift of relevant passages";
    noise_sigma: f64 = 0.5, "noise on latent relevance";
    synth_seed: u64 = 2024u64, "seed of synthetic data";
    direction_seed: u64 = 0u64, "seed of the ground-truth relevance direction";
    query_prefix: String = "q", "query id prefix";
    bias_scale: f64 = 1.0, "multiplier on the positional weights";
    prior_strength: f64 = 2.0, "initial positional logit gap between first and last position";
    loss: LossVariant = LossVariant::DebiasFirst, "rank|rank-ips|lm|first|debiasfirst";
    lambda: f64 = 0.1, "weight of the ranking term in joint losses";
    learning_rate: f64 = 0.05, "SGD step; divided by k^4 for IPS losses when scale_ips_lr";
    scale_ips_lr: bool = true, "divide the step of IPS losses by k^4";
    epochs: usize = 3usize, "training epochs";
    batch_size: usize = 8usize, "mini-batch size";
    momentum: f64 = 0.0, "heavy-ball momentum";
    shuffle_each_epoch: bool = true, "reshuffle the training set every epoch";
    augmentation: AugmentKind = AugmentKind::PosAug, "none|random|posaug";
    aug_n: usize = 10usize, "orderings per instance";
    propensity_queries: usize = 300usize, "queries used for propensity estimation";
    propensity_shuffles: usize = 10usize, "shuffles per query for propensity estimation";
    p_fail: f64 = 0.0, "probability that the reranker omits a passage";
    window_size: usize = 20usize, "sliding window size";
    window_step: usize = 10usize, "sliding window step";
    eval_mode: EvalMode = EvalMode::Both, "original|shuffled|both";
    shuffled_runs: usize = 20usize, "shuffled evaluations";
    run_tag: String = "debiasfirst", "tag column of run files";
    fusion: FusionMethod = FusionMethod::Permsc, "permsc|rrf";
    rrf_c: f64 = 60.0, "reciprocal rank fusion constant";
    exact_limit: usize = 8usize, "largest k aggregated by exhaustive enumeration";
    benchmark_train_queries: usize = 1000usize, "training queries of the reference benchmark";
    benchmark_eval_queries: usize = 200usize, "evaluation queries of the reference benchmark";
    seed: u64 = 42u64, "seed for augmentation, training, propensities and shuffled evaluation";
}

impl Config {
    /// Applies a `key = value` file; `#` starts a comment line.
    pub fn apply_file(&mut self, path: &Path, text: &str) -> CliResult<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let usage = |m: String| CliError::Usage(format!("{}:{}: {m}", path.display(), i + 1));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("expected key = value, found {line:?}")))?;
            self.set(key.trim(), value.trim()).map_err(usage)?;
        }
        Ok(())
    }

    pub fn out(&self, name: &str) -> PathBuf {
        Path::new(&self.out_dir).join(name)
    }

    pub fn synth(&self) -> SynthConfig {
        SynthConfig {
            num_queries: self.num_queries,
            k: self.k,
            d: self.d,
            relevance_position_skew: self.skew,
            label_grades: self.label_grades.0.clone(),
            relevant_per_query: self.relevant_per_query,
            relevance_shift: self.relevance_shift,
            noise_sigma: self.noise_sigma,
            seed: self.synth_seed,
            direction_seed: self.direction_seed,
            query_prefix: self.query_prefix.clone(),
        }
    }

    pub fn train(&self, k: usize) -> TrainConfig {
        let learning_rate = if self.scale_ips_lr {
            debiasfirst::experiment::effective_learning_rate(self.learning_rate, self.loss, k)
        } else {
            self.learning_rate
        };
        TrainConfig {
            learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            loss: LossConfig {
                lambda: self.lambda,
                variant: self.loss,
            },
            seed: self.seed,
            shuffle_each_epoch: self.shuffle_each_epoch,
            momentum: self.momentum,
        }
    }

    pub fn window(&self) -> WindowConfig {
        WindowConfig {
            window_size: self.window_size,
            step: self.window_step,
        }
    }

    pub fn benchmark(&self) -> BenchmarkConfig {
        let mut b = BenchmarkConfig {
            bias_scale: self.bias_scale,
            prior_strength: self.prior_strength,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            lambda: self.lambda,
            augmentation: self.aug_n,
            propensity_queries: self.propensity_queries,
            propensity_shuffles: self.propensity_shuffles,
            shuffled_runs: self.shuffled_runs,
            seed: self.seed,
            ..BenchmarkConfig::default()
        };
        for (data, n) in [
            (&mut b.train_data, self.benchmark_train_queries),
            (&mut b.eval_data, self.benchmark_eval_queries),
        ] {
            data.num_queries = n;
            data.k = self.k;
            data.d = self.d;
            data.relevance_position_skew = self.skew;
            data.direction_seed = self.direction_seed;
        }
        b
    }

    /// `key=value` pairs identifying a report, for its provenance line.
    pub fn provenance(&self, keys: &[&str]) -> String {
        let dump = self.dump();
        let lookup = |k: &str| {
            dump.lines()
                .find_map(|l| l.strip_prefix(k).and_then(|r| r.strip_prefix(" = ")))
                .unwrap_or("")
                .to_owned()
        };
        keys.iter().map(|k| format!("{k}={}", lookup(k))).collect::<Vec<_>>().join(" ")
    }
}

/// `--key value` overrides, one optional flag per config key.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides(pub Vec<(&'static str, String)>);

impl Overrides {
    pub fn apply(&self, cfg: &mut Config) -> CliResult<()> {
        for (k, v) in &self.0 {
            cfg.set(k, v).map_err(CliError::Usage)?;
        }
        Ok(())
    }
}

impl FromArgMatches for Overrides {
    fn from_arg_matches(m: &ArgMatches) -> Result<Self, clap::Error> {
        let mut o = Overrides::default();
        o.update_from_arg_matches(m)?;
        Ok(o)
    }

    fn update_from_arg_matches(&mut self, m: &ArgMatches) -> Result<(), clap::Error> {
        for (key, _) in Config::KEYS {
            if let Some(v) = m.get_one::<String>(key) {
                self.0.retain(|(k, _)| k != key);
                self.0.push((key, v.clone()));
            }
        }
        Ok(())
    }
}

impl Args for Overrides {
    fn augment_args(cmd: clap::Command) -> clap::Command {
        cmd.args(Config::KEYS.iter().map(|(key, help)| {
            Arg::new(*key)
                .long(*key)
                .value_name("VALUE")
                .help(*help)
                .global(true)
                .help_heading("Config overrides")
        }))
    }

    fn augment_args_for_update(cmd: clap::Command) -> clap::Command {
        Self::augment_args(cmd)
    }
}
