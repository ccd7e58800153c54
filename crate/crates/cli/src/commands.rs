//! One function per subcommand. Each reads its inputs from the paths in
//! [`Config`], writes its outputs there, and reports on stdout.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use debiasfirst::eval::{positional_sweep, report_from_rankings, rerank_dataset, run_variance, ndcg_at_k, NDCG_CUTOFF};
use debiasfirst::experiment::{estimate_from_reranker, run_benchmark, Augmentation, Recipe};
use debiasfirst::propensity::propensity_heatmap;
use debiasfirst::rerank::{permsc_aggregate, rerank_window, rrf_fuse, rrf_scores, sliding_window_rerank};
use debiasfirst::rng::{streams, RngStream};
use debiasfirst::scorer::{score, synth_generate};
use debiasfirst::train::train as fit;
use debiasfirst::types::run_records;
use debiasfirst::eval::{OrderMode, SweepResult};
use debiasfirst::{
    CandidateList, FusionInput, PassageRef, Ranking, RunRecord, ScorerParams,
};

use crate::config::{AugmentKind, Config, EvalMode, FusionMethod};
use crate::error::{CliError, CliResult};
use crate::format::*;

fn lists_of(instances: &[Instance]) -> Vec<CandidateList> {
    instances.iter().map(|i| i.list.clone()).collect()
}

fn with_truth(instances: &[Instance]) -> CliResult<Vec<(CandidateList, Ranking)>> {
    instances.iter().map(|i| Ok((i.list.clone(), truth_of(i)?))).collect()
}

fn shared_k(lists: &[CandidateList]) -> CliResult<usize> {
    let k = lists[0].len();
    match lists.iter().find(|l| l.len() != k) {
        Some(l) => Err(CliError::Data(format!(
            "query {} has {} candidates, expected {k}",
            l.query_id(),
            l.len()
        ))),
        None => Ok(k),
    }
}

fn check_params(params: &ScorerParams, lists: &[CandidateList], path: &str) -> CliResult<()> {
    let list = &lists[0];
    if params.dim() != list.feature_dim() {
        return Err(CliError::Data(format!(
            "{path}: parameters have feature dimension {}, candidates have {}",
            params.dim(),
            list.feature_dim()
        )));
    }
    Ok(())
}

pub fn synth(cfg: &Config) -> CliResult<()> {
    let data = synth_generate(&cfg.synth())?;
    let text = candidates_to_string(data.instances.iter().map(|(l, t)| (l, Some(t))))?;
    write_file(Path::new(&cfg.candidates), &text)?;
    write_file(Path::new(&cfg.qrels), &qrels_to_string(&data.judgments))?;
    println!(
        "synth: {} queries, {} judgments -> {}, {}",
        data.instances.len(),
        data.judgments.len(),
        cfg.candidates,
        cfg.qrels
    );
    Ok(())
}

pub fn estimate_propensity(cfg: &Config) -> CliResult<()> {
    let lists = lists_of(&read_candidates(Path::new(&cfg.candidates))?);
    shared_k(&lists)?;
    let params = read_params(Path::new(&cfg.params))?;
    check_params(&params, &lists, &cfg.params)?;
    let used = &lists[..cfg.propensity_queries.min(lists.len())];
    let (counts, omega) =
        estimate_from_reranker(&params, used, cfg.propensity_shuffles, cfg.p_fail, cfg.seed)?;
    write_file(Path::new(&cfg.propensity), &propensity_to_string(&omega))?;
    if !cfg.counts.is_empty() {
        let rows: Vec<String> = propensity_heatmap(&counts)
            .iter()
            .map(|c| format!("{},{},{}", c.input_position, c.output_rank, c.count))
            .collect();
        let prov = cfg.provenance(&["params", "propensity_shuffles", "p_fail", "seed"]);
        write_file(
            Path::new(&cfg.counts),
            &report_to_string(&prov, "input_position,output_rank,count", &rows),
        )?;
    }
    let k = omega.k() as f64;
    let row_dev = omega
        .raw_row_sums()
        .iter()
        .map(|s| (s - 1.0 / k).abs())
        .fold(0.0, f64::max);
    println!(
        "estimate-propensity: {} queries x {} shuffles, max |row sum - 1/k| = {:e}, total = {}",
        used.len(),
        cfg.propensity_shuffles,
        row_dev,
        omega.raw_total()
    );
    Ok(())
}

pub fn augment(cfg: &Config) -> CliResult<()> {
    let data = with_truth(&read_candidates(Path::new(&cfg.candidates))?)?;
    let aug = match cfg.augmentation {
        AugmentKind::None => Augmentation::None,
        AugmentKind::Random => Augmentation::Random(cfg.aug_n),
        AugmentKind::PosAug => Augmentation::PositionAware(cfg.aug_n),
    };
    let out = aug.apply(&data, cfg.seed)?;
    let text = candidates_to_string(out.iter().map(|(l, t)| (l, Some(t))))?;
    write_file(Path::new(&cfg.augmented), &text)?;
    println!("augment: {} -> {} instances ({})", data.len(), out.len(), cfg.augmentation);
    Ok(())
}

pub fn train(cfg: &Config) -> CliResult<Vec<f64>> {
    let instances = read_candidates(Path::new(&cfg.candidates))?;
    let data = with_truth(&instances)?;
    let lists = lists_of(&instances);
    let k = shared_k(&lists)?;
    let init = if cfg.init_params.is_empty() {
        ScorerParams::with_position_prior(lists[0].feature_dim(), k, cfg.bias_scale, cfg.prior_strength)
    } else {
        let p = read_params(Path::new(&cfg.init_params))?;
        check_params(&p, &lists, &cfg.init_params)?;
        p
    };
    let omega = if cfg.loss.uses_propensities() {
        Some(read_propensity(Path::new(&cfg.propensity))?)
    } else {
        None
    };
    let report = fit(&data, &init, &cfg.train(k), omega.as_ref())?;
    write_file(Path::new(&cfg.params), &params_to_string(&report.final_params))?;
    let rows: Vec<String> = report
        .loss_curve
        .iter()
        .enumerate()
        .map(|(e, l)| format!("{},{l}", e + 1))
        .collect();
    let prov = cfg.provenance(&["candidates", "loss", "lambda", "learning_rate", "epochs", "batch_size", "seed"]);
    write_file(Path::new(&cfg.curve), &report_to_string(&prov, "epoch,mean_loss", &rows))?;
    println!(
        "train: {} instances, {} epochs, loss {} -> {}",
        data.len(),
        cfg.epochs,
        report.loss_curve[0],
        report.loss_curve[report.loss_curve.len() - 1]
    );
    Ok(report.loss_curve)
}

/// Full-list rerank: sliding windows when the list exceeds the window,
/// otherwise one window with the configured failure rate.
fn rerank_one(cfg: &Config, params: &ScorerParams, list: &CandidateList, q: usize) -> CliResult<Vec<RunRecord>> {
    if list.len() > cfg.window_size {
        let ranking = sliding_window_rerank(params, list, &cfg.window())?;
        return Ok(run_records(list, &ranking, None, &cfg.run_tag)?);
    }
    let mut rng = RngStream::new(cfg.seed, streams::FAILURE).derive(q as u64);
    let ranking = rerank_window(params, list, cfg.p_fail, &mut rng)?;
    let scores = score(params, list)?;
    Ok(run_records(list, &ranking, (cfg.p_fail == 0.0).then_some(&scores[..]), &cfg.run_tag)?)
}

pub fn rerank(cfg: &Config) -> CliResult<()> {
    let lists = lists_of(&read_candidates(Path::new(&cfg.candidates))?);
    let params = read_params(Path::new(&cfg.params))?;
    check_params(&params, &lists, &cfg.params)?;
    let mut records = Vec::new();
    for (q, list) in lists.iter().enumerate() {
        records.extend(rerank_one(cfg, &params, list, q)?);
    }
    write_file(Path::new(&cfg.run), &run_to_string(&records))?;
    println!("rerank: {} queries -> {}", lists.len(), cfg.run);
    Ok(())
}

/// Mean NDCG@10 of each evaluation, with the files written for it.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub original: Option<f64>,
    pub shuffled: Vec<f64>,
    pub shuffled_runs: Vec<PathBuf>,
}

pub fn eval(cfg: &Config) -> CliResult<EvalOutcome> {
    let lists = lists_of(&read_candidates(Path::new(&cfg.candidates))?);
    let judgments = read_qrels(Path::new(&cfg.qrels))?;
    let params = read_params(Path::new(&cfg.params))?;
    check_params(&params, &lists, &cfg.params)?;

    let mut modes: Vec<(String, OrderMode)> = Vec::new();
    if matches!(cfg.eval_mode, EvalMode::Original | EvalMode::Both) {
        modes.push(("original".into(), OrderMode::Original));
    }
    if matches!(cfg.eval_mode, EvalMode::Shuffled | EvalMode::Both) {
        for r in 0..cfg.shuffled_runs {
            let seed = cfg.seed.wrapping_add(1000 + r as u64);
            modes.push((format!("shuffled_{r:02}"), OrderMode::Shuffled { seed }));
        }
    }

    let mut outcome = EvalOutcome {
        original: None,
        shuffled: Vec::new(),
        shuffled_runs: Vec::new(),
    };
    let mut summary = Vec::new();
    for (name, mode) in &modes {
        let reranked = rerank_dataset(&params, &lists, *mode)?;
        let report = report_from_rankings(&reranked, &judgments, *mode)?;
        let mut records = Vec::new();
        for (list, ranking) in &reranked {
            let scores = score(&params, list)?;
            records.extend(run_records(list, ranking, Some(&scores), &cfg.run_tag)?);
        }
        let run_path = cfg.out(&format!("run_{name}.txt"));
        write_file(&run_path, &run_to_string(&records))?;
        let rows: Vec<String> = report.per_query.iter().map(|(q, v)| format!("{q},{v}")).collect();
        let prov = format!(
            "order_mode={} seed={} {}",
            mode.label(),
            mode.seed().map_or("none".into(), |s| s.to_string()),
            cfg.provenance(&["candidates", "qrels", "params"])
        );
        write_file(&cfg.out(&format!("eval_{name}.csv")), &report_to_string(&prov, "query_id,ndcg", &rows))?;
        summary.push(format!(
            "{name},{},{},{}",
            mode.label(),
            mode.seed().map_or(String::new(), |s| s.to_string()),
            report.mean_ndcg_at_10
        ));
        match mode {
            OrderMode::Original => outcome.original = Some(report.mean_ndcg_at_10),
            OrderMode::Shuffled { .. } => {
                outcome.shuffled.push(report.mean_ndcg_at_10);
                outcome.shuffled_runs.push(run_path);
            }
        }
    }
    let prov = cfg.provenance(&["candidates", "qrels", "params", "eval_mode", "shuffled_runs", "seed"]);
    write_file(
        &cfg.out("eval_summary.csv"),
        &report_to_string(&prov, "run,order_mode,seed,mean_ndcg_at_10", &summary),
    )?;
    if let Some(v) = outcome.original {
        println!("eval: original NDCG@10 {v}");
    }
    if !outcome.shuffled.is_empty() {
        let mean = outcome.shuffled.iter().sum::<f64>() / outcome.shuffled.len() as f64;
        print!("eval: {} shuffled runs, mean NDCG@10 {mean}", outcome.shuffled.len());
        if outcome.shuffled.len() >= 2 {
            let pct: Vec<f64> = outcome.shuffled.iter().map(|v| 100.0 * v).collect();
            print!(", run variance {} pp^2", debiasfirst::eval::population_variance(&pct));
        }
        println!();
    }
    Ok(outcome)
}

pub fn sweep(cfg: &Config) -> CliResult<SweepResult> {
    let lists = lists_of(&read_candidates(Path::new(&cfg.candidates))?);
    shared_k(&lists)?;
    let judgments = read_qrels(Path::new(&cfg.qrels))?;
    let params = read_params(Path::new(&cfg.params))?;
    check_params(&params, &lists, &cfg.params)?;
    let result = positional_sweep(&params, &lists, &judgments, NDCG_CUTOFF)?;
    let rows: Vec<String> = result
        .per_position_ndcg
        .iter()
        .enumerate()
        .map(|(p, v)| format!("{},{v}", p + 1))
        .collect();
    let prov = format!(
        "variance={} {}",
        result.variance,
        cfg.provenance(&["candidates", "qrels", "params"])
    );
    write_file(Path::new(&cfg.sweep), &report_to_string(&prov, "position,mean_ndcg", &rows))?;
    println!("sweep: {} queries, variance {}", result.num_queries, result.variance);
    Ok(result)
}

/// Combines several run files over the same queries and passages into one run.
pub fn aggregate(cfg: &Config, run_files: &[PathBuf]) -> CliResult<()> {
    if run_files.is_empty() {
        return Err(CliError::Usage("aggregate needs at least one run file".into()));
    }
    let runs: Vec<Vec<RunRecord>> = run_files.iter().map(|p| read_run(p)).collect::<CliResult<_>>()?;
    let grouped: Vec<Vec<(String, Vec<&RunRecord>)>> = runs.iter().map(|r| group_run(r)).collect();
    let by_query: Vec<BTreeMap<&str, &Vec<&RunRecord>>> = grouped
        .iter()
        .map(|g| g.iter().map(|(q, recs)| (q.as_str(), recs)).collect())
        .collect();

    let mut out = Vec::new();
    for (qid, first) in &grouped[0] {
        // candidates indexed by their order in the first run
        let ids: Vec<&str> = first.iter().map(|r| r.passage_id.as_str()).collect();
        let index: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        let mut rankings = Vec::with_capacity(runs.len());
        for (path, run) in run_files.iter().zip(&by_query) {
            let recs = run.get(qid.as_str()).ok_or_else(|| {
                CliError::Data(format!("{}: query {qid} missing", path.display()))
            })?;
            if recs.len() != ids.len() {
                return Err(CliError::Data(format!(
                    "{}: query {qid} has {} passages, expected {}",
                    path.display(),
                    recs.len(),
                    ids.len()
                )));
            }
            let mut ranks = vec![0; ids.len()];
            for r in recs.iter() {
                let i = index.get(r.passage_id.as_str()).ok_or_else(|| {
                    CliError::Data(format!("{}: passage {} not in query {qid}", path.display(), r.passage_id))
                })?;
                ranks[*i] = r.rank;
            }
            rankings.push(Ranking::complete(ranks)?);
        }
        let inp = FusionInput {
            rankings,
            rrf_c: cfg.rrf_c,
        };
        let (ranking, scores) = match cfg.fusion {
            FusionMethod::Permsc => (permsc_aggregate(&inp, cfg.exact_limit)?, None),
            FusionMethod::Rrf => (rrf_fuse(&inp)?, Some(rrf_scores(&inp)?)),
        };
        let list = CandidateList::new(
            qid.clone(),
            ids.iter().map(|id| PassageRef::new(*id, vec![0.0])).collect(),
        )?;
        out.extend(run_records(&list, &ranking, scores.as_deref(), &cfg.run_tag)?);
    }
    write_file(Path::new(&cfg.run), &run_to_string(&out))?;
    println!(
        "aggregate: {} runs, {} queries ({}) -> {}",
        run_files.len(),
        grouped[0].len(),
        cfg.fusion,
        cfg.run
    );
    Ok(())
}

/// NDCG@10 of a run file; the ideal ordering is taken over the run's passages.
pub fn score_run(cfg: &Config, run_file: &Path) -> CliResult<f64> {
    let records = read_run(run_file)?;
    let judgments = read_qrels(Path::new(&cfg.qrels))?;
    let mut per_query = BTreeMap::new();
    for (qid, recs) in group_run(&records) {
        let list = CandidateList::new(
            qid.clone(),
            recs.iter().map(|r| PassageRef::new(r.passage_id.clone(), vec![0.0])).collect(),
        )?;
        let v = ndcg_at_k(&Ranking::identity(list.len()), &list, &judgments, NDCG_CUTOFF)?;
        per_query.insert(qid, v);
    }
    let mean = per_query.values().sum::<f64>() / per_query.len() as f64;
    let rows: Vec<String> = per_query.iter().map(|(q, v)| format!("{q},{v}")).collect();
    let prov = format!("run={} mean_ndcg_at_10={mean} qrels={}", run_file.display(), cfg.qrels);
    write_file(Path::new(&cfg.report), &report_to_string(&prov, "query_id,ndcg", &rows))?;
    println!("score-run: {} queries, mean NDCG@10 {mean}", per_query.len());
    Ok(mean)
}

/// Histogram of the input positions of judged-relevant passages.
pub fn diagnose(cfg: &Config) -> CliResult<Vec<u64>> {
    let lists = lists_of(&read_candidates(Path::new(&cfg.candidates))?);
    let judgments = read_qrels(Path::new(&cfg.qrels))?;
    let k = lists.iter().map(CandidateList::len).max().unwrap_or(0);
    let mut hist = vec![0u64; k];
    for list in &lists {
        for (g, h) in judgments.grades_for(list).iter().zip(hist.iter_mut()) {
            if *g > 0 {
                *h += 1;
            }
        }
    }
    let rows: Vec<String> = hist.iter().enumerate().map(|(p, c)| format!("{},{c}", p + 1)).collect();
    let prov = cfg.provenance(&["candidates", "qrels"]);
    write_file(Path::new(&cfg.histogram), &report_to_string(&prov, "position,relevant_count", &rows))?;
    let top: u64 = hist.iter().take(k.div_ceil(4)).sum();
    let total: u64 = hist.iter().sum();
    println!("diagnose: {total} relevant passages, {top} in the top quartile of input positions");
    Ok(hist)
}

pub const BENCHMARK_HEADER: &str = "recipe,sweep_variance,sweep_first,sweep_last,original_ndcg,mean_shuffled_ndcg,shuffled_run_variance,aggregated_ndcg,aggregation_gain,position_spread";

/// The reference benchmark: every recipe, one summary row each.
pub fn benchmark(cfg: &Config) -> CliResult<()> {
    let bench = cfg.benchmark();
    let outcome = run_benchmark(&bench, &Recipe::ALL)?;
    let mut rows = Vec::new();
    let mut sweep_rows: Vec<String> = (1..=bench.k()).map(|p| p.to_string()).collect();
    for o in &outcome.recipes {
        let m = &o.metrics;
        let sweep = &m.sweep.per_position_ndcg;
        rows.push(format!(
            "{},{},{},{},{},{},{},{},{},{}",
            o.recipe.name(),
            m.sweep.variance,
            sweep[0],
            sweep[sweep.len() - 1],
            m.original.mean_ndcg_at_10,
            m.mean_shuffled(),
            run_variance(&m.shuffled).unwrap_or(0.0),
            m.aggregated.mean_ndcg_at_10,
            m.aggregation_gain(),
            o.report.final_params.position_spread()
        ));
        for (row, v) in sweep_rows.iter_mut().zip(sweep) {
            row.push_str(&format!(",{v}"));
        }
        println!(
            "benchmark: {:<12} sweep variance {:.6}  shuffled NDCG@10 {:.4}  aggregation gain {:+.5}",
            o.recipe.name(),
            m.sweep.variance,
            m.mean_shuffled(),
            m.aggregation_gain()
        );
    }
    let prov = cfg.provenance(&[
        "benchmark_train_queries", "benchmark_eval_queries", "k", "skew", "bias_scale", "prior_strength",
        "learning_rate", "epochs", "batch_size", "lambda", "aug_n", "propensity_queries",
        "propensity_shuffles", "shuffled_runs", "seed",
    ]);
    write_file(&cfg.out("benchmark.csv"), &report_to_string(&prov, BENCHMARK_HEADER, &rows))?;
    let names: Vec<&str> = outcome.recipes.iter().map(|o| o.recipe.name()).collect();
    let header = format!("position,{}", names.join(","));
    write_file(&cfg.out("benchmark_sweep.csv"), &report_to_string(&prov, &header, &sweep_rows))?;
    write_file(&cfg.out("benchmark_propensity.csv"), &propensity_to_string(&outcome.omega))?;
    Ok(())
}

/// Synthetic data to aggregated evaluation for a First-trained reference and
/// a DebiasFirst-trained scorer, every intermediate artifact in `out_dir`.
pub fn pipeline(cfg: &Config) -> CliResult<()> {
    let p = |name: &str| cfg.out(name).to_string_lossy().into_owned();
    let step = |f: &dyn Fn(&mut Config)| {
        let mut c = cfg.clone();
        f(&mut c);
        c
    };

    synth(&step(&|c| {
        c.candidates = p("train.jsonl");
        c.qrels = p("train_qrels.txt");
    }))?;
    synth(&step(&|c| {
        c.candidates = p("eval.jsonl");
        c.qrels = p("eval_qrels.txt");
        c.num_queries = cfg.eval_queries;
        c.synth_seed = cfg.synth_seed.wrapping_add(1);
        c.query_prefix = format!("{}eval", cfg.query_prefix);
    }))?;
    train(&step(&|c| {
        c.candidates = p("train.jsonl");
        c.loss = debiasfirst::LossVariant::First;
        c.params = p("first_params.csv");
        c.curve = p("first_curve.csv");
        c.init_params.clear();
    }))?;
    estimate_propensity(&step(&|c| {
        c.candidates = p("train.jsonl");
        c.params = p("first_params.csv");
        c.propensity = p("propensity.csv");
        c.counts = p("transition_counts.csv");
    }))?;
    augment(&step(&|c| {
        c.candidates = p("train.jsonl");
        c.augmented = p("augmented.jsonl");
    }))?;
    train(&step(&|c| {
        c.candidates = p("augmented.jsonl");
        c.propensity = p("propensity.csv");
        c.params = p("debiasfirst_params.csv");
        c.curve = p("debiasfirst_curve.csv");
        c.init_params.clear();
    }))?;

    let mut summary = Vec::new();
    for model in ["first", "debiasfirst"] {
        let dir = p(&format!("eval_{model}"));
        let base = step(&|c| {
            c.candidates = p("eval.jsonl");
            c.qrels = p("eval_qrels.txt");
            c.params = p(&format!("{model}_params.csv"));
            c.sweep = p(&format!("sweep_{model}.csv"));
            c.out_dir = dir.clone();
            c.eval_mode = EvalMode::Both;
            c.run_tag = model.to_owned();
        });
        let sw = sweep(&base)?;
        let ev = eval(&base)?;
        let aggregated_run = Path::new(&dir).join("run_aggregated.txt").to_string_lossy().into_owned();
        let mut agg_cfg = base.clone();
        agg_cfg.run = aggregated_run.clone();
        let aggregated = if ev.shuffled_runs.is_empty() {
            None
        } else {
            aggregate(&agg_cfg, &ev.shuffled_runs)?;
            agg_cfg.report = Path::new(&dir).join("eval_aggregated.csv").to_string_lossy().into_owned();
            Some(score_run(&agg_cfg, Path::new(&aggregated_run))?)
        };
        let mean_shuffled = (!ev.shuffled.is_empty())
            .then(|| ev.shuffled.iter().sum::<f64>() / ev.shuffled.len() as f64);
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        summary.push(format!(
            "{model},{},{},{},{}",
            sw.variance,
            opt(ev.original),
            opt(mean_shuffled),
            opt(aggregated)
        ));
    }
    let prov = cfg.provenance(&["num_queries", "eval_queries", "k", "skew", "synth_seed", "seed"]);
    write_file(
        &cfg.out("summary.csv"),
        &report_to_string(
            &prov,
            "model,sweep_variance,original_ndcg,mean_shuffled_ndcg,aggregated_ndcg",
            &summary,
        ),
    )?;
    println!("pipeline: artifacts in {}", cfg.out_dir);
    Ok(())
}
