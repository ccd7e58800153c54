//! Brute-force and finite-difference references for the closed-form code paths.

use debiasfirst::eval::ndcg_at_k;
use debiasfirst::loss::{joint_loss, lm_loss, rank_ips_loss, rank_loss};
use debiasfirst::permute::fisher_yates_order;
use debiasfirst::rerank::{kemeny_local_search, permsc_aggregate, total_kendall_distance};
use debiasfirst::{
    CandidateList, FusionInput, LossConfig, LossValue, LossVariant, PassageRef, PropensityMatrix,
    Ranking, RelevanceJudgments, Result, RngStream,
};
use rand::Rng;

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for slot in 0..=p.len() {
            let mut q = p.clone();
            q.insert(slot, k - 1);
            out.push(q);
        }
    }
    out
}

fn brute_dcg(grades: &[u32], order: &[usize], cut: usize) -> f64 {
    let mut total = 0.0;
    for (pos, &item) in order.iter().enumerate().take(cut) {
        let gain = ((1u64 << grades[item]) - 1) as f64;
        total += gain * std::f64::consts::LN_2 / ((pos + 2) as f64).ln();
    }
    total
}

#[test]
fn ndcg_matches_exhaustive_oracle() {
    let mut checked = 0usize;
    for k in 1..=6usize {
        let perms = permutations(k);
        let list = CandidateList::new(
            "q",
            (0..k).map(|i| PassageRef::new(format!("d{i}"), vec![0.0])).collect(),
        )
        .unwrap();
        for code in 0..3usize.pow(k as u32) {
            let grades: Vec<u32> = (0..k).map(|i| ((code / 3usize.pow(i as u32)) % 3) as u32).collect();
            let mut judgments = RelevanceJudgments::new();
            for (i, &g) in grades.iter().enumerate() {
                if g > 0 {
                    judgments.insert("q", format!("d{i}"), g).unwrap();
                }
            }
            for cut in [3, 10] {
                let idcg = perms
                    .iter()
                    .map(|p| brute_dcg(&grades, p, cut))
                    .fold(0.0, f64::max);
                for order in &perms {
                    let expected = if idcg == 0.0 { 0.0 } else { brute_dcg(&grades, order, cut) / idcg };
                    let ranking = Ranking::from_order(order).unwrap();
                    let got = ndcg_at_k(&ranking, &list, &judgments, cut).unwrap();
                    assert!((got - expected).abs() < 1e-12, "k={k} grades={grades:?} order={order:?}");
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 1_000_000);
}

fn brute_kendall(a: &[usize], b: &[usize]) -> u64 {
    let k = a.len();
    let mut d = 0;
    for i in 0..k {
        for j in i + 1..k {
            if (a[i] < a[j]) != (b[i] < b[j]) {
                d += 1;
            }
        }
    }
    d
}

#[test]
fn heuristic_kemeny_reaches_the_exhaustive_optimum() {
    let mut rng = RngStream::new(99, 0);
    for _ in 0..200 {
        let k = rng.random_range(1..=5usize);
        let m = rng.random_range(1..=7usize);
        let rankings: Vec<Vec<usize>> = (0..m)
            .map(|_| {
                let order = fisher_yates_order(k, &mut rng);
                Ranking::from_order(&order).unwrap().ranks().unwrap()
            })
            .collect();
        let best = permutations(k)
            .into_iter()
            .map(|order| {
                let cand = Ranking::from_order(&order).unwrap().ranks().unwrap();
                rankings.iter().map(|r| brute_kendall(&cand, r)).sum::<u64>()
            })
            .min()
            .unwrap();
        let inp = FusionInput::new(rankings.iter().map(|r| Ranking::complete(r.clone()).unwrap()).collect());
        for agg in [
            permsc_aggregate(&inp, 0).unwrap(),
            kemeny_local_search(&inp).unwrap(),
            permsc_aggregate(&inp, 8).unwrap(),
        ] {
            assert_eq!(total_kendall_distance(&agg, &inp.rankings).unwrap(), best, "{rankings:?}");
        }
    }
}

fn random_instance(k: usize, rng: &mut RngStream) -> (Vec<f64>, Ranking, PropensityMatrix) {
    let scores: Vec<f64> = (0..k).map(|_| 4.0 * rng.random::<f64>() - 2.0).collect();
    let truth = Ranking::from_order(&fisher_yates_order(k, rng)).unwrap();
    let raw: Vec<f64> = (0..k * k).map(|_| (0.2 + rng.random::<f64>()) / (k * k) as f64).collect();
    let omega = PropensityMatrix::new(k, raw, 0.1 / (k * k) as f64).unwrap();
    (scores, truth, omega)
}

fn max_fd_error(f: impl Fn(&[f64]) -> Result<LossValue>, scores: &[f64], h: f64) -> f64 {
    let analytic = f(scores).unwrap().grad_scores;
    let mut worst: f64 = 0.0;
    for i in 0..scores.len() {
        let mut up = scores.to_vec();
        let mut down = scores.to_vec();
        up[i] += h;
        down[i] -= h;
        let numeric = (f(&up).unwrap().value - f(&down).unwrap().value) / (2.0 * h);
        let a = analytic[i];
        worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8));
    }
    worst
}

#[test]
fn loss_gradients_match_central_differences() {
    let mut rng = RngStream::new(5, 0);
    for k in [2, 5, 20] {
        for _ in 0..100 {
            let (scores, truth, omega) = random_instance(k, &mut rng);
            let errs = [
                max_fd_error(|s| lm_loss(s, &truth), &scores, 1e-5),
                max_fd_error(|s| rank_loss(s, &truth), &scores, 1e-5),
                max_fd_error(|s| rank_ips_loss(s, &truth, &omega), &scores, 1e-5),
                max_fd_error(
                    |s| joint_loss(&LossConfig::new(LossVariant::First), s, &truth, None),
                    &scores,
                    1e-5,
                ),
                max_fd_error(
                    |s| joint_loss(&LossConfig::new(LossVariant::DebiasFirst), s, &truth, Some(&omega)),
                    &scores,
                    1e-5,
                ),
            ];
            for (name, e) in ["lm", "rank", "rank-ips", "first", "debiasfirst"].iter().zip(errs) {
                assert!(e < 1e-6, "{name} k={k}: relative error {e}");
            }
        }
    }
}

#[test]
fn lm_gradient_sums_to_zero() {
    let mut rng = RngStream::new(6, 0);
    for k in [2, 5, 20] {
        let (scores, truth, _) = random_instance(k, &mut rng);
        let g = lm_loss(&scores, &truth).unwrap().grad_scores;
        assert!(g.iter().sum::<f64>().abs() < 1e-12);
    }
}
