use debiasfirst::loss::{joint_loss, lm_loss, rank_ips_loss, rank_loss};
use debiasfirst::permute::{fisher_yates_shuffle, group_rotate, group_rotation_orders, pos_aug};
use debiasfirst::propensity::{count_transitions, estimate_propensities};
use debiasfirst::rerank::{rrf_fuse, rrf_scores};
use debiasfirst::types::{complete_ranking, invert_ranking, kendall_tau};
use debiasfirst::{
    CandidateList, FusionInput, LossConfig, LossVariant, PassageRef, PropensityMatrix, Ranking,
    RngStream,
};
use proptest::prelude::*;

fn permutation(max_k: usize) -> impl Strategy<Value = Vec<usize>> {
    (1..=max_k).prop_flat_map(|k| Just((1..=k).collect::<Vec<_>>()).prop_shuffle())
}

fn list_of(k: usize) -> CandidateList {
    CandidateList::new(
        "q",
        (0..k)
            .map(|i| PassageRef::new(format!("p{i}"), vec![i as f64]))
            .collect(),
    )
    .unwrap()
}

proptest! {
    #[test]
    fn inverse_is_an_involution(ranks in permutation(12)) {
        let r = Ranking::complete(ranks).unwrap();
        let inv = invert_ranking(&r).unwrap();
        prop_assert_eq!(invert_ranking(&inv).unwrap(), r.clone());
        // the inverse lists, for each rank, the item holding it
        let order = r.order().unwrap();
        for (rank0, item) in order.iter().enumerate() {
            prop_assert_eq!(inv.rank_of(rank0).unwrap(), item + 1);
        }
    }

    #[test]
    fn kendall_is_a_metric(
        (a, b, c) in (1usize..=8).prop_flat_map(|k| {
            let p = Just((1..=k).collect::<Vec<_>>());
            (p.clone().prop_shuffle(), p.clone().prop_shuffle(), p.prop_shuffle())
        })
    ) {
        let (a, b, c) = (
            Ranking::complete(a).unwrap(),
            Ranking::complete(b).unwrap(),
            Ranking::complete(c).unwrap(),
        );
        let ab = kendall_tau(&a, &b).unwrap();
        prop_assert_eq!(ab, kendall_tau(&b, &a).unwrap());
        prop_assert_eq!(kendall_tau(&a, &a).unwrap(), 0);
        prop_assert!(ab <= kendall_tau(&a, &c).unwrap() + kendall_tau(&c, &b).unwrap());
        let k = a.len();
        prop_assert!(ab <= k * (k - 1) / 2);
    }

    #[test]
    fn completion_is_a_bijection_preserving_assigned_ranks(
        (ranks, m) in permutation(15).prop_flat_map(|p| {
            let k = p.len();
            (Just(p), 0..=k)
        })
    ) {
        let k = ranks.len();
        let partial: Vec<Option<usize>> = ranks.iter().map(|&r| (r <= m).then_some(r)).collect();
        let partial = Ranking::partial(partial).unwrap();
        let full = complete_ranking(&partial, &list_of(k)).unwrap();
        let mut seen = full.ranks().unwrap();
        for i in 0..k {
            if let Some(r) = partial.rank_of(i) {
                prop_assert_eq!(full.rank_of(i), Some(r));
            }
        }
        // unassigned items keep their input order
        let tail: Vec<usize> = (0..k).filter(|&i| partial.rank_of(i).is_none()).collect();
        for w in tail.windows(2) {
            prop_assert!(full.rank_of(w[0]).unwrap() < full.rank_of(w[1]).unwrap());
        }
        seen.sort_unstable();
        prop_assert_eq!(seen, (1..=k).collect::<Vec<_>>());
    }

    #[test]
    fn shuffle_is_a_permutation(k in 1usize..40, seed in any::<u64>()) {
        let list = list_of(k);
        let shuffled = fisher_yates_shuffle(&list, &mut RngStream::new(seed, 3));
        let mut ids: Vec<&str> = shuffled.passages().iter().map(|p| p.passage_id.as_str()).collect();
        ids.sort_unstable();
        let mut expected: Vec<&str> = list.passages().iter().map(|p| p.passage_id.as_str()).collect();
        expected.sort_unstable();
        prop_assert_eq!(ids, expected);
    }

    #[test]
    fn rotations_cover_distinct_positions((k, n) in (1usize..30).prop_flat_map(|k| (Just(k), 1..=k))) {
        let orders = group_rotation_orders(k, n).unwrap();
        prop_assert_eq!(orders.len(), n);
        for item in 0..k {
            let mut positions: Vec<usize> = orders
                .iter()
                .map(|o| o.iter().position(|&x| x == item).unwrap())
                .collect();
            positions.sort_unstable();
            positions.dedup();
            prop_assert_eq!(positions.len(), n);
        }
    }

    #[test]
    fn pos_aug_with_n_equal_k_is_deterministic(k in 2usize..12, seed in any::<u64>()) {
        let list = list_of(k);
        let data = vec![(list, Ranking::identity(k))];
        let a = pos_aug(&data, k, &RngStream::new(seed, 1)).unwrap();
        let b = pos_aug(&data, k, &RngStream::new(seed, 1)).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.len(), k);
        // the true ranking follows the passages
        for (l, truth) in &a.instances {
            for (i, p) in l.passages().iter().enumerate() {
                let orig: usize = p.passage_id[1..].parse().unwrap();
                prop_assert_eq!(truth.rank_of(i), Some(orig + 1));
            }
        }
    }

    #[test]
    fn propensity_rows_sum_to_one_over_k(
        (k, rankings) in (2usize..8).prop_flat_map(|k| {
            let p = Just((1..=k).collect::<Vec<_>>()).prop_shuffle();
            (Just(k), prop::collection::vec(p, 1..30))
        })
    ) {
        let list = list_of(k);
        let rankings: Vec<Ranking> = rankings.into_iter().map(|r| Ranking::complete(r).unwrap()).collect();
        let counts = count_transitions(rankings.iter().map(|r| (&list, r))).unwrap();
        let omega = estimate_propensities(&counts).unwrap();
        for s in omega.raw_row_sums() {
            prop_assert!((s - 1.0 / k as f64).abs() < 1e-12);
        }
        prop_assert!((omega.raw_total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn losses_are_shift_invariant(
        scores in prop::collection::vec(-5.0f64..5.0, 2..12),
        shift in -50.0f64..50.0,
        seed in any::<u64>(),
    ) {
        let k = scores.len();
        let truth = Ranking::from_order(
            &debiasfirst::permute::fisher_yates_order(k, &mut RngStream::new(seed, 0)),
        ).unwrap();
        let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
        for f in [lm_loss, rank_loss] {
            let (a, b) = (f(&scores, &truth).unwrap(), f(&shifted, &truth).unwrap());
            prop_assert!((a.value - b.value).abs() <= 1e-9 * a.value.abs().max(1.0));
            for (x, y) in a.grad_scores.iter().zip(&b.grad_scores) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn uniform_ips_is_k4_times_rank(
        scores in prop::collection::vec(-5.0f64..5.0, 2..15),
        seed in any::<u64>(),
    ) {
        let k = scores.len();
        let truth = Ranking::from_order(
            &debiasfirst::permute::fisher_yates_order(k, &mut RngStream::new(seed, 0)),
        ).unwrap();
        let k4 = (k as f64).powi(4);
        let rank = rank_loss(&scores, &truth).unwrap();
        let ips = rank_ips_loss(&scores, &truth, &PropensityMatrix::uniform(k)).unwrap();
        prop_assert!((ips.value - k4 * rank.value).abs() <= 1e-10 * ips.value.abs());
        let dot: f64 = ips.grad_scores.iter().zip(&rank.grad_scores).map(|(a, b)| a * b).sum();
        let na: f64 = ips.grad_scores.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nb: f64 = rank.grad_scores.iter().map(|b| b * b).sum::<f64>().sqrt();
        prop_assert!((dot / (na * nb) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn joint_losses_are_nonnegative(
        scores in prop::collection::vec(-20.0f64..20.0, 2..10),
        seed in any::<u64>(),
    ) {
        let k = scores.len();
        let truth = Ranking::from_order(
            &debiasfirst::permute::fisher_yates_order(k, &mut RngStream::new(seed, 0)),
        ).unwrap();
        let omega = PropensityMatrix::uniform(k);
        for v in LossVariant::ALL {
            let w = v.uses_propensities().then_some(&omega);
            let lv = joint_loss(&LossConfig::new(v), &scores, &truth, w).unwrap();
            prop_assert!(lv.value >= 0.0 && lv.value.is_finite());
            prop_assert!(lv.grad_scores.iter().all(|g| g.is_finite()));
        }
    }

    #[test]
    fn rrf_ignores_input_order(
        (k, mut rankings) in (2usize..10).prop_flat_map(|k| {
            let p = Just((1..=k).collect::<Vec<_>>()).prop_shuffle();
            (Just(k), prop::collection::vec(p, 1..6))
        })
    ) {
        let _ = k;
        let to_r = |v: &Vec<Vec<usize>>| v.iter().map(|r| Ranking::complete(r.clone()).unwrap()).collect::<Vec<_>>();
        let a = rrf_scores(&FusionInput::new(to_r(&rankings))).unwrap();
        rankings.reverse();
        let b = rrf_scores(&FusionInput::new(to_r(&rankings))).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-15);
        }
        // fused ranking orders by fused score
        let fused = rrf_fuse(&FusionInput::new(to_r(&rankings))).unwrap();
        let order = fused.order().unwrap();
        for w in order.windows(2) {
            prop_assert!(b[w[0]] >= b[w[1]]);
        }
    }
}

#[test]
fn group_rotate_keeps_every_passage() {
    let list = list_of(20);
    let out = group_rotate(&list, 10).unwrap();
    assert_eq!(out.len(), 10);
    for l in &out {
        assert_eq!(l.len(), 20);
        for p in list.passages() {
            assert!(l.index_of(&p.passage_id).is_some());
        }
    }
}
