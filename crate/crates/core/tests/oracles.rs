//! Library operations checked against brute-force references, plus property tests.

mod common;

use std::collections::BTreeSet;

use common::*;
use netevo::analysis::{mann_kendall, pearson, power_law_fit, Series};
use netevo::expansion::{gradual_step, random_step};
use netevo::geometry::{
    account_modification, CostLedger, Inventory, LedgerEntry, LocationPool, Network, Point, Region,
};
use netevo::mesh::{
    check_acceptable, evo_design, is_acceptable, opt_design, primary_path, secondary_path, DesignParams,
    InventoryPolicy,
};
use netevo::metrics::{evolvability, node_betweenness, topological_similarity};
use netevo::ring::{insert_node, tsp_bruteforce, tsp_heuristic, Ring};
use netevo::rng;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn points_from_seed(seed: u64, n: usize) -> Vec<Point> {
    random_points(&mut ChaCha8Rng::seed_from_u64(seed), n, 1000.0, 600.0)
}

fn two_opt_stable(ring: &Ring) -> bool {
    let p = ring.points();
    let n = p.len();
    let d = |a: usize, b: usize| netevo::geometry::distance(&p[a % n], &p[b % n]);
    for i in 0..n {
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let delta = d(i, j) + d(i + 1, j + 1) - d(i, i + 1) - d(j, j + 1);
            if delta < -1e-9 * ring.cost() {
                return false;
            }
        }
    }
    true
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tsp_heuristic_close_to_exact(seed in any::<u64>(), n in 7usize..=9) {
        let pts = points_from_seed(seed, n);
        let exact = tsp_bruteforce(&pts).unwrap();
        let heur = tsp_heuristic(&pts, &mut rng::seeded(seed), 8).unwrap();
        prop_assert!(heur.cost() <= exact.cost() * 1.05);
        prop_assert!(heur.cost() >= exact.cost() * (1.0 - 1e-12));
        prop_assert!(two_opt_stable(&heur));
    }

    #[test]
    fn ring_cost_matches_recomputation(seed in any::<u64>(), n in 3usize..30) {
        let pts = points_from_seed(seed, n + 1);
        let ring = tsp_heuristic(&pts[..n], &mut rng::seeded(seed), 2).unwrap();
        let (next, mod_cost) = insert_node(&ring, pts[n]).unwrap();
        prop_assert_eq!(next.len(), n + 1);
        let ids: BTreeSet<_> = next.ids().into_iter().collect();
        prop_assert_eq!(ids.len(), n + 1);
        let net = next.to_network();
        prop_assert!((net.cost() - next.cost()).abs() <= 1e-9 * next.cost());
        prop_assert!((mod_cost - brute_insertion(ring.points(), &pts[n])).abs() <= 1e-9 * mod_cost);
        let m = account_modification(&ring.to_network(), &Inventory::new(), &net);
        prop_assert!((m.cost - mod_cost).abs() <= 1e-9 * mod_cost);
        prop_assert_eq!(m.inventory.len(), 1);
    }

    #[test]
    fn acceptability_matches_path_enumeration(seed in any::<u64>(), mask in any::<u64>(), factor in 0.6f64..2.0) {
        let pts = points_from_seed(seed, 6);
        let net = masked_network(&pts, mask & ((1 << 15) - 1));
        let bound = factor * region_diagonal(&pts);
        prop_assert_eq!(check_acceptable(&net, bound).acceptable, brute_acceptable(&net, bound));
    }

    #[test]
    fn paths_are_disjoint_and_minimal(seed in any::<u64>(), mask in any::<u64>()) {
        let pts = points_from_seed(seed, 6);
        let net = masked_network(&pts, mask & ((1 << 15) - 1));
        for (a, b) in all_pairs(6) {
            let (u, v) = (pts[a].id, pts[b].id);
            let (bp, bs) = brute_pair(&net, u, v);
            let p = primary_path(&net, u, v).unwrap();
            prop_assert_eq!(p.as_ref().map(|p| p.delay).is_some(), bp.is_some());
            let Some(p) = p else { continue };
            prop_assert!((p.delay - bp.unwrap()).abs() <= 1e-9 * p.delay);
            let s = secondary_path(&net, u, v, &p).unwrap();
            prop_assert_eq!(s.is_some(), bs.is_some());
            if let Some(s) = s {
                prop_assert!((s.delay - bs.unwrap()).abs() <= 1e-9 * s.delay);
                prop_assert!(s.interior().iter().all(|w| !p.interior().contains(w)));
                prop_assert!(s.nodes != p.nodes);
            }
        }
    }

    #[test]
    fn ledger_holds_on_evo_traces(seed in any::<u64>(), policy in 0usize..3) {
        let policy = InventoryPolicy::ALL[policy];
        let pts = points_from_seed(seed, 9);
        let params = DesignParams::with_delay_bound(1.5 * region_diagonal(&pts));
        let mut rng = rng::seeded(seed);
        let mut net = opt_design(&pts[..4], &params, &mut rng).unwrap();
        let mut inv = Inventory::new();
        let mut discarded = 0.0;
        let mut ledger = CostLedger::new(net.cost());
        for k in 4..9 {
            let out = evo_design(&net, &inv, &pts[k..k + 1], &params, policy, &mut rng).unwrap();
            prop_assert!(is_acceptable(&out.network, &params).acceptable);
            let m = account_modification(&net, &inv, &out.network);
            prop_assert!((m.cost - out.mod_cost).abs() <= 1e-9 * out.mod_cost.max(1.0));
            match policy {
                InventoryPolicy::Leasing => prop_assert!(out.inventory.is_empty()),
                InventoryPolicy::Ownership => {
                    prop_assert!(out.inventory.is_empty());
                    prop_assert!(net.link_keys().is_subset(&out.network.link_keys()));
                }
                InventoryPolicy::Inventory => {
                    prop_assert!((out.inventory.value() - m.inventory.value()).abs() <= 1e-9 * net.cost());
                }
            }
            if policy != InventoryPolicy::Inventory {
                discarded += m.inventory.value();
            }
            net = out.network;
            inv = out.inventory;
            ledger.push(LedgerEntry { c_evo: net.cost(), c_mod: m.cost, c_inv: inv.value() + discarded, c_opt: 1.0 });
        }
        prop_assert!(ledger.verify().is_ok());
        let mut broken = ledger.clone();
        broken.entries[2].c_mod += 1.0;
        prop_assert!(broken.verify().is_err());
    }

    #[test]
    fn jaccard_properties(seed in any::<u64>(), a in any::<u64>(), b in any::<u64>()) {
        let pts = points_from_seed(seed, 6);
        let (na, nb) = (masked_network(&pts, a & 0x7fff), masked_network(&pts, b & 0x7fff));
        let t = topological_similarity(&na, &nb).unwrap();
        prop_assert!((0.0..=1.0).contains(&t));
        prop_assert_eq!(t, topological_similarity(&nb, &na).unwrap());
        prop_assert_eq!(topological_similarity(&na, &na).unwrap(), 1.0);
        let complement = masked_network(&pts, !a & 0x7fff);
        if na.link_count() > 0 && complement.link_count() > 0 {
            prop_assert_eq!(topological_similarity(&na, &complement).unwrap(), 0.0);
        }
    }

    #[test]
    fn betweenness_sum_matches_enumeration(seed in any::<u64>(), n in 4usize..8) {
        let pts = points_from_seed(seed, n);
        let net = tsp_heuristic(&pts, &mut rng::seeded(seed), 1).unwrap().to_network();
        let bc = node_betweenness(&net).unwrap();
        let pairs = (n * (n - 1) / 2) as f64;
        let mut interior = 0.0;
        for (a, b) in all_pairs(n) {
            let p = primary_path(&net, pts[a].id, pts[b].id).unwrap().unwrap();
            interior += p.interior().len() as f64;
        }
        let total: f64 = bc.values().sum();
        prop_assert!((total - interior / pairs).abs() < 1e-9);
        prop_assert!(bc.values().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn evolvability_identity(c_mod in 0.0f64..1e6, c_opt in 1.0f64..1e6) {
        let e = evolvability(c_mod, c_opt).unwrap();
        prop_assert!((e + c_mod / c_opt - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mann_kendall_rank_invariant(y in prop::collection::vec(-1e3f64..1e3, 10..40)) {
        let a = mann_kendall(&y).unwrap();
        let t: Vec<f64> = y.iter().map(|v| (v / 100.0).exp() * 3.0 + 7.0).collect();
        let b = mann_kendall(&t).unwrap();
        prop_assert_eq!(a.s, b.s);
        prop_assert!((a.p_value - b.p_value).abs() < 1e-12);
    }

    #[test]
    fn pearson_affine_invariant(
        xy in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 5..40),
        scale in 0.1f64..10.0,
        shift in -100.0f64..100.0,
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = xy.into_iter().unzip();
        let Ok(r) = pearson(&x, &y) else { return Ok(()) };
        let x2: Vec<f64> = x.iter().map(|v| v * scale + shift).collect();
        prop_assert!((pearson(&x2, &y).unwrap() - r).abs() < 1e-9);
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
    }

    #[test]
    fn power_law_recovers_exact_data(c in 0.1f64..100.0, beta in -2.0f64..2.0) {
        let x: Vec<f64> = (1..20).map(|i| i as f64 * 3.0).collect();
        let y: Vec<f64> = x.iter().map(|v| c * v.powf(beta)).collect();
        let fit = power_law_fit(&Series::new(x, y).unwrap()).unwrap();
        prop_assert!((fit.coefficients[1] - beta).abs() < 1e-9);
        prop_assert!((fit.r_squared - 1.0).abs() < 1e-9);
    }

    #[test]
    fn expansion_steps_never_repeat(seed in any::<u64>(), counts in prop::collection::vec(1usize..6, 1..6)) {
        let pool = LocationPool::uniform(Region::default(), 80, &mut rng::seeded(seed));
        let mut current: BTreeSet<_> = [0].into_iter().collect();
        let mut r = rng::seeded(seed ^ 1);
        for (i, c) in counts.iter().enumerate() {
            let ids = if i % 2 == 0 {
                random_step(&pool, &current, *c, &mut r).unwrap()
            } else {
                gradual_step(&pool, &current, *c).unwrap()
            };
            prop_assert_eq!(ids.len(), *c);
            for id in ids {
                prop_assert!(current.insert(id));
            }
        }
    }
}

#[test]
fn gradual_step_ignores_pool_order() {
    let pool = LocationPool::uniform(Region::default(), 60, &mut rng::seeded(11));
    let mut reversed: Vec<Point> = pool.points().to_vec();
    reversed.reverse();
    let shuffled = LocationPool::new(*pool.region(), reversed).unwrap();
    let current: BTreeSet<_> = [3, 17].into_iter().collect();
    assert_eq!(gradual_step(&pool, &current, 8).unwrap(), gradual_step(&shuffled, &current, 8).unwrap());
}

#[test]
fn five_node_opt_against_subset_enumeration() {
    let mut gaps = Vec::new();
    for seed in 0..12 {
        let pts = points_from_seed(seed, 5);
        let bound = 1.2 * region_diagonal(&pts);
        let params = DesignParams::with_delay_bound(bound);
        let exact = brute_opt(&pts, bound);
        match opt_design(&pts, &params, &mut rng::seeded(seed)) {
            Ok(net) => {
                let exact = exact.expect("a design was found, so one exists");
                assert!(brute_acceptable(&net, bound));
                assert!(net.cost() >= exact * (1.0 - 1e-12));
                gaps.push(net.cost() / exact - 1.0);
            }
            Err(_) => assert!(exact.is_none()),
        }
    }
    let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
    assert!(mean_gap < 0.05, "mean gap to the exact optimum {mean_gap}");
}

#[test]
fn opt_result_has_no_removable_link_with_certain_deletion() {
    for seed in 0..8 {
        let pts = points_from_seed(seed, 10);
        let params = DesignParams {
            p_del: 1.0,
            ..DesignParams::with_delay_bound(1.3 * region_diagonal(&pts))
        };
        let net = opt_design(&pts, &params, &mut rng::seeded(seed)).unwrap();
        for key in net.link_keys() {
            let mut reduced: Network = net.clone();
            reduced.remove_link(key);
            assert!(!check_acceptable(&reduced, params.delay_bound).acceptable, "seed {seed}: {key:?} removable");
        }
    }
}
