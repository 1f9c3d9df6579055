//! Bowing F1 against an exhaustive matching oracle.

use bowmotion::metrics::{attack_indices, bowing_f1, match_attacks, match_attacks_nearest};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Largest one-to-one matching found by trying every assignment.
fn brute_force_matching(pred: &[usize], gt: &[usize], used: &mut Vec<bool>, delta: usize) -> usize {
    let Some((&p, rest)) = pred.split_first() else {
        return 0;
    };
    let mut best = brute_force_matching(rest, gt, used, delta);
    for k in 0..gt.len() {
        if !used[k] && gt[k].abs_diff(p) <= delta {
            used[k] = true;
            best = best.max(1 + brute_force_matching(rest, gt, used, delta));
            used[k] = false;
        }
    }
    best
}

fn oracle_f1(pred: &[u8], gt: &[u8], delta: usize) -> f64 {
    let p = attack_indices(pred);
    let g = attack_indices(gt);
    if p.is_empty() && g.is_empty() {
        return 1.0;
    }
    if p.is_empty() || g.is_empty() {
        return 0.0;
    }
    let tp = brute_force_matching(&p, &g, &mut vec![false; g.len()], delta) as f64;
    if tp == 0.0 {
        return 0.0;
    }
    let precision = tp / p.len() as f64;
    let recall = tp / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

fn random_flags(rng: &mut ChaCha8Rng, len: usize, density: f64) -> Vec<u8> {
    (0..len).map(|_| u8::from(rng.gen_bool(density))).collect()
}

#[test]
fn bowing_f1_matches_brute_force_on_1000_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut nearest_short = 0;
    for case in 0..1000 {
        let len = rng.gen_range(1..=36);
        let delta = rng.gen_range(0..=3);
        let density = rng.gen_range(0.05..0.35);
        let pred = random_flags(&mut rng, len, density);
        let gt = random_flags(&mut rng, len, density);
        let got = bowing_f1(&pred, &gt, delta).unwrap();
        let want = oracle_f1(&pred, &gt, delta);
        assert!(
            (got.f1 - want).abs() < 1e-12,
            "case {case}: f1 {} vs oracle {want} (pred {pred:?}, gt {gt:?}, delta {delta})",
            got.f1
        );
        let (p, g) = (attack_indices(&pred), attack_indices(&gt));
        let nearest = match_attacks_nearest(&p, &g, delta);
        assert!(nearest <= match_attacks(&p, &g, delta));
        if nearest < match_attacks(&p, &g, delta) {
            nearest_short += 1;
        }
    }
    println!("nearest-first greedy fell short of the maximum matching in {nearest_short} of 1000 cases");
}

#[test]
fn matching_is_symmetric_in_its_arguments() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..500 {
        let len = rng.gen_range(1..=40);
        let delta = rng.gen_range(0..=3);
        let p = attack_indices(&random_flags(&mut rng, len, 0.2));
        let g = attack_indices(&random_flags(&mut rng, len, 0.2));
        assert_eq!(match_attacks(&p, &g, delta), match_attacks(&g, &p, delta));
    }
}

/// Maximum bipartite matching by augmenting paths.
fn kuhn_matching(pred: &[usize], gt: &[usize], delta: usize) -> usize {
    fn augment(p: usize, pred: &[usize], gt: &[usize], delta: usize, seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for g in 0..gt.len() {
            if gt[g].abs_diff(pred[p]) <= delta && !seen[g] {
                seen[g] = true;
                if owner[g].map_or(true, |q| augment(q, pred, gt, delta, seen, owner)) {
                    owner[g] = Some(p);
                    return true;
                }
            }
        }
        false
    }
    let mut owner = vec![None; gt.len()];
    (0..pred.len())
        .filter(|&p| augment(p, pred, gt, delta, &mut vec![false; gt.len()], &mut owner))
        .count()
}

#[test]
fn matching_equals_augmenting_path_maximum_on_long_sequences() {
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    let mut nearest_short = [0usize; 6];
    for case in 0..1000 {
        let len = rng.gen_range(1..=60);
        let delta = rng.gen_range(0..=5);
        let (dp, dg) = (rng.gen_range(0.05..0.4), rng.gen_range(0.05..0.4));
        let p = attack_indices(&random_flags(&mut rng, len, dp));
        let g = attack_indices(&random_flags(&mut rng, len, dg));
        let want = kuhn_matching(&p, &g, delta);
        assert_eq!(match_attacks(&p, &g, delta), want, "case {case}: pred {p:?} gt {g:?} delta {delta}");
        if match_attacks_nearest(&p, &g, delta) < want {
            nearest_short[delta] += 1;
        }
    }
    println!("nearest-first shortfalls by delta 0..5: {nearest_short:?}");
    assert_eq!(nearest_short[0], 0);
}
