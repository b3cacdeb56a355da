mod common;

use common::*;
use latent_srl::chart::{
    inside, inside_constrained, marginals, marginals_with, MarginalMethod, Order, ScoreTables,
};
use latent_srl::convert::{
    enumerate_forest, label_forest_tree, recover_frame, ForestConstraints, Variant,
    ENUMERATION_BOUND,
};
use latent_srl::decode::eisner_decode;
use latent_srl::oracle::{brute_best, brute_log_z, brute_marginals};
use latent_srl::types::{Argument, PredicateFrame, Sentence};
use rand::Rng;

#[test]
fn unconstrained_inside_matches_enumeration() {
    let mut rng = rng(1);
    for _ in 0..60 {
        let n = rng.gen_range(1..=7);
        let scores = random_scores(&mut rng, n);
        for order in [Order::First, Order::Second] {
            let root = if rng.gen_bool(0.5) {
                Some(rng.gen_range(1..=n))
            } else {
                None
            };
            let dp = inside(&scores, order, root).unwrap();
            let bf = brute_log_z(&scores, order, root, None).unwrap();
            assert!(
                (dp - bf).abs() < 1e-9,
                "n={n} {order:?} root={root:?}: {dp} vs {bf}"
            );
        }
    }
}

#[test]
fn constrained_inside_matches_enumeration_for_every_variant() {
    let mut rng = rng(2);
    for _ in 0..80 {
        let n = rng.gen_range(1..=7);
        let sentence = sentence(n);
        let frame = random_frame(&mut rng, n);
        let scores = random_scores(&mut rng, n);
        for variant in Variant::ALL {
            let c = ForestConstraints::new(&sentence, &frame, variant).unwrap();
            for order in [Order::First, Order::Second] {
                let dp = inside_constrained(&scores, order, &c).unwrap();
                let bf = brute_log_z(&scores, order, None, Some(&c)).unwrap();
                assert!(
                    (dp - bf).abs() < 1e-9,
                    "{frame:?} {variant} {order:?}: {dp} vs {bf}"
                );
            }
        }
    }
}

#[test]
fn want_to_forest_has_seven_trees() {
    let sentence = Sentence::from_text("They want to do more .").unwrap();
    let frame = PredicateFrame::new(
        2,
        vec![Argument::new(1, 1, "A0"), Argument::new(3, 5, "A1")],
    );
    let c = ForestConstraints::new(&sentence, &frame, Variant::Latent).unwrap();
    assert_eq!(enumerate_forest(&c, ENUMERATION_BOUND).unwrap().len(), 7);
    let scores = ScoreTables::zeros(6).with_zero_sibs();
    for order in [Order::First, Order::Second] {
        let v = inside_constrained(&scores, order, &c).unwrap();
        assert!((v - 7f64.ln()).abs() < 1e-12);
    }
}

#[test]
fn every_forest_tree_recovers_its_frame() {
    let mut rng = rng(5);
    for _ in 0..200 {
        let n = rng.gen_range(1..=7);
        let frame = random_frame(&mut rng, n);
        for variant in Variant::ALL {
            let c = ForestConstraints::new(&sentence(n), &frame, variant).unwrap();
            let forest = enumerate_forest(&c, ENUMERATION_BOUND).unwrap();
            assert!(!forest.is_empty());
            for tree in forest {
                assert_eq!(
                    recover_frame(&label_forest_tree(&tree, &c), frame.predicate).unwrap(),
                    frame
                );
            }
        }
    }
}

#[test]
fn decode_matches_brute_force_best() {
    let mut rng = rng(3);
    for _ in 0..60 {
        let n = rng.gen_range(1..=7);
        let scores = random_scores(&mut rng, n);
        let p = rng.gen_range(1..=n);
        for order in [Order::First, Order::Second] {
            let (tree, score) = eisner_decode(&scores, p, order).unwrap();
            let (bt, bs) = brute_best(&scores, order, Some(p), None).unwrap();
            assert!((score - bs).abs() < 1e-9);
            assert_eq!(tree, bt);
        }
    }
}

#[test]
fn marginals_match_enumeration_both_routes() {
    let mut rng = rng(4);
    for _ in 0..30 {
        let n = rng.gen_range(1..=6);
        let sentence = sentence(n);
        let frame = random_frame(&mut rng, n);
        let scores = random_scores(&mut rng, n);
        let c = ForestConstraints::new(&sentence, &frame, Variant::Latent).unwrap();
        for order in [Order::First, Order::Second] {
            for constraints in [None, Some(&c)] {
                let adj =
                    marginals_with(&scores, order, constraints, MarginalMethod::Adjoint).unwrap();
                let out =
                    marginals_with(&scores, order, constraints, MarginalMethod::Outside).unwrap();
                let (arc, sib) = brute_marginals(&scores, order, constraints).unwrap();
                for (i, &bf) in arc.iter().enumerate() {
                    assert!((adj.arc_marginals()[i] - bf).abs() < 1e-9);
                    assert!((out.arc_marginals()[i] - bf).abs() < 1e-9);
                }
                if order == Order::Second {
                    for (i, &bf) in sib.iter().enumerate() {
                        assert!((adj.sib_marginals().unwrap()[i] - bf).abs() < 1e-9);
                        assert!((out.sib_marginals().unwrap()[i] - bf).abs() < 1e-9);
                    }
                }
            }
        }
        let _ = marginals(&scores, Order::First, None).unwrap();
    }
}
