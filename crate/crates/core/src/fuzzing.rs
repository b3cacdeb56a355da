//! Bodies of the fuzz targets, shared with the seed-replay tests. Each
//! function must return normally on every input; a panic is a finding.

use crate::chart::{inside, inside_constrained, LabelTable, Order, ScoreTables};
use crate::convert::{ForestConstraints, Variant};
use crate::data::{
    attachment_agreement, read_full_trees, read_jsonl, read_props, read_tree_records, tree_record,
    write_jsonl, write_props,
};
use crate::decode::{decode_full_tree, eisner_decode};
use crate::oracle::{brute_best, brute_log_z};
use crate::scoring::Model;
use crate::types::{Argument, PredicateFrame, RoleInventory, Sentence};

pub fn jsonl(data: &[u8]) {
    let Ok(corpus) = read_jsonl(data) else { return };
    let mut out = Vec::new();
    write_jsonl(&mut out, &corpus).expect("parsed corpora are writable");
    assert_eq!(
        read_jsonl(&out[..]).expect("written jsonl reads back"),
        corpus
    );
}

pub fn props(data: &[u8]) {
    let Ok(corpus) = read_props(data) else { return };
    let mut out = Vec::new();
    write_props(&mut out, &corpus).expect("parsed corpora are writable");
    assert_eq!(
        read_props(&out[..]).expect("written props read back"),
        corpus
    );
}

pub fn tree_records(data: &[u8]) {
    let Ok(records) = read_tree_records(data) else {
        return;
    };
    for record in records {
        let Ok(annotation) = record.to_annotation() else {
            continue;
        };
        let again = tree_record(&annotation).expect("recovered frames convert");
        assert_eq!(
            again.to_annotation().expect("flat trees recover"),
            annotation
        );
    }
}

pub fn full_trees(data: &[u8]) {
    let Ok(trees) = read_full_trees(data) else {
        return;
    };
    for t in &trees {
        let _ = t.tree();
    }
    if trees.iter().any(|t| !t.heads.is_empty()) {
        assert_eq!(
            attachment_agreement(&trees, &trees).expect("self-aligned"),
            100.0
        );
    }
}

pub fn model(data: &[u8]) {
    let Ok(model) = Model::from_bytes(data) else {
        return;
    };
    let again = Model::from_bytes(&model.to_bytes()).expect("written models load");
    assert_eq!(again.scorer.params(), model.scorer.params());
}

/// Byte cursor yielding small bounded values, zero when exhausted.
struct Bytes<'a>(&'a [u8]);

impl Bytes<'_> {
    fn byte(&mut self) -> u8 {
        match self.0.split_first() {
            Some((&b, rest)) => {
                self.0 = rest;
                b
            }
            None => 0,
        }
    }

    fn score(&mut self) -> f64 {
        (f64::from(self.byte()) - 128.0) / 16.0
    }
}

fn tables(bytes: &mut Bytes<'_>, n: usize) -> ScoreTables {
    let roles = std::sync::Arc::new(RoleInventory::new(["A0", "A1"]).expect("valid roles"));
    let dim = n + 1;
    let root: Vec<[f64; 2]> = (0..dim).map(|_| [bytes.score(), bytes.score()]).collect();
    let arcs: Vec<f64> = (0..dim * dim * 3).map(|_| bytes.score()).collect();
    let labels = LabelTable::from_logits(n, roles, &root, &arcs);
    ScoreTables::from_fn(n, |_, _| bytes.score())
        .with_sib_fn(|_, _, _| bytes.score())
        .with_labels(labels)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Unconstrained inside and decoding against enumeration.
pub fn decode(data: &[u8]) {
    let mut bytes = Bytes(data);
    let n = 1 + usize::from(bytes.byte() % 7);
    let p = 1 + usize::from(bytes.byte()) % n;
    let order = if bytes.byte() % 2 == 0 {
        Order::First
    } else {
        Order::Second
    };
    let scores = tables(&mut bytes, n);
    let dp = inside(&scores, order, None).expect("full space is non-empty");
    assert!(close(
        dp,
        brute_log_z(&scores, order, None, None).expect("small")
    ));
    let (tree, score) = decode_full_tree(&scores, order).expect("full space is non-empty");
    let (best, best_score) = brute_best(&scores, order, None, None).expect("small");
    assert!(close(score, best_score));
    assert_eq!(tree, best);
    let (_, score) = eisner_decode(&scores, p, order).expect("rooted space is non-empty");
    let (_, best_score) = brute_best(&scores, order, Some(p), None).expect("small");
    assert!(close(score, best_score));
}

/// Span-constrained inside against enumeration for a frame read from bytes.
pub fn constrained(data: &[u8]) {
    let mut bytes = Bytes(data);
    let n = 1 + usize::from(bytes.byte() % 7);
    let p = 1 + usize::from(bytes.byte()) % n;
    let order = if bytes.byte() % 2 == 0 {
        Order::First
    } else {
        Order::Second
    };
    let variant = Variant::ALL[usize::from(bytes.byte() % 4)];
    let mut args = Vec::new();
    let mut pos = 1;
    while pos <= n {
        let b = bytes.byte();
        if pos == p || b % 3 == 0 {
            pos += 1;
            continue;
        }
        let limit = if pos < p { p - 1 } else { n };
        let end = (pos + usize::from(b >> 6)).min(limit);
        args.push(Argument::new(
            pos,
            end,
            if b % 2 == 0 { "A0" } else { "A1" },
        ));
        pos = end + 1;
    }
    let sentence = Sentence::new((1..=n).map(|i| format!("w{i}")).collect()).expect("non-empty");
    let c = ForestConstraints::new(&sentence, &PredicateFrame::new(p, args), variant)
        .expect("valid frame");
    let scores = tables(&mut bytes, n);
    let dp = inside_constrained(&scores, order, &c).expect("forests are non-empty");
    assert!(close(
        dp,
        brute_log_z(&scores, order, None, Some(&c)).expect("small")
    ));
}
