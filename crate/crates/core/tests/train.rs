use latent_srl::chart::Order;
use latent_srl::scoring::{Model, ScorerKind};
use latent_srl::synth::{synth_corpus, SynthConfig};
use latent_srl::train::{train, TrainConfig};

fn corpora(
    sentences: usize,
    seed: u64,
) -> (
    Vec<latent_srl::types::SrlAnnotation>,
    Vec<latent_srl::types::SrlAnnotation>,
) {
    let all = synth_corpus(&SynthConfig {
        sentences,
        seed,
        ..Default::default()
    })
    .unwrap();
    let dev = all[..sentences / 5].to_vec();
    (all[sentences / 5..].to_vec(), dev)
}

#[test]
fn patience_zero_trains_one_epoch() {
    let (tr, dev) = corpora(30, 1);
    let config = TrainConfig {
        patience: 0,
        hash_bits: 12,
        ..Default::default()
    };
    let out = train(&tr, &dev, &config, |_| {}).unwrap();
    assert_eq!(out.history.len(), 1);
    assert_eq!(out.best_epoch, 1);
}

#[test]
fn identical_seeds_give_identical_checkpoints() {
    let (tr, dev) = corpora(40, 2);
    for scorer in [ScorerKind::LogLinear, ScorerKind::Neural] {
        let config = TrainConfig {
            epochs: 2,
            scorer,
            hash_bits: 12,
            batch_tokens: 40,
            neural: latent_srl::scoring::NeuralConfig {
                embed_dim: 4,
                hidden_dim: 6,
                arc_dim: 4,
                label_dim: 4,
                sib_dim: 3,
            },
            order: Order::Second,
            ..Default::default()
        };
        let a = train(&tr, &dev, &config, |_| {}).unwrap();
        let b = train(&tr, &dev, &config, |_| {}).unwrap();
        assert_eq!(a.model.to_bytes(), b.model.to_bytes());
        let restored = Model::from_bytes(&a.model.to_bytes()).unwrap();
        assert_eq!(restored.scorer.params(), a.model.scorer.params());
        let checkpoint = restored.checkpoint.unwrap();
        assert_eq!(checkpoint["epoch"], a.best_epoch);
        assert_eq!(checkpoint["config"]["seed"], 1);
    }
}

#[test]
fn learns_a_small_synthetic_corpus() {
    let (tr, dev) = corpora(150, 3);
    let config = TrainConfig {
        epochs: 8,
        ..Default::default()
    };
    let out = train(&tr, &dev, &config, |m| {
        eprintln!(
            "epoch {} loss {:.3} f1 {:.2} cm {:.2} {:.2}s",
            m.epoch, m.train_loss, m.dev.f1, m.dev.cm, m.seconds
        )
    })
    .unwrap();
    let best = &out.history[out.best_epoch - 1];
    assert!(best.dev.f1 > 80.0, "{}", best.dev.f1);
}
