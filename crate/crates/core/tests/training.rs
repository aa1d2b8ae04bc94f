use pqr_core::anchors::uniform_anchors;
use pqr_core::codec::{encode_batch, Distance, EncoderConfig};
use pqr_core::lab::{build_dataset, extract_patches, patch_tensor, DatasetConfig, DistortionKind, PatchMode};
use pqr_core::network::{train, Mode, Network, PatchSet, Targets, TrainConfig};
use pqr_core::{ArchConfig, Head, ScoreRange};

/// 50 desk patches: 5 crops from each of 10 noise and contrast images.
fn toy_set() -> PatchSet {
    let data = build_dataset(&DatasetConfig {
        sources: 5,
        size: 40,
        kinds: vec![DistortionKind::Awgn, DistortionKind::ContrastDecrement],
        levels: 1,
        seed: 11,
        ..Default::default()
    })
    .unwrap();
    let mut set = PatchSet::new(3 * 32 * 32);
    let mut buf = Vec::new();
    for (i, img) in data.images.iter().enumerate() {
        for o in extract_patches(img, PatchMode::Random { count: 5, seed: i as u64 }, 32).unwrap() {
            buf.clear();
            patch_tensor(img, o, 32, &mut buf);
            set.push(&buf, data.manifest.images[i].mos).unwrap();
        }
    }
    assert_eq!(set.len(), 50);
    set
}

fn encoder() -> EncoderConfig {
    EncoderConfig::new(64.0, uniform_anchors(ScoreRange::unit(), 5).unwrap(), Distance::SquaredEuclidean).unwrap()
}

fn all_inputs(set: &PatchSet) -> Vec<f64> {
    (0..set.len()).flat_map(|i| set.patch(i).to_vec()).collect()
}

fn eval_loss(net: &Network, set: &PatchSet, enc: Option<&EncoderConfig>) -> f64 {
    let x = all_inputs(set);
    match enc {
        Some(e) => {
            let t = encode_batch(set.scores(), e).unwrap();
            net.loss(&x, Targets::Pqr(&t), Mode::Eval).unwrap()
        }
        None => net.loss(&x, Targets::Scalar(set.scores()), Mode::Eval).unwrap(),
    }
}

#[test]
fn toy_problem_is_learned() {
    let set = toy_set();
    let cfg = TrainConfig {
        epochs: 30,
        batch_size: 10,
        ..TrainConfig::default()
    };
    let enc = encoder();
    // Cross-entropy against soft targets cannot drop below their entropy.
    let targets = encode_batch(set.scores(), &enc).unwrap();
    let entropy = targets
        .iter()
        .map(|q| -q.probs().iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>())
        .sum::<f64>()
        / set.len() as f64;
    for (head, e, floor) in [(Head::Pqr(5), Some(&enc), entropy), (Head::Sqr, None, 0.0)] {
        let net = Network::build(ArchConfig::desk(head), 3).unwrap();
        let initial = eval_loss(&net, &set, e);
        let (trained, trace) = train(net, &set, &cfg, e).unwrap();
        assert_eq!(trace.len(), 30);
        let last = trace.last().unwrap().mean_loss;
        let fin = eval_loss(&trained, &set, e);
        println!(
            "{head:?}: floor {floor:.4} initial {initial:.4} first epoch {:.4} last epoch {last:.4} final eval {fin:.4}",
            trace[0].mean_loss
        );
        assert!(last - floor < 0.25 * (initial - floor), "{head:?}: {last} vs initial {initial}, floor {floor}");
    }
}

#[test]
fn zero_rate_leaves_parameters_unchanged() {
    let set = toy_set();
    let cfg = TrainConfig {
        epochs: 1,
        lr_start: 0.0,
        lr_end: 0.0,
        ..TrainConfig::default()
    };
    let net = Network::build(ArchConfig::desk(Head::Sqr), 5).unwrap();
    let (trained, trace) = train(net.clone(), &set, &cfg, None).unwrap();
    assert_eq!(trained.params(), net.params());
    assert_eq!(trace.len(), 1);
}

#[test]
fn training_is_deterministic() {
    let set = toy_set();
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 7,
        seed: 9,
        ..TrainConfig::default()
    };
    let enc = encoder();
    let run = || train(Network::build(ArchConfig::desk(Head::Pqr(5)), 1).unwrap(), &set, &cfg, Some(&enc)).unwrap();
    let (a, ta) = run();
    let (b, tb) = run();
    assert!(a.params().iter().zip(b.params()).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_eq!(ta, tb);

    let other = TrainConfig { seed: 10, ..cfg.clone() };
    let (c, _) = train(Network::build(ArchConfig::desk(Head::Pqr(5)), 1).unwrap(), &set, &other, Some(&enc)).unwrap();
    assert_ne!(a.params(), c.params());
}

#[test]
fn encoder_must_match_head() {
    let set = toy_set();
    let cfg = TrainConfig { epochs: 1, ..TrainConfig::default() };
    let pqr = Network::build(ArchConfig::desk(Head::Pqr(5)), 1).unwrap();
    assert!(train(pqr, &set, &cfg, None).is_err());
    let sqr = Network::build(ArchConfig::desk(Head::Sqr), 1).unwrap();
    assert!(train(sqr, &set, &cfg, Some(&encoder())).is_err());
    let wrong_m = Network::build(ArchConfig::desk(Head::Pqr(4)), 1).unwrap();
    assert!(train(wrong_m, &set, &cfg, Some(&encoder())).is_err());
}
