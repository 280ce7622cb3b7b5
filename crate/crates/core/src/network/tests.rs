use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::data::{synthetic_corpus, Source, SyntheticStyle};
use crate::tensor::{grad_check, GRAD_CHECK_EPS};

fn small_spec() -> NetworkSpec {
    NetworkSpec {
        input_height: 10,
        input_width: 10,
        kernel_size: 3,
        conv1_channels: 2,
        conv2_channels: 3,
        ip_width: 6,
        relu_head_dim: 4,
        feat_dim: 3,
        margin: 1.0,
        head_weights: HeadWeights::default(),
    }
}

fn random_image(spec: &NetworkSpec, rng: &mut ChaCha8Rng) -> Tensor {
    let n = spec.input_height * spec.input_width;
    Tensor::new(
        vec![1, spec.input_height, spec.input_width],
        (0..n).map(|_| rng.gen_range(0.0..1.0)).collect(),
    )
    .unwrap()
}

fn sample(id: &str, label: &str, pixels: Tensor) -> ImageSample {
    ImageSample {
        id: id.into(),
        pixels,
        label: label.into(),
        source: Source::Synthetic,
    }
}

#[test]
fn default_specs_validate() {
    let text = NetworkSpec::for_canvas(Canvas::TEXT);
    text.validate().unwrap();
    assert_eq!(text.flat_len(), 50 * 4 * 11);
    let digit = NetworkSpec::for_canvas(Canvas::DIGIT);
    assert_eq!(digit.flat_len(), 800);
    let mut bad = digit;
    bad.input_height = 27;
    assert!(bad.validate().is_err());
    bad = digit;
    bad.margin = 0.0;
    assert!(bad.validate().is_err());
}

#[test]
fn zero_network_gives_zero_embeddings() {
    let spec = NetworkSpec::for_canvas(Canvas::DIGIT);
    let net = Network::from_parts(spec, NetworkParams::zeros(&spec)).unwrap();
    let e = net.embed(&Tensor::zeros(&[1, 28, 28])).unwrap();
    for h in Head::ALL {
        assert!(e.head(h).iter().all(|&v| v == 0.0));
        assert_eq!(e.head(h).len(), spec.head_dim(h));
    }
}

#[test]
fn embedding_is_deterministic_and_shaped() {
    let spec = NetworkSpec::for_canvas(Canvas::TEXT);
    let net = Network::new(spec, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let img = random_image(&spec, &mut rng);
    let a = net.embed(&img).unwrap();
    let b = net.embed(&img.clone()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.feat.len(), spec.feat_dim);
    assert_eq!(a.conv2_head.len(), 50);
    assert_eq!(a.relu_head.len(), 20);
    assert!(net.embed(&Tensor::zeros(&[1, 28, 28])).is_err());
}

#[test]
fn contrastive_closed_forms() {
    let sim = PairLabel::Similar;
    let dis = PairLabel::Dissimilar;
    assert_eq!(contrastive_loss(0.0, sim, 1.0).0, 0.0);
    assert_eq!(contrastive_loss(1.5, dis, 1.0).0, 0.0);
    assert!((contrastive_loss(0.4, dis, 1.0).0 - 0.18).abs() < 1e-12);
    assert_eq!(contrastive_loss(2.0, sim, 1.0).0, 2.0);
    assert_eq!(contrastive_loss(2.0, sim, 1.0).1, 2.0);
    assert!((contrastive_loss(0.4, dis, 1.0).1 + 0.6).abs() < 1e-12);
}

fn random_embedding(rng: &mut ChaCha8Rng, spec: &NetworkSpec) -> MultiLevelEmbedding {
    let mut v = |n| (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect::<Vec<f64>>();
    MultiLevelEmbedding {
        conv2_head: v(spec.conv2_channels),
        relu_head: v(spec.relu_head_dim),
        feat: v(spec.feat_dim),
        ip: v(spec.ip_width),
    }
}

#[test]
fn combined_loss_identities() {
    let spec = NetworkSpec::for_canvas(Canvas::DIGIT);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = random_embedding(&mut rng, &spec);
    let b = random_embedding(&mut rng, &spec);
    assert_eq!(combined_loss(&a, &a, PairLabel::Similar, &spec).total, 0.0);

    for y in [PairLabel::Similar, PairLabel::Dissimilar] {
        let l = combined_loss(&a, &b, y, &spec);
        assert!((l.total - l.per_head.iter().sum::<f64>()).abs() < 1e-12);
        assert_eq!(l, combined_loss(&b, &a, y, &spec));

        let mut feat_only = spec;
        feat_only.head_weights = HeadWeights {
            conv2: 0.0,
            relu: 0.0,
            feat: 1.0,
        };
        let plain = contrastive_loss(euclidean(&a.feat, &b.feat), y, spec.margin).0;
        assert_eq!(combined_loss(&a, &b, y, &feat_only).total, plain);
    }
}

/// Full-network gradient check on a downscaled spec.
pub(crate) fn network_grad_error(seed: u64) -> f64 {
    let spec = small_spec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = Network::new(spec, seed).unwrap();
    let a = random_image(&spec, &mut rng);
    let b = random_image(&spec, &mut rng);
    let y = if seed % 2 == 0 {
        PairLabel::Similar
    } else {
        PairLabel::Dissimilar
    };
    let mut grads = NetworkParams::zeros(&spec);
    net.pair_gradients(&a, &b, y, &mut grads).unwrap();
    let mut worst = 0.0f64;
    for slot in 0..10 {
        let x = net.params.tensors()[slot].clone();
        let analytic = grads.tensors()[slot].clone();
        let err = grad_check(
            |t| {
                let mut probe = net.clone();
                *probe.params.tensors_mut()[slot] = t.clone();
                Ok(probe.pair_loss(&a, &b, y)?.total)
            },
            &x,
            &analytic,
            GRAD_CHECK_EPS,
        )
        .unwrap();
        worst = worst.max(err);
    }
    worst
}

#[test]
fn full_network_gradient_matches_finite_differences() {
    for seed in 0..20 {
        let err = network_grad_error(seed);
        assert!(err < 1e-3, "seed {seed}: {err}");
    }
}

#[test]
fn shared_weights_sum_branch_gradients() {
    let spec = small_spec();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let net = Network::new(spec, 9).unwrap();
    let a = random_image(&spec, &mut rng);
    let b = random_image(&spec, &mut rng);
    let mut joint = NetworkParams::zeros(&spec);
    net.pair_gradients(&a, &b, PairLabel::Similar, &mut joint).unwrap();

    let ta = net.trace(&a).unwrap();
    let tb = net.trace(&b).unwrap();
    let (_, ga) = combined_loss_with_grad(&ta.embedding, &tb.embedding, PairLabel::Similar, &spec);
    let gb = ga.clone().map(|g| g.into_iter().map(|v| -v).collect());
    let mut only_a = NetworkParams::zeros(&spec);
    let mut only_b = NetworkParams::zeros(&spec);
    net.backward(&ta, &ga, &mut only_a).unwrap();
    net.backward(&tb, &gb, &mut only_b).unwrap();
    for ((j, x), z) in joint.tensors().iter().zip(only_a.tensors()).zip(only_b.tensors()) {
        for ((jv, xv), zv) in j.data().iter().zip(x.data()).zip(z.data()) {
            assert!((jv - (xv + zv)).abs() < 1e-14);
        }
    }
}

#[test]
fn zero_gradient_batch_leaves_params_unchanged() {
    let spec = small_spec();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut net = Network::new(spec, 1).unwrap();
    let s = sample("a", "x", random_image(&spec, &mut rng));
    let batch: Vec<PairExample> = (0..10)
        .map(|_| PairExample {
            a: &s,
            b: &s,
            y: PairLabel::Similar,
        })
        .collect();
    let before = net.params.clone();
    let mut opt = Adadelta::with_defaults(&net.params);
    let loss = net.train_step(&mut opt, &batch).unwrap();
    assert_eq!(loss, 0.0);
    assert_eq!(net.params, before);
}

#[test]
fn repeated_steps_reduce_single_pair_loss() {
    let spec = small_spec();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut net = Network::new(spec, 6).unwrap();
    let a = sample("a", "x", random_image(&spec, &mut rng));
    let b = sample("b", "x", random_image(&spec, &mut rng));
    let batch = [PairExample {
        a: &a,
        b: &b,
        y: PairLabel::Similar,
    }];
    let mut opt = Adadelta::with_defaults(&net.params);
    let losses: Vec<f64> = (0..50).map(|_| net.train_step(&mut opt, &batch).unwrap()).collect();
    let first: f64 = losses[..10].iter().sum();
    let last: f64 = losses[40..].iter().sum();
    assert!(last < first, "{losses:?}");
    assert!(losses[49] < losses[0]);
}

#[test]
fn empty_batch_rejected() {
    let spec = small_spec();
    let mut net = Network::new(spec, 0).unwrap();
    let mut opt = Adadelta::with_defaults(&net.params);
    assert!(net.train_step(&mut opt, &[]).is_err());
}

#[test]
fn non_finite_pair_is_reported() {
    let spec = small_spec();
    let mut net = Network::new(spec, 0).unwrap();
    let mut opt = Adadelta::with_defaults(&net.params);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let good = sample("g", "x", random_image(&spec, &mut rng));
    let mut px = random_image(&spec, &mut rng);
    px.data_mut()[3] = f64::INFINITY;
    let bad = sample("b", "y", px);
    let batch = [
        PairExample {
            a: &good,
            b: &good,
            y: PairLabel::Similar,
        },
        PairExample {
            a: &good,
            b: &bad,
            y: PairLabel::Dissimilar,
        },
    ];
    let before = net.params.clone();
    match net.train_step(&mut opt, &batch) {
        Err(Error::NonFiniteLoss { pair }) => assert_eq!(pair, 1),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(net.params, before);
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let spec = NetworkSpec::for_canvas(Canvas::DIGIT);
    let net = Network::new(spec, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.dssn");
    save_checkpoint(&net, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back, net);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let img = random_image(&spec, &mut rng);
    let (e1, e2) = (net.embed(&img).unwrap(), back.embed(&img).unwrap());
    for h in Head::ALL {
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(e1.head(h)), bits(e2.head(h)));
    }
}

#[test]
fn checkpoint_rejections() {
    let net = Network::new(small_spec(), 3).unwrap();
    let bytes = write_checkpoint(&net).unwrap();
    assert!(read_checkpoint(&bytes).is_ok());

    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    assert!(read_checkpoint(&bad_magic).unwrap_err().to_string().contains("magic"));

    let mut bad_version = bytes.clone();
    bad_version[4] = 9;
    assert!(read_checkpoint(&bad_version).unwrap_err().to_string().contains("version"));

    assert!(read_checkpoint(&bytes[..bytes.len() - 3]).unwrap_err().to_string().contains("truncated"));

    // ip width in the spec record disagrees with the stored tensors
    let mut tampered = bytes.clone();
    let ip_offset = 12 + 5 * 4;
    tampered[ip_offset] += 1;
    let err = read_checkpoint(&tampered).unwrap_err().to_string();
    assert!(err.contains("shape"), "{err}");

    let mut trailing = bytes;
    trailing.push(0);
    assert!(read_checkpoint(&trailing).is_err());
}

#[test]
fn toy_training_separates_two_classes() {
    let canvas = Canvas::new(16, 16).unwrap();
    let spec = NetworkSpec {
        input_height: 16,
        input_width: 16,
        kernel_size: 5,
        conv1_channels: 4,
        conv2_channels: 6,
        ip_width: 24,
        relu_head_dim: 6,
        feat_dim: 4,
        margin: 1.0,
        head_weights: HeadWeights::default(),
    };
    let style = SyntheticStyle {
        font_scale: 1.0,
        slant: 0.0,
        noise: 0.1,
    };
    let data = synthetic_corpus(&["X", "O"], 20, &style, 11, canvas).unwrap();
    let mut net = Network::new(spec, 11).unwrap();
    let mut opt = Adadelta::with_defaults(&net.params);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    train(
        &mut net,
        &mut opt,
        &data,
        TrainConfig {
            epochs: 1,
            pairs_per_epoch: 5000,
        },
        &mut rng,
        |_| {},
    )
    .unwrap();

    let feats: Vec<Vec<f64>> = data.iter().map(|s| net.embed(&s.pixels).unwrap().feat).collect();
    let (mut sim, mut ns, mut dis, mut nd) = (0.0, 0, 0.0, 0);
    for i in 0..data.len() {
        for j in i + 1..data.len() {
            let d = euclidean(&feats[i], &feats[j]);
            if data[i].label == data[j].label {
                sim += d;
                ns += 1;
            } else {
                dis += d;
                nd += 1;
            }
        }
    }
    let (sim, dis) = (sim / ns as f64, dis / nd as f64);
    assert!(sim < 0.1 * spec.margin, "similar {sim}");
    assert!(dis > 0.9 * spec.margin, "dissimilar {dis}");
}
