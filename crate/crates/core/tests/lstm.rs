#![allow(clippy::needless_range_loop)]

mod common;

use affect_fusion::dataio::Mask;
use affect_fusion::metrics::{AttributeTriple, MtlWeights};
use affect_fusion::rng::rng_for;
use affect_fusion::seqmodel::{
    forward, loss_and_gradients, train, ModelConfig, ParamSet, Pass, SeqBatch, Sequence,
    SequenceSet, TrainConfig,
};
use rand::Rng;

fn sig(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

#[test]
fn one_unit_closed_form() {
    let cfg = ModelConfig {
        input_dim: 1,
        lstm_units: vec![1],
        dropout_rate: 0.0,
    };
    let mut p = ParamSet::zeros(&cfg).unwrap();
    // input weight into the cell-candidate gate only
    p.w_input_mut(0)[2] = 1.0;
    let flat = p.as_flat_mut();
    let n = flat.len();
    // arousal head: weight 2, bias 0.1
    flat[n - 6] = 2.0;
    flat[n - 5] = 0.1;
    let batch = SeqBatch::new(2, 1, vec![1.0, 0.0], vec![Mask::full(2)]).unwrap();
    let out = forward(&p, &batch, Pass::Inference).unwrap();

    let c1 = 0.5 * 1f64.tanh();
    let h1 = 0.5 * c1.tanh();
    let c2 = 0.5 * c1;
    let h2 = 0.5 * c2.tanh();
    assert!((out.predictions[0].arousal - (2.0 * h1 + 0.1)).abs() < 1e-15);
    assert!((out.predictions[1].arousal - (2.0 * h2 + 0.1)).abs() < 1e-15);
    assert_eq!(out.predictions[1].valence, 0.0);
}

#[test]
fn two_units_two_steps_match_reference() {
    let cfg = ModelConfig {
        input_dim: 2,
        lstm_units: vec![2],
        dropout_rate: 0.0,
    };
    let mut r = common::rng(5);
    let flat: Vec<f64> = (0..ParamSet::zeros(&cfg).unwrap().len())
        .map(|_| r.random_range(-1.0..1.0))
        .collect();
    let p = ParamSet::from_flat(&cfg, flat.clone()).unwrap();
    let xs = vec![vec![0.3, -0.7], vec![1.1, 0.4]];
    let batch = SeqBatch::new(2, 2, xs.concat(), vec![Mask::full(2)]).unwrap();
    let got = forward(&p, &batch, Pass::Inference).unwrap().predictions;
    let want = common::reference_forward(&flat, 2, &[2], &xs);

    // first step by hand: no recurrent contribution, c_prev = 0
    let z = |row: usize| flat[row * 2] * xs[0][0] + flat[row * 2 + 1] * xs[0][1] + flat[32 + row];
    let h0: Vec<f64> = (0..2)
        .map(|u| sig(z(6 + u)) * (sig(z(u)) * z(4 + u).tanh()).tanh())
        .collect();
    let head = 40;
    let a0 = flat[head + 2] + flat[head] * h0[0] + flat[head + 1] * h0[1];
    assert!((got[0].arousal - a0).abs() < 1e-14);

    for (g, w) in got.iter().zip(&want) {
        for k in 0..3 {
            assert!((g.to_array()[k] - w[k]).abs() < 1e-14);
        }
    }
}

#[test]
fn stacked_layers_match_reference() {
    let cfg = ModelConfig {
        input_dim: 3,
        lstm_units: vec![4, 3, 2],
        dropout_rate: 0.3,
    };
    let p = ParamSet::init(&cfg, &mut rng_for(1, "t")).unwrap();
    let mut r = common::rng(2);
    let xs: Vec<Vec<f64>> = (0..5)
        .map(|_| (0..3).map(|_| r.random_range(-2.0..2.0)).collect())
        .collect();
    let mut inputs = xs.concat();
    inputs.extend([0.0; 6]);
    let batch = SeqBatch::new(7, 3, inputs, vec![Mask::prefix(5, 7).unwrap()]).unwrap();
    let got = forward(&p, &batch, Pass::Inference).unwrap().predictions;
    let want = common::reference_forward(p.as_flat(), 3, &[4, 3, 2], &xs);
    for t in 0..5 {
        for k in 0..3 {
            assert!((got[t].to_array()[k] - want[t][k]).abs() < 1e-13);
        }
    }
    assert_eq!(got[5], AttributeTriple::ZERO);
    assert_eq!(got[6], AttributeTriple::ZERO);
}

struct Case {
    cfg: ModelConfig,
    batch: SeqBatch,
    labels: Vec<AttributeTriple>,
    weights: MtlWeights,
}

fn random_case(
    seed: u64,
    units: Vec<usize>,
    dim: usize,
    steps: usize,
    dropout: f64,
) -> (Case, ParamSet) {
    let mut r = common::rng(seed);
    let cfg = ModelConfig {
        input_dim: dim,
        lstm_units: units,
        dropout_rate: dropout,
    };
    let mut p = ParamSet::init(&cfg, &mut rng_for(seed, "init")).unwrap();
    for v in p.as_flat_mut() {
        *v += r.random_range(-0.2..0.2);
    }
    let masks = vec![Mask::full(steps), Mask::prefix(steps - 2, steps).unwrap()];
    let inputs = (0..2 * steps * dim)
        .map(|_| r.random_range(-1.5..1.5))
        .collect();
    let labels = (0..2 * steps)
        .map(|_| {
            AttributeTriple::new(
                r.random_range(-1.0..1.0),
                r.random_range(-1.0..1.0),
                r.random_range(-1.0..1.0),
            )
        })
        .collect();
    let weights = MtlWeights::new(
        r.random_range(0.1..1.0),
        r.random_range(0.1..1.0),
        r.random_range(0.1..1.0),
    )
    .unwrap();
    let batch = SeqBatch::new(steps, dim, inputs, masks).unwrap();
    (
        Case {
            cfg,
            batch,
            labels,
            weights,
        },
        p,
    )
}

fn check_gradient(case: &Case, p: &ParamSet, dropout_seed: Option<u64>) -> f64 {
    let pass = || dropout_seed.map(|s| rng_for(s, "dropout"));
    let loss = |flat: &[f64]| {
        let q = ParamSet::from_flat(&case.cfg, flat.to_vec()).unwrap();
        let mut r = pass();
        let pass = r.as_mut().map_or(Pass::Inference, Pass::Training);
        loss_and_gradients(&q, &case.batch, &case.labels, &case.weights, pass)
            .unwrap()
            .0
            .total
    };
    let mut r = pass();
    let pass_a = r.as_mut().map_or(Pass::Inference, Pass::Training);
    let (_, g) = loss_and_gradients(p, &case.batch, &case.labels, &case.weights, pass_a).unwrap();
    let numeric = common::fd_gradient(loss, p.as_flat(), 1e-5);
    common::max_rel_error(g.as_flat(), &numeric, 1e-6)
}

#[test]
fn gradient_matches_finite_differences() {
    let shapes: [(Vec<usize>, usize, usize); 5] = [
        (vec![2], 1, 4),
        (vec![3], 2, 4),
        (vec![4, 2], 3, 5),
        (vec![8], 2, 6),
        (vec![3, 3], 2, 6),
    ];
    for (i, (units, dim, steps)) in shapes.into_iter().enumerate() {
        let (case, p) = random_case(100 + i as u64, units, dim, steps, 0.0);
        let err = check_gradient(&case, &p, None);
        assert!(err < 1e-4, "case {i}: max relative error {err:e}");
    }
}

#[test]
fn gradient_with_fixed_dropout_mask() {
    let (case, p) = random_case(7, vec![4, 3], 2, 6, 0.4);
    let err = check_gradient(&case, &p, Some(11));
    assert!(err < 1e-4, "max relative error {err:e}");
}

fn toy_sets(dim: usize) -> (SequenceSet, SequenceSet) {
    let mut r = common::rng(3);
    let mut make = |n: usize, tag: &str| {
        let seqs = (0..n)
            .map(|i| {
                let inputs: Vec<f64> = (0..10 * dim).map(|_| r.random_range(-1.0..1.0)).collect();
                let labels = (0..10)
                    .map(|t| {
                        let v = inputs[t * dim];
                        AttributeTriple::new(v, -v, 0.5 * v)
                    })
                    .collect();
                Sequence {
                    id: format!("{tag}{i}"),
                    inputs,
                    labels,
                    mask: Mask::full(10),
                }
            })
            .collect();
        SequenceSet::new(10, dim, seqs).unwrap()
    };
    (make(6, "t"), make(3, "d"))
}

#[test]
fn single_task_leaves_other_heads_at_init() {
    let (tr, dv) = toy_sets(3);
    let model = ModelConfig {
        input_dim: 3,
        lstm_units: vec![6, 4],
        dropout_rate: 0.2,
    };
    let base = TrainConfig {
        weights: MtlWeights::new(1.0, 0.0, 0.0).unwrap(),
        rng_seed: 9,
        ..TrainConfig::desk()
    };
    let init = train(
        &tr,
        &dv,
        &model,
        &TrainConfig {
            epochs: 0,
            ..base.clone()
        },
    )
    .unwrap()
    .params;
    let trained = train(&tr, &dv, &model, &TrainConfig { epochs: 5, ..base })
        .unwrap()
        .params;
    assert_ne!(init.head_weights(0), trained.head_weights(0));
    for k in [1, 2] {
        assert_eq!(init.head_weights(k), trained.head_weights(k));
        assert_eq!(init.head_bias(k), trained.head_bias(k));
    }
}

#[test]
fn frozen_head_stays_fixed_under_full_weights() {
    let (tr, dv) = toy_sets(2);
    let model = ModelConfig {
        input_dim: 2,
        lstm_units: vec![5],
        dropout_rate: 0.0,
    };
    let base = TrainConfig {
        rng_seed: 4,
        frozen_heads: [false, false, true],
        ..TrainConfig::desk()
    };
    let init = train(
        &tr,
        &dv,
        &model,
        &TrainConfig {
            epochs: 0,
            ..base.clone()
        },
    )
    .unwrap()
    .params;
    let trained = train(&tr, &dv, &model, &TrainConfig { epochs: 3, ..base })
        .unwrap()
        .params;
    assert_eq!(init.head_weights(2), trained.head_weights(2));
    assert_ne!(init.head_weights(1), trained.head_weights(1));
}

#[test]
fn training_is_deterministic() {
    let (tr, dv) = toy_sets(2);
    let model = ModelConfig {
        input_dim: 2,
        lstm_units: vec![4, 3],
        dropout_rate: 0.4,
    };
    let cfg = TrainConfig {
        epochs: 4,
        rng_seed: 21,
        ..TrainConfig::desk()
    };
    let a = train(&tr, &dv, &model, &cfg).unwrap();
    let b = train(&tr, &dv, &model, &cfg).unwrap();
    assert_eq!(a.params.as_flat(), b.params.as_flat());
    assert_eq!(a.history, b.history);
    let c = train(
        &tr,
        &dv,
        &model,
        &TrainConfig {
            rng_seed: 22,
            ..cfg
        },
    )
    .unwrap();
    assert_ne!(a.params.as_flat(), c.params.as_flat());
}

#[test]
fn learns_a_linear_target() {
    let (tr, dv) = toy_sets(2);
    let model = ModelConfig {
        input_dim: 2,
        lstm_units: vec![8],
        dropout_rate: 0.0,
    };
    let cfg = TrainConfig {
        epochs: 40,
        rng_seed: 1,
        weights: MtlWeights::uniform(),
        ..TrainConfig::desk()
    };
    let out = train(&tr, &dv, &model, &cfg).unwrap();
    let best = out.history[out.best_epoch.unwrap()].dev.global;
    assert!(best.mean() > 0.8, "dev CCC {best:?}");
}
