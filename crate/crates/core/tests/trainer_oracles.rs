use dfa_esn::data::{normalize, synthetic_sines, Dataset, LabeledSeries, NormMode, SyntheticSpec};
use dfa_esn::numerics::{Matrix, SeededRng, WeightDist};
use dfa_esn::reservoir::{readout, run_series, Activation, DeepEsn};
use dfa_esn::trainer::{
    alignment_angle, apply_update, compute_update, delta_rule_update, dfa_update,
    error_at_sample, finite_difference_grad, fit, probe_coords, sampled_loss, train_epoch,
    update_sketch, DfaVariant, GradTarget, TrainConfig, UpdateBatch,
};

fn toy_data(seed: u64, classes: usize) -> Dataset {
    let ds = synthetic_sines(&SyntheticSpec {
        classes,
        dims: 2,
        length: 40,
        train_per_class: 4,
        test_per_class: 2,
        seed,
        ..Default::default()
    })
    .unwrap();
    normalize(&ds, NormMode::Zscore).unwrap().0
}

fn toy_config(n: usize, depth: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 5,
        eta: 0.2,
        reservoir_size: n,
        depth,
        seed,
        activation: Activation::CenteredSigmoid,
        input_dist: WeightDist::uniform(-2.0, 2.0),
        hidden_input_dist: WeightDist::uniform(-1.0, 1.0),
        washout: dfa_esn::trainer::Washout::Steps(5),
        sample_every: Some(6),
        ..Default::default()
    }
}

fn build(ds: &Dataset, cfg: &TrainConfig, feedback: bool) -> DeepEsn {
    let arch = cfg.architecture(ds.dims, ds.num_classes(), feedback);
    DeepEsn::build(&SeededRng::new(cfg.seed), &arch).unwrap()
}

/// Per-series, per-sample composition of the single-sample update rules.
fn reference_update(esn: &DeepEsn, series: &[LabeledSeries], cfg: &TrainConfig, eta: f64) -> UpdateBatch {
    let mut net = esn.clone();
    let mut d_out = Matrix::zeros(esn.w_out().rows(), esn.w_out().cols());
    let mut d_in: Vec<Matrix> = esn
        .layers()
        .iter()
        .map(|l| Matrix::zeros(l.size(), l.input_dim()))
        .collect();
    let mut samples = 0;
    for s in series {
        let trace = run_series(&mut net, s, cfg.sample_plan(s.len()).unwrap()).unwrap();
        for k in 0..trace.len() {
            let x = trace.last_state(k);
            let y = readout(esn.w_out(), x).unwrap();
            let e = error_at_sample(&y, s.label(), esn.output_dim()).unwrap();
            d_out.add_assign(&delta_rule_update(&e, x, eta)).unwrap();
            for (i, layer) in esn.layers().iter().enumerate() {
                if esn.feedback()[i].is_zero() || !cfg.train_hidden {
                    continue;
                }
                let d = dfa_update(
                    &e,
                    &esn.feedback()[i],
                    &trace.inputs[k][i],
                    &trace.preacts[k][i],
                    eta,
                    cfg.dfa_variant,
                    cfg.use_activation_derivative,
                    layer.activation(),
                )
                .unwrap();
                d_in[i].add_assign(&d).unwrap();
            }
            samples += 1;
        }
    }
    let inv = 1.0 / samples as f64;
    d_out.scale_in_place(inv);
    d_in.iter_mut().for_each(|m| m.scale_in_place(inv));
    UpdateBatch {
        d_out,
        d_in,
        samples,
    }
}

fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
    let mut diff = a.clone();
    diff.add_assign(&b.scaled(-1.0)).unwrap();
    diff.frobenius_norm() / b.frobenius_norm().max(1e-300)
}

#[test]
fn batched_update_matches_per_sample_reference() {
    let ds = toy_data(3, 3);
    for (variant, fprime) in [
        (DfaVariant::ProjectedOuter, true),
        (DfaVariant::ProjectedOuter, false),
        (DfaVariant::PaperLiteral, false),
    ] {
        let cfg = TrainConfig {
            dfa_variant: variant,
            use_activation_derivative: fprime,
            ..toy_config(12, 3, 5)
        };
        let mut esn = build(&ds, &cfg, true);
        // A couple of epochs so the readout and errors are non-trivial.
        for epoch in 0..2 {
            train_epoch(&mut esn, &ds.train, &cfg, epoch).unwrap();
        }
        let got = compute_update(&esn, &ds.train, &cfg, 0.05).unwrap();
        let want = reference_update(&esn, &ds.train, &cfg, 0.05);
        assert_eq!(got.samples, want.samples);
        assert!(rel_err(&got.d_out, &want.d_out) < 1e-12);
        for i in 0..esn.depth() {
            let e = rel_err(&got.d_in[i], &want.d_in[i]);
            assert!(e < 1e-12, "{variant:?} fprime={fprime} layer {i}: {e:e}");
        }
    }
}

#[test]
fn sampled_loss_matches_reference() {
    let ds = toy_data(1, 2);
    let cfg = toy_config(10, 2, 2);
    let mut esn = build(&ds, &cfg, true);
    train_epoch(&mut esn, &ds.train, &cfg, 0).unwrap();
    let mut net = esn.clone();
    let (mut total, mut count) = (0.0, 0);
    for s in &ds.train {
        let trace = run_series(&mut net, s, cfg.sample_plan(s.len()).unwrap()).unwrap();
        for k in 0..trace.len() {
            let y = readout(esn.w_out(), trace.last_state(k)).unwrap();
            let e = error_at_sample(&y, s.label(), 2).unwrap();
            total += 0.5 * e.0.iter().map(|v| v * v).sum::<f64>();
            count += 1;
        }
    }
    let want = total / count as f64;
    let got = sampled_loss(&esn, &ds.train, &cfg).unwrap();
    assert!((got - want).abs() <= 1e-12 * want);
}

#[test]
fn readout_update_is_exact_negative_gradient() {
    for seed in 0..5 {
        let ds = toy_data(seed, 3);
        let cfg = toy_config(16, 2, seed);
        let mut esn = build(&ds, &cfg, true);
        for epoch in 0..3 {
            train_epoch(&mut esn, &ds.train, &cfg, epoch).unwrap();
        }
        let coords = probe_coords(&esn, GradTarget::Readout, usize::MAX, &SeededRng::new(seed)).unwrap();
        assert_eq!(coords.len(), 3 * 16);
        let grad = finite_difference_grad(&esn, &ds.train, &cfg, GradTarget::Readout, &coords, 1e-5).unwrap();
        let upd = update_sketch(&esn, &ds.train, &cfg, GradTarget::Readout, &coords).unwrap();
        let angle = alignment_angle(&upd, &grad).unwrap().unwrap();
        let cosine = angle.to_radians().cos();
        assert!(cosine > 0.999, "seed {seed}: cosine {cosine}");
        // Unit-eta update and negative gradient agree in magnitude too.
        for (u, g) in upd.values.iter().zip(&grad.values) {
            assert!((u + g).abs() < 1e-6 * (1.0 + g.abs()), "{u} vs {g}");
        }
    }
}

#[test]
fn finite_differences_refuse_large_reservoirs() {
    let ds = toy_data(0, 2);
    let cfg = toy_config(65, 1, 0);
    let esn = build(&ds, &cfg, true);
    let err = finite_difference_grad(&esn, &ds.train, &cfg, GradTarget::Readout, &[(0, 0)], 1e-5);
    assert!(err.is_err());
    let cfg = toy_config(8, 1, 0);
    let esn = build(&ds, &cfg, true);
    assert!(finite_difference_grad(&esn, &ds.train, &cfg, GradTarget::Readout, &[(0, 0)], 0.0).is_err());
    assert!(finite_difference_grad(&esn, &ds.train, &cfg, GradTarget::Input(3), &[(0, 0)], 1e-5).is_err());
    assert!(finite_difference_grad(&esn, &ds.train, &cfg, GradTarget::Readout, &[(9, 0)], 1e-5).is_err());
}

#[test]
fn zero_feedback_reduces_to_readout_only_training() {
    let ds = toy_data(4, 3);
    let base = toy_config(20, 3, 9);
    let mut zeroed = build(&ds, &base, true);
    zeroed.clear_feedback();
    let frozen_inputs: Vec<Matrix> = zeroed.layers().iter().map(|l| l.w_in().clone()).collect();
    let mut readout_only = zeroed.clone();
    fit(&mut zeroed, &ds.train, &ds.test, &base, |_, _| Ok(())).unwrap();
    let ro_cfg = TrainConfig {
        train_hidden: false,
        ..base.clone()
    };
    fit(&mut readout_only, &ds.train, &ds.test, &ro_cfg, |_, _| Ok(())).unwrap();
    let bits = |m: &Matrix| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(zeroed.w_out()), bits(readout_only.w_out()));
    for (l, w) in zeroed.layers().iter().zip(&frozen_inputs) {
        assert_eq!(bits(l.w_in()), bits(w));
    }
    // Same seed, architecture built without feedback: identical too.
    let mut plain = build(&ds, &base, false);
    fit(&mut plain, &ds.train, &ds.test, &base, |_, _| Ok(())).unwrap();
    assert_eq!(bits(plain.w_out()), bits(readout_only.w_out()));
}

#[test]
fn training_is_bit_reproducible() {
    let ds = toy_data(6, 2);
    let cfg = toy_config(24, 2, 11);
    let run = || {
        let mut esn = build(&ds, &cfg, true);
        let reports = fit(&mut esn, &ds.train, &ds.test, &cfg, |_, _| Ok(())).unwrap();
        (esn, reports)
    };
    let (a, ra) = run();
    let (b, rb) = run();
    assert_eq!(ra, rb);
    assert_eq!(a.w_out(), b.w_out());
    for (x, y) in a.layers().iter().zip(b.layers()) {
        assert_eq!(x.w_in(), y.w_in());
    }
}

#[test]
fn reports_follow_eta_schedule() {
    let ds = toy_data(2, 2);
    let cfg = TrainConfig {
        eta_decay_per_epoch: 0.1,
        eval_every: 2,
        ..toy_config(8, 1, 0)
    };
    let mut esn = build(&ds, &cfg, true);
    let reports = fit(&mut esn, &ds.train, &ds.test, &cfg, |_, _| Ok(())).unwrap();
    for (k, r) in reports.iter().enumerate() {
        assert_eq!(r.epoch, k);
        assert!((r.eta - 0.2 * 0.9f64.powi(k as i32)).abs() < 1e-15);
        assert_eq!(r.test_acc.is_some(), k % 2 == 1 || k == 4);
    }
}

#[test]
fn weight_decay_and_update_compose() {
    let ds = toy_data(0, 2);
    let cfg = toy_config(6, 1, 0);
    let mut esn = build(&ds, &cfg, true);
    esn.w_out_mut().data_mut().iter_mut().enumerate().for_each(|(i, v)| *v = i as f64);
    let w_in0 = esn.layers()[0].w_in().clone();
    let update = UpdateBatch {
        d_out: Matrix::from_fn(2, 6, |_, _| 1.0),
        d_in: vec![Matrix::from_fn(6, 2, |_, _| -1.0)],
        samples: 1,
    };
    apply_update(&mut esn, &update, 0.5).unwrap();
    for (i, v) in esn.w_out().data().iter().enumerate() {
        assert_eq!(*v, i as f64 * 0.5 + 1.0);
    }
    for (v, w) in esn.layers()[0].w_in().data().iter().zip(w_in0.data()) {
        assert_eq!(*v, w * 0.5 - 1.0);
    }
}

#[test]
fn training_reduces_loss_on_synthetic_task() {
    // Library defaults (logistic units, default learning rate) at a width
    // small enough to keep ten seeds quick.
    let mut improved = 0;
    for seed in 0..10 {
        let ds = synthetic_sines(&SyntheticSpec {
            seed,
            ..Default::default()
        })
        .unwrap();
        let (ds, _) = normalize(&ds, NormMode::Zscore).unwrap();
        let cfg = TrainConfig {
            epochs: 30,
            reservoir_size: 100,
            seed,
            eval_every: 0,
            ..Default::default()
        };
        let mut esn = build(&ds, &cfg, true);
        let reports = fit(&mut esn, &ds.train, &[], &cfg, |_, _| Ok(())).unwrap();
        if reports[29].loss < reports[0].loss {
            improved += 1;
        }
    }
    assert!(improved >= 8, "loss fell in only {improved} of 10 seeds");
}

#[test]
fn rejects_labels_beyond_outputs() {
    let ds = toy_data(0, 3);
    let cfg = toy_config(6, 1, 0);
    let two_class = DeepEsn::build(&SeededRng::new(0), &cfg.architecture(2, 2, true)).unwrap();
    assert!(compute_update(&two_class, &ds.train, &cfg, 0.1).is_err());
}
