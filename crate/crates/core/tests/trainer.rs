use pdex::activation::ActivationKind;
use pdex::datasets::{gen_heat, subsample, Grid1, HeatIc, Rect, SampleSet};
use pdex::fd;
use pdex::jet::{Coord, Jet};
use pdex::network::RationalNetwork;
use pdex::trainer::{
    collocation_loss, data_loss, joint_params, loss_and_grad, train, Phase, TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_samples(rng: &mut ChaCha8Rng, n: usize) -> SampleSet {
    let mut s = SampleSet::default();
    for _ in 0..n {
        s.push(rng.random_range(0.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    }
    s
}

fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; 2]> {
    (0..n).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(0.0..1.0)]).collect()
}

/// Small nets whose rational coefficients are perturbed away from the shared fit.
fn toy_nets(seed: u64, order: usize) -> (RationalNetwork, RationalNetwork) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = RationalNetwork::new(&[2, 6, 6, 1], ActivationKind::Rational).unwrap().init_weights(seed);
    let mut n = RationalNetwork::new(&[order + 1, 5, 1], ActivationKind::Rational).unwrap().init_weights(seed + 1);
    for net in [&mut u, &mut n] {
        for p in net.params_mut() {
            *p += rng.random_range(-0.05..0.05);
        }
    }
    (u, n)
}

#[test]
fn data_loss_of_constant_network() {
    let mut u = RationalNetwork::new(&[2, 1], ActivationKind::Rational).unwrap();
    u.params_mut()[2] = 0.75;
    let mut s = SampleSet::default();
    for k in 0..7 {
        s.push(k as f64, -(k as f64), 1.75);
    }
    assert_eq!(data_loss(&u, &s).unwrap(), 1.0);
    s.u.iter_mut().for_each(|v| *v = 0.75);
    assert_eq!(data_loss(&u, &s).unwrap(), 0.0);
}

#[test]
fn data_loss_matches_scalar_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for seed in 0..10 {
        let (u, _) = toy_nets(seed, 2);
        let s = random_samples(&mut rng, 37);
        let want: f64 = (0..s.len())
            .map(|i| (u.eval(&[s.x[i], s.t[i]]).unwrap() - s.u[i]).powi(2))
            .sum::<f64>()
            / s.len() as f64;
        let got = data_loss(&u, &s).unwrap();
        assert!((got - want).abs() <= 1e-12 * want.max(1.0), "{got} vs {want}");
    }
}

#[test]
fn collocation_loss_hand_cases() {
    let pts = [[0.3, 0.1], [-0.7, 0.9], [0.0, 0.5]];
    let zero_n = RationalNetwork::new(&[3, 1], ActivationKind::Rational).unwrap();
    // U depends on x only.
    let mut u = RationalNetwork::new(&[2, 1], ActivationKind::Rational).unwrap();
    u.params_mut()[0] = 1.3;
    assert_eq!(collocation_loss(&u, &zero_n, &pts, 2).unwrap(), 0.0);
    // U(x, t) = t, so D_t U = 1 everywhere.
    let mut u = RationalNetwork::new(&[2, 1], ActivationKind::Rational).unwrap();
    u.params_mut()[1] = 1.0;
    assert_eq!(collocation_loss(&u, &zero_n, &pts, 2).unwrap(), 1.0);
}

#[test]
fn collocation_loss_matches_jet_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..10 {
        let order = 1 + seed as usize % 3;
        let (u, n) = toy_nets(seed, order);
        let pts = random_points(&mut rng, 23);
        let mut want = 0.0;
        for [x, t] in &pts {
            let jet = u.forward(&[Jet::seed(*x, Coord::X, order), Jet::seed(*t, Coord::T, order)]).unwrap();
            let mut feats = vec![jet.val];
            feats.extend_from_slice(&jet.dx);
            let r = jet.dt - n.eval(&feats).unwrap();
            want += r * r;
        }
        want /= pts.len() as f64;
        let got = collocation_loss(&u, &n, &pts, order).unwrap();
        assert!((got - want).abs() <= 1e-12 * want.max(1.0), "{got} vs {want}");
    }
}

#[test]
fn total_loss_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let order = 2;
    let (u, n) = toy_nets(9, order);
    let samples = random_samples(&mut rng, 10);
    let pts = random_points(&mut rng, 10);
    let params = joint_params(&u, &n);
    let eval = loss_and_grad(&u, &n, &params, &samples, &pts, order, 4).unwrap();
    let h = 1e-5;
    for i in 0..params.len() {
        let fd = fd::derivative(
            |v| {
                let mut p = params.clone();
                p[i] = v;
                loss_and_grad(&u, &n, &p, &samples, &pts, order, 4).unwrap().total()
            },
            params[i],
            1,
            h,
            0,
        );
        let g = eval.grad[i];
        let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-6);
        assert!(rel < 1e-4, "param {i}: {g} vs {fd}");
    }
}

#[test]
fn sharding_does_not_change_results() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (u, n) = toy_nets(1, 3);
    let samples = random_samples(&mut rng, 50);
    let pts = random_points(&mut rng, 40);
    let params = joint_params(&u, &n);
    let a = loss_and_grad(&u, &n, &params, &samples, &pts, 3, 7).unwrap();
    let b = loss_and_grad(&u, &n, &params, &samples, &pts, 3, 1000).unwrap();
    assert!((a.total() - b.total()).abs() < 1e-14);
    for (x, y) in a.grad.iter().zip(&b.grad) {
        assert!((x - y).abs() < 1e-13);
    }
}

fn heat_problem() -> (SampleSet, Rect) {
    let g = Grid1 { lo: 0.0, hi: 10.0, n: 41, endpoint: true };
    let ds = gen_heat(0.05, &HeatIc::Sine, g, g).unwrap();
    (subsample(&ds, 1000, 1).unwrap(), ds.domain())
}

fn small_nets(domain: Rect, order: usize) -> (RationalNetwork, RationalNetwork) {
    let mut u = RationalNetwork::new(&[2, 10, 10, 1], ActivationKind::Rational).unwrap().init_weights(1);
    let (shift, scale) = domain.normalization();
    u.set_input_normalization(&shift, &scale).unwrap();
    let n = RationalNetwork::new(&[order + 1, 10, 1], ActivationKind::Rational).unwrap().init_weights(2);
    (u, n)
}

#[test]
fn adam_smoke_run_reduces_loss() {
    let (samples, domain) = heat_problem();
    let (mut u, mut n) = small_nets(domain, 2);
    let cfg = TrainConfig {
        n_coll: 500,
        n_select: 1,
        adam_epochs: 50,
        lbfgs_epochs: 0,
        adam_lr: 1e-2,
        ..TrainConfig::default()
    };
    let mut log = Vec::new();
    let hist = train(&mut u, &mut n, &samples, domain, &cfg, Some(&mut log)).unwrap();
    assert_eq!(hist.len(), 50);
    assert!(hist.records.iter().all(|r| r.reselected && r.phase == Phase::Adam));
    let first = hist.records[0].total();
    let last = hist.records[49].total();
    assert!(last < first, "{last} vs {first}");
    let text = String::from_utf8(log).unwrap();
    assert_eq!(text.lines().count(), 50);
    let rec: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    let mut keys: Vec<&str> = rec.as_object().unwrap().keys().map(String::as_str).collect();
    keys.sort();
    assert_eq!(keys, ["coll_loss", "data_loss", "epoch", "phase", "reselected"]);
}

#[test]
fn training_is_deterministic_and_respects_schedule() {
    let (samples, domain) = heat_problem();
    let cfg = TrainConfig {
        n_coll: 200,
        n_select: 3,
        adam_epochs: 7,
        lbfgs_epochs: 4,
        ..TrainConfig::default()
    };
    let run = || {
        let (mut u, mut n) = small_nets(domain, 2);
        let h = train(&mut u, &mut n, &samples, domain, &cfg, None).unwrap();
        (h, joint_params(&u, &n))
    };
    let (h1, p1) = run();
    let (h2, p2) = run();
    assert_eq!(p1, p2);
    let strip = |h: &pdex::trainer::TrainHistory| {
        h.records.iter().map(|r| (r.epoch, r.data_loss, r.coll_loss, r.reselected)).collect::<Vec<_>>()
    };
    assert_eq!(strip(&h1), strip(&h2));
    assert!(h1.len() <= 11 && h1.len() > 7);
    for r in &h1.records {
        assert_eq!(r.reselected, r.epoch % 3 == 0, "epoch {}", r.epoch);
        assert_eq!(r.phase, if r.epoch < 7 { Phase::Adam } else { Phase::Lbfgs });
    }
}

#[test]
fn invalid_configs_are_usage_errors() {
    let (samples, domain) = heat_problem();
    let (mut u, mut n) = small_nets(domain, 2);
    for cfg in [
        TrainConfig { n_coll: 0, ..TrainConfig::default() },
        TrainConfig { n_select: 0, ..TrainConfig::default() },
        TrainConfig { order: 5, ..TrainConfig::default() },
        TrainConfig { order: 3, ..TrainConfig::default() },
    ] {
        let err = train(&mut u, &mut n, &samples, domain, &cfg, None).unwrap_err();
        assert!(err.is_usage(), "{err}");
    }
}
