use fedmd_core::dataio::{generate_synthetic, SyntheticConfig};
use fedmd_core::features::histogram_batch;
use fedmd_core::gmm::{fit_em, EmConfig};
use fedmd_core::matrix::Matrix;
use fedmd_core::preprocess::fit_normalizer;
use fedmd_core::neural::{
    init_from_rbms, train_epoch, Architecture, Autoencoder, ModelKind, NetworkWeights, RbmConfig, Rmsprop,
};
use fedmd_core::rng::seeded;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Central finite differences of the per-sample loss with respect to every parameter.
fn numeric_gradient(model: &Autoencoder<f64>, h: &[f64], noise: &[f64], delta: f64) -> Vec<f64> {
    let shapes = model.weights.shapes();
    let base = model.weights.flatten();
    (0..base.len())
        .map(|p| {
            let eval = |shift: f64| {
                let mut flat = base.clone();
                flat[p] += shift;
                let w = NetworkWeights::from_flat(&shapes, &flat).unwrap();
                let m = Autoencoder::from_weights(model.kind, w).unwrap();
                m.loss(h, Some(noise)).unwrap()
            };
            (eval(delta) - eval(-delta)) / (2.0 * delta)
        })
        .collect()
}

fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-10 {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}

fn gradient_check(kind: ModelKind, seed: u64) -> f64 {
    let arch = Architecture { input: 6, hidden: 4, latent: 2 };
    let model = Autoencoder::random(kind, arch, seed);
    let mut rng = seeded(seed + 100);
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let h: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
        let noise: Vec<f64> = (0..2).map(|_| StandardNormal.sample(&mut rng)).collect();
        let (_, g) = model.loss_and_gradient(&h, Some(&noise)).unwrap();
        let numeric = numeric_gradient(&model, &h, &noise, 1e-5);
        for (a, n) in g.flatten().iter().zip(&numeric) {
            worst = worst.max(relative_error(*a, *n));
        }
    }
    worst
}

#[test]
fn analytic_gradients_match_finite_differences() {
    for kind in [ModelKind::Vae, ModelKind::Ae] {
        for seed in 0..5 {
            let err = gradient_check(kind, seed);
            assert!(err < 1e-4, "{kind} seed {seed}: max relative error {err:e}");
        }
    }
}

fn fixed_histograms(n: usize, k: usize, seed: u64) -> Matrix<f64> {
    let mut rng = seeded(seed);
    Matrix::from_rows((0..n).map(|_| {
        (0..k)
            .map(|_| (rng.random_range(0..=4) as f64) / 4.0)
            .collect::<Vec<_>>()
    }))
    .unwrap()
}

#[test]
fn training_reduces_loss() {
    let data = fixed_histograms(20, 6, 3);
    for kind in [ModelKind::Vae, ModelKind::Ae] {
        let mut m = Autoencoder::random(kind, Architecture::for_input(6), 7);
        let mut opt = Rmsprop::new(0.01);
        let first = train_epoch(&mut m, &data, &mut opt, 4, 0).unwrap();
        let mut last = first;
        for e in 1..50 {
            last = train_epoch(&mut m, &data, &mut opt, 4, e).unwrap();
        }
        assert!(last < first, "{kind}: {first} -> {last}");
    }
}

#[test]
fn training_is_deterministic() {
    let data = fixed_histograms(16, 5, 1);
    let run = || {
        let mut m = Autoencoder::random(ModelKind::Vae, Architecture::for_input(5), 2);
        let mut opt = Rmsprop::new(0.05);
        let loss = train_epoch(&mut m, &data, &mut opt, 4, 11).unwrap();
        (m, loss)
    };
    assert_eq!(run(), run());
}

/// Histograms of one synthetic client's benign records under a 6-component mixture.
fn scenario_histograms(seed: u64) -> Matrix<f64> {
    let cfg = SyntheticConfig::new(1, 200, 0.2, 4, 500 + seed);
    let mut ds = generate_synthetic::<f64>(&cfg).unwrap().remove(0);
    ds.samples.retain(|s| !s.label.is_attack());
    let norm = fit_normalizer(&ds.samples).unwrap();
    let samples = norm.apply_all(&ds.samples).unwrap();
    let x = Matrix::from_rows(samples.iter().map(|s| s.features.clone())).unwrap();
    let gmm = fit_em(&x, 6, &EmConfig::default(), seed).unwrap();
    histogram_batch(&x, &gmm).unwrap()
}

/// Paired comparison of RBM pretraining against Glorot init on the same histograms:
/// 30 single-epoch rounds of local training at lr 0.05 from each starting point.
#[test]
fn rbm_initialisation_is_not_worse_than_random() {
    let mut rbm_wins = 0;
    for seed in 0..10 {
        let data = scenario_histograms(seed);
        let arch = Architecture::for_input(data.cols());
        let finish = |mut m: Autoencoder<f64>| {
            let mut opt = Rmsprop::new(0.05);
            let mut loss = 0.0;
            for r in 0..30 {
                loss = train_epoch(&mut m, &data, &mut opt, 16, r).unwrap();
            }
            loss
        };
        let w = init_from_rbms(&data, ModelKind::Vae, arch, &RbmConfig::default(), seed).unwrap();
        let pre = finish(Autoencoder::from_weights(ModelKind::Vae, w).unwrap());
        let rnd = finish(Autoencoder::random(ModelKind::Vae, arch, seed));
        eprintln!("seed {seed}: rbm {pre:.5} random {rnd:.5}");
        if pre <= rnd {
            rbm_wins += 1;
        }
    }
    assert!(rbm_wins >= 7, "RBM init won {rbm_wins}/10");
}

proptest! {
    #[test]
    fn snapshot_round_trip_is_bit_exact(seed in any::<u64>(), k in 1usize..12) {
        let m = Autoencoder::<f64>::random(ModelKind::Vae, Architecture::for_input(k), seed);
        let back = NetworkWeights::<f64>::from_bytes(&m.weights.to_bytes()).unwrap();
        prop_assert_eq!(&back, &m.weights);
        let flat = NetworkWeights::from_flat(&m.weights.shapes(), &m.weights.flatten()).unwrap();
        prop_assert_eq!(&flat, &m.weights);
        let json: NetworkWeights<f64> = serde_json::from_str(&serde_json::to_string(&m.weights).unwrap()).unwrap();
        prop_assert_eq!(json, m.weights);
    }

    #[test]
    fn reconstruction_stays_in_open_unit_interval(seed in any::<u64>(), k in 1usize..10, noise in -3.0f64..3.0) {
        let m = Autoencoder::<f64>::random(ModelKind::Vae, Architecture::for_input(k), seed);
        let h: Vec<f64> = (0..k).map(|j| ((j as u64 ^ seed) % 5) as f64 / 4.0).collect();
        let eps = vec![noise; m.latent_dim()];
        let out = m.forward(&h, Some(&eps)).unwrap();
        prop_assert!(out.reconstruction.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn kl_is_non_negative(mu in prop::collection::vec(-5.0f64..5.0, 1..5), lv in -4.0f64..4.0) {
        let logvar = vec![lv; mu.len()];
        let kl = fedmd_core::neural::kl_to_standard_normal(&mu, &logvar);
        prop_assert!(kl >= -1e-15);
        let zero = vec![0.0; mu.len()];
        prop_assert_eq!(fedmd_core::neural::kl_to_standard_normal(&zero, &zero), 0.0);
    }

    #[test]
    fn reconstruction_error_matches_formula(seed in any::<u64>()) {
        let m = Autoencoder::<f64>::random(ModelKind::Ae, Architecture::for_input(7), seed);
        let h: Vec<f64> = (0..7).map(|j| ((seed >> j) & 1) as f64).collect();
        let out = m.forward(&h, None).unwrap().reconstruction;
        let direct = (h.iter().zip(&out).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / 7.0).sqrt();
        prop_assert!((m.reconstruction_error(&h).unwrap() - direct).abs() < 1e-12);
    }
}
