use fedmd_core::dataio::{generate_synthetic, AttackKind, Label, Sample, SyntheticConfig};
use fedmd_core::matrix::Matrix;
use fedmd_core::preprocess::{shapiro_wilk, shapiro_wilk_columns, smote_tomek, Provenance, DEFAULT_MAX_N};
use fedmd_core::rng::seeded;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn two_class_cloud(benign: usize, attacks: usize, seed: u64) -> Vec<Sample<f64>> {
    let mut rng = seeded(seed);
    let mut out = Vec::new();
    for _ in 0..benign {
        let x: f64 = StandardNormal.sample(&mut rng);
        let y: f64 = StandardNormal.sample(&mut rng);
        out.push(Sample::new(vec![x, y], Label::Benign));
    }
    for _ in 0..attacks {
        let x: f64 = StandardNormal.sample(&mut rng);
        let y: f64 = StandardNormal.sample(&mut rng);
        out.push(Sample::new(vec![x + 2.5, y + 2.5], Label::Attack(AttackKind::Random)));
    }
    out
}

#[test]
fn smote_tomek_balances_a_75_25_client() {
    for seed in 0..5 {
        let input = two_class_cloud(150, 50, seed);
        let set = smote_tomek(&input, 5, seed).unwrap();
        let (benign, attacks) = set.class_counts();
        let ratio = attacks as f64 / benign as f64;
        assert!((0.9..=1.1).contains(&ratio), "seed {seed}: ratio {ratio}");
    }
}

#[test]
fn synthetic_points_lie_on_minority_segments() {
    let input = two_class_cloud(90, 30, 11);
    let set = smote_tomek(&input, 5, 3).unwrap();
    let mut synthetic = 0;
    for (s, p) in set.samples.iter().zip(&set.provenance) {
        match *p {
            Provenance::Original(i) => assert_eq!(s, &input[i]),
            Provenance::Synthetic { base, neighbor, u } => {
                synthetic += 1;
                assert!(input[base].label.is_attack() && input[neighbor].label.is_attack());
                assert_ne!(base, neighbor);
                assert!((0.0..=1.0).contains(&u));
                let (b, n, x) = (&input[base].features, &input[neighbor].features, &s.features);
                let cross = (x[0] - b[0]) * (n[1] - b[1]) - (x[1] - b[1]) * (n[0] - b[0]);
                assert!(cross.abs() < 1e-9, "off-segment point, cross = {cross:e}");
                let inside = (0..2).all(|j| x[j] >= b[j].min(n[j]) - 1e-12 && x[j] <= b[j].max(n[j]) + 1e-12);
                assert!(inside);
            }
        }
    }
    assert!(synthetic > 0);
}

#[test]
fn output_size_accounts_for_additions_and_links() {
    let input = two_class_cloud(60, 20, 5);
    let set = smote_tomek(&input, 3, 5).unwrap();
    assert_eq!(set.synthetic_added, 40);
    assert_eq!(set.samples.len(), input.len() + set.synthetic_added - 2 * set.tomek_links_removed);
    let originals = set.provenance.iter().filter(|p| matches!(p, Provenance::Original(_))).count();
    assert!(originals + 2 * set.tomek_links_removed >= input.len());
}

/// Reference values from scipy.stats.shapiro on the same seeded draws.
#[test]
fn shapiro_wilk_on_seeded_normal_and_uniform_draws() {
    let mut rng = seeded(1);
    let normal: Vec<f64> = (0..500).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut rng = seeded(2);
    let uniform: Vec<f64> = (0..500).map(|_| rng.random::<f64>()).collect();

    let n = shapiro_wilk(&normal, DEFAULT_MAX_N, 0).unwrap();
    assert!(n.p_value > 0.05);
    assert!((n.w_statistic - 0.9958253344135346).abs() < 1e-4);
    assert!((n.p_value - 0.20718171359807963).abs() / 0.20718171359807963 < 1e-2);

    let u = shapiro_wilk(&uniform, DEFAULT_MAX_N, 0).unwrap();
    assert!(u.p_value < 0.05);
    assert!((u.w_statistic - 0.9460604389945997).abs() < 1e-4);
    assert!((u.p_value.ln() - 1.6158281228360027e-12f64.ln()).abs() < 0.05);
}

/// Single-regime synthetic benign traffic is near-Gaussian per feature.
#[test]
fn synthetic_benign_traffic_is_near_gaussian() {
    let mut cfg = SyntheticConfig::new(3, 400, 0.2, 4, 9);
    cfg.min_regimes = 1;
    cfg.max_regimes = 1;
    for ds in generate_synthetic::<f64>(&cfg).unwrap() {
        let benign = ds.feature_matrix(&ds.benign_indices());
        let r = shapiro_wilk_columns(&benign, DEFAULT_MAX_N, 0).unwrap();
        assert!(r.w_statistic > 0.95, "{}: W = {}", ds.client_id, r.w_statistic);
        assert_eq!(r.features_tested, 4);
    }
}

#[test]
fn multi_regime_traffic_is_less_gaussian() {
    let cfg = SyntheticConfig::new(2, 400, 0.2, 4, 9);
    for ds in generate_synthetic::<f64>(&cfg).unwrap() {
        let benign: Matrix<f64> = ds.feature_matrix(&ds.benign_indices());
        let r = shapiro_wilk_columns(&benign, DEFAULT_MAX_N, 0).unwrap();
        assert!(r.w_statistic < 1.0 && r.w_statistic > 0.5);
    }
}

proptest! {
    #[test]
    fn shapiro_ignores_input_order(values in prop::collection::vec(-100.0f64..100.0, 3..60), seed in any::<u64>()) {
        prop_assume!(values.iter().any(|&v| (v - values[0]).abs() > 1e-6));
        let a = shapiro_wilk(&values, DEFAULT_MAX_N, 0).unwrap();
        let mut shuffled = values.clone();
        use rand::seq::SliceRandom;
        shuffled.shuffle(&mut seeded(seed));
        let b = shapiro_wilk(&shuffled, DEFAULT_MAX_N, 0).unwrap();
        prop_assert_eq!(a.w_statistic, b.w_statistic);
        prop_assert_eq!(a.p_value, b.p_value);
        prop_assert!(a.w_statistic <= 1.0 + 1e-12 && (0.0..=1.0).contains(&a.p_value));
    }
}
