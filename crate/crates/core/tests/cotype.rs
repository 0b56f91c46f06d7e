use mcotype::barycenter::{KarcherMean, LinearMean};
use mcotype::cotype::{
    ball_cotype_certificate, cotype_construct, domination_report, dp_martingale,
    path_cotype_experiment, path_lhs, pisier_check, random_martingale, TRule,
};
use mcotype::markov::{generate, ChainKind};
use mcotype::metric::{Euclidean, HyperbolicDisk, Metric};
use mcotype::{CotypeCertificate, Error};
use proptest::prelude::*;

fn kind_of(k: u8) -> ChainKind {
    match k % 4 {
        0 => ChainKind::PathHolding,
        1 => ChainKind::Cycle,
        2 => ChainKind::RandomSymmetric,
        _ => ChainKind::RandomReversible,
    }
}

fn planar(coords: &[f64], n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| vec![coords[2 * i], coords[2 * i + 1]])
        .collect()
}

#[test]
fn constant_configuration_is_trivial() {
    let chain = generate::<f64>(ChainKind::Cycle, 5, 0).unwrap();
    let x = vec![vec![0.3, -0.2]; 5];
    let cert = cotype_construct(&chain, &LinearMean::euclidean(2), &x, 4).unwrap();
    assert_eq!(cert.lhs, 0.0);
    assert_eq!(cert.ratio, 1.0);
}

#[test]
fn two_point_line_by_hand() {
    // x = (0, 1) on the complete chain: the Cesaro average still mixes both states
    let chain = generate::<f64>(ChainKind::Complete, 2, 0).unwrap();
    let x = vec![vec![0.0], vec![1.0]];
    let cert =
        CotypeCertificate::evaluate(&chain, &Euclidean::new(1), x.clone(), x, 1, 2.0).unwrap();
    assert_eq!(cert.lhs, 0.0 + 0.5);
    assert_eq!(cert.rhs_base, 0.5);
    assert_eq!(cert.ratio, 1.0);
}

#[test]
fn stored_ratio_recomputes() {
    let chain = generate::<f64>(ChainKind::RandomReversible, 6, 3).unwrap();
    let x: Vec<Vec<f64>> = (0..6)
        .map(|i| vec![i as f64, (i * i) as f64 / 7.0])
        .collect();
    let cert = cotype_construct(&chain, &LinearMean::euclidean(2), &x, 5).unwrap();
    let again = cert.recompute(&Euclidean::new(2)).unwrap();
    assert!((again - cert.ratio).abs() <= 1e-12 * cert.ratio.max(1.0));
    assert!(cert.within_bound(1e-8));
}

#[test]
fn hyperbolic_dynamic_program_is_a_martingale() {
    let chain = generate::<f64>(ChainKind::RandomSymmetric, 4, 9).unwrap();
    let map = KarcherMean::default();
    let x = vec![
        vec![0.1, 0.2],
        vec![-0.4, 0.0],
        vec![0.0, 0.6],
        vec![0.3, -0.3],
    ];
    let inst = dp_martingale(&chain, &map, &x, 3, 2).unwrap();
    inst.check_martingale(&map, 1e-9).unwrap();
    assert!(pisier_check(&map, &inst, &x[2], 2.0, 1.0).unwrap() <= 1e-8);
}

#[test]
fn displaced_atom_is_detected() {
    let map = LinearMean::euclidean(2);
    let mut inst = random_martingale(&map, 12, 3, 5).unwrap();
    let atom = inst.filtration()[2].atoms()[0].clone();
    for w in atom {
        inst.values_mut(2)[w][1] -= 0.5;
    }
    assert!(matches!(
        inst.check_martingale(&map, 1e-9),
        Err(Error::NotMartingale { .. })
    ));
}

#[test]
fn path_experiment_bounds_are_consistent() {
    let exp = path_cotype_experiment(16, 1.0f64, TRule::default()).unwrap();
    assert!(exp.lhs_lower <= exp.lhs_upper * (1.0 + 1e-9));
    assert!((path_lhs(&exp.y, exp.t, 1.0) - exp.lhs_upper).abs() < 1e-9);
    assert!(path_cotype_experiment(1, 1.0f64, TRule::default()).is_err());
    assert!(path_cotype_experiment(8, 2.0f64, TRule::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn linear_mean_certificates_obey_the_bound(
        n in 2usize..9, t in 1usize..9, kind in any::<u8>(), seed in any::<u64>(),
        coords in proptest::collection::vec(-2.0f64..2.0, 16),
    ) {
        let chain = generate::<f64>(kind_of(kind), n, seed).unwrap();
        let cert = cotype_construct(&chain, &LinearMean::euclidean(2), &planar(&coords, n), t).unwrap();
        prop_assert!(cert.ratio <= 17.0 + 1e-8);
        prop_assert_eq!(cert.bound, Some(17.0));
    }

    #[test]
    fn hyperbolic_certificates_obey_the_bound(n in 2usize..6, t in 1usize..5, seed in any::<u64>(), coords in proptest::collection::vec(-0.6f64..0.6, 10)) {
        let chain = generate::<f64>(ChainKind::RandomSymmetric, n, seed).unwrap();
        let cert = cotype_construct(&chain, &KarcherMean::default(), &planar(&coords, n), t).unwrap();
        prop_assert!(cert.within_bound(1e-8));
    }

    #[test]
    fn powers_are_dominated_by_averages(
        n in 2usize..9, t in 1usize..11, kind in any::<u8>(), seed in any::<u64>(), p in 1.0f64..3.0,
        coords in proptest::collection::vec(-1.0f64..1.0, 16),
    ) {
        let chain = generate::<f64>(kind_of(kind), n, seed).unwrap();
        let rep = domination_report(&chain, &Euclidean::new(2), &planar(&coords, n), t, p).unwrap();
        prop_assert!(rep.cesaro_domination_holds);
        prop_assert!(rep.e_pow <= 2f64.powf(p) * rep.e_ces * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn green_form_sides_are_nonnegative(n in 2usize..7, t in 2usize..6, seed in any::<u64>(), coords in proptest::collection::vec(-1.0f64..1.0, 24)) {
        let chain = generate::<f64>(ChainKind::RandomReversible, n, seed).unwrap();
        let (x, y) = (planar(&coords[..12], n), planar(&coords[12..], n));
        let (lhs, rhs) = ball_cotype_certificate(&chain, &Euclidean::new(2), &x, &y, t, 2.0).unwrap();
        prop_assert!(lhs >= 0.0 && rhs >= 0.0);
        let (lhs_same, _) = ball_cotype_certificate(&chain, &Euclidean::new(2), &x, &x, t, 2.0).unwrap();
        let spread: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| chain.pi()[i] * chain.a()[(i, j)] * Euclidean::new(2).distance(&x[i], &x[j]).powi(2)).sum();
        prop_assert!((lhs_same - (t - 1) as f64 * spread).abs() < 1e-10);
    }

    #[test]
    fn random_martingales_satisfy_the_pisier_inequality(size in 1usize..20, steps in 1usize..5, seed in any::<u64>(), z in proptest::collection::vec(-1.0f64..1.0, 2)) {
        let map = LinearMean::euclidean(2);
        let inst = random_martingale(&map, size, steps, seed).unwrap();
        inst.check_martingale(&map, 1e-9).unwrap();
        prop_assert!(pisier_check(&map, &inst, &z, 2.0, 1.0).unwrap() <= 1e-8);
    }

    #[test]
    fn hyperbolic_displacement_is_detected(size in 2usize..12, seed in any::<u64>()) {
        let map = KarcherMean::default();
        let disk = HyperbolicDisk::default();
        let mut inst = random_martingale(&map, size, 2, seed).unwrap();
        let atom = inst.filtration()[1].atoms()[0].clone();
        for w in atom {
            let moved = disk.exp(&inst.values()[1][w], &[0.0, 0.4]);
            inst.values_mut(1)[w] = moved;
        }
        prop_assert!(inst.check_martingale(&map, 1e-9).is_err());
    }

    #[test]
    fn path_lower_bound_is_below_any_candidate(n in 2usize..24, p in 0.3f64..1.9, shift in -2.0f64..2.0) {
        let exp = path_cotype_experiment(n, p, TRule::default()).unwrap();
        let identity: Vec<f64> = (1..=n).map(|i| i as f64).collect();
        let flat = vec![(n as f64 + 1.0) / 2.0 + shift; n];
        prop_assert!(exp.lhs_lower <= path_lhs(&identity, exp.t, p) * (1.0 + 1e-9) + 1e-12);
        prop_assert!(exp.lhs_lower <= path_lhs(&flat, exp.t, p) * (1.0 + 1e-9) + 1e-12);
        prop_assert!(exp.ratio_lower <= exp.ratio_upper * (1.0 + 1e-9));
    }
}
