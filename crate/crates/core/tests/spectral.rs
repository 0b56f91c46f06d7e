use mcotype::barycenter::LinearMean;
use mcotype::linalg::Matrix;
use mcotype::markov::{cesaro_of, generate, ChainKind, ReversibleChain};
use mcotype::metric::Euclidean;
use mcotype::spectral::{
    absolute_gap_of, gamma_analytic, gamma_ratio, gamma_search, lambda_bound, MarkovOperatorMap,
    SearchOptions,
};
use proptest::prelude::*;

#[test]
fn odd_cycle_gap_matches_closed_form() {
    for n in [3usize, 5, 7, 9] {
        let chain = generate::<f64>(ChainKind::Cycle, n, 0).unwrap();
        let expected = 1.0 / (1.0 - (std::f64::consts::PI / n as f64).cos());
        let got = gamma_analytic(chain.a(), &Euclidean::new(1), 2.0)
            .unwrap()
            .value;
        assert!(
            (got - expected).abs() < 1e-9 * expected,
            "n={n}: {got} vs {expected}"
        );
    }
}

#[test]
fn even_cycle_is_bipartite() {
    let chain = generate::<f64>(ChainKind::Cycle, 6, 0).unwrap();
    assert!(gamma_analytic(chain.a(), &Euclidean::new(1), 2.0)
        .unwrap()
        .value
        .is_infinite());
}

#[test]
fn complete_chain_search_reaches_one() {
    let chain = generate::<f64>(ChainKind::Complete, 4, 0).unwrap();
    let opts = SearchOptions {
        restarts: 20,
        moves_per_point: 100,
        seed: 1,
    };
    let found = gamma_search(chain.a(), &Euclidean::new(2), 2.0, &opts).unwrap();
    assert!((found.value - 1.0).abs() < 1e-9);
    let (x, y) = found.witness.unwrap();
    assert_eq!(
        gamma_ratio(chain.a(), &Euclidean::new(2), 2.0, &x, &y).unwrap(),
        found.value
    );
}

#[test]
fn analytic_mode_rejects_non_euclidean_exponents() {
    let chain = generate::<f64>(ChainKind::Complete, 3, 0).unwrap();
    assert!(gamma_analytic(chain.a(), &Euclidean::new(1), 1.0).is_err());
}

#[test]
fn lambda_bound_at_k_one() {
    let g: f64 = 3.0;
    let b = lambda_bound(g, 1.0, 2.0).unwrap();
    assert!((b - ((g - 1.0) / (g + 1.0)).sqrt()).abs() < 1e-12);
}

fn weights(n: usize, seed: u64) -> Matrix<f64> {
    let mut w = Matrix::zeros(n, n);
    let mut s = seed;
    for i in 0..n {
        for j in 0..=i {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            let v = 0.05 + (s >> 11) as f64 / (1u64 << 53) as f64;
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    w
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weighted_walks_are_reversible(n in 2usize..8, seed in any::<u64>()) {
        let chain = ReversibleChain::from_weights(&weights(n, seed)).unwrap();
        let (a, pi) = (chain.a(), chain.pi());
        prop_assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..n {
            prop_assert!((a.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for j in 0..n {
                prop_assert!((pi[i] * a[(i, j)] - pi[j] * a[(j, i)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cesaro_average_is_stochastic_and_keeps_the_gap(n in 2usize..8, seed in any::<u64>(), t in 1usize..8) {
        let chain = generate::<f64>(ChainKind::RandomSymmetric, n, seed).unwrap();
        let c = cesaro_of(chain.a(), t).unwrap();
        for i in 0..n {
            prop_assert!((c.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let lambda = absolute_gap_of(&c).unwrap();
        prop_assert!((0.0..=1.0).contains(&lambda));
    }

    #[test]
    fn fixed_configurations_stay_below_the_analytic_gap(n in 2usize..7, seed in any::<u64>(), pts in proptest::collection::vec(-1.0f64..1.0, 24)) {
        let chain = generate::<f64>(ChainKind::RandomSymmetric, n, seed).unwrap();
        let g = gamma_analytic(chain.a(), &Euclidean::new(2), 2.0).unwrap().value;
        let x: Vec<Vec<f64>> = (0..n).map(|i| vec![pts[2 * i], pts[2 * i + 1]]).collect();
        let y: Vec<Vec<f64>> = (0..n).map(|i| vec![pts[12 + 2 * i], pts[13 + 2 * i]]).collect();
        let r = gamma_ratio(chain.a(), &Euclidean::new(2), 2.0, &x, &y).unwrap();
        prop_assert!(r <= g * (1.0 + 1e-9) + 1e-9);
    }

    #[test]
    fn averaging_operator_contracts(n in 2usize..7, seed in any::<u64>(), pts in proptest::collection::vec(-1.0f64..1.0, 14)) {
        let chain = generate::<f64>(ChainKind::RandomSymmetric, n, seed).unwrap();
        let g = gamma_analytic(chain.a(), &Euclidean::new(2), 2.0).unwrap().value;
        let op = MarkovOperatorMap::new(chain.a().clone(), LinearMean::euclidean(2)).unwrap();
        let f: Vec<Vec<f64>> = (0..n).map(|i| vec![pts[2 * i], pts[2 * i + 1]]).collect();
        let r = op.contraction_ratio(&f, 2.0).unwrap();
        prop_assert!(r <= lambda_bound(g, 1.0, 2.0).unwrap() + 1e-9);
    }
}
