use mcotype::extension::NormedTarget;
use mcotype::kalton::{build_instance, extension_lower_experiment, holder_check, KaltonOptions};
use mcotype::lp::{min_l1_preimage, solve_lp};
use mcotype::metric::{Euclidean, Metric};
use mcotype::{KaltonInstance, Matrix};
use proptest::prelude::*;
use std::sync::OnceLock;

fn three() -> &'static KaltonInstance {
    static INST: OnceLock<KaltonInstance> = OnceLock::new();
    INST.get_or_init(|| build_instance(3, 1.0, 21, &KaltonOptions::default()).unwrap())
}

/// `|x|_1 / n^(theta/4) + |Q x|_2`, written out directly.
fn reference_norm(inst: &KaltonInstance, x: &[f64]) -> f64 {
    let l1: f64 = x.iter().map(|v| v.abs()).sum();
    let mut l2 = 0.0;
    for r in 0..inst.n {
        let row: f64 = (0..x.len()).map(|k| inst.q[(r, k)] * x[k]).sum();
        l2 += row * row;
    }
    l1 / (inst.n as f64).powf(inst.theta / 4.0) + l2.sqrt()
}

#[test]
fn net_covers_the_half_sphere() {
    let inst = three();
    let mut state = 0x9e3779b97f4a7c15u64;
    let mut gauss = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    for _ in 0..100 {
        let v: Vec<f64> = (0..3).map(|_| gauss()).collect();
        let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let v: Vec<f64> = v.iter().map(|x| 0.5 * x / r).collect();
        let pre = min_l1_preimage(&inst.q, &v).unwrap();
        assert!(pre.norm <= 1.0 + 1e-9, "{}", pre.norm);
        assert!(pre.gap.abs() <= 1e-9 && pre.dual_infeasibility <= 1e-9);
        // primal feasibility of the returned preimage
        let back = inst.q.matvec(&pre.x);
        assert!(back.iter().zip(&v).all(|(a, b)| (a - b).abs() < 1e-9));
    }
}

#[test]
fn net_lies_in_the_unit_ball() {
    let inst = three();
    let origin = vec![0.0; 3];
    for k in 0..inst.net_size() {
        let col: Vec<f64> = (0..3).map(|r| inst.q[(r, k)]).collect();
        assert!(Euclidean::new(3).distance(&col, &origin) <= 1.0 + 1e-12);
    }
}

#[test]
fn sphere_set_is_symmetric_and_separated() {
    let inst = three();
    let sep = 3f64.powf(-0.25);
    for (i, a) in inst.sphere_net.iter().enumerate() {
        assert!((a.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = a.iter().map(|x| -x).collect();
        assert!(inst.index_of(&neg).is_some());
        for b in &inst.sphere_net[..i] {
            assert!(Euclidean::new(3).distance(a, b) > sep);
        }
    }
    assert_eq!(inst.checks.late_additions, 0);
}

#[test]
fn section_is_an_odd_right_inverse() {
    let inst = three();
    for (k, a) in inst.sphere_net.iter().enumerate() {
        let phi = &inst.section[k];
        assert!(phi.iter().map(|v| v.abs()).sum::<f64>() <= 2.0 + 1e-9);
        let qa = inst.q.matvec(phi);
        assert!(qa.iter().zip(a).all(|(u, v)| (u - v).abs() <= 1e-9));
        let neg: Vec<f64> = a.iter().map(|x| -x).collect();
        let j = inst.index_of(&neg).unwrap();
        assert!(inst.section[j].iter().zip(phi).all(|(u, v)| *u == -*v));
    }
}

#[test]
fn holder_constant_stays_bounded() {
    let rep = holder_check(three(), 1.0).unwrap();
    assert!(rep.holds && rep.max_ratio <= rep.bound);
    assert_eq!(rep.bound, 5.0);
    assert!(holder_check(three(), 0.5).is_err());
    let half = build_instance::<f64>(2, 0.5, 3, &KaltonOptions::default()).unwrap();
    let rep = holder_check(&half, 0.5).unwrap();
    assert_eq!(rep.bound, 4.0 + 2f64.sqrt());
    assert!(rep.holds);
}

#[test]
fn small_extension_experiment() {
    let inst = build_instance::<f64>(2, 1.0, 5, &KaltonOptions::default()).unwrap();
    let rep = extension_lower_experiment(&inst, 2, 1, 1e-3).unwrap();
    assert!(rep.ratio >= 1.0 - 1e-9);
    assert!(rep.l_lower <= rep.l_star);
    let big = build_instance::<f64>(
        5,
        1.0,
        5,
        &KaltonOptions {
            max_net: 64,
            ..KaltonOptions::default()
        },
    );
    if let Ok(big) = big {
        assert!(extension_lower_experiment(&big, 1, 1, 1e-3).is_err());
    }
}

#[test]
fn lp_duality_on_a_transport_problem() {
    // two sources, two sinks, costs [[1, 3], [2, 1]], supplies (1, 1), demands (1, 1)
    let a = Matrix::from_rows(&[
        vec![1.0, 1.0, 0.0, 0.0],
        vec![0.0, 0.0, 1.0, 1.0],
        vec![1.0, 0.0, 1.0, 0.0],
        vec![0.0, 1.0, 0.0, 1.0],
    ])
    .unwrap();
    let b = [1.0, 1.0, 1.0, 1.0];
    let sol = solve_lp(&a, &b, &[1.0, 3.0, 2.0, 1.0]).unwrap();
    assert!((sol.objective - 2.0).abs() < 1e-12);
    let dual: f64 = b.iter().zip(&sol.duals).map(|(x, y)| x * y).sum();
    assert!((dual - 2.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn norm_splits_into_its_components(coeffs in proptest::collection::vec(-1.0f64..1.0, 1..12), shift in 0usize..40) {
        let inst = three();
        let mut x = vec![0.0; inst.net_size()];
        for (k, c) in coeffs.iter().enumerate() {
            x[(k * 7 + shift) % inst.net_size()] = *c;
        }
        let expected = reference_norm(inst, &x);
        let p = inst.point(x.clone());
        prop_assert!((p.norm() - expected).abs() <= 1e-9);
        prop_assert!((inst.target().norm(&x) - expected).abs() <= 1e-9);
        let zero = inst.point(vec![0.0; inst.net_size()]);
        prop_assert!((inst.target().distance(&x, &zero.x) - p.sub(&zero).norm()).abs() <= 1e-9);
    }

    #[test]
    fn embedded_sphere_points_keep_their_coordinates(k in 0usize..1000) {
        let inst = three();
        let a = &inst.sphere_net[k % inst.sphere_net.len()];
        let fa = inst.f_theta(a).unwrap();
        prop_assert_eq!(&fa.second, a);
        prop_assert!((fa.norm() - reference_norm(inst, &fa.x)).abs() <= 1e-9);
    }
}
