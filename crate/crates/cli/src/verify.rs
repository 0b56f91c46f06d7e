//! The invariant suite behind `mcotype verify`.

use mcotype::barycenter::{check_barycentric, KarcherMean, LinearMean, TreeBarycenter};
use mcotype::cotype::{
    cotype_construct, domination_report, path_cotype_experiment, pisier_check, random_martingale,
    TRule,
};
use mcotype::extension::{
    build_h_certificate, mcshane_extend, min_lipschitz_extension, round_to_net, ExtensionInstance,
    HOptions,
};
use mcotype::kalton::{build_instance, holder_check, KaltonOptions};
use mcotype::linalg::Matrix;
use mcotype::markov::{generate, ChainKind, ReversibleChain};
use mcotype::metric::{
    validate_metric, Euclidean, HyperbolicDisk, LpSpace, Metric, Sampling, TreeSpace,
};
use mcotype::spectral::{
    gamma_analytic, gamma_search, lambda_bound, MarkovOperatorMap, SearchOptions,
};
use mcotype::transport::{wasserstein, DiscreteMeasure};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::report::{float, Check, Outcome, Report};

type Verdict = mcotype::Result<(bool, String)>;

fn point(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    Euclidean::new(dim).sample_point(rng)
}

fn kind(rng: &mut ChaCha8Rng) -> ChainKind {
    [
        ChainKind::PathHolding,
        ChainKind::Cycle,
        ChainKind::RandomSymmetric,
        ChainKind::RandomReversible,
    ][rng.gen_range(0..4)]
}

fn triangle(seed: u64, _slack: f64) -> Verdict {
    let mut bad = 0;
    bad += validate_metric::<f64, _>(&Euclidean::new(3), 300, seed)?
        .violations
        .len();
    bad += validate_metric::<f64, _>(&LpSpace::new(3, 3.0)?, 300, seed)?
        .violations
        .len();
    bad += validate_metric::<f64, _>(&TreeSpace::<f64>::path(7), 300, seed)?
        .violations
        .len();
    bad += validate_metric::<f64, _>(&HyperbolicDisk::default(), 300, seed)?
        .violations
        .len();
    Ok((bad == 0, format!("{bad} violations")))
}

fn barycentric(seed: u64, slack: f64) -> Verdict {
    let e = check_barycentric::<f64, _>(&LinearMean::euclidean(2), 100, seed)?;
    let h = check_barycentric::<f64, _>(&KarcherMean::default(), 50, seed)?;
    let t = check_barycentric::<f64, _>(&TreeBarycenter::new(TreeSpace::<f64>::path(5)), 50, seed)?;
    let worst = e
        .worst_p_residual
        .max(h.worst_p_residual)
        .max(t.worst_p_residual);
    Ok((worst <= slack, format!("largest residual {worst:e}")))
}

fn transport(seed: u64, _slack: f64) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let space = Euclidean::new(2);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let (a, b) = (point(&mut rng, 2), point(&mut rng, 2));
        let d = space.distance(&a, &b);
        let w = wasserstein(
            &space,
            &DiscreteMeasure::dirac(a),
            &DiscreteMeasure::dirac(b),
            2.0,
        )?
        .value;
        worst = worst.max((w - d).abs());
    }
    Ok((
        worst <= 1e-12,
        format!("largest |W_2 - d| on point masses {worst:e}"),
    ))
}

fn reversibility(seed: u64, _slack: f64) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..20 {
        let n = rng.gen_range(2..9);
        let chain = generate::<f64>(kind(&mut rng), n, rng.gen())?;
        ReversibleChain::<f64>::from_spec(&chain.to_spec())?;
    }
    Ok((true, "20 generated chains round-trip".into()))
}

fn search_vs_analytic(seed: u64, _slack: f64) -> Verdict {
    let line = Euclidean::new(1);
    let mut worst = 1.0f64;
    for n in [3usize, 5, 7] {
        let chain = generate::<f64>(ChainKind::RandomSymmetric, n, seed + n as u64)?;
        let g = gamma_analytic(chain.a(), &line, 2.0)?.value;
        if g.is_infinite() {
            continue;
        }
        let s = gamma_search(
            chain.a(),
            &line,
            2.0,
            &SearchOptions {
                restarts: 40,
                moves_per_point: 200,
                seed,
            },
        )?
        .value;
        if s > g + 1e-6 {
            return Ok((false, format!("search {s} above analytic {g}")));
        }
        worst = worst.min(s / g);
    }
    Ok((
        worst >= 0.95,
        format!("search reaches {:.4} of the analytic value", worst),
    ))
}

fn contraction(seed: u64, _slack: f64) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let n = rng.gen_range(2..7);
        let chain = generate::<f64>(ChainKind::RandomSymmetric, n, rng.gen())?;
        let g = gamma_analytic(chain.a(), &Euclidean::new(2), 2.0)?.value;
        let bound = lambda_bound(g, 1.0, 2.0)?;
        let op = MarkovOperatorMap::new(chain.a().clone(), LinearMean::euclidean(2))?;
        for _ in 0..20 {
            let f: Vec<Vec<f64>> = (0..n).map(|_| point(&mut rng, 2)).collect();
            worst = worst.max(op.contraction_ratio(&f, 2.0)? - bound);
        }
    }
    Ok((
        worst <= 1e-6,
        format!("largest excess over the bound {worst:e}"),
    ))
}

fn cotype_bound(seed: u64, slack: f64) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.gen_range(2..9);
        let chain = generate::<f64>(kind(&mut rng), n, rng.gen())?;
        let x: Vec<Vec<f64>> = (0..n).map(|_| point(&mut rng, 3)).collect();
        worst = worst.max(
            cotype_construct(&chain, &LinearMean::euclidean(3), &x, rng.gen_range(1..9))?.ratio,
        );
    }
    Ok((worst <= 17.0 + slack, format!("largest ratio {worst:.4}")))
}

fn pisier(seed: u64, slack: f64) -> Verdict {
    let mut worst = f64::NEG_INFINITY;
    let map = LinearMean::euclidean(2);
    for k in 0..20 {
        let inst = random_martingale(&map, 10, 3, seed + k)?;
        inst.check_martingale(&map, 1e-9)?;
        worst = worst.max(pisier_check(&map, &inst, &vec![0.1, -0.2], 2.0, 1.0)?);
    }
    Ok((worst <= slack, format!("largest residual {worst:e}")))
}

fn domination(seed: u64, _slack: f64) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..60 {
        let n = rng.gen_range(2..9);
        let chain = generate::<f64>(kind(&mut rng), n, rng.gen())?;
        let x: Vec<Vec<f64>> = (0..n).map(|_| point(&mut rng, 2)).collect();
        let p = [1.0, 2.0, 3.0][rng.gen_range(0..3)];
        let rep = domination_report(&chain, &Euclidean::new(2), &x, rng.gen_range(1..11), p)?;
        if !rep.cesaro_domination_holds {
            return Ok((false, format!("ratio {} at p = {p}", rep.pow_over_ces)));
        }
    }
    Ok((true, "60 configurations".into()))
}

fn rounding(seed: u64, _slack: f64) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..50 {
        let (n, m) = (rng.gen_range(1..6), rng.gen_range(1..6));
        let mut b = Matrix::from_fn(n, m, |_, _| rng.gen_range(0.0..1.0));
        b.renormalize_rows();
        let mut w = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = rng.gen_range(0.05..1.0);
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
        let chain = ReversibleChain::from_weights(&w)?;
        let z: Vec<Vec<f64>> = (0..m).map(|_| point(&mut rng, 3)).collect();
        round_to_net(
            &Euclidean::new(3),
            &z,
            &b,
            chain.a(),
            chain.pi(),
            [1.0, 2.0, 4.0][rng.gen_range(0..3)],
        )?;
    }
    Ok((true, "50 instances within the 3^p bound".into()))
}

fn hcert(seed: u64, _slack: f64) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plane = Euclidean::new(2);
    for _ in 0..20 {
        let pts: Vec<Vec<f64>> = (0..6).map(|_| point(&mut rng, 2)).collect();
        let vals: Vec<Vec<f64>> = (0..3).map(|_| point(&mut rng, 2)).collect();
        let inst = ExtensionInstance::new(&plane, &plane, pts, vec![0, 1, 2], vals)?;
        let mut h = Matrix::zeros(6, 6);
        for i in 0..6 {
            for j in 0..i {
                let v = rng.gen_range(0.0..1.0);
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        let opts = HOptions {
            p: 2.0,
            m_const: 1.0,
            n_const: 17f64.sqrt(),
            t: None,
            delta: None,
        };
        let cert = build_h_certificate(&plane, &LinearMean::euclidean(2), &inst, &h, opts)?;
        if !cert.holds {
            return Ok((false, format!("L_H = {} above the bound", cert.lhs)));
        }
    }
    Ok((true, "20 random weight matrices".into()))
}

fn mcshane(seed: u64, _slack: f64) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (plane, line) = (Euclidean::new(2), Euclidean::new(1));
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let pts: Vec<Vec<f64>> = (0..7).map(|_| point(&mut rng, 2)).collect();
        let vals: Vec<Vec<f64>> = (0..3).map(|_| vec![rng.gen_range(-1.0..1.0)]).collect();
        let inst = ExtensionInstance::new(&plane, &line, pts, vec![0, 1, 2], vals)?;
        let mc = mcshane_extend(&plane, &inst)?;
        let mut lip = 0.0f64;
        for i in 0..7 {
            for j in 0..i {
                lip = lip.max(
                    (mc[i] - mc[j]).abs() / plane.distance(&inst.points()[i], &inst.points()[j]),
                );
            }
        }
        let sol = min_lipschitz_extension(&plane, &line, &inst, 1e-4)?;
        worst = worst.max((sol.l_star - lip).abs() / (1.0 + sol.l_star));
    }
    Ok((worst <= 1e-4, format!("largest relative gap {worst:e}")))
}

fn kalton(seed: u64, _slack: f64) -> Verdict {
    let inst = build_instance::<f64>(2, 1.0, seed, &KaltonOptions::default())?;
    let c = &inst.checks;
    let holder = holder_check(&inst, 1.0)?;
    let ok = c.worst_covering_norm <= 1.0 + 1e-9
        && c.worst_section_residual <= 1e-9
        && c.min_pair_distance > c.separation
        && holder.holds;
    Ok((
        ok,
        format!(
            "covering {:.4}, Holder {:.4}",
            c.worst_covering_norm, holder.max_ratio
        ),
    ))
}

fn counterexample(_seed: u64, _slack: f64) -> Verdict {
    let ratios = [8usize, 16, 32]
        .iter()
        .map(|&n| path_cotype_experiment(n, 1.0f64, TRule::default()).map(|e| e.ratio_lower))
        .collect::<mcotype::Result<Vec<_>>>()?;
    Ok((
        ratios.windows(2).all(|w| w[1] > w[0]),
        format!("{ratios:?}"),
    ))
}

type Invariant = fn(u64, f64) -> Verdict;

pub const INVARIANTS: [(&str, Invariant); 15] = [
    ("metric.triangle", triangle),
    ("barycenter.p_inequality", barycentric),
    ("transport.point_masses", transport),
    ("markov.reversible_roundtrip", reversibility),
    ("spectral.search_vs_analytic", search_vs_analytic),
    ("spectral.contraction", contraction),
    ("cotype.bound", cotype_bound),
    ("cotype.pisier", pisier),
    ("cotype.domination", domination),
    ("extension.rounding", rounding),
    ("extension.hcert", hcert),
    ("extension.mcshane", mcshane),
    ("kalton.instance", kalton),
    ("cotype.counterexample_growth", counterexample),
    ("markov.generators", |seed, _| {
        let chain = generate::<f64>(ChainKind::Cycle, 2, seed)?;
        let g = gamma_analytic(chain.a(), &Euclidean::new(1), 2.0)?.value;
        Ok((g.is_infinite(), format!("two-state cycle gap {g}")))
    }),
];

pub fn verify(seed: u64, slack: f64) -> Outcome<Report> {
    let checks: Vec<Check> = INVARIANTS
        .par_iter()
        .map(|(id, f)| match f(seed, slack) {
            Ok((ok, detail)) => Check::new(*id, ok, detail),
            Err(e) => Check::new(*id, false, e.to_string()),
        })
        .collect();
    let mut r = Report::new("verify", json!({"slack": float(slack)}));
    r.metric("invariants", json!(checks.len()));
    r.metric("failed", json!(checks.iter().filter(|c| !c.passed).count()));
    r.result = json!({ "invariants": checks.iter().map(|c| c.id.clone()).collect::<Vec<_>>() });
    r.checks = checks;
    Ok(r)
}
