//! Acceptance suite: one line per criterion, nonzero exit status if any criterion fails.

use std::time::{Duration, Instant};

use mcotype::barycenter::{KarcherMean, LinearMean};
use mcotype::cotype::{
    cotype_construct, domination_report, dp_martingale, path_cotype_experiment, pisier_check,
    random_martingale, TRule,
};
use mcotype::extension::{
    build_h_certificate, mcshane_extend, min_lipschitz_extension, round_to_net, ExtensionInstance,
    HOptions,
};
use mcotype::kalton::{build_instance, holder_check, KaltonOptions};
use mcotype::linalg::Matrix;
use mcotype::lp::min_l1_preimage;
use mcotype::markov::{cesaro_of, generate, ChainKind, ReversibleChain};
use mcotype::metric::{Euclidean, HyperbolicDisk, Metric, Sampling};
use mcotype::spectral::{
    gamma_analytic, gamma_ratio, gamma_search, lambda_bound, MarkovOperatorMap, SearchOptions,
};
use mcotype::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ball(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> Vec<f64> {
    Euclidean::new(dim)
        .sample_point(rng)
        .into_iter()
        .map(|x: f64| x * radius)
        .collect()
}

fn random_chain(rng: &mut ChaCha8Rng, n: usize) -> ReversibleChain<f64> {
    let kind = match rng.gen_range(0..4) {
        0 => ChainKind::PathHolding,
        1 => ChainKind::Cycle,
        2 => ChainKind::RandomSymmetric,
        _ => ChainKind::RandomReversible,
    };
    generate(kind, n, rng.gen()).expect("generator accepts n >= 2")
}

fn cotype_bound_criterion() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let start = Instant::now();
    let mut worst = 0.0f64;
    let trials = 240;
    for _ in 0..trials {
        let n = rng.gen_range(2..=10);
        let t = rng.gen_range(1..=10);
        let d = rng.gen_range(1..=5);
        let chain = random_chain(&mut rng, n);
        let x: Vec<Vec<f64>> = (0..n).map(|_| ball(&mut rng, d, 3.0)).collect();
        let cert = cotype_construct(&chain, &LinearMean::euclidean(d), &x, t)
            .map_err(|e| e.to_string())?;
        worst = worst.max(cert.ratio);
        if cert.ratio > 17.0 + 1e-8 {
            return Err(format!("ratio {} on n={n}, t={t}, d={d}", cert.ratio));
        }
    }
    let elapsed = start.elapsed();
    if elapsed > Duration::from_secs(60) {
        return Err(format!("took {elapsed:?}"));
    }
    Ok(format!(
        "{trials} instances, worst ratio {worst:.4} <= 17, {elapsed:.2?}"
    ))
}

fn gamma_oracle_criterion() -> Outcome {
    let line = Euclidean::new(1);
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst_gap = 0.0f64;
    let mut checked = 0;
    for n in 2..=8 {
        for kind in [
            ChainKind::RandomSymmetric,
            ChainKind::Complete,
            ChainKind::PathHolding,
        ] {
            let chain = generate::<f64>(kind, n, 7 + n as u64).map_err(|e| e.to_string())?;
            let analytic = gamma_analytic(chain.a(), &line, 2.0)
                .map_err(|e| e.to_string())?
                .value;
            if analytic.is_infinite() {
                continue;
            }
            let opts = SearchOptions {
                restarts: 200,
                moves_per_point: 200,
                seed: n as u64,
            };
            let found = gamma_search(chain.a(), &line, 2.0, &opts)
                .map_err(|e| e.to_string())?
                .value;
            let rel = (analytic - found) / analytic;
            worst_gap = worst_gap.max(rel);
            if rel > 0.05 || found > analytic + 1e-6 {
                return Err(format!(
                    "{kind:?} n={n}: search {found} vs analytic {analytic}"
                ));
            }
            for _ in 0..100 {
                let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(-1.0..1.0)]).collect();
                let y: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(-1.0..1.0)]).collect();
                let r = gamma_ratio(chain.a(), &line, 2.0, &x, &y).map_err(|e| e.to_string())?;
                if r > analytic + 1e-6 {
                    return Err(format!(
                        "fixed configuration ratio {r} above analytic {analytic}"
                    ));
                }
            }
            checked += 1;
        }
    }
    Ok(format!(
        "{checked} chains, search within {:.3}% of analytic, fixed ratios below analytic",
        100.0 * worst_gap
    ))
}

fn spectral_calculus_criterion() -> Outcome {
    let space = Euclidean::new(2);
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    for k in 0..50 {
        let n = rng.gen_range(2..=10);
        let chain =
            generate::<f64>(ChainKind::RandomSymmetric, n, 1000 + k).map_err(|e| e.to_string())?;
        let g = gamma_analytic(chain.a(), &space, 2.0)
            .map_err(|e| e.to_string())?
            .value;
        for t in [1usize, 2, 4, 8] {
            let ces = cesaro_of(chain.a(), t).map_err(|e| e.to_string())?;
            let gc = gamma_analytic(&ces, &space, 2.0)
                .map_err(|e| e.to_string())?
                .value;
            let c = gc / (g / t as f64).max(1.0);
            worst = worst.max(c);
            if c > 20.0 {
                return Err(format!("implied constant {c} for n={n}, t={t}"));
            }
        }
    }
    Ok(format!(
        "200 (chain, t) pairs, largest implied constant {worst:.4} <= 20"
    ))
}

fn displace_euclidean(p: &mut Vec<f64>) {
    p[0] += 0.25;
}

fn pisier_criterion() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let euclid = LinearMean::euclidean(2);
    let karcher = KarcherMean::default();
    let disk = HyperbolicDisk::default();
    let mut worst = f64::NEG_INFINITY;
    let (mut valid, mut mutants, mut caught) = (0, 0, 0);
    let mutate = |inst: &mut mcotype::cotype::MartingaleInstance<Vec<f64>, f64>,
                  rng: &mut ChaCha8Rng,
                  hyperbolic: bool| {
        let s = rng.gen_range(1..=inst.steps());
        let atoms = inst.filtration()[s].atoms().to_vec();
        let atom = &atoms[rng.gen_range(0..atoms.len())];
        let values = inst.values_mut(s);
        for &w in atom {
            if hyperbolic {
                values[w] = disk.exp(&values[w], &[0.3, 0.0]);
            } else {
                displace_euclidean(&mut values[w]);
            }
        }
    };
    for k in 0..60u64 {
        let size = rng.gen_range(2..=24);
        let steps = rng.gen_range(1..=4);
        let hyperbolic = k % 2 == 1;
        let mut inst = if hyperbolic {
            random_martingale(&karcher, size, steps, k)
        } else {
            random_martingale(&euclid, size, steps, k)
        }
        .map_err(|e| e.to_string())?;
        let z: Vec<f64> = if hyperbolic {
            disk.sample_point(&mut rng)
        } else {
            ball(&mut rng, 2, 1.0)
        };
        let r = if hyperbolic {
            pisier_check(&karcher, &inst, &z, 2.0, 1.0)
        } else {
            pisier_check(&euclid, &inst, &z, 2.0, 1.0)
        }
        .map_err(|e| e.to_string())?;
        worst = worst.max(r);
        valid += 1;
        mutate(&mut inst, &mut rng, hyperbolic);
        mutants += 1;
        let detected = if hyperbolic {
            inst.check_martingale(&karcher, 1e-9)
        } else {
            inst.check_martingale(&euclid, 1e-9)
        };
        if matches!(detected, Err(Error::NotMartingale { .. })) {
            caught += 1;
        }
    }
    for k in 0..20u64 {
        let n = 3;
        let t = 3;
        let chain = random_chain(&mut rng, n);
        let hyperbolic = k % 2 == 0;
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                if hyperbolic {
                    disk.sample_point(&mut rng)
                } else {
                    ball(&mut rng, 2, 1.0)
                }
            })
            .collect();
        let start = rng.gen_range(0..n);
        let r = if hyperbolic {
            let inst = dp_martingale(&chain, &karcher, &x, t, start).map_err(|e| e.to_string())?;
            pisier_check(&karcher, &inst, &x[start], 2.0, 1.0)
        } else {
            let inst = dp_martingale(&chain, &euclid, &x, t, start).map_err(|e| e.to_string())?;
            pisier_check(&euclid, &inst, &x[start], 2.0, 1.0)
        }
        .map_err(|e| e.to_string())?;
        worst = worst.max(r);
        valid += 1;
    }
    if worst > 1e-8 {
        return Err(format!("largest residual {worst:e}"));
    }
    if caught != mutants {
        return Err(format!("only {caught} of {mutants} mutants detected"));
    }
    Ok(format!("{valid} valid instances, largest residual {worst:.3e}; {caught}/{mutants} mutants detected"))
}

fn rounding_criterion() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst = 0.0f64;
    for k in 0..500 {
        let n = rng.gen_range(1..=6);
        let m = rng.gen_range(1..=6);
        let p = [1.0, 2.0, 4.0][k % 3];
        let mut b = Matrix::from_fn(n, m, |_, _| {
            rng.gen_range(0.0..1.0) * if rng.gen_bool(0.3) { 0.0 } else { 1.0 }
        });
        for i in 0..n {
            b[(i, rng.gen_range(0..m))] += 0.1;
        }
        b.renormalize_rows();
        let mut w = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = rng.gen_range(0.01..1.0);
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
        let chain = ReversibleChain::from_weights(&w).map_err(|e| e.to_string())?;
        let c = if k % 2 == 0 {
            chain.a().clone()
        } else {
            chain
                .cesaro(rng.gen_range(1..=6))
                .map_err(|e| e.to_string())?
        };
        let z: Vec<Vec<f64>> = (0..m).map(|_| ball(&mut rng, 3, 2.0)).collect();
        let (_, rep) = round_to_net(&Euclidean::new(3), &z, &b, &c, chain.pi(), p)
            .map_err(|e| format!("instance {k}: {e}"))?;
        if rep.bound > 0.0 {
            worst = worst.max(rep.near.max(rep.spread) / rep.bound);
        }
    }
    Ok(format!(
        "500 instances, largest energy / (3^p bound) = {worst:.4}"
    ))
}

fn domination_criterion() -> Outcome {
    let mut count = 0;
    let mut worst = 0.0f64;
    for n in 2..=10 {
        for (kk, kind) in [
            ChainKind::PathHolding,
            ChainKind::Cycle,
            ChainKind::RandomSymmetric,
            ChainKind::RandomReversible,
        ]
        .into_iter()
        .enumerate()
        {
            let chain =
                generate::<f64>(kind, n, (n * 10 + kk) as u64).map_err(|e| e.to_string())?;
            let mut rng = ChaCha8Rng::seed_from_u64((n * 10 + kk) as u64);
            let x: Vec<Vec<f64>> = (0..n).map(|_| ball(&mut rng, 2, 1.0)).collect();
            for t in 1..=10 {
                for p in [1.0, 2.0, 3.0] {
                    let rep = domination_report(&chain, &Euclidean::new(2), &x, t, p)
                        .map_err(|e| e.to_string())?;
                    if !rep.cesaro_domination_holds {
                        return Err(format!(
                            "{kind:?} n={n} t={t} p={p}: ratio {}",
                            rep.pow_over_ces
                        ));
                    }
                    worst = worst.max(rep.pow_over_ces / 2f64.powf(p));
                    count += 1;
                }
            }
        }
    }
    Ok(format!(
        "{count} cases, largest E_pow / (2^p E_ces) = {worst:.4}"
    ))
}

fn h_pipeline_criterion() -> Outcome {
    let start = Instant::now();
    let space = Euclidean::new(2);
    let map = LinearMean::euclidean(2);
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst = 0.0f64;
    for k in 0..100 {
        let pts: Vec<Vec<f64>> = (0..8).map(|_| ball(&mut rng, 2, 1.0)).collect();
        let vals: Vec<Vec<f64>> = (0..4).map(|_| ball(&mut rng, 2, 1.0)).collect();
        let inst = ExtensionInstance::new(&space, &space, pts, vec![0, 1, 2, 3], vals)
            .map_err(|e| e.to_string())?;
        let mut h = Matrix::zeros(8, 8);
        for i in 0..8 {
            for j in 0..=i {
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
        let cert = build_h_certificate(&space, &map, &inst, &h, opts)
            .map_err(|e| format!("instance {k}: {e}"))?;
        if !cert.holds {
            return Err(format!(
                "instance {k}: L_H = {} > Lambda (R_H + delta) = {}",
                cert.lhs,
                cert.lambda * (cert.rhs + cert.delta)
            ));
        }
        worst = worst.max(cert.lhs / (cert.lambda * (cert.rhs + cert.delta)));
    }
    let elapsed = start.elapsed();
    if elapsed > Duration::from_secs(300) {
        return Err(format!("took {elapsed:?}"));
    }
    Ok(format!(
        "100 random H, largest L_H / (Lambda (R_H + delta)) = {worst:.3e}, {elapsed:.2?}"
    ))
}

fn contraction_criterion() -> Outcome {
    let space = Euclidean::new(2);
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut worst = 0.0f64;
    for k in 0..20u64 {
        let n = rng.gen_range(2..=8);
        let chain =
            generate::<f64>(ChainKind::RandomSymmetric, n, 2000 + k).map_err(|e| e.to_string())?;
        let g = gamma_analytic(chain.a(), &space, 2.0)
            .map_err(|e| e.to_string())?
            .value;
        let bound = lambda_bound(g, 1.0, 2.0).map_err(|e| e.to_string())?;
        let op = MarkovOperatorMap::new(chain.a().clone(), LinearMean::euclidean(2))
            .map_err(|e| e.to_string())?;
        for _ in 0..100 {
            let f: Vec<Vec<f64>> = (0..n).map(|_| ball(&mut rng, 2, 1.0)).collect();
            let r = op.contraction_ratio(&f, 2.0).map_err(|e| e.to_string())?;
            worst = worst.max(r / bound);
            if r > bound + 1e-6 {
                return Err(format!("ratio {r} above ((g-1)/(g+1))^(1/2) = {bound}"));
            }
        }
    }
    Ok(format!(
        "20 chains x 100 maps, largest ratio / bound = {worst:.4}"
    ))
}

fn counterexample_criterion() -> Outcome {
    let start = Instant::now();
    let mut ratios = Vec::new();
    for n in [8usize, 16, 32, 64] {
        let exp = path_cotype_experiment(n, 1.0f64, TRule::default()).map_err(|e| e.to_string())?;
        ratios.push(exp.ratio_lower);
    }
    let elapsed = start.elapsed();
    if !ratios.windows(2).all(|w| w[1] > w[0]) {
        return Err(format!("ratios not increasing: {ratios:?}"));
    }
    if elapsed > Duration::from_secs(120) {
        return Err(format!("took {elapsed:?}"));
    }
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
    Ok(format!(
        "p = 1 ratios over n = 8, 16, 32, 64: {}, {elapsed:.2?}",
        shown.join(" < ")
    ))
}

fn kalton_criterion() -> Outcome {
    let mut lines = Vec::new();
    for n in [2usize, 3] {
        let inst = build_instance::<f64>(n, 1.0, 11, &KaltonOptions::default())
            .map_err(|e| e.to_string())?;
        let sep = (n as f64).powf(-0.25);
        let mut rng = ChaCha8Rng::seed_from_u64(1100 + n as u64);
        for _ in 0..100 {
            let v: Vec<f64> = {
                let u = ball(&mut rng, n, 1.0);
                let r = u.iter().map(|x| x * x).sum::<f64>().sqrt();
                u.iter().map(|x| 0.5 * x / r).collect()
            };
            let pre = min_l1_preimage(&inst.q, &v).map_err(|e| e.to_string())?;
            if pre.norm > 1.0 + 1e-9 {
                return Err(format!("n={n}: minimal preimage norm {} > 1", pre.norm));
            }
        }
        let a = &inst.sphere_net;
        for i in 0..a.len() {
            for j in 0..i {
                let d = Euclidean::new(n).distance(&a[i], &a[j]);
                if !(d > sep) {
                    return Err(format!("n={n}: pair ({i}, {j}) at distance {d}"));
                }
            }
            let qphi = inst.q.matvec(&inst.section[i]);
            if qphi.iter().zip(&a[i]).any(|(u, v)| (u - v).abs() > 1e-9) {
                return Err(format!("n={n}: Q phi differs from a at {i}"));
            }
            let neg: Vec<f64> = a[i].iter().map(|x| -x).collect();
            let k = inst
                .index_of(&neg)
                .ok_or(format!("n={n}: -a missing for {i}"))?;
            if inst.section[k]
                .iter()
                .zip(&inst.section[i])
                .any(|(u, v)| *u != -*v)
            {
                return Err(format!("n={n}: section not odd at {i}"));
            }
        }
        let rep = holder_check(&inst, 1.0).map_err(|e| e.to_string())?;
        if !(rep.max_ratio <= 5.0) {
            return Err(format!("n={n}: Holder ratio {}", rep.max_ratio));
        }
        lines.push(format!(
            "n={n}: N={}, |A_n|={}, Holder {:.3} <= 5",
            inst.net_size(),
            a.len(),
            rep.max_ratio
        ));
    }
    Ok(lines.join("; "))
}

fn mcshane_criterion() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1111);
    let line = Euclidean::new(1);
    let mut worst = 0.0f64;
    for k in 0..50 {
        let d = rng.gen_range(1..=3);
        let size = rng.gen_range(4..=12);
        let anchors = rng.gen_range(2..size);
        let space = Euclidean::new(d);
        let pts: Vec<Vec<f64>> = (0..size).map(|_| ball(&mut rng, d, 1.0)).collect();
        let vals: Vec<Vec<f64>> = (0..anchors)
            .map(|_| vec![rng.gen_range(-1.0..1.0)])
            .collect();
        let inst = ExtensionInstance::new(&space, &line, pts, (0..anchors).collect(), vals)
            .map_err(|e| e.to_string())?;
        let mc = mcshane_extend(&space, &inst).map_err(|e| e.to_string())?;
        let mut oracle = 0.0f64;
        for i in 0..size {
            for j in 0..i {
                oracle = oracle.max(
                    (mc[i] - mc[j]).abs() / space.distance(&inst.points()[i], &inst.points()[j]),
                );
            }
        }
        let sol = min_lipschitz_extension(&space, &line, &inst, 1e-4).map_err(|e| e.to_string())?;
        let err = (sol.l_star - oracle).abs() / (1.0 + sol.l_star);
        worst = worst.max(err);
        if err > 1e-4 {
            return Err(format!(
                "instance {k}: L* = {} but McShane gives {oracle}",
                sol.l_star
            ));
        }
    }
    Ok(format!(
        "50 instances, largest |L* - McShane| / (1 + L*) = {worst:.2e}"
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("cotype certificate ratio <= 17", cotype_bound_criterion),
        ("Euclidean gap oracle", gamma_oracle_criterion),
        (
            "Cesaro spectral calculus envelope",
            spectral_calculus_criterion,
        ),
        ("Pisier residual and mutation detection", pisier_criterion),
        ("nearest-net rounding 3^p bound", rounding_criterion),
        ("Cesaro domination of powers", domination_criterion),
        ("per-H extension pipeline", h_pipeline_criterion),
        ("barycentric contraction for K = 1", contraction_criterion),
        ("path chain counterexample growth", counterexample_criterion),
        ("Kalton instance invariants", kalton_criterion),
        ("real-valued extension vs McShane", mcshane_criterion),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS  {:>2}. {name}: {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {:>2}. {name}: {detail}", k + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
