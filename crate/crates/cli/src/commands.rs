use mcotype::barycenter::{BarycenterMap, LinearMean, SpaceBarycenter};
use mcotype::cotype::{
    cotype_construct, dp_martingale, path_cotype_experiment, pisier_check, random_martingale,
    CotypeCertificate, TRule,
};
use mcotype::extension::{
    build_h_certificate, mcshane_extend, min_lipschitz_extension, ExtensionInstance, HOptions,
};
use mcotype::kalton::{
    build_instance, extension_lower_experiment, holder_check, KaltonOptions, SECTION_TOL,
};
use mcotype::linalg::Matrix;
use mcotype::markov::{generate, ChainKind};
use mcotype::metric::{Euclidean, FiniteMetricSpace, Metric};
use mcotype::spectral::{calculus_report, gamma_plus, gamma_ratio, GammaQuery, SearchOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::input::{self, ChainSource, ExtensionSpec};
use crate::report::{float, to_json, Failure, Outcome, Report};

pub const DEFAULT_CERT_SLACK: f64 = 1e-8;
pub const DEFAULT_EXTENSION_TOL: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaModeArg {
    Analytic,
    Search,
    Fixed,
}

fn rows(m: &Matrix<f64>) -> Value {
    to_json(&m.to_rows())
}

pub struct GammaArgs<'a> {
    pub chain: ChainSource,
    pub space: Option<&'a str>,
    pub mode: GammaModeArg,
    pub p: f64,
    pub config: Option<&'a str>,
    pub restarts: usize,
    pub moves: usize,
}

pub fn gamma(args: GammaArgs<'_>, seed: u64) -> Outcome<Report> {
    let chain = args.chain.build()?;
    let (spec, space) = input::space(args.space, 1)?;
    let query = match args.mode {
        GammaModeArg::Analytic => GammaQuery::Analytic,
        GammaModeArg::Search => GammaQuery::Search(SearchOptions {
            restarts: args.restarts,
            moves_per_point: args.moves,
            seed,
        }),
        GammaModeArg::Fixed => {
            let cfg = input::config(
                args.config
                    .ok_or_else(|| Failure::Input("fixed mode needs --config".into()))?,
            )?;
            let y = cfg.y.ok_or_else(|| {
                Failure::Input("config: field `y` is required in fixed mode".into())
            })?;
            GammaQuery::Fixed { x: cfg.x, y }
        }
    };
    let est = gamma_plus(&chain, &space, args.p, &query)?;
    let mut r = Report::new(
        "gamma",
        json!({"chain": to_json(&args.chain), "space": to_json(&spec), "mode": to_json(&args.mode), "p": float(args.p),
               "restarts": args.restarts, "moves_per_point": args.moves, "config": args.config}),
    );
    r.metric("value", float(est.value));
    if let Some((x, y)) = &est.witness {
        let again = gamma_ratio(chain.a(), &space, args.p, x, y)?;
        let same =
            again == est.value || (again - est.value).abs() <= 1e-9 * (1.0 + est.value.abs());
        r.check(
            "gamma.witness_reevaluates",
            same,
            format!("reported {} re-evaluated {again}", est.value),
        );
    }
    r.result = to_json(&est);
    Ok(r)
}

pub struct CalculusArgs<'a> {
    pub chain: ChainSource,
    pub space: Option<&'a str>,
    pub p: f64,
    pub t: usize,
    pub restarts: usize,
    pub moves: usize,
}

pub fn calculus(args: CalculusArgs<'_>, seed: u64) -> Outcome<Report> {
    let chain = args.chain.build()?;
    let (spec, space) = input::space(args.space, 1)?;
    let map = SpaceBarycenter::new(space, None)?;
    let opts = SearchOptions {
        restarts: args.restarts,
        moves_per_point: args.moves,
        seed,
    };
    let rep = calculus_report(&chain, &map, args.p, args.t, &opts)?;
    let mut r = Report::new(
        "calculus",
        json!({"chain": to_json(&args.chain), "space": to_json(&spec), "p": float(args.p), "t": args.t,
               "restarts": args.restarts, "moves_per_point": args.moves}),
    );
    r.metric("gamma_a", float(rep.gamma_a));
    r.metric("gamma_cesaro", float(rep.gamma_cesaro));
    r.metric("gamma_power", float(rep.gamma_power));
    r.metric(
        "cesaro_implied_constant",
        float(rep.cesaro_implied_constant),
    );
    r.metric("flags", json!(rep.flags.join(";")));
    r.result = to_json(&rep);
    Ok(r)
}

pub struct CotypeArgs<'a> {
    pub chain: ChainSource,
    pub space: Option<&'a str>,
    pub config: &'a str,
    pub t: usize,
}

pub fn cotype(args: CotypeArgs<'_>, tol: f64) -> Outcome<Report> {
    let chain = args.chain.build()?;
    let (spec, space) = input::space(args.space, 1)?;
    let cfg = input::config(args.config)?;
    let map = SpaceBarycenter::new(space.clone(), None)?;
    let cert = match cfg.y.clone() {
        None => cotype_construct(&chain, &map, &cfg.x, args.t)?,
        Some(y) => CotypeCertificate::evaluate(
            &chain,
            &space,
            cfg.x.clone(),
            y,
            args.t,
            map.constants().p,
        )?,
    };
    let mut r = Report::new(
        "cotype",
        json!({"chain": to_json(&args.chain), "space": to_json(&spec), "config": to_json(&cfg), "t": args.t}),
    );
    r.metric("ratio", float(cert.ratio));
    r.metric("bound", cert.bound.map_or(Value::Null, float));
    let recomputed = cert.recompute(&space)?;
    r.check(
        "cotype.recompute",
        (recomputed - cert.ratio).abs() <= tol * (1.0 + cert.ratio.abs())
            || (recomputed.is_infinite() && cert.ratio.is_infinite()),
        format!("stored {} recomputed {recomputed}", cert.ratio),
    );
    if let Some(b) = cert.bound {
        r.check(
            "cotype.ratio_within_bound",
            cert.within_bound(tol),
            format!("ratio {} bound {b}", cert.ratio),
        );
    }
    r.result = to_json(&cert);
    Ok(r)
}

pub struct PisierArgs<'a> {
    pub chain: Option<ChainSource>,
    pub space: Option<&'a str>,
    pub config: Option<&'a str>,
    pub t: usize,
    pub start: usize,
    pub random: Option<(usize, usize)>,
}

pub fn pisier(args: PisierArgs<'_>, seed: u64, tol: f64) -> Outcome<Report> {
    let (spec, space) = input::space(args.space, 2)?;
    let map = SpaceBarycenter::new(space, None)?;
    let c = map.constants();
    let (inst, z, inputs) = match args.random {
        Some((size, steps)) => {
            let inst = random_martingale(&map, size, steps, seed)?;
            let z = inst.values()[steps][0].clone();
            (
                inst,
                z,
                json!({"space": to_json(&spec), "random": {"size": size, "steps": steps}}),
            )
        }
        None => {
            let source = args.chain.ok_or_else(|| {
                Failure::Input("a chain is required unless --random is given".into())
            })?;
            let chain = source.build()?;
            let cfg = input::config(
                args.config
                    .ok_or_else(|| Failure::Input("--config is required with a chain".into()))?,
            )?;
            let inst = dp_martingale(&chain, &map, &cfg.x, args.t, args.start)?;
            let z = cfg
                .x
                .get(args.start)
                .cloned()
                .ok_or_else(|| Failure::Input("start state out of range".into()))?;
            let inputs = json!({"chain": to_json(&source), "space": to_json(&spec), "config": to_json(&cfg), "t": args.t, "start": args.start});
            (inst, z, inputs)
        }
    };
    let martingale = inst.check_martingale(&map, mcotype::cotype::MARTINGALE_TOL);
    let residual = pisier_check(&map, &inst, &z, c.p, c.k)?;
    let mut r = Report::new("pisier", inputs);
    r.metric("residual", float(residual));
    r.check(
        "pisier.martingale",
        martingale.is_ok(),
        martingale.err().map_or(String::new(), |e| e.to_string()),
    );
    r.check(
        "pisier.residual",
        residual <= tol,
        format!("residual {residual:e}"),
    );
    r.result = json!({"residual": float(residual), "p": float(c.p), "k": float(c.k), "steps": inst.steps(),
                      "omega": inst.mu().len(), "z": to_json(&z)});
    Ok(r)
}

pub fn counterexample(p: f64, sizes: &[usize], rule: TRule) -> Outcome<Report> {
    let runs: Vec<_> = sizes
        .par_iter()
        .map(|&n| path_cotype_experiment(n, p, rule))
        .collect();
    let runs = runs.into_iter().collect::<mcotype::Result<Vec<_>>>()?;
    let mut r = Report::new(
        "counterexample",
        json!({"p": float(p), "sizes": sizes, "rule": to_json(&rule)}),
    );
    for e in &runs {
        r.metric(format!("ratio_lower[n={}]", e.n), float(e.ratio_lower));
        r.check(
            format!("counterexample.bracket[n={}]", e.n),
            e.lhs_lower <= e.lhs_upper * (1.0 + 1e-9),
            format!("{} <= {}", e.lhs_lower, e.lhs_upper),
        );
    }
    let increasing = runs.windows(2).all(|w| w[1].ratio_lower > w[0].ratio_lower);
    r.result = json!({"experiments": to_json(&runs), "ratio_lower_increasing": increasing});
    Ok(r)
}

fn extension_instance(
    spec: &ExtensionSpec,
) -> Outcome<(
    FiniteMetricSpace<f64>,
    Euclidean,
    ExtensionInstance<mcotype::metric::SpacePoint<f64>, Vec<f64>, f64>,
)> {
    let source = FiniteMetricSpace::from_spec(&spec.source)?;
    let target = Euclidean::new(spec.target_dim);
    for (k, v) in spec.values.iter().enumerate() {
        if v.len() != spec.target_dim {
            return Err(Failure::Input(format!(
                "instance: field `values[{k}]` has length {}, expected {}",
                v.len(),
                spec.target_dim
            )));
        }
    }
    let inst = ExtensionInstance::new(
        &source,
        &target,
        spec.points.clone(),
        spec.anchors.clone(),
        spec.values.clone(),
    )?;
    Ok((source, target, inst))
}

pub fn extend(arg: &str, tol: f64) -> Outcome<Report> {
    let spec = input::extension(arg)?;
    let (source, target, inst) = extension_instance(&spec)?;
    let sol = min_lipschitz_extension(&source, &target, &inst, tol)?;
    let mut r = Report::new("extend", json!({"instance": to_json(&spec)}));
    r.metric("lip_f", float(sol.lip_f));
    r.metric("l_star", float(sol.l_star));
    r.check(
        "extend.not_below_data",
        sol.l_star >= sol.lip_f * (1.0 - 1e-12),
        format!("{} vs {}", sol.l_star, sol.lip_f),
    );
    let mut result = to_json(&sol);
    if spec.target_dim == 1 {
        let mc = mcshane_extend(&source, &inst)?;
        let mut lip = 0.0f64;
        for i in 0..mc.len() {
            for j in 0..i {
                let d = source.distance(&inst.points()[i], &inst.points()[j]);
                lip = lip.max((mc[i] - mc[j]).abs() / d);
            }
        }
        r.metric("mcshane_lip", float(lip));
        r.check(
            "extend.matches_mcshane",
            (sol.l_star - lip).abs() <= tol * (1.0 + sol.l_star),
            format!("{} vs {lip}", sol.l_star),
        );
        result["mcshane"] = json!({"values": to_json(&mc), "lip": float(lip)});
    }
    r.result = result;
    Ok(r)
}

pub struct HcertArgs<'a> {
    pub instance: &'a str,
    pub p: f64,
    pub m_const: f64,
    pub n_const: Option<f64>,
    pub t: Option<usize>,
    pub delta: Option<f64>,
}

pub fn hcert(args: HcertArgs<'_>, seed: u64) -> Outcome<Report> {
    let spec = input::extension(args.instance)?;
    let (source, _, inst) = extension_instance(&spec)?;
    let size = spec.points.len();
    let h = match &spec.h {
        Some(h) => {
            Matrix::from_rows(h).map_err(|e| Failure::Input(format!("instance: field `h`: {e}")))?
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut h = Matrix::zeros(size, size);
            for i in 0..size {
                for j in 0..i {
                    let v: f64 = rng.gen_range(0.0..1.0);
                    h[(i, j)] = v;
                    h[(j, i)] = v;
                }
            }
            h
        }
    };
    let n_const = args
        .n_const
        .unwrap_or_else(|| (4f64.powf(args.p) + 1.0).powf(1.0 / args.p));
    let opts = HOptions {
        p: args.p,
        m_const: args.m_const,
        n_const,
        t: args.t,
        delta: args.delta,
    };
    let cert = build_h_certificate(
        &source,
        &LinearMean::euclidean(spec.target_dim),
        &inst,
        &h,
        opts,
    )?;
    let mut r = Report::new(
        "hcert",
        json!({"instance": to_json(&spec), "h": rows(&h), "p": float(args.p), "m": float(args.m_const), "n": float(n_const),
               "t": args.t, "delta": args.delta.map(float)}),
    );
    r.metric("lhs", float(cert.lhs));
    r.metric("rhs", float(cert.rhs));
    r.metric("lambda", float(cert.lambda));
    r.metric("t", json!(cert.t));
    r.check(
        "hcert.inequality",
        cert.holds,
        format!(
            "L_H = {} vs Lambda (R_H + delta) = {}",
            cert.lhs,
            cert.lambda * (cert.rhs + cert.delta)
        ),
    );
    r.check(
        "hcert.cotype_certified",
        cert.cotype_certified,
        format!("ratio {}", cert.cotype_ratio),
    );
    r.check(
        "hcert.markov_type_certified",
        cert.markov_type_certified,
        "",
    );
    let mut result = to_json(&cert);
    result["h"] = rows(&cert.h);
    result["a"] = rows(&cert.a);
    result["b"] = rows(&cert.b);
    r.result = result;
    Ok(r)
}

pub struct KaltonArgs {
    pub dims: Vec<usize>,
    pub theta: f64,
    pub tau: Option<f64>,
    pub extra: usize,
    pub opts: KaltonOptions,
}

pub fn kalton(args: KaltonArgs, seed: u64, tol: f64) -> Outcome<Report> {
    let tau = args.tau.unwrap_or(args.theta);
    let runs: Vec<Outcome<Value>> = args
        .dims
        .par_iter()
        .map(|&n| {
            let inst = build_instance(n, args.theta, seed, &args.opts)?;
            let holder = holder_check(&inst, tau)?;
            let ext = if args.extra > 0 { Some(extension_lower_experiment(&inst, args.extra, seed, DEFAULT_EXTENSION_TOL)?) } else { None };
            Ok(json!({"n": n, "net_size": inst.net_size(), "sphere_set_size": inst.sphere_net.len(), "scale": float(inst.scale()),
                      "checks": to_json(&inst.checks), "holder": to_json(&holder), "extension": ext.as_ref().map(to_json)}))
        })
        .collect();
    let runs = runs.into_iter().collect::<Outcome<Vec<_>>>()?;
    let mut r = Report::new(
        "kalton",
        json!({"dims": args.dims, "theta": float(args.theta), "tau": float(tau), "extra": args.extra, "options": to_json(&args.opts)}),
    );
    for run in &runs {
        let n = &run["n"];
        let num = |v: &Value| v.as_f64().unwrap_or(f64::INFINITY);
        let c = &run["checks"];
        r.metric(format!("net_size[n={n}]"), run["net_size"].clone());
        r.metric(
            format!("sphere_set_size[n={n}]"),
            run["sphere_set_size"].clone(),
        );
        r.metric(format!("holder[n={n}]"), run["holder"]["max_ratio"].clone());
        r.check(
            format!("kalton.covering[n={n}]"),
            num(&c["worst_covering_norm"]) <= 1.0 + tol,
            c["worst_covering_norm"].to_string(),
        );
        r.check(
            format!("kalton.section[n={n}]"),
            num(&c["worst_section_residual"]) <= tol && num(&c["worst_section_norm"]) <= 2.0 + tol,
            format!(
                "residual {} norm {}",
                c["worst_section_residual"], c["worst_section_norm"]
            ),
        );
        r.check(
            format!("kalton.separation[n={n}]"),
            num(&c["min_pair_distance"]) > num(&c["separation"]),
            c["min_pair_distance"].to_string(),
        );
        r.check(
            format!("kalton.holder[n={n}]"),
            run["holder"]["holds"] == json!(true),
            run["holder"]["max_ratio"].to_string(),
        );
    }
    r.result = json!({ "instances": runs });
    Ok(r)
}

pub fn default_kalton_tol() -> f64 {
    SECTION_TOL
}

pub fn generate_chain(kind: &str, n: usize, seed: u64) -> Outcome<Report> {
    let k: ChainKind = kind.parse()?;
    let chain = generate::<f64>(k, n, seed)?;
    let mut r = Report::new("generate", json!({"kind": kind, "n": n}));
    r.metric("n", json!(n));
    r.result = to_json(&chain.to_spec());
    Ok(r)
}
