//! Nonlinear spectral gaps, Markov type checks, the nonlinear Markov operator and the
//! spectral calculus bounds relating them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::barycenter::{BarycenterMap, PointOf};
use crate::error::{invalid, Error, Result};
use crate::linalg::Matrix;
use crate::markov::{cesaro_of, chain_tol, ReversibleChain};
use crate::metric::{Metric, Sampling};
use crate::scalar::{csum, ext_ratio, powp, Real};

/// How a value of the nonlinear spectral gap was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaMode {
    /// `1 / (1 - lambda(A))`, valid for squared Euclidean distances.
    Analytic,
    /// The ratio on one given pair of configurations.
    FixedConfig,
    /// Best ratio found by randomized ascent; a lower bound on the gap.
    Search,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GammaEstimate<P, T> {
    pub mode: GammaMode,
    /// In `(0, inf]`; infinite values are `T::infinity()`.
    pub value: T,
    pub witness: Option<(Vec<P>, Vec<P>)>,
}

/// Parameters of the randomized ascent used by the search modes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SearchOptions {
    /// Number of independent restarts.
    pub restarts: usize,
    /// Proposals per restart and per point.
    pub moves_per_point: usize,
    pub seed: u64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            restarts: 200,
            moves_per_point: 400,
            seed: 0,
        }
    }
}

fn check_square_symmetric<T: Real>(a: &Matrix<T>) -> Result<()> {
    if !a.is_square() {
        return invalid(format!("matrix is {}x{}, not square", a.rows(), a.cols()));
    }
    if !a.is_symmetric(chain_tol::<T>(a.rows())) {
        return invalid("the nonlinear spectral gap is defined for symmetric stochastic matrices");
    }
    Ok(())
}

/// The ratio `[n^-2 sum_ij d(x_i,y_j)^p] / [n^-1 sum_ij a_ij d(x_i,y_j)^p]`.
pub fn gamma_ratio<T: Real, M: Metric<T>>(
    a: &Matrix<T>,
    space: &M,
    p: T,
    x: &[M::Point],
    y: &[M::Point],
) -> Result<T> {
    let n = a.rows();
    if x.len() != n || y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: if x.len() != n { x.len() } else { y.len() },
        });
    }
    let mut num = Vec::with_capacity(n * n);
    let mut den = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let d = powp(space.distance(&x[i], &y[j]), p);
            num.push(d);
            den.push(a[(i, j)] * d);
        }
    }
    let nn = T::of_usize(n);
    Ok(ext_ratio(csum(num) / (nn * nn), csum(den) / nn))
}

/// Fixed-configuration value of the gap ratio.
pub fn gamma_fixed<T: Real, M: Metric<T>>(
    a: &Matrix<T>,
    space: &M,
    p: T,
    x: &[M::Point],
    y: &[M::Point],
) -> Result<GammaEstimate<M::Point, T>> {
    let value = gamma_ratio(a, space, p, x, y)?;
    Ok(GammaEstimate {
        mode: GammaMode::FixedConfig,
        value,
        witness: Some((x.to_vec(), y.to_vec())),
    })
}

/// `lambda(A)` of a symmetric stochastic matrix: the largest absolute eigenvalue
/// after discarding the top one.
pub fn absolute_gap_of<T: Real>(a: &Matrix<T>) -> Result<T> {
    check_square_symmetric(a)?;
    let ev = a.symmetric_eigenvalues();
    Ok(ev
        .iter()
        .skip(1)
        .fold(T::zero(), |m, &x| m.max(x.abs()))
        .min(T::one()))
}

/// `1/(1 - lambda)`, infinite when `lambda = 1`.
pub fn gamma_from_lambda<T: Real>(lambda: T) -> T {
    ext_ratio(T::one(), T::one() - lambda).max(T::one())
}

/// Analytic gap of a symmetric stochastic matrix for squared Euclidean distances.
pub fn gamma_analytic<T: Real, M: Metric<T>>(
    a: &Matrix<T>,
    space: &M,
    p: T,
) -> Result<GammaEstimate<M::Point, T>> {
    if !space.is_euclidean() || p != T::of(2.0) {
        return invalid("analytic mode requires a Euclidean space and p = 2");
    }
    let lambda = absolute_gap_of(a)?;
    // a gap within rounding of zero is reported as infinite
    let value = if T::one() - lambda <= T::of(1e-12) {
        T::infinity()
    } else {
        gamma_from_lambda(lambda)
    };
    Ok(GammaEstimate {
        mode: GammaMode::Analytic,
        value,
        witness: None,
    })
}

fn restart_rng(seed: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64 + 1);
    rng
}

/// Runs `restarts` independent ascents in parallel and keeps the best (lowest index on ties).
fn best_of<R: Send, T: Real>(
    restarts: usize,
    run: impl Fn(usize) -> (T, R) + Sync + Send,
) -> (T, R) {
    let results: Vec<(T, R)> = (0..restarts).into_par_iter().map(run).collect();
    let mut best: Option<(T, R)> = None;
    for r in results {
        let better = match &best {
            None => true,
            Some((v, _)) => r.0 > *v,
        };
        if better {
            best = Some(r);
        }
    }
    best.expect("at least one restart")
}

/// One ascent on the gap ratio from a random start; returns the best ratio and its configuration.
fn gamma_ascent<T: Real, M: Sampling<T>>(
    a: &Matrix<T>,
    space: &M,
    p: T,
    moves_per_point: usize,
    rng: &mut ChaCha8Rng,
) -> (T, Vec<M::Point>, Vec<M::Point>) {
    let n = a.rows();
    let x: Vec<M::Point> = (0..n).map(|_| space.sample_point(rng)).collect();
    let y: Vec<M::Point> = if rng.gen_bool(0.5) {
        x.clone()
    } else {
        (0..n).map(|_| space.sample_point(rng)).collect()
    };
    let (mut x, mut y) = (x, y);
    let mut d = Matrix::from_fn(n, n, |i, j| powp(space.distance(&x[i], &y[j]), p));
    let totals = |d: &Matrix<T>| -> (T, T) {
        let mut num = Vec::with_capacity(n * n);
        let mut den = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                num.push(d[(i, j)]);
                den.push(a[(i, j)] * d[(i, j)]);
            }
        }
        (csum(num), csum(den))
    };
    let (mut num, mut den) = totals(&d);
    let nn = T::of_usize(n);
    let ratio = |num: T, den: T| ext_ratio(num / nn, den);
    let mut current = ratio(num, den);
    let mut best = (current, x.clone(), y.clone());
    let mut step = T::of(0.5);
    let mut accepted = 0usize;
    let window = 40 * n;
    let budget = moves_per_point * 2 * n;
    for mv in 1..=budget {
        if current.is_infinite() {
            break;
        }
        let k = rng.gen_range(0..2 * n);
        let (is_x, idx) = (k < n, k % n);
        let old = if is_x { &x[idx] } else { &y[idx] };
        let cand = space.perturb(old, step, rng);
        let mut new_line = Vec::with_capacity(n);
        let (mut dnum, mut dden) = (T::zero(), T::zero());
        for other in 0..n {
            let (i, j) = if is_x { (idx, other) } else { (other, idx) };
            let v = if is_x {
                powp(space.distance(&cand, &y[j]), p)
            } else {
                powp(space.distance(&x[i], &cand), p)
            };
            dnum += v - d[(i, j)];
            dden += a[(i, j)] * (v - d[(i, j)]);
            new_line.push(v);
        }
        let (cn, cd) = (num + dnum, (den + dden).max(T::zero()));
        let r = ratio(cn, cd);
        if r > current {
            let saved: Vec<T> = (0..n)
                .map(|other| {
                    if is_x {
                        d[(idx, other)]
                    } else {
                        d[(other, idx)]
                    }
                })
                .collect();
            for (other, v) in new_line.into_iter().enumerate() {
                let (i, j) = if is_x { (idx, other) } else { (other, idx) };
                d[(i, j)] = v;
            }
            let (tn, td) = totals(&d);
            let exact = ratio(tn, td);
            if exact > current {
                if is_x {
                    x[idx] = cand;
                } else {
                    y[idx] = cand;
                }
                num = tn;
                den = td;
                current = exact;
                accepted += 1;
            } else {
                for (other, v) in saved.into_iter().enumerate() {
                    let (i, j) = if is_x { (idx, other) } else { (other, idx) };
                    d[(i, j)] = v;
                }
            }
        }
        if current > best.0 {
            best = (current, x.clone(), y.clone());
        }
        if mv % window == 0 {
            // resynchronize the running sums and adapt the step
            let (tn, td) = totals(&d);
            num = tn;
            den = td;
            current = ratio(num, den);
            if current > best.0 {
                best = (current, x.clone(), y.clone());
            }
            if accepted * 5 < window {
                step /= T::of(2.0);
            }
            accepted = 0;
            if step < T::of(1e-8) {
                break;
            }
        }
    }
    best
}

/// Certified lower bound on the gap by multi-restart randomized ascent.
pub fn gamma_search<T: Real, M: Sampling<T>>(
    a: &Matrix<T>,
    space: &M,
    p: T,
    opts: &SearchOptions,
) -> Result<GammaEstimate<M::Point, T>> {
    if opts.restarts == 0 {
        return invalid("search needs at least one restart");
    }
    if !a.is_square() {
        return invalid("transition matrix must be square");
    }
    let (_, (x, y)) = best_of(opts.restarts, |k| {
        let mut rng = restart_rng(opts.seed, k);
        let (v, x, y) = gamma_ascent(a, space, p, opts.moves_per_point, &mut rng);
        (v, (x, y))
    });
    // the reported value is a fresh evaluation on the witness
    let value = gamma_ratio(a, space, p, &x, &y)?;
    Ok(GammaEstimate {
        mode: GammaMode::Search,
        value,
        witness: Some((x, y)),
    })
}

/// The three ways of evaluating the gap, as selected at run time.
#[derive(Clone, Debug, PartialEq)]
pub enum GammaQuery<P> {
    Analytic,
    Fixed { x: Vec<P>, y: Vec<P> },
    Search(SearchOptions),
}

/// Gap of a symmetric chain in the requested mode.
pub fn gamma_plus<T: Real, M: Sampling<T>>(
    chain: &ReversibleChain<T>,
    space: &M,
    p: T,
    query: &GammaQuery<M::Point>,
) -> Result<GammaEstimate<M::Point, T>> {
    match query {
        GammaQuery::Analytic => {
            if !chain.is_symmetric() {
                return invalid("analytic mode requires a symmetric chain");
            }
            gamma_analytic(chain.a(), space, p)
        }
        GammaQuery::Fixed { x, y } => gamma_fixed(chain.a(), space, p, x, y),
        GammaQuery::Search(opts) => gamma_search(chain.a(), space, p, opts),
    }
}

/// `sum_ij pi_i (A^t)_ij d(x_i,x_j)^p - M^p t sum_ij pi_i a_ij d(x_i,x_j)^p`.
pub fn markov_type_check<T: Real, M: Metric<T>>(
    chain: &ReversibleChain<T>,
    space: &M,
    x: &[M::Point],
    p: T,
    t: usize,
    m: T,
) -> Result<T> {
    let n = chain.n();
    if x.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x.len(),
        });
    }
    if t == 0 {
        return invalid("Markov type needs t >= 1");
    }
    let d = Matrix::from_fn(n, n, |i, j| powp(space.distance(&x[i], &x[j]), p));
    let lhs = chain.energy(&chain.power(t), &d);
    let rhs = chain.energy(chain.a(), &d);
    if t == 1 && m == T::one() {
        return Ok(T::zero());
    }
    Ok(lhs - m.powf(p) * T::of_usize(t) * rhs)
}

/// `d_{L_p^n}(f, g)`: the normalized `l_p` average of pointwise distances.
pub fn lp_distance<T: Real, M: Metric<T>>(space: &M, f: &[M::Point], g: &[M::Point], p: T) -> T {
    let n = T::of_usize(f.len());
    (csum(f.iter().zip(g).map(|(a, b)| powp(space.distance(a, b), p))) / n).powf(p.recip())
}

/// `d_{L_p^n}(f, z)` for the constant function `z`.
pub fn lp_distance_to_point<T: Real, M: Metric<T>>(
    space: &M,
    f: &[M::Point],
    z: &M::Point,
    p: T,
) -> T {
    let n = T::of_usize(f.len());
    (csum(f.iter().map(|a| powp(space.distance(a, z), p))) / n).powf(p.recip())
}

/// The map `f -> (i -> B(sum_j a_ij delta_{f(j)}))` on functions `{0..n-1} -> X`.
#[derive(Clone, Debug)]
pub struct MarkovOperatorMap<B, T> {
    a: Matrix<T>,
    map: B,
}

impl<T: Real, B: BarycenterMap<T>> MarkovOperatorMap<B, T> {
    pub fn new(a: Matrix<T>, map: B) -> Result<Self> {
        if !a.is_square() {
            return invalid("operator matrix must be square");
        }
        Ok(Self { a, map })
    }

    pub fn arity(&self) -> usize {
        self.a.rows()
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.a
    }

    pub fn map(&self) -> &B {
        &self.map
    }

    /// One application of the operator.
    pub fn step(&self, f: &[PointOf<T, B>]) -> Result<Vec<PointOf<T, B>>> {
        let n = self.arity();
        if f.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: f.len(),
            });
        }
        (0..n)
            .map(|i| self.map.barycenter_of(f, self.a.row(i)))
            .collect()
    }

    /// `T^[t](f)`; `t = 0` returns `f`.
    pub fn apply(&self, f: &[PointOf<T, B>], t: usize) -> Result<Vec<PointOf<T, B>>> {
        if f.len() != self.arity() {
            return Err(Error::DimensionMismatch {
                expected: self.arity(),
                got: f.len(),
            });
        }
        let mut g = f.to_vec();
        for _ in 0..t {
            g = self.step(&g)?;
        }
        Ok(g)
    }

    /// `B(f)`: the barycenter of the uniform measure on the values of `f`.
    pub fn barycenter_of_values(&self, f: &[PointOf<T, B>]) -> Result<PointOf<T, B>> {
        let w = vec![T::one() / T::of_usize(f.len()); f.len()];
        self.map.barycenter_of(f, &w)
    }

    /// `d(T^[t] f, B(T^[t] f)) / d(f, B f)` in `L_p^n`; 0/0 counts as 0.
    pub fn spread_ratio(&self, f: &[PointOf<T, B>], t: usize, p: T) -> Result<T> {
        let space = self.map.space();
        let g = self.apply(f, t)?;
        let num = lp_distance_to_point(space, &g, &self.barycenter_of_values(&g)?, p);
        let den = lp_distance_to_point(space, f, &self.barycenter_of_values(f)?, p);
        Ok(ext_ratio(num, den))
    }

    /// `d(T f, B f) / d(f, B f)` in `L_p^n`, the quantity bounded by the contraction lemma.
    pub fn contraction_ratio(&self, f: &[PointOf<T, B>], p: T) -> Result<T> {
        let space = self.map.space();
        let b = self.barycenter_of_values(f)?;
        let g = self.step(f)?;
        Ok(ext_ratio(
            lp_distance_to_point(space, &g, &b, p),
            lp_distance_to_point(space, f, &b, p),
        ))
    }

    /// `(d_{L_p^n}(f, T^[t] f)^p, n^-1 sum_ij (A^t)_ij d(f_i, f_j)^p)`; the first never exceeds the second.
    pub fn iterate_bound(&self, f: &[PointOf<T, B>], t: usize, p: T) -> Result<(T, T)> {
        let space = self.map.space();
        let g = self.apply(f, t)?;
        let lhs = lp_distance(space, f, &g, p).powf(p);
        let at = self.a.pow(t, true);
        let n = f.len();
        let rhs = csum(
            (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .map(|(i, j)| at[(i, j)] * powp(space.distance(&f[i], &f[j]), p)),
        ) / T::of_usize(n);
        Ok((lhs, rhs))
    }
}

/// Lower estimate of `lambda_p(T^[t])` by randomized ascent on the spread ratio.
pub fn lambda_p_estimate<T: Real, B>(
    op: &MarkovOperatorMap<B, T>,
    p: T,
    t: usize,
    opts: &SearchOptions,
) -> Result<T>
where
    B: BarycenterMap<T>,
    B::Space: Sampling<T>,
{
    if opts.restarts == 0 {
        return invalid("search needs at least one restart");
    }
    let n = op.arity();
    let space = op.map().space();
    let (best, ()) = best_of(opts.restarts, |k| {
        let mut rng = restart_rng(opts.seed, k);
        let mut f: Vec<PointOf<T, B>> = (0..n).map(|_| space.sample_point(&mut rng)).collect();
        let eval = |f: &[PointOf<T, B>]| op.spread_ratio(f, t, p).unwrap_or(T::zero());
        let mut current = eval(&f);
        let mut step = T::of(0.5);
        let window = 20 * n;
        let mut accepted = 0;
        for mv in 1..=opts.moves_per_point * n {
            let i = rng.gen_range(0..n);
            let old = f[i].clone();
            f[i] = space.perturb(&old, step, &mut rng);
            let r = eval(&f);
            if r > current && r.is_finite() {
                current = r;
                accepted += 1;
            } else {
                f[i] = old;
            }
            if mv % window == 0 {
                if accepted * 5 < window {
                    step /= T::of(2.0);
                }
                accepted = 0;
                if step < T::of(1e-8) {
                    break;
                }
            }
        }
        (current, ())
    });
    Ok(best)
}

/// The root `beta in [1, 2]` of `beta^p + K^p (beta - 1)^p = K^p`.
pub fn beta_p<T: Real>(k: T, p: T) -> Result<T> {
    if !(k >= T::one()) {
        return invalid(format!("K must be at least 1, got {k}"));
    }
    if !(p >= T::one()) {
        return invalid(format!("p must be at least 1, got {p}"));
    }
    if k == T::one() {
        return Ok(T::one());
    }
    // divide through by K^p so that large exponents stay finite
    let g = |b: T| (b / k).powf(p) + (b - T::one()).powf(p) - T::one();
    let (mut lo, mut hi) = (T::one(), T::of(2.0));
    while hi - lo > T::of(1e-12).max(T::epsilon() * T::of(4.0)) {
        let mid = (lo + hi) / T::of(2.0);
        if g(mid) > T::zero() {
            hi = mid;
        } else {
            lo = mid;
        }
        if mid == lo && mid == hi {
            break;
        }
    }
    Ok((lo + hi) / T::of(2.0))
}

/// `beta_p(K) ((K^{2p} g - 1) / (K^{2p} g + K^p))^{1/p}`, the bound on `lambda_p` in terms of the gap `g`.
pub fn lambda_bound<T: Real>(gamma: T, k: T, p: T) -> Result<T> {
    let beta = beta_p(k, p)?;
    if gamma.is_infinite() {
        return Ok(beta);
    }
    let k2 = k.powf(T::of(2.0) * p);
    let q = ((k2 * gamma - T::one()) / (k2 * gamma + k.powf(p))).max(T::zero());
    Ok(beta * q.powf(p.recip()))
}

/// `(Gamma + 4 (Gamma + 1) / (1 - lambda^{2t}))^p`, the bound on the gap of `A^t`.
pub fn iterate_gap_bound<T: Real>(gamma_const: T, lambda: T, t: usize, p: T) -> T {
    let l = lambda.powi(2 * t as i32);
    if l >= T::one() {
        return T::infinity();
    }
    (gamma_const + T::of(4.0) * (gamma_const + T::one()) / (T::one() - l)).powf(p)
}

/// Every quantity of the spectral calculus for one symmetric chain.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CalculusReport<T> {
    pub p: T,
    pub t: usize,
    pub k: T,
    pub gamma_const: T,
    pub gamma_mode: GammaMode,
    pub gamma_a: T,
    pub gamma_cesaro: T,
    pub gamma_power: T,
    /// `((g-1)/(g+1))^{1/p}` with `g` the gap of `A` (the K = 1 contraction bound).
    pub lambda_bound_k1: T,
    /// The contraction bound at the map's declared K.
    pub lambda_bound: T,
    /// Randomized lower estimate of `lambda_p(A (x) I)`.
    pub lambda_estimate: T,
    /// Iterate lemma bound on the gap of `A^t` using `lambda_bound`.
    pub power_bound_from_lemma: T,
    /// Iterate lemma bound using `lambda_estimate` (not rigorous: the estimate is a lower bound).
    pub power_bound_from_estimate: T,
    /// `gamma_cesaro / max(1, gamma_a / t)`, to be compared with `(c Gamma K)^p`.
    pub cesaro_implied_constant: T,
    /// `(gamma_power)^{1/p} / (Gamma max(1, p gamma_a / t))`, to be compared with `C`.
    pub power_implied_constant: T,
    pub flags: Vec<String>,
}

/// Envelope used to flag the Cesaro implied constant.
pub const CESARO_ENVELOPE: f64 = 20.0;

/// Evaluates the gaps of `A`, its Cesaro average and its power, the lambda bounds and
/// the bounds derived from them; anything exceeding an instantiated bound is flagged.
pub fn calculus_report<T: Real, B>(
    chain: &ReversibleChain<T>,
    map: &B,
    p: T,
    t: usize,
    opts: &SearchOptions,
) -> Result<CalculusReport<T>>
where
    B: BarycenterMap<T>,
    B::Space: Sampling<T>,
{
    if !chain.is_symmetric() {
        return invalid("the spectral calculus report requires a symmetric chain");
    }
    if t == 0 {
        return invalid("t must be at least 1");
    }
    let space = map.space();
    let c = map.constants();
    let ces = cesaro_of(chain.a(), t)?;
    let pow = chain.power(t);
    let analytic = space.is_euclidean() && p == T::of(2.0);
    let gamma = |m: &Matrix<T>| -> Result<T> {
        Ok(if analytic {
            gamma_analytic(m, space, p)?.value
        } else {
            gamma_search(m, space, p, opts)?.value
        })
    };
    let gamma_a = gamma(chain.a())?;
    let gamma_cesaro = gamma(&ces)?;
    let gamma_power = gamma(&pow)?;
    let lambda_bound_k1 = lambda_bound(gamma_a, T::one(), p)?;
    let lb = lambda_bound(gamma_a, c.k, p)?;
    let op = MarkovOperatorMap::new(chain.a().clone(), map)?;
    let lambda_estimate = lambda_p_estimate(
        &op,
        p,
        1,
        &SearchOptions {
            restarts: opts.restarts.min(32),
            ..*opts
        },
    )?;
    let tt = T::of_usize(t);
    let ces_base = T::one().max(gamma_a / tt);
    let pow_base = c.gamma * T::one().max(p * gamma_a / tt);
    let report_flags = |flags: &mut Vec<String>| {
        if gamma_a.is_infinite() {
            flags.push("vacuous".into());
        }
    };
    let mut flags = Vec::new();
    report_flags(&mut flags);
    let cesaro_implied_constant = if gamma_a.is_infinite() {
        T::zero()
    } else {
        gamma_cesaro / ces_base
    };
    let power_implied_constant = if gamma_a.is_infinite() {
        T::zero()
    } else {
        gamma_power.powf(p.recip()) / pow_base
    };
    let power_bound_from_lemma = iterate_gap_bound(c.gamma, lb, t, p);
    let power_bound_from_estimate = iterate_gap_bound(c.gamma, lambda_estimate, t, p);
    let slack = T::one() + T::of(1e-9);
    if lambda_estimate > lb * slack + T::of(1e-9) {
        flags.push("lambda_estimate_exceeds_lemma_bound".into());
    }
    if analytic && gamma_power > power_bound_from_lemma * slack {
        flags.push("power_gap_exceeds_iterate_bound".into());
    }
    if cesaro_implied_constant > T::of(CESARO_ENVELOPE) {
        flags.push("cesaro_envelope_exceeded".into());
    }
    Ok(CalculusReport {
        p,
        t,
        k: c.k,
        gamma_const: c.gamma,
        gamma_mode: if analytic {
            GammaMode::Analytic
        } else {
            GammaMode::Search
        },
        gamma_a,
        gamma_cesaro,
        gamma_power,
        lambda_bound_k1,
        lambda_bound: lb,
        lambda_estimate,
        power_bound_from_lemma,
        power_bound_from_estimate,
        cesaro_implied_constant,
        power_implied_constant,
        flags,
    })
}
