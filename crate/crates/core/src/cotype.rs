//! Metric Markov cotype certificates built from barycentric martingales, Pisier's martingale
//! inequality, Cesaro and Green domination, and the path chain experiment on the real line.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::barycenter::{conditional_barycenter, BarycenterMap, Constants, Partition, PointOf};
use crate::error::{invalid, Error, Result};
use crate::linalg::Matrix;
use crate::markov::{cesaro_of, generate, ChainKind, ReversibleChain};
use crate::metric::{Metric, Sampling};
use crate::scalar::{csum, ext_ratio, powp, Real};

/// Largest trajectory space `n^t` that [`dp_martingale`] will enumerate.
pub const MAX_TRAJECTORIES: usize = 100_000;

/// Default pointwise tolerance for the martingale property.
pub const MARTINGALE_TOL: f64 = 1e-9;

/// Table of `d(x_i, x_j)^p`.
pub fn powered_distances<T: Real, M: Metric<T>>(space: &M, x: &[M::Point], p: T) -> Matrix<T> {
    let n = x.len();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let v = powp(space.distance(&x[i], &x[j]), p);
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// `lhs / rhs` with `0 / 0 = 1`: a degenerate instance satisfies the inequality with any constant.
pub fn cotype_ratio<T: Real>(lhs: T, rhs: T) -> T {
    if lhs == T::zero() && rhs == T::zero() {
        T::one()
    } else {
        ext_ratio(lhs, rhs)
    }
}

/// `(4 Gamma K)^p + 1`.
pub fn cotype_bound<T: Real>(c: &Constants<T>) -> T {
    (T::of(4.0) * c.gamma * c.k).powf(c.p) + T::one()
}

/// Both sides of the cotype inequality for given points:
/// `sum_i pi_i d(x_i,y_i)^p + t sum_ij pi_i a_ij d(y_i,y_j)^p` and `sum_ij pi_i A_t(A)_ij d(x_i,x_j)^p`.
pub fn certificate_sides<T: Real, M: Metric<T>>(
    chain: &ReversibleChain<T>,
    space: &M,
    x: &[M::Point],
    y: &[M::Point],
    t: usize,
    p: T,
) -> Result<(T, T)> {
    let n = chain.n();
    for len in [x.len(), y.len()] {
        if len != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: len,
            });
        }
    }
    let pi = chain.pi();
    let near = csum((0..n).map(|i| pi[i] * powp(space.distance(&x[i], &y[i]), p)));
    let spread = chain.energy(chain.a(), &powered_distances(space, y, p));
    let rhs = chain.energy(&chain.cesaro(t)?, &powered_distances(space, x, p));
    Ok((near + T::of_usize(t) * spread, rhs))
}

/// A configuration `x`, the points `y` offered for it, and both sides of the cotype inequality.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CotypeCertificate<P, T> {
    pub chain: ReversibleChain<T>,
    pub t: usize,
    pub p: T,
    pub x: Vec<P>,
    pub y: Vec<P>,
    pub lhs: T,
    pub rhs_base: T,
    /// `lhs / rhs_base`, with `0/0 = 1`.
    pub ratio: T,
    /// `(4 Gamma K)^p + 1` for the constants of the map that produced `y`.
    pub bound: Option<T>,
    /// Smoothing weight of the chain the dynamic program ran on; `None` when it ran on `A` itself.
    pub epsilon: Option<T>,
}

impl<P: Clone, T: Real> CotypeCertificate<P, T> {
    /// Evaluates the inequality for the given `y`.
    pub fn evaluate<M: Metric<T, Point = P>>(
        chain: &ReversibleChain<T>,
        space: &M,
        x: Vec<P>,
        y: Vec<P>,
        t: usize,
        p: T,
    ) -> Result<Self> {
        let (lhs, rhs_base) = certificate_sides(chain, space, &x, &y, t, p)?;
        Ok(Self {
            chain: chain.clone(),
            t,
            p,
            x,
            y,
            lhs,
            rhs_base,
            ratio: cotype_ratio(lhs, rhs_base),
            bound: None,
            epsilon: None,
        })
    }

    /// Recomputes the ratio from the stored configurations.
    pub fn recompute<M: Metric<T, Point = P>>(&self, space: &M) -> Result<T> {
        let (lhs, rhs) = certificate_sides(&self.chain, space, &self.x, &self.y, self.t, self.p)?;
        Ok(cotype_ratio(lhs, rhs))
    }

    /// Whether the stored ratio is within `slack` of the bound it claims.
    pub fn within_bound(&self, slack: T) -> bool {
        self.bound.is_none_or(|b| self.ratio <= b + slack)
    }
}

/// The layers `M^(., r)` for `r = 0..=t`: `M^(i,0) = x_i` and
/// `M^(i,r) = B(sum_j a_ij delta_{M^(j,r-1)})`.
pub fn dp_layers<T: Real, B: BarycenterMap<T>>(
    a: &Matrix<T>,
    map: &B,
    x: &[PointOf<T, B>],
    t: usize,
) -> Result<Vec<Vec<PointOf<T, B>>>> {
    let n = a.rows();
    if x.len() != n || !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x.len(),
        });
    }
    let mut layers = Vec::with_capacity(t + 1);
    layers.push(x.to_vec());
    for r in 1..=t {
        let prev = &layers[r - 1];
        let next = (0..n)
            .map(|i| map.barycenter_of(prev, a.row(i)))
            .collect::<Result<Vec<_>>>()?;
        layers.push(next);
    }
    Ok(layers)
}

/// `y_i = B((1/t) sum_{s=1}^t delta_{M^(i,s)})` from the layers of [`dp_layers`].
pub fn cesaro_points<T: Real, B: BarycenterMap<T>>(
    map: &B,
    layers: &[Vec<PointOf<T, B>>],
) -> Result<Vec<PointOf<T, B>>> {
    let t = layers.len().saturating_sub(1);
    if t == 0 {
        return invalid("need at least one layer beyond the configuration");
    }
    let n = layers[0].len();
    let w = vec![T::one() / T::of_usize(t); t];
    (0..n)
        .map(|i| {
            let pts: Vec<_> = layers[1..].iter().map(|l| l[i].clone()).collect();
            map.barycenter_of(&pts, &w)
        })
        .collect()
}

/// Largest `eps = 2^-k`, `2 <= k <= 40`, for which the Cesaro energy of `(1-eps) A + eps Pi`
/// is at most twice that of `A`.
pub fn smoothing_epsilon<T: Real>(
    chain: &ReversibleChain<T>,
    d: &Matrix<T>,
    t: usize,
) -> Result<Option<T>> {
    let base = chain.energy(&chain.cesaro(t)?, d);
    let cap = T::of(2.0) * base;
    for k in 2..=40 {
        let eps = T::of(0.5).powi(k);
        let b = chain.smoothed(eps);
        if b.energy(&cesaro_of(b.a(), t)?, d) <= cap {
            return Ok(Some(eps));
        }
    }
    Ok(None)
}

/// The cotype certificate of the barycentric martingale construction.
///
/// Runs on the support of `pi`. When the transition matrix has zero entries the program is
/// run both on `A` and on the smoothed chain `(1-eps) A + eps Pi`; the points with the
/// smaller ratio against `A` are kept.
pub fn cotype_construct<T: Real, B: BarycenterMap<T>>(
    chain: &ReversibleChain<T>,
    map: &B,
    x: &[PointOf<T, B>],
    t: usize,
) -> Result<CotypeCertificate<PointOf<T, B>, T>> {
    if t == 0 {
        return invalid("cotype needs t >= 1");
    }
    let n = chain.n();
    if x.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x.len(),
        });
    }
    let space = map.space();
    let c = map.constants();
    let (sub, keep) = chain.restrict_to_support();
    let xs: Vec<_> = keep.iter().map(|&i| x[i].clone()).collect();
    let embed = |ys: Vec<PointOf<T, B>>| {
        let mut y = x.to_vec();
        for (k, &i) in keep.iter().enumerate() {
            y[i] = ys[k].clone();
        }
        y
    };

    let direct = embed(cesaro_points(map, &dp_layers(sub.a(), map, &xs, t)?)?);
    let mut cert = CotypeCertificate::evaluate(chain, space, x.to_vec(), direct, t, c.p)?;
    if sub.n() > 1 && sub.a().min_entry() == T::zero() {
        let d = powered_distances(space, &xs, c.p);
        if let Some(eps) = smoothing_epsilon(&sub, &d, t)? {
            let smooth = sub.smoothed(eps);
            let y = embed(cesaro_points(map, &dp_layers(smooth.a(), map, &xs, t)?)?);
            let alt = CotypeCertificate::evaluate(chain, space, x.to_vec(), y, t, c.p)?;
            if alt.ratio < cert.ratio {
                cert = alt;
                cert.epsilon = Some(eps);
            }
        }
    }
    cert.bound = Some(cotype_bound(&c));
    Ok(cert)
}

/// Largest value of `d(z, M^(i,r))^p - sum_j (A^r)_ij d(z, x_j)^p` over `i`, `r` and the given `z`.
/// Nonpositive whenever the map satisfies the moment inequality with any constant.
pub fn dp_contraction_residual<T: Real, B: BarycenterMap<T>>(
    a: &Matrix<T>,
    map: &B,
    layers: &[Vec<PointOf<T, B>>],
    zs: &[PointOf<T, B>],
) -> T {
    let space = map.space();
    let p = map.constants().p;
    let n = a.rows();
    let x = &layers[0];
    let mut worst = T::neg_infinity();
    let mut power = Matrix::identity(n);
    for (r, layer) in layers.iter().enumerate() {
        if r > 0 {
            power = power.matmul(a);
            power.renormalize_rows();
        }
        for z in zs {
            let dz: Vec<T> = x.iter().map(|xj| powp(space.distance(z, xj), p)).collect();
            for i in 0..n {
                let bound = csum((0..n).map(|j| power[(i, j)] * dz[j]));
                worst = worst.max(powp(space.distance(z, &layer[i]), p) - bound);
            }
        }
    }
    worst
}

/// A finite probability space with a filtration and a sequence of random points.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MartingaleInstance<P, T> {
    mu: Vec<T>,
    filtration: Vec<Partition>,
    z: Vec<Vec<P>>,
}

impl<P: Clone, T: Real> MartingaleInstance<P, T> {
    /// `filtration[s]` is the partition generating the sigma-algebra `F_s` and `z[s]` the values of
    /// `Z_s`; `F_0` must be trivial, each level must refine the previous one, and `mu` must be a
    /// strictly positive probability vector.
    pub fn new(mu: Vec<T>, filtration: Vec<Partition>, z: Vec<Vec<P>>) -> Result<Self> {
        let size = mu.len();
        if size == 0 {
            return invalid("probability space is empty");
        }
        if filtration.is_empty() || filtration.len() != z.len() {
            return invalid(format!(
                "need one partition per random variable, got {} partitions and {} variables",
                filtration.len(),
                z.len()
            ));
        }
        if let Some(w) = mu.iter().position(|m| !(*m > T::zero()) || !m.is_finite()) {
            return invalid(format!("mu[{w}] = {} is not positive", mu[w]));
        }
        let total = csum(mu.iter().copied());
        if (total - T::one()).abs() > T::of(1e-9) {
            return invalid(format!("mu sums to {total}, not 1"));
        }
        for (s, (f, zs)) in filtration.iter().zip(&z).enumerate() {
            if f.len() != size {
                return Err(Error::DimensionMismatch {
                    expected: size,
                    got: f.len(),
                });
            }
            if zs.len() != size {
                return invalid(format!(
                    "Z_{s} has {} values on a space of size {size}",
                    zs.len()
                ));
            }
        }
        if filtration[0].atoms().len() != 1 {
            return Err(Error::NotNested { level: 0, atom: 1 });
        }
        for s in 1..filtration.len() {
            if let Some(atom) = filtration[s].first_non_refining_atom(&filtration[s - 1]) {
                return Err(Error::NotNested { level: s, atom });
            }
        }
        Ok(Self { mu, filtration, z })
    }

    /// Number of steps `m`.
    pub fn steps(&self) -> usize {
        self.z.len() - 1
    }

    pub fn mu(&self) -> &[T] {
        &self.mu
    }

    pub fn filtration(&self) -> &[Partition] {
        &self.filtration
    }

    pub fn values(&self) -> &[Vec<P>] {
        &self.z
    }

    /// Mutable access to `Z_s`, for building perturbed instances.
    pub fn values_mut(&mut self, s: usize) -> &mut [P] {
        &mut self.z[s]
    }

    /// Checks `B(Z_s | F_{s-1}) = Z_{s-1}` pointwise up to `tol`, reporting the first offending atom.
    pub fn check_martingale<B>(&self, map: &B, tol: T) -> Result<()>
    where
        B: BarycenterMap<T>,
        B::Space: Metric<T, Point = P>,
    {
        let space = map.space();
        for s in 1..self.z.len() {
            let f = &self.filtration[s - 1];
            let cond = conditional_barycenter(map, &self.z[s], f, &self.mu)?;
            for (a, atom) in f.atoms().iter().enumerate() {
                let dist = atom
                    .iter()
                    .map(|&w| space.distance(&cond[w], &self.z[s - 1][w]))
                    .fold(T::zero(), T::max);
                if dist > tol {
                    return Err(Error::NotMartingale {
                        level: s,
                        atom: a,
                        distance: dist.to_f64_lossy(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Both sides of Pisier's inequality
/// `K^p d(Z_0,z)^p + sum_t E d(Z_{t+1},Z_t)^p <= K^p E d(Z_m,z)^p`.
pub fn pisier_sides<T: Real, M: Metric<T>>(
    space: &M,
    inst: &MartingaleInstance<M::Point, T>,
    z: &M::Point,
    p: T,
    k: T,
) -> (T, T) {
    let kp = k.powf(p);
    let mu = &inst.mu;
    let zs = &inst.z;
    let m = inst.steps();
    let expect = |f: &dyn Fn(usize) -> T| csum((0..mu.len()).map(|w| mu[w] * f(w)));
    let start = expect(&|w| powp(space.distance(&zs[0][w], z), p));
    let increments =
        csum((0..m).map(|s| expect(&|w| powp(space.distance(&zs[s + 1][w], &zs[s][w]), p))));
    let end = expect(&|w| powp(space.distance(&zs[m][w], z), p));
    (kp * start + increments, kp * end)
}

/// Residual of Pisier's inequality for a verified martingale: nonpositive when the inequality holds.
pub fn pisier_check<T: Real, B: BarycenterMap<T>>(
    map: &B,
    inst: &MartingaleInstance<PointOf<T, B>, T>,
    z: &PointOf<T, B>,
    p: T,
    k: T,
) -> Result<T> {
    inst.check_martingale(map, T::of(MARTINGALE_TOL))?;
    let (lhs, rhs) = pisier_sides(map.space(), inst, z, p, k);
    Ok(lhs - rhs)
}

/// The martingale behind the cotype construction for the walk started at `start`: the space of
/// positive-probability trajectories `(i_1, .., i_t)`, `F_s` generated by the first `s` steps and
/// `Z_s = M^(i_s, t-s)`.
pub fn dp_martingale<T: Real, B: BarycenterMap<T>>(
    chain: &ReversibleChain<T>,
    map: &B,
    x: &[PointOf<T, B>],
    t: usize,
    start: usize,
) -> Result<MartingaleInstance<PointOf<T, B>, T>> {
    let n = chain.n();
    if start >= n {
        return invalid(format!("start state {start} outside 0..{n}"));
    }
    if t == 0 {
        return invalid("martingale needs t >= 1");
    }
    match n.checked_pow(t as u32) {
        Some(size) if size <= MAX_TRAJECTORIES => {}
        _ => {
            return invalid(format!(
                "trajectory space {n}^{t} exceeds {MAX_TRAJECTORIES}"
            ))
        }
    }
    let a = chain.a();
    let layers = dp_layers(a, map, x, t)?;

    let mut paths: Vec<Vec<usize>> = Vec::new();
    let mut mu: Vec<T> = Vec::new();
    let mut stack = vec![(Vec::with_capacity(t), start, T::one())];
    while let Some((path, at, mass)) = stack.pop() {
        if path.len() == t {
            paths.push(path);
            mu.push(mass);
            continue;
        }
        for j in (0..n).rev() {
            if a[(at, j)] > T::zero() {
                let mut next = path.clone();
                next.push(j);
                stack.push((next, j, mass * a[(at, j)]));
            }
        }
    }
    let total = csum(mu.iter().copied());
    for m in &mut mu {
        *m /= total;
    }

    let size = paths.len();
    let mut filtration = Vec::with_capacity(t + 1);
    let mut z = Vec::with_capacity(t + 1);
    for s in 0..=t {
        let mut atoms: Vec<Vec<usize>> = Vec::new();
        for w in 0..size {
            if w == 0 || paths[w][..s] != paths[w - 1][..s] {
                atoms.push(Vec::new());
            }
            atoms.last_mut().expect("atom opened above").push(w);
        }
        filtration.push(Partition::from_atoms(size, atoms)?);
        let state = |w: usize| if s == 0 { start } else { paths[w][s - 1] };
        z.push((0..size).map(|w| layers[t - s][state(w)].clone()).collect());
    }
    MartingaleInstance::new(mu, filtration, z)
}

/// A random martingale on `size` outcomes with `steps` increments: each level splits every atom
/// of the previous one into at most three pieces, `Z_m` is sampled from the space and the earlier
/// values are conditional barycenters.
pub fn random_martingale<T: Real, B>(
    map: &B,
    size: usize,
    steps: usize,
    seed: u64,
) -> Result<MartingaleInstance<PointOf<T, B>, T>>
where
    B: BarycenterMap<T>,
    B::Space: Sampling<T>,
{
    if size == 0 || steps == 0 {
        return invalid("need a nonempty space and at least one step");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..size).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mu: Vec<T> = raw.iter().map(|&m| T::of(m / total)).collect();
    let mut filtration = vec![Partition::trivial(size)];
    for _ in 0..steps {
        let mut atoms = Vec::new();
        for atom in filtration.last().expect("trivial level present").atoms() {
            let pieces = rng.gen_range(1..=3usize).min(atom.len());
            let mut split: Vec<Vec<usize>> = vec![Vec::new(); pieces];
            for (k, &w) in atom.iter().enumerate() {
                let slot = if k < pieces {
                    k
                } else {
                    rng.gen_range(0..pieces)
                };
                split[slot].push(w);
            }
            atoms.extend(split);
        }
        filtration.push(Partition::from_atoms(size, atoms)?);
    }
    let space = map.space();
    let mut z = vec![Vec::new(); steps + 1];
    z[steps] = (0..size).map(|_| space.sample_point(&mut rng)).collect();
    for s in (0..steps).rev() {
        z[s] = conditional_barycenter(map, &z[s + 1], &filtration[s], &mu)?;
    }
    MartingaleInstance::new(mu, filtration, z)
}

/// Powers, Cesaro and Green energies of a configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DominationReport<T> {
    pub p: T,
    pub t: usize,
    /// `ceil(p t)`.
    pub pt: usize,
    /// `sum_ij pi_i (A^t)_ij d(x_i,x_j)^p`.
    pub e_pow: T,
    /// Same with the Cesaro average `A_t(A)`.
    pub e_ces: T,
    /// Same with the Green matrix `B_t(A)`.
    pub e_green: T,
    /// Same with `A_{ceil(p t)}(A)`.
    pub e_ces_pt: T,
    /// `e_pow / e_ces`, never above `2^p`.
    pub pow_over_ces: T,
    /// `e_green / e_ces_pt`, measured only.
    pub green_over_ces_pt: T,
    pub cesaro_domination_holds: bool,
    /// `64 p 2^p`; larger Green ratios are flagged.
    pub green_envelope: T,
    pub flags: Vec<String>,
}

pub fn domination_report<T: Real, M: Metric<T>>(
    chain: &ReversibleChain<T>,
    space: &M,
    x: &[M::Point],
    t: usize,
    p: T,
) -> Result<DominationReport<T>> {
    if t == 0 {
        return invalid("domination needs t >= 1");
    }
    if x.len() != chain.n() {
        return Err(Error::DimensionMismatch {
            expected: chain.n(),
            got: x.len(),
        });
    }
    let d = powered_distances(space, x, p);
    let pt = (p * T::of_usize(t)).ceil().to_usize().unwrap_or(t).max(1);
    let e_pow = chain.energy(&chain.power(t), &d);
    let e_ces = chain.energy(&chain.cesaro(t)?, &d);
    let e_green = chain.energy(&chain.green(t)?.0, &d);
    let e_ces_pt = chain.energy(&chain.cesaro(pt)?, &d);
    let two_p = T::of(2.0).powf(p);
    let slack = T::of(1e-12) * (e_pow + two_p * e_ces);
    let holds = e_pow - two_p * e_ces <= slack;
    let envelope = T::of(64.0) * p * two_p;
    let green_over = ext_ratio(e_green, e_ces_pt);
    let mut flags = Vec::new();
    if !holds {
        flags.push("cesaro_domination_violated".to_string());
    }
    if green_over > envelope {
        flags.push("green_ratio_above_envelope".to_string());
    }
    Ok(DominationReport {
        p,
        t,
        pt,
        e_pow,
        e_ces,
        e_green,
        e_ces_pt,
        pow_over_ces: ext_ratio(e_pow, e_ces),
        green_over_ces_pt: green_over,
        cesaro_domination_holds: holds,
        green_envelope: envelope,
        flags,
    })
}

/// Both sides of the Green-matrix form of the cotype inequality:
/// `sum_i pi_i d(x_i,y_i)^p + (t-1) sum_ij pi_i a_ij d(y_i,y_j)^p` and `sum_ij pi_i B_t(A)_ij d(x_i,x_j)^p`.
pub fn ball_cotype_certificate<T: Real, M: Metric<T>>(
    chain: &ReversibleChain<T>,
    space: &M,
    x: &[M::Point],
    y: &[M::Point],
    t: usize,
    p: T,
) -> Result<(T, T)> {
    if t < 2 {
        return invalid("the Green form needs t >= 2");
    }
    let n = chain.n();
    for len in [x.len(), y.len()] {
        if len != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: len,
            });
        }
    }
    let pi = chain.pi();
    let near = csum((0..n).map(|i| pi[i] * powp(space.distance(&x[i], &y[i]), p)));
    let spread = chain.energy(chain.a(), &powered_distances(space, y, p));
    let rhs = chain.energy(&chain.green(t)?.0, &powered_distances(space, x, p));
    Ok((near + T::of_usize(t - 1) * spread, rhs))
}

/// `t = max(1, ceil(coefficient * n^exponent))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TRule {
    pub coefficient: f64,
    pub exponent: f64,
}

impl Default for TRule {
    fn default() -> Self {
        Self {
            coefficient: 1.0,
            exponent: 1.0,
        }
    }
}

impl TRule {
    /// The choice `t = ceil((4N)^{2p/(2-p)} n^{max(0, 2(1-p)/(2-p))})` for a hypothesized constant `N`.
    pub fn for_constant(p: f64, n_const: f64) -> Self {
        Self {
            coefficient: (4.0 * n_const).powf(2.0 * p / (2.0 - p)),
            exponent: (2.0 * (1.0 - p) / (2.0 - p)).max(0.0),
        }
    }

    pub fn steps(&self, n: usize) -> usize {
        let t = (self.coefficient * (n as f64).powf(self.exponent)).ceil();
        if t.is_finite() && t >= 1.0 {
            t as usize
        } else {
            1
        }
    }
}

/// How the minimum over `y` was bounded in [`path_cotype_experiment`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathSolver {
    /// Exhaustive dynamic program over `y_i in {1, .., n}`, exact for `p <= 1`.
    ExactGrid,
    /// Damped Newton on the primal with a Fenchel dual lower bound, for `1 < p < 2`.
    NewtonDual,
}

/// Lower bound on the cotype constant of the line witnessed by the lazy path on `n` states.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathExperiment<T> {
    pub n: usize,
    pub p: T,
    pub t: usize,
    /// `n^-1 sum_ij A_t(A)_ij |i-j|^p`.
    pub rhs: T,
    /// Certified lower bound on `min_y` of the left side.
    pub lhs_lower: T,
    /// Left side at the returned `y`.
    pub lhs_upper: T,
    /// `lhs_lower / rhs`: every valid constant `N` has `N^p` at least this.
    pub ratio_lower: T,
    pub ratio_upper: T,
    pub y: Vec<T>,
    pub solver: PathSolver,
}

/// `n^-1 (sum_i |i - y_i|^p + t sum_i |y_{i+1} - y_i|^p)`, the cotype left side for the lazy path.
pub fn path_lhs<T: Real>(y: &[T], t: usize, p: T) -> T {
    let n = T::of_usize(y.len());
    let fit = csum(
        y.iter()
            .enumerate()
            .map(|(i, &v)| powp((v - T::of_usize(i + 1)).abs(), p)),
    );
    let spread = csum(y.windows(2).map(|w| powp((w[1] - w[0]).abs(), p)));
    (fit + T::of_usize(t) * spread) / n
}

pub fn path_cotype_experiment<T: Real>(n: usize, p: T, rule: TRule) -> Result<PathExperiment<T>> {
    if !(p > T::zero() && p < T::of(2.0)) {
        return invalid(format!("the line experiment needs 0 < p < 2, got {p}"));
    }
    if n < 2 {
        return invalid(format!("need n >= 2 states, got {n}"));
    }
    let t = rule.steps(n);
    let chain = generate::<T>(ChainKind::PathHolding, n, 0)?;
    let x: Vec<T> = (1..=n).map(T::of_usize).collect();
    let d = Matrix::from_fn(n, n, |i, j| powp((x[i] - x[j]).abs(), p));
    let rhs = chain.energy(&chain.cesaro(t)?, &d);
    let (y, lower, solver) = if p <= T::one() {
        let y = grid_minimizer(n, t, p);
        let v = path_lhs(&y, t, p);
        (y, v, PathSolver::ExactGrid)
    } else {
        let y = newton_minimizer(&x, t, p);
        let lower = path_dual_bound(&x, &y, t, p).max(T::zero());
        (y, lower, PathSolver::NewtonDual)
    };
    let upper = path_lhs(&y, t, p);
    Ok(PathExperiment {
        n,
        p,
        t,
        rhs,
        lhs_lower: lower.min(upper),
        lhs_upper: upper,
        ratio_lower: ext_ratio(lower.min(upper), rhs),
        ratio_upper: ext_ratio(upper, rhs),
        y,
        solver,
    })
}

fn grid_minimizer<T: Real>(n: usize, t: usize, p: T) -> Vec<T> {
    let tt = T::of_usize(t);
    let pw = |k: usize, l: usize| powp(T::of_usize(k.abs_diff(l)), p);
    let mut cost: Vec<T> = (0..n).map(|k| pw(0, k)).collect();
    let mut choice = vec![vec![0usize; n]; n];
    for i in 1..n {
        let mut next = vec![T::infinity(); n];
        for k in 0..n {
            for l in 0..n {
                let c = cost[l] + tt * pw(k, l);
                if c < next[k] {
                    next[k] = c;
                    choice[i][k] = l;
                }
            }
            next[k] += pw(i, k);
        }
        cost = next;
    }
    let mut k = (0..n).fold(0, |b, k| if cost[k] < cost[b] { k } else { b });
    let mut y = vec![T::zero(); n];
    for i in (0..n).rev() {
        y[i] = T::of_usize(k + 1);
        k = choice[i][k];
    }
    y
}

/// Minimizes `sum_i |y_i - x_i|^p + t sum_i |y_{i+1} - y_i|^p` by damped Newton steps on the
/// tridiagonal Hessian.
fn newton_minimizer<T: Real>(x: &[T], t: usize, p: T) -> Vec<T> {
    let n = x.len();
    let tt = T::of_usize(t);
    let floor = T::of(1e-12);
    let obj = |y: &[T]| path_lhs(y, t, p);
    let d1 = |u: T| p * u.signum() * u.abs().powf(p - T::one());
    let d2 = |u: T| p * (p - T::one()) * u.abs().max(floor).powf(p - T::of(2.0));
    let mut y = vec![(x[0] + x[n - 1]) / T::of(2.0); n];
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi = (*yi + *xi) / T::of(2.0);
    }
    let mut f = obj(&y);
    for _ in 0..500 {
        let mut g: Vec<T> = (0..n).map(|i| d1(y[i] - x[i])).collect();
        let mut diag: Vec<T> = (0..n).map(|i| d2(y[i] - x[i])).collect();
        let mut off = vec![T::zero(); n.saturating_sub(1)];
        for e in 0..n - 1 {
            let u = y[e + 1] - y[e];
            let (gu, hu) = (tt * d1(u), tt * d2(u));
            g[e + 1] += gu;
            g[e] -= gu;
            diag[e] += hu;
            diag[e + 1] += hu;
            off[e] = -hu;
        }
        if g.iter().all(|v| v.abs() <= T::of(1e-13)) {
            break;
        }
        let step = solve_tridiagonal(&diag, &off, &g);
        let mut alpha = T::one();
        let mut improved = false;
        for _ in 0..60 {
            let trial: Vec<T> = y.iter().zip(&step).map(|(a, s)| *a - alpha * *s).collect();
            let ft = obj(&trial);
            if ft < f {
                y = trial;
                f = ft;
                improved = true;
                break;
            }
            alpha /= T::of(2.0);
        }
        if !improved {
            break;
        }
    }
    y
}

/// Solves the symmetric tridiagonal system with diagonal `diag` and off-diagonal `off`.
fn solve_tridiagonal<T: Real>(diag: &[T], off: &[T], rhs: &[T]) -> Vec<T> {
    let n = diag.len();
    let mut c = vec![T::zero(); n];
    let mut d = vec![T::zero(); n];
    c[0] = if n > 1 { off[0] / diag[0] } else { T::zero() };
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - off[i - 1] * c[i - 1];
        if i + 1 < n {
            c[i] = off[i] / m;
        }
        d[i] = (rhs[i] - off[i - 1] * d[i - 1]) / m;
    }
    let mut out = d;
    for i in (0..n - 1).rev() {
        out[i] = out[i] - c[i] * out[i + 1];
    }
    out
}

/// Weak-duality lower bound on `min_y` of the path objective, from multipliers read off `y`.
fn path_dual_bound<T: Real>(x: &[T], y: &[T], t: usize, p: T) -> T {
    let n = x.len();
    let nn = T::of_usize(n);
    let c1 = nn.recip();
    let c2 = T::of_usize(t) / nn;
    let q = p / (p - T::one());
    // conjugate of u -> c |u|^p
    let conj = |c: T, s: T| (p - T::one()) * c * (s.abs() / (c * p)).powf(q);
    let lambda: Vec<T> = y
        .windows(2)
        .map(|w| {
            let u = w[1] - w[0];
            c2 * p * u.signum() * u.abs().powf(p - T::one())
        })
        .collect();
    let s = |i: usize| {
        let left = if i > 0 { lambda[i - 1] } else { T::zero() };
        let right = if i + 1 < n { lambda[i] } else { T::zero() };
        left - right
    };
    csum((0..n).map(|i| s(i) * x[i] - conj(c1, s(i)))) - csum(lambda.iter().map(|&l| conj(c2, l)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barycenter::{KarcherMean, LinearMean, TreeBarycenter};
    use crate::metric::{Euclidean, HyperbolicDisk, TreePoint, TreeSpace};

    fn two_cycle() -> ReversibleChain<f64> {
        ReversibleChain::symmetric(Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap())
            .unwrap()
    }

    #[test]
    fn single_state_certificate() {
        let chain = ReversibleChain::<f64>::symmetric(Matrix::identity(1)).unwrap();
        let map = LinearMean::euclidean(2);
        let c = cotype_construct(&chain, &map, &[vec![0.3, -1.0]], 4).unwrap();
        assert_eq!(c.y, c.x);
        assert_eq!((c.lhs, c.rhs_base, c.ratio), (0.0, 0.0, 1.0));
    }

    #[test]
    fn constant_configuration_stays_put() {
        let chain = generate::<f64>(ChainKind::RandomReversible, 5, 3).unwrap();
        let map = LinearMean::euclidean(1);
        let x = vec![vec![2.5]; 5];
        let c = cotype_construct(&chain, &map, &x, 3).unwrap();
        assert!(c.y.iter().all(|y| (y[0] - 2.5).abs() < 1e-15));
        assert!(c.lhs < 1e-28);
    }

    #[test]
    fn euclidean_dp_is_matrix_algebra() {
        // with the linear mean, M^(., r) = A^r x and y = A_t(A) x
        let chain = generate::<f64>(ChainKind::RandomReversible, 4, 11).unwrap();
        let map = LinearMean::euclidean(1);
        let x: Vec<Vec<f64>> = [0.0, 1.0, -2.0, 0.5].iter().map(|v| vec![*v]).collect();
        let layers = dp_layers(chain.a(), &map, &x, 3).unwrap();
        let flat: Vec<f64> = x.iter().map(|v| v[0]).collect();
        let a3 = chain.power(3).matvec(&flat);
        for i in 0..4 {
            assert!((layers[3][i][0] - a3[i]).abs() < 1e-12);
        }
        let y = cesaro_points(&map, &layers).unwrap();
        let ces = chain.cesaro(3).unwrap().matvec(&flat);
        for i in 0..4 {
            assert!((y[i][0] - ces[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn path_chain_certificate_on_tree_respects_bound() {
        let chain = generate::<f64>(ChainKind::PathHolding, 5, 0).unwrap();
        let map = TreeBarycenter::new(TreeSpace::<f64>::path(5));
        let x: Vec<TreePoint<f64>> = [0, 4, 1, 3, 2].into_iter().map(TreePoint::Vertex).collect();
        let c = cotype_construct(&chain, &map, &x, 6).unwrap();
        assert!(c.ratio <= 17.0 + 1e-8, "ratio {}", c.ratio);
        assert!((c.recompute(map.space()).unwrap() - c.ratio).abs() < 1e-9);
    }

    #[test]
    fn contraction_along_the_program() {
        let chain = generate::<f64>(ChainKind::PathHolding, 4, 0).unwrap();
        let map = KarcherMean::default();
        let x = vec![
            vec![0.1, 0.2],
            vec![-0.5, 0.1],
            vec![0.3, -0.6],
            vec![0.0, 0.7],
        ];
        let layers = dp_layers(chain.a(), &map, &x, 4).unwrap();
        let zs = vec![vec![0.0, 0.0], vec![0.6, 0.6], vec![-0.2, 0.4]];
        assert!(dp_contraction_residual(chain.a(), &map, &layers, &zs) <= 1e-9);
    }

    #[test]
    fn pisier_equality_for_one_euclidean_step() {
        let map = LinearMean::euclidean(1);
        let z1 = vec![vec![1.0], vec![4.0], vec![-2.0]];
        let mu = vec![0.5, 0.25, 0.25];
        let mean = vec![0.5 + 1.0 - 0.5];
        let inst = MartingaleInstance::new(
            mu,
            vec![Partition::trivial(3), Partition::singletons(3)],
            vec![vec![mean; 3], z1],
        )
        .unwrap();
        let r: f64 = pisier_check(&map, &inst, &vec![3.0], 2.0, 1.0).unwrap();
        assert!(r.abs() < 1e-12, "residual {r}");
    }

    #[test]
    fn constant_martingale_has_zero_residual() {
        let map = LinearMean::euclidean(2);
        let pt = vec![0.5, -0.5];
        let inst = MartingaleInstance::new(
            vec![0.25; 4],
            vec![
                Partition::trivial(4),
                Partition::from_atoms(4, vec![vec![0, 1], vec![2, 3]]).unwrap(),
                Partition::singletons(4),
            ],
            vec![vec![pt.clone(); 4]; 3],
        )
        .unwrap();
        assert_eq!(
            pisier_check(&map, &inst, &vec![1.0, 1.0], 2.0, 1.0).unwrap(),
            0.0
        );
    }

    #[test]
    fn martingale_validation_errors() {
        let p = vec![vec![0.0]; 2];
        let not_nested = MartingaleInstance::<Vec<f64>, f64>::new(
            vec![0.5, 0.5],
            vec![
                Partition::trivial(2),
                Partition::singletons(2),
                Partition::trivial(2),
            ],
            vec![p.clone(), p.clone(), p.clone()],
        );
        assert!(matches!(not_nested, Err(Error::NotNested { level: 2, .. })));
        let zero_mass = MartingaleInstance::<Vec<f64>, f64>::new(
            vec![1.0, 0.0],
            vec![Partition::trivial(2)],
            vec![p.clone()],
        );
        assert!(zero_mass.is_err());
        let map = LinearMean::euclidean(1);
        let bad = MartingaleInstance::new(
            vec![0.5, 0.5],
            vec![Partition::trivial(2), Partition::singletons(2)],
            vec![vec![vec![1.0]; 2], vec![vec![0.0], vec![1.0]]],
        )
        .unwrap();
        assert!(matches!(
            pisier_check(&map, &bad, &vec![0.0], 2.0, 1.0),
            Err(Error::NotMartingale {
                level: 1,
                atom: 0,
                ..
            })
        ));
    }

    #[test]
    fn dp_martingale_on_hyperbolic_disk() {
        let chain = generate::<f64>(ChainKind::RandomReversible, 3, 5).unwrap();
        let map = KarcherMean::new(HyperbolicDisk::default());
        let x = vec![vec![0.2, 0.1], vec![-0.4, 0.3], vec![0.1, -0.5]];
        for start in 0..3 {
            let inst = dp_martingale(&chain, &map, &x, 3, start).unwrap();
            assert_eq!(inst.mu().len(), 27);
            let r = pisier_check(&map, &inst, &x[start], 2.0, 1.0).unwrap();
            assert!(r <= 1e-8, "residual {r}");
        }
    }

    #[test]
    fn dp_martingale_skips_null_paths_and_gates_size() {
        let chain = generate::<f64>(ChainKind::PathHolding, 3, 0).unwrap();
        let map = LinearMean::euclidean(1);
        let x = vec![vec![0.0], vec![1.0], vec![5.0]];
        let inst = dp_martingale(&chain, &map, &x, 2, 0).unwrap();
        // from state 0 the walk reaches {0,1} then {0,1,2} minus null moves
        assert_eq!(inst.mu().len(), 4);
        assert!(pisier_check(&map, &inst, &x[0], 2.0, 1.0).unwrap() <= 1e-12);
        let big = generate::<f64>(ChainKind::Complete, 10, 0).unwrap();
        assert!(dp_martingale(&big, &map, &vec![vec![0.0]; 10], 6, 0).is_err());
    }

    #[test]
    fn two_cycle_domination() {
        let x = vec![vec![0.0], vec![1.0]];
        let r = domination_report(&two_cycle(), &Euclidean::new(1), &x, 2, 2.0).unwrap();
        assert_eq!(r.e_pow, 0.0);
        assert!((r.e_ces - 0.5).abs() < 1e-15);
        assert!(r.cesaro_domination_holds);
        let flat = domination_report(
            &two_cycle(),
            &Euclidean::new(1),
            &[vec![3.0], vec![3.0]],
            2,
            2.0,
        )
        .unwrap();
        assert_eq!((flat.e_pow, flat.e_ces, flat.e_green), (0.0, 0.0, 0.0));
        assert!(flat.cesaro_domination_holds);
    }

    #[test]
    fn ball_sides_for_fixed_points() {
        let chain = generate::<f64>(ChainKind::RandomReversible, 4, 2).unwrap();
        let space = Euclidean::new(1);
        let x: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64 * 0.7]).collect();
        let (lhs, _) = ball_cotype_certificate(&chain, &space, &x, &x, 2, 2.0).unwrap();
        let spread = chain.energy(chain.a(), &powered_distances(&space, &x, 2.0));
        assert!((lhs - spread).abs() < 1e-15);
        assert!(ball_cotype_certificate(&chain, &space, &x, &x, 1, 2.0).is_err());
        let one = ReversibleChain::<f64>::symmetric(Matrix::identity(1)).unwrap();
        assert_eq!(
            ball_cotype_certificate(&one, &space, &x[..1], &x[..1], 3, 2.0).unwrap(),
            (0.0, 0.0)
        );
    }

    #[test]
    fn path_experiment_small_cases() {
        let e = path_cotype_experiment::<f64>(2, 1.0, TRule::default()).unwrap();
        assert!(e.ratio_lower >= 1.0 - 1e-12);
        assert!(path_cotype_experiment::<f64>(8, 2.0, TRule::default()).is_err());
        let e = path_cotype_experiment::<f64>(12, 1.5, TRule::default()).unwrap();
        assert!(e.lhs_lower <= e.lhs_upper);
        assert!(
            (e.lhs_upper - e.lhs_lower) <= 1e-8 * e.lhs_upper,
            "gap {} {}",
            e.lhs_lower,
            e.lhs_upper
        );
    }

    #[test]
    fn grid_matches_brute_force_for_p_one() {
        // three states, values in {1,2,3}: enumerate all 27 assignments
        let (n, t, p) = (3, 2, 1.0_f64);
        let mut best = f64::INFINITY;
        for a in 1..=3 {
            for b in 1..=3 {
                for c in 1..=3 {
                    best = best.min(path_lhs(&[a as f64, b as f64, c as f64], t, p));
                }
            }
        }
        let y = grid_minimizer::<f64>(n, t, p);
        assert!((path_lhs(&y, t, p) - best).abs() < 1e-15);
    }
}
