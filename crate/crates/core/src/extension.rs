//! Lipschitz extension: nearest-net rounding, the per-`H` certificate pipeline,
//! a finite minimal-Lipschitz-extension solver and the McShane formula.

use serde::Serialize;

use crate::barycenter::{BarycenterMap, PointOf};
use crate::cotype::{cotype_construct, powered_distances};
use crate::error::{invalid, Error, Result};
use crate::linalg::Matrix;
use crate::markov::{chain_tol, ReversibleChain};
use crate::metric::{Euclidean, Metric};
use crate::scalar::{csum, powp, Real};

/// Largest power of two accepted for the time parameter of [`build_h_certificate`].
pub const MAX_H_TIME: usize = 1 << 14;

/// A normed target whose points are coordinate vectors, so that pairwise distance
/// constraints are convex in the coordinates.
pub trait NormedTarget<T: Real>: Metric<T, Point = Vec<T>> {
    fn coordinate_dim(&self) -> usize;

    fn norm(&self, w: &[T]) -> T;

    /// A subgradient of the norm at a nonzero `w`.
    fn subgradient(&self, w: &[T]) -> Vec<T>;
}

impl<T: Real> NormedTarget<T> for Euclidean {
    fn coordinate_dim(&self) -> usize {
        self.dim
    }

    fn norm(&self, w: &[T]) -> T {
        csum(w.iter().map(|&x| x * x)).sqrt()
    }

    fn subgradient(&self, w: &[T]) -> Vec<T> {
        let r = NormedTarget::norm(self, w);
        w.iter().map(|&x| x / r).collect()
    }
}

/// A finite set `S` in a source space, the subset `Z` on which a map `f` is prescribed,
/// and the values of `f` there.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExtensionInstance<P, Q, T> {
    points: Vec<P>,
    anchors: Vec<usize>,
    values: Vec<Q>,
    lip: T,
}

impl<P: Clone, Q: Clone, T: Real> ExtensionInstance<P, Q, T> {
    /// `values[k]` is the image of `points[anchors[k]]`.
    pub fn new<MX, MY>(
        source: &MX,
        target: &MY,
        points: Vec<P>,
        anchors: Vec<usize>,
        values: Vec<Q>,
    ) -> Result<Self>
    where
        MX: Metric<T, Point = P>,
        MY: Metric<T, Point = Q>,
    {
        if anchors.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: anchors.len(),
                got: values.len(),
            });
        }
        if anchors.is_empty() {
            return invalid("the prescribed set must be nonempty");
        }
        let mut seen = vec![false; points.len()];
        for &a in &anchors {
            if a >= points.len() || seen[a] {
                return invalid(format!("anchor index {a} is out of range or repeated"));
            }
            seen[a] = true;
        }
        for p in &points {
            source.check_point(p)?;
        }
        for q in &values {
            target.check_point(q)?;
        }
        for i in 0..points.len() {
            for j in 0..i {
                if !(source.distance(&points[i], &points[j]) > T::zero()) {
                    return invalid(format!("points {j} and {i} coincide"));
                }
            }
        }
        let mut inst = Self {
            points,
            anchors,
            values,
            lip: T::zero(),
        };
        inst.lip = inst.lipschitz_on_anchors(source, target);
        Ok(inst)
    }

    /// `max d_Y(f(a), f(b)) / d_X(a, b)` over anchor pairs.
    pub fn lipschitz_on_anchors<MX, MY>(&self, source: &MX, target: &MY) -> T
    where
        MX: Metric<T, Point = P>,
        MY: Metric<T, Point = Q>,
    {
        let mut lip = T::zero();
        for k in 0..self.anchors.len() {
            for l in 0..k {
                let dx =
                    source.distance(&self.points[self.anchors[k]], &self.points[self.anchors[l]]);
                lip = lip.max(target.distance(&self.values[k], &self.values[l]) / dx);
            }
        }
        lip
    }

    pub fn points(&self) -> &[P] {
        &self.points
    }

    pub fn anchors(&self) -> &[usize] {
        &self.anchors
    }

    pub fn values(&self) -> &[Q] {
        &self.values
    }

    pub fn lip(&self) -> T {
        self.lip
    }

    /// Indices of `S` outside the prescribed set, in increasing order.
    pub fn free(&self) -> Vec<usize> {
        let mut is_anchor = vec![false; self.points.len()];
        self.anchors.iter().for_each(|&a| is_anchor[a] = true);
        (0..self.points.len()).filter(|&i| !is_anchor[i]).collect()
    }

    /// Prescribed points followed by the free points.
    pub fn split(&self) -> (Vec<P>, Vec<P>) {
        let z = self
            .anchors
            .iter()
            .map(|&a| self.points[a].clone())
            .collect();
        let x = self
            .free()
            .into_iter()
            .map(|i| self.points[i].clone())
            .collect();
        (z, x)
    }
}

/// Both energies of the rounding step and the bound they must satisfy.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundingReport<T> {
    /// `w_i = z_{index[i]}`.
    pub index: Vec<usize>,
    /// `sum_ir pi_i b_ir d(w_i, z_r)^p`.
    pub near: T,
    /// `sum_ij pi_i c_ij d(w_i, w_j)^p`.
    pub spread: T,
    /// `sum_rs (B^T D_pi C B)_rs d(z_r, z_s)^p`.
    pub base: T,
    /// `3^p * base`.
    pub bound: T,
}

fn check_stochastic<T: Real>(m: &Matrix<T>, name: &str) -> Result<()> {
    let tol = chain_tol::<T>(m.rows().max(m.cols())) * T::of(16.0);
    for i in 0..m.rows() {
        if m.row(i).iter().any(|v| !(*v >= T::zero())) {
            return invalid(format!("{name} has a negative entry in row {i}"));
        }
        let s = csum(m.row(i).iter().copied());
        if (s - T::one()).abs() > tol {
            return invalid(format!("row {i} of {name} sums to {s}"));
        }
    }
    Ok(())
}

/// Rounds the `B`-averages of `z` (in the Frechet embedding into `l_inf^m`) to their nearest
/// `z_r`, lowest index first on ties, and asserts both energy bounds.
pub fn round_to_net<T: Real, M: Metric<T>>(
    space: &M,
    z: &[M::Point],
    b: &Matrix<T>,
    c: &Matrix<T>,
    pi: &[T],
    p: T,
) -> Result<(Vec<M::Point>, RoundingReport<T>)> {
    let (n, m) = (b.rows(), b.cols());
    if z.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: z.len(),
        });
    }
    if c.rows() != n || c.cols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: c.rows(),
        });
    }
    if !(p >= T::one()) {
        return invalid(format!("rounding needs p >= 1, got {p}"));
    }
    check_stochastic(b, "B")?;
    ReversibleChain::new(c.clone(), pi.to_vec())?;

    let emb = Matrix::from_fn(m, m, |r, s| space.distance(&z[r], &z[s]));
    let sup = |u: &[T], v: &[T]| {
        u.iter()
            .zip(v)
            .fold(T::zero(), |acc, (a, b)| acc.max((*a - *b).abs()))
    };
    let index: Vec<usize> = (0..n)
        .map(|i| {
            let y: Vec<T> = (0..m)
                .map(|k| csum((0..m).map(|r| b[(i, r)] * emb[(r, k)])))
                .collect();
            let mut best = 0;
            let mut best_d = sup(&y, emb.row(0));
            for r in 1..m {
                let d = sup(&y, emb.row(r));
                if d < best_d {
                    best = r;
                    best_d = d;
                }
            }
            best
        })
        .collect();

    let dz = Matrix::from_fn(m, m, |r, s| powp(emb[(r, s)], p));
    let near = csum(
        (0..n)
            .flat_map(|i| (0..m).map(move |r| (i, r)))
            .map(|(i, r)| pi[i] * b[(i, r)] * dz[(index[i], r)]),
    );
    let spread = csum(
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| pi[i] * c[(i, j)] * dz[(index[i], index[j])]),
    );
    let dpb = Matrix::from_fn(n, m, |i, r| pi[i] * b[(i, r)]);
    let weights = dpb.transpose().matmul(&c.matmul(b));
    let base = csum(
        (0..m)
            .flat_map(|r| (0..m).map(move |s| (r, s)))
            .map(|(r, s)| weights[(r, s)] * dz[(r, s)]),
    );
    let bound = T::of(3.0).powf(p) * base;
    let slack = T::of(1e-8) * (T::one() + bound);
    if near > bound + slack || spread > bound + slack {
        return Err(Error::Violation(format!(
            "rounding energies ({near}, {spread}) exceed 3^p bound {bound}"
        )));
    }
    let w = index.iter().map(|&r| z[r].clone()).collect();
    Ok((
        w,
        RoundingReport {
            index,
            near,
            spread,
            base,
            bound,
        },
    ))
}

/// Inputs of [`build_h_certificate`] besides the instance and `H`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HOptions<T> {
    pub p: T,
    /// Markov type constant of the source space.
    pub m_const: T,
    /// Cotype constant of the target map.
    pub n_const: T,
    /// Starting time; doubled until the diagonal of `A` is nonnegative.
    pub t: Option<usize>,
    pub delta: Option<T>,
}

/// One run of the extension pipeline for a symmetric nonnegative `H = [[U, W^T], [W, V]]`,
/// where `U` is indexed by the prescribed points and `V` by the free points.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HCertificate<P, T> {
    pub h: Matrix<T>,
    pub pi: Vec<T>,
    pub b: Matrix<T>,
    pub a: Matrix<T>,
    pub t: usize,
    pub tau: usize,
    pub theta: T,
    pub epsilon: T,
    pub delta: T,
    pub rounding: RoundingReport<T>,
    pub w: Vec<P>,
    pub y: Vec<P>,
    pub cotype_ratio: T,
    pub cotype_certified: bool,
    pub markov_type_certified: bool,
    pub lip: T,
    pub lambda: T,
    pub lhs: T,
    pub rhs: T,
    pub holds: bool,
}

/// `sum_ij m_ij d_ij` for two tables of the same shape.
fn pair_sum<T: Real>(m: &Matrix<T>, d: &Matrix<T>) -> T {
    csum(m.iter().zip(d.iter()).map(|(a, b)| *a * *b))
}

/// Runs the pipeline for `H` and checks `L_H(y) <= Lambda (R_H + delta)`.
pub fn build_h_certificate<T, MX, BY>(
    source: &MX,
    target: &BY,
    inst: &ExtensionInstance<MX::Point, PointOf<T, BY>, T>,
    h: &Matrix<T>,
    opts: HOptions<T>,
) -> Result<HCertificate<PointOf<T, BY>, T>>
where
    T: Real,
    MX: Metric<T>,
    BY: BarycenterMap<T>,
{
    let ys = target.space();
    let p = opts.p;
    let (z, x) = inst.split();
    let (m, n) = (z.len(), x.len());
    if n == 0 {
        return invalid("no free points to extend to");
    }
    if h.rows() != m + n || h.cols() != m + n {
        return Err(Error::DimensionMismatch {
            expected: m + n,
            got: h.rows(),
        });
    }
    if h.iter().any(|v| !(*v >= T::zero())) || !h.is_symmetric(T::zero()) {
        return invalid("H must be symmetric with nonnegative entries");
    }
    if !(opts.m_const > T::zero()) || !(opts.n_const > T::zero()) || !(p >= T::one()) {
        return invalid("need p >= 1 and positive constants M, N");
    }
    let u = Matrix::from_fn(m, m, |r, s| h[(r, s)]);
    let w_blk = Matrix::from_fn(n, m, |i, r| h[(m + i, r)]);
    let v = Matrix::from_fn(
        n,
        n,
        |i, j| if i == j { T::zero() } else { h[(m + i, m + j)] },
    );

    let fz = inst.values().to_vec();
    let dxx = powered_distances(source, &x, p);
    let dzz = powered_distances(source, &z, p);
    let dxz = Matrix::from_fn(n, m, |i, r| powp(source.distance(&x[i], &z[r]), p));
    let total = csum(dxx.iter().chain(dzz.iter()).chain(dxz.iter()).copied());
    let delta = match opts.delta {
        Some(d) if d > T::zero() => d,
        Some(d) => return invalid(format!("delta must be positive, got {d}")),
        None if total > T::zero() => T::of(1e-6) * total,
        None => T::of(1e-12),
    };
    let sxz = csum(dxz.iter().copied());
    let eps = if sxz > T::zero() {
        (delta / (T::of(2.0) * sxz)).min(T::of(0.5))
    } else {
        T::of(0.5)
    };

    let me = T::of_usize(m) * eps;
    let row_w: Vec<T> = (0..n)
        .map(|i| me + csum(w_blk.row(i).iter().copied()))
        .collect();
    let norm = csum(row_w.iter().copied());
    let pi: Vec<T> = row_w.iter().map(|&r| r / norm).collect();
    let b = Matrix::from_fn(n, m, |i, r| (eps + w_blk[(i, r)]) / row_w[i]);

    let two_p = T::of(2.0).powf(p);
    let coef = T::of(2.0) * two_p / ((two_p + T::one()) * opts.m_const.powf(p));
    let load = (0..n)
        .map(|i| csum(v.row(i).iter().copied()) / row_w[i])
        .fold(T::zero(), T::max);
    let mut t = opts.t.unwrap_or(1).max(1).next_power_of_two();
    while coef * load > T::of_usize(t) {
        t *= 2;
        if t > MAX_H_TIME {
            return invalid(format!(
                "t would exceed {MAX_H_TIME} before the diagonal of A is nonnegative"
            ));
        }
    }
    let tt = T::of_usize(t);
    let mut a = Matrix::from_fn(n, n, |i, j| {
        if i == j {
            T::zero()
        } else {
            coef / tt * v[(i, j)] / row_w[i]
        }
    });
    for i in 0..n {
        a[(i, i)] = (T::one() - csum(a.row(i).iter().copied())).max(T::zero());
    }
    let chain = ReversibleChain::new(a.clone(), pi.clone())?;
    let tau = ((tt / two_p).ceil().to_usize().unwrap_or(1)).max(1);
    let theta =
        (two_p + T::one()) * opts.m_const.powf(p) * (tt + T::one()) / (T::of(2.0) * two_p) * norm;

    let cesaro = chain.cesaro(tau)?;
    let (w, rounding) = round_to_net(ys, &fz, &b, &cesaro, &pi, p)?;
    let cert = cotype_construct(&chain, target, &w, tau)?;
    let n_p = opts.n_const.powf(p);
    let cotype_certified = cert.ratio <= n_p * (T::one() + T::of(1e-8));

    let mut markov_type_certified = true;
    let base = chain.energy(chain.a(), &dxx);
    let mut power = Matrix::identity(n);
    for k in 1..tau {
        power = power.matmul(chain.a());
        let e = chain.energy(&power, &dxx);
        if e > opts.m_const.powf(p) * T::of_usize(k) * base * (T::one() + T::of(1e-9))
            + T::of(1e-12)
        {
            markov_type_certified = false;
            break;
        }
    }

    let y = cert.y;
    let lip = inst.lip();
    let lambda =
        T::of(18.0).powf(p) / T::of(3.0) * (n_p + T::one()) * opts.m_const.powf(p) * lip.powf(p);
    let dy_zz = powered_distances(ys, &fz, p);
    let dy_yy = powered_distances(ys, &y, p);
    let dy_yz = Matrix::from_fn(n, m, |i, r| powp(ys.distance(&y[i], &fz[r]), p));
    let two = T::of(2.0);
    let rhs = pair_sum(&u, &dzz) + two * pair_sum(&w_blk, &dxz) + pair_sum(&v, &dxx);
    let lhs = pair_sum(&u, &dy_zz) + two * pair_sum(&w_blk, &dy_yz) + pair_sum(&v, &dy_yy);
    let holds = lhs <= lambda * (rhs + delta) * (T::one() + T::of(1e-12));
    Ok(HCertificate {
        h: h.clone(),
        pi,
        b,
        a,
        t,
        tau,
        theta,
        epsilon: eps,
        delta,
        rounding,
        w,
        y,
        cotype_ratio: cert.ratio,
        cotype_certified,
        markov_type_certified,
        lip,
        lambda,
        lhs,
        rhs,
        holds,
    })
}

/// `F(x) = min_s f(s) + L d(x, s)` over the prescribed points, for a real-valued `f`.
pub fn mcshane_at<T: Real, M: Metric<T>>(
    source: &M,
    inst: &ExtensionInstance<M::Point, Vec<T>, T>,
    x: &M::Point,
) -> Result<T> {
    let mut best = T::infinity();
    for (k, &a) in inst.anchors().iter().enumerate() {
        let v = inst.values()[k].as_slice();
        if v.len() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: v.len(),
            });
        }
        best = best.min(v[0] + inst.lip() * source.distance(x, &inst.points()[a]));
    }
    Ok(best)
}

/// The McShane extension evaluated on every point of `S`.
pub fn mcshane_extend<T: Real, M: Metric<T>>(
    source: &M,
    inst: &ExtensionInstance<M::Point, Vec<T>, T>,
) -> Result<Vec<T>> {
    inst.points()
        .iter()
        .map(|x| mcshane_at(source, inst, x))
        .collect()
}

/// Result of [`min_lipschitz_extension`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExtensionSolution<T> {
    /// Lipschitz constant of the returned extension over all pairs of `S`.
    pub l_star: T,
    /// Largest `L` at which the inner solver reported infeasibility (at least `|f|_Lip`).
    pub l_lower: T,
    pub lip_f: T,
    /// `F` on every point of `S`, in the order of the instance.
    pub values: Vec<Vec<T>>,
    pub bisection_steps: usize,
    pub sweeps: usize,
}

/// Inner solver limits.
const MAX_SWEEPS: usize = 100_000;
const STALL_WINDOW: usize = 2_000;

struct Feasibility<'a, T, Y> {
    target: &'a Y,
    d: &'a Matrix<T>,
    pairs: Vec<(usize, usize)>,
    free: Vec<bool>,
}

impl<T: Real, Y: NormedTarget<T>> Feasibility<'_, T, Y> {
    /// Largest `d_Y(F_i, F_j) / d_X(i, j)` over all pairs.
    fn lipschitz(&self, f: &[Vec<T>]) -> T {
        let n = f.len();
        let mut worst = T::zero();
        for i in 0..n {
            for j in 0..i {
                worst = worst.max(self.target.distance(&f[i], &f[j]) / self.d[(i, j)]);
            }
        }
        worst
    }

    /// Cyclic subgradient projections onto `d_Y(F_i, F_j) <= L d_X(i, j)`.
    /// Returns the number of sweeps when `F` reaches Lipschitz constant `L (1 + slack)`.
    fn solve(&self, f: &mut [Vec<T>], l: T, slack: T, sweeps: &mut usize) -> bool {
        let aim = l * (T::one() - slack / T::of(4.0));
        let mut best = T::infinity();
        let mut best_at = 0;
        for sweep in 0..MAX_SWEEPS {
            *sweeps += 1;
            let mut worst = T::zero();
            for &(i, j) in &self.pairs {
                let diff: Vec<T> = f[i].iter().zip(&f[j]).map(|(a, b)| *a - *b).collect();
                let g = self.target.norm(&diff);
                let dij = self.d[(i, j)];
                worst = worst.max(g / dij - l);
                let c = aim * dij;
                if g <= c {
                    continue;
                }
                let xi = self.target.subgradient(&diff);
                let movers = usize::from(self.free[i]) + usize::from(self.free[j]);
                let step = (g - c) / (T::of_usize(movers) * csum(xi.iter().map(|v| *v * *v)));
                if self.free[i] {
                    f[i].iter_mut().zip(&xi).for_each(|(v, s)| *v -= step * *s);
                }
                if self.free[j] {
                    f[j].iter_mut().zip(&xi).for_each(|(v, s)| *v += step * *s);
                }
            }
            if worst <= slack * l {
                return true;
            }
            if worst < best * T::of(0.99) {
                best = worst;
                best_at = sweep;
            } else if sweep - best_at > STALL_WINDOW {
                return false;
            }
        }
        false
    }
}

/// Smallest Lipschitz constant of an extension of `f` to all of `S`, by bisection on `L`
/// with a convex feasibility solve at each step.
pub fn min_lipschitz_extension<T, MX, Y>(
    source: &MX,
    target: &Y,
    inst: &ExtensionInstance<MX::Point, Vec<T>, T>,
    tol: T,
) -> Result<ExtensionSolution<T>>
where
    T: Real,
    MX: Metric<T>,
    Y: NormedTarget<T>,
{
    if !(tol > T::zero()) {
        return invalid(format!("tolerance must be positive, got {tol}"));
    }
    let dim = target.coordinate_dim();
    if let Some(v) = inst.values().iter().find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: v.len(),
        });
    }
    let pts = inst.points();
    let n = pts.len();
    let d = Matrix::from_fn(n, n, |i, j| source.distance(&pts[i], &pts[j]));
    let mut free = vec![true; n];
    inst.anchors().iter().for_each(|&a| free[a] = false);
    let pairs = (0..n)
        .flat_map(|i| (0..i).map(move |j| (i, j)))
        .filter(|&(i, j)| free[i] || free[j])
        .collect();
    let lip_f = inst.lip();

    let mut values = vec![Vec::new(); n];
    for (k, &a) in inst.anchors().iter().enumerate() {
        values[a] = inst.values()[k].clone();
    }
    for i in (0..n).filter(|&i| free[i]) {
        let mut nearest = 0;
        for k in 1..inst.anchors().len() {
            if d[(i, inst.anchors()[k])] < d[(i, inst.anchors()[nearest])] {
                nearest = k;
            }
        }
        values[i] = inst.values()[nearest].clone();
    }

    let prob = Feasibility {
        target,
        d: &d,
        pairs,
        free,
    };
    let mut hi = prob.lipschitz(&values);
    let mut lo = lip_f;
    let mut steps = 0;
    let mut sweeps = 0;
    let gap = |lo: T, hi: T| hi - lo <= tol * (T::one() + hi) / T::of(2.0);
    let mut first = true;
    while !gap(lo, hi) && steps < 200 {
        steps += 1;
        let trial = if first {
            lo + tol * (T::one() + lo) / T::of(4.0)
        } else {
            (lo + hi) / T::of(2.0)
        };
        first = false;
        let mut f = values.clone();
        if prob.solve(&mut f, trial, tol / T::of(8.0), &mut sweeps) {
            let achieved = prob.lipschitz(&f);
            if achieved < hi {
                hi = achieved;
                values = f;
            }
        } else {
            lo = lo.max(trial);
        }
    }
    Ok(ExtensionSolution {
        l_star: hi,
        l_lower: lo,
        lip_f,
        values,
        bisection_steps: steps,
        sweeps,
    })
}
