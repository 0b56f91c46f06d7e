//! Kalton's construction: a net quotient `Q` of `l_1^N` onto `R^n`, an odd section `phi`,
//! a separated symmetric set `A_n` on the sphere, the spaces `Y_theta` and the maps `f_theta`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cotype::CotypeCertificate;
use crate::error::{invalid, Error, Result};
use crate::extension::{min_lipschitz_extension, ExtensionInstance, NormedTarget};
use crate::linalg::Matrix;
use crate::lp::min_l1_preimage;
use crate::metric::{Euclidean, Metric};
use crate::scalar::{csum, Real};

/// Tolerance for the section identities and LP optimality.
pub const SECTION_TOL: f64 = 1e-9;

/// Sizes of the random streams behind a [`KaltonInstance`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KaltonOptions {
    /// Candidate points for the net (alternating between the ball and its boundary sphere).
    pub net_stream: usize,
    /// Directions `v` in the half sphere whose minimal preimages are checked.
    pub covering_checks: usize,
    /// Sphere points offered to the greedy construction of `A_n`, and again to its verification.
    pub sphere_stream: usize,
    pub max_net: usize,
}

impl Default for KaltonOptions {
    fn default() -> Self {
        Self {
            net_stream: 6000,
            covering_checks: 100,
            sphere_stream: 4000,
            max_net: 4096,
        }
    }
}

/// Results of the checks run while building an instance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KaltonChecks<T> {
    /// Radius the net was packed at (halved on covering failures).
    pub net_radius: T,
    /// Largest distance from a net-stream point to the net.
    pub stream_covering_radius: T,
    pub covering_checks: usize,
    /// Largest minimal `l_1` norm over the checked directions (at most 1).
    pub worst_covering_norm: T,
    pub separation: T,
    pub min_pair_distance: T,
    /// Points of the verification stream that still had to be added to `A_n`.
    pub late_additions: usize,
    /// Largest distance from a verification-stream point to `A_n`.
    pub sphere_gap: T,
    pub worst_section_norm: T,
    pub worst_section_residual: T,
    pub worst_duality_gap: T,
}

/// The data of the construction in dimension `n`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KaltonInstance<T> {
    pub n: usize,
    pub theta: T,
    pub seed: u64,
    /// `n x N` matrix whose columns are the net points.
    pub q: Matrix<T>,
    /// `A_n`, stored in pairs: entry `2k + 1` is the negative of entry `2k`.
    pub sphere_net: Vec<Vec<T>>,
    /// `phi(a)` for each `a` in `sphere_net`.
    pub section: Vec<Vec<T>>,
    pub checks: KaltonChecks<T>,
}

fn norm2<T: Real>(v: &[T]) -> T {
    csum(v.iter().map(|&x| x * x)).sqrt()
}

fn norm1<T: Real>(v: &[T]) -> T {
    csum(v.iter().map(|x| x.abs()))
}

fn dist2<T: Real>(a: &[T], b: &[T]) -> T {
    csum(a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y))).sqrt()
}

fn sphere_point<T: Real>(n: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r > 1e-3 && r <= 1.0 {
            return v.into_iter().map(|x| T::of(x / r)).collect();
        }
    }
}

fn ball_point<T: Real>(n: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if v.iter().map(|x| x * x).sum::<f64>() <= 1.0 {
            return v.into_iter().map(T::of).collect();
        }
    }
}

/// Farthest-point traversal of `stream`, extended until every stream point is within `radius`.
/// Returns whether the radius was reached within `cap` points.
fn farthest_points<T: Real>(
    stream: &[Vec<T>],
    net: &mut Vec<usize>,
    near: &mut [T],
    radius: T,
    cap: usize,
) -> bool {
    loop {
        let (far, gap) =
            near.iter().enumerate().fold(
                (0, T::neg_infinity()),
                |b, (i, &d)| if d > b.1 { (i, d) } else { b },
            );
        if gap <= radius {
            return true;
        }
        if net.len() >= cap {
            return false;
        }
        net.push(far);
        for (d, p) in near.iter_mut().zip(stream) {
            *d = d.min(dist2(p, &stream[far]));
        }
    }
}

/// One greedy pass: keeps each stream point farther than `sep` from the set, with its antipode.
fn greedy_symmetric<T: Real>(set: &mut Vec<Vec<T>>, stream: &[Vec<T>], sep: T) -> usize {
    let mut added = 0;
    for u in stream {
        if set.iter().all(|a| dist2(a, u) > sep) {
            set.push(u.clone());
            set.push(u.iter().map(|&x| -x).collect());
            added += 1;
        }
    }
    added
}

/// Builds and verifies an instance in dimension `n` with exponent `theta`.
pub fn build_instance<T: Real>(
    n: usize,
    theta: T,
    seed: u64,
    opts: &KaltonOptions,
) -> Result<KaltonInstance<T>> {
    if !(2..=8).contains(&n) {
        return invalid(format!("dimension must lie in [2, 8], got {n}"));
    }
    if !(theta > T::zero() && theta <= T::one()) {
        return invalid(format!("theta must lie in (0, 1], got {theta}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stream: Vec<Vec<T>> = (0..opts.net_stream)
        .map(|k| {
            if k % 2 == 0 {
                ball_point(n, &mut rng)
            } else {
                sphere_point(n, &mut rng)
            }
        })
        .collect();
    let directions: Vec<Vec<T>> = (0..opts.covering_checks)
        .map(|_| {
            sphere_point::<T>(n, &mut rng)
                .into_iter()
                .map(|x| x / T::of(2.0))
                .collect()
        })
        .collect();

    let mut net = Vec::new();
    let mut near = vec![T::infinity(); stream.len()];
    let mut radius = T::of(0.5);
    let (q, worst_covering_norm) = loop {
        if !farthest_points(&stream, &mut net, &mut near, radius, opts.max_net) {
            return Err(Error::Numerical(format!(
                "net exceeded {} points before reaching radius {radius}",
                opts.max_net
            )));
        }
        let capacity = (T::one() + T::of(2.0) / radius).powi(n as i32);
        if T::of_usize(net.len()) > capacity {
            return Err(Error::Violation(format!(
                "net of {} points exceeds the packing bound {capacity}",
                net.len()
            )));
        }
        let q = Matrix::from_fn(n, net.len(), |r, k| stream[net[k]][r]);
        let worst = directions
            .par_iter()
            .map(|v| min_l1_preimage(&q, v).map(|s| s.norm))
            .collect::<Result<Vec<T>>>()?
            .into_iter()
            .fold(T::zero(), T::max);
        if worst <= T::one() + T::of(SECTION_TOL) {
            break (q, worst);
        }
        radius /= T::of(2.0);
    };
    let stream_covering_radius = near.iter().copied().fold(T::zero(), T::max);

    let sep = T::of_usize(n).powf(T::of(-0.25));
    let first: Vec<Vec<T>> = (0..opts.sphere_stream)
        .map(|_| sphere_point(n, &mut rng))
        .collect();
    let verify: Vec<Vec<T>> = (0..opts.sphere_stream)
        .map(|_| sphere_point(n, &mut rng))
        .collect();
    let mut sphere_net = Vec::new();
    greedy_symmetric(&mut sphere_net, &first, sep);
    let late_additions = greedy_symmetric(&mut sphere_net, &verify, sep);
    let sphere_gap = verify
        .iter()
        .map(|u| {
            sphere_net
                .iter()
                .map(|a| dist2(a, u))
                .fold(T::infinity(), T::min)
        })
        .fold(T::zero(), T::max);
    let mut min_pair = T::infinity();
    for i in 0..sphere_net.len() {
        for j in 0..i {
            min_pair = min_pair.min(dist2(&sphere_net[i], &sphere_net[j]));
        }
    }
    if !(min_pair > sep) || sphere_gap > sep {
        return Err(Error::Violation(format!(
            "sphere net separation {min_pair} or gap {sphere_gap} against {sep}"
        )));
    }

    let pairs: Vec<_> = (0..sphere_net.len() / 2)
        .into_par_iter()
        .map(|k| {
            let a = &sphere_net[2 * k];
            let minus: Vec<T> = a.iter().map(|&x| -x).collect();
            let plus = min_l1_preimage(&q, a)?;
            let neg = min_l1_preimage(&q, &minus)?;
            let phi: Vec<T> = plus
                .x
                .iter()
                .zip(&neg.x)
                .map(|(&u, &w)| (u - w) / T::of(2.0))
                .collect();
            let gap = plus
                .gap
                .abs()
                .max(neg.gap.abs())
                .max(plus.dual_infeasibility)
                .max(neg.dual_infeasibility);
            Ok((phi, gap))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut section = Vec::with_capacity(sphere_net.len());
    let mut worst_gap = T::zero();
    for (phi, gap) in pairs {
        worst_gap = worst_gap.max(gap);
        let neg = phi.iter().map(|&x| -x).collect();
        section.push(phi);
        section.push(neg);
    }
    let mut worst_norm = T::zero();
    let mut worst_residual = T::zero();
    for (a, phi) in sphere_net.iter().zip(&section) {
        worst_norm = worst_norm.max(norm1(phi));
        let qa = q.matvec(phi);
        worst_residual = worst_residual.max(
            qa.iter()
                .zip(a)
                .fold(T::zero(), |m, (u, v)| m.max((*u - *v).abs())),
        );
    }
    let tol = T::of(SECTION_TOL);
    if worst_norm > T::of(2.0) + tol || worst_residual > tol || worst_gap > tol {
        return Err(Error::Violation(format!(
            "section check failed: |phi|_1 {worst_norm}, |Q phi - a| {worst_residual}, duality gap {worst_gap}"
        )));
    }
    Ok(KaltonInstance {
        n,
        theta,
        seed,
        q,
        sphere_net,
        section,
        checks: KaltonChecks {
            net_radius: radius,
            stream_covering_radius,
            covering_checks: opts.covering_checks,
            worst_covering_norm,
            separation: sep,
            min_pair_distance: min_pair,
            late_additions,
            sphere_gap,
            worst_section_norm: worst_norm,
            worst_section_residual: worst_residual,
            worst_duality_gap: worst_gap,
        },
    })
}

/// `Y_theta`: parameters `x` in `R^N` with norm `|x|_1 / n^(theta/4) + |Q x|_2`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct YTheta<T> {
    pub q: Matrix<T>,
    pub scale: T,
}

impl<T: Real> Metric<T> for YTheta<T> {
    type Point = Vec<T>;

    fn distance(&self, a: &Vec<T>, b: &Vec<T>) -> T {
        let w: Vec<T> = a.iter().zip(b).map(|(x, y)| *x - *y).collect();
        NormedTarget::norm(self, &w)
    }

    fn check_point(&self, p: &Vec<T>) -> Result<()> {
        if p.len() != self.q.cols() {
            return Err(Error::DimensionMismatch {
                expected: self.q.cols(),
                got: p.len(),
            });
        }
        Ok(())
    }
}

impl<T: Real> NormedTarget<T> for YTheta<T> {
    fn coordinate_dim(&self) -> usize {
        self.q.cols()
    }

    fn norm(&self, w: &[T]) -> T {
        norm1(w) / self.scale + norm2(&self.q.matvec(w))
    }

    fn subgradient(&self, w: &[T]) -> Vec<T> {
        let qw = self.q.matvec(w);
        let r = norm2(&qw);
        let back = if r > T::zero() {
            self.q.transpose().matvec(&qw)
        } else {
            vec![T::zero(); w.len()]
        };
        w.iter()
            .zip(back)
            .map(|(&x, g)| {
                let s = if x > T::zero() {
                    T::one()
                } else if x < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                };
                s / self.scale + if r > T::zero() { g / r } else { T::zero() }
            })
            .collect()
    }
}

/// A point of `Y_theta` with both embedded components.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct YThetaPoint<T> {
    pub x: Vec<T>,
    /// `x / n^(theta/4)`.
    pub first: Vec<T>,
    /// `Q x`.
    pub second: Vec<T>,
}

impl<T: Real> YThetaPoint<T> {
    pub fn norm(&self) -> T {
        norm1(&self.first) + norm2(&self.second)
    }

    /// Componentwise difference, norm included.
    pub fn sub(&self, other: &Self) -> Self {
        let d = |u: &[T], v: &[T]| u.iter().zip(v).map(|(a, b)| *a - *b).collect();
        Self {
            x: d(&self.x, &other.x),
            first: d(&self.first, &other.first),
            second: d(&self.second, &other.second),
        }
    }
}

impl<T: Real> KaltonInstance<T> {
    /// `n^(theta/4)`.
    pub fn scale(&self) -> T {
        T::of_usize(self.n).powf(self.theta / T::of(4.0))
    }

    pub fn target(&self) -> YTheta<T> {
        YTheta {
            q: self.q.clone(),
            scale: self.scale(),
        }
    }

    pub fn net_size(&self) -> usize {
        self.q.cols()
    }

    /// Index of `a` in `A_n`, compared exactly.
    pub fn index_of(&self, a: &[T]) -> Option<usize> {
        self.sphere_net.iter().position(|b| b.as_slice() == a)
    }

    /// The embedded point of `Q x`.
    pub fn point(&self, x: Vec<T>) -> YThetaPoint<T> {
        let s = self.scale();
        YThetaPoint {
            first: x.iter().map(|&v| v / s).collect(),
            second: self.q.matvec(&x),
            x,
        }
    }

    /// `f_theta(a) = (phi(a) / n^(theta/4), a)`.
    pub fn f_theta(&self, a: &[T]) -> Result<YThetaPoint<T>> {
        let Some(k) = self.index_of(a) else {
            return invalid("point is not in the separated sphere set");
        };
        let s = self.scale();
        let x = self.section[k].clone();
        Ok(YThetaPoint {
            first: x.iter().map(|&v| v / s).collect(),
            second: a.to_vec(),
            x,
        })
    }
}

/// Largest normalized Holder quotient of `f_theta` over all pairs of `A_n`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HolderReport<T> {
    pub tau: T,
    pub max_ratio: T,
    /// `4 + 2^(1 - tau)`.
    pub bound: T,
    pub pairs: usize,
    pub holds: bool,
}

/// `max |f(a) - f(b)| / (n^((tau - theta)/4) |a - b|^tau)` over distinct `a, b` in `A_n`.
pub fn holder_check<T: Real>(inst: &KaltonInstance<T>, tau: T) -> Result<HolderReport<T>> {
    if !(tau >= inst.theta && tau <= T::one()) {
        return invalid(format!("tau must lie in [theta, 1], got {tau}"));
    }
    let s = inst.scale();
    let norm = T::of_usize(inst.n).powf((tau - inst.theta) / T::of(4.0));
    let m = inst.sphere_net.len();
    let max_ratio = (0..m)
        .into_par_iter()
        .map(|i| {
            (0..i)
                .map(|j| {
                    let (a, b) = (&inst.sphere_net[i], &inst.sphere_net[j]);
                    let dphi = csum(
                        inst.section[i]
                            .iter()
                            .zip(&inst.section[j])
                            .map(|(u, v)| (*u - *v).abs()),
                    );
                    let dab = dist2(a, b);
                    (dphi / s + dab) / (norm * dab.powf(tau))
                })
                .fold(T::zero(), T::max)
        })
        .reduce(T::zero, T::max);
    let bound = T::of(4.0) + T::of(2.0).powf(T::one() - tau);
    Ok(HolderReport {
        tau,
        max_ratio,
        bound,
        pairs: m * m.saturating_sub(1) / 2,
        holds: max_ratio <= bound,
    })
}

/// Outcome of extending `f_theta` from `A_n` to `A_n` plus extra sphere points.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExtensionLowerReport<T> {
    pub n: usize,
    pub extra_points: usize,
    pub lip_f: T,
    pub l_star: T,
    pub l_lower: T,
    /// `l_star / lip_f`.
    pub ratio: T,
}

/// Minimal Lipschitz constant of an extension of `f_theta` to `A_n` and `extra` random sphere
/// points, relative to the Lipschitz constant of `f_theta` on `A_n`.
pub fn extension_lower_experiment<T: Real>(
    inst: &KaltonInstance<T>,
    extra: usize,
    seed: u64,
    tol: T,
) -> Result<ExtensionLowerReport<T>> {
    if inst.n > 4 {
        return invalid(format!(
            "the extension experiment is limited to n <= 4, got {}",
            inst.n
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = inst.sphere_net.clone();
    while points.len() < inst.sphere_net.len() + extra {
        let u = sphere_point::<T>(inst.n, &mut rng);
        if points.iter().all(|p| dist2(p, &u) > T::zero()) {
            points.push(u);
        }
    }
    let source = Euclidean::new(inst.n);
    let target = inst.target();
    let anchors = (0..inst.sphere_net.len()).collect();
    let ext = ExtensionInstance::new(&source, &target, points, anchors, inst.section.clone())?;
    let sol = min_lipschitz_extension(&source, &target, &ext, tol)?;
    let ratio = if ext.lip() > T::zero() {
        sol.l_star / ext.lip()
    } else {
        T::one()
    };
    Ok(ExtensionLowerReport {
        n: inst.n,
        extra_points: extra,
        lip_f: ext.lip(),
        l_star: sol.l_star,
        l_lower: sol.l_lower,
        ratio,
    })
}

/// A map `rho` onto a subset `S`, given on `S` (implicitly, as the identity) and on a table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Retraction<P> {
    pub subset: Vec<P>,
    pub table: Vec<(P, P)>,
}

impl<P: Clone + PartialEq> Retraction<P> {
    pub fn identity(subset: Vec<P>) -> Self {
        Self {
            subset,
            table: Vec::new(),
        }
    }

    fn in_subset(&self, p: &P) -> bool {
        self.subset.iter().any(|s| s == p)
    }

    /// Checks that every image lies in `S` and that `S` is fixed.
    pub fn validate(&self) -> Result<()> {
        for (k, (from, to)) in self.table.iter().enumerate() {
            if !self.in_subset(to) {
                return invalid(format!("table entry {k} maps outside the subset"));
            }
            if self.in_subset(from) && from != to {
                return invalid(format!("table entry {k} moves a point of the subset"));
            }
        }
        Ok(())
    }

    pub fn apply(&self, p: &P) -> Result<P> {
        if self.in_subset(p) {
            return Ok(p.clone());
        }
        self.table
            .iter()
            .find(|(from, _)| from == p)
            .map(|(_, to)| to.clone())
            .ok_or_else(|| Error::InvalidInput("point outside the domain of the retraction".into()))
    }

    /// Lipschitz constant over the subset and the table domain.
    pub fn lipschitz<T: Real, M: Metric<T, Point = P>>(&self, space: &M) -> Result<T> {
        let mut domain: Vec<P> = self.subset.clone();
        domain.extend(
            self.table
                .iter()
                .map(|(from, _)| from.clone())
                .filter(|f| !self.in_subset(f)),
        );
        let images = domain
            .iter()
            .map(|p| self.apply(p))
            .collect::<Result<Vec<_>>>()?;
        let mut lip = T::zero();
        for i in 0..domain.len() {
            for j in 0..i {
                let d = space.distance(&domain[i], &domain[j]);
                let e = space.distance(&images[i], &images[j]);
                if d > T::zero() {
                    lip = lip.max(e / d);
                } else if e > T::zero() {
                    return invalid("retraction table is not a function");
                }
            }
        }
        Ok(lip)
    }
}

/// A certificate moved onto the subset by a retraction.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RetractionTransfer<P, T> {
    pub certificate: CotypeCertificate<P, T>,
    pub lipschitz: T,
    /// `lipschitz^p` times the original ratio.
    pub bound: T,
    pub holds: bool,
}

/// Replaces `y` by `rho(y)` in a certificate whose configuration lies in `S`.
pub fn retraction_transfer<T: Real, M: Metric<T>>(
    space: &M,
    cert: &CotypeCertificate<M::Point, T>,
    rho: &Retraction<M::Point>,
) -> Result<RetractionTransfer<M::Point, T>> {
    rho.validate()?;
    if let Some(i) = cert.x.iter().position(|x| !rho.in_subset(x)) {
        return invalid(format!("configuration point {i} is not in the subset"));
    }
    let lip = rho.lipschitz(space)?;
    let y = cert
        .y
        .iter()
        .map(|p| rho.apply(p))
        .collect::<Result<Vec<_>>>()?;
    let mut moved =
        CotypeCertificate::evaluate(&cert.chain, space, cert.x.clone(), y, cert.t, cert.p)?;
    let factor = lip.powf(cert.p);
    moved.bound = cert.bound.map(|b| b * factor.max(T::one()));
    let bound = factor * cert.ratio;
    let holds = moved.ratio <= bound * (T::one() + T::of(1e-12)) + T::of(1e-15);
    Ok(RetractionTransfer {
        certificate: moved,
        lipschitz: lip,
        bound,
        holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_instance_invariants() {
        let inst = build_instance::<f64>(2, 1.0, 7, &KaltonOptions::default()).unwrap();
        assert!(inst.checks.worst_covering_norm <= 1.0 + 1e-9);
        assert!((0..inst.net_size())
            .all(|k| (inst.q[(0, k)].powi(2) + inst.q[(1, k)].powi(2)).sqrt() <= 1.0));
        for k in 0..inst.sphere_net.len() / 2 {
            let (a, b) = (&inst.sphere_net[2 * k], &inst.sphere_net[2 * k + 1]);
            assert!(a.iter().zip(b).all(|(u, v)| *u == -*v));
            let fa = inst.f_theta(a).unwrap();
            let fb = inst.f_theta(b).unwrap();
            assert!(fa.x.iter().zip(&fb.x).all(|(u, v)| *u == -*v));
            assert_eq!(&fa.second, a);
            assert!(fa.norm() <= 2.0 / inst.scale() + 1.0 + 1e-9);
        }
        assert!(inst.f_theta(&[1.0, 1.0]).is_err());
        let rep = holder_check(&inst, 1.0).unwrap();
        assert!(rep.holds && rep.bound == 5.0);
    }

    #[test]
    fn y_theta_subgradient_is_supporting() {
        let q = Matrix::from_rows(&[vec![1.0, 0.0, 0.6], vec![0.0, 1.0, 0.8]]).unwrap();
        let y = YTheta { q, scale: 2.0 };
        let w = vec![0.3, -0.2, 0.5];
        let g = y.subgradient(&w);
        let dot: f64 = g.iter().zip(&w).map(|(a, b)| a * b).sum();
        assert!((dot - NormedTarget::norm(&y, &w)).abs() < 1e-12);
    }

    #[test]
    fn retraction_validation() {
        let space = Euclidean::new(1);
        let s = vec![vec![0.0], vec![1.0]];
        let bad = Retraction {
            subset: s.clone(),
            table: vec![(vec![0.0], vec![1.0])],
        };
        assert!(bad.validate().is_err());
        let outside = Retraction {
            subset: s.clone(),
            table: vec![(vec![0.5], vec![0.7])],
        };
        assert!(outside.validate().is_err());
        let snap = Retraction {
            subset: s,
            table: vec![(vec![0.4], vec![0.0]), (vec![0.6], vec![1.0])],
        };
        snap.validate().unwrap();
        assert!((snap.lipschitz::<f64, _>(&space).unwrap() - 5.0).abs() < 1e-12);
    }
}
