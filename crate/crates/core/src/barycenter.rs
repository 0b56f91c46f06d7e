//! Barycenter maps, checkers for the barycentric inequalities, and conditional barycenters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::metric::{
    from_tree, to_tree, Euclidean, FiniteMetricSpace, HyperbolicDisk, LpSpace, Metric, Sampling,
    SpacePoint, TreePoint, TreeSpace,
};
use crate::scalar::{csum, ext_ratio, powp, Real};
use crate::transport::{wasserstein, DiscreteMeasure};

/// The constants a barycenter map is declared to satisfy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants<T> {
    /// Exponent of the moment inequality.
    pub p: T,
    /// Constant of the p-moment (variance) inequality.
    pub k: T,
    /// Lipschitz constant with respect to `W_p`.
    pub gamma: T,
}

impl<T: Real> Constants<T> {
    /// `p = 2`, `K = 1`, `Gamma = 1`: the constants of Hilbert space and of CAT(0) spaces.
    pub fn cat0() -> Self {
        Self {
            p: T::of(2.0),
            k: T::one(),
            gamma: T::one(),
        }
    }
}

/// Point type of the space a barycenter map lives on.
pub type PointOf<T, B> = <<B as BarycenterMap<T>>::Space as Metric<T>>::Point;

/// An assignment of a point to every finitely supported probability measure.
pub trait BarycenterMap<T: Real>: Send + Sync {
    type Space: Metric<T>;

    fn space(&self) -> &Self::Space;

    fn constants(&self) -> Constants<T>;

    fn barycenter(
        &self,
        mu: &DiscreteMeasure<<Self::Space as Metric<T>>::Point, T>,
    ) -> Result<<Self::Space as Metric<T>>::Point>;

    /// Barycenter of `sum_j w_j delta_{x_j}`; zero weights are ignored and repeated
    /// points merged. Weights must sum to one.
    fn barycenter_of(
        &self,
        points: &[<Self::Space as Metric<T>>::Point],
        weights: &[T],
    ) -> Result<<Self::Space as Metric<T>>::Point> {
        if points.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: weights.len(),
            });
        }
        let mu =
            DiscreteMeasure::from_weighted(points.iter().cloned().zip(weights.iter().copied()))?;
        self.barycenter(&mu)
    }
}

impl<T: Real, B: BarycenterMap<T> + ?Sized> BarycenterMap<T> for &B {
    type Space = B::Space;
    fn space(&self) -> &B::Space {
        (**self).space()
    }
    fn constants(&self) -> Constants<T> {
        (**self).constants()
    }
    fn barycenter(
        &self,
        mu: &DiscreteMeasure<<B::Space as Metric<T>>::Point, T>,
    ) -> Result<<B::Space as Metric<T>>::Point> {
        (**self).barycenter(mu)
    }
}

/// The weighted mean on a linear space of coordinate vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearMean<S, T> {
    space: S,
    constants: Constants<T>,
}

impl<T: Real> LinearMean<Euclidean, T> {
    pub fn euclidean(dim: usize) -> Self {
        Self {
            space: Euclidean::new(dim),
            constants: Constants::cat0(),
        }
    }
}

impl<T: Real> LinearMean<LpSpace<T>, T> {
    /// The mean on `l_p^dim` with `Gamma = 1` and a caller-supplied moment constant `k`
    /// for the exponent `q` (calibrate it with [`check_barycentric`]).
    pub fn lp(dim: usize, p: T, q: T, k: T) -> Result<Self> {
        if k < T::one() || q < T::one() {
            return invalid("moment exponent and constant must be at least 1");
        }
        Ok(Self {
            space: LpSpace::new(dim, p)?,
            constants: Constants {
                p: q,
                k,
                gamma: T::one(),
            },
        })
    }
}

impl<S, T: Real> LinearMean<S, T> {
    pub fn with_constants(space: S, constants: Constants<T>) -> Self {
        Self { space, constants }
    }
}

fn weighted_mean<T: Real>(support: &[Vec<T>], weights: &[T]) -> Vec<T> {
    let dim = support[0].len();
    (0..dim)
        .map(|c| csum(support.iter().zip(weights).map(|(x, &w)| w * x[c])))
        .collect()
}

impl<T: Real, S: Metric<T, Point = Vec<T>>> BarycenterMap<T> for LinearMean<S, T> {
    type Space = S;

    fn space(&self) -> &S {
        &self.space
    }

    fn constants(&self) -> Constants<T> {
        self.constants
    }

    fn barycenter(&self, mu: &DiscreteMeasure<Vec<T>, T>) -> Result<Vec<T>> {
        if mu.len() == 1 {
            return Ok(mu.support()[0].clone());
        }
        Ok(weighted_mean(mu.support(), mu.weights()))
    }
}

/// Exact minimizer of `y -> sum_i w_i d(y, x_i)^2` on a metric tree.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeBarycenter<T> {
    space: TreeSpace<T>,
}

impl<T: Real> TreeBarycenter<T> {
    pub fn new(space: TreeSpace<T>) -> Self {
        Self { space }
    }
}

impl<T: Real> BarycenterMap<T> for TreeBarycenter<T> {
    type Space = TreeSpace<T>;

    fn space(&self) -> &TreeSpace<T> {
        &self.space
    }

    fn constants(&self) -> Constants<T> {
        Constants::cat0()
    }

    fn barycenter(&self, mu: &DiscreteMeasure<TreePoint<T>, T>) -> Result<TreePoint<T>> {
        if mu.len() == 1 {
            return Ok(mu.support()[0].clone());
        }
        let tree = &self.space;
        if tree.edges().is_empty() {
            return Ok(TreePoint::Vertex(0));
        }
        let mut best: Option<(T, usize, T)> = None;
        for (e, &(a, b, w)) in tree.edges().iter().enumerate() {
            // terms (sigma s + c)^2 for atoms off this edge, |s - o| for atoms on it
            let mut fixed = Vec::new();
            let mut on_edge = Vec::new();
            for (x, lam) in mu.iter() {
                match *x {
                    TreePoint::Edge { edge, offset } if edge == e => on_edge.push((offset, lam)),
                    _ => {
                        let da = tree.to_vertex(x, a);
                        let db = tree.to_vertex(x, b);
                        if da <= db {
                            fixed.push((T::one(), da, lam));
                        } else {
                            fixed.push((-T::one(), w + db, lam));
                        }
                    }
                }
            }
            let mut cuts: Vec<T> = vec![T::zero(), w];
            cuts.extend(on_edge.iter().map(|&(o, _)| o));
            cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
            for win in cuts.windows(2) {
                let (l, r) = (win[0], win[1]);
                let mid = (l + r) / T::of(2.0);
                let mut terms = fixed.clone();
                for &(o, lam) in &on_edge {
                    if o <= mid {
                        terms.push((T::one(), -o, lam));
                    } else {
                        terms.push((-T::one(), o, lam));
                    }
                }
                let total = csum(terms.iter().map(|t| t.2));
                let s = (-csum(terms.iter().map(|&(sg, c, lam)| lam * sg * c)) / total)
                    .max(l)
                    .min(r);
                let value = csum(
                    terms
                        .iter()
                        .map(|&(sg, c, lam)| lam * (sg * s + c) * (sg * s + c)),
                );
                if best.is_none_or(|(v, _, _)| value < v) {
                    best = Some((value, e, s));
                }
            }
        }
        let (_, e, s) = best.expect("tree has an edge");
        Ok(tree.point_on_edge(e, s))
    }
}

/// Riemannian center of mass in the Poincare model by gradient descent.
#[derive(Clone, Debug, PartialEq)]
pub struct KarcherMean {
    space: HyperbolicDisk,
    /// Initial step length (a step of 1 is the classical fixed-point iteration).
    pub step: f64,
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl KarcherMean {
    pub fn new(space: HyperbolicDisk) -> Self {
        Self {
            space,
            step: 0.5,
            max_iter: 10_000,
            grad_tol: 1e-12,
        }
    }
}

impl Default for KarcherMean {
    fn default() -> Self {
        Self::new(HyperbolicDisk::default())
    }
}

impl KarcherMean {
    fn objective<T: Real>(&self, mu: &DiscreteMeasure<Vec<T>, T>, y: &Vec<T>) -> T {
        csum(mu.iter().map(|(x, w)| {
            let d: T = self.space.distance(y, x);
            w * d * d
        }))
    }
}

impl<T: Real> BarycenterMap<T> for KarcherMean {
    type Space = HyperbolicDisk;

    fn space(&self) -> &HyperbolicDisk {
        &self.space
    }

    fn constants(&self) -> Constants<T> {
        Constants::cat0()
    }

    fn barycenter(&self, mu: &DiscreteMeasure<Vec<T>, T>) -> Result<Vec<T>> {
        let mut y = mu.support()[0].clone();
        if mu.len() == 1 {
            return Ok(y);
        }
        let tol = T::of(self.grad_tol).max(T::epsilon().sqrt() * T::of(1e-4));
        let mut f = self.objective(mu, &y);
        for _ in 0..self.max_iter {
            // minus half the Riemannian gradient of the objective
            let dim = y.len();
            let mut g = vec![T::zero(); dim];
            for (x, w) in mu.iter() {
                let l = self.space.log(&y, x);
                for c in 0..dim {
                    g[c] += w * l[c];
                }
            }
            if self.space.tangent_norm(&y, &g) < tol {
                break;
            }
            let mut eta = T::of(self.step);
            let mut moved = false;
            for _ in 0..40 {
                let step: Vec<T> = g.iter().map(|&c| c * eta).collect();
                let cand = self.space.exp(&y, &step);
                let fc = self.objective(mu, &cand);
                // near the minimum the objective only moves at rounding level
                if fc <= f + T::epsilon() * T::of(16.0) * f {
                    moved = cand != y;
                    y = cand;
                    f = fc;
                    break;
                }
                eta /= T::of(2.0);
            }
            if !moved {
                break;
            }
        }
        Ok(y)
    }
}

/// Barycenter map chosen by the kind of a [`FiniteMetricSpace`].
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceBarycenter<T> {
    space: FiniteMetricSpace<T>,
    constants: Constants<T>,
    karcher: KarcherMean,
}

impl<T: Real> SpaceBarycenter<T> {
    /// Euclidean, tree and hyperbolic spaces get `(2, 1, 1)`; `l_p` spaces get
    /// `Gamma = 1` and `K = k_lp` for exponent `p` of the space. Matrix spaces carry no
    /// barycenter map.
    pub fn new(space: FiniteMetricSpace<T>, k_lp: Option<T>) -> Result<Self> {
        let constants = match &space {
            FiniteMetricSpace::Matrix(_) => {
                return invalid("distance-matrix spaces have no barycenter map")
            }
            FiniteMetricSpace::Lp(s) if s.p != T::of(2.0) => Constants {
                p: s.p.max(T::of(2.0)),
                k: k_lp.unwrap_or(T::one()),
                gamma: T::one(),
            },
            _ => Constants::cat0(),
        };
        let karcher = match &space {
            FiniteMetricSpace::Hyperbolic(h) => KarcherMean::new(h.clone()),
            _ => KarcherMean::default(),
        };
        Ok(Self {
            space,
            constants,
            karcher,
        })
    }
}

impl<T: Real> BarycenterMap<T> for SpaceBarycenter<T> {
    type Space = FiniteMetricSpace<T>;

    fn space(&self) -> &FiniteMetricSpace<T> {
        &self.space
    }

    fn constants(&self) -> Constants<T> {
        self.constants
    }

    fn barycenter(&self, mu: &DiscreteMeasure<SpacePoint<T>, T>) -> Result<SpacePoint<T>> {
        let coords = || -> Result<DiscreteMeasure<Vec<T>, T>> {
            let pts = mu
                .support()
                .iter()
                .map(|p| match p {
                    SpacePoint::Coords(c) => Ok(c.clone()),
                    other => invalid(format!("expected coordinates, got {other:?}")),
                })
                .collect::<Result<Vec<_>>>()?;
            DiscreteMeasure::new(pts, mu.weights().to_vec())
        };
        match &self.space {
            FiniteMetricSpace::Euclidean(_) | FiniteMetricSpace::Lp(_) => {
                let m = coords()?;
                Ok(SpacePoint::Coords(if m.len() == 1 {
                    m.support()[0].clone()
                } else {
                    weighted_mean(m.support(), m.weights())
                }))
            }
            FiniteMetricSpace::Hyperbolic(_) => {
                Ok(SpacePoint::Coords(self.karcher.barycenter(&coords()?)?))
            }
            FiniteMetricSpace::Tree(t) => {
                let pts = mu
                    .support()
                    .iter()
                    .map(|p| {
                        to_tree(p).ok_or_else(|| {
                            Error::InvalidInput(format!("expected a tree point, got {p:?}"))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let m = DiscreteMeasure::new(pts, mu.weights().to_vec())?;
                Ok(from_tree(TreeBarycenter::new(t.clone()).barycenter(&m)?))
            }
            FiniteMetricSpace::Matrix(_) => {
                invalid("distance-matrix spaces have no barycenter map")
            }
        }
    }
}

/// Worst observed violations of the two barycentric inequalities.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BarycentricReport<T> {
    pub trials: usize,
    /// Max of `d(x,B mu)^p + K^-p int d(B mu, y)^p dmu - int d(x,y)^p dmu`; should be `<= 1e-8`.
    pub worst_p_residual: T,
    /// Max of `d(B mu, B nu) / W_p(mu, nu)` over non-degenerate pairs; should be `<= Gamma`.
    pub worst_wp_ratio: T,
    pub pairs_skipped: usize,
}

/// Residual of the p-moment inequality for one measure and one base point.
pub fn p_residual<T: Real, B: BarycenterMap<T>>(
    map: &B,
    mu: &DiscreteMeasure<<B::Space as Metric<T>>::Point, T>,
    x: &<B::Space as Metric<T>>::Point,
) -> Result<T> {
    let c = map.constants();
    let space = map.space();
    let b = map.barycenter(mu)?;
    let lhs = powp(space.distance(x, &b), c.p) + mu.moment(space, &b, c.p) / c.k.powf(c.p);
    Ok(lhs - mu.moment(space, x, c.p))
}

fn random_measure<T: Real, S: Sampling<T>>(
    space: &S,
    rng: &mut ChaCha8Rng,
) -> Result<DiscreteMeasure<S::Point, T>> {
    let k = rng.gen_range(1..=5);
    let pts: Vec<S::Point> = (0..k).map(|_| space.sample_point(rng)).collect();
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    DiscreteMeasure::from_weighted(
        pts.into_iter()
            .zip(raw.into_iter().map(|w| T::of(w / total))),
    )
}

/// Randomized check of both barycentric inequalities at the map's declared constants.
pub fn check_barycentric<T: Real, B>(
    map: &B,
    trials: usize,
    seed: u64,
) -> Result<BarycentricReport<T>>
where
    B: BarycenterMap<T>,
    B::Space: Sampling<T>,
{
    if trials == 0 {
        return invalid("at least one trial is required");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let space = map.space();
    let c = map.constants();
    let mut report = BarycentricReport {
        trials,
        worst_p_residual: T::neg_infinity(),
        worst_wp_ratio: T::zero(),
        pairs_skipped: 0,
    };
    for _ in 0..trials {
        let mu = random_measure(space, &mut rng)?;
        let nu = random_measure(space, &mut rng)?;
        let x = space.sample_point(&mut rng);
        report.worst_p_residual = report.worst_p_residual.max(p_residual(map, &mu, &x)?);
        let w = wasserstein(space, &mu, &nu, c.p.max(T::one()).min(T::of(64.0)))?.value;
        let d = space.distance(&map.barycenter(&mu)?, &map.barycenter(&nu)?);
        if w == T::zero() && d == T::zero() {
            report.pairs_skipped += 1;
        } else {
            report.worst_wp_ratio = report.worst_wp_ratio.max(ext_ratio(d, w));
        }
    }
    Ok(report)
}

/// A partition of `{0, .., n-1}` given by an atom label per element.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    atoms: Vec<Vec<usize>>,
    labels: Vec<usize>,
}

impl Partition {
    /// Builds a partition from its atoms, which must be nonempty, disjoint and cover `0..n`.
    pub fn from_atoms(n: usize, atoms: Vec<Vec<usize>>) -> Result<Self> {
        let mut labels = vec![usize::MAX; n];
        for (a, atom) in atoms.iter().enumerate() {
            if atom.is_empty() {
                return invalid(format!("atom {a} is empty"));
            }
            for &w in atom {
                if w >= n {
                    return invalid(format!("atom {a} contains {w}, outside 0..{n}"));
                }
                if labels[w] != usize::MAX {
                    return invalid(format!("element {w} lies in two atoms"));
                }
                labels[w] = a;
            }
        }
        if let Some(w) = labels.iter().position(|&l| l == usize::MAX) {
            return invalid(format!("element {w} is in no atom"));
        }
        Ok(Self { atoms, labels })
    }

    /// Partition whose atoms are the classes of equal labels.
    pub fn from_labels<K: PartialEq>(labels: &[K]) -> Self {
        let mut keys: Vec<&K> = Vec::new();
        let mut atoms: Vec<Vec<usize>> = Vec::new();
        let mut out = Vec::with_capacity(labels.len());
        for (w, k) in labels.iter().enumerate() {
            let a = match keys.iter().position(|q| *q == k) {
                Some(a) => a,
                None => {
                    keys.push(k);
                    atoms.push(Vec::new());
                    keys.len() - 1
                }
            };
            atoms[a].push(w);
            out.push(a);
        }
        Self { atoms, labels: out }
    }

    pub fn trivial(n: usize) -> Self {
        Self {
            atoms: vec![(0..n).collect()],
            labels: vec![0; n],
        }
    }

    pub fn singletons(n: usize) -> Self {
        Self {
            atoms: (0..n).map(|w| vec![w]).collect(),
            labels: (0..n).collect(),
        }
    }

    pub fn atoms(&self) -> &[Vec<usize>] {
        &self.atoms
    }

    pub fn atom_of(&self, w: usize) -> usize {
        self.labels[w]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Index of an atom of `self` not contained in a single atom of `coarser`, if any.
    pub fn first_non_refining_atom(&self, coarser: &Partition) -> Option<usize> {
        self.atoms.iter().position(|atom| {
            let l = coarser.atom_of(atom[0]);
            atom.iter().any(|&w| coarser.atom_of(w) != l)
        })
    }
}

/// `B(Z | F)`: on each atom, the barycenter of the normalized law of `Z` restricted to it.
pub fn conditional_barycenter<T: Real, B: BarycenterMap<T>>(
    map: &B,
    z: &[<B::Space as Metric<T>>::Point],
    partition: &Partition,
    mu: &[T],
) -> Result<Vec<<B::Space as Metric<T>>::Point>> {
    if z.len() != partition.len() || mu.len() != z.len() {
        return Err(Error::DimensionMismatch {
            expected: partition.len(),
            got: z.len().min(mu.len()),
        });
    }
    let mut out = z.to_vec();
    for (a, atom) in partition.atoms().iter().enumerate() {
        let mass = csum(atom.iter().map(|&w| mu[w]));
        if !(mass > T::zero()) {
            return invalid(format!("atom {a} has zero mass"));
        }
        let b = map.barycenter_of(
            &atom.iter().map(|&w| z[w].clone()).collect::<Vec<_>>(),
            &atom.iter().map(|&w| mu[w] / mass).collect::<Vec<_>>(),
        )?;
        for &w in atom {
            out[w] = b.clone();
        }
    }
    Ok(out)
}
