//! Point universes and distance oracles.
//!
//! Every space implements [`Metric`]; spaces that can produce random points for
//! searches and randomized checks also implement [`Sampling`].

use std::fmt::Debug;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{csum, Real};

/// Default comparison tolerance for metric-level floating point checks.
pub const TOL: f64 = 1e-9;

/// Hyperbolic points must stay within this Euclidean radius of the origin.
pub const DISK_RADIUS: f64 = 1.0 - 1e-9;

/// A distance oracle on some point type.
pub trait Metric<T: Real>: Send + Sync {
    type Point: Clone + Debug + PartialEq + Send + Sync;

    fn distance(&self, a: &Self::Point, b: &Self::Point) -> T;

    /// True when the space is (isometric to) a Euclidean space, so that
    /// eigenvalue oracles for squared distances apply.
    fn is_euclidean(&self) -> bool {
        false
    }

    /// Checks that a point belongs to the space.
    fn check_point(&self, _p: &Self::Point) -> Result<()> {
        Ok(())
    }
}

/// Spaces that can generate and perturb points for randomized experiments.
pub trait Sampling<T: Real>: Metric<T> {
    fn sample_point(&self, rng: &mut dyn RngCore) -> Self::Point;

    /// A random point near `p`; `step` is on the scale of the unit ball.
    fn perturb(&self, p: &Self::Point, step: T, rng: &mut dyn RngCore) -> Self::Point;

    /// All points, when the space is finite.
    fn enumerate(&self) -> Option<Vec<Self::Point>> {
        None
    }
}

impl<T: Real, M: Metric<T> + ?Sized> Metric<T> for &M {
    type Point = M::Point;
    fn distance(&self, a: &Self::Point, b: &Self::Point) -> T {
        (**self).distance(a, b)
    }
    fn is_euclidean(&self) -> bool {
        (**self).is_euclidean()
    }
    fn check_point(&self, p: &Self::Point) -> Result<()> {
        (**self).check_point(p)
    }
}

impl<T: Real, M: Sampling<T> + ?Sized> Sampling<T> for &M {
    fn sample_point(&self, rng: &mut dyn RngCore) -> Self::Point {
        (**self).sample_point(rng)
    }
    fn perturb(&self, p: &Self::Point, step: T, rng: &mut dyn RngCore) -> Self::Point {
        (**self).perturb(p, step, rng)
    }
    fn enumerate(&self) -> Option<Vec<Self::Point>> {
        (**self).enumerate()
    }
}

pub(crate) fn norm2<T: Real>(v: &[T]) -> T {
    csum(v.iter().map(|&x| x * x)).sqrt()
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    csum(a.iter().zip(b).map(|(&x, &y)| x * y))
}

fn uniform<T: Real>(rng: &mut dyn RngCore, lo: f64, hi: f64) -> T {
    T::of(rng.gen_range(lo..hi))
}

/// Uniform point in the Euclidean ball of the given radius.
pub(crate) fn sample_ball<T: Real>(dim: usize, radius: f64, rng: &mut dyn RngCore) -> Vec<T> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r2: f64 = v.iter().map(|x| x * x).sum();
        if r2 <= 1.0 {
            return v.into_iter().map(|x| T::of(x * radius)).collect();
        }
    }
}

fn clamp_to_ball<T: Real>(v: &mut [T], radius: T) {
    let r = norm2(v);
    if r > radius {
        let s = radius / r;
        v.iter_mut().for_each(|x| *x *= s);
    }
}

fn check_dim<T>(dim: usize, p: &[T]) -> Result<()> {
    if p.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: p.len(),
        });
    }
    Ok(())
}

/// `R^dim` with the Euclidean norm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Euclidean {
    pub dim: usize,
}

impl Euclidean {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl<T: Real> Metric<T> for Euclidean {
    type Point = Vec<T>;

    fn distance(&self, a: &Vec<T>, b: &Vec<T>) -> T {
        csum(a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y))).sqrt()
    }

    fn is_euclidean(&self) -> bool {
        true
    }

    fn check_point(&self, p: &Vec<T>) -> Result<()> {
        check_dim(self.dim, p)
    }
}

impl<T: Real> Sampling<T> for Euclidean {
    fn sample_point(&self, rng: &mut dyn RngCore) -> Vec<T> {
        sample_ball(self.dim, 1.0, rng)
    }

    fn perturb(&self, p: &Vec<T>, step: T, rng: &mut dyn RngCore) -> Vec<T> {
        let mut q: Vec<T> = p
            .iter()
            .map(|&x| x + step * uniform::<T>(rng, -1.0, 1.0))
            .collect();
        clamp_to_ball(&mut q, T::one());
        q
    }
}

/// `R^dim` with the `l_p` norm, `p >= 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpSpace<T> {
    pub dim: usize,
    pub p: T,
}

impl<T: Real> LpSpace<T> {
    pub fn new(dim: usize, p: T) -> Result<Self> {
        if !(p >= T::one()) {
            return invalid(format!("l_p exponent must be >= 1, got {p}"));
        }
        Ok(Self { dim, p })
    }
}

impl<T: Real> Metric<T> for LpSpace<T> {
    type Point = Vec<T>;

    fn distance(&self, a: &Vec<T>, b: &Vec<T>) -> T {
        if self.p.is_infinite() {
            return a
                .iter()
                .zip(b)
                .map(|(&x, &y)| (x - y).abs())
                .fold(T::zero(), T::max);
        }
        let m = a
            .iter()
            .zip(b)
            .map(|(&x, &y)| (x - y).abs())
            .fold(T::zero(), T::max);
        if m == T::zero() {
            return T::zero();
        }
        // scale by the largest coordinate so high exponents do not underflow
        m * csum(
            a.iter()
                .zip(b)
                .map(|(&x, &y)| ((x - y).abs() / m).powf(self.p)),
        )
        .powf(self.p.recip())
    }

    fn is_euclidean(&self) -> bool {
        self.p == T::of(2.0) || self.dim <= 1
    }

    fn check_point(&self, p: &Vec<T>) -> Result<()> {
        check_dim(self.dim, p)
    }
}

impl<T: Real> Sampling<T> for LpSpace<T> {
    fn sample_point(&self, rng: &mut dyn RngCore) -> Vec<T> {
        sample_ball(self.dim, 1.0, rng)
    }

    fn perturb(&self, p: &Vec<T>, step: T, rng: &mut dyn RngCore) -> Vec<T> {
        Euclidean::new(self.dim).perturb(p, step, rng)
    }
}

/// A point of a metric tree: a vertex, or an interior point of an edge at
/// distance `offset` from the edge's first endpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreePoint<T> {
    Vertex(usize),
    Edge { edge: usize, offset: T },
}

/// A finite weighted tree, viewed as a geodesic metric space (vertices and edge interiors).
#[derive(Clone, Debug, PartialEq)]
pub struct TreeSpace<T> {
    vertices: usize,
    edges: Vec<(usize, usize, T)>,
    vdist: Matrix<T>,
}

impl<T: Real> TreeSpace<T> {
    /// Builds a tree from weighted edges `(u, v, w)` over vertices `0..V`.
    pub fn new(edges: Vec<(usize, usize, T)>) -> Result<Self> {
        let vertices = edges
            .iter()
            .map(|&(u, v, _)| u.max(v) + 1)
            .max()
            .unwrap_or(1);
        if edges.len() + 1 != vertices {
            return invalid(format!(
                "a tree on {vertices} vertices needs {} edges, got {}",
                vertices - 1,
                edges.len()
            ));
        }
        let mut adj = vec![Vec::new(); vertices];
        for (k, &(u, v, w)) in edges.iter().enumerate() {
            if !(w > T::zero()) || !w.is_finite() {
                return invalid(format!("edge {k} has non-positive weight {w}"));
            }
            if u == v {
                return invalid(format!("edge {k} is a loop"));
            }
            adj[u].push((v, w));
            adj[v].push((u, w));
        }
        let mut vdist = Matrix::filled(vertices, vertices, T::infinity());
        for s in 0..vertices {
            let mut stack = vec![s];
            vdist[(s, s)] = T::zero();
            while let Some(u) = stack.pop() {
                for &(v, w) in &adj[u] {
                    if vdist[(s, v)].is_infinite() {
                        vdist[(s, v)] = vdist[(s, u)] + w;
                        stack.push(v);
                    }
                }
            }
        }
        if vdist.iter().any(|d| d.is_infinite()) {
            return invalid("edge list is not connected");
        }
        Ok(Self {
            vertices,
            edges,
            vdist,
        })
    }

    /// Unweighted path `0 - 1 - ... - (n-1)` with unit edges.
    pub fn path(n: usize) -> Self {
        Self::new((1..n.max(1)).map(|i| (i - 1, i, T::one())).collect()).expect("path is a tree")
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices
    }

    pub fn edges(&self) -> &[(usize, usize, T)] {
        &self.edges
    }

    /// Canonical point at `offset` along `edge`: endpoints collapse to vertices.
    pub fn point_on_edge(&self, edge: usize, offset: T) -> TreePoint<T> {
        let (u, v, w) = self.edges[edge];
        let slack = T::of(1e-12) * w;
        if offset <= slack {
            TreePoint::Vertex(u)
        } else if offset >= w - slack {
            TreePoint::Vertex(v)
        } else {
            TreePoint::Edge { edge, offset }
        }
    }

    /// Distance from a point to a vertex.
    pub fn to_vertex(&self, p: &TreePoint<T>, v: usize) -> T {
        match *p {
            TreePoint::Vertex(u) => self.vdist[(u, v)],
            TreePoint::Edge { edge, offset } => {
                let (a, b, w) = self.edges[edge];
                (offset + self.vdist[(a, v)]).min(w - offset + self.vdist[(b, v)])
            }
        }
    }

    /// Brute-force shortest path distance between vertices (Bellman-Ford relaxation), used as an oracle.
    pub fn shortest_path_oracle(&self, s: usize, t: usize) -> T {
        let mut d = vec![T::infinity(); self.vertices];
        d[s] = T::zero();
        for _ in 0..self.vertices {
            for &(u, v, w) in &self.edges {
                if d[u] + w < d[v] {
                    d[v] = d[u] + w;
                }
                if d[v] + w < d[u] {
                    d[u] = d[v] + w;
                }
            }
        }
        d[t]
    }
}

impl<T: Real> Metric<T> for TreeSpace<T> {
    type Point = TreePoint<T>;

    fn distance(&self, p: &TreePoint<T>, q: &TreePoint<T>) -> T {
        match (p, q) {
            (_, TreePoint::Vertex(v)) => self.to_vertex(p, *v),
            (TreePoint::Vertex(u), _) => self.to_vertex(q, *u),
            (
                TreePoint::Edge {
                    edge: e1,
                    offset: s1,
                },
                TreePoint::Edge {
                    edge: e2,
                    offset: s2,
                },
            ) => {
                if e1 == e2 {
                    (*s1 - *s2).abs()
                } else {
                    let (a, b, w) = self.edges[*e1];
                    (*s1 + self.to_vertex(q, a)).min(w - *s1 + self.to_vertex(q, b))
                }
            }
        }
    }

    fn is_euclidean(&self) -> bool {
        self.edges.len() <= 1
    }

    fn check_point(&self, p: &TreePoint<T>) -> Result<()> {
        match *p {
            TreePoint::Vertex(v) if v < self.vertices => Ok(()),
            TreePoint::Vertex(v) => invalid(format!("vertex {v} out of range")),
            TreePoint::Edge { edge, offset } => {
                let Some(&(_, _, w)) = self.edges.get(edge) else {
                    return invalid(format!("edge {edge} out of range"));
                };
                if offset < T::zero() || offset > w {
                    return invalid(format!("offset {offset} outside edge {edge}"));
                }
                Ok(())
            }
        }
    }
}

impl<T: Real> Sampling<T> for TreeSpace<T> {
    fn sample_point(&self, rng: &mut dyn RngCore) -> TreePoint<T> {
        if self.edges.is_empty() {
            return TreePoint::Vertex(0);
        }
        if rng.gen_bool(0.25) {
            return TreePoint::Vertex(rng.gen_range(0..self.vertices));
        }
        let e = rng.gen_range(0..self.edges.len());
        let w = self.edges[e].2;
        self.point_on_edge(e, w * uniform::<T>(rng, 0.0, 1.0))
    }

    fn perturb(&self, p: &TreePoint<T>, step: T, rng: &mut dyn RngCore) -> TreePoint<T> {
        if self.edges.is_empty() {
            return TreePoint::Vertex(0);
        }
        // walk a random signed distance, choosing a random branch at each vertex
        let mut remaining =
            step * uniform::<T>(rng, 0.0, 1.0) * self.vdist.iter().copied().fold(T::zero(), T::max);
        let (mut edge, mut offset, mut forward) = match *p {
            TreePoint::Edge { edge, offset } => (edge, offset, rng.gen_bool(0.5)),
            TreePoint::Vertex(v) => {
                let inc: Vec<usize> = (0..self.edges.len())
                    .filter(|&k| self.edges[k].0 == v || self.edges[k].1 == v)
                    .collect();
                let e = inc[rng.gen_range(0..inc.len())];
                let at_start = self.edges[e].0 == v;
                (
                    e,
                    if at_start { T::zero() } else { self.edges[e].2 },
                    at_start,
                )
            }
        };
        for _ in 0..self.vertices + 1 {
            let w = self.edges[edge].2;
            let room = if forward { w - offset } else { offset };
            if remaining <= room {
                offset = if forward {
                    offset + remaining
                } else {
                    offset - remaining
                };
                return self.point_on_edge(edge, offset);
            }
            remaining -= room;
            let v = if forward {
                self.edges[edge].1
            } else {
                self.edges[edge].0
            };
            let inc: Vec<usize> = (0..self.edges.len())
                .filter(|&k| k != edge && (self.edges[k].0 == v || self.edges[k].1 == v))
                .collect();
            if inc.is_empty() {
                return TreePoint::Vertex(v);
            }
            edge = inc[rng.gen_range(0..inc.len())];
            forward = self.edges[edge].0 == v;
            offset = if forward {
                T::zero()
            } else {
                self.edges[edge].2
            };
        }
        self.point_on_edge(edge, offset)
    }

    fn enumerate(&self) -> Option<Vec<TreePoint<T>>> {
        None
    }
}

/// The Poincare ball model of hyperbolic space (curvature -1), by default the disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicDisk {
    pub dim: usize,
}

impl Default for HyperbolicDisk {
    fn default() -> Self {
        Self { dim: 2 }
    }
}

impl HyperbolicDisk {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }

    /// Moves a point radially inside the admissible radius.
    pub fn clamp<T: Real>(&self, mut p: Vec<T>) -> Vec<T> {
        clamp_to_ball(&mut p, T::of(DISK_RADIUS));
        p
    }

    /// Mobius addition `u (+) v`.
    pub fn mobius_add<T: Real>(&self, u: &[T], v: &[T]) -> Vec<T> {
        let uv = dot(u, v);
        let uu = dot(u, u);
        let vv = dot(v, v);
        let two = T::of(2.0);
        let cu = T::one() + two * uv + vv;
        let cv = T::one() - uu;
        let den = T::one() + two * uv + uu * vv;
        u.iter()
            .zip(v)
            .map(|(&a, &b)| (cu * a + cv * b) / den)
            .collect()
    }

    /// Riemannian logarithm at `x`, in ambient coordinates.
    pub fn log<T: Real>(&self, x: &[T], y: &[T]) -> Vec<T> {
        let neg: Vec<T> = x.iter().map(|&a| -a).collect();
        let w = self.mobius_add(&neg, y);
        let nw = norm2(&w);
        if nw == T::zero() {
            return vec![T::zero(); x.len()];
        }
        let lambda = T::of(2.0) / (T::one() - dot(x, x));
        let s = T::of(2.0) / lambda * nw.min(T::one() - T::epsilon()).atanh() / nw;
        w.iter().map(|&a| a * s).collect()
    }

    /// Riemannian exponential at `x`.
    pub fn exp<T: Real>(&self, x: &[T], v: &[T]) -> Vec<T> {
        let nv = norm2(v);
        if nv == T::zero() {
            return x.to_vec();
        }
        let lambda = T::of(2.0) / (T::one() - dot(x, x));
        let s = (lambda * nv / T::of(2.0)).tanh() / nv;
        let step: Vec<T> = v.iter().map(|&a| a * s).collect();
        self.clamp(self.mobius_add(x, &step))
    }

    /// Norm of a tangent vector at `x` in the hyperbolic metric.
    pub fn tangent_norm<T: Real>(&self, x: &[T], v: &[T]) -> T {
        T::of(2.0) / (T::one() - dot(x, x)) * norm2(v)
    }
}

impl<T: Real> Metric<T> for HyperbolicDisk {
    type Point = Vec<T>;

    fn distance(&self, u: &Vec<T>, v: &Vec<T>) -> T {
        let diff2 = csum(u.iter().zip(v).map(|(&a, &b)| (a - b) * (a - b)));
        let den = (T::one() - dot(u, u)) * (T::one() - dot(v, v));
        let x = T::of(2.0) * diff2 / den;
        // arcosh(1 + x) = log1p(x + sqrt(x (x + 2))), accurate for small x
        (x + (x * (x + T::of(2.0))).sqrt()).ln_1p()
    }

    fn check_point(&self, p: &Vec<T>) -> Result<()> {
        check_dim(self.dim, p)?;
        if norm2(p) > T::of(DISK_RADIUS) {
            return invalid(format!("hyperbolic point has norm {} > 1 - 1e-9", norm2(p)));
        }
        Ok(())
    }
}

impl<T: Real> Sampling<T> for HyperbolicDisk {
    fn sample_point(&self, rng: &mut dyn RngCore) -> Vec<T> {
        sample_ball(self.dim, 0.8, rng)
    }

    fn perturb(&self, p: &Vec<T>, step: T, rng: &mut dyn RngCore) -> Vec<T> {
        let mut q: Vec<T> = p
            .iter()
            .map(|&x| x + step * uniform::<T>(rng, -1.0, 1.0))
            .collect();
        clamp_to_ball(&mut q, T::of(0.95));
        q
    }
}

/// A finite space given by its distance matrix; points are indices.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix<T> {
    d: Matrix<T>,
    pseudometric: bool,
}

impl<T: Real> DistanceMatrix<T> {
    /// Accepts a symmetric matrix with zero diagonal and positive off-diagonal entries.
    pub fn new(d: Matrix<T>) -> Result<Self> {
        Self::build(d, false)
    }

    /// Like [`DistanceMatrix::new`] but allows zero distance between distinct indices.
    pub fn pseudometric(d: Matrix<T>) -> Result<Self> {
        Self::build(d, true)
    }

    fn build(d: Matrix<T>, pseudometric: bool) -> Result<Self> {
        if !d.is_square() {
            return invalid(format!(
                "distance matrix is {}x{}, not square",
                d.rows(),
                d.cols()
            ));
        }
        let tol = T::of(TOL);
        for i in 0..d.rows() {
            if d[(i, i)] != T::zero() {
                return invalid(format!("d[{i}][{i}] = {} is not zero", d[(i, i)]));
            }
            for j in 0..d.cols() {
                let x = d[(i, j)];
                if !x.is_finite() || x < T::zero() {
                    return invalid(format!("d[{i}][{j}] = {x} is negative or not finite"));
                }
                if (x - d[(j, i)]).abs() > tol * (T::one() + x) {
                    return invalid(format!("d[{i}][{j}] != d[{j}][{i}]"));
                }
                if i != j && x == T::zero() && !pseudometric {
                    return invalid(format!("d[{i}][{j}] = 0 for distinct points"));
                }
            }
        }
        Ok(Self { d, pseudometric })
    }

    pub fn len(&self) -> usize {
        self.d.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.d.rows() == 0
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.d
    }

    pub fn is_pseudometric(&self) -> bool {
        self.pseudometric
    }

    /// Distance matrix of a list of points in another space.
    pub fn from_points<M: Metric<T>>(space: &M, points: &[M::Point]) -> Result<Self> {
        let n = points.len();
        Self::pseudometric(Matrix::from_fn(n, n, |i, j| {
            space.distance(&points[i], &points[j])
        }))
    }
}

impl<T: Real> Metric<T> for DistanceMatrix<T> {
    type Point = usize;

    fn distance(&self, a: &usize, b: &usize) -> T {
        self.d[(*a, *b)]
    }

    fn check_point(&self, p: &usize) -> Result<()> {
        if *p >= self.len() {
            return invalid(format!("index {p} out of range for {} points", self.len()));
        }
        Ok(())
    }
}

impl<T: Real> Sampling<T> for DistanceMatrix<T> {
    fn sample_point(&self, rng: &mut dyn RngCore) -> usize {
        rng.gen_range(0..self.len())
    }

    fn perturb(&self, p: &usize, step: T, rng: &mut dyn RngCore) -> usize {
        if T::of(rng.gen_range(0.0..1.0)) < step {
            rng.gen_range(0..self.len())
        } else {
            *p
        }
    }

    fn enumerate(&self) -> Option<Vec<usize>> {
        Some((0..self.len()).collect())
    }
}

/// The snowflake `(X, d^alpha)` of a metric space, `alpha in (0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Snowflake<M, T> {
    pub inner: M,
    pub alpha: T,
}

impl<T: Real, M: Metric<T>> Snowflake<M, T> {
    pub fn new(inner: M, alpha: T) -> Result<Self> {
        if !(alpha > T::zero() && alpha <= T::one()) {
            return invalid(format!(
                "snowflake exponent must lie in (0, 1], got {alpha}"
            ));
        }
        Ok(Self { inner, alpha })
    }
}

/// Convenience constructor for [`Snowflake`].
pub fn snowflake<T: Real, M: Metric<T>>(space: M, alpha: T) -> Result<Snowflake<M, T>> {
    Snowflake::new(space, alpha)
}

impl<T: Real, M: Metric<T>> Metric<T> for Snowflake<M, T> {
    type Point = M::Point;

    fn distance(&self, a: &M::Point, b: &M::Point) -> T {
        let d = self.inner.distance(a, b);
        if self.alpha == T::one() {
            d
        } else {
            d.powf(self.alpha)
        }
    }

    fn is_euclidean(&self) -> bool {
        self.alpha == T::one() && self.inner.is_euclidean()
    }

    fn check_point(&self, p: &M::Point) -> Result<()> {
        self.inner.check_point(p)
    }
}

impl<T: Real, M: Sampling<T>> Sampling<T> for Snowflake<M, T> {
    fn sample_point(&self, rng: &mut dyn RngCore) -> M::Point {
        self.inner.sample_point(rng)
    }
    fn perturb(&self, p: &M::Point, step: T, rng: &mut dyn RngCore) -> M::Point {
        self.inner.perturb(p, step, rng)
    }
    fn enumerate(&self) -> Option<Vec<M::Point>> {
        self.inner.enumerate()
    }
}

/// A sampled triple `(i, j, k)` with `d(i,k) > d(i,j) + d(j,k)` beyond tolerance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TriangleViolation {
    /// Indices into the sampled point list (or the space's own indices for finite spaces).
    pub triple: (usize, usize, usize),
    pub excess: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MetricReport {
    pub triples_checked: usize,
    pub violations: Vec<TriangleViolation>,
}

impl MetricReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Samples `sample_size` triples and reports triangle-inequality failures larger
/// than `1e-12` relative to the distances involved.
///
/// Finite spaces with at most `sample_size` distinct triples are checked exhaustively,
/// and violations are reported with the space's own indices.
pub fn validate_metric<T: Real, M: Sampling<T>>(
    space: &M,
    sample_size: usize,
    seed: u64,
) -> Result<MetricReport> {
    if sample_size < 3 {
        return invalid(format!("sample_size must be at least 3, got {sample_size}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = MetricReport::default();
    let check = |a: &M::Point,
                 b: &M::Point,
                 c: &M::Point,
                 ids: (usize, usize, usize),
                 report: &mut MetricReport| {
        report.triples_checked += 1;
        let dab = space.distance(a, b);
        let dbc = space.distance(b, c);
        let dac = space.distance(a, c);
        // every ordering of the triple: each side against the sum of the other two
        let sides = [
            (dac, dab, dbc, ids),
            (dab, dac, dbc, (ids.0, ids.2, ids.1)),
            (dbc, dab, dac, (ids.1, ids.0, ids.2)),
        ];
        for (long, s1, s2, order) in sides {
            let excess = long - s1 - s2;
            let scale = T::one().max(long);
            if excess > T::of(1e-12) * scale {
                report.violations.push(TriangleViolation {
                    triple: order,
                    excess: excess.to_f64_lossy(),
                });
            }
        }
    };
    match space.enumerate() {
        Some(pts) if pts.len() >= 3 && binomial3(pts.len()) <= sample_size => {
            let n = pts.len();
            for i in 0..n {
                for j in i + 1..n {
                    for k in j + 1..n {
                        check(&pts[i], &pts[j], &pts[k], (i, j, k), &mut report);
                    }
                }
            }
        }
        Some(pts) if pts.len() >= 3 => {
            let n = pts.len();
            for _ in 0..sample_size {
                let i = rng.gen_range(0..n);
                let j = rng.gen_range(0..n);
                let k = rng.gen_range(0..n);
                check(&pts[i], &pts[j], &pts[k], (i, j, k), &mut report);
            }
        }
        Some(_) => {}
        None => {
            for t in 0..sample_size {
                let a = space.sample_point(&mut rng);
                let b = space.sample_point(&mut rng);
                let c = space.sample_point(&mut rng);
                check(&a, &b, &c, (3 * t, 3 * t + 1, 3 * t + 2), &mut report);
            }
        }
    }
    Ok(report)
}

fn binomial3(n: usize) -> usize {
    n * n.saturating_sub(1) * n.saturating_sub(2) / 6
}

/// Serializable description of a space, as accepted by the command line tool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpaceSpec {
    Euclidean {
        dim: usize,
    },
    Lp {
        dim: usize,
        p: f64,
    },
    Tree {
        edges: Vec<(usize, usize, f64)>,
    },
    HyperbolicDisk {
        #[serde(default = "two")]
        dim: usize,
    },
    Matrix {
        d: Vec<Vec<f64>>,
        #[serde(default)]
        pseudometric: bool,
    },
}

fn two() -> usize {
    2
}

/// A point of a [`FiniteMetricSpace`]: an index (matrix spaces, tree vertices),
/// a coordinate vector, or an interior tree point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpacePoint<T> {
    Index(usize),
    Coords(Vec<T>),
    TreeEdge { edge: usize, offset: T },
}

/// Runtime-selected space, used where the kind is only known from input data.
#[derive(Clone, Debug, PartialEq)]
pub enum FiniteMetricSpace<T> {
    Euclidean(Euclidean),
    Lp(LpSpace<T>),
    Tree(TreeSpace<T>),
    Hyperbolic(HyperbolicDisk),
    Matrix(DistanceMatrix<T>),
}

impl<T: Real> FiniteMetricSpace<T> {
    pub fn from_spec(spec: &SpaceSpec) -> Result<Self> {
        Ok(match spec {
            SpaceSpec::Euclidean { dim } => Self::Euclidean(Euclidean::new(*dim)),
            SpaceSpec::Lp { dim, p } => Self::Lp(LpSpace::new(*dim, T::of(*p))?),
            SpaceSpec::Tree { edges } => Self::Tree(TreeSpace::new(
                edges.iter().map(|&(u, v, w)| (u, v, T::of(w))).collect(),
            )?),
            SpaceSpec::HyperbolicDisk { dim } => Self::Hyperbolic(HyperbolicDisk::new(*dim)),
            SpaceSpec::Matrix { d, pseudometric } => {
                let rows: Vec<Vec<T>> = d
                    .iter()
                    .map(|r| r.iter().map(|&x| T::of(x)).collect())
                    .collect();
                let m = Matrix::from_rows(&rows)?;
                Self::Matrix(if *pseudometric {
                    DistanceMatrix::pseudometric(m)?
                } else {
                    DistanceMatrix::new(m)?
                })
            }
        })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Euclidean(_) => "euclidean",
            Self::Lp(_) => "lp",
            Self::Tree(_) => "tree",
            Self::Hyperbolic(_) => "hyperbolic_disk",
            Self::Matrix(_) => "matrix",
        }
    }

    fn tree_point(p: &SpacePoint<T>) -> Option<TreePoint<T>> {
        match *p {
            SpacePoint::Index(v) => Some(TreePoint::Vertex(v)),
            SpacePoint::TreeEdge { edge, offset } => Some(TreePoint::Edge { edge, offset }),
            SpacePoint::Coords(_) => None,
        }
    }

    fn coords(p: &SpacePoint<T>) -> &[T] {
        match p {
            SpacePoint::Coords(c) => c,
            _ => &[],
        }
    }
}

impl<T: Real> Metric<T> for FiniteMetricSpace<T> {
    type Point = SpacePoint<T>;

    fn distance(&self, a: &SpacePoint<T>, b: &SpacePoint<T>) -> T {
        match self {
            Self::Euclidean(s) => s.distance(&Self::coords(a).to_vec(), &Self::coords(b).to_vec()),
            Self::Lp(s) => s.distance(&Self::coords(a).to_vec(), &Self::coords(b).to_vec()),
            Self::Hyperbolic(s) => s.distance(&Self::coords(a).to_vec(), &Self::coords(b).to_vec()),
            Self::Tree(s) => match (Self::tree_point(a), Self::tree_point(b)) {
                (Some(x), Some(y)) => s.distance(&x, &y),
                _ => T::nan(),
            },
            Self::Matrix(s) => match (a, b) {
                (SpacePoint::Index(i), SpacePoint::Index(j)) => s.distance(i, j),
                _ => T::nan(),
            },
        }
    }

    fn is_euclidean(&self) -> bool {
        match self {
            Self::Euclidean(_) => true,
            Self::Lp(s) => Metric::<T>::is_euclidean(s),
            Self::Tree(s) => s.is_euclidean(),
            _ => false,
        }
    }

    fn check_point(&self, p: &SpacePoint<T>) -> Result<()> {
        let wrong = || {
            invalid(format!(
                "point {p:?} does not belong to a {} space",
                self.kind()
            ))
        };
        match (self, p) {
            (Self::Euclidean(s), SpacePoint::Coords(c)) => s.check_point(c),
            (Self::Lp(s), SpacePoint::Coords(c)) => s.check_point(c),
            (Self::Hyperbolic(s), SpacePoint::Coords(c)) => s.check_point(c),
            (Self::Tree(s), _) => match Self::tree_point(p) {
                Some(tp) => s.check_point(&tp),
                None => wrong(),
            },
            (Self::Matrix(s), SpacePoint::Index(i)) => s.check_point(i),
            _ => wrong(),
        }
    }
}

impl<T: Real> Sampling<T> for FiniteMetricSpace<T> {
    fn sample_point(&self, rng: &mut dyn RngCore) -> SpacePoint<T> {
        match self {
            Self::Euclidean(s) => SpacePoint::Coords(s.sample_point(rng)),
            Self::Lp(s) => SpacePoint::Coords(s.sample_point(rng)),
            Self::Hyperbolic(s) => SpacePoint::Coords(s.sample_point(rng)),
            Self::Tree(s) => from_tree(s.sample_point(rng)),
            Self::Matrix(s) => SpacePoint::Index(s.sample_point(rng)),
        }
    }

    fn perturb(&self, p: &SpacePoint<T>, step: T, rng: &mut dyn RngCore) -> SpacePoint<T> {
        match (self, p) {
            (Self::Euclidean(s), SpacePoint::Coords(c)) => {
                SpacePoint::Coords(s.perturb(c, step, rng))
            }
            (Self::Lp(s), SpacePoint::Coords(c)) => SpacePoint::Coords(s.perturb(c, step, rng)),
            (Self::Hyperbolic(s), SpacePoint::Coords(c)) => {
                SpacePoint::Coords(s.perturb(c, step, rng))
            }
            (Self::Tree(s), _) => match Self::tree_point(p) {
                Some(tp) => from_tree(s.perturb(&tp, step, rng)),
                None => p.clone(),
            },
            (Self::Matrix(s), SpacePoint::Index(i)) => SpacePoint::Index(s.perturb(i, step, rng)),
            _ => p.clone(),
        }
    }

    fn enumerate(&self) -> Option<Vec<SpacePoint<T>>> {
        match self {
            Self::Matrix(s) => Some((0..s.len()).map(SpacePoint::Index).collect()),
            _ => None,
        }
    }
}

pub(crate) fn from_tree<T>(p: TreePoint<T>) -> SpacePoint<T> {
    match p {
        TreePoint::Vertex(v) => SpacePoint::Index(v),
        TreePoint::Edge { edge, offset } => SpacePoint::TreeEdge { edge, offset },
    }
}

pub(crate) fn to_tree<T: Copy>(p: &SpacePoint<T>) -> Option<TreePoint<T>> {
    match *p {
        SpacePoint::Index(v) => Some(TreePoint::Vertex(v)),
        SpacePoint::TreeEdge { edge, offset } => Some(TreePoint::Edge { edge, offset }),
        SpacePoint::Coords(_) => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_matrix_is_clean() {
        let d = DistanceMatrix::new(Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap())
            .unwrap();
        let r = validate_metric(&d, 10, 0).unwrap();
        assert!(r.is_clean());
    }

    #[test]
    fn rejects_bad_matrices() {
        assert!(DistanceMatrix::new(Matrix::from_rows(&[vec![0.0, 1.0]]).unwrap()).is_err());
        assert!(DistanceMatrix::new(
            Matrix::from_rows(&[vec![0.0, -1.0], vec![-1.0, 0.0]]).unwrap()
        )
        .is_err());
        let zero = Matrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!(DistanceMatrix::new(zero.clone()).is_err());
        assert!(DistanceMatrix::pseudometric(zero).is_ok());
    }

    #[test]
    fn sample_size_below_three_rejected() {
        assert!(validate_metric::<f64, _>(&Euclidean::new(2), 2, 0).is_err());
    }

    #[test]
    fn tree_rejects_cycles_and_forests() {
        assert!(TreeSpace::new(vec![(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)]).is_err());
        assert!(TreeSpace::new(vec![(0, 1, 1.0), (2, 3, 1.0), (3, 2, 1.0)]).is_err());
    }

    #[test]
    fn tree_edge_points() {
        let t: TreeSpace<f64> =
            TreeSpace::new(vec![(0, 1, 2.0), (1, 2, 1.0), (1, 3, 3.0)]).unwrap();
        let p = t.point_on_edge(0, 0.5);
        let q = t.point_on_edge(2, 1.0);
        assert!((t.distance(&p, &q) - 2.5).abs() < 1e-15);
        assert!((t.distance(&p, &TreePoint::Vertex(2)) - 2.5).abs() < 1e-15);
        assert_eq!(t.point_on_edge(1, 1.0), TreePoint::Vertex(2));
    }

    #[test]
    fn hyperbolic_exp_inverts_log() {
        let h = HyperbolicDisk::default();
        let x: Vec<f64> = vec![0.3, -0.2];
        let y: Vec<f64> = vec![-0.5, 0.4];
        let v = h.log(&x, &y);
        let back = h.exp(&x, &v);
        assert!((back[0] - y[0]).abs() < 1e-12 && (back[1] - y[1]).abs() < 1e-12);
        // length of the log vector equals the distance
        let d: f64 = h.distance(&x, &y);
        assert!((h.tangent_norm(&x, &v) - d).abs() < 1e-12);
    }

    #[test]
    fn lp_distance_large_exponent() {
        let s = LpSpace::new(2, 64.0).unwrap();
        let d: f64 = s.distance(&vec![0.0, 0.0], &vec![1e-3, 1e-3]);
        assert!((d - 1e-3 * 2f64.powf(1.0 / 64.0)).abs() < 1e-15);
    }

    #[test]
    fn spec_roundtrip() {
        let spec: SpaceSpec =
            serde_json::from_str(r#"{"kind":"tree","edges":[[0,1,1.0],[1,2,2.0]]}"#).unwrap();
        let space = FiniteMetricSpace::<f64>::from_spec(&spec).unwrap();
        let d = space.distance(&SpacePoint::Index(0), &SpacePoint::Index(2));
        assert_eq!(d, 3.0);
        let spec: SpaceSpec = serde_json::from_str(r#"{"kind":"hyperbolic_disk"}"#).unwrap();
        assert_eq!(spec, SpaceSpec::HyperbolicDisk { dim: 2 });
    }
}
