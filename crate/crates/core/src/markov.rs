//! Reversible Markov chains, their powers, Cesaro and Green averages, spectra and generators.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{csum, Real};

/// Tolerance for stochasticity and reversibility checks.
pub fn chain_tol<T: Real>(n: usize) -> T {
    T::of(1e-12).max(T::epsilon() * T::of_usize(8 * n.max(1)))
}

/// Largest `|pi_i m_ij - pi_j m_ji|` over all pairs.
pub fn reversibility_residual<T: Real>(m: &Matrix<T>, pi: &[T]) -> T {
    let n = m.rows();
    let mut worst = T::zero();
    for i in 0..n {
        for j in 0..i {
            worst = worst.max((pi[i] * m[(i, j)] - pi[j] * m[(j, i)]).abs());
        }
    }
    worst
}

/// A row-stochastic matrix together with a stationary vector it is reversible against.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReversibleChain<T> {
    a: Matrix<T>,
    pi: Vec<T>,
}

/// JSON form of a chain: `{"A": [[...]], "pi": [...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub pi: Vec<f64>,
}

impl<T: Real> ReversibleChain<T> {
    pub fn new(a: Matrix<T>, pi: Vec<T>) -> Result<Self> {
        let n = a.rows();
        if n == 0 || !a.is_square() {
            return invalid(format!(
                "transition matrix must be square and nonempty, got {}x{}",
                a.rows(),
                a.cols()
            ));
        }
        if pi.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: pi.len(),
            });
        }
        let tol = chain_tol::<T>(n);
        for i in 0..n {
            for j in 0..n {
                if !(a[(i, j)] >= T::zero()) || !a[(i, j)].is_finite() {
                    return invalid(format!("a[{i}][{j}] = {} is negative", a[(i, j)]));
                }
            }
            let s = csum(a.row(i).iter().copied());
            if (s - T::one()).abs() > tol {
                return invalid(format!("row {i} of the transition matrix sums to {s}"));
            }
        }
        if let Some(i) = pi.iter().position(|x| !(*x >= T::zero())) {
            return invalid(format!("pi[{i}] = {} is negative", pi[i]));
        }
        let total = csum(pi.iter().copied());
        if (total - T::one()).abs() > tol {
            return invalid(format!("pi sums to {total}, not 1"));
        }
        for i in 0..n {
            for j in 0..i {
                let r = (pi[i] * a[(i, j)] - pi[j] * a[(j, i)]).abs();
                if r > tol {
                    return Err(Error::NotReversible {
                        i,
                        j,
                        residual: r.to_f64_lossy(),
                    });
                }
            }
        }
        Ok(Self { a, pi })
    }

    /// A symmetric stochastic matrix with the uniform stationary vector.
    pub fn symmetric(a: Matrix<T>) -> Result<Self> {
        let n = a.rows();
        Self::new(a, vec![T::one() / T::of_usize(n.max(1)); n])
    }

    /// The walk `a_ij = w_ij / sum_k w_ik` on symmetric nonnegative weights, with `pi_i`
    /// proportional to the row sums of `w`.
    pub fn from_weights(w: &Matrix<T>) -> Result<Self> {
        if !w.is_symmetric(T::zero()) {
            return invalid("weight matrix must be symmetric");
        }
        let sums = w.row_sums();
        if let Some(i) = sums.iter().position(|s| !(*s > T::zero())) {
            return invalid(format!("weight row {i} has no mass"));
        }
        let total = csum(sums.iter().copied());
        let a = Matrix::from_fn(w.rows(), w.cols(), |i, j| w[(i, j)] / sums[i]);
        Self::new(a, sums.iter().map(|&s| s / total).collect())
    }

    pub fn from_spec(spec: &ChainSpec) -> Result<Self> {
        let rows: Vec<Vec<T>> = spec
            .a
            .iter()
            .map(|r| r.iter().map(|&x| T::of(x)).collect())
            .collect();
        Self::new(
            Matrix::from_rows(&rows)?,
            spec.pi.iter().map(|&x| T::of(x)).collect(),
        )
    }

    pub fn to_spec(&self) -> ChainSpec {
        ChainSpec {
            a: self
                .a
                .to_rows()
                .iter()
                .map(|r| r.iter().map(|x| x.to_f64_lossy()).collect())
                .collect(),
            pi: self.pi.iter().map(|x| x.to_f64_lossy()).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.pi.len()
    }

    pub fn a(&self) -> &Matrix<T> {
        &self.a
    }

    pub fn pi(&self) -> &[T] {
        &self.pi
    }

    pub fn is_symmetric(&self) -> bool {
        let u = T::one() / T::of_usize(self.n());
        let tol = chain_tol::<T>(self.n());
        self.pi.iter().all(|&p| (p - u).abs() <= tol) && self.a.is_symmetric(tol)
    }

    /// `A^t`.
    pub fn power(&self, t: usize) -> Matrix<T> {
        self.a.pow(t, true)
    }

    /// The Cesaro average `(A + A^2 + ... + A^t) / t`.
    pub fn cesaro(&self, t: usize) -> Result<Matrix<T>> {
        cesaro_of(&self.a, t)
    }

    /// Green matrices `(B_t, G_t)` with `G_t = (I - (1 - 1/t) A)^{-1} / t` and `B_t = G_t - I/t`.
    pub fn green(&self, t: usize) -> Result<(Matrix<T>, Matrix<T>)> {
        if t == 0 {
            return invalid("Green matrix needs t >= 1");
        }
        let n = self.n();
        if t == 1 {
            return Ok((Matrix::zeros(n, n), Matrix::identity(n)));
        }
        let tt = T::of_usize(t);
        let q = T::one() - tt.recip();
        let m = Matrix::identity(n).sub(&self.a.scale(q));
        let mut g = m.solve(&Matrix::identity(n))?.scale(tt.recip());
        for x in 0..n {
            for y in 0..n {
                g[(x, y)] = g[(x, y)].max(T::zero());
            }
        }
        let mut b = g.sub(&Matrix::identity(n).scale(tt.recip()));
        for x in 0..n {
            for y in 0..n {
                b[(x, y)] = b[(x, y)].max(T::zero());
            }
        }
        Ok((b, g))
    }

    /// `D^{1/2} A D^{-1/2}` on the support of `pi`, which is symmetric by reversibility.
    pub fn symmetrized(&self) -> Matrix<T> {
        let (chain, _) = self.restrict_to_support();
        let s: Vec<T> = chain.pi.iter().map(|p| p.sqrt()).collect();
        let mut m = Matrix::from_fn(chain.n(), chain.n(), |i, j| s[i] * chain.a[(i, j)] / s[j]);
        for i in 0..m.rows() {
            for j in 0..i {
                let avg = (m[(i, j)] + m[(j, i)]) / T::of(2.0);
                m[(i, j)] = avg;
                m[(j, i)] = avg;
            }
        }
        m
    }

    /// Eigenvalues of `A` (on the support of `pi`) in decreasing order.
    pub fn eigenvalues(&self) -> Vec<T> {
        self.symmetrized().symmetric_eigenvalues()
    }

    /// `lambda(A) = max_{i >= 2} |lambda_i(A)|`, and 0 for a single state.
    pub fn absolute_gap(&self) -> T {
        let ev = self.eigenvalues();
        let lam = ev.iter().skip(1).fold(T::zero(), |m, &x| m.max(x.abs()));
        lam.min(T::one())
    }

    /// The chain restricted to `{i : pi_i > 0}`, and the retained indices.
    pub fn restrict_to_support(&self) -> (Self, Vec<usize>) {
        let keep: Vec<usize> = (0..self.n()).filter(|&i| self.pi[i] > T::zero()).collect();
        if keep.len() == self.n() {
            return (self.clone(), keep);
        }
        let mut a = Matrix::from_fn(keep.len(), keep.len(), |i, j| self.a[(keep[i], keep[j])]);
        a.renormalize_rows();
        let pi = keep.iter().map(|&i| self.pi[i]).collect();
        (Self { a, pi }, keep)
    }

    /// `(1 - eps) A + eps Pi` where every row of `Pi` equals `pi`.
    pub fn smoothed(&self, eps: T) -> Self {
        let n = self.n();
        let a = Matrix::from_fn(n, n, |i, j| {
            (T::one() - eps) * self.a[(i, j)] + eps * self.pi[j]
        });
        Self {
            a,
            pi: self.pi.clone(),
        }
    }

    /// `sum_ij pi_i m_ij d_ij` for a weight matrix `m` and a table of values `d`.
    pub fn energy(&self, m: &Matrix<T>, d: &Matrix<T>) -> T {
        let n = self.n();
        csum(
            (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .map(|(i, j)| self.pi[i] * m[(i, j)] * d[(i, j)]),
        )
    }
}

/// `(M + M^2 + ... + M^t) / t` for a stochastic `M`.
pub fn cesaro_of<T: Real>(m: &Matrix<T>, t: usize) -> Result<Matrix<T>> {
    if t == 0 {
        return invalid("Cesaro average needs t >= 1");
    }
    let n = m.rows();
    let mut power = Matrix::identity(n);
    let mut sum = Matrix::zeros(n, n);
    for _ in 0..t {
        power = power.matmul(m);
        power.renormalize_rows();
        sum = sum.add(&power);
    }
    let mut out = sum.scale(T::of_usize(t).recip());
    out.renormalize_rows();
    Ok(out)
}

/// Instance families produced by [`generate`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainKind {
    /// The path with holding probability 1/2 at both endpoints.
    PathHolding,
    /// Simple random walk on the cycle.
    Cycle,
    /// `J / n`.
    Complete,
    /// Connected symmetric stochastic matrix from random symmetric weights.
    RandomSymmetric,
    /// Random walk on random symmetric positive weights.
    RandomReversible,
    /// Simple random walk on a random `d`-regular graph.
    RegularGraph(usize),
}

impl std::str::FromStr for ChainKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "path_holding" => Self::PathHolding,
            "cycle" => Self::Cycle,
            "complete" => Self::Complete,
            "random_symmetric" => Self::RandomSymmetric,
            "random_reversible" => Self::RandomReversible,
            other => match other.strip_prefix("regular_graph") {
                Some(rest) => {
                    let d = rest.trim_matches(|c| c == '(' || c == ')' || c == ':' || c == '_');
                    Self::RegularGraph(
                        d.parse()
                            .map_err(|_| Error::InvalidInput(format!("bad degree in {s:?}")))?,
                    )
                }
                None => return invalid(format!("unknown chain kind {s:?}")),
            },
        })
    }
}

/// Deterministic chain of the given kind on `n >= 2` states.
pub fn generate<T: Real>(kind: ChainKind, n: usize, seed: u64) -> Result<ReversibleChain<T>> {
    if n < 2 {
        return invalid(format!("need at least 2 states, got {n}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = T::of(0.5);
    match kind {
        ChainKind::PathHolding => {
            let mut a = Matrix::zeros(n, n);
            a[(0, 0)] = half;
            a[(n - 1, n - 1)] = half;
            for i in 0..n - 1 {
                a[(i, i + 1)] = half;
                a[(i + 1, i)] = half;
            }
            ReversibleChain::symmetric(a)
        }
        ChainKind::Cycle => {
            let mut a = Matrix::zeros(n, n);
            for i in 0..n {
                a[(i, (i + 1) % n)] += half;
                a[(i, (i + n - 1) % n)] += half;
            }
            ReversibleChain::symmetric(a)
        }
        ChainKind::Complete => {
            ReversibleChain::symmetric(Matrix::filled(n, n, T::one() / T::of_usize(n)))
        }
        ChainKind::RandomSymmetric => {
            let mut w = Matrix::zeros(n, n);
            for i in 0..n {
                for j in 0..i {
                    let x = if rng.gen_bool(0.7) {
                        T::of(rng.gen_range(0.0..1.0))
                    } else {
                        T::zero()
                    };
                    w[(i, j)] = x;
                    w[(j, i)] = x;
                }
            }
            // a random Hamiltonian path keeps the chain connected
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            for e in order.windows(2) {
                let x = w[(e[0], e[1])].max(T::of(rng.gen_range(0.1..1.0)));
                w[(e[0], e[1])] = x;
                w[(e[1], e[0])] = x;
            }
            let dmax =
                w.row_sums().into_iter().fold(T::zero(), T::max) * T::of(rng.gen_range(1.0..1.5));
            let dmax = if dmax > T::zero() { dmax } else { T::one() };
            let mut a = w.scale(dmax.recip());
            for i in 0..n {
                let off = csum((0..n).filter(|&j| j != i).map(|j| a[(i, j)]));
                a[(i, i)] = T::one() - off;
            }
            ReversibleChain::symmetric(a)
        }
        ChainKind::RandomReversible => {
            let mut w = Matrix::zeros(n, n);
            for i in 0..n {
                for j in 0..=i {
                    let x = T::of(rng.gen_range(0.01..1.0));
                    w[(i, j)] = x;
                    w[(j, i)] = x;
                }
            }
            ReversibleChain::from_weights(&w)
        }
        ChainKind::RegularGraph(d) => {
            if (n * d) % 2 == 1 {
                return invalid(format!("no {d}-regular graph on {n} vertices: n*d is odd"));
            }
            if d == 0 || d >= n {
                return invalid(format!("degree {d} must lie in 1..{n}"));
            }
            let adj = random_regular(n, d, &mut rng)?;
            let inv = T::of_usize(d).recip();
            ReversibleChain::symmetric(Matrix::from_fn(n, n, |i, j| {
                if adj[i][j] {
                    inv
                } else {
                    T::zero()
                }
            }))
        }
    }
}

/// Simple `d`-regular graph by the configuration model with rejection of loops and multi-edges.
fn random_regular(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<bool>>> {
    for _ in 0..10_000 {
        let mut stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, d)).collect();
        stubs.shuffle(rng);
        let mut adj = vec![vec![false; n]; n];
        let ok = stubs.chunks(2).all(|pair| {
            let (u, v) = (pair[0], pair[1]);
            if u == v || adj[u][v] {
                return false;
            }
            adj[u][v] = true;
            adj[v][u] = true;
            true
        });
        if ok {
            return Ok(adj);
        }
    }
    Err(Error::Numerical(format!(
        "failed to sample a simple {d}-regular graph on {n} vertices"
    )))
}
