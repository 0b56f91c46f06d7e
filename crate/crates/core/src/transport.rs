//! Finitely supported probability measures and exact Wasserstein distances.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::Matrix;
use crate::metric::Metric;
use crate::scalar::{csum, powp, CompensatedSum, Real};

/// A probability measure with finitely many atoms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure<P, T> {
    support: Vec<P>,
    weights: Vec<T>,
}

fn simplex_tol<T: Real>(n: usize) -> T {
    T::of(1e-12).max(T::epsilon() * T::of_usize(4 * n.max(1)))
}

impl<P: Clone + PartialEq, T: Real> DiscreteMeasure<P, T> {
    /// Validates distinct support points and strictly positive weights summing to one.
    pub fn new(support: Vec<P>, weights: Vec<T>) -> Result<Self> {
        if support.is_empty() {
            return invalid("measure has empty support");
        }
        if support.len() != weights.len() {
            return invalid(format!(
                "{} support points but {} weights",
                support.len(),
                weights.len()
            ));
        }
        if let Some(k) = weights
            .iter()
            .position(|w| !(*w > T::zero()) || !w.is_finite())
        {
            return invalid(format!("weight {k} is {} (must be positive)", weights[k]));
        }
        let total = csum(weights.iter().copied());
        if (total - T::one()).abs() > simplex_tol(weights.len()) {
            return invalid(format!("weights sum to {total}, not 1"));
        }
        for i in 0..support.len() {
            if support[..i].contains(&support[i]) {
                return invalid(format!("support point {i} is repeated"));
            }
        }
        Ok(Self { support, weights })
    }

    /// Merges repeated points (summing weights), drops zero weights and renormalizes.
    /// The weights must already sum to one up to `1e-9`.
    pub fn from_weighted(atoms: impl IntoIterator<Item = (P, T)>) -> Result<Self> {
        let mut support: Vec<P> = Vec::new();
        let mut weights: Vec<T> = Vec::new();
        for (p, w) in atoms {
            if !(w >= T::zero()) || !w.is_finite() {
                return invalid(format!("negative or non-finite weight {w}"));
            }
            if w == T::zero() {
                continue;
            }
            match support.iter().position(|q| *q == p) {
                Some(k) => weights[k] += w,
                None => {
                    support.push(p);
                    weights.push(w);
                }
            }
        }
        let total = csum(weights.iter().copied());
        if support.is_empty()
            || (total - T::one()).abs() > T::of(1e-9).max(T::epsilon() * T::of(64.0))
        {
            return invalid(format!("weights sum to {total}, not 1"));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self { support, weights })
    }

    pub fn dirac(p: P) -> Self {
        Self {
            support: vec![p],
            weights: vec![T::one()],
        }
    }

    /// Uniform measure on a list of points (repeats accumulate weight).
    pub fn uniform(points: &[P]) -> Result<Self> {
        let w = T::one() / T::of_usize(points.len().max(1));
        Self::from_weighted(points.iter().cloned().map(|p| (p, w)))
    }

    pub fn support(&self) -> &[P] {
        &self.support
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&P, T)> {
        self.support.iter().zip(self.weights.iter().copied())
    }

    /// `integral of d(x, y)^p dmu(y)`.
    pub fn moment<M: Metric<T, Point = P>>(&self, space: &M, x: &P, p: T) -> T {
        csum(self.iter().map(|(y, w)| w * powp(space.distance(x, y), p)))
    }
}

/// A transport plan between two measures: rows follow the first measure's support,
/// columns the second's.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Coupling<T> {
    pub plan: Matrix<T>,
}

impl<T: Real> Coupling<T> {
    /// Largest deviation of the plan's marginals from the given weights, and the most negative entry.
    pub fn marginal_error(&self, mu: &[T], nu: &[T]) -> T {
        let rows = self.plan.row_sums();
        let cols = self.plan.transpose().row_sums();
        let r = rows.iter().zip(mu).map(|(&a, &b)| (a - b).abs());
        let c = cols.iter().zip(nu).map(|(&a, &b)| (a - b).abs());
        let neg = self.plan.min_entry().min(T::zero()).abs();
        r.chain(c).fold(neg, T::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Transport<T> {
    /// `W_p(mu, nu)`.
    pub value: T,
    /// The optimal `sum pi(x,y) d(x,y)^p`, i.e. `value^p`.
    pub cost: T,
    pub coupling: Coupling<T>,
}

/// Exact `W_p(mu, nu)` with an optimal coupling, for `p` in `[1, 64]`.
pub fn wasserstein<T: Real, M: Metric<T>>(
    space: &M,
    mu: &DiscreteMeasure<M::Point, T>,
    nu: &DiscreteMeasure<M::Point, T>,
    p: T,
) -> Result<Transport<T>> {
    if !(p >= T::one() && p <= T::of(64.0)) {
        return invalid(format!("Wasserstein exponent must lie in [1, 64], got {p}"));
    }
    let cost = Matrix::from_fn(mu.len(), nu.len(), |i, j| {
        powp(space.distance(&mu.support[i], &nu.support[j]), p)
    });
    let plan = transportation_simplex(&cost, &mu.weights, &nu.weights);
    let mut acc = CompensatedSum::new();
    for i in 0..plan.rows() {
        for j in 0..plan.cols() {
            acc.add(plan[(i, j)] * cost[(i, j)]);
        }
    }
    let total = acc.value().max(T::zero());
    Ok(Transport {
        value: total.powf(p.recip()),
        cost: total,
        coupling: Coupling { plan },
    })
}

/// Solves `min <C, X>` over nonnegative `X` with row sums `a` and column sums `b`
/// (both summing to one) by the transportation simplex method.
pub fn transportation_simplex<T: Real>(cost: &Matrix<T>, a: &[T], b: &[T]) -> Matrix<T> {
    let (m, n) = (a.len(), b.len());
    let mut flow = Matrix::zeros(m, n);
    if m == 1 || n == 1 {
        for i in 0..m {
            for j in 0..n {
                flow[(i, j)] = if m == 1 { b[j] } else { a[i] };
            }
        }
        return flow;
    }
    let cmax = cost.iter().fold(T::zero(), |s, &c| s.max(c.abs()));
    let scale = if cmax > T::zero() { cmax } else { T::one() };
    let c = cost.scale(scale.recip());

    // north-west corner start; the staircase always has m + n - 1 cells and is a spanning tree
    let mut basis: Vec<(usize, usize)> = Vec::with_capacity(m + n - 1);
    let mut in_basis = vec![vec![false; n]; m];
    let (mut s, mut d) = (a.to_vec(), b.to_vec());
    let (mut i, mut j) = (0, 0);
    while i < m && j < n {
        let x = s[i].min(d[j]);
        flow[(i, j)] = x;
        s[i] -= x;
        d[j] -= x;
        basis.push((i, j));
        in_basis[i][j] = true;
        if i == m - 1 {
            j += 1;
        } else if j == n - 1 || s[i] <= d[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    debug_assert_eq!(basis.len(), m + n - 1);

    let tol = T::of(1e-13).max(T::epsilon() * T::of(16.0));
    let max_iter = 50 * (m + n) * (m + n) + 1000;
    let mut u = vec![T::zero(); m];
    let mut v = vec![T::zero(); n];
    for iter in 0..max_iter {
        // potentials: u_i + v_j = c_ij on basic cells
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); m + n];
        for (k, &(bi, bj)) in basis.iter().enumerate() {
            adj[bi].push(k);
            adj[m + bj].push(k);
        }
        let mut seen = vec![false; m + n];
        seen[0] = true;
        u[0] = T::zero();
        let mut queue = VecDeque::from([0usize]);
        while let Some(node) = queue.pop_front() {
            for &k in &adj[node] {
                let (bi, bj) = basis[k];
                let (other, is_col) = if node < m {
                    (m + bj, true)
                } else {
                    (bi, false)
                };
                if seen[other] {
                    continue;
                }
                seen[other] = true;
                if is_col {
                    v[bj] = c[(bi, bj)] - u[bi];
                } else {
                    u[bi] = c[(bi, bj)] - v[bj];
                }
                queue.push_back(other);
            }
        }

        // pricing: Dantzig's rule, switching to Bland's rule late to rule out cycling
        let bland = iter > 10 * (m + n);
        let mut entering = None;
        let mut best = -tol;
        'price: for ii in 0..m {
            for jj in 0..n {
                if in_basis[ii][jj] {
                    continue;
                }
                let r = c[(ii, jj)] - u[ii] - v[jj];
                if r < best {
                    entering = Some((ii, jj));
                    if bland {
                        break 'price;
                    }
                    best = r;
                }
            }
        }
        let Some((ei, ej)) = entering else { break };

        // cycle: tree path from column node ej back to row node ei, closed by the entering cell
        let mut parent: Vec<Option<usize>> = vec![None; m + n];
        let mut visited = vec![false; m + n];
        visited[ei] = true;
        let mut queue = VecDeque::from([ei]);
        while let Some(node) = queue.pop_front() {
            if node == m + ej {
                break;
            }
            for &k in &adj[node] {
                let (bi, bj) = basis[k];
                let other = if node < m { m + bj } else { bi };
                if !visited[other] {
                    visited[other] = true;
                    parent[other] = Some(k);
                    queue.push_back(other);
                }
            }
        }
        // walk back from the column node: cells alternate -, +, -, ...
        let mut path = Vec::new();
        let mut node = m + ej;
        while node != ei {
            let k = parent[node].expect("basis is a spanning tree");
            path.push(k);
            let (bi, bj) = basis[k];
            node = if node >= m { bi } else { m + bj };
        }
        let mut theta = T::infinity();
        let mut leave = usize::MAX;
        for (pos, &k) in path.iter().enumerate() {
            if pos % 2 == 0 {
                let (bi, bj) = basis[k];
                if flow[(bi, bj)] < theta || (flow[(bi, bj)] == theta && k < leave) {
                    theta = flow[(bi, bj)];
                    leave = k;
                }
            }
        }
        for (pos, &k) in path.iter().enumerate() {
            let (bi, bj) = basis[k];
            if pos % 2 == 0 {
                flow[(bi, bj)] = (flow[(bi, bj)] - theta).max(T::zero());
            } else {
                flow[(bi, bj)] += theta;
            }
        }
        flow[(ei, ej)] = theta;
        let (li, lj) = basis[leave];
        flow[(li, lj)] = T::zero();
        in_basis[li][lj] = false;
        in_basis[ei][ej] = true;
        basis[leave] = (ei, ej);
    }
    flow
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::Euclidean;

    fn line(xs: &[f64], ws: &[f64]) -> DiscreteMeasure<Vec<f64>, f64> {
        DiscreteMeasure::new(xs.iter().map(|&x| vec![x]).collect(), ws.to_vec()).unwrap()
    }

    #[test]
    fn rejects_non_simplex_weights() {
        assert!(DiscreteMeasure::new(vec![0usize, 1], vec![0.5, 0.6]).is_err());
        assert!(DiscreteMeasure::new(vec![0usize, 1], vec![1.0, 0.0]).is_err());
        assert!(DiscreteMeasure::new(vec![0usize, 0], vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn merging_duplicates() {
        let m = DiscreteMeasure::from_weighted(vec![(1usize, 0.25), (2, 0.5), (1, 0.25)]).unwrap();
        assert_eq!(m.support(), &[1, 2]);
        assert_eq!(m.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn two_by_two_instance() {
        let e = Euclidean::new(1);
        let t = wasserstein(
            &e,
            &line(&[0.0, 2.0], &[0.5, 0.5]),
            &line(&[1.0, 3.0], &[0.5, 0.5]),
            2.0,
        )
        .unwrap();
        assert!((t.value - 1.0).abs() < 1e-12);
        let t = wasserstein(
            &e,
            &line(&[0.0, 1.0], &[0.5, 0.5]),
            &line(&[0.5], &[1.0]),
            1.0,
        )
        .unwrap();
        assert!((t.value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn exponent_range_enforced() {
        let e = Euclidean::new(1);
        let m = line(&[0.0], &[1.0]);
        assert!(wasserstein(&e, &m, &m, 0.5).is_err());
        assert!(wasserstein(&e, &m, &m, 65.0).is_err());
    }
}
