//! Dense two-phase simplex for small linear programs in equality form.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{csum, Real};

/// Optimal primal and dual solutions of `min c.x  s.t.  A x = b, x >= 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution<T> {
    pub x: Vec<T>,
    pub objective: T,
    /// Multipliers `y` of the equality rows; `A^T y <= c` at optimality.
    pub duals: Vec<T>,
    pub pivots: usize,
}

struct Tableau<T> {
    t: Matrix<T>,
    basis: Vec<usize>,
    width: usize,
}

impl<T: Real> Tableau<T> {
    fn pivot(&mut self, row: usize, col: usize) {
        let w = self.t.cols();
        let piv = self.t[(row, col)];
        for k in 0..w {
            self.t[(row, k)] /= piv;
        }
        for r in 0..self.t.rows() {
            if r == row {
                continue;
            }
            let f = self.t[(r, col)];
            if f != T::zero() {
                for k in 0..w {
                    let v = self.t[(row, k)];
                    self.t[(r, k)] -= f * v;
                }
            }
        }
        self.basis[row] = col;
    }

    /// Reduced costs of `cost` for the current basis, written into the last row.
    fn price(&mut self, cost: &[T]) {
        let m = self.basis.len();
        let w = self.t.cols();
        for k in 0..w {
            let basic = csum((0..m).map(|r| cost[self.basis[r]] * self.t[(r, k)]));
            let ck = if k < cost.len() { cost[k] } else { T::zero() };
            self.t[(m, k)] = ck - basic;
        }
    }

    /// Runs the simplex method on the priced tableau over columns `0..allowed`.
    fn optimize(&mut self, allowed: usize, tol: T, pivots: &mut usize) -> Result<()> {
        let m = self.basis.len();
        let rhs = self.width;
        let bland_after = 50 * (m + allowed);
        let mut iter = 0;
        loop {
            let bland = iter >= bland_after;
            let mut enter = None;
            let mut best = -tol;
            for k in 0..allowed {
                let rc = self.t[(m, k)];
                if rc < best {
                    enter = Some(k);
                    if bland {
                        break;
                    }
                    best = rc;
                }
            }
            let Some(col) = enter else { return Ok(()) };
            let mut leave: Option<(usize, T)> = None;
            for r in 0..m {
                let a = self.t[(r, col)];
                if a > tol {
                    let ratio = self.t[(r, rhs)] / a;
                    let better = match leave {
                        None => true,
                        Some((lr, lv)) => {
                            ratio < lv || (ratio == lv && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            let Some((row, _)) = leave else {
                return Err(Error::Numerical("linear program is unbounded".into()));
            };
            self.pivot(row, col);
            *pivots += 1;
            iter += 1;
            if iter > 1000 * (m + allowed) + 10_000 {
                return Err(Error::Numerical("simplex iteration limit reached".into()));
            }
        }
    }
}

/// Solves `min c.x  s.t.  A x = b, x >= 0`.
pub fn solve_lp<T: Real>(a: &Matrix<T>, b: &[T], c: &[T]) -> Result<LpSolution<T>> {
    let (m, n) = (a.rows(), a.cols());
    if b.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: b.len(),
        });
    }
    if c.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: c.len(),
        });
    }
    let scale = a
        .iter()
        .chain(b.iter())
        .fold(T::one(), |s, v| s.max(v.abs()));
    let tol = T::epsilon().sqrt() * T::of(1e-3) * scale;
    let width = n + m;
    let sign: Vec<T> = b
        .iter()
        .map(|v| if *v < T::zero() { -T::one() } else { T::one() })
        .collect();
    let mut t = Matrix::zeros(m + 1, width + 1);
    for r in 0..m {
        for k in 0..n {
            t[(r, k)] = sign[r] * a[(r, k)];
        }
        t[(r, n + r)] = T::one();
        t[(r, width)] = sign[r] * b[r];
    }
    let mut tab = Tableau {
        t,
        basis: (n..n + m).collect(),
        width,
    };
    let mut pivots = 0;

    let mut phase1 = vec![T::zero(); width];
    for v in &mut phase1[n..] {
        *v = T::one();
    }
    tab.price(&phase1);
    tab.optimize(width, tol, &mut pivots)?;
    let infeasibility = csum(
        (0..m)
            .filter(|&r| tab.basis[r] >= n)
            .map(|r| tab.t[(r, width)]),
    );
    if infeasibility > tol * T::of_usize(m.max(1)) {
        return Err(Error::Numerical(format!(
            "linear program is infeasible (phase one residual {infeasibility})"
        )));
    }
    for r in 0..m {
        if tab.basis[r] >= n {
            if let Some(k) = (0..n).find(|&k| tab.t[(r, k)].abs() > tol) {
                tab.pivot(r, k);
                pivots += 1;
            }
        }
    }

    let mut cost = c.to_vec();
    cost.extend(std::iter::repeat_n(T::zero(), m));
    tab.price(&cost);
    tab.optimize(n, tol, &mut pivots)?;

    let mut x = vec![T::zero(); n];
    for r in 0..m {
        if tab.basis[r] < n {
            x[tab.basis[r]] = tab.t[(r, width)].max(T::zero());
        }
    }
    // y^T = c_B^T B^{-1}; the artificial columns hold B^{-1} of the sign-adjusted rows
    let duals = (0..m)
        .map(|j| sign[j] * csum((0..m).map(|r| cost[tab.basis[r]] * tab.t[(r, n + j)])))
        .collect();
    let objective = csum(x.iter().zip(c).map(|(xi, ci)| *xi * *ci));
    Ok(LpSolution {
        x,
        objective,
        duals,
        pivots,
    })
}

/// Minimum `l_1` norm solution of `Q x = v`.
#[derive(Clone, Debug, PartialEq)]
pub struct L1Preimage<T> {
    pub x: Vec<T>,
    pub norm: T,
    /// Dual certificate `lambda` with `|Q^T lambda|_inf <= 1`.
    pub dual: Vec<T>,
    /// `norm - v.lambda`, nonnegative up to rounding.
    pub gap: T,
    /// `max(0, |Q^T lambda|_inf - 1)`.
    pub dual_infeasibility: T,
}

/// `min |x|_1  s.t.  Q x = v`, written as an LP in `x = u - w` with `u, w >= 0`.
pub fn min_l1_preimage<T: Real>(q: &Matrix<T>, v: &[T]) -> Result<L1Preimage<T>> {
    let (n, big) = (q.rows(), q.cols());
    let a = Matrix::from_fn(n, 2 * big, |r, k| {
        if k < big {
            q[(r, k)]
        } else {
            -q[(r, k - big)]
        }
    });
    let sol = solve_lp(&a, v, &vec![T::one(); 2 * big])?;
    let x: Vec<T> = (0..big).map(|k| sol.x[k] - sol.x[big + k]).collect();
    let norm = csum(x.iter().map(|v| v.abs()));
    let lam = sol.duals;
    let dual_value = csum(v.iter().zip(&lam).map(|(a, b)| *a * *b));
    let worst = (0..big)
        .map(|k| csum((0..n).map(|r| q[(r, k)] * lam[r])).abs())
        .fold(T::zero(), T::max);
    Ok(L1Preimage {
        x,
        norm,
        dual: lam,
        gap: norm - dual_value,
        dual_infeasibility: (worst - T::one()).max(T::zero()),
    })
}
