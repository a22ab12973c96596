//! Small dense linear programs: `min cᵀx` subject to `A x = b`, `lo ≤ x ≤ hi`.
//!
//! Two-phase tableau simplex with Bland's rule (lowest index enters, lowest
//! basic index breaks ratio ties), so runs are deterministic.

/// Outcome of [`lp_solve`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    pub value: f64,
    pub x: Vec<f64>,
    /// Multipliers for the equality rows.
    pub dual: Vec<f64>,
}

/// Dense LP in equality form with simple bounds. `lo` must be finite;
/// `hi` may be `f64::INFINITY`.
#[derive(Clone, Debug)]
pub struct LpProblem {
    pub c: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-10;
const FEAS_TOL: f64 = 1e-8;

impl LpProblem {
    pub fn n_vars(&self) -> usize {
        self.c.len()
    }

    /// Lagrangian lower bound `bᵀy + Σ_i min(r_i lo_i, r_i hi_i)` with `r = c − Aᵀy`.
    ///
    /// Valid for every `y`; equals the optimum for optimal multipliers.
    pub fn dual_bound(&self, y: &[f64]) -> f64 {
        let mut r = self.c.clone();
        for (row, &yi) in self.a_eq.iter().zip(y) {
            for (rj, aj) in r.iter_mut().zip(row) {
                *rj -= yi * aj;
            }
        }
        let mut v: f64 = self.b_eq.iter().zip(y).map(|(b, y)| b * y).sum();
        for ((rj, lo), hi) in r.iter().zip(&self.lo).zip(&self.hi) {
            if *rj >= 0.0 {
                v += rj * lo;
            } else if hi.is_finite() {
                v += rj * hi;
            } else if *rj < -COST_TOL {
                return f64::NEG_INFINITY;
            }
        }
        v
    }

    /// Largest violation of the equality rows and bounds at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0_f64;
        for (row, b) in self.a_eq.iter().zip(&self.b_eq) {
            let ax: f64 = row.iter().zip(x).map(|(a, x)| a * x).sum();
            worst = worst.max((ax - b).abs());
        }
        for ((xi, lo), hi) in x.iter().zip(&self.lo).zip(&self.hi) {
            worst = worst.max(lo - xi).max(xi - hi);
        }
        worst
    }
}

struct Tableau {
    /// `rows × (cols + 1)`; last column is the right-hand side.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, col: usize) {
        let p = self.t[r][col];
        for v in self.t[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[col];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
        self.basis[r] = col;
    }

    /// Reduced costs `c_j − c_Bᵀ B⁻¹ A_j` for the current basis.
    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut r = cost.to_vec();
        for (row, &b) in self.t.iter().zip(&self.basis) {
            let cb = cost[b];
            if cb != 0.0 {
                for (rj, v) in r.iter_mut().zip(row.iter()) {
                    *rj -= cb * v;
                }
            }
        }
        r
    }

    /// Runs simplex iterations on `cost`; columns with `allowed[j] = false` never enter.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool], max_iter: usize) -> LpStatus {
        for _ in 0..max_iter {
            let rc = self.reduced_costs(cost);
            let entering = (0..self.cols).find(|&j| allowed[j] && rc[j] < -COST_TOL);
            let Some(col) = entering else {
                return LpStatus::Optimal;
            };
            let rhs = self.cols;
            let mut best: Option<(usize, f64)> = None;
            for (i, row) in self.t.iter().enumerate() {
                let a = row[col];
                if a > PIVOT_TOL {
                    let ratio = row[rhs] / a;
                    best = match best {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - 1e-12 || (ratio <= br + 1e-12 && self.basis[i] < self.basis[bi]) {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = best else {
                return LpStatus::Unbounded;
            };
            self.pivot(r, col);
        }
        LpStatus::IterationLimit
    }
}

/// Solves `min cᵀx` s.t. `A x = b`, `lo ≤ x ≤ hi`.
pub fn lp_solve(p: &LpProblem) -> LpSolution {
    let n = p.n_vars();
    let m_eq = p.b_eq.len();
    assert!(p.a_eq.iter().all(|r| r.len() == n), "constraint row length mismatch");
    assert!(p.lo.len() == n && p.hi.len() == n, "bound length mismatch");

    // Shift x = lo + x', then add rows x'_j + s_j = hi_j − lo_j for finite hi.
    let ub: Vec<usize> = (0..n).filter(|&j| p.hi[j].is_finite()).collect();
    let n_slack = ub.len();
    let rows = m_eq + n_slack;
    let n_struct = n + n_slack;
    let cols = n_struct + rows;

    let mut t = vec![vec![0.0; cols + 1]; rows];
    let mut signs = vec![1.0; rows];
    for (i, row) in t.iter_mut().enumerate().take(m_eq) {
        let shift: f64 = p.a_eq[i].iter().zip(&p.lo).map(|(a, l)| a * l).sum();
        row[..n].copy_from_slice(&p.a_eq[i]);
        row[cols] = p.b_eq[i] - shift;
    }
    for (k, &j) in ub.iter().enumerate() {
        let r = m_eq + k;
        t[r][j] = 1.0;
        t[r][n + k] = 1.0;
        t[r][cols] = p.hi[j] - p.lo[j];
    }
    for (i, row) in t.iter_mut().enumerate() {
        if row[cols] < 0.0 {
            for v in row[..n_struct].iter_mut() {
                *v = -*v;
            }
            row[cols] = -row[cols];
            signs[i] = -1.0;
        }
        row[n_struct + i] = 1.0;
    }
    let mut tab = Tableau {
        t,
        basis: (n_struct..cols).collect(),
        cols,
    };
    let max_iter = 50 * (rows + cols) + 1000;

    let mut phase1_cost = vec![0.0; cols];
    for v in phase1_cost[n_struct..].iter_mut() {
        *v = 1.0;
    }
    let all = vec![true; cols];
    let s1 = tab.optimize(&phase1_cost, &all, max_iter);
    let infeas: f64 = tab
        .t
        .iter()
        .zip(&tab.basis)
        .filter(|(_, &b)| b >= n_struct)
        .map(|(row, _)| row[cols])
        .sum();
    if s1 != LpStatus::Optimal || infeas > FEAS_TOL * (1.0 + p.b_eq.iter().map(|b| b.abs()).fold(0.0, f64::max)) {
        let status = if s1 == LpStatus::IterationLimit {
            LpStatus::IterationLimit
        } else {
            LpStatus::Infeasible
        };
        return LpSolution {
            status,
            value: f64::NAN,
            x: Vec::new(),
            dual: Vec::new(),
        };
    }

    // Drive zero-level artificials out of the basis where possible.
    for r in 0..rows {
        if tab.basis[r] >= n_struct {
            if let Some(col) = (0..n_struct).find(|&j| tab.t[r][j].abs() > 1e-9) {
                tab.pivot(r, col);
            }
        }
    }

    let mut cost = vec![0.0; cols];
    cost[..n].copy_from_slice(&p.c);
    let mut allowed = vec![true; cols];
    for a in allowed[n_struct..].iter_mut() {
        *a = false;
    }
    let s2 = tab.optimize(&cost, &allowed, max_iter);

    let mut x = p.lo.clone();
    for (row, &b) in tab.t.iter().zip(&tab.basis) {
        if b < n {
            x[b] += row[cols];
        }
    }
    // yᵀ = c_Bᵀ B⁻¹, read from the artificial columns, undoing row sign flips.
    let mut dual = vec![0.0; m_eq];
    for (i, d) in dual.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (row, &b) in tab.t.iter().zip(&tab.basis) {
            acc += cost[b] * row[n_struct + i];
        }
        *d = acc * signs[i];
    }
    let value = p.c.iter().zip(&x).map(|(c, x)| c * x).sum();
    LpSolution {
        status: s2,
        value,
        x,
        dual,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_box_variable() {
        let p = LpProblem {
            c: vec![1.0],
            a_eq: vec![],
            b_eq: vec![],
            lo: vec![0.0],
            hi: vec![1.0],
        };
        let s = lp_solve(&p);
        assert_eq!(s.status, LpStatus::Optimal);
        assert_eq!(s.value, 0.0);
        let mut q = p.clone();
        q.c = vec![-1.0];
        assert_eq!(lp_solve(&q).value, -1.0);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let p = LpProblem {
            c: vec![0.0, 0.0],
            a_eq: vec![vec![1.0, 1.0]],
            b_eq: vec![3.0],
            lo: vec![0.0, 0.0],
            hi: vec![1.0, 1.0],
        };
        assert_eq!(lp_solve(&p).status, LpStatus::Infeasible);
        let q = LpProblem {
            c: vec![-1.0, 0.0],
            a_eq: vec![vec![1.0, -1.0]],
            b_eq: vec![0.0],
            lo: vec![0.0, 0.0],
            hi: vec![f64::INFINITY, f64::INFINITY],
        };
        assert_eq!(lp_solve(&q).status, LpStatus::Unbounded);
    }

    /// Enumerates all bases of the standard form and keeps the best feasible vertex.
    fn vertex_oracle(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> f64 {
        let n = c.len();
        let m = b.len();
        let mut best = f64::INFINITY;
        let mut subset = vec![0usize; m];
        fn rec(start: usize, depth: usize, subset: &mut Vec<usize>, n: usize, f: &mut dyn FnMut(&[usize])) {
            if depth == subset.len() {
                f(subset);
                return;
            }
            for j in start..n {
                subset[depth] = j;
                rec(j + 1, depth + 1, subset, n, f);
            }
        }
        let mut visit = |cols: &[usize]| {
            let bm = nalgebra::DMatrix::from_fn(m, m, |i, k| a[i][cols[k]]);
            let Some(inv) = bm.clone().try_inverse() else { return };
            let xb = inv * nalgebra::DVector::from_column_slice(b);
            if xb.iter().all(|&v| v >= -1e-12) {
                let val: f64 = cols.iter().zip(xb.iter()).map(|(&j, &v)| c[j] * v).sum();
                best = best.min(val);
            }
        };
        rec(0, 0, &mut subset, n, &mut visit);
        best
    }

    #[test]
    fn transportation_matches_vertex_enumeration() {
        // Two sources (supply 3, 5), three sinks (demand 2, 4, 2); costs per route.
        let cost = vec![4.0, 6.0, 9.0, 5.0, 3.0, 7.0];
        let mut a = vec![vec![0.0; 6]; 5];
        for s in 0..2 {
            for d in 0..3 {
                a[s][s * 3 + d] = 1.0;
                a[2 + d][s * 3 + d] = 1.0;
            }
        }
        let b = vec![3.0, 5.0, 2.0, 4.0, 2.0];
        // Drop one redundant demand row for the oracle's square bases.
        let oracle = vertex_oracle(&cost, &a[..4], &b[..4]);
        let p = LpProblem {
            c: cost,
            a_eq: a,
            b_eq: b,
            lo: vec![0.0; 6],
            hi: vec![f64::INFINITY; 6],
        };
        let s = lp_solve(&p);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.value - oracle).abs() < 1e-9, "{} vs {}", s.value, oracle);
        assert!(p.max_violation(&s.x) < 1e-9);
    }

    #[test]
    fn random_instances_close_duality_gap() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let n = rng.random_range(2..12);
            let m = rng.random_range(1..n);
            let x0: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let a: Vec<Vec<f64>> = (0..m)
                .map(|_| (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
                .collect();
            let b = a.iter().map(|r| r.iter().zip(&x0).map(|(a, x)| a * x).sum()).collect();
            let p = LpProblem {
                c: (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect(),
                a_eq: a,
                b_eq: b,
                lo: vec![0.0; n],
                hi: vec![1.0; n],
            };
            let s = lp_solve(&p);
            assert_eq!(s.status, LpStatus::Optimal);
            assert!(p.max_violation(&s.x) < 1e-8);
            let dual = p.dual_bound(&s.dual);
            assert!(dual <= s.value + 1e-8);
            assert!(s.value - dual <= 1e-8 * (1.0 + s.value.abs()), "{} {}", s.value, dual);
        }
    }

    #[test]
    fn nonzero_lower_bounds_and_negative_rhs() {
        let p = LpProblem {
            c: vec![1.0, 2.0],
            a_eq: vec![vec![-1.0, -1.0]],
            b_eq: vec![-3.0],
            lo: vec![1.0, 0.5],
            hi: vec![2.0, 5.0],
        };
        let s = lp_solve(&p);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.value - 4.0).abs() < 1e-12);
        assert!((s.x[0] - 2.0).abs() < 1e-12 && (s.x[1] - 1.0).abs() < 1e-12);
        assert!((p.dual_bound(&s.dual) - 4.0).abs() < 1e-10);
    }
}
