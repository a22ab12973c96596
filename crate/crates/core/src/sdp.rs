//! Small block-diagonal semidefinite programs.
//!
//! Primal: `min Σ_b Tr(C_b X_b) + c·x` s.t. `Σ_b Tr(A_ib X_b) + a_i·x = b_i`,
//! `X_b ⪰ 0` (complex Hermitian blocks), `x ≥ 0`.
//!
//! Infeasible-start primal–dual path following with the HKM search direction
//! and a Mehrotra predictor–corrector step.

use nalgebra::{Cholesky, DMatrix};

use crate::linalg::{c, CMat, HermOp};

/// One equality row.
#[derive(Clone, Debug, Default)]
pub struct SdpRow {
    /// `(block, A_ib)` for blocks where the row is nonzero; `A_ib` Hermitian.
    pub terms: Vec<(usize, CMat)>,
    /// `(lp index, coefficient)`.
    pub lp: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Clone, Debug)]
pub struct SdpProblem {
    pub block_dims: Vec<usize>,
    pub n_lp: usize,
    pub c_blocks: Vec<CMat>,
    pub c_lp: Vec<f64>,
    pub rows: Vec<SdpRow>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    /// Iteration cap or stalled progress; iterates are still returned.
    NotConverged,
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub x_blocks: Vec<CMat>,
    pub x_lp: Vec<f64>,
    pub y: Vec<f64>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct SdpOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 100,
        }
    }
}

/// `Re Tr(a b)` for square matrices of equal size.
fn re_tr(a: &CMat, b: &CMat) -> f64 {
    crate::linalg::trace_prod_re(a, b)
}

fn herm(m: CMat) -> CMat {
    (&m + m.adjoint()) * c(0.5)
}

#[derive(Clone)]
struct Iterate {
    x: Vec<CMat>,
    z: Vec<CMat>,
    xl: Vec<f64>,
    zl: Vec<f64>,
    y: Vec<f64>,
}

impl SdpProblem {
    fn n_total(&self) -> usize {
        self.block_dims.iter().sum::<usize>() + self.n_lp
    }

    /// `A(X)_i`.
    fn apply_a(&self, x: &[CMat], xl: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| {
                let mut v = 0.0;
                for (b, a) in &r.terms {
                    v += re_tr(a, &x[*b]);
                }
                for &(j, a) in &r.lp {
                    v += a * xl[j];
                }
                v
            })
            .collect()
    }

    /// `Aᵀ(y)` split into blocks and LP part.
    fn apply_at(&self, y: &[f64]) -> (Vec<CMat>, Vec<f64>) {
        let mut blocks: Vec<CMat> = self.block_dims.iter().map(|&d| CMat::zeros(d, d)).collect();
        let mut lp = vec![0.0; self.n_lp];
        for (r, &yi) in self.rows.iter().zip(y) {
            if yi == 0.0 {
                continue;
            }
            for (b, a) in &r.terms {
                blocks[*b] += a * c(yi);
            }
            for &(j, a) in &r.lp {
                lp[j] += a * yi;
            }
        }
        (blocks, lp)
    }

    fn primal_obj(&self, x: &[CMat], xl: &[f64]) -> f64 {
        let mut v: f64 = self.c_blocks.iter().zip(x).map(|(cb, xb)| re_tr(cb, xb)).sum();
        v += self.c_lp.iter().zip(xl).map(|(a, b)| a * b).sum::<f64>();
        v
    }

    fn dual_obj(&self, y: &[f64]) -> f64 {
        self.rows.iter().zip(y).map(|(r, y)| r.rhs * y).sum()
    }
}

/// Largest `α` with `X + α ΔX ⪰ 0`, given the Cholesky factor of `X`.
fn max_step_block(x: &CMat, dx: &CMat) -> f64 {
    let n = x.nrows();
    if n == 0 {
        return f64::INFINITY;
    }
    let Some(ch) = Cholesky::new(x.clone()) else {
        return 0.0;
    };
    let l = ch.l();
    let Some(linv) = l.clone().try_inverse() else {
        return 0.0;
    };
    let m = HermOp::hermitize(&linv * dx * linv.adjoint());
    let lam = m.min_eigenvalue();
    if lam >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lam
    }
}

fn max_step_lp(x: &[f64], dx: &[f64]) -> f64 {
    x.iter()
        .zip(dx)
        .filter(|(_, &d)| d < 0.0)
        .map(|(&v, &d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

fn inv_hpd(m: &CMat) -> Option<CMat> {
    if m.nrows() == 0 {
        return Some(CMat::zeros(0, 0));
    }
    Cholesky::new(m.clone()).map(|ch| herm(ch.inverse()))
}

/// Solves the SDP; the returned iterates are the last ones reached.
pub fn sdp_solve(p: &SdpProblem, opts: &SdpOptions) -> SdpSolution {
    let m = p.rows.len();
    let n_tot = p.n_total().max(1) as f64;
    let b: Vec<f64> = p.rows.iter().map(|r| r.rhs).collect();
    let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let c_norm =
        (p.c_blocks.iter().map(|cb| cb.norm_squared()).sum::<f64>() + p.c_lp.iter().map(|v| v * v).sum::<f64>()).sqrt();

    let scale = 1.0_f64.max(b_norm).max(c_norm);
    let mut it = Iterate {
        x: p.block_dims
            .iter()
            .map(|&d| CMat::identity(d, d) * c(scale.sqrt()))
            .collect(),
        z: p.block_dims
            .iter()
            .map(|&d| CMat::identity(d, d) * c(scale.sqrt()))
            .collect(),
        xl: vec![scale.sqrt(); p.n_lp],
        zl: vec![scale.sqrt(); p.n_lp],
        y: vec![0.0; m],
    };

    let mut status = SdpStatus::NotConverged;
    let mut iterations = 0;
    let mut rp_norm = f64::INFINITY;
    let mut rd_norm = f64::INFINITY;
    // Late iterations can lose accuracy to rounding; the best one seen is kept.
    let mut best: Option<(f64, Iterate, f64, f64)> = None;
    for iter in 0..opts.max_iter {
        iterations = iter;
        let ax = p.apply_a(&it.x, &it.xl);
        let rp: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let (aty, aty_lp) = p.apply_at(&it.y);
        let rd: Vec<CMat> = (0..p.block_dims.len())
            .map(|k| herm(&p.c_blocks[k] - &aty[k] - &it.z[k]))
            .collect();
        let rd_lp: Vec<f64> = (0..p.n_lp).map(|j| p.c_lp[j] - aty_lp[j] - it.zl[j]).collect();

        let xz: f64 = it.x.iter().zip(&it.z).map(|(x, z)| re_tr(x, z)).sum::<f64>()
            + it.xl.iter().zip(&it.zl).map(|(a, b)| a * b).sum::<f64>();
        let mu = xz / n_tot;
        rp_norm = rp.iter().map(|v| v * v).sum::<f64>().sqrt() / (1.0 + b_norm);
        rd_norm = (rd.iter().map(|r| r.norm_squared()).sum::<f64>() + rd_lp.iter().map(|v| v * v).sum::<f64>()).sqrt()
            / (1.0 + c_norm);
        let pobj = p.primal_obj(&it.x, &it.xl);
        let dobj = p.dual_obj(&it.y);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        if rp_norm < opts.tol && rd_norm < opts.tol && gap < opts.tol {
            status = SdpStatus::Optimal;
            best = None;
            break;
        }
        let merit = rp_norm.max(rd_norm).max(gap);
        if best.as_ref().is_none_or(|b| merit < b.0) {
            best = Some((merit, it.clone(), rp_norm, rd_norm));
        }

        let zinv: Vec<CMat> = match it.z.iter().map(inv_hpd).collect::<Option<Vec<_>>>() {
            Some(v) => v,
            None => break,
        };

        // Schur complement M_ij = Σ_b Re Tr(A_ib X_b A_jb Z_b⁻¹) + LP part.
        let mut g: Vec<Vec<(usize, CMat)>> = Vec::with_capacity(m);
        for r in &p.rows {
            g.push(
                r.terms
                    .iter()
                    .map(|(bk, a)| (*bk, &it.x[*bk] * a * &zinv[*bk]))
                    .collect(),
            );
        }
        let mut mm = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let mut v = 0.0;
                for (bk, gi) in &g[i] {
                    for (bj, aj) in &p.rows[j].terms {
                        if bj == bk {
                            v += re_tr(aj, gi);
                        }
                    }
                }
                for &(li, ai) in &p.rows[i].lp {
                    for &(lj, aj) in &p.rows[j].lp {
                        if li == lj {
                            v += ai * aj * it.xl[li] / it.zl[li];
                        }
                    }
                }
                mm[(i, j)] = v;
                mm[(j, i)] = v;
            }
        }
        let diag_max = (0..m).map(|i| mm[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
        let chol = {
            let mut reg = 0.0;
            loop {
                let mut mr = mm.clone();
                for i in 0..m {
                    mr[(i, i)] += reg;
                }
                if let Some(ch) = Cholesky::new(mr) {
                    break Some(ch);
                }
                reg = if reg == 0.0 { 1e-14 * diag_max } else { reg * 100.0 };
                if reg > 1e-4 * diag_max {
                    break None;
                }
            }
        };
        let Some(chol) = chol else { break };

        // Solves for a direction given the complementarity target terms
        // T_b (blocks) and t_j (LP): ΔX = T − sym(X ΔZ Z⁻¹).
        let direction = |t_blk: &[CMat], t_lp: &[f64]| {
            let mut rhs = DMatrix::<f64>::zeros(m, 1);
            let inner: Vec<CMat> = (0..p.block_dims.len())
                .map(|k| &t_blk[k] - &it.x[k] * &rd[k] * &zinv[k])
                .collect();
            let inner_lp: Vec<f64> = (0..p.n_lp).map(|j| t_lp[j] - it.xl[j] * rd_lp[j] / it.zl[j]).collect();
            for (i, r) in p.rows.iter().enumerate() {
                let mut v = rp[i];
                for (bk, a) in &r.terms {
                    v -= re_tr(a, &inner[*bk]);
                }
                for &(j, a) in &r.lp {
                    v -= a * inner_lp[j];
                }
                rhs[(i, 0)] = v;
            }
            let dy = chol.solve(&rhs);
            let dy: Vec<f64> = dy.iter().copied().collect();
            let (atdy, atdy_lp) = p.apply_at(&dy);
            let dz: Vec<CMat> = (0..p.block_dims.len()).map(|k| herm(&rd[k] - &atdy[k])).collect();
            let dz_lp: Vec<f64> = (0..p.n_lp).map(|j| rd_lp[j] - atdy_lp[j]).collect();
            let dx: Vec<CMat> = (0..p.block_dims.len())
                .map(|k| herm(&t_blk[k] - &it.x[k] * &dz[k] * &zinv[k]))
                .collect();
            let dx_lp: Vec<f64> = (0..p.n_lp).map(|j| t_lp[j] - it.xl[j] * dz_lp[j] / it.zl[j]).collect();
            (dx, dx_lp, dy, dz, dz_lp)
        };
        let steps = |dx: &[CMat], dx_lp: &[f64], dz: &[CMat], dz_lp: &[f64]| {
            let mut ap = max_step_lp(&it.xl, dx_lp);
            let mut ad = max_step_lp(&it.zl, dz_lp);
            for k in 0..p.block_dims.len() {
                ap = ap.min(max_step_block(&it.x[k], &dx[k]));
                ad = ad.min(max_step_block(&it.z[k], &dz[k]));
            }
            (ap, ad)
        };

        // Predictor (affine scaling).
        let t_aff: Vec<CMat> = it.x.iter().map(|x| -x.clone()).collect();
        let t_aff_lp: Vec<f64> = it.xl.iter().map(|v| -v).collect();
        let (dxa, dxa_lp, _, dza, dza_lp) = direction(&t_aff, &t_aff_lp);
        let (apa, ada) = steps(&dxa, &dxa_lp, &dza, &dza_lp);
        let apa = apa.min(1.0);
        let ada = ada.min(1.0);
        let mut mu_aff = 0.0;
        for k in 0..p.block_dims.len() {
            let xn = &it.x[k] + &dxa[k] * c(apa);
            let zn = &it.z[k] + &dza[k] * c(ada);
            mu_aff += re_tr(&xn, &zn);
        }
        for j in 0..p.n_lp {
            mu_aff += (it.xl[j] + apa * dxa_lp[j]) * (it.zl[j] + ada * dza_lp[j]);
        }
        mu_aff /= n_tot;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // Corrector.
        let t_blk: Vec<CMat> = (0..p.block_dims.len())
            .map(|k| zinv[k].clone() * c(sigma * mu) - &it.x[k] - &dxa[k] * &dza[k] * &zinv[k])
            .collect();
        let t_lp: Vec<f64> = (0..p.n_lp)
            .map(|j| (sigma * mu - dxa_lp[j] * dza_lp[j]) / it.zl[j] - it.xl[j])
            .collect();
        let (dx, dx_lp, dy, dz, dz_lp) = direction(&t_blk, &t_lp);
        let (ap, ad) = steps(&dx, &dx_lp, &dz, &dz_lp);
        let ap = (0.98 * ap).min(1.0);
        let ad = (0.98 * ad).min(1.0);
        if ap < 1e-12 && ad < 1e-12 {
            break;
        }
        for k in 0..p.block_dims.len() {
            it.x[k] = herm(&it.x[k] + &dx[k] * c(ap));
            it.z[k] = herm(&it.z[k] + &dz[k] * c(ad));
        }
        for j in 0..p.n_lp {
            it.xl[j] += ap * dx_lp[j];
            it.zl[j] += ad * dz_lp[j];
        }
        for (yi, d) in it.y.iter_mut().zip(&dy) {
            *yi += ad * d;
        }
    }

    if let Some((_, b, rp, rd)) = best {
        it = b;
        rp_norm = rp;
        rd_norm = rd;
    }
    SdpSolution {
        status,
        primal_obj: p.primal_obj(&it.x, &it.xl),
        dual_obj: p.dual_obj(&it.y),
        x_blocks: it.x,
        x_lp: it.xl,
        y: it.y,
        iterations,
        primal_residual: rp_norm,
        dual_residual: rd_norm,
    }
}
