//! Conditional entropy of a key map, certified minimization over a
//! statistics-constrained set with fixed Alice marginal, and the classical
//! conditional entropy used for the error-correction leak.
//!
//! The objective is `f(σ) = D(G(σ) ‖ Z(G(σ)))`, written as `H(Zρ) − H(ρ)` with
//! `ρ = G(σ)` and the unnormalized entropy `H(x) = −Tr x log2 x`.
//!
//! The minimizer works on `f_ε(σ) = f` evaluated at `G_ε(σ) = (1−ε)G(σ) + ε Tr(σ) I/d′`.
//! Joint convexity of relative entropy and `Z(I) = I` give `f_ε ≤ (1−ε) f ≤ f`,
//! so a lower bound on `min f_ε` is a lower bound on `min f` with no
//! correction term.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg::{
    c, entropy_bits, hermitian_basis, kron, max_abs, trace_prod_re, CMat, DensityOp, HermOp, KrausChannel, LinearMap,
    HERM_TOL, LOG_FLOOR, PSD_TOL,
};
use crate::sdp::{sdp_solve, SdpOptions, SdpProblem, SdpRow, SdpStatus};

/// Key map `G` together with the key-register pinching `Z`.
#[derive(Clone, Debug)]
pub struct KeyMapSpec {
    g_map: KrausChannel,
    z_pinching: Vec<HermOp>,
}

impl KeyMapSpec {
    pub fn new(g_map: KrausChannel, z_pinching: Vec<HermOp>) -> Result<Self> {
        let d = g_map.out_dim();
        if z_pinching.is_empty() {
            return Err(Error::InvalidArgument("pinching needs at least one projector".into()));
        }
        let mut sum = CMat::zeros(d, d);
        for (i, p) in z_pinching.iter().enumerate() {
            if p.dim() != d {
                return Err(Error::Dimension(format!(
                    "pinching projector has dimension {}, map output is {d}",
                    p.dim()
                )));
            }
            let sq = p.matrix() * p.matrix();
            if max_abs(&(sq - p.matrix())) > PSD_TOL {
                return Err(Error::InvalidArgument(format!(
                    "pinching element {i} is not a projector"
                )));
            }
            for q in &z_pinching[i + 1..] {
                if max_abs(&(p.matrix() * q.matrix())) > PSD_TOL {
                    return Err(Error::InvalidArgument("pinching projectors are not orthogonal".into()));
                }
            }
            sum += p.matrix();
        }
        let dev = max_abs(&(sum - CMat::identity(d, d)));
        if dev > PSD_TOL {
            return Err(Error::InvalidArgument(format!(
                "pinching projectors do not sum to identity (deviation {dev:.3e})"
            )));
        }
        Ok(Self { g_map, z_pinching })
    }

    pub fn g_map(&self) -> &KrausChannel {
        &self.g_map
    }

    pub fn z_pinching(&self) -> &[HermOp] {
        &self.z_pinching
    }

    pub fn in_dim(&self) -> usize {
        self.g_map.in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.g_map.out_dim()
    }

    fn pinch(&self, x: &CMat) -> CMat {
        let mut out = CMat::zeros(x.nrows(), x.ncols());
        for p in &self.z_pinching {
            out += p.matrix() * x * p.matrix();
        }
        out
    }
}

/// Intervals `lower_k ≤ Tr(O_k σ) ≤ upper_k` plus `Tr_B σ = σ̂_A`.
///
/// Optionally carries a partition of Bob's basis into blocks such that every
/// observable is block diagonal; the minimization then runs over
/// block-diagonal states, which is exact whenever the key map also respects the
/// partition (checked at solve time).
#[derive(Clone, Debug)]
pub struct ConstraintSet {
    observables: Vec<HermOp>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    fixed_marginal: DensityOp,
    dim: usize,
    b_blocks: Option<Vec<Vec<usize>>>,
}

impl ConstraintSet {
    pub fn new(observables: Vec<HermOp>, lower: Vec<f64>, upper: Vec<f64>, fixed_marginal: DensityOp) -> Result<Self> {
        if observables.len() != lower.len() || lower.len() != upper.len() {
            return Err(Error::Dimension(format!(
                "{} observables, {} lower, {} upper bounds",
                observables.len(),
                lower.len(),
                upper.len()
            )));
        }
        let tr = fixed_marginal.trace();
        if (tr - 1.0).abs() > 1e-9 {
            return Err(Error::NotNormalized {
                trace: tr,
                expected: 1.0,
            });
        }
        let d_a = fixed_marginal.dim();
        let dim = observables.first().map(|o| o.dim()).unwrap_or(d_a);
        if !dim.is_multiple_of(d_a) {
            return Err(Error::Dimension(format!(
                "observable dimension {dim} is not a multiple of marginal dimension {d_a}"
            )));
        }
        for (k, o) in observables.iter().enumerate() {
            if o.dim() != dim {
                return Err(Error::Dimension(format!(
                    "observable {k} has dimension {}, expected {dim}",
                    o.dim()
                )));
            }
            if !(lower[k] <= upper[k]) {
                return Err(Error::InvalidArgument(format!(
                    "interval {k} has lower {} above upper {}",
                    lower[k], upper[k]
                )));
            }
        }
        Ok(Self {
            observables,
            lower,
            upper,
            fixed_marginal,
            dim,
            b_blocks: None,
        })
    }

    /// Only the marginal constraint, on `A ⊗ B` with `dim B = d_b`.
    pub fn marginal_only(fixed_marginal: DensityOp, d_b: usize) -> Result<Self> {
        if d_b == 0 {
            return Err(Error::Dimension("Bob's dimension must be positive".into()));
        }
        let mut cs = Self::new(vec![], vec![], vec![], fixed_marginal)?;
        cs.dim *= d_b;
        Ok(cs)
    }

    pub fn with_b_blocks(mut self, blocks: Vec<Vec<usize>>) -> Result<Self> {
        let d_b = self.d_b();
        let mut seen = vec![false; d_b];
        for blk in &blocks {
            for &i in blk {
                if i >= d_b || seen[i] {
                    return Err(Error::InvalidArgument(format!(
                        "block partition of Bob's space is invalid at index {i}"
                    )));
                }
                seen[i] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidArgument(
                "block partition does not cover Bob's space".into(),
            ));
        }
        let d_a = self.d_a();
        for (k, o) in self.observables.iter().enumerate() {
            let dev = off_block_norm(o.matrix(), d_a, d_b, &blocks);
            if dev > HERM_TOL.max(1e-10) {
                return Err(Error::InvalidArgument(format!(
                    "observable {k} is not block diagonal (off-block norm {dev:.3e})"
                )));
            }
        }
        self.b_blocks = Some(blocks);
        Ok(self)
    }

    pub fn observables(&self) -> &[HermOp] {
        &self.observables
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn fixed_marginal(&self) -> &DensityOp {
        &self.fixed_marginal
    }

    pub fn b_blocks(&self) -> Option<&[Vec<usize>]> {
        self.b_blocks.as_deref()
    }

    pub fn d_a(&self) -> usize {
        self.fixed_marginal.dim()
    }

    pub fn d_b(&self) -> usize {
        self.dim() / self.d_a()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Largest violation of any constraint by `sigma` (PSD, marginal, intervals).
    pub fn violation(&self, sigma: &CMat) -> f64 {
        let h = HermOp::hermitize(sigma.clone());
        let mut v = (-h.min_eigenvalue()).max(0.0);
        if let Ok(red) = crate::linalg::ptrace(&h, &[self.d_a(), self.d_b()], &[0]) {
            v = v.max(max_abs(&(red.matrix() - self.fixed_marginal.matrix())));
        } else {
            return f64::INFINITY;
        }
        for (k, o) in self.observables.iter().enumerate() {
            let e = trace_prod_re(o.matrix(), sigma);
            v = v.max(self.lower[k] - e).max(e - self.upper[k]);
        }
        v
    }
}

fn block_indices(d_a: usize, d_b: usize, blk: &[usize]) -> Vec<usize> {
    let mut idx = Vec::with_capacity(d_a * blk.len());
    for a in 0..d_a {
        for &b in blk {
            idx.push(a * d_b + b);
        }
    }
    idx
}

fn off_block_norm(m: &CMat, d_a: usize, d_b: usize, blocks: &[Vec<usize>]) -> f64 {
    let mut label = vec![0usize; d_a * d_b];
    for (bi, blk) in blocks.iter().enumerate() {
        for i in block_indices(d_a, d_b, blk) {
            label[i] = bi;
        }
    }
    let mut dev: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if label[i] != label[j] {
                dev = dev.max(m[(i, j)].norm());
            }
        }
    }
    dev
}

fn submatrix(m: &CMat, idx: &[usize]) -> CMat {
    CMat::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

/// Result of evaluating the objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveEval {
    pub bits: f64,
    /// `G(σ)` had zero trace; `bits` is then 0.
    pub zero_trace_image: bool,
}

fn check_in_dim(dim: usize, km: &KeyMapSpec) -> Result<()> {
    if dim != km.in_dim() {
        return Err(Error::Dimension(format!(
            "state has dimension {dim}, key map expects {}",
            km.in_dim()
        )));
    }
    Ok(())
}

fn objective_mat(sigma: &CMat, km: &KeyMapSpec) -> f64 {
    let rho = HermOp::hermitize(km.g_map.apply_mat(sigma));
    let zrho = HermOp::hermitize(km.pinch(rho.matrix()));
    (entropy_bits(&zrho) - entropy_bits(&rho)).max(0.0)
}

/// `D(G(σ) ‖ Z(G(σ)))` in bits.
pub fn objective(sigma: &DensityOp, km: &KeyMapSpec) -> Result<ObjectiveEval> {
    check_in_dim(sigma.dim(), km)?;
    let rho = km.g_map.apply_mat(sigma.matrix());
    let tr = crate::linalg::trace(&rho).re;
    if tr <= PSD_TOL * PSD_TOL {
        return Ok(ObjectiveEval {
            bits: 0.0,
            zero_trace_image: true,
        });
    }
    Ok(ObjectiveEval {
        bits: objective_mat(sigma.matrix(), km),
        zero_trace_image: false,
    })
}

fn log_on_support(x: &HermOp) -> CMat {
    x.eigh().rebuild(|v| if v > LOG_FLOOR { v.log2() } else { 0.0 })
}

/// Gradient `G†(log2 G(σ) − log2 Z(G(σ)))`.
///
/// The derivative of `Tr ρ log ρ` carries an extra `I/ln 2` which cancels
/// against the same term from `Tr ρ log Zρ`, so no identity shift is added.
/// Eigenvalues below the floor contribute 0 to both logarithms.
pub fn gradient(sigma: &DensityOp, km: &KeyMapSpec) -> Result<HermOp> {
    check_in_dim(sigma.dim(), km)?;
    let rho = HermOp::hermitize(km.g_map.apply_mat(sigma.matrix()));
    if rho.trace() <= PSD_TOL * PSD_TOL {
        return Err(Error::ZeroTraceImage);
    }
    let zrho = HermOp::hermitize(km.pinch(rho.matrix()));
    let y = log_on_support(&rho) - log_on_support(&zrho);
    Ok(HermOp::hermitize(adjoint_mat(&km.g_map, &y)))
}

fn adjoint_mat(g: &KrausChannel, y: &CMat) -> CMat {
    let mut out = CMat::zeros(g.in_dim(), g.in_dim());
    for k in g.kraus_ops() {
        out += k.adjoint() * y * k;
    }
    out
}

/// Perturbed objective and gradient used by the minimizer.
struct Perturbed<'a> {
    km: &'a KeyMapSpec,
    eps: f64,
}

impl Perturbed<'_> {
    fn image(&self, sigma: &CMat) -> HermOp {
        let d = self.km.out_dim();
        let tr = crate::linalg::trace(sigma).re;
        let rho =
            self.km.g_map.apply_mat(sigma) * c(1.0 - self.eps) + CMat::identity(d, d) * c(self.eps * tr / d as f64);
        HermOp::hermitize(rho)
    }

    fn value(&self, sigma: &CMat) -> f64 {
        let rho = self.image(sigma);
        let zrho = HermOp::hermitize(self.km.pinch(rho.matrix()));
        entropy_bits(&zrho) - entropy_bits(&rho)
    }

    fn value_and_gradient(&self, sigma: &CMat) -> (f64, CMat) {
        let rho = self.image(sigma);
        let zrho = HermOp::hermitize(self.km.pinch(rho.matrix()));
        let val = entropy_bits(&zrho) - entropy_bits(&rho);
        let y = log_on_support(&rho) - log_on_support(&zrho);
        let d = self.km.out_dim() as f64;
        let n = self.km.in_dim();
        let tr_y = crate::linalg::trace(&y).re;
        let grad = adjoint_mat(&self.km.g_map, &y) * c(1.0 - self.eps) + CMat::identity(n, n) * c(self.eps * tr_y / d);
        (val, (&grad + grad.adjoint()) * c(0.5))
    }
}

/// Certified bound and the best iterate found.
#[derive(Clone, Debug)]
pub struct EntropyBound {
    pub lower_bound: f64,
    pub feasible_value: f64,
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
    pub argument: HermOp,
}

#[derive(Clone, Copy, Debug)]
pub struct EntropyOptions {
    pub max_iter: usize,
    /// Stop when `feasible_value − lower_bound` falls below this.
    pub target_gap: f64,
    /// Also stop when the gap falls below this fraction of `feasible_value`.
    pub relative_gap: f64,
    pub perturbation: f64,
    pub sdp: SdpOptions,
}

impl Default for EntropyOptions {
    fn default() -> Self {
        Self {
            max_iter: 300,
            target_gap: 1e-4,
            relative_gap: 0.0,
            perturbation: 1e-11,
            sdp: SdpOptions::default(),
        }
    }
}

/// Output of the linear subproblem.
#[derive(Clone, Debug)]
pub struct LinearMin {
    pub value: f64,
    /// Valid lower bound on the minimum from the dual multipliers.
    pub dual_bound: f64,
    pub argument: HermOp,
}

/// The constraint set with Alice restricted to the support of her marginal and
/// the state space split into blocks, ready to be turned into SDPs.
struct Reduced {
    /// Isometry from the reduced space into the original `A ⊗ B`.
    embed: CMat,
    d_a: usize,
    marginal: CMat,
    observables: Vec<CMat>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Indices of each block inside the reduced space.
    blocks: Vec<Vec<usize>>,
    /// Row layout shared by every linear subproblem.
    rows: Vec<SdpRow>,
    n_lp: usize,
    row_kind: Vec<RowKind>,
}

#[derive(Clone, Copy, Debug)]
enum RowKind {
    Marginal(usize),
    Lower(usize),
    Upper(usize),
    Equal(usize),
}

impl Reduced {
    fn new(cs: &ConstraintSet, blocked: bool) -> Result<Self> {
        let d_a_full = cs.d_a();
        let d_b = cs.d_b();
        let e = cs.fixed_marginal.as_herm().eigh();
        let keep: Vec<usize> = (0..d_a_full).filter(|&i| e.values[i] > 1e-12).collect();
        let d_a = keep.len();
        let mut p = CMat::zeros(d_a_full, d_a);
        for (j, &i) in keep.iter().enumerate() {
            p.set_column(j, &e.vectors.column(i));
        }
        let embed = kron(&p, &CMat::identity(d_b, d_b));
        let marginal = HermOp::hermitize(p.adjoint() * cs.fixed_marginal.matrix() * &p).into_matrix();
        let observables: Vec<CMat> = cs
            .observables
            .iter()
            .map(|o| HermOp::hermitize(embed.adjoint() * o.matrix() * &embed).into_matrix())
            .collect();

        let b_blocks: Vec<Vec<usize>> = match (&cs.b_blocks, blocked) {
            (Some(b), true) => b.clone(),
            _ => vec![(0..d_b).collect()],
        };
        let blocks: Vec<Vec<usize>> = b_blocks.iter().map(|b| block_indices(d_a, d_b, b)).collect();

        let mut rows = Vec::new();
        let mut row_kind = Vec::new();
        for (k, eb) in hermitian_basis(d_a).into_iter().enumerate() {
            let full = kron(eb.matrix(), &CMat::identity(d_b, d_b));
            rows.push(SdpRow {
                terms: block_terms(&full, &blocks),
                lp: vec![],
                rhs: trace_prod_re(eb.matrix(), &marginal),
            });
            row_kind.push(RowKind::Marginal(k));
        }
        let mut n_lp = 0;
        for (k, o) in observables.iter().enumerate() {
            let (lo, hi) = (cs.lower[k], cs.upper[k]);
            let oh = HermOp::hermitize(o.clone());
            let eig = oh.eigh();
            let terms = block_terms(o, &blocks);
            if hi - lo <= 1e-14 {
                rows.push(SdpRow {
                    terms,
                    lp: vec![],
                    rhs: 0.5 * (lo + hi),
                });
                row_kind.push(RowKind::Equal(k));
                continue;
            }
            // Skip sides implied by σ ⪰ 0 and Tr σ = 1.
            if lo > eig.min() + 1e-15 {
                rows.push(SdpRow {
                    terms: terms.clone(),
                    lp: vec![(n_lp, -1.0)],
                    rhs: lo,
                });
                row_kind.push(RowKind::Lower(k));
                n_lp += 1;
            }
            if hi < eig.max() - 1e-15 {
                rows.push(SdpRow {
                    terms,
                    lp: vec![(n_lp, 1.0)],
                    rhs: hi,
                });
                row_kind.push(RowKind::Upper(k));
                n_lp += 1;
            }
        }
        Ok(Self {
            embed,
            d_a,
            marginal,
            observables,
            lower: cs.lower.clone(),
            upper: cs.upper.clone(),
            blocks,
            rows,
            n_lp,
            row_kind,
        })
    }

    fn dim(&self) -> usize {
        self.embed.ncols()
    }

    fn problem(&self, w: &CMat) -> SdpProblem {
        SdpProblem {
            block_dims: self.blocks.iter().map(|b| b.len()).collect(),
            n_lp: self.n_lp,
            c_blocks: self.blocks.iter().map(|b| submatrix(w, b)).collect(),
            c_lp: vec![0.0; self.n_lp],
            rows: self.rows.clone(),
        }
    }

    fn assemble(&self, blocks: &[CMat]) -> CMat {
        let mut out = CMat::zeros(self.dim(), self.dim());
        for (idx, m) in self.blocks.iter().zip(blocks) {
            for (i, &ii) in idx.iter().enumerate() {
                for (j, &jj) in idx.iter().enumerate() {
                    out[(ii, jj)] = m[(i, j)];
                }
            }
        }
        out
    }

    /// Lower bound on `min Tr(Wσ)` from arbitrary multipliers `y`.
    fn dual_bound(&self, w: &CMat, y: &[f64]) -> f64 {
        let basis = hermitian_basis(self.d_a);
        let d_b = self.dim() / self.d_a;
        let mut ymat = CMat::zeros(self.d_a, self.d_a);
        let mut wk = vec![0.0; self.observables.len()];
        for (row, kind) in self.row_kind.iter().enumerate() {
            match *kind {
                RowKind::Marginal(k) => ymat += basis[k].matrix() * c(y[row]),
                RowKind::Lower(k) | RowKind::Upper(k) | RowKind::Equal(k) => wk[k] += y[row],
            }
        }
        let mut s = w - kron(&ymat, &CMat::identity(d_b, d_b));
        let mut bound = trace_prod_re(&ymat, &self.marginal);
        for (k, o) in self.observables.iter().enumerate() {
            if wk[k] != 0.0 {
                s -= o * c(wk[k]);
                bound += (wk[k] * self.lower[k]).min(wk[k] * self.upper[k]);
            }
        }
        let lam = self
            .blocks
            .iter()
            .map(|b| HermOp::hermitize(submatrix(&s, b)).min_eigenvalue())
            .fold(f64::INFINITY, f64::min);
        bound + lam
    }

    fn linear_min(&self, w: &CMat, opts: &SdpOptions) -> Result<LinearMin> {
        let sol = sdp_solve(&self.problem(w), opts);
        if sol.status != SdpStatus::Optimal && sol.primal_residual > 1e-9 {
            // A positive bound for the zero objective certifies emptiness.
            // Otherwise an inaccurate solve is still usable: the dual bound is
            // valid for any multipliers.
            let zero = CMat::zeros(self.dim(), self.dim());
            let cert = self.dual_bound(&zero, &sol.y);
            if cert > 0.0 {
                return Err(Error::Infeasible(format!(
                    "constraint set is empty (primal residual {:.3e}, emptiness certificate {cert:.3e})",
                    sol.primal_residual
                )));
            }
            if sol.primal_residual > 1e-4 {
                return Err(Error::Numerical(format!(
                    "interior-point solve stalled at primal residual {:.3e}",
                    sol.primal_residual
                )));
            }
        }
        let arg = HermOp::hermitize(self.assemble(&sol.x_blocks));
        Ok(LinearMin {
            value: trace_prod_re(w, arg.matrix()),
            dual_bound: self.dual_bound(w, &sol.y),
            argument: arg,
        })
    }
}

fn block_terms(m: &CMat, blocks: &[Vec<usize>]) -> Vec<(usize, CMat)> {
    blocks
        .iter()
        .enumerate()
        .filter_map(|(bi, idx)| {
            let s = submatrix(m, idx);
            (max_abs(&s) > 0.0).then_some((bi, s))
        })
        .collect()
}

/// Minimizes `Tr(Wσ)` over the constraint set.
pub fn sdp_linear_min(w: &HermOp, cs: &ConstraintSet) -> Result<LinearMin> {
    sdp_linear_min_with(w, cs, &SdpOptions::default())
}

pub fn sdp_linear_min_with(w: &HermOp, cs: &ConstraintSet, opts: &SdpOptions) -> Result<LinearMin> {
    if w.dim() != cs.dim() {
        return Err(Error::Dimension(format!(
            "objective has dimension {}, constraint set {}",
            w.dim(),
            cs.dim()
        )));
    }
    let blocked = match cs.b_blocks() {
        Some(b) => off_block_norm(w.matrix(), cs.d_a(), cs.d_b(), b) <= 1e-12,
        None => false,
    };
    let red = Reduced::new(cs, blocked)?;
    let wr = HermOp::hermitize(red.embed.adjoint() * w.matrix() * &red.embed).into_matrix();
    let lm = red.linear_min(&wr, opts)?;
    Ok(LinearMin {
        value: lm.value,
        dual_bound: lm.dual_bound,
        argument: HermOp::hermitize(&red.embed * lm.argument.matrix() * red.embed.adjoint()),
    })
}

/// Whether the key map commutes with the block pinching in the sense needed
/// for the block-diagonal restriction to be exact.
fn key_map_respects_blocks(g: &KrausChannel, z: &[HermOp], embed: &CMat, blocks: &[Vec<usize>]) -> bool {
    let d_out = g.out_dim();
    let dim = embed.ncols();
    let mut projs: Vec<CMat> = Vec::with_capacity(blocks.len());
    for idx in blocks {
        let mut acc = CMat::zeros(d_out, d_out);
        for k in g.kraus_ops() {
            let kr = k * embed;
            let mut sel = CMat::zeros(dim, dim);
            for &i in idx {
                sel[(i, i)] = c(1.0);
            }
            let kb = kr * sel;
            acc += &kb * kb.adjoint();
        }
        let e = HermOp::hermitize(acc).eigh();
        let scale = e.max().max(1e-300);
        let mut q = CMat::zeros(d_out, d_out);
        for (i, &v) in e.values.iter().enumerate() {
            if v > 1e-12 * scale.max(1.0) {
                let col = e.vectors.column(i);
                q += col * col.adjoint();
            }
        }
        projs.push(q);
    }
    for (i, q) in projs.iter().enumerate() {
        for r in &projs[i + 1..] {
            if max_abs(&(q * r)) > 1e-9 {
                return false;
            }
        }
        for p in z {
            if max_abs(&(q * p.matrix() - p.matrix() * q)) > 1e-9 {
                return false;
            }
        }
    }
    true
}

/// Certified lower bound on `min f(σ)` over the constraint set.
///
/// Every Frank–Wolfe step solves the linearized problem as an SDP; the dual
/// multipliers of that SDP turn the convexity cut into a bound that holds
/// regardless of how accurately the SDP was solved.
pub fn min_entropy_lower_bound(cs: &ConstraintSet, km: &KeyMapSpec, opts: &EntropyOptions) -> Result<EntropyBound> {
    check_in_dim(cs.dim(), km)?;
    let probe = Reduced::new(cs, false)?;
    let blocked = match cs.b_blocks() {
        Some(b) => {
            let bi: Vec<Vec<usize>> = b.iter().map(|x| block_indices(probe.d_a, cs.d_b(), x)).collect();
            key_map_respects_blocks(km.g_map(), km.z_pinching(), &probe.embed, &bi)
        }
        None => false,
    };
    let red = if blocked { Reduced::new(cs, true)? } else { probe };

    let kraus: Vec<CMat> = km.g_map.kraus_ops().iter().map(|k| k * &red.embed).collect();
    let g_red = KrausChannel::new(red.dim(), km.out_dim(), kraus, km.g_map.trace_kind())?;
    let km_red = KeyMapSpec {
        g_map: g_red,
        z_pinching: km.z_pinching.clone(),
    };
    let pert = Perturbed {
        km: &km_red,
        eps: opts.perturbation,
    };

    // Start from a solution of the zero-objective problem, which the
    // interior-point method returns close to the analytic center.
    let zero = CMat::zeros(red.dim(), red.dim());
    let mut sigma = red.linear_min(&zero, &opts.sdp)?.argument.into_matrix();

    let mut best_lb = f64::NEG_INFINITY;
    let mut best_val = f64::INFINITY;
    let mut best_arg = sigma.clone();
    let mut iterations = 0;
    let mut converged = false;
    for it in 0..opts.max_iter.max(1) {
        iterations = it + 1;
        let (val_eps, grad) = pert.value_and_gradient(&sigma);
        let exact = objective_mat(&sigma, &km_red);
        if exact < best_val {
            best_val = exact;
            best_arg = sigma.clone();
        }
        let lm = red.linear_min(&grad, &opts.sdp)?;
        let cut = val_eps - trace_prod_re(&grad, &sigma) + lm.dual_bound;
        if cut > best_lb {
            best_lb = cut;
        }
        // Entropy is nonnegative, so the clipped bound is the one that counts.
        let gap = best_val - best_lb.max(0.0);
        if gap <= opts.target_gap || gap <= opts.relative_gap * best_val.abs() {
            converged = true;
            break;
        }
        let dir = lm.argument.matrix() - &sigma;
        let step = line_search(|t| pert.value(&(&sigma + &dir * c(t))));
        if step <= 0.0 {
            continue;
        }
        sigma = &sigma + &dir * c(step);
    }
    let lower = best_lb.max(0.0).min(best_val);
    Ok(EntropyBound {
        lower_bound: lower,
        feasible_value: best_val,
        gap: best_val - lower,
        iterations,
        converged,
        argument: HermOp::hermitize(&red.embed * &best_arg * red.embed.adjoint()),
    })
}

/// Golden-section search for the minimizer of a convex function on `[0, 1]`.
fn line_search(f: impl Fn(f64) -> f64) -> f64 {
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (0.0f64, 1.0f64);
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..60 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = f(x2);
        }
        if b - a < 1e-12 {
            break;
        }
    }
    let t = 0.5 * (a + b);
    let candidates = [(0.0, f(0.0)), (1.0, f(1.0)), (t, f(t))];
    candidates
        .iter()
        .copied()
        .fold((0.0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc })
        .0
}

/// Empirical joint distribution over `(Z, Y, C)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct JointTable {
    entries: BTreeMap<(usize, usize, usize), f64>,
}

impl JointTable {
    pub fn new(rows: &[(usize, usize, usize, f64)]) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut total = 0.0;
        for &(z, y, cc, p) in rows {
            if !(p >= 0.0) || !p.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "frequency {p} is not a nonnegative number"
                )));
            }
            *entries.entry((z, y, cc)).or_insert(0.0) += p;
            total += p;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::NotNormalized {
                trace: total,
                expected: 1.0,
            });
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> impl Iterator<Item = ((usize, usize, usize), f64)> + '_ {
        self.entries.iter().map(|(k, v)| (*k, *v))
    }
}

/// `H(Z|YC)` of the table, in bits.
pub fn conditional_shannon(joint: &JointTable) -> f64 {
    let mut marg: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for ((_, y, cc), p) in joint.entries() {
        *marg.entry((y, cc)).or_insert(0.0) += p;
    }
    let mut h = 0.0;
    for ((_, y, cc), p) in joint.entries() {
        if p > 0.0 {
            h -= p * (p / marg[&(y, cc)]).log2();
        }
    }
    h.max(0.0)
}
