//! Modified flag-state squasher and subspace-weight bounds.
//!
//! Outcome index 0 here is the distinguished outcome that receives the
//! `c` correction; callers permute their outcomes so that it comes first.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{choi_of, max_abs, CMat, HermOp, LinearMap, C64, PSD_TOL};

/// `1 − t^{N+1} − (1 − t/4)^{N+1} + (3t/4)^{N+1}`: lower bound on the
/// tail eigenvalue of the cross-click element for splitting ratio `t`.
pub fn crossclick_lambda_min(t: f64, n_b: u32) -> Result<f64> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "splitting ratio t = {t} must lie in (0,1)"
        )));
    }
    let k = n_b as i32 + 1;
    Ok(1.0 - t.powi(k) - (1.0 - t / 4.0).powi(k) + (0.75 * t).powi(k))
}

/// Upper bound on the weight outside the preserved subspace.
pub fn weight_bound(p_e: f64, lam_in: f64, lam_out: f64) -> Result<f64> {
    if !(lam_out > lam_in) {
        return Err(Error::VacuousWeightBound { lam_in, lam_out });
    }
    if !(0.0..=1.0).contains(&p_e) {
        return Err(Error::InvalidArgument(format!("probability {p_e} outside [0,1]")));
    }
    Ok(((p_e - lam_in) / (lam_out - lam_in)).clamp(0.0, 1.0))
}

/// A POVM whose elements are block-diagonal across a (low, tail) split.
#[derive(Clone, Debug)]
pub struct TruncatedPOVM {
    d_low: usize,
    d_tail: usize,
    low: Vec<HermOp>,
    tail: Vec<HermOp>,
}

impl TruncatedPOVM {
    /// Builds the POVM from its diagonal blocks; off-diagonal blocks are zero.
    pub fn from_blocks(low: Vec<HermOp>, tail: Vec<HermOp>) -> Result<Self> {
        if low.is_empty() || low.len() != tail.len() {
            return Err(Error::Dimension(format!(
                "need matching nonempty block lists, got {} low and {} tail",
                low.len(),
                tail.len()
            )));
        }
        let d_low = low[0].dim();
        let d_tail = tail[0].dim();
        if low.iter().any(|g| g.dim() != d_low) || tail.iter().any(|g| g.dim() != d_tail) {
            return Err(Error::Dimension("POVM blocks have inconsistent dimensions".into()));
        }
        check_povm(&low)?;
        if d_tail > 0 {
            check_povm(&tail)?;
        }
        Ok(Self {
            d_low,
            d_tail,
            low,
            tail,
        })
    }

    /// Splits full elements at `d_low`; the low/tail coupling must vanish.
    pub fn from_elements(elements: &[HermOp], d_low: usize) -> Result<Self> {
        let d = elements.first().map(HermOp::dim).unwrap_or(0);
        if d < d_low || elements.iter().any(|e| e.dim() != d) {
            return Err(Error::Dimension("POVM elements have inconsistent dimensions".into()));
        }
        let d_tail = d - d_low;
        let mut low = Vec::with_capacity(elements.len());
        let mut tail = Vec::with_capacity(elements.len());
        for e in elements {
            let off = e.matrix().view((0, d_low), (d_low, d_tail)).into_owned();
            let dev = max_abs(&off);
            if dev > PSD_TOL {
                return Err(Error::InvalidArgument(format!(
                    "POVM element couples low and tail blocks (max entry {dev:.3e})"
                )));
            }
            low.push(e.block(0, d_low));
            tail.push(e.block(d_low, d_tail));
        }
        Self::from_blocks(low, tail)
    }

    pub fn n_outcomes(&self) -> usize {
        self.low.len()
    }

    pub fn d_low(&self) -> usize {
        self.d_low
    }

    pub fn d_tail(&self) -> usize {
        self.d_tail
    }

    pub fn low_block(&self, i: usize) -> &HermOp {
        &self.low[i]
    }

    pub fn tail_block(&self, i: usize) -> &HermOp {
        &self.tail[i]
    }

    /// Full element `Γ_low ⊕ Γ_tail`.
    pub fn element(&self, i: usize) -> HermOp {
        self.low[i].direct_sum(&self.tail[i])
    }
}

fn check_povm(elements: &[HermOp]) -> Result<()> {
    let d = elements[0].dim();
    let mut sum = HermOp::zeros(d);
    for e in elements {
        let m = e.min_eigenvalue();
        if m < -PSD_TOL {
            return Err(Error::NotPositive { min_eigenvalue: m });
        }
        sum = sum.add(e);
    }
    let dev = max_abs(&(sum.matrix() - CMat::identity(d, d)));
    if dev > PSD_TOL {
        return Err(Error::TraceCondition { deviation: dev });
    }
    Ok(())
}

/// Minimum eigenvalue of the tail block of outcome `i`.
///
/// An empty tail imposes no constraint and reports 1.
pub fn lambda_min_tail(gamma: &TruncatedPOVM, outcome: usize) -> Result<f64> {
    if outcome >= gamma.n_outcomes() {
        return Err(Error::InvalidArgument(format!(
            "outcome {outcome} out of range for {} outcomes",
            gamma.n_outcomes()
        )));
    }
    if gamma.d_tail == 0 {
        return Ok(1.0);
    }
    Ok(gamma.tail[outcome].min_eigenvalue())
}

/// Target POVM `F_i` on `d_low + n` dimensions built from the low blocks.
///
/// `F_0 = Γ_0,low ⊕ (|0⟩⟨0| + c Σ_{j≥1} |j⟩⟨j|)` and
/// `F_i = Γ_i,low ⊕ (1 − c)|i⟩⟨i|` for `i ≥ 1`.
pub fn flag_target_povm(low: &[HermOp], c: f64) -> Vec<HermOp> {
    let n = low.len();
    low.iter()
        .enumerate()
        .map(|(i, g)| {
            let flags: Vec<f64> = (0..n)
                .map(|j| match (i, j) {
                    (0, 0) => 1.0,
                    (0, _) => c,
                    (i, j) if i == j => 1.0 - c,
                    _ => 0.0,
                })
                .collect();
            g.direct_sum(&HermOp::from_real_diag(&flags))
        })
        .collect()
}

/// Measure-and-prepare squashing map.
///
/// Keeps the low block, discards low/tail coherences, measures the tail with
/// `tail_povm` and prepares flag `|i⟩` for outcome `i`.
#[derive(Clone, Debug)]
pub struct FlagChannel {
    d_low: usize,
    d_tail: usize,
    tail_povm: Vec<HermOp>,
}

impl FlagChannel {
    pub fn in_dim_total(&self) -> usize {
        self.d_low + self.d_tail
    }

    pub fn n_flags(&self) -> usize {
        self.tail_povm.len()
    }

    pub fn tail_povm(&self) -> &[HermOp] {
        &self.tail_povm
    }

    pub fn apply(&self, rho: &HermOp) -> Result<HermOp> {
        if rho.dim() != self.in_dim() {
            return Err(Error::Dimension(format!(
                "squasher input dimension {} but operator has {}",
                self.in_dim(),
                rho.dim()
            )));
        }
        Ok(HermOp::hermitize(self.apply_mat(rho.matrix())))
    }

    /// `Λ†[F] = F_low ⊕ Σ_i ⟨i|F|i⟩ M_i`.
    pub fn adjoint_apply(&self, f: &HermOp) -> Result<HermOp> {
        if f.dim() != self.out_dim() {
            return Err(Error::Dimension(format!(
                "squasher output dimension {} but operator has {}",
                self.out_dim(),
                f.dim()
            )));
        }
        let low = f.block(0, self.d_low);
        let mut tail = HermOp::zeros(self.d_tail);
        for (i, m) in self.tail_povm.iter().enumerate() {
            let w = f.matrix()[(self.d_low + i, self.d_low + i)].re;
            tail.axpy(w, m);
        }
        Ok(low.direct_sum(&tail))
    }
}

impl LinearMap for FlagChannel {
    fn in_dim(&self) -> usize {
        self.d_low + self.d_tail
    }

    fn out_dim(&self) -> usize {
        self.d_low + self.tail_povm.len()
    }

    fn apply_mat(&self, x: &CMat) -> CMat {
        let mut out = CMat::zeros(self.out_dim(), self.out_dim());
        out.view_mut((0, 0), (self.d_low, self.d_low))
            .copy_from(&x.view((0, 0), (self.d_low, self.d_low)));
        let tail = x.view((self.d_low, self.d_low), (self.d_tail, self.d_tail));
        for (i, m) in self.tail_povm.iter().enumerate() {
            let mut acc = C64::default();
            for r in 0..self.d_tail {
                for s in 0..self.d_tail {
                    acc += m.matrix()[(r, s)] * tail[(s, r)];
                }
            }
            out[(self.d_low + i, self.d_low + i)] = acc;
        }
        out
    }
}

/// Target POVM, squashing map and the `c` used to build them.
#[derive(Clone, Debug)]
pub struct FlagSquash {
    target: Vec<HermOp>,
    channel: FlagChannel,
    c: f64,
}

impl FlagSquash {
    /// Assembles a squasher without validation; use [`verify_squash`] to check it.
    pub fn from_parts(target: Vec<HermOp>, channel: FlagChannel, c: f64) -> Self {
        Self { target, channel, c }
    }

    pub fn target_povm(&self) -> &[HermOp] {
        &self.target
    }

    pub fn channel(&self) -> &FlagChannel {
        &self.channel
    }

    pub fn c(&self) -> f64 {
        self.c
    }
}

/// Builds `F_i` and `Λ` for `0 ≤ c ≤ λ_min(tail of Γ_0)`, `c < 1`.
pub fn build_flag_squasher(gamma: &TruncatedPOVM, c: f64) -> Result<FlagSquash> {
    let lam = lambda_min_tail(gamma, 0)?;
    if !(0.0..1.0).contains(&c) || c > lam + PSD_TOL {
        return Err(Error::SquasherParameter { c, lambda_min: lam });
    }
    let target = flag_target_povm(&gamma.low, c);
    let scale = 1.0 / (1.0 - c);
    let mut tail_povm = Vec::with_capacity(gamma.n_outcomes());
    for (i, t) in gamma.tail.iter().enumerate() {
        let m = if i == 0 {
            t.sub(&HermOp::identity(gamma.d_tail).scaled(c))
        } else {
            t.clone()
        };
        tail_povm.push(m.scaled(scale));
    }
    let channel = FlagChannel {
        d_low: gamma.d_low,
        d_tail: gamma.d_tail,
        tail_povm,
    };
    Ok(FlagSquash { target, channel, c })
}

/// Builds the squasher with the saturating choice `c = λ_min(tail of Γ_0)`.
pub fn build_flag_squasher_saturated(gamma: &TruncatedPOVM) -> Result<FlagSquash> {
    let lam = lambda_min_tail(gamma, 0)?.clamp(0.0, 1.0 - 1e-12);
    build_flag_squasher(gamma, lam)
}

/// Diagnostics from [`verify_squash`].
#[derive(Clone, Debug)]
pub struct SquashReport {
    pub ok: bool,
    /// Smallest eigenvalue of the Choi operator of `Λ`.
    pub choi_min_eigenvalue: f64,
    /// `max |Λ†[I] − I|`.
    pub trace_deviation: f64,
    /// `max_i ‖Λ†[F_i] − Γ_i‖` (operator norm).
    pub adjoint_deviation: f64,
    /// `max_{i,ρ} |Tr[Γ_i ρ] − Tr[F_i Λ(ρ)]|` over sampled states.
    pub sampled_deviation: f64,
    /// `max |Σ F_i − I|`.
    pub completeness_deviation: f64,
    /// Smallest eigenvalue among the `F_i`.
    pub target_min_eigenvalue: f64,
}

/// Number of random states sampled by [`verify_squash`].
pub const VERIFY_SAMPLES: usize = 200;

fn random_state(rng: &mut ChaCha8Rng, d: usize) -> HermOp {
    let g = CMat::from_fn(d, d, |_, _| {
        C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
    });
    let p = HermOp::hermitize(&g * g.adjoint());
    let t = p.trace();
    p.scaled(1.0 / t)
}

/// Checks CP, trace preservation and `Λ†[F_i] = Γ_i`, both as operators and
/// on sampled states.
pub fn verify_squash(fs: &FlagSquash, gamma: &TruncatedPOVM, tol: f64) -> SquashReport {
    let ch = &fs.channel;
    let d_in = gamma.d_low + gamma.d_tail;
    let mut report = SquashReport {
        ok: false,
        choi_min_eigenvalue: f64::NEG_INFINITY,
        trace_deviation: f64::INFINITY,
        adjoint_deviation: f64::INFINITY,
        sampled_deviation: f64::INFINITY,
        completeness_deviation: f64::INFINITY,
        target_min_eigenvalue: f64::NEG_INFINITY,
    };
    if ch.in_dim() != d_in || fs.target.len() != gamma.n_outcomes() || fs.target.is_empty() {
        return report;
    }
    if fs.target.iter().any(|f| f.dim() != ch.out_dim()) {
        return report;
    }

    report.choi_min_eigenvalue = choi_of(ch).min_eigenvalue();
    let id_out = HermOp::identity(ch.out_dim());
    report.trace_deviation = match ch.adjoint_apply(&id_out) {
        Ok(a) => max_abs(&(a.matrix() - CMat::identity(d_in, d_in))),
        Err(_) => f64::INFINITY,
    };

    let mut sum = HermOp::zeros(ch.out_dim());
    let mut min_f = f64::INFINITY;
    let mut adj = 0.0_f64;
    for (i, f) in fs.target.iter().enumerate() {
        sum = sum.add(f);
        min_f = min_f.min(f.min_eigenvalue());
        let back = match ch.adjoint_apply(f) {
            Ok(b) => b,
            Err(_) => return report,
        };
        adj = adj.max(back.sub(&gamma.element(i)).op_norm());
    }
    report.adjoint_deviation = adj;
    report.target_min_eigenvalue = min_f;
    report.completeness_deviation = max_abs(&(sum.matrix() - id_out.matrix()));

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let elements: Vec<HermOp> = (0..gamma.n_outcomes()).map(|i| gamma.element(i)).collect();
    let mut sampled = 0.0_f64;
    for _ in 0..VERIFY_SAMPLES {
        let rho = random_state(&mut rng, d_in);
        let out = match ch.apply(&rho) {
            Ok(o) => o,
            Err(_) => return report,
        };
        for (g, f) in elements.iter().zip(&fs.target) {
            sampled = sampled.max((g.inner(&rho) - f.inner(&out)).abs());
        }
    }
    report.sampled_deviation = sampled;

    report.ok = report.choi_min_eigenvalue >= -tol
        && report.trace_deviation <= tol
        && report.adjoint_deviation <= tol
        && report.sampled_deviation <= tol
        && report.completeness_deviation <= tol
        && report.target_min_eigenvalue >= -tol;
    report
}

/// Random block-diagonal POVM with `n` outcomes (used by tests and the
/// acceptance suite).
pub fn random_truncated_povm(n: usize, d_low: usize, d_tail: usize, seed: u64) -> TruncatedPOVM {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let block = |rng: &mut ChaCha8Rng, d: usize| -> Vec<HermOp> {
        if d == 0 {
            return vec![HermOp::zeros(0); n];
        }
        let raw: Vec<HermOp> = (0..n).map(|_| random_state(rng, d)).collect();
        let mut s = HermOp::zeros(d);
        for r in &raw {
            s = s.add(r);
        }
        let inv_sqrt = s.map_spectrum(|x| 1.0 / x.sqrt());
        raw.iter().map(|r| r.conjugate(inv_sqrt.matrix())).collect()
    };
    let low = block(&mut rng, d_low);
    let tail = block(&mut rng, d_tail);
    TruncatedPOVM::from_blocks(low, tail).expect("normalized random POVM is valid")
}
