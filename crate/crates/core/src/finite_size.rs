//! Finite-size arithmetic: Hoeffding intervals, Rényi corrections, key length
//! and the postselection lifts.
//!
//! Security parameters in postselected modes scale like `1/g²` where `log2 g`
//! can exceed 10⁵, so every ε is carried as its base-2 logarithm and only
//! exponentiated for display.

use crate::definetti::{effective_x, log2_g_for_penalty, BlockSpec};
use crate::entropy::{conditional_shannon, ConstraintSet, JointTable};
use crate::error::{Error, Result};
use crate::linalg::{DensityOp, HermOp, PSD_TOL};

/// How a key length is turned into a security statement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BudgetMode {
    /// IID attacks only: `ε_sec = ε_target`.
    Iid,
    /// Variable-length postselection lift with the given `log2 g`.
    Postselected { log2_g: f64 },
}

/// Security targets and the derived ε split.
///
/// Only the targets, the mode and an optional `ε̄` override are stored; all
/// derived quantities are recomputed on access.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SecurityBudget {
    pub eps_target_sec: f64,
    pub eps_target_cor: f64,
    pub mode: BudgetMode,
    /// `log2 ε̄` for the fixed-length lift; defaults to `log2 ε_PA`.
    pub log2_eps_bar_override: Option<f64>,
}

impl SecurityBudget {
    pub fn new(eps_target_sec: f64, eps_target_cor: f64, mode: BudgetMode) -> Result<Self> {
        for (name, v) in [("secrecy", eps_target_sec), ("correctness", eps_target_cor)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidArgument(format!("{name} target {v} must lie in (0,1)")));
            }
        }
        if let BudgetMode::Postselected { log2_g } = mode {
            if !(log2_g >= 0.0) || !log2_g.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "log2 g = {log2_g} must be finite and ≥ 0"
                )));
            }
        }
        Ok(Self {
            eps_target_sec,
            eps_target_cor,
            mode,
            log2_eps_bar_override: None,
        })
    }

    pub fn iid(eps_target_sec: f64, eps_target_cor: f64) -> Result<Self> {
        Self::new(eps_target_sec, eps_target_cor, BudgetMode::Iid)
    }

    pub fn postselected(eps_target_sec: f64, eps_target_cor: f64, log2_g: f64) -> Result<Self> {
        Self::new(eps_target_sec, eps_target_cor, BudgetMode::Postselected { log2_g })
    }

    pub fn with_eps_bar(mut self, eps_bar: f64) -> Result<Self> {
        if !(eps_bar > 0.0 && eps_bar < 1.0) {
            return Err(Error::InvalidArgument(format!("ε̄ = {eps_bar} must lie in (0,1)")));
        }
        self.log2_eps_bar_override = Some(eps_bar.log2());
        Ok(self)
    }

    pub fn log2_g(&self) -> f64 {
        match self.mode {
            BudgetMode::Iid => 0.0,
            BudgetMode::Postselected { log2_g } => log2_g,
        }
    }

    /// `log2 ε_sec` of the underlying IID protocol.
    pub fn log2_eps_sec(&self) -> f64 {
        match self.mode {
            BudgetMode::Iid => self.eps_target_sec.log2(),
            BudgetMode::Postselected { log2_g } => epsilon_budget_log2(self.eps_target_sec, log2_g).0,
        }
    }

    /// `log2 ε̃` (postselected modes only).
    pub fn log2_eps_tilde(&self) -> Option<f64> {
        match self.mode {
            BudgetMode::Iid => None,
            BudgetMode::Postselected { log2_g } => Some(epsilon_budget_log2(self.eps_target_sec, log2_g).1),
        }
    }

    /// `ε_PA = ε_AT = ε_sec/2`.
    pub fn log2_eps_pa(&self) -> f64 {
        self.log2_eps_sec() - 1.0
    }

    pub fn log2_eps_at(&self) -> f64 {
        self.log2_eps_sec() - 1.0
    }

    pub fn log2_eps_bar(&self) -> f64 {
        self.log2_eps_bar_override.unwrap_or_else(|| self.log2_eps_pa())
    }

    /// Correctness is not rescaled by the lift.
    pub fn log2_eps_ev(&self) -> f64 {
        self.eps_target_cor.log2()
    }

    pub fn eps_sec(&self) -> f64 {
        self.log2_eps_sec().exp2()
    }

    pub fn eps_pa(&self) -> f64 {
        self.log2_eps_pa().exp2()
    }

    pub fn eps_at(&self) -> f64 {
        self.log2_eps_at().exp2()
    }

    pub fn eps_bar(&self) -> f64 {
        self.log2_eps_bar().exp2()
    }

    pub fn eps_ev(&self) -> f64 {
        self.eps_target_cor
    }

    pub fn eps_tilde(&self) -> Option<f64> {
        self.log2_eps_tilde().map(f64::exp2)
    }
}

/// Round counts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProtocolCounts {
    pub n: f64,
    pub m: f64,
    pub n_k: f64,
    pub d_z: u32,
}

impl ProtocolCounts {
    pub fn new(n: f64, m: f64, d_z: u32) -> Result<Self> {
        if !(m > 0.0 && m < n) || !n.is_finite() {
            return Err(Error::InvalidArgument(format!("need 0 < m < n, got m = {m}, n = {n}")));
        }
        if d_z < 2 {
            return Err(Error::InvalidArgument(format!(
                "key alphabet size {d_z} must be at least 2"
            )));
        }
        Ok(Self { n, m, n_k: n - m, d_z })
    }

    /// `n` rounded down, `m = ⌊fraction·n⌋`.
    pub fn from_fraction(n: f64, test_fraction: f64, d_z: u32) -> Result<Self> {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "test fraction {test_fraction} must lie in (0,1)"
            )));
        }
        let n = n.floor();
        Self::new(n, (test_fraction * n).floor(), d_z)
    }
}

/// Diagnostics attached to a key length.
#[derive(Clone, Debug, PartialEq)]
pub struct KeyDiagnostics {
    pub b_stat: f64,
    pub leak: f64,
    pub theta: f64,
    pub renyi_correction: f64,
    pub two_log_g: f64,
    pub mode: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KeyLengthResult {
    pub length_bits: f64,
    /// Achieved secrecy; may underflow to 0 when `log2_secrecy_eps` is very negative.
    pub secrecy_eps: f64,
    pub log2_secrecy_eps: f64,
    pub log2_g: f64,
    pub x: u64,
    pub diagnostics: KeyDiagnostics,
}

/// `sqrt(ln(2|Σ|/ε_AT)/(2m))`.
pub fn hoeffding_mu(m: u64, n_outcomes: usize, eps_at: f64) -> f64 {
    hoeffding_mu_log2(m as f64, n_outcomes, eps_at.log2())
}

/// [`hoeffding_mu`] with `ε_AT` given as `log2 ε_AT` and real-valued `m`.
pub fn hoeffding_mu_log2(m: f64, n_outcomes: usize, log2_eps_at: f64) -> f64 {
    let ln_term = (2.0 * n_outcomes as f64).ln() - log2_eps_at * std::f64::consts::LN_2;
    (ln_term / (2.0 * m)).sqrt()
}

/// Intervals `[F_j − μ, F_j + μ] ∩ [0, 1]` around each observed frequency.
pub fn build_constraint_set(f_obs: &[f64], mu: f64, povm: &[HermOp], marginal: &DensityOp) -> Result<ConstraintSet> {
    if f_obs.len() != povm.len() {
        return Err(Error::Dimension(format!(
            "{} frequencies for {} POVM elements",
            f_obs.len(),
            povm.len()
        )));
    }
    let total: f64 = f_obs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::NotNormalized {
            trace: total,
            expected: 1.0,
        });
    }
    if let Some(first) = povm.first() {
        let d = first.dim();
        let mut sum = HermOp::zeros(d);
        for p in povm {
            if p.dim() != d {
                return Err(Error::Dimension("POVM elements differ in dimension".into()));
            }
            sum = sum.add(p);
        }
        let dev = crate::linalg::max_abs(&(sum.matrix() - HermOp::identity(d).matrix()));
        if dev > PSD_TOL {
            return Err(Error::InvalidArgument(format!(
                "POVM is not complete (deviation {dev:.3e})"
            )));
        }
        if d % marginal.dim() != 0 {
            return Err(Error::Dimension(format!(
                "POVM dimension {d} is not a multiple of marginal dimension {}",
                marginal.dim()
            )));
        }
    }
    let lower = f_obs.iter().map(|f| (f - mu).clamp(0.0, 1.0)).collect();
    let upper = f_obs.iter().map(|f| (f + mu).clamp(0.0, 1.0)).collect();
    ConstraintSet::new(povm.to_vec(), lower, upper, marginal.clone())
}

/// `α = 1 + κ/√n_K` with `κ = sqrt(log2(1/ε_PA))/log2(d_Z+1)`.
pub fn renyi_alpha(n_k: f64, eps_pa: f64, d_z: u32) -> f64 {
    renyi_alpha_log2(n_k, eps_pa.log2(), d_z)
}

pub fn renyi_alpha_log2(n_k: f64, log2_eps_pa: f64, d_z: u32) -> f64 {
    let kappa = (-log2_eps_pa).sqrt() / ((d_z + 1) as f64).log2();
    1.0 + kappa / n_k.sqrt()
}

/// `θ = (α/(α−1))(log2(1/(4ε_PA)) + 2/α) + ⌈log2(1/ε_EV)⌉`.
pub fn theta(eps_pa: f64, eps_ev: f64, alpha: f64) -> f64 {
    theta_log2(eps_pa.log2(), eps_ev.log2(), alpha)
}

pub fn theta_log2(log2_eps_pa: f64, log2_eps_ev: f64, alpha: f64) -> f64 {
    let pa_term = -log2_eps_pa - 2.0;
    (alpha / (alpha - 1.0)) * (pa_term + 2.0 / alpha) + (-log2_eps_ev).ceil()
}

/// `n_K(α−1)·log2²(d_Z+1)`.
pub fn renyi_correction(counts: &ProtocolCounts, alpha: f64) -> f64 {
    let l = ((counts.d_z + 1) as f64).log2();
    counts.n_k * (alpha - 1.0) * l * l
}

/// `n_K·H − n_K(α−1)·log2²(d_Z+1)`.
pub fn b_stat(entropy_lb: f64, counts: &ProtocolCounts, alpha: f64) -> f64 {
    counts.n_k * entropy_lb - renyi_correction(counts, alpha)
}

/// `n_K·f_EC·H(Z|YC)`.
pub fn leak_bits(table: &JointTable, counts: &ProtocolCounts, f_ec: f64) -> f64 {
    counts.n_k * f_ec * conditional_shannon(table)
}

/// `max(b − leak − θ, 0)`.
pub fn variable_key_length(b: f64, leak: f64, theta: f64) -> f64 {
    (b - leak - theta).max(0.0)
}

/// `(log2 ε_sec, log2 ε̃)` from `√(8ε_sec) = ε̃/2 = ε_target/(2g)`.
pub fn epsilon_budget_log2(eps_target: f64, log2_g: f64) -> (f64, f64) {
    let lt = eps_target.log2();
    let log2_tilde = lt - log2_g;
    // 8 ε_sec = (ε_target/(2g))²
    let log2_sec = 2.0 * (lt - 1.0 - log2_g) - 3.0;
    (log2_sec, log2_tilde)
}

/// `(ε_sec, ε̃)`; may underflow for large `g`, see [`epsilon_budget_log2`].
pub fn epsilon_budget(eps_target: f64, log2_g: f64) -> (f64, f64) {
    let (s, t) = epsilon_budget_log2(eps_target, log2_g);
    (s.exp2(), t.exp2())
}

/// `log2(2^a + 2^b)`.
pub fn log2_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (1.0 + (lo - hi).exp2()).log2()
}

/// `log2(g·(√(8ε_sec) + ε̃/2))`, the secrecy of the variable-length lift.
pub fn variable_lift_log2_secrecy(log2_g: f64, log2_eps_sec: f64, log2_eps_tilde: f64) -> f64 {
    log2_g + log2_add(0.5 * (3.0 + log2_eps_sec), log2_eps_tilde - 1.0)
}

fn lift_diagnostics(mode: &str, two_log_g: f64) -> KeyDiagnostics {
    KeyDiagnostics {
        b_stat: f64::NAN,
        leak: f64::NAN,
        theta: f64::NAN,
        renyi_correction: f64::NAN,
        two_log_g,
        mode: mode.to_string(),
    }
}

/// Fixed-length lift: `l′ = l − 2 log2 g`, secrecy `g(ε_PA + 2ε̄ + 2√(2ε_AT))`.
pub fn fixed_lift(l: f64, n: f64, block: &BlockSpec, budget: &SecurityBudget) -> Result<KeyLengthResult> {
    let x = effective_x(block);
    let (log2_g, _) = log2_g_for_penalty(n, x);
    let inner = log2_add(
        log2_add(budget.log2_eps_pa(), 1.0 + budget.log2_eps_bar()),
        1.0 + 0.5 * (1.0 + budget.log2_eps_at()),
    );
    let log2_sec = log2_g + inner;
    Ok(KeyLengthResult {
        length_bits: (l - 2.0 * log2_g).max(0.0),
        secrecy_eps: log2_sec.exp2(),
        log2_secrecy_eps: log2_sec,
        log2_g,
        x,
        diagnostics: lift_diagnostics("fixed", 2.0 * log2_g),
    })
}

/// Variable-length lift: `l′ = l − 2 log2 g − 2 log2(1/ε̃)` with the ε split of
/// [`epsilon_budget_log2`]; the achieved secrecy equals `eps_target`.
pub fn variable_lift(l_i: f64, n: f64, block: &BlockSpec, eps_target: f64) -> Result<KeyLengthResult> {
    if !(eps_target > 0.0 && eps_target < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "ε target {eps_target} must lie in (0,1)"
        )));
    }
    let x = effective_x(block);
    let (log2_g, _) = log2_g_for_penalty(n, x);
    Ok(variable_lift_with_log2_g(l_i, log2_g, x, eps_target))
}

pub fn variable_lift_with_log2_g(l_i: f64, log2_g: f64, x: u64, eps_target: f64) -> KeyLengthResult {
    let (log2_sec, log2_tilde) = epsilon_budget_log2(eps_target, log2_g);
    let penalty = 2.0 * log2_g - 2.0 * log2_tilde;
    let log2_secrecy = variable_lift_log2_secrecy(log2_g, log2_sec, log2_tilde);
    KeyLengthResult {
        length_bits: (l_i - penalty).max(0.0),
        secrecy_eps: log2_secrecy.exp2(),
        log2_secrecy_eps: log2_secrecy,
        log2_g,
        x,
        diagnostics: lift_diagnostics("variable", 2.0 * log2_g),
    }
}
