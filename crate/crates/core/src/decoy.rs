//! Tagged sources, Poisson statistics and decoy-state yield bounds.

use std::path::Path;

use crate::definetti::BlockSpec;
use crate::error::{Error, Result};
use crate::linalg::{c, max_abs, CMat, DensityOp, Normalization, PSD_TOL};
use crate::lp::{lp_solve, LpProblem, LpStatus};

/// Poisson probability `e^{−μ} μ^m / m!`, evaluated in the log domain.
pub fn poisson_pmf(m: u32, mu: f64) -> f64 {
    if mu == 0.0 {
        return if m == 0 { 1.0 } else { 0.0 };
    }
    let ln_fact: f64 = (2..=m).map(|k| (k as f64).ln()).sum();
    (-mu + m as f64 * mu.ln() - ln_fact).exp()
}

/// `Σ_{m ≤ N} p(m|μ)`.
pub fn poisson_cdf(n: u32, mu: f64) -> f64 {
    (0..=n).map(|m| poisson_pmf(m, mu)).sum()
}

/// Decoy intensities and the photon-number cutoff.
#[derive(Clone, Debug, PartialEq)]
pub struct IntensitySet {
    intensities: Vec<f64>,
    cutoff_n: u32,
    signal_intensity: usize,
}

impl IntensitySet {
    pub fn new(intensities: Vec<f64>, cutoff_n: u32, signal_intensity: usize) -> Result<Self> {
        if intensities.is_empty() || signal_intensity >= intensities.len() {
            return Err(Error::InvalidArgument(
                "need a nonempty intensity list with a valid signal index".into(),
            ));
        }
        for (i, &a) in intensities.iter().enumerate() {
            if !(a.is_finite() && a >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "intensity {a} must be finite and nonnegative"
                )));
            }
            if intensities[..i].contains(&a) {
                return Err(Error::InvalidArgument(format!("intensity {a} listed twice")));
            }
        }
        Ok(Self {
            intensities,
            cutoff_n,
            signal_intensity,
        })
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    pub fn cutoff(&self) -> u32 {
        self.cutoff_n
    }

    pub fn signal_intensity(&self) -> usize {
        self.signal_intensity
    }

    pub fn len(&self) -> usize {
        self.intensities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intensities.is_empty()
    }
}

/// Observed conditional frequencies `γ_{l|k,μ}`, stored as `[k][μ][l]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoyObservations {
    n_outcomes: usize,
    gamma: Vec<Vec<Vec<f64>>>,
}

impl DecoyObservations {
    pub fn new(gamma: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let n_outcomes = gamma.first().and_then(|k| k.first()).map(Vec::len).unwrap_or(0);
        let n_int = gamma.first().map(Vec::len).unwrap_or(0);
        if n_outcomes == 0 || n_int == 0 {
            return Err(Error::InvalidArgument("empty decoy observations".into()));
        }
        for per_k in &gamma {
            if per_k.len() != n_int {
                return Err(Error::Dimension("ragged intensity dimension".into()));
            }
            for row in per_k {
                if row.len() != n_outcomes {
                    return Err(Error::Dimension("ragged outcome dimension".into()));
                }
                if row.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                    return Err(Error::InvalidArgument("frequencies must lie in [0,1]".into()));
                }
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > 1e-9 {
                    return Err(Error::NotNormalized {
                        trace: s,
                        expected: 1.0,
                    });
                }
            }
        }
        Ok(Self { n_outcomes, gamma })
    }

    pub fn n_outcomes(&self) -> usize {
        self.n_outcomes
    }

    pub fn n_signals(&self) -> usize {
        self.gamma.len()
    }

    pub fn n_intensities(&self) -> usize {
        self.gamma[0].len()
    }

    pub fn get(&self, outcome: usize, signal: usize, intensity: usize) -> f64 {
        self.gamma[signal][intensity][outcome]
    }

    /// Reads rows `outcome,signal,intensity,frequency` (with header).
    ///
    /// Intensities are matched against `set` by value; missing entries are an error.
    pub fn from_csv(path: &Path, set: &IntensitySet) -> Result<Self> {
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(csv_err)?;
        let mut entries = Vec::new();
        for rec in reader.deserialize::<(usize, usize, f64, f64)>() {
            entries.push(rec.map_err(csv_err)?);
        }
        let n_out = entries.iter().map(|e| e.0 + 1).max().unwrap_or(0);
        let n_sig = entries.iter().map(|e| e.1 + 1).max().unwrap_or(0);
        let mut gamma = vec![vec![vec![f64::NAN; n_out]; set.len()]; n_sig];
        for (l, k, mu, f) in entries {
            let idx = set
                .intensities
                .iter()
                .position(|&a| (a - mu).abs() <= 1e-12 * a.abs().max(1.0))
                .ok_or_else(|| Error::Config(format!("intensity {mu} not in the configured set")))?;
            gamma[k][idx][l] = f;
        }
        if gamma.iter().flatten().flatten().any(|v| v.is_nan()) {
            return Err(Error::Config("observation table is incomplete".into()));
        }
        Self::new(gamma)
    }
}

/// Bounds on a single detection probability.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct YieldBounds {
    pub lo: f64,
    pub hi: f64,
}

/// Identifies `p(det_j | i, m)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct YieldTarget {
    pub outcome: usize,
    pub signal: usize,
    pub photons: u32,
}

/// Tagged state `Σ_{m≤N} p(m|μ) V_i|m⟩⟨m|V_i† ⊕ (1 − Σ p) |i,μ⟩⟨i,μ|`.
///
/// Each encoding `V_i` maps the truncated Fock space `C^{N+1}` isometrically
/// into a common signal space; the tag register has one state per
/// (signal, intensity) pair, indexed `i·n_intensities + μ_index`.
pub fn tagged_state(
    signal: usize,
    intensity_index: usize,
    set: &IntensitySet,
    encodings: &[CMat],
) -> Result<DensityOp> {
    let n = set.cutoff_n as usize;
    let v = encodings
        .get(signal)
        .ok_or_else(|| Error::InvalidArgument(format!("no encoding for signal {signal}")))?;
    let mu = *set
        .intensities
        .get(intensity_index)
        .ok_or_else(|| Error::InvalidArgument(format!("no intensity {intensity_index}")))?;
    let d_sig = v.nrows();
    for e in encodings {
        if e.ncols() != n + 1 || e.nrows() != d_sig {
            return Err(Error::Dimension(format!(
                "encodings must be {}x{}, got {}x{}",
                d_sig,
                n + 1,
                e.nrows(),
                e.ncols()
            )));
        }
        let dev = max_abs(&(e.adjoint() * e - CMat::identity(n + 1, n + 1)));
        if dev > PSD_TOL {
            return Err(Error::InvalidArgument(format!(
                "encoding is not an isometry (deviation {dev:.3e})"
            )));
        }
    }
    let n_tags = encodings.len() * set.len();
    let dim = d_sig + n_tags;
    let mut m = CMat::zeros(dim, dim);
    let mut kept = 0.0;
    for photons in 0..=n {
        let p = poisson_pmf(photons as u32, mu);
        kept += p;
        let col = v.column(photons);
        let block = col * col.adjoint() * c(p);
        let mut view = m.view_mut((0, 0), (d_sig, d_sig));
        view += block;
    }
    let tag = d_sig + signal * set.len() + intensity_index;
    m[(tag, tag)] = c((1.0 - kept).max(0.0));
    DensityOp::new(m, Normalization::State)
}

struct DecoyLp {
    problem: LpProblem,
    n_out: usize,
    n_photon: usize,
}

impl DecoyLp {
    fn y_index(&self, l: usize, k: usize, m: usize) -> usize {
        (k * self.n_out + l) * self.n_photon + m
    }
}

fn build_decoy_lp(obs: &DecoyObservations, set: &IntensitySet) -> Result<DecoyLp> {
    if obs.n_intensities() != set.len() {
        return Err(Error::Dimension(format!(
            "observations cover {} intensities, set has {}",
            obs.n_intensities(),
            set.len()
        )));
    }
    let n_out = obs.n_outcomes();
    let n_sig = obs.n_signals();
    let n_int = set.len();
    let n_photon = set.cutoff_n as usize + 1;
    let n_y = n_sig * n_out * n_photon;
    let n_t = n_sig * n_out * n_int;
    let n_vars = n_y + n_t;
    let y_idx = |l: usize, k: usize, m: usize| (k * n_out + l) * n_photon + m;
    let t_idx = |l: usize, k: usize, u: usize| n_y + (k * n_out + l) * n_int + u;

    let mut a_eq = Vec::new();
    let mut b_eq = Vec::new();
    for k in 0..n_sig {
        for (u, &mu) in set.intensities.iter().enumerate() {
            let probs: Vec<f64> = (0..n_photon).map(|m| poisson_pmf(m as u32, mu)).collect();
            let tail = (1.0 - probs.iter().sum::<f64>()).max(0.0);
            for l in 0..n_out {
                let mut row = vec![0.0; n_vars];
                for (m, &p) in probs.iter().enumerate() {
                    row[y_idx(l, k, m)] = p;
                }
                row[t_idx(l, k, u)] = tail;
                a_eq.push(row);
                b_eq.push(obs.get(l, k, u));
            }
        }
    }
    // Outcome completeness for every photon number and every tag.
    for k in 0..n_sig {
        for m in 0..n_photon {
            let mut row = vec![0.0; n_vars];
            for l in 0..n_out {
                row[y_idx(l, k, m)] = 1.0;
            }
            a_eq.push(row);
            b_eq.push(1.0);
        }
        for u in 0..n_int {
            let mut row = vec![0.0; n_vars];
            for l in 0..n_out {
                row[t_idx(l, k, u)] = 1.0;
            }
            a_eq.push(row);
            b_eq.push(1.0);
        }
    }
    Ok(DecoyLp {
        problem: LpProblem {
            c: vec![0.0; n_vars],
            a_eq,
            b_eq,
            lo: vec![0.0; n_vars],
            hi: vec![1.0; n_vars],
        },
        n_out,
        n_photon,
    })
}

/// Minimum and maximum of `p(det_j | i, m)` consistent with the observations.
pub fn decoy_lp_bounds(obs: &DecoyObservations, set: &IntensitySet, target: YieldTarget) -> Result<YieldBounds> {
    let lp = build_decoy_lp(obs, set)?;
    decoy_bounds_with(&lp, obs, target)
}

/// Bounds for every `(outcome, signal, m ≤ N)` target, in that nesting order.
pub fn decoy_all_bounds(obs: &DecoyObservations, set: &IntensitySet) -> Result<Vec<(YieldTarget, YieldBounds)>> {
    let lp = build_decoy_lp(obs, set)?;
    let mut out = Vec::new();
    for outcome in 0..obs.n_outcomes() {
        for signal in 0..obs.n_signals() {
            for photons in 0..=set.cutoff_n {
                let target = YieldTarget {
                    outcome,
                    signal,
                    photons,
                };
                out.push((target, decoy_bounds_with(&lp, obs, target)?));
            }
        }
    }
    Ok(out)
}

fn decoy_bounds_with(lp: &DecoyLp, obs: &DecoyObservations, target: YieldTarget) -> Result<YieldBounds> {
    if target.outcome >= obs.n_outcomes() || target.signal >= obs.n_signals() || target.photons as usize >= lp.n_photon
    {
        return Err(Error::InvalidArgument(format!("target {target:?} out of range")));
    }
    let j = lp.y_index(target.outcome, target.signal, target.photons as usize);
    let mut prob = lp.problem.clone();
    let solve = |prob: &LpProblem| -> Result<f64> {
        let s = lp_solve(prob);
        match s.status {
            LpStatus::Optimal => Ok(s.value),
            LpStatus::Infeasible => Err(Error::Infeasible(
                "decoy observations are inconsistent with any channel".into(),
            )),
            other => Err(Error::Numerical(format!("decoy LP ended with {other:?}"))),
        }
    };
    prob.c[j] = 1.0;
    let lo = solve(&prob)?;
    prob.c[j] = -1.0;
    let hi = -solve(&prob)?;
    let lo = lo.clamp(0.0, 1.0);
    let hi = hi.clamp(lo, 1.0);
    Ok(YieldBounds { lo, hi })
}

/// Block structure of the tagged source with shield systems.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ShieldBlocks {
    pub n_int: usize,
    pub cutoff_n: usize,
    pub d_a: usize,
}

/// Alice side: `n_int·(N+2)` blocks of dimension `d_a`; Bob side as given.
pub fn shield_block_spec(sb: &ShieldBlocks, side_b: Vec<(usize, usize)>) -> Result<BlockSpec> {
    BlockSpec::new(vec![(sb.d_a, sb.n_int * (sb.cutoff_n + 2))], side_b)
}
