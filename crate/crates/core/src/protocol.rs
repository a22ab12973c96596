//! Time-bin three-state protocol: signals, source replacement, Bob's squashed
//! POVM, loss-only honest statistics and the key map.
//!
//! Bob's space is `C² ⊕ C ⊕ C⁸` ordered as `[q0, q1, vac, flag_0 .. flag_7]`,
//! with flag `k` belonging to outcome `k` of [`Outcome`].

use serde::Deserialize;

use crate::definetti::BlockSpec;
use crate::entropy::{ConstraintSet, JointTable, KeyMapSpec};
use crate::error::{Error, Result};
use crate::finite_size::build_constraint_set;
use crate::linalg::{c, kron, CMat, CVec, DensityOp, HermOp, KrausChannel, TraceKind};
use crate::squasher::{crossclick_lambda_min, flag_target_povm};

/// `R_s·d` in Hz·km for the sequential (one photon in flight) limit.
pub const SEQUENTIAL_RATE_KM_HZ: f64 = 1.5e5;

pub const D_A: usize = 3;
pub const D_B: usize = 11;
const D_LOW: usize = 3;
const VAC: usize = 2;

/// Coarse-grained detection outcomes; the cross-click is first so that it is
/// the distinguished outcome of the flag squasher.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Outcome {
    CrossClick = 0,
    NoClick = 1,
    Z0 = 2,
    Z1 = 3,
    X0 = 4,
    X1 = 5,
    X2 = 6,
    Other = 7,
}

impl Outcome {
    pub const ALL: [Outcome; 8] = [
        Outcome::CrossClick,
        Outcome::NoClick,
        Outcome::Z0,
        Outcome::Z1,
        Outcome::X0,
        Outcome::X1,
        Outcome::X2,
        Outcome::Other,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Outcome::CrossClick => "cross_click",
            Outcome::NoClick => "no_click",
            Outcome::Z0 => "z_bin_0",
            Outcome::Z1 => "z_bin_1",
            Outcome::X0 => "x_bin_0",
            Outcome::X1 => "x_bin_1",
            Outcome::X2 => "x_bin_2",
            Outcome::Other => "other",
        }
    }

    /// Public announcement class: no detection, Z click, X click, or neither.
    pub fn class(self) -> usize {
        match self {
            Outcome::NoClick => 0,
            Outcome::Z0 | Outcome::Z1 => 1,
            Outcome::X0 | Outcome::X1 | Outcome::X2 => 2,
            Outcome::CrossClick | Outcome::Other => 3,
        }
    }
}

pub const N_OUTCOMES: usize = 8;
pub const N_SIGNALS: usize = 3;

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThreeStateConfig {
    pub t: f64,
    pub p_z: f64,
    pub attenuation_db_per_km: f64,
    pub distance_km: f64,
    pub test_fraction: f64,
    pub duration_s: f64,
    pub source_rate_hz: f64,
    pub cutoff_photons: u32,
    pub detector_efficiency: f64,
    /// Fraction of surviving photons routed to the Z arm; `1 − t` when unset.
    pub z_arm_fraction: Option<f64>,
}

impl Default for ThreeStateConfig {
    fn default() -> Self {
        Self {
            t: 0.2,
            p_z: 0.8,
            attenuation_db_per_km: 0.16,
            distance_km: 0.0,
            test_fraction: 0.05,
            duration_s: 3600.0,
            source_rate_hz: 3e9,
            cutoff_photons: 1,
            detector_efficiency: 1.0,
            z_arm_fraction: None,
        }
    }
}

fn open_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} = {v} must lie in (0,1)")))
    }
}

impl ThreeStateConfig {
    pub fn validate(&self) -> Result<()> {
        open_unit("t", self.t)?;
        open_unit("p_z", self.p_z)?;
        open_unit("test_fraction", self.test_fraction)?;
        open_unit("z_arm_fraction", self.z_arm())?;
        if !(self.detector_efficiency > 0.0 && self.detector_efficiency <= 1.0) {
            return Err(Error::Config(format!(
                "detector_efficiency = {} must lie in (0,1]",
                self.detector_efficiency
            )));
        }
        if !(self.distance_km >= 0.0) || !self.distance_km.is_finite() {
            return Err(Error::Config(format!("distance_km = {} must be ≥ 0", self.distance_km)));
        }
        for (name, v) in [
            ("attenuation_db_per_km", self.attenuation_db_per_km),
            ("duration_s", self.duration_s),
            ("source_rate_hz", self.source_rate_hz),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} = {v} must be finite and ≥ 0")));
            }
        }
        if self.duration_s <= 0.0 || self.source_rate_hz <= 0.0 {
            return Err(Error::Config("duration_s and source_rate_hz must be positive".into()));
        }
        if self.cutoff_photons != 1 {
            return Err(Error::Config(format!(
                "cutoff_photons = {} is unsupported; only 1 is modelled",
                self.cutoff_photons
            )));
        }
        Ok(())
    }

    pub fn z_arm(&self) -> f64 {
        self.z_arm_fraction.unwrap_or(1.0 - self.t)
    }

    pub fn with_distance(&self, d: f64) -> Self {
        Self {
            distance_km: d,
            ..self.clone()
        }
    }

    /// Rounds without the sequential constraint, `source_rate·duration`.
    pub fn unconstrained_n(&self) -> f64 {
        self.source_rate_hz * self.duration_s
    }
}

fn basis(d: usize, i: usize) -> CVec {
    let mut v = CVec::zeros(d);
    v[i] = c(1.0);
    v
}

/// Signal vectors `|0⟩, |1⟩, |+⟩` on the time-bin qubit.
pub fn alice_vectors() -> [CVec; 3] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    [basis(2, 0), basis(2, 1), CVec::from_vec(vec![c(s), c(s)])]
}

/// Signal states and their probabilities `(p_z/2, p_z/2, 1 − p_z)`.
pub fn alice_states(cfg: &ThreeStateConfig) -> Result<(Vec<DensityOp>, [f64; 3])> {
    open_unit("p_z", cfg.p_z)?;
    let states = alice_vectors()
        .iter()
        .map(DensityOp::pure)
        .collect::<Result<Vec<_>>>()?;
    Ok((states, [cfg.p_z / 2.0, cfg.p_z / 2.0, 1.0 - cfg.p_z]))
}

/// Gram construction `σ̂_A[i,j] = √(p_i p_j)⟨φ_j|φ_i⟩` for pure signals.
pub fn source_marginal(states: &[DensityOp], probs: &[f64]) -> Result<DensityOp> {
    if states.len() != probs.len() {
        return Err(Error::Dimension(format!(
            "{} states for {} probabilities",
            states.len(),
            probs.len()
        )));
    }
    let vecs: Vec<CVec> = states.iter().map(pure_vector).collect::<Result<_>>()?;
    let n = vecs.len();
    let m = CMat::from_fn(n, n, |i, j| vecs[j].dotc(&vecs[i]) * c((probs[i] * probs[j]).sqrt()));
    DensityOp::state(m)
}

/// State vector of a pure density operator, phase fixed so that the first
/// sizable component is real and positive.
fn pure_vector(rho: &DensityOp) -> Result<CVec> {
    let e = rho.as_herm().eigh();
    let top = e.values.len() - 1;
    if (e.values[top] - rho.trace()).abs() > 1e-9 {
        return Err(Error::InvalidArgument("signal state is not pure".into()));
    }
    let mut v: CVec = e.vectors.column(top).into_owned();
    if let Some(k) = v.iter().position(|z| z.norm() > 1e-9) {
        let ph = v[k] / c(v[k].norm());
        v /= ph;
    }
    Ok(v * c(e.values[top].sqrt()))
}

/// `Σ_j √p_j |j⟩_A |φ_j⟩` on `A ⊗ C²`.
pub fn source_replacement_vector(probs: &[f64; 3]) -> CVec {
    let vecs = alice_vectors();
    let mut psi = CVec::zeros(D_A * 2);
    for (j, v) in vecs.iter().enumerate() {
        psi += basis(D_A, j).kronecker(v) * c(probs[j].sqrt());
    }
    psi
}

/// `η = 10^(−α d/10)`, times the detector efficiency.
pub fn channel_transmittance(cfg: &ThreeStateConfig) -> f64 {
    10f64.powf(-cfg.attenuation_db_per_km * cfg.distance_km / 10.0) * cfg.detector_efficiency
}

/// X-arm elements `[X0, X1, X2]` of a lossless Mach–Zehnder on the qubit.
pub fn mach_zehnder_elements() -> [CMat; 3] {
    let m = |a: f64, b: f64, d: f64| CMat::from_row_slice(2, 2, &[c(a), c(b), c(b), c(d)]);
    [m(0.5, -0.125, 0.25), m(0.25, 0.25, 0.25), m(0.25, -0.125, 0.5)]
}

/// Low-block (`[q0, q1, vac]`) parts of Bob's POVM in [`Outcome`] order.
fn low_elements(cfg: &ThreeStateConfig) -> Vec<HermOp> {
    let z = cfg.z_arm();
    let mut out = vec![CMat::zeros(D_LOW, D_LOW); N_OUTCOMES];
    out[Outcome::NoClick.index()][(VAC, VAC)] = c(1.0);
    out[Outcome::Z0.index()][(0, 0)] = c(z);
    out[Outcome::Z1.index()][(1, 1)] = c(z);
    for (k, xm) in mach_zehnder_elements().iter().enumerate() {
        let target = &mut out[Outcome::X0.index() + k];
        target.view_mut((0, 0), (2, 2)).copy_from(&(xm * c(1.0 - z)));
    }
    out.into_iter().map(HermOp::hermitize).collect()
}

/// Bob's squashed POVM on `C² ⊕ C(vac) ⊕ C⁸(flags)`, in [`Outcome`] order.
pub fn bob_squashed_povm(cfg: &ThreeStateConfig) -> Result<Vec<HermOp>> {
    if cfg.cutoff_photons != 1 {
        return Err(Error::Config(format!(
            "cutoff_photons = {} is unsupported; only 1 is modelled",
            cfg.cutoff_photons
        )));
    }
    let lam = crossclick_lambda_min(cfg.t, cfg.cutoff_photons)?;
    Ok(flag_target_povm(&low_elements(cfg), lam))
}

/// Blocks of Bob's space: the qubit, the vacuum and each flag.
pub fn bob_blocks() -> Vec<Vec<usize>> {
    let mut b = vec![vec![0, 1], vec![VAC]];
    b.extend((D_LOW..D_B).map(|i| vec![i]));
    b
}

/// One block of dimension 2 and nine of dimension 1 for Bob, Alice's
/// dimension-2 signal space.
pub fn protocol_block_spec() -> Result<BlockSpec> {
    BlockSpec::new(vec![(2, 1)], vec![(2, 1), (1, 9)])
}

/// Conditional outcome distributions `Pr(outcome | signal)` for each signal.
#[derive(Clone, Debug, PartialEq)]
pub struct HonestStats {
    pub probs: [f64; 3],
    pub conditional: [[f64; N_OUTCOMES]; N_SIGNALS],
    /// Joint `Pr(signal, outcome)` at index `signal·8 + outcome`.
    pub joint: Vec<f64>,
    /// `(Z, Y, C)` table with `Z` Alice's bit on kept rounds and 0 otherwise,
    /// `Y` Bob's outcome, `C` the pair (Alice basis, Bob class).
    pub kept_table: JointTable,
}

/// Whether `(signal, outcome)` contributes a key bit.
pub fn is_kept(signal: usize, outcome: Outcome) -> bool {
    signal < 2 && matches!(outcome, Outcome::Z0 | Outcome::Z1)
}

/// Closed-form loss-only statistics for single photons.
pub fn honest_stats(cfg: &ThreeStateConfig) -> Result<HonestStats> {
    cfg.validate()?;
    let (_, probs) = alice_states(cfg)?;
    let eta = channel_transmittance(cfg);
    let z = cfg.z_arm();
    // Pr(X_k | signal) for a photon in the X arm.
    let mz = [[0.5, 0.25, 0.25], [0.25, 0.25, 0.5], [0.25, 0.5, 0.25]];
    let mut conditional = [[0.0; N_OUTCOMES]; N_SIGNALS];
    for (j, row) in conditional.iter_mut().enumerate() {
        let (p0, p1) = match j {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            _ => (0.5, 0.5),
        };
        row[Outcome::NoClick.index()] = 1.0 - eta;
        row[Outcome::Z0.index()] = eta * z * p0;
        row[Outcome::Z1.index()] = eta * z * p1;
        for k in 0..3 {
            row[Outcome::X0.index() + k] = eta * (1.0 - z) * mz[j][k];
        }
    }
    let mut joint = vec![0.0; N_SIGNALS * N_OUTCOMES];
    let mut rows = Vec::new();
    for j in 0..N_SIGNALS {
        for o in Outcome::ALL {
            let p = probs[j] * conditional[j][o.index()];
            joint[j * N_OUTCOMES + o.index()] = p;
            let zbit = if is_kept(j, o) { j } else { 0 };
            let alice_basis = usize::from(j < 2);
            rows.push((zbit, o.index(), alice_basis * 4 + o.class(), p));
        }
    }
    Ok(HonestStats {
        probs,
        conditional,
        joint,
        kept_table: JointTable::new(&rows)?,
    })
}

/// Joint observables `|j⟩⟨j|_A ⊗ F_o` at index `j·8 + o`.
pub fn joint_observables(cfg: &ThreeStateConfig) -> Result<Vec<HermOp>> {
    let povm = bob_squashed_povm(cfg)?;
    let mut out = Vec::with_capacity(N_SIGNALS * N_OUTCOMES);
    for j in 0..N_SIGNALS {
        let pj = HermOp::outer(&basis(D_A, j));
        for f in &povm {
            out.push(pj.kron(f));
        }
    }
    Ok(out)
}

/// Loss channel from the qubit into Bob's space.
pub fn loss_channel(eta: f64) -> Result<KrausChannel> {
    let mut k0 = CMat::zeros(D_B, 2);
    k0[(0, 0)] = c(eta.sqrt());
    k0[(1, 1)] = c(eta.sqrt());
    let mut k1 = CMat::zeros(D_B, 2);
    k1[(VAC, 0)] = c((1.0 - eta).sqrt());
    let mut k2 = CMat::zeros(D_B, 2);
    k2[(VAC, 1)] = c((1.0 - eta).sqrt());
    KrausChannel::new(2, D_B, vec![k0, k1, k2], TraceKind::Preserving)
}

/// Source-replacement state sent through the loss channel, on `A ⊗ B`.
pub fn honest_state(cfg: &ThreeStateConfig) -> Result<DensityOp> {
    let (_, probs) = alice_states(cfg)?;
    let psi = source_replacement_vector(&probs);
    let rho = &psi * psi.adjoint();
    let ch = loss_channel(channel_transmittance(cfg))?;
    let mut out = CMat::zeros(D_A * D_B, D_A * D_B);
    let id_a = CMat::identity(D_A, D_A);
    for k in ch.kraus_ops() {
        let kk = kron(&id_a, k);
        out += &kk * &rho * kk.adjoint();
    }
    DensityOp::state(out)
}

/// Key map on `A ⊗ B`: the single Kraus operator
/// `K = Σ_z |z⟩_R ⊗ ⟨z|_A ⊗ √(F_Z0 + F_Z1)` onto `R ⊗ B`.
///
/// It keeps rounds where Alice sent a Z-basis signal and Bob's Z arm clicked,
/// with the key bit `z` in `R`. All other announcement branches fix `Z = 0`
/// and add nothing to `D(G(σ) ‖ Z(G(σ)))`, so they are omitted. Within the kept
/// branch the announcements are constant, and Bob's register stays coherent,
/// which leaves `H(Z|E)` of the branch unchanged.
pub fn keymap(cfg: &ThreeStateConfig) -> Result<KeyMapSpec> {
    let povm = bob_squashed_povm(cfg)?;
    let zc = povm[Outcome::Z0.index()].add(&povm[Outcome::Z1.index()]);
    let root = zc.map_spectrum(|v| v.max(0.0).sqrt()).into_matrix();
    let mut k = CMat::zeros(2 * D_B, D_A * D_B);
    for zbit in 0..2 {
        let r = basis(2, zbit);
        let a = basis(D_A, zbit);
        k += kron(&(&r * a.adjoint()), &root);
    }
    let g = KrausChannel::new(D_A * D_B, 2 * D_B, vec![k], TraceKind::NonIncreasing)?;
    let id_b = CMat::identity(D_B, D_B);
    let pin = (0..2)
        .map(|zbit| HermOp::hermitize(kron(&(HermOp::outer(&basis(2, zbit)).into_matrix()), &id_b)))
        .collect();
    KeyMapSpec::new(g, pin)
}

/// Sequential repetition-rate limit `n = R_s·T` with `R_s = 1.5·10⁵/d`.
///
/// Distance 0 imposes no limit and returns the unconstrained `n`; the result
/// never exceeds it.
pub fn sequential_n(cfg: &ThreeStateConfig) -> f64 {
    let free = cfg.unconstrained_n();
    if cfg.distance_km <= 0.0 {
        return free;
    }
    (SEQUENTIAL_RATE_KM_HZ / cfg.distance_km * cfg.duration_s).min(free)
}

/// Everything needed to evaluate the entropy bound at one distance.
#[derive(Clone, Debug)]
pub struct ThreeStateModel {
    pub cfg: ThreeStateConfig,
    pub marginal: DensityOp,
    pub observables: Vec<HermOp>,
    pub keymap: KeyMapSpec,
    pub stats: HonestStats,
}

impl ThreeStateModel {
    pub fn new(cfg: &ThreeStateConfig) -> Result<Self> {
        cfg.validate()?;
        let (states, probs) = alice_states(cfg)?;
        Ok(Self {
            cfg: cfg.clone(),
            marginal: source_marginal(&states, &probs)?,
            observables: joint_observables(cfg)?,
            keymap: keymap(cfg)?,
            stats: honest_stats(cfg)?,
        })
    }

    /// Hoeffding set around the honest statistics with Bob's block structure.
    pub fn constraint_set(&self, mu: f64) -> Result<ConstraintSet> {
        build_constraint_set(&self.stats.joint, mu, &self.observables, &self.marginal)?.with_b_blocks(bob_blocks())
    }
}
