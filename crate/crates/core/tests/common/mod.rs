//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use nalgebra::DVector;
use qkd_postselect::decoy::{DecoyObservations, IntensitySet};
use qkd_postselect::entropy::{ConstraintSet, KeyMapSpec};
use qkd_postselect::linalg::{c, kron, trace_prod_re, CMat, DensityOp, HermOp, KrausChannel, TraceKind, C64};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn h2(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }
}

/// Identity map on a qubit pair, key read off the first qubit.
pub fn bb84_keymap() -> KeyMapSpec {
    let g = KrausChannel::new(4, 4, vec![CMat::identity(4, 4)], TraceKind::Preserving).unwrap();
    let p0 = HermOp::from_real_diag(&[1.0, 1.0, 0.0, 0.0]);
    let p1 = HermOp::from_real_diag(&[0.0, 0.0, 1.0, 1.0]);
    KeyMapSpec::new(g, vec![p0, p1]).unwrap()
}

/// Bell-diagonal state with weights on Φ⁺, Φ⁻, Ψ⁺, Ψ⁻.
pub fn bell_diag(l: [f64; 4]) -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let vecs = [[s, 0.0, 0.0, s], [s, 0.0, 0.0, -s], [0.0, s, s, 0.0], [0.0, s, -s, 0.0]];
    let mut m = CMat::zeros(4, 4);
    for (v, w) in vecs.iter().zip(l) {
        let v = DVector::from_iterator(4, v.iter().map(|&x| c(x)));
        m += &v * v.adjoint() * c(w);
    }
    m
}

/// Bell state after independent bit and phase flips with probability `q`;
/// its key-map objective is exactly `1 − h(q)`.
pub fn flipped_bell(q: f64) -> CMat {
    bell_diag([(1.0 - q) * (1.0 - q), q * (1.0 - q), q * (1.0 - q), q * q])
}

/// Z-basis and X-basis error projectors on a qubit pair.
pub fn error_observables() -> (HermOp, HermOp) {
    let ez = HermOp::from_real_diag(&[0.0, 1.0, 1.0, 0.0]);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let hm = CMat::from_row_slice(2, 2, &[c(s), c(s), c(s), c(-s)]);
    let ex = ez.conjugate(&kron(&hm, &hm));
    (ez, ex)
}

pub fn random_state(rng: &mut ChaCha8Rng, d: usize, rank: usize) -> CMat {
    let g = CMat::from_fn(d, rank, |_, _| {
        C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    });
    let m = &g * g.adjoint();
    let tr: f64 = (0..d).map(|i| m[(i, i)].re).sum();
    m / c(tr)
}

pub fn random_herm(rng: &mut ChaCha8Rng, d: usize) -> CMat {
    let g = CMat::from_fn(d, d, |_, _| {
        C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    });
    (&g + g.adjoint()) * c(0.5)
}

/// `ρ_A` of a state on `C^{d_a} ⊗ C^{d_b}`, computed by explicit index sums.
pub fn marginal_a(sigma: &CMat, d_a: usize, d_b: usize) -> CMat {
    CMat::from_fn(d_a, d_a, |i, j| {
        (0..d_b).map(|k| sigma[(i * d_b + k, j * d_b + k)]).sum()
    })
}

fn psd_power(m: &CMat, p: f64) -> CMat {
    let e = m.clone().symmetric_eigen();
    let d = CMat::from_diagonal(&DVector::from_iterator(
        e.eigenvalues.len(),
        e.eigenvalues.iter().map(|&v| c(v.max(0.0).powf(p))),
    ));
    &e.eigenvectors * d * e.eigenvectors.adjoint()
}

/// Moves a full-rank `σ` onto the slice `Tr_B σ = target` with the
/// congruence `X = target^{1/2} ρ_A^{-1/2}`, which keeps it positive.
pub fn with_marginal(sigma: &CMat, target: &CMat, d_a: usize, d_b: usize) -> CMat {
    let ra = marginal_a(sigma, d_a, d_b);
    let x = psd_power(target, 0.5) * psd_power(&ra, -0.5);
    let xk = kron(&x, &CMat::identity(d_b, d_b));
    let out = &xk * sigma * xk.adjoint();
    (&out + out.adjoint()) * c(0.5)
}

/// Whether `σ` satisfies every interval of `cs` (the marginal is assumed
/// fixed by construction).
pub fn satisfies_intervals(sigma: &CMat, cs: &ConstraintSet, slack: f64) -> bool {
    cs.observables()
        .iter()
        .zip(cs.lower().iter().zip(cs.upper()))
        .all(|(o, (&lo, &hi))| {
            let v = trace_prod_re(o.matrix(), sigma);
            v >= lo - slack && v <= hi + slack
        })
}

pub fn bb84_set(q: f64, slack: f64, marginal: DensityOp) -> ConstraintSet {
    let (ez, ex) = error_observables();
    ConstraintSet::new(
        vec![ez, ex],
        vec![(q - slack).max(0.0), (q - slack).max(0.0)],
        vec![q + slack, q + slack],
        marginal,
    )
    .unwrap()
}

/// Poisson weight `e^{−μ} μ^m / m!` by direct recursion.
pub fn poisson(m: usize, mu: f64) -> f64 {
    let mut p = (-mu).exp();
    for k in 1..=m {
        p *= mu / k as f64;
    }
    p
}

/// A random photon-number channel: `yields[m][k][l] = p(l | k, m)`.
pub struct SyntheticChannel {
    pub yields: Vec<Vec<Vec<f64>>>,
}

pub const SYNTH_MAX_PHOTONS: usize = 60;

impl SyntheticChannel {
    pub fn random(rng: &mut ChaCha8Rng, n_signals: usize, n_outcomes: usize) -> Self {
        let yields = (0..=SYNTH_MAX_PHOTONS)
            .map(|_| {
                (0..n_signals)
                    .map(|_| {
                        let raw: Vec<f64> = (0..n_outcomes).map(|_| rng.random::<f64>() + 1e-3).collect();
                        let s: f64 = raw.iter().sum();
                        raw.iter().map(|v| v / s).collect()
                    })
                    .collect()
            })
            .collect();
        Self { yields }
    }

    /// Poisson-mixed statistics, laid out as `[k][μ][l]`.
    pub fn observe(&self, intensities: &[f64]) -> DecoyObservations {
        let n_sig = self.yields[0].len();
        let n_out = self.yields[0][0].len();
        let gamma = (0..n_sig)
            .map(|k| {
                intensities
                    .iter()
                    .map(|&mu| {
                        let mut row: Vec<f64> = (0..n_out)
                            .map(|l| {
                                (0..=SYNTH_MAX_PHOTONS)
                                    .map(|m| poisson(m, mu) * self.yields[m][k][l])
                                    .sum()
                            })
                            .collect();
                        let s: f64 = row.iter().sum();
                        row.iter_mut().for_each(|v| *v /= s);
                        row
                    })
                    .collect()
            })
            .collect();
        DecoyObservations::new(gamma).unwrap()
    }
}

pub fn random_intensities(rng: &mut ChaCha8Rng, count: usize) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(count);
    while out.len() < count {
        let v = 0.02 + 0.9 * rng.random::<f64>();
        if out.iter().all(|&w| (w - v).abs() > 0.05) {
            out.push(v);
        }
    }
    out
}

pub fn intensity_set(intensities: Vec<f64>, cutoff: u32) -> IntensitySet {
    IntensitySet::new(intensities, cutoff, 0).unwrap()
}
