//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

mod common;

use std::time::{Duration, Instant};

use common::*;
use nalgebra::DVector;
use qkd_postselect::decoy::{decoy_all_bounds, shield_block_spec, ShieldBlocks};
use qkd_postselect::definetti::{
    check_pure_domination, effective_x, haar_mean_power, log2_biguint, log2_sym_dim_upper, sym_dim, sym_projector,
    BlockSpec,
};
use qkd_postselect::entropy::{
    gradient, min_entropy_lower_bound, objective, ConstraintSet, EntropyOptions, KeyMapSpec,
};
use qkd_postselect::finite_size::{hoeffding_mu, SecurityBudget};
use qkd_postselect::linalg::{c, kron, ptrace, trace_prod_re, CMat, CVec, DensityOp, HermOp, C64};
use qkd_postselect::protocol::{protocol_block_spec, ThreeStateConfig, ThreeStateModel};
use qkd_postselect::squasher::{
    build_flag_squasher_saturated, crossclick_lambda_min, random_truncated_povm, verify_squash, FlagSquash,
};
use qkd_postselect::sweep::{run_sweep, Mode, SweepConfig};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    if elapsed <= limit {
        Ok(())
    } else {
        Err(format!("took {elapsed:?}, limit {limit:?}"))
    }
}

fn c1_effective_dimensions() -> Outcome {
    let t = Instant::now();
    let block = effective_x(&protocol_block_spec().map_err(|e| e.to_string())?);
    let generic = effective_x(&BlockSpec::single(2, 11).map_err(|e| e.to_string())?);
    let decoy = effective_x(
        &shield_block_spec(
            &ShieldBlocks {
                n_int: 3,
                cutoff_n: 8,
                d_a: 3,
            },
            vec![(2, 1), (1, 9)],
        )
        .map_err(|e| e.to_string())?,
    );
    let elapsed = t.elapsed();
    within(elapsed, Duration::from_millis(1))?;
    check(
        (block, generic, decoy) == (52, 484, 3510),
        format!("x = {block}, {generic}, {decoy} in {elapsed:?}"),
    )
}

fn c2_symmetric_subspace() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xA2);
    let mut worst_margin = f64::INFINITY;
    for i in 0..1000 {
        let n: u64 = rng.random_range(1..=1_000_000);
        let x: u64 = rng.random_range(2..=64);
        let exact = log2_biguint(&sym_dim(n, x));
        let upper = log2_sym_dim_upper(n as f64, x);
        worst_margin = worst_margin.min(upper - exact);
        if exact > upper + 1e-9 * upper.abs() {
            return Err(format!("sample {i}: n={n} x={x} log2 dim {exact} > bound {upper}"));
        }
        if sym_dim(n, x) != sym_dim(n - 1, x) + sym_dim(n, x - 1) {
            return Err(format!("Pascal identity fails at n={n} x={x}"));
        }
    }
    let elapsed = t.elapsed();
    within(elapsed, Duration::from_secs(1))?;
    Ok(format!(
        "1000 samples, smallest bound margin {worst_margin:.3e} bits, {elapsed:?}"
    ))
}

fn c3_squasher() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xA3);
    for trial in 0..50 {
        let n = rng.random_range(2..=6);
        let d_low = rng.random_range(1..=4);
        let d_tail = rng.random_range(1..=4);
        let g = random_truncated_povm(n, d_low, d_tail, rng.random());
        let fs = build_flag_squasher_saturated(&g).map_err(|e| format!("trial {trial}: {e}"))?;
        let r = verify_squash(&fs, &g, 1e-10);
        if !r.ok {
            return Err(format!("trial {trial}: verification failed {r:?}"));
        }
        // Tamper one element once in the flag block and once in the low block.
        let i = rng.random_range(0..n);
        for pos in [d_low, 0] {
            let mut target = fs.target_povm().to_vec();
            let mut m = target[i].clone().into_matrix();
            m[(pos, pos)] += c(1e-3);
            target[i] = HermOp::new(m).map_err(|e| e.to_string())?;
            let tampered = FlagSquash::from_parts(target, fs.channel().clone(), fs.c());
            if verify_squash(&tampered, &g, 1e-10).ok {
                return Err(format!("trial {trial}: tampering element {i} at {pos} went undetected"));
            }
        }
    }
    let elapsed = t.elapsed();
    within(elapsed, Duration::from_secs(10))?;
    Ok(format!("50 POVMs verified, 100 tamperings detected, {elapsed:?}"))
}

fn c4_crossclick() -> Outcome {
    let v = crossclick_lambda_min(0.2, 1).map_err(|e| e.to_string())?;
    check((v - 0.08).abs() <= 1e-12, format!("λ_min = {v:.15}"))
}

fn c5_de_finetti() -> Outcome {
    let t = Instant::now();
    // Π_sym on two qubits is (I + SWAP)/2.
    let mut swap = CMat::zeros(4, 4);
    for a in 0..2 {
        for b in 0..2 {
            swap[(a * 2 + b, b * 2 + a)] = c(1.0);
        }
    }
    let reference = (CMat::identity(4, 4) + swap) * c(0.5);
    let proj = sym_projector(2, 2).map_err(|e| e.to_string())?;
    let proj_err = (proj.matrix() - &reference).norm();
    if proj_err > 1e-12 {
        return Err(format!("sym_projector(2,2) differs from (I+SWAP)/2 by {proj_err:.3e}"));
    }
    let mean = haar_mean_power(2, 2, 100_000, 0xA5).map_err(|e| e.to_string())?;
    let dev = HermOp::hermitize(mean.matrix() - &reference * c(1.0 / 3.0)).op_norm();
    if dev > 5e-2 {
        return Err(format!("Haar average off by {dev:.3e} in operator norm"));
    }

    let s = std::f64::consts::FRAC_1_SQRT_2;
    let v = |xs: [f64; 4]| CVec::from_iterator(4, xs.iter().map(|&x| c(x)));
    let mut rng = ChaCha8Rng::seed_from_u64(0xA5);
    let phi = DVector::from_fn(2, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    let product = kron(
        &CMat::from_column_slice(2, 1, phi.as_slice()),
        &CMat::from_column_slice(2, 1, phi.as_slice()),
    );
    let symmetric = [
        v([1.0, 0.0, 0.0, 0.0]),
        v([0.0, 0.0, 0.0, 1.0]),
        v([0.0, s, s, 0.0]),
        CVec::from_column_slice(product.as_slice()),
    ];
    for (k, psi) in symmetric.iter().enumerate() {
        if !check_pure_domination(psi, 2, 2).map_err(|e| e.to_string())? {
            return Err(format!("symmetric state {k} rejected"));
        }
    }
    if check_pure_domination(&v([0.0, s, -s, 0.0]), 2, 2).map_err(|e| e.to_string())? {
        return Err("antisymmetric state accepted".into());
    }
    let elapsed = t.elapsed();
    within(elapsed, Duration::from_secs(30))?;
    Ok(format!(
        "Haar deviation {dev:.3e}, domination checks correct, {elapsed:?}"
    ))
}

fn c6_decoy() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xA6);
    let mut widest_violation = 0.0f64;
    let mut checked = 0;
    for trial in 0..50 {
        let cutoff: u32 = rng.random_range(0..=3);
        let chan = SyntheticChannel::random(&mut rng, 2, 3);
        let mus = random_intensities(&mut rng, 4);
        let set3 = intensity_set(mus[..3].to_vec(), cutoff);
        let set4 = intensity_set(mus.clone(), cutoff);
        let b3 = decoy_all_bounds(&chan.observe(&mus[..3]), &set3).map_err(|e| format!("trial {trial}: {e}"))?;
        let b4 = decoy_all_bounds(&chan.observe(&mus), &set4).map_err(|e| format!("trial {trial}: {e}"))?;
        for ((t3, y3), (t4, y4)) in b3.iter().zip(&b4) {
            assert_eq!(t3, t4);
            let truth = chan.yields[t3.photons as usize][t3.signal][t3.outcome];
            if truth < y3.lo - 1e-7 || truth > y3.hi + 1e-7 {
                return Err(format!(
                    "trial {trial}: {t3:?} true {truth} outside [{}, {}]",
                    y3.lo, y3.hi
                ));
            }
            let widen = (y3.lo - y4.lo).max(y4.hi - y3.hi);
            widest_violation = widest_violation.max(widen);
            if widen > 1e-7 {
                return Err(format!("trial {trial}: 4th intensity widened {t3:?} by {widen:.3e}"));
            }
            checked += 1;
        }
    }
    let elapsed = t.elapsed();
    within(elapsed, Duration::from_secs(60))?;
    Ok(format!(
        "{checked} targets bracketed, max widening {widest_violation:.1e}, {elapsed:?}"
    ))
}

struct SoundnessCase {
    name: &'static str,
    set: ConstraintSet,
    center: CMat,
}

fn soundness_cases() -> Vec<SoundnessCase> {
    let mixed = DensityOp::maximally_mixed(2);
    let skew = |p: f64| DensityOp::state(CMat::from_diagonal(&DVector::from_vec(vec![c(p), c(1.0 - p)]))).unwrap();
    let (ez, ex) = error_observables();
    let skewed_center = |p: f64| with_marginal(&flipped_bell(0.1), skew(p).matrix(), 2, 2);
    vec![
        SoundnessCase {
            name: "bb84 q=0.05",
            set: bb84_set(0.05, 0.03, mixed.clone()),
            center: flipped_bell(0.05),
        },
        SoundnessCase {
            name: "bb84 q=0.11",
            set: bb84_set(0.11, 0.05, mixed.clone()),
            center: flipped_bell(0.11),
        },
        SoundnessCase {
            name: "marginal only",
            set: ConstraintSet::marginal_only(mixed, 2).unwrap(),
            center: flipped_bell(0.0),
        },
        SoundnessCase {
            name: "skewed marginal, Z errors",
            set: ConstraintSet::new(vec![ez.clone()], vec![0.0], vec![0.2], skew(0.7)).unwrap(),
            center: skewed_center(0.7),
        },
        SoundnessCase {
            name: "skewed marginal, both errors",
            set: ConstraintSet::new(vec![ez, ex], vec![0.05, 0.05], vec![0.3, 0.3], skew(0.6)).unwrap(),
            center: skewed_center(0.6),
        },
    ]
}

fn c7_entropy_soundness() -> Outcome {
    let t = Instant::now();
    let km = bb84_keymap();
    let opts = EntropyOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0xA7);
    let mut worst = f64::NEG_INFINITY;
    let mut total = 0;
    for case in soundness_cases() {
        let bound = min_entropy_lower_bound(&case.set, &km, &opts).map_err(|e| format!("{}: {e}", case.name))?;
        let target = marginal_a(&case.center, 2, 2);
        let per_set = 2000;
        let mut accepted = 0;
        let mut attempts = 0;
        while accepted < per_set {
            attempts += 1;
            if attempts > 2_000_000 {
                return Err(format!("{}: rejection sampler found only {accepted} states", case.name));
            }
            let rank = rng.random_range(1..=4);
            // Half the samples cluster around the solver's near-optimal state.
            let (center, w) = if accepted % 2 == 0 {
                (&case.center, rng.random::<f64>())
            } else {
                (bound.argument.matrix(), 0.05 * rng.random::<f64>())
            };
            let raw = center * c(1.0 - w) + random_state(&mut rng, 4, rank) * c(w);
            let sigma = with_marginal(&raw, &target, 2, 2);
            if !satisfies_intervals(&sigma, &case.set, 0.0) {
                continue;
            }
            accepted += 1;
            let state = DensityOp::state(sigma).map_err(|e| e.to_string())?;
            let f = objective(&state, &km).map_err(|e| e.to_string())?.bits;
            worst = worst.max(bound.lower_bound - f);
            if bound.lower_bound > f + 1e-9 {
                return Err(format!(
                    "{}: bound {} exceeds objective {f}",
                    case.name, bound.lower_bound
                ));
            }
        }
        total += accepted;
    }

    // A set pinned by a tomographically complete family contains one state.
    let sigma = random_state(&mut rng, 4, 4);
    let paulis = [
        CMat::identity(2, 2),
        CMat::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)]),
        CMat::from_row_slice(2, 2, &[c(0.0), C64::new(0.0, -1.0), C64::new(0.0, 1.0), c(0.0)]),
        CMat::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)]),
    ];
    let mut obs = Vec::new();
    for pa in &paulis {
        for pb in &paulis[1..] {
            obs.push(HermOp::hermitize(kron(pa, pb)));
        }
    }
    let vals: Vec<f64> = obs.iter().map(|o| trace_prod_re(o.matrix(), &sigma)).collect();
    let rho_a = ptrace(&HermOp::hermitize(sigma.clone()), &[2, 2], &[0]).map_err(|e| e.to_string())?;
    let single = ConstraintSet::new(obs, vals.clone(), vals, DensityOp::state(rho_a.into_matrix()).unwrap())
        .map_err(|e| e.to_string())?;
    let b = min_entropy_lower_bound(&single, &km, &opts).map_err(|e| e.to_string())?;
    let truth = objective(&DensityOp::state(sigma).unwrap(), &km)
        .map_err(|e| e.to_string())?
        .bits;
    if (b.lower_bound - truth).abs() > 1e-6 {
        return Err(format!("singleton set: bound {} vs objective {truth}", b.lower_bound));
    }

    let mut bb84 = Vec::new();
    for q in [0.05, 0.11] {
        let b = min_entropy_lower_bound(&bb84_set(q, 0.0, DensityOp::maximally_mixed(2)), &km, &opts)
            .map_err(|e| e.to_string())?;
        let target = 1.0 - h2(q);
        if b.lower_bound > target + 1e-9 || target - b.lower_bound > 1e-3 {
            return Err(format!("BB84 q={q}: bound {} vs 1-h(Q) = {target}", b.lower_bound));
        }
        bb84.push(target - b.lower_bound);
    }
    let elapsed = t.elapsed();
    within(elapsed, Duration::from_secs(300))?;
    Ok(format!(
        "{total} feasible states, max (bound - objective) {worst:.3e}; singleton gap {:.1e}; BB84 gaps {:.1e}, {:.1e}; {elapsed:?}",
        (b.lower_bound - truth).abs(),
        bb84[0],
        bb84[1]
    ))
}

fn fd_check(sigma: &CMat, km: &KeyMapSpec, rng: &mut ChaCha8Rng, dirs: usize) -> Result<f64, String> {
    let d = sigma.nrows();
    let state = DensityOp::state(sigma.clone()).map_err(|e| e.to_string())?;
    let grad = gradient(&state, km).map_err(|e| e.to_string())?;
    let lam_min = HermOp::hermitize(sigma.clone()).min_eigenvalue();
    let mut worst = 0.0f64;
    for _ in 0..dirs {
        let mut dir = random_herm(rng, d);
        let tr: C64 = (0..d).map(|i| dir[(i, i)]).sum();
        dir -= CMat::identity(d, d) * (tr / c(d as f64));
        dir /= c(HermOp::hermitize(dir.clone()).op_norm());
        let h = 1e-4 * lam_min;
        let f = |s: f64| {
            let m = sigma + &dir * c(s);
            objective(&DensityOp::state(HermOp::hermitize(m).into_matrix()).unwrap(), km)
                .unwrap()
                .bits
        };
        // Fourth-order central difference.
        let fd = (-f(2.0 * h) + 8.0 * f(h) - 8.0 * f(-h) + f(-2.0 * h)) / (12.0 * h);
        let an = trace_prod_re(grad.matrix(), &dir);
        let rel = (fd - an).abs() / an.abs().max(1e-2);
        worst = worst.max(rel);
    }
    Ok(worst)
}

fn c8_gradient() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xA8);
    let sigma = random_state(&mut rng, 4, 4);
    let w1 = fd_check(&sigma, &bb84_keymap(), &mut rng, 10)?;
    let model = ThreeStateModel::new(&ThreeStateConfig::default()).map_err(|e| e.to_string())?;
    let sigma = random_state(&mut rng, 33, 33);
    let w2 = fd_check(&sigma, &model.keymap, &mut rng, 10)?;
    let worst = w1.max(w2);
    let elapsed = t.elapsed();
    within(elapsed, Duration::from_secs(10))?;
    check(
        worst <= 1e-5,
        format!("20 directions, worst relative error {worst:.2e}, {elapsed:?}"),
    )
}

fn log2_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (1.0 + (lo - hi).exp2()).log2()
}

fn c9_budget() -> Outcome {
    let eps = 1e-12f64;
    let mut worst = 0.0f64;
    for log2_g in [0.0, 10.0, 100.0, 1e4] {
        let b = SecurityBudget::postselected(eps, eps, log2_g).map_err(|e| e.to_string())?;
        let tilde = b.log2_eps_tilde().ok_or("postselected budget has no ε̃")?;
        let sqrt_term = 0.5 * (3.0 + b.log2_eps_sec());
        let lhs = log2_g + log2_add(sqrt_term, tilde - 1.0);
        let rhs = eps.log2();
        let rel = ((lhs - rhs) / rhs).abs();
        worst = worst.max(rel);
        if rel > 1e-12 {
            return Err(format!("log2_g = {log2_g}: {lhs} vs {rhs}"));
        }
    }
    Ok(format!("worst relative log-domain deviation {worst:.2e}"))
}

fn c10_hoeffding() -> Outcome {
    let t = Instant::now();
    let eps = 0.05;
    let probs = [0.22, 0.18, 0.15, 0.15, 0.1, 0.1, 0.06, 0.04];
    let m = 1000u64;
    let mu = hoeffding_mu(m, probs.len(), eps);
    let dist = WeightedIndex::new(probs).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(0xAA);
    let trials = 10_000;
    let mut covered = 0;
    for _ in 0..trials {
        let mut counts = [0u64; 8];
        for _ in 0..m {
            counts[dist.sample(&mut rng)] += 1;
        }
        if counts
            .iter()
            .zip(&probs)
            .all(|(&k, &p)| (k as f64 / m as f64 - p).abs() <= mu)
        {
            covered += 1;
        }
    }
    let freq = covered as f64 / trials as f64;
    let sigma = (eps * (1.0 - eps) / trials as f64).sqrt();
    let floor = 1.0 - eps - 3.0 * sigma;
    let elapsed = t.elapsed();
    within(elapsed, Duration::from_secs(30))?;
    check(
        freq >= floor,
        format!("coverage {freq:.4} ≥ {floor:.4} (μ = {mu:.4}), {elapsed:?}"),
    )
}

fn c11_sweep() -> Outcome {
    let t = Instant::now();
    let cfg = SweepConfig::default();
    let p = &cfg.protocol;
    if p.t != 0.2
        || p.p_z != 0.8
        || p.test_fraction != 0.05
        || cfg.eps_target_sec != 1e-12
        || cfg.eps_target_cor != 1e-12
    {
        return Err("default configuration does not carry the reference parameters".into());
    }
    let rows = run_sweep(&cfg).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    within(elapsed, Duration::from_secs(15 * 60))?;
    if let Some(r) = rows.iter().find(|r| r.status != "ok") {
        return Err(format!(
            "{} at {} km failed: {}",
            r.mode.as_str(),
            r.distance_km,
            r.status
        ));
    }
    let rate = |mode: Mode, d: f64| {
        rows.iter()
            .find(|r| r.mode == mode && r.distance_km == d)
            .map(|r| r.key_rate_per_second)
            .expect("row present")
    };
    if let Some(r) = rows
        .iter()
        .find(|r| r.mode != Mode::SequentialIid && r.n_used != 1.08e13)
    {
        return Err(format!("{} uses n = {}", r.mode.as_str(), r.n_used));
    }
    // (a)
    let (iid0, ps0) = (rate(Mode::Iid, 0.0), rate(Mode::PsBlock, 0.0));
    if !(iid0 > 0.0 && ps0 > 0.0) {
        return Err(format!("(a) rates at 0 km: iid {iid0}, ps_block {ps0}"));
    }
    // (b)
    let chain = [Mode::Iid, Mode::PsBlock, Mode::PsGeneric, Mode::PsDecoy];
    for &d in &cfg.distances_km {
        for w in chain.windows(2) {
            if rate(w[0], d) < rate(w[1], d) {
                return Err(format!("(b) at {d} km {} < {}", w[0].as_str(), w[1].as_str()));
            }
        }
    }
    // (c), with the solver tolerance of 1e-6 bits/round converted to a rate.
    for mode in Mode::ALL {
        let series: Vec<_> = rows.iter().filter(|r| r.mode == mode).collect();
        for w in series.windows(2) {
            let tol = 1e-6 * w[1].n_used / cfg.protocol.duration_s;
            if w[1].key_rate_per_second > w[0].key_rate_per_second + tol {
                return Err(format!(
                    "(c) {} rises from {} to {} between {} and {} km",
                    mode.as_str(),
                    w[0].key_rate_per_second,
                    w[1].key_rate_per_second,
                    w[0].distance_km,
                    w[1].distance_km
                ));
            }
        }
    }
    // (d)
    let last_positive = rows
        .iter()
        .filter(|r| r.mode == Mode::SequentialIid && r.key_length_bits > 0.0)
        .map(|r| r.distance_km)
        .fold(f64::NEG_INFINITY, f64::max);
    if let Some(r) = rows
        .iter()
        .find(|r| r.mode == Mode::SequentialIid && r.distance_km >= 35.0 && r.key_length_bits > 0.0)
    {
        return Err(format!("(d) sequential_iid yields key at {} km", r.distance_km));
    }
    Ok(format!(
        "{} rows; 0 km rates iid {iid0:.3e}/s, ps_block {ps0:.3e}/s; last sequential key at {last_positive} km; {elapsed:?}",
        rows.len()
    ))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("effective dimensions 52/484/3510", c1_effective_dimensions),
        ("symmetric-subspace bound and Pascal identity", c2_symmetric_subspace),
        ("flag-squasher soundness and tamper detection", c3_squasher),
        ("cross-click minimum eigenvalue", c4_crossclick),
        ("Haar average and pure-state domination", c5_de_finetti),
        ("decoy bracket and intensity monotonicity", c6_decoy),
        ("entropy lower-bound soundness", c7_entropy_soundness),
        ("gradient against finite differences", c8_gradient),
        ("epsilon budget round trip", c9_budget),
        ("Hoeffding coverage", c10_hoeffding),
        ("end-to-end sweep properties", c11_sweep),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let result = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("PASS criterion {:>2}: {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {:>2}: {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
