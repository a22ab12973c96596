//! Symmetric-subspace dimensions and effective-dimension bookkeeping.

use num_bigint::BigUint;
use num_traits::One;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{c, CMat, CVec, HermOp, C64};

/// Block structure of the two parties: `(block_dim, count)` pairs per side.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockSpec {
    pub side_a: Vec<(usize, usize)>,
    pub side_b: Vec<(usize, usize)>,
}

impl BlockSpec {
    pub fn new(side_a: Vec<(usize, usize)>, side_b: Vec<(usize, usize)>) -> Result<Self> {
        for &(d, m) in side_a.iter().chain(&side_b) {
            if d == 0 || m == 0 {
                return Err(Error::InvalidArgument(
                    "block dimensions and counts must be positive".into(),
                ));
            }
        }
        if side_a.is_empty() || side_b.is_empty() {
            return Err(Error::InvalidArgument("each side needs at least one block".into()));
        }
        Ok(Self { side_a, side_b })
    }

    /// One block per side.
    pub fn single(d_a: usize, d_b: usize) -> Result<Self> {
        Self::new(vec![(d_a, 1)], vec![(d_b, 1)])
    }

    pub fn total_dim_a(&self) -> usize {
        self.side_a.iter().map(|(d, m)| d * m).sum()
    }

    pub fn total_dim_b(&self) -> usize {
        self.side_b.iter().map(|(d, m)| d * m).sum()
    }
}

/// Exact and log-domain values of `g_{n,x}`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymDimResult {
    pub n: u64,
    pub x: u64,
    pub g_exact: BigUint,
    pub log2_g: f64,
    pub log2_g_upper: f64,
}

/// `C(n + x − 1, n)`, the dimension of the symmetric subspace of `(C^x)^{⊗n}`.
pub fn sym_dim(n: u64, x: u64) -> BigUint {
    assert!(x >= 1, "x must be positive");
    let k = n.min(x - 1);
    let top = n + x - 1;
    let mut acc = BigUint::one();
    // C(top, k) = Π_{i=1..k} (top − k + i) / i, exact at every step.
    for i in 1..=k {
        acc *= BigUint::from(top - k + i);
        acc /= BigUint::from(i);
    }
    acc
}

/// Closed-form bound `(x−1)·log2(e(n+x−1)/(x−1))`; zero for `x = 1`.
pub fn log2_sym_dim_upper(n: f64, x: u64) -> f64 {
    if x <= 1 {
        return 0.0;
    }
    let xm = (x - 1) as f64;
    xm * (std::f64::consts::E * (n + xm) / xm).log2()
}

/// `log2 C(n+x−1, n)` by summing `log2(1 + n/k)` for `k = 1..x−1`.
///
/// Works for `n` far beyond integer range since only `x − 1` terms appear.
pub fn log2_sym_dim(n: f64, x: u64) -> f64 {
    if x <= 1 || n <= 0.0 {
        return 0.0;
    }
    (1..x).map(|k| (n / k as f64).ln_1p()).sum::<f64>() / std::f64::consts::LN_2
}

/// How `log2 g` was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Log2GMethod {
    /// Log-domain evaluation of the exact binomial.
    Exact,
    /// Closed-form upper bound.
    UpperBound,
}

impl Log2GMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            Log2GMethod::Exact => "exact",
            Log2GMethod::UpperBound => "upper_bound",
        }
    }
}

/// Largest `x` for which the exact log-domain sum is used.
pub const EXACT_X_LIMIT: u64 = 1_000_000;

/// `log2 g_{n,x}` for penalty terms together with the method used.
pub fn log2_g_for_penalty(n: f64, x: u64) -> (f64, Log2GMethod) {
    if x <= EXACT_X_LIMIT {
        (log2_sym_dim(n, x), Log2GMethod::Exact)
    } else {
        (log2_sym_dim_upper(n, x), Log2GMethod::UpperBound)
    }
}

/// Bundles exact, log-domain and bound values for moderate `n`.
pub fn sym_dim_result(n: u64, x: u64) -> SymDimResult {
    let g = sym_dim(n, x);
    SymDimResult {
        n,
        x,
        log2_g: log2_biguint(&g),
        log2_g_upper: log2_sym_dim_upper(n as f64, x),
        g_exact: g,
    }
}

/// `log2` of a big integer, accurate for values far beyond `f64` range.
pub fn log2_biguint(v: &BigUint) -> f64 {
    let bits = v.bits();
    if bits == 0 {
        return f64::NEG_INFINITY;
    }
    if bits <= 1000 {
        let f: f64 = v.to_string().parse().unwrap_or(f64::INFINITY);
        if f.is_finite() {
            return f.log2();
        }
    }
    let shift = bits - 64;
    let top = (v >> shift).to_u64_digits();
    let mantissa = top.first().copied().unwrap_or(0) as f64;
    mantissa.log2() + shift as f64
}

/// `Σ_{a,b} count_a·count_b·dim_a²·dim_b²`.
pub fn effective_x(spec: &BlockSpec) -> u64 {
    let a: u64 = spec.side_a.iter().map(|&(d, m)| (m * d * d) as u64).sum();
    let b: u64 = spec.side_b.iter().map(|&(d, m)| (m * d * d) as u64).sum();
    a * b
}

/// Largest `d^n` accepted by [`sym_projector`] and [`check_pure_domination`].
pub const SYM_MAX_DIM: usize = 64;

fn tensor_dim(n: usize, d: usize) -> Option<usize> {
    d.checked_pow(n as u32)
}

/// Orthogonal projector onto `Sym^n(C^d)`.
///
/// Built as the average over all permutations of the tensor factors.
pub fn sym_projector(n: usize, d: usize) -> Result<HermOp> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument("n and d must be positive".into()));
    }
    let dim = match tensor_dim(n, d) {
        Some(v) if v <= SYM_MAX_DIM => v,
        _ => return Err(Error::SizeLimit(format!("d^n = {d}^{n} exceeds {SYM_MAX_DIM}"))),
    };
    let perms = permutations(n);
    let mut p = CMat::zeros(dim, dim);
    let mut digits = vec![0usize; n];
    for col in 0..dim {
        to_digits(col, d, &mut digits);
        for perm in &perms {
            let mut row = 0;
            for &src in perm {
                row = row * d + digits[src];
            }
            p[(row, col)] += c(1.0);
        }
    }
    Ok(HermOp::hermitize(p / c(perms.len() as f64)))
}

fn to_digits(mut v: usize, d: usize, out: &mut [usize]) {
    for slot in out.iter_mut().rev() {
        *slot = v % d;
        v /= d;
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 1 {
        return vec![vec![0]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..n {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn haar_vector(rng: &mut ChaCha8Rng, d: usize) -> CVec {
    let v = CVec::from_fn(d, |_, _| {
        C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
    });
    let norm = v.norm();
    v / c(norm)
}

/// Monte-Carlo estimate of `∫ |φ⟩⟨φ|^{⊗n} dφ` over Haar-random pure states.
pub fn haar_mean_power(n: usize, d: usize, samples: usize, seed: u64) -> Result<HermOp> {
    if n == 0 || d == 0 || samples == 0 {
        return Err(Error::InvalidArgument("n, d and samples must be positive".into()));
    }
    let dim = match tensor_dim(n, d) {
        Some(v) if v <= 16 => v,
        _ => return Err(Error::SizeLimit(format!("d^n = {d}^{n} exceeds 16"))),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = CMat::zeros(dim, dim);
    for _ in 0..samples {
        let phi = haar_vector(&mut rng, d);
        let mut v = phi.clone();
        for _ in 1..n {
            v = v.kronecker(&phi);
        }
        acc += &v * v.adjoint();
    }
    Ok(HermOp::hermitize(acc / c(samples as f64)))
}

/// True iff `|ψ⟩⟨ψ| ⪯ Π_sym`, i.e. the normalized `ψ` lies in `Sym^n(C^d)`.
pub fn check_pure_domination(psi: &CVec, n: usize, d: usize) -> Result<bool> {
    let proj = sym_projector(n, d)?;
    if psi.len() != proj.dim() {
        return Err(Error::Dimension(format!(
            "state vector has length {}, expected {}",
            psi.len(),
            proj.dim()
        )));
    }
    let norm = psi.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::InvalidArgument("zero or non-finite state vector".into()));
    }
    let v = psi / c(norm);
    let gap = proj.sub(&HermOp::outer(&v));
    Ok(gap.min_eigenvalue() >= -1e-9)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use num_traits::ToPrimitive;

    /// Binomial by the multiplicative formula in exact rationals, independent of `sym_dim`.
    fn binom_oracle(n: u64, k: u64) -> BigUint {
        let mut num = BigUint::one();
        let mut den = BigUint::one();
        for i in 0..k {
            num *= BigUint::from(n - i);
            den *= BigUint::from(i + 1);
        }
        num / den
    }

    #[test]
    fn sym_dim_small_cases() {
        assert_eq!(sym_dim(1, 7), BigUint::from(7u32));
        assert_eq!(sym_dim(9, 1), BigUint::one());
        assert_eq!(sym_dim(100, 2), binom_oracle(101, 100));
        assert_eq!(sym_dim(100, 2), BigUint::from(101u32));
        assert_eq!(sym_dim(0, 5), BigUint::one());
    }

    #[test]
    fn pascal_identity() {
        for n in 1..=50u64 {
            for x in 2..=50u64 {
                assert_eq!(sym_dim(n, x), sym_dim(n - 1, x) + sym_dim(n, x - 1));
            }
        }
    }

    #[test]
    fn upper_bound_examples() {
        let u = log2_sym_dim_upper(100.0, 2);
        assert!((u - (std::f64::consts::E * 101.0).log2()).abs() < 1e-12);
        assert!((u - 8.101).abs() < 1e-3);
        assert!(u >= 101f64.log2());
        assert!((log2_sym_dim_upper(0.0, 2) - std::f64::consts::E.log2()).abs() < 1e-12);
        assert_eq!(log2_sym_dim_upper(5.0, 1), 0.0);
        let big = log2_sym_dim_upper(1.08e13, 52);
        assert!(big.is_finite() && big > 0.0);
        assert!(log2_sym_dim(1.08e13, 52) <= big);
    }

    #[test]
    fn log_domain_matches_big_integer() {
        for &(n, x) in &[(10u64, 3u64), (1000, 52), (100_000, 484), (37, 200)] {
            let exact = log2_biguint(&sym_dim(n, x));
            let ld = log2_sym_dim(n as f64, x);
            assert!((exact - ld).abs() < 1e-9 * exact.max(1.0), "{n} {x}: {exact} vs {ld}");
        }
        let r = sym_dim_result(100, 2);
        assert!(r.log2_g <= r.log2_g_upper);
        assert_eq!(r.g_exact.to_u64(), Some(101));
    }

    #[test]
    fn effective_x_protocol_counts() {
        let a = BlockSpec::new(vec![(2, 1)], vec![(2, 1), (1, 9)]).unwrap();
        assert_eq!(effective_x(&a), 52);
        assert_eq!(effective_x(&BlockSpec::single(2, 11).unwrap()), 484);
        let c = BlockSpec::new(vec![(3, 30)], vec![(2, 1), (1, 9)]).unwrap();
        assert_eq!(effective_x(&c), 3510);
    }

    #[test]
    fn block_spec_rejects_zero() {
        assert!(BlockSpec::new(vec![(0, 1)], vec![(1, 1)]).is_err());
        assert!(BlockSpec::new(vec![(1, 0)], vec![(1, 1)]).is_err());
    }

    #[test]
    fn sym_projector_cases() {
        let p = sym_projector(2, 2).unwrap();
        let e = p.eigh();
        let rank = e.values.iter().filter(|&&v| v > 0.5).count();
        assert_eq!(rank, 3);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let v = CVec::from_vec(vec![c(0.0), c(s), c(s), c(0.0)]);
        let pv = p.matrix() * &v;
        assert!((pv - &v).norm() < 1e-12);

        let id = sym_projector(1, 3).unwrap();
        assert!(max_abs(&(id.matrix() - CMat::identity(3, 3))) < 1e-15);

        let p23 = sym_projector(2, 3).unwrap();
        let rank = p23.eigh().values.iter().filter(|&&v| v > 0.5).count();
        assert_eq!(BigUint::from(rank), sym_dim(2, 3));

        let p33 = sym_projector(3, 4).unwrap();
        assert!(max_abs(&(p33.matrix() * p33.matrix() - p33.matrix())) < 1e-12);
        assert!(matches!(sym_projector(4, 3), Err(Error::SizeLimit(_))));
    }

    #[test]
    fn haar_first_and_second_moment() {
        let m1 = haar_mean_power(1, 2, 100_000, 1).unwrap();
        let dev1 = m1.sub(&HermOp::identity(2).scaled(0.5)).op_norm();
        assert!(dev1 < 2e-2, "{dev1}");
        let m2 = haar_mean_power(2, 2, 100_000, 2).unwrap();
        let oracle = sym_projector(2, 2).unwrap().scaled(1.0 / 3.0);
        let dev2 = m2.sub(&oracle).op_norm();
        assert!(dev2 < 5e-2, "{dev2}");
    }

    #[test]
    fn haar_is_seed_deterministic() {
        let a = haar_mean_power(2, 3, 500, 42).unwrap();
        let b = haar_mean_power(2, 3, 500, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn haar_error_shrinks_with_samples() {
        let oracle = sym_projector(2, 2).unwrap().scaled(1.0 / 3.0);
        // Average over seeds to smooth out Monte-Carlo noise.
        let err = |samples: usize| -> f64 {
            (0..8)
                .map(|s| haar_mean_power(2, 2, samples, 100 + s).unwrap().sub(&oracle).op_norm())
                .sum::<f64>()
                / 8.0
        };
        let coarse = err(1_000);
        let fine = err(16_000);
        assert!(fine < 0.5 * coarse, "{coarse} -> {fine}");
    }

    #[test]
    fn pure_domination_cases() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let sym = CVec::from_vec(vec![c(0.0), c(s), c(s), c(0.0)]);
        let anti = CVec::from_vec(vec![c(0.0), c(s), c(-s), c(0.0)]);
        assert!(check_pure_domination(&sym, 2, 2).unwrap());
        assert!(!check_pure_domination(&anti, 2, 2).unwrap());

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let raw = haar_vector(&mut rng, 27);
        let proj = sym_projector(3, 3).unwrap();
        let inside = proj.matrix() * raw;
        assert!(check_pure_domination(&inside, 3, 3).unwrap());
        assert!(check_pure_domination(&CVec::zeros(3), 1, 3).is_err());
        assert!(matches!(check_pure_domination(&sym, 1, 3), Err(Error::Dimension(_))));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(1000))]

            #[test]
            fn upper_bound_dominates(n in 1u64..=1_000_000, x in 2u64..=64) {
                let exact = log2_sym_dim(n as f64, x);
                prop_assert!(log2_sym_dim_upper(n as f64, x) >= exact - 1e-9);
            }
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(200))]

            #[test]
            fn single_block_matches_square_product(da in 1usize..20, db in 1usize..20) {
                let s = BlockSpec::single(da, db).unwrap();
                prop_assert_eq!(effective_x(&s), (da * da * db * db) as u64);
            }

            #[test]
            fn effective_x_below_total(
                a in proptest::collection::vec((1usize..5, 1usize..4), 1..4),
                b in proptest::collection::vec((1usize..5, 1usize..4), 1..4),
            ) {
                let s = BlockSpec::new(a.clone(), b.clone()).unwrap();
                let ta = s.total_dim_a() as u64;
                let tb = s.total_dim_b() as u64;
                let x = effective_x(&s);
                let single = a.len() == 1 && a[0].1 == 1 && b.len() == 1 && b[0].1 == 1;
                if single {
                    prop_assert_eq!(x, ta * ta * tb * tb);
                } else {
                    prop_assert!(x < ta * ta * tb * tb);
                }
            }
        }
    }
}
