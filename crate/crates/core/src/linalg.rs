//! Dense complex linear algebra on small Hilbert spaces.
//!
//! Everything here works on `nalgebra` complex matrices. The validated
//! wrappers ([`HermOp`], [`DensityOp`], [`KrausChannel`]) check their
//! invariants once at construction against fixed module tolerances so that
//! downstream code can rely on them.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Entrywise tolerance for Hermiticity.
pub const HERM_TOL: f64 = 1e-12;
/// Tolerance for positivity, normalization and Kraus completeness.
pub const PSD_TOL: f64 = 1e-10;
/// Default eigenvalue floor applied before taking matrix logarithms.
pub const LOG_FLOOR: f64 = 1e-12;
/// Eigenvalues below minus this value make a matrix logarithm undefined.
pub const LOG_NEG_TOL: f64 = 1e-8;

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn identity(d: usize) -> CMat {
    CMat::identity(d, d)
}

pub fn diag(values: &[f64]) -> CMat {
    let d = values.len();
    CMat::from_fn(d, d, |i, j| if i == j { c(values[i]) } else { C64::default() })
}

/// Tensor product `a ⊗ b`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn kron_all(factors: &[&CMat]) -> CMat {
    let mut out = CMat::identity(1, 1);
    for f in factors {
        out = out.kronecker(f);
    }
    out
}

pub fn trace(a: &CMat) -> C64 {
    a.trace()
}

/// `Re Tr(a b)` without forming the product.
pub fn trace_prod_re(a: &CMat, b: &CMat) -> f64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            let x = a[(i, k)];
            let y = b[(k, i)];
            acc += x.re * y.re - x.im * y.im;
        }
    }
    acc
}

/// Largest entrywise deviation `|a_ij - conj(a_ji)|`.
pub fn hermitian_deviation(a: &CMat) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..a.nrows() {
        for j in i..a.ncols() {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

fn all_finite(a: &CMat) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Largest absolute entry.
pub fn max_abs(a: &CMat) -> f64 {
    a.iter().fold(0.0_f64, |m, z| m.max(z.norm()))
}

/// Eigendecomposition of a Hermitian matrix with ascending eigenvalues.
#[derive(Clone, Debug)]
pub struct Eigh {
    pub values: Vec<f64>,
    /// Column `k` is the eigenvector for `values[k]`.
    pub vectors: CMat,
}

impl Eigh {
    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// `V f(Λ) V†`.
    pub fn rebuild(&self, f: impl Fn(f64) -> f64) -> CMat {
        let d = self.values.len();
        let mut scaled = self.vectors.clone();
        for k in 0..d {
            let s = f(self.values[k]);
            scaled.column_mut(k).scale_mut(s);
        }
        scaled * self.vectors.adjoint()
    }
}

fn eigh_raw(a: &CMat) -> Eigh {
    let d = a.nrows();
    if d == 0 {
        return Eigh {
            values: Vec::new(),
            vectors: CMat::zeros(0, 0),
        };
    }
    let herm = (a + a.adjoint()) * c(0.5);
    let eig = herm.symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(d, d, |r, k| eig.eigenvectors[(r, order[k])]);
    Eigh { values, vectors }
}

/// Eigendecomposition of an arbitrary square matrix that must be Hermitian.
pub fn eigh_checked(a: &CMat) -> Result<Eigh> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!(
            "eigh needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let dev = hermitian_deviation(a);
    if dev > HERM_TOL * a.nrows().max(1) as f64 * max_abs(a).max(1.0) {
        return Err(Error::NotHermitian { deviation: dev });
    }
    Ok(eigh_raw(a))
}

/// A Hermitian operator.
#[derive(Clone, Debug, PartialEq)]
pub struct HermOp {
    m: CMat,
}

impl HermOp {
    /// Validates squareness, finiteness and Hermiticity (entrywise 1e-12).
    pub fn new(m: CMat) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension(format!(
                "Hermitian operator must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if !all_finite(&m) {
            return Err(Error::NonFinite);
        }
        let dev = hermitian_deviation(&m);
        if dev > HERM_TOL {
            return Err(Error::NotHermitian { deviation: dev });
        }
        Ok(Self::hermitize(m))
    }

    /// Projects a computed matrix onto the Hermitian part `(m + m†)/2`.
    pub fn hermitize(m: CMat) -> Self {
        let h = (&m + m.adjoint()) * c(0.5);
        Self { m: h }
    }

    pub fn from_real_diag(values: &[f64]) -> Self {
        Self { m: diag(values) }
    }

    pub fn identity(d: usize) -> Self {
        Self { m: identity(d) }
    }

    pub fn zeros(d: usize) -> Self {
        Self { m: CMat::zeros(d, d) }
    }

    /// `|v⟩⟨v|` (not normalized).
    pub fn outer(v: &CVec) -> Self {
        Self { m: v * v.adjoint() }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.m
    }

    pub fn into_matrix(self) -> CMat {
        self.m
    }

    pub fn trace(&self) -> f64 {
        self.m.trace().re
    }

    /// `Tr(self · other)`; real because both are Hermitian.
    pub fn inner(&self, other: &HermOp) -> f64 {
        trace_prod_re(&self.m, &other.m)
    }

    pub fn eigh(&self) -> Eigh {
        eigh_raw(&self.m)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigh().min()
    }

    pub fn scaled(&self, s: f64) -> HermOp {
        HermOp { m: &self.m * c(s) }
    }

    pub fn add(&self, other: &HermOp) -> HermOp {
        HermOp { m: &self.m + &other.m }
    }

    pub fn sub(&self, other: &HermOp) -> HermOp {
        HermOp { m: &self.m - &other.m }
    }

    /// `self += s · other`.
    pub fn axpy(&mut self, s: f64, other: &HermOp) {
        self.m += &other.m * c(s);
    }

    pub fn kron(&self, other: &HermOp) -> HermOp {
        HermOp {
            m: kron(&self.m, &other.m),
        }
    }

    /// `U self U†` for any (possibly rectangular) `U`.
    pub fn conjugate(&self, u: &CMat) -> HermOp {
        HermOp::hermitize(u * &self.m * u.adjoint())
    }

    /// Spectral function `f(self)`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> HermOp {
        HermOp::hermitize(self.eigh().rebuild(f))
    }

    /// Operator norm (largest absolute eigenvalue).
    pub fn op_norm(&self) -> f64 {
        let e = self.eigh();
        e.min().abs().max(e.max().abs())
    }

    /// Direct sum `self ⊕ other`.
    pub fn direct_sum(&self, other: &HermOp) -> HermOp {
        let (a, b) = (self.dim(), other.dim());
        let mut m = CMat::zeros(a + b, a + b);
        m.view_mut((0, 0), (a, a)).copy_from(&self.m);
        m.view_mut((a, a), (b, b)).copy_from(&other.m);
        HermOp { m }
    }

    /// Principal sub-block on rows/columns `start..start+len`.
    pub fn block(&self, start: usize, len: usize) -> HermOp {
        HermOp {
            m: self.m.view((start, start), (len, len)).into_owned(),
        }
    }
}

/// Whether a [`DensityOp`] is a normalized state or a subnormalized operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Normalization {
    State,
    Subnormalized,
}

/// A positive semidefinite operator, optionally normalized to unit trace.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOp {
    op: HermOp,
    normalization: Normalization,
}

impl DensityOp {
    pub fn new(m: CMat, normalization: Normalization) -> Result<Self> {
        let op = HermOp::new(m)?;
        Self::from_herm(op, normalization)
    }

    pub fn from_herm(op: HermOp, normalization: Normalization) -> Result<Self> {
        let min = op.min_eigenvalue();
        if min < -PSD_TOL {
            return Err(Error::NotPositive { min_eigenvalue: min });
        }
        let tr = op.trace();
        if normalization == Normalization::State && (tr - 1.0).abs() > PSD_TOL {
            return Err(Error::NotNormalized {
                trace: tr,
                expected: 1.0,
            });
        }
        Ok(Self { op, normalization })
    }

    pub fn state(m: CMat) -> Result<Self> {
        Self::new(m, Normalization::State)
    }

    /// Pure state `|ψ⟩⟨ψ|` from a vector, normalized here.
    pub fn pure(psi: &CVec) -> Result<Self> {
        let n = psi.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::InvalidArgument("zero or non-finite state vector".into()));
        }
        let v = psi / c(n);
        Ok(Self {
            op: HermOp::outer(&v),
            normalization: Normalization::State,
        })
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self {
            op: HermOp::identity(d).scaled(1.0 / d as f64),
            normalization: Normalization::State,
        }
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn as_herm(&self) -> &HermOp {
        &self.op
    }

    pub fn into_herm(self) -> HermOp {
        self.op
    }

    pub fn matrix(&self) -> &CMat {
        self.op.matrix()
    }

    pub fn trace(&self) -> f64 {
        self.op.trace()
    }
}

/// Partial trace keeping the tensor factors listed in `keep`.
///
/// `dims` lists the local dimensions; their product must equal `op.dim()`.
/// The kept factors appear in ascending order in the result.
pub fn ptrace(op: &HermOp, dims: &[usize], keep: &[usize]) -> Result<HermOp> {
    let total: usize = dims.iter().product();
    if dims.is_empty() || total != op.dim() || dims.contains(&0) {
        return Err(Error::Dimension(format!(
            "ptrace dims {:?} do not match operator dimension {}",
            dims,
            op.dim()
        )));
    }
    let mut kept = vec![false; dims.len()];
    for &k in keep {
        if k >= dims.len() || kept[k] {
            return Err(Error::Dimension(format!(
                "invalid keep set {:?} for {} factors",
                keep,
                dims.len()
            )));
        }
        kept[k] = true;
    }
    let kept_dim: usize = dims.iter().zip(&kept).filter(|(_, &k)| k).map(|(d, _)| d).product();

    // Split each full index into (kept linear index, traced linear index).
    let mut kept_of = vec![0usize; total];
    let mut traced_of = vec![0usize; total];
    for (full, (ko, to)) in kept_of.iter_mut().zip(traced_of.iter_mut()).enumerate() {
        let mut rem = full;
        let mut k_lin = 0;
        let mut t_lin = 0;
        let mut k_stride = 1;
        let mut t_stride = 1;
        for f in (0..dims.len()).rev() {
            let digit = rem % dims[f];
            rem /= dims[f];
            if kept[f] {
                k_lin += digit * k_stride;
                k_stride *= dims[f];
            } else {
                t_lin += digit * t_stride;
                t_stride *= dims[f];
            }
        }
        *ko = k_lin;
        *to = t_lin;
    }

    let m = op.matrix();
    let mut out = CMat::zeros(kept_dim, kept_dim);
    for a in 0..total {
        for b in 0..total {
            if traced_of[a] == traced_of[b] {
                out[(kept_of[a], kept_of[b])] += m[(a, b)];
            }
        }
    }
    Ok(HermOp::hermitize(out))
}

/// Base-2 matrix logarithm with eigenvalues clamped from below at `floor`.
pub fn mat_log_on_support(rho: &DensityOp, floor: f64) -> Result<HermOp> {
    let e = rho.as_herm().eigh();
    if e.min() < -LOG_NEG_TOL {
        return Err(Error::NotPositive {
            min_eigenvalue: e.min(),
        });
    }
    Ok(HermOp::hermitize(e.rebuild(|x| x.max(floor).log2())))
}

/// Von Neumann entropy in bits of a positive operator (not renormalized).
pub fn entropy_bits(op: &HermOp) -> f64 {
    op.eigh()
        .values
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| -x * x.log2())
        .sum()
}

/// A linear map between matrix spaces, given by its action.
pub trait LinearMap {
    fn in_dim(&self) -> usize;
    fn out_dim(&self) -> usize;
    /// Action on an arbitrary (not necessarily Hermitian) input.
    fn apply_mat(&self, x: &CMat) -> CMat;
}

/// Choi operator `Σ_ij |i⟩⟨j| ⊗ Φ(|i⟩⟨j|)` on input ⊗ output.
pub fn choi_of(map: &dyn LinearMap) -> HermOp {
    let (din, dout) = (map.in_dim(), map.out_dim());
    let mut j = CMat::zeros(din * dout, din * dout);
    for a in 0..din {
        for b in 0..din {
            let mut e = CMat::zeros(din, din);
            e[(a, b)] = c(1.0);
            let img = map.apply_mat(&e);
            j.view_mut((a * dout, b * dout), (dout, dout)).copy_from(&img);
        }
    }
    HermOp::hermitize(j)
}

/// True iff the Choi operator is PSD within `tol`.
pub fn map_is_cp(map: &dyn LinearMap, tol: f64) -> bool {
    choi_of(map).min_eigenvalue() >= -tol
}

/// Whether a channel must satisfy `Σ K†K = I` or only `Σ K†K ⪯ I`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceKind {
    Preserving,
    NonIncreasing,
}

/// A completely positive map in Kraus form.
#[derive(Clone, Debug)]
pub struct KrausChannel {
    in_dim: usize,
    out_dim: usize,
    kraus: Vec<CMat>,
    kind: TraceKind,
}

impl KrausChannel {
    pub fn new(in_dim: usize, out_dim: usize, kraus: Vec<CMat>, kind: TraceKind) -> Result<Self> {
        if kraus.is_empty() {
            return Err(Error::InvalidArgument(
                "channel needs at least one Kraus operator".into(),
            ));
        }
        for k in &kraus {
            if k.nrows() != out_dim || k.ncols() != in_dim {
                return Err(Error::Dimension(format!(
                    "Kraus operator is {}x{}, expected {}x{}",
                    k.nrows(),
                    k.ncols(),
                    out_dim,
                    in_dim
                )));
            }
            if !all_finite(k) {
                return Err(Error::NonFinite);
            }
        }
        let ch = Self {
            in_dim,
            out_dim,
            kraus,
            kind,
        };
        let gram = ch.adjoint_identity();
        match kind {
            TraceKind::Preserving => {
                let dev = max_abs(&(gram.matrix() - identity(in_dim)));
                if dev > PSD_TOL {
                    return Err(Error::TraceCondition { deviation: dev });
                }
            }
            TraceKind::NonIncreasing => {
                let slack = HermOp::identity(in_dim).sub(&gram).min_eigenvalue();
                if slack < -PSD_TOL {
                    return Err(Error::TraceCondition { deviation: -slack });
                }
            }
        }
        Ok(ch)
    }

    pub fn identity(d: usize) -> Self {
        Self {
            in_dim: d,
            out_dim: d,
            kraus: vec![identity(d)],
            kind: TraceKind::Preserving,
        }
    }

    pub fn kraus_ops(&self) -> &[CMat] {
        &self.kraus
    }

    pub fn trace_kind(&self) -> TraceKind {
        self.kind
    }

    /// `Σ K† K`.
    pub fn adjoint_identity(&self) -> HermOp {
        let mut acc = CMat::zeros(self.in_dim, self.in_dim);
        for k in &self.kraus {
            acc += k.adjoint() * k;
        }
        HermOp::hermitize(acc)
    }

    pub fn apply(&self, op: &HermOp) -> Result<HermOp> {
        if op.dim() != self.in_dim {
            return Err(Error::Dimension(format!(
                "channel input dimension {} but operator has {}",
                self.in_dim,
                op.dim()
            )));
        }
        Ok(HermOp::hermitize(self.apply_mat(op.matrix())))
    }

    pub fn adjoint_apply(&self, op: &HermOp) -> Result<HermOp> {
        if op.dim() != self.out_dim {
            return Err(Error::Dimension(format!(
                "channel output dimension {} but operator has {}",
                self.out_dim,
                op.dim()
            )));
        }
        let mut acc = CMat::zeros(self.in_dim, self.in_dim);
        for k in &self.kraus {
            acc += k.adjoint() * op.matrix() * k;
        }
        Ok(HermOp::hermitize(acc))
    }

    /// Precomposes with `v` (maps `new_in → in_dim`): `ρ ↦ Φ(v ρ v†)`.
    pub fn precompose(&self, v: &CMat) -> Result<KrausChannel> {
        if v.nrows() != self.in_dim {
            return Err(Error::Dimension("precompose: row count mismatch".into()));
        }
        let kraus = self.kraus.iter().map(|k| k * v).collect();
        KrausChannel::new(v.ncols(), self.out_dim, kraus, TraceKind::NonIncreasing)
    }
}

impl LinearMap for KrausChannel {
    fn in_dim(&self) -> usize {
        self.in_dim
    }

    fn out_dim(&self) -> usize {
        self.out_dim
    }

    fn apply_mat(&self, x: &CMat) -> CMat {
        let mut acc = CMat::zeros(self.out_dim, self.out_dim);
        for k in &self.kraus {
            acc += k * x * k.adjoint();
        }
        acc
    }
}

pub fn apply_channel(ch: &KrausChannel, op: &HermOp) -> Result<HermOp> {
    ch.apply(op)
}

pub fn adjoint_apply(ch: &KrausChannel, op: &HermOp) -> Result<HermOp> {
    ch.adjoint_apply(op)
}

pub fn choi(ch: &KrausChannel) -> HermOp {
    choi_of(ch)
}

pub fn is_cp(ch: &KrausChannel, tol: f64) -> bool {
    map_is_cp(ch, tol)
}

/// Orthonormal basis of Hermitian `d×d` matrices (Hilbert–Schmidt inner product).
///
/// Order: diagonal units, then for each `i < j` the real-symmetric and
/// imaginary-antisymmetric pair.
pub fn hermitian_basis(d: usize) -> Vec<HermOp> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(d * d);
    for i in 0..d {
        let mut m = CMat::zeros(d, d);
        m[(i, i)] = c(1.0);
        out.push(HermOp { m });
    }
    for i in 0..d {
        for j in (i + 1)..d {
            let mut re = CMat::zeros(d, d);
            re[(i, j)] = c(s);
            re[(j, i)] = c(s);
            out.push(HermOp { m: re });
            let mut im = CMat::zeros(d, d);
            im[(i, j)] = C64::new(0.0, -s);
            im[(j, i)] = C64::new(0.0, s);
            out.push(HermOp { m: im });
        }
    }
    out
}
