//! Dense complex operator algebra.
//!
//! Every other module works in terms of [`Operator`], [`StateVector`] and
//! [`Projector`]. Matrices are stored in `nalgebra` dense form; the text
//! interchange format is `{"dim": d, "entries": [[[re, im], ...], ...]}` in
//! row-major order.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const DEFAULT_MAX_DIM: usize = 4096;
pub const MAX_DIM_ENV: &str = "MULTITIME_MAX_DIM";

/// Relative tolerance for Hermiticity, scaled by `1 + ‖H‖_F`.
pub const HERMITIAN_TOL: f64 = 1e-12;

const IDEMPOTENT_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-10;
const RANK_TOL: f64 = 1e-10;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

/// Largest dense dimension accepted, honouring `MULTITIME_MAX_DIM`.
pub fn max_dim() -> usize {
    std::env::var(MAX_DIM_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&d| d > 0)
        .unwrap_or(DEFAULT_MAX_DIM)
}

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// ‖a − b‖_F / max(‖b‖_F, tiny).
pub fn relative_frobenius_error(a: &CMatrix, b: &CMatrix) -> f64 {
    let denom = frobenius(b).max(f64::MIN_POSITIVE);
    frobenius(&(a - b)) / denom
}

fn max_hermitian_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for k in j..n {
            worst = worst.max((m[(j, k)] - m[(k, j)].conj()).norm());
        }
    }
    worst
}

/// Dense square complex matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct Operator {
    entries: CMatrix,
    hermitian_hint: Option<bool>,
}

// Equality ignores the cached Hermiticity hint.
impl PartialEq for Operator {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    dim: usize,
    entries: Vec<Vec<[f64; 2]>>,
}

impl TryFrom<MatrixRepr> for Operator {
    type Error = String;

    fn try_from(repr: MatrixRepr) -> std::result::Result<Self, Self::Error> {
        let d = repr.dim;
        if d == 0 {
            return Err("dim must be at least 1".into());
        }
        if repr.entries.len() != d {
            return Err(format!(
                "entries shape: expected {d} rows, found {}",
                repr.entries.len()
            ));
        }
        if let Some((r, row)) = repr.entries.iter().enumerate().find(|(_, row)| row.len() != d) {
            return Err(format!(
                "entries shape: row {r} has {} columns, expected {d}",
                row.len()
            ));
        }
        let flat: Vec<f64> = repr.entries.iter().flatten().flatten().copied().collect();
        if flat.iter().any(|x| !x.is_finite()) {
            return Err("entries must be finite".into());
        }
        let m = CMatrix::from_fn(d, d, |r, col| {
            let [re, im] = repr.entries[r][col];
            c(re, im)
        });
        Ok(Operator::from_matrix_unchecked(m))
    }
}

impl From<Operator> for MatrixRepr {
    fn from(op: Operator) -> Self {
        let d = op.dim();
        let entries = (0..d)
            .map(|r| {
                (0..d)
                    .map(|col| {
                        let z = op.entries[(r, col)];
                        [z.re, z.im]
                    })
                    .collect()
            })
            .collect();
        MatrixRepr { dim: d, entries }
    }
}

impl Operator {
    pub fn from_matrix(entries: CMatrix) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::dims(entries.nrows(), entries.ncols()));
        }
        if entries.nrows() == 0 {
            return Err(Error::InvalidArgument("operator dimension must be at least 1".into()));
        }
        Ok(Self::from_matrix_unchecked(entries))
    }

    pub(crate) fn from_matrix_unchecked(entries: CMatrix) -> Self {
        Operator {
            entries,
            hermitian_hint: None,
        }
    }

    pub(crate) fn with_hint(mut self, hermitian: bool) -> Self {
        self.hermitian_hint = Some(hermitian);
        self
    }

    /// Builds an operator from complex rows.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let d = rows.len();
        if let Some(row) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::dims(d, row.len()));
        }
        Self::from_matrix(CMatrix::from_fn(d, d, |r, col| rows[r][col]))
    }

    /// Builds an operator from real rows, e.g. `&[&[0.0, 1.0], &[1.0, 0.0]]`.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let rows: Vec<Vec<C64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| c(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn identity(dim: usize) -> Self {
        Operator::from_matrix_unchecked(CMatrix::identity(dim, dim)).with_hint(true)
    }

    pub fn zeros(dim: usize) -> Self {
        Operator::from_matrix_unchecked(CMatrix::zeros(dim, dim)).with_hint(true)
    }

    pub fn diagonal(values: &[C64]) -> Self {
        let m = CMatrix::from_diagonal(&CVector::from_column_slice(values));
        Operator::from_matrix_unchecked(m)
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_matrix(self) -> CMatrix {
        self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.entries[(row, col)]
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius(&self.entries)
    }

    /// Largest `|H_jk − conj(H_kj)|`.
    pub fn hermitian_max_defect(&self) -> f64 {
        max_hermitian_defect(&self.entries)
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian_hint.unwrap_or_else(|| {
            self.hermitian_max_defect() <= HERMITIAN_TOL * (1.0 + self.frobenius_norm())
        })
    }

    pub fn adjoint(&self) -> Operator {
        Operator {
            entries: self.entries.adjoint(),
            hermitian_hint: self.hermitian_hint,
        }
    }

    pub fn trace(&self) -> C64 {
        self.entries.trace()
    }

    fn check_same_dim(&self, other: &Operator) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::dims(self.dim(), other.dim()));
        }
        Ok(())
    }

    pub fn add(&self, other: &Operator) -> Result<Operator> {
        self.check_same_dim(other)?;
        let hint = match (self.hermitian_hint, other.hermitian_hint) {
            (Some(true), Some(true)) => Some(true),
            _ => None,
        };
        Ok(Operator {
            entries: &self.entries + &other.entries,
            hermitian_hint: hint,
        })
    }

    pub fn sub(&self, other: &Operator) -> Result<Operator> {
        self.check_same_dim(other)?;
        let hint = match (self.hermitian_hint, other.hermitian_hint) {
            (Some(true), Some(true)) => Some(true),
            _ => None,
        };
        Ok(Operator {
            entries: &self.entries - &other.entries,
            hermitian_hint: hint,
        })
    }

    /// Operator product `self · other`.
    pub fn mul(&self, other: &Operator) -> Result<Operator> {
        self.check_same_dim(other)?;
        Ok(Operator::from_matrix_unchecked(&self.entries * &other.entries))
    }

    pub fn scale(&self, factor: C64) -> Operator {
        let hint = match self.hermitian_hint {
            Some(true) if factor.im == 0.0 => Some(true),
            _ => None,
        };
        Operator {
            entries: &self.entries * factor,
            hermitian_hint: hint,
        }
    }

    pub fn scale_real(&self, factor: f64) -> Operator {
        self.scale(c(factor, 0.0))
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        if psi.dim() != self.dim() {
            return Err(Error::dims(self.dim(), psi.dim()));
        }
        Ok(StateVector::from_vector(&self.entries * psi.vector()))
    }
}

pub fn pauli_x() -> Operator {
    Operator::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]])
        .expect("2x2")
        .with_hint(true)
}

pub fn pauli_y() -> Operator {
    Operator::from_rows(&[vec![ZERO, -I], vec![I, ZERO]])
        .expect("2x2")
        .with_hint(true)
}

pub fn pauli_z() -> Operator {
    Operator::from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]])
        .expect("2x2")
        .with_hint(true)
}

/// Complex amplitude vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct StateVector {
    amplitudes: CVector,
}

impl TryFrom<Vec<[f64; 2]>> for StateVector {
    type Error = String;

    fn try_from(pairs: Vec<[f64; 2]>) -> std::result::Result<Self, Self::Error> {
        if pairs.is_empty() {
            return Err("state must have at least one amplitude".into());
        }
        if pairs.iter().flatten().any(|x| !x.is_finite()) {
            return Err("amplitudes must be finite".into());
        }
        Ok(StateVector::new(pairs.iter().map(|&[re, im]| c(re, im)).collect()))
    }
}

impl From<StateVector> for Vec<[f64; 2]> {
    fn from(s: StateVector) -> Self {
        s.amplitudes.iter().map(|z| [z.re, z.im]).collect()
    }
}

impl StateVector {
    pub fn new(amplitudes: Vec<C64>) -> Self {
        StateVector {
            amplitudes: CVector::from_vec(amplitudes),
        }
    }

    pub fn from_vector(amplitudes: CVector) -> Self {
        StateVector { amplitudes }
    }

    pub fn from_real(values: &[f64]) -> Self {
        Self::new(values.iter().map(|&x| c(x, 0.0)).collect())
    }

    /// Computational basis vector `|k⟩`.
    pub fn basis(dim: usize, k: usize) -> Self {
        let mut v = CVector::zeros(dim);
        v[k] = ONE;
        StateVector { amplitudes: v }
    }

    pub fn zeros(dim: usize) -> Self {
        StateVector {
            amplitudes: CVector::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn vector(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn amplitudes(&self) -> &[C64] {
        self.amplitudes.as_slice()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }

    pub fn normalized(&self) -> Result<StateVector> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::NotNormalized { norm: 0.0 });
        }
        Ok(StateVector::from_vector(&self.amplitudes / c(n, 0.0)))
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        if self.dim() != other.dim() {
            return Err(Error::dims(self.dim(), other.dim()));
        }
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    pub fn sub(&self, other: &StateVector) -> Result<StateVector> {
        if self.dim() != other.dim() {
            return Err(Error::dims(self.dim(), other.dim()));
        }
        Ok(StateVector::from_vector(&self.amplitudes - &other.amplitudes))
    }

    /// ‖self − other‖₂.
    pub fn distance(&self, other: &StateVector) -> Result<f64> {
        Ok(self.sub(other)?.norm())
    }

    /// Kronecker product with A-major index order `i·d_b + j`.
    pub fn tensor(&self, other: &StateVector) -> StateVector {
        StateVector::from_vector(self.amplitudes.kronecker(&other.amplitudes))
    }
}

/// Orthogonal projector with its rank.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    operator: Operator,
    rank: usize,
}

impl Projector {
    /// Validates an explicit matrix as an orthogonal projector.
    pub fn new(operator: Operator) -> Result<Self> {
        let norm = operator.frobenius_norm();
        if !operator.is_hermitian() {
            return Err(Error::NotHermitian {
                defect: operator.hermitian_max_defect() / (1.0 + norm),
            });
        }
        let m = operator.matrix();
        let idem = frobenius(&(m * m - m));
        if idem > IDEMPOTENT_TOL * (1.0 + norm) {
            return Err(Error::InvalidArgument(format!(
                "projector is not idempotent: ‖P² − P‖_F = {idem:.3e}"
            )));
        }
        let tr = operator.trace();
        let rank = tr.re.round();
        if (tr - c(rank, 0.0)).norm() > TRACE_TOL || rank < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "projector trace {tr} is not an integer rank"
            )));
        }
        Ok(Projector {
            operator: operator.with_hint(true),
            rank: rank as usize,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Projector {
            operator: Operator::identity(dim),
            rank: dim,
        }
    }

    pub fn operator(&self) -> &Operator {
        &self.operator
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.operator.dim()
    }

    /// `1 − P`.
    pub fn complement(&self) -> Projector {
        let d = self.dim();
        let m = CMatrix::identity(d, d) - self.operator.matrix();
        Projector {
            operator: Operator::from_matrix_unchecked(m).with_hint(true),
            rank: d - self.rank,
        }
    }

    /// Orthonormal basis of the range as a `dim × rank` matrix.
    ///
    /// Columns are eigenvectors for the eigenvalue 1, ordered as the
    /// eigensolver returns them and phase-fixed so that the largest-magnitude
    /// entry of each is real and positive.
    pub fn range_basis(&self) -> CMatrix {
        let d = self.dim();
        if self.rank == 0 {
            return CMatrix::zeros(d, 0);
        }
        let (_, vectors) = hermitian_eigen(self.operator.matrix()).expect("projector spectrum is {0, 1}");
        let mut basis = vectors.columns(d - self.rank, self.rank).into_owned();
        for mut col in basis.column_iter_mut() {
            let mut pivot = ZERO;
            for z in col.iter() {
                if z.norm() > pivot.norm() {
                    pivot = *z;
                }
            }
            if pivot.norm() > 0.0 {
                let phase = pivot.conj() / pivot.norm();
                col *= phase;
            }
        }
        basis
    }
}

/// `[a, b] = ab − ba`.
pub fn commutator(a: &Operator, b: &Operator) -> Result<Operator> {
    a.check_same_dim(b)?;
    let ab = a.matrix() * b.matrix();
    let ba = b.matrix() * a.matrix();
    Ok(Operator::from_matrix_unchecked(ab - ba))
}

pub fn tensor(a: &Operator, b: &Operator) -> Result<Operator> {
    tensor_with_limit(a, b, max_dim())
}

/// Kronecker product `a ⊗ b` with an explicit dimension cap.
pub fn tensor_with_limit(a: &Operator, b: &Operator, limit: usize) -> Result<Operator> {
    let dim = a
        .dim()
        .checked_mul(b.dim())
        .ok_or(Error::Overflow { dim: usize::MAX, max: limit })?;
    if dim > limit {
        return Err(Error::Overflow { dim, max: limit });
    }
    let hint = match (a.hermitian_hint, b.hermitian_hint) {
        (Some(true), Some(true)) => Some(true),
        _ => None,
    };
    Ok(Operator {
        entries: a.matrix().kronecker(b.matrix()),
        hermitian_hint: hint,
    })
}

fn check_dim_limit(dim: usize) -> Result<()> {
    let max = max_dim();
    if dim > max {
        return Err(Error::Overflow { dim, max });
    }
    Ok(())
}

/// Real-spectrum decomposition of a Hermitian matrix, ascending eigenvalues.
pub(crate) fn hermitian_eigen(h: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    let n = h.nrows();
    let sym = (h + h.adjoint()) * c(0.5, 0.0);
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 1000 * n.max(8))
        .ok_or_else(|| Error::NumericalFailure("Hermitian eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, col| eig.eigenvectors[(r, order[col])]);
    Ok((values, vectors))
}

/// Eigenpairs of a general complex matrix via complex Schur form and
/// triangular back-substitution.
fn general_eigen(h: &CMatrix) -> Result<(Vec<C64>, CMatrix)> {
    let n = h.nrows();
    let schur = nalgebra::Schur::try_new(h.clone(), f64::EPSILON, 10_000 * n.max(8))
        .ok_or_else(|| Error::NumericalFailure("complex Schur iteration did not converge".into()))?;
    let (q, t) = schur.unpack();
    let tnorm = frobenius(&t);
    let smin = (f64::EPSILON * tnorm).max(f64::MIN_POSITIVE);

    let mut values = Vec::with_capacity(n);
    let mut vectors = CMatrix::zeros(n, n);
    for k in 0..n {
        let lambda = t[(k, k)];
        let mut x = CVector::zeros(n);
        x[k] = ONE;
        for i in (0..k).rev() {
            let mut acc = ZERO;
            for j in (i + 1)..=k {
                acc += t[(i, j)] * x[j];
            }
            let mut denom = t[(i, i)] - lambda;
            if denom.norm() < smin {
                denom = c(smin, 0.0);
            }
            x[i] = -acc / denom;
        }
        let v = &q * x;
        let norm = v.norm();
        vectors.set_column(k, &(v / c(norm, 0.0)));
        values.push(lambda);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        values[i]
            .re
            .total_cmp(&values[j].re)
            .then(values[i].im.total_cmp(&values[j].im))
    });
    let sorted_values = order.iter().map(|&i| values[i]).collect();
    let sorted_vectors = CMatrix::from_fn(n, n, |r, col| vectors[(r, order[col])]);
    Ok((sorted_values, sorted_vectors))
}

/// Eigenpair of an operator.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: C64,
    pub vector: StateVector,
}

/// Eigenpairs sorted by real part, then imaginary part.
///
/// Hermitian inputs use the symmetric solver (real eigenvalues, orthonormal
/// vectors); others go through the complex Schur form. Every pair is checked
/// against `‖h·v − λ·v‖₂ ≤ 1e-9·‖h‖_F` and a violation is reported as
/// [`Error::NumericalFailure`].
pub fn eigendecompose(h: &Operator) -> Result<Vec<EigenPair>> {
    check_dim_limit(h.dim())?;
    let m = h.matrix();
    let (values, vectors): (Vec<C64>, CMatrix) = if h.is_hermitian() {
        let (vals, vecs) = hermitian_eigen(m)?;
        (vals.into_iter().map(|x| c(x, 0.0)).collect(), vecs)
    } else {
        general_eigen(m)?
    };
    let bound = 1e-9 * h.frobenius_norm().max(f64::MIN_POSITIVE);
    let mut pairs = Vec::with_capacity(values.len());
    for (k, &value) in values.iter().enumerate() {
        let v = vectors.column(k).into_owned();
        let residual = (m * &v - &v * value).norm();
        if residual > bound && h.frobenius_norm() > 0.0 {
            return Err(Error::NumericalFailure(format!(
                "eigenpair {k} residual {residual:.3e} exceeds {bound:.3e}"
            )));
        }
        pairs.push(EigenPair {
            value,
            vector: StateVector::from_vector(v),
        });
    }
    Ok(pairs)
}

/// Eigenvalues only, sorted like [`eigendecompose`].
pub fn eigenvalues(h: &Operator) -> Result<Vec<C64>> {
    check_dim_limit(h.dim())?;
    if h.is_hermitian() {
        Ok(hermitian_eigen(h.matrix())?
            .0
            .into_iter()
            .map(|x| c(x, 0.0))
            .collect())
    } else {
        Ok(general_eigen(h.matrix())?.0)
    }
}

// Padé(13,13) numerator coefficients for the exponential.
const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371_920_351_148_152;

fn one_norm(m: &CMatrix) -> f64 {
    m.column_iter()
        .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn expm_pade(a: &CMatrix) -> Result<CMatrix> {
    let n = a.nrows();
    let norm = one_norm(a);
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = a * c(0.5_f64.powi(squarings), 0.0);
    let id = CMatrix::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = |k: usize| c(PADE13[k], 0.0);

    let u_inner = &a6 * b(13) + &a4 * b(11) + &a2 * b(9);
    let u_poly = &a6 * u_inner + &a6 * b(7) + &a4 * b(5) + &a2 * b(3) + &id * b(1);
    let u = &a * u_poly;
    let v_inner = &a6 * b(12) + &a4 * b(10) + &a2 * b(8);
    let v = &a6 * v_inner + &a6 * b(6) + &a4 * b(4) + &a2 * b(2) + &id * b(0);

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .ok_or_else(|| Error::NumericalFailure("Padé denominator is singular".into()))?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    if r.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NumericalFailure("matrix exponential overflowed".into()));
    }
    Ok(r)
}

/// `exp(scale · h)`.
///
/// Hermitian inputs take the spectral route `V·exp(scale·Λ)·V†`, which keeps
/// `exp(−i·t·h)` unitary to rounding. Everything else uses scaling and
/// squaring with a Padé(13) approximant.
pub fn matrix_exponential(h: &Operator, scale: C64) -> Result<Operator> {
    if !scale.re.is_finite() || !scale.im.is_finite() {
        return Err(Error::InvalidArgument("exponential scale must be finite".into()));
    }
    check_dim_limit(h.dim())?;
    if scale == ZERO || h.matrix().iter().all(|z| *z == ZERO) {
        return Ok(Operator::identity(h.dim()));
    }
    let m = if h.is_hermitian() {
        let (values, vectors) = hermitian_eigen(h.matrix())?;
        let phases = CVector::from_iterator(values.len(), values.iter().map(|&l| (scale * l).exp()));
        let mut scaled = vectors.clone();
        for (mut col, p) in scaled.column_iter_mut().zip(phases.iter()) {
            col *= *p;
        }
        scaled * vectors.adjoint()
    } else {
        expm_pade(&(h.matrix() * scale))?
    };
    Ok(Operator::from_matrix_unchecked(m))
}

/// `exp(−i·t·h)`.
pub fn propagator(h: &Operator, t: f64) -> Result<Operator> {
    matrix_exponential(h, c(0.0, -t))
}

/// `P = V·(V†V)⁻¹·V†` for linearly independent columns `V`.
pub fn projector_from_basis(columns: &[StateVector]) -> Result<Projector> {
    let first = columns
        .first()
        .ok_or_else(|| Error::InvalidArgument("basis must contain at least one column".into()))?;
    let d = first.dim();
    if let Some(bad) = columns.iter().find(|v| v.dim() != d) {
        return Err(Error::dims(d, bad.dim()));
    }
    let r = columns.len();
    if r > d {
        return Err(Error::RankDeficient { ratio: 0.0 });
    }
    let v = CMatrix::from_fn(d, r, |row, col| columns[col].vector()[row]);
    let sv = v.clone().singular_values();
    let largest = sv.max();
    let smallest = sv.min();
    let ratio = if largest > 0.0 { smallest / largest } else { 0.0 };
    if ratio < RANK_TOL {
        return Err(Error::RankDeficient { ratio });
    }
    let gram = v.adjoint() * &v;
    let gram_inv = gram
        .try_inverse()
        .ok_or(Error::RankDeficient { ratio })?;
    let p = &v * gram_inv * v.adjoint();
    let p = (&p + p.adjoint()) * c(0.5, 0.0);
    Ok(Projector {
        operator: Operator::from_matrix_unchecked(p).with_hint(true),
        rank: r,
    })
}

fn complex_gaussian(rng: &mut ChaCha8Rng) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    c(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// `(M + M†)/2` with `M` i.i.d. standard complex Gaussian (`E|m|² = 1`).
pub fn random_hermitian(dim: usize, seed: u64) -> Operator {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = CMatrix::zeros(dim, dim);
    for r in 0..dim {
        for col in 0..dim {
            m[(r, col)] = complex_gaussian(&mut rng);
        }
    }
    let h = CMatrix::from_fn(dim, dim, |r, col| (m[(r, col)] + m[(col, r)].conj()) * 0.5);
    Operator::from_matrix_unchecked(h).with_hint(true)
}

/// Normalized state with i.i.d. complex Gaussian amplitudes.
pub fn random_state(dim: usize, seed: u64) -> StateVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<C64> = (0..dim).map(|_| complex_gaussian(&mut rng)).collect();
    StateVector::new(v).normalized().expect("Gaussian vector is nonzero")
}

/// Projector onto the span of `rank` random Gaussian vectors.
pub fn random_projector(dim: usize, rank: usize, seed: u64) -> Result<Projector> {
    if rank == 0 || rank > dim {
        return Err(Error::InvalidArgument(format!(
            "random projector rank {rank} must lie in 1..={dim}"
        )));
    }
    let cols: Vec<StateVector> = (0..rank)
        .map(|k| random_state(dim, seed.wrapping_mul(1_000_003).wrapping_add(k as u64)))
        .collect();
    projector_from_basis(&cols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn assert_close(a: &CMatrix, b: &CMatrix, tol: f64) {
        let err = frobenius(&(a - b));
        assert!(err <= tol, "‖a − b‖_F = {err:e} > {tol:e}\n{a}\n{b}");
    }

    #[test]
    fn commutator_of_pauli_x_and_z() {
        let k = commutator(&pauli_x(), &pauli_z()).unwrap();
        let expected = Operator::from_real_rows(&[&[0.0, -2.0], &[2.0, 0.0]]).unwrap();
        assert_close(k.matrix(), expected.matrix(), 0.0);
    }

    #[test]
    fn commutator_self_and_identity_vanish() {
        let a = random_hermitian(5, 3);
        assert_eq!(commutator(&a, &a).unwrap().frobenius_norm(), 0.0);
        let id = Operator::identity(5);
        assert_eq!(commutator(&id, &a).unwrap().frobenius_norm(), 0.0);
    }

    #[test]
    fn commutator_rejects_mismatched_dims() {
        let err = commutator(&Operator::identity(2), &Operator::identity(3)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 2, found: 3 }));
    }

    #[test]
    fn commutator_of_hermitians_is_anti_hermitian() {
        let k = commutator(&random_hermitian(4, 1), &random_hermitian(4, 2)).unwrap();
        assert_close(&k.matrix().adjoint(), &(-k.matrix()), 1e-12);
    }

    #[test]
    fn tensor_examples() {
        let id4 = tensor(&Operator::identity(2), &Operator::identity(2)).unwrap();
        assert_close(id4.matrix(), Operator::identity(4).matrix(), 0.0);

        let zi = tensor(&pauli_z(), &Operator::identity(2)).unwrap();
        let expected = Operator::diagonal(&[ONE, ONE, -ONE, -ONE]);
        assert_close(zi.matrix(), expected.matrix(), 0.0);

        let six = tensor(&Operator::identity(2), &Operator::identity(3)).unwrap();
        assert_eq!(six.dim(), 6);
        assert!(six.is_hermitian());
    }

    #[test]
    fn tensor_respects_dimension_cap() {
        let err = tensor_with_limit(&Operator::identity(8), &Operator::identity(8), 32).unwrap_err();
        assert!(matches!(err, Error::Overflow { dim: 64, max: 32 }));
    }

    #[test]
    fn exponential_of_zero_is_identity() {
        let e = matrix_exponential(&Operator::zeros(3), c(2.0, -1.5)).unwrap();
        assert_close(e.matrix(), &CMatrix::identity(3, 3), 0.0);
    }

    #[test]
    fn exponential_of_pauli_x_quarter_turn() {
        let e = matrix_exponential(&pauli_x(), c(0.0, -std::f64::consts::FRAC_PI_2)).unwrap();
        let expected = pauli_x().scale(-I);
        assert_close(e.matrix(), expected.matrix(), 1e-14);
    }

    #[test]
    fn exponential_of_diagonal() {
        let d = Operator::diagonal(&[c(0.3, 0.0), c(-1.2, 0.0)]);
        let e = matrix_exponential(&d, ONE).unwrap();
        assert_abs_diff_eq!(e.get(0, 0).re, 0.3_f64.exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(e.get(1, 1).re, (-1.2_f64).exp(), epsilon = 1e-15);
        assert_eq!(e.get(0, 1), ZERO);
    }

    #[test]
    fn pade_route_matches_spectral_route() {
        let h = random_hermitian(6, 11);
        let spectral = matrix_exponential(&h, c(0.0, -0.7)).unwrap();
        let pade = expm_pade(&(h.matrix() * c(0.0, -0.7))).unwrap();
        assert!(relative_frobenius_error(&pade, spectral.matrix()) < 1e-13);
    }

    #[test]
    fn non_finite_scale_is_rejected() {
        let err = matrix_exponential(&pauli_x(), c(f64::NAN, 0.0)).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn eigen_examples() {
        let vals: Vec<f64> = eigenvalues(&pauli_x()).unwrap().iter().map(|z| z.re).collect();
        assert_abs_diff_eq!(vals[0], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(vals[1], 1.0, epsilon = 1e-14);

        let id = eigendecompose(&Operator::identity(3)).unwrap();
        assert_eq!(id.len(), 3);
        assert!(id.iter().all(|p| (p.value - ONE).norm() < 1e-15));

        let d = Operator::diagonal(&[c(1.0, -0.5), c(2.0, 0.0)]);
        let pairs = eigendecompose(&d).unwrap();
        assert!((pairs[0].value - c(1.0, -0.5)).norm() < 1e-14);
        assert!((pairs[1].value - c(2.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn defective_matrix_still_satisfies_residual() {
        let jordan = Operator::from_real_rows(&[&[1.0, 1.0], &[0.0, 1.0]]).unwrap();
        let pairs = eigendecompose(&jordan).unwrap();
        for p in pairs {
            assert!((p.value - ONE).norm() < 1e-12);
        }
    }

    #[test]
    fn projector_examples() {
        let p = projector_from_basis(&[StateVector::basis(2, 0)]).unwrap();
        assert_close(
            p.operator().matrix(),
            Operator::diagonal(&[ONE, ZERO]).matrix(),
            1e-15,
        );
        assert_eq!(p.rank(), 1);

        let full: Vec<_> = (0..4).map(|k| StateVector::basis(4, k)).collect();
        let p = projector_from_basis(&full).unwrap();
        assert_close(p.operator().matrix(), &CMatrix::identity(4, 4), 1e-15);

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let p = projector_from_basis(&[StateVector::from_real(&[s, s])]).unwrap();
        let half = CMatrix::from_element(2, 2, c(0.5, 0.0));
        assert_close(p.operator().matrix(), &half, 1e-15);
    }

    #[test]
    fn dependent_basis_is_rank_deficient() {
        let a = StateVector::from_real(&[1.0, 2.0, 0.0]);
        let b = StateVector::from_real(&[2.0, 4.0, 0.0]);
        let err = projector_from_basis(&[a, b]).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { .. }));
    }

    #[test]
    fn explicit_projector_validation() {
        let p = Projector::new(Operator::diagonal(&[ONE, ZERO, ONE])).unwrap();
        assert_eq!(p.rank(), 2);
        assert_eq!(p.complement().rank(), 1);
        let not_idem = Operator::diagonal(&[c(0.5, 0.0), ZERO]);
        assert!(Projector::new(not_idem).is_err());
    }

    #[test]
    fn range_basis_is_orthonormal_and_spans_range() {
        let p = random_projector(7, 3, 5).unwrap();
        let q = p.range_basis();
        assert_close(&(q.adjoint() * &q), &CMatrix::identity(3, 3), 1e-12);
        assert_close(&(&q * q.adjoint()), p.operator().matrix(), 1e-12);
        for col in q.column_iter() {
            let pivot = col.iter().fold(ZERO, |acc, z| if z.norm() > acc.norm() { *z } else { acc });
            assert!(pivot.im.abs() < 1e-15 && pivot.re > 0.0);
        }
    }

    #[test]
    fn random_hermitian_is_deterministic_and_exactly_hermitian() {
        let a = random_hermitian(4, 42);
        let b = random_hermitian(4, 42);
        assert_eq!(a, b);
        assert_eq!(a.hermitian_max_defect(), 0.0);
        assert_ne!(a, random_hermitian(4, 43));
    }

    #[test]
    fn matrix_json_shape_is_validated() {
        let bad = r#"{"dim": 3, "entries": [[[1,0],[0,0]],[[0,0],[1,0]],[[0,0],[0,0]]]}"#;
        let err = serde_json::from_str::<Operator>(bad).unwrap_err();
        assert!(err.to_string().contains("entries shape"), "{err}");
        let good = r#"{"dim": 2, "entries": [[[0,0],[1,0]],[[1,0],[0,0]]]}"#;
        let op: Operator = serde_json::from_str(good).unwrap();
        assert_eq!(op, pauli_x());
        assert!(op.is_hermitian());
    }
}
