//! Dense complex linear-algebra kernels shared by every other module.
//!
//! All covariance algebra in this crate is double precision: the arcsin law and
//! the Riccati recursion are sensitive near |correlation| = 1, so no mixed
//! precision is used anywhere. The heavy factorizations (Hermitian
//! eigendecomposition, Cholesky) are delegated to `faer`; the types here pin
//! down the domain contracts — finiteness on construction, Hermitian symmetry,
//! PSD clamping rules — that the estimation code relies on.
//!
//! Everything in this module is a pure function on immutable inputs and safe to
//! call concurrently.

use faer::linalg::solvers::{Llt, Solve};
use faer::{c64, Mat, Side};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Absolute tolerance for Hermitian symmetry checks.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Relative eigenvalue clamp for [`matrix_sqrt_psd`]: eigenvalues in
/// `[-PSD_CLAMP_REL * lambda_max, 0)` are treated as exact zeros.
pub const PSD_CLAMP_REL: f64 = 1e-10;

/// Allowed overshoot past |x| = 1 in [`elementwise_arcsin`]. Rounding pushes
/// unit-diagonal normalized covariances slightly past 1.
pub const ARCSIN_OVERSHOOT: f64 = 1e-12;

// ---------------------------------------------------------------------------
// ComplexMatrix
// ---------------------------------------------------------------------------

/// Dense complex matrix with double-precision entries.
///
/// Entries are addressed as `(row, col)`; construction from external data
/// rejects non-finite values.
#[derive(Clone, Debug)]
pub struct ComplexMatrix {
    m: Mat<c64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            m: Mat::zeros(rows, cols),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            m: Mat::identity(dim, dim),
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        Self {
            m: Mat::from_fn(rows, cols, |i, j| f(i, j)),
        }
    }

    /// Builds a matrix from row-major nested slices, rejecting ragged shapes
    /// and non-finite entries.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != ncols {
                return Err(Error::dim(format!(
                    "row {i} has {} entries, expected {ncols}",
                    r.len()
                )));
            }
        }
        let out = Self::from_fn(nrows, ncols, |i, j| rows[i][j]);
        out.validate_finite()?;
        Ok(out)
    }

    pub fn rows(&self) -> usize {
        self.m.nrows()
    }

    pub fn cols(&self) -> usize {
        self.m.ncols()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.m[(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.m[(i, j)] = v;
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self {
            m: self.m.adjoint().to_owned(),
        }
    }

    /// Plain transpose (no conjugation).
    pub fn transpose(&self) -> Self {
        Self {
            m: self.m.transpose().to_owned(),
        }
    }

    pub fn scaled(&self, alpha: Complex64) -> Self {
        Self {
            m: faer::Scale(alpha) * &self.m,
        }
    }

    pub fn mul_vec(&self, v: &ComplexVector) -> ComplexVector {
        assert_eq!(self.cols(), v.len(), "matrix-vector shape mismatch");
        ComplexVector { v: &self.m * &v.v }
    }

    pub fn column(&self, j: usize) -> ComplexVector {
        ComplexVector::from_fn(self.rows(), |i| self.get(i, j))
    }

    pub fn row(&self, i: usize) -> ComplexVector {
        ComplexVector::from_fn(self.cols(), |j| self.get(i, j))
    }

    pub fn trace(&self) -> Complex64 {
        let n = self.rows().min(self.cols());
        (0..n).map(|i| self.get(i, i)).sum()
    }

    pub fn norm_max(&self) -> f64 {
        self.m.norm_max()
    }

    pub fn norm_l2(&self) -> f64 {
        self.m.norm_l2()
    }

    /// Largest entrywise absolute difference; matrices must share a shape.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(
            (self.rows(), self.cols()),
            (other.rows(), other.cols()),
            "shape mismatch"
        );
        let mut worst = 0.0f64;
        for j in 0..self.cols() {
            for i in 0..self.rows() {
                worst = worst.max((self.get(i, j) - other.get(i, j)).norm());
            }
        }
        worst
    }

    pub fn real_part(&self) -> RealMatrix {
        RealMatrix::from_fn(self.rows(), self.cols(), |i, j| self.get(i, j).re)
    }

    pub fn imag_part(&self) -> RealMatrix {
        RealMatrix::from_fn(self.rows(), self.cols(), |i, j| self.get(i, j).im)
    }

    pub fn from_re_im(re: &RealMatrix, im: &RealMatrix) -> Result<Self> {
        if re.rows() != im.rows() || re.cols() != im.cols() {
            return Err(Error::dim("real/imaginary part shapes differ"));
        }
        Ok(Self::from_fn(re.rows(), re.cols(), |i, j| {
            Complex64::new(re.get(i, j), im.get(i, j))
        }))
    }

    pub fn validate_finite(&self) -> Result<()> {
        for j in 0..self.cols() {
            for i in 0..self.rows() {
                let v = self.get(i, j);
                if !v.re.is_finite() || !v.im.is_finite() {
                    return Err(Error::Domain(format!("non-finite entry at ({i}, {j})")));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn from_faer(m: Mat<c64>) -> Self {
        Self { m }
    }

    pub(crate) fn as_faer(&self) -> &Mat<c64> {
        &self.m
    }
}

impl PartialEq for ComplexMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.rows() == other.rows()
            && self.cols() == other.cols()
            && (0..self.cols())
                .all(|j| (0..self.rows()).all(|i| self.get(i, j) == other.get(i, j)))
    }
}

impl std::ops::Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.cols(), rhs.rows(), "matmul shape mismatch");
        ComplexMatrix {
            m: &self.m * &rhs.m,
        }
    }
}

impl std::ops::Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix {
            m: &self.m + &rhs.m,
        }
    }
}

impl std::ops::Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix {
            m: &self.m - &rhs.m,
        }
    }
}

// ---------------------------------------------------------------------------
// ComplexVector
// ---------------------------------------------------------------------------

/// Dense complex column vector.
#[derive(Clone, Debug)]
pub struct ComplexVector {
    v: faer::Col<c64>,
}

impl ComplexVector {
    pub fn zeros(len: usize) -> Self {
        Self {
            v: faer::Col::zeros(len),
        }
    }

    pub fn from_fn(len: usize, mut f: impl FnMut(usize) -> Complex64) -> Self {
        Self {
            v: faer::Col::from_fn(len, |i| f(i)),
        }
    }

    pub fn from_slice(entries: &[Complex64]) -> Self {
        Self::from_fn(entries.len(), |i| entries[i])
    }

    pub fn len(&self) -> usize {
        self.v.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> Complex64 {
        self.v[i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: Complex64) {
        self.v[i] = value;
    }

    pub fn norm_l2(&self) -> f64 {
        self.v.norm_l2()
    }

    pub fn scaled(&self, alpha: Complex64) -> Self {
        Self {
            v: faer::Scale(alpha) * &self.v,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Complex64> + '_ {
        (0..self.len()).map(|i| self.get(i))
    }

    pub(crate) fn as_faer(&self) -> &faer::Col<c64> {
        &self.v
    }

    pub(crate) fn from_faer(v: faer::Col<c64>) -> Self {
        Self { v }
    }
}

impl std::ops::Add for &ComplexVector {
    type Output = ComplexVector;
    fn add(self, rhs: &ComplexVector) -> ComplexVector {
        ComplexVector { v: &self.v + &rhs.v }
    }
}

impl std::ops::Sub for &ComplexVector {
    type Output = ComplexVector;
    fn sub(self, rhs: &ComplexVector) -> ComplexVector {
        ComplexVector { v: &self.v - &rhs.v }
    }
}

impl PartialEq for ComplexVector {
    fn eq(&self, other: &Self) -> bool {
        self.len() == other.len() && (0..self.len()).all(|i| self.get(i) == other.get(i))
    }
}

// ---------------------------------------------------------------------------
// RealMatrix
// ---------------------------------------------------------------------------

/// Dense real matrix, row-major. Only used for entrywise real operations such
/// as the arcsin law, so it stays deliberately small.
#[derive(Clone, Debug, PartialEq)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_fn(dim, dim, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }
}

// ---------------------------------------------------------------------------
// RealDiagonal
// ---------------------------------------------------------------------------

/// Real diagonal matrix stored as its diagonal. Used for the Bussgang linear
/// operator, which is diagonal by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct RealDiagonal {
    d: Vec<f64>,
}

impl RealDiagonal {
    pub fn new(diag: Vec<f64>) -> Self {
        Self { d: diag }
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.d[i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.d
    }

    /// `A * x` for diagonal `A`.
    pub fn apply(&self, x: &ComplexVector) -> ComplexVector {
        assert_eq!(self.dim(), x.len(), "diagonal apply shape mismatch");
        ComplexVector::from_fn(x.len(), |i| x.get(i) * self.d[i])
    }

    /// `A * X` for diagonal `A` (row scaling).
    pub fn scale_rows(&self, x: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim(), x.rows(), "diagonal row-scale shape mismatch");
        ComplexMatrix::from_fn(x.rows(), x.cols(), |i, j| x.get(i, j) * self.d[i])
    }

    /// `A * X * A^H` for real diagonal `A`: entry `(i, j)` scales by `d_i d_j`.
    pub fn sandwich(&self, x: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim(), x.rows(), "diagonal sandwich shape mismatch");
        assert_eq!(self.dim(), x.cols(), "diagonal sandwich shape mismatch");
        ComplexMatrix::from_fn(x.rows(), x.cols(), |i, j| x.get(i, j) * self.d[i] * self.d[j])
    }

    pub fn to_matrix(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.dim(), self.dim(), |i, j| {
            if i == j {
                Complex64::new(self.d[i], 0.0)
            } else {
                Complex64::ZERO
            }
        })
    }
}

// ---------------------------------------------------------------------------
// HermitianMatrix
// ---------------------------------------------------------------------------

/// Complex Hermitian matrix. Construction via [`HermitianMatrix::try_new`]
/// verifies symmetry to [`HERMITIAN_TOL`] and that diagonal entries are real
/// and not materially negative; [`HermitianMatrix::from_symmetrized`] forces
/// symmetry by averaging with the adjoint.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix {
    m: ComplexMatrix,
}

impl HermitianMatrix {
    pub fn try_new(m: ComplexMatrix) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(Error::dim(format!(
                "Hermitian matrix must be square, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        m.validate_finite()?;
        let mut min_diag = f64::INFINITY;
        for i in 0..m.rows() {
            for j in i..m.cols() {
                let delta = (m.get(i, j) - m.get(j, i).conj()).norm();
                if delta > HERMITIAN_TOL {
                    return Err(Error::Domain(format!(
                        "matrix not Hermitian at ({i}, {j}): asymmetry {delta:.3e}"
                    )));
                }
            }
            min_diag = min_diag.min(m.get(i, i).re);
        }
        if m.rows() > 0 && min_diag < -1e-10 {
            return Err(Error::NotPsd {
                min_eigenvalue: min_diag,
                threshold: -1e-10,
            });
        }
        Ok(Self { m })
    }

    /// Wraps `(M + M^H) / 2` without further validation.
    pub fn from_symmetrized(m: &ComplexMatrix) -> Self {
        assert_eq!(m.rows(), m.cols(), "cannot symmetrize a non-square matrix");
        let half = Complex64::new(0.5, 0.0);
        let sym = ComplexMatrix::from_fn(m.rows(), m.cols(), |i, j| {
            (m.get(i, j) + m.get(j, i).conj()) * half
        });
        Self { m: sym }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            m: ComplexMatrix::identity(dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            m: ComplexMatrix::zeros(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.m.rows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.m.get(i, j)
    }

    /// Real trace (the imaginary part is zero for Hermitian matrices).
    pub fn trace_re(&self) -> f64 {
        (0..self.dim()).map(|i| self.get(i, i).re).sum()
    }

    pub fn as_matrix(&self) -> &ComplexMatrix {
        &self.m
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.m
    }

    pub fn scaled_re(&self, alpha: f64) -> Self {
        Self {
            m: self.m.scaled(Complex64::new(alpha, 0.0)),
        }
    }

    /// Eigenvalues in nondecreasing order.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        self.m
            .as_faer()
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|_| Error::SingularMatrix)
    }

    /// Full eigendecomposition `(U, lambda)` with eigenvalues nondecreasing.
    pub fn eigen(&self) -> Result<(ComplexMatrix, Vec<f64>)> {
        let evd = self
            .m
            .as_faer()
            .self_adjoint_eigen(Side::Lower)
            .map_err(|_| Error::SingularMatrix)?;
        let u = ComplexMatrix::from_faer(evd.U().to_owned());
        let s: Vec<f64> = evd.S().column_vector().iter().map(|x| x.re).collect();
        Ok((u, s))
    }

    pub(crate) fn llt(&self) -> Result<Llt<c64>> {
        self.m
            .as_faer()
            .llt(Side::Lower)
            .map_err(|_| Error::SingularMatrix)
    }
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Hermitian PSD matrix square root via full eigendecomposition.
///
/// Eigenvalues in `[-PSD_CLAMP_REL * lambda_max, 0)` are clamped to zero so
/// that correlation matrices with (numerically) zero eigenvalues are accepted;
/// anything below the clamp window is a [`Error::NotPsd`]. The result `B`
/// satisfies `B * B^H ~= S`.
pub fn matrix_sqrt_psd(s: &HermitianMatrix) -> Result<ComplexMatrix> {
    let (u, evals) = s.eigen()?;
    let lambda_max = evals.iter().copied().fold(0.0f64, f64::max);
    let tol = PSD_CLAMP_REL * lambda_max;
    let mut roots = Vec::with_capacity(evals.len());
    for &lambda in &evals {
        if lambda < -tol {
            return Err(Error::NotPsd {
                min_eigenvalue: lambda,
                threshold: -tol,
            });
        }
        roots.push(lambda.max(0.0).sqrt());
    }
    // B = U * diag(sqrt(lambda)) * U^H, assembled as (U scaled by column) * U^H.
    let scaled = ComplexMatrix::from_fn(u.rows(), u.cols(), |i, j| u.get(i, j) * roots[j]);
    Ok(&scaled * &u.adjoint())
}

/// Solves `S X = B` for Hermitian positive-definite `S` via Cholesky, without
/// forming an inverse. Breakdown of the factorization reports
/// [`Error::SingularMatrix`].
pub fn hermitian_solve(s: &HermitianMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if s.dim() != b.rows() {
        return Err(Error::dim(format!(
            "solve shape mismatch: S is {0}x{0}, B has {1} rows",
            s.dim(),
            b.rows()
        )));
    }
    let llt = s.llt()?;
    Ok(ComplexMatrix::from_faer(llt.solve(b.as_faer())))
}

/// Vector right-hand-side variant of [`hermitian_solve`].
pub fn hermitian_solve_vec(s: &HermitianMatrix, b: &ComplexVector) -> Result<ComplexVector> {
    if s.dim() != b.len() {
        return Err(Error::dim(format!(
            "solve shape mismatch: S is {0}x{0}, b has {1} entries",
            s.dim(),
            b.len()
        )));
    }
    let llt = s.llt()?;
    let x = llt.solve(b.as_faer().as_mat());
    Ok(ComplexVector::from_fn(b.len(), |i| x[(i, 0)]))
}

/// Kronecker product `A (x) B`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (rb, cb) = (b.rows(), b.cols());
    ComplexMatrix::from_fn(a.rows() * rb, a.cols() * cb, |i, j| {
        a.get(i / rb, j / cb) * b.get(i % rb, j % cb)
    })
}

/// Entrywise arcsin in radians. Entries with `1 < |x| <= 1 + ARCSIN_OVERSHOOT`
/// are clamped to `+-1` first; larger magnitudes are a domain error.
pub fn elementwise_arcsin(x: &RealMatrix) -> Result<RealMatrix> {
    let mut out = RealMatrix::zeros(x.rows(), x.cols());
    for i in 0..x.rows() {
        for j in 0..x.cols() {
            let v = x.get(i, j);
            let a = v.abs();
            let clamped = if a <= 1.0 {
                v
            } else if a <= 1.0 + ARCSIN_OVERSHOOT {
                v.signum()
            } else {
                return Err(Error::Domain(format!(
                    "arcsin argument {v} at ({i}, {j}) exceeds 1 + {ARCSIN_OVERSHOOT:.0e}"
                )));
            };
            out.set(i, j, clamped.asin());
        }
    }
    Ok(out)
}

/// Assembles a block-diagonal matrix from square blocks.
pub fn block_diag(blocks: &[&ComplexMatrix]) -> ComplexMatrix {
    let total: usize = blocks.iter().map(|b| b.rows()).sum();
    let mut out = ComplexMatrix::zeros(total, total);
    let mut offset = 0;
    for b in blocks {
        assert_eq!(b.rows(), b.cols(), "block_diag expects square blocks");
        for i in 0..b.rows() {
            for j in 0..b.cols() {
                out.set(offset + i, offset + j, b.get(i, j));
            }
        }
        offset += b.rows();
    }
    out
}

/// Clamps a Hermitian matrix to the PSD cone with an absolute eigenvalue
/// floor: eigenvalues in `[floor, 0)` become 0, anything below `floor` is an
/// error. Returns the (possibly reconstructed) matrix and whether clamping
/// actually rewrote it; matrices that are already PSD are returned unchanged.
pub(crate) fn clamp_psd_abs(
    h: &HermitianMatrix,
    floor: f64,
) -> Result<(HermitianMatrix, bool)> {
    debug_assert!(floor <= 0.0);
    let evals = h.eigenvalues()?;
    let min = evals.iter().copied().fold(f64::INFINITY, f64::min);
    if min >= 0.0 || evals.is_empty() {
        return Ok((h.clone(), false));
    }
    if min < floor {
        return Err(Error::NotPsd {
            min_eigenvalue: min,
            threshold: floor,
        });
    }
    let (u, evals) = h.eigen()?;
    let clamped: Vec<f64> = evals.iter().map(|&l| l.max(0.0)).collect();
    let scaled = ComplexMatrix::from_fn(u.rows(), u.cols(), |i, j| u.get(i, j) * clamped[j]);
    let rebuilt = &scaled * &u.adjoint();
    Ok((HermitianMatrix::from_symmetrized(&rebuilt), true))
}
