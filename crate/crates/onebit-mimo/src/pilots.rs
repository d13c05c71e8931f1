//! Pilot construction, one-bit quantization, and the Bussgang decomposition.
//!
//! The one-bit quantizer `Q(y) = (sign(Re y) + j sign(Im y)) / sqrt(2)` is
//! rewritten as `r = A y + q` with a diagonal linear operator
//! `A = sqrt(2/pi) diag(C_y)^{-1/2}` and quantization noise `q` that is
//! uncorrelated with the Gaussian input. The quantized-output covariance `C_r`
//! follows the arcsin law. [`PilotContext`] bundles every pilot-dependent
//! quantity both estimators need; all of it is deterministic in
//! `(Phi, rho, R)` and invariant across slots, so it is computed once per
//! stacked-correlation realization and shared read-only by all workers.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_2_PI};
use std::sync::OnceLock;

use faer::c64;
use faer::linalg::solvers::Llt;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{
    clamp_psd_abs, elementwise_arcsin, kron, ComplexMatrix, ComplexVector, HermitianMatrix,
    RealDiagonal,
};

/// Absolute eigenvalue floor when clamping the effective-noise covariance:
/// the arcsin-law covariance minus its linearized part is PSD in theory, but
/// rounding can leave eigenvalues slightly negative.
pub const NOISE_CLAMP_ABS: f64 = -1e-8;

/// Pilot orthogonality tolerance (`Phi^T Phi^* = tau I`).
pub const PILOT_ORTHOGONALITY_TOL: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Pilots and quantizer
// ---------------------------------------------------------------------------

/// First `users` columns of the `tau x tau` DFT matrix:
/// entry `(m, k) = e^{-j 2 pi m k / tau}`. Columns are orthogonal with
/// `Phi^T Phi^* = tau I` and every entry has unit modulus.
pub fn dft_pilots(tau: usize, users: usize) -> Result<ComplexMatrix> {
    if users > tau {
        return Err(Error::TooManyUsers {
            users,
            pilot_len: tau,
        });
    }
    let step = -2.0 * std::f64::consts::PI / tau as f64;
    Ok(ComplexMatrix::from_fn(tau, users, |m, k| {
        Complex64::from_polar(1.0, step * (m * k) as f64)
    }))
}

/// Stacked pilot matrix `Phi_bar = Phi (x) sqrt(rho) I_M` mapping the stacked
/// channel (length `M*K`) to the vectorized noiseless receive signal
/// (length `M*tau`).
pub fn stacked_pilot_matrix(phi: &ComplexMatrix, rho: f64, antennas: usize) -> ComplexMatrix {
    let scaled_id = ComplexMatrix::identity(antennas).scaled(Complex64::new(rho.sqrt(), 0.0));
    kron(phi, &scaled_id)
}

/// One-bit quantizer applied entrywise:
/// `(sign(Re) + j sign(Im)) / sqrt(2)` with `sign(0) := +1` so that ties break
/// deterministically.
pub fn one_bit_quantize(y: &ComplexVector) -> ComplexVector {
    #[inline]
    fn sgn(x: f64) -> f64 {
        if x >= 0.0 {
            FRAC_1_SQRT_2
        } else {
            -FRAC_1_SQRT_2
        }
    }
    ComplexVector::from_fn(y.len(), |i| {
        let v = y.get(i);
        Complex64::new(sgn(v.re), sgn(v.im))
    })
}

// ---------------------------------------------------------------------------
// Bussgang quantities
// ---------------------------------------------------------------------------

/// Covariance of the unquantized receive signal, `C_y = Phi_bar R Phi_bar^H + I`.
pub fn receive_covariance(
    phi_bar: &ComplexMatrix,
    stacked_correlation: &HermitianMatrix,
) -> Result<HermitianMatrix> {
    if phi_bar.cols() != stacked_correlation.dim() {
        return Err(Error::dim(format!(
            "pilot matrix has {} columns but correlation is {}x{}",
            phi_bar.cols(),
            stacked_correlation.dim(),
            stacked_correlation.dim()
        )));
    }
    let pr = phi_bar * stacked_correlation.as_matrix();
    let mut c = &pr * &phi_bar.adjoint();
    for i in 0..c.rows() {
        let v = c.get(i, i) + Complex64::new(1.0, 0.0);
        c.set(i, i, v);
    }
    Ok(HermitianMatrix::from_symmetrized(&c))
}

/// Bussgang linear operator `A = sqrt(2/pi) diag(C_y)^{-1/2}` (real, diagonal,
/// positive).
pub fn bussgang_operator(c_y: &HermitianMatrix) -> Result<RealDiagonal> {
    let coeff = FRAC_2_PI.sqrt();
    let mut d = Vec::with_capacity(c_y.dim());
    for i in 0..c_y.dim() {
        let v = c_y.get(i, i).re;
        if !(v > 0.0) {
            return Err(Error::Domain(format!(
                "receive covariance diagonal entry {i} is {v}; must be positive"
            )));
        }
        d.push(coeff / v.sqrt());
    }
    Ok(RealDiagonal::new(d))
}

/// Arcsin-law covariance of the quantized output:
/// `C_r = (2/pi) [arcsin(S^{-1/2} Re{C_y} S^{-1/2}) + j arcsin(S^{-1/2} Im{C_y} S^{-1/2})]`
/// with `S = diag(C_y)`. Has an exactly unit diagonal.
pub fn arcsin_covariance(c_y: &HermitianMatrix) -> Result<HermitianMatrix> {
    let n = c_y.dim();
    let mut inv_sqrt = Vec::with_capacity(n);
    for i in 0..n {
        let v = c_y.get(i, i).re;
        if !(v > 0.0) {
            return Err(Error::Domain(format!(
                "receive covariance diagonal entry {i} is {v}; must be positive"
            )));
        }
        inv_sqrt.push(1.0 / v.sqrt());
    }
    let norm_re = crate::linalg::RealMatrix::from_fn(n, n, |i, j| {
        c_y.get(i, j).re * inv_sqrt[i] * inv_sqrt[j]
    });
    let norm_im = crate::linalg::RealMatrix::from_fn(n, n, |i, j| {
        c_y.get(i, j).im * inv_sqrt[i] * inv_sqrt[j]
    });
    let asin_re = elementwise_arcsin(&norm_re)?;
    let asin_im = elementwise_arcsin(&norm_im)?;
    let c_r = ComplexMatrix::from_fn(n, n, |i, j| {
        Complex64::new(FRAC_2_PI * asin_re.get(i, j), FRAC_2_PI * asin_im.get(i, j))
    });
    HermitianMatrix::try_new(c_r)
}

/// Covariance of the effective noise `n_eff = A n + q` in the linearized
/// observation `r = Phi_tilde h + n_eff`:
/// `C_n_eff = A A^H + C_q` with `C_q = C_r - A C_y A^H` (equivalently
/// `C_r - Phi_tilde R Phi_tilde^H`). Eigenvalues in `[-1e-8, 0)` are clamped
/// to zero; anything lower is an error.
pub fn effective_noise_covariance(
    a: &RealDiagonal,
    c_y: &HermitianMatrix,
    c_r: &HermitianMatrix,
) -> Result<HermitianMatrix> {
    effective_noise_with_factor(a, c_y, c_r).map(|(h, _)| h)
}

/// Same as [`effective_noise_covariance`] but keeps the Cholesky factor when
/// the matrix is already positive definite (the common case), so callers can
/// reuse it for solves.
pub(crate) fn effective_noise_with_factor(
    a: &RealDiagonal,
    c_y: &HermitianMatrix,
    c_r: &HermitianMatrix,
) -> Result<(HermitianMatrix, Option<Llt<c64>>)> {
    let n = c_r.dim();
    if a.dim() != n || c_y.dim() != n {
        return Err(Error::dim(
            "Bussgang operator and covariances must share one dimension".to_string(),
        ));
    }
    let linear_part = a.sandwich(c_y.as_matrix());
    let mut raw = c_r.as_matrix() - &linear_part;
    for i in 0..n {
        let v = raw.get(i, i) + Complex64::new(a.get(i) * a.get(i), 0.0);
        raw.set(i, i, v);
    }
    let h = HermitianMatrix::from_symmetrized(&raw);
    // PD already? Cholesky succeeding means no negative eigenvalues to clamp.
    match h.llt() {
        Ok(f) => Ok((h, Some(f))),
        Err(_) => {
            let (clamped, _) = clamp_psd_abs(&h, NOISE_CLAMP_ABS)?;
            let factor = clamped.llt().ok();
            Ok((clamped, factor))
        }
    }
}

// ---------------------------------------------------------------------------
// PilotContext
// ---------------------------------------------------------------------------

/// Every pilot-dependent quantity used by the estimators, computed once per
/// stacked-correlation realization and shared read-only afterwards.
#[derive(Debug)]
pub struct PilotContext {
    phi: ComplexMatrix,
    phi_bar: ComplexMatrix,
    bussgang_gain: RealDiagonal,
    phi_tilde: ComplexMatrix,
    c_y: HermitianMatrix,
    c_r: HermitianMatrix,
    c_n_eff: HermitianMatrix,
    rho: f64,
    antennas: usize,
    users: usize,
    pilot_len: usize,
    c_r_factor: OnceLock<Option<Llt<c64>>>,
    c_n_factor: OnceLock<Option<Llt<c64>>>,
}

impl PilotContext {
    /// Builds the context for pilots `phi` (`tau x K`), transmit SNR `rho`
    /// (linear), and the stacked `MK x MK` spatial correlation.
    pub fn new(phi: &ComplexMatrix, rho: f64, stacked_correlation: &HermitianMatrix) -> Result<Self> {
        if !(rho.is_finite() && rho >= 0.0) {
            return Err(Error::Domain(format!("transmit SNR {rho} must be >= 0")));
        }
        let pilot_len = phi.rows();
        let users = phi.cols();
        if users == 0 || pilot_len == 0 {
            return Err(Error::dim("pilot matrix must be non-empty"));
        }
        if stacked_correlation.dim() % users != 0 {
            return Err(Error::dim(format!(
                "correlation dimension {} not divisible by {} users",
                stacked_correlation.dim(),
                users
            )));
        }
        let antennas = stacked_correlation.dim() / users;

        // column-wise orthogonality: Phi^T Phi^* = tau I
        let gram = &phi.adjoint() * phi;
        for k in 0..users {
            for l in 0..users {
                let expected = if k == l {
                    Complex64::new(pilot_len as f64, 0.0)
                } else {
                    Complex64::ZERO
                };
                if (gram.get(k, l) - expected).norm() > pilot_len as f64 * PILOT_ORTHOGONALITY_TOL {
                    return Err(Error::Domain(format!(
                        "pilot columns {k} and {l} are not orthogonal"
                    )));
                }
            }
        }

        let phi_bar = stacked_pilot_matrix(phi, rho, antennas);
        let c_y = receive_covariance(&phi_bar, stacked_correlation)?;
        let bussgang_gain = bussgang_operator(&c_y)?;
        let phi_tilde = bussgang_gain.scale_rows(&phi_bar);
        let c_r = arcsin_covariance(&c_y)?;
        let (c_n_eff, c_n_factor_value) =
            effective_noise_with_factor(&bussgang_gain, &c_y, &c_r)?;

        let c_n_factor = OnceLock::new();
        let _ = c_n_factor.set(c_n_factor_value);
        Ok(Self {
            phi: phi.clone(),
            phi_bar,
            bussgang_gain,
            phi_tilde,
            c_y,
            c_r,
            c_n_eff,
            rho,
            antennas,
            users,
            pilot_len,
            c_r_factor: OnceLock::new(),
            c_n_factor,
        })
    }

    pub fn phi(&self) -> &ComplexMatrix {
        &self.phi
    }

    pub fn phi_bar(&self) -> &ComplexMatrix {
        &self.phi_bar
    }

    /// The diagonal Bussgang linear operator `A`.
    pub fn bussgang_gain(&self) -> &RealDiagonal {
        &self.bussgang_gain
    }

    /// Effective pilot matrix `Phi_tilde = A Phi_bar`.
    pub fn phi_tilde(&self) -> &ComplexMatrix {
        &self.phi_tilde
    }

    pub fn c_y(&self) -> &HermitianMatrix {
        &self.c_y
    }

    pub fn c_r(&self) -> &HermitianMatrix {
        &self.c_r
    }

    pub fn c_n_eff(&self) -> &HermitianMatrix {
        &self.c_n_eff
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn pilot_len(&self) -> usize {
        self.pilot_len
    }

    /// Observation dimension `M * tau`.
    pub fn observation_len(&self) -> usize {
        self.antennas * self.pilot_len
    }

    /// State dimension `M * K`.
    pub fn state_len(&self) -> usize {
        self.antennas * self.users
    }

    pub(crate) fn c_r_llt(&self) -> Result<&Llt<c64>> {
        self.c_r_factor
            .get_or_init(|| self.c_r.llt().ok())
            .as_ref()
            .ok_or(Error::SingularMatrix)
    }

    pub(crate) fn c_n_llt(&self) -> Result<&Llt<c64>> {
        self.c_n_factor
            .get_or_init(|| self.c_n_eff.llt().ok())
            .as_ref()
            .ok_or(Error::SingularMatrix)
    }
}

impl PartialEq for PilotContext {
    fn eq(&self, other: &Self) -> bool {
        self.rho == other.rho
            && self.phi == other.phi
            && self.phi_bar == other.phi_bar
            && self.bussgang_gain == other.bussgang_gain
            && self.phi_tilde == other.phi_tilde
            && self.c_y == other.c_y
            && self.c_r == other.c_r
            && self.c_n_eff == other.c_n_eff
    }
}
