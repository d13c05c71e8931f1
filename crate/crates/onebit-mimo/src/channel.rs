//! Spatially and temporally correlated user channels.
//!
//! Per-user channels follow a first-order Gauss-Markov process across fading
//! blocks,
//!
//! ```text
//! h_0 = R^{1/2} g_0,        h_i = eta * h_{i-1} + sqrt(1 - eta^2) * R^{1/2} g_i,
//! ```
//!
//! with `g_i` a circularly-symmetric complex normal innovation (unit per-entry
//! variance, so real and imaginary parts each have variance 1/2). Spatial
//! correlation across base-station antennas uses the exponential model with a
//! shared magnitude `r` and a per-user phase; the temporal coefficient comes
//! either straight from configuration or from Jakes' model via the user speed.

use num_complex::Complex64;
use rand::{Rng, RngExt};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{block_diag, matrix_sqrt_psd, ComplexMatrix, ComplexVector, HermitianMatrix};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Largest Bessel argument `2 pi f_D t` accepted by [`jakes_eta`]; the power
/// series below is validated on this range only.
const JAKES_MAX_ARG: f64 = 3.0;

// ---------------------------------------------------------------------------
// Spatial correlation
// ---------------------------------------------------------------------------

/// Exponential spatial correlation matrix: Toeplitz with entry
/// `(m, n) = (r e^{j theta})^{n - m}` above the diagonal and conjugates below,
/// unit diagonal.
pub fn exponential_correlation(r: f64, theta: f64, antennas: usize) -> Result<HermitianMatrix> {
    if !(0.0..1.0).contains(&r) || !r.is_finite() {
        return Err(Error::InvalidCorrelation(r));
    }
    let rk = Complex64::from_polar(r, theta);
    // powers of r e^{j theta} up to M-1
    let mut powers = Vec::with_capacity(antennas);
    let mut acc = Complex64::new(1.0, 0.0);
    for _ in 0..antennas {
        powers.push(acc);
        acc *= rk;
    }
    let m = ComplexMatrix::from_fn(antennas, antennas, |i, j| {
        if j >= i {
            powers[j - i]
        } else {
            powers[i - j].conj()
        }
    });
    HermitianMatrix::try_new(m)
}

/// Block-diagonal stacked correlation for independently correlated users.
pub fn block_correlation(blocks: &[HermitianMatrix]) -> Result<HermitianMatrix> {
    if blocks.is_empty() {
        return Err(Error::dim("block_correlation needs at least one block"));
    }
    let dim = blocks[0].dim();
    if blocks.iter().any(|b| b.dim() != dim) {
        return Err(Error::dim("all correlation blocks must share one size"));
    }
    let mats: Vec<&ComplexMatrix> = blocks.iter().map(|b| b.as_matrix()).collect();
    HermitianMatrix::try_new(block_diag(&mats))
}

/// Per-user spatial correlation description: shared magnitude, per-user phase.
#[derive(Clone, Debug)]
pub struct SpatialModel {
    r: f64,
    theta: Vec<f64>,
    antennas: usize,
}

impl SpatialModel {
    pub fn new(r: f64, theta: Vec<f64>, antennas: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&r) || !r.is_finite() {
            return Err(Error::InvalidCorrelation(r));
        }
        if theta.is_empty() {
            return Err(Error::dim("at least one user phase required"));
        }
        Ok(Self { r, theta, antennas })
    }

    pub fn num_users(&self) -> usize {
        self.theta.len()
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    /// Spatial correlation matrix of user `k`.
    pub fn correlation(&self, k: usize) -> Result<HermitianMatrix> {
        exponential_correlation(self.r, self.theta[k], self.antennas)
    }

    /// `MK x MK` block-diagonal stacked correlation across all users.
    pub fn stacked_correlation(&self) -> Result<HermitianMatrix> {
        let blocks: Vec<HermitianMatrix> = (0..self.num_users())
            .map(|k| self.correlation(k))
            .collect::<Result<_>>()?;
        block_correlation(&blocks)
    }

    /// Block-diagonal PSD square root of the stacked correlation, assembled
    /// from per-user square roots.
    pub fn stacked_sqrt(&self) -> Result<ComplexMatrix> {
        let roots: Vec<ComplexMatrix> = (0..self.num_users())
            .map(|k| matrix_sqrt_psd(&self.correlation(k)?))
            .collect::<Result<_>>()?;
        let refs: Vec<&ComplexMatrix> = roots.iter().collect();
        Ok(block_diag(&refs))
    }
}

// ---------------------------------------------------------------------------
// Temporal correlation
// ---------------------------------------------------------------------------

/// Per-user temporal correlation coefficients `eta_k` together with the
/// innovation weights `zeta_k = sqrt(1 - eta_k^2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalModel {
    eta: Vec<f64>,
    zeta: Vec<f64>,
}

impl TemporalModel {
    pub fn from_eta(eta: Vec<f64>) -> Result<Self> {
        if eta.is_empty() {
            return Err(Error::dim("at least one temporal coefficient required"));
        }
        for (k, &e) in eta.iter().enumerate() {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::Domain(format!(
                    "temporal coefficient eta[{k}] = {e} outside [0, 1]"
                )));
            }
        }
        let zeta = eta.iter().map(|&e| (1.0 - e * e).max(0.0).sqrt()).collect();
        Ok(Self { eta, zeta })
    }

    /// Same coefficient for every user.
    pub fn uniform(eta: f64, users: usize) -> Result<Self> {
        Self::from_eta(vec![eta; users])
    }

    /// Jakes' model: one speed per user at a common carrier frequency and
    /// channel instantiation interval.
    pub fn from_speeds(v_kmh: &[f64], fc_hz: f64, t_s: f64) -> Result<Self> {
        let eta = v_kmh
            .iter()
            .map(|&v| jakes_eta(v, fc_hz, t_s))
            .collect::<Result<Vec<_>>>()?;
        Self::from_eta(eta)
    }

    pub fn num_users(&self) -> usize {
        self.eta.len()
    }

    pub fn eta(&self, k: usize) -> f64 {
        self.eta[k]
    }

    pub fn zeta(&self, k: usize) -> f64 {
        self.zeta[k]
    }

    pub fn eta_slice(&self) -> &[f64] {
        &self.eta
    }
}

/// Temporal correlation coefficient from Jakes' model,
/// `eta = J0(2 pi f_D t)` with Doppler `f_D = v * f_c / c`.
///
/// Speeds are in km/h. The Bessel series is validated for arguments up to 3
/// (comfortably covering pedestrian-to-vehicular speeds at cellular carriers);
/// larger arguments are rejected.
pub fn jakes_eta(v_kmh: f64, fc_hz: f64, t_s: f64) -> Result<f64> {
    if !fc_hz.is_finite() || fc_hz <= 0.0 {
        return Err(Error::Domain(format!("carrier frequency {fc_hz} must be > 0")));
    }
    if !t_s.is_finite() || t_s <= 0.0 {
        return Err(Error::Domain(format!("slot interval {t_s} must be > 0")));
    }
    let doppler = v_kmh.abs() / 3.6 * fc_hz / SPEED_OF_LIGHT;
    let x = 2.0 * std::f64::consts::PI * doppler * t_s;
    if x > JAKES_MAX_ARG {
        return Err(Error::Domain(format!(
            "Jakes argument {x:.3} exceeds validated range {JAKES_MAX_ARG}"
        )));
    }
    Ok(bessel_j0(x))
}

/// Truncated power series for the zeroth-order Bessel function,
/// `J0(x) = sum_m (-1)^m (x^2/4)^m / (m!)^2`, accurate to well below 1e-7 for
/// |x| <= 3.
fn bessel_j0(x: f64) -> f64 {
    let q = -0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for m in 1..=24 {
        term *= q / ((m * m) as f64);
        sum += term;
        if term.abs() < 1e-17 {
            break;
        }
    }
    sum
}

// ---------------------------------------------------------------------------
// Channel state and evolution
// ---------------------------------------------------------------------------

/// Vectorized stacked channel of all users at one fading block: user-major
/// blocks of `M` antennas each, `M*K` entries total.
#[derive(Clone, Debug)]
pub struct ChannelState {
    h: ComplexVector,
    slot_index: usize,
}

impl ChannelState {
    pub fn h(&self) -> &ComplexVector {
        &self.h
    }

    pub fn slot_index(&self) -> usize {
        self.slot_index
    }

    /// Reshapes the stacked vector into the `M x K` channel matrix.
    pub fn as_matrix(&self, antennas: usize) -> Result<ComplexMatrix> {
        if antennas == 0 || self.h.len() % antennas != 0 {
            return Err(Error::dim(format!(
                "channel length {} not divisible by antenna count {antennas}",
                self.h.len()
            )));
        }
        let users = self.h.len() / antennas;
        Ok(ComplexMatrix::from_fn(antennas, users, |m, k| {
            self.h.get(k * antennas + m)
        }))
    }
}

/// Draws a circularly-symmetric complex normal vector with per-entry variance
/// one (real and imaginary parts are each `N(0, 1/2)`).
pub fn complex_normal_vector<R: Rng + ?Sized>(rng: &mut R, len: usize) -> ComplexVector {
    let scale = 0.5f64.sqrt();
    ComplexVector::from_fn(len, |_| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * scale, im * scale)
    })
}

/// Draws the initial channel `h_0 = R^{1/2} g_0` for a stacked correlation
/// matrix. Computes the matrix square root internally; use
/// [`init_channel_with_sqrt`] when the root is already available.
pub fn init_channel<R: Rng + ?Sized>(
    stacked_correlation: &HermitianMatrix,
    rng: &mut R,
) -> Result<ChannelState> {
    let root = matrix_sqrt_psd(stacked_correlation)?;
    Ok(init_channel_with_sqrt(&root, rng))
}

/// Draws the initial channel from a precomputed `R^{1/2}`.
pub fn init_channel_with_sqrt<R: Rng + ?Sized>(
    stacked_sqrt: &ComplexMatrix,
    rng: &mut R,
) -> ChannelState {
    let g = complex_normal_vector(rng, stacked_sqrt.cols());
    ChannelState {
        h: stacked_sqrt.mul_vec(&g),
        slot_index: 0,
    }
}

/// Advances the channel one fading block:
/// `h_i = eta h_{i-1} + zeta R^{1/2} g_i` applied per user block. Preserves the
/// stationary covariance `R` for any `eta` in `[0, 1]`.
pub fn evolve_channel<R: Rng + ?Sized>(
    state: &ChannelState,
    temporal: &TemporalModel,
    stacked_sqrt: &ComplexMatrix,
    rng: &mut R,
) -> Result<ChannelState> {
    let total = state.h.len();
    if stacked_sqrt.rows() != total || stacked_sqrt.cols() != total {
        return Err(Error::dim(format!(
            "stacked sqrt is {}x{}, expected {total}x{total}",
            stacked_sqrt.rows(),
            stacked_sqrt.cols()
        )));
    }
    let users = temporal.num_users();
    if users == 0 || total % users != 0 {
        return Err(Error::dim(format!(
            "channel length {total} not divisible by {users} users"
        )));
    }
    let per_user = total / users;

    let g = complex_normal_vector(rng, total);
    let innovation = stacked_sqrt.mul_vec(&g);
    let h = ComplexVector::from_fn(total, |i| {
        let k = i / per_user;
        state.h.get(i) * temporal.eta(k) + innovation.get(i) * temporal.zeta(k)
    });
    Ok(ChannelState {
        h,
        slot_index: state.slot_index + 1,
    })
}
