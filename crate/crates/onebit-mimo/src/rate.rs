//! Uplink data-stage model: Bussgang linearization of the quantized data
//! observation, zero-forcing combining, and the per-user achievable-rate
//! lower bound.
//!
//! The default path uses the low-SNR closed forms: a scalar data-stage gain
//! `A_d = sqrt(2/pi) / sqrt(K rho_d + 1)` and quantization-noise covariance
//! `(1 - 2/pi) I`. The exact path recomputes both from the arcsin law on the
//! per-realization receive covariance `rho_d H H^H + I` and is available for
//! sensitivity checks.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_solve, ComplexMatrix, HermitianMatrix};
use crate::pilots::{arcsin_covariance, bussgang_operator};

/// Relative singular-value threshold below which the estimated channel is
/// treated as rank deficient by [`zf_combiner`].
const RANK_TOL: f64 = 1e-10;

/// Scalar data-stage Bussgang model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DataStageModel {
    /// Data transmit SNR (linear).
    pub rho_d: f64,
    /// Scalar Bussgang gain multiplying the identity.
    pub a_d: f64,
    /// Quantization-noise covariance coefficient multiplying the identity.
    pub c_qd: f64,
}

/// Per-user SINR and rate together with their sum.
#[derive(Clone, Debug, PartialEq)]
pub struct RateBreakdown {
    pub per_user_sinr: Vec<f64>,
    pub per_user_rate_bpcu: Vec<f64>,
    pub sum_rate_bpcu: f64,
}

/// Data-stage Bussgang model under the low-SNR approximation:
/// `A_d = sqrt(2/pi) sqrt(1/(K rho_d + 1))`, `C_qd = (1 - 2/pi) I`.
pub fn data_bussgang(users: usize, rho_d: f64) -> DataStageModel {
    let a_d = (2.0 / std::f64::consts::PI).sqrt() / (users as f64 * rho_d + 1.0).sqrt();
    DataStageModel {
        rho_d,
        a_d,
        c_qd: 1.0 - 2.0 / std::f64::consts::PI,
    }
}

/// Zero-forcing combiner `W^T = (H_hat^H H_hat)^{-1} H_hat^H` (`K x M`), so
/// that `W^T H_hat = I_K`. Fails with [`Error::RankDeficient`] when the
/// estimate loses column rank (smallest singular value below `1e-10` of the
/// largest).
pub fn zf_combiner(h_hat: &ComplexMatrix) -> Result<ComplexMatrix> {
    let (m, k) = (h_hat.rows(), h_hat.cols());
    if k == 0 || m < k {
        return Err(Error::RankDeficient);
    }
    let gram_raw = &h_hat.adjoint() * h_hat;
    let gram = HermitianMatrix::from_symmetrized(&gram_raw);
    // singular values of H are sqrt of the Gram eigenvalues
    let evals = gram.eigenvalues()?;
    let max = evals.iter().copied().fold(0.0f64, f64::max);
    let min = evals.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > RANK_TOL * RANK_TOL * max) {
        return Err(Error::RankDeficient);
    }
    hermitian_solve(&gram, &h_hat.adjoint()).map_err(|_| Error::RankDeficient)
}

/// How the quantization-noise quadratic form `w^T C_q w^*` is evaluated.
enum QuantCov<'a> {
    Scalar(f64),
    Full(&'a HermitianMatrix),
}

fn rate_with_parts(
    h_true: &ComplexMatrix,
    h_hat: &ComplexMatrix,
    combiner_t: &ComplexMatrix,
    rho_d: f64,
    a_diag: &[f64],
    quant: &QuantCov<'_>,
) -> Result<RateBreakdown> {
    let (m, k) = (h_true.rows(), h_true.cols());
    if h_hat.rows() != m || h_hat.cols() != k {
        return Err(Error::dim(format!(
            "true channel is {m}x{k}, estimate is {}x{}",
            h_hat.rows(),
            h_hat.cols()
        )));
    }
    if combiner_t.rows() != k || combiner_t.cols() != m {
        return Err(Error::dim(format!(
            "combiner must be {k}x{m}, got {}x{}",
            combiner_t.rows(),
            combiner_t.cols()
        )));
    }
    if a_diag.len() != m {
        return Err(Error::dim("data-stage gain dimension mismatch"));
    }

    let mut per_user_sinr = Vec::with_capacity(k);
    let mut per_user_rate = Vec::with_capacity(k);
    for user in 0..k {
        // w^T A h_j without conjugating the combiner row
        let dot_a = |col: usize, of: &ComplexMatrix| -> Complex64 {
            (0..m)
                .map(|i| combiner_t.get(user, i) * a_diag[i] * of.get(i, col))
                .sum()
        };
        let signal = {
            let c = dot_a(user, h_hat);
            rho_d * c.norm_sqr()
        };
        let mut interference = 0.0;
        for j in 0..k {
            if j != user {
                interference += rho_d * dot_a(j, h_hat).norm_sqr();
            }
        }
        let mut est_error = 0.0;
        for j in 0..k {
            let e: Complex64 = (0..m)
                .map(|i| {
                    combiner_t.get(user, i) * a_diag[i] * (h_true.get(i, j) - h_hat.get(i, j))
                })
                .sum();
            est_error += rho_d * e.norm_sqr();
        }
        // ||w^T A||^2
        let noise: f64 = (0..m)
            .map(|i| combiner_t.get(user, i).norm_sqr() * a_diag[i] * a_diag[i])
            .sum();
        let quant_term = match quant {
            QuantCov::Scalar(c) => {
                c * (0..m)
                    .map(|i| combiner_t.get(user, i).norm_sqr())
                    .sum::<f64>()
            }
            QuantCov::Full(c_q) => {
                // w^T C_q w^*
                let mut acc = Complex64::ZERO;
                for i in 0..m {
                    for j in 0..m {
                        acc += combiner_t.get(user, i)
                            * c_q.get(i, j)
                            * combiner_t.get(user, j).conj();
                    }
                }
                acc.re
            }
        };
        let denom = interference + est_error + noise + quant_term;
        let sinr = if denom > 0.0 { signal / denom } else { 0.0 };
        per_user_sinr.push(sinr);
        per_user_rate.push((1.0 + sinr).log2());
    }
    let sum_rate_bpcu = per_user_rate.iter().sum();
    Ok(RateBreakdown {
        per_user_sinr,
        per_user_rate_bpcu: per_user_rate,
        sum_rate_bpcu,
    })
}

/// Per-user achievable-rate lower bound with an explicit combiner: the SINR of
/// user `k` is
///
/// ```text
///           rho_d |w_k^T A_d hhat_k|^2
/// ----------------------------------------------------------------------
/// rho_d sum_{j!=k} |w_k^T A_d hhat_j|^2 + rho_d sum_j |w_k^T A_d eps_j|^2
///   + ||w_k^T A_d||^2 + w_k^T C_q w_k^*
/// ```
///
/// with `eps = H - H_hat`, and the rate is `log2(1 + SINR)`. This is the
/// per-realization summand; averaging over Monte-Carlo realizations is the
/// caller's job.
pub fn per_user_rate_with_combiner(
    h_true: &ComplexMatrix,
    h_hat: &ComplexMatrix,
    combiner_t: &ComplexMatrix,
    model: &DataStageModel,
) -> Result<RateBreakdown> {
    let a = vec![model.a_d; h_true.rows()];
    rate_with_parts(
        h_true,
        h_hat,
        combiner_t,
        model.rho_d,
        &a,
        &QuantCov::Scalar(model.c_qd),
    )
}

/// [`per_user_rate_with_combiner`] with the zero-forcing combiner built from
/// the estimated channel.
pub fn per_user_rate(
    h_true: &ComplexMatrix,
    h_hat: &ComplexMatrix,
    model: &DataStageModel,
) -> Result<RateBreakdown> {
    let w_t = zf_combiner(h_hat)?;
    per_user_rate_with_combiner(h_true, h_hat, &w_t, model)
}

/// Exact data-stage path: Bussgang gain and quantization-noise covariance are
/// recomputed from the arcsin law on the per-realization receive covariance
/// `C_yd = rho_d H H^H + I` instead of the low-SNR scalar approximations.
pub fn per_user_rate_exact(
    h_true: &ComplexMatrix,
    h_hat: &ComplexMatrix,
    rho_d: f64,
) -> Result<RateBreakdown> {
    let m = h_true.rows();
    let hh = h_true * &h_true.adjoint();
    let mut c_yd_raw = hh.scaled(Complex64::new(rho_d, 0.0));
    for i in 0..m {
        let v = c_yd_raw.get(i, i) + Complex64::new(1.0, 0.0);
        c_yd_raw.set(i, i, v);
    }
    let c_yd = HermitianMatrix::from_symmetrized(&c_yd_raw);
    let a = bussgang_operator(&c_yd)?;
    let c_rd = arcsin_covariance(&c_yd)?;
    let c_qd = HermitianMatrix::from_symmetrized(&(c_rd.as_matrix() - &a.sandwich(c_yd.as_matrix())));
    let w_t = zf_combiner(h_hat)?;
    rate_with_parts(
        h_true,
        h_hat,
        &w_t,
        rho_d,
        a.as_slice(),
        &QuantCov::Full(&c_qd),
    )
}

/// Sum of the per-user rates.
pub fn sum_rate(rb: &RateBreakdown) -> f64 {
    rb.per_user_rate_bpcu.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(rows, cols, |_, _| {
            c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        })
    }

    /// Unitary matrix as a product of two Householder reflections.
    fn random_unitary(rng: &mut impl Rng, dim: usize) -> ComplexMatrix {
        let mut u = ComplexMatrix::identity(dim);
        for _ in 0..2 {
            let v = crate::channel::complex_normal_vector(rng, dim);
            let n2 = v.norm_l2().powi(2);
            let refl = ComplexMatrix::from_fn(dim, dim, |i, j| {
                let outer = v.get(i) * v.get(j).conj() * (2.0 / n2);
                if i == j {
                    c(1.0, 0.0) - outer
                } else {
                    -outer
                }
            });
            u = &refl * &u;
        }
        u
    }

    #[test]
    fn data_bussgang_reference_values() {
        let d = data_bussgang(4, 1.0);
        assert!((d.a_d - 0.356_824_823_230_554_2).abs() < 1e-12);
        assert!((d.c_qd - (1.0 - 2.0 / std::f64::consts::PI)).abs() < 1e-15);
        assert!((d.c_qd - 0.363_380_227_632_418_6).abs() < 1e-12);

        let low = data_bussgang(4, 1e-12);
        assert!((low.a_d - 0.797_884_560_802_865_4).abs() < 1e-9);
    }

    #[test]
    fn zf_with_orthonormal_columns_is_adjoint() {
        // two orthonormal columns in C^4
        let h = ComplexMatrix::from_fn(4, 2, |i, j| match (i, j) {
            (0, 0) => c(1.0, 0.0),
            (1, 1) => c(0.0, 1.0),
            _ => Complex64::ZERO,
        });
        let w = zf_combiner(&h).unwrap();
        assert!(w.max_abs_diff(&h.adjoint()) < 1e-12);
    }

    #[test]
    fn zf_of_scaled_identity() {
        let h = ComplexMatrix::identity(3).scaled(c(2.0, 0.0));
        let w = zf_combiner(&h).unwrap();
        let expected = ComplexMatrix::identity(3).scaled(c(0.5, 0.0));
        assert!(w.max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn zf_residual_on_random_tall_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let h = random_matrix(&mut rng, 16, 4);
        let w = zf_combiner(&h).unwrap();
        let prod = &w * &h;
        assert!(prod.max_abs_diff(&ComplexMatrix::identity(4)) < 1e-8);
    }

    #[test]
    fn zf_rejects_rank_deficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let col = random_matrix(&mut rng, 6, 1);
        let h = ComplexMatrix::from_fn(6, 2, |i, _| col.get(i, 0));
        assert!(matches!(zf_combiner(&h), Err(Error::RankDeficient)));
        // wide matrices cannot be zero forced either
        let wide = random_matrix(&mut rng, 2, 4);
        assert!(matches!(zf_combiner(&wide), Err(Error::RankDeficient)));
    }

    #[test]
    fn perfect_csi_single_user_closed_form() {
        // h = (1, 0)^T, w = (1, 0), rho_d = 1, K = 1:
        // SINR = A^2 / (A^2 + 1 - 2/pi) with A^2 = (2/pi)/2 = 1/pi
        let h = ComplexMatrix::from_fn(2, 1, |i, _| if i == 0 { c(1.0, 0.0) } else { Complex64::ZERO });
        let model = data_bussgang(1, 1.0);
        let rb = per_user_rate(&h, &h, &model).unwrap();
        let a2 = 1.0 / std::f64::consts::PI;
        let expected_sinr = a2 / (a2 + 1.0 - 2.0 / std::f64::consts::PI);
        assert!((rb.per_user_sinr[0] - expected_sinr).abs() < 1e-12);
        assert!((rb.per_user_rate_bpcu[0] - (1.0 + expected_sinr).log2()).abs() < 1e-12);
        assert!((rb.sum_rate_bpcu - rb.per_user_rate_bpcu[0]).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_combiner_row_gives_zero_rate() {
        // w orthogonal to every column: signal vanishes, SINR = 0
        let h = ComplexMatrix::from_fn(3, 1, |i, _| if i == 0 { c(1.0, 0.0) } else { Complex64::ZERO });
        let w_t = ComplexMatrix::from_fn(1, 3, |_, j| if j == 2 { c(1.0, 0.0) } else { Complex64::ZERO });
        let model = data_bussgang(1, 1.0);
        let rb = per_user_rate_with_combiner(&h, &h, &w_t, &model).unwrap();
        assert_eq!(rb.per_user_sinr[0], 0.0);
        assert_eq!(rb.per_user_rate_bpcu[0], 0.0);
    }

    #[test]
    fn zf_with_perfect_csi_cancels_interference() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let h = random_matrix(&mut rng, 8, 3);
        let model = data_bussgang(3, 2.0);
        let rb = per_user_rate(&h, &h, &model).unwrap();
        let w_t = zf_combiner(&h).unwrap();
        // with W^T H = I and eps = 0, SINR reduces to
        // rho A^2 / ((A^2 + c_qd) ||w||^2) per user
        for k in 0..3 {
            let wnorm2: f64 = (0..8).map(|i| w_t.get(k, i).norm_sqr()).sum();
            let expected = model.rho_d * model.a_d * model.a_d
                / ((model.a_d * model.a_d + model.c_qd) * wnorm2);
            assert!(
                (rb.per_user_sinr[k] - expected).abs() <= 1e-12 * expected,
                "user {k}: {} vs {expected}",
                rb.per_user_sinr[k]
            );
        }
    }

    #[test]
    fn rate_invariant_under_combiner_row_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let h_true = random_matrix(&mut rng, 6, 2);
        let h_hat = random_matrix(&mut rng, 6, 2);
        let w_t = zf_combiner(&h_hat).unwrap();
        let model = data_bussgang(2, 1.5);
        let base = per_user_rate_with_combiner(&h_true, &h_hat, &w_t, &model).unwrap();
        let alpha = c(-1.75, 0.4);
        let scaled = w_t.scaled(alpha);
        let rescaled = per_user_rate_with_combiner(&h_true, &h_hat, &scaled, &model).unwrap();
        for k in 0..2 {
            let rel = (base.per_user_rate_bpcu[k] - rescaled.per_user_rate_bpcu[k]).abs()
                / base.per_user_rate_bpcu[k].abs().max(1e-30);
            assert!(rel < 1e-10, "user {k}: rel {rel:.3e}");
        }
    }

    #[test]
    fn rate_invariant_under_common_unitary_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let h_true = random_matrix(&mut rng, 6, 2);
        let h_hat = random_matrix(&mut rng, 6, 2);
        let model = data_bussgang(2, 1.0);
        let base = per_user_rate(&h_true, &h_hat, &model).unwrap();

        let u = random_unitary(&mut rng, 6);
        let rotated = per_user_rate(&(&u * &h_true), &(&u * &h_hat), &model).unwrap();
        for k in 0..2 {
            assert!(
                (base.per_user_rate_bpcu[k] - rotated.per_user_rate_bpcu[k]).abs() < 1e-8,
                "user {k}"
            );
        }
    }

    #[test]
    fn sum_rate_adds_users() {
        let rb = RateBreakdown {
            per_user_sinr: vec![1.0, 3.0],
            per_user_rate_bpcu: vec![1.0, 2.0],
            sum_rate_bpcu: 3.0,
        };
        assert_eq!(sum_rate(&rb), 3.0);
        let zero = RateBreakdown {
            per_user_sinr: vec![0.0; 3],
            per_user_rate_bpcu: vec![0.0; 3],
            sum_rate_bpcu: 0.0,
        };
        assert_eq!(sum_rate(&zero), 0.0);
        // K equal users sum to K times the single rate
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        let vals: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
        let rb = RateBreakdown {
            per_user_sinr: vals.clone(),
            per_user_rate_bpcu: vals.clone(),
            sum_rate_bpcu: vals.iter().sum(),
        };
        assert!((sum_rate(&rb) - vals.iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn exact_path_agrees_with_scalar_at_low_snr() {
        // at very low data SNR the exact covariance collapses to the scalar
        // approximation
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let h = random_matrix(&mut rng, 6, 2);
        let rho_d = 1e-6;
        let scalar = per_user_rate(&h, &h, &data_bussgang(2, rho_d)).unwrap();
        let exact = per_user_rate_exact(&h, &h, rho_d).unwrap();
        for k in 0..2 {
            let rel = (scalar.per_user_rate_bpcu[k] - exact.per_user_rate_bpcu[k]).abs()
                / scalar.per_user_rate_bpcu[k];
            assert!(rel < 1e-3, "user {k}: rel {rel:.3e}");
        }
    }
}
