//! Monte-Carlo experiment execution.
//!
//! Each trial owns an RNG substream keyed by its index and produces a
//! [`TrialResult`]; trials run in parallel but are reduced in index order, so
//! aggregates are bit-identical regardless of worker count. Dense kernels run
//! sequentially inside each trial (trial-level parallelism saturates the
//! machine and keeps per-trial arithmetic independent of the pool size).

use rand::RngExt;
use rayon::prelude::*;

use crate::channel::{
    complex_normal_vector, evolve_channel, init_channel_with_sqrt, SpatialModel, TemporalModel,
};
use crate::error::{Error, Result};
use crate::estimation::{blmmse_estimate, nmse, SuccessiveEstimator};
use crate::linalg::{ComplexMatrix, ComplexVector, HermitianMatrix};
use crate::pilots::{dft_pilots, one_bit_quantize, PilotContext};
use crate::rate::{data_bussgang, per_user_rate, per_user_rate_exact};

use super::config::{Experiment, ExperimentConfig, ResolvedConfig};
use super::rng::rng_substream;
use super::validate;

/// Per-trial metric records, one entry per slot.
#[derive(Clone, Debug)]
pub struct TrialResult {
    pub trial_index: usize,
    pub per_slot_nmse_kalman: Vec<f64>,
    pub per_slot_nmse_blmmse: Vec<f64>,
    /// `tr(M_{i|i}) / MK` from the Kalman recursion.
    pub per_slot_theoretical_nmse: Vec<f64>,
    pub per_slot_sum_rate_kalman: Vec<f64>,
    pub per_slot_sum_rate_blmmse: Vec<f64>,
}

/// One aggregated metric point.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    /// Slot index or SNR in dB, depending on the experiment.
    pub x: f64,
    pub metric: String,
    pub mean: f64,
    pub stderr: f64,
}

/// Aggregated experiment output plus the resolved config it came from.
#[derive(Clone, Debug)]
pub struct ResultsTable {
    pub experiment: String,
    /// Name of the x column: `"slot"` for slot experiments, `"snr_db"` for
    /// SNR sweeps, `"check"`-style index for validation.
    pub x_column: &'static str,
    pub rows: Vec<ResultRow>,
    pub num_trials: usize,
    pub seed: u64,
    /// Resolved configuration, written to the JSON sidecar.
    pub config: ExperimentConfig,
}

/// Runs an experiment on the global rayon pool.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultsTable> {
    run_experiment_with_workers(cfg, None)
}

/// Runs an experiment on a dedicated pool of `workers` threads (or the global
/// pool when `None`). Aggregates are identical for any worker count.
pub fn run_experiment_with_workers(
    cfg: &ExperimentConfig,
    workers: Option<usize>,
) -> Result<ResultsTable> {
    let resolved = cfg.resolve()?;
    // keep per-trial arithmetic independent of threading decisions
    faer::set_global_parallelism(faer::Par::Seq);

    match workers {
        None => dispatch(&resolved),
        Some(n) => {
            if n == 0 {
                return Err(Error::config("workers", "worker count must be at least 1"));
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::config("workers", e.to_string()))?;
            pool.install(|| dispatch(&resolved))
        }
    }
}

fn dispatch(resolved: &ResolvedConfig) -> Result<ResultsTable> {
    match resolved.config.experiment {
        Experiment::NmseVsSlot | Experiment::RateVsSlot => slot_experiment(resolved),
        Experiment::NmseVsSnr => snr_sweep_experiment(resolved),
        Experiment::Validate => validate_experiment(resolved),
    }
}

// ---------------------------------------------------------------------------
// Trial execution
// ---------------------------------------------------------------------------

struct TrialSetup<'a> {
    antennas: usize,
    users: usize,
    r: f64,
    rho: f64,
    rho_data: f64,
    num_slots: usize,
    exact_data_covariance: bool,
    seed: u64,
    phi: &'a ComplexMatrix,
    temporal: &'a TemporalModel,
}

/// Runs one Monte-Carlo trial. Draw order per trial: user phases, then per
/// slot the channel innovation followed by the pilot noise. The Kalman filter
/// and the single-shot estimator consume the same quantized observation so
/// their comparison is paired.
fn run_trial(setup: &TrialSetup<'_>, trial_index: usize) -> Result<TrialResult> {
    let mut rng = rng_substream(setup.seed, trial_index as u64);
    let tau = std::f64::consts::TAU;
    let theta: Vec<f64> = (0..setup.users)
        .map(|_| rng.random::<f64>() * tau)
        .collect();
    let spatial = SpatialModel::new(setup.r, theta, setup.antennas)?;
    let stacked = spatial.stacked_correlation()?;
    let stacked_sqrt = spatial.stacked_sqrt()?;
    let ctx = PilotContext::new(setup.phi, setup.rho, &stacked)?;
    let mut filter = SuccessiveEstimator::new(&ctx, &stacked, setup.temporal.clone())?;
    let data_model = data_bussgang(setup.users, setup.rho_data);

    let state_len = ctx.state_len() as f64;
    let mut result = TrialResult {
        trial_index,
        per_slot_nmse_kalman: Vec::with_capacity(setup.num_slots),
        per_slot_nmse_blmmse: Vec::with_capacity(setup.num_slots),
        per_slot_theoretical_nmse: Vec::with_capacity(setup.num_slots),
        per_slot_sum_rate_kalman: Vec::with_capacity(setup.num_slots),
        per_slot_sum_rate_blmmse: Vec::with_capacity(setup.num_slots),
    };

    let mut channel = init_channel_with_sqrt(&stacked_sqrt, &mut rng);
    for slot in 0..setup.num_slots {
        if slot > 0 {
            channel = evolve_channel(&channel, setup.temporal, &stacked_sqrt, &mut rng)?;
        }
        let noise = complex_normal_vector(&mut rng, ctx.observation_len());
        let y = &ctx.phi_bar().mul_vec(channel.h()) + &noise;
        let observation = one_bit_quantize(&y);

        let record = filter.step(&observation)?;
        let blm = blmmse_estimate(&observation, &ctx, &stacked)?;

        result
            .per_slot_nmse_kalman
            .push(nmse(channel.h(), &record.h_hat)?);
        result
            .per_slot_nmse_blmmse
            .push(nmse(channel.h(), &blm)?);
        result
            .per_slot_theoretical_nmse
            .push(record.theoretical_mse_trace / state_len);

        let h_true = channel.as_matrix(setup.antennas)?;
        let h_kalman = unstack(&record.h_hat, setup.antennas)?;
        let h_blmmse = unstack(&blm, setup.antennas)?;
        let (rate_kalman, rate_blmmse) = if setup.exact_data_covariance {
            (
                per_user_rate_exact(&h_true, &h_kalman, setup.rho_data)?,
                per_user_rate_exact(&h_true, &h_blmmse, setup.rho_data)?,
            )
        } else {
            (
                per_user_rate(&h_true, &h_kalman, &data_model)?,
                per_user_rate(&h_true, &h_blmmse, &data_model)?,
            )
        };
        result.per_slot_sum_rate_kalman.push(rate_kalman.sum_rate_bpcu);
        result.per_slot_sum_rate_blmmse.push(rate_blmmse.sum_rate_bpcu);
    }
    Ok(result)
}

fn unstack(h: &ComplexVector, antennas: usize) -> Result<ComplexMatrix> {
    if antennas == 0 || h.len() % antennas != 0 {
        return Err(Error::dim(format!(
            "stacked vector of {} entries cannot form {antennas}-antenna columns",
            h.len()
        )));
    }
    let users = h.len() / antennas;
    Ok(ComplexMatrix::from_fn(antennas, users, |m, k| {
        h.get(k * antennas + m)
    }))
}

fn run_trials(setup: &TrialSetup<'_>, num_trials: usize) -> Result<Vec<TrialResult>> {
    (0..num_trials)
        .into_par_iter()
        .map(|t| run_trial(setup, t))
        .collect()
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Metric families recorded per slot, in emission order.
const SLOT_METRICS: &[(&str, fn(&TrialResult, usize) -> f64)] = &[
    ("nmse_kalman", |t, s| t.per_slot_nmse_kalman[s]),
    ("nmse_blmmse", |t, s| t.per_slot_nmse_blmmse[s]),
    ("nmse_kalman_theory", |t, s| t.per_slot_theoretical_nmse[s]),
    // slot-0 Kalman MSE trace equals the single-shot closed form, so this is
    // the per-trial BLMMSE theoretical NMSE repeated across slots
    ("nmse_blmmse_theory", |t, _| t.per_slot_theoretical_nmse[0]),
    ("sum_rate_kalman", |t, s| t.per_slot_sum_rate_kalman[s]),
    ("sum_rate_blmmse", |t, s| t.per_slot_sum_rate_blmmse[s]),
];

fn slot_experiment(resolved: &ResolvedConfig) -> Result<ResultsTable> {
    let cfg = &resolved.config;
    let phi = dft_pilots(cfg.tau, cfg.users)?;
    let setup = TrialSetup {
        antennas: cfg.antennas,
        users: cfg.users,
        r: cfg.r,
        rho: resolved.rho_list[0],
        rho_data: resolved.rho_data,
        num_slots: cfg.num_slots,
        exact_data_covariance: cfg.exact_data_covariance,
        seed: cfg.seed,
        phi: &phi,
        temporal: &resolved.temporal,
    };
    let trials = run_trials(&setup, cfg.num_trials)?;

    let mut rows = Vec::new();
    for (name, extract) in SLOT_METRICS {
        for slot in 0..cfg.num_slots {
            let values: Vec<f64> = trials.iter().map(|t| extract(t, slot)).collect();
            let (mean, stderr) = mean_stderr(&values);
            rows.push(ResultRow {
                x: slot as f64,
                metric: (*name).to_string(),
                mean,
                stderr,
            });
        }
    }
    Ok(ResultsTable {
        experiment: cfg.experiment.as_str().to_string(),
        x_column: "slot",
        rows,
        num_trials: cfg.num_trials,
        seed: cfg.seed,
        config: cfg.clone(),
    })
}

/// NMSE metric families keyed by slot inside the metric name for SNR sweeps.
const SNR_METRICS: &[(&str, fn(&TrialResult, usize) -> f64)] = &[
    ("nmse_kalman", |t, s| t.per_slot_nmse_kalman[s]),
    ("nmse_blmmse", |t, s| t.per_slot_nmse_blmmse[s]),
    ("nmse_kalman_theory", |t, s| t.per_slot_theoretical_nmse[s]),
    ("nmse_blmmse_theory", |t, _| t.per_slot_theoretical_nmse[0]),
];

fn snr_sweep_experiment(resolved: &ResolvedConfig) -> Result<ResultsTable> {
    let cfg = &resolved.config;
    let phi = dft_pilots(cfg.tau, cfg.users)?;
    // trial substreams are reused across SNR points, pairing the sweep
    let mut per_snr: Vec<Vec<TrialResult>> = Vec::with_capacity(resolved.rho_list.len());
    for &rho in &resolved.rho_list {
        let setup = TrialSetup {
            antennas: cfg.antennas,
            users: cfg.users,
            r: cfg.r,
            rho,
            rho_data: resolved.rho_data,
            num_slots: cfg.num_slots,
            exact_data_covariance: cfg.exact_data_covariance,
            seed: cfg.seed,
            phi: &phi,
            temporal: &resolved.temporal,
        };
        per_snr.push(run_trials(&setup, cfg.num_trials)?);
    }

    let mut rows = Vec::new();
    for (name, extract) in SNR_METRICS {
        for slot in 0..cfg.num_slots {
            for (snr_idx, snr_db) in cfg.snr_db.iter().enumerate() {
                let values: Vec<f64> = per_snr[snr_idx].iter().map(|t| extract(t, slot)).collect();
                let (mean, stderr) = mean_stderr(&values);
                rows.push(ResultRow {
                    x: *snr_db,
                    metric: format!("{name}_slot{slot}"),
                    mean,
                    stderr,
                });
            }
        }
    }
    Ok(ResultsTable {
        experiment: cfg.experiment.as_str().to_string(),
        x_column: "snr_db",
        rows,
        num_trials: cfg.num_trials,
        seed: cfg.seed,
        config: cfg.clone(),
    })
}

fn validate_experiment(resolved: &ResolvedConfig) -> Result<ResultsTable> {
    let cfg = &resolved.config;
    let outcomes = validate::run_suite();
    let rows = outcomes
        .iter()
        .enumerate()
        .map(|(i, check)| ResultRow {
            x: i as f64,
            metric: check.name.to_string(),
            mean: if check.passed { 1.0 } else { 0.0 },
            stderr: 0.0,
        })
        .collect();
    Ok(ResultsTable {
        experiment: cfg.experiment.as_str().to_string(),
        x_column: "check_index",
        rows,
        num_trials: 1,
        seed: cfg.seed,
        config: cfg.clone(),
    })
}
