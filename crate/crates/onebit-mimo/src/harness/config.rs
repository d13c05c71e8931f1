//! Declarative experiment configuration and the shipped figure presets.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::channel::TemporalModel;
use crate::error::{Error, Result};

/// Default carrier frequency (Hz) for Jakes' model when a config gives user
/// speeds without one; together with [`DEFAULT_SLOT_INTERVAL_S`] it reproduces
/// the reference temporal coefficients 0.872/0.936/0.967/0.988 for
/// 10/7/5/3 km/h.
pub const DEFAULT_CARRIER_HZ: f64 = 2.0e9;

/// Default channel instantiation interval (s) for Jakes' model.
pub const DEFAULT_SLOT_INTERVAL_S: f64 = 6.25e-3;

/// Which quantities an experiment sweeps and records.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    /// Per-slot NMSE curves at a single SNR.
    NmseVsSlot,
    /// NMSE at fixed slots across an SNR sweep.
    NmseVsSnr,
    /// Per-slot ZF sum-rate curves at a single SNR.
    RateVsSlot,
    /// Monte-Carlo oracle suite; reports pass/fail per check.
    Validate,
}

impl Experiment {
    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::NmseVsSlot => "nmse_vs_slot",
            Experiment::NmseVsSnr => "nmse_vs_snr",
            Experiment::RateVsSlot => "rate_vs_slot",
            Experiment::Validate => "validate",
        }
    }
}

/// Declarative description of one experiment run.
///
/// The JSON form uses exactly these field names (with `M` and `K` capitalized
/// as written); unknown keys are rejected. Temporal correlation comes either
/// from `eta` directly or from `(v_kmh, fc_hz, t_s)` via Jakes' model —
/// exactly one of the two.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Base-station antenna count.
    #[serde(rename = "M")]
    pub antennas: usize,
    /// Single-antenna user count.
    #[serde(rename = "K")]
    pub users: usize,
    /// Pilot sequence length.
    pub tau: usize,
    /// Pilot-stage SNR sweep in dB (a single entry for slot experiments).
    pub snr_db: Vec<f64>,
    /// Data-stage SNR in dB; defaults to the first pilot SNR.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_data_db: Option<f64>,
    /// Spatial correlation magnitude shared by all users.
    pub r: f64,
    /// Per-user temporal coefficients (length `K`, or 1 to broadcast).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<Vec<f64>>,
    /// Per-user speeds in km/h for Jakes' model (length `K`, or 1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_kmh: Option<Vec<f64>>,
    /// Carrier frequency for Jakes' model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fc_hz: Option<f64>,
    /// Channel instantiation interval for Jakes' model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_s: Option<f64>,
    /// Fading blocks simulated per trial (slot indices `0..num_slots`).
    pub num_slots: usize,
    /// Monte-Carlo trials.
    pub num_trials: usize,
    /// Base seed; trial `t` uses substream `t`.
    pub seed: u64,
    pub experiment: Experiment,
    /// CSV destination; a JSON sidecar with the resolved config sits next to it.
    pub output_path: PathBuf,
    /// Use the arcsin-law data-stage covariance instead of the low-SNR scalars.
    #[serde(default)]
    pub exact_data_covariance: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config {
            field: "<json>".to_string(),
            message: e.to_string(),
        })
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Validates the configuration and resolves derived quantities (temporal
    /// model, linear SNRs, data SNR). The returned config has `eta` and
    /// `snr_data_db` filled in, which is what the JSON sidecar records.
    pub fn resolve(&self) -> Result<ResolvedConfig> {
        if self.antennas == 0 {
            return Err(Error::config("M", "antenna count must be at least 1"));
        }
        if self.users == 0 {
            return Err(Error::config("K", "user count must be at least 1"));
        }
        if self.users > self.tau {
            return Err(Error::config(
                "tau",
                format!("pilot length {} shorter than user count {}", self.tau, self.users),
            ));
        }
        if self.num_trials == 0 {
            return Err(Error::config("num_trials", "need at least one trial"));
        }
        if self.num_slots == 0 {
            return Err(Error::config("num_slots", "need at least one slot"));
        }
        if !(0.0..1.0).contains(&self.r) {
            return Err(Error::config("r", "spatial correlation must be in [0, 1)"));
        }
        if self.snr_db.is_empty() {
            return Err(Error::config("snr_db", "at least one SNR point required"));
        }
        if matches!(self.experiment, Experiment::NmseVsSlot | Experiment::RateVsSlot)
            && self.snr_db.len() != 1
        {
            return Err(Error::config(
                "snr_db",
                "slot experiments take exactly one SNR point",
            ));
        }
        if self.output_path.as_os_str().is_empty() {
            return Err(Error::config("output_path", "must not be empty"));
        }

        let broadcast = |field: &str, values: &[f64]| -> Result<Vec<f64>> {
            if values.len() == self.users {
                Ok(values.to_vec())
            } else if values.len() == 1 {
                Ok(vec![values[0]; self.users])
            } else {
                Err(Error::config(
                    field,
                    format!("expected {} entries (or 1 to broadcast), got {}", self.users, values.len()),
                ))
            }
        };

        let temporal = match (&self.eta, &self.v_kmh) {
            (Some(_), Some(_)) => {
                return Err(Error::config("eta", "give either eta or v_kmh, not both"));
            }
            (None, None) => {
                return Err(Error::config("eta", "either eta or v_kmh is required"));
            }
            (Some(eta), None) => {
                if self.fc_hz.is_some() || self.t_s.is_some() {
                    return Err(Error::config(
                        "fc_hz",
                        "fc_hz/t_s only apply when eta comes from v_kmh",
                    ));
                }
                TemporalModel::from_eta(broadcast("eta", eta)?)
                    .map_err(|e| Error::config("eta", e.to_string()))?
            }
            (None, Some(v)) => {
                let fc = self.fc_hz.unwrap_or(DEFAULT_CARRIER_HZ);
                let t = self.t_s.unwrap_or(DEFAULT_SLOT_INTERVAL_S);
                TemporalModel::from_speeds(&broadcast("v_kmh", v)?, fc, t)
                    .map_err(|e| Error::config("v_kmh", e.to_string()))?
            }
        };

        let rho_list: Vec<f64> = self.snr_db.iter().map(|db| db_to_linear(*db)).collect();
        let snr_data_db = self.snr_data_db.unwrap_or(self.snr_db[0]);

        let mut resolved = self.clone();
        resolved.eta = Some(temporal.eta_slice().to_vec());
        resolved.snr_data_db = Some(snr_data_db);

        Ok(ResolvedConfig {
            config: resolved,
            temporal,
            rho_list,
            rho_data: db_to_linear(snr_data_db),
        })
    }
}

/// Validated configuration with derived quantities.
#[derive(Clone, Debug)]
pub struct ResolvedConfig {
    /// Input config with `eta` and `snr_data_db` resolved.
    pub config: ExperimentConfig,
    pub temporal: TemporalModel,
    /// Linear pilot SNRs, one per `snr_db` entry.
    pub rho_list: Vec<f64>,
    /// Linear data SNR.
    pub rho_data: f64,
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

/// A named, shipped experiment preset, possibly expanding to several labelled
/// configs (e.g. one per spatial-correlation value).
pub struct Preset {
    pub name: &'static str,
    pub summary: &'static str,
    configs: &'static [(&'static str, &'static str)],
}

impl Preset {
    /// Parses the embedded JSON configs. Labels suffix output files when a
    /// preset expands to more than one run.
    pub fn configs(&self) -> Result<Vec<(String, ExperimentConfig)>> {
        self.configs
            .iter()
            .map(|(label, text)| Ok((label.to_string(), ExperimentConfig::from_json(text)?)))
            .collect()
    }
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "fig2",
        summary: "per-slot NMSE, M=128 K=4 tau=20, SNR -5 dB, eta 0.9881, r in {0.6, 0.9}",
        configs: &[
            ("r0.6", include_str!("../../presets/fig2_r0.6.json")),
            ("r0.9", include_str!("../../presets/fig2_r0.9.json")),
        ],
    },
    Preset {
        name: "fig3",
        summary: "per-slot NMSE with user-dependent eta (10/7/5/3 km/h), r=0.9",
        configs: &[("", include_str!("../../presets/fig3.json"))],
    },
    Preset {
        name: "fig4",
        summary: "NMSE vs SNR sweep -20..20 dB, r=0.6, slots recorded per metric",
        configs: &[("", include_str!("../../presets/fig4.json"))],
    },
    Preset {
        name: "fig5",
        summary: "per-slot ZF sum rate, M=64 K=4 tau=10, SNR 0 dB, eta 0.988 vs 0.872",
        configs: &[
            ("eta0.988", include_str!("../../presets/fig5_eta0.988.json")),
            ("eta0.872", include_str!("../../presets/fig5_eta0.872.json")),
        ],
    },
    Preset {
        name: "fig6",
        summary: "per-slot ZF sum rate, M=64 K=4 tau=10, SNR 10 dB, eta 0.988 vs 0.872",
        configs: &[
            ("eta0.988", include_str!("../../presets/fig6_eta0.988.json")),
            ("eta0.872", include_str!("../../presets/fig6_eta0.872.json")),
        ],
    },
];

pub fn find_preset(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}
