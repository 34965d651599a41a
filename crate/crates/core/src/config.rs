//! JSON config schema and loader. All user-facing rates are linear
//! frequencies in MHz and fields in tesla; the loader converts to the
//! internal convention (see `model`).

use serde::{Deserialize, Serialize};

use crate::constants::MU_B_OVER_H_MHZ_PER_T;
use crate::error::{Error, Result};
use crate::model::{ResonatorParams, SpinEnsembleParams, SystemModel, ZeemanLaw};

/// Top-level document driving the CLI. Each subcommand requires its own
/// section; unknown keys are rejected everywhere.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub model: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub resonator: ResonatorConfig,
    pub ensembles: Vec<EnsembleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature_k: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonatorConfig {
    pub f0_mhz: f64,
    pub gamma_r_mhz: f64,
    pub gamma_nr_mhz: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub label: String,
    pub g_mhz: f64,
    pub gamma_s_mhz: f64,
    pub zeeman: ZeemanConfig,
}

/// Either (slope, intercept) or (resonant field, slope). A slope may also
/// be given as a Landé g-factor, converted through μ_B/h.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ZeemanConfig {
    SlopeOffset {
        slope_mhz_per_t: f64,
        offset_mhz: f64,
    },
    ResonantField {
        b_res_t: f64,
        slope_mhz_per_t: f64,
    },
    LandeOffset {
        g_lande: f64,
        offset_mhz: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub b_min_t: f64,
    pub b_max_t: f64,
    pub b_points: usize,
    pub f_min_mhz: f64,
    pub f_max_mhz: f64,
    pub f_points: usize,
    #[serde(default = "default_pa_tolerance")]
    pub pa_tolerance: f64,
    /// Fixed-frequency cuts for the figure-of-merit subcommand.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cut_f_mhz: Option<Vec<f64>>,
    /// Gaussian noise sigma added to simulated |S11| (synthetic test data).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sigma: Option<f64>,
}

fn default_pa_tolerance() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub data_path: String,
    pub format: MapFormat,
    pub free_params: Vec<String>,
    /// Per-parameter [lo, hi] bounds, keyed like `free_params` entries.
    pub bounds: std::collections::BTreeMap<String, [f64; 2]>,
    #[serde(default)]
    pub loss: LossKind,
    #[serde(default)]
    pub normalization: NormalizationKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapFormat {
    LongCsv,
    MatrixCsv,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    Magnitude,
    Complex,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationKind {
    /// Treat ingested data as already normalized.
    #[default]
    Raw,
    /// Divide each field column by its off-resonance mean.
    Baseline,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formats: Option<Vec<String>>,
}

impl ConfigDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::validation(format!("config: {e}")))
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}

impl ScanConfig {
    pub fn b_grid(&self) -> Result<Vec<f64>> {
        linspace(self.b_min_t, self.b_max_t, self.b_points, "scan.b")
    }

    pub fn f_grid(&self) -> Result<Vec<f64>> {
        linspace(self.f_min_mhz, self.f_max_mhz, self.f_points, "scan.f")
    }
}

fn linspace(lo: f64, hi: f64, n: usize, key: &str) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::validation(format!("{key}_points must be >= 1")));
    }
    if !(lo.is_finite() && hi.is_finite()) || (n > 1 && hi <= lo) {
        return Err(Error::validation(format!(
            "{key}_min/{key}_max must be finite with max > min"
        )));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let step = (hi - lo) / (n - 1) as f64;
    Ok((0..n).map(|i| lo + step * i as f64).collect())
}

/// Build an immutable model from the config schema.
pub fn build_model(config: &ModelConfig) -> Result<SystemModel> {
    let resonator = ResonatorParams {
        omega0: config.resonator.f0_mhz,
        gamma_r: config.resonator.gamma_r_mhz,
        gamma_nr: config.resonator.gamma_nr_mhz,
    };
    let mut ensembles = Vec::with_capacity(config.ensembles.len());
    for (i, e) in config.ensembles.iter().enumerate() {
        let key = format!("ensembles[{i}].zeeman");
        let zeeman = match e.zeeman {
            ZeemanConfig::SlopeOffset {
                slope_mhz_per_t,
                offset_mhz,
            } => ZeemanLaw::from_slope_offset(slope_mhz_per_t, offset_mhz, &key)?,
            ZeemanConfig::ResonantField {
                b_res_t,
                slope_mhz_per_t,
            } => ZeemanLaw::from_resonant_field(
                b_res_t,
                slope_mhz_per_t,
                config.resonator.f0_mhz,
                &key,
            )?,
            ZeemanConfig::LandeOffset { g_lande, offset_mhz } => ZeemanLaw::from_slope_offset(
                g_lande * MU_B_OVER_H_MHZ_PER_T,
                offset_mhz,
                &key,
            )?,
        };
        ensembles.push(SpinEnsembleParams {
            g: e.g_mhz,
            gamma_s: e.gamma_s_mhz,
            zeeman,
            label: e.label.clone(),
        });
    }
    SystemModel::new(resonator, ensembles, config.temperature_k)
}

/// Serialize a model back into the config schema (slope+offset form).
pub fn model_to_config(model: &SystemModel) -> ModelConfig {
    ModelConfig {
        resonator: ResonatorConfig {
            f0_mhz: model.resonator().omega0,
            gamma_r_mhz: model.resonator().gamma_r,
            gamma_nr_mhz: model.resonator().gamma_nr,
        },
        ensembles: model
            .ensembles()
            .iter()
            .map(|e| EnsembleConfig {
                label: e.label.clone(),
                g_mhz: e.g,
                gamma_s_mhz: e.gamma_s,
                zeeman: ZeemanConfig::SlopeOffset {
                    slope_mhz_per_t: e.zeeman.slope(),
                    offset_mhz: e.zeeman.offset(),
                },
            })
            .collect(),
        temperature_k: model.temperature_k(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BDPA_JSON: &str = r#"{
        "model": {
            "resonator": {"f0_mhz": 9900.0, "gamma_r_mhz": 1.868, "gamma_nr_mhz": 0.3},
            "ensembles": [
                {"label": "bdpa", "g_mhz": 20.7, "gamma_s_mhz": 5.0,
                 "zeeman": {"slope_mhz_per_t": 28000.0, "offset_mhz": 0.0}}
            ]
        }
    }"#;

    #[test]
    fn bdpa_config_builds_single_ensemble() {
        let doc = ConfigDocument::from_json(BDPA_JSON).unwrap();
        let model = build_model(&doc.model).unwrap();
        assert_eq!(model.n_ensembles(), 1);
        assert_eq!(model.ensembles()[0].g, 20.7);
        assert_eq!(model.resonator().omega0, 9900.0);
    }

    #[test]
    fn eight_ensembles_keep_declared_order() {
        let ensembles: Vec<EnsembleConfig> = (0..8)
            .map(|i| EnsembleConfig {
                label: format!("line{i}"),
                g_mhz: 13.0 + 0.4 * i as f64,
                gamma_s_mhz: 7.0,
                zeeman: ZeemanConfig::ResonantField {
                    b_res_t: 0.33 + 0.017 * i as f64,
                    slope_mhz_per_t: 28_000.0,
                },
            })
            .collect();
        let cfg = ModelConfig {
            resonator: ResonatorConfig {
                f0_mhz: 9900.0,
                gamma_r_mhz: 1.9,
                gamma_nr_mhz: 0.3,
            },
            ensembles,
            temperature_k: Some(0.03),
        };
        let model = build_model(&cfg).unwrap();
        assert_eq!(model.n_ensembles(), 8);
        for (i, e) in model.ensembles().iter().enumerate() {
            assert_eq!(e.label, format!("line{i}"));
        }
    }

    #[test]
    fn zero_gamma_s_is_rejected_with_key() {
        let bad = BDPA_JSON.replace("\"gamma_s_mhz\": 5.0", "\"gamma_s_mhz\": 0.0");
        let doc = ConfigDocument::from_json(&bad).unwrap();
        let err = build_model(&doc.model).unwrap_err();
        assert!(err.to_string().contains("ensembles[0].gamma_s_mhz"));
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = BDPA_JSON.replace("\"model\"", "\"bogus\": 1, \"model\"");
        assert!(ConfigDocument::from_json(&bad).is_err());
    }

    #[test]
    fn lande_slope_uses_constants_table() {
        let json = BDPA_JSON.replace(
            "{\"slope_mhz_per_t\": 28000.0, \"offset_mhz\": 0.0}",
            "{\"g_lande\": 2.0, \"offset_mhz\": 0.0}",
        );
        let doc = ConfigDocument::from_json(&json).unwrap();
        let model = build_model(&doc.model).unwrap();
        assert!((model.ensembles()[0].zeeman.slope() - 2.0 * MU_B_OVER_H_MHZ_PER_T).abs() < 1e-9);
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let doc = ConfigDocument::from_json(BDPA_JSON).unwrap();
        let model = build_model(&doc.model).unwrap();
        let cfg2 = model_to_config(&model);
        let model2 = build_model(&cfg2).unwrap();
        assert_eq!(model, model2);
    }
}
