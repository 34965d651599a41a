//! Physical parameter set of the coupled resonator / spin-ensemble system
//! and the two matrices everything else is built from: the real symmetric
//! coupling matrix `A(B0)` and the diagonal decay matrices `Γ` (poles) and
//! `Γ̃` (zeros).
//!
//! Unit convention: every frequency or rate is stored as an angular
//! frequency in units of 2π·MHz, i.e. the stored number equals the linear
//! frequency ν = ω/2π in MHz. All expressions in this crate are homogeneous
//! of degree one in frequency, so no 2π factor ever appears in the code.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Resonator (cavity) parameters, internal units.
#[derive(Debug, Clone, PartialEq)]
pub struct ResonatorParams {
    /// Bare resonance frequency ω0.
    pub omega0: f64,
    /// Radiative (antenna) rate γ_r.
    pub gamma_r: f64,
    /// Intrinsic non-radiative rate γ_nr.
    pub gamma_nr: f64,
}

impl ResonatorParams {
    pub fn validate(&self, key: &str) -> Result<()> {
        if !(self.omega0 > 0.0 && self.omega0.is_finite()) {
            return Err(Error::validation(format!("{key}.f0_mhz must be > 0")));
        }
        if !(self.gamma_r > 0.0 && self.gamma_r.is_finite()) {
            return Err(Error::validation(format!("{key}.gamma_r_mhz must be > 0")));
        }
        if !(self.gamma_nr >= 0.0 && self.gamma_nr.is_finite()) {
            return Err(Error::validation(format!("{key}.gamma_nr_mhz must be >= 0")));
        }
        Ok(())
    }

    /// Antenna feeding dominates intrinsic loss.
    pub fn overcoupled(&self) -> bool {
        self.gamma_r > self.gamma_nr
    }
}

/// Linear field-to-frequency law ω_s(B0) = offset + slope·B0.
///
/// Also constructible from (resonant field, slope), which is how dip
/// positions are usually quoted; the two parameterizations interconvert
/// exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeemanLaw {
    slope: f64,  // MHz per tesla
    offset: f64, // MHz at B0 = 0
}

impl ZeemanLaw {
    pub fn from_slope_offset(slope: f64, offset: f64, key: &str) -> Result<Self> {
        if !(slope > 0.0 && slope.is_finite()) {
            return Err(Error::validation(format!(
                "{key}.slope_mhz_per_t must be > 0"
            )));
        }
        if !offset.is_finite() {
            return Err(Error::validation(format!("{key}.offset_mhz must be finite")));
        }
        Ok(ZeemanLaw { slope, offset })
    }

    /// Law passing through `omega_ref` at field `b_res`.
    pub fn from_resonant_field(b_res: f64, slope: f64, omega_ref: f64, key: &str) -> Result<Self> {
        if !b_res.is_finite() {
            return Err(Error::validation(format!("{key}.b_res_t must be finite")));
        }
        Self::from_slope_offset(slope, omega_ref - slope * b_res, key)
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// ω_s at the given field.
    pub fn freq(&self, b0: f64) -> f64 {
        self.offset + self.slope * b0
    }

    /// Field at which ω_s equals `omega_ref`.
    pub fn resonant_field(&self, omega_ref: f64) -> f64 {
        (omega_ref - self.offset) / self.slope
    }
}

/// One spin ensemble (a single resonance line).
#[derive(Debug, Clone, PartialEq)]
pub struct SpinEnsembleParams {
    /// Collective coupling rate g_μ.
    pub g: f64,
    /// Spin relaxation rate γ_sμ.
    pub gamma_s: f64,
    pub zeeman: ZeemanLaw,
    pub label: String,
}

impl SpinEnsembleParams {
    pub fn validate(&self, key: &str) -> Result<()> {
        if !(self.g >= 0.0 && self.g.is_finite()) {
            return Err(Error::validation(format!("{key}.g_mhz must be >= 0")));
        }
        if !(self.gamma_s > 0.0 && self.gamma_s.is_finite()) {
            return Err(Error::validation(format!("{key}.gamma_s_mhz must be > 0")));
        }
        Ok(())
    }
}

/// Immutable parameter set of the full system. Fits produce new models.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    resonator: ResonatorParams,
    ensembles: Vec<SpinEnsembleParams>,
    temperature_k: Option<f64>,
}

impl SystemModel {
    pub fn new(
        resonator: ResonatorParams,
        ensembles: Vec<SpinEnsembleParams>,
        temperature_k: Option<f64>,
    ) -> Result<Self> {
        resonator.validate("resonator")?;
        if ensembles.is_empty() {
            return Err(Error::validation("ensembles must contain at least one entry"));
        }
        for (i, e) in ensembles.iter().enumerate() {
            e.validate(&format!("ensembles[{i}]"))?;
        }
        for i in 1..ensembles.len() {
            if ensembles[..i].iter().any(|e| e.label == ensembles[i].label) {
                return Err(Error::validation(format!(
                    "ensembles[{i}].label '{}' is not unique",
                    ensembles[i].label
                )));
            }
        }
        if let Some(t) = temperature_k {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::validation("temperature_k must be > 0"));
            }
        }
        Ok(SystemModel {
            resonator,
            ensembles,
            temperature_k,
        })
    }

    pub fn resonator(&self) -> &ResonatorParams {
        &self.resonator
    }

    pub fn ensembles(&self) -> &[SpinEnsembleParams] {
        &self.ensembles
    }

    pub fn temperature_k(&self) -> Option<f64> {
        self.temperature_k
    }

    /// Number of spin ensembles N.
    pub fn n_ensembles(&self) -> usize {
        self.ensembles.len()
    }

    /// Matrix dimension N + 1.
    pub fn dim(&self) -> usize {
        self.ensembles.len() + 1
    }

    /// The coupling matrix A(B0): row/col 0 is the cavity, 1..=N the
    /// ensembles, with couplings only in row/col 0. Symmetric by
    /// construction.
    pub fn hopfield_matrix(&self, b0: f64) -> HopfieldMatrix {
        let n = self.dim();
        let mut a = DMatrix::zeros(n, n);
        a[(0, 0)] = self.resonator.omega0;
        for (mu, e) in self.ensembles.iter().enumerate() {
            a[(mu + 1, mu + 1)] = e.zeeman.freq(b0);
            a[(0, mu + 1)] = e.g;
            a[(mu + 1, 0)] = e.g;
        }
        HopfieldMatrix { entries: a }
    }

    pub fn decay_matrix(&self, variant: SpectrumVariant) -> DecayMatrix {
        let mut diag = DVector::zeros(self.dim());
        diag[0] = match variant {
            SpectrumVariant::Poles => self.resonator.gamma_r + self.resonator.gamma_nr,
            SpectrumVariant::Zeros => -self.resonator.gamma_r + self.resonator.gamma_nr,
        };
        for (mu, e) in self.ensembles.iter().enumerate() {
            diag[mu + 1] = e.gamma_s;
        }
        DecayMatrix { diag, variant }
    }

    /// Clone with one replaced parameter set, revalidating invariants.
    pub fn with_parts(
        &self,
        resonator: ResonatorParams,
        ensembles: Vec<SpinEnsembleParams>,
    ) -> Result<Self> {
        SystemModel::new(resonator, ensembles, self.temperature_k)
    }
}

/// Which effective Hamiltonian a spectrum or decay matrix belongs to:
/// `Poles` carries Γ (resonances of S11), `Zeros` carries Γ̃ (reflection
/// zeros, antenna rate sign-flipped).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumVariant {
    Poles,
    Zeros,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HopfieldMatrix {
    entries: DMatrix<f64>,
}

impl HopfieldMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayMatrix {
    diag: DVector<f64>,
    variant: SpectrumVariant,
}

impl DecayMatrix {
    pub fn diagonal(&self) -> &DVector<f64> {
        &self.diag
    }

    pub fn variant(&self) -> SpectrumVariant {
        self.variant
    }

    pub fn trace(&self) -> f64 {
        self.diag.sum()
    }
}
