use serde::{Deserialize, Serialize};

use crate::assets;
use crate::error::{PfiError, Result};

/// An atomic or homonuclear cluster ion species.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeciesParams {
    pub name: String,
    /// Element symbol, used to link the species to the isotope table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element: Option<String>,
    pub cluster_size: u32,
    pub mass_amu: f64,
    /// Successive ionization energies I₁..I_K in eV.
    #[serde(rename = "ie_ladder_eV")]
    pub ie_ladder_ev: Vec<f64>,
    /// Principal quantum number of the outermost electron.
    pub m_q: u32,
    /// Work function recommended for this species' reference data, if any.
    #[serde(rename = "work_function_eV", default, skip_serializing_if = "Option::is_none")]
    pub work_function_ev: Option<f64>,
}

impl SpeciesParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PfiError::Config(format!("species {}: {m}", self.name)));
        if self.cluster_size < 1 {
            return bad("cluster_size must be >= 1".into());
        }
        if !(self.mass_amu.is_finite() && self.mass_amu > 0.0) {
            return bad(format!("mass must be positive, got {}", self.mass_amu));
        }
        if self.m_q < 1 {
            return bad("m_q must be >= 1".into());
        }
        if self.ie_ladder_ev.len() < 2 {
            return bad("ionization-energy ladder needs at least two entries".into());
        }
        if self.ie_ladder_ev.iter().any(|i| !(i.is_finite() && *i > 0.0)) {
            return bad("ionization energies must be positive".into());
        }
        if self.ie_ladder_ev.windows(2).any(|w| w[1] <= w[0]) {
            return bad("ionization energies must be strictly increasing".into());
        }
        Ok(())
    }

    /// Number of tabulated ionization energies (the highest reachable charge).
    pub fn max_charge(&self) -> u32 {
        self.ie_ladder_ev.len() as u32
    }

    /// I_n in eV, 1-based.
    pub fn ionization_energy(&self, n: u32) -> Result<f64> {
        if n == 0 {
            return Err(PfiError::Domain("ionization energies are 1-based".into()));
        }
        self.ie_ladder_ev.get(n as usize - 1).copied().ok_or_else(|| {
            PfiError::Config(format!(
                "species {} has no ionization energy I_{n} (ladder length {})",
                self.name,
                self.ie_ladder_ev.len()
            ))
        })
    }

    /// Σ I_1..I_n in eV.
    pub fn cumulative_ionization_energy(&self, n: u32) -> Result<f64> {
        self.ionization_energy(n)?;
        Ok(self.ie_ladder_ev[..n as usize].iter().sum())
    }

    pub fn with_ionization_energy(&self, n: u32, value_ev: f64) -> Result<Self> {
        self.ionization_energy(n)?;
        let mut s = self.clone();
        s.ie_ladder_ev[n as usize - 1] = value_ev;
        s.validate()?;
        Ok(s)
    }
}

/// Surface parameters shared by every evaluation on a given emitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    #[serde(rename = "work_function_eV")]
    pub work_function_ev: f64,
    pub screening_length_nm: f64,
}

/// Screening length λ between the image plane and the model surface.
/// Chosen so that the monoatomic Si reference crossover sits at 19.6 V/nm.
pub const DEFAULT_SCREENING_LENGTH_NM: f64 = 0.0475;

pub const DEFAULT_WORK_FUNCTION_EV: f64 = 4.9;

impl Default for Environment {
    fn default() -> Self {
        Self {
            work_function_ev: DEFAULT_WORK_FUNCTION_EV,
            screening_length_nm: DEFAULT_SCREENING_LENGTH_NM,
        }
    }
}

impl Environment {
    pub fn new(work_function_ev: f64, screening_length_nm: f64) -> Result<Self> {
        let env = Self {
            work_function_ev,
            screening_length_nm,
        };
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.work_function_ev.is_finite() && self.work_function_ev > 0.0) {
            return Err(PfiError::Config(format!(
                "work function must be positive, got {}",
                self.work_function_ev
            )));
        }
        if !(self.screening_length_nm.is_finite() && self.screening_length_nm >= 0.0) {
            return Err(PfiError::Config(format!(
                "screening length must be non-negative, got {}",
                self.screening_length_nm
            )));
        }
        Ok(())
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(SpeciesParams),
    Many(Vec<SpeciesParams>),
}

/// Parse a species file holding either one species object or a list.
pub fn parse_species(text: &str) -> Result<Vec<SpeciesParams>> {
    let list = match serde_json::from_str::<OneOrMany>(text)? {
        OneOrMany::One(s) => vec![s],
        OneOrMany::Many(v) => v,
    };
    for s in &list {
        s.validate()?;
    }
    Ok(list)
}

/// Load species from a file path, an asset file name, or a species name
/// found in one of the shipped species files (case-insensitive).
pub fn load_species(reference: &str) -> Result<Vec<SpeciesParams>> {
    if let Ok(text) = assets::read_path_or_asset(reference) {
        return parse_species(&text);
    }
    for file in assets::SPECIES_FILES {
        let list = parse_species(&assets::read_asset(file)?)?;
        if let Some(s) = list.into_iter().find(|s| s.name.eq_ignore_ascii_case(reference)) {
            return Ok(vec![s]);
        }
    }
    Err(PfiError::Config(format!("species {reference} not found")))
}

/// Convenience lookup of a single shipped species by name.
pub fn shipped(name: &str) -> Result<SpeciesParams> {
    load_species(name)?
        .into_iter()
        .next()
        .ok_or_else(|| PfiError::Config(format!("species {name} not found")))
}
