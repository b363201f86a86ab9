//! Physical constants and conversions between the SI-flavoured units used at
//! the API boundary (eV, nm, V/nm, s⁻¹) and Hartree atomic units.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::assets;
use crate::error::{PfiError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysConstants {
    /// Image-potential constant e²/16πε₀ (eV·nm).
    pub c_image: f64,
    /// e²/4πε₀ (eV·nm), exactly four times `c_image`.
    pub w_image: f64,
    /// Schottky constant (e³/4πε₀)^½ in eV·(V/nm)^-½.
    pub c_s: f64,
    pub hartree_in_ev: f64,
    pub bohr_in_nm: f64,
    pub field_au_in_vnm: f64,
    /// Atomic units of rate per s⁻¹.
    pub inv_second_in_au: f64,
    pub amu_in_electron_masses: f64,
}

const W_IMAGE: f64 = 1.439_964_547_84;

impl Default for PhysConstants {
    fn default() -> Self {
        Self {
            c_image: W_IMAGE / 4.0,
            w_image: W_IMAGE,
            c_s: 1.199_985_228_1,
            hartree_in_ev: 27.211_386_245_988,
            bohr_in_nm: 0.052_917_721_090_3,
            field_au_in_vnm: 514.220_674_763,
            inv_second_in_au: 2.418_884_326_509e-17,
            amu_in_electron_masses: 1_822.888_486_209,
        }
    }
}

#[derive(Debug, Deserialize)]
struct ConstantsFile {
    constants: Vec<ConstantEntry>,
}

#[derive(Debug, Deserialize)]
struct ConstantEntry {
    name: String,
    value: f64,
}

impl PhysConstants {
    /// Parse a `constants.json` document. Entries that are absent keep their
    /// default value.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ConstantsFile = serde_json::from_str(text)?;
        let mut c = Self::default();
        for entry in file.constants {
            let slot = match entry.name.as_str() {
                "c_image" => &mut c.c_image,
                "w_image" => &mut c.w_image,
                "c_s" => &mut c.c_s,
                "hartree_in_ev" => &mut c.hartree_in_ev,
                "bohr_in_nm" => &mut c.bohr_in_nm,
                "field_au_in_vnm" => &mut c.field_au_in_vnm,
                "inv_second_in_au" => &mut c.inv_second_in_au,
                "amu_in_electron_masses" => &mut c.amu_in_electron_masses,
                other => return Err(PfiError::Config(format!("unknown constant {other}"))),
            };
            *slot = entry.value;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.c_image,
            self.w_image,
            self.c_s,
            self.hartree_in_ev,
            self.bohr_in_nm,
            self.field_au_in_vnm,
            self.inv_second_in_au,
            self.amu_in_electron_masses,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(PfiError::Config("constants must be finite and positive".into()));
        }
        if self.w_image != 4.0 * self.c_image {
            return Err(PfiError::Config("w_image must equal 4 * c_image".into()));
        }
        Ok(())
    }
}

static CONSTANTS: OnceLock<PhysConstants> = OnceLock::new();

/// Process-wide constants, read once from `constants.json` (asset directory
/// override first, then the embedded copy). Falls back to the compiled
/// defaults if the file cannot be read.
pub fn constants() -> &'static PhysConstants {
    CONSTANTS.get_or_init(|| {
        assets::read_asset("constants.json")
            .and_then(|t| PhysConstants::from_json(&t))
            .unwrap_or_default()
    })
}

fn non_negative(value: f64, what: &str) -> Result<f64> {
    if value.is_nan() || value < 0.0 {
        Err(PfiError::Domain(format!("{what} must be non-negative, got {value}")))
    } else {
        Ok(value)
    }
}

pub fn to_hartree(energy_ev: f64) -> f64 {
    energy_ev / constants().hartree_in_ev
}

pub fn from_hartree(energy_ha: f64) -> f64 {
    energy_ha * constants().hartree_in_ev
}

pub fn field_to_au(field_vnm: f64) -> Result<f64> {
    Ok(non_negative(field_vnm, "field")? / constants().field_au_in_vnm)
}

pub fn field_from_au(field_au: f64) -> Result<f64> {
    Ok(non_negative(field_au, "field")? * constants().field_au_in_vnm)
}

pub fn length_to_au(length_nm: f64) -> Result<f64> {
    Ok(non_negative(length_nm, "length")? / constants().bohr_in_nm)
}

pub fn length_from_au(length_au: f64) -> Result<f64> {
    Ok(non_negative(length_au, "length")? * constants().bohr_in_nm)
}

pub fn rate_si_to_au(rate_per_s: f64) -> Result<f64> {
    Ok(non_negative(rate_per_s, "rate")? * constants().inv_second_in_au)
}

pub fn rate_au_to_si(rate_au: f64) -> Result<f64> {
    Ok(non_negative(rate_au, "rate")? / constants().inv_second_in_au)
}

pub fn amu_to_electron_masses(mass_amu: f64) -> f64 {
    mass_amu * constants().amu_in_electron_masses
}
