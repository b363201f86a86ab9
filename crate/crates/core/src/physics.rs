//! System potential energies, crossing geometry and ion kinematics.
//!
//! Distances called `L` are measured from the electrical (image) plane;
//! distances called `z` from the model surface, `z = L - λ`.

use serde::{Deserialize, Serialize};

use crate::error::{PfiError, Result};
use crate::species::{Environment, SpeciesParams};
use crate::units::{self, constants};

/// Where the `n` and `n+1` potential curves cross, plus the escape hump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingGeometry {
    /// Critical distance from the image plane (nm); 0 when the barrier vanished.
    pub l_c_nm: f64,
    /// Critical distance from the model surface (nm).
    pub z_c_nm: f64,
    /// Schottky hump position (nm).
    pub l_i_nm: f64,
    /// (I_{n+1} - φ)² - (2n+1)·F·W in eV².
    pub discriminant: f64,
    /// No real crossing exists at this field.
    pub barrier_vanished: bool,
}

fn check_positive(value: f64, what: &str) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(PfiError::Domain(format!("{what} must be positive, got {value}")))
    }
}

fn check_charge(species: &SpeciesParams, n: u32) -> Result<()> {
    if n == 0 || n > species.max_charge() {
        return Err(PfiError::Domain(format!(
            "charge {n} outside [1, {}] for {}",
            species.max_charge(),
            species.name
        )));
    }
    Ok(())
}

/// U_n(L) = Σ I_i − nφ − neFL − n²C/L, in eV.
pub fn system_potential(
    species: &SpeciesParams,
    env: &Environment,
    field_vnm: f64,
    n: u32,
    l_nm: f64,
) -> Result<f64> {
    check_charge(species, n)?;
    check_positive(l_nm, "distance L")?;
    let nf = n as f64;
    Ok(species.cumulative_ionization_energy(n)?
        - nf * env.work_function_ev
        - nf * field_vnm * l_nm
        - nf * nf * constants().c_image / l_nm)
}

/// Critical distance for the step `n → n+1` at the given field. The outer
/// root of U_n(L) = U_{n+1}(L) is returned.
pub fn critical_distance(
    species: &SpeciesParams,
    env: &Environment,
    n: u32,
    field_vnm: f64,
) -> Result<CrossingGeometry> {
    if n == 0 || n >= species.max_charge() {
        return Err(PfiError::Domain(format!(
            "step {n}->{} needs I_{} for {}",
            n + 1,
            n + 1,
            species.name
        )));
    }
    check_positive(field_vnm, "field")?;
    let c = constants();
    let a = species.ionization_energy(n + 1)? - env.work_function_ev;
    let disc = a * a - (2 * n + 1) as f64 * field_vnm * c.w_image;
    let l_i_nm = hump_position(field_vnm)?;
    if disc < 0.0 || a <= 0.0 {
        return Ok(CrossingGeometry {
            l_c_nm: 0.0,
            z_c_nm: 0.0,
            l_i_nm,
            discriminant: disc,
            barrier_vanished: true,
        });
    }
    let l_c_nm = (a + disc.sqrt()) / (2.0 * field_vnm);
    Ok(CrossingGeometry {
        l_c_nm,
        z_c_nm: (l_c_nm - env.screening_length_nm).max(0.0),
        l_i_nm,
        discriminant: disc,
        barrier_vanished: false,
    })
}

/// Position of the Schottky hump of the 1+ potential, ½·√(W/F), in nm.
pub fn hump_position(field_vnm: f64) -> Result<f64> {
    check_positive(field_vnm, "field")?;
    Ok(0.5 * (constants().w_image / field_vnm).sqrt())
}

/// Kinetic energy in Hartree of an ion that left the hump with charge
/// `n_initial` and now carries charge `n` at `l_au` from the image plane,
/// having changed charge at the image-plane distances `crossings_au`.
pub(crate) fn kinetic_energy_au(
    field_au: f64,
    n_initial: u32,
    n: u32,
    crossings_au: &[f64],
    l_au: f64,
) -> f64 {
    let nf = n as f64;
    let mut k = nf * field_au * l_au + nf * nf / (4.0 * l_au);
    for (r, &lr) in (n_initial..n).zip(crossings_au) {
        k -= field_au * lr + (2 * r + 1) as f64 / (4.0 * lr);
    }
    let ni = n_initial as f64;
    k - (ni * ni * ni * field_au).sqrt()
}

/// Outer root of k(L) = 0 for the same arguments, or `None` when k > 0 for
/// all L > 0. k is convex in L, so it is positive beyond this point.
pub(crate) fn kinetic_zero_au(field_au: f64, n_initial: u32, n: u32, crossings_au: &[f64]) -> Option<f64> {
    let nf = n as f64;
    // k(L) = nF L + n²/(4L) + c
    let c = kinetic_energy_au(field_au, n_initial, n, crossings_au, 1.0) - nf * field_au - nf * nf / 4.0;
    let mut disc = c * c - nf * nf * nf * field_au;
    // a tangent minimum (the 1+ hump) can round to a slightly negative value
    if disc < 0.0 && disc > -1e-9 * c * c {
        disc = 0.0;
    }
    if c >= 0.0 || disc < 0.0 {
        return None;
    }
    Some((-c + disc.sqrt()) / (2.0 * nf * field_au))
}

/// Kinetic energy (eV) at image-plane distance `l_nm`. `crossings_nm` holds
/// one image-plane distance per completed charge step, starting from
/// `n_initial`.
pub fn kinetic_energy(
    species: &SpeciesParams,
    field_vnm: f64,
    n_initial: u32,
    n: u32,
    crossings_nm: &[f64],
    l_nm: f64,
) -> Result<f64> {
    check_charge(species, n)?;
    check_positive(field_vnm, "field")?;
    check_positive(l_nm, "distance L")?;
    if n_initial == 0 || n < n_initial {
        return Err(PfiError::Domain(format!(
            "current charge {n} below initial charge {n_initial}"
        )));
    }
    if crossings_nm.len() != (n - n_initial) as usize {
        return Err(PfiError::Domain(format!(
            "need {} crossing distances, got {}",
            n - n_initial,
            crossings_nm.len()
        )));
    }
    let crossings_au = crossings_nm
        .iter()
        .map(|&l| {
            check_positive(l, "crossing distance")?;
            units::length_to_au(l)
        })
        .collect::<Result<Vec<_>>>()?;
    let k = units::from_hartree(kinetic_energy_au(
        units::field_to_au(field_vnm)?,
        n_initial,
        n,
        &crossings_au,
        units::length_to_au(l_nm)?,
    ));
    // Rounding leaves a few ulps of negative energy exactly at the hump.
    let tol = 1e-12 * field_vnm * l_nm;
    if k < -tol {
        return Err(PfiError::NonphysicalKinematics {
            kinetic_ev: k,
            distance_nm: l_nm,
        });
    }
    Ok(k.max(0.0))
}

/// Ion speed in atomic units for kinetic energy `k_ev`.
pub fn ion_velocity(species: &SpeciesParams, k_ev: f64) -> Result<f64> {
    if k_ev.is_nan() || k_ev < 0.0 {
        return Err(PfiError::Domain(format!("kinetic energy must be >= 0, got {k_ev}")));
    }
    Ok((2.0 * units::to_hartree(k_ev) / units::amu_to_electron_masses(species.mass_amu)).sqrt())
}
