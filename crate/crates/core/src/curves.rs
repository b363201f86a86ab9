//! Charge-state-ratio curves over field grids, F⁵⁰ crossovers, curve
//! inversion and one-parameter model fits.

use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PfiError, Result};
use crate::interp::MonotoneCubic;
use crate::roots;
use crate::species::SpeciesParams;
use crate::tunneling::{ChargeFractions, PfiModel, ZModel};

pub const MAX_GRID_FIELD_VNM: f64 = 60.0;
pub const DEFAULT_SEARCH: (f64, f64) = (5.0, 45.0);
/// Highest charge state carried in curves.
pub const CURVE_MAX_CHARGE: u32 = 3;

/// Round to `digits` significant decimal digits.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", digits.saturating_sub(1), x).parse().unwrap_or(x)
}

/// Field grid `lo:hi:step` in V/nm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            lo: 5.0,
            hi: 45.0,
            step: 0.1,
        }
    }
}

impl GridSpec {
    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Self> {
        let g = Self { lo, hi, step };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.lo, self.hi, self.step].iter().all(|v| v.is_finite())
            && self.lo > 0.0
            && self.hi <= MAX_GRID_FIELD_VNM
            && self.lo <= self.hi
            && self.step > 0.0;
        if !ok {
            return Err(PfiError::Config(format!(
                "grid {}:{}:{} must satisfy 0 < lo <= hi <= {MAX_GRID_FIELD_VNM} V/nm and step > 0",
                self.lo, self.hi, self.step
            )));
        }
        if (self.hi - self.lo) / self.step > 1e6 {
            return Err(PfiError::Config("grid has more than 10^6 points".into()));
        }
        Ok(())
    }

    /// Points lo, lo+step, ... up to hi (inclusive within 1e-9 of a step).
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| round_sig(self.lo + i as f64 * self.step, 12)).collect()
    }
}

impl FromStr for GridSpec {
    type Err = PfiError;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || PfiError::Config(format!("grid '{s}' is not lo:hi:step"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let v: Vec<f64> = parts
            .iter()
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        Self::new(v[0], v[1], v[2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinghamCurve {
    pub species: String,
    /// Charge pair (lo, hi) of the ratio f_hi / (f_lo + f_hi).
    pub pair: (u32, u32),
    pub field_grid: Vec<f64>,
    /// One row of f_1..f_K per grid point.
    pub fractions: Vec<Vec<f64>>,
    pub csr: Vec<f64>,
}

impl KinghamCurve {
    pub fn max_charge(&self) -> usize {
        self.fractions.first().map_or(0, Vec::len)
    }

    fn interpolant(&self) -> Result<MonotoneCubic> {
        MonotoneCubic::new(&self.field_grid, &self.csr)
    }

    /// CSR at an arbitrary field inside the grid by monotone interpolation.
    pub fn csr_at(&self, field_vnm: f64) -> Result<f64> {
        let (lo, hi) = (self.field_grid[0], self.field_grid[self.field_grid.len() - 1]);
        if !(lo..=hi).contains(&field_vnm) {
            return Err(PfiError::Extrapolation {
                value: field_vnm,
                low: lo,
                high: hi,
            });
        }
        if self.field_grid.len() == 1 {
            return Ok(self.csr[0]);
        }
        Ok(self.interpolant()?.eval(field_vnm).clamp(0.0, 1.0))
    }

    /// CSV with header `field_Vnm,f1,..,fK,csr`, 9 significant digits.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let mut header = vec!["field_Vnm".to_string()];
        header.extend((1..=self.max_charge()).map(|q| format!("f{q}")));
        header.push("csr".into());
        writeln!(w, "{}", header.join(","))?;
        for ((f, row), c) in self.field_grid.iter().zip(&self.fractions).zip(&self.csr) {
            let mut cells = vec![fmt_num(*f)];
            cells.extend(row.iter().map(|x| fmt_num(*x)));
            cells.push(fmt_num(*c));
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Shortest round-trip text of `x` rounded to 9 significant digits.
pub fn fmt_num(x: f64) -> String {
    let r = round_sig(x, 9);
    if r == r.trunc() && r.abs() < 1e15 {
        format!("{}", r as i64)
    } else {
        format!("{r:?}")
    }
}

fn curve_charge(species: &SpeciesParams) -> u32 {
    species.max_charge().min(CURVE_MAX_CHARGE)
}

/// Default 2+/(1+ + 2+) ratio at one field.
pub fn csr_at_field(species: &SpeciesParams, model: &PfiModel, field_vnm: f64) -> Result<f64> {
    model.charge_fractions(species, field_vnm, curve_charge(species))?.csr()
}

pub fn generate_curve(species: &SpeciesParams, model: &PfiModel, grid: &GridSpec) -> Result<KinghamCurve> {
    grid.validate()?;
    species.validate()?;
    model.validate()?;
    let kmax = curve_charge(species);
    let points = grid.points();
    // keep per-point results in grid order so the first failure reported is
    // the lowest offending field, independent of scheduling
    let rows: Vec<Result<ChargeFractions>> = points
        .par_iter()
        .map(|&f| {
            model.charge_fractions(species, f, kmax).map_err(|e| {
                e.context(format!("{} at {f} V/nm", species.name))
            })
        })
        .collect();
    let mut fractions = Vec::with_capacity(points.len());
    let mut csr = Vec::with_capacity(points.len());
    for row in rows {
        let row = row?;
        csr.push(row.csr()?);
        fractions.push(row.fractions);
    }
    Ok(KinghamCurve {
        species: species.name.clone(),
        pair: (1, 2),
        field_grid: points,
        fractions,
        csr,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossoverResult {
    pub f50: f64,
    pub bracket: (f64, f64),
    pub achieved_csr: f64,
    pub evaluations: usize,
}

const F50_XTOL: f64 = 1e-6;
const F50_CSR_TOL: f64 = 1e-6;

/// Field at which the CSR equals 0.5, searched within `range` (V/nm).
pub fn find_f50(species: &SpeciesParams, model: &PfiModel, range: (f64, f64)) -> Result<CrossoverResult> {
    find_csr_field(species, model, range, 0.5)
}

/// Field at which the CSR equals `target`.
pub fn find_csr_field(
    species: &SpeciesParams,
    model: &PfiModel,
    range: (f64, f64),
    target: f64,
) -> Result<CrossoverResult> {
    let (lo, hi) = range;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(PfiError::Config(format!("search range ({lo}, {hi}) is invalid")));
    }
    let mut evaluations = 0;
    let mut g = |f: f64| {
        evaluations += 1;
        Ok(csr_at_field(species, model, f)? - target)
    };
    let (glo, ghi) = (g(lo)?, g(hi)?);
    if !(glo < 0.0 && ghi > 0.0) {
        return Err(PfiError::Bracket(format!(
            "{}: CSR is {:.6} at {lo} V/nm and {:.6} at {hi} V/nm, no crossing of {target}",
            species.name,
            glo + target,
            ghi + target
        )));
    }
    let r = roots::brent(&mut g, lo, hi, F50_XTOL, 0.0, 200)?;
    let achieved = r.fx + target;
    if (achieved - target).abs() >= F50_CSR_TOL || r.hi - r.lo >= 1e-3 {
        return Err(PfiError::Numerical(format!(
            "{}: crossover search stalled at {} V/nm (CSR {achieved})",
            species.name, r.x
        )));
    }
    Ok(CrossoverResult {
        f50: r.x,
        bracket: (r.lo, r.hi),
        achieved_csr: achieved,
        evaluations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldEstimate {
    pub field_vnm: f64,
    pub low_vnm: f64,
    pub high_vnm: f64,
    /// An interval end fell outside the curve's CSR range and was clamped.
    pub interval_clamped: bool,
}

/// Invert the curve at `csr`; with `sigma`, also map `csr ± sigma`.
pub fn csr_to_field(curve: &KinghamCurve, csr: f64, sigma: Option<f64>) -> Result<FieldEstimate> {
    if curve.field_grid.len() < 2 {
        return Err(PfiError::Domain("curve inversion needs at least two grid points".into()));
    }
    let cmin = curve.csr.iter().copied().fold(f64::INFINITY, f64::min);
    let cmax = curve.csr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(csr > cmin && csr < cmax) {
        return Err(PfiError::Extrapolation {
            value: csr,
            low: cmin,
            high: cmax,
        });
    }
    let interp = curve.interpolant()?;
    let invert = |c: f64| -> Result<f64> {
        let roots = interp.solve(c);
        match roots.as_slice() {
            [x] => Ok(*x),
            [] => Err(PfiError::Numerical(format!("no field found for CSR {c}"))),
            many => Err(PfiError::Ambiguity(format!(
                "CSR {c} is reached at several fields on a non-monotone curve: {}",
                many.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ")
            ))),
        }
    };
    let field = invert(csr)?;
    let (lo_f, hi_f) = (curve.field_grid[0], curve.field_grid[curve.field_grid.len() - 1]);
    let mut clamped = false;
    let mut bound = |c: f64, edge: f64| -> Result<f64> {
        if c <= cmin || c >= cmax {
            clamped = true;
            Ok(edge)
        } else {
            invert(c)
        }
    };
    let (low, high) = match sigma {
        Some(s) if s > 0.0 => (bound(csr - s, lo_f)?, bound(csr + s, hi_f)?),
        Some(s) if s < 0.0 => {
            return Err(PfiError::Domain(format!("CSR uncertainty must be >= 0, got {s}")));
        }
        _ => (field, field),
    };
    Ok(FieldEstimate {
        field_vnm: field,
        low_vnm: low.min(high),
        high_vnm: high.max(low),
        interval_clamped: clamped,
    })
}

pub const C0_RANGE: (f64, f64) = (0.01, 2.0);
pub const FIT_TOL_VNM: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZFit {
    pub zmodel: ZModel,
    pub target_f50: f64,
    pub f50: f64,
    pub residual: f64,
}

/// Crossover used as a fit objective: saturates at the search-range ends and
/// accepts a crossing through a jump (the CSR steps up where the outer
/// crossing vanishes), so it stays monotone in the fitted parameter.
fn fit_crossover(species: &SpeciesParams, model: &PfiModel) -> Result<f64> {
    let (lo, hi) = DEFAULT_SEARCH;
    let g = |f: f64| Ok(csr_at_field(species, model, f)? - 0.5);
    if g(lo)? >= 0.0 {
        return Ok(lo);
    }
    if g(hi)? <= 0.0 {
        return Ok(hi);
    }
    Ok(roots::brent(g, lo, hi, F50_XTOL, 0.0, 200)?.x)
}

/// Solve for c0 (with `c1` fixed) so that F⁵⁰ hits `target`.
pub fn fit_z_offset(species: &SpeciesParams, model: &PfiModel, target: f64, c1: f64) -> Result<ZFit> {
    let with_c0 = |c0: f64| -> Result<PfiModel> {
        let mut m = model.clone();
        m.zmodel = ZModel::new(c0, c1)?;
        Ok(m)
    };
    let f_lo = fit_crossover(species, &with_c0(C0_RANGE.0)?)?;
    let f_hi = fit_crossover(species, &with_c0(C0_RANGE.1)?)?;
    let (amin, amax) = (f_lo.min(f_hi), f_lo.max(f_hi));
    if !(target >= amin && target <= amax) {
        return Err(PfiError::FitRange {
            target,
            low: amin,
            high: amax,
        });
    }
    let r = roots::brent(
        |c0| Ok(fit_crossover(species, &with_c0(c0)?)? - target),
        C0_RANGE.0,
        C0_RANGE.1,
        1e-6,
        0.1 * FIT_TOL_VNM,
        100,
    )?;
    let mut zmodel = ZModel::new(r.x, c1)?;
    zmodel.note = Some(format!("fitted to F50 = {target} V/nm for {}", species.name));
    Ok(ZFit {
        zmodel,
        target_f50: target,
        f50: r.fx + target,
        residual: r.fx,
    })
}

pub const IE_FIT_SPAN: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IeFit {
    pub species: SpeciesParams,
    /// 1-based ladder index that was varied.
    pub index: u32,
    pub nominal_ev: f64,
    pub fitted_ev: f64,
    pub shift_ev: f64,
    pub relative_shift: f64,
    pub target_f50: f64,
    pub f50: f64,
    pub residual: f64,
}

/// Solve for I_index so that F⁵⁰ hits `target`, within ±30% of nominal and
/// strictly between the neighbouring ladder entries.
pub fn fit_ie(species: &SpeciesParams, model: &PfiModel, target: f64, index: u32) -> Result<IeFit> {
    let nominal = species.ionization_energy(index)?;
    if index < 2 {
        return Err(PfiError::Config(
            "the first ionization energy does not enter the PFI model; fit index 2 or higher".into(),
        ));
    }
    let eps = 1e-6;
    let mut lo = nominal * (1.0 - IE_FIT_SPAN);
    let mut hi = nominal * (1.0 + IE_FIT_SPAN);
    if let Ok(prev) = species.ionization_energy(index - 1) {
        lo = lo.max(prev + eps);
    }
    if let Ok(next) = species.ionization_energy(index + 1) {
        hi = hi.min(next - eps);
    }
    let f50_at = |ie: f64| -> Result<f64> {
        fit_crossover(&species.with_ionization_energy(index, ie)?, model)
    };
    let (f_lo, f_hi) = (f50_at(lo)?, f50_at(hi)?);
    let (amin, amax) = (f_lo.min(f_hi), f_lo.max(f_hi));
    if !(target >= amin && target <= amax) {
        return Err(PfiError::FitRange {
            target,
            low: amin,
            high: amax,
        });
    }
    let r = roots::brent(|ie| Ok(f50_at(ie)? - target), lo, hi, 1e-6, 0.1 * FIT_TOL_VNM, 100)?;
    Ok(IeFit {
        species: species.with_ionization_energy(index, r.x)?,
        index,
        nominal_ev: nominal,
        fitted_ev: r.x,
        shift_ev: r.x - nominal,
        relative_shift: (r.x - nominal) / nominal,
        target_f50: target,
        f50: r.fx + target,
        residual: r.fx,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanParameter {
    /// Principal quantum number m_q.
    Mq,
    /// Work function φ in eV.
    Phi,
}

impl FromStr for ScanParameter {
    type Err = PfiError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mq" | "m_q" => Ok(Self::Mq),
            "phi" | "work_function" => Ok(Self::Phi),
            _ => Err(PfiError::Config(format!("unknown scan parameter '{s}' (use mq or phi)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub value: f64,
    pub f50: f64,
}

pub fn sensitivity_scan(
    species: &SpeciesParams,
    model: &PfiModel,
    parameter: ScanParameter,
    values: &[f64],
) -> Result<Vec<ScanPoint>> {
    values
        .iter()
        .map(|&v| {
            let mut s = species.clone();
            let mut m = model.clone();
            match parameter {
                ScanParameter::Mq => {
                    if !(v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64) {
                        return Err(PfiError::Config(format!("m_q must be a positive integer, got {v}")));
                    }
                    s.m_q = v as u32;
                }
                ScanParameter::Phi => {
                    if !(v > 0.0 && v.is_finite()) {
                        return Err(PfiError::Config(format!("work function must be positive, got {v}")));
                    }
                    m.env.work_function_ev = v;
                }
            }
            Ok(ScanPoint {
                value: v,
                f50: find_f50(&s, &m, DEFAULT_SEARCH)?.f50,
            })
        })
        .collect()
}
