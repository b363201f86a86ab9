//! Overlap-resolution workflow: field estimate from a reference species,
//! predicted charge-state ratios at that field, count redistribution for
//! fully overlapped peaks, and a physical-consistency audit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::curves::{self, FieldEstimate, GridSpec, KinghamCurve};
use crate::error::{PfiError, Result};
use crate::species::{self, Environment};
use crate::spectrum::{parse_species_label, CsrEstimate, SpeciesCharge};
use crate::tunneling::{PfiModel, ZModel};

/// Field from a voltage ratio against a calibrated threshold field.
pub fn kellogg_field(f0_vnm: f64, voltage: f64, v0: f64) -> Result<f64> {
    if !(v0 > 0.0 && v0.is_finite()) {
        return Err(PfiError::Domain(format!("reference voltage must be positive, got {v0}")));
    }
    if !(f0_vnm > 0.0 && f0_vnm.is_finite()) {
        return Err(PfiError::Domain(format!("reference field must be positive, got {f0_vnm}")));
    }
    if !(voltage >= 0.0 && voltage.is_finite()) {
        return Err(PfiError::Domain(format!("voltage must be non-negative, got {voltage}")));
    }
    Ok(f0_vnm * voltage / v0)
}

/// Invert the reference species' curve at its measured CSR, with the 2σ
/// counting interval.
pub fn estimate_field(reference: &CsrEstimate, curve: &KinghamCurve) -> Result<FieldEstimate> {
    curves::csr_to_field(curve, reference.value, Some(reference.two_sigma))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeakCounts {
    pub mz: f64,
    pub counts: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IonCounts {
    pub ion: SpeciesCharge,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mz: Option<f64>,
    pub counts: f64,
}

/// A target peak holding two contributors: `visible` and `hidden`. The
/// hidden one is estimated from the overlap-free `anchor` peak of its
/// partner charge state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverlapCase {
    pub name: String,
    pub target: PeakCounts,
    pub anchor: IonCounts,
    pub hidden: SpeciesCharge,
    pub visible: SpeciesCharge,
    /// Contributor the whole peak was credited to before resolution;
    /// defaults to `visible`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub naive: Option<SpeciesCharge>,
}

impl OverlapCase {
    pub fn naive_ion(&self) -> &SpeciesCharge {
        self.naive.as_ref().unwrap_or(&self.visible)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PfiError::Config(format!("overlap case {}: {m}", self.name)));
        if self.anchor.ion.species != self.hidden.species {
            return bad("anchor and hidden contributor must be the same species");
        }
        let pair = [self.anchor.ion.charge, self.hidden.charge];
        if !(pair == [1, 2] || pair == [2, 1]) {
            return bad("anchor and hidden contributor must be the 1+ and 2+ states");
        }
        if !(self.target.counts >= 0.0 && self.anchor.counts >= 0.0) {
            return bad("counts must be non-negative");
        }
        if self.naive_ion() != &self.visible && self.naive_ion() != &self.hidden {
            return bad("naive assignment must be one of the two contributors");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseFlag {
    /// The anchor's charge state is predicted absent; the whole target goes to
    /// the hidden contributor.
    SaturatedFraction,
    /// The predicted hidden count exceeds the target peak.
    InfeasibleOverlap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapResolution {
    pub name: String,
    pub target_mz: f64,
    pub target_counts: f64,
    pub hidden: SpeciesCharge,
    pub visible: SpeciesCharge,
    /// Predicted 2+ / (1+ + 2+) of the hidden species.
    pub csr: f64,
    /// Anchor-based estimate before clamping; absent when saturated.
    pub predicted_hidden: Option<f64>,
    pub hidden_counts: f64,
    pub remainder_counts: f64,
    /// Predicted hidden count in excess of the target peak.
    pub deficit: f64,
    pub flags: Vec<CaseFlag>,
}

/// Split the target peak between the hidden contributor, estimated from the
/// anchor via the predicted ratio `csr`, and the visible one.
pub fn resolve_overlap(case: &OverlapCase, csr: f64) -> Result<OverlapResolution> {
    case.validate()?;
    if !(0.0..=1.0).contains(&csr) {
        return Err(PfiError::Domain(format!("{}: CSR {csr} outside [0, 1]", case.name)));
    }
    let share = |q: u32| if q == 2 { csr } else { 1.0 - csr };
    let (r_hidden, r_anchor) = (share(case.hidden.charge), share(case.anchor.ion.charge));
    let target = case.target.counts;
    let mut flags = Vec::new();
    let (predicted, hidden) = if r_anchor == 0.0 {
        flags.push(CaseFlag::SaturatedFraction);
        (None, target)
    } else {
        let p = case.anchor.counts * r_hidden / r_anchor;
        (Some(p), p.min(target))
    };
    let deficit = predicted.map_or(0.0, |p| (p - target).max(0.0));
    if deficit > 0.0 {
        flags.push(CaseFlag::InfeasibleOverlap);
    }
    Ok(OverlapResolution {
        name: case.name.clone(),
        target_mz: case.target.mz,
        target_counts: target,
        hidden: case.hidden.clone(),
        visible: case.visible.clone(),
        csr,
        predicted_hidden: predicted,
        hidden_counts: hidden,
        remainder_counts: target - hidden,
        deficit,
        flags,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditKind {
    CompositionExceedsNominal,
    PredictedCountsExceedPeak,
    UnexpectedChargeStatePresent,
    MissingExpectedPeak,
    CsrMismatch,
}

impl AuditKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::CompositionExceedsNominal => "composition_exceeds_nominal",
            Self::PredictedCountsExceedPeak => "predicted_counts_exceed_peak",
            Self::UnexpectedChargeStatePresent => "unexpected_charge_state_present",
            Self::MissingExpectedPeak => "missing_expected_peak",
            Self::CsrMismatch => "csr_mismatch",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditFlag {
    pub kind: AuditKind,
    pub subject: String,
    /// The arithmetic that triggered the flag.
    pub detail: String,
}

/// Predicted charge-state information for one species at the field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub csr: f64,
    /// f_1..f_K when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fractions: Option<Vec<f64>>,
    pub source: String,
}

impl Prediction {
    /// Predicted fraction of charge `q`, if the prediction covers it. With
    /// only a ratio, 1+ and 2+ are taken as the whole population.
    pub fn fraction(&self, q: u32) -> Option<f64> {
        match &self.fractions {
            Some(f) => Some(f.get((q as usize).wrapping_sub(1)).copied().unwrap_or(0.0)),
            None => match q {
                1 => Some(1.0 - self.csr),
                2 => Some(self.csr),
                _ => None,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrCheck {
    pub observed: CsrEstimate,
    pub predicted: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Composition {
    /// Atomic fraction per element, naive assignment of every target peak
    /// to its visible contributor.
    pub before: BTreeMap<String, f64>,
    /// Atomic fraction per element after overlap resolution.
    pub after: BTreeMap<String, f64>,
}

/// Everything the audit looks at.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditInput<'a> {
    pub resolutions: &'a [OverlapResolution],
    pub cases: &'a [OverlapCase],
    pub ions: &'a [IonCounts],
    pub predictions: &'a BTreeMap<String, Prediction>,
    pub composition: Option<&'a Composition>,
    pub nominal: &'a BTreeMap<String, f64>,
    pub csr_checks: &'a [CsrCheck],
    pub presence_threshold: f64,
}

/// Tolerance above the nominal atomic fraction before flagging.
pub const COMPOSITION_MARGIN: f64 = 0.005;
/// Extra CSR deviation tolerated beyond the 2σ counting error.
pub const CSR_MISMATCH_MARGIN: f64 = 0.05;
/// Expected counts below which an empty peak is not reported missing.
pub const MISSING_PEAK_MIN_EXPECTED: f64 = 10.0;
pub const DEFAULT_PRESENCE_THRESHOLD: f64 = 1e-4;

pub fn audit_consistency(input: &AuditInput) -> Vec<AuditFlag> {
    let mut flags = Vec::new();
    if let Some(c) = input.composition {
        for (el, &nominal) in input.nominal {
            let got = c.after.get(el).copied().unwrap_or(0.0);
            if got > nominal + COMPOSITION_MARGIN {
                flags.push(AuditFlag {
                    kind: AuditKind::CompositionExceedsNominal,
                    subject: el.clone(),
                    detail: format!(
                        "{el} = {:.2} at.% after resolution (before {:.2} at.%) exceeds nominal {:.2} at.%",
                        100.0 * got,
                        100.0 * c.before.get(el).copied().unwrap_or(0.0),
                        100.0 * nominal
                    ),
                });
            }
        }
    }
    for (res, case) in input.resolutions.iter().zip(input.cases) {
        let Some(predicted) = res.predicted_hidden else { continue };
        if predicted > res.target_counts {
            let (rh, ra) = if res.hidden.charge == 2 { (res.csr, 1.0 - res.csr) } else { (1.0 - res.csr, res.csr) };
            flags.push(AuditFlag {
                kind: AuditKind::PredictedCountsExceedPeak,
                subject: res.hidden.to_string(),
                detail: format!(
                    "{} predicted from {} = {} x {}/{} = {:.0} > {} counts at {} Da",
                    res.hidden, case.anchor.ion, case.anchor.counts, fmt_short(rh), fmt_short(ra),
                    predicted, res.target_counts, res.target_mz
                ),
            });
        }
    }
    // anchors are covered by the saturated-fraction case flag
    for ion in input.ions.iter().filter(|i| i.counts > 0.0) {
        let Some(p) = input.predictions.get(&ion.ion.species) else { continue };
        if let Some(f) = p.fraction(ion.ion.charge) {
            if f < input.presence_threshold {
                flags.push(AuditFlag {
                    kind: AuditKind::UnexpectedChargeStatePresent,
                    subject: ion.ion.to_string(),
                    detail: format!(
                        "{} counts observed{} while the predicted fraction is {} < {}",
                        ion.counts,
                        ion.mz.map(|m| format!(" at {m} Da")).unwrap_or_default(),
                        fmt_short(f),
                        input.presence_threshold
                    ),
                });
            }
        }
    }
    for check in input.csr_checks {
        let o = &check.observed;
        let n = o.n_lo + o.n_hi;
        for (q, got, expected) in [
            (o.pair.0, o.n_lo, n * (1.0 - check.predicted)),
            (o.pair.1, o.n_hi, n * check.predicted),
        ] {
            if got == 0.0 && expected >= MISSING_PEAK_MIN_EXPECTED {
                flags.push(AuditFlag {
                    kind: AuditKind::MissingExpectedPeak,
                    subject: format!("{}:{q}", o.species),
                    detail: format!("{expected:.0} counts expected, none observed"),
                });
            }
        }
    }
    for check in input.csr_checks {
        let o = &check.observed;
        if check.deviation > o.two_sigma + CSR_MISMATCH_MARGIN {
            flags.push(AuditFlag {
                kind: AuditKind::CsrMismatch,
                subject: o.species.clone(),
                detail: format!(
                    "observed CSR {:.4} ± {:.4} (2σ) vs predicted {} (|Δ| = {:.4} > 2σ + {CSR_MISMATCH_MARGIN})",
                    o.value,
                    o.two_sigma,
                    fmt_short(check.predicted),
                    check.deviation
                ),
            });
        }
    }
    flags
}

fn fmt_short(x: f64) -> String {
    curves::fmt_num(x)
}

/// Reference-species field estimate from measured counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceField {
    /// Species reference (name, asset or path) used to compute the curve.
    pub species: String,
    pub n_lo: f64,
    pub n_hi: f64,
    /// Precomputed curve CSV (`field_Vnm,f1,..,csr`); computed if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve_csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum FieldSource {
    /// Field supplied directly (V/nm), optionally with an interval.
    Value {
        value_vnm: f64,
        #[serde(default)]
        low_vnm: Option<f64>,
        #[serde(default)]
        high_vnm: Option<f64>,
    },
    Reference(ReferenceField),
    /// Voltage scaling against a calibrated threshold field.
    Kellogg { f0_vnm: f64, voltage: f64, v0: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PredictionSource {
    /// Injected values.
    Injected {
        csr: f64,
        #[serde(default)]
        fractions: Option<Vec<f64>>,
    },
    /// Computed from a species file at the estimated field.
    Computed { species: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelOverrides {
    #[serde(rename = "work_function_eV", default, skip_serializing_if = "Option::is_none")]
    pub work_function_ev: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub screening_length_nm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zmodel: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_max_au: Option<f64>,
}

impl ModelOverrides {
    pub fn apply(&self, base: &PfiModel) -> Result<PfiModel> {
        let mut m = base.clone();
        m.env = Environment::new(
            self.work_function_ev.unwrap_or(m.env.work_function_ev),
            self.screening_length_nm.unwrap_or(m.env.screening_length_nm),
        )?;
        if let Some(z) = &self.zmodel {
            m.zmodel = ZModel::load(z)?;
        }
        if let Some(z) = self.z_max_au {
            m.z_max_au = z;
        }
        m.validate()?;
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub name: String,
    pub field: FieldSource,
    #[serde(default)]
    pub model: ModelOverrides,
    #[serde(default)]
    pub predicted: BTreeMap<String, PredictionSource>,
    #[serde(default)]
    pub overlaps: Vec<OverlapCase>,
    /// Overlap-free observed peaks.
    #[serde(default)]
    pub ions: Vec<IonCounts>,
    /// Declared atomic fractions, e.g. {"As": 0.5}.
    #[serde(default)]
    pub nominal_composition: BTreeMap<String, f64>,
    /// Species whose observed 2+/(1+ + 2+) is compared with the prediction.
    #[serde(default)]
    pub csr_checks: Vec<String>,
    #[serde(default = "default_threshold")]
    pub presence_threshold: f64,
}

fn default_threshold() -> f64 {
    DEFAULT_PRESENCE_THRESHOLD
}

impl PipelineConfig {
    /// Parse a config; relative curve paths are resolved against `base_dir`.
    pub fn from_json(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut c: Self = serde_json::from_str(text)?;
        if let (FieldSource::Reference(r), Some(dir)) = (&mut c.field, base_dir) {
            if let Some(p) = &r.curve_csv {
                if p.is_relative() {
                    r.curve_csv = Some(dir.join(p));
                }
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?, path.parent())
    }

    pub fn validate(&self) -> Result<()> {
        for case in &self.overlaps {
            case.validate()?;
            if !self.predicted.contains_key(&case.hidden.species) {
                return Err(PfiError::Config(format!(
                    "overlap case {}: no prediction for {}",
                    case.name, case.hidden.species
                )));
            }
        }
        for s in &self.csr_checks {
            if !self.predicted.contains_key(s) {
                return Err(PfiError::Config(format!("CSR check {s}: no prediction")));
            }
        }
        for (s, p) in &self.predicted {
            if let PredictionSource::Injected { csr, fractions } = p {
                if !(0.0..=1.0).contains(csr) {
                    return Err(PfiError::Config(format!("{s}: CSR {csr} outside [0, 1]")));
                }
                if let Some(f) = fractions {
                    if f.iter().any(|v| !(0.0..=1.0).contains(v)) {
                        return Err(PfiError::Config(format!("{s}: fractions must lie in [0, 1]")));
                    }
                }
            }
        }
        for (el, v) in &self.nominal_composition {
            if !(0.0..=1.0).contains(v) {
                return Err(PfiError::Config(format!("nominal fraction of {el} must be in [0, 1]")));
            }
        }
        for i in &self.ions {
            if i.counts.is_nan() || i.counts < 0.0 {
                return Err(PfiError::Config(format!("{}: negative counts", i.ion)));
            }
            parse_species_label(&i.ion.species)?;
        }
        if !(self.presence_threshold >= 0.0 && self.presence_threshold < 1.0) {
            return Err(PfiError::Config("presence threshold must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionReport {
    pub name: String,
    pub field: FieldEstimate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<CsrEstimate>,
    pub predictions: BTreeMap<String, Prediction>,
    pub resolutions: Vec<OverlapResolution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub composition: Option<Composition>,
    pub csr_checks: Vec<CsrCheck>,
    pub flags: Vec<AuditFlag>,
    pub narrative: Vec<String>,
}

fn field_from_source(source: &FieldSource, model: &PfiModel) -> Result<(FieldEstimate, Option<CsrEstimate>)> {
    match source {
        FieldSource::Value {
            value_vnm,
            low_vnm,
            high_vnm,
        } => {
            if !(*value_vnm > 0.0 && value_vnm.is_finite()) {
                return Err(PfiError::Config(format!("field value {value_vnm} must be positive")));
            }
            Ok((
                FieldEstimate {
                    field_vnm: *value_vnm,
                    low_vnm: low_vnm.unwrap_or(*value_vnm),
                    high_vnm: high_vnm.unwrap_or(*value_vnm),
                    interval_clamped: false,
                },
                None,
            ))
        }
        FieldSource::Kellogg { f0_vnm, voltage, v0 } => {
            let f = kellogg_field(*f0_vnm, *voltage, *v0)?;
            Ok((
                FieldEstimate {
                    field_vnm: f,
                    low_vnm: f,
                    high_vnm: f,
                    interval_clamped: false,
                },
                None,
            ))
        }
        FieldSource::Reference(r) => {
            let sp = species::load_species(&r.species)?
                .into_iter()
                .next()
                .ok_or_else(|| PfiError::Config(format!("no species in {}", r.species)))?;
            let curve = match &r.curve_csv {
                Some(path) => read_curve_csv(path, &sp.name)?,
                None => {
                    let grid: GridSpec = match &r.grid {
                        Some(g) => g.parse()?,
                        None => GridSpec::default(),
                    };
                    curves::generate_curve(&sp, model, &grid)?
                }
            };
            let est = CsrEstimate::from_counts(&sp.name, (1, 2), r.n_lo, r.n_hi)?;
            Ok((estimate_field(&est, &curve)?, Some(est)))
        }
    }
}

/// Read a curve written by [`KinghamCurve::write_csv`].
pub fn read_curve_csv(path: &Path, species: &str) -> Result<KinghamCurve> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let ncols = headers.len();
    if ncols < 3 || &headers[0] != "field_Vnm" || &headers[ncols - 1] != "csr" {
        return Err(PfiError::Config(format!("{}: not a curve CSV", path.display())));
    }
    let mut curve = KinghamCurve {
        species: species.to_string(),
        pair: (1, 2),
        field_grid: Vec::new(),
        fractions: Vec::new(),
        csr: Vec::new(),
    };
    for rec in rdr.records() {
        let rec = rec?;
        let v: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|_| PfiError::Config(format!("{}: bad number '{s}'", path.display()))))
            .collect::<Result<_>>()?;
        curve.field_grid.push(v[0]);
        curve.fractions.push(v[1..ncols - 1].to_vec());
        curve.csr.push(v[ncols - 1]);
    }
    Ok(curve)
}

fn predictions_at(
    config: &PipelineConfig,
    model: &PfiModel,
    field: f64,
) -> Result<BTreeMap<String, Prediction>> {
    let mut out = BTreeMap::new();
    for (name, src) in &config.predicted {
        let p = match src {
            PredictionSource::Injected { csr, fractions } => Prediction {
                csr: *csr,
                fractions: fractions.clone(),
                source: "injected".into(),
            },
            PredictionSource::Computed { species: reference } => {
                let sp = species::load_species(reference)?
                    .into_iter()
                    .next()
                    .ok_or_else(|| PfiError::Config(format!("no species in {reference}")))?;
                let cf = model.charge_fractions(&sp, field, sp.max_charge().min(curves::CURVE_MAX_CHARGE))?;
                Prediction {
                    csr: cf.csr()?,
                    fractions: Some(cf.fractions),
                    source: format!("computed at {} V/nm", curves::fmt_num(field)),
                }
            }
        };
        out.insert(name.clone(), p);
    }
    Ok(out)
}

fn atoms(ion: &SpeciesCharge) -> Result<(String, f64)> {
    let (el, k) = parse_species_label(&ion.species)?;
    Ok((el, k as f64))
}

fn fractions_of(counts: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    let total: f64 = counts.values().sum();
    counts
        .iter()
        .map(|(k, v)| (k.clone(), if total > 0.0 { v / total } else { 0.0 }))
        .collect()
}

fn composition(config: &PipelineConfig, resolutions: &[OverlapResolution]) -> Result<Composition> {
    let mut base: BTreeMap<String, f64> = BTreeMap::new();
    let add = |map: &mut BTreeMap<String, f64>, ion: &SpeciesCharge, n: f64| -> Result<()> {
        let (el, k) = atoms(ion)?;
        *map.entry(el).or_insert(0.0) += k * n;
        Ok(())
    };
    for i in &config.ions {
        add(&mut base, &i.ion, i.counts)?;
    }
    for c in &config.overlaps {
        add(&mut base, &c.anchor.ion, c.anchor.counts)?;
    }
    let mut before = base.clone();
    let mut after = base;
    for (c, r) in config.overlaps.iter().zip(resolutions) {
        add(&mut before, c.naive_ion(), r.target_counts)?;
        add(&mut after, &r.hidden, r.hidden_counts)?;
        add(&mut after, &r.visible, r.remainder_counts)?;
    }
    Ok(Composition {
        before: fractions_of(&before),
        after: fractions_of(&after),
    })
}

fn observed_counts(config: &PipelineConfig, resolutions: &[OverlapResolution]) -> BTreeMap<SpeciesCharge, f64> {
    let mut m: BTreeMap<SpeciesCharge, f64> = BTreeMap::new();
    for i in &config.ions {
        *m.entry(i.ion.clone()).or_insert(0.0) += i.counts;
    }
    for (c, r) in config.overlaps.iter().zip(resolutions) {
        *m.entry(c.anchor.ion.clone()).or_insert(0.0) += c.anchor.counts;
        *m.entry(r.hidden.clone()).or_insert(0.0) += r.hidden_counts;
        *m.entry(r.visible.clone()).or_insert(0.0) += r.remainder_counts;
    }
    m
}

/// Run the whole workflow. Inconsistencies become flags, never errors.
pub fn run_pipeline(config: &PipelineConfig, base_model: &PfiModel) -> Result<ResolutionReport> {
    config.validate()?;
    let model = config.model.apply(base_model)?;
    let (field, reference) = field_from_source(&config.field, &model)?;
    let predictions = predictions_at(config, &model, field.field_vnm)?;

    let resolutions = config
        .overlaps
        .iter()
        .map(|c| resolve_overlap(c, predictions[&c.hidden.species].csr))
        .collect::<Result<Vec<_>>>()?;

    let comp = if config.ions.is_empty() && config.overlaps.is_empty() {
        None
    } else {
        Some(composition(config, &resolutions)?)
    };

    let counts = observed_counts(config, &resolutions);
    let mut checks = Vec::new();
    for s in &config.csr_checks {
        let get = |q| counts.get(&SpeciesCharge::new(s, q)).copied().unwrap_or(0.0);
        let observed = CsrEstimate::from_counts(s, (1, 2), get(1), get(2))?;
        let predicted = predictions[s].csr;
        checks.push(CsrCheck {
            deviation: (observed.value - predicted).abs(),
            observed,
            predicted,
        });
    }

    let flags = audit_consistency(&AuditInput {
        resolutions: &resolutions,
        cases: &config.overlaps,
        ions: &config.ions,
        predictions: &predictions,
        composition: comp.as_ref(),
        nominal: &config.nominal_composition,
        csr_checks: &checks,
        presence_threshold: config.presence_threshold,
    });

    let mut narrative = Vec::new();
    for r in &resolutions {
        let mut line = format!(
            "{}: {} Da peak of {} counts -> {} {:.0}, {} {:.0}",
            r.name, r.target_mz, r.target_counts, r.hidden, r.hidden_counts, r.visible, r.remainder_counts
        );
        if r.flags.contains(&CaseFlag::SaturatedFraction) {
            line.push_str(" (predicted ratio saturated: whole peak assigned to the hidden contributor)");
        }
        if r.deficit > 0.0 {
            let _ = write!(line, " (infeasible: {:.0} predicted counts missing)", r.deficit);
        }
        narrative.push(line);
    }
    for f in &flags {
        narrative.push(format!("{} [{}]: {}", f.kind.as_str(), f.subject, f.detail));
    }

    Ok(ResolutionReport {
        name: config.name.clone(),
        field,
        reference,
        predictions,
        resolutions,
        composition: comp,
        csr_checks: checks,
        flags,
        narrative,
    })
}

/// Plain-text rendering of a report.
pub fn render_text(r: &ResolutionReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Overlap resolution: {}", r.name);
    let _ = writeln!(
        s,
        "Field: {:.3} V/nm [{:.3}, {:.3}]{}",
        r.field.field_vnm,
        r.field.low_vnm,
        r.field.high_vnm,
        if r.field.interval_clamped { " (interval clamped to curve range)" } else { "" }
    );
    if let Some(e) = &r.reference {
        let _ = writeln!(s, "Reference {} CSR: {:.5} ± {:.5} (2σ)", e.species, e.value, e.two_sigma);
    }
    let _ = writeln!(s, "\nPredicted charge-state ratios:");
    for (name, p) in &r.predictions {
        let _ = writeln!(s, "  {name:<8} {:<12} ({})", fmt_short(p.csr), p.source);
    }
    if !r.resolutions.is_empty() {
        let _ = writeln!(s, "\nOverlaps:");
        for x in &r.resolutions {
            let _ = writeln!(
                s,
                "  {:<16} {:>8} Da  {:>10}  {} = {:.0}  {} = {:.0}  {}",
                x.name,
                fmt_short(x.target_mz),
                fmt_short(x.target_counts),
                x.hidden,
                x.hidden_counts,
                x.visible,
                x.remainder_counts,
                x.flags.iter().map(|f| format!("{f:?}")).collect::<Vec<_>>().join(",")
            );
        }
    }
    if let Some(c) = &r.composition {
        let _ = writeln!(s, "\nComposition (at.%):  before -> after");
        for (el, a) in &c.after {
            let b = c.before.get(el).copied().unwrap_or(0.0);
            let _ = writeln!(s, "  {el:<4} {:>7.2} -> {:>7.2}", 100.0 * b, 100.0 * a);
        }
    }
    if !r.csr_checks.is_empty() {
        let _ = writeln!(s, "\nCSR checks:");
        for c in &r.csr_checks {
            let _ = writeln!(
                s,
                "  {:<8} observed {:.4} ± {:.4}  predicted {}",
                c.observed.species,
                c.observed.value,
                c.observed.two_sigma,
                fmt_short(c.predicted)
            );
        }
    }
    let _ = writeln!(s, "\nFlags: {}", if r.flags.is_empty() { "none" } else { "" });
    for f in &r.flags {
        let _ = writeln!(s, "  - {} [{}]: {}", f.kind.as_str(), f.subject, f.detail);
    }
    s
}
