//! Isotopologue distributions, isotope-constrained deconvolution of
//! overlapping mass peaks, and charge-state ratios from counts.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assets;
use crate::error::{PfiError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Isotope {
    pub mass_number: u32,
    /// Atomic mass in Da.
    pub mass: f64,
    pub abundance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotopeTable {
    #[serde(default)]
    pub version: String,
    pub elements: BTreeMap<String, Vec<Isotope>>,
}

impl IsotopeTable {
    pub fn from_json(text: &str) -> Result<Self> {
        let t: Self = serde_json::from_str(text)?;
        t.validate()?;
        Ok(t)
    }

    /// The shipped natural-abundance table.
    pub fn shipped() -> Result<Self> {
        Self::from_json(&assets::read_asset("isotopes.json")?)
    }

    pub fn load(reference: &str) -> Result<Self> {
        Self::from_json(&assets::read_path_or_asset(reference)?)
    }

    pub fn validate(&self) -> Result<()> {
        for (el, isos) in &self.elements {
            if isos.is_empty() {
                return Err(PfiError::Config(format!("element {el} has no isotopes")));
            }
            let sum: f64 = isos.iter().map(|i| i.abundance).sum();
            if (sum - 1.0).abs() > 1e-9 || isos.iter().any(|i| i.abundance.is_nan() || i.abundance < 0.0) {
                return Err(PfiError::Config(format!("{el} abundances sum to {sum}, not 1")));
            }
            if isos.windows(2).any(|w| !(w[1].mass > w[0].mass && w[1].mass_number > w[0].mass_number)) {
                return Err(PfiError::Config(format!("{el} isotopes must be listed by increasing mass")));
            }
        }
        Ok(())
    }

    pub fn element(&self, symbol: &str) -> Result<&[Isotope]> {
        self.elements
            .get(symbol)
            .map(Vec::as_slice)
            .ok_or_else(|| PfiError::Config(format!("element {symbol} not in isotope table")))
    }
}

/// One total-mass-number bucket of a cluster's isotope pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Isotopologue {
    pub mass_number: u32,
    /// Probability-weighted mean mass of the bucket (Da).
    pub mass: f64,
    pub probability: f64,
}

/// Mass-number distribution of an `k`-atom homonuclear cluster.
pub fn isotopologue_distribution(table: &IsotopeTable, element: &str, k: u32) -> Result<Vec<Isotopologue>> {
    if k == 0 {
        return Err(PfiError::Domain("cluster size must be >= 1".into()));
    }
    let isos = table.element(element)?;
    // mass number -> (probability, probability · mass)
    let mut dist: BTreeMap<u32, (f64, f64)> = BTreeMap::new();
    dist.insert(0, (1.0, 0.0));
    for _ in 0..k {
        let mut next: BTreeMap<u32, (f64, f64)> = BTreeMap::new();
        for (&a, &(p, pm)) in &dist {
            for iso in isos {
                let e = next.entry(a + iso.mass_number).or_insert((0.0, 0.0));
                e.0 += p * iso.abundance;
                e.1 += pm * iso.abundance + p * iso.abundance * iso.mass;
            }
        }
        dist = next;
    }
    Ok(dist
        .into_iter()
        .filter(|(_, (p, _))| *p > 0.0)
        .map(|(a, (p, pm))| Isotopologue {
            mass_number: a,
            mass: pm / p,
            probability: p,
        })
        .collect())
}

/// Split a homonuclear label such as `Si2` into (`Si`, 2).
pub fn parse_species_label(label: &str) -> Result<(String, u32)> {
    let bad = || PfiError::Config(format!("species label '{label}' is not <Element><count>"));
    let split = label.find(|c: char| c.is_ascii_digit()).unwrap_or(label.len());
    let (el, num) = label.split_at(split);
    let mut chars = el.chars();
    if !chars.next().is_some_and(|c| c.is_ascii_uppercase()) || !chars.all(|c| c.is_ascii_lowercase()) {
        return Err(bad());
    }
    let k = if num.is_empty() { 1 } else { num.parse().map_err(|_| bad())? };
    if k == 0 {
        return Err(bad());
    }
    Ok((el.to_string(), k))
}

/// A species in one charge state, written `Si2:2`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SpeciesCharge {
    pub species: String,
    pub charge: u32,
}

impl SpeciesCharge {
    pub fn new(species: &str, charge: u32) -> Self {
        Self {
            species: species.to_string(),
            charge,
        }
    }
}

impl TryFrom<String> for SpeciesCharge {
    type Error = PfiError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SpeciesCharge> for String {
    fn from(v: SpeciesCharge) -> String {
        v.to_string()
    }
}

impl fmt::Display for SpeciesCharge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.species, self.charge)
    }
}

impl FromStr for SpeciesCharge {
    type Err = PfiError;

    fn from_str(s: &str) -> Result<Self> {
        let (sp, q) = s
            .split_once(':')
            .ok_or_else(|| PfiError::Config(format!("'{s}' is not Species:charge")))?;
        let charge: u32 = q
            .trim()
            .parse()
            .map_err(|_| PfiError::Config(format!("bad charge in '{s}'")))?;
        if charge == 0 {
            return Err(PfiError::Config(format!("charge must be >= 1 in '{s}'")));
        }
        parse_species_label(sp.trim())?;
        Ok(Self::new(sp.trim(), charge))
    }
}

/// Candidate assignment `Species:charge:massnumber`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Assignment {
    pub ion: SpeciesCharge,
    pub mass_number: u32,
}

impl FromStr for Assignment {
    type Err = PfiError;

    fn from_str(s: &str) -> Result<Self> {
        let (ion, a) = s
            .trim()
            .rsplit_once(':')
            .ok_or_else(|| PfiError::Config(format!("assignment '{s}' is not Species:charge:massnumber")))?;
        Ok(Self {
            ion: ion.parse()?,
            mass_number: a
                .trim()
                .parse()
                .map_err(|_| PfiError::Config(format!("bad mass number in '{s}'")))?,
        })
    }
}

impl TryFrom<String> for Assignment {
    type Error = PfiError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Assignment> for String {
    fn from(v: Assignment) -> String {
        v.to_string()
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.ion, self.mass_number)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub mz: f64,
    pub counts: f64,
    pub assignments: Vec<Assignment>,
}

pub const DEFAULT_RANGING_HALF_WIDTH_DA: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RangedPeakSet {
    pub peaks: Vec<Peak>,
}

#[derive(Deserialize)]
struct PeakRow {
    #[serde(rename = "mz_Da")]
    mz: f64,
    counts: f64,
    #[serde(default)]
    assignments: String,
}

impl RangedPeakSet {
    /// Read `mz_Da,counts,assignments` CSV.
    pub fn from_csv(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut peaks = Vec::new();
        for row in rdr.deserialize::<PeakRow>() {
            let row = row?;
            let assignments = row
                .assignments
                .split(';')
                .filter(|a| !a.trim().is_empty())
                .map(str::parse)
                .collect::<Result<Vec<Assignment>>>()?;
            peaks.push(Peak {
                mz: row.mz,
                counts: row.counts,
                assignments,
            });
        }
        Ok(Self { peaks })
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        Self::from_csv(std::fs::File::open(path)?)
    }

    /// Counts are finite and non-negative, and every assignment's
    /// isotopologue lands on its peak within `tolerance_da`.
    pub fn validate(&self, table: &IsotopeTable, tolerance_da: f64) -> Result<()> {
        let mut seen = BTreeMap::new();
        for (i, p) in self.peaks.iter().enumerate() {
            if !(p.counts.is_finite() && p.counts >= 0.0) {
                return Err(PfiError::Config(format!("peak at {} Da has counts {}", p.mz, p.counts)));
            }
            for a in &p.assignments {
                let iso = find_isotopologue(table, a)?;
                let mz = iso.mass / a.ion.charge as f64;
                if (mz - p.mz).abs() > tolerance_da {
                    return Err(PfiError::Config(format!(
                        "{a} sits at {mz:.3} Da, not within {tolerance_da} Da of the peak at {} Da",
                        p.mz
                    )));
                }
                if let Some(j) = seen.insert(a.clone(), i) {
                    return Err(PfiError::Config(format!(
                        "{a} is assigned to both {} Da and {} Da",
                        self.peaks[j].mz, p.mz
                    )));
                }
            }
        }
        Ok(())
    }
}

fn find_isotopologue(table: &IsotopeTable, a: &Assignment) -> Result<Isotopologue> {
    let (el, k) = parse_species_label(&a.ion.species)?;
    isotopologue_distribution(table, &el, k)?
        .into_iter()
        .find(|i| i.mass_number == a.mass_number)
        .ok_or_else(|| PfiError::Config(format!("{} has no isotopologue of mass number {}", a.ion.species, a.mass_number)))
}

/// Peak × (species, charge) matrix of expected relative abundance.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapMatrix {
    pub columns: Vec<SpeciesCharge>,
    pub values: DMatrix<f64>,
    /// Isotopologue probability of each column captured by the ranged peaks.
    pub coverage: Vec<f64>,
}

pub fn build_overlap_matrix(peaks: &RangedPeakSet, table: &IsotopeTable) -> Result<OverlapMatrix> {
    peaks.validate(table, DEFAULT_RANGING_HALF_WIDTH_DA)?;
    let mut columns: Vec<SpeciesCharge> = Vec::new();
    for a in peaks.peaks.iter().flat_map(|p| &p.assignments) {
        if !columns.contains(&a.ion) {
            columns.push(a.ion.clone());
        }
    }
    let mut values = DMatrix::zeros(peaks.peaks.len(), columns.len());
    for (i, p) in peaks.peaks.iter().enumerate() {
        for a in &p.assignments {
            let j = columns.iter().position(|c| *c == a.ion).expect("column collected above");
            values[(i, j)] += find_isotopologue(table, a)?.probability;
        }
    }
    let coverage: Vec<f64> = (0..columns.len()).map(|j| values.column(j).sum()).collect();
    if let Some(j) = coverage.iter().position(|&c| c <= 0.0) {
        return Err(PfiError::Degenerate(format!("{} has no captured isotopologue probability", columns[j])));
    }
    Ok(OverlapMatrix {
        columns,
        values,
        coverage,
    })
}

/// Connected groups of peaks that share a contributor, as (rows, columns).
pub fn peak_families(matrix: &OverlapMatrix) -> Vec<(Vec<usize>, Vec<usize>)> {
    let (m, n) = matrix.values.shape();
    // union-find over m peak nodes followed by n column nodes
    let mut parent: Vec<usize> = (0..m + n).collect();
    fn root(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for i in 0..m {
        for j in 0..n {
            if matrix.values[(i, j)] > 0.0 {
                let (a, b) = (root(&mut parent, i), root(&mut parent, m + j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: BTreeMap<usize, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for j in 0..n {
        let r = root(&mut parent, m + j);
        groups.entry(r).or_default().1.push(j);
    }
    for i in 0..m {
        let r = root(&mut parent, i);
        if let Some(g) = groups.get_mut(&r) {
            g.0.push(i);
        }
    }
    groups.into_values().collect()
}

/// Lawson–Hanson active-set non-negative least squares.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let (m, n) = a.shape();
    if b.len() != m {
        return Err(PfiError::Domain("nnls: dimension mismatch".into()));
    }
    let mut x = DVector::zeros(n);
    if n == 0 {
        return Ok(x);
    }
    let tol = 10.0 * f64::EPSILON * a.abs().column_sum().max() * m.max(n) as f64;
    let mut passive = vec![false; n];
    let solve_passive = |passive: &[bool]| -> Result<DVector<f64>> {
        let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        let sub = a.select_columns(&idx);
        let sol = sub
            .svd(true, true)
            .solve(b, 1e-14)
            .map_err(|e| PfiError::Numerical(format!("nnls subproblem: {e}")))?;
        let mut s = DVector::zeros(n);
        for (k, &j) in idx.iter().enumerate() {
            s[j] = sol[k];
        }
        Ok(s)
    };
    for _ in 0..3 * n + 10 {
        let w = a.transpose() * (b - a * &x);
        let pick = (0..n)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = pick else {
            return Ok(x);
        };
        passive[j] = true;
        for _ in 0..3 * n + 10 {
            let s = solve_passive(&passive)?;
            if (0..n).filter(|&k| passive[k]).all(|k| s[k] > tol) {
                x = s;
                break;
            }
            let alpha = (0..n)
                .filter(|&k| passive[k] && s[k] <= tol)
                .map(|k| x[k] / (x[k] - s[k]))
                .fold(f64::INFINITY, f64::min);
            x += (s - &x) * alpha;
            for k in 0..n {
                if passive[k] && x[k] <= tol {
                    passive[k] = false;
                    x[k] = 0.0;
                }
            }
        }
    }
    Err(PfiError::Numerical("nnls did not converge".into()))
}

/// Counts assigned to one contributor within a peak.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub ion: SpeciesCharge,
    pub counts: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakAllocation {
    pub mz: f64,
    pub observed: f64,
    pub contributions: Vec<Contribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeconvolutionResult {
    pub columns: Vec<SpeciesCharge>,
    /// Redistributed counts summed over the ranged peaks, per column.
    pub totals: Vec<f64>,
    /// Least-squares amplitudes (whole isotope pattern, ranged or not).
    pub fitted_totals: Vec<f64>,
    pub coverage: Vec<f64>,
    pub peaks: Vec<PeakAllocation>,
    pub residual_norm: f64,
    /// Counts in peaks without any assignment.
    pub unassigned_counts: f64,
}

impl DeconvolutionResult {
    pub fn total(&self, ion: &SpeciesCharge) -> Option<f64> {
        self.columns.iter().position(|c| c == ion).map(|j| self.totals[j])
    }
}

/// Columns that make a family rank-deficient, or `None` if it has full rank.
fn colinear_columns(sub: &DMatrix<f64>) -> Option<Vec<usize>> {
    let (m, n) = sub.shape();
    if m < n {
        return Some((0..n).collect());
    }
    let svd = sub.clone().svd(false, true);
    let smax = svd.singular_values.max();
    let (k, smin) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, s)| (k, *s))?;
    if smin > 1e-10 * smax {
        return None;
    }
    let v = svd.v_t.as_ref()?.row(k).into_owned();
    Some((0..n).filter(|&j| v[j].abs() > 1e-6).collect())
}

/// Split `total` over `weights` proportionally. Integral totals are
/// apportioned in whole counts by largest remainder.
fn apportion(total: f64, weights: &[f64]) -> Vec<f64> {
    let wsum: f64 = weights.iter().sum();
    if weights.is_empty() || wsum <= 0.0 {
        return vec![0.0; weights.len()];
    }
    let exact: Vec<f64> = weights.iter().map(|w| total * w / wsum).collect();
    if total.fract() == 0.0 && total < 2f64.powi(52) {
        let mut out: Vec<f64> = exact.iter().map(|e| e.floor()).collect();
        let mut left = (total - out.iter().sum::<f64>()).round() as usize;
        let mut order: Vec<usize> = (0..weights.len()).collect();
        order.sort_by(|&i, &j| (exact[j] - out[j]).total_cmp(&(exact[i] - out[i])).then(i.cmp(&j)));
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            out[i] += 1.0;
            left -= 1;
        }
        out
    } else {
        let mut out = exact;
        let last = out.len() - 1;
        out[last] = (total - out[..last].iter().sum::<f64>()).max(0.0);
        out
    }
}

/// Non-negative least-squares fit of contributor totals to the observed
/// peaks, followed by per-peak redistribution of the observed counts.
pub fn deconvolve(peaks: &RangedPeakSet, matrix: &OverlapMatrix) -> Result<DeconvolutionResult> {
    let (m, n) = matrix.values.shape();
    if peaks.peaks.len() != m || matrix.columns.len() != n {
        return Err(PfiError::Domain("peak set and overlap matrix do not match".into()));
    }
    if let Some(p) = peaks.peaks.iter().find(|p| p.counts.is_nan() || p.counts < 0.0) {
        return Err(PfiError::Domain(format!("negative counts at {} Da", p.mz)));
    }
    let families = peak_families(matrix);
    let solved: Vec<Result<Vec<(usize, f64)>>> = families
        .par_iter()
        .map(|(rows, cols)| {
            let sub = matrix.values.select_rows(rows).select_columns(cols);
            if let Some(bad) = colinear_columns(&sub) {
                let names: Vec<String> = bad.iter().map(|&k| matrix.columns[cols[k]].to_string()).collect();
                return Err(PfiError::Ambiguity(format!(
                    "indistinguishable contributors: {}",
                    names.join(", ")
                )));
            }
            let b = DVector::from_iterator(rows.len(), rows.iter().map(|&i| peaks.peaks[i].counts));
            let x = nnls(&sub, &b)?;
            Ok(cols.iter().copied().zip(x.iter().copied()).collect())
        })
        .collect();
    let mut fitted = vec![0.0; n];
    for family in solved {
        for (j, v) in family? {
            fitted[j] = v;
        }
    }
    let x = DVector::from_vec(fitted.clone());
    let b = DVector::from_iterator(m, peaks.peaks.iter().map(|p| p.counts));
    let residual_norm = (&matrix.values * &x - &b).norm();

    let mut totals = vec![0.0; n];
    let mut allocations = Vec::with_capacity(m);
    let mut unassigned = 0.0;
    for (i, p) in peaks.peaks.iter().enumerate() {
        let cols: Vec<usize> = (0..n).filter(|&j| matrix.values[(i, j)] > 0.0).collect();
        if cols.is_empty() {
            unassigned += p.counts;
        }
        let predicted: Vec<f64> = cols.iter().map(|&j| matrix.values[(i, j)] * fitted[j]).collect();
        let weights = if predicted.iter().sum::<f64>() > 0.0 {
            predicted
        } else {
            cols.iter().map(|&j| matrix.values[(i, j)]).collect()
        };
        let shares = apportion(p.counts, &weights);
        let mut contributions = Vec::with_capacity(cols.len());
        for (&j, c) in cols.iter().zip(shares) {
            totals[j] += c;
            contributions.push(Contribution {
                ion: matrix.columns[j].clone(),
                counts: c,
            });
        }
        allocations.push(PeakAllocation {
            mz: p.mz,
            observed: p.counts,
            contributions,
        });
    }
    Ok(DeconvolutionResult {
        columns: matrix.columns.clone(),
        totals,
        fitted_totals: fitted,
        coverage: matrix.coverage.clone(),
        peaks: allocations,
        residual_norm,
        unassigned_counts: unassigned,
    })
}

/// Totals when every peak is credited entirely to its first assignment.
pub fn naive_counts(peaks: &RangedPeakSet) -> BTreeMap<SpeciesCharge, f64> {
    let mut out = BTreeMap::new();
    for p in &peaks.peaks {
        for a in &p.assignments {
            out.entry(a.ion.clone()).or_insert(0.0);
        }
        if let Some(a) = p.assignments.first() {
            *out.entry(a.ion.clone()).or_insert(0.0) += p.counts;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrEstimate {
    pub species: String,
    /// Charge pair (lo, hi): value = n_hi / (n_lo + n_hi).
    pub pair: (u32, u32),
    pub value: f64,
    pub two_sigma: f64,
    pub n_lo: f64,
    pub n_hi: f64,
}

impl CsrEstimate {
    pub fn from_counts(species: &str, pair: (u32, u32), n_lo: f64, n_hi: f64) -> Result<Self> {
        if !(n_lo >= 0.0 && n_hi >= 0.0) {
            return Err(PfiError::Domain(format!("negative counts for {species}")));
        }
        let n = n_lo + n_hi;
        if n <= 0.0 {
            return Err(PfiError::UndefinedCsr(format!(
                "{species}: no counts in charge states {} and {}",
                pair.0, pair.1
            )));
        }
        let value = n_hi / n;
        Ok(Self {
            species: species.to_string(),
            pair,
            value,
            two_sigma: 2.0 * (value * (1.0 - value) / n).sqrt(),
            n_lo,
            n_hi,
        })
    }
}

/// CSR of `species` from a totals lookup.
pub fn csr_from_totals(
    totals: &BTreeMap<SpeciesCharge, f64>,
    species: &str,
    pair: (u32, u32),
) -> Result<CsrEstimate> {
    let get = |q: u32| {
        totals
            .get(&SpeciesCharge::new(species, q))
            .copied()
            .ok_or_else(|| PfiError::Config(format!("{species}:{q} not among the contributors")))
    };
    CsrEstimate::from_counts(species, pair, get(pair.0)?, get(pair.1)?)
}

pub fn compute_csr(decon: &DeconvolutionResult, species: &str, pair: (u32, u32)) -> Result<CsrEstimate> {
    let totals: BTreeMap<SpeciesCharge, f64> = decon.columns.iter().cloned().zip(decon.totals.iter().copied()).collect();
    csr_from_totals(&totals, species, pair)
}

/// Read a raw `mz_Da,counts` histogram.
pub fn read_histogram(reader: impl Read) -> Result<Vec<(f64, f64)>> {
    #[derive(Deserialize)]
    struct Row {
        #[serde(rename = "mz_Da")]
        mz: f64,
        counts: f64,
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize::<Row>()
        .map(|r| r.map(|r| (r.mz, r.counts)).map_err(PfiError::from))
        .collect()
}

/// Sum histogram counts within `center ± half_width` for each center.
pub fn range_histogram(hist: &[(f64, f64)], centers: &[f64], half_width: f64) -> Vec<f64> {
    centers
        .iter()
        .map(|c| hist.iter().filter(|(mz, _)| (mz - c).abs() <= half_width).map(|(_, n)| n).sum())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table() -> IsotopeTable {
        IsotopeTable::shipped().unwrap()
    }

    fn peaks(text: &str) -> RangedPeakSet {
        RangedPeakSet::from_csv(text.as_bytes()).unwrap()
    }

    #[test]
    fn shipped_table_is_valid() {
        let t = table();
        for el in ["Si", "As", "In", "Ga", "Rh"] {
            assert!(t.element(el).is_ok());
        }
        let mut bad = t.clone();
        bad.elements.get_mut("Si").unwrap()[0].abundance = 0.5;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn single_atom_is_identity() {
        let t = table();
        let d = isotopologue_distribution(&t, "Si", 1).unwrap();
        for (d, i) in d.iter().zip(t.element("Si").unwrap()) {
            assert_eq!(d.mass_number, i.mass_number);
            assert_eq!(d.probability, i.abundance);
            assert!((d.mass - i.mass).abs() < 1e-12);
        }
        assert!(isotopologue_distribution(&t, "Xx", 1).is_err());
        assert!(isotopologue_distribution(&t, "Si", 0).is_err());
    }

    #[test]
    fn dimer_matches_multinomial() {
        let (a, b, c) = (0.9223, 0.0467, 0.0310);
        let want = [(56, a * a), (57, 2.0 * a * b), (58, b * b + 2.0 * a * c), (59, 2.0 * b * c), (60, c * c)];
        let d = isotopologue_distribution(&table(), "Si", 2).unwrap();
        assert_eq!(d.len(), 5);
        for (g, (m, p)) in d.iter().zip(want) {
            assert_eq!(g.mass_number, m);
            assert!((g.probability - p).abs() < 1e-15);
        }
    }

    fn enumerate(isos: &[Isotope], k: u32) -> BTreeMap<u32, f64> {
        let mut out = BTreeMap::new();
        let n = isos.len();
        for code in 0..n.pow(k) {
            let (mut a, mut p, mut c) = (0, 1.0, code);
            for _ in 0..k {
                a += isos[c % n].mass_number;
                p *= isos[c % n].abundance;
                c /= n;
            }
            *out.entry(a).or_insert(0.0) += p;
        }
        out
    }

    #[test]
    fn matches_exhaustive_enumeration() {
        let t = table();
        for el in ["Si", "Ga", "In"] {
            for k in 1..=4 {
                let want = enumerate(t.element(el).unwrap(), k);
                let got = isotopologue_distribution(&t, el, k).unwrap();
                assert_eq!(got.len(), want.len());
                for g in got {
                    assert!((g.probability - want[&g.mass_number]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn sums_to_one_and_convolves() {
        let t = table();
        for el in ["Si", "Ga", "In", "As"] {
            for k in 1..=6 {
                let d = isotopologue_distribution(&t, el, k).unwrap();
                assert!((d.iter().map(|i| i.probability).sum::<f64>() - 1.0).abs() < 1e-12);
            }
            for (k1, k2) in [(1, 1), (1, 3), (2, 2), (2, 3)] {
                let a = isotopologue_distribution(&t, el, k1).unwrap();
                let b = isotopologue_distribution(&t, el, k2).unwrap();
                let mut conv: BTreeMap<u32, f64> = BTreeMap::new();
                for x in &a {
                    for y in &b {
                        *conv.entry(x.mass_number + y.mass_number).or_insert(0.0) += x.probability * y.probability;
                    }
                }
                for z in isotopologue_distribution(&t, el, k1 + k2).unwrap() {
                    assert!((z.probability - conv[&z.mass_number]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn labels() {
        assert_eq!(parse_species_label("Si2").unwrap(), ("Si".into(), 2));
        assert_eq!(parse_species_label("As").unwrap(), ("As".into(), 1));
        for bad in ["si", "Si0", "2Si", "SiX", ""] {
            assert!(parse_species_label(bad).is_err(), "{bad}");
        }
        let a: Assignment = "Si2:2:57".parse().unwrap();
        assert_eq!(a.ion, SpeciesCharge::new("Si2", 2));
        assert_eq!(a.mass_number, 57);
        assert_eq!(a.to_string(), "Si2:2:57");
        assert!("Si2:0:56".parse::<Assignment>().is_err());
    }

    const SI_BLEND: &str = "mz_Da,counts,assignments
28,0,Si:1:28;Si2:2:56
28.5,0,Si2:2:57
29,0,Si:1:29;Si2:2:58
29.5,0,Si2:2:59
30,0,Si:1:30;Si2:2:60
";

    #[test]
    fn half_integer_rows_belong_to_the_dication() {
        let m = build_overlap_matrix(&peaks(SI_BLEND), &table()).unwrap();
        assert_eq!(m.columns, vec![SpeciesCharge::new("Si", 1), SpeciesCharge::new("Si2", 2)]);
        for row in [1, 3] {
            assert_eq!(m.values[(row, 0)], 0.0);
            assert!(m.values[(row, 1)] > 0.0);
        }
        for c in &m.coverage {
            assert!((c - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn tetramer_dication_under_dimer() {
        let p = peaks(
            "mz_Da,counts,assignments
56,0,Si2:1:56;Si4:2:112
56.5,0,Si4:2:113
57,0,Si2:1:57;Si4:2:114
",
        );
        let m = build_overlap_matrix(&p, &table()).unwrap();
        assert_eq!(m.values[(1, 0)], 0.0);
        assert!(m.values[(1, 1)] > 0.0);
        assert!(m.coverage[1] < 1.0);
    }

    #[test]
    fn inconsistent_assignment_rejected() {
        let p = peaks("mz_Da,counts,assignments\n29,10,Si:1:28\n");
        assert!(build_overlap_matrix(&p, &table()).is_err());
        let p = peaks("mz_Da,counts,assignments\n28,10,Si:1:28\n28,5,Si:1:28\n");
        assert!(build_overlap_matrix(&p, &table()).is_err());
        let p = peaks("mz_Da,counts,assignments\n28,-1,Si:1:28\n");
        assert!(build_overlap_matrix(&p, &table()).is_err());
    }

    /// Observed counts of a blend with planted totals.
    fn compose(set: &RangedPeakSet, m: &OverlapMatrix, totals: &[f64]) -> RangedPeakSet {
        let b = &m.values * DVector::from_column_slice(totals);
        let mut out = set.clone();
        for (p, v) in out.peaks.iter_mut().zip(b.iter()) {
            p.counts = *v;
        }
        out
    }

    #[test]
    fn recovers_planted_blend() {
        let t = table();
        let base = peaks(SI_BLEND);
        let m = build_overlap_matrix(&base, &t).unwrap();
        let obs = compose(&base, &m, &[10000.0, 5000.0]);
        let r = deconvolve(&obs, &m).unwrap();
        assert!((r.totals[0] / 10000.0 - 1.0).abs() < 1e-6);
        assert!((r.totals[1] / 5000.0 - 1.0).abs() < 1e-6);
        assert!(r.residual_norm < 1e-6);
    }

    #[test]
    fn overlap_free_is_identity() {
        let p = peaks(
            "mz_Da,counts,assignments
28,9000,Si:1:28
29,480,Si:1:29
30,300,Si:1:30
56,700,Si2:1:56
57,71,Si2:1:57
",
        );
        let m = build_overlap_matrix(&p, &table()).unwrap();
        let r = deconvolve(&p, &m).unwrap();
        assert_eq!(r.totals, vec![9780.0, 771.0]);
        for (a, p) in r.peaks.iter().zip(&p.peaks) {
            assert_eq!(a.contributions.len(), 1);
            assert_eq!(a.contributions[0].counts, p.counts);
        }
    }

    #[test]
    fn colinear_columns_are_named() {
        // one shared peak cannot separate two contributors
        let p = peaks("mz_Da,counts,assignments\n28,100,Si:1:28;Si2:2:56\n");
        let m = build_overlap_matrix(&p, &table()).unwrap();
        match deconvolve(&p, &m) {
            Err(PfiError::Ambiguity(msg)) => assert!(msg.contains("Si:1") && msg.contains("Si2:2")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn nnls_enforces_nonnegativity() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![2.0, -1.0, 1.0]);
        let x = nnls(&a, &b).unwrap();
        assert!(x[1] == 0.0 && (x[0] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn integer_counts_stay_integer_and_conserved() {
        let t = table();
        let base = peaks(SI_BLEND);
        let m = build_overlap_matrix(&base, &t).unwrap();
        let mut obs = compose(&base, &m, &[10000.0, 5000.0]);
        for p in &mut obs.peaks {
            p.counts = p.counts.round();
        }
        let r = deconvolve(&obs, &m).unwrap();
        for a in &r.peaks {
            let s: f64 = a.contributions.iter().map(|c| c.counts).sum();
            assert_eq!(s, a.observed);
            assert!(a.contributions.iter().all(|c| c.counts.fract() == 0.0));
        }
    }

    #[test]
    fn csr_examples() {
        let e = CsrEstimate::from_counts("Si", (1, 2), 100.0, 0.0).unwrap();
        assert_eq!((e.value, e.two_sigma), (0.0, 0.0));
        let e = CsrEstimate::from_counts("Si", (1, 2), 500.0, 500.0).unwrap();
        assert_eq!(e.value, 0.5);
        assert!((e.two_sigma - 0.0316).abs() < 5e-5);
        assert!(matches!(
            CsrEstimate::from_counts("Si", (1, 2), 0.0, 0.0),
            Err(PfiError::UndefinedCsr(_))
        ));
    }

    #[test]
    fn naive_uses_first_assignment() {
        let p = peaks("mz_Da,counts,assignments\n28,100,Si:1:28;Si2:2:56\n28.5,7,Si2:2:57\n");
        let n = naive_counts(&p);
        assert_eq!(n[&SpeciesCharge::new("Si", 1)], 100.0);
        assert_eq!(n[&SpeciesCharge::new("Si2", 2)], 7.0);
    }

    #[test]
    fn histogram_ranging() {
        let h = read_histogram("mz_Da,counts\n27.7,1\n27.8,2\n28.0,10\n28.25,3\n28.3,100\n".as_bytes()).unwrap();
        assert_eq!(range_histogram(&h, &[28.0], DEFAULT_RANGING_HALF_WIDTH_DA), vec![15.0]);
    }

    proptest! {
        #[test]
        fn scale_equivariant(t1 in 100.0f64..1e6, t2 in 100.0f64..1e6, k in 0.01f64..100.0) {
            let t = table();
            let base = peaks(SI_BLEND);
            let m = build_overlap_matrix(&base, &t).unwrap();
            let obs = compose(&base, &m, &[t1, t2]);
            let mut noisy = obs.clone();
            // perturb so the fit is not exact
            noisy.peaks[1].counts *= 1.1;
            let mut scaled = noisy.clone();
            for p in &mut scaled.peaks {
                p.counts *= k;
            }
            let a = deconvolve(&noisy, &m).unwrap();
            let b = deconvolve(&scaled, &m).unwrap();
            for (x, y) in a.fitted_totals.iter().zip(&b.fitted_totals) {
                prop_assert!((x * k - y).abs() <= 1e-9 * y.abs().max(1e-300));
            }
        }

        #[test]
        fn redistribution_conserves_counts(c in prop::collection::vec(0.0f64..1e5, 5)) {
            let t = table();
            let mut p = peaks(SI_BLEND);
            for (pk, v) in p.peaks.iter_mut().zip(&c) {
                pk.counts = *v;
            }
            let m = build_overlap_matrix(&p, &t).unwrap();
            let r = deconvolve(&p, &m).unwrap();
            let observed: f64 = c.iter().sum();
            let redistributed: f64 = r.totals.iter().sum();
            prop_assert!((observed - redistributed).abs() <= 1e-9 * observed.max(1.0));
            prop_assert!(r.totals.iter().all(|&v| v >= 0.0));
        }
    }
}
