use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use pfikit::spectrum::{self, IsotopeTable, RangedPeakSet, SpeciesCharge};
use rand::SeedableRng;
use rand::rngs::StdRng;
use rand_distr::{Distribution, Poisson};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn ion(s: &str) -> SpeciesCharge {
    s.parse().unwrap()
}

#[test]
fn overlap_free_totals_are_raw_sums() {
    let table = IsotopeTable::shipped().unwrap();
    let set = RangedPeakSet::from_path(&fixture("si_overlap_free.csv")).unwrap();
    let m = spectrum::build_overlap_matrix(&set, &table).unwrap();
    let d = spectrum::deconvolve(&set, &m).unwrap();
    assert_eq!(d.total(&ion("Si:1")), Some(9780.0));
    assert_eq!(d.total(&ion("Si2:1")), Some(823.0));
    let naive = spectrum::naive_counts(&set);
    assert_eq!(naive[&ion("Si:1")], 9780.0);
}

#[test]
fn blend_recovers_planted_totals() {
    let table = IsotopeTable::shipped().unwrap();
    let set = RangedPeakSet::from_path(&fixture("si_blend.csv")).unwrap();
    let m = spectrum::build_overlap_matrix(&set, &table).unwrap();
    let d = spectrum::deconvolve(&set, &m).unwrap();
    let si = d.columns.iter().position(|c| *c == ion("Si:1")).unwrap();
    let si2 = d.columns.iter().position(|c| *c == ion("Si2:2")).unwrap();
    assert!((d.fitted_totals[si] - 10000.0).abs() < 1e-6, "{}", d.fitted_totals[si]);
    assert!((d.fitted_totals[si2] - 5000.0).abs() < 1e-6, "{}", d.fitted_totals[si2]);
    assert!(d.residual_norm < 1e-6);
}

#[test]
fn si2_overlap_fixture_ratio_before_and_after() {
    let table = IsotopeTable::shipped().unwrap();
    let set = RangedPeakSet::from_path(&fixture("si2_overlap_peaks.csv")).unwrap();
    let m = spectrum::build_overlap_matrix(&set, &table).unwrap();
    let d = spectrum::deconvolve(&set, &m).unwrap();
    let before = spectrum::csr_from_totals(&spectrum::naive_counts(&set), "Si2", (1, 2)).unwrap();
    let after = spectrum::compute_csr(&d, "Si2", (1, 2)).unwrap();
    assert!((before.value - 0.048).abs() < 5e-4, "before {}", before.value);
    assert!((after.value - 0.543).abs() < 1e-3, "after {}", after.value);
    // independent least-squares solution of the same peak list
    assert!((after.value - 0.543005).abs() < 1e-4, "after {}", after.value);
}

/// Seeded Poisson noise on a three-column blend: the least-squares totals are
/// unbiased and scatter as the ordinary least-squares covariance predicts.
#[test]
fn poisson_noise_matches_ols_covariance() {
    let table = IsotopeTable::shipped().unwrap();
    let clean = RangedPeakSet::from_path(&fixture("si_blend.csv")).unwrap();
    let m = spectrum::build_overlap_matrix(&clean, &table).unwrap();
    let truth: Vec<f64> = m
        .columns
        .iter()
        .map(|c| if *c == ion("Si:1") { 1.0e6 } else { 0.5e6 })
        .collect();
    let t = DVector::from_vec(truth.clone());
    let a: &DMatrix<f64> = &m.values;
    let expected = a * &t;

    let ata_inv = (a.transpose() * a).try_inverse().unwrap();
    let cov = &ata_inv * a.transpose() * DMatrix::from_diagonal(&expected) * a * &ata_inv;
    let sigma: Vec<f64> = (0..t.len()).map(|j| cov[(j, j)].sqrt()).collect();

    let mut rng = StdRng::seed_from_u64(0x5eed);
    let trials = 100;
    let mut sums = vec![0.0; t.len()];
    let mut inside = vec![0usize; t.len()];
    for _ in 0..trials {
        let mut noisy = clean.clone();
        for (p, lam) in noisy.peaks.iter_mut().zip(expected.iter()) {
            p.counts = Poisson::new(*lam).unwrap().sample(&mut rng);
        }
        let d = spectrum::deconvolve(&noisy, &m).unwrap();
        for j in 0..t.len() {
            let est = d.fitted_totals[j];
            sums[j] += est;
            if (est - truth[j]).abs() <= 3.0 * sigma[j] {
                inside[j] += 1;
            }
        }
    }
    for j in 0..t.len() {
        let bias = sums[j] / trials as f64 - truth[j];
        assert!(bias.abs() <= 3.0 * sigma[j] / 10.0, "column {j}: bias {bias}, sigma {}", sigma[j]);
        assert!(inside[j] >= 97, "column {j}: {} of {trials} within 3 sigma", inside[j]);
    }
}
