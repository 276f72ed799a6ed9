//! Small statistics helpers used by the verification suites.

use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::collections::BTreeMap;

/// Pearson chi-square goodness-of-fit p-value over (observed, expected)
/// cells. Cells with expected < 1e-12 must have zero observed counts and are
/// skipped (they carry no degrees of freedom).
pub fn chi_square_p_value(cells: &[(f64, f64)]) -> f64 {
    let mut statistic = 0.0;
    let mut dof = 0usize;
    for &(observed, expected) in cells {
        if expected < 1e-12 {
            assert!(
                observed == 0.0,
                "observed counts in a zero-probability cell"
            );
            continue;
        }
        statistic += (observed - expected).powi(2) / expected;
        dof += 1;
    }
    assert!(dof > 1, "need at least two cells for a chi-square test");
    let dist = ChiSquared::new((dof - 1) as f64).expect("valid dof");
    1.0 - dist.cdf(statistic)
}

/// Chi-square uniformity p-value over integer samples in 0..k.
pub fn chi_square_uniform_p_value(samples: &[u8], k: usize) -> f64 {
    let mut counts = vec![0u64; k];
    for &s in samples {
        counts[s as usize] += 1;
    }
    let expected = samples.len() as f64 / k as f64;
    let cells: Vec<(f64, f64)> = counts.iter().map(|&c| (c as f64, expected)).collect();
    chi_square_p_value(&cells)
}

/// Total variation distance between two count maps (each normalized by its
/// own total).
pub fn tvd_counts(a: &BTreeMap<String, u64>, b: &BTreeMap<String, u64>) -> f64 {
    let ta: u64 = a.values().sum();
    let tb: u64 = b.values().sum();
    let pa: BTreeMap<&str, f64> = a
        .iter()
        .map(|(k, &v)| (k.as_str(), v as f64 / ta as f64))
        .collect();
    let pb: BTreeMap<&str, f64> = b
        .iter()
        .map(|(k, &v)| (k.as_str(), v as f64 / tb as f64))
        .collect();
    tvd_probs_ref(&pa, &pb)
}

/// Total variation distance between two probability maps.
pub fn tvd_probs(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> f64 {
    let pa: BTreeMap<&str, f64> = a.iter().map(|(k, &v)| (k.as_str(), v)).collect();
    let pb: BTreeMap<&str, f64> = b.iter().map(|(k, &v)| (k.as_str(), v)).collect();
    tvd_probs_ref(&pa, &pb)
}

fn tvd_probs_ref(a: &BTreeMap<&str, f64>, b: &BTreeMap<&str, f64>) -> f64 {
    let keys: std::collections::BTreeSet<&str> =
        a.keys().chain(b.keys()).copied().collect();
    0.5 * keys
        .iter()
        .map(|k| (a.get(k).unwrap_or(&0.0) - b.get(k).unwrap_or(&0.0)).abs())
        .sum::<f64>()
}
