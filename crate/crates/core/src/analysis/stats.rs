//! One-sided Wilcoxon signed-rank test.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Largest sample size evaluated with the exact null distribution.
pub const EXACT_MAX_N: usize = 20;

/// p-value for the alternative that `a` tends to exceed `b`.
///
/// Zero differences are dropped and tied magnitudes get average ranks.
pub fn wilcoxon_signed_rank(pairs: &[(f64, f64)]) -> Result<f64> {
    let mut diffs: Vec<f64> = pairs
        .iter()
        .map(|(a, b)| a - b)
        .filter(|d| *d != 0.0)
        .collect();
    let n = diffs.len();
    if n < 5 {
        return Err(Error::TooFewPairs { n });
    }
    diffs.sort_by(|x, y| x.abs().total_cmp(&y.abs()));

    // doubled average ranks stay integral
    let mut ranks2 = vec![0u64; n];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && diffs[j + 1].abs() == diffs[i].abs() {
            j += 1;
        }
        let r2 = (i + 1 + j + 1) as u64;
        ranks2[i..=j].fill(r2);
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let w2: u64 = diffs
        .iter()
        .zip(&ranks2)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();

    if n <= EXACT_MAX_N {
        Ok(exact_upper_tail(&ranks2, w2))
    } else {
        Ok(normal_upper_tail(n, w2, tie_term))
    }
}

/// `P(W+ >= w2 / 2)` by counting sign patterns over doubled ranks.
fn exact_upper_tail(ranks2: &[u64], w2: u64) -> f64 {
    let total: u64 = ranks2.iter().sum();
    let mut counts = vec![0f64; total as usize + 1];
    counts[0] = 1.0;
    for &r in ranks2 {
        let r = r as usize;
        for s in (r..counts.len()).rev() {
            counts[s] += counts[s - r];
        }
    }
    let tail: f64 = counts[w2 as usize..].iter().sum();
    tail / 2f64.powi(ranks2.len() as i32)
}

/// Normal approximation with continuity and tie corrections.
fn normal_upper_tail(n: usize, w2: u64, tie_term: f64) -> f64 {
    let nf = n as f64;
    let w = w2 as f64 / 2.0;
    let mean = nf * (nf + 1.0) / 4.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let z = (w - mean - 0.5) / var.sqrt();
    Normal::standard().sf(z)
}
