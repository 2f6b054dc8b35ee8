use num_rational::Ratio;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{contract, Result};

fn check_counts(counts: &[u64]) -> Result<u64> {
    if counts.is_empty() {
        contract!("class weights need at least one class");
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        contract!("class {c} has no samples");
    }
    Ok(counts.iter().sum())
}

/// Balanced inverse-frequency weights `N / (K * n_c)`.
pub fn class_weights(counts: &[u64]) -> Result<Vec<f64>> {
    let total = check_counts(counts)? as f64;
    let k = counts.len() as f64;
    Ok(counts.iter().map(|&n| total / (k * n as f64)).collect())
}

/// The same weights as exact fractions.
pub fn class_weights_exact(counts: &[u64]) -> Result<Vec<Ratio<u128>>> {
    let total = check_counts(counts)? as u128;
    let k = counts.len() as u128;
    Ok(counts.iter().map(|&n| Ratio::new(total, k * n as u128)).collect())
}

/// Reduces every class to the smallest class count by seeded sampling
/// without replacement. Survivors keep their original relative order.
pub fn undersample<T: Clone>(items: &[T], label: impl Fn(&T) -> usize, seed: u64) -> Vec<T> {
    let labels: Vec<usize> = items.iter().map(&label).collect();
    let Some(&max_label) = labels.iter().max() else {
        return Vec::new();
    };
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); max_label + 1];
    for (i, &c) in labels.iter().enumerate() {
        by_class[c].push(i);
    }
    let target = by_class.iter().filter(|v| !v.is_empty()).map(Vec::len).min().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; items.len()];
    for idx in by_class.iter().filter(|v| !v.is_empty()) {
        for j in sample(&mut rng, idx.len(), target) {
            keep[idx[j]] = true;
        }
    }
    items.iter().zip(keep).filter(|(_, k)| *k).map(|(x, _)| x.clone()).collect()
}
