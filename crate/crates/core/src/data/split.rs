use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::manifest::{AnnotatedImage, Dataset};
use crate::error::{contract, Result};

/// Majority box class of an image, lowest id on ties. Images without boxes
/// get `num_classes`.
pub fn stratum_key(img: &AnnotatedImage, num_classes: usize) -> usize {
    let mut counts = vec![0usize; num_classes];
    for b in &img.boxes {
        counts[b.class_id] += 1;
    }
    let best = counts.iter().copied().max().unwrap_or(0);
    if best == 0 {
        num_classes
    } else {
        counts.iter().position(|&c| c == best).expect("max exists")
    }
}

/// Stratified split. The train side receives exactly `floor(n * fraction)`
/// images; each stratum gets the floor of its share, and the leftover
/// slots go to the strata with the largest fractional remainders. Both
/// halves keep manifest order.
pub fn split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        contract!("train fraction must lie in (0, 1), got {train_fraction}");
    }
    let n = ds.images.len();
    if n < 2 {
        contract!("splitting needs at least 2 images, got {n}");
    }
    let k = ds.class_names.len();
    let mut strata: Vec<Vec<usize>> = vec![Vec::new(); k + 1];
    for (i, img) in ds.images.iter().enumerate() {
        strata[stratum_key(img, k)].push(i);
    }
    let n_train = (n as f64 * train_fraction).floor() as usize;
    let ideal: Vec<f64> = strata.iter().map(|s| s.len() as f64 * train_fraction).collect();
    let mut quota: Vec<usize> = ideal.iter().map(|v| v.floor() as usize).collect();
    let mut order: Vec<usize> = (0..strata.len()).collect();
    order.sort_by(|&a, &b| (ideal[b] - ideal[b].floor()).total_cmp(&(ideal[a] - ideal[a].floor())).then(a.cmp(&b)));
    let mut left = n_train.saturating_sub(quota.iter().sum());
    for s in order {
        if left == 0 {
            break;
        }
        if quota[s] < strata[s].len() {
            quota[s] += 1;
            left -= 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_train = vec![false; n];
    for (s, members) in strata.iter_mut().enumerate() {
        members.shuffle(&mut rng);
        for &i in &members[..quota[s]] {
            is_train[i] = true;
        }
    }
    let pick = |want: bool| -> Vec<AnnotatedImage> {
        ds.images.iter().zip(&is_train).filter(|(_, &t)| t == want).map(|(x, _)| x.clone()).collect()
    };
    Ok((
        Dataset { class_names: ds.class_names.clone(), images: pick(true) },
        Dataset { class_names: ds.class_names.clone(), images: pick(false) },
    ))
}
