//! Train/test splitting and test-set perturbation.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::seeding::{rng, stream_rng};

pub const DEFAULT_TRAIN_RATIO: f64 = 0.8;

/// Row indices of a train/test partition, each list ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

fn check_ratio(train_ratio: f64) -> Result<()> {
    if train_ratio > 0.0 && train_ratio < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("train ratio must lie in (0, 1), got {train_ratio}")))
    }
}

fn finish(mut train: Vec<usize>, mut test: Vec<usize>) -> Result<SplitPlan> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::InvalidInput(format!(
            "split leaves an empty side (train {}, test {})",
            train.len(),
            test.len()
        )));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitPlan { train, test })
}

/// Uniform random split with `round(train_ratio · n)` training rows.
pub fn split_random(n: usize, train_ratio: f64, seed: u64) -> Result<SplitPlan> {
    check_ratio(train_ratio)?;
    let n_train = round_half_up(train_ratio * n as f64).min(n);
    let n_test = n - n_train;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng(seed));
    let test = perm[..n_test].to_vec();
    let train = perm[n_test..].to_vec();
    finish(train, test)
}

/// Per-stratum test counts: round-half-up of the stratum's test share, then
/// single-row moves toward the exact global test size while every stratum
/// stays within one row of its share. Singleton strata stay in train.
fn allocate(sizes: &[usize], train_ratio: f64) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    let share = 1.0 - train_ratio;
    let global = n - round_half_up(train_ratio * n as f64).min(n);
    let targets: Vec<f64> = sizes.iter().map(|&s| share * s as f64).collect();
    let mut counts: Vec<usize> = sizes
        .iter()
        .zip(&targets)
        .map(|(&s, &t)| if s <= 1 { 0 } else { round_half_up(t).min(s) })
        .collect();

    loop {
        let total: usize = counts.iter().sum();
        if total == global {
            break;
        }
        let grow = total < global;
        let pick = (0..sizes.len())
            .filter(|&i| sizes[i] > 1)
            .filter(|&i| if grow { counts[i] < sizes[i] } else { counts[i] > 0 })
            .map(|i| {
                let slack = if grow {
                    targets[i] - counts[i] as f64
                } else {
                    counts[i] as f64 - targets[i]
                };
                (i, slack)
            })
            .filter(|&(_, slack)| slack > 0.0)
            .fold(None::<(usize, f64)>, |best, cur| match best {
                Some(b) if b.1 >= cur.1 => Some(b),
                _ => Some(cur),
            });
        match pick {
            Some((i, _)) if grow => counts[i] += 1,
            Some((i, _)) => counts[i] -= 1,
            None => break,
        }
    }
    counts
}

fn split_by_strata(strata: &[Vec<usize>], train_ratio: f64, seed: u64) -> Result<SplitPlan> {
    check_ratio(train_ratio)?;
    let sizes: Vec<usize> = strata.iter().map(Vec::len).collect();
    let counts = allocate(&sizes, train_ratio);
    let singletons = sizes.iter().filter(|&&s| s == 1).count();
    if singletons > 0 {
        log::debug!("{singletons} single-row strata assigned to train");
    }
    let mut rng = rng(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (members, &k) in strata.iter().zip(&counts) {
        let mut perm = members.clone();
        perm.shuffle(&mut rng);
        test.extend_from_slice(&perm[..k]);
        train.extend_from_slice(&perm[k..]);
    }
    finish(train, test)
}

/// Split stratified on the joint (group, label) cell.
pub fn split_stratified(groups: &[usize], labels: &[u8], train_ratio: f64, seed: u64) -> Result<SplitPlan> {
    if groups.len() != labels.len() {
        return Err(Error::InvalidInput("groups and labels differ in length".into()));
    }
    let k = groups.iter().max().map_or(0, |&g| g + 1);
    let mut strata = vec![Vec::new(); 2 * k];
    for (i, (&g, &y)) in groups.iter().zip(labels).enumerate() {
        strata[2 * g + usize::from(y)].push(i);
    }
    strata.retain(|s| !s.is_empty());
    split_by_strata(&strata, train_ratio, seed)
}

/// Split where every group keeps its share of rows on both sides.
pub fn split_proportional(groups: &[usize], train_ratio: f64, seed: u64) -> Result<SplitPlan> {
    let k = groups.iter().max().map_or(0, |&g| g + 1);
    let mut strata = vec![Vec::new(); k];
    for (i, &g) in groups.iter().enumerate() {
        strata[g].push(i);
    }
    strata.retain(|s| !s.is_empty());
    split_by_strata(&strata, train_ratio, seed)
}

/// Keeps a uniformly chosen `round(fraction · |test|)` of the test rows.
pub fn subsample_test(plan: &SplitPlan, fraction: f64, seed: u64) -> Result<SplitPlan> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("test fraction must lie in (0, 1], got {fraction}")));
    }
    let keep = round_half_up(fraction * plan.test.len() as f64).min(plan.test.len());
    if keep == 0 {
        return Err(Error::InvalidInput("subsampled test set is empty".into()));
    }
    let mut test = plan.test.clone();
    test.shuffle(&mut rng(seed));
    test.truncate(keep);
    test.sort_unstable();
    Ok(SplitPlan {
        train: plan.train.clone(),
        test,
    })
}

/// Reassigns every row's group uniformly at random and rewrites the group
/// indicator columns to match.
pub fn perturb_race(test: &Dataset, seed: u64) -> Dataset {
    let k = test.n_groups();
    if k < 2 {
        return test.clone();
    }
    let mut out = test.clone();
    let mut rng = rng(seed);
    for g in out.groups.iter_mut() {
        *g = rng.random_range(0..k);
    }
    for (j, f) in test.features().iter().enumerate() {
        if let crate::data::FeatureKind::SensitiveDummy { group } = f.kind {
            for (r, &g) in out.groups.iter().enumerate() {
                out.values[j][r] = if g == group { 1.0 } else { 0.0 };
            }
        }
    }
    out
}

/// Adds zero-mean normal noise with std `noise_scale · train_std[j]` to every
/// non-sensitive feature; indicator columns are re-thresholded at 0.5.
pub fn perturb_features(test: &Dataset, train_stds: &[f64], noise_scale: f64, seed: u64) -> Result<Dataset> {
    if train_stds.len() != test.n_features() {
        return Err(Error::InvalidInput(format!(
            "{} training stds for {} features",
            train_stds.len(),
            test.n_features()
        )));
    }
    if !(noise_scale >= 0.0 && noise_scale.is_finite()) {
        return Err(Error::Config(format!("noise scale must be nonnegative, got {noise_scale}")));
    }
    let mut out = test.clone();
    for (j, f) in test.features().iter().enumerate() {
        let sd = noise_scale * train_stds[j];
        if f.kind.is_sensitive() || sd == 0.0 {
            continue;
        }
        let noise = Normal::new(0.0, sd).map_err(|e| Error::InvalidInput(e.to_string()))?;
        let mut rng = stream_rng(seed, j as u64);
        for r in 0..test.n_rows() {
            let eps = noise.sample(&mut rng);
            if test.is_missing(r, j) {
                continue;
            }
            let v = test.column(j)[r] + eps;
            out.values[j][r] = if f.kind.is_indicator() {
                if v >= 0.5 { 1.0 } else { 0.0 }
            } else {
                v
            };
        }
    }
    Ok(out)
}
