//! Reconstruction quality: attack accuracy under a held-out classifier,
//! nearest-sample and centroid feature distances, and k-NN-ball density
//! and coverage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracles::{argmax, Oracle};

pub const DEFAULT_NEIGHBOR_K: usize = 5;

/// Private feature vectors of one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub label: usize,
    features: Vec<Vec<f64>>,
}

impl FeatureSet {
    pub fn new(label: usize, features: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = features.first() else {
            return Err(Error::Unavailable(format!("feature set for class {label} is empty")));
        };
        let d = first.len();
        if features.iter().any(|f| f.len() != d) {
            return Err(Error::invalid(format!(
                "feature set for class {label} mixes dimensions"
            )));
        }
        Ok(FeatureSet { label, features })
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn centroid(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.dim()];
        for f in &self.features {
            for (acc, v) in c.iter_mut().zip(f) {
                *acc += v;
            }
        }
        let n = self.features.len() as f64;
        c.iter_mut().for_each(|v| *v /= n);
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub attack_accuracy: f64,
    /// Feature-based entries are `None` when no trusted feature channel or
    /// private sample set is available.
    pub knn_dist: Option<f64>,
    pub feat_dist: Option<f64>,
    pub density: Option<f64>,
    pub coverage: Option<f64>,
    pub queries_used: u64,
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Fraction of `(latent, class)` pairs the evaluation oracle assigns to
/// their class.
pub fn attack_accuracy<L: AsRef<[f64]>>(
    reconstructions: &[(L, usize)],
    eval_oracle: &mut dyn Oracle,
) -> Result<f64> {
    if reconstructions.is_empty() {
        return Err(Error::Unavailable("no reconstructions to score".into()));
    }
    let mut hits = 0usize;
    for (latent, class) in reconstructions {
        let conf = eval_oracle.query(latent.as_ref())?.confidence;
        if *class >= conf.len() {
            return Err(Error::invalid(format!(
                "class {class} out of range for {} classes",
                conf.len()
            )));
        }
        if argmax(&conf) == *class {
            hits += 1;
        }
    }
    Ok(hits as f64 / reconstructions.len() as f64)
}

fn check_dims(recon: &[Vec<f64>], target: &FeatureSet) -> Result<()> {
    if recon.is_empty() {
        return Err(Error::Unavailable("no reconstruction features".into()));
    }
    if let Some(bad) = recon.iter().find(|r| r.len() != target.dim()) {
        return Err(Error::invalid(format!(
            "reconstruction feature has dimension {}, targets have {}",
            bad.len(),
            target.dim()
        )));
    }
    Ok(())
}

/// Mean over reconstructions of the distance to the closest target sample.
pub fn knn_dist(recon_features: &[Vec<f64>], target: &FeatureSet) -> Result<f64> {
    check_dims(recon_features, target)?;
    let total: f64 = recon_features
        .iter()
        .map(|r| {
            target
                .features()
                .iter()
                .map(|t| euclidean(r, t))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    Ok(total / recon_features.len() as f64)
}

/// Mean distance from each reconstruction to the target-set centroid.
pub fn feat_dist(recon_features: &[Vec<f64>], target: &FeatureSet) -> Result<f64> {
    check_dims(recon_features, target)?;
    let centroid = target.centroid();
    let total: f64 = recon_features.iter().map(|r| euclidean(r, &centroid)).sum();
    Ok(total / recon_features.len() as f64)
}

/// Distance from each real point to its `k`-th nearest other real point.
fn knn_radii(real: &[Vec<f64>], k: usize) -> Vec<f64> {
    real.iter()
        .enumerate()
        .map(|(i, p)| {
            let mut d: Vec<f64> = real
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, q)| euclidean(p, q))
                .collect();
            let (_, kth, _) = d.select_nth_unstable_by(k - 1, |a, b| a.total_cmp(b));
            *kth
        })
        .collect()
}

/// Density and coverage of `fake` against the k-NN-ball manifold of `real`.
///
/// A fake sample lies in real sample i's ball when its distance is strictly
/// below i's k-th nearest-neighbour distance. Density counts ball
/// memberships per fake, normalized by `k`; coverage is the share of real
/// balls holding at least one fake.
pub fn density_coverage(real: &[Vec<f64>], fake: &[Vec<f64>], neighbor_k: usize) -> Result<(f64, f64)> {
    if neighbor_k == 0 {
        return Err(Error::invalid("neighbor_k must be at least 1"));
    }
    if real.len() < neighbor_k + 1 || fake.len() < neighbor_k + 1 {
        return Err(Error::Unavailable(format!(
            "density/coverage with k={neighbor_k} needs at least {} real and fake points, got {} and {}",
            neighbor_k + 1,
            real.len(),
            fake.len()
        )));
    }
    let d = real[0].len();
    if real.iter().chain(fake).any(|p| p.len() != d) {
        return Err(Error::invalid("real and fake features must share one dimension"));
    }
    let radii = knn_radii(real, neighbor_k);
    let mut memberships = 0usize;
    let mut covered = vec![false; real.len()];
    for f in fake {
        for (i, (r, radius)) in real.iter().zip(&radii).enumerate() {
            if euclidean(r, f) < *radius {
                memberships += 1;
                covered[i] = true;
            }
        }
    }
    let density = memberships as f64 / (neighbor_k as f64 * fake.len() as f64);
    let coverage = covered.iter().filter(|&&c| c).count() as f64 / real.len() as f64;
    Ok((density, coverage))
}
