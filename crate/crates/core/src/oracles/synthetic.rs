//! Transparent stand-in for a generator plus two classifiers.
//!
//! The generator is `x = tanh(W z)`. Each class owns an anchor latent whose
//! image is the class centroid; the attack-time classifier is a softmax
//! over negative squared distances to those centroids, and the evaluation
//! classifier uses slightly perturbed copies of them. Private samples of a
//! class are images of latents scattered around its anchor.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use super::{FeatureChannel, Oracle, OracleDescriptor, OracleKind, OracleResponse};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;
const MAX_PERTURBATION_ATTEMPTS: usize = 1_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldParams {
    pub seed: u64,
    pub latent_dim: usize,
    pub feature_dim: usize,
    pub num_classes: usize,
    /// Minimum pairwise distance between target centroids.
    pub separation: f64,
    pub temperature: f64,
    /// Expected norm of the offset between a target centroid and its
    /// evaluation copy.
    pub perturbation: f64,
    /// Generator weights are drawn from N(0, gain²/k).
    pub generator_gain: f64,
    /// Anchor latents are uniform in `[-anchor_range, anchor_range]^k`.
    pub anchor_range: f64,
    /// Std of private latents around their class anchor.
    pub private_spread: f64,
}

impl Default for WorldParams {
    fn default() -> Self {
        WorldParams {
            seed: 0,
            latent_dim: 16,
            feature_dim: 32,
            num_classes: 10,
            separation: 4.0,
            temperature: 0.5,
            perturbation: 0.4,
            generator_gain: 2.0,
            anchor_range: 0.9,
            private_spread: 0.35,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WhichClassifier {
    Target,
    Evaluation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorld {
    pub params: WorldParams,
    /// `d × k` generator weights.
    pub generator: Matrix,
    /// One anchor latent per class (`K × k`).
    pub anchors: Matrix,
    /// `K × d`
    pub target_centroids: Matrix,
    /// `K × d`
    pub evaluation_centroids: Matrix,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn softmax_neg_dist(x: &[f64], centroids: &Matrix, temperature: f64) -> Vec<f64> {
    let logits: Vec<f64> = (0..centroids.rows())
        .map(|i| -sq_dist(x, centroids.row(i)) / temperature)
        .collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Builds a world deterministically from `params.seed`.
pub fn make_world(params: &WorldParams) -> Result<SyntheticWorld> {
    let p = params;
    if p.latent_dim == 0 || p.feature_dim == 0 || p.num_classes == 0 {
        return Err(Error::Config(format!(
            "world dimensions must be positive (k={}, d={}, K={})",
            p.latent_dim, p.feature_dim, p.num_classes
        )));
    }
    if !(p.temperature > 0.0) || p.separation < 0.0 || p.perturbation < 0.0 || !(p.anchor_range > 0.0)
    {
        return Err(Error::Config(
            "temperature and anchor_range must be positive; separation and perturbation nonnegative"
                .into(),
        ));
    }
    let (k, d, classes) = (p.latent_dim, p.feature_dim, p.num_classes);
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);

    let scale = p.generator_gain / (k as f64).sqrt();
    let w: Vec<f64> = (0..d * k)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let generator = Matrix::from_vec(d, k, w)?;

    let mut world = SyntheticWorld {
        params: p.clone(),
        generator,
        anchors: Matrix::zeros(classes, k),
        target_centroids: Matrix::zeros(classes, d),
        evaluation_centroids: Matrix::zeros(classes, d),
    };

    let anchor_dist = Uniform::new_inclusive(-p.anchor_range, p.anchor_range).expect("valid range");
    let floor_sq = p.separation * p.separation;
    for class in 0..classes {
        let mut placed = false;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let anchor: Vec<f64> = (0..k).map(|_| anchor_dist.sample(&mut rng)).collect();
            let centroid = world.generate_unchecked(&anchor);
            let clear = (0..class).all(|j| sq_dist(&centroid, world.target_centroids.row(j)) >= floor_sq);
            if clear {
                world.anchors.row_mut(class).copy_from_slice(&anchor);
                world.target_centroids.row_mut(class).copy_from_slice(&centroid);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Config(format!(
                "could not place centroid {class} at separation {} after {MAX_PLACEMENT_ATTEMPTS} draws",
                p.separation
            )));
        }
    }

    let offset_scale = p.perturbation / (d as f64).sqrt();
    let mut matched = false;
    for _ in 0..MAX_PERTURBATION_ATTEMPTS {
        for class in 0..classes {
            for c in 0..d {
                let noise: f64 = StandardNormal.sample(&mut rng);
                let v = world.target_centroids.get(class, c) + offset_scale * noise;
                world.evaluation_centroids.set(class, c, v);
            }
        }
        if world.evaluation_matches_target() {
            matched = true;
            break;
        }
    }
    if !matched {
        return Err(Error::Config(format!(
            "perturbation {} keeps breaking the nearest-centroid match",
            p.perturbation
        )));
    }
    Ok(world)
}

impl SyntheticWorld {
    pub fn latent_dim(&self) -> usize {
        self.params.latent_dim
    }

    pub fn feature_dim(&self) -> usize {
        self.params.feature_dim
    }

    pub fn num_classes(&self) -> usize {
        self.params.num_classes
    }

    fn generate_unchecked(&self, z: &[f64]) -> Vec<f64> {
        (0..self.generator.rows())
            .map(|r| {
                self.generator
                    .row(r)
                    .iter()
                    .zip(z)
                    .map(|(w, z)| w * z)
                    .sum::<f64>()
                    .tanh()
            })
            .collect()
    }

    /// Every evaluation centroid is closest to its own target centroid.
    pub fn evaluation_matches_target(&self) -> bool {
        let classes = self.num_classes();
        (0..classes).all(|i| {
            let own = sq_dist(self.target_centroids.row(i), self.evaluation_centroids.row(i));
            (0..classes)
                .filter(|&j| j != i)
                .all(|j| sq_dist(self.target_centroids.row(i), self.evaluation_centroids.row(j)) > own)
        })
    }

    /// Feature vector `tanh(W z)`.
    pub fn generate(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.latent_dim() {
            return Err(Error::invalid(format!(
                "latent has dimension {}, generator expects {}",
                z.len(),
                self.latent_dim()
            )));
        }
        Ok(self.generate_unchecked(z))
    }

    pub fn classify(&self, x: &[f64], which: WhichClassifier) -> Result<Vec<f64>> {
        if x.len() != self.feature_dim() {
            return Err(Error::invalid(format!(
                "feature has dimension {}, classifier expects {}",
                x.len(),
                self.feature_dim()
            )));
        }
        let centroids = match which {
            WhichClassifier::Target => &self.target_centroids,
            WhichClassifier::Evaluation => &self.evaluation_centroids,
        };
        Ok(softmax_neg_dist(x, centroids, self.params.temperature))
    }

    /// Features of `n` private samples of `class`.
    pub fn private_features<R: Rng + ?Sized>(
        &self,
        class: usize,
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<Vec<f64>>> {
        if class >= self.num_classes() {
            return Err(Error::invalid(format!(
                "class {class} out of range for {} classes",
                self.num_classes()
            )));
        }
        let anchor = self.anchors.row(class);
        Ok((0..n)
            .map(|_| {
                let z: Vec<f64> = anchor
                    .iter()
                    .map(|a| a + self.params.private_spread * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                self.generate_unchecked(&z)
            })
            .collect())
    }

    pub fn min_centroid_separation(&self) -> f64 {
        let c = &self.target_centroids;
        let mut best = f64::INFINITY;
        for i in 0..c.rows() {
            for j in i + 1..c.rows() {
                best = best.min(sq_dist(c.row(i), c.row(j)).sqrt());
            }
        }
        best
    }
}

/// Query view of a world through one of its classifiers.
#[derive(Debug, Clone)]
pub struct SyntheticOracle {
    world: Arc<SyntheticWorld>,
    which: WhichClassifier,
}

impl SyntheticOracle {
    pub fn new(world: Arc<SyntheticWorld>, which: WhichClassifier) -> Self {
        SyntheticOracle { world, which }
    }

    pub fn world(&self) -> &Arc<SyntheticWorld> {
        &self.world
    }
}

impl Oracle for SyntheticOracle {
    fn descriptor(&self) -> OracleDescriptor {
        OracleDescriptor {
            latent_dim: self.world.latent_dim(),
            num_classes: self.world.num_classes(),
            feature_dim: self.world.feature_dim(),
            kind: OracleKind::Synthetic,
        }
    }

    fn query(&mut self, latent: &[f64]) -> Result<OracleResponse> {
        let x = self.world.generate(latent)?;
        Ok(OracleResponse {
            confidence: self.world.classify(&x, self.which)?,
            feature: None,
        })
    }
}

impl FeatureChannel for SyntheticOracle {
    fn feature_dim(&self) -> usize {
        self.world.feature_dim()
    }

    fn features(&mut self, latent: &[f64]) -> Result<Vec<f64>> {
        self.world.generate(latent)
    }
}
