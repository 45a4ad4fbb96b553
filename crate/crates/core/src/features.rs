//! Feature maps from actions in `R^{d_A}` to feature vectors in `R^d`, and
//! the action sets they are evaluated on.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, check_positive, Error, Result};
use crate::linalg::norm;
use crate::rng::{halton, SeededRng};

/// One `action -> features` pair of a [`FeatureMap::Table`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub action: Vec<f64>,
    pub features: Vec<f64>,
}

/// A deterministic feature map.
///
/// The serialized form carries the kind tag, the dimensions, the seed and the
/// raw parameter arrays (`weights` is row-major `feature_dim x input_dim`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FeatureMap {
    /// `x -> sqrt(2/d) cos(W x / lengthscale + b)`, `W ~ N(0, 1)`, `b ~ U[0, 2pi)`.
    RandomFourier {
        input_dim: usize,
        feature_dim: usize,
        seed: u64,
        lengthscale: f64,
        weights: Vec<f64>,
        offsets: Vec<f64>,
    },
    /// `x -> tanh(W x + b)`, `W ~ N(0, 1/input_dim)`, `b ~ N(0, 1)`.
    RandomLayer {
        input_dim: usize,
        feature_dim: usize,
        seed: u64,
        weights: Vec<f64>,
        offsets: Vec<f64>,
    },
    Identity { dim: usize },
    Table { input_dim: usize, feature_dim: usize, entries: Vec<TableEntry> },
}

fn check_dims(input_dim: usize, feature_dim: usize) -> Result<()> {
    if input_dim == 0 {
        return Err(Error::invalid("input_dim", "must be positive"));
    }
    if feature_dim == 0 {
        return Err(Error::invalid("feature_dim", "must be positive"));
    }
    Ok(())
}

impl FeatureMap {
    /// Random Fourier features approximating the Gaussian kernel
    /// `exp(-|x - x'|^2 / (2 lengthscale^2))`.
    pub fn random_fourier(
        seed: u64,
        input_dim: usize,
        feature_dim: usize,
        lengthscale: f64,
    ) -> Result<Self> {
        if !feature_dim.is_multiple_of(2) {
            return Err(Error::invalid("feature_dim", "random Fourier features need an even dimension"));
        }
        Self::random_cosine(seed, input_dim, feature_dim, lengthscale)
    }

    /// The same random-phase cosine map as [`FeatureMap::random_fourier`]
    /// without the parity restriction; bit-identical to it for even dimensions.
    pub fn random_cosine(seed: u64, input_dim: usize, feature_dim: usize, lengthscale: f64) -> Result<Self> {
        check_dims(input_dim, feature_dim)?;
        check_positive("lengthscale", lengthscale)?;
        let mut rng = SeededRng::new(seed);
        let weights = rng.normal_vec(feature_dim * input_dim);
        let offsets = (0..feature_dim)
            .map(|_| rng.uniform_in(0.0, 2.0 * std::f64::consts::PI))
            .collect();
        Ok(FeatureMap::RandomFourier { input_dim, feature_dim, seed, lengthscale, weights, offsets })
    }

    pub fn random_layer(seed: u64, input_dim: usize, feature_dim: usize) -> Result<Self> {
        check_dims(input_dim, feature_dim)?;
        let mut rng = SeededRng::new(seed);
        let scale = 1.0 / (input_dim as f64).sqrt();
        let weights = (0..feature_dim * input_dim).map(|_| scale * rng.normal()).collect();
        let offsets = rng.normal_vec(feature_dim);
        Ok(FeatureMap::RandomLayer { input_dim, feature_dim, seed, weights, offsets })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        check_dims(dim, dim)?;
        Ok(FeatureMap::Identity { dim })
    }

    pub fn table(entries: Vec<TableEntry>) -> Result<Self> {
        let first = entries.first().ok_or_else(|| Error::invalid("entries", "table is empty"))?;
        let (input_dim, feature_dim) = (first.action.len(), first.features.len());
        check_dims(input_dim, feature_dim)?;
        for e in &entries {
            check_len(input_dim, e.action.len())?;
            check_len(feature_dim, e.features.len())?;
            check_finite("table entry", &e.features)?;
        }
        Ok(FeatureMap::Table { input_dim, feature_dim, entries })
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let map: FeatureMap =
            serde_json::from_str(s).map_err(|e| Error::invalid("feature map", e.to_string()))?;
        map.validate()?;
        Ok(map)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("feature maps always serialize")
    }

    /// Checks array lengths after deserialization.
    pub fn validate(&self) -> Result<()> {
        match self {
            FeatureMap::RandomFourier { input_dim, feature_dim, lengthscale, weights, offsets, .. } => {
                check_dims(*input_dim, *feature_dim)?;
                check_positive("lengthscale", *lengthscale)?;
                check_len(input_dim * feature_dim, weights.len())?;
                check_len(*feature_dim, offsets.len())
            }
            FeatureMap::RandomLayer { input_dim, feature_dim, weights, offsets, .. } => {
                check_dims(*input_dim, *feature_dim)?;
                check_len(input_dim * feature_dim, weights.len())?;
                check_len(*feature_dim, offsets.len())
            }
            FeatureMap::Identity { dim } => check_dims(*dim, *dim),
            FeatureMap::Table { entries, .. } => Self::table(entries.clone()).map(|_| ()),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            FeatureMap::RandomFourier { input_dim, .. }
            | FeatureMap::RandomLayer { input_dim, .. }
            | FeatureMap::Table { input_dim, .. } => *input_dim,
            FeatureMap::Identity { dim } => *dim,
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            FeatureMap::RandomFourier { feature_dim, .. }
            | FeatureMap::RandomLayer { feature_dim, .. }
            | FeatureMap::Table { feature_dim, .. } => *feature_dim,
            FeatureMap::Identity { dim } => *dim,
        }
    }

    pub fn featurize(&self, action: &[f64]) -> Result<Vec<f64>> {
        check_len(self.input_dim(), action.len())?;
        match self {
            FeatureMap::RandomFourier { input_dim, feature_dim, lengthscale, weights, offsets, .. } => {
                let scale = (2.0 / *feature_dim as f64).sqrt();
                Ok(weights
                    .chunks_exact(*input_dim)
                    .zip(offsets)
                    .map(|(w, b)| scale * (pre_activation(w, action) / lengthscale + b).cos())
                    .collect())
            }
            FeatureMap::RandomLayer { input_dim, weights, offsets, .. } => Ok(weights
                .chunks_exact(*input_dim)
                .zip(offsets)
                .map(|(w, b)| (pre_activation(w, action) + b).tanh())
                .collect()),
            FeatureMap::Identity { .. } => Ok(action.to_vec()),
            FeatureMap::Table { entries, .. } => entries
                .iter()
                .find(|e| e.action == action)
                .map(|e| e.features.clone())
                .ok_or_else(|| Error::UnknownAction(action.to_vec())),
        }
    }

    /// Jacobian `d phi / d action` (`feature_dim x input_dim`); `None` for tables.
    pub fn jacobian(&self, action: &[f64]) -> Result<Option<DMatrix<f64>>> {
        check_len(self.input_dim(), action.len())?;
        let jac = match self {
            FeatureMap::RandomFourier { input_dim, feature_dim, lengthscale, weights, offsets, .. } => {
                let scale = (2.0 / *feature_dim as f64).sqrt();
                let mut j = DMatrix::zeros(*feature_dim, *input_dim);
                for (i, (w, b)) in weights.chunks_exact(*input_dim).zip(offsets).enumerate() {
                    let s = -scale * (pre_activation(w, action) / lengthscale + b).sin() / lengthscale;
                    for (k, wk) in w.iter().enumerate() {
                        j[(i, k)] = s * wk;
                    }
                }
                Some(j)
            }
            FeatureMap::RandomLayer { input_dim, feature_dim, weights, offsets, .. } => {
                let mut j = DMatrix::zeros(*feature_dim, *input_dim);
                for (i, (w, b)) in weights.chunks_exact(*input_dim).zip(offsets).enumerate() {
                    let th = (pre_activation(w, action) + b).tanh();
                    for (k, wk) in w.iter().enumerate() {
                        j[(i, k)] = (1.0 - th * th) * wk;
                    }
                }
                Some(j)
            }
            FeatureMap::Identity { dim } => Some(DMatrix::identity(*dim, *dim)),
            FeatureMap::Table { .. } => None,
        };
        Ok(jac)
    }
}

fn pre_activation(w: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum()
}

/// Actions available in one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionSet {
    Finite { actions: Vec<Vec<f64>> },
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

impl ActionSet {
    pub fn finite(actions: Vec<Vec<f64>>) -> Result<Self> {
        let first = actions.first().ok_or_else(|| Error::invalid("actions", "finite action set is empty"))?;
        let dim = first.len();
        for a in &actions {
            check_len(dim, a.len())?;
            check_finite("action", a)?;
        }
        Ok(ActionSet::Finite { actions })
    }

    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_len(lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::invalid("lower", "box must have at least one coordinate"));
        }
        check_finite("box bound", &lower)?;
        check_finite("box bound", &upper)?;
        if lower.iter().zip(&upper).any(|(l, u)| l > u) {
            return Err(Error::invalid("upper", "box requires lower <= upper coordinatewise"));
        }
        Ok(ActionSet::Box { lower, upper })
    }

    pub fn dim(&self) -> usize {
        match self {
            ActionSet::Finite { actions } => actions[0].len(),
            ActionSet::Box { lower, .. } => lower.len(),
        }
    }

    /// Clamps `action` into the box coordinatewise. No-op for finite sets.
    pub fn project(&self, action: &mut [f64]) {
        if let ActionSet::Box { lower, upper } = self {
            for ((x, l), u) in action.iter_mut().zip(lower).zip(upper) {
                *x = x.clamp(*l, *u);
            }
        }
    }

    /// `index`-th quasi-random point of a box (Halton); for finite sets, cycles the list.
    pub fn sample_point(&self, index: u64) -> Vec<f64> {
        match self {
            ActionSet::Finite { actions } => actions[index as usize % actions.len()].clone(),
            ActionSet::Box { lower, upper } => halton(index, lower.len())
                .into_iter()
                .zip(lower.iter().zip(upper))
                .map(|(h, (l, u))| l + h * (u - l))
                .collect(),
        }
    }
}

/// Largest feature norm over an action set.
///
/// Exact for finite sets. For boxes this is the maximum over `samples`
/// quasi-random points, hence only a lower estimate of the true bound `L`.
pub fn feature_norm_bound(map: &FeatureMap, set: &ActionSet, samples: usize) -> Result<f64> {
    if samples == 0 {
        return Err(Error::invalid("samples", "must be at least 1"));
    }
    check_len(map.input_dim(), set.dim())?;
    let mut best: f64 = 0.0;
    match set {
        ActionSet::Finite { actions } => {
            for a in actions {
                best = best.max(norm(&map.featurize(a)?));
            }
        }
        ActionSet::Box { .. } => {
            for i in 0..samples as u64 {
                best = best.max(norm(&map.featurize(&set.sample_point(i))?));
            }
        }
    }
    Ok(best)
}
