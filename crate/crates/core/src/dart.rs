//! Noise injected into the supervisor's grasps during collection: a 2×2
//! pixel covariance estimated from held-out residuals, rescaled to a
//! prior error level, and sampled through its Cholesky factor.

use nalgebra::{Matrix2, Vector2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::geometry::Pixel;
use crate::policies::{Demonstration, PolicyError};
use crate::render::{Observation, IMAGE_HEIGHT, IMAGE_WIDTH};

/// Diagonal added when a covariance is not numerically positive definite.
pub const CHOLESKY_JITTER: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum DartError {
    #[error("no residuals to estimate a covariance from")]
    Empty,
    #[error("covariance has zero trace and cannot be rescaled")]
    ZeroTrace,
    #[error("prior error must be positive, got {0}")]
    BadPrior(f64),
    #[error("cross-validation needs at least {folds} demonstrations and 2 folds, got {demos}")]
    TooFewDemos { demos: usize, folds: usize },
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Symmetric PSD covariance, pixels².
    pub sigma: [[f64; 2]; 2],
    /// Lower-triangular factor with `chol * cholᵀ = sigma + jitter * I`.
    pub chol: [[f64; 2]; 2],
    /// Diagonal jitter that was needed for the factorisation.
    pub jitter: f64,
    /// Prior error the covariance was scaled to, if any.
    pub prior: Option<f64>,
}

fn to_arr(m: &Matrix2<f64>) -> [[f64; 2]; 2] {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

impl NoiseModel {
    /// Factorises `sigma` (symmetrised). An all-zero covariance gets a
    /// zero factor so sampling returns the mean exactly.
    pub fn new(sigma: [[f64; 2]; 2]) -> Self {
        let off = 0.5 * (sigma[0][1] + sigma[1][0]);
        let s = Matrix2::new(sigma[0][0], off, off, sigma[1][1]);
        let (chol, jitter) = if s.iter().all(|&v| v == 0.0) {
            (Matrix2::zeros(), 0.0)
        } else {
            match s.cholesky() {
                Some(c) => (c.l(), 0.0),
                None => {
                    let j = CHOLESKY_JITTER * s.trace().abs().max(1.0);
                    let c = (s + Matrix2::identity() * j)
                        .cholesky()
                        .map(|c| c.l())
                        .unwrap_or_else(Matrix2::zeros);
                    (c, j)
                }
            }
        };
        Self {
            sigma: to_arr(&s),
            chol: to_arr(&chol),
            jitter,
            prior: None,
        }
    }

    /// `prior² / 2 · I`, the fallback when a fitted covariance is empty.
    pub fn isotropic(prior: f64) -> Self {
        let v = prior * prior / 2.0;
        Self {
            prior: Some(prior),
            ..Self::new([[v, 0.0], [0.0, v]])
        }
    }

    pub fn zero() -> Self {
        Self::new([[0.0; 2]; 2])
    }

    pub fn trace(&self) -> f64 {
        self.sigma[0][0] + self.sigma[1][1]
    }

    pub fn matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.sigma[0][0], self.sigma[0][1], self.sigma[1][0], self.sigma[1][1])
    }
}

/// `Σ = 1/K Σ_k r_k r_kᵀ`, the uncentred second moment of the residuals.
pub fn estimate_sigma(residuals: &[[f64; 2]]) -> Result<NoiseModel, DartError> {
    if residuals.is_empty() {
        return Err(DartError::Empty);
    }
    let k = residuals.len() as f64;
    let mut s = [[0.0; 2]; 2];
    for r in residuals {
        s[0][0] += r[0] * r[0];
        s[0][1] += r[0] * r[1];
        s[1][1] += r[1] * r[1];
    }
    s[0][0] /= k;
    s[0][1] /= k;
    s[1][1] /= k;
    s[1][0] = s[0][1];
    Ok(NoiseModel::new(s))
}

/// Rescales so that `trace(Σ') = prior²`, i.e. the expected squared
/// norm of a noise draw equals the prior error squared.
pub fn scale_sigma(model: &NoiseModel, prior: f64) -> Result<NoiseModel, DartError> {
    if !(prior > 0.0 && prior.is_finite()) {
        return Err(DartError::BadPrior(prior));
    }
    let tr = model.trace();
    if tr <= 0.0 {
        return Err(DartError::ZeroTrace);
    }
    let k = prior * prior / tr;
    let s = model.sigma.map(|row| row.map(|v| v * k));
    Ok(NoiseModel {
        prior: Some(prior),
        ..NoiseModel::new(s)
    })
}

/// Draws `mean + L z` and clamps to the image. The flag reports clamping.
pub fn sample_noisy_grasp<R: Rng + ?Sized>(mean: &Pixel, model: &NoiseModel, rng: &mut R) -> (Pixel, bool) {
    let z = Vector2::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal));
    let l = Matrix2::new(model.chol[0][0], model.chol[0][1], model.chol[1][0], model.chol[1][1]);
    let d = l * z;
    let raw = Pixel::new(mean.u + d[0], mean.v + d[1]);
    let clamped = raw.clamped(IMAGE_WIDTH, IMAGE_HEIGHT);
    let hit = clamped != raw;
    if hit {
        log::debug!("noisy grasp ({:.1}, {:.1}) clamped to the image", raw.u, raw.v);
    }
    (clamped, hit)
}

/// Fold sizes for `n` items over `k` folds; the first `n % k` are larger.
pub fn fold_sizes(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|i| n / k + usize::from(i < n % k)).collect()
}

/// K-fold estimate of the learner's residual covariance on the bootstrap
/// set. `train` fits on the complement of each fold and returns a
/// predictor; residuals are prediction minus label on the held-out fold.
pub fn crossval_sigma<R, T, P>(demos: &[Demonstration], folds: usize, rng: &mut R, mut train: T) -> Result<NoiseModel, DartError>
where
    R: Rng + ?Sized,
    T: FnMut(&[Demonstration], &mut R) -> Result<P, PolicyError>,
    P: Fn(&Observation) -> Pixel,
{
    if folds < 2 || demos.len() < folds {
        return Err(DartError::TooFewDemos {
            demos: demos.len(),
            folds,
        });
    }
    let mut order: Vec<usize> = (0..demos.len()).collect();
    order.shuffle(rng);
    let mut residuals = Vec::with_capacity(demos.len());
    let mut start = 0;
    for size in fold_sizes(demos.len(), folds) {
        let held = &order[start..start + size];
        let train_set: Vec<Demonstration> = order
            .iter()
            .filter(|i| !held.contains(i))
            .map(|&i| demos[i].clone())
            .collect();
        let predict = train(&train_set, rng)?;
        for &i in held {
            let p = predict(&demos[i].pre_obs);
            residuals.push([p.u - demos[i].grasp_label.u, p.v - demos[i].grasp_label.v]);
        }
        start += size;
    }
    estimate_sigma(&residuals)
}
