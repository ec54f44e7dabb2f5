//! Mini-batch gradient descent for the grasp regressor and the
//! transition classifier.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::head::softmax2;
use super::{featurize, normalize_labels, Demonstration, Head, HeadKind, HeadTask, InputNormalizer, PolicyError};
use crate::geometry::Pixel;
use crate::render::{augment, RenderConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Hidden tanh units; 0 trains a linear head.
    pub hidden: usize,
    /// Train on all mirror/photometric variants of each image.
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_size: 16,
            learning_rate: 1e-2,
            hidden: 0,
            augment: true,
        }
    }
}

impl TrainConfig {
    pub fn kind(&self) -> HeadKind {
        if self.hidden == 0 {
            HeadKind::Linear
        } else {
            HeadKind::Mlp { hidden: self.hidden }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraspSample {
    pub features: Vec<f64>,
    pub label: Pixel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionSample {
    pub features: Vec<f64>,
    pub label: u8,
}

/// Mean squared Euclidean error in normalised label space and its
/// gradient with respect to `params`.
pub fn grasp_loss_and_grad(head: &Head, params: &[f64], xs: &[Vec<f64>], ys: &[[f64; 2]]) -> (f64, Vec<f64>) {
    let n = xs.len() as f64;
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let f = head.forward_with(params, x);
        let r = [f.out[0] - y[0], f.out[1] - y[1]];
        loss += (r[0] * r[0] + r[1] * r[1]) / n;
        let dout = [2.0 * r[0] / n, 2.0 * r[1] / n];
        head.backward_with(params, x, &f, &dout, &mut grad);
    }
    (loss, grad)
}

/// Mean two-class softmax cross-entropy and its gradient.
pub fn transition_loss_and_grad(head: &Head, params: &[f64], xs: &[Vec<f64>], ys: &[u8]) -> (f64, Vec<f64>) {
    let n = xs.len() as f64;
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let f = head.forward_with(params, x);
        let p = softmax2(f.out[0], f.out[1]);
        let k = y as usize;
        loss -= p[k].max(1e-300).ln() / n;
        let mut dout = [p[0] / n, p[1] / n];
        dout[k] -= 1.0 / n;
        head.backward_with(params, x, &f, &dout, &mut grad);
    }
    (loss, grad)
}

fn views(obs: &crate::render::Observation, label: &Pixel, augment_on: bool, rcfg: &RenderConfig) -> Vec<(Vec<f64>, Pixel)> {
    if augment_on {
        augment(obs, label, rcfg)
            .iter()
            .map(|(o, l)| (featurize(o), *l))
            .collect()
    } else {
        vec![(featurize(obs), *label)]
    }
}

/// Augments and featurizes each demonstration's pre-stretch image, then
/// fits the grasp regressor.
pub fn train_grasp<R: Rng + ?Sized>(
    demos: &[Demonstration],
    cfg: &TrainConfig,
    rcfg: &RenderConfig,
    rng: &mut R,
) -> Result<Head, PolicyError> {
    if demos.len() < 2 {
        return Err(PolicyError::TooFewDemos {
            need: 2,
            got: demos.len(),
        });
    }
    let samples: Vec<GraspSample> = demos
        .iter()
        .flat_map(|d| views(&d.pre_obs, &d.grasp_label, cfg.augment, rcfg))
        .map(|(features, label)| GraspSample { features, label })
        .collect();
    train_grasp_samples(&samples, cfg, rng)
}

/// Fits the transition classifier on post-stretch images.
pub fn train_transition<R: Rng + ?Sized>(
    demos: &[Demonstration],
    cfg: &TrainConfig,
    rcfg: &RenderConfig,
    rng: &mut R,
) -> Result<Head, PolicyError> {
    if let Some(first) = demos.first() {
        if demos.iter().all(|d| d.transition_label == first.transition_label) {
            return Err(PolicyError::DegenerateDataset(first.transition_label));
        }
    } else {
        return Err(PolicyError::TooFewDemos { need: 2, got: 0 });
    }
    let samples: Vec<TransitionSample> = demos
        .iter()
        .flat_map(|d| {
            views(&d.post_obs, &Pixel::default(), cfg.augment, rcfg)
                .into_iter()
                .map(move |(features, _)| TransitionSample {
                    features,
                    label: d.transition_label,
                })
        })
        .collect();
    train_transition_samples(&samples, cfg, rng)
}

pub fn train_grasp_samples<R: Rng + ?Sized>(
    samples: &[GraspSample],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<Head, PolicyError> {
    if samples.len() < 2 {
        return Err(PolicyError::TooFewDemos {
            need: 2,
            got: samples.len(),
        });
    }
    let raw: Vec<Vec<f64>> = samples.iter().map(|s| s.features.clone()).collect();
    let normalizer = InputNormalizer::fit(&raw);
    let labels: Vec<Pixel> = samples.iter().map(|s| s.label).collect();
    let (ys, transform) = normalize_labels(&labels);
    let xs: Vec<Vec<f64>> = raw.iter().map(|x| normalizer.apply(x)).collect();
    let head = Head::init(HeadTask::Grasp, cfg.kind(), normalizer, Some(transform), rng);
    descend(head, cfg, rng, xs.len(), |h, p, idx| {
        let bx: Vec<Vec<f64>> = idx.iter().map(|&i| xs[i].clone()).collect();
        let by: Vec<[f64; 2]> = idx.iter().map(|&i| ys[i]).collect();
        grasp_loss_and_grad(h, p, &bx, &by)
    })
}

pub fn train_transition_samples<R: Rng + ?Sized>(
    samples: &[TransitionSample],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<Head, PolicyError> {
    let Some(first) = samples.first() else {
        return Err(PolicyError::TooFewDemos { need: 2, got: 0 });
    };
    if samples.iter().all(|s| s.label == first.label) {
        return Err(PolicyError::DegenerateDataset(first.label));
    }
    let raw: Vec<Vec<f64>> = samples.iter().map(|s| s.features.clone()).collect();
    let normalizer = InputNormalizer::fit(&raw);
    let xs: Vec<Vec<f64>> = raw.iter().map(|x| normalizer.apply(x)).collect();
    let ys: Vec<u8> = samples.iter().map(|s| s.label).collect();
    let head = Head::init(HeadTask::Transition, cfg.kind(), normalizer, None, rng);
    descend(head, cfg, rng, xs.len(), |h, p, idx| {
        let bx: Vec<Vec<f64>> = idx.iter().map(|&i| xs[i].clone()).collect();
        let by: Vec<u8> = idx.iter().map(|&i| ys[i]).collect();
        transition_loss_and_grad(h, p, &bx, &by)
    })
}

/// Plain mini-batch descent over a seeded shuffle each epoch. Fails when
/// the loss goes non-finite or ends above where it started.
fn descend<R, F>(mut head: Head, cfg: &TrainConfig, rng: &mut R, n: usize, loss_grad: F) -> Result<Head, PolicyError>
where
    R: Rng + ?Sized,
    F: Fn(&Head, &[f64], &[usize]) -> (f64, Vec<f64>),
{
    let all: Vec<usize> = (0..n).collect();
    let (initial, _) = loss_grad(&head, &head.params, &all);
    let mut order = all.clone();
    let batch = cfg.batch_size.max(1);
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(batch) {
            let (loss, grad) = loss_grad(&head, &head.params, chunk);
            if !loss.is_finite() {
                return Err(PolicyError::Divergence(epoch));
            }
            for (p, g) in head.params.iter_mut().zip(&grad) {
                *p -= cfg.learning_rate * g;
            }
        }
    }
    let (last, _) = loss_grad(&head, &head.params, &all);
    if !last.is_finite() || last > initial {
        return Err(PolicyError::Divergence(cfg.epochs));
    }
    log::debug!("trained {:?} head: loss {initial:.4} -> {last:.4}", head.task);
    Ok(head)
}
