//! Small trainable heads on top of the fixed features, and their binary
//! file format.
//!
//! File layout (all little-endian): magic `BMHEAD`, `u16` version, `u8`
//! task, `u8` kind, `u32` input dim, `u32` hidden width (0 for linear),
//! `u32` output dim, input mean and scale (`input_dim` `f64` each),
//! `u64` parameter count and the row-major `f64` parameters, then a `u8`
//! flag and, when set, the label mean and scale (2 `f64` each).

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::PolicyError;
use crate::geometry::Pixel;

const MAGIC: &[u8; 6] = b"BMHEAD";
const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadTask {
    /// Two outputs: normalized `(u, v)`.
    Grasp,
    /// Two logits: retry, transition.
    Transition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadKind {
    Linear,
    /// One tanh hidden layer.
    Mlp { hidden: usize },
}

/// Per-coordinate affine map to zero mean and max-abs deviation 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelTransform {
    pub mean: [f64; 2],
    pub scale: [f64; 2],
}

impl LabelTransform {
    pub fn forward(&self, p: &Pixel) -> [f64; 2] {
        [(p.u - self.mean[0]) / self.scale[0], (p.v - self.mean[1]) / self.scale[1]]
    }

    pub fn inverse(&self, y: [f64; 2]) -> Pixel {
        Pixel::new(y[0] * self.scale[0] + self.mean[0], y[1] * self.scale[1] + self.mean[1])
    }
}

/// Centres labels and scales each coordinate into `[-1, 1]`. A
/// coordinate with no spread keeps scale 1.
///
/// # Panics
/// On an empty slice.
pub fn normalize_labels(labels: &[Pixel]) -> (Vec<[f64; 2]>, LabelTransform) {
    assert!(!labels.is_empty(), "need at least one label");
    let n = labels.len() as f64;
    let mean = [
        labels.iter().map(|p| p.u).sum::<f64>() / n,
        labels.iter().map(|p| p.v).sum::<f64>() / n,
    ];
    let dev = |k: usize| {
        labels
            .iter()
            .map(|p| (if k == 0 { p.u } else { p.v } - mean[k]).abs())
            .fold(0.0, f64::max)
    };
    let guard = |d: f64| if d > 0.0 { d } else { 1.0 };
    let t = LabelTransform {
        mean,
        scale: [guard(dev(0)), guard(dev(1))],
    };
    (labels.iter().map(|p| t.forward(p)).collect(), t)
}

/// Fixed standardisation applied to raw features before the head:
/// `x' = (x - mean) * scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputNormalizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl InputNormalizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Z-scores every feature and divides by `sqrt(dim)`, keeping the
    /// last (constant) feature at 1. Constant features get scale 0.
    pub fn fit(samples: &[Vec<f64>]) -> Self {
        assert!(!samples.is_empty());
        let dim = samples[0].len();
        let n = samples.len() as f64;
        let mut mean = vec![0.0; dim];
        for s in samples {
            for (m, x) in mean.iter_mut().zip(s) {
                *m += x / n;
            }
        }
        let mut var = vec![0.0; dim];
        for s in samples {
            for k in 0..dim {
                var[k] += (s[k] - mean[k]).powi(2) / n;
            }
        }
        let root_d = ((dim - 1).max(1) as f64).sqrt();
        let mut scale: Vec<f64> = var
            .iter()
            .map(|&v| if v > 1e-12 { 1.0 / (v.sqrt() * root_d) } else { 0.0 })
            .collect();
        mean[dim - 1] = 0.0;
        scale[dim - 1] = 1.0;
        Self { mean, scale }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.mean.len(), "feature length mismatch");
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(x, (m, s))| (x - m) * s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub task: HeadTask,
    pub kind: HeadKind,
    pub input_dim: usize,
    pub output_dim: usize,
    /// Linear: `input_dim × output_dim`. Mlp: `input_dim × hidden`, then
    /// `(hidden + 1) × output_dim`; the extra row is the hidden bias.
    pub params: Vec<f64>,
    pub normalizer: InputNormalizer,
    pub label: Option<LabelTransform>,
}

/// Intermediate values kept for back-propagation.
pub struct Forward {
    pub hidden: Vec<f64>,
    pub out: Vec<f64>,
}

impl Head {
    pub fn param_count(kind: HeadKind, input_dim: usize, output_dim: usize) -> usize {
        match kind {
            HeadKind::Linear => input_dim * output_dim,
            HeadKind::Mlp { hidden } => input_dim * hidden + (hidden + 1) * output_dim,
        }
    }

    /// Zero weights for a linear head; small uniform weights scaled by
    /// fan-in for an MLP so the hidden units are not symmetric.
    pub fn init<R: Rng + ?Sized>(
        task: HeadTask,
        kind: HeadKind,
        normalizer: InputNormalizer,
        label: Option<LabelTransform>,
        rng: &mut R,
    ) -> Self {
        let input_dim = normalizer.mean.len();
        let output_dim = 2;
        let n = Self::param_count(kind, input_dim, output_dim);
        let params = match kind {
            HeadKind::Linear => vec![0.0; n],
            HeadKind::Mlp { hidden } => {
                let a1 = (6.0 / (input_dim + hidden) as f64).sqrt();
                let a2 = (6.0 / (hidden + 1 + output_dim) as f64).sqrt();
                let n1 = input_dim * hidden;
                (0..n)
                    .map(|i| {
                        let a = if i < n1 { a1 } else { a2 };
                        rng.random_range(-a..a)
                    })
                    .collect()
            }
        };
        Self {
            task,
            kind,
            input_dim,
            output_dim,
            params,
            normalizer,
            label,
        }
    }

    /// Forward pass on already-normalised input, with `params` overriding
    /// the stored weights.
    pub fn forward_with(&self, params: &[f64], x: &[f64]) -> Forward {
        let (d, o) = (self.input_dim, self.output_dim);
        match self.kind {
            HeadKind::Linear => {
                let mut out = vec![0.0; o];
                for (i, xi) in x.iter().enumerate() {
                    if *xi == 0.0 {
                        continue;
                    }
                    let row = &params[i * o..(i + 1) * o];
                    for j in 0..o {
                        out[j] += xi * row[j];
                    }
                }
                Forward {
                    hidden: Vec::new(),
                    out,
                }
            }
            HeadKind::Mlp { hidden: h } => {
                let mut pre = vec![0.0; h];
                for (i, xi) in x.iter().enumerate() {
                    if *xi == 0.0 {
                        continue;
                    }
                    let row = &params[i * h..(i + 1) * h];
                    for k in 0..h {
                        pre[k] += xi * row[k];
                    }
                }
                let mut hidden: Vec<f64> = pre.iter().map(|z| z.tanh()).collect();
                hidden.push(1.0);
                let w2 = &params[d * h..];
                let mut out = vec![0.0; o];
                for (k, hk) in hidden.iter().enumerate() {
                    for j in 0..o {
                        out[j] += hk * w2[k * o + j];
                    }
                }
                Forward { hidden, out }
            }
        }
    }

    /// Adds `d loss / d params` for one sample to `grad`, given the
    /// output gradient `dout`.
    pub fn backward_with(&self, params: &[f64], x: &[f64], fwd: &Forward, dout: &[f64], grad: &mut [f64]) {
        let (d, o) = (self.input_dim, self.output_dim);
        match self.kind {
            HeadKind::Linear => {
                for (i, xi) in x.iter().enumerate() {
                    if *xi == 0.0 {
                        continue;
                    }
                    for j in 0..o {
                        grad[i * o + j] += xi * dout[j];
                    }
                }
            }
            HeadKind::Mlp { hidden: h } => {
                let w2 = &params[d * h..];
                let mut dpre = vec![0.0; h];
                for (k, hk) in fwd.hidden.iter().enumerate() {
                    let mut dh = 0.0;
                    for j in 0..o {
                        grad[d * h + k * o + j] += hk * dout[j];
                        dh += w2[k * o + j] * dout[j];
                    }
                    if k < h {
                        dpre[k] = dh * (1.0 - hk * hk);
                    }
                }
                for (i, xi) in x.iter().enumerate() {
                    if *xi == 0.0 {
                        continue;
                    }
                    for k in 0..h {
                        grad[i * h + k] += xi * dpre[k];
                    }
                }
            }
        }
    }

    /// Raw outputs for raw (unnormalised) features.
    pub fn output(&self, features: &[f64]) -> Vec<f64> {
        self.forward_with(&self.params, &self.normalizer.apply(features)).out
    }

    pub fn predict_pixel(&self, features: &[f64]) -> Pixel {
        let y = self.output(features);
        match self.label {
            Some(t) => t.inverse([y[0], y[1]]),
            None => Pixel::new(y[0], y[1]),
        }
    }

    /// Softmax probability of the transition class.
    pub fn predict_success_prob(&self, features: &[f64]) -> f64 {
        let y = self.output(features);
        softmax2(y[0], y[1])[1]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(64 + 8 * (self.params.len() + 2 * self.input_dim));
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&VERSION.to_le_bytes());
        b.push(match self.task {
            HeadTask::Grasp => 0,
            HeadTask::Transition => 1,
        });
        let hidden = match self.kind {
            HeadKind::Linear => {
                b.push(0);
                0
            }
            HeadKind::Mlp { hidden } => {
                b.push(1);
                hidden
            }
        };
        for v in [self.input_dim, hidden, self.output_dim] {
            b.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for v in self.normalizer.mean.iter().chain(&self.normalizer.scale) {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for v in &self.params {
            b.extend_from_slice(&v.to_le_bytes());
        }
        match &self.label {
            None => b.push(0),
            Some(t) => {
                b.push(1);
                for v in t.mean.iter().chain(&t.scale) {
                    b.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PolicyError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(6)? != MAGIC {
            return Err(bad("missing magic"));
        }
        let version = u16::from_le_bytes(r.array()?);
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let task = match r.take(1)?[0] {
            0 => HeadTask::Grasp,
            1 => HeadTask::Transition,
            t => return Err(bad(&format!("unknown task {t}"))),
        };
        let kind_tag = r.take(1)?[0];
        let input_dim = u32::from_le_bytes(r.array()?) as usize;
        let hidden = u32::from_le_bytes(r.array()?) as usize;
        let output_dim = u32::from_le_bytes(r.array()?) as usize;
        let kind = match (kind_tag, hidden) {
            (0, 0) => HeadKind::Linear,
            (1, h) if h > 0 => HeadKind::Mlp { hidden: h },
            _ => return Err(bad("inconsistent head kind")),
        };
        if input_dim == 0 || output_dim != 2 {
            return Err(bad("unsupported dimensions"));
        }
        let mean = r.f64s(input_dim)?;
        let scale = r.f64s(input_dim)?;
        let n = u64::from_le_bytes(r.array()?) as usize;
        if n != Self::param_count(kind, input_dim, output_dim) {
            return Err(bad("parameter count does not match dimensions"));
        }
        let params = r.f64s(n)?;
        let label = match r.take(1)?[0] {
            0 => None,
            1 => {
                let v = r.f64s(4)?;
                Some(LabelTransform {
                    mean: [v[0], v[1]],
                    scale: [v[2], v[3]],
                })
            }
            _ => return Err(bad("bad label flag")),
        };
        if r.pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        if params.iter().chain(&mean).chain(&scale).any(|v| !v.is_finite()) {
            return Err(bad("non-finite weights"));
        }
        Ok(Self {
            task,
            kind,
            input_dim,
            output_dim,
            params,
            normalizer: InputNormalizer { mean, scale },
            label,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), PolicyError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PolicyError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

pub(crate) fn softmax2(a: f64, b: f64) -> [f64; 2] {
    let m = a.max(b);
    let (ea, eb) = ((a - m).exp(), (b - m).exp());
    let s = ea + eb;
    [ea / s, eb / s]
}

fn bad(msg: &str) -> PolicyError {
    PolicyError::BadHead(msg.to_string())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], PolicyError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| bad("truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], PolicyError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, PolicyError> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| bad("size overflow"))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_point_normalisation() {
        let (n, t) = normalize_labels(&[Pixel::new(0.0, 0.0), Pixel::new(10.0, 20.0)]);
        assert_eq!(t.mean, [5.0, 10.0]);
        assert_eq!(n, vec![[-1.0, -1.0], [1.0, 1.0]]);
    }

    #[test]
    fn repeated_label_is_guarded() {
        let (n, t) = normalize_labels(&[Pixel::new(3.0, 4.0); 5]);
        assert_eq!(t.scale, [1.0, 1.0]);
        assert!(n.iter().all(|y| *y == [0.0, 0.0]));
    }

    #[test]
    fn label_inverse_roundtrip() {
        let labels: Vec<Pixel> = (0..20).map(|i| Pixel::new(i as f64 * 13.7 % 640.0, i as f64 * 7.1)).collect();
        let (n, t) = normalize_labels(&labels);
        for (y, p) in n.iter().zip(&labels) {
            assert!(y[0].abs() <= 1.0 + 1e-12 && y[1].abs() <= 1.0 + 1e-12);
            assert!(t.inverse(*y).distance(p) < 1e-9);
        }
    }

    fn random_head(kind: HeadKind, seed: u64) -> Head {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = 9;
        let samples: Vec<Vec<f64>> = (0..30)
            .map(|_| {
                let mut v: Vec<f64> = (0..dim - 1).map(|_| rng.random::<f64>()).collect();
                v.push(1.0);
                v
            })
            .collect();
        let mut h = Head::init(
            HeadTask::Grasp,
            kind,
            InputNormalizer::fit(&samples),
            Some(LabelTransform {
                mean: [300.0, 200.0],
                scale: [120.0, 80.0],
            }),
            &mut rng,
        );
        for p in h.params.iter_mut() {
            *p = rng.random_range(-1.0..1.0);
        }
        h
    }

    #[test]
    fn binary_roundtrip_preserves_predictions() {
        for kind in [HeadKind::Linear, HeadKind::Mlp { hidden: 4 }] {
            let h = random_head(kind, 3);
            let back = Head::from_bytes(&h.to_bytes()).unwrap();
            assert_eq!(back, h);
            let x = vec![0.3; 9];
            assert_eq!(back.predict_pixel(&x), h.predict_pixel(&x));
        }
    }

    #[test]
    fn corrupted_files_are_rejected() {
        let bytes = random_head(HeadKind::Linear, 1).to_bytes();
        assert!(Head::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(Head::from_bytes(&bad_magic).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Head::from_bytes(&extra).is_err());
    }

    #[test]
    fn normalizer_keeps_bias_and_zeroes_constants() {
        let samples = vec![vec![1.0, 5.0, 1.0], vec![3.0, 5.0, 1.0]];
        let n = InputNormalizer::fit(&samples);
        let x = n.apply(&samples[0]);
        assert_eq!(x[1], 0.0);
        assert_eq!(x[2], 1.0);
        assert!((x[0] + 1.0 / 2f64.sqrt()).abs() < 1e-12);
    }
}
