//! Multi-task framewise classifier.
//!
//! One hidden ReLU layer feeds one two-way softmax head per class. Head `c`
//! predicts whether class `c` is present in the frame's video. The normalized
//! "present" probabilities act as class posteriors; dividing by the class
//! prior gives scores proportional to `p(x_t|c)`.

mod io;
mod train;

pub use io::{load_scorer, save_scorer};
pub use train::{train, Supervision, TrainConfig, TrainOutcome};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, VideoRecord};
use crate::decoder::FrameScores;
use crate::error::{Error, Result};

/// Floor applied to probabilities before taking logs.
pub const SCORE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct MultiTaskNet {
    dim: usize,
    hidden: usize,
    classes: usize,
    /// `[w1 (hidden x dim) | b1 (hidden) | w2 (2*classes x hidden) | b2 (2*classes)]`
    params: Vec<f64>,
}

/// Parameter gradient with the same layout as [`MultiTaskNet::params`].
pub type Gradient = Vec<f64>;

impl MultiTaskNet {
    pub fn num_params(dim: usize, hidden: usize, classes: usize) -> usize {
        hidden * dim + hidden + 2 * classes * hidden + 2 * classes
    }

    /// Weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases zero.
    pub fn new_random(dim: usize, hidden: usize, classes: usize, seed: u64) -> Result<Self> {
        if dim == 0 || hidden == 0 || classes == 0 {
            return Err(Error::Config(format!(
                "network dimensions must be positive (d={dim}, H={hidden}, C={classes})"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; Self::num_params(dim, hidden, classes)];
        let r1 = 1.0 / (dim as f64).sqrt();
        for w in &mut params[..hidden * dim] {
            *w = rng.random_range(-r1..r1);
        }
        let r2 = 1.0 / (hidden as f64).sqrt();
        let w2 = hidden * dim + hidden;
        for w in &mut params[w2..w2 + 2 * classes * hidden] {
            *w = rng.random_range(-r2..r2);
        }
        Ok(Self { dim, hidden, classes, params })
    }

    pub fn from_params(dim: usize, hidden: usize, classes: usize, params: Vec<f64>) -> Result<Self> {
        if params.len() != Self::num_params(dim, hidden, classes) {
            return Err(Error::Validation(format!(
                "expected {} parameters, got {}",
                Self::num_params(dim, hidden, classes),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Validation("non-finite network parameter".into()));
        }
        Ok(Self { dim, hidden, classes, params })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn num_classes(&self) -> usize {
        self.classes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn split(&self) -> (&[f64], &[f64], &[f64], &[f64]) {
        let (w1, rest) = self.params.split_at(self.hidden * self.dim);
        let (b1, rest) = rest.split_at(self.hidden);
        let (w2, b2) = rest.split_at(2 * self.classes * self.hidden);
        (w1, b1, w2, b2)
    }

    /// Hidden activations and head logits; head `c` owns logits `2c` (absent) and `2c+1` (present).
    fn forward(&self, x: &[f64], hidden: &mut [f64], logits: &mut [f64]) {
        let (w1, b1, w2, b2) = self.split();
        for (j, h) in hidden.iter_mut().enumerate() {
            let row = &w1[j * self.dim..(j + 1) * self.dim];
            let a = b1[j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            *h = a.max(0.0);
        }
        for (k, z) in logits.iter_mut().enumerate() {
            let row = &w2[k * self.hidden..(k + 1) * self.hidden];
            *z = b2[k] + row.iter().zip(hidden.iter()).map(|(w, h)| w * h).sum::<f64>();
        }
    }

    /// `p(c present | x)` for every head.
    pub fn presence(&self, x: &[f64]) -> Vec<f64> {
        let mut hidden = vec![0.0; self.hidden];
        let mut logits = vec![0.0; 2 * self.classes];
        self.forward(x, &mut hidden, &mut logits);
        (0..self.classes)
            .map(|c| sigmoid(logits[2 * c + 1] - logits[2 * c]))
            .collect()
    }

    /// Summed binary cross-entropy over heads for one frame.
    pub fn frame_loss(&self, x: &[f64], targets: &[bool]) -> f64 {
        let mut hidden = vec![0.0; self.hidden];
        let mut logits = vec![0.0; 2 * self.classes];
        self.forward(x, &mut hidden, &mut logits);
        head_losses(&logits, targets)
    }

    /// Adds `scale * d(loss)/d(params)` for one frame into `grad`; returns the loss.
    pub fn accumulate_gradient(&self, x: &[f64], targets: &[bool], scale: f64, grad: &mut [f64]) -> f64 {
        let mut hidden = vec![0.0; self.hidden];
        let mut logits = vec![0.0; 2 * self.classes];
        self.forward(x, &mut hidden, &mut logits);
        let loss = head_losses(&logits, targets);

        let (_, _, w2, _) = self.split();
        let (hd, h) = (self.hidden * self.dim, self.hidden);
        let o_w2 = hd + h;
        let o_b2 = o_w2 + 2 * self.classes * h;
        let mut dhidden = vec![0.0; h];
        for c in 0..self.classes {
            // softmax over the pair minus one-hot target
            let p1 = sigmoid(logits[2 * c + 1] - logits[2 * c]);
            let y1 = if targets[c] { 1.0 } else { 0.0 };
            let dz = [(1.0 - p1) - (1.0 - y1), p1 - y1];
            for (k, &d) in dz.iter().enumerate() {
                let unit = 2 * c + k;
                let d = d * scale;
                grad[o_b2 + unit] += d;
                let row = &mut grad[o_w2 + unit * h..o_w2 + (unit + 1) * h];
                for (g, hv) in row.iter_mut().zip(&hidden) {
                    *g += d * hv;
                }
                let wrow = &w2[unit * h..(unit + 1) * h];
                for (dh, w) in dhidden.iter_mut().zip(wrow) {
                    *dh += d * w;
                }
            }
        }
        for j in 0..h {
            if hidden[j] <= 0.0 {
                continue;
            }
            let d = dhidden[j];
            grad[hd + j] += d;
            let row = &mut grad[j * self.dim..(j + 1) * self.dim];
            for (g, xv) in row.iter_mut().zip(x) {
                *g += d * xv;
            }
        }
        loss
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn head_losses(logits: &[f64], targets: &[bool]) -> f64 {
    targets
        .iter()
        .enumerate()
        .map(|(c, &present)| {
            let diff = logits[2 * c + 1] - logits[2 * c];
            // -ln softmax of the target logit
            if present {
                softplus(-diff)
            } else {
                softplus(diff)
            }
        })
        .sum()
}

/// Normalizes floored presence probabilities into class posteriors.
pub fn posteriors_from_presence(presence: &[f64]) -> Vec<f64> {
    let floored: Vec<f64> = presence.iter().map(|&p| p.max(SCORE_FLOOR)).collect();
    let total: f64 = floored.iter().sum();
    floored.into_iter().map(|p| p / total).collect()
}

pub fn class_posteriors(net: &MultiTaskNet, x: &[f64]) -> Vec<f64> {
    posteriors_from_presence(&net.presence(x))
}

/// Relative frequency of frames labeled "class present".
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPrior {
    pub p: Vec<f64>,
    /// Classes that never occurred and received the floor.
    pub flagged: Vec<bool>,
}

impl ClassPrior {
    pub fn from_counts(counts: &[f64]) -> Result<Self> {
        let total: f64 = counts.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Validation("class prior needs at least one counted frame".into()));
        }
        let flagged: Vec<bool> = counts.iter().map(|&n| n <= 0.0).collect();
        let raw: Vec<f64> = counts
            .iter()
            .map(|&n| if n > 0.0 { n / total } else { SCORE_FLOOR })
            .collect();
        let norm: f64 = raw.iter().sum();
        Ok(Self {
            p: raw.into_iter().map(|v| v / norm).collect(),
            flagged,
        })
    }
}

/// `count(c)` sums the lengths of videos whose action set contains `c`.
pub fn compute_prior(corpus: &Corpus) -> Result<ClassPrior> {
    let mut counts = vec![0.0; corpus.num_classes()];
    for v in &corpus.videos {
        for &c in &v.action_set {
            counts[c] += v.frames() as f64;
        }
    }
    ClassPrior::from_counts(&counts)
}

/// Prior from framewise ground truth, for fully supervised training.
pub fn compute_label_prior(corpus: &Corpus) -> Result<ClassPrior> {
    let mut counts = vec![0.0; corpus.num_classes()];
    for v in &corpus.videos {
        let gt = v
            .gt_labels
            .as_ref()
            .ok_or_else(|| Error::Config(format!("video {} has no ground truth", v.id)))?;
        for &c in gt {
            counts[c] += 1.0;
        }
    }
    ClassPrior::from_counts(&counts)
}

/// Trained network plus prior; produces per-frame log class-conditional scores.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameScorer {
    pub net: MultiTaskNet,
    pub prior: ClassPrior,
}

impl FrameScorer {
    pub fn new(net: MultiTaskNet, prior: ClassPrior) -> Result<Self> {
        if net.num_classes() != prior.p.len() {
            return Err(Error::Validation(format!(
                "network has {} heads but prior covers {} classes",
                net.num_classes(),
                prior.p.len()
            )));
        }
        Ok(Self { net, prior })
    }

    /// Entry `(t, c)` is `ln p(c|x_t) - ln p(c)`, i.e. `ln p(x_t|c)` up to a
    /// per-frame constant shared by all classes.
    pub fn frame_log_scores(&self, video: &VideoRecord) -> Result<FrameScores> {
        if video.features.dim() != self.net.dim() {
            return Err(Error::Validation(format!(
                "video {}: feature dimension {} but network expects {}",
                video.id,
                video.features.dim(),
                self.net.dim()
            )));
        }
        let c = self.net.num_classes();
        let log_prior: Vec<f64> = self.prior.p.iter().map(|p| p.max(SCORE_FLOOR).ln()).collect();
        let mut data = Vec::with_capacity(video.frames() * c);
        let mut x = vec![0.0; self.net.dim()];
        for t in 0..video.frames() {
            for (dst, &src) in x.iter_mut().zip(video.features.row(t)) {
                *dst = src as f64;
            }
            let post = class_posteriors(&self.net, &x);
            data.extend(post.iter().zip(&log_prior).map(|(p, lp)| p.ln() - lp));
        }
        FrameScores::new(video.frames(), c, data)
    }
}
