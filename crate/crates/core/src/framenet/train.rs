use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::MultiTaskNet;
use crate::corpus::Corpus;
use crate::error::{Error, Result};

/// Where the per-head targets come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Supervision {
    /// Head `c` is "present" for every frame of a video whose set contains `c`.
    #[default]
    ActionSets,
    /// Head `c` is "present" only on frames whose ground-truth label is `c`.
    GroundTruth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Use every `frame_stride`-th frame of each video.
    pub frame_stride: usize,
    pub supervision: Supervision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: 256,
            epochs: 10,
            batch_size: 512,
            learning_rate: 0.01,
            frame_stride: 1,
            supervision: Supervision::ActionSets,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: MultiTaskNet,
    /// Mean per-frame loss over the training frames, before training and after each epoch.
    pub loss_trace: Vec<f64>,
}

struct Example {
    x: Vec<f64>,
    targets: Vec<bool>,
}

fn examples(corpus: &Corpus, config: &TrainConfig) -> Result<Vec<Example>> {
    let n = corpus.num_classes();
    let mut out = Vec::new();
    for v in &corpus.videos {
        let labels = match config.supervision {
            Supervision::ActionSets => None,
            Supervision::GroundTruth => Some(v.gt_labels.as_ref().ok_or_else(|| {
                Error::Config(format!("video {} has no ground truth for supervised training", v.id))
            })?),
        };
        let set_targets: Vec<bool> = (0..n).map(|c| v.action_set.contains(&c)).collect();
        for t in (0..v.frames()).step_by(config.frame_stride) {
            let targets = match labels {
                Some(gt) => (0..n).map(|c| gt[t] == c).collect(),
                None => set_targets.clone(),
            };
            out.push(Example {
                x: v.features.row(t).iter().map(|&f| f as f64).collect(),
                targets,
            });
        }
    }
    Ok(out)
}

fn mean_loss(net: &MultiTaskNet, data: &[Example]) -> f64 {
    data.iter().map(|e| net.frame_loss(&e.x, &e.targets)).sum::<f64>() / data.len() as f64
}

/// Minibatch SGD on the summed per-head cross-entropy, averaged over frames.
pub fn train(corpus: &Corpus, config: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    if corpus.videos.is_empty() {
        return Err(Error::Config("cannot train on an empty corpus".into()));
    }
    if config.batch_size == 0 || config.frame_stride == 0 {
        return Err(Error::Config("batch size and frame stride must be positive".into()));
    }
    if !(config.learning_rate > 0.0) {
        return Err(Error::Config("learning rate must be positive".into()));
    }
    let dim = corpus.feature_dim().unwrap_or_default();
    let mut net = MultiTaskNet::new_random(dim, config.hidden, corpus.num_classes(), seed)?;
    let data = examples(corpus, config)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f00d);
    let mut grad = vec![0.0; net.params().len()];

    let mut loss_trace = vec![mean_loss(&net, &data)];
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                net.accumulate_gradient(&data[i].x, &data[i].targets, scale, &mut grad);
            }
            for (p, g) in net.params_mut().iter_mut().zip(&grad) {
                *p -= config.learning_rate * g;
            }
        }
        let loss = mean_loss(&net, &data);
        if !loss.is_finite() || net.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        loss_trace.push(loss);
    }
    Ok(TrainOutcome { net, loss_trace })
}
