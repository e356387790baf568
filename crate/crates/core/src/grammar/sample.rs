use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BigramStats, GrammarAutomaton};
use crate::corpus::{Corpus, SetSummary};
use crate::error::{Error, Result};

/// One sampled action sequence together with the training video it was drawn for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampledSequence {
    pub video: usize,
    pub labels: Vec<usize>,
}

/// How the next class of a sampled sequence is chosen from the video's action set.
#[derive(Debug, Clone, Copy)]
pub enum DrawPolicy<'a> {
    Uniform,
    /// Successor drawn from `p(w|v)` restricted to the action set.
    Bigram(&'a BigramStats),
}

/// Grammar accepting every sequence built from a single training action set.
pub fn build_naive(corpus: &Corpus) -> GrammarAutomaton {
    GrammarAutomaton::kleene_union(corpus.videos.iter().map(|v| v.action_set.iter().copied()))
}

/// Draws `k` sequences: pick a video uniformly, then append classes from its
/// action set until the summed mean lengths exceed the video length.
pub fn sample_sequences(
    sets: &[SetSummary],
    means: &[f64],
    k: usize,
    seed: u64,
    policy: DrawPolicy<'_>,
) -> Result<Vec<SampledSequence>> {
    if sets.is_empty() {
        return Err(Error::Validation("cannot sample sequences from an empty corpus".into()));
    }
    if let Some(c) = means.iter().position(|&m| !(m > 0.0) || !m.is_finite()) {
        return Err(Error::Validation(format!("mean length of class {c} is not positive")));
    }
    for s in sets {
        if s.actions.is_empty() {
            return Err(Error::Validation("empty action set".into()));
        }
        if let Some(&c) = s.actions.iter().find(|&&c| c >= means.len()) {
            return Err(Error::Validation(format!("no mean length for class {c}")));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let video = rng.random_range(0..sets.len());
        let set = &sets[video];
        let budget = set.frames as f64;
        let mut labels = Vec::new();
        let mut accumulated = 0.0;
        while accumulated <= budget {
            let next = match (policy, labels.last()) {
                (DrawPolicy::Bigram(stats), Some(&prev)) => draw_bigram(&mut rng, stats, prev, &set.actions),
                _ => set.actions[rng.random_range(0..set.actions.len())],
            };
            labels.push(next);
            accumulated += means[next];
        }
        out.push(SampledSequence { video, labels });
    }
    Ok(out)
}

fn draw_bigram(rng: &mut ChaCha8Rng, stats: &BigramStats, prev: usize, actions: &[usize]) -> usize {
    if stats.is_uniform_row(prev) {
        return actions[rng.random_range(0..actions.len())];
    }
    let weights: Vec<f64> = actions.iter().map(|&w| stats.prob(prev, w)).collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return actions[rng.random_range(0..actions.len())];
    }
    let mut u = rng.random::<f64>() * total;
    for (&w, &p) in actions.iter().zip(&weights) {
        if u < p {
            return w;
        }
        u -= p;
    }
    // rounding can leave u marginally above the last positive weight
    *actions
        .iter()
        .zip(&weights)
        .rev()
        .find(|(_, &p)| p > 0.0)
        .map(|(w, _)| w)
        .unwrap()
}

pub fn build_monte_carlo(corpus: &Corpus, means: &[f64], k: usize, seed: u64) -> Result<GrammarAutomaton> {
    let samples = sample_sequences(&corpus.set_summaries(), means, k, seed, DrawPolicy::Uniform)?;
    Ok(GrammarAutomaton::prefix_tree(samples.iter().map(|s| &s.labels)))
}

pub fn build_text_based(
    corpus: &Corpus,
    means: &[f64],
    k: usize,
    seed: u64,
    stats: &BigramStats,
) -> Result<GrammarAutomaton> {
    let samples = sample_sequences(&corpus.set_summaries(), means, k, seed, DrawPolicy::Bigram(stats))?;
    Ok(GrammarAutomaton::prefix_tree(samples.iter().map(|s| &s.labels)))
}
