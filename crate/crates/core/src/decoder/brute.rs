use std::cmp::Ordering;

use super::{score_cmp, DecodeConfig, DecodeResult, FrameScores, LengthScorer};
use crate::corpus::Segmentation;
use crate::error::{Error, Result};
use crate::grammar::GrammarAutomaton;

pub const BRUTE_FORCE_MAX_INTERVALS: usize = 16;
pub const BRUTE_FORCE_MAX_SEQUENCES: usize = 64;

struct Best {
    score: f64,
    labels: Vec<usize>,
    lens: Vec<usize>,
}

impl Best {
    fn beaten_by(&self, score: f64, labels: &[usize], lens: &[usize]) -> bool {
        match score_cmp(score, self.score) {
            Ordering::Greater => return true,
            Ordering::Less => return false,
            Ordering::Equal => {}
        }
        if labels.len() != self.labels.len() {
            return labels.len() < self.labels.len();
        }
        (labels, lens) < (&self.labels[..], &self.lens[..])
    }
}

/// Exhaustive search over every accepted sequence and every placement of its
/// boundaries on the stride lattice. For testing [`super::decode`].
pub fn brute_force_decode<L: LengthScorer + ?Sized>(
    scores: &FrameScores,
    g: &GrammarAutomaton,
    lm: &L,
    cfg: &DecodeConfig,
) -> Result<DecodeResult> {
    cfg.validate()?;
    let frames = scores.frames();
    let intervals = frames.div_ceil(cfg.stride);
    if intervals > BRUTE_FORCE_MAX_INTERVALS {
        return Err(Error::Guard(format!(
            "{intervals} lattice intervals exceed the brute-force limit {BRUTE_FORCE_MAX_INTERVALS}"
        )));
    }
    if let Some(&c) = g.alphabet().iter().find(|&&c| c >= scores.num_classes()) {
        return Err(Error::Validation(format!("grammar label {c} has no frame scores")));
    }
    let sequences = g.enumerate_sequences(intervals, BRUTE_FORCE_MAX_SEQUENCES)?;

    let mut best: Option<Best> = None;
    for labels in &sequences {
        // interior cuts are lattice indices 1..intervals, strictly increasing
        let mut cuts = Vec::with_capacity(labels.len() + 1);
        cuts.push(0);
        place(labels, &mut cuts, intervals, &mut |cuts: &[usize]| {
            let bounds: Vec<usize> = cuts.iter().map(|&k| (k * cfg.stride).min(frames)).collect();
            let lens: Vec<usize> = bounds.windows(2).map(|w| w[1] - w[0]).collect();
            let extra = frames % cfg.stride;
            let n = lens.len();
            let fits = lens
                .iter()
                .enumerate()
                .all(|(i, &l)| l <= if i + 1 == n { cfg.max_len + extra } else { cfg.max_len });
            if !fits {
                return;
            }
            let mut acc = 0.0;
            for (i, &c) in labels.iter().enumerate() {
                let term = lm.log_len(c, lens[i]);
                if term == f64::NEG_INFINITY {
                    return;
                }
                acc += term + (scores.prefix(bounds[i + 1], c) - scores.prefix(bounds[i], c));
            }
            if best.as_ref().is_none_or(|b| b.beaten_by(acc, labels, &lens)) {
                best = Some(Best { score: acc, labels: labels.clone(), lens });
            }
        });
    }

    let best = best.ok_or_else(|| {
        Error::Infeasible(format!(
            "no accepted label sequence covers {frames} frames with stride {} and max segment length {}",
            cfg.stride, cfg.max_len
        ))
    })?;
    let path = state_path(g, &best.labels);
    Ok(DecodeResult {
        segmentation: Segmentation::new(best.labels.iter().copied().zip(best.lens).collect())?,
        log_score: best.score,
        sequence: best.labels,
        automaton_path: path,
    })
}

fn place(labels: &[usize], cuts: &mut Vec<usize>, intervals: usize, visit: &mut impl FnMut(&[usize])) {
    let placed = cuts.len() - 1;
    if placed + 1 == labels.len() {
        cuts.push(intervals);
        visit(cuts);
        cuts.pop();
        return;
    }
    let last = *cuts.last().unwrap();
    let remaining = labels.len() - placed - 1;
    for k in last + 1..=intervals.saturating_sub(remaining) {
        if k >= intervals {
            break;
        }
        cuts.push(k);
        place(labels, cuts, intervals, visit);
        cuts.pop();
    }
}

/// Some accepting path for `labels`, preferring the smallest state at each step.
fn state_path(g: &GrammarAutomaton, labels: &[usize]) -> Vec<usize> {
    fn walk(g: &GrammarAutomaton, state: usize, rest: &[usize], path: &mut Vec<usize>) -> bool {
        path.push(state);
        if rest.is_empty() {
            if g.is_accepting(state) {
                return true;
            }
        } else {
            let mut next: Vec<usize> = g.outgoing(state).filter(|e| e.label == rest[0]).map(|e| e.to).collect();
            next.sort_unstable();
            next.dedup();
            for s in next {
                if walk(g, s, &rest[1..], path) {
                    return true;
                }
            }
        }
        path.pop();
        false
    }
    let mut path = Vec::new();
    walk(g, g.start(), labels, &mut path);
    path
}
