//! Grammar-constrained Viterbi decoding with an explicit length model.
//!
//! The objective of a segmentation `(c_n, l_n)` is
//! `sum_n [ln p(l_n|c_n) + sum_{t in segment n} score(t, c_n)]`, maximized
//! over label sequences accepted by the automaton. Segment boundaries lie on
//! a lattice of multiples of the stride; the last segment always ends at the
//! final frame and absorbs the remainder. Interior segments are at most
//! `max_len` frames long, the last one at most `max_len + (T mod stride)`.
//!
//! Ties are broken by fewer segments, then the lexicographically smaller
//! label sequence, then the lexicographically smaller length sequence.

mod brute;

pub use brute::{brute_force_decode, BRUTE_FORCE_MAX_INTERVALS, BRUTE_FORCE_MAX_SEQUENCES};

use std::cmp::Ordering;
use std::collections::BTreeSet;

use crate::corpus::Segmentation;
use crate::error::{Error, Result};
use crate::grammar::GrammarAutomaton;
use crate::lengths::LengthModel;

/// Per-frame log scores with per-class prefix sums.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameScores {
    frames: usize,
    classes: usize,
    scores: Vec<f64>,
    /// `prefix[t * classes + c]` = sum of `scores(tau, c)` for `tau < t`.
    prefix: Vec<f64>,
}

impl FrameScores {
    pub fn new(frames: usize, classes: usize, scores: Vec<f64>) -> Result<Self> {
        if frames == 0 || classes == 0 || scores.len() != frames * classes {
            return Err(Error::Validation(format!(
                "score matrix {frames}x{classes} with {} entries",
                scores.len()
            )));
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite score at frame {} class {}",
                i / classes,
                i % classes
            )));
        }
        let mut prefix = vec![0.0; (frames + 1) * classes];
        for t in 0..frames {
            for c in 0..classes {
                prefix[(t + 1) * classes + c] = prefix[t * classes + c] + scores[t * classes + c];
            }
        }
        Ok(Self { frames, classes, scores, prefix })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn num_classes(&self) -> usize {
        self.classes
    }

    pub fn score(&self, t: usize, c: usize) -> f64 {
        self.scores[t * self.classes + c]
    }

    /// Sum of the first `t` frames' scores for class `c`.
    pub fn prefix(&self, t: usize, c: usize) -> f64 {
        self.prefix[t * self.classes + c]
    }

    /// Score of frames `start..end` labeled `c`.
    pub fn segment(&self, start: usize, end: usize, c: usize) -> f64 {
        self.prefix(end, c) - self.prefix(start, c)
    }

    /// Adds `offset[t]` to every class of frame `t`.
    pub fn shifted(&self, offset: &[f64]) -> Result<Self> {
        let data = self
            .scores
            .chunks(self.classes)
            .zip(offset)
            .flat_map(|(row, o)| row.iter().map(move |s| s + o))
            .collect();
        Self::new(self.frames, self.classes, data)
    }
}

/// Log-probability of a segment length for a class.
pub trait LengthScorer {
    fn log_len(&self, class: usize, len: usize) -> f64;
}

impl LengthScorer for LengthModel {
    fn log_len(&self, class: usize, len: usize) -> f64 {
        self.log_pmf(class, len)
    }
}

/// Contributes nothing; decoding without a length model.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoLengthModel;

impl LengthScorer for NoLengthModel {
    fn log_len(&self, _class: usize, _len: usize) -> f64 {
        0.0
    }
}

impl<F: Fn(usize, usize) -> f64> LengthScorer for F {
    fn log_len(&self, class: usize, len: usize) -> f64 {
        self(class, len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodeConfig {
    /// Segment boundaries are hypothesized every `stride` frames.
    pub stride: usize,
    pub max_len: usize,
    /// Keep only the best `beam` automaton states per lattice point. Approximate.
    pub beam: Option<usize>,
}

impl DecodeConfig {
    pub fn new(stride: usize, max_len: usize) -> Self {
        Self { stride, max_len, beam: None }
    }

    /// `max_len = min(T, limit)` rounded up to a multiple of the stride.
    pub fn with_limit(frames: usize, stride: usize, limit: usize) -> Self {
        let stride = stride.max(1);
        let l = frames.min(limit).max(1);
        Self::new(stride, l.div_ceil(stride) * stride)
    }

    /// Default limit for a length model: `ceil(max lambda + 5 max sigma)`.
    pub fn for_model(frames: usize, stride: usize, lm: &LengthModel) -> Self {
        Self::with_limit(frames, stride, lm.suggested_limit())
    }

    fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        if self.max_len < self.stride {
            return Err(Error::Config(format!(
                "max segment length {} is below the stride {}",
                self.max_len, self.stride
            )));
        }
        if self.beam == Some(0) {
            return Err(Error::Config("beam width must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub segmentation: Segmentation,
    pub log_score: f64,
    pub sequence: Vec<usize>,
    /// Automaton states visited, starting with the start state.
    pub automaton_path: Vec<usize>,
}

/// Boundary lattice `0, stride, 2*stride, ..., T`.
#[derive(Debug, Clone)]
pub(crate) struct Lattice {
    pub points: Vec<usize>,
    pub max_len: usize,
    pub final_extra: usize,
}

impl Lattice {
    pub fn new(frames: usize, cfg: &DecodeConfig) -> Self {
        let intervals = frames.div_ceil(cfg.stride);
        let points = (0..=intervals).map(|k| (k * cfg.stride).min(frames)).collect();
        Self {
            points,
            max_len: cfg.max_len,
            final_extra: frames % cfg.stride,
        }
    }

    pub fn last(&self) -> usize {
        self.points.len() - 1
    }

    pub fn limit(&self, end: usize) -> usize {
        if end == self.last() {
            self.max_len + self.final_extra
        } else {
            self.max_len
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    score: f64,
    segments: u32,
    prev_point: u32,
    prev_state: u32,
    label: u32,
}

struct Trellis {
    states: usize,
    cells: Vec<Option<Cell>>,
    points: Vec<usize>,
}

impl Trellis {
    fn get(&self, point: usize, state: usize) -> Option<&Cell> {
        self.cells[point * self.states + state].as_ref()
    }

    /// Labels and lengths of the best path ending in `(point, state)`.
    fn path(&self, mut point: usize, mut state: usize) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
        let (mut labels, mut lens, mut states) = (Vec::new(), Vec::new(), vec![state]);
        while point > 0 {
            let cell = self.get(point, state).expect("back pointer into empty cell");
            labels.push(cell.label as usize);
            lens.push(self.points[point] - self.points[cell.prev_point as usize]);
            point = cell.prev_point as usize;
            state = cell.prev_state as usize;
            states.push(state);
        }
        labels.reverse();
        lens.reverse();
        states.reverse();
        (labels, lens, states)
    }

    fn extended(&self, from: (usize, usize), label: usize, to_point: usize) -> (Vec<usize>, Vec<usize>) {
        let (mut labels, mut lens, _) = self.path(from.0, from.1);
        labels.push(label);
        lens.push(self.points[to_point] - self.points[from.0]);
        (labels, lens)
    }
}

/// Scores closer than this, relative to their magnitude, count as tied.
/// Equal sums accumulated in different orders differ in the last bits.
const TIE_TOLERANCE: f64 = 1e-12;

pub(crate) fn score_cmp(a: f64, b: f64) -> Ordering {
    if (a - b).abs() <= TIE_TOLERANCE * a.abs().max(b.abs()).max(1.0) {
        Ordering::Equal
    } else {
        a.partial_cmp(&b).unwrap_or(Ordering::Equal)
    }
}

/// Higher score, then fewer segments; `Equal` means the path contents decide.
fn rank(a_score: f64, a_segs: u32, b_score: f64, b_segs: u32) -> Ordering {
    score_cmp(a_score, b_score).then(b_segs.cmp(&a_segs))
}

pub fn decode<L: LengthScorer + ?Sized>(
    scores: &FrameScores,
    g: &GrammarAutomaton,
    lm: &L,
    cfg: &DecodeConfig,
) -> Result<DecodeResult> {
    cfg.validate()?;
    if let Some(&c) = g.alphabet().iter().find(|&&c| c >= scores.num_classes()) {
        return Err(Error::Validation(format!("grammar label {c} has no frame scores")));
    }
    let frames = scores.frames();
    let lattice = Lattice::new(frames, cfg);
    let last = lattice.last();
    let n_states = g.num_states();
    let classes = scores.num_classes();

    // length terms for every class and feasible length
    let longest = (lattice.max_len + lattice.final_extra).min(frames);
    let mut len_terms = vec![f64::NEG_INFINITY; classes * (longest + 1)];
    for c in g.alphabet() {
        for l in 1..=longest {
            len_terms[c * (longest + 1) + l] = lm.log_len(c, l);
        }
    }

    let mut trellis = Trellis {
        states: n_states,
        cells: vec![None; (last + 1) * n_states],
        points: lattice.points.clone(),
    };
    trellis.cells[g.start()] = Some(Cell {
        score: 0.0,
        segments: 0,
        prev_point: 0,
        prev_state: 0,
        label: 0,
    });

    let mut seg_terms = vec![0.0; classes];
    for j in 1..=last {
        let end = lattice.points[j];
        let limit = lattice.limit(j);
        for i in (0..j).rev() {
            let start = lattice.points[i];
            let len = end - start;
            if len > limit {
                break;
            }
            for c in 0..classes {
                seg_terms[c] = len_terms[c * (longest + 1) + len] + (scores.prefix(end, c) - scores.prefix(start, c));
            }
            for q in 0..n_states {
                let Some(&from) = trellis.get(i, q) else { continue };
                for e in g.outgoing(q) {
                    let term = seg_terms[e.label];
                    if term == f64::NEG_INFINITY {
                        continue;
                    }
                    let cand = Cell {
                        score: from.score + term,
                        segments: from.segments + 1,
                        prev_point: i as u32,
                        prev_state: q as u32,
                        label: e.label as u32,
                    };
                    let slot = j * n_states + e.to;
                    let replace = match &trellis.cells[slot] {
                        None => true,
                        Some(cur) => match rank(cand.score, cand.segments, cur.score, cur.segments) {
                            Ordering::Greater => true,
                            Ordering::Less => false,
                            Ordering::Equal => {
                                let mine = trellis.extended((i, q), e.label, j);
                                let theirs = trellis.extended(
                                    (cur.prev_point as usize, cur.prev_state as usize),
                                    cur.label as usize,
                                    j,
                                );
                                mine < theirs
                            }
                        },
                    };
                    if replace {
                        trellis.cells[slot] = Some(cand);
                    }
                }
            }
        }
        if let Some(width) = cfg.beam {
            prune_to_beam(&mut trellis.cells[j * n_states..(j + 1) * n_states], width);
        }
    }

    let mut best: Option<(usize, Cell)> = None;
    for q in (0..n_states).filter(|&q| g.is_accepting(q)) {
        let Some(&cell) = trellis.get(last, q) else { continue };
        let better = match &best {
            None => true,
            Some((bq, b)) => match rank(cell.score, cell.segments, b.score, b.segments) {
                Ordering::Greater => true,
                Ordering::Less => false,
                Ordering::Equal => {
                    let (la, na, _) = trellis.path(last, q);
                    let (lb, nb, _) = trellis.path(last, *bq);
                    (la, na) < (lb, nb)
                }
            },
        };
        if better {
            best = Some((q, cell));
        }
    }
    let (q, cell) = best.ok_or_else(|| {
        Error::Infeasible(format!(
            "no accepted label sequence covers {frames} frames with stride {} and max segment length {}",
            cfg.stride, cfg.max_len
        ))
    })?;
    let (labels, lens, states) = trellis.path(last, q);
    Ok(DecodeResult {
        segmentation: Segmentation::new(labels.iter().copied().zip(lens).collect())?,
        log_score: cell.score,
        sequence: labels,
        automaton_path: states,
    })
}

fn prune_to_beam(row: &mut [Option<Cell>], width: usize) {
    let mut live: Vec<(usize, f64, u32)> = row
        .iter()
        .enumerate()
        .filter_map(|(q, c)| c.map(|c| (q, c.score, c.segments)))
        .collect();
    if live.len() <= width {
        return;
    }
    live.sort_by(|a, b| rank(b.1, b.2, a.1, a.2).then(a.0.cmp(&b.0)));
    for &(q, _, _) in &live[width..] {
        row[q] = None;
    }
}

/// Decodes against `G ∩ allowed*`, or `allowed*` when the intersection is empty.
pub fn decode_given_set<L: LengthScorer + ?Sized>(
    scores: &FrameScores,
    g: &GrammarAutomaton,
    lm: &L,
    cfg: &DecodeConfig,
    allowed: &BTreeSet<usize>,
) -> Result<DecodeResult> {
    if allowed.is_empty() {
        return Err(Error::Validation("allowed action set is empty".into()));
    }
    match g.restrict_to_set(allowed) {
        Some(restricted) => decode(scores, &restricted, lm, cfg),
        None => decode(scores, &GrammarAutomaton::free_loop(allowed.iter().copied()), lm, cfg),
    }
}

/// Recomputes the objective of a segmentation from scratch.
pub fn segmentation_score<L: LengthScorer + ?Sized>(scores: &FrameScores, lm: &L, seg: &Segmentation) -> f64 {
    seg.spans()
        .map(|(c, s, e)| lm.log_len(c, e + 1 - s) + scores.segment(s, e + 1, c))
        .sum()
}
