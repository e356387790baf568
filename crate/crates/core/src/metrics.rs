//! Frame accuracy, midpoint hit and Jaccard index.
//!
//! Midpoint hit and IoU ignore the background class. Frame accuracy counts
//! every frame.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::corpus::{ClassTable, Segmentation};
use crate::error::{Error, Result};

fn same_length(pred: usize, gt: usize) -> Result<()> {
    if pred != gt {
        return Err(Error::Validation(format!(
            "prediction covers {pred} frames, ground truth {gt}"
        )));
    }
    Ok(())
}

pub fn frame_accuracy(pred: &[usize], gt: &[usize]) -> Result<f64> {
    same_length(pred.len(), gt.len())?;
    if gt.is_empty() {
        return Ok(1.0);
    }
    let hits = pred.iter().zip(gt).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / gt.len() as f64)
}

/// Greedy temporal matching of predicted segment midpoints into unmatched
/// ground-truth segments of the same class. Returns `(hits / predicted,
/// matched / ground truth)` over non-background segments.
pub fn midpoint_hit(pred: &Segmentation, gt: &Segmentation, background: usize) -> Result<(f64, f64)> {
    same_length(pred.total_frames(), gt.total_frames())?;
    let gt_spans: Vec<(usize, usize, usize)> = gt.spans().filter(|s| s.0 != background).collect();
    let mut matched = vec![false; gt_spans.len()];
    let mut predicted = 0;
    let mut hits = 0;
    for (c, s, e) in pred.spans().filter(|s| s.0 != background) {
        predicted += 1;
        let mid = (s + e) / 2;
        let found = gt_spans
            .iter()
            .enumerate()
            .find(|(i, g)| !matched[*i] && g.0 == c && g.1 <= mid && mid <= g.2);
        if let Some((i, _)) = found {
            matched[i] = true;
            hits += 1;
        }
    }
    let rate = |num: usize, den: usize, other: usize| {
        if den == 0 {
            if other == 0 { 1.0 } else { 0.0 }
        } else {
            num as f64 / den as f64
        }
    };
    Ok((rate(hits, predicted, gt_spans.len()), rate(hits, gt_spans.len(), predicted)))
}

/// Mean IoU over the non-background classes occurring in `gt`.
pub fn jaccard_iou(pred: &[usize], gt: &[usize], classes: &ClassTable) -> Result<f64> {
    same_length(pred.len(), gt.len())?;
    let present: BTreeSet<usize> = gt.iter().copied().filter(|&c| c != classes.background()).collect();
    if present.is_empty() {
        let clean = pred.iter().all(|&c| c == classes.background());
        return Ok(if clean { 1.0 } else { 0.0 });
    }
    let total: f64 = present
        .iter()
        .map(|&c| {
            let inter = pred.iter().zip(gt).filter(|(p, g)| **p == c && **g == c).count();
            let union = pred.iter().zip(gt).filter(|(p, g)| **p == c || **g == c).count();
            inter as f64 / union as f64
        })
        .sum();
    Ok(total / present.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoEval {
    pub id: String,
    pub frames: usize,
    pub segments: usize,
    pub frame_accuracy: f64,
    pub midpoint_precision: f64,
    pub midpoint_recall: f64,
    pub jaccard: f64,
}

impl VideoEval {
    pub fn compute(id: &str, pred: &Segmentation, gt: &[usize], classes: &ClassTable) -> Result<Self> {
        let pred_frames = pred.to_framewise();
        let gt_seg = Segmentation::from_framewise(gt);
        let (p, r) = midpoint_hit(pred, &gt_seg, classes.background())?;
        Ok(Self {
            id: id.to_string(),
            frames: gt.len(),
            segments: pred.len(),
            frame_accuracy: frame_accuracy(&pred_frames, gt)?,
            midpoint_precision: p,
            midpoint_recall: r,
            jaccard: jaccard_iou(&pred_frames, gt, classes)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub videos: Vec<VideoEval>,
}

impl EvalReport {
    pub fn new(videos: Vec<VideoEval>) -> Self {
        Self { videos }
    }

    pub fn total_frames(&self) -> usize {
        self.videos.iter().map(|v| v.frames).sum()
    }

    /// Frame accuracy pooled over all frames.
    pub fn frame_accuracy(&self) -> f64 {
        let frames = self.total_frames();
        if frames == 0 {
            return 0.0;
        }
        self.videos.iter().map(|v| v.frame_accuracy * v.frames as f64).sum::<f64>() / frames as f64
    }

    fn mean(&self, f: impl Fn(&VideoEval) -> f64) -> f64 {
        if self.videos.is_empty() {
            return 0.0;
        }
        self.videos.iter().map(f).sum::<f64>() / self.videos.len() as f64
    }

    pub fn mean_frame_accuracy(&self) -> f64 {
        self.mean(|v| v.frame_accuracy)
    }

    pub fn midpoint_hit(&self) -> f64 {
        self.mean(|v| v.midpoint_precision)
    }

    pub fn midpoint_recall(&self) -> f64 {
        self.mean(|v| v.midpoint_recall)
    }

    pub fn jaccard(&self) -> f64 {
        self.mean(|v| v.jaccard)
    }

    pub fn key_values(&self) -> String {
        let segments: usize = self.videos.iter().map(|v| v.segments).sum();
        format!(
            "videos={}\nframes={}\nsegments={}\nframe_accuracy={:.6}\nframe_accuracy_video_mean={:.6}\nmidpoint_hit={:.6}\nmidpoint_hit_recall={:.6}\njaccard_iou={:.6}\n",
            self.videos.len(),
            self.total_frames(),
            segments,
            self.frame_accuracy(),
            self.mean_frame_accuracy(),
            self.midpoint_hit(),
            self.midpoint_recall(),
            self.jaccard(),
        )
    }

    pub fn table(&self) -> String {
        let width = self.videos.iter().map(|v| v.id.len()).max().unwrap_or(0).max(5);
        let mut out = format!(
            "{:<width$}  {:>7}  {:>5}  {:>8}  {:>8}  {:>8}  {:>8}\n",
            "video", "frames", "segs", "acc", "mid_p", "mid_r", "iou"
        );
        let mut row = |id: &str, frames: usize, segs: usize, vals: [f64; 4]| {
            let _ = writeln!(
                out,
                "{id:<width$}  {frames:>7}  {segs:>5}  {:>8.4}  {:>8.4}  {:>8.4}  {:>8.4}",
                vals[0], vals[1], vals[2], vals[3]
            );
        };
        for v in &self.videos {
            row(&v.id, v.frames, v.segments, [v.frame_accuracy, v.midpoint_precision, v.midpoint_recall, v.jaccard]);
        }
        let segments = self.videos.iter().map(|v| v.segments).sum();
        row(
            "TOTAL",
            self.total_frames(),
            segments,
            [self.frame_accuracy(), self.midpoint_hit(), self.midpoint_recall(), self.jaccard()],
        );
        out
    }
}
