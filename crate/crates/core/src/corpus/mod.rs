//! Corpus data model: class table, videos with weak labels, segmentations.

mod io;
mod synth;

pub use io::{
    load_corpus, load_corpus_dir, load_features, load_ground_truth, load_segmentation, read_classes,
    save_corpus, save_framewise, save_segmentation, write_features_binary, write_features_text,
};
pub use synth::{generate_synthetic, SynthConfig, SyntheticCorpus};

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use crate::error::{Error, Result};

/// Ordered list of class names. The index of a name is its class id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassTable {
    names: Vec<String>,
    background: usize,
    index: HashMap<String, usize>,
}

impl ClassTable {
    pub fn new(names: Vec<String>, background: usize) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Validation("class table is empty".into()));
        }
        if background >= names.len() {
            return Err(Error::Validation(format!(
                "background id {background} out of range for {} classes",
                names.len()
            )));
        }
        let mut index = HashMap::with_capacity(names.len());
        for (id, name) in names.iter().enumerate() {
            if name.is_empty() || name.chars().any(char::is_whitespace) {
                return Err(Error::Validation(format!("invalid class name {name:?}")));
            }
            if index.insert(name.clone(), id).is_some() {
                return Err(Error::Validation(format!("duplicate class name {name:?}")));
            }
        }
        Ok(Self {
            names,
            background,
            index,
        })
    }

    /// Builds a table, picking `background` by name if present and id 0 otherwise.
    pub fn with_default_background(names: Vec<String>) -> Result<Self> {
        let background = names.iter().position(|n| n == "background").unwrap_or(0);
        Self::new(names, background)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn background(&self) -> usize {
        self.background
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Parses whitespace-separated class names into ids.
    pub fn parse_sequence(&self, text: &str) -> Result<Vec<usize>> {
        text.split_whitespace()
            .map(|n| {
                self.id(n)
                    .ok_or_else(|| Error::Validation(format!("unknown class name {n:?}")))
            })
            .collect()
    }

    pub fn format_sequence(&self, seq: &[usize]) -> String {
        seq.iter()
            .map(|&c| self.name(c))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Row-major `T x d` matrix of frame features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Validation(format!(
                "feature matrix must be non-empty, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::Validation(format!(
                "feature matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Number of frames.
    pub fn frames(&self) -> usize {
        self.rows
    }

    /// Feature dimension.
    pub fn dim(&self) -> usize {
        self.cols
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.data[t * self.cols..(t + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoRecord {
    pub id: String,
    pub features: FeatureMatrix,
    /// The weak label: classes occurring somewhere in the video.
    pub action_set: BTreeSet<usize>,
    pub gt_labels: Option<Vec<usize>>,
}

impl VideoRecord {
    pub fn frames(&self) -> usize {
        self.features.frames()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// Frame count and action set of one video; all the estimators need.
#[derive(Debug, Clone, PartialEq)]
pub struct SetSummary {
    pub frames: usize,
    pub actions: Vec<usize>,
}

impl SetSummary {
    pub fn new(frames: usize, actions: impl IntoIterator<Item = usize>) -> Self {
        let actions: BTreeSet<usize> = actions.into_iter().collect();
        Self {
            frames,
            actions: actions.into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub classes: ClassTable,
    pub videos: Vec<VideoRecord>,
    pub split: Split,
}

impl Corpus {
    /// Checks the corpus-wide invariants and adds background to every action set.
    pub fn new(classes: ClassTable, mut videos: Vec<VideoRecord>, split: Split) -> Result<Self> {
        let dim = videos.first().map(|v| v.features.dim());
        for v in &mut videos {
            if Some(v.features.dim()) != dim {
                return Err(Error::Validation(format!(
                    "video {}: feature dimension {} differs from {}",
                    v.id,
                    v.features.dim(),
                    dim.unwrap_or_default()
                )));
            }
            v.action_set.insert(classes.background());
            if let Some(&c) = v.action_set.iter().find(|&&c| c >= classes.len()) {
                return Err(Error::Validation(format!(
                    "video {}: class id {c} not in class table",
                    v.id
                )));
            }
            if let Some(gt) = &v.gt_labels {
                if gt.len() != v.frames() {
                    return Err(Error::Validation(format!(
                        "video {}: {} ground-truth labels for {} frames",
                        v.id,
                        gt.len(),
                        v.frames()
                    )));
                }
                if gt.iter().any(|&c| c >= classes.len()) {
                    return Err(Error::Validation(format!(
                        "video {}: ground-truth label out of range",
                        v.id
                    )));
                }
            }
        }
        Ok(Self {
            classes,
            videos,
            split,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.videos.first().map(|v| v.features.dim())
    }

    pub fn total_frames(&self) -> usize {
        self.videos.iter().map(VideoRecord::frames).sum()
    }

    pub fn set_summaries(&self) -> Vec<SetSummary> {
        self.videos
            .iter()
            .map(|v| SetSummary::new(v.frames(), v.action_set.iter().copied()))
            .collect()
    }
}

/// A labeled partition of a video into consecutive segments.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Segmentation {
    /// `(class_id, length_frames)` in temporal order.
    pub segments: Vec<(usize, usize)>,
}

impl Segmentation {
    pub fn new(segments: Vec<(usize, usize)>) -> Result<Self> {
        if segments.iter().any(|&(_, l)| l == 0) {
            return Err(Error::Validation("segment of length 0".into()));
        }
        Ok(Self { segments })
    }

    /// Decomposes framewise labels into maximal runs.
    pub fn from_framewise(labels: &[usize]) -> Self {
        let mut segments: Vec<(usize, usize)> = Vec::new();
        for &c in labels {
            match segments.last_mut() {
                Some((last, len)) if *last == c => *len += 1,
                _ => segments.push((c, 1)),
            }
        }
        Self { segments }
    }

    pub fn total_frames(&self) -> usize {
        self.segments.iter().map(|&(_, l)| l).sum()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.segments.iter().map(|&(c, _)| c).collect()
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// `(class, start, end)` with inclusive 0-based frame bounds.
    pub fn spans(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.segments.iter().scan(0usize, |start, &(c, l)| {
            let s = *start;
            *start += l;
            Some((c, s, s + l - 1))
        })
    }

    pub fn to_framewise(&self) -> Vec<usize> {
        segmentation_to_framewise(self)
    }
}

pub fn segmentation_to_framewise(seg: &Segmentation) -> Vec<usize> {
    let mut out = Vec::with_capacity(seg.total_frames());
    for &(c, l) in &seg.segments {
        out.extend(std::iter::repeat_n(c, l));
    }
    out
}
