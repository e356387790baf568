//! Training and inference glue shared by the CLI, the FFI layer and tests.

use std::collections::BTreeSet;
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::corpus::{Corpus, VideoRecord};
use crate::decoder::{decode, decode_given_set, DecodeConfig, DecodeResult, FrameScores, LengthScorer, NoLengthModel};
use crate::error::{Error, Result};
use crate::framenet::{compute_label_prior, compute_prior, train, FrameScorer, Supervision, TrainConfig};
use crate::grammar::{build_naive, mine_bigrams, sample_sequences, DrawPolicy, GrammarAutomaton, SampledSequence};
use crate::lengths::{estimate_loss_based, estimate_naive, estimate_sigma, LengthKind, LengthModel, MeanLengths};

macro_rules! keyword_enum {
    ($name:ident { $($variant:ident => $kw:literal),+ $(,)? }) => {
        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($kw => Ok(Self::$variant),)+
                    other => Err(Error::Config(format!(
                        concat!("unknown ", stringify!($name), " {:?}, expected one of: ", $($kw, " "),+),
                        other
                    ))),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self {
                    $(Self::$variant => $kw,)+
                })
            }
        }
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GrammarKind {
    Naive,
    #[default]
    MonteCarlo,
    Text,
    File,
}

keyword_enum!(GrammarKind { Naive => "naive", MonteCarlo => "monte-carlo", Text => "text", File => "file" });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MeanKind {
    Naive,
    #[default]
    Loss,
    File,
}

keyword_enum!(MeanKind { Naive => "naive", Loss => "loss", File => "file" });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InferMode {
    #[default]
    Free,
    GivenSets,
}

keyword_enum!(InferMode { Free => "free", GivenSets => "given-sets" });

/// Which of the two priors take part in decoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Ablation {
    #[default]
    Full,
    GrammarOnly,
    LengthOnly,
    Neither,
}

keyword_enum!(Ablation {
    Full => "full",
    GrammarOnly => "grammar-only",
    LengthOnly => "length-only",
    Neither => "neither",
});

pub enum GrammarSource {
    Naive,
    MonteCarlo,
    /// Raw text documents mined for class bigrams.
    Text { texts: Vec<String>, window: usize },
    Given(GrammarAutomaton),
}

pub enum LengthSource {
    Naive,
    Loss { l_min: f64 },
    /// A complete model read from disk; kind and sigma come with it.
    Given(LengthModel),
}

pub struct TrainSettings {
    pub grammar: GrammarSource,
    /// Number of sampled sequences for Monte-Carlo and text grammars and for sigma.
    pub samples: usize,
    pub lengths: LengthSource,
    pub length_kind: LengthKind,
    pub net: TrainConfig,
    pub seed: u64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            grammar: GrammarSource::MonteCarlo,
            samples: 1000,
            lengths: LengthSource::Loss { l_min: 50.0 },
            length_kind: LengthKind::Poisson,
            net: TrainConfig::default(),
            seed: 0,
        }
    }
}

pub struct TrainedModels {
    pub grammar: GrammarAutomaton,
    pub lengths: LengthModel,
    pub scorer: FrameScorer,
    pub loss_trace: Vec<f64>,
    /// Human-readable account of the run.
    pub log: String,
}

fn means_for(corpus: &Corpus, source: &LengthSource) -> Result<MeanLengths> {
    match source {
        LengthSource::Naive => estimate_naive(corpus),
        LengthSource::Loss { l_min } => estimate_loss_based(corpus, *l_min),
        LengthSource::Given(m) => {
            if m.num_classes() != corpus.num_classes() {
                return Err(Error::Validation(format!(
                    "length model covers {} classes, corpus has {}",
                    m.num_classes(),
                    corpus.num_classes()
                )));
            }
            Ok(MeanLengths::new(m.lambda().to_vec()))
        }
    }
}

/// Grammar, length model and estimated means, without the frame model.
pub struct Priors {
    pub grammar: GrammarAutomaton,
    pub lengths: LengthModel,
    pub means: MeanLengths,
}

/// Estimates the mean lengths, builds the grammar and fits the length model.
pub fn build_priors(corpus: &Corpus, settings: &TrainSettings) -> Result<Priors> {
    if corpus.videos.is_empty() {
        return Err(Error::Validation("training corpus is empty".into()));
    }
    let sets = corpus.set_summaries();
    let means = means_for(corpus, &settings.lengths)?;

    let draw = |policy| sample_sequences(&sets, &means.lambda, settings.samples, settings.seed, policy);
    let (grammar, samples): (GrammarAutomaton, Vec<SampledSequence>) = match &settings.grammar {
        GrammarSource::Naive => (build_naive(corpus), draw(DrawPolicy::Uniform)?),
        GrammarSource::MonteCarlo => {
            let s = draw(DrawPolicy::Uniform)?;
            (GrammarAutomaton::prefix_tree(s.iter().map(|q| &q.labels)), s)
        }
        GrammarSource::Text { texts, window } => {
            let stats = mine_bigrams(texts, &corpus.classes, *window)?;
            let s = draw(DrawPolicy::Bigram(&stats))?;
            (GrammarAutomaton::prefix_tree(s.iter().map(|q| &q.labels)), s)
        }
        GrammarSource::Given(g) => (g.clone(), draw(DrawPolicy::Uniform)?),
    };
    if let Some(&c) = grammar.alphabet().iter().find(|&&c| c >= corpus.num_classes()) {
        return Err(Error::Validation(format!("grammar uses class {c} outside the class table")));
    }

    let lengths = match &settings.lengths {
        LengthSource::Given(m) => m.clone(),
        _ => {
            let (sigma, _) = estimate_sigma(&sets, &samples, &means.lambda);
            LengthModel::new(settings.length_kind, means.lambda.clone(), sigma)?
        }
    };
    Ok(Priors { grammar, lengths, means })
}

/// Builds the priors and trains the frame scorer.
pub fn train_models(corpus: &Corpus, settings: &TrainSettings) -> Result<TrainedModels> {
    let Priors { grammar, lengths, means } = build_priors(corpus, settings)?;
    let mut log = String::new();
    let _ = writeln!(log, "videos {} frames {}", corpus.videos.len(), corpus.total_frames());
    let _ = writeln!(log, "grammar states {} edges {}", grammar.num_states(), grammar.edges().len());
    let _ = writeln!(log, "length kind {}", lengths.kind());
    for c in 0..corpus.num_classes() {
        let flag = if means.flagged.get(c).copied().unwrap_or(false) { " (fallback)" } else { "" };
        let _ = writeln!(
            log,
            "lambda {} {:.4} sigma {:.4}{flag}",
            corpus.classes.name(c),
            lengths.lambda()[c],
            lengths.sigma()[c]
        );
    }

    let outcome = train(corpus, &settings.net, settings.seed)?;
    let prior = match settings.net.supervision {
        Supervision::ActionSets => compute_prior(corpus)?,
        Supervision::GroundTruth => compute_label_prior(corpus)?,
    };
    for (epoch, loss) in outcome.loss_trace.iter().enumerate() {
        let _ = writeln!(log, "epoch {epoch} loss {loss:.6}");
    }
    Ok(TrainedModels {
        grammar,
        lengths,
        scorer: FrameScorer::new(outcome.net, prior)?,
        loss_trace: outcome.loss_trace,
        log,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InferSettings {
    pub mode: InferMode,
    pub ablation: Ablation,
    pub stride: usize,
    /// Overrides the length model's suggested limit.
    pub max_len: Option<usize>,
    pub beam: Option<usize>,
}

impl Default for InferSettings {
    fn default() -> Self {
        Self {
            mode: InferMode::Free,
            ablation: Ablation::Full,
            stride: 30,
            max_len: None,
            beam: None,
        }
    }
}

/// Decodes already computed frame scores.
pub fn decode_scores(
    scores: &FrameScores,
    grammar: &GrammarAutomaton,
    lengths: &LengthModel,
    allowed: Option<&BTreeSet<usize>>,
    settings: &InferSettings,
) -> Result<DecodeResult> {
    let frames = scores.frames();
    let mut cfg = match settings.max_len {
        Some(l) => DecodeConfig::with_limit(frames, settings.stride, l),
        None => DecodeConfig::for_model(frames, settings.stride, lengths),
    };
    cfg.beam = settings.beam;
    let free;
    let g = match settings.ablation {
        Ablation::Full | Ablation::GrammarOnly => grammar,
        Ablation::LengthOnly | Ablation::Neither => {
            free = GrammarAutomaton::free_loop(0..scores.num_classes());
            &free
        }
    };
    let lm: &dyn LengthScorer = match settings.ablation {
        Ablation::Full | Ablation::LengthOnly => lengths,
        Ablation::GrammarOnly | Ablation::Neither => &NoLengthModel,
    };
    match (settings.mode, allowed) {
        (InferMode::Free, _) => decode(scores, g, lm, &cfg),
        (InferMode::GivenSets, Some(set)) => decode_given_set(scores, g, lm, &cfg, set),
        (InferMode::GivenSets, None) => Err(Error::Config("given-sets inference needs an action set".into())),
    }
}

pub fn infer_video(models: &TrainedModels, video: &VideoRecord, settings: &InferSettings) -> Result<DecodeResult> {
    let scores = models.scorer.frame_log_scores(video)?;
    decode_scores(&scores, &models.grammar, &models.lengths, Some(&video.action_set), settings)
}
