use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{Command, Common, Outcome, PipelineConfig};
use crate::corpus::{
    generate_synthetic, load_corpus_dir, load_segmentation, save_corpus, save_framewise, save_segmentation,
    ClassTable, Corpus, Split, SynthConfig,
};
use crate::error::{Error, Result};
use crate::framenet::{load_scorer, save_scorer, Supervision, TrainConfig};
use crate::grammar::{load_grammar, save_grammar, GrammarAutomaton};
use crate::lengths::{load_length_model, save_length_model, LengthKind};
use crate::metrics::{EvalReport, VideoEval};
use crate::pipeline::{
    build_priors, decode_scores, train_models, Ablation, GrammarKind, GrammarSource, InferMode, InferSettings, LengthSource,
    MeanKind, TrainSettings, TrainedModels,
};

const GRAMMAR_FILE: &str = "grammar.txt";
const LENGTHS_FILE: &str = "lengths.txt";
const MODEL_FILE: &str = "model.bin";
const LOG_FILE: &str = "train_log.txt";

pub(super) fn dispatch(command: Command) -> Result<Outcome> {
    match command {
        Command::Synth { out, common } => synth(&resolve(&common, &[])?, &out),
        Command::Train {
            corpus,
            out,
            grammar,
            grammar_file,
            text,
            length_mean,
            length_kind,
            lengths_file,
            common,
        } => {
            let cfg = resolve(
                &common,
                &[
                    ("grammar", grammar),
                    ("grammar_file", path_str(grammar_file)),
                    ("text", path_str(text)),
                    ("length_mean", length_mean),
                    ("length_kind", length_kind),
                    ("lengths_file", path_str(lengths_file)),
                ],
            )?;
            train(&cfg, &corpus, &out)
        }
        Command::Infer {
            corpus,
            model,
            out,
            mode,
            ablation,
            stride,
            max_len,
            common,
        } => {
            let cfg = resolve(
                &common,
                &[
                    ("mode", mode),
                    ("ablation", ablation),
                    ("stride", stride.map(|s| s.to_string())),
                    ("max_len", max_len.map(|s| s.to_string())),
                ],
            )?;
            infer(&cfg, &corpus, &model, &out)
        }
        Command::Eval { corpus, pred, out, common } => {
            let cfg = resolve(&common, &[])?;
            let out = out.unwrap_or_else(|| pred.join("eval"));
            eval(&cfg, &corpus, &pred, &out)
        }
        Command::Grammar {
            corpus,
            file,
            grammar,
            accepts,
            out,
            common,
        } => {
            let cfg = resolve(&common, &[("grammar", grammar)])?;
            grammar_cmd(&cfg, &corpus, file.as_deref(), accepts.as_deref(), out.as_deref())
        }
    }
}

fn path_str(p: Option<PathBuf>) -> Option<String> {
    p.map(|p| p.to_string_lossy().into_owned())
}

/// Defaults, then the config file, then `--set` overrides, then dedicated flags.
fn resolve(common: &Common, flags: &[(&str, Option<String>)]) -> Result<PipelineConfig> {
    let mut cfg = match &common.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    for spec in &common.overrides {
        cfg.apply_override(spec)?;
    }
    if let Some(seed) = common.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    Ok(cfg)
}

fn require_dir(path: &Path, what: &str) -> Result<()> {
    if !path.is_dir() {
        return Err(Error::Validation(format!("{what} directory {} does not exist", path.display())));
    }
    Ok(())
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        return Err(Error::Validation(format!("{what} file {} does not exist", path.display())));
    }
    Ok(())
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn synth(cfg: &PipelineConfig, out: &Path) -> Result<Outcome> {
    let seed: u64 = cfg.get("seed")?;
    let synth_cfg = SynthConfig {
        dim: cfg.get("dim")?,
        separation: cfg.get("separation")?,
        noise_sigma: cfg.get("noise_sigma")?,
        num_train: cfg.get("num_train")?,
        num_test: cfg.get("num_test")?,
        ..SynthConfig::default()
    };
    let binary: bool = cfg.get("binary_features")?;
    synth_cfg.validate()?;
    let data = generate_synthetic(&synth_cfg, seed)?;
    create_dir(out)?;
    save_corpus(&data.train, &out.join("train"), binary)?;
    save_corpus(&data.test, &out.join("test"), binary)?;
    let mut manifest = format!(
        "seed {seed}\ntrain_videos {}\ntest_videos {}\ndim {}\nseparation {}\nnoise_sigma {}\n",
        data.train.videos.len(),
        data.test.videos.len(),
        synth_cfg.dim,
        synth_cfg.separation,
        synth_cfg.noise_sigma
    );
    for (c, name) in synth_cfg.class_names.iter().enumerate() {
        manifest.push_str(&format!("mean_length {name} {}\n", synth_cfg.mean_lengths[c]));
    }
    write(&out.join("manifest.txt"), &manifest)?;
    cfg.write_to(out)?;
    Ok(Outcome::Success)
}

fn read_texts(path: &Path) -> Result<Vec<String>> {
    let read = |p: &Path| fs::read_to_string(p).map_err(|e| Error::io(p, e));
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        files.sort();
        files.iter().map(|p| read(p)).collect()
    } else {
        Ok(vec![read(path)?])
    }
}

fn train_settings(cfg: &PipelineConfig, classes: &ClassTable) -> Result<TrainSettings> {
    let kind: GrammarKind = cfg.get("grammar")?;
    let grammar = match kind {
        GrammarKind::Naive => GrammarSource::Naive,
        GrammarKind::MonteCarlo => GrammarSource::MonteCarlo,
        GrammarKind::Text => {
            let path = cfg
                .path("text")
                .ok_or_else(|| Error::Config("grammar `text` needs a text path (key `text`)".into()))?;
            if !path.exists() {
                return Err(Error::Validation(format!("text source {} does not exist", path.display())));
            }
            GrammarSource::Text {
                texts: read_texts(&path)?,
                window: cfg.get("window")?,
            }
        }
        GrammarKind::File => {
            let path = cfg
                .path("grammar_file")
                .ok_or_else(|| Error::Config("grammar `file` needs key `grammar_file`".into()))?;
            require_file(&path, "grammar")?;
            GrammarSource::Given(load_grammar(&path, classes)?)
        }
    };
    let lengths = match cfg.get::<MeanKind>("length_mean")? {
        MeanKind::Naive => LengthSource::Naive,
        MeanKind::Loss => LengthSource::Loss { l_min: cfg.get("l_min")? },
        MeanKind::File => {
            let path = cfg
                .path("lengths_file")
                .ok_or_else(|| Error::Config("length_mean `file` needs key `lengths_file`".into()))?;
            require_file(&path, "length model")?;
            LengthSource::Given(load_length_model(&path, classes)?)
        }
    };
    let supervision = match cfg.raw("supervision") {
        "sets" => Supervision::ActionSets,
        "gt" => Supervision::GroundTruth,
        other => return Err(Error::Config(format!("supervision {other:?}, expected sets or gt"))),
    };
    let samples: usize = cfg.get("samples")?;
    if samples == 0 {
        return Err(Error::Config("samples must be at least 1".into()));
    }
    Ok(TrainSettings {
        grammar,
        samples,
        lengths,
        length_kind: cfg.get::<LengthKind>("length_kind")?,
        net: TrainConfig {
            hidden: cfg.get("hidden")?,
            epochs: cfg.get("epochs")?,
            batch_size: cfg.get("batch_size")?,
            learning_rate: cfg.get("learning_rate")?,
            frame_stride: cfg.get("frame_stride")?,
            supervision,
        },
        seed: cfg.get("seed")?,
    })
}

fn train(cfg: &PipelineConfig, corpus_dir: &Path, out: &Path) -> Result<Outcome> {
    require_dir(corpus_dir, "corpus")?;
    let corpus = load_corpus_dir(corpus_dir, Split::Train)?;
    let settings = train_settings(cfg, &corpus.classes)?;
    let models = train_models(&corpus, &settings)?;
    create_dir(out)?;
    save_grammar(&out.join(GRAMMAR_FILE), &models.grammar, &corpus.classes)?;
    save_length_model(&out.join(LENGTHS_FILE), &models.lengths, &corpus.classes)?;
    save_scorer(&out.join(MODEL_FILE), &models.scorer)?;
    write(&out.join(LOG_FILE), &format!("seed {}\n{}", settings.seed, models.log))?;
    cfg.write_to(out)?;
    Ok(Outcome::Success)
}

fn load_models(dir: &Path, classes: &ClassTable) -> Result<TrainedModels> {
    for name in [GRAMMAR_FILE, LENGTHS_FILE, MODEL_FILE] {
        require_file(&dir.join(name), "model artifact")?;
    }
    let scorer = load_scorer(&dir.join(MODEL_FILE))?;
    if scorer.net.num_classes() != classes.len() {
        return Err(Error::Validation(format!(
            "{}: model has {} classes, corpus has {}",
            dir.join(MODEL_FILE).display(),
            scorer.net.num_classes(),
            classes.len()
        )));
    }
    Ok(TrainedModels {
        grammar: load_grammar(&dir.join(GRAMMAR_FILE), classes)?,
        lengths: load_length_model(&dir.join(LENGTHS_FILE), classes)?,
        scorer,
        loss_trace: Vec::new(),
        log: String::new(),
    })
}

fn infer_settings(cfg: &PipelineConfig) -> Result<InferSettings> {
    let s = InferSettings {
        mode: cfg.get::<InferMode>("mode")?,
        ablation: cfg.get::<Ablation>("ablation")?,
        stride: cfg.get("stride")?,
        max_len: cfg.get_opt("max_len")?,
        beam: cfg.get_opt("beam")?,
    };
    if s.stride == 0 {
        return Err(Error::Config("stride must be at least 1".into()));
    }
    Ok(s)
}

fn infer(cfg: &PipelineConfig, corpus_dir: &Path, model_dir: &Path, out: &Path) -> Result<Outcome> {
    require_dir(corpus_dir, "corpus")?;
    require_dir(model_dir, "model")?;
    let settings = infer_settings(cfg)?;
    let corpus = load_corpus_dir(corpus_dir, Split::Test)?;
    let models = load_models(model_dir, &corpus.classes)?;
    if let Some(d) = corpus.feature_dim() {
        if d != models.scorer.net.dim() {
            return Err(Error::Validation(format!(
                "corpus features have dimension {d}, model expects {}",
                models.scorer.net.dim()
            )));
        }
    }

    let results: Vec<Result<_>> = corpus
        .videos
        .par_iter()
        .map(|v| {
            let scores = models.scorer.frame_log_scores(v)?;
            decode_scores(&scores, &models.grammar, &models.lengths, Some(&v.action_set), &settings)
        })
        .collect();

    create_dir(out)?;
    let mut summary = String::new();
    let mut failed = 0;
    for (v, r) in corpus.videos.iter().zip(&results) {
        match r {
            Ok(r) => {
                save_segmentation(&out.join(format!("{}.seg", v.id)), &r.segmentation, &corpus.classes)?;
                save_framewise(
                    &out.join(format!("{}.labels", v.id)),
                    &r.segmentation.to_framewise(),
                    &corpus.classes,
                )?;
                summary.push_str(&format!("{} {:.6}\n", v.id, r.log_score));
            }
            Err(e) => {
                failed += 1;
                eprintln!("warning: video {} skipped: {e}", v.id);
                summary.push_str(&format!("{} failed: {e}\n", v.id));
            }
        }
    }
    write(&out.join("scores.txt"), &summary)?;
    cfg.write_to(out)?;
    match failed {
        0 => Ok(Outcome::Success),
        n if n == corpus.videos.len() && n > 0 => Err(Error::Infeasible(format!("all {n} videos failed to decode"))),
        _ => Ok(Outcome::Partial),
    }
}

fn metric_lines(report: &EvalReport, selection: &str) -> Result<String> {
    let mut keep: Vec<&str> = vec!["videos", "frames", "segments"];
    for m in selection.split(',').map(str::trim).filter(|m| !m.is_empty()) {
        keep.push(match m {
            "accuracy" => "frame_accuracy",
            "midpoint" => "midpoint_hit",
            "jaccard" => "jaccard_iou",
            other => return Err(Error::Config(format!("unknown metric {other:?}"))),
        });
    }
    Ok(report
        .key_values()
        .lines()
        .filter(|l| keep.iter().any(|k| l.starts_with(k)))
        .map(|l| format!("{l}\n"))
        .collect())
}

pub(crate) fn evaluate_dir(corpus: &Corpus, pred: &Path) -> Result<(EvalReport, Vec<String>)> {
    let mut videos = Vec::new();
    let mut missing = Vec::new();
    for v in &corpus.videos {
        let Some(gt) = &v.gt_labels else { continue };
        let path = pred.join(format!("{}.seg", v.id));
        if !path.is_file() {
            missing.push(v.id.clone());
            continue;
        }
        let seg = load_segmentation(&path, &corpus.classes)?;
        videos.push(VideoEval::compute(&v.id, &seg, gt, &corpus.classes)?);
    }
    Ok((EvalReport::new(videos), missing))
}

fn eval(cfg: &PipelineConfig, corpus_dir: &Path, pred: &Path, out: &Path) -> Result<Outcome> {
    require_dir(corpus_dir, "corpus")?;
    require_dir(pred, "prediction")?;
    let has_predictions = fs::read_dir(pred)
        .map_err(|e| Error::io(pred, e))?
        .filter_map(|e| e.ok())
        .any(|e| e.path().extension().is_some_and(|x| x == "seg"));
    if !has_predictions {
        return Err(Error::Validation(format!("no .seg predictions in {}", pred.display())));
    }
    let selection = cfg.raw("metrics").to_string();
    let corpus = load_corpus_dir(corpus_dir, Split::Test)?;
    let (report, missing) = evaluate_dir(&corpus, pred)?;
    for id in &missing {
        eprintln!("warning: no prediction for video {id}; excluded");
    }
    if report.videos.is_empty() {
        return Err(Error::Validation("no predicted video has ground truth".into()));
    }
    let lines = metric_lines(&report, &selection)?;
    let table = report.table();
    print!("{table}\n{lines}");
    create_dir(out)?;
    write(&out.join("report.txt"), &table)?;
    write(&out.join("metrics.txt"), &lines)?;
    cfg.write_to(out)?;
    Ok(Outcome::Success)
}

fn grammar_cmd(
    cfg: &PipelineConfig,
    corpus_dir: &Path,
    file: Option<&Path>,
    accepts: Option<&str>,
    out: Option<&Path>,
) -> Result<Outcome> {
    require_dir(corpus_dir, "corpus")?;
    let corpus = load_corpus_dir(corpus_dir, Split::Train)?;
    let query = accepts.map(|s| corpus.classes.parse_sequence(s)).transpose()?;
    let g: GrammarAutomaton = match file {
        Some(path) => {
            require_file(path, "grammar")?;
            load_grammar(path, &corpus.classes)?
        }
        None => {
            let settings = train_settings(cfg, &corpus.classes)?;
            build_priors(&corpus, &settings)?.grammar
        }
    };
    println!("states {}", g.num_states());
    println!("edges {}", g.edges().len());
    if g.is_acyclic() {
        let longest = g.num_states();
        let count = g.enumerate_sequences(longest, usize::MAX)?.len();
        println!("sequences {count}");
    } else {
        println!("sequences unbounded");
    }
    if let (Some(seq), Some(text)) = (query, accepts) {
        println!("accepts \"{text}\" {}", g.accepts(&seq));
    }
    if let Some(path) = out {
        save_grammar(path, &g, &corpus.classes)?;
    }
    Ok(Outcome::Success)
}
