use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::{ClassTable, Corpus, FeatureMatrix, Segmentation, Split, VideoRecord};
use crate::error::{Error, Result};

const FEATURE_MAGIC: &[u8; 7] = b"SSFEAT1";
const BACKGROUND_MARK: &str = "#background";

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads `classes.txt`: one name per line, optional ` #background` marker.
pub fn read_classes(path: &Path) -> Result<ClassTable> {
    let text = read_to_string(path)?;
    let mut names = Vec::new();
    let mut marked = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let name = parts.next().unwrap_or_default();
        match parts.next() {
            None => {}
            Some(BACKGROUND_MARK) if parts.next().is_none() => {
                if marked.replace(names.len()).is_some() {
                    return Err(Error::parse(path, lineno + 1, "second background marker"));
                }
            }
            Some(other) => {
                return Err(Error::parse(
                    path,
                    lineno + 1,
                    format!("unexpected token {other:?} after class name"),
                ))
            }
        }
        names.push(name.to_string());
    }
    let table = match marked {
        Some(bg) => ClassTable::new(names, bg),
        None => ClassTable::with_default_background(names),
    };
    table.map_err(|e| match e {
        Error::Validation(m) => Error::parse(path, 0, m),
        other => other,
    })
}

fn write_classes(path: &Path, classes: &ClassTable) -> Result<()> {
    let mut out = String::new();
    for (id, name) in classes.names().iter().enumerate() {
        out.push_str(name);
        if id == classes.background() {
            out.push(' ');
            out.push_str(BACKGROUND_MARK);
        }
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

/// Loads a feature file in either the text or the `SSFEAT1` binary layout.
pub fn load_features(path: &Path) -> Result<FeatureMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(FEATURE_MAGIC) {
        parse_binary_features(path, &bytes[FEATURE_MAGIC.len()..])
    } else {
        let text = std::str::from_utf8(&bytes)
            .map_err(|_| Error::parse(path, 1, "neither SSFEAT1 binary nor UTF-8 text"))?;
        parse_text_features(path, text)
    }
}

fn parse_binary_features(path: &Path, body: &[u8]) -> Result<FeatureMatrix> {
    if body.len() < 8 {
        return Err(Error::parse(path, 1, "truncated binary header"));
    }
    let rows = u32::from_le_bytes(body[0..4].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(body[4..8].try_into().unwrap()) as usize;
    let payload = &body[8..];
    if payload.len() != rows * cols * 4 {
        return Err(Error::parse(
            path,
            1,
            format!(
                "binary payload holds {} bytes, header {rows}x{cols} needs {}",
                payload.len(),
                rows * cols * 4
            ),
        ));
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    FeatureMatrix::new(rows, cols, data).map_err(|e| Error::parse(path, 1, e.to_string()))
}

fn parse_text_features(path: &Path, text: &str) -> Result<FeatureMatrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty feature file"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::parse(path, 1, "header must be `T d`"))?;
    let [rows, cols] = dims[..] else {
        return Err(Error::parse(path, 1, "header must be `T d`"));
    };
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for (lineno, line) in lines {
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f32 = tok
                .parse()
                .map_err(|_| Error::parse(path, lineno + 1, format!("bad number {tok:?}")))?;
            data.push(v);
        }
        if data.len() - before != cols {
            return Err(Error::parse(
                path,
                lineno + 1,
                format!("expected {cols} values, got {}", data.len() - before),
            ));
        }
        seen += 1;
    }
    if seen != rows {
        return Err(Error::parse(
            path,
            1,
            format!("header announces {rows} frames, file has {seen}"),
        ));
    }
    FeatureMatrix::new(rows, cols, data).map_err(|e| Error::parse(path, 1, e.to_string()))
}

pub fn write_features_text(path: &Path, m: &FeatureMatrix) -> Result<()> {
    let mut out = String::with_capacity(m.as_slice().len() * 10);
    out.push_str(&format!("{} {}\n", m.frames(), m.dim()));
    for t in 0..m.frames() {
        let row: Vec<String> = m.row(t).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

pub fn write_features_binary(path: &Path, m: &FeatureMatrix) -> Result<()> {
    let mut out = Vec::with_capacity(15 + m.as_slice().len() * 4);
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&(m.frames() as u32).to_le_bytes());
    out.extend_from_slice(&(m.dim() as u32).to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    write_file(path, &out)
}

fn parse_action_sets(
    path: &Path,
    classes: &ClassTable,
) -> Result<Vec<(String, BTreeSet<usize>)>> {
    let text = read_to_string(path)?;
    let mut out: Vec<(String, BTreeSet<usize>)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (id, rest) = line
            .split_once(':')
            .ok_or_else(|| Error::parse(path, lineno + 1, "expected `<video_id>: <names>`"))?;
        let id = id.trim();
        if id.is_empty() {
            return Err(Error::parse(path, lineno + 1, "empty video id"));
        }
        if out.iter().any(|(v, _)| v == id) {
            return Err(Error::parse(path, lineno + 1, format!("duplicate video {id:?}")));
        }
        let mut set = BTreeSet::new();
        for name in rest.split_whitespace() {
            let c = classes.id(name).ok_or_else(|| {
                Error::Validation(format!(
                    "{}:{}: unknown class name {name:?}",
                    path.display(),
                    lineno + 1
                ))
            })?;
            set.insert(c);
        }
        out.push((id.to_string(), set));
    }
    Ok(out)
}

fn feature_path(dir: &Path, id: &str) -> std::path::PathBuf {
    dir.join(format!("{id}.feat"))
}

/// Loads videos listed in `annotations_file`, one `<id>.feat` per video.
pub fn load_corpus(features_dir: &Path, annotations_file: &Path, classes_file: &Path) -> Result<Corpus> {
    let classes = read_classes(classes_file)?;
    let sets = parse_action_sets(annotations_file, &classes)?;
    let mut videos = Vec::with_capacity(sets.len());
    for (id, action_set) in sets {
        let features = load_features(&feature_path(features_dir, &id))?;
        videos.push(VideoRecord {
            id,
            features,
            action_set,
            gt_labels: None,
        });
    }
    Corpus::new(classes, videos, Split::Train)
}

/// Attaches `groundtruth/<id>.txt` labels for every video that has one.
pub fn load_ground_truth(corpus: &mut Corpus, gt_dir: &Path) -> Result<usize> {
    let mut loaded = 0;
    for v in &mut corpus.videos {
        let path = gt_dir.join(format!("{}.txt", v.id));
        if !path.exists() {
            continue;
        }
        let text = read_to_string(&path)?;
        let mut labels = Vec::with_capacity(v.frames());
        for (lineno, line) in text.lines().enumerate() {
            let name = line.trim();
            if name.is_empty() {
                continue;
            }
            let c = corpus.classes.id(name).ok_or_else(|| {
                Error::Validation(format!(
                    "{}:{}: unknown class name {name:?}",
                    path.display(),
                    lineno + 1
                ))
            })?;
            labels.push(c);
        }
        if labels.len() != v.frames() {
            return Err(Error::Validation(format!(
                "{}: {} labels for {} frames",
                path.display(),
                labels.len(),
                v.frames()
            )));
        }
        v.gt_labels = Some(labels);
        loaded += 1;
    }
    Ok(loaded)
}

/// Loads the standard directory layout: `classes.txt`, `actionsets.txt`,
/// `features/` and an optional `groundtruth/`.
pub fn load_corpus_dir(dir: &Path, split: Split) -> Result<Corpus> {
    let mut corpus = load_corpus(
        &dir.join("features"),
        &dir.join("actionsets.txt"),
        &dir.join("classes.txt"),
    )?;
    corpus.split = split;
    let gt = dir.join("groundtruth");
    if gt.is_dir() {
        load_ground_truth(&mut corpus, &gt)?;
    }
    Ok(corpus)
}

/// Writes a corpus in the layout read by [`load_corpus_dir`].
pub fn save_corpus(corpus: &Corpus, dir: &Path, binary_features: bool) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_classes(&dir.join("classes.txt"), &corpus.classes)?;
    let mut sets = Vec::new();
    for v in &corpus.videos {
        let names: Vec<&str> = v.action_set.iter().map(|&c| corpus.classes.name(c)).collect();
        writeln!(sets, "{}: {}", v.id, names.join(" ")).unwrap();
        let fpath = feature_path(&dir.join("features"), &v.id);
        if binary_features {
            write_features_binary(&fpath, &v.features)?;
        } else {
            write_features_text(&fpath, &v.features)?;
        }
        if let Some(gt) = &v.gt_labels {
            let mut out = String::with_capacity(gt.len() * 8);
            for &c in gt {
                out.push_str(corpus.classes.name(c));
                out.push('\n');
            }
            write_file(&dir.join("groundtruth").join(format!("{}.txt", v.id)), out.as_bytes())?;
        }
    }
    write_file(&dir.join("actionsets.txt"), &sets)
}

/// Writes `<class_name> <length>` per segment.
pub fn save_segmentation(path: &Path, seg: &Segmentation, classes: &ClassTable) -> Result<()> {
    let mut out = String::new();
    for &(c, len) in &seg.segments {
        out.push_str(&format!("{} {len}\n", classes.name(c)));
    }
    write_file(path, out.as_bytes())
}

pub fn load_segmentation(path: &Path, classes: &ClassTable) -> Result<Segmentation> {
    let text = read_to_string(path)?;
    let mut segments = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        let [name, len] = toks[..] else {
            return Err(Error::parse(path, i + 1, "expected `class length`"));
        };
        let c = classes
            .id(name)
            .ok_or_else(|| Error::parse(path, i + 1, format!("unknown class name {name:?}")))?;
        let len: usize = len
            .parse()
            .map_err(|_| Error::parse(path, i + 1, format!("bad length {len:?}")))?;
        segments.push((c, len));
    }
    Segmentation::new(segments).map_err(|e| Error::parse(path, 0, e.to_string()))
}

/// One class name per frame.
pub fn save_framewise(path: &Path, labels: &[usize], classes: &ClassTable) -> Result<()> {
    let mut out = String::with_capacity(labels.len() * 8);
    for &c in labels {
        out.push_str(classes.name(c));
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}
