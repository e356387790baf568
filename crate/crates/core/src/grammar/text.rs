//! Class-to-class succession counts mined from free text.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use crate::corpus::ClassTable;
use crate::error::{Error, Result};

/// Counts `N(v, w)` of class `w` words following class `v` words, with the
/// row-normalized successor distribution `p(w|v)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BigramStats {
    num_classes: usize,
    counts: Vec<u64>,
}

impl BigramStats {
    pub fn zeros(num_classes: usize) -> Self {
        Self {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn add(&mut self, v: usize, w: usize, n: u64) {
        self.counts[v * self.num_classes + w] += n;
    }

    pub fn count(&self, v: usize, w: usize) -> u64 {
        self.counts[v * self.num_classes + w]
    }

    fn row_total(&self, v: usize) -> u64 {
        self.counts[v * self.num_classes..(v + 1) * self.num_classes].iter().sum()
    }

    /// Rows without any observation fall back to the uniform distribution.
    pub fn is_uniform_row(&self, v: usize) -> bool {
        self.row_total(v) == 0
    }

    pub fn prob(&self, v: usize, w: usize) -> f64 {
        let total = self.row_total(v);
        if total == 0 {
            1.0 / self.num_classes as f64
        } else {
            self.count(v, w) as f64 / total as f64
        }
    }
}

/// Splits text into sentences on `.!?;` and each sentence into lowercase
/// alphanumeric tokens. Underscores separate tokens as well.
pub fn tokenize_sentences(text: &str) -> Vec<Vec<String>> {
    text.split(['.', '!', '?', ';'])
        .map(|sentence| {
            sentence
                .split(|ch: char| !ch.is_alphanumeric())
                .filter(|t| !t.is_empty())
                .map(str::to_lowercase)
                .collect::<Vec<_>>()
        })
        .filter(|s| !s.is_empty())
        .collect()
}

/// For every token position belonging to class `v`, counts each other class
/// `w` with a token among the next `window` tokens of the same sentence.
pub fn mine_bigrams(texts: &[String], classes: &ClassTable, window: usize) -> Result<BigramStats> {
    if window == 0 {
        return Err(Error::Config("text window must be at least 1".into()));
    }
    let n = classes.len();
    let words: Vec<BTreeSet<String>> = classes
        .names()
        .iter()
        .map(|name| name.split('_').filter(|w| !w.is_empty()).map(str::to_lowercase).collect())
        .collect();
    let mut stats = BigramStats::zeros(n);
    for text in texts {
        for sentence in tokenize_sentences(text) {
            // classes[p] = classes that own token p
            let owners: Vec<Vec<usize>> = sentence
                .iter()
                .map(|tok| (0..n).filter(|&c| words[c].contains(tok)).collect())
                .collect();
            for p in 0..sentence.len() {
                if owners[p].is_empty() {
                    continue;
                }
                let ahead: BTreeSet<usize> = owners[p + 1..sentence.len().min(p + 1 + window)]
                    .iter()
                    .flatten()
                    .copied()
                    .collect();
                for &v in &owners[p] {
                    for &w in &ahead {
                        if w != v {
                            stats.add(v, w, 1);
                        }
                    }
                }
            }
        }
    }
    Ok(stats)
}

/// Writes nonzero counts as `v w count` lines using class names.
pub fn save_bigrams(path: &Path, stats: &BigramStats, classes: &ClassTable) -> Result<()> {
    let mut out = String::new();
    for v in 0..stats.num_classes() {
        for w in 0..stats.num_classes() {
            let n = stats.count(v, w);
            if n > 0 {
                out.push_str(&format!("{} {} {n}\n", classes.name(v), classes.name(w)));
            }
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_bigrams(path: &Path, classes: &ClassTable) -> Result<BigramStats> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut stats = BigramStats::zeros(classes.len());
    for (lineno, line) in text.lines().enumerate() {
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts[..] {
            [] => continue,
            [v, w, n] => {
                let id = |name: &str| {
                    classes
                        .id(name)
                        .ok_or_else(|| Error::parse(path, lineno + 1, format!("unknown class {name:?}")))
                };
                let n: u64 = n
                    .parse()
                    .map_err(|_| Error::parse(path, lineno + 1, format!("bad count {n:?}")))?;
                stats.add(id(v)?, id(w)?, n);
            }
            _ => return Err(Error::parse(path, lineno + 1, "expected `v w count`")),
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn classes(names: &[&str]) -> ClassTable {
        ClassTable::new(names.iter().map(|s| s.to_string()).collect(), 0).unwrap()
    }

    #[test]
    fn butter_before_egg() {
        let c = classes(&["butter_pan", "crack_egg"]);
        let s = mine_bigrams(&["Butter the pan, then crack an egg.".into()], &c, 10).unwrap();
        assert!(s.count(0, 1) >= 1);
        assert_eq!(s.prob(0, 1), 1.0);
        assert_eq!(s.count(1, 0), 0);
    }

    #[test]
    fn empty_text_is_uniform() {
        let c = classes(&["a_x", "b_y", "c_z"]);
        let s = mine_bigrams(&[], &c, 10).unwrap();
        for v in 0..3 {
            assert!(s.is_uniform_row(v));
            for w in 0..3 {
                assert!((s.prob(v, w) - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn order_and_window_and_sentences() {
        let c = classes(&["butter_pan", "crack_egg"]);
        // both `crack` and `egg` see `butter` ahead
        let s = mine_bigrams(&["crack the egg and butter".into()], &c, 10).unwrap();
        assert_eq!(s.count(1, 0), 2);
        assert_eq!(s.count(0, 1), 0);

        let s = mine_bigrams(&["butter one two three egg".into()], &c, 3).unwrap();
        assert_eq!(s.count(0, 1), 0);
        let s = mine_bigrams(&["butter one two egg".into()], &c, 3).unwrap();
        assert_eq!(s.count(0, 1), 1);

        let s = mine_bigrams(&["butter it. egg".into()], &c, 10).unwrap();
        assert_eq!(s.count(0, 1), 0);
    }

    #[test]
    fn zero_window_rejected() {
        assert!(mine_bigrams(&[], &classes(&["a"]), 0).is_err());
    }

    #[test]
    fn save_load_roundtrip() {
        let c = classes(&["butter_pan", "crack_egg", "pour_milk"]);
        let text = "butter the pan. crack an egg then pour milk; pour milk, crack egg".to_string();
        let s = mine_bigrams(&[text], &c, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bigrams.txt");
        save_bigrams(&p, &s, &c).unwrap();
        assert_eq!(load_bigrams(&p, &c).unwrap(), s);
    }
}
