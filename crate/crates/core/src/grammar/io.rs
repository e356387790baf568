//! Grammar files.
//!
//! Finite grammars are written as one space-separated sequence of class names
//! per line and compiled back into a prefix tree. Grammars with loops use an
//! explicit automaton listing introduced by a `#automaton` line:
//!
//! ```text
//! #automaton
//! states 3
//! start 0
//! accepting 0 1 2
//! edge 0 crack_egg 1
//! ```

use std::fs;
use std::path::Path;

use super::{Edge, GrammarAutomaton};
use crate::corpus::ClassTable;
use crate::error::{Error, Result};

const AUTOMATON_HEADER: &str = "#automaton";
const MAX_WRITTEN_SEQUENCES: usize = 1_000_000;

pub fn write_grammar(g: &GrammarAutomaton, classes: &ClassTable) -> String {
    if g.is_acyclic() {
        if let Ok(seqs) = g.enumerate_sequences(g.num_states(), MAX_WRITTEN_SEQUENCES) {
            let mut out = String::new();
            for s in seqs {
                out.push_str(&classes.format_sequence(&s));
                out.push('\n');
            }
            return out;
        }
    }
    let mut out = format!("{AUTOMATON_HEADER}\nstates {}\nstart {}\naccepting", g.num_states(), g.start());
    for s in (0..g.num_states()).filter(|&s| g.is_accepting(s)) {
        out.push_str(&format!(" {s}"));
    }
    out.push('\n');
    for e in g.edges() {
        out.push_str(&format!("edge {} {} {}\n", e.from, classes.name(e.label), e.to));
    }
    out
}

pub fn save_grammar(path: &Path, g: &GrammarAutomaton, classes: &ClassTable) -> Result<()> {
    fs::write(path, write_grammar(g, classes)).map_err(|e| Error::io(path, e))
}

pub fn load_grammar(path: &Path, classes: &ClassTable) -> Result<GrammarAutomaton> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_grammar(path, &text, classes)
}

pub fn parse_grammar(path: &Path, text: &str, classes: &ClassTable) -> Result<GrammarAutomaton> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let Some((first_no, first)) = lines.next() else {
        return Err(Error::parse(path, 1, "empty grammar file"));
    };
    let class_id = |lineno: usize, name: &str| {
        classes
            .id(name)
            .ok_or_else(|| Error::parse(path, lineno, format!("unknown class name {name:?}")))
    };

    if first != AUTOMATON_HEADER {
        let mut seqs = Vec::new();
        for (lineno, line) in std::iter::once((first_no, first)).chain(lines) {
            let seq = line
                .split_whitespace()
                .map(|n| class_id(lineno, n))
                .collect::<Result<Vec<_>>>()?;
            seqs.push(seq);
        }
        return Ok(GrammarAutomaton::prefix_tree(seqs));
    }

    let number = |lineno: usize, tok: &str| {
        tok.parse::<usize>()
            .map_err(|_| Error::parse(path, lineno, format!("expected a state number, got {tok:?}")))
    };
    let (mut states, mut start, mut accepting_ids, mut edges) = (None, None, Vec::new(), Vec::new());
    for (lineno, line) in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks[..] {
            ["states", n] => states = Some(number(lineno, n)?),
            ["start", s] => start = Some(number(lineno, s)?),
            ["accepting", ref rest @ ..] => {
                for s in rest {
                    accepting_ids.push(number(lineno, s)?);
                }
            }
            ["edge", from, label, to] => edges.push(Edge {
                from: number(lineno, from)?,
                label: class_id(lineno, label)?,
                to: number(lineno, to)?,
            }),
            _ => return Err(Error::parse(path, lineno, format!("unrecognized line {line:?}"))),
        }
    }
    let states = states.ok_or_else(|| Error::parse(path, first_no, "missing `states` line"))?;
    let start = start.ok_or_else(|| Error::parse(path, first_no, "missing `start` line"))?;
    let mut accepting = vec![false; states];
    for s in accepting_ids {
        *accepting
            .get_mut(s)
            .ok_or_else(|| Error::parse(path, first_no, format!("accepting state {s} out of range")))? = true;
    }
    GrammarAutomaton::new(states, start, accepting, edges).map_err(|e| Error::parse(path, first_no, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn classes() -> ClassTable {
        ClassTable::new(vec!["background".into(), "a".into(), "b".into()], 0).unwrap()
    }

    #[test]
    fn sequence_file() {
        let g = parse_grammar(Path::new("g.txt"), "a b\n\nbackground a background\n", &classes()).unwrap();
        assert!(g.accepts(&[1, 2]));
        assert!(g.accepts(&[0, 1, 0]));
        assert!(!g.accepts(&[1]));
    }

    #[test]
    fn unknown_name_reports_line() {
        match parse_grammar(Path::new("g.txt"), "a b\nzzz\n", &classes()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn roundtrip_both_layouts() {
        let c = classes();
        let tree = GrammarAutomaton::prefix_tree([vec![1, 2], vec![0, 1, 0], vec![2]]);
        let text = write_grammar(&tree, &c);
        assert!(!text.starts_with(AUTOMATON_HEADER));
        assert_eq!(parse_grammar(Path::new("t"), &text, &c).unwrap(), tree);

        let naive = GrammarAutomaton::kleene_union([vec![0, 1], vec![0, 2]]);
        let text = write_grammar(&naive, &c);
        assert!(text.starts_with(AUTOMATON_HEADER));
        assert_eq!(parse_grammar(Path::new("t"), &text, &c).unwrap(), naive);
    }
}
