//! Action-sequence priors as finite label automata.
//!
//! Every sequence the automaton accepts is equally likely and everything
//! else is impossible. The naive, Monte-Carlo and text-based constructions
//! all produce regular languages, so a (possibly nondeterministic) automaton
//! represents them exactly and plugs straight into the decoder.

mod io;
mod sample;
mod text;

pub use io::{load_grammar, parse_grammar, save_grammar, write_grammar};
pub use sample::{
    build_monte_carlo, build_naive, build_text_based, sample_sequences, DrawPolicy,
    SampledSequence,
};
pub use text::{load_bigrams, mine_bigrams, save_bigrams, tokenize_sentences, BigramStats};

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub from: usize,
    pub label: usize,
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrammarAutomaton {
    num_states: usize,
    start: usize,
    accepting: Vec<bool>,
    edges: Vec<Edge>,
    outgoing: Vec<Vec<usize>>,
}

impl GrammarAutomaton {
    /// Builds an automaton and trims states that are unreachable from `start`
    /// or cannot reach an accepting state.
    pub fn new(num_states: usize, start: usize, accepting: Vec<bool>, edges: Vec<Edge>) -> Result<Self> {
        if start >= num_states || accepting.len() != num_states {
            return Err(Error::Validation("malformed automaton header".into()));
        }
        if edges.iter().any(|e| e.from >= num_states || e.to >= num_states) {
            return Err(Error::Validation("automaton edge references unknown state".into()));
        }
        Ok(Self::trimmed(num_states, start, accepting, edges))
    }

    fn trimmed(num_states: usize, start: usize, accepting: Vec<bool>, mut edges: Vec<Edge>) -> Self {
        edges.sort_unstable();
        edges.dedup();
        let forward = reach(num_states, &[start], edges.iter().map(|e| (e.from, e.to)));
        let finals: Vec<usize> = (0..num_states).filter(|&s| accepting[s]).collect();
        let backward = reach(num_states, &finals, edges.iter().map(|e| (e.to, e.from)));
        // the start state is kept even if dead so the automaton stays well-formed
        let keep: Vec<bool> = (0..num_states)
            .map(|s| s == start || (forward[s] && backward[s]))
            .collect();
        let mut remap = vec![usize::MAX; num_states];
        let mut next = 0;
        for s in 0..num_states {
            if keep[s] {
                remap[s] = next;
                next += 1;
            }
        }
        let edges: Vec<Edge> = edges
            .into_iter()
            .filter(|e| keep[e.from] && keep[e.to] && backward[e.to])
            .map(|e| Edge {
                from: remap[e.from],
                label: e.label,
                to: remap[e.to],
            })
            .collect();
        let accepting: Vec<bool> = (0..num_states).filter(|&s| keep[s]).map(|s| accepting[s]).collect();
        let mut outgoing = vec![Vec::new(); next];
        for (i, e) in edges.iter().enumerate() {
            outgoing[e.from].push(i);
        }
        Self {
            num_states: next,
            start: remap[start],
            accepting,
            edges,
            outgoing,
        }
    }

    /// Single accepting state with a self-loop for every allowed class: `A*`.
    pub fn free_loop(allowed: impl IntoIterator<Item = usize>) -> Self {
        let edges = allowed
            .into_iter()
            .map(|c| Edge { from: 0, label: c, to: 0 })
            .collect();
        Self::trimmed(1, 0, vec![true], edges)
    }

    /// Union of Kleene closures, one looping branch per distinct set.
    pub fn kleene_union<I, S>(sets: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: IntoIterator<Item = usize>,
    {
        let sets: BTreeSet<BTreeSet<usize>> = sets
            .into_iter()
            .map(|s| s.into_iter().collect())
            .filter(|s: &BTreeSet<usize>| !s.is_empty())
            .collect();
        let mut edges = Vec::new();
        for (i, set) in sets.iter().enumerate() {
            let branch = i + 1;
            for &c in set {
                edges.push(Edge { from: 0, label: c, to: branch });
                edges.push(Edge { from: branch, label: c, to: branch });
            }
        }
        let n = sets.len() + 1;
        Self::trimmed(n, 0, vec![true; n], edges)
    }

    /// Prefix tree over the distinct sequences; empty sequences are ignored.
    pub fn prefix_tree<I, S>(sequences: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[usize]>,
    {
        let sequences: BTreeSet<Vec<usize>> = sequences
            .into_iter()
            .map(|s| s.as_ref().to_vec())
            .filter(|s| !s.is_empty())
            .collect();
        let mut children: Vec<BTreeMap<usize, usize>> = vec![BTreeMap::new()];
        let mut accepting = vec![false];
        let mut edges = Vec::new();
        for seq in &sequences {
            let mut node = 0;
            for &c in seq {
                node = match children[node].get(&c) {
                    Some(&n) => n,
                    None => {
                        let n = children.len();
                        children.push(BTreeMap::new());
                        accepting.push(false);
                        children[node].insert(c, n);
                        edges.push(Edge { from: node, label: c, to: n });
                        n
                    }
                };
            }
            accepting[node] = true;
        }
        Self::trimmed(children.len(), 0, accepting, edges)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn is_accepting(&self, state: usize) -> bool {
        self.accepting[state]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn outgoing(&self, state: usize) -> impl Iterator<Item = &Edge> + '_ {
        self.outgoing[state].iter().map(|&i| &self.edges[i])
    }

    pub fn alphabet(&self) -> BTreeSet<usize> {
        self.edges.iter().map(|e| e.label).collect()
    }

    /// True when no non-empty sequence is accepted.
    pub fn is_empty(&self) -> bool {
        self.outgoing[self.start].is_empty()
    }

    fn step(&self, states: &BTreeSet<usize>, label: usize) -> BTreeSet<usize> {
        states
            .iter()
            .flat_map(|&s| self.outgoing(s))
            .filter(|e| e.label == label)
            .map(|e| e.to)
            .collect()
    }

    pub fn accepts(&self, seq: &[usize]) -> bool {
        let mut states: BTreeSet<usize> = [self.start].into_iter().collect();
        for &c in seq {
            states = self.step(&states, c);
            if states.is_empty() {
                return false;
            }
        }
        states.iter().any(|&s| self.accepting[s])
    }

    /// Keeps only edges labeled with `allowed` classes. `None` signals that
    /// no non-empty sequence survives the restriction.
    pub fn restrict_to_set(&self, allowed: &BTreeSet<usize>) -> Option<Self> {
        let edges = self
            .edges
            .iter()
            .filter(|e| allowed.contains(&e.label))
            .copied()
            .collect();
        let g = Self::trimmed(self.num_states, self.start, self.accepting.clone(), edges);
        (!g.is_empty()).then_some(g)
    }

    pub fn is_acyclic(&self) -> bool {
        let mut indegree = vec![0usize; self.num_states];
        for e in &self.edges {
            indegree[e.to] += 1;
        }
        let mut queue: VecDeque<usize> = (0..self.num_states).filter(|&s| indegree[s] == 0).collect();
        let mut seen = 0;
        while let Some(s) = queue.pop_front() {
            seen += 1;
            for e in self.outgoing(s) {
                indegree[e.to] -= 1;
                if indegree[e.to] == 0 {
                    queue.push_back(e.to);
                }
            }
        }
        seen == self.num_states
    }

    /// Distinct non-empty accepted sequences of length at most `max_len`, in
    /// lexicographic order. Fails if more than `limit` exist.
    pub fn enumerate_sequences(&self, max_len: usize, limit: usize) -> Result<Vec<Vec<usize>>> {
        let alphabet: Vec<usize> = self.alphabet().into_iter().collect();
        let mut out = Vec::new();
        let mut prefix = Vec::new();
        let start: BTreeSet<usize> = [self.start].into_iter().collect();
        self.enumerate_from(&start, &alphabet, max_len, limit, &mut prefix, &mut out)?;
        Ok(out)
    }

    fn enumerate_from(
        &self,
        states: &BTreeSet<usize>,
        alphabet: &[usize],
        max_len: usize,
        limit: usize,
        prefix: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) -> Result<()> {
        if !prefix.is_empty() && states.iter().any(|&s| self.accepting[s]) {
            if out.len() == limit {
                return Err(Error::Guard(format!("more than {limit} accepted sequences")));
            }
            out.push(prefix.clone());
        }
        if prefix.len() == max_len {
            return Ok(());
        }
        for &c in alphabet {
            let next = self.step(states, c);
            if next.is_empty() {
                continue;
            }
            prefix.push(c);
            self.enumerate_from(&next, alphabet, max_len, limit, prefix, out)?;
            prefix.pop();
        }
        Ok(())
    }
}

fn reach(n: usize, seeds: &[usize], arcs: impl Iterator<Item = (usize, usize)>) -> Vec<bool> {
    let mut adj = vec![Vec::new(); n];
    for (a, b) in arcs {
        adj[a].push(b);
    }
    let mut seen = vec![false; n];
    let mut stack: Vec<usize> = seeds.to_vec();
    for &s in seeds {
        seen[s] = true;
    }
    while let Some(s) = stack.pop() {
        for &t in &adj[s] {
            if !seen[t] {
                seen[t] = true;
                stack.push(t);
            }
        }
    }
    seen
}
