//! Reordering feature functions evaluated during decoding.

use std::collections::HashMap;

use crate::corpus::DepSentence;
use crate::error::{Error, Result};
use crate::extract::{head_child_slots, sibling_slots, Order, PunctTags};
use crate::nn::{ReorderNet, EPS};

/// Inclusive 1-based source span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        assert!(start >= 1 && start <= end, "invalid span {start}..{end}");
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, i: usize) -> bool {
        i >= self.start && i <= self.end
    }

    pub fn iter(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }
}

/// Set of covered source positions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coverage {
    bits: Vec<u64>,
    len: usize,
}

impl Coverage {
    pub fn new(len: usize) -> Self {
        Coverage {
            bits: vec![0; len.div_ceil(64).max(1)],
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn contains(&self, i: usize) -> bool {
        let k = i - 1;
        self.bits[k / 64] >> (k % 64) & 1 == 1
    }

    pub fn insert(&mut self, i: usize) {
        let k = i - 1;
        self.bits[k / 64] |= 1 << (k % 64);
    }

    pub fn cover(&mut self, span: Span) {
        for i in span.iter() {
            self.insert(i);
        }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn is_complete(&self) -> bool {
        self.count() == self.len
    }

    pub fn overlaps(&self, span: Span) -> bool {
        span.iter().any(|i| self.contains(i))
    }

    pub fn first_uncovered(&self) -> Option<usize> {
        (1..=self.len).find(|&i| !self.contains(i))
    }
}

/// Maximal punctuation-free spans, with each punctuation token as its own zone.
pub fn zones(s: &DepSentence, punct: &PunctTags) -> Vec<Span> {
    let mut out = Vec::new();
    let mut start = None;
    for i in 1..=s.len() {
        if punct.is_punct(s, i) {
            if let Some(st) = start.take() {
                out.push(Span::new(st, i - 1));
            }
            out.push(Span::new(i, i));
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(st) = start {
        out.push(Span::new(st, s.len()));
    }
    out
}

/// Distance-based reordering penalty `|start(new) - end(prev) - 1|`, with `prev_end = 0`
/// before the first phrase.
pub fn dbr_penalty(prev_end: usize, new: Span) -> usize {
    (new.start as isize - prev_end as isize - 1).unsigned_abs()
}

/// Dependency distortion penalty: 1 when the smallest subtree that contains the last
/// translated word and is not yet fully translated gets left without translating any more
/// of it, else 0.
pub fn ddp_penalty(s: &DepSentence, covered: &Coverage, last_word: Option<usize>, new: Span) -> usize {
    let Some(last) = last_word else {
        return 0;
    };
    let mut node = last;
    loop {
        let span = s.subtree_span(node);
        if span.iter().any(|&i| !covered.contains(i)) {
            return usize::from(!new.iter().any(|i| span.contains(&i)));
        }
        node = s.head(node);
        if node == 0 {
            return 0;
        }
    }
}

/// How two source words are linked in the tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Link {
    HeadChild { head: usize, child: usize },
    Sibling { left: usize, right: usize },
}

pub fn link_between(s: &DepSentence, a: usize, b: usize) -> Option<Link> {
    if a == b {
        None
    } else if s.head(b) == a {
        Some(Link::HeadChild { head: a, child: b })
    } else if s.head(a) == b {
        Some(Link::HeadChild { head: b, child: a })
    } else if s.are_siblings(a, b) {
        Some(Link::Sibling {
            left: a.min(b),
            right: a.max(b),
        })
    } else {
        None
    }
}

/// Words linked to `x` as head, child or sibling, ascending.
pub fn linked_words(s: &DepSentence, x: usize) -> Vec<usize> {
    let mut out: Vec<usize> = s.children_of(x).to_vec();
    let h = s.head(x);
    if h != 0 {
        out.push(h);
        out.extend(s.children_of(h).iter().copied().filter(|&c| c != x));
    }
    out.sort_unstable();
    out
}

/// Orientation when `x` is translated now and `x_prime` later.
pub fn orientation(x: usize, x_prime: usize) -> Order {
    if x_prime < x {
        Order::Swapped
    } else {
        Order::InOrder
    }
}

/// Sparse dependency-swap feature keys fired by translating `x` before `x_prime`.
///
/// Head-child keys are `hc:<kinds>:<head value>:<child value>:<p>:<o>` where `p` is the side
/// of the head relative to the child; sibling keys are `sib:<kinds>:<left>:<right>:<o>`.
/// `<kinds>` is two letters from `L` (label) and `T` (POS tag).
pub fn ds_features(s: &DepSentence, x: usize, x_prime: usize) -> Result<Vec<String>> {
    let o = orientation(x, x_prime).name();
    let lt = |i: usize| [("L", s.label(i)), ("T", s.pos(i))];
    let combos = |a: usize, b: usize| {
        let (la, ta) = (lt(a)[0], lt(a)[1]);
        let (lb, tb) = (lt(b)[0], lt(b)[1]);
        [(la, lb), (ta, tb), (la, tb), (ta, lb)]
    };
    match link_between(s, x, x_prime) {
        Some(Link::HeadChild { head, child }) => {
            let p = if head < child { "left" } else { "right" };
            Ok(combos(head, child)
                .iter()
                .map(|((ka, va), (kb, vb))| format!("hc:{ka}{kb}:{va}:{vb}:{p}:{o}"))
                .collect())
        }
        Some(Link::Sibling { left, right }) => Ok(combos(left, right)
            .iter()
            .map(|((ka, va), (kb, vb))| format!("sib:{ka}{kb}:{va}:{vb}:{o}"))
            .collect()),
        None => Err(Error::Config(format!("words {x} and {x_prime} are not linked in the tree"))),
    }
}

/// Weights of sparse features; missing keys weigh 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseWeights(HashMap<String, f64>);

impl SparseWeights {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: impl Into<String>, w: f64) {
        self.0.insert(key.into(), w);
    }

    pub fn get(&self, key: &str) -> f64 {
        self.0.get(key).copied().unwrap_or(0.0)
    }

    pub fn sum<S: AsRef<str>>(&self, keys: &[S]) -> f64 {
        keys.iter().map(|k| self.get(k.as_ref())).sum()
    }

    /// Parses `key TAB weight` lines.
    pub fn parse(text: &str) -> Result<Self> {
        let mut w = SparseWeights::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line.rsplit_once('\t').ok_or_else(|| Error::Parse {
                line: lineno + 1,
                msg: "expected `key<TAB>weight`".into(),
            })?;
            let v: f64 = v.trim().parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                msg: format!("invalid weight `{v}`"),
            })?;
            w.insert(k, v);
        }
        Ok(w)
    }
}

/// Head-child and sibling classifier ensembles; each member is its own feature function.
#[derive(Debug, Clone, Default)]
pub struct Ensembles {
    pub head_child: Vec<ReorderNet>,
    pub sibling: Vec<ReorderNet>,
}

/// NR feature values fired by translating `x` before `x_prime`.
#[derive(Debug, Clone, PartialEq)]
pub enum NrValues {
    HeadChild(Vec<f64>),
    Sibling(Vec<f64>),
}

/// Log-probability each ensemble member assigns to the orientation implied by translating
/// `x` before `x_prime`, with predictions clamped to `[EPS, 1 - EPS]`.
pub fn nr_feature(ens: &Ensembles, s: &DepSentence, x: usize, x_prime: usize, punct: &PunctTags) -> Result<NrValues> {
    let o = orientation(x, x_prime);
    let value = |p: f64| {
        let p = p.clamp(EPS, 1.0 - EPS);
        match o {
            Order::Swapped => p.ln(),
            Order::InOrder => (1.0 - p).ln(),
        }
    };
    match link_between(s, x, x_prime) {
        Some(Link::HeadChild { head, child }) => {
            let slots = head_child_slots(s, head, child, punct).expect("linked pair");
            let vals = ens
                .head_child
                .iter()
                .map(|m| m.predict_swap(&slots).map(value))
                .collect::<Result<_>>()?;
            Ok(NrValues::HeadChild(vals))
        }
        Some(Link::Sibling { left, right }) => {
            let slots = sibling_slots(s, left, right, punct).expect("linked pair");
            let vals = ens
                .sibling
                .iter()
                .map(|m| m.predict_swap(&slots).map(value))
                .collect::<Result<_>>()?;
            Ok(NrValues::Sibling(vals))
        }
        None => Err(Error::Config(format!("words {x} and {x_prime} are not linked in the tree"))),
    }
}
