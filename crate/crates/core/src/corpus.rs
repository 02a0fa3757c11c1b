//! Dependency-parsed source sentences, target sentences and word alignments.
//!
//! Token indices are 1-based everywhere; head index 0 denotes the artificial root.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub index: usize,
    pub surface: String,
    pub pos: String,
    pub head: usize,
    pub label: String,
}

impl Token {
    pub fn new(
        index: usize,
        surface: impl Into<String>,
        pos: impl Into<String>,
        head: usize,
        label: impl Into<String>,
    ) -> Self {
        Token {
            index,
            surface: surface.into(),
            pos: pos.into(),
            head,
            label: label.into(),
        }
    }
}

/// A validated dependency tree. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepSentence {
    tokens: Vec<Token>,
    root: usize,
    // children[h] lists the dependents of h in surface order; children[0] holds the root.
    children: Vec<Vec<usize>>,
}

impl DepSentence {
    pub fn new(tokens: Vec<Token>) -> Result<Self> {
        let n = tokens.len();
        if n == 0 {
            return Err(Error::Tree("sentence has no tokens".into()));
        }
        let mut children = vec![Vec::new(); n + 1];
        let mut root = None;
        for (pos, tok) in tokens.iter().enumerate() {
            if tok.index != pos + 1 {
                return Err(Error::Tree(format!(
                    "token indices must be 1..{n} in order, found {} at position {}",
                    tok.index,
                    pos + 1
                )));
            }
            if tok.surface.is_empty() {
                return Err(Error::Tree(format!("token {} has an empty surface form", tok.index)));
            }
            if tok.head == tok.index {
                return Err(Error::Tree(format!("token {} is its own head", tok.index)));
            }
            if tok.head > n {
                return Err(Error::Tree(format!(
                    "token {} has head {} beyond sentence length {n}",
                    tok.index, tok.head
                )));
            }
            if tok.head == 0 {
                if let Some(r) = root {
                    return Err(Error::Tree(format!("tokens {r} and {} both attach to the root", tok.index)));
                }
                root = Some(tok.index);
            }
            children[tok.head].push(tok.index);
        }
        let root = root.ok_or_else(|| Error::Tree("no token attaches to the root".into()))?;

        // With a single root and one head per token, acyclic implies connected.
        for start in 1..=n {
            let mut cur = start;
            let mut steps = 0;
            while cur != 0 {
                cur = tokens[cur - 1].head;
                steps += 1;
                if steps > n {
                    return Err(Error::Tree(format!("cycle through token {start}")));
                }
            }
        }

        Ok(DepSentence { tokens, root, children })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    /// Token at 1-based index `i`.
    pub fn token(&self, i: usize) -> &Token {
        &self.tokens[i - 1]
    }

    pub fn root_index(&self) -> usize {
        self.root
    }

    pub fn head(&self, i: usize) -> usize {
        self.token(i).head
    }

    pub fn surface(&self, i: usize) -> &str {
        &self.token(i).surface
    }

    pub fn pos(&self, i: usize) -> &str {
        &self.token(i).pos
    }

    pub fn label(&self, i: usize) -> &str {
        &self.token(i).label
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.surface.as_str())
    }

    /// Dependents of `i` in surface order.
    pub fn children_of(&self, i: usize) -> &[usize] {
        assert!(i >= 1 && i <= self.len(), "token index {i} out of range");
        &self.children[i]
    }

    /// `i` together with all of its descendants, ascending.
    pub fn subtree_span(&self, i: usize) -> BTreeSet<usize> {
        assert!(i >= 1 && i <= self.len(), "token index {i} out of range");
        let mut span = BTreeSet::new();
        let mut stack = vec![i];
        while let Some(node) = stack.pop() {
            span.insert(node);
            stack.extend_from_slice(&self.children[node]);
        }
        span
    }

    /// Proper ancestors of `i`, nearest first; excludes the artificial root.
    pub fn ancestors(&self, i: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = self.head(i);
        while cur != 0 {
            out.push(cur);
            cur = self.head(cur);
        }
        out
    }

    pub fn are_siblings(&self, a: usize, b: usize) -> bool {
        a != b && self.head(a) == self.head(b) && self.head(a) != 0
    }

    /// Serializes to the 8-column tab-separated format read by [`parse_conll`].
    pub fn to_conll(&self) -> String {
        let mut out = String::new();
        for t in &self.tokens {
            let _ = writeln!(
                out,
                "{}\t{}\t_\t{}\t{}\t_\t{}\t{}",
                t.index, t.surface, t.pos, t.pos, t.head, t.label
            );
        }
        out
    }
}

/// Parses blank-line-separated blocks of tab-separated token lines.
///
/// Columns used: 1 ID, 2 FORM, 5 POS, 7 HEAD, 8 DEPREL. Lines starting with `#` are skipped.
pub fn parse_conll(text: &str) -> Result<Vec<DepSentence>> {
    let mut sentences = Vec::new();
    let mut block: Vec<Token> = Vec::new();

    let flush = |block: &mut Vec<Token>, sentences: &mut Vec<DepSentence>| -> Result<()> {
        if block.is_empty() {
            return Ok(());
        }
        let sentence_no = sentences.len() + 1;
        let sent = DepSentence::new(std::mem::take(block)).map_err(|e| Error::Structure {
            sentence: sentence_no,
            msg: match e {
                Error::Tree(m) => m,
                other => other.to_string(),
            },
        })?;
        sentences.push(sent);
        Ok(())
    };

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut block, &mut sentences)?;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let line_err = |msg: String| Error::Parse { line: lineno + 1, msg };
        if cols.len() < 8 {
            return Err(line_err(format!("expected at least 8 tab-separated columns, found {}", cols.len())));
        }
        let index: usize = cols[0]
            .parse()
            .map_err(|_| line_err(format!("invalid token id `{}`", cols[0])))?;
        let head: usize = cols[6]
            .parse()
            .map_err(|_| line_err(format!("invalid head `{}`", cols[6])))?;
        block.push(Token::new(index, cols[1], cols[4], head, cols[7]));
    }
    flush(&mut block, &mut sentences)?;
    Ok(sentences)
}

/// A set of 1-based (source, target) alignment links.
pub type LinkSet = BTreeSet<(usize, usize)>;

/// Parses one line of 0-based `i-j` pairs into 1-based links.
pub fn parse_alignment(line: &str, src_len: usize, tgt_len: usize) -> Result<LinkSet> {
    let mut links = LinkSet::new();
    for pair in line.split_whitespace() {
        let range_err = || Error::AlignmentRange {
            pair: pair.to_string(),
            src_len,
            tgt_len,
        };
        let (s, t) = pair.split_once('-').ok_or_else(|| Error::Parse {
            line: 0,
            msg: format!("alignment pair `{pair}` is not of the form i-j"),
        })?;
        let s: usize = s.parse().map_err(|_| range_err())?;
        let t: usize = t.parse().map_err(|_| range_err())?;
        if s >= src_len || t >= tgt_len {
            return Err(range_err());
        }
        links.insert((s + 1, t + 1));
    }
    Ok(links)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignedPair {
    pub source: DepSentence,
    pub target: Vec<String>,
    pub links: LinkSet,
}

impl AlignedPair {
    pub fn new(source: DepSentence, target: Vec<String>, links: LinkSet) -> Result<Self> {
        for &(s, t) in &links {
            if s == 0 || s > source.len() || t == 0 || t > target.len() {
                return Err(Error::AlignmentRange {
                    pair: format!("{}-{}", s as isize - 1, t as isize - 1),
                    src_len: source.len(),
                    tgt_len: target.len(),
                });
            }
        }
        Ok(AlignedPair { source, target, links })
    }

    /// Smallest target index aligned to source word `i`, if any.
    pub fn min_target(&self, i: usize) -> Option<usize> {
        self.links.range((i, 0)..=(i, usize::MAX)).map(|&(_, t)| t).next()
    }
}

/// Zips a parse file, a tokenized target file and an alignment file line by line.
pub fn read_aligned_corpus(parses: &str, targets: &str, alignments: &str) -> Result<Vec<AlignedPair>> {
    let sources = parse_conll(parses)?;
    let targets: Vec<&str> = targets.lines().collect();
    let aligns: Vec<&str> = alignments.lines().collect();
    if targets.len() != sources.len() || aligns.len() != sources.len() {
        return Err(Error::Config(format!(
            "corpus size mismatch: {} parses, {} target lines, {} alignment lines",
            sources.len(),
            targets.len(),
            aligns.len()
        )));
    }
    sources
        .into_iter()
        .zip(targets)
        .zip(aligns)
        .enumerate()
        .map(|(k, ((src, tgt), al))| {
            let target: Vec<String> = tgt.split_whitespace().map(str::to_string).collect();
            let links = parse_alignment(al, src.len(), target.len()).map_err(|e| match e {
                Error::Parse { msg, .. } => Error::Parse { line: k + 1, msg },
                Error::AlignmentRange { pair, src_len, tgt_len } => Error::Parse {
                    line: k + 1,
                    msg: format!("alignment pair `{pair}` out of range (source {src_len}, target {tgt_len})"),
                },
                other => other,
            })?;
            AlignedPair::new(src, target, links)
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) const FIG1: &str = "\
1\tta\t_\tPN\tPN\t_\t2\tnsubj
2\tshuo\t_\tVV\tVV\t_\t0\troot
3\t,\t_\tPU\tPU\t_\t2\tpunct
4\tmuqian\t_\tNT\tNT\t_\t8\ttmod
5\tshichang\t_\tNN\tNN\t_\t6\tlobj
6\tshang\t_\tLC\tLC\t_\t8\tloc
7\tgongyou\t_\tNN\tNN\t_\t8\tnsubj
8\tchongyu\t_\tVA\tVA\t_\t2\tccomp
";

    pub(crate) fn fig1() -> DepSentence {
        parse_conll(FIG1).unwrap().remove(0)
    }

    #[test]
    fn parses_fig1_block() {
        let s = fig1();
        assert_eq!(s.len(), 8);
        assert_eq!(s.root_index(), 2);
        assert_eq!(s.surface(2), "shuo");
        assert_eq!(s.pos(2), "VV");
        assert_eq!(s.label(2), "root");
    }

    #[test]
    fn single_token_sentence() {
        let s = parse_conll("1\ta\t_\t_\tX\t_\t0\troot\n").unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].root_index(), 1);
    }

    #[test]
    fn self_loop_is_structural_error() {
        let text = "1\ta\t_\t_\tX\t_\t0\troot\n2\tb\t_\t_\tX\t_\t1\tdep\n3\tc\t_\t_\tX\t_\t3\tdep\n";
        match parse_conll(text) {
            Err(Error::Structure { sentence, msg }) => {
                assert_eq!(sentence, 1);
                assert!(msg.contains("own head"), "{msg}");
            }
            other => panic!("expected structural error, got {other:?}"),
        }
    }

    #[test]
    fn cycle_and_multiple_roots_rejected() {
        let cycle = "1\ta\t_\t_\tX\t_\t0\troot\n2\tb\t_\t_\tX\t_\t3\tdep\n3\tc\t_\t_\tX\t_\t2\tdep\n";
        assert!(matches!(parse_conll(cycle), Err(Error::Structure { .. })));
        let two_roots = "1\ta\t_\t_\tX\t_\t0\troot\n2\tb\t_\t_\tX\t_\t0\troot\n";
        assert!(matches!(parse_conll(two_roots), Err(Error::Structure { .. })));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = "1\ta\t_\t_\tX\t_\t0\troot\n\n1\tb\tX\n";
        match parse_conll(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn extra_columns_are_ignored() {
        let text = "1\ta\t_\t_\tX\t_\t0\troot\t_\t_\n";
        assert_eq!(parse_conll(text).unwrap()[0].pos(1), "X");
    }

    #[test]
    fn alignment_parsing() {
        let links = parse_alignment("0-0 1-2", 2, 3).unwrap();
        assert_eq!(links.into_iter().collect::<Vec<_>>(), vec![(1, 1), (2, 3)]);
        assert!(parse_alignment("", 2, 3).unwrap().is_empty());
        match parse_alignment("5-0", 3, 3) {
            Err(Error::AlignmentRange { pair, .. }) => assert_eq!(pair, "5-0"),
            other => panic!("expected range error, got {other:?}"),
        }
    }

    #[test]
    fn tree_navigation_on_fig1() {
        let s = fig1();
        assert_eq!(s.children_of(2), &[1, 3, 8]);
        assert_eq!(s.children_of(8), &[4, 6, 7]);
        assert!(s.children_of(1).is_empty());
        assert_eq!(s.subtree_span(2), (1..=8).collect());
        assert_eq!(s.subtree_span(8), [4, 5, 6, 7, 8].into_iter().collect());
        assert_eq!(s.ancestors(5), vec![6, 8, 2]);
    }

    /// Random trees: each token i > 1 picks a head among earlier tokens, then indices are permuted.
    pub(crate) fn arb_tree(max_len: usize) -> impl Strategy<Value = DepSentence> {
        (1..=max_len)
            .prop_flat_map(|n| {
                let heads = (1..n).map(|i| 0..i).collect::<Vec<_>>();
                (heads, Just((1..=n).collect::<Vec<usize>>()).prop_shuffle())
            })
            .prop_map(|(heads, perm)| {
                let n = perm.len();
                // perm[k] is the surface position of construction node k
                let mut tokens: Vec<Token> = (0..n)
                    .map(|k| {
                        let head = if k == 0 { 0 } else { perm[heads[k - 1]] };
                        Token::new(perm[k], format!("w{k}"), format!("P{}", k % 3), head, format!("l{}", k % 4))
                    })
                    .collect();
                tokens.sort_by_key(|t| t.index);
                DepSentence::new(tokens).unwrap()
            })
    }

    proptest! {
        #[test]
        fn conll_round_trip(s in arb_tree(12)) {
            let parsed = parse_conll(&s.to_conll()).unwrap();
            prop_assert_eq!(parsed.len(), 1);
            prop_assert_eq!(&parsed[0], &s);
        }

        #[test]
        fn children_partition_tokens(s in arb_tree(12)) {
            let mut seen: Vec<usize> = (1..=s.len()).flat_map(|i| s.children_of(i).to_vec()).collect();
            seen.push(s.root_index());
            seen.sort_unstable();
            prop_assert_eq!(seen, (1..=s.len()).collect::<Vec<_>>());
        }

        #[test]
        fn subtree_spans_nest_or_are_disjoint(s in arb_tree(12)) {
            for i in 1..=s.len() {
                let a = s.subtree_span(i);
                prop_assert!(a.contains(&i));
                for j in 1..=s.len() {
                    let b = s.subtree_span(j);
                    let disjoint = a.is_disjoint(&b);
                    prop_assert!(disjoint || a.is_subset(&b) || b.is_subset(&a));
                }
            }
        }
    }
}
