//! Head-child and sibling reordering instances with order labels taken from word alignments.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::corpus::{AlignedPair, DepSentence};
use crate::error::{Error, Result};

/// Literal used for absent feature slots.
pub const NULL: &str = "NULL";

/// POS tags treated as punctuation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PunctTags(HashSet<String>);

impl PunctTags {
    pub fn new<I, S>(tags: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        PunctTags(tags.into_iter().map(Into::into).collect())
    }

    pub fn none() -> Self {
        PunctTags(HashSet::new())
    }

    pub fn contains(&self, pos: &str) -> bool {
        self.0.contains(pos)
    }

    pub fn is_punct(&self, s: &DepSentence, i: usize) -> bool {
        self.contains(s.pos(i))
    }

    /// Parses a comma-separated tag list.
    pub fn parse_list(list: &str) -> Self {
        Self::new(list.split(',').map(str::trim).filter(|t| !t.is_empty()))
    }
}

impl Default for PunctTags {
    fn default() -> Self {
        PunctTags::new(["PU"])
    }
}

/// Side of a child relative to its head, and whether another child of the head intervenes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Distance {
    LeftFar,
    LeftNear,
    RightNear,
    RightFar,
}

impl Distance {
    pub fn value(self) -> i8 {
        match self {
            Distance::LeftFar => -2,
            Distance::LeftNear => -1,
            Distance::RightNear => 1,
            Distance::RightFar => 2,
        }
    }

    pub fn is_left(self) -> bool {
        self.value() < 0
    }

    pub fn flipped(self) -> Self {
        match self {
            Distance::LeftFar => Distance::RightFar,
            Distance::LeftNear => Distance::RightNear,
            Distance::RightNear => Distance::LeftNear,
            Distance::RightFar => Distance::LeftFar,
        }
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:+}", self.value())
    }
}

impl FromStr for Distance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "-2" => Ok(Distance::LeftFar),
            "-1" => Ok(Distance::LeftNear),
            "+1" | "1" => Ok(Distance::RightNear),
            "+2" | "2" => Ok(Distance::RightFar),
            _ => Err(Error::Slot(format!("invalid distance `{s}`"))),
        }
    }
}

/// Order of the translations of a source word pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Order {
    InOrder,
    Swapped,
}

impl Order {
    pub fn as_label(self) -> u8 {
        match self {
            Order::InOrder => 0,
            Order::Swapped => 1,
        }
    }

    pub fn from_label(label: u8) -> Option<Self> {
        match label {
            0 => Some(Order::InOrder),
            1 => Some(Order::Swapped),
            _ => None,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Order::InOrder => Order::Swapped,
            Order::Swapped => Order::InOrder,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Order::InOrder => "in_order",
            Order::Swapped => "swapped",
        }
    }
}

/// Word, POS tag and dependency label of one token.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WordFeat {
    pub word: String,
    pub pos: String,
    pub label: String,
}

impl WordFeat {
    pub fn of(s: &DepSentence, i: usize) -> Self {
        WordFeat {
            word: s.surface(i).to_string(),
            pos: s.pos(i).to_string(),
            label: s.label(i).to_string(),
        }
    }

    fn push_to(slot: Option<&WordFeat>, out: &mut Vec<String>) {
        match slot {
            Some(w) => out.extend([w.word.clone(), w.pos.clone(), w.label.clone()]),
            None => out.extend(std::iter::repeat_n(NULL.to_string(), 3)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relation {
    HeadChild,
    Sibling,
}

impl Relation {
    pub fn name(self) -> &'static str {
        match self {
            Relation::HeadChild => "head-child",
            Relation::Sibling => "sibling",
        }
    }
}

impl FromStr for Relation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "head-child" => Ok(Relation::HeadChild),
            "sibling" => Ok(Relation::Sibling),
            _ => Err(Error::Format(format!("unknown relation `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadChildInstance {
    pub head: WordFeat,
    pub child_left: Option<WordFeat>,
    pub child_right: Option<WordFeat>,
    pub dist: Distance,
    pub punct: bool,
    pub label: Order,
}

impl HeadChildInstance {
    /// The 11 feature slots in column order.
    pub fn slots(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(11);
        WordFeat::push_to(Some(&self.head), &mut out);
        WordFeat::push_to(self.child_left.as_ref(), &mut out);
        WordFeat::push_to(self.child_right.as_ref(), &mut out);
        out.push(self.dist.to_string());
        out.push(u8::from(self.punct).to_string());
        out
    }

    pub fn to_instance(&self) -> ReorderInstance {
        ReorderInstance {
            slots: self.slots(),
            label: self.label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiblingInstance {
    pub left: WordFeat,
    pub left_dist: Distance,
    pub right: WordFeat,
    pub right_dist: Distance,
    pub head_word: String,
    pub head_pos: String,
    pub punct: bool,
    pub label: Order,
}

impl SiblingInstance {
    pub fn slots(&self) -> Vec<String> {
        vec![
            self.left.word.clone(),
            self.left.pos.clone(),
            self.left.label.clone(),
            self.left_dist.to_string(),
            self.right.word.clone(),
            self.right.pos.clone(),
            self.right.label.clone(),
            self.right_dist.to_string(),
            self.head_word.clone(),
            self.head_pos.clone(),
            u8::from(self.punct).to_string(),
        ]
    }

    pub fn to_instance(&self) -> ReorderInstance {
        ReorderInstance {
            slots: self.slots(),
            label: self.label,
        }
    }
}

/// A flattened feature row as stored in instance files and consumed by the classifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReorderInstance {
    pub slots: Vec<String>,
    pub label: Order,
}

/// Categorical signed distance of `child` from `head`. `None` if `child` is not a dependent of `head`.
pub fn signed_distance(s: &DepSentence, head: usize, child: usize) -> Option<Distance> {
    if child == 0 || child > s.len() || s.head(child) != head || head == 0 {
        return None;
    }
    let (lo, hi) = if child < head { (child, head) } else { (head, child) };
    let intervening = s.children_of(head).iter().any(|&c| c > lo && c < hi);
    Some(match (child < head, intervening) {
        (true, true) => Distance::LeftFar,
        (true, false) => Distance::LeftNear,
        (false, false) => Distance::RightNear,
        (false, true) => Distance::RightFar,
    })
}

/// Whether a punctuation child of `head` lies strictly between positions `a` and `b`.
pub fn punct_between(s: &DepSentence, head: usize, a: usize, b: usize, punct: &PunctTags) -> bool {
    let (lo, hi) = (a.min(b), a.max(b));
    s.children_of(head)
        .iter()
        .any(|&c| c > lo && c < hi && punct.is_punct(s, c))
}

/// Order label of source words `i` and `j` from their leftmost aligned target positions.
/// `None` when either word is unaligned or both share the same leftmost target word.
pub fn target_order_label(p: &AlignedPair, i: usize, j: usize) -> Option<Order> {
    let (i, j) = (i.min(j), i.max(j));
    let ri = p.min_target(i)?;
    let rj = p.min_target(j)?;
    match rj.cmp(&ri) {
        std::cmp::Ordering::Less => Some(Order::Swapped),
        std::cmp::Ordering::Greater => Some(Order::InOrder),
        std::cmp::Ordering::Equal => None,
    }
}

/// Feature slots for a head-child pair, exactly as produced during extraction.
pub fn head_child_slots(s: &DepSentence, head: usize, child: usize, punct: &PunctTags) -> Option<Vec<String>> {
    let dist = signed_distance(s, head, child)?;
    let child_feat = WordFeat::of(s, child);
    let (child_left, child_right) = if dist.is_left() {
        (Some(child_feat), None)
    } else {
        (None, Some(child_feat))
    };
    let inst = HeadChildInstance {
        head: WordFeat::of(s, head),
        child_left,
        child_right,
        dist,
        punct: punct_between(s, head, head, child, punct),
        label: Order::InOrder,
    };
    Some(inst.slots())
}

/// Feature slots for a sibling pair; the lower source position fills the left slots.
pub fn sibling_slots(s: &DepSentence, a: usize, b: usize, punct: &PunctTags) -> Option<Vec<String>> {
    if !s.are_siblings(a, b) {
        return None;
    }
    Some(sibling_instance(s, a.min(b), a.max(b), punct, Order::InOrder).slots())
}

fn sibling_instance(s: &DepSentence, l: usize, r: usize, punct: &PunctTags, label: Order) -> SiblingInstance {
    let head = s.head(l);
    SiblingInstance {
        left: WordFeat::of(s, l),
        left_dist: signed_distance(s, head, l).expect("sibling attached to head"),
        right: WordFeat::of(s, r),
        right_dist: signed_distance(s, head, r).expect("sibling attached to head"),
        head_word: s.surface(head).to_string(),
        head_pos: s.pos(head).to_string(),
        punct: punct_between(s, head, l, r, punct),
        label,
    }
}

/// One instance per non-punctuation arc with a usable order label, heads in surface order.
pub fn extract_head_child(p: &AlignedPair, punct: &PunctTags) -> Vec<HeadChildInstance> {
    let s = &p.source;
    let mut out = Vec::new();
    for head in 1..=s.len() {
        if punct.is_punct(s, head) {
            continue;
        }
        for &child in s.children_of(head) {
            if punct.is_punct(s, child) {
                continue;
            }
            let Some(label) = target_order_label(p, head, child) else {
                continue;
            };
            let dist = signed_distance(s, head, child).expect("child of head");
            let child_feat = WordFeat::of(s, child);
            let (child_left, child_right) = if dist.is_left() {
                (Some(child_feat), None)
            } else {
                (None, Some(child_feat))
            };
            out.push(HeadChildInstance {
                head: WordFeat::of(s, head),
                child_left,
                child_right,
                dist,
                punct: punct_between(s, head, head, child, punct),
                label,
            });
        }
    }
    out
}

/// One instance per unordered pair of non-punctuation children sharing a head.
pub fn extract_sibling(p: &AlignedPair, punct: &PunctTags) -> Vec<SiblingInstance> {
    let s = &p.source;
    let mut out = Vec::new();
    for head in 1..=s.len() {
        let kids: Vec<usize> = s
            .children_of(head)
            .iter()
            .copied()
            .filter(|&c| !punct.is_punct(s, c))
            .collect();
        for (k, &l) in kids.iter().enumerate() {
            for &r in &kids[k + 1..] {
                if let Some(label) = target_order_label(p, l, r) {
                    out.push(sibling_instance(s, l, r, punct, label));
                }
            }
        }
    }
    out
}

/// Writes an instance file: a header naming the relation, then one tab-separated row per instance.
pub fn write_instances<'a, I>(relation: Relation, rows: I) -> String
where
    I: IntoIterator<Item = &'a ReorderInstance>,
{
    let mut out = String::new();
    out.push_str(relation.name());
    out.push('\n');
    for row in rows {
        out.push_str(&row.slots.join("\t"));
        out.push('\t');
        out.push_str(&row.label.as_label().to_string());
        out.push('\n');
    }
    out
}

pub fn read_instances(text: &str) -> Result<(Relation, Vec<ReorderInstance>)> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Empty("instance file"))?;
    let relation: Relation = header.trim().parse()?;
    let mut rows = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut cols: Vec<String> = line.split('\t').map(str::to_string).collect();
        if cols.len() != 12 {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: format!("expected 12 tab-separated fields, found {}", cols.len()),
            });
        }
        let label = cols
            .pop()
            .and_then(|l| l.parse::<u8>().ok())
            .and_then(Order::from_label)
            .ok_or_else(|| Error::Parse {
                line: lineno + 1,
                msg: "label must be 0 or 1".into(),
            })?;
        rows.push(ReorderInstance { slots: cols, label });
    }
    Ok((relation, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tests::{arb_tree, fig1};
    use crate::corpus::{parse_alignment, LinkSet, Token};
    use proptest::prelude::*;

    fn fig1_pair() -> AlignedPair {
        let target: Vec<String> = "he said , currently the supply in the market is abundant"
            .split(' ')
            .map(str::to_string)
            .collect();
        let links = parse_alignment("0-0 1-1 2-2 3-3 4-8 5-6 6-5 7-9 7-10", 8, target.len()).unwrap();
        AlignedPair::new(fig1(), target, links).unwrap()
    }

    fn wf(word: &str, pos: &str, label: &str) -> WordFeat {
        WordFeat {
            word: word.into(),
            pos: pos.into(),
            label: label.into(),
        }
    }

    #[test]
    fn signed_distances_on_fixture() {
        let s = fig1();
        assert_eq!(signed_distance(&s, 2, 1), Some(Distance::LeftNear));
        assert_eq!(signed_distance(&s, 2, 8), Some(Distance::RightFar));
        assert_eq!(signed_distance(&s, 8, 7), Some(Distance::LeftNear));
        assert_eq!(signed_distance(&s, 8, 4), Some(Distance::LeftFar));
        assert_eq!(signed_distance(&s, 2, 5), None);
    }

    #[test]
    fn punctuation_between() {
        let s = fig1();
        let pu = PunctTags::default();
        assert!(punct_between(&s, 2, 2, 8, &pu));
        assert!(!punct_between(&s, 2, 2, 1, &pu));
        assert!(!punct_between(&s, 2, 2, 8, &PunctTags::none()));
    }

    #[test]
    fn order_labels() {
        let two = DepSentence::new(vec![Token::new(1, "a", "X", 0, "root"), Token::new(2, "b", "X", 1, "dep")]).unwrap();
        let pair = |links: &[(usize, usize)]| {
            AlignedPair::new(two.clone(), vec!["x".into(), "y".into()], links.iter().copied().collect::<LinkSet>()).unwrap()
        };
        assert_eq!(target_order_label(&pair(&[(1, 1), (2, 2)]), 1, 2), Some(Order::InOrder));
        assert_eq!(target_order_label(&pair(&[(1, 2), (2, 1)]), 1, 2), Some(Order::Swapped));
        assert_eq!(target_order_label(&pair(&[(1, 1)]), 1, 2), None);
        assert_eq!(target_order_label(&pair(&[(1, 1), (2, 1)]), 1, 2), None);
    }

    #[test]
    fn head_child_rows_of_fixture() {
        let rows = extract_head_child(&fig1_pair(), &PunctTags::default());
        assert_eq!(
            rows[0],
            HeadChildInstance {
                head: wf("shuo", "VV", "root"),
                child_left: Some(wf("ta", "PN", "nsubj")),
                child_right: None,
                dist: Distance::LeftNear,
                punct: false,
                label: Order::InOrder,
            }
        );
        assert_eq!(
            rows[1],
            HeadChildInstance {
                head: wf("shuo", "VV", "root"),
                child_left: None,
                child_right: Some(wf("chongyu", "VA", "ccomp")),
                dist: Distance::RightFar,
                punct: true,
                label: Order::InOrder,
            }
        );
        assert_eq!(
            rows[2],
            HeadChildInstance {
                head: wf("shang", "LC", "loc"),
                child_left: Some(wf("shichang", "NN", "lobj")),
                child_right: None,
                dist: Distance::LeftNear,
                punct: false,
                label: Order::Swapped,
            }
        );
    }

    #[test]
    fn punctuation_arcs_excluded() {
        let p = fig1_pair();
        let pu = PunctTags::default();
        let rows = extract_head_child(&p, &pu);
        // Exhaustive arc enumeration: every non-punct arc with a label, nothing else.
        let s = &p.source;
        let expected: Vec<(usize, usize)> = (1..=s.len())
            .filter(|&c| s.head(c) != 0)
            .map(|c| (s.head(c), c))
            .filter(|&(h, c)| !pu.is_punct(s, h) && !pu.is_punct(s, c))
            .filter(|&(h, c)| target_order_label(&p, h, c).is_some())
            .collect();
        assert_eq!(rows.len(), expected.len());
        assert!(rows.iter().all(|r| r.child_left.iter().chain(&r.child_right).all(|c| c.word != ",")));
    }

    #[test]
    fn sibling_rows_of_fixture() {
        let rows = extract_sibling(&fig1_pair(), &PunctTags::default());
        let first = &rows[0];
        assert_eq!(first.left, wf("ta", "PN", "nsubj"));
        assert_eq!(first.left_dist, Distance::LeftNear);
        assert_eq!(first.right, wf("chongyu", "VA", "ccomp"));
        assert_eq!(first.right_dist, Distance::RightFar);
        assert_eq!((first.head_word.as_str(), first.head_pos.as_str()), ("shuo", "VV"));
        assert!(first.punct);
        assert_eq!(first.label, Order::InOrder);

        let find = |l: &str, r: &str| rows.iter().find(|x| x.left.word == l && x.right.word == r).unwrap();
        let r46 = find("muqian", "shang");
        assert_eq!((r46.left_dist, r46.right_dist, r46.punct, r46.label), (Distance::LeftFar, Distance::LeftFar, false, Order::InOrder));
        let r67 = find("shang", "gongyou");
        assert_eq!((r67.left_dist, r67.right_dist, r67.punct, r67.label), (Distance::LeftFar, Distance::LeftNear, false, Order::Swapped));
    }

    #[test]
    fn single_child_head_has_no_siblings() {
        let s = DepSentence::new(vec![Token::new(1, "a", "X", 0, "root"), Token::new(2, "b", "X", 1, "dep")]).unwrap();
        let p = AlignedPair::new(s, vec!["a".into(), "b".into()], [(1, 1), (2, 2)].into_iter().collect()).unwrap();
        assert!(extract_sibling(&p, &PunctTags::default()).is_empty());
    }

    #[test]
    fn instance_file_round_trip() {
        let rows: Vec<ReorderInstance> = extract_head_child(&fig1_pair(), &PunctTags::default())
            .iter()
            .map(HeadChildInstance::to_instance)
            .collect();
        let text = write_instances(Relation::HeadChild, &rows);
        assert!(text.starts_with("head-child\nshuo\tVV\troot\tta\tPN\tnsubj\tNULL\tNULL\tNULL\t-1\t0\t0\n"));
        let (rel, back) = read_instances(&text).unwrap();
        assert_eq!(rel, Relation::HeadChild);
        assert_eq!(back, rows);
    }

    /// Monotone alignment to a random target permutation.
    fn arb_pair() -> impl Strategy<Value = AlignedPair> {
        arb_tree(10)
            .prop_flat_map(|s| {
                let n = s.len();
                (Just(s), Just((1..=n).collect::<Vec<_>>()).prop_shuffle())
            })
            .prop_map(|(s, perm)| {
                let target = (1..=s.len()).map(|t| format!("t{t}")).collect();
                let links = perm.iter().enumerate().map(|(k, &t)| (k + 1, t)).collect();
                AlignedPair::new(s, target, links).unwrap()
            })
    }

    fn reverse_target(p: &AlignedPair) -> AlignedPair {
        let m = p.target.len();
        let target = p.target.iter().rev().cloned().collect();
        let links = p.links.iter().map(|&(s, t)| (s, m + 1 - t)).collect();
        AlignedPair::new(p.source.clone(), target, links).unwrap()
    }

    fn mirror_source(s: &DepSentence) -> DepSentence {
        let n = s.len();
        let flip = |i: usize| if i == 0 { 0 } else { n + 1 - i };
        let mut tokens: Vec<Token> = s
            .tokens()
            .iter()
            .map(|t| Token::new(flip(t.index), t.surface.clone(), t.pos.clone(), flip(t.head), t.label.clone()))
            .collect();
        tokens.sort_by_key(|t| t.index);
        DepSentence::new(tokens).unwrap()
    }

    proptest! {
        #[test]
        fn reversing_target_flips_labels(p in arb_pair()) {
            let pu = PunctTags::none();
            let a = extract_head_child(&p, &pu);
            let b = extract_head_child(&reverse_target(&p), &pu);
            prop_assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                prop_assert_eq!(x.label.flipped(), y.label);
            }
            let a = extract_sibling(&p, &pu);
            let b = extract_sibling(&reverse_target(&p), &pu);
            for (x, y) in a.iter().zip(&b) {
                prop_assert_eq!(x.label.flipped(), y.label);
            }
        }

        #[test]
        fn mirrored_source_flips_distance_sign(s in arb_tree(10)) {
            let m = mirror_source(&s);
            let n = s.len();
            for c in 1..=n {
                let h = s.head(c);
                if h == 0 { continue; }
                let d = signed_distance(&s, h, c).unwrap();
                let dm = signed_distance(&m, n + 1 - h, n + 1 - c).unwrap();
                prop_assert_eq!(d.flipped(), dm);
            }
        }

        #[test]
        fn sibling_pairs_unique_and_ordered(p in arb_pair()) {
            let s = &p.source;
            let rows = extract_sibling(&p, &PunctTags::none());
            let mut seen = std::collections::HashSet::new();
            for r in &rows {
                let l = s.tokens().iter().position(|t| t.surface == r.left.word).unwrap();
                let rr = s.tokens().iter().position(|t| t.surface == r.right.word).unwrap();
                prop_assert!(l < rr);
                prop_assert!(seen.insert((l, rr)));
            }
        }
    }
}
