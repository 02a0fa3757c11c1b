use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::embed::{NULL_TOKEN, UNK_TOKEN};
use crate::error::{Error, Result};
use crate::extract::{Relation, ReorderInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VocabKind {
    Word,
    Pos,
    Label,
    Distance,
    Boolean,
}

impl VocabKind {
    pub const ALL: [VocabKind; 5] = [
        VocabKind::Word,
        VocabKind::Pos,
        VocabKind::Label,
        VocabKind::Distance,
        VocabKind::Boolean,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            VocabKind::Word => "word",
            VocabKind::Pos => "pos",
            VocabKind::Label => "label",
            VocabKind::Distance => "distance",
            VocabKind::Boolean => "boolean",
        }
    }

    /// Open vocabularies are learned from data and map unknown values to UNK.
    pub fn is_open(self) -> bool {
        matches!(self, VocabKind::Word | VocabKind::Pos | VocabKind::Label)
    }
}

impl fmt::Display for VocabKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VocabKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        VocabKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Format(format!("unknown vocabulary kind `{s}`")))
    }
}

/// Ordered input slots of a classifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSpec {
    pub relation: Relation,
    pub slots: Vec<(String, VocabKind)>,
}

impl FeatureSpec {
    pub fn head_child() -> Self {
        use VocabKind::*;
        let slots = [
            ("head_word", Word),
            ("head_pos", Pos),
            ("head_label", Label),
            ("left_child_word", Word),
            ("left_child_pos", Pos),
            ("left_child_label", Label),
            ("right_child_word", Word),
            ("right_child_pos", Pos),
            ("right_child_label", Label),
            ("distance", Distance),
            ("punct", Boolean),
        ];
        FeatureSpec {
            relation: Relation::HeadChild,
            slots: slots.iter().map(|&(n, k)| (n.to_string(), k)).collect(),
        }
    }

    pub fn sibling() -> Self {
        use VocabKind::*;
        let slots = [
            ("left_word", Word),
            ("left_pos", Pos),
            ("left_label", Label),
            ("left_distance", Distance),
            ("right_word", Word),
            ("right_pos", Pos),
            ("right_label", Label),
            ("right_distance", Distance),
            ("head_word", Word),
            ("head_pos", Pos),
            ("punct", Boolean),
        ];
        FeatureSpec {
            relation: Relation::Sibling,
            slots: slots.iter().map(|&(n, k)| (n.to_string(), k)).collect(),
        }
    }

    pub fn for_relation(relation: Relation) -> Self {
        match relation {
            Relation::HeadChild => Self::head_child(),
            Relation::Sibling => Self::sibling(),
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn kind(&self, slot: usize) -> VocabKind {
        self.slots[slot].1
    }
}

/// String-to-index map for one vocabulary kind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    kind: VocabKind,
    items: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Builds a vocabulary from `items`; open kinds get NULL and UNK prepended when absent.
    pub fn new(kind: VocabKind, items: Vec<String>) -> Result<Self> {
        let mut all = Vec::with_capacity(items.len() + 2);
        if kind.is_open() {
            all.push(NULL_TOKEN.to_string());
            all.push(UNK_TOKEN.to_string());
        }
        for it in items {
            if !(kind.is_open() && (it == NULL_TOKEN || it == UNK_TOKEN)) {
                all.push(it);
            }
        }
        let mut index = HashMap::with_capacity(all.len());
        for (i, it) in all.iter().enumerate() {
            if index.insert(it.clone(), i).is_some() {
                return Err(Error::Format(format!("duplicate {kind} vocabulary entry `{it}`")));
            }
        }
        Ok(Vocab { kind, items: all, index })
    }

    /// The fixed vocabularies of the distance and boolean kinds.
    pub fn closed(kind: VocabKind) -> Self {
        let items: &[&str] = match kind {
            VocabKind::Distance => &["-2", "-1", "+1", "+2", NULL_TOKEN],
            VocabKind::Boolean => &["0", "1"],
            _ => panic!("{kind} is an open vocabulary"),
        };
        Vocab::new(kind, items.iter().map(|s| s.to_string()).collect()).expect("fixed items are unique")
    }

    pub fn kind(&self) -> VocabKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn get(&self, item: &str) -> Option<usize> {
        self.index.get(item).copied()
    }

    /// Index of `item`; unknown values of open kinds map to UNK.
    pub fn encode(&self, item: &str) -> Result<usize> {
        let canon = match self.kind {
            VocabKind::Distance => match item {
                "1" => "+1",
                "2" => "+2",
                other => other,
            },
            _ => item,
        };
        match self.get(canon) {
            Some(i) => Ok(i),
            None if self.kind.is_open() => Ok(self.index[UNK_TOKEN]),
            None => Err(Error::Slot(format!("`{item}` is not a valid {} value", self.kind))),
        }
    }
}

/// Vocabularies for every kind built from training rows: POS tags and labels are kept in
/// full, words are limited to the `word_limit` most frequent (ties broken by string order).
pub fn build_vocabs(spec: &FeatureSpec, rows: &[ReorderInstance], word_limit: usize) -> Result<Vec<Vocab>> {
    let mut counts: Vec<HashMap<&str, usize>> = vec![HashMap::new(); VocabKind::ALL.len()];
    for row in rows {
        if row.slots.len() != spec.len() {
            return Err(Error::Slot(format!("expected {} slots, found {}", spec.len(), row.slots.len())));
        }
        for (slot, value) in row.slots.iter().enumerate() {
            let kind = spec.kind(slot);
            if kind.is_open() {
                *counts[kind.index()].entry(value.as_str()).or_default() += 1;
            }
        }
    }
    VocabKind::ALL
        .into_iter()
        .map(|kind| {
            if !kind.is_open() {
                return Ok(Vocab::closed(kind));
            }
            let mut items: Vec<(&str, usize)> = counts[kind.index()]
                .iter()
                .filter(|(w, _)| **w != NULL_TOKEN && **w != UNK_TOKEN)
                .map(|(w, c)| (*w, *c))
                .collect();
            items.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
            if kind == VocabKind::Word {
                items.truncate(word_limit);
            }
            Vocab::new(kind, items.into_iter().map(|(w, _)| w.to_string()).collect())
        })
        .collect()
}
