//! Phrase-based beam-search decoder with dependency reordering features.

mod features;
mod lm;
mod phrase_table;
mod search;

pub use features::{
    dbr_penalty, ddp_penalty, ds_features, link_between, linked_words, nr_feature, orientation, zones, Coverage,
    Ensembles, Link, NrValues, Span, SparseWeights,
};
pub use lm::{LmState, NgramLm, BOS, EOS, UNK};
pub use phrase_table::{PhraseEntry, PhraseTable, MAX_PHRASE_LEN, PASS_THROUGH_SCORE};
pub use search::{decode, decode_all, Derivation, DecoderConfig, Models, Step, Weights, BASE_FEATURES};
