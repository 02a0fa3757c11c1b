//! Feed-forward reordering classifiers for head-child and sibling word pairs.

mod io;
mod net;
mod spec;
mod train;

pub use io::{load_model, load_model_file, save_model, save_model_file};
pub use net::{cross_entropy, dropout_mask, relu, sigmoid, Encoded, Example, Gradients, LookupTable, NetDims, Param, ReorderNet, EPS};
pub use spec::{build_vocabs, FeatureSpec, Vocab, VocabKind};
pub use train::{accuracy, train, train_ensemble, train_with_report, BatchMode, TrainConfig, TrainReport};
