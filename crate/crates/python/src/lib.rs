//! Python bindings. Text formats match the command-line tool so files can be passed
//! between the two freely.

use std::collections::HashMap;
use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use depreorder::bleu::bleu as corpus_bleu;
use depreorder::corpus::{parse_conll, read_aligned_corpus, DepSentence};
use depreorder::decoder::{self, DecoderConfig, Ensembles, Models, NgramLm, PhraseTable, SparseWeights, Weights};
use depreorder::embed::{self, EmbeddingTable, SkipGramConfig};
use depreorder::extract::{self as ex, PunctTags, Relation, ReorderInstance};
use depreorder::nn::{self, BatchMode, NetDims, ReorderNet, TrainConfig};

fn err(e: depreorder::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn relation(name: &str) -> PyResult<Relation> {
    name.parse().map_err(err)
}

/// One dependency-parsed source sentence.
#[pyclass(name = "Sentence", frozen, from_py_object)]
#[derive(Clone)]
struct PySentence(DepSentence);

#[pymethods]
impl PySentence {
    fn words(&self) -> Vec<String> {
        self.0.words().map(str::to_string).collect()
    }

    fn tags(&self) -> Vec<String> {
        (1..=self.0.len()).map(|i| self.0.pos(i).to_string()).collect()
    }

    /// 1-based heads, 0 for the root, as in the input file.
    fn heads(&self) -> Vec<usize> {
        (1..=self.0.len()).map(|i| self.0.head(i)).collect()
    }

    fn labels(&self) -> Vec<String> {
        (1..=self.0.len()).map(|i| self.0.label(i).to_string()).collect()
    }

    fn to_conll(&self) -> String {
        self.0.to_conll()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("Sentence({:?})", self.words().join(" "))
    }
}

#[pyfunction]
fn parse(conll: &str) -> PyResult<Vec<PySentence>> {
    Ok(parse_conll(conll).map_err(err)?.into_iter().map(PySentence).collect())
}

/// Reordering instances as `(slots, label)` tuples, label 1 meaning swapped.
#[pyfunction]
#[pyo3(signature = (conll, target, align, relation_name, punct = "PU"))]
fn extract(conll: &str, target: &str, align: &str, relation_name: &str, punct: &str) -> PyResult<Vec<(Vec<String>, u8)>> {
    let pairs = read_aligned_corpus(conll, target, align).map_err(err)?;
    let punct = PunctTags::parse_list(punct);
    let rows: Vec<ReorderInstance> = match relation(relation_name)? {
        Relation::HeadChild => pairs
            .iter()
            .flat_map(|p| ex::extract_head_child(p, &punct))
            .map(|r| r.to_instance())
            .collect(),
        Relation::Sibling => pairs
            .iter()
            .flat_map(|p| ex::extract_sibling(p, &punct))
            .map(|r| r.to_instance())
            .collect(),
    };
    Ok(rows.into_iter().map(|r| (r.slots, r.label.as_label())).collect())
}

/// The dependency-context corpus fed to skip-gram training.
#[pyfunction]
fn dep_context_corpus(conll: &str) -> PyResult<Vec<Vec<String>>> {
    Ok(embed::gen_dep_context_corpus(&parse_conll(conll).map_err(err)?))
}

#[pyclass(name = "Embeddings", frozen)]
struct PyEmbeddings(EmbeddingTable);

#[pymethods]
impl PyEmbeddings {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let f = std::fs::File::open(&path).map_err(|e| PyValueError::new_err(format!("{}: {e}", path.display())))?;
        Ok(PyEmbeddings(EmbeddingTable::load(std::io::BufReader::new(f)).map_err(err)?))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        std::fs::write(&path, self.0.to_text()).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn vector(&self, word: &str) -> Option<Vec<f64>> {
        self.0.get(word).map(|v| v.to_vec())
    }

    fn similarity(&self, a: &str, b: &str) -> Option<f64> {
        Some(embed::cosine(self.0.get(a)?, self.0.get(b)?))
    }

    fn words(&self) -> Vec<String> {
        self.0.words().to_vec()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

/// Skip-gram training; context-marked vocabulary entries are dropped from the result.
#[pyfunction]
#[pyo3(signature = (corpus, dim = 100, window = 1, negatives = 5, epochs = 5, lr = 0.025, min_count = 1, seed = 1))]
#[allow(clippy::too_many_arguments)]
fn train_embeddings(
    py: Python<'_>,
    corpus: Vec<Vec<String>>,
    dim: usize,
    window: usize,
    negatives: usize,
    epochs: usize,
    lr: f64,
    min_count: usize,
    seed: u64,
) -> PyResult<PyEmbeddings> {
    let cfg = SkipGramConfig {
        dim,
        window,
        negatives,
        epochs,
        learning_rate: lr,
        min_count,
        seed,
        threads: 1,
    };
    let model = py.detach(|| embed::train_skipgram(&corpus, &cfg)).map_err(err)?;
    Ok(PyEmbeddings(embed::filter_context_vocab(&model.raw_table())))
}

fn rows_of(relation: Relation, rows: Vec<(Vec<String>, u8)>) -> PyResult<Vec<ReorderInstance>> {
    let text = ex::write_instances(
        relation,
        &rows
            .into_iter()
            .map(|(slots, label)| {
                let label = ex::Order::from_label(label)
                    .ok_or_else(|| PyValueError::new_err(format!("label must be 0 or 1, got {label}")))?;
                Ok(ReorderInstance { slots, label })
            })
            .collect::<PyResult<Vec<_>>>()?,
    );
    // Round-tripping through the file format validates slot counts.
    let (_, rows) = ex::read_instances(&text).map_err(err)?;
    Ok(rows)
}

/// A trained swap classifier.
#[pyclass(name = "ReorderModel", frozen, from_py_object)]
#[derive(Clone)]
struct PyModel(ReorderNet);

#[pymethods]
impl PyModel {
    /// Trains `ensemble` members on `(slots, label)` rows; returns a list of models.
    #[staticmethod]
    #[pyo3(signature = (relation_name, train, heldout, embeddings = None, ensemble = 1, epochs = 100,
                        batch_size = 128, lr = 0.05, dropout = 0.5, seed = 1, embed_dim = 100,
                        hidden1 = 200, hidden2 = 100))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        py: Python<'_>,
        relation_name: &str,
        train: Vec<(Vec<String>, u8)>,
        heldout: Vec<(Vec<String>, u8)>,
        embeddings: Option<&PyEmbeddings>,
        ensemble: usize,
        epochs: usize,
        batch_size: usize,
        lr: f64,
        dropout: f64,
        seed: u64,
        embed_dim: usize,
        hidden1: usize,
        hidden2: usize,
    ) -> PyResult<Vec<PyModel>> {
        let rel = relation(relation_name)?;
        let (train, heldout) = (rows_of(rel, train)?, rows_of(rel, heldout)?);
        let cfg = TrainConfig {
            epochs,
            batch: BatchMode::Size(batch_size),
            learning_rate: lr,
            dropout,
            seed,
            dims: NetDims {
                embed_dim,
                hidden1,
                hidden2,
            },
            ..TrainConfig::default()
        };
        let pre = embeddings.map(|e| &e.0);
        let members = py
            .detach(|| nn::train_ensemble(rel, &train, &heldout, &cfg, pre, ensemble))
            .map_err(err)?;
        Ok(members.into_iter().map(PyModel).collect())
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyModel(nn::load_model_file(&path).map_err(err)?))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        nn::save_model_file(&self.0, &path).map_err(err)
    }

    #[getter]
    fn relation(&self) -> &'static str {
        self.0.spec().relation.name()
    }

    /// Probability that the pair is swapped on the target side.
    fn predict(&self, slots: Vec<String>) -> PyResult<f64> {
        self.0.predict_swap(&slots).map_err(err)
    }

    fn accuracy(&self, rows: Vec<(Vec<String>, u8)>) -> PyResult<f64> {
        let rows = rows_of(self.0.spec().relation, rows)?;
        nn::accuracy(&self.0, &rows).map_err(err)
    }
}

/// Phrase-based decoder with the dependency reordering features.
#[pyclass(name = "Decoder", frozen)]
struct PyDecoder {
    models: Models,
    cfg: DecoderConfig,
}

#[pymethods]
impl PyDecoder {
    /// `weights` maps feature names to weights; `distortion_limit=None` disables the limit.
    #[new]
    #[pyo3(signature = (phrase_table, lm_corpus, weights, lm_order = 3, hc_models = vec![], sib_models = vec![],
                        ds_weights = None, beam = 100, distortion_limit = Some(14), punct = "PU"))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        phrase_table: &str,
        lm_corpus: Vec<String>,
        weights: HashMap<String, f64>,
        lm_order: usize,
        hc_models: Vec<PyModel>,
        sib_models: Vec<PyModel>,
        ds_weights: Option<&str>,
        beam: usize,
        distortion_limit: Option<usize>,
        punct: &str,
    ) -> PyResult<Self> {
        let lm: Vec<Vec<&str>> = lm_corpus.iter().map(|l| l.split_whitespace().collect()).collect();
        let mut w = Weights::new();
        for (k, v) in &weights {
            w.set(k, *v).map_err(err)?;
        }
        let check = |ms: Vec<PyModel>, rel: Relation| -> PyResult<Vec<ReorderNet>> {
            ms.into_iter()
                .map(|m| {
                    if m.0.spec().relation == rel {
                        Ok(m.0)
                    } else {
                        Err(PyValueError::new_err(format!("expected a {} model", rel.name())))
                    }
                })
                .collect()
        };
        let models = Models {
            phrases: PhraseTable::parse(phrase_table).map_err(err)?,
            lm: NgramLm::train(&lm, lm_order).map_err(err)?,
            ds: match ds_weights {
                Some(t) => SparseWeights::parse(t).map_err(err)?,
                None => SparseWeights::new(),
            },
            ensembles: Ensembles {
                head_child: check(hc_models, Relation::HeadChild)?,
                sibling: check(sib_models, Relation::Sibling)?,
            },
        };
        let cfg = DecoderConfig {
            weights: w,
            distortion_limit,
            beam_size: beam,
            punct: PunctTags::parse_list(punct),
            kbest: 1,
        };
        cfg.validate().map_err(err)?;
        Ok(PyDecoder { models, cfg })
    }

    fn feature_names(&self) -> Vec<String> {
        self.models.feature_names()
    }

    /// k-best list of `(output, total, features)` for one sentence.
    #[pyo3(signature = (sentence, kbest = 1))]
    fn translate(
        &self,
        py: Python<'_>,
        sentence: &PySentence,
        kbest: usize,
    ) -> PyResult<Vec<(String, f64, HashMap<String, f64>)>> {
        let cfg = DecoderConfig {
            kbest,
            ..self.cfg.clone()
        };
        let ds = py
            .detach(|| decoder::decode(&sentence.0, &self.models, &cfg))
            .map_err(err)?;
        let names = self.models.feature_names();
        Ok(ds
            .into_iter()
            .map(|d| {
                let feats = names.iter().cloned().zip(d.features.iter().copied()).collect();
                (d.output().join(" "), d.total, feats)
            })
            .collect())
    }
}

/// Corpus BLEU in [0, 1]; `refs[i]` lists the references of `hyps[i]`.
#[pyfunction]
#[pyo3(signature = (hyps, refs, max_n = 4, case_insensitive = true))]
fn bleu(hyps: Vec<String>, refs: Vec<Vec<String>>, max_n: usize, case_insensitive: bool) -> PyResult<f64> {
    corpus_bleu(&hyps, &refs, max_n, case_insensitive).map_err(err)
}

#[pymodule]
fn pydepreorder(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySentence>()?;
    m.add_class::<PyEmbeddings>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyDecoder>()?;
    m.add_function(wrap_pyfunction!(parse, m)?)?;
    m.add_function(wrap_pyfunction!(extract, m)?)?;
    m.add_function(wrap_pyfunction!(dep_context_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(train_embeddings, m)?)?;
    m.add_function(wrap_pyfunction!(bleu, m)?)?;
    Ok(())
}
