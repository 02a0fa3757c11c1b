//! Dependency-context corpora, skip-gram with negative sampling, and embedding tables.

use std::cell::UnsafeCell;
use std::collections::HashMap;
use std::io::{BufRead, Write};

use ndarray::{Array1, Array2, ArrayView1};
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::DepSentence;
use crate::error::{Error, Result};

pub const NULL_TOKEN: &str = "NULL";
pub const UNK_TOKEN: &str = "UNK";
/// Stand-in for the missing grandhead word of arcs attached to the artificial root.
pub const ROOT_WORD: &str = "ROOT";
/// Stand-in for the missing head label of arcs attached to the artificial root.
pub const ROOT_LABEL: &str = "root";

pub const HEAD_LABEL_MARK: &str = "<GL>";
pub const GRANDHEAD_MARK: &str = "<G>";
pub const CHILD_LABEL_MARK: &str = "<L>";

pub type Corpus = Vec<Vec<String>>;

pub fn is_context_marked(token: &str) -> bool {
    token.ends_with(HEAD_LABEL_MARK) || token.ends_with(GRANDHEAD_MARK) || token.ends_with(CHILD_LABEL_MARK)
}

/// One 5-token line per arc, `L(h)<GL> g<G> h c L(c)<L>`, including the arc from the
/// artificial root to the root token.
pub fn gen_dep_context_corpus(sentences: &[DepSentence]) -> Corpus {
    let mut lines = Vec::new();
    for s in sentences {
        for c in 1..=s.len() {
            let h = s.head(c);
            let (head_label, grandhead, head_word) = if h == 0 {
                (ROOT_LABEL, ROOT_WORD, ROOT_WORD)
            } else {
                let g = s.head(h);
                let grandhead = if g == 0 { ROOT_WORD } else { s.surface(g) };
                (s.label(h), grandhead, s.surface(h))
            };
            lines.push(vec![
                format!("{head_label}{HEAD_LABEL_MARK}"),
                format!("{grandhead}{GRANDHEAD_MARK}"),
                head_word.to_string(),
                s.surface(c).to_string(),
                format!("{}{CHILD_LABEL_MARK}", s.label(c)),
            ]);
        }
    }
    lines
}

/// Surface sentences as a plain corpus, for the window-5 baseline scheme.
pub fn surface_corpus(sentences: &[DepSentence]) -> Corpus {
    sentences
        .iter()
        .map(|s| s.words().map(str::to_string).collect())
        .collect()
}

pub fn format_corpus(corpus: &Corpus) -> String {
    let mut out = String::new();
    for line in corpus {
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_corpus(text: &str) -> Corpus {
    text.lines()
        .map(|l| l.split_whitespace().map(str::to_string).collect::<Vec<_>>())
        .filter(|l| !l.is_empty())
        .collect()
}

/// Word-to-vector map with a fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Array2<f64>,
}

impl EmbeddingTable {
    pub fn new(words: Vec<String>, vectors: Array2<f64>) -> Result<Self> {
        if vectors.nrows() != words.len() {
            return Err(Error::Dimension {
                expected: words.len(),
                found: vectors.nrows(),
            });
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::Format(format!("duplicate vocabulary entry `{w}`")));
            }
        }
        Ok(EmbeddingTable {
            dim: vectors.ncols(),
            words,
            index,
            vectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn get(&self, word: &str) -> Option<ArrayView1<'_, f64>> {
        self.index.get(word).map(|&i| self.vectors.row(i))
    }

    /// Vector for `word`, falling back to UNK.
    pub fn lookup(&self, word: &str) -> Option<ArrayView1<'_, f64>> {
        self.get(word).or_else(|| self.get(UNK_TOKEN))
    }

    pub fn has_specials(&self) -> bool {
        self.contains(NULL_TOKEN) && self.contains(UNK_TOKEN)
    }

    /// Text format: a `V D` header, then `word v1 ... vD` per line. Values are written in
    /// shortest round-trip form so loading reproduces them exactly.
    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {}", self.len(), self.dim)?;
        for (word, row) in self.words.iter().zip(self.vectors.rows()) {
            write!(w, "{word}")?;
            for v in row {
                write!(w, " {v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.save(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("utf-8")
    }

    pub fn load<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or(Error::Empty("embedding file"))??;
        let mut parts = header.split_whitespace();
        let parse_header = |p: Option<&str>| -> Result<usize> {
            p.and_then(|x| x.parse().ok()).ok_or_else(|| Error::Parse {
                line: 1,
                msg: format!("expected `V D` header, found `{header}`"),
            })
        };
        let v = parse_header(parts.next())?;
        let d = parse_header(parts.next())?;
        Self::read_rows(&mut lines.map(|l| l.map_err(Error::from)), v, d, 2)
    }

    /// Reads `v` rows of `word v1 .. vd`; `first_line` is used for error messages.
    pub(crate) fn read_rows<I>(lines: &mut I, v: usize, d: usize, first_line: usize) -> Result<Self>
    where
        I: Iterator<Item = Result<String>>,
    {
        let mut words = Vec::with_capacity(v);
        let mut vectors = Array2::zeros((v, d));
        for k in 0..v {
            let line = lines.next().ok_or_else(|| Error::Parse {
                line: first_line + k,
                msg: format!("expected {v} vectors, file ended after {k}"),
            })??;
            let mut fields = line.split(' ');
            let word = fields.next().unwrap_or_default().to_string();
            let values: Vec<f64> = fields
                .filter(|f| !f.is_empty())
                .map(|f| {
                    f.parse().map_err(|_| Error::Parse {
                        line: first_line + k,
                        msg: format!("invalid number `{f}`"),
                    })
                })
                .collect::<Result<_>>()?;
            if values.len() != d {
                return Err(Error::Dimension {
                    expected: d,
                    found: values.len(),
                });
            }
            vectors.row_mut(k).assign(&Array1::from(values));
            words.push(word);
        }
        EmbeddingTable::new(words, vectors)
    }
}

/// Symmetric range used for uniform initialization of `dim`-dimensional vectors.
pub fn init_range(dim: usize) -> f64 {
    (6.0 / dim as f64).sqrt()
}

/// Uniform random vectors on `[-r, r]`, `r = sqrt(6/dim)`, plus NULL (zero) and UNK entries.
pub fn random_table(vocab: &[String], dim: usize, seed: u64) -> EmbeddingTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = init_range(dim);
    let mut words: Vec<String> = Vec::with_capacity(vocab.len() + 2);
    let mut seen = std::collections::HashSet::new();
    for w in vocab {
        if w != NULL_TOKEN && w != UNK_TOKEN && seen.insert(w.as_str()) {
            words.push(w.clone());
        }
    }
    words.push(UNK_TOKEN.to_string());
    let mut vectors = Array2::from_shape_fn((words.len() + 1, dim), |_| rng.gen_range(-r..=r));
    words.push(NULL_TOKEN.to_string());
    vectors.row_mut(words.len() - 1).fill(0.0);
    EmbeddingTable::new(words, vectors).expect("unique words")
}

/// Drops context-marked tokens and adds NULL (zero vector) and UNK (centroid of the kept words).
pub fn filter_context_vocab(raw: &EmbeddingTable) -> EmbeddingTable {
    let keep: Vec<usize> = (0..raw.len())
        .filter(|&i| {
            let w = &raw.words[i];
            !is_context_marked(w) && w != NULL_TOKEN && w != UNK_TOKEN
        })
        .collect();
    let dim = raw.dim;
    let mut words: Vec<String> = keep.iter().map(|&i| raw.words[i].clone()).collect();
    let mut vectors = Array2::zeros((keep.len() + 2, dim));
    let mut centroid = Array1::<f64>::zeros(dim);
    for (row, &i) in keep.iter().enumerate() {
        vectors.row_mut(row).assign(&raw.vectors.row(i));
        centroid += &raw.vectors.row(i);
    }
    if !keep.is_empty() {
        centroid /= keep.len() as f64;
    }
    vectors.row_mut(keep.len()).assign(&centroid);
    words.push(UNK_TOKEN.to_string());
    words.push(NULL_TOKEN.to_string());
    EmbeddingTable::new(words, vectors).expect("unique words")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkipGramConfig {
    pub dim: usize,
    /// Context half-width.
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub min_count: usize,
    pub seed: u64,
    /// 1 = deterministic. More threads train shards concurrently without locking and are
    /// not reproducible run to run.
    pub threads: usize,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig {
            dim: 100,
            window: 1,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            min_count: 1,
            seed: 1,
            threads: 1,
        }
    }
}

impl SkipGramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.window == 0 || self.negatives == 0 {
            return Err(Error::Config("skip-gram dim, window and negatives must be >= 1".into()));
        }
        if self.threads == 0 {
            return Err(Error::Config("skip-gram threads must be >= 1".into()));
        }
        Ok(())
    }
}

/// Trained skip-gram parameters: word (input) and context (output) vectors.
#[derive(Debug, Clone)]
pub struct SkipGramModel {
    vocab: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
    input: Array2<f64>,
    output: Array2<f64>,
    noise: Vec<f64>,
    window: usize,
    negatives: usize,
}

impl SkipGramModel {
    /// Vocabulary (tokens with at least `min_count` occurrences, most frequent first) and
    /// freshly initialized parameters.
    pub fn initialize(corpus: &Corpus, cfg: &SkipGramConfig) -> Result<Self> {
        cfg.validate()?;
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for line in corpus {
            for tok in line {
                *counts.entry(tok.as_str()).or_default() += 1;
            }
        }
        let mut vocab: Vec<(&str, u64)> = counts.into_iter().filter(|&(_, c)| c as usize >= cfg.min_count).collect();
        if vocab.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        vocab.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let index: HashMap<String, usize> = vocab.iter().enumerate().map(|(i, (w, _))| (w.to_string(), i)).collect();
        let counts: Vec<u64> = vocab.iter().map(|&(_, c)| c).collect();
        let z: f64 = counts.iter().map(|&c| (c as f64).powf(0.75)).sum();
        let noise = counts.iter().map(|&c| (c as f64).powf(0.75) / z).collect();

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let half = 0.5 / cfg.dim as f64;
        let input = Array2::from_shape_fn((vocab.len(), cfg.dim), |_| rng.gen_range(-half..half));
        let output = Array2::zeros((vocab.len(), cfg.dim));
        Ok(SkipGramModel {
            vocab: vocab.into_iter().map(|(w, _)| w.to_string()).collect(),
            counts,
            index,
            input,
            output,
            noise,
            window: cfg.window,
            negatives: cfg.negatives,
        })
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn count(&self, word: &str) -> Option<u64> {
        self.index.get(word).map(|&i| self.counts[i])
    }

    pub fn input_vectors(&self) -> &Array2<f64> {
        &self.input
    }

    pub fn output_vectors(&self) -> &Array2<f64> {
        &self.output
    }

    /// Word vectors of every vocabulary item, context-marked tokens included.
    pub fn raw_table(&self) -> EmbeddingTable {
        EmbeddingTable::new(self.vocab.clone(), self.input.clone()).expect("unique vocabulary")
    }

    fn encode(&self, corpus: &Corpus) -> Vec<Vec<usize>> {
        corpus
            .iter()
            .map(|l| l.iter().filter_map(|t| self.index.get(t).copied()).collect::<Vec<_>>())
            .filter(|l| l.len() > 1)
            .collect()
    }

    /// Negative-sampling objective with the negative term taken in expectation over the
    /// noise distribution, summed over all (word, context) pairs of the corpus. Noise draws
    /// that hit the positive context contribute nothing, as in training.
    pub fn objective(&self, corpus: &Corpus) -> f64 {
        let lines = self.encode(corpus);
        let k = self.negatives as f64;
        // E_n[ln sigma(-u_n . v_w)] depends only on w
        let mut neg_term: HashMap<usize, f64> = HashMap::new();
        let mut total = 0.0;
        for line in &lines {
            for (i, &w) in line.iter().enumerate() {
                let v = self.input.row(w);
                let neg = *neg_term.entry(w).or_insert_with(|| {
                    self.noise
                        .iter()
                        .enumerate()
                        .map(|(n, &p)| p * log_sigmoid(-self.output.row(n).dot(&v)))
                        .sum()
                });
                for j in context_range(i, line.len(), self.window) {
                    let c = line[j];
                    // negatives equal to the positive context are skipped while training
                    let own = self.noise[c] * log_sigmoid(-self.output.row(c).dot(&v));
                    total -= log_sigmoid(self.output.row(c).dot(&v)) + k * (neg - own);
                }
            }
        }
        total
    }
}

fn context_range(i: usize, len: usize, window: usize) -> impl Iterator<Item = usize> {
    let lo = i.saturating_sub(window);
    let hi = (i + window).min(len - 1);
    (lo..=hi).filter(move |&j| j != i)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Raw parameter storage shared between shard workers in parallel mode.
struct SharedParams {
    input: UnsafeCell<Array2<f64>>,
    output: UnsafeCell<Array2<f64>>,
}

// Parallel mode updates rows without synchronization (Hogwild-style); races only perturb
// floating-point values and never touch the array metadata.
unsafe impl Sync for SharedParams {}

struct SgdStep<'a> {
    dim: usize,
    negatives: usize,
    window: usize,
    sampler: &'a WeightedIndex<f64>,
}

impl SgdStep<'_> {
    /// One pass over `line` at learning rate `lr`.
    ///
    /// # Safety
    /// `input` and `output` must point to valid arrays whose shape is not changed concurrently.
    unsafe fn run_line(&self, line: &[usize], lr: f64, input: *mut Array2<f64>, output: *mut Array2<f64>, rng: &mut ChaCha8Rng) {
        let mut grad = vec![0.0; self.dim];
        for (i, &w) in line.iter().enumerate() {
            for j in context_range(i, line.len(), self.window) {
                let ctx = line[j];
                grad.iter_mut().for_each(|g| *g = 0.0);
                let mut targets = Vec::with_capacity(self.negatives + 1);
                targets.push((ctx, 1.0));
                for _ in 0..self.negatives {
                    let n = self.sampler.sample(rng);
                    if n != ctx {
                        targets.push((n, 0.0));
                    }
                }
                for (t, label) in targets {
                    let v = (*input).row(w);
                    let mut u = (*output).row_mut(t);
                    let g = (label - sigmoid(u.dot(&v))) * lr;
                    for d in 0..self.dim {
                        grad[d] += g * u[d];
                        u[d] += g * v[d];
                    }
                }
                let mut v = (*input).row_mut(w);
                for d in 0..self.dim {
                    v[d] += grad[d];
                }
            }
        }
    }
}

/// Trains skip-gram with negative sampling.
///
/// Lines are put in canonical (sorted) order before the seeded per-epoch shuffle, so with one
/// thread the result depends only on the multiset of lines and the seed.
pub fn train_skipgram(corpus: &Corpus, cfg: &SkipGramConfig) -> Result<SkipGramModel> {
    train_skipgram_observed(corpus, cfg, |_, _| {})
}

/// Like [`train_skipgram`], calling `observer(epoch, model)` after every epoch.
pub fn train_skipgram_observed<F>(corpus: &Corpus, cfg: &SkipGramConfig, mut observer: F) -> Result<SkipGramModel>
where
    F: FnMut(usize, &SkipGramModel),
{
    let mut model = SkipGramModel::initialize(corpus, cfg)?;
    let mut lines = model.encode(corpus);
    if lines.is_empty() && cfg.epochs > 0 {
        return Err(Error::Empty("skip-gram corpus has no line with two in-vocabulary tokens"));
    }
    lines.sort();
    let sampler = WeightedIndex::new(&model.noise).expect("positive noise weights");
    let step = SgdStep {
        dim: cfg.dim,
        negatives: cfg.negatives,
        window: cfg.window,
        sampler: &sampler,
    };
    let total_lines = (lines.len() * cfg.epochs).max(1) as f64;
    let lr_at = |done: usize| cfg.learning_rate * (1.0 - done as f64 / total_lines).max(1e-4);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    for epoch in 0..cfg.epochs {
        lines.shuffle(&mut rng);
        let base = epoch * lines.len();
        if cfg.threads == 1 {
            let (input, output): (*mut Array2<f64>, *mut Array2<f64>) = (&mut model.input, &mut model.output);
            for (k, line) in lines.iter().enumerate() {
                // SAFETY: exclusive borrows of the model arrays held for the whole loop.
                unsafe { step.run_line(line, lr_at(base + k), input, output, &mut rng) };
            }
        } else {
            let shared = SharedParams {
                input: UnsafeCell::new(std::mem::take(&mut model.input)),
                output: UnsafeCell::new(std::mem::take(&mut model.output)),
            };
            let shard_len = lines.len().div_ceil(cfg.threads);
            let seeds: Vec<u64> = (0..cfg.threads).map(|_| rng.gen()).collect();
            std::thread::scope(|scope| {
                for (shard_no, shard) in lines.chunks(shard_len).enumerate() {
                    let (shared, step, seed, lr_at) = (&shared, &step, seeds[shard_no], &lr_at);
                    scope.spawn(move || {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        for (k, line) in shard.iter().enumerate() {
                            let done = base + shard_no * shard_len + k;
                            // SAFETY: shapes are fixed while threads run; concurrent element
                            // updates are the accepted lock-free trade-off of this mode.
                            unsafe { step.run_line(line, lr_at(done), shared.input.get(), shared.output.get(), &mut rng) };
                        }
                    });
                }
            });
            model.input = shared.input.into_inner();
            model.output = shared.output.into_inner();
        }
        observer(epoch, &model);
    }
    Ok(model)
}

pub fn cosine(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let denom = a.dot(&a).sqrt() * b.dot(&b).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        a.dot(&b) / denom
    }
}
