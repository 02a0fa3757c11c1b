use std::collections::BTreeMap;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::spec::{FeatureSpec, Vocab, VocabKind};
use crate::embed::{init_range, EmbeddingTable, NULL_TOKEN};
use crate::error::{Error, Result};

/// Predictions are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetDims {
    pub embed_dim: usize,
    pub hidden1: usize,
    pub hidden2: usize,
}

impl Default for NetDims {
    fn default() -> Self {
        NetDims {
            embed_dim: 100,
            hidden1: 200,
            hidden2: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LookupTable {
    pub vocab: Vocab,
    pub weights: Array2<f64>,
}

/// Slot values mapped to row indices of their lookup tables.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Encoded(pub Vec<usize>);

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: Encoded,
    /// 1.0 for swapped, 0.0 for in order.
    pub target: f64,
}

/// Addresses a single scalar parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Param {
    W1(usize, usize),
    B1(usize),
    W2(usize, usize),
    B2(usize),
    WOut(usize),
    BOut,
    Embedding(VocabKind, usize, usize),
}

/// Feed-forward binary reordering classifier: lookup layer, two relu layers, sigmoid output.
#[derive(Debug, Clone, PartialEq)]
pub struct ReorderNet {
    pub(crate) spec: FeatureSpec,
    pub(crate) dims: NetDims,
    pub(crate) tables: Vec<LookupTable>,
    pub(crate) w1: Array2<f64>,
    pub(crate) b1: Array1<f64>,
    pub(crate) w2: Array2<f64>,
    pub(crate) b2: Array1<f64>,
    pub(crate) w_out: Array1<f64>,
    pub(crate) b_out: f64,
    pub(crate) dropout: f64,
}

/// Gradient of the batch loss. Embedding rows absent from `embeddings` have zero gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w_out: Array1<f64>,
    pub b_out: f64,
    pub embeddings: BTreeMap<(VocabKind, usize), Array1<f64>>,
}

impl Gradients {
    pub fn get(&self, p: Param) -> f64 {
        match p {
            Param::W1(r, c) => self.w1[[r, c]],
            Param::B1(i) => self.b1[i],
            Param::W2(r, c) => self.w2[[r, c]],
            Param::B2(i) => self.b2[i],
            Param::WOut(i) => self.w_out[i],
            Param::BOut => self.b_out,
            Param::Embedding(k, row, col) => self.embeddings.get(&(k, row)).map_or(0.0, |g| g[col]),
        }
    }

    pub fn max_abs(&self) -> f64 {
        let dense = self
            .w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
            .chain(&self.w_out)
            .chain(std::iter::once(&self.b_out));
        dense
            .chain(self.embeddings.values().flatten())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

struct Activations {
    x: Array2<f64>,
    h1_pre: Array2<f64>,
    h1: Array2<f64>,
    h2_pre: Array2<f64>,
    h2: Array2<f64>,
    y: Array1<f64>,
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Inverted-dropout mask: each entry is 0 with probability `p`, else `1 / (1 - p)`.
pub fn dropout_mask(rows: usize, cols: usize, p: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let keep = 1.0 - p;
    Array2::from_shape_simple_fn((rows, cols), || if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
}

/// Mean cross-entropy of predictions `y` against `targets`, predictions clamped to `[EPS, 1-EPS]`.
pub fn cross_entropy(y: &[f64], targets: &[f64]) -> f64 {
    let t = y.len() as f64;
    -y.iter()
        .zip(targets)
        .map(|(&p, &t)| {
            let p = p.clamp(EPS, 1.0 - EPS);
            t * p.ln() + (1.0 - t) * (1.0 - p).ln()
        })
        .sum::<f64>()
        / t
}

fn uniform(rng: &mut ChaCha8Rng, shape: (usize, usize), r: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || rng.gen_range(-r..=r))
}

impl ReorderNet {
    /// Randomly initialized network. Word rows found in `pretrained` are copied from it; the
    /// word NULL row starts at zero.
    pub fn init(
        spec: FeatureSpec,
        vocabs: Vec<Vocab>,
        dims: NetDims,
        dropout: f64,
        pretrained: Option<&EmbeddingTable>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::Config(format!("dropout must be in [0, 1), got {dropout}")));
        }
        if let Some(t) = pretrained {
            if t.dim() != dims.embed_dim {
                return Err(Error::Dimension {
                    expected: dims.embed_dim,
                    found: t.dim(),
                });
            }
        }
        let d = dims.embed_dim;
        let r = init_range(d);
        let tables = vocabs
            .into_iter()
            .map(|vocab| {
                let mut weights = uniform(rng, (vocab.len(), d), r);
                if vocab.kind() == VocabKind::Word {
                    for (i, w) in vocab.items().iter().enumerate() {
                        if w == NULL_TOKEN {
                            weights.row_mut(i).fill(0.0);
                        } else if let Some(v) = pretrained.and_then(|t| t.get(w)) {
                            weights.row_mut(i).assign(&v);
                        }
                    }
                }
                LookupTable { vocab, weights }
            })
            .collect();
        let input = spec.len() * d;
        let glorot = |fan_in: usize, fan_out: usize| (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w1 = uniform(rng, (dims.hidden1, input), glorot(input, dims.hidden1));
        let w2 = uniform(rng, (dims.hidden2, dims.hidden1), glorot(dims.hidden1, dims.hidden2));
        let r_out = glorot(dims.hidden2, 1);
        let w_out = Array1::from_shape_simple_fn(dims.hidden2, || rng.gen_range(-r_out..=r_out));
        Ok(ReorderNet {
            spec,
            dims,
            tables,
            w1,
            b1: Array1::zeros(dims.hidden1),
            w2,
            b2: Array1::zeros(dims.hidden2),
            w_out,
            b_out: 0.0,
            dropout,
        })
    }

    /// All parameters zero; predicts 0.5 for every input.
    pub fn zeros(spec: FeatureSpec, vocabs: Vec<Vocab>, dims: NetDims) -> Self {
        let d = dims.embed_dim;
        let tables = vocabs
            .into_iter()
            .map(|vocab| LookupTable {
                weights: Array2::zeros((vocab.len(), d)),
                vocab,
            })
            .collect();
        ReorderNet {
            w1: Array2::zeros((dims.hidden1, spec.len() * d)),
            spec,
            dims,
            tables,
            b1: Array1::zeros(dims.hidden1),
            w2: Array2::zeros((dims.hidden2, dims.hidden1)),
            b2: Array1::zeros(dims.hidden2),
            w_out: Array1::zeros(dims.hidden2),
            b_out: 0.0,
            dropout: 0.0,
        }
    }

    pub fn spec(&self) -> &FeatureSpec {
        &self.spec
    }

    pub fn dims(&self) -> NetDims {
        self.dims
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub fn table(&self, kind: VocabKind) -> &LookupTable {
        &self.tables[kind.index()]
    }

    pub fn input_width(&self) -> usize {
        self.spec.len() * self.dims.embed_dim
    }

    pub fn encode<S: AsRef<str>>(&self, slots: &[S]) -> Result<Encoded> {
        if slots.len() != self.spec.len() {
            return Err(Error::Slot(format!(
                "{} classifier expects {} slots, got {}",
                self.spec.relation.name(),
                self.spec.len(),
                slots.len()
            )));
        }
        slots
            .iter()
            .enumerate()
            .map(|(i, v)| self.tables[self.spec.kind(i).index()].vocab.encode(v.as_ref()))
            .collect::<Result<_>>()
            .map(Encoded)
    }

    pub fn param(&self, p: Param) -> f64 {
        match p {
            Param::W1(r, c) => self.w1[[r, c]],
            Param::B1(i) => self.b1[i],
            Param::W2(r, c) => self.w2[[r, c]],
            Param::B2(i) => self.b2[i],
            Param::WOut(i) => self.w_out[i],
            Param::BOut => self.b_out,
            Param::Embedding(k, row, col) => self.tables[k.index()].weights[[row, col]],
        }
    }

    pub fn set_param(&mut self, p: Param, v: f64) {
        match p {
            Param::W1(r, c) => self.w1[[r, c]] = v,
            Param::B1(i) => self.b1[i] = v,
            Param::W2(r, c) => self.w2[[r, c]] = v,
            Param::B2(i) => self.b2[i] = v,
            Param::WOut(i) => self.w_out[i] = v,
            Param::BOut => self.b_out = v,
            Param::Embedding(k, row, col) => self.tables[k.index()].weights[[row, col]] = v,
        }
    }

    /// Every hidden-layer and output parameter (embedding entries excluded).
    pub fn dense_params(&self) -> Vec<Param> {
        let mut out = Vec::new();
        for ((r, c), _) in self.w1.indexed_iter() {
            out.push(Param::W1(r, c));
        }
        out.extend((0..self.b1.len()).map(Param::B1));
        for ((r, c), _) in self.w2.indexed_iter() {
            out.push(Param::W2(r, c));
        }
        out.extend((0..self.b2.len()).map(Param::B2));
        out.extend((0..self.w_out.len()).map(Param::WOut));
        out.push(Param::BOut);
        out
    }

    /// Concatenated slot embeddings, one row per input.
    fn gather<'a, I>(&self, inputs: I, rows: usize) -> Array2<f64>
    where
        I: IntoIterator<Item = &'a Encoded>,
    {
        let d = self.dims.embed_dim;
        let mut x = Array2::zeros((rows, self.input_width()));
        for (r, enc) in inputs.into_iter().enumerate() {
            for (slot, &id) in enc.0.iter().enumerate() {
                let kind = self.spec.kind(slot);
                x.row_mut(r)
                    .slice_mut(ndarray::s![slot * d..(slot + 1) * d])
                    .assign(&self.tables[kind.index()].weights.row(id));
            }
        }
        x
    }

    fn activations(&self, mut x: Array2<f64>, mask: Option<&Array2<f64>>) -> Activations {
        if let Some(m) = mask {
            x *= m;
        }
        let h1_pre = x.dot(&self.w1.t()) + &self.b1;
        let h1 = h1_pre.mapv(relu);
        let h2_pre = h1.dot(&self.w2.t()) + &self.b2;
        let h2 = h2_pre.mapv(relu);
        let y = (h2.dot(&self.w_out) + self.b_out).mapv(sigmoid);
        Activations {
            x,
            h1_pre,
            h1,
            h2_pre,
            h2,
            y,
        }
    }

    /// Swap probability for one input. With `dropout_rng` set, the input layer is masked
    /// with inverted dropout.
    pub fn forward(&self, input: &Encoded, dropout_rng: Option<&mut ChaCha8Rng>) -> f64 {
        let x = self.gather(std::iter::once(input), 1);
        let mask = dropout_rng.map(|rng| dropout_mask(1, x.ncols(), self.dropout, rng));
        self.activations(x, mask.as_ref()).y[0]
    }

    /// Eval-mode probabilities for many inputs.
    pub fn forward_batch(&self, inputs: &[&Encoded]) -> Vec<f64> {
        if inputs.is_empty() {
            return Vec::new();
        }
        let x = self.gather(inputs.iter().copied(), inputs.len());
        self.activations(x, None).y.to_vec()
    }

    /// Upper hidden layer activations in eval mode.
    pub fn hidden_activations(&self, input: &Encoded) -> Array1<f64> {
        let x = self.gather(std::iter::once(input), 1);
        self.activations(x, None).h2.row(0).to_owned()
    }

    /// Eval-mode mean cross-entropy.
    pub fn loss(&self, batch: &[Example]) -> f64 {
        let inputs: Vec<&Encoded> = batch.iter().map(|e| &e.input).collect();
        let targets: Vec<f64> = batch.iter().map(|e| e.target).collect();
        cross_entropy(&self.forward_batch(&inputs), &targets)
    }

    /// Mean cross-entropy and its exact gradient. `mask`, if given, is the dropout mask
    /// applied to the input layer (batch rows x input width).
    pub fn loss_and_grad(&self, batch: &[Example], mask: Option<&Array2<f64>>) -> (f64, Gradients) {
        let n = batch.len();
        let x = self.gather(batch.iter().map(|e| &e.input), n);
        let act = self.activations(x, mask);
        let targets: Vec<f64> = batch.iter().map(|e| e.target).collect();
        let y = act.y.to_vec();
        let loss = cross_entropy(&y, &targets);

        // d loss / d z; zero where the clamp is active.
        let dz = Array1::from_shape_fn(n, |i| {
            if y[i] < EPS || y[i] > 1.0 - EPS {
                0.0
            } else {
                (y[i] - targets[i]) / n as f64
            }
        });
        let w_out = act.h2.t().dot(&dz);
        let b_out = dz.sum();
        let mut d_h2 = dz.view().insert_axis(Axis(1)).dot(&self.w_out.view().insert_axis(Axis(0)));
        d_h2.zip_mut_with(&act.h2_pre, |g, &pre| {
            if pre <= 0.0 {
                *g = 0.0
            }
        });
        let w2 = d_h2.t().dot(&act.h1);
        let b2 = d_h2.sum_axis(Axis(0));
        let mut d_h1 = d_h2.dot(&self.w2);
        d_h1.zip_mut_with(&act.h1_pre, |g, &pre| {
            if pre <= 0.0 {
                *g = 0.0
            }
        });
        let w1 = d_h1.t().dot(&act.x);
        let b1 = d_h1.sum_axis(Axis(0));
        let mut d_x = d_h1.dot(&self.w1);
        if let Some(m) = mask {
            d_x *= m;
        }

        let d = self.dims.embed_dim;
        let mut embeddings: BTreeMap<(VocabKind, usize), Array1<f64>> = BTreeMap::new();
        for (r, ex) in batch.iter().enumerate() {
            for (slot, &id) in ex.input.0.iter().enumerate() {
                let g = d_x.slice(ndarray::s![r, slot * d..(slot + 1) * d]);
                embeddings
                    .entry((self.spec.kind(slot), id))
                    .and_modify(|acc| *acc += &g)
                    .or_insert_with(|| g.to_owned());
            }
        }

        (
            loss,
            Gradients {
                w1,
                b1,
                w2,
                b2,
                w_out,
                b_out,
                embeddings,
            },
        )
    }

    /// Plain SGD step.
    pub fn apply(&mut self, g: &Gradients, lr: f64) {
        self.w1.scaled_add(-lr, &g.w1);
        self.b1.scaled_add(-lr, &g.b1);
        self.w2.scaled_add(-lr, &g.w2);
        self.b2.scaled_add(-lr, &g.b2);
        self.w_out.scaled_add(-lr, &g.w_out);
        self.b_out -= lr * g.b_out;
        for (&(kind, row), grad) in &g.embeddings {
            self.tables[kind.index()].weights.row_mut(row).scaled_add(-lr, grad);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.w1.iter().chain(&self.b1).chain(&self.w2).chain(&self.b2).chain(&self.w_out).all(|v| v.is_finite())
            && self.b_out.is_finite()
            && self.tables.iter().all(|t| t.weights.iter().all(|v| v.is_finite()))
    }

    /// Swap probability for raw slot values in eval mode. Unknown words map to UNK.
    pub fn predict_swap<S: AsRef<str>>(&self, slots: &[S]) -> Result<f64> {
        Ok(self.forward(&self.encode(slots)?, None))
    }
}
