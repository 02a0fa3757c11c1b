use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::net::{dropout_mask, Example, NetDims, ReorderNet};
use super::spec::{build_vocabs, FeatureSpec};
use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};
use crate::extract::{Order, Relation, ReorderInstance};

/// How an epoch is cut into mini-batches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchMode {
    /// Fixed number of instances per batch.
    Size(usize),
    /// Fixed number of batches per epoch.
    PerEpoch(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: BatchMode,
    pub learning_rate: f64,
    pub dropout: f64,
    pub seed: u64,
    pub vocab_limit: usize,
    pub dims: NetDims,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch: BatchMode::Size(128),
            learning_rate: 0.05,
            dropout: 0.5,
            seed: 1,
            vocab_limit: 100_000,
            dims: NetDims::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        match self.batch {
            BatchMode::Size(0) | BatchMode::PerEpoch(0) => {
                return Err(Error::Config("batch size / batch count must be >= 1".into()))
            }
            _ => {}
        }
        if self.dims.embed_dim == 0 || self.dims.hidden1 == 0 || self.dims.hidden2 == 0 {
            return Err(Error::Config("layer dimensions must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }

    fn batch_size(&self, n: usize) -> usize {
        match self.batch {
            BatchMode::Size(s) => s,
            BatchMode::PerEpoch(k) => n.div_ceil(k).max(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub heldout_loss: Vec<f64>,
    /// Epoch (0-based) whose parameters were kept.
    pub best_epoch: usize,
}

fn examples(net: &ReorderNet, rows: &[ReorderInstance]) -> Result<Vec<Example>> {
    rows.iter()
        .map(|r| {
            Ok(Example {
                input: net.encode(&r.slots)?,
                target: f64::from(r.label.as_label()),
            })
        })
        .collect()
}

/// Mini-batch SGD with input dropout. After every epoch the held-out cross-entropy is
/// measured and the best snapshot is returned.
pub fn train_with_report(
    relation: Relation,
    instances: &[ReorderInstance],
    heldout: &[ReorderInstance],
    cfg: &TrainConfig,
    pretrained: Option<&EmbeddingTable>,
) -> Result<(ReorderNet, TrainReport)> {
    cfg.validate()?;
    if instances.is_empty() {
        return Err(Error::Empty("training instances"));
    }
    if heldout.is_empty() {
        return Err(Error::Empty("held-out instances"));
    }
    let spec = FeatureSpec::for_relation(relation);
    let vocabs = build_vocabs(&spec, instances, cfg.vocab_limit)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = ReorderNet::init(spec, vocabs, cfg.dims, cfg.dropout, pretrained, &mut rng)?;
    let train_set = examples(&net, instances)?;
    let heldout_set = examples(&net, heldout)?;

    let batch_size = cfg.batch_size(train_set.len());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best = (net.clone(), f64::INFINITY, 0);
    let mut report = TrainReport {
        train_loss: Vec::with_capacity(cfg.epochs),
        heldout_loss: Vec::with_capacity(cfg.epochs),
        best_epoch: 0,
    };
    let mut batch = Vec::with_capacity(batch_size);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train_set[i].clone()));
            let mask = (net.dropout() > 0.0).then(|| dropout_mask(batch.len(), net.input_width(), net.dropout(), &mut rng));
            let (loss, grad) = net.loss_and_grad(&batch, mask.as_ref());
            if !loss.is_finite() {
                return Err(Error::Diverged(format!("non-finite training loss {loss} in epoch {epoch}")));
            }
            epoch_loss += loss * batch.len() as f64;
            net.apply(&grad, cfg.learning_rate);
        }
        let heldout_loss = net.loss(&heldout_set);
        if !heldout_loss.is_finite() || !net.is_finite() {
            return Err(Error::Diverged(format!("non-finite held-out loss {heldout_loss} after epoch {epoch}")));
        }
        report.train_loss.push(epoch_loss / train_set.len() as f64);
        report.heldout_loss.push(heldout_loss);
        if heldout_loss < best.1 {
            best = (net.clone(), heldout_loss, epoch);
        }
    }
    if cfg.epochs == 0 {
        return Ok((net, report));
    }
    report.best_epoch = best.2;
    Ok((best.0, report))
}

pub fn train(
    relation: Relation,
    instances: &[ReorderInstance],
    heldout: &[ReorderInstance],
    cfg: &TrainConfig,
    pretrained: Option<&EmbeddingTable>,
) -> Result<ReorderNet> {
    train_with_report(relation, instances, heldout, cfg, pretrained).map(|(net, _)| net)
}

/// `n` members trained in parallel; member `k` uses seed `cfg.seed + k`.
pub fn train_ensemble(
    relation: Relation,
    instances: &[ReorderInstance],
    heldout: &[ReorderInstance],
    cfg: &TrainConfig,
    pretrained: Option<&EmbeddingTable>,
    n: usize,
) -> Result<Vec<ReorderNet>> {
    if n == 0 {
        return Err(Error::Config("ensemble size must be >= 1".into()));
    }
    (0..n as u64)
        .into_par_iter()
        .map(|k| {
            let member = TrainConfig {
                seed: cfg.seed.wrapping_add(k),
                ..cfg.clone()
            };
            train(relation, instances, heldout, &member, pretrained)
        })
        .collect()
}

/// Fraction of rows whose thresholded prediction (0.5) matches the label.
pub fn accuracy(net: &ReorderNet, rows: &[ReorderInstance]) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::Empty("accuracy rows"));
    }
    let encoded = rows.iter().map(|r| net.encode(&r.slots)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<_> = encoded.iter().collect();
    let probs = net.forward_batch(&refs);
    let correct = probs
        .iter()
        .zip(rows)
        .filter(|(&p, r)| (p > 0.5) == (r.label == Order::Swapped))
        .count();
    Ok(correct as f64 / rows.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::net::tests::hc_row;
    use rand::Rng;

    fn rule_data(n: usize, seed: u64, shuffle_labels: bool) -> Vec<ReorderInstance> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tags = ["A", "B", "C", "D"];
        (0..n)
            .map(|_| {
                let hp = tags[rng.gen_range(0..4)];
                let cp = tags[rng.gen_range(0..4)];
                let swap = hp == "A" && cp == "B";
                let label = if shuffle_labels { rng.gen_bool(0.5) } else { swap };
                let w1 = format!("w{}", rng.gen_range(0..20));
                let w2 = format!("w{}", rng.gen_range(0..20));
                hc_row([&w1, &w2, ""], [hp, cp, ""], true, if label { Order::Swapped } else { Order::InOrder })
            })
            .collect()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 30,
            dims: NetDims {
                embed_dim: 8,
                hidden1: 16,
                hidden2: 8,
            },
            batch: BatchMode::Size(32),
            learning_rate: 0.1,
            dropout: 0.2,
            ..Default::default()
        }
    }

    #[test]
    fn learns_pos_pair_rule() {
        let train_rows = rule_data(600, 1, false);
        let held = rule_data(200, 2, false);
        let (net, report) = train_with_report(Relation::HeadChild, &train_rows, &held, &small_cfg(), None).unwrap();
        assert!(accuracy(&net, &held).unwrap() >= 0.99, "{report:?}");
        assert_eq!(report.heldout_loss.len(), 30);
        let best = report.heldout_loss.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(report.heldout_loss[report.best_epoch], best);
        assert!((net.loss(&examples(&net, &held).unwrap()) - best).abs() < 1e-12);
    }

    #[test]
    fn training_is_deterministic() {
        let rows = rule_data(100, 3, false);
        let held = rule_data(30, 4, false);
        let cfg = TrainConfig { epochs: 3, ..small_cfg() };
        let a = train(Relation::HeadChild, &rows, &held, &cfg, None).unwrap();
        let b = train(Relation::HeadChild, &rows, &held, &cfg, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn batch_count_mode() {
        let cfg = TrainConfig { batch: BatchMode::PerEpoch(128), ..Default::default() };
        assert_eq!(cfg.batch_size(1000), 8);
        assert_eq!(cfg.batch_size(10), 1);
    }

    #[test]
    fn ensemble_members_follow_seed_offsets() {
        let rows = rule_data(80, 5, false);
        let held = rule_data(20, 6, false);
        let cfg = TrainConfig { epochs: 2, ..small_cfg() };
        let one = train_ensemble(Relation::HeadChild, &rows, &held, &cfg, None, 1).unwrap();
        assert_eq!(one[0], train(Relation::HeadChild, &rows, &held, &cfg, None).unwrap());
        let three = train_ensemble(Relation::HeadChild, &rows, &held, &cfg, None, 3).unwrap();
        assert_ne!(three[0], three[1]);
        assert_ne!(three[1], three[2]);
        let second = TrainConfig { seed: cfg.seed + 1, ..cfg.clone() };
        assert_eq!(three[1], train(Relation::HeadChild, &rows, &held, &second, None).unwrap());
    }

    #[test]
    fn empty_sets_are_errors() {
        let rows = rule_data(10, 7, false);
        assert!(train(Relation::HeadChild, &[], &rows, &small_cfg(), None).is_err());
        assert!(train(Relation::HeadChild, &rows, &[], &small_cfg(), None).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let rows = rule_data(50, 8, false);
        let cfg = TrainConfig { epochs: 5, learning_rate: 1e200, ..small_cfg() };
        assert!(matches!(train(Relation::HeadChild, &rows, &rows, &cfg, None), Err(Error::Diverged(_))));
    }
}
