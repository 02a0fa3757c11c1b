//! Stack decoding over source coverage with a log-linear model.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use super::features::{
    dbr_penalty, ddp_penalty, ds_features, linked_words, nr_feature, zones, Coverage, Ensembles, NrValues, Span,
    SparseWeights,
};
use super::lm::{LmState, NgramLm, EOS};
use super::phrase_table::{PhraseEntry, PhraseTable, MAX_PHRASE_LEN};
use crate::corpus::DepSentence;
use crate::error::{Error, Result};
use crate::extract::PunctTags;

/// Dense features preceding the per-member NR features.
pub const BASE_FEATURES: [&str; 10] =
    ["tm0", "tm1", "tm2", "tm3", "lm", "word_penalty", "phrase_penalty", "dbr", "ddp", "ds"];
const LM: usize = 4;
const WP: usize = 5;
const PP: usize = 6;
const DBR: usize = 7;
const DDP: usize = 8;
const DS: usize = 9;

/// Named feature weights. Missing names weigh 0; `nr_hc` / `nr_sib` apply to every member
/// without a specific `nr_hc.<k>` / `nr_sib.<k>` entry.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Weights(HashMap<String, f64>);

impl Weights {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, name: &str, w: f64) -> Result<()> {
        if !Self::known(name) {
            return Err(Error::Config(format!("unknown feature `{name}`")));
        }
        self.0.insert(name.to_string(), w);
        Ok(())
    }

    pub fn with(mut self, name: &str, w: f64) -> Self {
        self.set(name, w).expect("known feature name");
        self
    }

    fn known(name: &str) -> bool {
        if BASE_FEATURES.contains(&name) || name == "nr_hc" || name == "nr_sib" {
            return true;
        }
        match name.split_once('.') {
            Some(("nr_hc" | "nr_sib", k)) => k.parse::<usize>().is_ok(),
            _ => false,
        }
    }

    pub fn get(&self, name: &str) -> f64 {
        if let Some(&w) = self.0.get(name) {
            return w;
        }
        match name.split_once('.') {
            Some((base, _)) => self.0.get(base).copied().unwrap_or(0.0),
            None => 0.0,
        }
    }

    /// Parses `name = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut w = Weights::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse { line: lineno + 1, msg };
            let (name, value) = line.split_once('=').ok_or_else(|| err("expected `name = value`".into()))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| err(format!("invalid weight `{}`", value.trim())))?;
            w.set(name.trim(), value).map_err(|e| err(e.to_string()))?;
        }
        Ok(w)
    }
}

/// Decoder settings.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderConfig {
    pub weights: Weights,
    /// `None` disables the limit.
    pub distortion_limit: Option<usize>,
    pub beam_size: usize,
    pub punct: PunctTags,
    pub kbest: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            weights: Weights::new(),
            distortion_limit: Some(14),
            beam_size: 100,
            punct: PunctTags::default(),
            kbest: 1,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_size == 0 {
            return Err(Error::Config("beam size must be >= 1".into()));
        }
        if self.kbest == 0 {
            return Err(Error::Config("k-best size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Everything the decoder reads but never mutates.
#[derive(Debug, Clone)]
pub struct Models {
    pub phrases: PhraseTable,
    pub lm: NgramLm,
    pub ds: SparseWeights,
    pub ensembles: Ensembles,
}

impl Models {
    pub fn feature_names(&self) -> Vec<String> {
        let mut names: Vec<String> = BASE_FEATURES.iter().map(|s| s.to_string()).collect();
        names.extend((0..self.ensembles.head_child.len()).map(|k| format!("nr_hc.{k}")));
        names.extend((0..self.ensembles.sibling.len()).map(|k| format!("nr_sib.{k}")));
        names
    }
}

/// One phrase application.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub span: Span,
    pub target: Vec<String>,
}

/// A complete translation with its feature breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivation {
    pub steps: Vec<Step>,
    pub features: Vec<f64>,
    pub total: f64,
}

impl Derivation {
    pub fn output(&self) -> Vec<&str> {
        self.steps
            .iter()
            .flat_map(|s| s.target.iter().map(String::as_str))
            .collect()
    }

    /// `id ||| rank ||| total ||| name=value ... ||| start-end:len ... ||| output`
    pub fn trace_line(&self, sentence: usize, rank: usize, names: &[String]) -> String {
        let mut line = format!("{sentence} ||| {rank} ||| {} |||", self.total);
        for (n, v) in names.iter().zip(&self.features) {
            write!(line, " {n}={v}").unwrap();
        }
        line.push_str(" |||");
        for s in &self.steps {
            write!(line, " {}-{}:{}", s.span.start, s.span.end, s.target.len()).unwrap();
        }
        write!(line, " ||| {}", self.output().join(" ")).unwrap();
        line
    }
}

/// Per-sentence precomputation: translation options and fired-pair feature values.
struct SentenceModel {
    zones: Vec<Span>,
    /// Options per span, indexed by `(start, end)`.
    options: HashMap<Span, Vec<PhraseEntry>>,
    /// Dense feature deltas fired when `x` is translated while `x'` is not, keyed `(x, x')`.
    pair_features: HashMap<(usize, usize), Vec<(usize, f64)>>,
    linked: Vec<Vec<usize>>,
}

impl SentenceModel {
    fn new(s: &DepSentence, models: &Models, cfg: &DecoderConfig) -> Result<Self> {
        let n = s.len();
        let max_len = models.phrases.max_len().clamp(1, MAX_PHRASE_LEN);
        let words: Vec<String> = s.words().map(str::to_string).collect();
        let mut options: HashMap<Span, Vec<PhraseEntry>> = HashMap::new();
        for start in 1..=n {
            for end in start..=(start + max_len - 1).min(n) {
                let hits = models.phrases.lookup(&words[start - 1..end]);
                if !hits.is_empty() {
                    options.insert(Span::new(start, end), hits.to_vec());
                }
            }
            options
                .entry(Span::new(start, start))
                .or_insert_with(|| vec![PhraseEntry::pass_through(&words[start - 1])]);
        }

        let n_hc = models.ensembles.head_child.len();
        let mut linked = vec![Vec::new(); n + 1];
        let mut pair_features = HashMap::new();
        for x in 1..=n {
            if cfg.punct.is_punct(s, x) {
                continue;
            }
            for xp in linked_words(s, x) {
                if cfg.punct.is_punct(s, xp) {
                    continue;
                }
                linked[x].push(xp);
                let mut feats = vec![(DS, models.ds.sum(&ds_features(s, x, xp)?))];
                match nr_feature(&models.ensembles, s, x, xp, &cfg.punct)? {
                    NrValues::HeadChild(v) => feats.extend(v.into_iter().enumerate().map(|(k, v)| (DS + 1 + k, v))),
                    NrValues::Sibling(v) => {
                        feats.extend(v.into_iter().enumerate().map(|(k, v)| (DS + 1 + n_hc + k, v)))
                    }
                }
                pair_features.insert((x, xp), feats);
            }
        }
        Ok(SentenceModel {
            zones: zones(s, &cfg.punct),
            options,
            pair_features,
            linked,
        })
    }

    fn zone_of(&self, i: usize) -> Span {
        *self.zones.iter().find(|z| z.contains(i)).expect("zones partition the sentence")
    }
}

#[derive(Debug, Clone)]
struct Hyp {
    coverage: Coverage,
    last_end: usize,
    lm_state: LmState,
    features: Vec<f64>,
    total: f64,
    back: Option<usize>,
    step: Option<Step>,
}

type RecombKey = (Coverage, usize, LmState);

#[derive(Default)]
struct Stack {
    hyps: Vec<usize>,
    index: HashMap<RecombKey, usize>,
}

impl Stack {
    fn add(&mut self, arena: &[Hyp], id: usize) {
        let h = &arena[id];
        let key = (h.coverage.clone(), h.last_end, h.lm_state.clone());
        match self.index.get(&key) {
            Some(&slot) => {
                if h.total > arena[self.hyps[slot]].total {
                    self.hyps[slot] = id;
                }
            }
            None => {
                self.index.insert(key, self.hyps.len());
                self.hyps.push(id);
            }
        }
    }

    /// Best first; ties keep creation order.
    fn sorted(&self, arena: &[Hyp]) -> Vec<usize> {
        let mut ids = self.hyps.clone();
        ids.sort_by(|&a, &b| arena[b].total.total_cmp(&arena[a].total).then(a.cmp(&b)));
        ids
    }
}

fn dot(weights: &[f64], delta: &[(usize, f64)]) -> f64 {
    delta.iter().map(|&(i, v)| weights[i] * v).sum()
}

/// Decodes one sentence, returning up to `cfg.kbest` complete derivations, best first.
pub fn decode(s: &DepSentence, models: &Models, cfg: &DecoderConfig) -> Result<Vec<Derivation>> {
    cfg.validate()?;
    let names = models.feature_names();
    let weights: Vec<f64> = names.iter().map(|n| cfg.weights.get(n)).collect();
    let sm = SentenceModel::new(s, models, cfg)?;
    let n = s.len();

    let mut arena = vec![Hyp {
        coverage: Coverage::new(n),
        last_end: 0,
        lm_state: models.lm.initial_state(),
        features: vec![0.0; names.len()],
        total: 0.0,
        back: None,
        step: None,
    }];
    let mut stacks: Vec<Stack> = (0..=n).map(|_| Stack::default()).collect();
    stacks[0].add(&arena, 0);

    let mut delta: Vec<(usize, f64)> = Vec::new();
    for size in 0..n {
        let mut beam = stacks[size].sorted(&arena);
        beam.truncate(cfg.beam_size);
        for hid in beam {
            let first = arena[hid].coverage.first_uncovered().expect("incomplete hypothesis");
            let zone = sm.zone_of(first);
            for start in zone.start..=zone.end {
                if arena[hid].coverage.contains(start) {
                    continue;
                }
                let dbr = dbr_penalty(arena[hid].last_end, Span::new(start, start));
                if cfg.distortion_limit.is_some_and(|lim| dbr > lim) {
                    continue;
                }
                for end in start..=zone.end {
                    if arena[hid].coverage.contains(end) {
                        break;
                    }
                    let span = Span::new(start, end);
                    let Some(entries) = sm.options.get(&span) else {
                        continue;
                    };
                    let h = &arena[hid];
                    let last_word = (h.last_end > 0).then_some(h.last_end);
                    let mut coverage = h.coverage.clone();
                    coverage.cover(span);
                    let complete = coverage.is_complete();

                    // Span-dependent deltas shared by all entries.
                    delta.clear();
                    delta.push((PP, 1.0));
                    delta.push((DBR, dbr as f64));
                    delta.push((DDP, ddp_penalty(s, &h.coverage, last_word, span) as f64));
                    for x in span.iter() {
                        for &xp in &sm.linked[x] {
                            if !coverage.contains(xp) {
                                delta.extend_from_slice(&sm.pair_features[&(x, xp)]);
                            }
                        }
                    }
                    let span_delta = delta.len();

                    let mut fresh = Vec::with_capacity(entries.len());
                    for e in entries {
                        delta.truncate(span_delta);
                        delta.extend(e.scores.iter().enumerate().map(|(i, &v)| (i, v)));
                        delta.push((WP, e.target.len() as f64));
                        let mut state = h.lm_state.clone();
                        let mut lm = 0.0;
                        for w in &e.target {
                            let (lp, next) = models.lm.score(&state, w);
                            lm += lp;
                            state = next;
                        }
                        if complete {
                            let (lp, next) = models.lm.score(&state, EOS);
                            lm += lp;
                            state = next;
                        }
                        delta.push((LM, lm));

                        let mut features = h.features.clone();
                        for &(i, v) in &delta {
                            features[i] += v;
                        }
                        let total = h.total + dot(&weights, &delta);
                        fresh.push(Hyp {
                            coverage: coverage.clone(),
                            last_end: end,
                            lm_state: state,
                            features,
                            total,
                            back: Some(hid),
                            step: Some(Step {
                                span,
                                target: e.target.clone(),
                            }),
                        });
                    }
                    for hyp in fresh {
                        arena.push(hyp);
                        stacks[size + span.len()].add(&arena, arena.len() - 1);
                    }
                }
            }
        }
    }

    let finals = stacks[n].sorted(&arena);
    if finals.is_empty() {
        return Err(Error::NoHypothesis(0));
    }
    Ok(finals
        .into_iter()
        .take(cfg.kbest)
        .map(|id| backtrack(&arena, id))
        .collect())
}

fn backtrack(arena: &[Hyp], id: usize) -> Derivation {
    let mut steps = Vec::new();
    let mut cur = Some(id);
    while let Some(i) = cur {
        if let Some(step) = &arena[i].step {
            steps.push(step.clone());
        }
        cur = arena[i].back;
    }
    steps.reverse();
    Derivation {
        steps,
        features: arena[id].features.clone(),
        total: arena[id].total,
    }
}

/// Decodes sentences in parallel on `threads` workers (0 = rayon default). Failures name
/// the 1-based sentence number.
pub fn decode_all(
    sentences: &[DepSentence],
    models: &Models,
    cfg: &DecoderConfig,
    threads: usize,
) -> Result<Vec<Vec<Derivation>>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| {
        sentences
            .par_iter()
            .enumerate()
            .map(|(i, s)| {
                decode(s, models, cfg).map_err(|e| match e {
                    Error::NoHypothesis(_) => Error::NoHypothesis(i + 1),
                    other => other,
                })
            })
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tests::fig1;
    use crate::corpus::Token;
    use crate::extract::Relation;
    use crate::nn::{build_vocabs, FeatureSpec, NetDims, Param, ReorderNet};

    fn models(table: &str, ensembles: Ensembles) -> Models {
        Models {
            phrases: PhraseTable::parse(table).unwrap(),
            lm: NgramLm::train::<&str>(&[], 2).unwrap(),
            ds: SparseWeights::new(),
            ensembles,
        }
    }

    fn biased(relation: Relation, bias: f64) -> ReorderNet {
        let spec = FeatureSpec::for_relation(relation);
        let vocabs = build_vocabs(&spec, &[], 10).unwrap();
        let mut net = ReorderNet::zeros(spec, vocabs, NetDims { embed_dim: 2, hidden1: 2, hidden2: 2 });
        net.set_param(Param::BOut, bias);
        net
    }

    fn two_words() -> DepSentence {
        DepSentence::new(vec![Token::new(1, "a", "NN", 2, "nmod"), Token::new(2, "b", "NN", 0, "root")]).unwrap()
    }

    #[test]
    fn weights_file() {
        let w = Weights::parse("# comment\nlm = 1.5\nnr_hc = 2\nnr_hc.1 = -1 # member override\n").unwrap();
        assert_eq!(w.get("lm"), 1.5);
        assert_eq!(w.get("nr_hc.0"), 2.0);
        assert_eq!(w.get("nr_hc.1"), -1.0);
        assert_eq!(w.get("nr_sib.0"), 0.0);
        assert_eq!(w.get("dbr"), 0.0);
        assert!(matches!(Weights::parse("lm = 1\nbogus = 2\n"), Err(Error::Parse { line: 2, .. })));
        assert!(Weights::parse("lm 1").is_err());
    }

    #[test]
    fn confident_swap_classifier_inverts_two_words() {
        let ens = Ensembles {
            head_child: vec![biased(Relation::HeadChild, 30.0)],
            sibling: vec![],
        };
        let m = models("a ||| A ||| 0 0 0 0\nb ||| B ||| 0 0 0 0\n", ens);
        let cfg = DecoderConfig {
            weights: Weights::new().with("nr_hc", 1.0).with("dbr", -0.1),
            ..Default::default()
        };
        let best = &decode(&two_words(), &m, &cfg).unwrap()[0];
        assert_eq!(best.output(), vec!["B", "A"]);
        let cfg0 = DecoderConfig {
            weights: Weights::new().with("dbr", -0.1),
            ..cfg
        };
        assert_eq!(decode(&two_words(), &m, &cfg0).unwrap()[0].output(), vec!["A", "B"]);
    }

    #[test]
    fn zero_reordering_weights_allow_monotone_best() {
        let s = fig1();
        let m = models("", Ensembles::default());
        let cfg = DecoderConfig {
            weights: Weights::new().with("lm", 1.0),
            beam_size: 10_000,
            kbest: 100_000,
            ..Default::default()
        };
        let all = decode(&s, &m, &cfg).unwrap();
        let best = all[0].total;
        let monotone: Vec<&str> = s.words().collect();
        assert!(all.iter().any(|d| (d.total - best).abs() < 1e-12 && d.output() == monotone));
    }

    #[test]
    fn outputs_respect_zones() {
        let s = fig1();
        let m = models("", Ensembles::default());
        let cfg = DecoderConfig {
            beam_size: 10_000,
            kbest: 100_000,
            ..Default::default()
        };
        for d in decode(&s, &m, &cfg).unwrap() {
            let firsts: Vec<usize> = d.steps.iter().map(|st| st.span.start).collect();
            let zone = |i: usize| match i {
                1..=2 => 0,
                3 => 1,
                _ => 2,
            };
            assert!(firsts.windows(2).all(|w| zone(w[0]) <= zone(w[1])), "{firsts:?}");
            assert_eq!(d.output()[2], ",");
        }
    }

    #[test]
    fn zero_distortion_limit_forces_monotone_order() {
        let ens = Ensembles {
            head_child: vec![biased(Relation::HeadChild, 30.0)],
            sibling: vec![],
        };
        let m = models("a ||| A ||| 0 0 0 0\nb ||| B ||| 0 0 0 0\n", ens);
        let cfg = DecoderConfig {
            weights: Weights::new().with("nr_hc", 1.0),
            distortion_limit: Some(0),
            ..Default::default()
        };
        let out = decode_all(&[two_words(), two_words()], &m, &cfg, 2).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|k| k[0].output() == vec!["A", "B"]));
    }

    #[test]
    fn trace_line_layout() {
        let d = Derivation {
            steps: vec![Step {
                span: Span::new(1, 2),
                target: vec!["he".into(), "said".into()],
            }],
            features: vec![0.5, -1.0],
            total: 2.25,
        };
        assert_eq!(
            d.trace_line(3, 0, &["tm0".into(), "lm".into()]),
            "3 ||| 0 ||| 2.25 ||| tm0=0.5 lm=-1 ||| 1-2:2 ||| he said"
        );
    }
}
