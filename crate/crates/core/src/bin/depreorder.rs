use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use depreorder::bleu::bleu;
use depreorder::corpus::{parse_conll, read_aligned_corpus, DepSentence};
use depreorder::decoder::{decode_all, DecoderConfig, Ensembles, Models, NgramLm, PhraseTable, SparseWeights, Weights};
use depreorder::embed::{
    filter_context_vocab, format_corpus, gen_dep_context_corpus, parse_corpus, random_table, surface_corpus,
    train_skipgram, EmbeddingTable, SkipGramConfig,
};
use depreorder::extract::{
    extract_head_child, extract_sibling, read_instances, write_instances, PunctTags, Relation, ReorderInstance,
};
use depreorder::nn::{accuracy, load_model_file, save_model_file, train_ensemble, BatchMode, NetDims, ReorderNet, TrainConfig};
use depreorder::{Error, Result};

/// Dependency-based neural reordering toolkit.
#[derive(Parser)]
#[command(name = "depreorder", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract head-child or sibling reordering instances from aligned, parsed text.
    Extract(ExtractArgs),
    /// Write the dependency-context corpus (or plain sentences) for embedding training.
    DepCorpus(DepCorpusArgs),
    /// Train or generate a word embedding table.
    Embed(EmbedArgs),
    /// Train a reordering classifier or an ensemble of them.
    Train(TrainArgs),
    /// Print swap probabilities for an instance file.
    Predict(PredictArgs),
    /// Translate parsed source sentences with the beam-search decoder.
    Decode(DecodeArgs),
    /// Score translations with case-insensitive corpus BLEU.
    Eval(EvalArgs),
}

#[derive(Args)]
struct ExtractArgs {
    /// Source dependency parses (CoNLL-style, 8 columns).
    #[arg(long)]
    parses: PathBuf,
    /// Tokenized target sentences, one per line.
    #[arg(long)]
    target: PathBuf,
    /// Word alignments, 0-based `i-j` pairs, one line per sentence.
    #[arg(long)]
    align: PathBuf,
    /// Relation to extract: head-child or sibling.
    #[arg(long)]
    relation: Relation,
    /// Comma-separated punctuation POS tags.
    #[arg(long, default_value = "PU")]
    punct: String,
    /// Output instance file (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DepCorpusArgs {
    /// Source dependency parses.
    #[arg(long)]
    parses: PathBuf,
    /// Write surface sentences instead of dependency-context lines.
    #[arg(long)]
    plain: bool,
    /// Output corpus (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum EmbedMethod {
    /// Skip-gram on a dependency-context corpus; context-marked tokens are dropped afterwards.
    Dep,
    /// Skip-gram on plain sentences.
    Skipgram,
    /// Uniform random vectors for the corpus vocabulary.
    Random,
}

#[derive(Args)]
struct EmbedArgs {
    /// Training corpus, one whitespace-tokenized line per instance.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum, default_value = "dep")]
    method: EmbedMethod,
    /// Output embedding file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    dim: usize,
    /// Context half-width.
    #[arg(long, default_value_t = 1)]
    window: usize,
    /// Negative samples per positive pair.
    #[arg(long, default_value_t = 5)]
    negatives: usize,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    /// Initial learning rate, decayed linearly.
    #[arg(long, default_value_t = 0.025)]
    lr: f64,
    /// Minimum token count to enter the vocabulary.
    #[arg(long, default_value_t = 1)]
    min_count: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Worker threads; only 1 is reproducible.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct TrainArgs {
    /// Training instance file.
    #[arg(long)]
    train: PathBuf,
    /// Held-out instance file used to pick the best epoch.
    #[arg(long)]
    heldout: PathBuf,
    /// Output model path; with --ensemble N > 1 members go to <out>.0 .. <out>.N-1.
    #[arg(long)]
    out: PathBuf,
    /// Pretrained word embeddings.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    ensemble: usize,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    /// Instances per mini-batch.
    #[arg(long, default_value_t = 128, conflicts_with = "batches_per_epoch")]
    batch_size: usize,
    /// Number of mini-batches per epoch (overrides --batch-size).
    #[arg(long)]
    batches_per_epoch: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    /// Input-layer dropout probability.
    #[arg(long, default_value_t = 0.5)]
    dropout: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Most frequent words kept in the classifier vocabulary.
    #[arg(long, default_value_t = 100_000)]
    vocab_limit: usize,
    #[arg(long, default_value_t = 100)]
    embed_dim: usize,
    #[arg(long, default_value_t = 200)]
    hidden1: usize,
    #[arg(long, default_value_t = 100)]
    hidden2: usize,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Instance file to score.
    #[arg(long)]
    instances: PathBuf,
    /// Output probabilities (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DecodeArgs {
    /// Source dependency parses.
    #[arg(long)]
    parses: PathBuf,
    /// Phrase table `src ||| tgt ||| s1 s2 s3 s4` with log10 scores.
    #[arg(long)]
    phrase_table: PathBuf,
    /// Target-language LM training text.
    #[arg(long)]
    lm_corpus: PathBuf,
    #[arg(long, default_value_t = 3)]
    lm_order: usize,
    /// Feature weights, `name = value` per line.
    #[arg(long)]
    weights: PathBuf,
    /// Sparse dependency-swap weights, `key<TAB>weight` per line.
    #[arg(long)]
    ds_weights: Option<PathBuf>,
    /// Head-child classifier; repeat for ensemble members.
    #[arg(long = "hc-model")]
    hc_models: Vec<PathBuf>,
    /// Sibling classifier; repeat for ensemble members.
    #[arg(long = "sib-model")]
    sib_models: Vec<PathBuf>,
    #[arg(long, default_value_t = 100)]
    beam: usize,
    /// Maximum jump; `none` disables the limit.
    #[arg(long, default_value = "14")]
    distortion_limit: String,
    /// Comma-separated punctuation POS tags.
    #[arg(long, default_value = "PU")]
    punct: String,
    /// Derivations per sentence written to --trace.
    #[arg(long, default_value_t = 1)]
    kbest: usize,
    /// Per-feature score dump of the k-best derivations.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Decoding threads (0 = all cores).
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Output translations (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Hypothesis translations, one per line.
    #[arg(long)]
    hyp: PathBuf,
    /// Reference file; repeat for multiple references.
    #[arg(long = "ref", required = true)]
    refs: Vec<PathBuf>,
    /// Keep case when matching n-grams.
    #[arg(long)]
    case_sensitive: bool,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Error::Config(format!("{}: {e}", p.display()))),
        None => Ok(io::stdout().lock().write_all(text.as_bytes())?),
    }
}

fn parses(path: &Path) -> Result<Vec<DepSentence>> {
    parse_conll(&read(path)?)
}

fn extract(a: ExtractArgs) -> Result<()> {
    let pairs = read_aligned_corpus(&read(&a.parses)?, &read(&a.target)?, &read(&a.align)?)?;
    let punct = PunctTags::parse_list(&a.punct);
    let rows: Vec<ReorderInstance> = match a.relation {
        Relation::HeadChild => pairs
            .iter()
            .flat_map(|p| extract_head_child(p, &punct))
            .map(|r| r.to_instance())
            .collect(),
        Relation::Sibling => pairs
            .iter()
            .flat_map(|p| extract_sibling(p, &punct))
            .map(|r| r.to_instance())
            .collect(),
    };
    emit(a.out.as_deref(), &write_instances(a.relation, &rows))
}

fn dep_corpus(a: DepCorpusArgs) -> Result<()> {
    let sents = parses(&a.parses)?;
    let corpus = if a.plain { surface_corpus(&sents) } else { gen_dep_context_corpus(&sents) };
    emit(a.out.as_deref(), &format_corpus(&corpus))
}

fn embed(a: EmbedArgs) -> Result<()> {
    let corpus = parse_corpus(&read(&a.corpus)?);
    let table = match a.method {
        EmbedMethod::Random => {
            let mut vocab: Vec<String> = corpus.iter().flatten().cloned().collect();
            vocab.sort();
            vocab.dedup();
            random_table(&vocab, a.dim, a.seed)
        }
        EmbedMethod::Dep | EmbedMethod::Skipgram => {
            let cfg = SkipGramConfig {
                dim: a.dim,
                window: a.window,
                negatives: a.negatives,
                epochs: a.epochs,
                learning_rate: a.lr,
                min_count: a.min_count,
                seed: a.seed,
                threads: a.threads,
            };
            filter_context_vocab(&train_skipgram(&corpus, &cfg)?.raw_table())
        }
    };
    emit(Some(&a.out), &table.to_text())
}

fn instances(path: &Path) -> Result<(Relation, Vec<ReorderInstance>)> {
    read_instances(&read(path)?)
}

fn train(a: TrainArgs) -> Result<()> {
    let (relation, rows) = instances(&a.train)?;
    let (held_rel, held) = instances(&a.heldout)?;
    if held_rel != relation {
        return Err(Error::Config(format!(
            "held-out file is {} but training file is {}",
            held_rel.name(),
            relation.name()
        )));
    }
    let pretrained = match &a.embeddings {
        Some(p) => Some(EmbeddingTable::load(BufReader::new(
            fs::File::open(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
        ))?),
        None => None,
    };
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch: match a.batches_per_epoch {
            Some(k) => BatchMode::PerEpoch(k),
            None => BatchMode::Size(a.batch_size),
        },
        learning_rate: a.lr,
        dropout: a.dropout,
        seed: a.seed,
        vocab_limit: a.vocab_limit,
        dims: NetDims {
            embed_dim: a.embed_dim,
            hidden1: a.hidden1,
            hidden2: a.hidden2,
        },
    };
    let members = train_ensemble(relation, &rows, &held, &cfg, pretrained.as_ref(), a.ensemble)?;
    if members.len() == 1 {
        save_model_file(&members[0], &a.out)?;
    } else {
        for (k, m) in members.iter().enumerate() {
            let mut p = a.out.clone().into_os_string();
            p.push(format!(".{k}"));
            save_model_file(m, Path::new(&p))?;
        }
    }
    Ok(())
}

fn predict(a: PredictArgs) -> Result<()> {
    let net = load_model_file(&a.model)?;
    let (relation, rows) = instances(&a.instances)?;
    if relation != net.spec().relation {
        return Err(Error::Config(format!(
            "model is {} but instances are {}",
            net.spec().relation.name(),
            relation.name()
        )));
    }
    let mut text = String::new();
    for r in &rows {
        text.push_str(&format!("{}\n", net.predict_swap(&r.slots)?));
    }
    emit(a.out.as_deref(), &text)?;
    if !rows.is_empty() {
        eprintln!("accuracy = {:.4}", accuracy(&net, &rows)?);
    }
    Ok(())
}

fn load_members(paths: &[PathBuf], relation: Relation) -> Result<Vec<ReorderNet>> {
    paths
        .iter()
        .map(|p| {
            let net = load_model_file(p)?;
            if net.spec().relation != relation {
                return Err(Error::Config(format!("{} is not a {} model", p.display(), relation.name())));
            }
            Ok(net)
        })
        .collect()
}

fn decode(a: DecodeArgs) -> Result<()> {
    let sents = parses(&a.parses)?;
    let lm_text = read(&a.lm_corpus)?;
    let lm_corpus: Vec<Vec<&str>> = lm_text.lines().map(|l| l.split_whitespace().collect()).collect();
    let models = Models {
        phrases: PhraseTable::parse(&read(&a.phrase_table)?)?,
        lm: NgramLm::train(&lm_corpus, a.lm_order)?,
        ds: match &a.ds_weights {
            Some(p) => SparseWeights::parse(&read(p)?)?,
            None => SparseWeights::new(),
        },
        ensembles: Ensembles {
            head_child: load_members(&a.hc_models, Relation::HeadChild)?,
            sibling: load_members(&a.sib_models, Relation::Sibling)?,
        },
    };
    let distortion_limit = match a.distortion_limit.as_str() {
        "none" | "inf" => None,
        v => Some(
            v.parse()
                .map_err(|_| Error::Config(format!("invalid distortion limit `{v}`")))?,
        ),
    };
    let cfg = DecoderConfig {
        weights: Weights::parse(&read(&a.weights)?)?,
        distortion_limit,
        beam_size: a.beam,
        punct: PunctTags::parse_list(&a.punct),
        kbest: a.kbest,
    };
    let results = decode_all(&sents, &models, &cfg, a.threads)?;
    let names = models.feature_names();
    let mut out = String::new();
    let mut trace = String::new();
    for (i, kbest) in results.iter().enumerate() {
        out.push_str(&kbest[0].output().join(" "));
        out.push('\n');
        for (rank, d) in kbest.iter().enumerate() {
            trace.push_str(&d.trace_line(i + 1, rank, &names));
            trace.push('\n');
        }
    }
    if let Some(p) = &a.trace {
        emit(Some(p), &trace)?;
    }
    emit(a.out.as_deref(), &out)
}

fn eval(a: EvalArgs) -> Result<()> {
    let hyp_text = read(&a.hyp)?;
    let hyps: Vec<&str> = hyp_text.lines().collect();
    let ref_texts = a.refs.iter().map(|p| read(p)).collect::<Result<Vec<_>>>()?;
    let mut refs: Vec<Vec<&str>> = vec![Vec::new(); hyps.len()];
    for (p, text) in a.refs.iter().zip(&ref_texts) {
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() != hyps.len() {
            return Err(Error::Config(format!(
                "{} has {} lines but the hypothesis file has {}",
                p.display(),
                lines.len(),
                hyps.len()
            )));
        }
        for (r, l) in refs.iter_mut().zip(lines) {
            r.push(l);
        }
    }
    let score = bleu(&hyps, &refs, 4, !a.case_sensitive)?;
    println!("BLEU = {:.2}", 100.0 * score);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Extract(a) => extract(a),
        Command::DepCorpus(a) => dep_corpus(a),
        Command::Embed(a) => embed(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Decode(a) => decode(a),
        Command::Eval(a) => eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("depreorder: {e}");
            ExitCode::FAILURE
        }
    }
}
