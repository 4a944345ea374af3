use std::io::{self, BufRead, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bytesteady::data::{
    self, generate_synthetic, split, unescape_payload, Dataset, FastaOptions, LabelRule,
    SyntheticKind, SyntheticParams,
};
use bytesteady::eval::{render_report, resume_sweep, ReportFormat, SweepSpec};
use bytesteady::huffman::{Arity, CodecSpec, HuffmanCodec, SymbolDictionary};
use bytesteady::trainer::{evaluate, train_with, IndexerSpec, TrainConfig};
use bytesteady::{parse_ngram_set, Error, FeatureIndexer, HashVariant, Model};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Byte-level n-gram embedding classifier.
#[derive(Parser, Debug)]
#[command(name = "bytesteady", version, about)]
struct Cli {
    /// Random seed for initialisation, shuffling, splits and generators [default: 0, or the config file's]
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// HogWILD training workers (also sizes the evaluation thread pool) [default: 1]
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Only print errors and results
    #[arg(long, short, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model on a dataset
    Train(TrainArgs),
    /// Report the error rate of a model on a dataset
    Test(TestArgs),
    /// Classify escaped payloads read from standard input, one per line
    Predict(PredictArgs),
    /// Build a Huffman codec from a corpus and print its compression ratio
    HuffmanBuild(HuffmanBuildArgs),
    /// Replace dataset payloads by their Huffman code streams
    Compress(CompressArgs),
    /// Run a hyper-parameter grid sweep described by a JSON spec
    Sweep(SweepArgs),
    /// Generate a synthetic dataset
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    /// n-grams 4,8,12,16, weight decay 1e-3, dim 16, table 2^24
    Text,
    /// n-grams 2[1-8], weight decay 1e-6, dim 16, table 2^24
    Gene,
}

/// How input files are read. Files ending in .fa/.fasta/.fna are FASTA, others TSV or binary.
#[derive(Args, Debug, Clone)]
struct InputArgs {
    /// FASTA header field holding the class (`field=value`)
    #[arg(long, default_value = "class")]
    label_field: String,

    /// File of class names, one per line, mapping FASTA header values to class ids
    #[arg(long)]
    class_names: Option<PathBuf>,

    /// Reject FASTA bytes outside ACGTN
    #[arg(long)]
    strict_fasta: bool,
}

#[derive(Args, Debug)]
struct FeatureArgs {
    /// n-gram set, e.g. "4,8,12,16" or "2[1-8]" [default: from preset]
    #[arg(long)]
    ngrams: Option<String>,

    /// Hash table rows [default: 16777216]
    #[arg(long)]
    table_size: Option<u64>,

    /// Hash function: fnv or city [default: fnv]
    #[arg(long)]
    hash: Option<HashVariant>,

    /// Use the K most frequent n-grams instead of hashing [default: off]
    #[arg(long, conflicts_with_all = ["table_size", "hash"])]
    topk: Option<usize>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Training data (TSV, binary or FASTA; "-" reads standard input)
    data: PathBuf,

    /// Model output path
    #[arg(long, short)]
    output: PathBuf,

    /// Development data evaluated after every epoch [default: none]
    #[arg(long, conflicts_with = "dev_fraction")]
    dev: Option<PathBuf>,

    /// Hold out this fraction of the training data as development set [default: none]
    #[arg(long)]
    dev_fraction: Option<f64>,

    /// Default hyper-parameters
    #[arg(long, value_enum, default_value = "text")]
    preset: Preset,

    /// JSON training configuration; replaces the preset, explicit flags still override it
    #[arg(long)]
    config: Option<PathBuf>,

    /// Write the resolved training configuration as JSON
    #[arg(long)]
    dump_config: Option<PathBuf>,

    #[command(flatten)]
    features: FeatureArgs,

    /// Weight decay [default: 1e-3 text, 1e-6 gene]
    #[arg(long)]
    weight_decay: Option<f64>,

    /// Embedding dimension [default: 16]
    #[arg(long)]
    dim: Option<usize>,

    /// Training epochs [default: 5]
    #[arg(long)]
    epochs: Option<usize>,

    /// Initial learning rate, decayed linearly to zero [default: 0.05]
    #[arg(long)]
    lr: Option<f64>,

    /// Huffman-compress payloads first, e.g. "byte:2" or "bit:1" [default: none]
    #[arg(long)]
    huffman: Option<CodecSpec>,

    /// Per-epoch metrics as JSON lines
    #[arg(long)]
    report: Option<PathBuf>,

    #[command(flatten)]
    input: InputArgs,
}

#[derive(Args, Debug)]
struct TestArgs {
    model: PathBuf,
    /// Test data (TSV, binary or FASTA; "-" reads standard input)
    data: PathBuf,

    /// Codec applied at training time [default: <model>.codec if present]
    #[arg(long)]
    codec: Option<PathBuf>,

    /// Expected feature settings; a model trained differently is rejected
    #[command(flatten)]
    features: FeatureArgs,

    #[command(flatten)]
    input: InputArgs,
}

#[derive(Args, Debug)]
struct PredictArgs {
    model: PathBuf,

    /// Codec applied at training time [default: <model>.codec if present]
    #[arg(long)]
    codec: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct HuffmanBuildArgs {
    /// Corpus dataset whose payloads define the symbol counts
    corpus: PathBuf,

    /// Codec output path
    #[arg(long, short)]
    output: PathBuf,

    /// Tree arity: 2 (bit codes) or 256 (byte codes)
    #[arg(long, default_value = "256")]
    arity: Arity,

    /// Symbol length in bytes
    #[arg(long, default_value_t = 1)]
    m: usize,

    #[command(flatten)]
    input: InputArgs,
}

#[derive(Args, Debug)]
struct CompressArgs {
    data: PathBuf,

    #[arg(long)]
    codec: PathBuf,

    /// Output dataset (".tsv" for TSV, otherwise binary; "-" writes TSV to standard output)
    #[arg(long, short)]
    output: PathBuf,

    #[command(flatten)]
    input: InputArgs,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// JSON sweep spec: axes, base config, replicates, base_seed, max_runs
    spec: PathBuf,

    /// Training data
    #[arg(long)]
    train: PathBuf,

    /// Development data [default: hold out --dev-fraction of the training data]
    #[arg(long)]
    dev: Option<PathBuf>,

    /// Fraction held out when --dev is absent
    #[arg(long, default_value_t = 0.1)]
    dev_fraction: f64,

    /// table-text or delimited
    #[arg(long, default_value = "table-text")]
    format: ReportFormat,

    /// Report output [default: standard output]
    #[arg(long, short)]
    output: Option<PathBuf>,

    /// Earlier delimited report; its completed cells are kept instead of retrained
    #[arg(long)]
    resume: Option<PathBuf>,

    #[command(flatten)]
    input: InputArgs,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// separable-text, dna-uniform or dna-motif
    #[arg(long, default_value = "separable-text")]
    kind: SyntheticKind,

    /// Number of samples
    #[arg(long, default_value_t = 2000)]
    n: usize,

    /// Number of classes
    #[arg(long, default_value_t = 2)]
    classes: usize,

    /// Minimum payload (or noise) length [default: 8 separable-text, 32 dna-motif, 64 dna-uniform]
    #[arg(long)]
    min_len: Option<usize>,

    /// Maximum payload (or noise) length [default: 24 separable-text, 48 dna-motif, 128 dna-uniform]
    #[arg(long)]
    max_len: Option<usize>,

    /// Motif length for dna-motif
    #[arg(long, default_value_t = 16)]
    motif_len: usize,

    /// Output dataset (".tsv" for TSV, otherwise binary; "-" writes TSV to standard output)
    #[arg(long, short, default_value = "-")]
    output: PathBuf,
}

/// Failure classes, each with its own exit status.
#[derive(Debug)]
enum Failure {
    Io(io::Error),
    NotFound(String),
    Mismatch(String),
    Data(String),
    Config(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Other(_) => 1,
            Failure::NotFound(_) => 3,
            Failure::Mismatch(_) => 4,
            Failure::Data(_) => 5,
            Failure::Config(_) => 6,
            Failure::Io(_) => 7,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Io(e) => format!("i/o error: {e}"),
            Failure::NotFound(m)
            | Failure::Mismatch(m)
            | Failure::Data(m)
            | Failure::Config(m)
            | Failure::Other(m) => m.clone(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Io(io) if io.kind() == io::ErrorKind::NotFound => Failure::NotFound(msg),
            Error::Io(io) => Failure::Io(io),
            Error::ConfigMismatch(_) => Failure::Mismatch(msg),
            Error::Parse { .. } | Error::Format { .. } | Error::Corrupt(_) | Error::LabelOutOfRange { .. } => {
                Failure::Data(msg)
            }
            Error::EmptyCorpus(_) => Failure::Data(msg),
            Error::NGramSet { .. } | Error::InvalidConfig(_) => Failure::Config(msg),
            Error::NonFiniteLoss { .. } => Failure::Other(msg),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::from(Error::Io(e))
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn with_path<T>(path: &Path, r: bytesteady::Result<T>) -> CliResult<T> {
    r.map_err(|e| match Failure::from(e) {
        Failure::NotFound(m) => Failure::NotFound(format!("{}: {m}", path.display())),
        Failure::Io(e) => Failure::Other(format!("{}: {e}", path.display())),
        other => other,
    })
}

fn is_fasta(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("fa" | "fasta" | "fna" | "fas")
    )
}

fn load_input(path: &Path, input: &InputArgs) -> CliResult<Dataset> {
    if path == Path::new("-") {
        let mut bytes = Vec::new();
        io::stdin().lock().read_to_end(&mut bytes)?;
        return parse_dataset_bytes(&bytes);
    }
    if is_fasta(path) {
        let mut rule = LabelRule::field(&input.label_field);
        if let Some(names) = &input.class_names {
            rule = with_path(names, rule.with_class_file(names))?;
        }
        let options = FastaOptions {
            rule,
            strict: input.strict_fasta,
        };
        return with_path(path, data::load_fasta(path, &options));
    }
    with_path(path, data::load_dataset(path))
}

fn parse_dataset_bytes(bytes: &[u8]) -> CliResult<Dataset> {
    let provenance = bytesteady::Provenance {
        source: "<stdin>".into(),
        format: String::new(),
        codec: None,
    };
    if bytes.starts_with(b"BSDS") {
        let mut reader = bytes;
        return Ok(data::read_binary(
            &mut reader,
            bytesteady::Provenance {
                format: "binary".into(),
                ..provenance
            },
        )?);
    }
    let samples = data::read_tsv(bytes, "<stdin>")?;
    let k = samples.iter().map(|s| s.label as usize + 1).max().unwrap_or(1);
    Ok(Dataset::new(
        k,
        samples,
        bytesteady::Provenance {
            format: "tsv".into(),
            ..provenance
        },
    )?)
}

fn save_output(dataset: &Dataset, path: &Path) -> CliResult<()> {
    if path == Path::new("-") {
        let stdout = io::stdout();
        let mut w = BufWriter::new(stdout.lock());
        data::write_tsv(&mut w, &dataset.samples)?;
        w.flush()?;
        return Ok(());
    }
    let tsv = matches!(path.extension().and_then(|e| e.to_str()), Some("tsv" | "txt"));
    if tsv {
        with_path(path, data::save_tsv(dataset, path))
    } else {
        with_path(path, data::save_binary(dataset, path))
    }
}

fn codec_path_for(model: &Path) -> PathBuf {
    let mut p = model.as_os_str().to_owned();
    p.push(".codec");
    PathBuf::from(p)
}

fn load_codec(model: &Path, explicit: Option<&Path>) -> CliResult<Option<HuffmanCodec>> {
    match explicit {
        Some(p) => with_path(p, HuffmanCodec::load(p)).map(Some),
        None => {
            let p = codec_path_for(model);
            if p.exists() {
                with_path(&p, HuffmanCodec::load(&p)).map(Some)
            } else {
                Ok(None)
            }
        }
    }
}

fn resolve_config(cli: &Cli, args: &TrainArgs) -> CliResult<TrainConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = with_path(path, std::fs::read_to_string(path).map_err(Error::from))?;
            serde_json::from_str(&text)
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?
        }
        None => match args.preset {
            Preset::Text => TrainConfig::text_preset(),
            Preset::Gene => TrainConfig::gene_preset(),
        },
    };
    let f = &args.features;
    if let Some(s) = &f.ngrams {
        config.ngrams = parse_ngram_set(s)?;
    }
    if let Some(k) = f.topk {
        config.indexer = IndexerSpec::TopK { k };
    } else if f.table_size.is_some() || f.hash.is_some() {
        let (hash, size) = match config.indexer {
            IndexerSpec::Hashed { hash, table_size } => (hash, table_size),
            IndexerSpec::TopK { .. } => (HashVariant::Fnv1a64, 1 << 24),
        };
        config.indexer = IndexerSpec::Hashed {
            hash: f.hash.unwrap_or(hash),
            table_size: f.table_size.unwrap_or(size),
        };
    }
    if let Some(v) = args.weight_decay {
        config.weight_decay = v;
    }
    if let Some(v) = args.dim {
        config.dim = v;
    }
    if let Some(v) = args.epochs {
        config.epochs = v;
    }
    if let Some(v) = args.lr {
        config.lr0 = v;
    }
    if args.huffman.is_some() {
        config.codec = args.huffman;
    }
    if let Some(v) = cli.seed {
        config.seed = v;
    }
    if let Some(v) = cli.threads {
        config.workers = v;
    }
    config.validate()?;
    Ok(config)
}

fn cmd_train(cli: &Cli, args: &TrainArgs) -> CliResult<()> {
    let config = resolve_config(cli, args)?;
    if let Some(path) = &args.dump_config {
        let json = serde_json::to_string_pretty(&config).expect("config serializes");
        with_path(path, std::fs::write(path, json + "\n").map_err(Error::from))?;
    }
    let data = load_input(&args.data, &args.input)?;
    let (train_set, dev_set) = match (&args.dev, args.dev_fraction) {
        (Some(p), _) => (data, Some(load_input(p, &args.input)?)),
        (None, Some(f)) => {
            let (a, b) = split(&data, 1.0 - f, config.seed)?;
            (a, Some(b))
        }
        (None, None) => (data, None),
    };
    log::info!(
        "training on {} samples ({} classes), n-grams {}, dim {}",
        train_set.len(),
        train_set.num_classes,
        config.ngrams,
        config.dim
    );
    let quiet = cli.quiet;
    let out = train_with(&config, &train_set, dev_set.as_ref(), |e| {
        if !quiet {
            let dev = e.dev_error.map_or(String::new(), |d| format!(" dev_error {d:.4}"));
            eprintln!(
                "epoch {} loss {:.6}{dev} ({:.2} s, {:.0} samples/s)",
                e.epoch, e.mean_loss, e.wall_time_s, e.samples_per_sec
            );
        }
    })?;
    with_path(&args.output, out.model.save(&args.output))?;
    let codec_path = codec_path_for(&args.output);
    match &out.codec {
        Some(codec) => {
            with_path(&codec_path, codec.save(&codec_path))?;
            if let Some(r) = out.report.compression_ratio {
                log::info!("compression ratio {r:.4}, codec saved to {}", codec_path.display());
            }
        }
        None if codec_path.exists() => {
            with_path(&codec_path, std::fs::remove_file(&codec_path).map_err(Error::from))?;
        }
        None => {}
    }
    if let Some(path) = &args.report {
        with_path(path, std::fs::write(path, out.report.to_json_lines()).map_err(Error::from))?;
    }
    if let Some(err) = out.report.final_dev_error() {
        println!("dev error {err:.4}");
    }
    Ok(())
}

fn requested_features(model: &Model, f: &FeatureArgs) -> CliResult<bytesteady::FeatureConfig> {
    let mut features = model.features().clone();
    if let Some(s) = &f.ngrams {
        features.ngrams = parse_ngram_set(s)?;
    }
    if f.table_size.is_some() || f.hash.is_some() {
        let (hash, size) = match &features.indexer {
            FeatureIndexer::Hashed { variant, table_size } => (*variant, *table_size),
            FeatureIndexer::TopK(_) => (HashVariant::Fnv1a64, 1 << 24),
        };
        features.indexer = FeatureIndexer::hashed(f.hash.unwrap_or(hash), f.table_size.unwrap_or(size))?;
    }
    if let Some(k) = f.topk {
        if !matches!(&features.indexer, FeatureIndexer::TopK(v) if v.len() == k) {
            return Err(Failure::Mismatch(format!(
                "configuration mismatch: model was not trained with top-{k} indexing"
            )));
        }
    }
    Ok(features)
}

fn cmd_test(args: &TestArgs) -> CliResult<()> {
    let model = with_path(&args.model, Model::load(&args.model))?;
    let features = requested_features(&model, &args.features)?;
    let mut data = load_input(&args.data, &args.input)?;
    if let Some(codec) = load_codec(&args.model, args.codec.as_deref())? {
        data = data::compress_dataset(&data, &codec);
    }
    let err = evaluate(&model, &features, &data)?;
    println!("error {err:.4}");
    Ok(())
}

fn cmd_predict(args: &PredictArgs) -> CliResult<()> {
    let model = with_path(&args.model, Model::load(&args.model))?;
    let codec = load_codec(&args.model, args.codec.as_deref())?;
    let stdin = io::stdin();
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    for (i, line) in stdin.lock().split(b'\n').enumerate() {
        let line = line?;
        let payload = unescape_payload(&line)
            .map_err(|reason| Failure::Data(format!("<stdin>:{}: {reason}", i + 1)))?;
        let payload = match &codec {
            Some(c) => c.encode(&payload).payload,
            None => payload,
        };
        let p = model.predict(&payload);
        let probs: Vec<String> = p.probabilities.iter().map(|v| format!("{v:.6}")).collect();
        writeln!(out, "{}\t{}", p.argmax, probs.join(" "))?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_huffman_build(args: &HuffmanBuildArgs) -> CliResult<()> {
    let corpus = load_input(&args.corpus, &args.input)?;
    let dict = SymbolDictionary::build(corpus.payloads(), args.m)?;
    let codec = HuffmanCodec::build(dict, args.arity);
    let ratio = codec.compression_ratio(corpus.payloads())?;
    with_path(&args.output, codec.save(&args.output))?;
    println!("compression ratio {ratio:.4}");
    Ok(())
}

fn cmd_compress(args: &CompressArgs) -> CliResult<()> {
    let codec = with_path(&args.codec, HuffmanCodec::load(&args.codec))?;
    let data = load_input(&args.data, &args.input)?;
    let compressed = data::compress_dataset(&data, &codec);
    log::info!(
        "compressed {} -> {} payload bytes",
        data.payload_bytes(),
        compressed.payload_bytes()
    );
    save_output(&compressed, &args.output)
}

fn cmd_sweep(cli: &Cli, args: &SweepArgs) -> CliResult<()> {
    let text = with_path(&args.spec, std::fs::read_to_string(&args.spec).map_err(Error::from))?;
    let mut spec: SweepSpec =
        serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", args.spec.display())))?;
    if let Some(seed) = cli.seed {
        spec.base_seed = seed;
    }
    if let Some(t) = cli.threads {
        spec.base.workers = t;
    }
    let data = load_input(&args.train, &args.input)?;
    let (train_set, dev_set) = match &args.dev {
        Some(p) => (data, load_input(p, &args.input)?),
        None => split(&data, 1.0 - args.dev_fraction, spec.base_seed)?,
    };
    let previous = match &args.resume {
        Some(p) => {
            let text = with_path(p, std::fs::read_to_string(p).map_err(Error::from))?;
            Some(bytesteady::eval::parse_delimited(&text)?)
        }
        None => None,
    };
    let quiet = cli.quiet;
    let report = resume_sweep(&spec, &train_set, &dev_set, previous.as_ref(), |c| {
        if !quiet {
            match c.dev_error() {
                Some(e) => eprintln!("cell {} wd {:e}: dev error {e:.4}", c.key.ngrams, c.key.weight_decay),
                None => eprintln!("cell {} wd {:e}: failed", c.key.ngrams, c.key.weight_decay),
            }
        }
    })?;
    let rendered = render_report(&report, args.format);
    match &args.output {
        Some(p) => with_path(p, std::fs::write(p, rendered).map_err(Error::from))?,
        None => print!("{rendered}"),
    }
    Ok(())
}

fn cmd_synth(cli: &Cli, args: &SynthArgs) -> CliResult<()> {
    let defaults = SyntheticParams::for_kind(args.kind);
    let params = SyntheticParams {
        n: args.n,
        num_classes: args.classes,
        min_len: args.min_len.unwrap_or(defaults.min_len),
        max_len: args.max_len.unwrap_or(defaults.max_len),
        motif_len: args.motif_len,
    };
    let data = generate_synthetic(args.kind, &params, cli.seed.unwrap_or(0))?;
    save_output(&data, &args.output)
}

fn run(cli: &Cli) -> CliResult<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Failure::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::Other(e.to_string()))?;
    }
    match &cli.command {
        Command::Train(a) => cmd_train(cli, a),
        Command::Test(a) => cmd_test(a),
        Command::Predict(a) => cmd_predict(a),
        Command::HuffmanBuild(a) => cmd_huffman_build(a),
        Command::Compress(a) => cmd_compress(a),
        Command::Sweep(a) => cmd_sweep(cli, a),
        Command::Synth(a) => cmd_synth(cli, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("bytesteady: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
