//! Command-line frontend for the embedding alignment toolkit.
//!
//! Exit codes: 0 on success, 1 for validation and format errors, 2 for
//! numeric failures inside the solver.

use clap::{Args, Parser, Subcommand, ValueEnum};
use sensemap::cluster::{ClusteringConfig, Level};
use sensemap::corpus::{collect_type_pairs, read_alignments, read_corpus, SentenceRecord};
use sensemap::error::{Error, Result};
use sensemap::eval::evaluate_retrieval;
use sensemap::isotropy::{anisotropy_score, fit_iterative_normalization};
use sensemap::linalg::{norm, EmbeddingMatrix};
use sensemap::pipeline::{
    load_artifact, save_artifact, train_from_collection, transfer_vector, PipelineConfig,
};
use sensemap::synth::{generate_synthetic, load_ground_truth, SynthConfig};
use sensemap::vecio::write_word2vec_text;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "sensemap", version, about = "Sense-level embedding space alignment toolkit")]
struct Cli {
    /// Cap worker parallelism (default: all cores). Outputs do not depend
    /// on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn an orthogonal target-to-source mapping from aligned corpora.
    Align(AlignArgs),
    /// Map every vector of a corpus through a trained artifact.
    Apply(ApplyArgs),
    /// Mean pairwise cosine similarity of sampled corpus vectors.
    Anisotropy(AnisotropyArgs),
    /// Fit iterative normalization standalone and report convergence.
    In(InArgs),
    /// Retrieval precision of an artifact against synthetic ground truth.
    EvalRetrieval(EvalRetrievalArgs),
    /// Generate a synthetic bilingual corpus bundle with known ground truth.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    Left,
    Right,
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Word,
    Sense,
}

impl From<LevelArg> for Level {
    fn from(level: LevelArg) -> Self {
        match level {
            LevelArg::Word => Level::Word,
            LevelArg::Sense => Level::Sense,
        }
    }
}

#[derive(Args)]
struct AlignArgs {
    #[arg(long)]
    target_corpus: PathBuf,
    #[arg(long)]
    source_corpus: PathBuf,
    #[arg(long)]
    alignments: PathBuf,
    /// Side of each "a-b" alignment link that indexes the target corpus.
    #[arg(long, value_enum, default_value_t = SideArg::Left)]
    target_side: SideArg,
    /// Output artifact path (.map.json).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = LevelArg::Sense)]
    level: LevelArg,
    /// Max stored contextual vectors per type.
    #[arg(long, default_value_t = 10_000)]
    max_vectors: usize,
    /// Types must occur more often than this to be sense-clustered.
    #[arg(long, default_value_t = 100)]
    min_count: u64,
    /// Upper end of the k-means k search.
    #[arg(long, default_value_t = 10)]
    kmax: usize,
    /// Iterative-normalization iterations.
    #[arg(long, default_value_t = 5)]
    in_iters: usize,
    /// Skip iterative normalization; vectors are only unit-normalized.
    #[arg(long)]
    no_in: bool,
    /// Lowercase target tokens when keying types.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set, value_name = "BOOL")]
    lowercase: bool,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Also write the anchor matrices as word2vec text files
    /// PREFIX.target.vec and PREFIX.source.vec.
    #[arg(long, value_name = "PREFIX")]
    export_anchors: Option<String>,
}

#[derive(Args)]
struct ApplyArgs {
    #[arg(long)]
    artifact: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Output corpus path (.tec.jsonl).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnisotropyArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Number of vectors to sample.
    #[arg(long, default_value_t = 1000)]
    sample: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Append a CSV row (label,n_vectors,sample_size,seed,score).
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Label for the CSV row; defaults to the corpus path.
    #[arg(long)]
    label: Option<String>,
}

#[derive(Args)]
struct InArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 5)]
    iters: usize,
    /// Sample size for the per-iteration anisotropy score.
    #[arg(long, default_value_t = 1000)]
    sample: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Write the convergence table (iteration,mean_norm,anisotropy_score).
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Write the normalized corpus here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalRetrievalArgs {
    #[arg(long)]
    artifact: PathBuf,
    /// Ground-truth JSON written by `synth`.
    #[arg(long)]
    truth: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 500)]
    types: usize,
    #[arg(long, default_value_t = 2000)]
    sentences: usize,
    #[arg(long, default_value_t = 10)]
    sentence_len: usize,
    /// Fraction of target types with two senses.
    #[arg(long, default_value_t = 0.2)]
    two_sense_fraction: f64,
    #[arg(long, default_value_t = 0.01)]
    noise_sigma: f64,
    /// Norm of the shared per-side offset that makes the spaces anisotropic.
    #[arg(long, default_value_t = 0.0)]
    anisotropy_offset_norm: f64,
    /// Norm of per-sense target offsets that bend the planted relation.
    #[arg(long, default_value_t = 0.0)]
    sense_offset_norm: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0u8,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 2 } else { 1 })
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Align(args) => align(args),
        Command::Apply(args) => apply(args),
        Command::Anisotropy(args) => anisotropy(args),
        Command::In(args) => iterative_normalize(args),
        Command::EvalRetrieval(args) => eval_retrieval(args),
        Command::Synth(args) => synth(args),
    }
}

fn align(args: AlignArgs) -> Result<()> {
    let mut alignments = read_alignments(&args.alignments)?;
    if matches!(args.target_side, SideArg::Right) {
        alignments = alignments.swapped();
    }
    let cfg = PipelineConfig {
        cap: args.max_vectors,
        min_count: args.min_count,
        clustering: ClusteringConfig {
            k_max: args.kmax,
            seed: args.seed,
            min_count: args.min_count,
            ..ClusteringConfig::default()
        },
        in_iterations: args.in_iters,
        use_in: !args.no_in,
        lowercase: args.lowercase,
        level: args.level.into(),
        seed: args.seed,
    };
    let target = read_corpus(&args.target_corpus)?;
    let source = read_corpus(&args.source_corpus)?;
    let mut coll = collect_type_pairs(target, source, &alignments, cfg.cap, cfg.lowercase)?;
    let (artifact, (x_s, y_s)) = train_from_collection(&mut coll, &cfg)?;
    if artifact.underdetermined {
        eprintln!(
            "warning: {} anchors for {} dimensions; the map is underdetermined",
            artifact.anchor_count, artifact.dim
        );
    }
    save_artifact(&artifact, &args.out)?;
    if let Some(prefix) = &args.export_anchors {
        write_word2vec_text(&x_s, format!("{prefix}.target.vec"))?;
        write_word2vec_text(&y_s, format!("{prefix}.source.vec"))?;
    }
    println!(
        "wrote {} (dim={}, level={}, anchors={}, residual={:.6})",
        args.out.display(),
        artifact.dim,
        artifact.level,
        artifact.anchor_count,
        artifact.residual
    );
    Ok(())
}

fn apply(args: ApplyArgs) -> Result<()> {
    let artifact = load_artifact(&args.artifact)?;
    let reader = read_corpus(&args.corpus)?;
    let mut out = BufWriter::new(File::create(&args.out).map_err(|e| io_err(&args.out, e))?);
    writeln!(out, "{}", serde_json::json!({ "dim": artifact.dim }))
        .map_err(|e| io_err(&args.out, e))?;
    let mut sentences = 0usize;
    for record in reader {
        let record = record?;
        let mapped = SentenceRecord {
            id: record.id,
            tokens: record.tokens,
            vectors: record
                .vectors
                .iter()
                .map(|v| transfer_vector(&artifact, v))
                .collect::<Result<_>>()?,
        };
        let line = serde_json::to_string(&mapped)
            .map_err(|e| Error::format(Some(args.out.clone()), None, e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| io_err(&args.out, e))?;
        sentences += 1;
    }
    out.flush().map_err(|e| io_err(&args.out, e))?;
    println!("mapped {sentences} sentences into {}", args.out.display());
    Ok(())
}

fn anisotropy(args: AnisotropyArgs) -> Result<()> {
    let (matrix, _) = load_corpus_matrix(&args.corpus)?;
    let score = anisotropy_score(&matrix, args.sample, args.seed)?;
    let label = args
        .label
        .unwrap_or_else(|| args.corpus.display().to_string());
    println!(
        "anisotropy score: {score:.6} (n_vectors={}, sample={}, seed={})",
        matrix.count(),
        args.sample.min(matrix.count()),
        args.seed
    );
    if let Some(csv) = &args.csv {
        let mut f = BufWriter::new(File::create(csv).map_err(|e| io_err(csv, e))?);
        writeln!(f, "label,n_vectors,sample_size,seed,score").map_err(|e| io_err(csv, e))?;
        writeln!(
            f,
            "{label},{},{},{},{score}",
            matrix.count(),
            args.sample.min(matrix.count()),
            args.seed
        )
        .map_err(|e| io_err(csv, e))?;
        f.flush().map_err(|e| io_err(csv, e))?;
    }
    Ok(())
}

fn iterative_normalize(args: InArgs) -> Result<()> {
    let (matrix, _) = load_corpus_matrix(&args.corpus)?;

    // Row t describes the state after t iterations: the norm of the
    // current mean and the anisotropy score.
    let mut rows = Vec::with_capacity(args.iters + 1);
    let mut current = matrix;
    let state_row = |m: &EmbeddingMatrix| -> Result<(f64, f64)> {
        let mean_norm = m.column_mean().map(|m| norm(&m)).unwrap_or(0.0);
        let score = anisotropy_score(m, args.sample, args.seed)?;
        Ok((mean_norm, score))
    };
    rows.push(state_row(&current)?);
    for _ in 0..args.iters {
        let (_, next) = fit_iterative_normalization(&current, 1)?;
        current = next;
        rows.push(state_row(&current)?);
    }

    println!("iteration,mean_norm,anisotropy_score");
    for (t, (mean_norm, score)) in rows.iter().enumerate() {
        println!("{t},{mean_norm:.6e},{score:.6}");
    }
    if let Some(csv) = &args.csv {
        let mut f = BufWriter::new(File::create(csv).map_err(|e| io_err(csv, e))?);
        writeln!(f, "iteration,mean_norm,anisotropy_score").map_err(|e| io_err(csv, e))?;
        for (t, (mean_norm, score)) in rows.iter().enumerate() {
            writeln!(f, "{t},{mean_norm},{score}").map_err(|e| io_err(csv, e))?;
        }
        f.flush().map_err(|e| io_err(csv, e))?;
    }
    if let Some(out) = &args.out {
        write_corpus_with_vectors(&args.corpus, out, &current)?;
        println!("wrote normalized corpus to {}", out.display());
    }
    Ok(())
}

fn eval_retrieval(args: EvalRetrievalArgs) -> Result<()> {
    let artifact = load_artifact(&args.artifact)?;
    let truth = load_ground_truth(&args.truth)?;
    for (k, p) in evaluate_retrieval(&artifact, &truth, &[1, 5])? {
        println!("P@{k} {p:.4}");
    }
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        dim: args.dim,
        n_types: args.types,
        n_sentences: args.sentences,
        sentence_len: args.sentence_len,
        two_sense_fraction: args.two_sense_fraction,
        noise_sigma: args.noise_sigma,
        anisotropy_offset_norm: args.anisotropy_offset_norm,
        sense_offset_norm: args.sense_offset_norm,
        seed: args.seed,
    };
    let files = generate_synthetic(&cfg, &args.out_dir)?;
    println!("wrote {}", files.target_corpus.display());
    println!("wrote {}", files.source_corpus.display());
    println!("wrote {}", files.alignments.display());
    println!("wrote {}", files.ground_truth.display());
    Ok(())
}

/// Read a whole corpus into one matrix of column vectors.
fn load_corpus_matrix(path: &Path) -> Result<(EmbeddingMatrix, usize)> {
    let reader = read_corpus(path)?;
    let dim = reader.dim();
    let mut values = Vec::new();
    let mut sentences = 0usize;
    for record in reader {
        let record = record?;
        for v in record.vectors {
            values.extend(v);
        }
        sentences += 1;
    }
    Ok((EmbeddingMatrix::new(dim, values)?, sentences))
}

/// Rewrite a corpus with its vectors replaced by the columns of `matrix`
/// (in token order).
fn write_corpus_with_vectors(
    source: &Path,
    out: &Path,
    matrix: &EmbeddingMatrix,
) -> Result<()> {
    let reader = read_corpus(source)?;
    let mut writer = BufWriter::new(File::create(out).map_err(|e| io_err(out, e))?);
    writeln!(writer, "{}", serde_json::json!({ "dim": matrix.dim() }))
        .map_err(|e| io_err(out, e))?;
    let mut col = 0usize;
    for record in reader {
        let record = record?;
        let vectors: Vec<Vec<f64>> = record
            .vectors
            .iter()
            .map(|_| {
                let v = matrix.column(col).to_vec();
                col += 1;
                v
            })
            .collect();
        let mapped = SentenceRecord {
            id: record.id,
            tokens: record.tokens,
            vectors,
        };
        let line = serde_json::to_string(&mapped)
            .map_err(|e| Error::format(Some(out.to_path_buf()), None, e.to_string()))?;
        writeln!(writer, "{line}").map_err(|e| io_err(out, e))?;
    }
    writer.flush().map_err(|e| io_err(out, e))
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}
