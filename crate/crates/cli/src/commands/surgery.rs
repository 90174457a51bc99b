use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand};
use qirat::surgery::{
    extend_vocab, intersect_vocab, missing_tokens, reduce_embeddings, EmbeddingTable, SurgeryReport, TokenizerModel,
};
use rand::SeedableRng;

#[derive(Debug, Subcommand)]
pub enum SurgeryCommand {
    /// Keep only the rows for tokens a freshly trained tokenizer also has.
    Reduce(ReduceArgs),
    /// Append rows for new tokens, each the mean of its subtoken rows.
    Extend(ExtendArgs),
    /// Write a random embedding table sized to a tokenizer.
    Init(InitArgs),
}

#[derive(Debug, Args)]
pub struct ReduceArgs {
    /// Tokenizer the embedding table belongs to.
    #[arg(long)]
    pub orig: PathBuf,
    /// Tokenizer trained on the target-language corpus.
    #[arg(long)]
    pub fresh: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExtendArgs {
    #[arg(long)]
    pub tokenizer: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    /// New tokens, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub tokens: Vec<String>,
    /// Add every non-special token of this domain tokenizer that is missing.
    #[arg(long)]
    pub domain: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InitArgs {
    #[arg(long)]
    pub tokenizer: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cmd: SurgeryCommand) -> Result<()> {
    match cmd {
        SurgeryCommand::Reduce(a) => reduce(a),
        SurgeryCommand::Extend(a) => extend(a),
        SurgeryCommand::Init(a) => init(a),
    }
}

fn load_tokenizer(path: &Path) -> Result<TokenizerModel> {
    TokenizerModel::load(path).with_context(|| format!("reading tokenizer {}", path.display()))
}

fn load_table(path: &Path, tokenizer: &TokenizerModel) -> Result<EmbeddingTable> {
    let (table, vocab) = EmbeddingTable::load(path).with_context(|| format!("reading embeddings {}", path.display()))?;
    if table.rows() != tokenizer.vocab_size() {
        bail!(
            "{} has {} rows but the tokenizer has {} tokens",
            path.display(),
            table.rows(),
            tokenizer.vocab_size()
        );
    }
    if !vocab.is_empty() && vocab != tokenizer.tokens() {
        bail!("{} was saved for a different vocabulary", path.display());
    }
    Ok(table)
}

fn write_outputs(out: &Path, table: &EmbeddingTable, tokenizer: &TokenizerModel, report: &SurgeryReport) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    tokenizer.save(&out.join("tokenizer.json"))?;
    table.save(&out.join("embeddings.emb"), tokenizer)?;
    std::fs::write(out.join("report.json"), serde_json::to_string_pretty(report)?)?;
    println!("{}", serde_json::to_string_pretty(report)?);
    Ok(())
}

fn reduce(a: ReduceArgs) -> Result<()> {
    let orig = load_tokenizer(&a.orig)?;
    let fresh = load_tokenizer(&a.fresh)?;
    let table = load_table(&a.embeddings, &orig)?;
    let kept = intersect_vocab(&orig, &fresh);
    let r = reduce_embeddings(&table, &orig, &kept)?;
    write_outputs(&a.out, &r.table, &r.tokenizer, &r.report)
}

fn extend(a: ExtendArgs) -> Result<()> {
    let tokenizer = load_tokenizer(&a.tokenizer)?;
    let table = load_table(&a.embeddings, &tokenizer)?;
    let mut tokens = a.tokens.clone();
    if let Some(d) = &a.domain {
        tokens.extend(missing_tokens(&tokenizer, &load_tokenizer(d)?));
    }
    if tokens.is_empty() {
        bail!("no tokens to add: give --tokens or --domain");
    }
    let e = extend_vocab(&table, &tokenizer, &tokens)?;
    write_outputs(&a.out, &e.table, &e.tokenizer, &e.report)
}

fn init(a: InitArgs) -> Result<()> {
    use rand_distr::{Distribution, Normal};
    let tokenizer = load_tokenizer(&a.tokenizer)?;
    if a.dim == 0 {
        bail!("--dim must be positive");
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(a.seed);
    let normal = Normal::new(0.0f32, 0.02).expect("valid normal");
    let values = (0..tokenizer.vocab_size() * a.dim).map(|_| normal.sample(&mut rng)).collect();
    let table = EmbeddingTable::new(a.dim, values)?;
    table.save(&a.out, &tokenizer)?;
    println!("wrote {} x {} table to {}", table.rows(), a.dim, a.out.display());
    Ok(())
}
