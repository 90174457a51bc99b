use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Subcommand};
use qirat::surgery::train_bpe;

#[derive(Debug, Subcommand)]
pub enum BpeCommand {
    /// Train a tokenizer on a plain-text corpus.
    Train(TrainArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Plain text, one or more words per line.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Alphabet plus merges; special tokens come on top.
    #[arg(long)]
    pub vocab_size: usize,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cmd: BpeCommand) -> Result<()> {
    match cmd {
        BpeCommand::Train(a) => {
            let text = std::fs::read_to_string(&a.corpus).with_context(|| format!("reading {}", a.corpus.display()))?;
            let model = train_bpe(text.lines(), a.vocab_size)?;
            model.save(&a.out)?;
            println!(
                "{} tokens ({} alphabet, {} merges) written to {}",
                model.vocab_size(),
                model.alphabet().len(),
                model.merges().len(),
                a.out.display()
            );
            Ok(())
        }
    }
}
