use anyhow::Result;
use clap::Args;
use qirat::surgery::{count_params, ModelShape};

#[derive(Debug, Args)]
pub struct ParamsArgs {
    /// Also count XLM-R base with this vocabulary size.
    #[arg(long)]
    pub vocab: Option<u64>,
}

pub fn run(a: ParamsArgs) -> Result<()> {
    let mut rows = vec![
        ("XLM-R base", ModelShape::xlmr_base()),
        ("mBERT", ModelShape::mbert()),
        ("XLM-R 43k", ModelShape::xlmr_reduced()),
    ];
    let custom;
    if let Some(v) = a.vocab {
        custom = format!("XLM-R {v}");
        rows.push((custom.as_str(), ModelShape::xlmr_base().with_vocab(v)));
    }
    println!("{:<14} {:>10} {:>14} {:>12} {:>12}", "model", "vocab", "embeddings", "encoder", "total");
    for (name, shape) in rows {
        let c = count_params(&shape);
        println!(
            "{:<14} {:>10} {:>13.1}M {:>11.1}M {:>11.1}M",
            name,
            shape.vocab,
            c.vocab_embedding as f64 / 1e6,
            c.encoder as f64 / 1e6,
            c.total as f64 / 1e6
        );
    }
    Ok(())
}
