use anyhow::Result;
use clap::{Args, Subcommand};
use qirat::contrastive::{toy_pairs, LinearEncoder, DEFAULT_TEMPERATURE};

#[derive(Debug, Subcommand)]
pub enum LossCommand {
    /// Train a linear encoder on synthetic pairs and print the loss curve.
    Demo(DemoArgs),
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long, default_value_t = 32)]
    pub pairs: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    #[arg(long, default_value_t = DEFAULT_TEMPERATURE)]
    pub tau: f64,
    #[arg(long, default_value_t = 0.02)]
    pub lr: f64,
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(cmd: LossCommand) -> Result<()> {
    let LossCommand::Demo(a) = cmd;
    anyhow::ensure!(a.pairs > 0 && a.dim > 0 && a.steps > 0, "pairs, dim and steps must be positive");
    let (q, p) = toy_pairs(a.pairs, a.dim, a.noise, a.seed);
    let mut enc = LinearEncoder::random(a.dim, a.dim, a.seed.wrapping_add(1));
    let every = (a.steps / 10).max(1);
    let mut first = None;
    let mut last = 0.0;
    for step in 0..a.steps {
        last = enc.step(&q, &p, a.tau, a.lr)?;
        first.get_or_insert(last);
        if step % every == 0 {
            println!("step {step:>5}  loss {last:.6}");
        }
    }
    println!("initial {:.6}  final {last:.6}", first.unwrap_or(last));
    Ok(())
}
