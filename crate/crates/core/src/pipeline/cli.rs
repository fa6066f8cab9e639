//! Command-line surface. Flags override the JSON config, which overrides
//! built-in defaults.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use super::commands::{
    cmd_classify, cmd_dump_attention, cmd_evaluate, cmd_stats, cmd_train, cmd_tune, EvalMode,
};
use super::config::RunConfig;
use crate::error::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "haabsa", version, about = "Hybrid ontology + LCR-Rot-hop aspect sentiment classifier")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Polarity counts and percentages of a corpus
    Stats(Common),
    /// Train the backup network and save a checkpoint
    Train(Common),
    /// Accuracy and confusion counts of a checkpoint or the hybrid pipeline
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "model")]
        mode: ModeArg,
    },
    /// Tune learning rate, momentum, L2 and dropout with TPE
    Tune(Common),
    /// Hybrid predictions as JSON lines
    Classify(Common),
    /// Attention scores per sentence, hop and side as JSON lines
    DumpAttention(Common),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Model,
    Hybrid,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum BackupArg {
    Model,
    Majority,
}

#[derive(Args, Debug, Default)]
pub struct Common {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Training split (majority backup, tuning)
    #[arg(long)]
    pub train_corpus: Option<PathBuf>,
    /// Held-out split reported after training
    #[arg(long)]
    pub test_corpus: Option<PathBuf>,
    /// Embedding file; kind defaults to "static" when only a path is given
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// static | hashed | bert | elmo
    #[arg(long)]
    pub embedding_kind: Option<String>,
    #[arg(long)]
    pub embedding_dim: Option<usize>,
    #[arg(long)]
    pub ontology: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..=4))]
    pub method: Option<u8>,
    #[arg(long)]
    pub hops: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long, value_enum)]
    pub backup: Option<BackupArg>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub init_bound: Option<f64>,
    #[arg(long)]
    pub budget: Option<usize>,
}

impl Common {
    /// Defaults, then `--config`, then the remaining flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($flag:expr => $($field:tt)+) => {
                if let Some(v) = $flag.clone() {
                    cfg.$($field)+ = v.into();
                }
            };
        }
        set!(self.seed => seed);
        set!(self.corpus => corpus);
        set!(self.train_corpus => train_corpus);
        set!(self.test_corpus => test_corpus);
        set!(self.ontology => ontology);
        set!(self.checkpoint => checkpoint);
        set!(self.method => method);
        set!(self.hops => hops);
        set!(self.hidden => hidden_dim);
        set!(self.out => out);
        set!(self.epochs => hyper.epochs);
        set!(self.lr => hyper.learning_rate);
        set!(self.momentum => hyper.momentum);
        set!(self.l2 => hyper.l2);
        set!(self.dropout => hyper.dropout);
        set!(self.init_bound => hyper.init_bound);
        set!(self.budget => tune.budget);
        if let Some(b) = self.backup {
            cfg.backup = match b {
                BackupArg::Model => "model",
                BackupArg::Majority => "majority",
            }
            .into();
        }
        if let Some(p) = &self.embeddings {
            cfg.embeddings.path = Some(p.clone());
            if self.embedding_kind.is_none() && cfg.embeddings.kind == "hashed" {
                cfg.embeddings.kind = "static".into();
                cfg.embeddings.dim = None;
            }
        }
        if let Some(k) = &self.embedding_kind {
            cfg.embeddings.kind = k.clone();
            if k != "hashed" && self.embedding_dim.is_none() {
                cfg.embeddings.dim = None;
            }
        }
        if let Some(d) = self.embedding_dim {
            cfg.embeddings.dim = Some(d);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn execute(command: &Command, stdout: &mut dyn Write) -> Result<()> {
    match command {
        Command::Stats(c) => cmd_stats(&c.resolve()?, stdout),
        Command::Train(c) => cmd_train(&c.resolve()?, stdout),
        Command::Evaluate { common, mode } => {
            let mode = match mode {
                ModeArg::Model => EvalMode::Model,
                ModeArg::Hybrid => EvalMode::Hybrid,
            };
            cmd_evaluate(&common.resolve()?, mode, stdout)
        }
        Command::Tune(c) => cmd_tune(&c.resolve()?, stdout),
        Command::Classify(c) => cmd_classify(&c.resolve()?, stdout),
        Command::DumpAttention(c) => cmd_dump_attention(&c.resolve()?, stdout),
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_usage() {
        EXIT_USAGE
    } else {
        EXIT_DIVERGENCE
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = write!(stderr, "{e}");
            return code;
        }
    };
    match execute(&cli.command, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}
