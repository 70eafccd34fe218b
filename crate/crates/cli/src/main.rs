//! `infill`: feature extraction, training, word insertion, resynthesis,
//! duration evaluation and vocoding from the command line.
//!
//! Logs go to stderr; stdout carries one JSON document per run. Exit codes:
//! 0 success, 1 usage, 2 input I/O, 3 runtime failure.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use config::{RunConfig, TrainFlags};
use error::{exit_code, EXIT_OK, EXIT_USAGE};

pub const CHECKPOINT_ENV: &str = "INFILL_CHECKPOINT";

#[derive(Debug, Parser)]
#[command(name = "infill", version, about = "Context-aware word insertion into speech recordings")]
struct Cli {
    /// JSON run configuration; flags take precedence over its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Log-mel features of a WAV file, written as a tensor archive.
    Mel {
        #[arg(long)]
        wav: PathBuf,
        /// Output archive directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Trains a model; writes last/ and best/ checkpoints and loss.csv.
    Train {
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Held-out manifest used to pick the best checkpoint.
        #[arg(long)]
        valid_manifest: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Model size: tiny, small or default.
        #[arg(long)]
        preset: Option<String>,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Inserts a word into a recording.
    Edit {
        #[command(flatten)]
        input: commands::RecordingArgs,
        /// Index of the word the new word follows; -1 inserts before the first word.
        #[arg(long, allow_negative_numbers = true)]
        insert_after_word: i64,
        /// Space-separated ARPAbet phonemes of the new word.
        #[arg(long)]
        phonemes: String,
        /// Spelling of the new word, for the edit report.
        #[arg(long, default_value = "")]
        word: String,
    },
    /// Regenerates every word of a recording from its context.
    Resynth {
        #[command(flatten)]
        input: commands::RecordingArgs,
    },
    /// Duration error of a checkpoint on masked words of a dataset.
    EvalDur {
        #[arg(long, env = CHECKPOINT_ENV)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Score the reference durations instead of a checkpoint.
        #[arg(long)]
        oracle: bool,
        /// Include per-word predictions in the report.
        #[arg(long)]
        details: bool,
    },
    /// Griffin-Lim waveform for a mel archive written by `mel` or `edit`.
    Vocode {
        #[arg(long)]
        mel: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        gl_iters: Option<usize>,
    },
    /// Writes a procedurally generated corpus with a manifest.
    SynthCorpus {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 8)]
        utterances: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Probability of each of the -1 and +1 frame duration perturbations.
        #[arg(long, default_value_t = 0.0)]
        duration_noise: f64,
    },
}

fn run(cli: Cli) -> anyhow::Result<serde_json::Value> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Mel { wav, out } => commands::mel(&wav, &out),
        Command::Train {
            manifest,
            valid_manifest,
            out_dir,
            seed,
            preset,
            train,
        } => commands::train(&cfg, manifest, valid_manifest, out_dir, seed, preset.as_deref(), &train),
        Command::Edit {
            input,
            insert_after_word,
            phonemes,
            word,
        } => commands::edit(&cfg, &input, insert_after_word, &phonemes, &word),
        Command::Resynth { input } => commands::resynth(&cfg, &input),
        Command::EvalDur {
            checkpoint,
            manifest,
            seed,
            oracle,
            details,
        } => commands::eval_dur(&cfg, checkpoint, manifest, seed, oracle, details),
        Command::Vocode {
            mel,
            out,
            seed,
            gl_iters,
        } => commands::vocode(&cfg, &mel, &out, seed, gl_iters),
        Command::SynthCorpus {
            out_dir,
            utterances,
            seed,
            duration_noise,
        } => commands::synth_corpus(&cfg, &out_dir, utterances, seed, duration_noise),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(EXIT_OK);
        }
        Err(e) => {
            let _ = e.print();
            println!("{}", json!({ "ok": false, "exit_code": EXIT_USAGE, "error": e.to_string().trim() }));
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match run(cli) {
        Ok(mut summary) => {
            if let Some(obj) = summary.as_object_mut() {
                obj.insert("ok".into(), true.into());
            }
            println!("{summary}");
            ExitCode::from(EXIT_OK)
        }
        Err(e) => {
            let code = exit_code(&e);
            log::error!("{e:#}");
            println!("{}", json!({ "ok": false, "exit_code": code, "error": format!("{e:#}") }));
            ExitCode::from(code)
        }
    }
}
