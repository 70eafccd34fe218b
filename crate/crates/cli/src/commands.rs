use std::path::{Path, PathBuf};

use anyhow::Context;
use infill::corpus::synthetic::write_corpus;
use infill::corpus::{load_dataset, AlignmentRecord, Inventory, SyntheticConfig, Utterance};
use infill::dsp::{read_wav, wav_to_mel, write_wav, MelFilterbank, MelSpectrogram};
use infill::tensor::{Archive, Tensor};
use infill::training::{
    eval_duration, eval_duration_with, infer_edit, resynth_all, train as run_training, Checkpoint, EditRequest,
    Vocoder,
};
use log::info;
use serde_json::{json, Value};

use crate::config::{require_exists, RunConfig, TrainFlags};
use crate::error::usage;
use crate::CHECKPOINT_ENV;

const MEL_TENSOR: &str = "mel";

#[derive(Debug, Clone, clap::Args)]
pub struct RecordingArgs {
    #[arg(long, env = CHECKPOINT_ENV)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub audio: PathBuf,
    /// Alignment JSON of the recording.
    #[arg(long)]
    pub alignment: PathBuf,
    /// Output WAV.
    #[arg(long)]
    pub out: PathBuf,
    /// Also dump the synthesized log-mel as a tensor archive.
    #[arg(long)]
    pub mel_out: Option<PathBuf>,
    /// Griffin-Lim phase seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub gl_iters: Option<usize>,
}

fn mel_archive(mel: &MelSpectrogram) -> anyhow::Result<Archive> {
    let mut archive = Archive::single(MEL_TENSOR, Tensor::new(vec![mel.frames, mel.n_mels], mel.data.clone())?)?;
    archive.metadata.insert("frames".into(), mel.frames.into());
    archive.metadata.insert("n_mels".into(), mel.n_mels.into());
    archive.metadata.insert("hop_seconds".into(), mel.hop_seconds.into());
    archive.metadata.insert("win_seconds".into(), mel.win_seconds.into());
    Ok(archive)
}

fn read_mel_archive(dir: &Path) -> anyhow::Result<MelSpectrogram> {
    let archive = Archive::load(dir)?;
    let (_, _, t) = archive
        .params
        .iter()
        .find(|(_, name, _)| *name == MEL_TENSOR)
        .with_context(|| format!("{} holds no {MEL_TENSOR:?} tensor", dir.display()))?;
    if t.shape().len() != 2 {
        anyhow::bail!("{}: mel tensor has shape {:?}, expected frames x bands", dir.display(), t.shape());
    }
    Ok(MelSpectrogram::new(t.shape()[0], t.shape()[1], t.data().to_vec())?)
}

fn load_checkpoint(cfg: &RunConfig, flag: Option<&Path>) -> anyhow::Result<(Checkpoint, PathBuf)> {
    let dir = RunConfig::path(flag, &cfg.checkpoint, &format!("--checkpoint (or {CHECKPOINT_ENV})"))?;
    require_exists(&dir)?;
    let ck = Checkpoint::load(&dir)?;
    let inv = Inventory::arpabet();
    if ck.model.config.vocab_size != inv.len() {
        anyhow::bail!(
            "checkpoint expects {} phoneme symbols, inventory has {}",
            ck.model.config.vocab_size,
            inv.len()
        );
    }
    Ok((ck, dir))
}

fn load_recording(args: &RecordingArgs, inv: &Inventory, fb: &MelFilterbank) -> anyhow::Result<(Utterance, infill::dsp::AudioClip)> {
    require_exists(&args.audio)?;
    require_exists(&args.alignment)?;
    let record = AlignmentRecord::load(&args.alignment, inv)?;
    let clip = read_wav(&args.audio)?;
    let id = args
        .alignment
        .file_stem()
        .map_or_else(|| "utterance".into(), |s| s.to_string_lossy().into_owned());
    let utt = Utterance::from_audio(id, record, &clip, inv, fb)?;
    Ok((utt, clip))
}

pub fn mel(wav: &Path, out: &Path) -> anyhow::Result<Value> {
    require_exists(wav)?;
    let clip = read_wav(wav)?;
    let mel = wav_to_mel(&clip, &MelFilterbank::standard()?)?;
    mel_archive(&mel)?.save(out)?;
    info!("{}: {} frames", wav.display(), mel.frames);
    Ok(json!({
        "command": "mel",
        "input": wav,
        "output": out,
        "frames": mel.frames,
        "n_mels": mel.n_mels,
        "hop_seconds": mel.hop_seconds,
    }))
}

pub fn train(
    cfg: &RunConfig,
    manifest: Option<PathBuf>,
    valid_manifest: Option<PathBuf>,
    out_dir: Option<PathBuf>,
    seed: Option<u64>,
    preset: Option<&str>,
    flags: &TrainFlags,
) -> anyhow::Result<Value> {
    let manifest = RunConfig::path(manifest.as_deref(), &cfg.manifest, "--manifest")?;
    let valid = valid_manifest.or_else(|| cfg.valid_manifest.clone());
    let out_dir = RunConfig::path(out_dir.as_deref(), &cfg.out_dir, "--out-dir")?;
    let seed = cfg.seed(seed)?;
    let model_cfg = cfg.model_config(preset)?;
    let train_cfg = cfg.train_config(flags, seed);
    require_exists(&manifest)?;
    if let Some(v) = &valid {
        require_exists(v)?;
    }

    let inv = Inventory::arpabet();
    let fb = MelFilterbank::standard()?;
    let train_set = load_dataset(&manifest, &inv, &fb)?;
    let valid_set = match &valid {
        Some(v) => load_dataset(v, &inv, &fb)?,
        None => Vec::new(),
    };
    std::fs::create_dir_all(&out_dir).map_err(|e| crate::error::io_error(format!("cannot create {}: {e}", out_dir.display())))?;
    let out = run_training(&train_set, &valid_set, &model_cfg, &train_cfg, Some(&out_dir))?;
    Ok(json!({
        "command": "train",
        "out_dir": out_dir,
        "last": out_dir.join(infill::training::trainer::LAST_DIR),
        "best": out_dir.join(infill::training::trainer::BEST_DIR),
        "loss_csv": out_dir.join(infill::training::trainer::LOSS_CSV),
        "steps": out.curve.len(),
        "epochs_run": out.epochs_run,
        "best_epoch": out.best_epoch,
        "best_loss": out.best_loss,
        "final": out.curve.last(),
        "parameters": out.checkpoint.model.params.num_scalars(),
        "train": train_cfg,
        "model": model_cfg,
    }))
}

pub fn edit(cfg: &RunConfig, args: &RecordingArgs, after: i64, phonemes: &str, word: &str) -> anyhow::Result<Value> {
    let inv = Inventory::arpabet();
    let ids = inv.parse_phonemes(phonemes).map_err(|e| usage(e.to_string()))?;
    if ids.is_empty() {
        return Err(usage("--phonemes must name at least one phoneme to insert"));
    }
    let seed = cfg.seed(args.seed)?;
    let (ck, _) = load_checkpoint(cfg, args.checkpoint.as_deref())?;
    let fb = MelFilterbank::standard()?;
    let (utt, clip) = load_recording(args, &inv, &fb)?;
    let n_words = utt.phonemes.words().len() as i64;
    if after < -1 || after >= n_words {
        return Err(usage(format!(
            "--insert-after-word {after} out of range: the recording has {n_words} words (use -1..{})",
            n_words - 1
        )));
    }
    let vocoder = Vocoder::new(cfg.griffin_lim(args.gl_iters, seed))?;
    let req = EditRequest {
        insert_after_word: after,
        phonemes: ids,
        word_text: word.to_string(),
    };
    let out = infer_edit(&ck, &utt, &clip, &req, &vocoder)?;
    write_wav(&args.out, &out.audio)?;
    if let Some(dir) = &args.mel_out {
        mel_archive(&out.mel)?.save(dir)?;
    }
    let span = out.script.phoneme_span.clone();
    Ok(json!({
        "command": "edit",
        "output": args.out,
        "mel_output": args.mel_out,
        "script": out.script,
        "phonemes": out.phonemes.ids()[span.clone()].iter().filter_map(|&id| inv.symbol(id)).collect::<Vec<_>>(),
        "durations": out.durations.frames[span.clone()],
        "raw_durations": out.raw_durations[span],
        "input_samples": clip.len(),
        "output_samples": out.audio.len(),
        "sample_rate": out.audio.sample_rate,
    }))
}

pub fn resynth(cfg: &RunConfig, args: &RecordingArgs) -> anyhow::Result<Value> {
    let seed = cfg.seed(args.seed)?;
    let (ck, _) = load_checkpoint(cfg, args.checkpoint.as_deref())?;
    let inv = Inventory::arpabet();
    let fb = MelFilterbank::standard()?;
    let (utt, _) = load_recording(args, &inv, &fb)?;
    let vocoder = Vocoder::new(cfg.griffin_lim(args.gl_iters, seed))?;
    let out = resynth_all(&ck, &utt, &vocoder)?;
    write_wav(&args.out, &out.audio)?;
    if let Some(dir) = &args.mel_out {
        mel_archive(&out.mel)?.save(dir)?;
    }
    Ok(json!({
        "command": "resynth",
        "output": args.out,
        "mel_output": args.mel_out,
        "frames": out.mel.frames,
        "samples": out.audio.len(),
        "words": out.words,
    }))
}

pub fn eval_dur(
    cfg: &RunConfig,
    checkpoint: Option<PathBuf>,
    manifest: Option<PathBuf>,
    seed: Option<u64>,
    oracle: bool,
    details: bool,
) -> anyhow::Result<Value> {
    let manifest = RunConfig::path(manifest.as_deref(), &cfg.manifest, "--manifest")?;
    let seed = cfg.seed(seed)?;
    require_exists(&manifest)?;
    let inv = Inventory::arpabet();
    let fb = MelFilterbank::standard()?;
    let (report, words, predictor) = if oracle {
        let utts = load_dataset(&manifest, &inv, &fb)?;
        let (r, w) = eval_duration_with(&utts, seed, |ex| Ok(ex.reference.frames.clone()))?;
        (r, w, Value::from("oracle"))
    } else {
        let (ck, dir) = load_checkpoint(cfg, checkpoint.as_deref())?;
        let utts = load_dataset(&manifest, &inv, &fb)?;
        let (r, w) = eval_duration(&ck.model, &utts, seed)?;
        (r, w, json!(dir))
    };
    let mut out = json!({
        "command": "eval-dur",
        "predictor": predictor,
        "phoneme_level_error": report.phoneme_level_error,
        "word_level_error": report.word_level_error,
        "n_words": report.n_words,
        "n_phonemes": report.n_phonemes,
    });
    if details {
        out["words"] = serde_json::to_value(words)?;
    }
    Ok(out)
}

pub fn vocode(cfg: &RunConfig, mel: &Path, out: &Path, seed: Option<u64>, iters: Option<usize>) -> anyhow::Result<Value> {
    let seed = cfg.seed(seed)?;
    require_exists(mel)?;
    let spec = read_mel_archive(mel)?;
    let vocoder = Vocoder::new(cfg.griffin_lim(iters, seed))?;
    let clip = vocoder.vocode(&spec)?;
    write_wav(out, &clip)?;
    Ok(json!({
        "command": "vocode",
        "input": mel,
        "output": out,
        "frames": spec.frames,
        "samples": clip.len(),
        "sample_rate": clip.sample_rate,
    }))
}

pub fn synth_corpus(cfg: &RunConfig, out_dir: &Path, utterances: usize, seed: Option<u64>, noise: f64) -> anyhow::Result<Value> {
    let seed = cfg.seed(seed)?;
    let syn = SyntheticConfig {
        utterances,
        duration_noise: noise,
        seed,
        ..Default::default()
    };
    let manifest = write_corpus(out_dir, &syn, &Inventory::arpabet())?;
    Ok(json!({
        "command": "synth-corpus",
        "manifest": manifest,
        "utterances": utterances,
        "config": syn,
    }))
}
