//! The insertion network: a phoneme stream and a spectrogram stream,
//! aligned by durations, fused by addition and decoded to a full-sentence
//! mel-spectrogram.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::layers::{fan_in_uniform, scaled_positional_encoding, transformer_encoder, Affine, EncoderLayer, Fwd, Linear};
use crate::corpus::{DurationKind, DurationTrack, PhonemeSequence};
use crate::dsp::MelSpectrogram;
use crate::error::{contract_err, Error, Result};
use crate::tensor::{Element, Graph, ParamId, ParamStore, Tensor, Var};

#[derive(Debug, Clone)]
/// Convolution without bias: the per-sequence norm that follows would
/// cancel it.
struct ConvBlock {
    w: ParamId,
    norm: Affine,
}

#[derive(Debug, Clone)]
pub struct Model<F: Element> {
    pub config: ModelConfig,
    pub params: ParamStore<F>,
    embed: ParamId,
    convs: Vec<ConvBlock>,
    text_proj: Linear,
    text_alpha: ParamId,
    text_encoder: Vec<EncoderLayer>,
    dur_in: Linear,
    dur_layer: EncoderLayer,
    dur_fc1: Linear,
    dur_fc2: Linear,
    spec_fc1: Linear,
    spec_fc2: Linear,
    spec_alpha: ParamId,
    spec_encoder: Vec<EncoderLayer>,
    decoder: Vec<EncoderLayer>,
    mel_out: Linear,
}

/// Graph nodes of one training forward pass.
pub struct TrainOutput {
    /// Predicted mel, `T x n_mels`.
    pub mel: Var,
    /// Predicted `log(1 + d)` per phoneme, `N x 1`.
    pub log_durations: Var,
}

/// Result of inference on one sentence.
#[derive(Debug, Clone)]
pub struct Synthesis {
    /// Raw predictor output `d_hat` in frames, every phoneme.
    pub raw_durations: Vec<f64>,
    pub durations: DurationTrack,
    /// Decoder output in the model's (normalized) mel domain.
    pub mel: MelSpectrogram,
    pub frame_offset: usize,
    pub inserted_frames: usize,
}

impl<F: Element> Model<F> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParamStore::new();
        let c = &config;
        let (e, h) = (c.phoneme_embed_dim, c.hidden_dim);
        let embed = s.add(
            "text.embed",
            Tensor::normal(&[c.vocab_size, e], 1.0, &mut rng),
        )?;
        let mut convs = Vec::with_capacity(c.cnn_layers);
        for i in 0..c.cnn_layers {
            let k = c.cnn_kernel;
            convs.push(ConvBlock {
                w: s.add(format!("text.conv{i}.w"), fan_in_uniform(&[k, e, e], k * e, &mut rng))?,
                norm: Affine::new(&mut s, &format!("text.conv{i}.norm"), e)?,
            });
        }
        let text_proj = Linear::new(&mut s, "text.proj", e, h, &mut rng)?;
        let text_alpha = s.add("text.alpha", Tensor::full(&[1], F::ONE))?;
        let mut layers = |s: &mut ParamStore<F>, name: &str, n: usize| {
            (0..n)
                .map(|i| EncoderLayer::new(s, &format!("{name}.{i}"), h, c.heads, c.ffn_inner_dim, &mut rng))
                .collect::<Result<Vec<_>>>()
        };
        let text_encoder = layers(&mut s, "text.encoder", c.text_encoder_layers)?;
        let dur_layer = layers(&mut s, "duration.encoder", 1)?.remove(0);
        let spec_encoder = layers(&mut s, "spec.encoder", c.spec_encoder_layers)?;
        let decoder = layers(&mut s, "decoder", c.decoder_layers)?;
        let dur_in = Linear::new(&mut s, "duration.in", h + 2, h, &mut rng)?;
        let dur_fc1 = Linear::new(&mut s, "duration.fc1", h, h, &mut rng)?;
        let dur_fc2 = Linear::new(&mut s, "duration.fc2", h, 1, &mut rng)?;
        let spec_fc1 = Linear::new(&mut s, "spec.fc1", c.n_mels, h, &mut rng)?;
        let spec_fc2 = Linear::new(&mut s, "spec.fc2", h, h, &mut rng)?;
        let spec_alpha = s.add("spec.alpha", Tensor::full(&[1], F::ONE))?;
        let mel_out = Linear::new(&mut s, "decoder.out", h, c.n_mels, &mut rng)?;
        Ok(Self {
            config,
            params: s,
            embed,
            convs,
            text_proj,
            text_alpha,
            text_encoder,
            dur_in,
            dur_layer,
            dur_fc1,
            dur_fc2,
            spec_fc1,
            spec_fc2,
            spec_alpha,
            spec_encoder,
            decoder,
            mel_out,
        })
    }

    pub fn fwd<'a>(&'a self, g: &'a mut Graph<F>, train: bool) -> Fwd<'a, F> {
        Fwd {
            g,
            params: &self.params,
            train,
            dropout: self.config.dropout,
        }
    }

    /// Phoneme embedding, convolution stack and projection to the hidden
    /// size; one row per phoneme.
    pub fn text_embedding(&self, f: &mut Fwd<F>, ids: &[usize]) -> Result<Var> {
        if ids.is_empty() {
            return Err(Error::Input("empty phoneme sequence".into()));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.config.vocab_size) {
            return Err(Error::Input(format!(
                "phoneme id {bad} outside inventory of {}",
                self.config.vocab_size
            )));
        }
        let table = f.p(self.embed);
        let mut x = f.g.gather_rows(table, ids)?;
        for c in &self.convs {
            let w = f.p(c.w);
            let y = f.g.conv1d(x, w)?;
            let y = c.norm.instance_norm(f, y)?;
            let y = f.g.relu(y);
            x = f.drop(y)?;
        }
        self.text_proj.forward(f, x)
    }

    /// Hidden phoneme sequence: embedding, positional encoding, encoder.
    pub fn encode_text(&self, f: &mut Fwd<F>, ids: &[usize]) -> Result<Var> {
        let h = self.text_embedding(f, ids)?;
        let h = scaled_positional_encoding(f, h, self.text_alpha)?;
        transformer_encoder(f, &self.text_encoder, h)
    }

    /// Predicted `log(1 + d)` per phoneme (`N x 1`), conditioned on the
    /// masked reference durations and the insertion flags.
    pub fn duration_predictor(&self, f: &mut Fwd<F>, h_text: Var, masked: &DurationTrack, inserted: &[bool]) -> Result<Var> {
        let n = f.g.rows(h_text);
        if masked.frames.len() != n || inserted.len() != n {
            return Err(contract_err!(
                "duration predictor got {n} phonemes, {} durations, {} flags",
                masked.frames.len(),
                inserted.len()
            ));
        }
        if let Some(i) = (0..n).find(|&i| inserted[i] != (masked.frames[i] == 0)) {
            return Err(contract_err!(
                "phoneme {i}: reference duration {} inconsistent with inserted flag {}",
                masked.frames[i],
                inserted[i]
            ));
        }
        let refs: Vec<F> = masked.frames.iter().map(|&d| F::from_f64((d as f64).ln_1p())).collect();
        let flags: Vec<F> = inserted.iter().map(|&b| if b { F::ONE } else { F::ZERO }).collect();
        let refs = f.g.input(&[n, 1], refs)?;
        let flags = f.g.input(&[n, 1], flags)?;
        let x = f.g.concat_cols(&[h_text, refs, flags])?;
        let x = self.dur_in.forward(f, x)?;
        let x = self.dur_layer.forward(f, x)?.out;
        let x = self.dur_fc1.forward(f, x)?;
        let x = f.g.relu(x);
        self.dur_fc2.forward(f, x)
    }

    /// Two ReLU layers and a positional encoding over mel frames.
    pub fn spectrogram_embedding(&self, f: &mut Fwd<F>, mel: Var) -> Result<Var> {
        let x = self.spec_fc1.forward(f, mel)?;
        let x = f.g.relu(x);
        let x = self.spec_fc2.forward(f, x)?;
        let x = f.g.relu(x);
        scaled_positional_encoding(f, x, self.spec_alpha)
    }

    pub fn encode_spec(&self, f: &mut Fwd<F>, mel: Var) -> Result<Var> {
        let h = self.spectrogram_embedding(f, mel)?;
        transformer_encoder(f, &self.spec_encoder, h)
    }

    /// Position-wise sum of the aligned streams, decoder stack, projection
    /// to mel bins. The streams must have the same length.
    pub fn fuse_and_decode(&self, f: &mut Fwd<F>, text: Var, spec: Var) -> Result<Var> {
        let (a, b) = (f.g.rows(text), f.g.rows(spec));
        if a != b {
            return Err(contract_err!("cannot fuse {a} text frames with {b} mel frames"));
        }
        let fused = f.g.add(text, spec)?;
        let h = transformer_encoder(f, &self.decoder, fused)?;
        self.mel_out.forward(f, h)
    }

    fn mel_input(&self, f: &mut Fwd<F>, mel: &MelSpectrogram) -> Result<Var> {
        if mel.n_mels != self.config.n_mels {
            return Err(contract_err!(
                "mel has {} bins, model expects {}",
                mel.n_mels,
                self.config.n_mels
            ));
        }
        f.g.input(&[mel.frames, mel.n_mels], mel.data.iter().map(|&v| F::from_f32(v)).collect())
    }

    /// Training pass: regulation uses the ground-truth durations and the
    /// context mel has the edited word's frames zeroed in place, so the
    /// output is frame-aligned with `target`.
    pub fn forward_train(
        &self,
        f: &mut Fwd<F>,
        phonemes: &PhonemeSequence,
        reference: &DurationTrack,
        masked: &DurationTrack,
        target: &MelSpectrogram,
    ) -> Result<TrainOutput> {
        let span = phonemes.inserted_span();
        let offset = reference.offset_of(span.start);
        let frames = reference.offset_of(span.end) - offset;
        let context = extend_mel(target, offset, frames, frames)?;
        let h_text = self.encode_text(f, phonemes.ids())?;
        let log_durations = self.duration_predictor(f, h_text, masked, phonemes.inserted())?;
        let text = length_regulator(f.g, h_text, &reference.frames)?;
        let mel_in = self.mel_input(f, &context)?;
        let spec = self.encode_spec(f, mel_in)?;
        let mel = self.fuse_and_decode(f, text, spec)?;
        Ok(TrainOutput { mel, log_durations })
    }

    fn predict_in(
        &self,
        f: &mut Fwd<F>,
        phonemes: &PhonemeSequence,
        masked: &DurationTrack,
    ) -> Result<(Var, Vec<f64>, DurationTrack)> {
        let h_text = self.encode_text(f, phonemes.ids())?;
        let log_d = self.duration_predictor(f, h_text, masked, phonemes.inserted())?;
        let raw = log_durations_to_frames(f.g.value(log_d));
        let durations = finalize_durations(&raw, masked, phonemes.inserted())?;
        Ok((h_text, raw, durations))
    }

    /// Raw and finalized durations for a sequence whose inserted phonemes
    /// carry zero reference durations.
    pub fn predict_durations(&self, phonemes: &PhonemeSequence, masked: &DurationTrack) -> Result<(Vec<f64>, DurationTrack)> {
        let mut g = Graph::new();
        let mut f = self.fwd(&mut g, false);
        let (_, raw, durations) = self.predict_in(&mut f, phonemes, masked)?;
        Ok((raw, durations))
    }

    /// Inference: predicts durations for the inserted phonemes, zero-pads
    /// `context` (which lacks them) at the insertion point and decodes the
    /// full sentence. `removed` frames at the insertion point of `context`
    /// are dropped first (0 for a pure insertion).
    pub fn synthesize(
        &self,
        phonemes: &PhonemeSequence,
        masked: &DurationTrack,
        context: &MelSpectrogram,
        removed: usize,
    ) -> Result<Synthesis> {
        let mut g = Graph::new();
        let mut f = self.fwd(&mut g, false);
        let (h_text, raw_durations, durations) = self.predict_in(&mut f, phonemes, masked)?;
        let span = phonemes.inserted_span();
        let frame_offset = durations.offset_of(span.start);
        let inserted_frames = durations.offset_of(span.end) - frame_offset;
        let ext = extend_mel(context, frame_offset, removed, inserted_frames)?;
        if ext.frames != durations.total() {
            return Err(contract_err!(
                "context mel gives {} frames but durations sum to {}",
                ext.frames,
                durations.total()
            ));
        }
        let text = length_regulator(f.g, h_text, &durations.frames)?;
        let mel_in = self.mel_input(&mut f, &ext)?;
        let spec = self.encode_spec(&mut f, mel_in)?;
        let out = self.fuse_and_decode(&mut f, text, spec)?;
        let mel = MelSpectrogram::new(
            g.rows(out),
            self.config.n_mels,
            g.value(out).iter().map(|v| v.to_f32()).collect(),
        )?;
        Ok(Synthesis {
            raw_durations,
            durations,
            mel,
            frame_offset,
            inserted_frames,
        })
    }
}

/// `d = max(exp(x) - 1, 0)` for predictor outputs `x = log(1 + d)`.
pub fn log_durations_to_frames<F: Element>(values: &[F]) -> Vec<f64> {
    values.iter().map(|v| (v.to_f64().exp() - 1.0).max(0.0)).collect()
}

/// Integer durations: reference values where not inserted, otherwise
/// `max(1, round_half_up(d_hat))`.
pub fn finalize_durations(d_hat: &[f64], reference: &DurationTrack, inserted: &[bool]) -> Result<DurationTrack> {
    if d_hat.len() != reference.frames.len() || inserted.len() != d_hat.len() {
        return Err(contract_err!(
            "{} predictions, {} reference durations, {} flags",
            d_hat.len(),
            reference.frames.len(),
            inserted.len()
        ));
    }
    let frames = d_hat
        .iter()
        .zip(&reference.frames)
        .zip(inserted)
        .map(|((&p, &r), &ins)| {
            if ins {
                ((p + 0.5).floor().max(1.0)).min(u32::MAX as f64) as u32
            } else {
                r
            }
        })
        .collect();
    Ok(DurationTrack {
        frames,
        kind: DurationKind::Predicted,
    })
}

/// Row indices that repeat phoneme `i` `d[i]` times.
pub fn regulator_index(d: &[u32]) -> Vec<usize> {
    d.iter()
        .enumerate()
        .flat_map(|(i, &n)| std::iter::repeat_n(i, n as usize))
        .collect()
}

/// Repeats row `i` of `h` `d[i]` times.
pub fn length_regulator<F: Element>(g: &mut Graph<F>, h: Var, d: &[u32]) -> Result<Var> {
    if d.len() != g.rows(h) {
        return Err(contract_err!("{} durations for {} phonemes", d.len(), g.rows(h)));
    }
    g.gather_rows(h, &regulator_index(d))
}

/// Keeps frames `[0, offset)`, drops the next `remove` frames, inserts
/// `insert` all-zero frames and keeps the rest.
pub fn extend_mel(mel: &MelSpectrogram, offset: usize, remove: usize, insert: usize) -> Result<MelSpectrogram> {
    if offset + remove > mel.frames {
        return Err(contract_err!(
            "edit region {offset}..{} outside mel of {} frames",
            offset + remove,
            mel.frames
        ));
    }
    let m = mel.n_mels;
    let mut data = Vec::with_capacity((mel.frames - remove + insert) * m);
    data.extend_from_slice(&mel.data[..offset * m]);
    data.extend(std::iter::repeat_n(0.0, insert * m));
    data.extend_from_slice(&mel.data[(offset + remove) * m..]);
    let mut out = MelSpectrogram::new(mel.frames - remove + insert, m, data)?;
    out.hop_seconds = mel.hop_seconds;
    out.win_seconds = mel.win_seconds;
    Ok(out)
}
