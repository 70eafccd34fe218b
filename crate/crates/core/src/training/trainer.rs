use std::path::Path;
use std::time::Instant;

use log::{debug, info, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::loss::{compute_loss, log_duration_targets, LossReport, LossVars};
use super::stats::MelStats;
use crate::corpus::{example_for_word, make_training_example, TrainingExample, Utterance};
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::tensor::checkpoint::write_atomic;
use crate::tensor::{Adam, Element, Graph};

pub const LOSS_CSV: &str = "loss.csv";
pub const LAST_DIR: &str = "last";
pub const BEST_DIR: &str = "best";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Stop after this many optimizer steps even mid-epoch.
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
            max_steps: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub curve: Vec<LossReport>,
    pub epochs_run: usize,
    /// Epoch (1-based) with the lowest validation loss, or training loss
    /// when no validation utterances were given.
    pub best_epoch: usize,
    pub best_loss: f64,
}

/// Builds the loss graph of one example. `seed` drives dropout.
pub fn example_graph<F: Element>(
    model: &Model<F>,
    ex: &TrainingExample,
    train: bool,
    seed: u64,
) -> Result<(Graph<F>, LossVars)> {
    let mut g = Graph::with_seed(seed);
    let mut f = model.fwd(&mut g, train);
    let out = model.forward_train(&mut f, &ex.phonemes, &ex.reference, &ex.masked, &ex.target)?;
    let target = g.input(
        &[ex.target.frames, ex.target.n_mels],
        ex.target.data.iter().map(|&v| F::from_f32(v)).collect(),
    )?;
    let durations = log_duration_targets(&mut g, &ex.reference.frames)?;
    let loss = compute_loss(&mut g, out.mel, target, out.log_durations, durations)?;
    Ok((g, loss))
}

fn normalized(utts: &[Utterance], stats: &MelStats) -> Result<Vec<Utterance>> {
    utts.iter()
        .map(|u| {
            let mut u = u.clone();
            u.mel = stats.normalize(&u.mel)?;
            Ok(u)
        })
        .collect()
}

fn usable(utts: Vec<Utterance>) -> Vec<Utterance> {
    utts.into_iter()
        .filter(|u| {
            let ok = !u.maskable_words().is_empty();
            if !ok {
                warn!("{}: no word with more than one phoneme; skipped", u.id);
            }
            ok
        })
        .collect()
}

/// Mean total loss over `utts`, each masked at a word drawn from a fixed
/// seed so that successive evaluations see the same examples.
pub fn validation_loss(model: &Model<f32>, utts: &[Utterance], seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for u in utts {
        let ex = make_training_example(u, &mut rng)?;
        let (g, loss) = example_graph(model, &ex, false, 0)?;
        total += g.value(loss.total)[0] as f64;
    }
    Ok(total / utts.len().max(1) as f64)
}

/// Adam training with shuffled mini-batches and a fresh masked word per
/// example per epoch. Each example gets its own graph and the batch loss
/// is the mean of the example losses. With `out_dir`, the last and best
/// checkpoints and the loss CSV are rewritten after every epoch.
pub fn train(
    train_set: &[Utterance],
    valid_set: &[Utterance],
    model_config: &ModelConfig,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    if cfg.learning_rate.is_nan() || cfg.learning_rate < 0.0 {
        return Err(Error::Config(format!("invalid learning rate {}", cfg.learning_rate)));
    }
    let stats = MelStats::fit(train_set.iter().map(|u| &u.mel))?;
    let train_set = usable(normalized(train_set, &stats)?);
    let valid_set = usable(normalized(valid_set, &stats)?);
    if train_set.is_empty() {
        return Err(Error::Config("training set has no usable utterances".into()));
    }

    let mut model = Model::<f32>::new(model_config.clone(), cfg.seed)?;
    let mut adam = Adam::new(cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let valid_seed = cfg.seed ^ 0x5eed_f00d;
    info!(
        "training {} parameters on {} utterances ({} held out)",
        model.params.num_scalars(),
        train_set.len(),
        valid_set.len()
    );

    let mut curve = Vec::new();
    let mut best = (0usize, f64::INFINITY);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut epochs_run = 0;
    let mut step = 0usize;
    let done = |step: usize| cfg.max_steps.is_some_and(|m| step >= m);

    for epoch in 1..=cfg.epochs {
        if done(step) {
            break;
        }
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut epoch_sum = 0.0;
        let mut epoch_batches = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            if done(step) {
                break;
            }
            let scale = 1.0 / batch.len() as f64;
            let mut report = LossReport {
                step: step + 1,
                l2_mel: 0.0,
                l1_duration: 0.0,
                total: 0.0,
            };
            for &i in batch {
                let ex = make_training_example(&train_set[i], &mut rng)?;
                let (mut g, loss) = example_graph(&model, &ex, true, rng.gen())?;
                let r = loss.report(&g, step + 1);
                report.l2_mel += r.l2_mel * scale;
                report.l1_duration += r.l1_duration * scale;
                report.total += r.total * scale;
                let scaled = g.scale(loss.total, scale as f32);
                g.backward(scaled)?;
                g.accumulate_param_grads(&mut model.params)?;
            }
            adam.step(&mut model.params)?;
            step += 1;
            if !report.total.is_finite() {
                return Err(Error::Input(format!("loss diverged at step {step}")));
            }
            debug!(
                "step={step} l2_mel={:.5} l1_duration={:.5} total={:.5}",
                report.l2_mel, report.l1_duration, report.total
            );
            epoch_sum += report.total;
            epoch_batches += 1;
            curve.push(report);
        }
        epochs_run = epoch;
        let train_loss = epoch_sum / epoch_batches.max(1) as f64;
        let score = if valid_set.is_empty() {
            train_loss
        } else {
            validation_loss(&model, &valid_set, valid_seed)?
        };
        info!(
            "epoch={epoch} step={step} train_loss={train_loss:.5} score={score:.5} secs={:.2}",
            started.elapsed().as_secs_f64()
        );
        let improved = score < best.1;
        if improved {
            best = (epoch, score);
        }
        if let Some(dir) = out_dir {
            let mut ck = Checkpoint::new(model.clone(), stats.clone());
            ck.extra.insert("epoch".into(), epoch.into());
            ck.extra.insert("step".into(), step.into());
            ck.extra.insert("score".into(), score.into());
            ck.save(&dir.join(LAST_DIR))?;
            if improved {
                ck.save(&dir.join(BEST_DIR))?;
            }
            write_loss_csv(&dir.join(LOSS_CSV), &curve)?;
        }
    }

    let mut checkpoint = Checkpoint::new(model, stats);
    checkpoint.extra.insert("epoch".into(), epochs_run.into());
    checkpoint.extra.insert("step".into(), step.into());
    Ok(TrainOutcome {
        checkpoint,
        curve,
        epochs_run,
        best_epoch: best.0,
        best_loss: best.1,
    })
}

pub fn loss_csv(curve: &[LossReport]) -> String {
    let mut s = String::from(LossReport::csv_header());
    s.push('\n');
    for r in curve {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

pub fn write_loss_csv(path: &Path, curve: &[LossReport]) -> Result<()> {
    write_atomic(path, loss_csv(curve).as_bytes())
}

/// Every example of an utterance, one per maskable word.
pub fn all_examples(utt: &Utterance) -> Result<Vec<TrainingExample>> {
    utt.maskable_words().into_iter().map(|w| example_for_word(utt, w)).collect()
}
