#![allow(dead_code)]

use infill::corpus::{example_for_word, synthetic_utterances, Inventory, SyntheticConfig, Utterance};
use infill::dsp::MelFilterbank;
use infill::tensor::{Graph, Tensor, Var};
use infill::model::{Model, ModelConfig};
use infill::training::{example_graph, MelStats};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-6;

/// Relative error between analytic and numeric gradients:
/// `||a - n|| / max(||a||, ||n||)`, or the absolute norm when both are tiny.
pub fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).powi(2))
        .sum::<f64>()
        .sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    let scale = na.max(nn);
    if scale < 1e-10 {
        diff
    } else {
        diff / scale
    }
}

/// Checks `d build(inputs) / d inputs` against central differences. The
/// scalar loss is `sum(out * weights)` for fixed random weights, so every
/// output element contributes. Returns the worst relative error over the
/// inputs.
pub fn check_op(inputs: &[Tensor<f64>], seed: u64, build: impl Fn(&mut Graph<f64>, &[Var]) -> Var) -> f64 {
    let weights = {
        let mut g = Graph::<f64>::with_seed(seed);
        let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t)).collect();
        let out = build(&mut g, &vars);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        Tensor::<f64>::uniform(g.shape(out), 1.0, &mut rng)
    };
    let eval = |inputs: &[Tensor<f64>]| -> f64 {
        let mut g = Graph::<f64>::with_seed(seed);
        let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t)).collect();
        let out = build(&mut g, &vars);
        g.value(out).iter().zip(weights.data()).map(|(a, b)| a * b).sum()
    };

    let mut g = Graph::<f64>::with_seed(seed);
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t)).collect();
    let out = build(&mut g, &vars);
    let w = g.constant(&weights);
    let prod = g.mul(out, w).unwrap();
    let loss = g.sum(prod);
    g.backward(loss).unwrap();

    let mut worst: f64 = 0.0;
    for (i, v) in vars.iter().enumerate() {
        let analytic = g.grad(*v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; inputs[i].numel()]);
        let mut numeric = Vec::with_capacity(inputs[i].numel());
        for k in 0..inputs[i].numel() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[k] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[k] -= FD_STEP;
            numeric.push((eval(&plus) - eval(&minus)) / (2.0 * FD_STEP));
        }
        worst = worst.max(rel_err(&analytic, &numeric));
    }
    worst
}

pub fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::uniform(shape, 1.0, &mut rng)
}

/// Uniform values whose magnitude is at least `gap`, keeping kinks of
/// ReLU and abs away from the finite-difference stencil.
pub fn random_away_from_zero(shape: &[usize], seed: u64, gap: f64) -> Tensor<f64> {
    let mut t = random(shape, seed);
    for v in t.data_mut() {
        *v = v.signum() * (v.abs() + gap);
    }
    t
}

/// Small synthetic corpus with normalized mels.
pub fn synthetic_corpus(cfg: &SyntheticConfig) -> Vec<Utterance> {
    let inv = Inventory::arpabet();
    let fb = MelFilterbank::standard().unwrap();
    let utts = synthetic_utterances(cfg, &inv, &fb).unwrap();
    let stats = MelStats::fit(utts.iter().map(|u| &u.mel)).unwrap();
    utts.into_iter()
        .map(|mut u| {
            u.mel = stats.normalize(&u.mel).unwrap();
            u
        })
        .collect()
}

/// Central-difference check of the training loss of the tiny model in
/// 64-bit precision, sampling six coordinates of every parameter tensor.
/// Returns the relative error per tensor and over all sampled coordinates.
pub fn full_model_gradient_errors() -> (Vec<(String, f64)>, f64) {
    let corpus = synthetic_corpus(&SyntheticConfig {
        utterances: 1,
        seed: 5,
        ..Default::default()
    });
    let utt = &corpus[0];
    let ex = example_for_word(utt, utt.maskable_words()[0]).unwrap();

    let mut model = Model::<f64>::new(ModelConfig::tiny(), 7).unwrap();
    // Zero-initialized biases put ReLUs fed by the zero-padded frames exactly
    // on their kink; move to a generic point first.
    let mut jitter = ChaCha8Rng::seed_from_u64(9);
    for t in model.params.tensors_mut() {
        for v in t.data_mut() {
            *v += jitter.gen_range(-0.05..0.05);
        }
    }
    let (mut g, loss) = example_graph(&model, &ex, false, 0).unwrap();
    g.backward(loss.total).unwrap();
    g.accumulate_param_grads(&mut model.params).unwrap();
    let loss_at = |m: &Model<f64>| {
        let (g, l) = example_graph(m, &ex, false, 0).unwrap();
        g.value(l.total)[0]
    };

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let ids: Vec<_> = model.params.iter().map(|(id, _, t)| (id, t.numel())).collect();
    let (mut analytic, mut numeric) = (Vec::new(), Vec::new());
    let mut per_tensor = Vec::new();
    let mut probe = model.clone();
    for (id, n) in ids {
        let grad = model.params.get(id).grad.clone().unwrap();
        let mut per_a = Vec::new();
        let mut per_n = Vec::new();
        for _ in 0..6.min(n) {
            let k = rng.gen_range(0..n);
            let orig = probe.params.get(id).data()[k];
            probe.params.get_mut(id).data_mut()[k] = orig + FD_STEP;
            let up = loss_at(&probe);
            probe.params.get_mut(id).data_mut()[k] = orig - FD_STEP;
            let down = loss_at(&probe);
            probe.params.get_mut(id).data_mut()[k] = orig;
            per_a.push(grad[k]);
            per_n.push((up - down) / (2.0 * FD_STEP));
        }
        per_tensor.push((model.params.name(id).to_string(), rel_err(&per_a, &per_n)));
        analytic.extend(per_a);
        numeric.extend(per_n);
    }
    (per_tensor, rel_err(&analytic, &numeric))
}
