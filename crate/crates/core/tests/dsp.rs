use infill::dsp::griffin_lim::{griffin_lim_with, spectral_convergence, GriffinLimConfig};
use infill::dsp::mel::LOG_FLOOR;
use infill::dsp::{mel_to_linear, stft, wav_to_mel, AudioClip, MelFilterbank, StftConfig, StftPlan, SAMPLE_RATE};
use proptest::prelude::*;

fn tone(freq: f64, len: usize, amp: f64) -> AudioClip {
    let samples = (0..len)
        .map(|i| (amp * (2.0 * std::f64::consts::PI * freq * i as f64 / SAMPLE_RATE as f64).sin()) as f32)
        .collect();
    AudioClip::new(samples, SAMPLE_RATE).unwrap()
}

// The < 0.1 spectral-convergence target for tones lives in the acceptance
// suite; here we pin monotonicity and the length law.
#[test]
fn griffin_lim_on_tone_is_monotone() {
    let plan = StftPlan::new(StftConfig::default()).unwrap();
    let mag = stft(&tone(440.0, 12_000, 0.5)).unwrap().magnitude();
    let rec = griffin_lim_with(&mag, GriffinLimConfig::default(), &plan).unwrap();
    assert_eq!(rec.clip.len(), (mag.frames - 1) * 300);
    assert_eq!(rec.convergence.len(), 60);
    for w in rec.convergence.windows(2) {
        assert!(w[1] <= w[0] + 1e-6, "{} -> {}", w[0], w[1]);
    }
    let sc = spectral_convergence(&mag, &rec.clip, &plan);
    assert!(sc < rec.convergence[0] / 3.0, "final {sc}, first {}", rec.convergence[0]);
}

#[test]
fn griffin_lim_monotone_on_random_magnitudes() {
    use rand::{Rng, SeedableRng};
    let plan = StftPlan::new(StftConfig::default()).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let frames = 12;
    let data = (0..frames * 1025).map(|_| rng.gen_range(0.0..1.0)).collect();
    let mag = infill::dsp::Magnitude::new(frames, 1025, data).unwrap();
    let rec = griffin_lim_with(&mag, GriffinLimConfig { iters: 30, seed: 5 }, &plan).unwrap();
    for w in rec.convergence.windows(2) {
        assert!(w[1] <= w[0] + 1e-6, "{} -> {}", w[0], w[1]);
    }
}

/// Bands carrying the tone (within 10 dB of the frame's strongest band) are
/// recovered to 10%. Weak leakage bands are not: clamping the negative lobes
/// of the minimum-norm solution adds a positive bias there.
#[test]
fn pseudo_inverse_round_trip_recovers_mel_energy() {
    let fb = MelFilterbank::standard().unwrap();
    let mel = wav_to_mel(&tone(440.0, 9_000, 0.5), &fb).unwrap();
    let lin = mel_to_linear(&mel, &fb).unwrap();
    assert!(lin.data.iter().all(|&v| v >= 0.0));
    let floor = LOG_FLOOR.ln() as f32;
    let mut checked = 0;
    for t in 0..mel.frames {
        let back = fb.apply(lin.frame(t));
        let peak = mel.frame(t).iter().copied().fold(f32::MIN, f32::max);
        for (m, &v) in mel.frame(t).iter().enumerate() {
            if v > floor && v >= peak - std::f32::consts::LN_10 {
                let e = (v as f64).exp();
                let rel = (back[m] - e).abs() / e;
                assert!(rel < 0.1, "frame {t} band {m}: rel err {rel}");
                checked += 1;
            }
        }
    }
    assert!(checked > 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]
    #[test]
    fn frame_count_law(len in 1usize..20_000) {
        let fb = MelFilterbank::standard().unwrap();
        let clip = AudioClip::silence(len);
        let mel = wav_to_mel(&clip, &fb).unwrap();
        prop_assert_eq!(mel.frames, len / 300 + 1);
    }
}

#[test]
fn dsp_is_bit_deterministic() {
    let fb = MelFilterbank::standard().unwrap();
    let clip = tone(250.0, 5_000, 0.3);
    assert_eq!(wav_to_mel(&clip, &fb).unwrap(), wav_to_mel(&clip, &fb).unwrap());
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        for (rank, &i) in idx.iter().enumerate() {
            r[i] = rank as f64;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let mean = (n - 1.0) / 2.0;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - mean) * (y - mean)).sum();
    let var: f64 = ra.iter().map(|x| (x - mean).powi(2)).sum();
    cov / var
}

/// Voiced segments with a drifting pitch, a few harmonics and an
/// attack/decay envelope, separated by near-silence.
fn speech_like(seed: u64) -> AudioClip {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::new();
    for _ in 0..8 {
        let len = rng.gen_range(1_500..5_000);
        let f0: f64 = rng.gen_range(90.0..260.0);
        let amp: f64 = rng.gen_range(0.05..0.6);
        let voiced = rng.gen_bool(0.75);
        let mut phase = 0.0f64;
        for i in 0..len {
            let pos = i as f64 / len as f64;
            let env = (pos * std::f64::consts::PI).sin();
            let f = f0 * (1.0 + 0.1 * pos);
            phase += std::f64::consts::TAU * f / SAMPLE_RATE as f64;
            let v = if voiced {
                (1..=4).map(|h| (h as f64 * phase).sin() / h as f64).sum::<f64>()
            } else {
                rng.gen_range(-0.02..0.02)
            };
            samples.push((amp * env * v) as f32);
        }
    }
    AudioClip::new(samples, SAMPLE_RATE).unwrap()
}

#[test]
fn resynthesis_preserves_frame_energy_ranking() {
    let fb = MelFilterbank::standard().unwrap();
    let plan = StftPlan::new(StftConfig::default()).unwrap();
    for seed in 0..3 {
        let clip = speech_like(seed);
        let mel = wav_to_mel(&clip, &fb).unwrap();
        let lin = mel_to_linear(&mel, &fb).unwrap();
        let rec = griffin_lim_with(&lin, GriffinLimConfig::default(), &plan).unwrap();
        let mel2 = wav_to_mel(&rec.clip, &fb).unwrap();
        let energy = |m: &infill::dsp::MelSpectrogram, t: usize| -> f64 {
            m.frame(t).iter().map(|&v| (v as f64).exp()).sum()
        };
        let n = mel.frames.min(mel2.frames);
        let a: Vec<f64> = (0..n).map(|t| energy(&mel, t)).collect();
        let b: Vec<f64> = (0..n).map(|t| energy(&mel2, t)).collect();
        let rho = spearman(&a, &b);
        assert!(rho > 0.9, "seed {seed}: rank correlation {rho}");
    }
}
