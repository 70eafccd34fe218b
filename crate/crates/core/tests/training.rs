mod common;

use common::synthetic_corpus;
use infill::corpus::synthetic::generate;
use infill::corpus::{example_for_word, Inventory, SyntheticConfig, Utterance};
use infill::dsp::{AudioClip, GriffinLimConfig, MelFilterbank};
use infill::model::{Model, ModelConfig};
use infill::tensor::Graph;
use infill::training::{
    compute_loss, eval_duration, example_graph, infer_edit, loss_csv, resynth_all, train, Checkpoint, EditRequest,
    MelStats, TrainConfig, Vocoder, DURATION_LOSS_WEIGHT,
};
use infill::Error;

fn recordings(n: usize, seed: u64) -> Vec<(Utterance, AudioClip)> {
    let inv = Inventory::arpabet();
    let fb = MelFilterbank::standard().unwrap();
    generate(
        &SyntheticConfig {
            utterances: n,
            seed,
            ..Default::default()
        },
        &inv,
    )
    .unwrap()
    .into_iter()
    .map(|s| {
        let utt = Utterance::from_audio(s.id, s.record, &s.clip, &inv, &fb).unwrap();
        (utt, s.clip)
    })
    .collect()
}

fn checkpoint(utts: &[Utterance], seed: u64) -> Checkpoint {
    let stats = MelStats::fit(utts.iter().map(|u| &u.mel)).unwrap();
    Checkpoint::new(Model::new(ModelConfig::tiny(), seed).unwrap(), stats)
}

fn vocoder() -> Vocoder {
    Vocoder::new(GriffinLimConfig {
        iters: 4,
        ..Default::default()
    })
    .unwrap()
}

#[test]
fn total_is_mel_loss_plus_weighted_duration_loss() {
    let corpus = synthetic_corpus(&SyntheticConfig {
        utterances: 2,
        ..Default::default()
    });
    for utt in &corpus {
        for w in utt.maskable_words() {
            let ex = example_for_word(utt, w).unwrap();
            let model = Model::<f64>::new(ModelConfig::tiny(), w as u64).unwrap();
            let (g, loss) = example_graph(&model, &ex, false, 0).unwrap();
            let r = loss.report(&g, 0);
            assert!(r.l1_duration > 0.0 && r.l2_mel > 0.0);
            assert!((r.total - (r.l2_mel + DURATION_LOSS_WEIGHT * r.l1_duration)).abs() < 1e-12);
        }
    }
}

#[test]
fn mel_loss_covers_frames_outside_the_edit() {
    let corpus = synthetic_corpus(&SyntheticConfig {
        utterances: 1,
        ..Default::default()
    });
    let ex = example_for_word(&corpus[0], corpus[0].maskable_words()[0]).unwrap();
    let model = Model::<f64>::new(ModelConfig::tiny(), 0).unwrap();
    let loss_with = |target: &[f32]| {
        let mut g = Graph::<f64>::new();
        let mut f = model.fwd(&mut g, false);
        let out = model
            .forward_train(&mut f, &ex.phonemes, &ex.reference, &ex.masked, &ex.target)
            .unwrap();
        let shape = [ex.target.frames, ex.target.n_mels];
        let t = g.input(&shape, target.iter().map(|&v| v as f64).collect()).unwrap();
        let d = g.input(&[ex.phonemes.len(), 1], vec![0.0; ex.phonemes.len()]).unwrap();
        let loss = compute_loss(&mut g, out.mel, t, out.log_durations, d).unwrap();
        g.value(loss.total)[0]
    };
    let base = loss_with(&ex.target.data);
    let outside = (0..ex.target.frames)
        .find(|t| !(ex.script.frame_offset..ex.script.frame_offset + ex.script.original_frames).contains(t))
        .unwrap();
    let mut moved = ex.target.data.clone();
    moved[outside * ex.target.n_mels + 5] += 1.0;
    assert!((loss_with(&moved) - base).abs() > 1e-6);
}

#[test]
fn shape_mismatch_is_contract_error() {
    let mut g = Graph::<f64>::new();
    let a = g.input(&[2, 3], vec![0.0; 6]).unwrap();
    let b = g.input(&[3, 3], vec![0.0; 9]).unwrap();
    let d = g.input(&[2, 1], vec![0.0; 2]).unwrap();
    assert!(matches!(compute_loss(&mut g, a, b, d, d), Err(Error::Contract(_))));
}

#[test]
fn empty_insertion_returns_the_input_audio() {
    let recs = recordings(2, 1);
    let utts: Vec<_> = recs.iter().map(|r| r.0.clone()).collect();
    let ck = checkpoint(&utts, 0);
    let (utt, clip) = &recs[0];
    let req = EditRequest {
        insert_after_word: 0,
        phonemes: vec![],
        word_text: String::new(),
    };
    let out = infer_edit(&ck, utt, clip, &req, &vocoder()).unwrap();
    assert!(out.script.is_empty());
    assert_eq!(out.audio, *clip);
}

#[test]
fn insertion_grows_the_recording_by_the_predicted_frames() {
    let recs = recordings(2, 2);
    let utts: Vec<_> = recs.iter().map(|r| r.0.clone()).collect();
    let ck = checkpoint(&utts, 1);
    let (utt, clip) = &recs[0];
    let inv = Inventory::arpabet();
    for after in [-1i64, 0, utt.phonemes.words().len() as i64 - 1] {
        let req = EditRequest {
            insert_after_word: after,
            phonemes: inv.parse_phonemes("K AE1 T").unwrap(),
            word_text: "cat".into(),
        };
        let out = infer_edit(&ck, utt, clip, &req, &vocoder()).unwrap();
        let s = &out.script;
        assert_eq!(s.phoneme_span.len(), 3);
        assert!(s.edited_frames >= 3);
        assert_eq!(out.mel.frames, utt.mel.frames + s.edited_frames);
        assert_eq!(out.durations.total(), out.mel.frames);
        assert_eq!(out.audio.len(), clip.len() + s.edited_frames * 300);
        let words = utt.phonemes.words();
        let expected_at = if after < 0 {
            utt.phonemes.word_span(words[0]).start
        } else {
            utt.phonemes.word_span(words[after as usize]).end
        };
        assert_eq!(s.phoneme_span.start, expected_at);
        assert_eq!(s.frame_offset, utt.durations.offset_of(expected_at));
        // Audio before the edit point, minus the fade, is untouched.
        let head = (s.frame_offset * 300).saturating_sub(120);
        assert_eq!(out.audio.samples[..head], clip.samples[..head]);
    }
}

#[test]
fn insertion_point_out_of_range_is_input_error() {
    let recs = recordings(1, 3);
    let ck = checkpoint(&[recs[0].0.clone()], 0);
    let n = recs[0].0.phonemes.words().len() as i64;
    for after in [-2, n] {
        let req = EditRequest {
            insert_after_word: after,
            phonemes: vec![10],
            word_text: "x".into(),
        };
        let err = infer_edit(&ck, &recs[0].0, &recs[0].1, &req, &vocoder()).unwrap_err();
        assert!(matches!(err, Error::Input(_)), "{err}");
    }
}

#[test]
fn resynthesis_reports_word_provenance() {
    let recs = recordings(1, 4);
    let utt = &recs[0].0;
    let ck = checkpoint(std::slice::from_ref(utt), 0);
    let out = resynth_all(&ck, utt, &vocoder()).unwrap();
    assert_eq!(out.words.len(), utt.phonemes.words().len());
    let mut start = 0;
    for w in &out.words {
        assert_eq!(w.output_start, start);
        assert!(w.frames >= utt.phonemes.word_span(w.word_index).len());
        start += w.frames;
    }
    assert_eq!(out.mel.frames, start);
    assert_eq!(out.audio.len(), (start - 1) * 300);
}

#[test]
fn checkpoint_round_trip_preserves_inference() {
    let recs = recordings(2, 5);
    let utts: Vec<_> = recs.iter().map(|r| r.0.clone()).collect();
    let mut ck = checkpoint(&utts, 9);
    ck.extra.insert("epoch".into(), 3.into());
    let dir = tempfile::tempdir().unwrap();
    ck.save(&dir.path().join("a")).unwrap();
    let loaded = Checkpoint::load(&dir.path().join("a")).unwrap();
    loaded.save(&dir.path().join("b")).unwrap();
    for file in ["manifest.json", "params.bin"] {
        let a = std::fs::read(dir.path().join("a").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
    assert_eq!(loaded.extra["epoch"], 3);
    let ex = example_for_word(&utts[0], utts[0].maskable_words()[0]).unwrap();
    let a = ck.model.predict_durations(&ex.phonemes, &ex.masked).unwrap();
    let b = loaded.model.predict_durations(&ex.phonemes, &ex.masked).unwrap();
    assert_eq!(a.0, b.0);
}

#[test]
fn training_is_deterministic() {
    let utts: Vec<_> = recordings(4, 6).into_iter().map(|r| r.0).collect();
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 2,
        seed: 11,
        ..Default::default()
    };
    let mut cfg_model = ModelConfig::tiny();
    cfg_model.dropout = 0.1;
    let a = train(&utts, &[], &cfg_model, &cfg, None).unwrap();
    let b = train(&utts, &[], &cfg_model, &cfg, None).unwrap();
    assert_eq!(loss_csv(&a.curve), loss_csv(&b.curve));
    assert_eq!(a.checkpoint.model.params, b.checkpoint.model.params);
    let c = train(&utts, &[], &cfg_model, &TrainConfig { seed: 12, ..cfg }, None).unwrap();
    assert_ne!(loss_csv(&a.curve), loss_csv(&c.curve));
}

#[test]
fn duration_evaluation_covers_every_usable_utterance() {
    let utts: Vec<_> = recordings(3, 7).into_iter().map(|r| r.0).collect();
    let model = Model::<f32>::new(ModelConfig::tiny(), 0).unwrap();
    let (report, words) = eval_duration(&model, &utts, 0).unwrap();
    assert_eq!(report.n_words, 3);
    assert_eq!(report.n_phonemes, words.iter().map(|w| w.truth.len()).sum::<usize>());
    assert!(words.iter().all(|w| w.predicted.iter().all(|&d| d >= 1)));
}
