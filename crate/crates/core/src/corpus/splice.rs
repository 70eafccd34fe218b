use super::sequence::EditScript;
use crate::dsp::AudioClip;
use crate::error::{contract_err, Result};

/// 5 ms at 24 kHz.
pub const CROSSFADE_SAMPLES: usize = 120;

/// Linear ramp weight for sample `j` of an `n`-sample fade, 0 at the first
/// sample and 1 at the last.
pub fn fade_weight(j: usize, n: usize) -> f32 {
    if n <= 1 {
        1.0
    } else {
        j as f32 / (n - 1) as f32
    }
}

/// Replaces the edited region of `original` with the matching region of the
/// synthesized sentence `patched`, crossfading linearly at both boundaries.
///
/// Frame `k` starts at sample `k * hop` in both clips. The crossfade is
/// skipped at a boundary that coincides with the start or end of the
/// original recording.
pub fn splice_output(original: &AudioClip, patched: &AudioClip, script: &EditScript, hop: usize) -> Result<AudioClip> {
    if script.is_empty() {
        return Ok(original.clone());
    }
    if original.sample_rate != patched.sample_rate {
        return Err(contract_err!(
            "sample rates differ: {} vs {}",
            original.sample_rate,
            patched.sample_rate
        ));
    }
    let a = script.frame_offset * hop;
    let b_orig = a + script.original_frames * hop;
    let b_patch = a + script.edited_frames * hop;
    if b_orig > original.len() + hop {
        return Err(contract_err!(
            "edit region ends at sample {b_orig}, beyond the original's {}",
            original.len()
        ));
    }
    // Griffin-Lim output stops one hop short of the last frame.
    if b_patch > patched.len() + hop {
        return Err(contract_err!(
            "edit region ends at sample {b_patch}, beyond the synthesized {}",
            patched.len()
        ));
    }
    let orig = &original.samples;
    let b_orig = b_orig.min(orig.len());
    let a = a.min(orig.len());
    let pat = |i: usize| patched.samples.get(i).copied().unwrap_or(0.0);

    let mut out = Vec::with_capacity(orig.len() + b_patch - a);
    let left = CROSSFADE_SAMPLES.min(a);
    out.extend_from_slice(&orig[..a - left]);
    for j in 0..left {
        let i = a - left + j;
        let alpha = fade_weight(j, left);
        out.push((1.0 - alpha) * orig[i] + alpha * pat(i));
    }
    out.extend((a..b_patch).map(pat));
    let right = CROSSFADE_SAMPLES.min(orig.len() - b_orig);
    for j in 0..right {
        let alpha = fade_weight(j, right);
        out.push((1.0 - alpha) * pat(b_patch + j) + alpha * orig[b_orig + j]);
    }
    out.extend_from_slice(&orig[b_orig + right..]);
    AudioClip::new(out, original.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::SAMPLE_RATE;

    fn clip(value: f32, len: usize) -> AudioClip {
        AudioClip::new(vec![value; len], SAMPLE_RATE).unwrap()
    }

    fn script(offset: usize, original: usize, edited: usize) -> EditScript {
        EditScript {
            phoneme_span: 0..1,
            frame_offset: offset,
            original_frames: original,
            edited_frames: edited,
            word_text: "x".into(),
        }
    }

    #[test]
    fn empty_edit_is_identity() {
        let orig = AudioClip::new((0..3000).map(|i| (i as f32 * 0.01).sin()).collect(), SAMPLE_RATE).unwrap();
        let out = splice_output(&orig, &clip(0.3, 3300), &EditScript::empty(), 300).unwrap();
        assert_eq!(out, orig);
    }

    #[test]
    fn insertion_length_and_fades() {
        let out = splice_output(&clip(1.0, 3000), &clip(-1.0, 3600), &script(4, 0, 2), 300).unwrap();
        assert_eq!(out.len(), 3600);
        // Left fade ends on the patched value, right fade on the original.
        assert_eq!(out.samples[1200 - 120], 1.0);
        assert_eq!(out.samples[1199], -1.0);
        assert_eq!(out.samples[1800], -1.0);
        assert_eq!(out.samples[1919], 1.0);
        let j = 30;
        let alpha = j as f32 / 119.0;
        let expect = (1.0 - alpha) * 1.0 - alpha;
        assert!((out.samples[1080 + j] - expect).abs() < 1e-6);
    }

    #[test]
    fn edit_at_start_has_right_fade_only() {
        let out = splice_output(&clip(1.0, 3000), &clip(-1.0, 3600), &script(0, 0, 2), 300).unwrap();
        assert_eq!(out.len(), 3600);
        assert!(out.samples[..600].iter().all(|&s| s == -1.0));
        assert!(out.samples[600..720].iter().any(|&s| s > -1.0 && s < 1.0));
        assert!(out.samples[720..].iter().all(|&s| s == 1.0));
    }

    #[test]
    fn replacement_keeps_outer_audio() {
        let out = splice_output(&clip(1.0, 3000), &clip(-1.0, 3000), &script(4, 2, 2), 300).unwrap();
        assert_eq!(out.len(), 3000);
        assert!(out.samples[..1080].iter().all(|&s| s == 1.0));
        assert!(out.samples[1920..].iter().all(|&s| s == 1.0));
    }

    #[test]
    fn out_of_bounds_is_contract_error() {
        let err = splice_output(&clip(1.0, 3000), &clip(-1.0, 3000), &script(20, 0, 2), 300).unwrap_err();
        assert!(matches!(err, crate::Error::Contract(_)));
    }
}
