use dualstream::audio::{AudioClip, SAMPLE_RATE};
use dualstream::transforms::{apply_compression, Codec, CodecBackend, CompressionSetting, Ffmpeg, FFMPEG_ENV};

fn speechlike(seconds: f64) -> AudioClip {
    let n = (seconds * SAMPLE_RATE as f64) as usize;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / SAMPLE_RATE as f64;
            let env = 0.5 + 0.5 * (2.0 * std::f64::consts::PI * 3.0 * t).sin();
            let tone: f64 = [220.0, 440.0, 880.0, 1760.0, 3300.0]
                .iter()
                .enumerate()
                .map(|(k, f)| (2.0 * std::f64::consts::PI * f * t).sin() / (k + 1) as f64)
                .sum();
            (0.3 * env * tone) as f32
        })
        .collect();
    AudioClip::mono(samples)
}

fn rms_error(a: &[f32], b: &[f32]) -> f64 {
    let n = a.len().min(b.len());
    (a[..n].iter().zip(&b[..n]).map(|(x, y)| ((x - y) as f64).powi(2)).sum::<f64>() / n as f64).sqrt()
}

#[test]
fn higher_bitrates_distort_less() {
    let Some(ffmpeg) = Ffmpeg::detect() else {
        eprintln!("SKIPPED: no ffmpeg binary found (set {FFMPEG_ENV} to enable codec tests)");
        return;
    };
    let clip = speechlike(1.0);
    for codec in [Codec::Mp3, Codec::Aac, Codec::Opus] {
        if !ffmpeg.supports(codec) {
            eprintln!("SKIPPED: ffmpeg lacks an encoder for {codec:?}");
            continue;
        }
        let err = |bitrate| {
            let setting = CompressionSetting::from_index(CompressionSetting::index_of(codec, Some(bitrate)).unwrap()).unwrap();
            let out = apply_compression(&clip, setting, &ffmpeg).unwrap();
            assert_eq!(out.len(), clip.len());
            rms_error(&clip.samples, &out.samples)
        };
        let (low, high) = (err(16_000), err(64_000));
        assert!(high < low, "{codec:?}: 64k error {high} not below 16k error {low}");
    }
}
