use advse::audio::{
    encode_wav, make_noise, mix_at_snr_detailed, parse_wav, read_wav, snr_db, write_wav, MixSpec,
    NoiseKind, Waveform,
};
use advse::Error;
use approx::assert_abs_diff_eq;
use proptest::prelude::*;

proptest! {
    #[test]
    fn wav_round_trip_within_one_code(samples in prop::collection::vec(-1.0f64..1.0, 1..400)) {
        let w = Waveform::new(samples, 16_000);
        let back: Waveform<f64> = parse_wav(&encode_wav(&w)).unwrap();
        prop_assert_eq!(back.len(), w.len());
        for (a, b) in w.samples.iter().zip(&back.samples) {
            prop_assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }

    #[test]
    fn mixing_hits_requested_snr(snr in -10.0f64..10.0, seed in 0u64..1000) {
        let clean: Waveform<f64> = make_noise(NoiseKind::White, 800, 16_000, seed).scaled(0.2);
        let noise: Waveform<f64> = make_noise(NoiseKind::White, 1600, 16_000, seed + 1);
        let m = mix_at_snr_detailed(&clean, &noise, MixSpec { snr_db: snr, seed }).unwrap();
        prop_assert!((snr_db(&clean.samples, &m.scaled_noise) - snr).abs() < 1e-6);
        prop_assert!(m.mixed.peak() <= 1.0);
    }
}

#[test]
fn file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.wav");
    let w = Waveform::new(vec![0.25f32, -0.5, 0.0], 16_000);
    write_wav(&p, &w).unwrap();
    let back: Waveform<f32> = read_wav(&p).unwrap();
    for (a, b) in w.samples.iter().zip(&back.samples) {
        assert_abs_diff_eq!(*a, *b, epsilon = 1.0 / 32768.0);
    }
}

#[test]
fn rejects_garbage_and_missing_files() {
    assert!(matches!(parse_wav::<f64>(b"not a wav file at all"), Err(Error::Format(_))));
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(read_wav::<f64>(dir.path().join("none.wav")), Err(Error::Io { .. })));
}

#[test]
fn noise_is_seeded() {
    let a: Waveform<f64> = make_noise(NoiseKind::White, 100, 16_000, 7);
    let b: Waveform<f64> = make_noise(NoiseKind::White, 100, 16_000, 7);
    let c: Waveform<f64> = make_noise(NoiseKind::White, 100, 16_000, 8);
    assert_eq!(a, b);
    assert_ne!(a, c);
}
