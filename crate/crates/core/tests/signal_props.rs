use advse::audio::Waveform;
use advse::signal::{istft, stft, StftConfig, Window};
use approx::assert_abs_diff_eq;
use proptest::prelude::*;

fn frame_len() -> impl Strategy<Value = usize> {
    prop::sample::select(vec![64usize, 128, 256, 512])
}

proptest! {
    #[test]
    fn istft_inverts_stft(
        n in frame_len(),
        extra in 0usize..700,
        seed in prop::collection::vec(-1.0f64..1.0, 1300),
    ) {
        let cfg = StftConfig::new(n).unwrap();
        let x = Waveform::new(seed[..n + extra].to_vec(), 16_000);
        let y = istft(&stft(&x, &cfg).unwrap()).unwrap();
        prop_assert_eq!(y.len(), x.len());
        for (a, b) in x.samples.iter().zip(&y.samples) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn stft_is_linear(
        a in prop::collection::vec(-1.0f64..1.0, 300),
        b in prop::collection::vec(-1.0f64..1.0, 300),
        k in -3.0f64..3.0,
    ) {
        let cfg = StftConfig::new(64).unwrap();
        let sum: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p + k * q).collect();
        let sa = stft(&Waveform::new(a, 16_000), &cfg).unwrap();
        let sb = stft(&Waveform::new(b, 16_000), &cfg).unwrap();
        let ss = stft(&Waveform::new(sum, 16_000), &cfg).unwrap();
        for i in 0..ss.real_part.len() {
            prop_assert!((ss.real_part[i] - sa.real_part[i] - k * sb.real_part[i]).abs() < 1e-9);
            prop_assert!((ss.imag_part[i] - sa.imag_part[i] - k * sb.imag_part[i]).abs() < 1e-9);
        }
    }
}

#[test]
fn sqrt_hann_squares_sum_to_one() {
    let w: Vec<f64> = Window::SqrtHann.coefficients(128);
    for n in 0..64 {
        assert_abs_diff_eq!(w[n] * w[n] + w[n + 64] * w[n + 64], 1.0, epsilon = 1e-12);
    }
}

#[test]
fn too_short_input_is_rejected() {
    let cfg = StftConfig::new(256).unwrap();
    assert!(stft(&Waveform::new(vec![0.0f64; 10], 16_000), &cfg).is_err());
}
