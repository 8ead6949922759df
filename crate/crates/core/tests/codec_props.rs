use advse::audio::Waveform;
use advse::codec::{decode, encode, random_sentence, CodecConfig, Transcript};
use proptest::prelude::*;

proptest! {
    #[test]
    fn decode_inverts_encode(words in prop::collection::vec(0usize..16, 1..12)) {
        let cfg = CodecConfig::default();
        let t = Transcript::new(words);
        let w: Waveform<f64> = encode(&t, &cfg).unwrap();
        prop_assert_eq!(decode(&w, &cfg), t);
    }

    #[test]
    fn decode_survives_level_changes(
        words in prop::collection::vec(0usize..16, 1..8),
        gain in 0.25f64..1.0,
    ) {
        let cfg = CodecConfig::default();
        let t = Transcript::new(words);
        let w: Waveform<f64> = encode(&t, &cfg).unwrap();
        prop_assert_eq!(decode(&w.scaled(gain), &cfg), t);
    }

    #[test]
    fn sentences_stay_in_vocab(seed in any::<u64>(), len in 0usize..20) {
        let s = random_sentence(seed, len, 16);
        prop_assert_eq!(s.len(), len);
        prop_assert!(s.words.iter().all(|&w| w < 16));
    }
}

#[test]
fn out_of_vocab_word_is_rejected() {
    let cfg = CodecConfig::default();
    assert!(encode::<f64>(&Transcript::new(vec![16]), &cfg).is_err());
}

#[test]
fn f32_matches_f64() {
    let cfg = CodecConfig::default();
    let t = random_sentence(5, 6, 16);
    let w: Waveform<f32> = encode(&t, &cfg).unwrap();
    assert_eq!(decode(&w, &cfg), t);
}
