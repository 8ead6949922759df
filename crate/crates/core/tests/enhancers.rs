use advse::audio::{make_noise, NoiseKind, Waveform};
use advse::codec::CodecConfig;
use advse::enhancers::{
    from_bytes, load_model, save_model, to_bytes, synth_training_set, train, DatasetSpec, EnhancerModel,
    MaskNetArch, TrainConfig, WaveAeArch,
};
use advse::Error;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn enhancers_preserve_length(len in 300usize..2500, seed in 0u64..50) {
        let x: Waveform<f64> = make_noise(NoiseKind::White, len, 16_000, seed).scaled(0.3);
        let mn = EnhancerModel::<f64>::build_masknet(MaskNetArch::default(), seed).unwrap();
        let ae = EnhancerModel::<f64>::build_waveae(WaveAeArch::default(), seed).unwrap();
        prop_assert_eq!(mn.enhance(&x).unwrap().len(), len);
        prop_assert_eq!(ae.enhance(&x).unwrap().len(), len);
    }
}

#[test]
fn byte_format_round_trips_in_both_precisions() {
    let m = EnhancerModel::<f32>::build_waveae(WaveAeArch::default(), 1).unwrap();
    let back: EnhancerModel<f32> = from_bytes(&to_bytes(&m)).unwrap();
    assert_eq!(back.params, m.params);
    assert_eq!(back.arch, m.arch);
}

#[test]
fn truncated_file_is_a_format_error() {
    let m = EnhancerModel::<f64>::build_masknet(MaskNetArch::default(), 1).unwrap();
    let bytes = to_bytes(&m);
    let cut = &bytes[..bytes.len() / 2];
    assert!(matches!(from_bytes::<f64>(cut), Err(Error::Format(_))));
}

#[test]
fn save_and_load_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.advse");
    let m = EnhancerModel::<f64>::build_masknet(MaskNetArch::default(), 2).unwrap();
    save_model(&m, &p).unwrap();
    assert_eq!(load_model::<f64>(&p).unwrap().params, m.params);
}

#[test]
fn short_training_is_deterministic_and_reduces_loss() {
    let codec = CodecConfig::default();
    let spec = DatasetSpec { num_sentences: 6, sentence_len: 3, ..DatasetSpec::default() };
    let data = synth_training_set::<f64>(&spec, &codec, 4).unwrap();
    let init = EnhancerModel::<f64>::build_masknet(MaskNetArch::default(), 4).unwrap();
    let cfg = TrainConfig { epochs: 3, ..TrainConfig::default() };
    let a = train(&init, &data, &cfg).unwrap();
    let b = train(&init, &data, &cfg).unwrap();
    assert_eq!(a.params, b.params);
    assert!(a.train_meta.final_loss < a.train_meta.initial_loss);
}

#[test]
fn too_short_input_is_rejected() {
    let m = EnhancerModel::<f64>::build_masknet(MaskNetArch::default(), 1).unwrap();
    assert!(m.enhance(&Waveform::zeros(10, 16_000)).is_err());
}
