use advse::attacks::{
    fgsm, make_target, opt_attack, pgd, run_attack, AttackConfig, Method, TargetSpec,
    NOISE_TARGET_RMS,
};
use advse::audio::{make_noise, NoiseKind, Waveform};
use advse::enhancers::{EnhancerModel, MaskNetArch};
use advse::metrics::perturbation_stats;
use advse::Error;
use approx::assert_relative_eq;
use proptest::prelude::*;

fn model() -> EnhancerModel<f64> {
    EnhancerModel::build_masknet(MaskNetArch::default(), 3).unwrap()
}

fn victim(seed: u64) -> Waveform<f64> {
    make_noise::<f64>(NoiseKind::White, 1200, 16_000, seed).scaled(0.2).clipped()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn fgsm_moves_every_sample_by_at_most_epsilon(eps in 0.0f64..0.05, seed in 0u64..100) {
        let m = model();
        let x = victim(seed);
        let t = make_target(&TargetSpec::silence(), &x).unwrap();
        let cfg = AttackConfig { method: Method::Fgsm, epsilon: eps, ..Default::default() };
        let adv = fgsm(&m, &x, &t, &cfg).unwrap();
        for (a, b) in x.samples.iter().zip(&adv.x_star.samples) {
            let d = (a - b).abs();
            prop_assert!(d == 0.0 || (d - eps).abs() < 1e-12);
        }
    }

    #[test]
    fn pgd_stays_inside_ball_and_audio_range(
        eps in 0.001f64..0.02,
        extra in 0.0f64..0.03,
        steps in 1usize..6,
        seed in 0u64..100,
    ) {
        let m = model();
        let x = victim(seed);
        let t = make_target(&TargetSpec::noise(seed), &x).unwrap();
        let cfg = AttackConfig {
            method: Method::Pgd,
            epsilon: eps,
            s_radius: eps + extra,
            steps,
            ..Default::default()
        };
        let adv = pgd(&m, &x, &t, &cfg).unwrap();
        let st = perturbation_stats(&x.samples, &adv.x_star.samples).unwrap();
        prop_assert!(st.linf <= cfg.s_radius + 1e-12);
        prop_assert!(adv.x_star.peak() <= 1.0);
        prop_assert_eq!(adv.trace.len(), steps);
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let m = model();
    let x = victim(1);
    let t = make_target(&TargetSpec::silence(), &x).unwrap();
    let bad = [
        AttackConfig { epsilon: -0.1, ..Default::default() },
        AttackConfig { alpha: -1.0, ..Default::default() },
        AttackConfig { method: Method::Pgd, epsilon: 0.1, s_radius: 0.05, ..Default::default() },
    ];
    for cfg in bad {
        assert!(matches!(run_attack(&m, &x, &t, &cfg), Err(Error::Config(_))));
    }
}

#[test]
fn target_length_mismatch_is_rejected() {
    let m = model();
    let x = victim(1);
    let t = Waveform::zeros(x.len() - 1, 16_000);
    let cfg = AttackConfig { method: Method::Fgsm, ..Default::default() };
    assert!(fgsm(&m, &x, &t, &cfg).is_err());
}

#[test]
fn noise_target_has_fixed_rms() {
    let like = Waveform::<f64>::zeros(4000, 16_000);
    let t = make_target(&TargetSpec::noise(9), &like).unwrap();
    assert_relative_eq!(t.rms(), NOISE_TARGET_RMS, epsilon = 1e-12);
}

#[test]
fn opt_trace_records_all_terms() {
    let m = model();
    let x = victim(2);
    let t = make_target(&TargetSpec::silence(), &x).unwrap();
    let cfg = AttackConfig { itr: 25, alpha: 0.01, ..Default::default() };
    let adv = opt_attack(&m, &x, &t, &cfg).unwrap();
    assert_eq!(adv.trace.len(), 25);
    assert!(adv.trace.iter().all(|s| s.l1.is_some() && s.l2.is_some()));
    let p: Vec<f64> = adv.x_star.samples.iter().zip(&x.samples).map(|(a, b)| a - b).collect();
    assert_eq!(adv.perturbation.samples, p);
}

#[test]
fn opt_linf_bound_is_enforced() {
    let m = model();
    let x = victim(3);
    let t = make_target(&TargetSpec::silence(), &x).unwrap();
    let cfg = AttackConfig {
        itr: 50,
        alpha: 1.0,
        lr: 0.01,
        opt_linf: Some(0.004),
        ..Default::default()
    };
    let adv = opt_attack(&m, &x, &t, &cfg).unwrap();
    let st = perturbation_stats(&x.samples, &adv.x_star.samples).unwrap();
    assert!(st.linf <= 0.004 + 1e-15);
}

#[test]
fn attacks_run_in_f32() {
    let m: EnhancerModel<f32> = EnhancerModel::build_masknet(MaskNetArch::default(), 3).unwrap();
    let x: Waveform<f32> = victim(4).cast();
    let t = make_target(&TargetSpec::silence(), &x).unwrap();
    for method in [Method::Fgsm, Method::Pgd, Method::Opt] {
        let cfg = AttackConfig { method, itr: 5, steps: 2, ..Default::default() };
        assert!(run_attack(&m, &x, &t, &cfg).unwrap().x_star.is_finite());
    }
}
