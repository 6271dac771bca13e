//! The closed-form posterior against Monte-Carlo draws from the generator.

use clef_core::synthbench::{bayes_oracle, generate_dataset, Prototypes};
use clef_core::{BiasSpec, LabelRegime, Split};

const N: usize = 20_000;

/// If the posterior is exact, its per-class mean matches the label frequency
/// and its top probability matches the accuracy of its own argmax.
fn check_calibration(spec: &BiasSpec, regime: LabelRegime, split: Split) {
    let (mean_gap, top_gap) = calibration_gaps(spec, spec, regime, split);
    assert!(
        mean_gap < 0.015,
        "{regime:?}: mean posterior off by {mean_gap}"
    );
    assert!(
        top_gap < 0.015,
        "{regime:?}: max posterior vs accuracy off by {top_gap}"
    );
}

/// Largest per-class `|mean posterior − frequency|` and `|mean max-posterior −
/// argmax accuracy|` for data drawn from `truth` scored by the oracle of `model`.
fn calibration_gaps(
    truth: &BiasSpec,
    model: &BiasSpec,
    regime: LabelRegime,
    split: Split,
) -> (f64, f64) {
    let samples = generate_dataset(truth, N, split, regime).unwrap();
    let spec = model;
    let protos = Prototypes::from_spec(spec);
    let k = spec.num_classes;
    let mut mean_post = vec![0.0; k];
    let mut freq = vec![0.0; k];
    let (mut expected_hits, mut hits) = (0.0, 0.0);
    for s in &samples {
        let post = bayes_oracle(spec, &protos, s, regime);
        let best = (0..k).fold(0, |b, i| if post[i] > post[b] { i } else { b });
        for y in 0..k {
            mean_post[y] += post[y] / N as f64;
        }
        for &y in &s.labels {
            freq[y] += 1.0 / N as f64;
        }
        if spec.multi_label {
            continue;
        }
        expected_hits += post[best] / N as f64;
        if s.labels[0] == best {
            hits += 1.0 / N as f64;
        }
    }
    let mean_gap = (0..k)
        .map(|y| (mean_post[y] - freq[y]).abs())
        .fold(0.0, f64::max);
    (mean_gap, (expected_hits - hits).abs())
}

#[test]
fn posterior_is_calibrated_on_every_regime() {
    let spec = BiasSpec {
        seed: 11,
        ..BiasSpec::default()
    };
    check_calibration(&spec, LabelRegime::Biased, Split::Train);
    check_calibration(&spec, LabelRegime::Decorrelated, Split::Test);
    check_calibration(&spec, LabelRegime::AntiCorrelated, Split::Test);
}

#[test]
fn posterior_is_calibrated_with_heavy_noise() {
    let spec = BiasSpec {
        sigma_s: 3.0,
        sigma_c: 2.0,
        occlusion_rate: 0.3,
        seed: 12,
        ..BiasSpec::default()
    };
    check_calibration(&spec, LabelRegime::Biased, Split::Train);
    check_calibration(&spec, LabelRegime::AntiCorrelated, Split::Test);
}

#[test]
fn label_set_marginals_match_frequencies() {
    let spec = BiasSpec {
        multi_label: true,
        seed: 13,
        ..BiasSpec::default()
    };
    check_calibration(&spec, LabelRegime::Biased, Split::Train);
    check_calibration(&spec, LabelRegime::Decorrelated, Split::Test);
}

#[test]
fn misspecified_noise_is_detected() {
    let truth = BiasSpec {
        sigma_s: 4.0,
        occlusion_rate: 0.0,
        seed: 14,
        ..BiasSpec::default()
    };
    // Noisy, unoccluded subjects without the context shortcut: a wrong noise
    // level shows up as over- or under-confidence.
    for sigma_s in [2.0, 8.0] {
        let wrong = BiasSpec {
            sigma_s,
            ..truth.clone()
        };
        let (_, top_gap) = calibration_gaps(&truth, &wrong, LabelRegime::Decorrelated, Split::Test);
        assert!(
            top_gap > 0.05,
            "sigma_s {sigma_s}: miscalibration went unnoticed ({top_gap})"
        );
    }
}
