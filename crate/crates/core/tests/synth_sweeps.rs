mod support;

use support::*;
use uda_select::metrics::MetricName;
use uda_select::synth::{augment_features, generate_scenario, Family, Scenario, Shift};

const SEED: u64 = 17;
const N_MODELS: usize = 20;

fn benchmark() -> Scenario {
    Scenario::benchmark(SEED)
}

#[test]
fn attack_raises_mi_while_accuracy_falls() {
    let e = evaluate_sweep(&benchmark(), Family::AttackMi, N_MODELS, SEED, &[MetricName::Mi]);
    let mi = e.of(MetricName::Mi);
    for i in 1..N_MODELS {
        assert!(mi[i] > mi[i - 1], "MI not increasing at {i}: {mi:?}");
        if e.t[i - 1] >= 0.5 {
            assert!(e.acc[i] < e.acc[i - 1], "accuracy not decreasing at {i}: {:?}", e.acc);
        }
    }
}

#[test]
fn collapse_endpoint_has_maximal_entropy_score_and_chance_accuracy() {
    let e = evaluate_sweep(&benchmark(), Family::Collapse, N_MODELS, SEED, &[MetricName::Entropy]);
    let last = N_MODELS - 1;
    assert!(e.of(MetricName::Entropy)[last] > -1e-6);
    assert!((e.acc[last] - 0.25).abs() < 0.05, "{}", e.acc[last]);
}

#[test]
fn alignment_accuracy_rises_then_falls() {
    let e = evaluate_sweep(&benchmark(), Family::Alignment, N_MODELS, SEED, &[]);
    let peak = naive_argmax(&e.acc);
    assert!(peak > 0 && peak < N_MODELS - 1, "peak at {peak}");
    assert!(e.acc[peak] - e.acc[0] > 0.05 && e.acc[peak] - e.acc[N_MODELS - 1] > 0.05, "{:?}", e.acc);
}

#[test]
fn over_alignment_lowers_divergence_past_the_accuracy_peak() {
    let e = evaluate_sweep(&benchmark(), Family::OverAlignment, N_MODELS, SEED, &[MetricName::ADistance]);
    let div = e.detail(MetricName::ADistance, "divergence");
    let peak = naive_argmax(&e.acc);
    let last = N_MODELS - 1;
    assert!(peak < last && e.acc[last] < e.acc[peak] - 0.05, "{:?}", e.acc);
    assert!(div[last] < div[peak], "divergence {div:?}");
    assert!(div[last] < div[0], "divergence {div:?}");
    let score = e.of(MetricName::ADistance);
    assert!(score[last] > score[peak], "{score:?}");
}

#[test]
fn dev_is_constant_when_source_error_is_zero() {
    let mut s = benchmark();
    s.center_scale = 8.0;
    s.shift = Shift::Translation { vector: vec![4.0, -4.0, 4.0, -4.0, 0.0, 0.0, 0.0, 0.0] };
    let e = evaluate_sweep(&s, Family::Alignment, N_MODELS, SEED, &[MetricName::Dev, MetricName::Devn, MetricName::MiWSource]);
    let src = e.detail(MetricName::MiWSource, "src_acc");
    assert!(src.iter().all(|&a| a == 1.0), "{src:?}");
    for m in [MetricName::Dev, MetricName::Devn] {
        let v = e.of(m);
        let spread = v.iter().copied().fold(f64::NEG_INFINITY, f64::max) - v.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(spread < 1e-9, "{m}: {v:?}");
    }
    let spread = e.acc.iter().copied().fold(f64::NEG_INFINITY, f64::max) - e.acc.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(spread > 0.05, "the sweep itself should vary: {:?}", e.acc);
}

#[test]
fn augmentation_noise_has_the_requested_variance() {
    let f = ndarray::Array2::<f64>::zeros((2000, 8));
    assert_eq!(augment_features(&f, 0.0, 3), f);
    let a = augment_features(&f, 0.5, 3);
    let var = a.iter().map(|v| v * v).sum::<f64>() / a.len() as f64;
    assert!((var / 0.25 - 1.0).abs() < 0.05, "{var}");
    assert_eq!(a, augment_features(&f, 0.5, 3));
}

#[test]
fn label_permutation_misclassifies_the_swapped_mass() {
    use uda_select::synth::ReferenceClassifier;
    let s = Scenario {
        k_classes: 3,
        dim: 3,
        center_scale: 6.0,
        sigma: 1.0,
        n_source: 300,
        n_target: 600,
        shift: Shift::LabelPermutation { perm: vec![1, 0, 2] },
        seed: 4,
    };
    let d = generate_scenario(&s).unwrap();
    let clf = ReferenceClassifier::new(d.centers.clone(), s.sigma);
    let p = clf.predict_proba(&d.target_x).mapv(|v| v as f32);
    let acc = uda_select::synth::oracle_accuracy(&p, &d.target_y);
    let swapped = d.target_y.iter().filter(|&&y| y != 2).count() as f64 / d.target_y.len() as f64;
    assert!((acc - (1.0 - swapped)).abs() < 0.03, "acc {acc}, swapped mass {swapped}");
}
