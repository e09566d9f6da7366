use raysense::experiments::{classification, ClassificationConfig};

fn mean_accuracy(base: &ClassificationConfig, lambda: usize) -> f64 {
    classification(&ClassificationConfig { lambda, ..base.clone() }).unwrap().mean_accuracy
}

/// One ray of three samples per set keeps single-set accuracy well away
/// from 1, so averaging eight sets has room to help.
#[test]
fn eight_ray_sets_beat_one_on_sparse_sensing() {
    let cfg = ClassificationConfig {
        seeds: (100..120).collect(),
        points: 300,
        noise: 0.1,
        m: 1,
        k: 3,
        ..ClassificationConfig::default()
    };
    let (one, eight) = (mean_accuracy(&cfg, 1), mean_accuracy(&cfg, 8));
    assert!(one < 0.95, "single ray set already saturates: {one}");
    assert!(eight >= one, "λ=8 {eight} < λ=1 {one}");
}

#[test]
fn ensemble_does_not_hurt_at_default_settings() {
    let cfg = ClassificationConfig {
        seeds: (200..220).collect(),
        ..ClassificationConfig::default()
    };
    let (one, eight) = (mean_accuracy(&cfg, 1), mean_accuracy(&cfg, 8));
    assert!(one >= 0.8);
    assert!(eight >= one, "λ=8 {eight} < λ=1 {one}");
}

#[test]
fn classification_is_deterministic() {
    let cfg = ClassificationConfig {
        seeds: vec![7],
        points: 300,
        noise: 0.1,
        m: 2,
        k: 3,
        ..ClassificationConfig::default()
    };
    assert_eq!(classification(&cfg).unwrap(), classification(&cfg).unwrap());
}
