use learned_hash::model::{train_teacher, ModelConfig};
use learned_hash::synth::{generate, group_distances, SynthConfig};

#[test]
fn teacher_latents_recover_planted_groups() {
    let cfg = SynthConfig {
        vocab_sizes: vec![300, 300],
        group_counts: vec![4, 4],
        zipf_alpha: 0.0,
        samples_per_day: 40_000,
        num_days: 4,
        seed: 5,
        ..Default::default()
    };
    let (ds, truth) = generate(&cfg).unwrap();
    let model = ModelConfig {
        width: 4,
        epochs: 4,
        batch_size: 256,
        seed: 1,
        ..Default::default()
    };
    let teacher = train_teacher(&ds, 0..=3, None, &model).unwrap();
    for (f, feature) in teacher.features.iter().enumerate() {
        let sep = group_distances(&feature.latents, teacher.dim(), &truth.features[f].groups, 20_000, 9);
        assert!(sep.ratio() < 0.9, "feature {f}: ratio {}", sep.ratio());
    }
}
