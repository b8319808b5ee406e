use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use sceneseg_core::manifest::LoadedScene;
use sceneseg_core::metrics::{evaluate_scene, ScenePrediction, SceneTruth};
use sceneseg_core::mixer::{synthesize_scene, SceneSpec, SourceBank};
use sceneseg_core::pipeline::BackendSpec;
use sceneseg_core::{run_pipeline, ClassVocabulary, PipelineConfig};

fn setup() -> (ClassVocabulary, SourceBank, SceneSpec) {
    let vocab = ClassVocabulary::default();
    let spec = SceneSpec {
        duration: 1.0,
        seed: 3,
        ..SceneSpec::default()
    };
    let bank = SourceBank::procedural(vocab.len(), spec.sample_rate, 1.0, 2, 99).unwrap();
    (vocab, bank, spec)
}

fn mixing(c: &mut Criterion) {
    let (vocab, bank, spec) = setup();
    c.bench_function("synthesize 1s scene", |b| {
        b.iter(|| synthesize_scene(black_box(&spec), &bank, &vocab, "bench").unwrap())
    });
}

fn pipeline(c: &mut Criterion) {
    let (vocab, bank, spec) = setup();
    let s = synthesize_scene(&spec, &bank, &vocab, "bench").unwrap();
    let scene = LoadedScene {
        manifest: s.manifest,
        mixture: s.mixture,
        stems: s.stems,
    };
    let cfg = PipelineConfig::default();
    for backend in [BackendSpec::Oracle, BackendSpec::OracleDegraded(10.0)] {
        let backends = backend.build(&scene, vocab.len(), 0).unwrap();
        c.bench_function(&format!("pipeline {backend} 1s"), |b| {
            b.iter(|| run_pipeline(black_box(&scene.mixture), &backends, &cfg).unwrap())
        });
    }
    let backends = BackendSpec::OracleDegraded(10.0).build(&scene, vocab.len(), 0).unwrap();
    let result = run_pipeline(&scene.mixture, &backends, &cfg).unwrap();
    let truth = SceneTruth::from_scene(&scene).unwrap();
    let pred = ScenePrediction::from_result(&result).unwrap();
    c.bench_function("evaluate scene 1s", |b| {
        b.iter(|| evaluate_scene("bench", black_box(&truth), black_box(&pred), &scene.mixture).unwrap())
    });
}

criterion_group!(benches, mixing, pipeline);
criterion_main!(benches);
