use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use windsched::{CasePreset, GeneratorConfig, Model, ModelConfig};

fn greedy_decode(c: &mut Criterion) {
    let model = Model::new(ModelConfig::full(), 0).unwrap();
    let mut group = c.benchmark_group("greedy_decode");
    group.sample_size(10);
    for preset in [CasePreset::DeskA, CasePreset::Case1, CasePreset::Case5] {
        let inst = GeneratorConfig::for_preset(preset, 1).generate().unwrap();
        group.bench_function(preset.name(), |b| b.iter(|| model.greedy(black_box(&inst), None).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, greedy_decode);
criterion_main!(benches);
