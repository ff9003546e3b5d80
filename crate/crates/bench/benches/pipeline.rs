use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use editembed_core::align::align;
use editembed_core::decode::{beam_search, DecodeSession};
use editembed_core::model::{CodeChangeEmbedder, ModelConfig};
use editembed_core::synthetic::{pretraining_corpus, transfer_corpus};
use editembed_core::tokenize::build_vocabulary;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tokens(rng: &mut ChaCha8Rng, len: usize) -> Vec<String> {
    (0..len).map(|_| format!("t{}", rng.gen_range(0..20))).collect()
}

fn bench_align(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for len in [10, 100] {
        let pairs: Vec<_> = (0..32)
            .map(|_| (random_tokens(&mut rng, len), random_tokens(&mut rng, len)))
            .collect();
        c.bench_function(&format!("align/len{len}"), |b| {
            b.iter_batched(
                || pairs[rng.gen_range(0..pairs.len())].clone(),
                |(x, y)| align(&x, &y),
                BatchSize::SmallInput,
            )
        });
    }
}

fn model() -> CodeChangeEmbedder<f32> {
    let corpus = pretraining_corpus(100, 1);
    let vocab = build_vocabulary(
        corpus.iter().flat_map(|p| [p.before.as_slice(), p.after.as_slice()]),
        20_000,
        1,
    )
    .unwrap();
    CodeChangeEmbedder::new(ModelConfig::default(), vocab.clone(), vocab).unwrap()
}

fn bench_model(c: &mut Criterion) {
    let m = model();
    let pair = &transfer_corpus(2)[0];
    let sample = m.prepare_pair(&pair.before, &pair.after);
    c.bench_function("loss_and_backward", |b| {
        b.iter(|| {
            let mut tape = m.tape();
            let loss = m.loss_vars(&mut tape, &sample).unwrap();
            tape.backward(loss).unwrap()
        })
    });
    let edit = m.embed_change(&pair.before, &pair.after).unwrap();
    let session = DecodeSession::new(&m, &pair.before, edit).unwrap();
    let mut group = c.benchmark_group("beam");
    group.sample_size(10);
    for width in [1, 5, 50] {
        group.bench_function(format!("width{width}"), |b| {
            b.iter(|| beam_search(&session, width, session.default_max_len()).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_align, bench_model);
criterion_main!(benches);
