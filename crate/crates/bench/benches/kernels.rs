use cads_core::data::digits::{gen_digits, DigitsConfig};
use cads_core::nn::{ConvNetParams, LossKind, MlpParams, ModelParams};
use cads_core::policy::{normal, BernoulliPolicy, TruncGaussPolicy};
use cads_core::surrogate::{fit_surrogate, LossProbe, SurrogateKind};
use cads_core::{DenseMatrix, Labels};
use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use rand::{Rng, SeedableRng};

fn conv_batch(n: usize) -> (DenseMatrix, Labels) {
    let ds = gen_digits(n, 7, &DigitsConfig::default()).unwrap();
    (ds.features.clone(), ds.labels.clone())
}

fn bench_conv(c: &mut Criterion) {
    let model = ModelParams::Conv(ConvNetParams::new_seeded(10, None, 1));
    let (feats, labels) = conv_batch(128);
    let mut g = c.benchmark_group("convnet");
    g.throughput(Throughput::Elements(feats.rows() as u64));
    g.bench_function("forward_128", |b| {
        b.iter(|| model.forward(&feats).unwrap());
    });
    g.bench_function("loss_and_grads_128", |b| {
        b.iter(|| model.loss_and_grads(&feats, &labels, LossKind::CrossEntropy).unwrap());
    });
    g.finish();
}

fn bench_mlp(c: &mut Criterion) {
    let model = ModelParams::Mlp(MlpParams::new_seeded(&[1, 100, 100, 1], 2));
    let mut rng = rand_pcg(3);
    let feats =
        DenseMatrix::from_vec(1000, 1, (0..1000).map(|_| rng.gen_range(-10.0..10.0)).collect())
            .unwrap();
    let labels = Labels::Real((0..1000).map(|_| rng.gen_range(-10.0..10.0)).collect());
    let mut g = c.benchmark_group("mlp");
    g.throughput(Throughput::Elements(1000));
    g.bench_function("loss_and_grads_1000", |b| {
        b.iter(|| model.loss_and_grads(&feats, &labels, LossKind::Mse).unwrap());
    });
    g.finish();
}

fn bench_policies(c: &mut Criterion) {
    let bern = BernoulliPolicy::uniform(1000, 0.5);
    let tg = TruncGaussPolicy::new(vec![0.5; 5], 0.05).unwrap();
    let mut g = c.benchmark_group("policies");
    g.bench_function("bernoulli_sample_1000", |b| {
        b.iter_batched(
            || rand_pcg(11),
            |mut rng| bern.sample(&mut rng),
            BatchSize::SmallInput,
        );
    });
    g.bench_function("trunc_gauss_sample_5", |b| {
        b.iter_batched(|| rand_pcg(12), |mut rng| tg.sample(&mut rng), BatchSize::SmallInput);
    });
    g.bench_function("normal_inv_cdf", |b| {
        let mut p = 0.0001f64;
        b.iter(|| {
            p = if p > 0.999 { 0.0001 } else { p + 0.0001 };
            normal::inv_cdf(p)
        });
    });
    g.finish();
}

fn bench_surrogate(c: &mut Criterion) {
    let probes: Vec<LossProbe> = [50usize, 100, 300, 500, 700, 900]
        .iter()
        .map(|&s| LossProbe { size: s, loss: (-(s as f64) / 300.0).exp() + 0.05, seed: 0 })
        .collect();
    let fit = fit_surrogate(&probes, SurrogateKind::CubicSpline).unwrap();
    let mut g = c.benchmark_group("surrogate");
    g.bench_function("spline_fit_6", |b| {
        b.iter(|| fit_surrogate(&probes, SurrogateKind::CubicSpline).unwrap());
    });
    g.bench_function("spline_eval", |b| {
        let mut x = 50.0;
        b.iter(|| {
            x = if x > 890.0 { 50.0 } else { x + 1.0 };
            fit.eval(x)
        });
    });
    g.finish();
}

fn rand_pcg(seed: u64) -> rand_chacha::ChaCha8Rng {
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

criterion_group!(benches, bench_conv, bench_mlp, bench_policies, bench_surrogate);
criterion_main!(benches);
