// scratch diagnostic: loss trajectory of one random-subset cell
use cads_core::budget::ComputeBudget;
use cads_core::data::digits::{gen_digits, DigitsConfig};
use cads_core::nn::{ConvNetParams, LossKind, Metric, ModelParams, MNIST_MEAN, MNIST_STD};
use cads_core::trainer::{train_with_observer, MaskedView, OptimizerKind, TrainConfig};
use cads_core::rng;

fn main() {
    let all = gen_digits(4000, 77, &DigitsConfig::default()).unwrap();
    let idx: Vec<u32> = (0..4000u32).collect();
    let train = all.subset(&idx[..1000]);
    let test = all.subset(&idx[2000..]);
    let args: Vec<String> = std::env::args().collect();
    let size: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(800);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);
    let lr: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(5e-3);

    let mut rng_s = rng::stream(seed, "random-subset", std::env::args().nth(4).and_then(|s| s.parse().ok()).unwrap_or(3));
    let mut pool: Vec<u32> = (0..1000).collect();
    for i in 0..size {
        let j = rand::Rng::gen_range(&mut rng_s, i..pool.len());
        pool.swap(i, j);
    }
    pool.truncate(size);
    let view = MaskedView::from_indices(&train, pool).unwrap();
    let model = ModelParams::Conv(ConvNetParams::new_seeded(
        10, Some((MNIST_MEAN, MNIST_STD)), rng::child_seed(seed, "final-train-init", std::env::args().nth(4).and_then(|s| s.parse().ok()).unwrap_or(3))));
    let mut budget = ComputeBudget::new(20000);
    let cfg = TrainConfig { batch_size: 1000, lr, optimizer: OptimizerKind::Adam,
        loss_kind: LossKind::CrossEntropy, shuffle_seed: rng::child_seed(seed, "final-train-shuffle", std::env::args().nth(4).and_then(|s| s.parse().ok()).unwrap_or(3)) };
    let mut losses = Vec::new();
    let out = train_with_observer(&model, &view, &mut budget, &cfg, Some((&test, Metric::Accuracy)), &mut |ev| {
        if ev.updates % 2 == 0 { losses.push((ev.updates, ev.samples_used)); }
    }).unwrap();
    println!("final_train_loss={:.4} test_acc={:?} samples={}", out.final_train_loss, out.val_metric, out.samples_used);
    // second pass: print loss at each update via a fresh run with loss capture
    let mut budget = ComputeBudget::new(20000);
    let mut step = 0;
    let _ = train_with_observer(&model, &view, &mut budget, &cfg, None, &mut |ev| {
        step = ev.updates;
        if ev.updates <= 6 || ev.updates % 5 == 0 {
            let sub = view.indices();
            let feats = train.features.gather_rows(sub);
            let labels = train.labels.gather(sub);
            let (l, _) = ev.params.loss_and_grads(&feats, &labels, LossKind::CrossEntropy).unwrap();
            println!("update {:3}: subset loss {:.4}", ev.updates, l);
        }
    });
}
