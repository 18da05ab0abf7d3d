// scratch: selection headroom of the mixed corpus — random vs clean-only subsets
use cads_core::budget::ComputeBudget;
use cads_core::data::digits::{gen_digits, DigitsConfig};
use cads_core::nn::{ConvNetParams, LossKind, Metric, ModelParams, MNIST_MEAN, MNIST_STD};
use cads_core::trainer::{train_on_subset, MaskedView, OptimizerKind, TrainConfig};
use cads_core::rng;

fn main() {
    let mut cfg = DigitsConfig::default();
    if let Some(f) = std::env::args().nth(1).and_then(|v| v.parse().ok()) { cfg.hard_fraction = f; }
    if let Some(p) = std::env::args().nth(2).and_then(|v| v.parse().ok()) { cfg.hard_label_noise = p; }
    let mut clean_cfg = cfg.clone();
    clean_cfg.hard_fraction = 0.0;
    let train = gen_digits(1000, rng::child_seed(77, "train-pool", 0), &cfg).unwrap();
    let test = gen_digits(2000, rng::child_seed(77, "test-pool", 0), &clean_cfg).unwrap();
    let hard_count = train.source_id.iter().filter(|&&s| s == 1).count();
    println!("hard in pool: {hard_count}/1000");
    let tcfg = |seed: u64| TrainConfig { batch_size: 1000, lr: 5e-3, optimizer: OptimizerKind::Adam,
        loss_kind: LossKind::CrossEntropy, shuffle_seed: seed };
    let run = |indices: Vec<u32>, seed: u64| -> f64 {
        let view = MaskedView::from_indices(&train, indices).unwrap();
        let model = ModelParams::Conv(ConvNetParams::new_seeded(10, Some((MNIST_MEAN, MNIST_STD)), rng::child_seed(seed, "i", 0)));
        let mut b = ComputeBudget::new(20000);
        train_on_subset(&model, &view, &mut b, &tcfg(rng::child_seed(seed, "s", 0)), Some((&test, Metric::Accuracy))).unwrap().val_metric.unwrap()
    };
    for seed in [0u64, 1] {
        // random 500
        let mut rng_s = rng::stream(seed, "r", 0);
        let mut pool: Vec<u32> = (0..1000).collect();
        for i in 0..500 { let j = rand::Rng::gen_range(&mut rng_s, i..pool.len()); pool.swap(i, j); }
        let accs: Vec<(usize, f64)> = [200usize, 400, 500, 600, 800, 1000]
            .iter().map(|&n| (n, run(pool[..n].to_vec(), seed))).collect();
        // clean-only 500
        let clean: Vec<u32> = (0..1000u32).filter(|&i| train.source_id[i as usize] == 0).collect();
        let mut c = clean.clone();
        let mut rng_c = rng::stream(seed, "c", 0);
        for i in 0..500.min(c.len()) { let j = rand::Rng::gen_range(&mut rng_c, i..c.len()); c.swap(i, j); }
        let acc_clean = run(c[..500].to_vec(), seed);
        let line: Vec<String> = accs.iter().map(|(n, a)| format!("r{n} {a:.3}")).collect();
        println!("seed {seed}: {} clean500 {acc_clean:.3}", line.join(" "));
    }
}
