use cads_core::data::digits::{gen_digits, DigitsConfig};
use cads_core::nn::{ConvNetParams, LossKind, ModelParams};
use std::time::Instant;

fn main() {
    let ds = gen_digits(1000, 7, &DigitsConfig::default()).unwrap();
    let model = ModelParams::Conv(ConvNetParams::new_seeded(10, Some((0.1307, 0.3081)), 1));
    // warm
    let _ = model.forward(&ds.features).unwrap();
    let t = Instant::now();
    let n = 5;
    for _ in 0..n {
        let _ = model.forward(&ds.features).unwrap();
    }
    let fwd = t.elapsed().as_secs_f64() / n as f64;
    let t = Instant::now();
    for _ in 0..n {
        let _ = model.loss_and_grads(&ds.features, &ds.labels, LossKind::CrossEntropy).unwrap();
    }
    let both = t.elapsed().as_secs_f64() / n as f64;
    // rough flop model: fwd 7.8 MFLOP/example, fwd+bwd 23
    println!("forward(1000): {:.3}s ({:.1} GFLOP/s)", fwd, 7.8 / fwd);
    println!("loss+grads(1000): {:.3}s ({:.1} GFLOP/s)", both, 23.0 / both);
}
