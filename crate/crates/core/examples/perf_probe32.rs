use cads_core::data::digits::{gen_digits, DigitsConfig};
use cads_core::nn::{ConvNetParams, LossKind, ModelParams};
use std::time::Instant;

fn main() {
    let ds = gen_digits(1000, 7, &DigitsConfig::default()).unwrap();
    for fast in [false, true] {
        let model = ModelParams::Conv(
            ConvNetParams::new_seeded(10, Some((0.1307, 0.3081)), 1).with_fast_math(fast),
        );
        let _ = model.loss_and_grads(&ds.features, &ds.labels, LossKind::CrossEntropy).unwrap();
        let t = Instant::now();
        for _ in 0..5 {
            let _ = model.loss_and_grads(&ds.features, &ds.labels, LossKind::CrossEntropy).unwrap();
        }
        let dt = t.elapsed().as_secs_f64() / 5.0;
        println!("fast={fast}: loss+grads(1000) {dt:.3}s ({:.1} GFLOP/s equiv)", 23.0 / dt);
    }
}
