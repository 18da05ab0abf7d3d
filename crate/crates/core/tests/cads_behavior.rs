//! Behavioral contracts of the outer-loop optimizers on small instances.

use cads_core::budget::Ledger;
use cads_core::cads::{bilevel_cads_run, cads_e_run, cads_s_run, CadsConfig};
use cads_core::data::{gen_blobs, LabeledDataset};
use cads_core::nn::{LossKind, MlpParams, ModelParams};
use cads_core::policy::{BernoulliPolicy, TruncGaussPolicy, EPS_S};
use cads_core::surrogate::{fit_surrogate, LossProbe, SurrogateKind};
use cads_core::trainer::{OptimizerKind, TrainConfig};

fn tiny_data(n: usize) -> (LabeledDataset, LabeledDataset) {
    let all = gen_blobs(n + 16, 3, 4, 3.0, 9).unwrap();
    let idx: Vec<u32> = (0..(n + 16) as u32).collect();
    (all.subset(&idx[..n]), all.subset(&idx[n..]))
}

fn tiny_init() -> impl Fn(u64) -> ModelParams {
    |seed| ModelParams::Mlp(MlpParams::new_seeded(&[4, 8, 3], seed))
}

fn tiny_train_cfg() -> TrainConfig {
    TrainConfig {
        batch_size: 8,
        lr: 5e-3,
        optimizer: OptimizerKind::Adam,
        loss_kind: LossKind::CrossEntropy,
        shuffle_seed: 0,
        eval_charge_fraction: 0.0,
    }
}

fn tiny_surrogate() -> cads_core::SurrogateFit {
    let probes = vec![
        LossProbe { size: 2, loss: 0.4, seed: 0 },
        LossProbe { size: 8, loss: 0.7, seed: 0 },
        LossProbe { size: 16, loss: 0.9, seed: 0 },
        LossProbe { size: 24, loss: 1.0, seed: 0 },
    ];
    fit_surrogate(&probes, SurrogateKind::CubicSpline).unwrap()
}

#[test]
fn bilevel_with_k1_and_vr_never_moves_the_policy() {
    let (train, val) = tiny_data(24);
    let policy0 = BernoulliPolicy::uniform(24, 0.5);
    let cfg = CadsConfig {
        k_subsets: 1,
        outer_iters: 3,
        variance_reduction: true,
        budget_c: 48,
        seed: 5,
        ..CadsConfig::default()
    };
    let mut ledger = Ledger::new(None);
    let out =
        bilevel_cads_run(&train, &val, &policy0, &cfg, &tiny_train_cfg(), &tiny_init(), &mut ledger)
            .unwrap();
    assert_eq!(out.policy.probs(), policy0.probs());
    // cost accounting: every outer step consumed exactly K x C
    assert_eq!(ledger.total(), 3 * 48);
}

#[test]
fn bilevel_consumes_exactly_k_times_c_per_outer_step() {
    let (train, val) = tiny_data(24);
    let policy0 = BernoulliPolicy::uniform(24, 0.5);
    let cfg = CadsConfig {
        k_subsets: 3,
        outer_iters: 2,
        budget_c: 50,
        seed: 6,
        ..CadsConfig::default()
    };
    let mut ledger = Ledger::new(Some(3 * 2 * 50));
    let out =
        bilevel_cads_run(&train, &val, &policy0, &cfg, &tiny_train_cfg(), &tiny_init(), &mut ledger)
            .unwrap();
    assert_eq!(ledger.total(), 3 * 2 * 50);
    ledger.assert_within().unwrap();
    assert_eq!(out.trace.records.len(), 2);
    // per-iteration budget bookkeeping is cumulative
    assert_eq!(out.trace.records[0].budget_consumed, 150);
    assert_eq!(out.trace.records[1].budget_consumed, 300);
}

#[test]
fn cads_e_with_alpha_zero_and_vr_keeps_policy_fixed() {
    // rewards collapse to the shared validation loss, centering kills them
    let (train, val) = tiny_data(24);
    let policy0 = BernoulliPolicy::uniform(24, 0.4);
    let cfg = CadsConfig {
        alpha: 0.0,
        k_subsets: 4,
        outer_iters: 5,
        budget_c: 48,
        seed: 7,
        ..CadsConfig::default()
    };
    let mut ledger = Ledger::new(None);
    let out = cads_e_run(
        &train,
        &val,
        &policy0,
        &tiny_surrogate(),
        &cfg,
        LossKind::CrossEntropy,
        &tiny_init(),
        &mut ledger,
    )
    .unwrap();
    assert_eq!(out.policy.probs(), policy0.probs());
    // theta still trains on the validation gradient
    assert_eq!(out.trace.records.len(), 5);
}

#[test]
fn cads_e_outer_step_cost_is_bounded_by_subset_passes() {
    let (train, val) = tiny_data(24);
    let policy0 = BernoulliPolicy::uniform(24, 0.9);
    let cfg = CadsConfig {
        k_subsets: 3,
        outer_iters: 4,
        budget_c: 1000,
        seed: 8,
        ..CadsConfig::default()
    };
    let mut ledger = Ledger::new(Some(4 * 3 * 24));
    let out = cads_e_run(
        &train,
        &val,
        &policy0,
        &tiny_surrogate(),
        &cfg,
        LossKind::CrossEntropy,
        &tiny_init(),
        &mut ledger,
    )
    .unwrap();
    ledger.assert_within().unwrap();
    for rec in &out.trace.records {
        let step_cost: u64 = rec.subset_sizes.iter().map(|&s| s as u64).sum();
        assert!(step_cost <= 3 * 24);
    }
}

#[test]
fn cads_s_single_source_stays_in_bounds_and_anneals() {
    let all = gen_blobs(40, 3, 4, 3.0, 11).unwrap();
    let idx: Vec<u32> = (0..40).collect();
    let train = all.subset(&idx[..24]);
    let val = all.subset(&idx[24..]);
    let policy0 = TruncGaussPolicy::new(vec![0.5], 0.05).unwrap();
    let cfg = CadsConfig {
        k_subsets: 3,
        outer_iters: 10,
        budget_c: 48,
        seed: 9,
        ..CadsConfig::default()
    };
    let mut ledger = Ledger::new(None);
    let out = cads_s_run(
        &train,
        &val,
        &policy0,
        &tiny_surrogate(),
        &cfg,
        LossKind::CrossEntropy,
        &tiny_init(),
        &mut ledger,
    )
    .unwrap();
    let m = out.policy.means()[0];
    assert!((EPS_S..=1.0 - EPS_S).contains(&m));
    assert!((out.policy.sigma() - 0.99f64.powi(10) * 0.05).abs() < 1e-12);
    let sigmas: Vec<f64> = out.trace.records.iter().filter_map(|r| r.sigma).collect();
    assert_eq!(sigmas.len(), 10);
    assert!(sigmas.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn runs_are_bit_reproducible_for_identical_seeds() {
    let (train, val) = tiny_data(24);
    let policy0 = BernoulliPolicy::uniform(24, 0.5);
    let cfg = CadsConfig { k_subsets: 2, outer_iters: 3, budget_c: 48, seed: 13, ..CadsConfig::default() };
    let run = || {
        let mut ledger = Ledger::new(None);
        cads_e_run(
            &train,
            &val,
            &policy0,
            &tiny_surrogate(),
            &cfg,
            LossKind::CrossEntropy,
            &tiny_init(),
            &mut ledger,
        )
        .unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(a.policy.probs(), b.policy.probs());
    assert_eq!(a.theta, b.theta);
    for (ra, rb) in a.trace.records.iter().zip(&b.trace.records) {
        assert_eq!(ra.rewards, rb.rewards);
    }
}
