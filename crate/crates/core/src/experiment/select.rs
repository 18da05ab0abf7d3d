//! Subset-selection experiment on an MNIST-format corpus: random baseline,
//! the bilevel policy-gradient optimizer and the relaxed example-level
//! optimizer, across initial subset fractions and seeds. The final metric of
//! every cell is the test accuracy of a model freshly trained at the full
//! budget on the selected subset.

use super::config::{DataSource, DecodeKind, ExperimentConfig, SelectMethod, SelectSection};
use super::{fmt_init, guard_cell, CellTimer, OutputLayout, SummaryRow};
use crate::budget::{ComputeBudget, Ledger};
use crate::cads::{bilevel_cads_run, cads_e_run};
use crate::data::digits::gen_digits;
use crate::data::{load_idx, LabeledDataset};
use crate::error::{CoreError, Result};
use crate::nn::{ConvNetParams, LossKind, Metric, ModelParams, MNIST_MEAN, MNIST_STD};
use crate::policy::BernoulliPolicy;
use crate::surrogate::{collect_probes, fit_surrogate, probes_to_csv, ProbeRunner, SurrogateFit, SurrogateKind};
use crate::trainer::{train_on_subset, MaskedView, OptimizerKind, TrainConfig};

pub struct SelectContext {
    pub train_pool: LabeledDataset,
    pub val_pool: LabeledDataset,
    pub test_pool: LabeledDataset,
    pub source_label: &'static str,
}

/// Assemble the training/validation/test pools for the configured source.
pub fn build_select_context(cfg: &SelectSection) -> Result<SelectContext> {
    match cfg.source {
        DataSource::Digits => {
            // The training pool carries the configured quality mixture; the
            // validation and test pools are drawn from the legible profile.
            let mut clean = cfg.digits.clone();
            clean.hard_fraction = 0.0;
            Ok(SelectContext {
                train_pool: gen_digits(
                    cfg.train_n,
                    crate::rng::child_seed(cfg.pool_seed, "train-pool", 0),
                    &cfg.digits,
                )?,
                val_pool: gen_digits(
                    cfg.val_n,
                    crate::rng::child_seed(cfg.pool_seed, "val-pool", 0),
                    &clean,
                )?,
                test_pool: gen_digits(
                    cfg.test_n,
                    crate::rng::child_seed(cfg.pool_seed, "test-pool", 0),
                    &clean,
                )?,
                source_label: "digits",
            })
        }
        DataSource::Mnist => {
            let dir = cfg.mnist_dir.as_ref().expect("validated");
            let train_full = load_idx(
                &dir.join("train-images-idx3-ubyte"),
                &dir.join("train-labels-idx1-ubyte"),
            )?;
            let mut perm: Vec<u32> = (0..train_full.len() as u32).collect();
            use rand::seq::SliceRandom;
            perm.shuffle(&mut crate::rng::stream(cfg.pool_seed, "pool-shuffle", 0));
            if train_full.len() < cfg.train_n + cfg.val_n {
                return Err(CoreError::domain("train file smaller than requested pools"));
            }
            let train_pool = train_full.subset(&perm[..cfg.train_n]);
            let val_pool = train_full.subset(&perm[cfg.train_n..cfg.train_n + cfg.val_n]);
            let test_images = dir.join("t10k-images-idx3-ubyte");
            let test_pool = if test_images.exists() {
                let t = load_idx(&test_images, &dir.join("t10k-labels-idx1-ubyte"))?;
                let take = cfg.test_n.min(t.len()) as u32;
                t.subset(&(0..take).collect::<Vec<_>>())
            } else {
                let lo = cfg.train_n + cfg.val_n;
                let hi = (lo + cfg.test_n).min(train_full.len());
                train_full.subset(&perm[lo..hi])
            };
            Ok(SelectContext { train_pool, val_pool, test_pool, source_label: "mnist" })
        }
    }
}

pub fn select_cell_name(method: &str, init: f64, seed: u64) -> String {
    format!("{method}_init{init}_seed{seed}")
}

fn conv_init(cfg: &SelectSection) -> impl Fn(u64) -> ModelParams + '_ {
    let normalize = cfg.normalize.then_some((MNIST_MEAN, MNIST_STD));
    move |seed| {
        ModelParams::Conv(
            ConvNetParams::new_seeded(10, normalize, seed).with_fast_math(cfg.fast_math),
        )
    }
}

fn inner_train_cfg(cfg: &SelectSection, shuffle_seed: u64) -> TrainConfig {
    TrainConfig {
        batch_size: cfg.batch_size,
        lr: cfg.lr,
        optimizer: OptimizerKind::Adam,
        loss_kind: LossKind::CrossEntropy,
        shuffle_seed,
        eval_charge_fraction: cfg.eval_charge_fraction,
    }
}

/// Train on the selected subset at the full budget and report test accuracy.
fn decode_and_evaluate(
    ctx: &SelectContext,
    cfg: &SelectSection,
    indices: Vec<u32>,
    seed: u64,
    tag: u64,
    ledger: &mut Ledger,
) -> Result<(f64, u64)> {
    let view = MaskedView::from_indices(&ctx.train_pool, indices)?;
    let mut budget = ComputeBudget::new(cfg.budget);
    let outcome = train_on_subset(
        &conv_init(cfg)(crate::rng::child_seed(seed, "final-train-init", tag)),
        &view,
        &mut budget,
        &inner_train_cfg(cfg, crate::rng::child_seed(seed, "final-train-shuffle", tag)),
        Some((&ctx.test_pool, Metric::Accuracy)),
    )?;
    ledger.record(format!("final-train[tag={tag}]"), outcome.samples_used);
    if outcome.eval_samples_used > 0 {
        ledger.record(format!("eval[tag={tag}]"), outcome.eval_samples_used);
    }
    Ok((outcome.val_metric.expect("val requested"), outcome.samples_used))
}

fn decode_mask(policy: &BernoulliPolicy, decode: DecodeKind, seed: u64) -> Result<Vec<u32>> {
    let mask = match decode {
        DecodeKind::Threshold(t) => policy.probs().iter().map(|&p| p > t).collect::<Vec<bool>>(),
        DecodeKind::Sample => {
            let mut rng = crate::rng::stream(seed, "decode-sample", 0);
            policy.sample_nonempty(&mut rng, 10)?
        }
    };
    let indices: Vec<u32> = mask
        .iter()
        .enumerate()
        .filter_map(|(i, &b)| b.then_some(i as u32))
        .collect();
    if indices.is_empty() {
        return Err(CoreError::EmptySubset("decoded mask selects no examples".into()));
    }
    Ok(indices)
}

/// Collect probes and fit the spline surrogate once per experiment, or load a
/// persisted fit (the fit amortizes across every cell that needs it).
pub fn get_surrogate(
    cfg: &ExperimentConfig,
    ctx: &SelectContext,
    layout: &OutputLayout,
    global: &mut Ledger,
) -> Result<SurrogateFit> {
    if let Some(path) = &cfg.surrogate.reuse_fit {
        log::info!("reusing persisted surrogate fit {}", path.display());
        return SurrogateFit::from_json(&std::fs::read_to_string(path)?);
    }
    let select = &cfg.select;
    let mut ledger = Ledger::new(Some(
        (cfg.surrogate.fractions.len() * cfg.surrogate.replicates) as u64 * select.budget,
    ));
    let init = conv_init(select);
    let runner = ProbeRunner {
        dataset: &ctx.train_pool,
        budget_per_probe: select.budget,
        train_cfg: inner_train_cfg(select, 0),
        init: &init,
    };
    let probes = collect_probes(
        &runner,
        &cfg.surrogate.fractions,
        cfg.surrogate.size_floor,
        cfg.surrogate.replicates,
        select.pool_seed,
        &mut ledger,
    )?;
    ledger.assert_within()?;
    let fit = fit_surrogate(&probes, SurrogateKind::CubicSpline)?;
    std::fs::write(layout.fit_path("select_surrogate"), fit.to_json()?)?;
    probes_to_csv(
        &probes,
        std::fs::File::create(layout.fit_aux_path("select_surrogate", "probes.csv"))?,
    )?;
    global.merge("surrogate", ledger);
    Ok(fit)
}

pub struct SelectArtifacts {
    pub surrogate: Option<SurrogateFit>,
}

pub(crate) fn run(
    cfg: &ExperimentConfig,
    layout: &OutputLayout,
    rows: &mut Vec<SummaryRow>,
    failures: &mut Vec<(String, String)>,
    global: &mut Ledger,
) -> Result<()> {
    let select = &cfg.select;
    let ctx = build_select_context(select)?;
    log::info!(
        "select corpus: {} (train {}, val {}, test {})",
        ctx.source_label,
        ctx.train_pool.len(),
        ctx.val_pool.len(),
        ctx.test_pool.len()
    );
    let surrogate = if select.methods.contains(&SelectMethod::CadsE) {
        Some(get_surrogate(cfg, &ctx, layout, global)?)
    } else {
        None
    };

    for &method in &select.methods {
        for (init_idx, &init) in select.inits.iter().enumerate() {
            for &seed in &cfg.seeds {
                let cell = select_cell_name(method.name(), init, seed);
                let timer = CellTimer::start();
                let mut ledger = Ledger::new(Some(cell_declared_budget(select, cfg, method)));
                let produced = guard_cell(&cell, failures, || {
                    let (value, _) = run_cell(
                        cfg,
                        select,
                        &ctx,
                        surrogate.as_ref(),
                        method,
                        init,
                        init_idx,
                        seed,
                        layout,
                        &cell,
                        &mut ledger,
                    )?;
                    ledger.assert_within()?;
                    Ok(vec![SummaryRow {
                        method: method.name().into(),
                        budget: select.budget,
                        init: fmt_init(init),
                        seed,
                        metric: "test_accuracy".into(),
                        value,
                        samples_used: ledger.total(),
                        wall_ms: timer.wall_ms(),
                    }])
                });
                if let Some(mut r) = produced {
                    rows.append(&mut r);
                }
                global.merge(&cell, ledger);
            }
        }
    }
    Ok(())
}

fn cell_declared_budget(select: &SelectSection, cfg: &ExperimentConfig, method: SelectMethod) -> u64 {
    // evaluation charging (when enabled) adds at most one fractional pass
    // over the test pool per final training
    let eval = (select.eval_charge_fraction * select.test_n as f64).ceil() as u64;
    let c = select.budget + eval;
    let k = cfg.cads.k_subsets as u64;
    match method {
        SelectMethod::Random => c,
        SelectMethod::BilevelCads => select.bilevel_outer_iters as u64 * k * c + c,
        SelectMethod::CadsE => {
            let per_pass = select.train_n.min(cfg.cads.ltrn_cap) as u64;
            select.cads_e_outer_iters as u64 * k * per_pass + c
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    cfg: &ExperimentConfig,
    select: &SelectSection,
    ctx: &SelectContext,
    surrogate: Option<&SurrogateFit>,
    method: SelectMethod,
    init: f64,
    init_idx: usize,
    seed: u64,
    layout: &OutputLayout,
    cell: &str,
    ledger: &mut Ledger,
) -> Result<(f64, u64)> {
    let n = ctx.train_pool.len();
    match method {
        SelectMethod::Random => {
            let size = ((init * n as f64).round() as usize).clamp(1, n);
            let mut rng = crate::rng::stream(seed, "random-subset", init_idx as u64);
            let mut pool: Vec<u32> = (0..n as u32).collect();
            for i in 0..size {
                let j = rand::Rng::gen_range(&mut rng, i..pool.len());
                pool.swap(i, j);
            }
            pool.truncate(size);
            decode_and_evaluate(ctx, select, pool, seed, init_idx as u64, ledger)
        }
        SelectMethod::BilevelCads => {
            let policy0 = BernoulliPolicy::uniform(n, init);
            let run_seed = crate::rng::child_seed(seed, "bilevel-run", init_idx as u64);
            let cads_cfg = cfg.cads.build(select.bilevel_outer_iters, select.budget, run_seed);
            let outcome = bilevel_cads_run(
                &ctx.train_pool,
                &ctx.val_pool,
                &policy0,
                &cads_cfg,
                &inner_train_cfg(select, 0),
                &conv_init(select),
                ledger,
            )?;
            layout.write_trace(cell, &outcome.trace.records)?;
            layout.write_policy(cell, &outcome.policy)?;
            let indices = decode_mask(
                &outcome.policy,
                select.decode,
                crate::rng::child_seed(run_seed, "decode", 0),
            )?;
            decode_and_evaluate(ctx, select, indices, seed, 100 + init_idx as u64, ledger)
        }
        SelectMethod::CadsE => {
            let fit = surrogate.expect("surrogate fitted before cads-e cells");
            let policy0 = BernoulliPolicy::uniform(n, init);
            let run_seed = crate::rng::child_seed(seed, "cads-e-run", init_idx as u64);
            let cads_cfg = cfg.cads.build(select.cads_e_outer_iters, select.budget, run_seed);
            let outcome = cads_e_run(
                &ctx.train_pool,
                &ctx.val_pool,
                &policy0,
                fit,
                &cads_cfg,
                LossKind::CrossEntropy,
                &conv_init(select),
                ledger,
            )?;
            layout.write_trace(cell, &outcome.trace.records)?;
            layout.write_policy(cell, &outcome.policy)?;
            if select.save_checkpoints {
                crate::nn::checkpoint::save(
                    &outcome.theta,
                    &layout.policy_path(&format!("{cell}_theta")),
                )?;
            }
            let indices = decode_mask(
                &outcome.policy,
                select.decode,
                crate::rng::child_seed(run_seed, "decode", 0),
            )?;
            decode_and_evaluate(ctx, select, indices, seed, 200 + init_idx as u64, ledger)
        }
    }
}
