//! Heterogeneous-source experiment: a synthetic class-cluster corpus is split
//! into equal sources with graded label noise; selection methods pick how
//! much of each source to train on under each compute budget.

use super::config::{ExperimentConfig, SourceMethod, SourcesSection};
use super::{fmt_init, guard_cell, CellTimer, OutputLayout, SummaryRow};
use crate::budget::{ComputeBudget, Ledger};
use crate::cads::cads_s_run;
use crate::data::{gen_blobs, inject_label_noise, LabeledDataset, SourcePartition};
use crate::error::Result;
use crate::nn::{LossKind, Metric, MlpParams, ModelParams};
use crate::policy::{ratio_to_counts, subsample_sources, RatioVector, TruncGaussPolicy};
use crate::surrogate::{collect_probes, fit_surrogate, probes_to_csv, ProbeRunner, SurrogateFit, SurrogateKind};
use crate::trainer::{train_on_subset, MaskedView, OptimizerKind, TrainConfig};

pub struct SourcesContext {
    pub train: LabeledDataset, // noisy, source_id set
    pub val: LabeledDataset,   // clean
    pub test: LabeledDataset,  // clean
    pub source_indices: Vec<Vec<u32>>,
    pub group_sizes: Vec<usize>,
}

pub fn build_sources_context(p: &SourcesSection) -> Result<SourcesContext> {
    let n_sources = p.noise_levels.len();
    let train_n = n_sources * p.per_source;
    let total = train_n + p.val_n + p.test_n;
    let all = gen_blobs(total, p.classes, p.dim, p.separation, p.data_seed)?;
    // interleaved labels are balanced within any slice
    let idx: Vec<u32> = (0..total as u32).collect();
    let clean_train = all.subset(&idx[..train_n]);
    let val = all.subset(&idx[train_n..train_n + p.val_n]);
    let test = all.subset(&idx[train_n + p.val_n..]);

    let partition = SourcePartition {
        group_sizes: vec![p.per_source; n_sources],
        noise_levels: p.noise_levels.clone(),
    };
    let source_id: Vec<u32> = (0..train_n).map(|i| (i / p.per_source) as u32).collect();
    let grouped = LabeledDataset::new(
        clean_train.features.clone(),
        clean_train.labels.clone(),
        Some(source_id),
    )?;
    let train = inject_label_noise(&grouped, &partition, crate::rng::child_seed(p.data_seed, "noise", 0))?;
    let source_indices: Vec<Vec<u32>> =
        (0..n_sources as u32).map(|j| train.source_indices(j)).collect();
    let group_sizes = partition.group_sizes.clone();
    Ok(SourcesContext { train, val, test, source_indices, group_sizes })
}

fn mlp_init(p: &SourcesSection) -> impl Fn(u64) -> ModelParams + '_ {
    move |seed| {
        let mut dims = vec![p.dim];
        dims.extend(&p.hidden);
        dims.push(p.classes);
        ModelParams::Mlp(MlpParams::new_seeded(&dims, seed))
    }
}

fn train_cfg(p: &SourcesSection, shuffle_seed: u64) -> TrainConfig {
    TrainConfig {
        batch_size: p.batch_size,
        lr: p.lr,
        optimizer: OptimizerKind::Adam,
        loss_kind: LossKind::CrossEntropy,
        shuffle_seed,
        eval_charge_fraction: 0.0,
    }
}

fn train_and_test(
    ctx: &SourcesContext,
    p: &SourcesSection,
    indices: Vec<u32>,
    budget: u64,
    seed: u64,
    tag: u64,
    ledger: &mut Ledger,
) -> Result<f64> {
    let view = MaskedView::from_indices(&ctx.train, indices)?;
    let mut b = ComputeBudget::new(budget);
    let outcome = train_on_subset(
        &mlp_init(p)(crate::rng::child_seed(seed, "sources-train-init", tag)),
        &view,
        &mut b,
        &train_cfg(p, crate::rng::child_seed(seed, "sources-train-shuffle", tag)),
        Some((&ctx.test, Metric::Accuracy)),
    )?;
    ledger.record(format!("train[tag={tag}]"), outcome.samples_used);
    Ok(outcome.val_metric.expect("test metric requested"))
}

fn surrogate_for_budget(
    cfg: &ExperimentConfig,
    ctx: &SourcesContext,
    budget: u64,
    layout: &OutputLayout,
    global: &mut Ledger,
) -> Result<SurrogateFit> {
    let p = &cfg.sources;
    let mut ledger = Ledger::new(Some(
        (cfg.surrogate.fractions.len() * cfg.surrogate.replicates) as u64 * budget,
    ));
    let init = mlp_init(p);
    let runner = ProbeRunner {
        dataset: &ctx.train,
        budget_per_probe: budget,
        train_cfg: train_cfg(p, 0),
        init: &init,
    };
    let probes = collect_probes(
        &runner,
        &cfg.surrogate.fractions,
        cfg.surrogate.size_floor,
        cfg.surrogate.replicates,
        crate::rng::child_seed(p.data_seed, "sources-probes", budget),
        &mut ledger,
    )?;
    ledger.assert_within()?;
    let fit = fit_surrogate(&probes, SurrogateKind::CubicSpline)?;
    let name = format!("sources_surrogate_c{budget}");
    std::fs::write(layout.fit_path(&name), fit.to_json()?)?;
    probes_to_csv(&probes, std::fs::File::create(layout.fit_aux_path(&name, "probes.csv"))?)?;
    global.merge(&format!("surrogate_c{budget}"), ledger);
    Ok(fit)
}

pub(crate) fn run(
    cfg: &ExperimentConfig,
    layout: &OutputLayout,
    rows: &mut Vec<SummaryRow>,
    failures: &mut Vec<(String, String)>,
    global: &mut Ledger,
) -> Result<()> {
    let p = &cfg.sources;
    let ctx = build_sources_context(p)?;
    let n_sources = ctx.group_sizes.len();

    for &budget in &p.budgets {
        let surrogate = if p.methods.contains(&SourceMethod::CadsS) {
            Some(surrogate_for_budget(cfg, &ctx, budget, layout, global)?)
        } else {
            None
        };
        for &method in &p.methods {
            for &seed in &cfg.seeds {
                let cell = format!("{}_c{budget}_seed{seed}", method.name());
                let timer = CellTimer::start();
                let declared = match method {
                    SourceMethod::BestSource => n_sources as u64 * budget,
                    SourceMethod::CadsS => {
                        let cap = p.per_source as u64 * n_sources as u64;
                        p.outer_iters as u64
                            * cfg.cads.k_subsets as u64
                            * cap.min(cfg.cads.ltrn_cap as u64)
                            + budget
                    }
                    _ => budget,
                };
                let mut ledger = Ledger::new(Some(declared));
                let produced = guard_cell(&cell, failures, || {
                    let value = run_cell(
                        cfg, p, &ctx, surrogate.as_ref(), method, budget, seed, layout, &cell,
                        &mut ledger,
                    )?;
                    ledger.assert_within()?;
                    Ok(vec![SummaryRow {
                        method: method.name().into(),
                        budget,
                        init: fmt_init(p.uniform_ratio),
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

#[allow(clippy::too_many_arguments)]
fn run_cell(
    cfg: &ExperimentConfig,
    p: &SourcesSection,
    ctx: &SourcesContext,
    surrogate: Option<&SurrogateFit>,
    method: SourceMethod,
    budget: u64,
    seed: u64,
    layout: &OutputLayout,
    cell: &str,
    ledger: &mut Ledger,
) -> Result<f64> {
    match method {
        SourceMethod::Full => {
            let all: Vec<u32> = (0..ctx.train.len() as u32).collect();
            train_and_test(ctx, p, all, budget, seed, 0, ledger)
        }
        SourceMethod::Uniform => {
            let ratios = RatioVector(vec![p.uniform_ratio; ctx.group_sizes.len()]);
            let counts = ratio_to_counts(&ratios, &ctx.group_sizes)?;
            let mut rng = crate::rng::stream(seed, "uniform-pick", budget);
            let indices = subsample_sources(&ctx.source_indices, &counts, &mut rng)?;
            train_and_test(ctx, p, indices, budget, seed, 1, ledger)
        }
        SourceMethod::BestSource => {
            // pick by validation accuracy, report test accuracy of the winner
            let mut best: Option<(f64, f64)> = None; // (val, test)
            for (j, indices) in ctx.source_indices.iter().enumerate() {
                let view = MaskedView::from_indices(&ctx.train, indices.clone())?;
                let mut b = ComputeBudget::new(budget);
                let outcome = train_on_subset(
                    &mlp_init(p)(crate::rng::child_seed(seed, "best-source-init", j as u64)),
                    &view,
                    &mut b,
                    &train_cfg(p, crate::rng::child_seed(seed, "best-source-shuffle", j as u64)),
                    Some((&ctx.val, Metric::Accuracy)),
                )?;
                ledger.record(format!("best-source[{j}]"), outcome.samples_used);
                let val_acc = outcome.val_metric.expect("val requested");
                let test_acc = outcome.params.evaluate(&ctx.test, Metric::Accuracy)?;
                if best.map_or(true, |(v, _)| val_acc > v) {
                    best = Some((val_acc, test_acc));
                }
            }
            Ok(best.expect("at least one source").1)
        }
        SourceMethod::CadsS => {
            let fit = surrogate.expect("surrogate fitted before cads-s cells");
            let policy0 = TruncGaussPolicy::new(
                vec![p.uniform_ratio; ctx.group_sizes.len()],
                p.sigma0,
            )?;
            let run_seed = crate::rng::child_seed(seed, "cads-s-run", budget);
            let cads_cfg = cfg.cads.build(p.outer_iters, budget, run_seed);
            let outcome = cads_s_run(
                &ctx.train,
                &ctx.val,
                &policy0,
                fit,
                &cads_cfg,
                LossKind::CrossEntropy,
                &mlp_init(p),
                ledger,
            )?;
            layout.write_trace(cell, &outcome.trace.records)?;
            layout.write_policy(cell, &outcome.policy)?;
            // decode: materialize the mean ratios and retrain fresh
            let ratios = RatioVector(outcome.policy.means().to_vec());
            let counts = ratio_to_counts(&ratios, &ctx.group_sizes)?;
            let mut rng = crate::rng::stream(run_seed, "cads-s-decode", 0);
            let indices = subsample_sources(&ctx.source_indices, &counts, &mut rng)?;
            train_and_test(ctx, p, indices, budget, seed, 2, ledger)
        }
    }
}
