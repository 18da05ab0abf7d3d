//! Estimator studies: surrogate fit comparison and sampling efficiency, plus
//! the counted-cost comparison of the bilevel baseline against the relaxed
//! optimizer.

use super::config::ExperimentConfig;
use super::select::build_select_context;
use super::{fmt_init, guard_cell, CellTimer, OutputLayout, SummaryRow};
use crate::budget::Ledger;
use crate::cads::{bilevel_cads_run, cads_e_run, cost_model};
use crate::data::gen_blobs;
use crate::error::Result;
use crate::nn::{ConvNetParams, LossKind, MlpParams, ModelParams, MNIST_MEAN, MNIST_STD};
use crate::policy::{BernoulliPolicy, EPS_S};
use crate::surrogate::{
    collect_probes, fit_surrogate, heldout_mse, heldout_probes, probe_efficiency_table,
    probe_size_range, probes_to_csv, ProbeRunner, SurrogateKind,
};
use crate::trainer::{OptimizerKind, TrainConfig};

pub struct SurrogateStudyOutcome {
    pub spline_mse: f64,
    pub linear_mse: f64,
    pub efficiency: Vec<(usize, f64)>,
}

/// Fit both surrogate kinds on the default probe set, score them on one
/// shared held-out set, and run the probe-count efficiency sweep.
pub fn surrogate_study(
    cfg: &ExperimentConfig,
    seed: u64,
    layout: Option<&OutputLayout>,
    ledger: &mut Ledger,
) -> Result<SurrogateStudyOutcome> {
    let select = &cfg.select;
    let ctx = build_select_context(select)?;
    let normalize = select.normalize.then_some((MNIST_MEAN, MNIST_STD));
    let fast = select.fast_math;
    let init = move |s: u64| {
        ModelParams::Conv(ConvNetParams::new_seeded(10, normalize, s).with_fast_math(fast))
    };
    let runner = ProbeRunner {
        dataset: &ctx.train_pool,
        budget_per_probe: select.budget,
        train_cfg: TrainConfig {
            batch_size: select.batch_size,
            lr: select.lr,
            optimizer: OptimizerKind::Adam,
            loss_kind: LossKind::CrossEntropy,
            shuffle_seed: 0,
            eval_charge_fraction: 0.0,
        },
        init: &init,
    };

    let probes = collect_probes(
        &runner,
        &cfg.surrogate.fractions,
        cfg.surrogate.size_floor,
        cfg.surrogate.replicates,
        crate::rng::child_seed(seed, "study-probes", 0),
        ledger,
    )?;
    let range = probe_size_range(ctx.train_pool.len(), cfg.surrogate.size_floor);
    let heldout = heldout_probes(
        &runner,
        cfg.study.heldout,
        range,
        crate::rng::child_seed(seed, "study-heldout", 0),
        ledger,
    )?;
    let spline = fit_surrogate(&probes, SurrogateKind::CubicSpline)?;
    let linear = fit_surrogate(&probes, SurrogateKind::Linear)?;
    let spline_mse = heldout_mse(&spline, &heldout);
    let linear_mse = heldout_mse(&linear, &heldout);
    let efficiency = probe_efficiency_table(
        &runner,
        &cfg.study.k_values,
        &heldout,
        range,
        crate::rng::child_seed(seed, "study-efficiency", 0),
        ledger,
    )?;

    if let Some(layout) = layout {
        std::fs::write(layout.fit_path("study_spline"), spline.to_json()?)?;
        std::fs::write(layout.fit_path("study_linear"), linear.to_json()?)?;
        probes_to_csv(&probes, std::fs::File::create(layout.fit_aux_path("study", "probes.csv"))?)?;
        probes_to_csv(
            &heldout,
            std::fs::File::create(layout.fit_aux_path("study", "heldout.csv"))?,
        )?;
        let mut w = csv::Writer::from_writer(std::fs::File::create(
            layout.fit_aux_path("study", "efficiency.csv"),
        )?);
        w.write_record(["k_points", "heldout_mse"]).map_err(super::csv_io)?;
        for (k, mse) in &efficiency {
            w.write_record([k.to_string(), mse.to_string()]).map_err(super::csv_io)?;
        }
        w.flush()?;
    }
    Ok(SurrogateStudyOutcome { spline_mse, linear_mse, efficiency })
}

pub(crate) fn run_surrogate_study(
    cfg: &ExperimentConfig,
    layout: &OutputLayout,
    rows: &mut Vec<SummaryRow>,
    failures: &mut Vec<(String, String)>,
    global: &mut Ledger,
) -> Result<()> {
    for &seed in &cfg.seeds {
        let cell = format!("surrogate-study_seed{seed}");
        let timer = CellTimer::start();
        let mut ledger = Ledger::new(None);
        let produced = guard_cell(&cell, failures, || {
            let out = surrogate_study(cfg, seed, Some(layout), &mut ledger)?;
            let mut rows = vec![
                study_row("surrogate-spline", seed, "heldout_mse", out.spline_mse, &ledger, &timer, cfg),
                study_row("surrogate-linear", seed, "heldout_mse", out.linear_mse, &ledger, &timer, cfg),
            ];
            for (k, mse) in &out.efficiency {
                rows.push(study_row(
                    "probe-efficiency",
                    seed,
                    &format!("heldout_mse_k{k}"),
                    *mse,
                    &ledger,
                    &timer,
                    cfg,
                ));
            }
            Ok(rows)
        });
        if let Some(mut r) = produced {
            rows.append(&mut r);
        }
        global.merge(&cell, ledger);
    }
    Ok(())
}

fn study_row(
    method: &str,
    seed: u64,
    metric: &str,
    value: f64,
    ledger: &Ledger,
    timer: &CellTimer,
    cfg: &ExperimentConfig,
) -> SummaryRow {
    SummaryRow {
        method: method.into(),
        budget: cfg.select.budget,
        init: "-".into(),
        seed,
        metric: metric.into(),
        value,
        samples_used: ledger.total(),
        wall_ms: timer.wall_ms(),
    }
}

pub struct CostMeasurement {
    pub n_epochs: u64,
    pub measured_ratio: f64,
    pub formula_ratio: f64,
    pub rel_err: f64,
}

/// Measure sample-usages per outer step for both optimizers on a small
/// instance and compare their ratio against the closed-form speedup.
pub fn cost_measurement(
    cfg: &ExperimentConfig,
    n_epochs: u64,
    seed: u64,
    ledger_out: &mut Ledger,
) -> Result<CostMeasurement> {
    let p = &cfg.cost;
    let n = p.dataset_n;
    let budget_c = n_epochs * n as u64;
    let total = n + 64 + 64;
    let all = gen_blobs(total, p.classes, p.dim, 3.0, crate::rng::child_seed(seed, "cost-data", 0))?;
    let idx: Vec<u32> = (0..total as u32).collect();
    let train = all.subset(&idx[..n]);
    let val = all.subset(&idx[n..n + 64]);

    let mut dims = vec![p.dim];
    dims.extend(&p.hidden);
    dims.push(p.classes);
    let dims_for_init = dims.clone();
    let init = move |s: u64| ModelParams::Mlp(MlpParams::new_seeded(&dims_for_init, s));
    let train_cfg = TrainConfig {
        batch_size: 32,
        lr: 5e-3,
        optimizer: OptimizerKind::Adam,
        loss_kind: LossKind::CrossEntropy,
        shuffle_seed: 0,
        eval_charge_fraction: 0.0,
    };
    // subsets must track the full dataset for the closed form's one-pass cost
    let policy0 = BernoulliPolicy::uniform(n, 1.0 - EPS_S);

    // bilevel consumption over a few measured outer steps
    let mut bilevel_ledger = Ledger::new(None);
    let bi_cfg = crate::cads::CadsConfig {
        alpha: cfg.cads.alpha,
        k_subsets: p.k_subsets,
        lr_theta: 5e-3,
        lr_s: 5e-2,
        outer_iters: p.measure_iters,
        variance_reduction: true,
        grad_clip_norm: Some(5.0),
        seed: crate::rng::child_seed(seed, "cost-bilevel", n_epochs),
        budget_c,
        ltrn_cap: usize::MAX / 2,
        val_batch: None,
        common_inner_seeds: false,
        reset_theta_each_iter: false,
    };
    bilevel_cads_run(&train, &val, &policy0, &bi_cfg, &train_cfg, &init, &mut bilevel_ledger)?;
    let bilevel_per_step = bilevel_ledger.total() as f64 / p.measure_iters as f64;

    // probe collection = the one-time estimator cost
    let mut probe_ledger = Ledger::new(None);
    let runner = ProbeRunner {
        dataset: &train,
        budget_per_probe: budget_c,
        train_cfg: train_cfg.clone(),
        init: &init,
    };
    let probes = collect_probes(
        &runner,
        &crate::surrogate::DEFAULT_FRACTIONS,
        crate::surrogate::DEFAULT_SIZE_FLOOR.min(n / 4),
        1,
        crate::rng::child_seed(seed, "cost-probes", n_epochs),
        &mut probe_ledger,
    )?;
    let fit = fit_surrogate(&probes, SurrogateKind::CubicSpline)?;

    // relaxed optimizer consumption over M outer steps
    let mut cads_ledger = Ledger::new(None);
    let cads_cfg = crate::cads::CadsConfig {
        outer_iters: p.outer_m,
        seed: crate::rng::child_seed(seed, "cost-cads-e", n_epochs),
        ..bi_cfg.clone()
    };
    cads_e_run(
        &train,
        &val,
        &policy0,
        &fit,
        &cads_cfg,
        LossKind::CrossEntropy,
        &init,
        &mut cads_ledger,
    )?;
    let cads_per_step = cads_ledger.total() as f64 / p.outer_m as f64
        + probe_ledger.total() as f64 / p.outer_m as f64;

    let measured_ratio = bilevel_per_step / cads_per_step;
    let formula_ratio = cost_model(p.k_subsets as f64, n_epochs as f64, p.outer_m as f64, true);
    let rel_err = (measured_ratio - formula_ratio).abs() / formula_ratio;

    ledger_out.merge(&format!("bilevel_n{n_epochs}"), bilevel_ledger);
    ledger_out.merge(&format!("probes_n{n_epochs}"), probe_ledger);
    ledger_out.merge(&format!("cads_n{n_epochs}"), cads_ledger);
    Ok(CostMeasurement { n_epochs, measured_ratio, formula_ratio, rel_err })
}

pub(crate) fn run_cost_study(
    cfg: &ExperimentConfig,
    layout: &OutputLayout,
    rows: &mut Vec<SummaryRow>,
    failures: &mut Vec<(String, String)>,
    global: &mut Ledger,
) -> Result<()> {
    let seed = cfg.seeds[0];
    let mut table = Vec::new();
    for &n_epochs in &cfg.cost.n_epochs {
        let cell = format!("cost-study_n{n_epochs}");
        let timer = CellTimer::start();
        let mut ledger = Ledger::new(None);
        let produced = guard_cell(&cell, failures, || {
            let m = cost_measurement(cfg, n_epochs, seed, &mut ledger)?;
            let out = vec![
                SummaryRow {
                    method: "cost-model".into(),
                    budget: n_epochs * cfg.cost.dataset_n as u64,
                    init: fmt_init(0.0),
                    seed,
                    metric: format!("speedup_measured_n{n_epochs}"),
                    value: m.measured_ratio,
                    samples_used: ledger.total(),
                    wall_ms: timer.wall_ms(),
                },
                SummaryRow {
                    method: "cost-model".into(),
                    budget: n_epochs * cfg.cost.dataset_n as u64,
                    init: fmt_init(0.0),
                    seed,
                    metric: format!("speedup_formula_n{n_epochs}"),
                    value: m.formula_ratio,
                    samples_used: ledger.total(),
                    wall_ms: timer.wall_ms(),
                },
            ];
            table.push(m);
            Ok(out)
        });
        if let Some(mut r) = produced {
            rows.append(&mut r);
        }
        global.merge(&cell, ledger);
    }
    let mut w =
        csv::Writer::from_writer(std::fs::File::create(layout.root.join("cost_study.csv"))?);
    w.write_record(["n_epochs", "measured_speedup", "formula_speedup", "rel_err"])
        .map_err(super::csv_io)?;
    for m in &table {
        w.write_record([
            m.n_epochs.to_string(),
            m.measured_ratio.to_string(),
            m.formula_ratio.to_string(),
            m.rel_err.to_string(),
        ])
        .map_err(super::csv_io)?;
    }
    w.flush()?;
    Ok(())
}
