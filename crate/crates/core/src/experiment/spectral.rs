//! Spectral-regime experiment: train one model on low-frequency data and one
//! on high-frequency data under the same step budget, logging validation MSE
//! after every update.

use super::config::ExperimentConfig;
use super::{fmt_init, guard_cell, CellTimer, OutputLayout, SummaryRow};
use crate::budget::{ComputeBudget, Ledger};
use crate::data::{gen_spectral, LabeledDataset, SpectralKind, SpectralSpec};
use crate::error::Result;
use crate::nn::{LossKind, Metric, MlpParams, ModelParams};
use crate::trainer::{train_with_observer, MaskedView, OptimizerKind, TrainConfig};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct SpectralStep {
    pub step: usize,
    pub val_mse_low: f64,
    pub val_mse_high: f64,
}

#[derive(Debug, Clone)]
pub struct SpectralRun {
    pub seed: u64,
    pub steps: Vec<SpectralStep>,
}

/// Train the low- and high-frequency models for one seed.
pub fn run_spectral_seed(cfg: &ExperimentConfig, seed: u64, ledger: &mut Ledger) -> Result<SpectralRun> {
    let p = &cfg.spectral;
    let low = gen_spectral(&SpectralSpec {
        kind: SpectralKind::Low,
        n: p.n,
        noise_sigma: p.noise_sigma,
        x_range: p.x_range,
        seed: crate::rng::child_seed(seed, "spectral-low", 0),
    })?;
    let high = gen_spectral(&SpectralSpec {
        kind: SpectralKind::High,
        n: p.n,
        noise_sigma: p.noise_sigma,
        x_range: p.x_range,
        seed: crate::rng::child_seed(seed, "spectral-high", 0),
    })?;
    // Generalization is tracked against the noiseless target curve.
    let val = gen_spectral(&SpectralSpec {
        kind: SpectralKind::High,
        n: p.val_n,
        noise_sigma: 0.0,
        x_range: p.x_range,
        seed: crate::rng::child_seed(seed, "spectral-val", 0),
    })?;

    let series_low = train_logged(p, &low, &val, seed, 0, ledger)?;
    let series_high = train_logged(p, &high, &val, seed, 1, ledger)?;
    let steps = series_low
        .into_iter()
        .zip(series_high)
        .enumerate()
        .map(|(i, (lo, hi))| SpectralStep { step: i + 1, val_mse_low: lo, val_mse_high: hi })
        .collect();
    Ok(SpectralRun { seed, steps })
}

fn train_logged(
    p: &super::config::SpectralSection,
    train: &LabeledDataset,
    val: &LabeledDataset,
    seed: u64,
    which: u64,
    ledger: &mut Ledger,
) -> Result<Vec<f64>> {
    let mut dims = vec![1usize];
    dims.extend(&p.hidden);
    dims.push(1);
    // Both models share one initialization so the early-phase comparison
    // reflects the data, not init luck, and the regression head starts at
    // zero so step one begins from the data-variance floor.
    let mut mlp = MlpParams::new_seeded(&dims, crate::rng::child_seed(seed, "spectral-init", 0));
    let head = mlp.weights().len() - 1;
    for v in mlp.weights_mut()[head].data_mut() {
        *v = 0.0;
    }
    let model = ModelParams::Mlp(mlp);
    let view = MaskedView::full(train);
    let budget_total = (p.steps * p.batch_size) as u64;
    let mut budget = ComputeBudget::new(budget_total);
    let cfg = TrainConfig {
        batch_size: p.batch_size,
        lr: p.lr,
        optimizer: OptimizerKind::Adam,
        loss_kind: LossKind::Mse,
        shuffle_seed: crate::rng::child_seed(seed, "spectral-shuffle", which),
        eval_charge_fraction: 0.0,
    };
    let mut series = Vec::with_capacity(p.steps);
    let mut eval_err = None;
    train_with_observer(&model, &view, &mut budget, &cfg, None, &mut |ev| {
        if eval_err.is_none() {
            match ev.params.evaluate(val, Metric::Loss(LossKind::Mse)) {
                Ok(mse) => series.push(mse),
                Err(e) => eval_err = Some(e),
            }
        }
    })?;
    if let Some(e) = eval_err {
        return Err(e);
    }
    ledger.record(format!("spectral[model={which},seed={seed}]"), budget_total);
    Ok(series)
}

pub(crate) fn run(
    cfg: &ExperimentConfig,
    layout: &OutputLayout,
    rows: &mut Vec<SummaryRow>,
    failures: &mut Vec<(String, String)>,
    global: &mut Ledger,
) -> Result<()> {
    for &seed in &cfg.seeds {
        let cell = format!("spectral_seed{seed}");
        let timer = CellTimer::start();
        let mut ledger = Ledger::new(Some(2 * (cfg.spectral.steps * cfg.spectral.batch_size) as u64));
        let produced = guard_cell(&cell, failures, || {
            let run = run_spectral_seed(cfg, seed, &mut ledger)?;
            ledger.assert_within()?;
            layout.write_trace(&cell, &run.steps)?;
            let last = run.steps.last().expect("at least one step");
            let budget = ledger.declared().unwrap_or(0);
            Ok(vec![
                SummaryRow {
                    method: "spectral-low".into(),
                    budget,
                    init: fmt_init(0.0),
                    seed,
                    metric: "final_val_mse".into(),
                    value: last.val_mse_low,
                    samples_used: ledger.total() / 2,
                    wall_ms: timer.wall_ms(),
                },
                SummaryRow {
                    method: "spectral-high".into(),
                    budget,
                    init: fmt_init(0.0),
                    seed,
                    metric: "final_val_mse".into(),
                    value: last.val_mse_high,
                    samples_used: ledger.total() / 2,
                    wall_ms: timer.wall_ms(),
                },
            ])
        });
        if let Some(mut r) = produced {
            rows.append(&mut r);
        }
        global.merge(&cell, ledger);
    }
    Ok(())
}
