//! Budget-metered training on a masked subset.
//!
//! Mini-batches cycle over shuffled passes of the subset; each training
//! example charges one sample-usage. The run stops exactly when the budget is
//! spent, truncating the final batch to the remaining allowance. Fractional
//! pass counts fall out of the accounting; epochs are never rounded.

use crate::budget::{ChargeOutcome, ComputeBudget};
use crate::data::{LabeledDataset, Labels};
use crate::error::{CoreError, Result};
use crate::nn::{adam_step, sgd_step, AdamState, LossKind, Metric, ModelParams};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub loss_kind: LossKind,
    pub shuffle_seed: u64,
    /// Fraction of a forward-only evaluation pass charged as training cost
    /// (0 = evaluation is free; used for accounting sensitivity studies).
    #[serde(default)]
    pub eval_charge_fraction: f64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(CoreError::config("batch_size must be >= 1"));
        }
        if self.lr <= 0.0 {
            return Err(CoreError::config("learning rate must be positive"));
        }
        Ok(())
    }
}

/// A subset of a dataset, by index.
#[derive(Debug, Clone)]
pub struct MaskedView<'a> {
    base: &'a LabeledDataset,
    indices: Vec<u32>,
}

impl<'a> MaskedView<'a> {
    pub fn from_indices(base: &'a LabeledDataset, indices: Vec<u32>) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i as usize >= base.len()) {
            return Err(CoreError::domain(format!(
                "index {bad} out of range for dataset of {}",
                base.len()
            )));
        }
        Ok(MaskedView { base, indices })
    }

    pub fn from_mask(base: &'a LabeledDataset, mask: &[bool]) -> Result<Self> {
        if mask.len() != base.len() {
            return Err(CoreError::config("mask length != dataset size"));
        }
        let indices = mask
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i as u32))
            .collect();
        Ok(MaskedView { base, indices })
    }

    pub fn full(base: &'a LabeledDataset) -> Self {
        MaskedView { base, indices: (0..base.len() as u32).collect() }
    }

    pub fn size(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn base(&self) -> &'a LabeledDataset {
        self.base
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Mean training loss over the last completed pass through the subset
    /// (batch-size-weighted running mean). If the budget ends before one full
    /// pass, the partial pass's mean is reported instead.
    pub final_train_loss: f64,
    pub val_metric: Option<f64>,
    pub params: ModelParams,
    pub samples_used: u64,
    /// Evaluation cost in sample-usages under `eval_charge_fraction` (zero
    /// by default); callers decide which ledger it lands in.
    pub eval_samples_used: u64,
}

/// Observer hook, called after every parameter update.
pub struct StepEvent<'a> {
    pub updates: usize,
    pub samples_used: u64,
    pub params: &'a ModelParams,
}

pub fn train_on_subset(
    params0: &ModelParams,
    view: &MaskedView,
    budget: &mut ComputeBudget,
    cfg: &TrainConfig,
    val: Option<(&LabeledDataset, Metric)>,
) -> Result<TrainOutcome> {
    train_with_observer(params0, view, budget, cfg, val, &mut |_| {})
}

pub fn train_with_observer(
    params0: &ModelParams,
    view: &MaskedView,
    budget: &mut ComputeBudget,
    cfg: &TrainConfig,
    val: Option<(&LabeledDataset, Metric)>,
    observer: &mut dyn FnMut(StepEvent),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if view.size() == 0 {
        return Err(CoreError::EmptySubset("cannot train on an empty subset".into()));
    }
    if budget.total() == 0 {
        return Err(CoreError::Budget("training budget is zero".into()));
    }
    if budget.is_exhausted() {
        return Err(CoreError::Budget("training budget already exhausted".into()));
    }

    let consumed_before = budget.consumed();
    let mut params = params0.clone();
    let mut adam = match cfg.optimizer {
        OptimizerKind::Adam => Some(AdamState::for_params(&params)),
        OptimizerKind::Sgd => None,
    };
    let mut rng = crate::rng::stream(cfg.shuffle_seed, "train-shuffle", 0);
    let mut order = view.indices().to_vec();

    let mut scratch_feats;
    let mut last_pass: Option<f64> = None;
    let mut pass_sum = 0.0;
    let mut pass_count = 0usize;
    let mut updates = 0usize;

    'training: loop {
        order.shuffle(&mut rng);
        let mut pos = 0usize;
        while pos < order.len() {
            let remaining = budget.remaining();
            if remaining == 0 {
                break 'training;
            }
            let take = cfg
                .batch_size
                .min(order.len() - pos)
                .min(remaining as usize);
            let batch_idx = &order[pos..pos + take];
            scratch_feats = view.base().features.gather_rows(batch_idx);
            let batch_labels = view.base().labels.gather(batch_idx);
            let (loss, grads) = params.loss_and_grads(&scratch_feats, &batch_labels, cfg.loss_kind)?;
            match (&mut adam, cfg.optimizer) {
                (Some(state), OptimizerKind::Adam) => adam_step(state, &mut params, &grads, cfg.lr),
                _ => sgd_step(&mut params, &grads, cfg.lr),
            }
            let charged = budget.charge(take as u64);
            debug_assert!(matches!(charged, ChargeOutcome::Charged));
            pass_sum += loss * take as f64;
            pass_count += take;
            pos += take;
            updates += 1;
            observer(StepEvent {
                updates,
                samples_used: budget.consumed() - consumed_before,
                params: &params,
            });
        }
        if pos == order.len() {
            last_pass = Some(pass_sum / pass_count as f64);
            pass_sum = 0.0;
            pass_count = 0;
        }
        if budget.is_exhausted() {
            break;
        }
    }

    let final_train_loss = last_pass.unwrap_or(if pass_count > 0 {
        pass_sum / pass_count as f64
    } else {
        f64::NAN
    });
    let mut eval_samples_used = 0;
    let val_metric = match val {
        Some((ds, metric)) => {
            if cfg.eval_charge_fraction > 0.0 {
                eval_samples_used = (cfg.eval_charge_fraction * ds.len() as f64).ceil() as u64;
            }
            Some(params.evaluate(ds, metric)?)
        }
        None => None,
    };
    Ok(TrainOutcome {
        final_train_loss,
        val_metric,
        params,
        samples_used: budget.consumed() - consumed_before,
        eval_samples_used,
    })
}

/// Gather per-batch features/labels for a set of indices.
pub fn gather(ds: &LabeledDataset, indices: &[u32]) -> (crate::linalg::DenseMatrix, Labels) {
    (ds.features.gather_rows(indices), ds.labels.gather(indices))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Labels;
    use crate::linalg::DenseMatrix;
    use crate::nn::MlpParams;

    fn toy_ds(n: usize) -> LabeledDataset {
        let mut rng = crate::rng::stream(5, "toy-ds", 0);
        use rand::Rng;
        let feats: Vec<f64> = (0..n * 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let labels = Labels::Class((0..n).map(|i| (i % 3) as u32).collect());
        LabeledDataset::new(DenseMatrix::from_vec(n, 2, feats).unwrap(), labels, None).unwrap()
    }

    fn toy_cfg(batch: usize) -> TrainConfig {
        TrainConfig {
            batch_size: batch,
            lr: 1e-2,
            optimizer: OptimizerKind::Adam,
            loss_kind: LossKind::CrossEntropy,
            shuffle_seed: 1,
            eval_charge_fraction: 0.0,
        }
    }

    fn toy_model() -> ModelParams {
        ModelParams::Mlp(MlpParams::new_seeded(&[2, 8, 3], 2))
    }

    #[test]
    fn full_epochs_when_budget_divides() {
        let ds = toy_ds(10);
        let view = MaskedView::full(&ds);
        let mut budget = ComputeBudget::new(40);
        let mut steps = 0;
        let out = train_with_observer(&toy_model(), &view, &mut budget, &toy_cfg(5), None, &mut |_| {
            steps += 1;
        })
        .unwrap();
        assert_eq!(out.samples_used, 40); // exactly 4 epochs
        assert_eq!(steps, 8); // 2 batches per epoch
        assert!(budget.is_exhausted());
    }

    #[test]
    fn fractional_epochs_truncate_final_batch() {
        let ds = toy_ds(7);
        let view = MaskedView::full(&ds);
        let mut budget = ComputeBudget::new(20); // 2 passes of 7 + 6
        let out = train_on_subset(&toy_model(), &view, &mut budget, &toy_cfg(7), None).unwrap();
        assert_eq!(out.samples_used, 20);
        assert!(out.final_train_loss.is_finite());
    }

    #[test]
    fn zero_budget_is_error_and_params_untouched() {
        let ds = toy_ds(4);
        let view = MaskedView::full(&ds);
        let model = toy_model();
        let mut budget = ComputeBudget::new(0);
        let err = train_on_subset(&model, &view, &mut budget, &toy_cfg(2), None);
        assert!(matches!(err, Err(CoreError::Budget(_))));
        assert_eq!(budget.consumed(), 0);
    }

    #[test]
    fn exhausted_budget_is_error() {
        let ds = toy_ds(4);
        let view = MaskedView::full(&ds);
        let mut budget = ComputeBudget::new(4);
        budget.charge(4);
        assert!(matches!(
            train_on_subset(&toy_model(), &view, &mut budget, &toy_cfg(2), None),
            Err(CoreError::Budget(_))
        ));
    }

    #[test]
    fn empty_subset_is_error() {
        let ds = toy_ds(4);
        let view = MaskedView::from_mask(&ds, &[false, false, false, false]).unwrap();
        let mut budget = ComputeBudget::new(10);
        assert!(matches!(
            train_on_subset(&toy_model(), &view, &mut budget, &toy_cfg(2), None),
            Err(CoreError::EmptySubset(_))
        ));
    }

    #[test]
    fn eval_charging_counts_fractional_forward_passes() {
        let ds = toy_ds(10);
        let view = MaskedView::full(&ds);
        let mut cfg = toy_cfg(5);
        cfg.eval_charge_fraction = 0.25;
        let mut budget = ComputeBudget::new(20);
        let out = train_on_subset(
            &toy_model(),
            &view,
            &mut budget,
            &cfg,
            Some((&ds, crate::nn::Metric::Accuracy)),
        )
        .unwrap();
        // ceil(0.25 * 10) = 3 sample-usages of evaluation cost
        assert_eq!(out.eval_samples_used, 3);
        assert_eq!(out.samples_used, 20);
    }

    #[test]
    fn identical_inputs_give_bit_identical_outcomes() {
        let ds = toy_ds(12);
        let view = MaskedView::full(&ds);
        let model = toy_model();
        let run = |m: &ModelParams| {
            let mut budget = ComputeBudget::new(30);
            train_on_subset(m, &view, &mut budget, &toy_cfg(5), None).unwrap()
        };
        let a = run(&model);
        let b = run(&model);
        assert_eq!(a.final_train_loss.to_bits(), b.final_train_loss.to_bits());
        assert_eq!(a.params, b.params);
        assert_eq!(a.samples_used, b.samples_used);
    }
}
