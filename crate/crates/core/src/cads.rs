//! Outer-loop subset-selection optimizers.
//!
//! `bilevel_cads_run` is the direct policy-gradient baseline: every sampled
//! mask is trained from scratch under the full compute budget and the
//! validation loss of the result REINFORCE-weights the policy update, costing
//! K x C sample-usages per outer step.
//!
//! `cads_e_run` / `cads_s_run` optimize the penalty-relaxed single-level
//! objective instead: a persistent model theta and the policy are updated
//! jointly, with the budget-achievable loss surrogate l(|m|) standing in for
//! the inner training target. One outer step costs one forward/backward pass
//! per sampled subset.

use crate::budget::{ComputeBudget, Ledger};
use crate::data::LabeledDataset;
use crate::error::{CoreError, Result};
use crate::linalg::l2_norm;
use crate::nn::{AdamState, LossKind, Metric, ModelParams};
use crate::policy::{ratio_to_counts, subsample_sources, BernoulliPolicy, TruncGaussPolicy};
use crate::surrogate::SurrogateFit;
use crate::trainer::{train_on_subset, MaskedView, TrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CadsConfig {
    /// Penalty coefficient on the squared loss discrepancy.
    pub alpha: f64,
    /// Subsets sampled per outer step.
    pub k_subsets: usize,
    pub lr_theta: f64,
    pub lr_s: f64,
    pub outer_iters: usize,
    /// Center rewards with the self-critical baseline.
    pub variance_reduction: bool,
    /// Max norm for the policy gradient; None disables clipping.
    pub grad_clip_norm: Option<f64>,
    pub seed: u64,
    /// Inner compute budget C, in sample-usages.
    pub budget_c: u64,
    /// Subsets larger than this are loss-estimated on a seeded fixed
    /// sub-batch to bound the outer-step cost.
    pub ltrn_cap: usize,
    /// Validation examples per outer step for the model update; None uses
    /// the whole validation set.
    pub val_batch: Option<usize>,
    /// Share the inner initialization/shuffle seeds across the K masks of a
    /// bilevel outer step (paired comparisons; cuts estimator variance).
    pub common_inner_seeds: bool,
    /// Reinitialize theta at every outer step instead of carrying it across
    /// iterations.
    pub reset_theta_each_iter: bool,
}

impl Default for CadsConfig {
    fn default() -> Self {
        CadsConfig {
            alpha: 1.0,
            k_subsets: 5,
            lr_theta: 5e-3,
            lr_s: 5e-2,
            outer_iters: 100,
            variance_reduction: true,
            grad_clip_norm: Some(5.0),
            seed: 0,
            budget_c: 20_000,
            ltrn_cap: 2048,
            val_batch: None,
            common_inner_seeds: false,
            reset_theta_each_iter: false,
        }
    }
}

impl CadsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 {
            return Err(CoreError::config("alpha must be >= 0"));
        }
        if self.k_subsets == 0 || self.outer_iters == 0 {
            return Err(CoreError::config("k_subsets and outer_iters must be >= 1"));
        }
        if self.lr_theta <= 0.0 || self.lr_s <= 0.0 {
            return Err(CoreError::config("learning rates must be positive"));
        }
        if self.budget_c == 0 {
            return Err(CoreError::config("budget_c must be >= 1"));
        }
        Ok(())
    }
}

/// One record per outer iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OuterRecord {
    pub iter: usize,
    pub subset_sizes: Vec<usize>,
    /// Per-subset reward fed to the score estimator (validation loss for the
    /// bilevel baseline, full objective for the relaxed variants).
    pub rewards: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_trn: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_val: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_surr: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub penalty: Option<Vec<f64>>,
    /// Expected subset size (sum of inclusion probabilities) after the update.
    pub s_sum: f64,
    /// Policy snapshot after the update.
    pub s: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratios: Option<Vec<Vec<f64>>>,
    /// Cumulative training sample-usages consumed by this run.
    pub budget_consumed: u64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct OuterTrace {
    pub records: Vec<OuterRecord>,
}

/// L_val + alpha (L_trn - l(|m|))^2 for one sampled subset.
pub fn cads_objective(l_val: f64, l_trn: f64, l_surr: f64, alpha: f64) -> f64 {
    let gap = l_trn - l_surr;
    l_val + alpha * gap * gap
}

/// Model gradient of the averaged objective:
/// grad L_val + mean_k 2 alpha (L_trn_k - l_k) grad L_trn_k.
pub fn cads_grad_theta(
    grad_val: &ModelParams,
    per_subset: &[(f64, f64, ModelParams)],
    alpha: f64,
) -> ModelParams {
    let mut out = grad_val.clone();
    let inv_k = 1.0 / per_subset.len() as f64;
    for (l_trn, l_surr, grad_trn) in per_subset {
        out.axpy(2.0 * alpha * (l_trn - l_surr) * inv_k, grad_trn);
    }
    out
}

/// Self-critical centering: subtract the K-sample mean reward.
pub fn center_rewards(rewards: &[f64]) -> Vec<f64> {
    let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
    rewards.iter().map(|r| r - mean).collect()
}

/// Monte-Carlo score-function gradient, mean_k reward_k * score_k.
///
/// With variance reduction the rewards are centered by the K-sample mean and
/// the result is rescaled by K/(K-1). Centering with the sample included
/// shrinks the expected gradient by exactly (K-1)/K; the rescale (equivalent
/// to a leave-one-out baseline) keeps the estimator unbiased.
pub fn score_weighted_grad(
    scores: &[Vec<f64>],
    rewards: &[f64],
    variance_reduction: bool,
) -> Vec<f64> {
    assert_eq!(scores.len(), rewards.len());
    let k = rewards.len();
    let dim = scores[0].len();
    let mut out = vec![0.0; dim];
    if variance_reduction && k == 1 {
        log::warn!("variance reduction with K = 1 yields a degenerate zero gradient");
        return out;
    }
    let (weights, scale) = if variance_reduction {
        (center_rewards(rewards), k as f64 / (k as f64 - 1.0))
    } else {
        (rewards.to_vec(), 1.0)
    };
    for (score, w) in scores.iter().zip(&weights) {
        assert_eq!(score.len(), dim);
        for (o, &g) in out.iter_mut().zip(score) {
            *o += w * g;
        }
    }
    let inv_k = scale / k as f64;
    for o in &mut out {
        *o *= inv_k;
    }
    out
}

/// Rescale to `max_norm` iff the Euclidean norm exceeds it.
pub fn clip_gradient(g: &mut [f64], max_norm: f64) {
    assert!(max_norm > 0.0);
    let norm = l2_norm(g);
    if norm > max_norm {
        let scale = max_norm / norm;
        for v in g {
            *v *= scale;
        }
    }
}

/// Closed-form speedup of the relaxed outer step over the bilevel baseline:
/// K N / (K + 8 N / M), with the surrogate's 8 probe trainings amortized over
/// M outer steps. Without amortization the probe cost lands on one step.
pub fn cost_model(k: f64, n_epochs: f64, m: f64, amortize: bool) -> f64 {
    let estimator = if amortize { 8.0 * n_epochs / m } else { 8.0 * n_epochs };
    k * n_epochs / (k + estimator)
}

pub struct BilevelOutcome {
    pub policy: BernoulliPolicy,
    pub trace: OuterTrace,
}

/// REINFORCE baseline: per outer step, K masks are sampled and each trains a
/// fresh model for the full budget C; the per-mask validation losses weight
/// the score gradient. Costs exactly K x C sample-usages per outer step.
#[allow(clippy::too_many_arguments)]
pub fn bilevel_cads_run(
    train: &LabeledDataset,
    val: &LabeledDataset,
    policy0: &BernoulliPolicy,
    cfg: &CadsConfig,
    train_cfg: &TrainConfig,
    init: &dyn Fn(u64) -> ModelParams,
    ledger: &mut Ledger,
) -> Result<BilevelOutcome> {
    cfg.validate()?;
    let mut policy = policy0.clone();
    let mut adam_s = AdamState::new(&[policy.len()]);
    let mut trace = OuterTrace::default();
    let mut consumed = 0u64;
    let val_metric = Metric::Loss(train_cfg.loss_kind);

    for t in 0..cfg.outer_iters {
        let mut scores = Vec::with_capacity(cfg.k_subsets);
        let mut rewards = Vec::with_capacity(cfg.k_subsets);
        let mut sizes = Vec::with_capacity(cfg.k_subsets);
        let step_before = consumed;
        for k in 0..cfg.k_subsets {
            let draw = (t * cfg.k_subsets + k) as u64;
            let mut mask_rng = crate::rng::stream(cfg.seed, "bilevel-mask", draw);
            let mask = policy.sample_nonempty(&mut mask_rng, 10)?;
            let view = MaskedView::from_mask(train, &mask)?;
            // Paired seeds reuse one initialization and shuffle stream across
            // the K masks of a step; independent seeds draw fresh ones.
            let inner_idx = if cfg.common_inner_seeds { t as u64 } else { draw };
            let theta0 = init(crate::rng::child_seed(cfg.seed, "bilevel-theta", inner_idx));
            let mut inner_cfg = train_cfg.clone();
            inner_cfg.shuffle_seed = crate::rng::child_seed(cfg.seed, "bilevel-shuffle", inner_idx);
            let mut budget = ComputeBudget::new(cfg.budget_c);
            let outcome = train_on_subset(&theta0, &view, &mut budget, &inner_cfg, None)?;
            debug_assert_eq!(outcome.samples_used, cfg.budget_c);
            consumed += outcome.samples_used;
            ledger.record(format!("bilevel[iter={t},k={k}]"), outcome.samples_used);
            let l_val = outcome.params.evaluate(val, val_metric)?;
            rewards.push(l_val);
            scores.push(policy.score_grad(&mask));
            sizes.push(view.size());
        }
        debug_assert_eq!(consumed - step_before, cfg.k_subsets as u64 * cfg.budget_c);

        let mut grad = score_weighted_grad(&scores, &rewards, cfg.variance_reduction);
        if let Some(max_norm) = cfg.grad_clip_norm {
            clip_gradient(&mut grad, max_norm);
        }
        adam_s.step_slices(&mut [policy.probs_mut()], &[&grad], cfg.lr_s);
        policy.clamp();

        trace.records.push(OuterRecord {
            iter: t,
            subset_sizes: sizes,
            rewards,
            l_trn: None,
            l_val: None,
            l_surr: None,
            penalty: None,
            s_sum: policy.expected_size(),
            s: policy.probs().to_vec(),
            sigma: None,
            ratios: None,
            budget_consumed: consumed,
        });
    }
    Ok(BilevelOutcome { policy, trace })
}

pub struct CadsRunOutcome<P> {
    pub policy: P,
    pub theta: ModelParams,
    pub trace: OuterTrace,
}

/// Shared per-iteration machinery of the relaxed variants: evaluate the
/// objective components on each subset, update theta and the policy.
struct RelaxedStep<'a> {
    train: &'a LabeledDataset,
    val: &'a LabeledDataset,
    cfg: &'a CadsConfig,
    loss_kind: LossKind,
    cap_logged: bool,
}

struct SubsetEval {
    size: usize,
    l_trn: f64,
    grad_trn: ModelParams,
}

impl RelaxedStep<'_> {
    /// Loss and gradient of theta on a subset, truncated to the cap.
    fn eval_subset(
        &mut self,
        theta: &ModelParams,
        indices: &[u32],
        iter: usize,
        k: usize,
    ) -> Result<SubsetEval> {
        let size = indices.len();
        let used: Vec<u32> = if size > self.cfg.ltrn_cap {
            if !self.cap_logged {
                log::info!(
                    "subset loss estimated on {} of {} examples (cap active)",
                    self.cfg.ltrn_cap,
                    size
                );
                self.cap_logged = true;
            }
            let mut rng = crate::rng::stream(
                self.cfg.seed,
                "ltrn-cap",
                (iter * self.cfg.k_subsets + k) as u64,
            );
            let mut pool = indices.to_vec();
            for i in 0..self.cfg.ltrn_cap {
                let j = rand::Rng::gen_range(&mut rng, i..pool.len());
                pool.swap(i, j);
            }
            pool.truncate(self.cfg.ltrn_cap);
            pool
        } else {
            indices.to_vec()
        };
        let feats = self.train.features.gather_rows(&used);
        let labels = self.train.labels.gather(&used);
        let (l_trn, grad_trn) = theta.loss_and_grads(&feats, &labels, self.loss_kind)?;
        Ok(SubsetEval { size, l_trn, grad_trn })
    }

    /// Validation loss and gradient at iteration-start theta, optionally on a
    /// seeded subsample.
    fn eval_val(&self, theta: &ModelParams, iter: usize) -> Result<(f64, ModelParams, u64)> {
        match self.cfg.val_batch {
            Some(vb) if vb < self.val.len() => {
                let mut rng = crate::rng::stream(self.cfg.seed, "val-batch", iter as u64);
                let mut pool: Vec<u32> = (0..self.val.len() as u32).collect();
                for i in 0..vb {
                    let j = rand::Rng::gen_range(&mut rng, i..pool.len());
                    pool.swap(i, j);
                }
                pool.truncate(vb);
                let feats = self.val.features.gather_rows(&pool);
                let labels = self.val.labels.gather(&pool);
                let (l, g) = theta.loss_and_grads(&feats, &labels, self.loss_kind)?;
                Ok((l, g, vb as u64))
            }
            _ => {
                let (l, g) =
                    theta.loss_and_grads(&self.val.features, &self.val.labels, self.loss_kind)?;
                Ok((l, g, self.val.len() as u64))
            }
        }
    }
}

/// Example-level relaxed optimizer (factorized Bernoulli policy).
#[allow(clippy::too_many_arguments)]
pub fn cads_e_run(
    train: &LabeledDataset,
    val: &LabeledDataset,
    policy0: &BernoulliPolicy,
    surrogate: &SurrogateFit,
    cfg: &CadsConfig,
    loss_kind: LossKind,
    init: &dyn Fn(u64) -> ModelParams,
    ledger: &mut Ledger,
) -> Result<CadsRunOutcome<BernoulliPolicy>> {
    cfg.validate()?;
    let mut policy = policy0.clone();
    let mut theta = init(crate::rng::child_seed(cfg.seed, "cads-theta", 0));
    let mut adam_theta = AdamState::for_params(&theta);
    let mut adam_s = AdamState::new(&[policy.len()]);
    let mut trace = OuterTrace::default();
    let mut consumed = 0u64;
    let mut step = RelaxedStep {
        train,
        val,
        cfg,
        loss_kind,
        cap_logged: false,
    };

    for t in 0..cfg.outer_iters {
        if cfg.reset_theta_each_iter {
            theta = init(crate::rng::child_seed(cfg.seed, "cads-theta", t as u64));
            adam_theta = AdamState::for_params(&theta);
        }
        let (l_val, grad_val, _) = step.eval_val(&theta, t)?;

        let mut evals = Vec::with_capacity(cfg.k_subsets);
        let mut scores = Vec::with_capacity(cfg.k_subsets);
        for k in 0..cfg.k_subsets {
            let draw = (t * cfg.k_subsets + k) as u64;
            let mut mask_rng = crate::rng::stream(cfg.seed, "cads-e-mask", draw);
            let mask = policy.sample_nonempty(&mut mask_rng, 10)?;
            let indices: Vec<u32> = mask
                .iter()
                .enumerate()
                .filter_map(|(i, &b)| b.then_some(i as u32))
                .collect();
            let ev = step.eval_subset(&theta, &indices, t, k)?;
            let charged = ev.size.min(cfg.ltrn_cap) as u64;
            consumed += charged;
            ledger.record(format!("cads-e[iter={t},k={k}]"), charged);
            scores.push(policy.score_grad(&mask));
            evals.push(ev);
        }

        let sizes: Vec<usize> = evals.iter().map(|e| e.size).collect();
        let (rewards, l_trns, l_surrs, penalties) = assemble_objective(&evals, l_val, cfg.alpha, surrogate);
        let per_subset: Vec<(f64, f64, ModelParams)> = evals
            .into_iter()
            .zip(&l_surrs)
            .map(|(ev, &ls)| (ev.l_trn, ls, ev.grad_trn))
            .collect();
        let grad_theta = cads_grad_theta(&grad_val, &per_subset, cfg.alpha);

        let mut grad_s = score_weighted_grad(&scores, &rewards, cfg.variance_reduction);
        if let Some(max_norm) = cfg.grad_clip_norm {
            clip_gradient(&mut grad_s, max_norm);
        }
        // Simultaneous update: both gradients were taken at iteration-start theta.
        crate::nn::adam_step(&mut adam_theta, &mut theta, &grad_theta, cfg.lr_theta);
        adam_s.step_slices(&mut [policy.probs_mut()], &[&grad_s], cfg.lr_s);
        policy.clamp();

        trace.records.push(OuterRecord {
            iter: t,
            subset_sizes: sizes,
            rewards,
            l_trn: Some(l_trns),
            l_val: Some(l_val),
            l_surr: Some(l_surrs),
            penalty: Some(penalties),
            s_sum: policy.expected_size(),
            s: policy.probs().to_vec(),
            sigma: None,
            ratios: None,
            budget_consumed: consumed,
        });
    }
    Ok(CadsRunOutcome { policy, theta, trace })
}

fn assemble_objective(
    evals: &[SubsetEval],
    l_val: f64,
    alpha: f64,
    surrogate: &SurrogateFit,
) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut rewards = Vec::with_capacity(evals.len());
    let mut l_trns = Vec::with_capacity(evals.len());
    let mut l_surrs = Vec::with_capacity(evals.len());
    let mut penalties = Vec::with_capacity(evals.len());
    for ev in evals {
        let ls = surrogate.eval(ev.size as f64);
        let gap = ev.l_trn - ls;
        rewards.push(cads_objective(l_val, ev.l_trn, ls, alpha));
        l_trns.push(ev.l_trn);
        l_surrs.push(ls);
        penalties.push(alpha * gap * gap);
    }
    (rewards, l_trns, l_surrs, penalties)
}

/// Source-level relaxed optimizer (independent truncated Gaussians over
/// per-source sampling ratios, annealed scale).
#[allow(clippy::too_many_arguments)]
pub fn cads_s_run(
    sources: &LabeledDataset,
    val: &LabeledDataset,
    policy0: &TruncGaussPolicy,
    surrogate: &SurrogateFit,
    cfg: &CadsConfig,
    loss_kind: LossKind,
    init: &dyn Fn(u64) -> ModelParams,
    ledger: &mut Ledger,
) -> Result<CadsRunOutcome<TruncGaussPolicy>> {
    cfg.validate()?;
    let n_sources = sources.num_sources();
    if n_sources == 0 {
        return Err(CoreError::domain("dataset has no sources"));
    }
    if policy0.len() != n_sources {
        return Err(CoreError::config(format!(
            "policy has {} dims for {n_sources} sources",
            policy0.len()
        )));
    }
    let source_indices: Vec<Vec<u32>> =
        (0..n_sources as u32).map(|j| sources.source_indices(j)).collect();
    let group_sizes: Vec<usize> = source_indices.iter().map(Vec::len).collect();

    let mut policy = policy0.clone();
    let mut theta = init(crate::rng::child_seed(cfg.seed, "cads-theta", 0));
    let mut adam_theta = AdamState::for_params(&theta);
    let mut adam_s = AdamState::new(&[policy.len()]);
    let mut trace = OuterTrace::default();
    let mut consumed = 0u64;
    let mut step = RelaxedStep {
        train: sources,
        val,
        cfg,
        loss_kind,
        cap_logged: false,
    };

    for t in 0..cfg.outer_iters {
        if cfg.reset_theta_each_iter {
            theta = init(crate::rng::child_seed(cfg.seed, "cads-theta", t as u64));
            adam_theta = AdamState::for_params(&theta);
        }
        let (l_val, grad_val, _) = step.eval_val(&theta, t)?;

        let mut evals = Vec::with_capacity(cfg.k_subsets);
        let mut scores = Vec::with_capacity(cfg.k_subsets);
        let mut ratios = Vec::with_capacity(cfg.k_subsets);
        for k in 0..cfg.k_subsets {
            let draw = (t * cfg.k_subsets + k) as u64;
            let mut rng = crate::rng::stream(cfg.seed, "cads-s-ratio", draw);
            // all-zero counts: resample once, then error
            let (r, counts) = {
                let first = policy.sample(&mut rng);
                match ratio_to_counts(&first, &group_sizes) {
                    Ok(c) => (first, c),
                    Err(_) => {
                        let second = policy.sample(&mut rng);
                        let c = ratio_to_counts(&second, &group_sizes)?;
                        (second, c)
                    }
                }
            };
            let mut pick_rng = crate::rng::stream(cfg.seed, "cads-s-pick", draw);
            let indices = subsample_sources(&source_indices, &counts, &mut pick_rng)?;
            let ev = step.eval_subset(&theta, &indices, t, k)?;
            let charged = ev.size.min(cfg.ltrn_cap) as u64;
            consumed += charged;
            ledger.record(format!("cads-s[iter={t},k={k}]"), charged);
            scores.push(policy.score_grad(&r));
            ratios.push(r.0.clone());
            evals.push(ev);
        }

        let sizes: Vec<usize> = evals.iter().map(|e| e.size).collect();
        let (rewards, l_trns, l_surrs, penalties) = assemble_objective(&evals, l_val, cfg.alpha, surrogate);
        let per_subset: Vec<(f64, f64, ModelParams)> = evals
            .into_iter()
            .zip(&l_surrs)
            .map(|(ev, &ls)| (ev.l_trn, ls, ev.grad_trn))
            .collect();
        let grad_theta = cads_grad_theta(&grad_val, &per_subset, cfg.alpha);

        let mut grad_s = score_weighted_grad(&scores, &rewards, cfg.variance_reduction);
        if let Some(max_norm) = cfg.grad_clip_norm {
            clip_gradient(&mut grad_s, max_norm);
        }
        crate::nn::adam_step(&mut adam_theta, &mut theta, &grad_theta, cfg.lr_theta);
        adam_s.step_slices(&mut [policy.means_mut()], &[&grad_s], cfg.lr_s);
        policy.clamp();
        policy.anneal();

        trace.records.push(OuterRecord {
            iter: t,
            subset_sizes: sizes,
            rewards,
            l_trn: Some(l_trns),
            l_val: Some(l_val),
            l_surr: Some(l_surrs),
            penalty: Some(penalties),
            s_sum: policy.means().iter().sum(),
            s: policy.means().to_vec(),
            sigma: Some(policy.sigma()),
            ratios: Some(ratios),
            budget_consumed: consumed,
        });
    }
    Ok(CadsRunOutcome { policy, theta, trace })
}
