//! Scale-dependent surrogate of the budget-constrained training loss.
//!
//! Probe runs train on random subsets of graded sizes, all under the same
//! compute budget, and record the final training loss. The (size, loss)
//! pairs are fitted in log space, either by least squares on a line or by a
//! natural cubic spline through log(loss + epsilon); the surrogate value is
//! exp of the fitted curve.

use crate::budget::{ComputeBudget, Ledger};
use crate::data::LabeledDataset;
use crate::error::{CoreError, Result};
use crate::nn::ModelParams;
use crate::trainer::{train_on_subset, MaskedView, TrainConfig};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Offset inside the log transform, log(loss + EPSILON).
pub const LOG_EPSILON: f64 = 1e-10;

/// Default relative subset-size fractions for probe collection.
pub const DEFAULT_FRACTIONS: [f64; 8] = [0.01, 0.02, 0.05, 0.1, 0.3, 0.5, 0.7, 0.9];

/// Default lower clamp on probe subset sizes.
pub const DEFAULT_SIZE_FLOOR: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossProbe {
    pub size: usize,
    pub loss: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateKind {
    Linear,
    CubicSpline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SurrogateFit {
    Linear {
        epsilon: f64,
        /// log(loss + epsilon) = k * size + b
        k: f64,
        b: f64,
        size_range: (f64, f64),
    },
    CubicSpline {
        epsilon: f64,
        /// (size, log(loss + epsilon), second derivative) per knot.
        knots: Vec<(f64, f64, f64)>,
    },
}

/// Least squares or natural-spline fit on (size, log(loss + eps)). Duplicate
/// sizes are merged to their mean loss before fitting.
pub fn fit_surrogate(probes: &[LossProbe], kind: SurrogateKind) -> Result<SurrogateFit> {
    let mut merged: Vec<(f64, f64, usize)> = Vec::new(); // size, loss sum, count
    let mut sorted = probes.to_vec();
    sorted.sort_by(|a, b| a.size.cmp(&b.size));
    for p in &sorted {
        if !p.loss.is_finite() {
            return Err(CoreError::domain("probe loss must be finite"));
        }
        match merged.last_mut() {
            Some(last) if last.0 == p.size as f64 => {
                last.1 += p.loss;
                last.2 += 1;
            }
            _ => merged.push((p.size as f64, p.loss, 1)),
        }
    }
    let xs: Vec<f64> = merged.iter().map(|m| m.0).collect();
    let ys: Vec<f64> = merged.iter().map(|m| (m.1 / m.2 as f64 + LOG_EPSILON).ln()).collect();

    match kind {
        SurrogateKind::Linear => {
            if xs.len() < 2 {
                return Err(CoreError::domain(format!(
                    "linear fit needs >= 2 distinct probe sizes, got {}",
                    xs.len()
                )));
            }
            let n = xs.len() as f64;
            let sx: f64 = xs.iter().sum();
            let sy: f64 = ys.iter().sum();
            let sxx: f64 = xs.iter().map(|x| x * x).sum();
            let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
            let denom = n * sxx - sx * sx;
            if denom == 0.0 {
                return Err(CoreError::domain("degenerate probe sizes"));
            }
            let k = (n * sxy - sx * sy) / denom;
            let b = (sy - k * sx) / n;
            Ok(SurrogateFit::Linear {
                epsilon: LOG_EPSILON,
                k,
                b,
                size_range: (xs[0], *xs.last().unwrap()),
            })
        }
        SurrogateKind::CubicSpline => {
            if xs.len() < 3 {
                return Err(CoreError::domain(format!(
                    "spline fit needs >= 3 distinct probe sizes, got {}",
                    xs.len()
                )));
            }
            let y2 = natural_spline_second_derivatives(&xs, &ys);
            Ok(SurrogateFit::CubicSpline {
                epsilon: LOG_EPSILON,
                knots: xs
                    .iter()
                    .zip(&ys)
                    .zip(&y2)
                    .map(|((&x, &y), &d2)| (x, y, d2))
                    .collect(),
            })
        }
    }
}

/// Solve the natural-spline tridiagonal system for second derivatives.
fn natural_spline_second_derivatives(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut y2 = vec![0.0; n];
    let mut u = vec![0.0; n];
    for i in 1..n - 1 {
        let sig = (xs[i] - xs[i - 1]) / (xs[i + 1] - xs[i - 1]);
        let p = sig * y2[i - 1] + 2.0;
        y2[i] = (sig - 1.0) / p;
        let d = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i])
            - (ys[i] - ys[i - 1]) / (xs[i] - xs[i - 1]);
        u[i] = (6.0 * d / (xs[i + 1] - xs[i - 1]) - sig * u[i - 1]) / p;
    }
    for i in (1..n - 1).rev() {
        y2[i] = y2[i] * y2[i + 1] + u[i];
    }
    y2
}

impl SurrogateFit {
    pub fn kind(&self) -> SurrogateKind {
        match self {
            SurrogateFit::Linear { .. } => SurrogateKind::Linear,
            SurrogateFit::CubicSpline { .. } => SurrogateKind::CubicSpline,
        }
    }

    pub fn size_range(&self) -> (f64, f64) {
        match self {
            SurrogateFit::Linear { size_range, .. } => *size_range,
            SurrogateFit::CubicSpline { knots, .. } => (knots[0].0, knots[knots.len() - 1].0),
        }
    }

    /// Predicted achievable loss at a subset size. Sizes outside the probed
    /// range clamp to the nearest endpoint (cubics diverge when extrapolated);
    /// the clamp is logged since it signals a size the probes never covered.
    pub fn eval(&self, size: f64) -> f64 {
        let (lo, hi) = self.size_range();
        let x = if size < lo || size > hi {
            log::warn!("surrogate evaluated at size {size} outside probed range [{lo}, {hi}]");
            size.clamp(lo, hi)
        } else {
            size
        };
        match self {
            SurrogateFit::Linear { k, b, .. } => (k * x + b).exp(),
            SurrogateFit::CubicSpline { knots, .. } => {
                let mut lo_i = 0;
                let mut hi_i = knots.len() - 1;
                while hi_i - lo_i > 1 {
                    let mid = (lo_i + hi_i) / 2;
                    if knots[mid].0 > x {
                        hi_i = mid;
                    } else {
                        lo_i = mid;
                    }
                }
                let (x0, y0, d0) = knots[lo_i];
                let (x1, y1, d1) = knots[hi_i];
                let h = x1 - x0;
                let a = (x1 - x) / h;
                let b = (x - x0) / h;
                let v = a * y0
                    + b * y1
                    + ((a * a * a - a) * d0 + (b * b * b - b) * d1) * h * h / 6.0;
                v.exp()
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<SurrogateFit> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Everything needed to run probe trainings.
pub struct ProbeRunner<'a> {
    pub dataset: &'a LabeledDataset,
    pub budget_per_probe: u64,
    pub train_cfg: TrainConfig,
    /// Fresh model initializer, seeded per probe.
    pub init: &'a dyn Fn(u64) -> ModelParams,
}

impl ProbeRunner<'_> {
    fn run_probe(&self, size: usize, probe_seed: u64, ledger: &mut Ledger) -> Result<LossProbe> {
        let mut rng = crate::rng::stream(probe_seed, "probe-subset", 0);
        let indices = sample_distinct(self.dataset.len(), size, &mut rng);
        let view = MaskedView::from_indices(self.dataset, indices)?;
        let mut budget = ComputeBudget::new(self.budget_per_probe);
        let mut cfg = self.train_cfg.clone();
        cfg.shuffle_seed = crate::rng::child_seed(probe_seed, "probe-shuffle", 0);
        let params0 = (self.init)(crate::rng::child_seed(probe_seed, "probe-init", 0));
        let outcome = train_on_subset(&params0, &view, &mut budget, &cfg, None)?;
        ledger.record(format!("probe[size={size},seed={probe_seed}]"), outcome.samples_used);
        Ok(LossProbe { size, loss: outcome.final_train_loss, seed: probe_seed })
    }
}

fn sample_distinct<R: rand::Rng>(n: usize, k: usize, rng: &mut R) -> Vec<u32> {
    assert!(k <= n);
    let mut pool: Vec<u32> = (0..n as u32).collect();
    for i in 0..k {
        let j = rng.gen_range(i..pool.len());
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

/// Train one probe per (fraction, replicate) at the shared budget and record
/// (size, final training loss). Sizes are round(fraction * n) clamped below
/// by `size_floor`.
#[allow(clippy::too_many_arguments)]
pub fn collect_probes(
    runner: &ProbeRunner,
    fractions: &[f64],
    size_floor: usize,
    replicates: usize,
    seed: u64,
    ledger: &mut Ledger,
) -> Result<Vec<LossProbe>> {
    if fractions.is_empty() || replicates == 0 {
        return Err(CoreError::config("need at least one fraction and one replicate"));
    }
    let n = runner.dataset.len();
    let mut sizes = Vec::new();
    for &f in fractions {
        if !(0.0..=1.0).contains(&f) || f == 0.0 {
            return Err(CoreError::config(format!("fraction {f} not in (0, 1]")));
        }
        let size = ((f * n as f64).round() as usize).max(size_floor).min(n);
        sizes.push(size);
    }
    let largest = *sizes.iter().max().unwrap() as u64;
    if runner.budget_per_probe < largest {
        return Err(CoreError::config(format!(
            "budget {} cannot cover one pass at the largest probe size {largest}",
            runner.budget_per_probe
        )));
    }
    let mut probes = Vec::new();
    for (i, &size) in sizes.iter().enumerate() {
        for rep in 0..replicates {
            let probe_seed = crate::rng::child_seed(seed, "probe", (i * replicates + rep) as u64);
            probes.push(runner.run_probe(size, probe_seed, ledger)?);
        }
    }
    Ok(probes)
}

/// Probe sizes for each K plus a shared held-out set; reports the spline
/// fit's held-out mean squared error (raw loss space) per K.
pub fn probe_efficiency_study(
    runner: &ProbeRunner,
    k_values: &[usize],
    heldout_count: usize,
    size_floor: usize,
    seed: u64,
    ledger: &mut Ledger,
) -> Result<Vec<(usize, f64)>> {
    if heldout_count < 10 {
        return Err(CoreError::config("need at least 10 held-out probes"));
    }
    let (lo, hi) = probe_size_range(runner.dataset.len(), size_floor);
    let heldout = heldout_probes(runner, heldout_count, (lo, hi), seed, ledger)?;
    probe_efficiency_table(runner, k_values, &heldout, (lo, hi), seed, ledger)
}

/// Default probed size interval: [floor, round(0.9 n)].
pub fn probe_size_range(n: usize, size_floor: usize) -> (usize, usize) {
    let lo = size_floor;
    let hi = ((0.9 * n as f64).round() as usize).max(lo + 1).min(n);
    (lo, hi)
}

/// For each K, fit a spline on K evenly spaced probe sizes and score it on a
/// caller-provided held-out set.
pub fn probe_efficiency_table(
    runner: &ProbeRunner,
    k_values: &[usize],
    heldout: &[LossProbe],
    size_range: (usize, usize),
    seed: u64,
    ledger: &mut Ledger,
) -> Result<Vec<(usize, f64)>> {
    if k_values.iter().any(|&k| !(3..=10).contains(&k)) {
        return Err(CoreError::config("k values must lie in 3..=10"));
    }
    let (lo, hi) = size_range;
    let mut table = Vec::new();
    for (ki, &k) in k_values.iter().enumerate() {
        // evenly spaced sizes across the probed range, endpoints included
        let sizes: Vec<usize> = (0..k)
            .map(|i| {
                (lo as f64 + i as f64 * (hi - lo) as f64 / (k - 1) as f64).round() as usize
            })
            .collect();
        let mut probes = Vec::new();
        for (si, &size) in sizes.iter().enumerate() {
            let probe_seed =
                crate::rng::child_seed(seed, "efficiency-probe", (ki * 100 + si) as u64);
            probes.push(runner.run_probe(size, probe_seed, ledger)?);
        }
        let fit = fit_surrogate(&probes, SurrogateKind::CubicSpline)?;
        table.push((k, heldout_mse(&fit, heldout)));
    }
    Ok(table)
}

/// Fresh probe runs at uniformly drawn sizes, used as a held-out test set.
pub fn heldout_probes(
    runner: &ProbeRunner,
    count: usize,
    size_range: (usize, usize),
    seed: u64,
    ledger: &mut Ledger,
) -> Result<Vec<LossProbe>> {
    let mut rng = crate::rng::stream(seed, "heldout-sizes", 0);
    let mut out = Vec::new();
    for i in 0..count {
        let size = rng.gen_range(size_range.0..=size_range.1);
        let probe_seed = crate::rng::child_seed(seed, "heldout-probe", i as u64);
        out.push(runner.run_probe(size, probe_seed, ledger)?);
    }
    Ok(out)
}

/// Mean squared error of the fit against held-out probes, in raw loss space.
pub fn heldout_mse(fit: &SurrogateFit, heldout: &[LossProbe]) -> f64 {
    let sq: f64 = heldout
        .iter()
        .map(|p| {
            let pred = fit.eval(p.size as f64);
            (pred - p.loss) * (pred - p.loss)
        })
        .sum();
    sq / heldout.len() as f64
}

/// Persist a probe table as CSV (size, loss, seed).
pub fn probes_to_csv<W: std::io::Write>(probes: &[LossProbe], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["size", "loss", "seed"])
        .map_err(|e| CoreError::Io(std::io::Error::new(std::io::ErrorKind::Other, e)))?;
    for p in probes {
        wtr.write_record([p.size.to_string(), p.loss.to_string(), p.seed.to_string()])
            .map_err(|e| CoreError::Io(std::io::Error::new(std::io::ErrorKind::Other, e)))?;
    }
    wtr.flush()?;
    Ok(())
}
