//! Probabilistic selection policies over subsets.
//!
//! Two factorized families: independent Bernoulli inclusion per example, and
//! an independent truncated Gaussian per source ratio. Both expose analytic
//! score-function gradients (d/ds log p), which finite-difference tests pin
//! down before any optimizer consumes them.

use crate::error::{CoreError, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Clamp bound on policy parameters. The Bernoulli score divides by s and
/// 1 - s, so parameters live in [EPS_S, 1 - EPS_S], bounding score magnitude
/// by 1/EPS_S.
pub const EPS_S: f64 = 1e-3;

pub fn clamp_param(v: f64) -> f64 {
    v.clamp(EPS_S, 1.0 - EPS_S)
}

pub mod normal {
    //! Standard normal pdf/cdf/quantile. The cdf goes through `libm::erfc`;
    //! the quantile is a rational approximation polished by one Halley step,
    //! leaving it accurate to roughly double precision.

    const SQRT_2PI: f64 = 2.5066282746310002;

    pub fn pdf(z: f64) -> f64 {
        (-0.5 * z * z).exp() / SQRT_2PI
    }

    pub fn cdf(z: f64) -> f64 {
        0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
    }

    /// Inverse standard normal cdf for p in (0, 1).
    pub fn inv_cdf(p: f64) -> f64 {
        assert!(p > 0.0 && p < 1.0, "quantile argument must be in (0,1), got {p}");
        let x = rational_approx(p);
        // One Halley refinement against the erfc-based cdf.
        let e = cdf(x) - p;
        let u = e * SQRT_2PI * (0.5 * x * x).exp();
        x - u / (1.0 + x * u / 2.0)
    }

    // Peter Acklam's rational approximation to the normal quantile
    // (relative error < 1.15e-9 over the full open interval).
    fn rational_approx(p: f64) -> f64 {
        const A: [f64; 6] = [
            -3.969683028665376e+01,
            2.209460984245205e+02,
            -2.759285104469687e+02,
            1.383577518672690e+02,
            -3.066479806614716e+01,
            2.506628277459239e+00,
        ];
        const B: [f64; 5] = [
            -5.447609879822406e+01,
            1.615858368580409e+02,
            -1.556989798598866e+02,
            6.680131188771972e+01,
            -1.328068155288572e+01,
        ];
        const C: [f64; 6] = [
            -7.784894002430293e-03,
            -3.223964580411365e-01,
            -2.400758277161838e+00,
            -2.549732539343734e+00,
            4.374664141464968e+00,
            2.938163982698783e+00,
        ];
        const D: [f64; 4] = [
            7.784695709041462e-03,
            3.224671290700398e-01,
            2.445134137142996e+00,
            3.754408661907416e+00,
        ];
        const P_LOW: f64 = 0.02425;
        if p < P_LOW {
            let q = (-2.0 * p.ln()).sqrt();
            (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
                / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
        } else if p <= 1.0 - P_LOW {
            let q = p - 0.5;
            let r = q * q;
            (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
                / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
        } else {
            let q = (-2.0 * (1.0 - p).ln()).sqrt();
            -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
                / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
        }
    }

}

/// Per-example Bernoulli inclusion policy, parameters clamped to
/// [EPS_S, 1 - EPS_S].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernoulliPolicy {
    s: Vec<f64>,
}

impl BernoulliPolicy {
    pub fn new(mut s: Vec<f64>) -> Self {
        for v in &mut s {
            *v = clamp_param(*v);
        }
        BernoulliPolicy { s }
    }

    pub fn uniform(n: usize, v: f64) -> Self {
        Self::new(vec![v; n])
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.s
    }

    pub fn probs_mut(&mut self) -> &mut [f64] {
        &mut self.s
    }

    pub fn clamp(&mut self) {
        for v in &mut self.s {
            *v = clamp_param(*v);
        }
    }

    /// Expected subset size, sum of inclusion probabilities.
    pub fn expected_size(&self) -> f64 {
        self.s.iter().sum()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<bool> {
        self.s.iter().map(|&p| rng.gen::<f64>() < p).collect()
    }

    /// Sample, rejecting the (astronomically unlikely) empty mask a bounded
    /// number of times before erroring.
    pub fn sample_nonempty<R: Rng>(&self, rng: &mut R, max_tries: usize) -> Result<Vec<bool>> {
        for _ in 0..max_tries {
            let m = self.sample(rng);
            if m.iter().any(|&b| b) {
                return Ok(m);
            }
        }
        Err(CoreError::EmptySubset(format!(
            "no nonempty mask after {max_tries} draws"
        )))
    }

    /// d/ds_i log p(m|s) = m_i/s_i - (1-m_i)/(1-s_i).
    pub fn score_grad(&self, mask: &[bool]) -> Vec<f64> {
        assert_eq!(mask.len(), self.s.len());
        self.s
            .iter()
            .zip(mask)
            .map(|(&s, &m)| if m { 1.0 / s } else { -1.0 / (1.0 - s) })
            .collect()
    }

    pub fn log_prob(&self, mask: &[bool]) -> f64 {
        assert_eq!(mask.len(), self.s.len());
        self.s
            .iter()
            .zip(mask)
            .map(|(&s, &m)| if m { s.ln() } else { (1.0 - s).ln() })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioVector(pub Vec<f64>);

impl RatioVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Independent truncated Gaussian per source ratio, truncated to [0, 1],
/// with geometrically annealed scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncGaussPolicy {
    s: Vec<f64>,
    sigma: f64,
    sigma0: f64,
    t: u32,
}

impl TruncGaussPolicy {
    pub fn new(mut s: Vec<f64>, sigma0: f64) -> Result<Self> {
        if sigma0 <= 0.0 {
            return Err(CoreError::config("sigma0 must be positive"));
        }
        for v in &mut s {
            *v = clamp_param(*v);
        }
        Ok(TruncGaussPolicy { s, sigma: sigma0, sigma0, t: 0 })
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn means(&self) -> &[f64] {
        &self.s
    }

    pub fn means_mut(&mut self) -> &mut [f64] {
        &mut self.s
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn anneal_step(&self) -> u32 {
        self.t
    }

    pub fn clamp(&mut self) {
        for v in &mut self.s {
            *v = clamp_param(*v);
        }
    }

    /// sigma <- 0.99 sigma (so sigma_t = 0.99^t sigma_0), t <- t + 1.
    pub fn anneal(&mut self) {
        self.sigma *= 0.99;
        self.t += 1;
    }

    /// Inverse-cdf sampling, componentwise in [0, 1].
    pub fn sample<R: Rng>(&self, rng: &mut R) -> RatioVector {
        let r = self
            .s
            .iter()
            .map(|&s| {
                let a = (0.0 - s) / self.sigma;
                let b = (1.0 - s) / self.sigma;
                let fa = normal::cdf(a);
                let fb = normal::cdf(b);
                let u: f64 = rng.gen();
                let p = (fa + u * (fb - fa)).clamp(1e-16, 1.0 - 1e-16);
                (s + self.sigma * normal::inv_cdf(p)).clamp(0.0, 1.0)
            })
            .collect();
        RatioVector(r)
    }

    /// Density of one component; zero outside [0, 1].
    pub fn pdf(mean: f64, sigma: f64, r: f64) -> f64 {
        assert!(sigma > 0.0);
        if !(0.0..=1.0).contains(&r) {
            return 0.0;
        }
        let z = normal::cdf((1.0 - mean) / sigma) - normal::cdf((0.0 - mean) / sigma);
        normal::pdf((r - mean) / sigma) / (sigma * z)
    }

    pub fn log_pdf(&self, r: &RatioVector) -> f64 {
        assert_eq!(r.0.len(), self.s.len());
        self.s
            .iter()
            .zip(&r.0)
            .map(|(&s, &ri)| Self::pdf(s, self.sigma, ri).ln())
            .sum()
    }

    /// d/ds_j log p(r|s): (r - s)/sigma^2
    ///   + [pdf((1-s)/sigma) - pdf(-s/sigma)] / (sigma * Z).
    pub fn score_grad(&self, r: &RatioVector) -> Vec<f64> {
        assert_eq!(r.0.len(), self.s.len());
        self.s
            .iter()
            .zip(&r.0)
            .map(|(&s, &ri)| {
                let a = (0.0 - s) / self.sigma;
                let b = (1.0 - s) / self.sigma;
                let z = normal::cdf(b) - normal::cdf(a);
                (ri - s) / (self.sigma * self.sigma)
                    + (normal::pdf(b) - normal::pdf(a)) / (self.sigma * z)
            })
            .collect()
    }
}

/// Per-source subset counts: count_j = round(r_j * size_j).
pub fn ratio_to_counts(r: &RatioVector, group_sizes: &[usize]) -> Result<Vec<usize>> {
    if r.len() != group_sizes.len() {
        return Err(CoreError::config("ratio vector length != source count"));
    }
    let counts: Vec<usize> = r
        .0
        .iter()
        .zip(group_sizes)
        .map(|(&rj, &nj)| (rj * nj as f64).round() as usize)
        .collect();
    if counts.iter().all(|&c| c == 0) {
        return Err(CoreError::EmptySubset("all source counts are zero".into()));
    }
    Ok(counts)
}

/// Draw `count` indices per source without replacement (partial
/// Fisher-Yates), concatenated in source order.
pub fn subsample_sources<R: Rng>(
    source_indices: &[Vec<u32>],
    counts: &[usize],
    rng: &mut R,
) -> Result<Vec<u32>> {
    if source_indices.len() != counts.len() {
        return Err(CoreError::config("counts length != source count"));
    }
    let mut out = Vec::new();
    for (pool, &count) in source_indices.iter().zip(counts) {
        if count > pool.len() {
            return Err(CoreError::domain(format!(
                "cannot draw {count} from a source of {}",
                pool.len()
            )));
        }
        let mut pool = pool.clone();
        for i in 0..count {
            let j = rng.gen_range(i..pool.len());
            pool.swap(i, j);
        }
        out.extend_from_slice(&pool[..count]);
    }
    Ok(out)
}
