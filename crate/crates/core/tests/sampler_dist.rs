//! Distributional checks on the truncated-Gaussian sampler: quadrature
//! normalization of the density, a chi-square goodness-of-fit test of the
//! inverse-cdf sampler, the Monte-Carlo score identity, and the annealing
//! closed form.

use cads_core::policy::TruncGaussPolicy;
use cads_core::rng;

/// Composite Simpson integral of the density over [0, 1].
fn simpson_integral(mean: f64, sigma: f64, intervals: usize) -> f64 {
    assert!(intervals % 2 == 0);
    let h = 1.0 / intervals as f64;
    let f = |x: f64| TruncGaussPolicy::pdf(mean, sigma, x);
    let mut acc = f(0.0) + f(1.0);
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(i as f64 * h);
    }
    acc * h / 3.0
}

#[test]
fn density_integrates_to_one_across_parameter_grid() {
    for &s in &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9] {
        for &sigma in &[0.01, 0.05, 0.1] {
            let integral = simpson_integral(s, sigma, 200_000);
            assert!(
                (integral - 1.0).abs() < 1e-6,
                "(s={s}, sigma={sigma}): integral {integral}"
            );
        }
    }
}

/// Upper 1% chi-square critical value via the Wilson-Hilferty cube
/// approximation (well under 1% off for df >= 10).
fn chi2_crit_1pct(df: f64) -> f64 {
    let z = 2.3263478740408408; // standard normal 99% quantile
    let t = 1.0 - 2.0 / (9.0 * df) + z * (2.0 / (9.0 * df)).sqrt();
    df * t * t * t
}

#[test]
fn sampler_passes_chi_square_against_quadrature_expectations() {
    let (s, sigma) = (0.5, 0.1);
    let policy = TruncGaussPolicy::new(vec![s], sigma).unwrap();
    let n = 100_000usize;
    let mut rng = rng::stream(20, "chi2", 0);
    let bins = 60usize;
    let mut observed = vec![0usize; bins];
    for _ in 0..n {
        let r = policy.sample(&mut rng).0[0];
        let b = ((r * bins as f64) as usize).min(bins - 1);
        observed[b] += 1;
    }
    // expected mass per bin by Simpson quadrature of the density
    let mut expected: Vec<f64> = (0..bins)
        .map(|b| {
            let lo = b as f64 / bins as f64;
            let m = 64;
            let h = (1.0 / bins as f64) / m as f64;
            let f = |x: f64| TruncGaussPolicy::pdf(s, sigma, x);
            let mut acc = f(lo) + f(lo + m as f64 * h);
            for i in 1..m {
                acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(lo + i as f64 * h);
            }
            acc * h / 3.0 * n as f64
        })
        .collect();

    // merge low-expectation tail bins (standard validity rule: expected >= 5)
    let mut merged_obs = Vec::new();
    let mut merged_exp = Vec::new();
    let mut acc_o = 0.0;
    let mut acc_e = 0.0;
    for b in 0..bins {
        acc_o += observed[b] as f64;
        acc_e += expected[b];
        if acc_e >= 5.0 {
            merged_obs.push(acc_o);
            merged_exp.push(acc_e);
            acc_o = 0.0;
            acc_e = 0.0;
        }
    }
    if acc_e > 0.0 {
        let last = merged_exp.len() - 1;
        merged_obs[last] += acc_o;
        merged_exp[last] += acc_e;
    }
    expected = merged_exp;
    let chi2: f64 = merged_obs
        .iter()
        .zip(&expected)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    let df = (expected.len() - 1) as f64;
    let crit = chi2_crit_1pct(df);
    assert!(
        chi2 < crit,
        "chi2 {chi2} exceeds 1% critical value {crit} (df {df})"
    );
}

#[test]
fn monte_carlo_score_identity_holds() {
    // E[d/ds log p] = 0 under the policy
    for &(s, sigma) in &[(0.3, 0.05), (0.5, 0.1), (0.85, 0.02)] {
        let policy = TruncGaussPolicy::new(vec![s], sigma).unwrap();
        let n = 100_000usize;
        let mut rng = rng::stream(21, "score-identity", 0);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let r = policy.sample(&mut rng);
            let g = policy.score_grad(&r)[0];
            sum += g;
            sum_sq += g * g;
        }
        let mean = sum / n as f64;
        let var = (sum_sq / n as f64 - mean * mean).max(0.0);
        let se = (var / n as f64).sqrt();
        assert!(
            mean.abs() < 3.0 * se,
            "(s={s}, sigma={sigma}): mean score {mean}, 3 SE {}",
            3.0 * se
        );
    }
}

#[test]
fn anneal_closed_form_is_exact() {
    let sigma0 = 0.05;
    let mut policy = TruncGaussPolicy::new(vec![0.4], sigma0).unwrap();
    for t in 1..=200u32 {
        policy.anneal();
        let expected = 0.99f64.powi(t as i32) * sigma0;
        assert!(
            (policy.sigma() - expected).abs() <= 1e-15 * (1.0 + expected),
            "t={t}: {} vs {expected}",
            policy.sigma()
        );
        assert!(policy.sigma() > 0.0);
    }
}

#[test]
fn sample_histogram_tracks_density_shape() {
    // coarse sanity beyond the chi-square: mass left/right of the mean
    let policy = TruncGaussPolicy::new(vec![0.8], 0.1).unwrap();
    let mut rng = rng::stream(22, "shape", 0);
    let n = 50_000;
    let above = (0..n).filter(|_| policy.sample(&mut rng).0[0] > 0.8).count() as f64 / n as f64;
    // truncation at 1 removes more mass above the mean than below
    assert!(above < 0.5 && above > 0.35, "mass above mean: {above}");
}

#[test]
fn score_gradient_expectation_matches_quadrature() {
    // E[f(r) * score] should equal d/ds E[f(r)] computed by quadrature
    let (s, sigma) = (0.6, 0.08);
    let f = |r: f64| r * r + 0.5 * r;
    let quad = |mean: f64| -> f64 {
        let m = 200_000;
        let h = 1.0 / m as f64;
        let g = |x: f64| f(x) * TruncGaussPolicy::pdf(mean, sigma, x);
        let mut acc = g(0.0) + g(1.0);
        for i in 1..m {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * g(i as f64 * h);
        }
        acc * h / 3.0
    };
    let hd = 1e-5;
    let exact = (quad(s + hd) - quad(s - hd)) / (2.0 * hd);

    let policy = TruncGaussPolicy::new(vec![s], sigma).unwrap();
    let n = 400_000usize;
    let mut rng = rng::stream(23, "score-grad-mc", 0);
    let mut acc = 0.0;
    for _ in 0..n {
        let r = policy.sample(&mut rng);
        acc += f(r.0[0]) * policy.score_grad(&r)[0];
    }
    let mc = acc / n as f64;
    assert!(
        (mc - exact).abs() / exact.abs() < 0.02,
        "mc {mc} vs quadrature {exact}"
    );
}
