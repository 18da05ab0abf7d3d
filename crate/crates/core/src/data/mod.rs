//! Dataset construction: synthetic spectral regression, noisy-source
//! mixtures, IDX image loading, deterministic splits, and CSV export.

pub mod digits;
mod idx;

pub use idx::{load_idx, write_idx};

use crate::error::{CoreError, Result};
use crate::linalg::DenseMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub enum Labels {
    Real(Vec<f64>),
    Class(Vec<u32>),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Real(v) => v.len(),
            Labels::Class(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn slice(&self, lo: usize, hi: usize) -> Labels {
        match self {
            Labels::Real(v) => Labels::Real(v[lo..hi].to_vec()),
            Labels::Class(v) => Labels::Class(v[lo..hi].to_vec()),
        }
    }

    pub fn gather(&self, indices: &[u32]) -> Labels {
        match self {
            Labels::Real(v) => Labels::Real(indices.iter().map(|&i| v[i as usize]).collect()),
            Labels::Class(v) => Labels::Class(indices.iter().map(|&i| v[i as usize]).collect()),
        }
    }

    /// Number of classes, inferred as max label + 1.
    pub fn class_count(&self) -> Option<usize> {
        match self {
            Labels::Class(v) => v.iter().max().map(|&m| m as usize + 1),
            Labels::Real(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: DenseMatrix,
    pub labels: Labels,
    /// Per-example source group, 0 if ungrouped.
    pub source_id: Vec<u32>,
}

impl LabeledDataset {
    pub fn new(features: DenseMatrix, labels: Labels, source_id: Option<Vec<u32>>) -> Result<Self> {
        let n = features.rows();
        if labels.len() != n {
            return Err(CoreError::config("labels length != feature rows"));
        }
        let source_id = source_id.unwrap_or_else(|| vec![0; n]);
        if source_id.len() != n {
            return Err(CoreError::config("source_id length != feature rows"));
        }
        if let Some(&max) = source_id.iter().max() {
            for id in 0..=max {
                if !source_id.contains(&id) {
                    return Err(CoreError::config(format!(
                        "source ids must be contiguous from 0; {id} missing"
                    )));
                }
            }
        }
        Ok(LabeledDataset { features, labels, source_id })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Gather a subset by example index.
    pub fn subset(&self, indices: &[u32]) -> LabeledDataset {
        LabeledDataset {
            features: self.features.gather_rows(indices),
            labels: self.labels.gather(indices),
            source_id: indices.iter().map(|&i| self.source_id[i as usize]).collect(),
        }
    }

    /// Indices of every example in source group `j`.
    pub fn source_indices(&self, j: u32) -> Vec<u32> {
        (0..self.len() as u32).filter(|&i| self.source_id[i as usize] == j).collect()
    }

    pub fn num_sources(&self) -> usize {
        self.source_id.iter().max().map_or(0, |&m| m as usize + 1)
    }

    /// Concatenate datasets as numbered sources (source_id = position).
    pub fn concat_sources(parts: &[LabeledDataset]) -> Result<LabeledDataset> {
        if parts.is_empty() {
            return Err(CoreError::domain("no sources to concatenate"));
        }
        let dim = parts[0].dim();
        let mut data = Vec::new();
        let mut source_id = Vec::new();
        let mut labels = match &parts[0].labels {
            Labels::Real(_) => Labels::Real(Vec::new()),
            Labels::Class(_) => Labels::Class(Vec::new()),
        };
        for (j, p) in parts.iter().enumerate() {
            if p.dim() != dim {
                return Err(CoreError::config("source feature dims differ"));
            }
            data.extend_from_slice(p.features.data());
            source_id.extend(std::iter::repeat(j as u32).take(p.len()));
            match (&mut labels, &p.labels) {
                (Labels::Real(acc), Labels::Real(v)) => acc.extend_from_slice(v),
                (Labels::Class(acc), Labels::Class(v)) => acc.extend_from_slice(v),
                _ => return Err(CoreError::config("mixed label kinds across sources")),
            }
        }
        let rows = source_id.len();
        LabeledDataset::new(DenseMatrix::from_vec(rows, dim, data)?, labels, Some(source_id))
    }

    /// Export as CSV: x0..x{d-1}, label, source_id.
    pub fn to_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (0..self.dim()).map(|j| format!("x{j}")).collect();
        header.push("label".into());
        header.push("source_id".into());
        wtr.write_record(&header).map_err(io_of_csv)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.features.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(match &self.labels {
                Labels::Real(v) => v[i].to_string(),
                Labels::Class(v) => v[i].to_string(),
            });
            rec.push(self.source_id[i].to_string());
            wtr.write_record(&rec).map_err(io_of_csv)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn io_of_csv(e: csv::Error) -> CoreError {
    CoreError::Io(std::io::Error::new(std::io::ErrorKind::Other, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralKind {
    /// x restricted to the zeros of sin(pi x) (the integer grid).
    Low,
    /// x uniform over the range; targets carry the sinc ripple.
    High,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralSpec {
    pub kind: SpectralKind,
    pub n: usize,
    pub noise_sigma: f64,
    pub x_range: (f64, f64),
    pub seed: u64,
}

impl SpectralSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(CoreError::domain("spectral n must be positive"));
        }
        if self.noise_sigma < 0.0 {
            return Err(CoreError::domain("noise_sigma must be >= 0"));
        }
        if self.x_range.0 >= self.x_range.1 {
            return Err(CoreError::domain("x_range must be a nonempty interval"));
        }
        Ok(())
    }
}

/// sin(pi x)/(pi x), defined as 1 at x = 0.
pub fn sinc_pi(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
    }
}

/// Synthetic regression data on y = x + sinc(pi x) + noise; the low-frequency
/// variant samples only at integer x where the sinc term vanishes, giving
/// y = x + noise.
pub fn gen_spectral(spec: &SpectralSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let mut rng = crate::rng::stream(spec.seed, "spectral", 0);
    let (lo, hi) = spec.x_range;
    let mut xs = Vec::with_capacity(spec.n);
    let mut ys = Vec::with_capacity(spec.n);
    match spec.kind {
        SpectralKind::Low => {
            let imin = lo.ceil() as i64;
            let imax = hi.floor() as i64;
            if imin > imax {
                return Err(CoreError::domain(format!(
                    "no integer grid points in [{lo}, {hi}]"
                )));
            }
            for _ in 0..spec.n {
                let x = rng.gen_range(imin..=imax) as f64;
                let noise = if spec.noise_sigma > 0.0 {
                    spec.noise_sigma * gaussian(&mut rng)
                } else {
                    0.0
                };
                xs.push(x);
                ys.push(x + noise);
            }
        }
        SpectralKind::High => {
            for _ in 0..spec.n {
                let x = rng.gen_range(lo..hi);
                let noise = if spec.noise_sigma > 0.0 {
                    spec.noise_sigma * gaussian(&mut rng)
                } else {
                    0.0
                };
                xs.push(x);
                ys.push(x + sinc_pi(x) + noise);
            }
        }
    }
    LabeledDataset::new(DenseMatrix::from_vec(spec.n, 1, xs)?, Labels::Real(ys), None)
}

/// Standard normal via Box-Muller (one draw per call, deterministic stream).
fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Gaussian class clusters: class c's examples are N(mu_c, I) with the means
/// drawn once (seeded) at radius `separation` from the origin. Labels cycle
/// 0..classes so the corpus is exactly balanced.
pub fn gen_blobs(
    n: usize,
    classes: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if n == 0 || classes < 2 || dim == 0 {
        return Err(CoreError::domain("blobs need n >= 1, classes >= 2, dim >= 1"));
    }
    let mut mean_rng = crate::rng::stream(seed, "blob-means", 0);
    let means: Vec<Vec<f64>> = (0..classes)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| gaussian(&mut mean_rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            v.into_iter().map(|x| x / norm * separation).collect()
        })
        .collect();
    let mut rng = crate::rng::stream(seed, "blob-draws", 0);
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        labels.push(c as u32);
        for j in 0..dim {
            data.push(means[c][j] + gaussian(&mut rng));
        }
    }
    LabeledDataset::new(DenseMatrix::from_vec(n, dim, data)?, Labels::Class(labels), None)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourcePartition {
    pub group_sizes: Vec<usize>,
    pub noise_levels: Vec<f64>,
}

impl SourcePartition {
    pub fn validate(&self, dataset_len: usize) -> Result<()> {
        if self.group_sizes.len() != self.noise_levels.len() {
            return Err(CoreError::config("group_sizes and noise_levels lengths differ"));
        }
        if self.group_sizes.iter().sum::<usize>() != dataset_len {
            return Err(CoreError::config("group sizes must sum to dataset size"));
        }
        if self.noise_levels.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(CoreError::config("noise levels must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Flip labels within consecutive groups: group j (the next `group_sizes[j]`
/// examples) gets exactly round(noise_j * size_j) labels resampled uniformly
/// from the other classes. Features are untouched.
pub fn inject_label_noise(
    ds: &LabeledDataset,
    groups: &SourcePartition,
    seed: u64,
) -> Result<LabeledDataset> {
    groups.validate(ds.len())?;
    let classes = match &ds.labels {
        Labels::Class(c) => c.clone(),
        Labels::Real(_) => {
            return Err(CoreError::domain("label noise requires classification labels"))
        }
    };
    let num_classes = ds
        .labels
        .class_count()
        .filter(|&c| c >= 2)
        .ok_or_else(|| CoreError::domain("need at least two classes to flip labels"))?;

    let mut labels = classes;
    let mut rng = crate::rng::stream(seed, "label-noise", 0);
    let mut start = 0usize;
    for (j, (&size, &noise)) in groups.group_sizes.iter().zip(&groups.noise_levels).enumerate() {
        let flip = (noise * size as f64).round() as usize;
        let mut idx: Vec<usize> = (start..start + size).collect();
        idx.shuffle(&mut rng);
        for &i in idx.iter().take(flip) {
            let old = labels[i];
            // uniform over the other num_classes - 1 labels
            let mut pick = rng.gen_range(0..num_classes as u32 - 1);
            if pick >= old {
                pick += 1;
            }
            labels[i] = pick;
        }
        start += size;
        let _ = j;
    }
    Ok(LabeledDataset {
        features: ds.features.clone(),
        labels: Labels::Class(labels),
        source_id: ds.source_id.clone(),
    })
}

/// Deterministic shuffled split. Boundaries are round(cumulative fraction * n);
/// the unassigned remainder becomes a final part when `keep_remainder` is set.
pub fn split(
    ds: &LabeledDataset,
    fractions: &[f64],
    seed: u64,
    keep_remainder: bool,
) -> Result<Vec<LabeledDataset>> {
    if fractions.is_empty() || fractions.iter().any(|&f| f <= 0.0) {
        return Err(CoreError::domain("fractions must be positive"));
    }
    let total: f64 = fractions.iter().sum();
    if total > 1.0 + 1e-9 {
        return Err(CoreError::domain(format!("fractions sum to {total} > 1")));
    }
    let n = ds.len();
    let mut perm: Vec<u32> = (0..n as u32).collect();
    perm.shuffle(&mut crate::rng::stream(seed, "split", 0));
    let mut parts = Vec::new();
    let mut cum = 0.0;
    let mut start = 0usize;
    for &f in fractions {
        cum += f;
        let end = ((cum * n as f64).round() as usize).min(n);
        parts.push(ds.subset(&perm[start..end]));
        start = end;
    }
    if keep_remainder && start < n {
        parts.push(ds.subset(&perm[start..]));
    }
    Ok(parts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_class_ds(n: usize) -> LabeledDataset {
        let features = DenseMatrix::from_vec(n, 2, (0..2 * n).map(|i| i as f64).collect()).unwrap();
        let labels = Labels::Class((0..n).map(|i| (i % 10) as u32).collect());
        LabeledDataset::new(features, labels, None).unwrap()
    }

    #[test]
    fn sinc_is_one_at_zero_and_zero_at_integers() {
        assert_eq!(sinc_pi(0.0), 1.0);
        assert!(sinc_pi(1.0).abs() < 1e-15);
        assert!(sinc_pi(-3.0).abs() < 1e-15);
    }

    #[test]
    fn gen_spectral_high_at_zero_noise_lies_on_curve() {
        let spec = SpectralSpec {
            kind: SpectralKind::High,
            n: 500,
            noise_sigma: 0.0,
            x_range: (-10.0, 10.0),
            seed: 3,
        };
        let ds = gen_spectral(&spec).unwrap();
        let Labels::Real(ys) = &ds.labels else { panic!() };
        for i in 0..ds.len() {
            let x = ds.features.get(i, 0);
            assert!((ys[i] - (x + sinc_pi(x))).abs() < 1e-12);
        }
    }

    #[test]
    fn gen_spectral_low_noiseless_is_exactly_linear() {
        let spec = SpectralSpec {
            kind: SpectralKind::Low,
            n: 200,
            noise_sigma: 0.0,
            x_range: (-10.0, 10.0),
            seed: 4,
        };
        let ds = gen_spectral(&spec).unwrap();
        let Labels::Real(ys) = &ds.labels else { panic!() };
        for i in 0..ds.len() {
            let x = ds.features.get(i, 0);
            assert_eq!(x, x.round());
            assert_eq!(ys[i], x);
        }
    }

    #[test]
    fn gen_spectral_noise_variance_matches_sigma() {
        let spec = SpectralSpec {
            kind: SpectralKind::High,
            n: 50_000,
            noise_sigma: 0.1,
            x_range: (-10.0, 10.0),
            seed: 5,
        };
        let ds = gen_spectral(&spec).unwrap();
        let Labels::Real(ys) = &ds.labels else { panic!() };
        let residuals: Vec<f64> = (0..ds.len())
            .map(|i| {
                let x = ds.features.get(i, 0);
                ys[i] - x - sinc_pi(x)
            })
            .collect();
        let mean = residuals.iter().sum::<f64>() / residuals.len() as f64;
        let var = residuals.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>()
            / (residuals.len() - 1) as f64;
        assert!((var - 0.01).abs() / 0.01 < 0.05, "sample variance {var}");
    }

    #[test]
    fn gen_spectral_low_empty_grid_errors() {
        let spec = SpectralSpec {
            kind: SpectralKind::Low,
            n: 10,
            noise_sigma: 0.0,
            x_range: (0.3, 0.7),
            seed: 0,
        };
        assert!(gen_spectral(&spec).is_err());
    }

    #[test]
    fn noise_zero_keeps_dataset_unchanged() {
        let ds = toy_class_ds(100);
        let part = SourcePartition { group_sizes: vec![100], noise_levels: vec![0.0] };
        let noisy = inject_label_noise(&ds, &part, 7).unwrap();
        assert_eq!(ds, noisy);
    }

    #[test]
    fn noise_one_flips_every_label_in_group() {
        let ds = toy_class_ds(200);
        let part = SourcePartition { group_sizes: vec![100, 100], noise_levels: vec![1.0, 0.0] };
        let noisy = inject_label_noise(&ds, &part, 7).unwrap();
        let (Labels::Class(orig), Labels::Class(new)) = (&ds.labels, &noisy.labels) else {
            panic!()
        };
        for i in 0..100 {
            assert_ne!(orig[i], new[i], "index {i} not flipped");
        }
        for i in 100..200 {
            assert_eq!(orig[i], new[i]);
        }
        assert_eq!(ds.features, noisy.features);
    }

    #[test]
    fn noise_count_uses_round_half_up() {
        let ds = toy_class_ds(9000);
        let part = SourcePartition { group_sizes: vec![9000], noise_levels: vec![0.225] };
        let noisy = inject_label_noise(&ds, &part, 11).unwrap();
        let (Labels::Class(orig), Labels::Class(new)) = (&ds.labels, &noisy.labels) else {
            panic!()
        };
        let flipped = orig.iter().zip(new).filter(|(a, b)| a != b).count();
        assert_eq!(flipped, 2025);
    }

    #[test]
    fn noise_on_regression_labels_is_domain_error() {
        let features = DenseMatrix::zeros(4, 1);
        let ds = LabeledDataset::new(features, Labels::Real(vec![0.0; 4]), None).unwrap();
        let part = SourcePartition { group_sizes: vec![4], noise_levels: vec![0.5] };
        assert!(matches!(inject_label_noise(&ds, &part, 0), Err(CoreError::Domain(_))));
    }

    #[test]
    fn split_sizes_and_determinism() {
        let ds = toy_class_ds(50_000);
        let parts = split(&ds, &[0.9, 0.1], 42, false).unwrap();
        assert_eq!(parts[0].len(), 45_000);
        assert_eq!(parts[1].len(), 5_000);
        let parts2 = split(&ds, &[0.9, 0.1], 42, false).unwrap();
        assert_eq!(parts[0], parts2[0]);
        assert_eq!(parts[1], parts2[1]);
    }

    #[test]
    fn split_full_fraction_is_permutation() {
        let ds = toy_class_ds(100);
        let parts = split(&ds, &[1.0], 1, false).unwrap();
        assert_eq!(parts[0].len(), 100);
        let Labels::Class(c) = &parts[0].labels else { panic!() };
        let mut seen: Vec<u32> = c.clone();
        seen.sort_unstable();
        let mut orig: Vec<u32> = (0..100).map(|i| (i % 10) as u32).collect();
        orig.sort_unstable();
        assert_eq!(seen, orig);
    }

    #[test]
    fn split_rejects_oversubscription() {
        let ds = toy_class_ds(10);
        assert!(split(&ds, &[0.8, 0.4], 0, false).is_err());
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let ds = toy_class_ds(3);
        let mut buf = Vec::new();
        ds.to_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "x0,x1,label,source_id");
        assert_eq!(lines.count(), 3);
    }
}
