//! Experiment recipes: configuration, cell execution, summary output, and
//! aggregation. Every recipe is a deterministic function of its TOML config
//! and seed list; cells write one summary row each plus per-iteration traces
//! and policy snapshots, and a ledger asserts that training consumption stays
//! within the declared budgets.

mod config;
mod report;
mod select;
mod sources;
mod spectral;
mod studies;

pub use config::{
    DataSource, DecodeKind, ExperimentConfig, ExperimentKind, GenKind, SelectMethod,
    SourceMethod,
};
pub use report::{report, ReportTables};
pub use select::{select_cell_name, SelectArtifacts};
pub use spectral::SpectralRun;

use crate::budget::Ledger;
use crate::error::{CoreError, Result};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

/// One summary line per experiment cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub budget: u64,
    /// Initial subset fraction / ratio, or "-" where not applicable.
    pub init: String,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
    pub samples_used: u64,
    pub wall_ms: u64,
}

#[derive(Debug)]
pub struct RunReport {
    pub rows: Vec<SummaryRow>,
    /// (cell name, error message) for cells that failed; the run continues.
    pub failures: Vec<(String, String)>,
    pub out_dir: PathBuf,
}

impl RunReport {
    /// Process exit code: 0 all cells passed, 2 some cells failed.
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            0
        } else {
            2
        }
    }
}

/// Resolve the output directory: explicit override > CADS_OUT_ROOT env root >
/// config > ./runs/<kind>.
pub fn resolve_out_dir(cfg: &ExperimentConfig, cli_out: Option<&Path>) -> PathBuf {
    if let Some(p) = cli_out {
        return p.to_path_buf();
    }
    let rel = cfg
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(cfg.kind.dir_name()));
    match std::env::var_os("CADS_OUT_ROOT") {
        Some(root) => PathBuf::from(root).join(rel),
        None => rel,
    }
}

pub(crate) struct OutputLayout {
    pub root: PathBuf,
}

impl OutputLayout {
    pub fn create(root: &Path) -> Result<Self> {
        for sub in ["traces", "policies", "fits"] {
            std::fs::create_dir_all(root.join(sub))?;
        }
        Ok(OutputLayout { root: root.to_path_buf() })
    }

    pub fn trace_path(&self, cell: &str) -> PathBuf {
        self.root.join("traces").join(format!("{cell}.jsonl"))
    }

    pub fn policy_path(&self, cell: &str) -> PathBuf {
        self.root.join("policies").join(format!("{cell}.json"))
    }

    pub fn fit_path(&self, name: &str) -> PathBuf {
        self.root.join("fits").join(format!("{name}.json"))
    }

    pub fn fit_aux_path(&self, name: &str, suffix: &str) -> PathBuf {
        self.root.join("fits").join(format!("{name}.{suffix}"))
    }

    pub fn write_trace(&self, cell: &str, records: &[impl Serialize]) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(self.trace_path(cell))?);
        for rec in records {
            serde_json::to_writer(&mut out, rec)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_policy(&self, cell: &str, policy: &impl Serialize) -> Result<()> {
        std::fs::write(self.policy_path(cell), serde_json::to_string_pretty(policy)?)?;
        Ok(())
    }
}

/// Execute every cell of the configured experiment. Failures are recorded and
/// the remaining cells still run.
pub fn run_experiment(cfg: &ExperimentConfig, cli_out: Option<&Path>) -> Result<RunReport> {
    cfg.validate()?;
    let out_dir = resolve_out_dir(cfg, cli_out);
    let layout = OutputLayout::create(&out_dir)?;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut global = Ledger::new(None);

    match cfg.kind {
        ExperimentKind::Spectral => {
            spectral::run(cfg, &layout, &mut rows, &mut failures, &mut global)?
        }
        ExperimentKind::MnistSelect => {
            select::run(cfg, &layout, &mut rows, &mut failures, &mut global)?
        }
        ExperimentKind::NoisySources => {
            sources::run(cfg, &layout, &mut rows, &mut failures, &mut global)?
        }
        ExperimentKind::SurrogateStudy => {
            studies::run_surrogate_study(cfg, &layout, &mut rows, &mut failures, &mut global)?
        }
        ExperimentKind::CostStudy => {
            studies::run_cost_study(cfg, &layout, &mut rows, &mut failures, &mut global)?
        }
    }

    global.assert_within()?;
    write_summary(&rows, &out_dir.join("summary.csv"))?;
    Ok(RunReport { rows, failures, out_dir })
}

pub fn write_summary(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(std::fs::File::create(path)?);
    wtr.write_record(["method", "budget", "init", "seed", "metric", "value", "samples_used", "wall_ms"])
        .map_err(csv_io)?;
    for r in rows {
        wtr.write_record([
            r.method.clone(),
            r.budget.to_string(),
            r.init.clone(),
            r.seed.to_string(),
            r.metric.clone(),
            r.value.to_string(),
            r.samples_used.to_string(),
            r.wall_ms.to_string(),
        ])
        .map_err(csv_io)?;
    }
    wtr.flush()?;
    Ok(())
}

pub(crate) fn csv_io(e: csv::Error) -> CoreError {
    CoreError::Io(std::io::Error::new(std::io::ErrorKind::Other, e))
}

/// Format an init fraction for stable cell names and CSV values.
pub(crate) fn fmt_init(v: f64) -> String {
    format!("{v}")
}

pub(crate) struct CellTimer(std::time::Instant);

impl CellTimer {
    pub fn start() -> Self {
        CellTimer(std::time::Instant::now())
    }

    pub fn wall_ms(&self) -> u64 {
        self.0.elapsed().as_millis() as u64
    }
}

/// Generate a dataset described by the config's `[gen]` section and write it
/// as CSV into the output directory.
pub fn gen_data(cfg: &ExperimentConfig, seed_override: Option<u64>, out_dir: &Path) -> Result<PathBuf> {
    let gen = cfg
        .gen
        .as_ref()
        .ok_or_else(|| CoreError::config("gen: section required for gen-data"))?;
    let seed = seed_override.unwrap_or(gen.seed);
    let ds = match gen.dataset {
        GenKind::SpectralLow | GenKind::SpectralHigh => {
            let p = &cfg.spectral;
            crate::data::gen_spectral(&crate::data::SpectralSpec {
                kind: if gen.dataset == GenKind::SpectralLow {
                    crate::data::SpectralKind::Low
                } else {
                    crate::data::SpectralKind::High
                },
                n: gen.n,
                noise_sigma: p.noise_sigma,
                x_range: p.x_range,
                seed,
            })?
        }
        GenKind::Digits => crate::data::digits::gen_digits(gen.n, seed, &cfg.select.digits)?,
        GenKind::BlobSources => {
            let p = &cfg.sources;
            let n_sources = p.noise_levels.len();
            let per = gen.n / n_sources.max(1);
            let clean = crate::data::gen_blobs(per * n_sources, p.classes, p.dim, p.separation, seed)?;
            let source_id: Vec<u32> = (0..per * n_sources).map(|i| (i / per) as u32).collect();
            let grouped = crate::data::LabeledDataset::new(
                clean.features.clone(),
                clean.labels.clone(),
                Some(source_id),
            )?;
            let partition = crate::data::SourcePartition {
                group_sizes: vec![per; n_sources],
                noise_levels: p.noise_levels.clone(),
            };
            crate::data::inject_label_noise(&grouped, &partition, crate::rng::child_seed(seed, "noise", 0))?
        }
    };
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join(&gen.out);
    ds.to_csv(std::fs::File::create(&path)?)?;
    Ok(path)
}

/// Collect probes for the select corpus and persist the fitted surrogate
/// (JSON) plus the probe table (CSV). The fit can be reused by later runs via
/// `surrogate.reuse_fit`.
pub fn fit_surrogate_cmd(
    cfg: &ExperimentConfig,
    seed_override: Option<u64>,
    out_dir: &Path,
) -> Result<(PathBuf, PathBuf)> {
    cfg.select.validate_public()?;
    std::fs::create_dir_all(out_dir)?;
    let layout = OutputLayout::create(out_dir)?;
    let mut cfg = cfg.clone();
    if let Some(s) = seed_override {
        cfg.select.pool_seed = s;
    }
    cfg.surrogate.reuse_fit = None;
    let ctx = select::build_select_context(&cfg.select)?;
    let mut global = Ledger::new(None);
    let _fit = select::get_surrogate(&cfg, &ctx, &layout, &mut global)?;
    Ok((
        layout.fit_path("select_surrogate"),
        layout.fit_aux_path("select_surrogate", "probes.csv"),
    ))
}

/// Run one cell body, recording a failure instead of aborting the experiment.
pub(crate) fn guard_cell<F>(
    name: &str,
    failures: &mut Vec<(String, String)>,
    body: F,
) -> Option<Vec<SummaryRow>>
where
    F: FnOnce() -> Result<Vec<SummaryRow>>,
{
    match body() {
        Ok(rows) => Some(rows),
        Err(e) => {
            log::error!("cell {name} failed: {e}");
            failures.push((name.to_string(), e.to_string()));
            None
        }
    }
}
