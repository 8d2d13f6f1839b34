//! Configuration loading, scenario and sweep execution, and CSV/JSON output.
//!
//! An output directory holds
//!
//! * `kappa_table.csv`, one row per run, columns in [`KAPPA_COLUMNS`] order;
//! * `traces/baseline.csv` and `traces/<run_id>.csv`, columns in
//!   [`TRACE_COLUMNS`] order;
//! * `manifest.json` with the resolved configuration, tool versions and the
//!   SHA-256 of every file above. Loading the manifest as a config repeats the
//!   experiment.

mod config;

pub use config::{
    from_value, load_config, load_document, load_sweep, parse_config, parse_sweep, Document, Eta,
    FaultSite, FaultSpec, Scenario, ScenarioConfig, SolverConfig, SweepAxes, SweepSpec,
    DEFAULT_FAULT_CYCLE,
};

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::GridHierarchy;
use crate::resilience::{Accounting, Experiment, RecoveryReport};
use crate::solvers::{SolveTrace, TracePoint};

pub const KAPPA_COLUMNS: [&str; 17] = [
    "run_id",
    "scenario",
    "strategy",
    "local_solver",
    "fault_cycles",
    "k_f",
    "n_i",
    "n_f",
    "eta",
    "accounting",
    "k_free",
    "k_faulty",
    "kappa",
    "kappa_exact",
    "logical_time",
    "extra_logical_time",
    "status",
];

pub const TRACE_COLUMNS: [&str; 6] = [
    "cycle",
    "rel_residual",
    "res_healthy",
    "res_faulty",
    "res_interface",
    "logical_time",
];

pub const MANIFEST_VERSION: u32 = 1;
pub const TABLE_FILE: &str = "kappa_table.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const BASELINE_TRACE: &str = "traces/baseline.csv";

pub const STATUS_OK: &str = "ok";
pub const STATUS_NOT_CONVERGED: &str = "not_converged";

/// One row of the cycle-advantage table. Numeric cells are empty on error
/// rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaRow {
    pub run_id: String,
    /// Faulty positions, one per event, `;`-separated.
    pub scenario: String,
    pub strategy: String,
    pub local_solver: String,
    /// Scheduled `after_cycle` values, `;`-separated.
    pub fault_cycles: String,
    /// Fault time used for kappa; empty if no fault fired.
    pub k_f: Option<usize>,
    pub n_i: usize,
    pub n_f: usize,
    pub eta: String,
    pub accounting: String,
    pub k_free: Option<usize>,
    pub k_faulty: Option<usize>,
    pub kappa: Option<f64>,
    /// `kappa` as an exact fraction.
    pub kappa_exact: String,
    pub logical_time: Option<f64>,
    pub extra_logical_time: Option<f64>,
    /// `ok`, `not_converged` or `error: <message>`.
    pub status: String,
}

impl KappaRow {
    fn keyed(run_id: &str, cfg: &ScenarioConfig) -> Self {
        Self {
            run_id: run_id.to_string(),
            scenario: cfg.scenario_label(),
            strategy: cfg.recovery.strategy.name().to_string(),
            local_solver: cfg.recovery.local_solver.name().to_string(),
            fault_cycles: cfg
                .faults
                .iter()
                .map(|f| f.after_cycle.to_string())
                .collect::<Vec<_>>()
                .join(";"),
            k_f: None,
            n_i: cfg.recovery.n_i(),
            n_f: cfg.recovery.n_f(),
            eta: cfg.recovery.eta.to_string(),
            accounting: cfg.accounting.name().to_string(),
            k_free: None,
            k_faulty: None,
            kappa: None,
            kappa_exact: String::new(),
            logical_time: None,
            extra_logical_time: None,
            status: String::new(),
        }
    }

    pub fn from_report(run_id: &str, cfg: &ScenarioConfig, report: &RecoveryReport) -> Self {
        Self {
            k_f: report.k_f,
            k_free: Some(report.k_free),
            k_faulty: Some(report.k_faulty),
            kappa: Some(report.kappa_f64()),
            kappa_exact: report.kappa.to_string(),
            logical_time: Some(report.logical_time),
            extra_logical_time: Some(report.extra_logical_time),
            status: if report.converged {
                STATUS_OK
            } else {
                STATUS_NOT_CONVERGED
            }
            .to_string(),
            ..Self::keyed(run_id, cfg)
        }
    }

    pub fn from_error(run_id: &str, cfg: &ScenarioConfig, err: &Error) -> Self {
        Self {
            status: format!("error: {err}"),
            ..Self::keyed(run_id, cfg)
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == STATUS_OK
    }
}

/// Writes the table with its header, also when `rows` is empty.
pub fn emit_table<W: Write>(rows: &[KappaRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(KAPPA_COLUMNS)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_table<R: Read>(input: R) -> Result<Vec<KappaRow>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

pub fn emit_trace<W: Write>(trace: &SolveTrace, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(TRACE_COLUMNS)?;
    for p in &trace.points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace<R: Read>(input: R) -> Result<Vec<TracePoint>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

/// Execution settings that do not change results.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub output_dir: PathBuf,
    /// Worker threads for sweeps; 0 picks the machine default.
    pub jobs: usize,
}

/// What a command wrote.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputBundle {
    pub dir: PathBuf,
    pub rows: Vec<KappaRow>,
    pub baseline: SolveTrace,
    /// Relative path to SHA-256 hex digest.
    pub checksums: BTreeMap<String, String>,
}

impl OutputBundle {
    /// Baseline and every successful run converged.
    pub fn converged(&self) -> bool {
        self.baseline.converged() && self.rows.iter().all(|r| r.status != STATUS_NOT_CONVERGED)
    }

    pub fn errors(&self) -> impl Iterator<Item = &KappaRow> {
        self.rows.iter().filter(|r| r.status.starts_with("error"))
    }
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    manifest_version: u32,
    command: &'a str,
    versions: BTreeMap<&'a str, &'a str>,
    config: &'a C,
    files: &'a BTreeMap<String, String>,
}

/// Buffers files so their digests can go into the manifest.
struct Bundle {
    dir: PathBuf,
    files: BTreeMap<String, Vec<u8>>,
}

impl Bundle {
    fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            files: BTreeMap::new(),
        }
    }

    fn table(&mut self, rows: &[KappaRow]) -> Result<()> {
        let mut buf = Vec::new();
        emit_table(rows, &mut buf)?;
        self.files.insert(TABLE_FILE.to_string(), buf);
        Ok(())
    }

    fn trace(&mut self, rel: String, trace: &SolveTrace) -> Result<()> {
        let mut buf = Vec::new();
        emit_trace(trace, &mut buf)?;
        self.files.insert(rel, buf);
        Ok(())
    }

    fn finish<C: Serialize>(self, command: &str, config: &C) -> Result<BTreeMap<String, String>> {
        std::fs::create_dir_all(self.dir.join("traces"))?;
        let mut sums = BTreeMap::new();
        for (rel, bytes) in &self.files {
            std::fs::write(self.dir.join(rel), bytes)?;
            sums.insert(rel.clone(), hex::encode(Sha256::digest(bytes)));
        }
        let manifest = Manifest {
            manifest_version: MANIFEST_VERSION,
            command,
            versions: BTreeMap::from([("ftmg", env!("CARGO_PKG_VERSION")), ("csv_format", "1")]),
            config,
            files: &sums,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(self.dir.join(MANIFEST_FILE), text)?;
        Ok(sums)
    }
}

fn experiment(cfg: &ScenarioConfig) -> Result<Experiment> {
    let h = GridHierarchy::build(cfg.grid)?;
    Ok(Experiment::new(
        Arc::new(h),
        cfg.problem,
        cfg.solver.cycle,
        cfg.solver.stop,
        cfg.seed,
    ))
}

/// The manifest records results-relevant settings only.
fn resolved(cfg: &ScenarioConfig) -> ScenarioConfig {
    ScenarioConfig {
        output_dir: None,
        ..cfg.clone()
    }
}

fn run_id(index: usize) -> String {
    format!("run{index:04}")
}

/// Fault-free solve only: writes the baseline trace.
pub fn run_baseline(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<OutputBundle> {
    cfg.validate()?;
    let exp = experiment(cfg)?;
    let mask = exp.trace_mask(&cfg.schedule())?;
    let baseline = exp.baseline(mask.as_ref())?;
    let mut bundle = Bundle::new(&opts.output_dir);
    bundle.trace(BASELINE_TRACE.to_string(), &baseline)?;
    let checksums = bundle.finish("baseline", &resolved(cfg))?;
    Ok(OutputBundle {
        dir: opts.output_dir.clone(),
        rows: Vec::new(),
        baseline,
        checksums,
    })
}

/// Baseline plus the configured job; writes the table row and both traces.
pub fn run_scenario(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<OutputBundle> {
    cfg.validate()?;
    let exp = experiment(cfg)?;
    let schedule = cfg.schedule();
    let mask = exp.trace_mask(&schedule)?;
    let baseline = exp.baseline(mask.as_ref())?;
    let report = exp.run_faulty_job(&schedule, &cfg.recovery, cfg.accounting, Some(&baseline))?;
    let id = run_id(0);
    let rows = vec![KappaRow::from_report(&id, cfg, &report)];
    let mut bundle = Bundle::new(&opts.output_dir);
    bundle.table(&rows)?;
    bundle.trace(BASELINE_TRACE.to_string(), &baseline)?;
    bundle.trace(format!("traces/{id}.csv"), &report.trace)?;
    let checksums = bundle.finish("run", &resolved(cfg))?;
    Ok(OutputBundle {
        dir: opts.output_dir.clone(),
        rows,
        baseline,
        checksums,
    })
}

/// Cross product of the sweep axes over one shared baseline. Runs execute
/// on `opts.jobs` workers; failures become error rows.
pub fn run_sweep(spec: &SweepSpec, opts: &RunOptions) -> Result<OutputBundle> {
    spec.validate()?;
    let exp = experiment(&spec.base)?;
    let baseline = exp.baseline(None)?;
    let runs = spec.expand();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()?;
    let results: Vec<(KappaRow, Option<SolveTrace>)> = pool.install(|| {
        runs.par_iter()
            .enumerate()
            .map(|(i, cfg)| {
                let id = run_id(i);
                let outcome = cfg.validate().and_then(|_| {
                    exp.run_faulty_job(
                        &cfg.schedule(),
                        &cfg.recovery,
                        cfg.accounting,
                        Some(&baseline),
                    )
                });
                match outcome {
                    Ok(report) => (KappaRow::from_report(&id, cfg, &report), Some(report.trace)),
                    Err(e) => (KappaRow::from_error(&id, cfg, &e), None),
                }
            })
            .collect()
    });
    let mut bundle = Bundle::new(&opts.output_dir);
    bundle.trace(BASELINE_TRACE.to_string(), &baseline)?;
    if spec.trace_regions {
        for (row, trace) in &results {
            if let Some(t) = trace {
                bundle.trace(format!("traces/{}.csv", row.run_id), t)?;
            }
        }
    }
    let rows: Vec<KappaRow> = results.into_iter().map(|(r, _)| r).collect();
    bundle.table(&rows)?;
    let resolved = SweepSpec {
        base: resolved(&spec.base),
        ..spec.clone()
    };
    let checksums = bundle.finish("sweep", &resolved)?;
    Ok(OutputBundle {
        dir: opts.output_dir.clone(),
        rows,
        baseline,
        checksums,
    })
}

/// Applies a command-line accounting override to a scenario.
pub fn with_accounting(mut cfg: ScenarioConfig, accounting: Option<Accounting>) -> ScenarioConfig {
    if let Some(a) = accounting {
        cfg.accounting = a;
    }
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PartitionSpec;
    use crate::resilience::Strategy;
    use crate::solvers::LocalSolver;

    fn small() -> ScenarioConfig {
        ScenarioConfig::new(PartitionSpec::new([3, 3, 3], 2, 2))
    }

    #[test]
    fn empty_table_is_header_only() {
        let mut buf = Vec::new();
        emit_table(&[], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            KAPPA_COLUMNS.join(",") + "\n"
        );
        assert!(read_table(&b"run_id\n"[..]).unwrap().is_empty());
    }

    #[test]
    fn trace_header_is_fixed() {
        let mut buf = Vec::new();
        emit_trace(&SolveTrace::default(), &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            TRACE_COLUMNS.join(",") + "\n"
        );
    }

    #[test]
    fn fault_free_run_has_zero_kappa() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_scenario(
            &small(),
            &RunOptions {
                output_dir: dir.path().to_path_buf(),
                jobs: 1,
            },
        )
        .unwrap();
        assert_eq!(out.rows.len(), 1);
        assert_eq!(out.rows[0].kappa, Some(0.0));
        assert_eq!(out.rows[0].k_faulty, out.rows[0].k_free);
        assert!(out.converged());
        for rel in [TABLE_FILE, BASELINE_TRACE, "traces/run0000.csv"] {
            let bytes = std::fs::read(dir.path().join(rel)).unwrap();
            assert_eq!(out.checksums[rel], hex::encode(Sha256::digest(&bytes)));
        }
    }

    #[test]
    fn sweep_records_errors_and_continues() {
        let mut base = small();
        base.recovery.strategy = Strategy::DD;
        base.recovery.n_i = 2;
        let spec = SweepSpec {
            base,
            axes: SweepAxes {
                n_f: vec![1, 4],
                k_f: vec![3],
                ..SweepAxes::default()
            },
            trace_regions: false,
        };
        let dir = tempfile::tempdir().unwrap();
        let out = run_sweep(
            &spec,
            &RunOptions {
                output_dir: dir.path().to_path_buf(),
                jobs: 2,
            },
        )
        .unwrap();
        assert_eq!(out.rows.len(), 2);
        assert!(out.rows[0].status.starts_with("error"));
        assert!(out.rows[0].kappa.is_none());
        assert!(out.rows[1].is_ok());
        assert_eq!(out.errors().count(), 1);
        let parsed = read_table(std::fs::File::open(dir.path().join(TABLE_FILE)).unwrap()).unwrap();
        assert_eq!(parsed, out.rows);
    }

    #[test]
    fn manifest_reloads_as_config() {
        let mut cfg = small();
        cfg.faults.push(FaultSpec {
            after_cycle: 3,
            subdomains: FaultSite::Named(Scenario::Corner),
        });
        cfg.recovery = crate::resilience::RecoveryConfig::local(LocalSolver::Wcycle, 2);
        let dir = tempfile::tempdir().unwrap();
        let opts = RunOptions {
            output_dir: dir.path().to_path_buf(),
            jobs: 1,
        };
        let first = run_scenario(&cfg, &opts).unwrap();
        let again = load_config(&dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(again, cfg);
        let dir2 = tempfile::tempdir().unwrap();
        let second = run_scenario(
            &again,
            &RunOptions {
                output_dir: dir2.path().to_path_buf(),
                jobs: 1,
            },
        )
        .unwrap();
        assert_eq!(first.checksums, second.checksums);
    }
}
