use std::path::{Path, PathBuf};

use num_rational::Ratio;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{PartitionSpec, SubdomainId};
use crate::problem::ProblemSpec;
use crate::resilience::{
    ratio_serde, validate_schedule, Accounting, FaultEvent, RecoveryConfig, Strategy,
};
use crate::solvers::{CycleSpec, LocalSolver, StoppingRule};

/// Named faulty-subdomain positions. Each picks one subdomain by its
/// partition coordinates, using `P_i / 2` for a centered axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// `(0, 0, 0)`: three faces on the boundary.
    Corner,
    /// `(P_x/2, 0, 0)`: two faces on the boundary.
    Edge,
    /// `(P_x/2, P_y/2, 0)`: one face on the boundary.
    Face,
    /// `(P_x/2, P_y/2, P_z/2)`: fully interior for `P_i >= 3`.
    Center,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Corner => "corner",
            Scenario::Edge => "edge",
            Scenario::Face => "face",
            Scenario::Center => "center",
        }
    }

    pub fn subdomain(self, grid: &PartitionSpec) -> SubdomainId {
        let [px, py, pz] = grid.subdomains;
        let c = match self {
            Scenario::Corner => [0, 0, 0],
            Scenario::Edge => [px / 2, 0, 0],
            Scenario::Face => [px / 2, py / 2, 0],
            Scenario::Center => [px / 2, py / 2, pz / 2],
        };
        grid.subdomain_id(c)
    }
}

/// A faulty set: a named position or explicit subdomain ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FaultSite {
    Named(Scenario),
    Ids(Vec<SubdomainId>),
}

impl FaultSite {
    pub fn resolve(&self, grid: &PartitionSpec) -> Vec<SubdomainId> {
        match self {
            FaultSite::Named(s) => vec![s.subdomain(grid)],
            FaultSite::Ids(ids) => ids.clone(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            FaultSite::Named(s) => s.name().to_string(),
            FaultSite::Ids(ids) => ids
                .iter()
                .map(|i| i.to_string())
                .collect::<Vec<_>>()
                .join(" "),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub after_cycle: usize,
    pub subdomains: FaultSite,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub cycle: CycleSpec,
    pub stop: StoppingRule,
}

/// One experiment: geometry, problem, global solver, fault schedule and
/// recovery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub grid: PartitionSpec,
    #[serde(default)]
    pub problem: ProblemSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
    #[serde(default)]
    pub recovery: RecoveryConfig,
    #[serde(default)]
    pub accounting: Accounting,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn new(grid: PartitionSpec) -> Self {
        Self {
            name: None,
            grid,
            problem: ProblemSpec::default(),
            solver: SolverConfig::default(),
            faults: Vec::new(),
            recovery: RecoveryConfig::default(),
            accounting: Accounting::default(),
            seed: 0,
            output_dir: None,
        }
    }

    pub fn schedule(&self) -> Vec<FaultEvent> {
        self.faults
            .iter()
            .map(|f| FaultEvent::new(f.after_cycle, f.subdomains.resolve(&self.grid)))
            .collect()
    }

    /// Label of the faulty positions, one entry per event.
    pub fn scenario_label(&self) -> String {
        if self.faults.is_empty() {
            return "none".to_string();
        }
        self.faults
            .iter()
            .map(|f| f.subdomains.label())
            .collect::<Vec<_>>()
            .join(";")
    }

    /// Semantic checks the schema cannot express.
    pub fn validate(&self) -> Result<()> {
        self.grid
            .validate()
            .map_err(|e| Error::config("grid", e.to_string()))?;
        let stop = &self.solver.stop;
        if !(stop.rel_residual_tol >= 0.0 && stop.rel_residual_tol < 1.0) {
            return Err(Error::config(
                "solver.stop.rel_residual_tol",
                "must lie in [0, 1)",
            ));
        }
        if stop.max_cycles == 0 {
            return Err(Error::config(
                "solver.stop.max_cycles",
                "must be at least 1",
            ));
        }
        let count = self.grid.subdomain_count();
        for (i, f) in self.faults.iter().enumerate() {
            let ids = f.subdomains.resolve(&self.grid);
            if let Some(id) = ids.iter().find(|&&id| id >= count) {
                return Err(Error::config(
                    format!("faults[{i}].subdomains"),
                    format!("subdomain {id} out of range (partition has {count})"),
                ));
            }
        }
        validate_schedule(&self.schedule(), count)
            .map_err(|e| Error::config("faults", e.to_string()))?;
        self.recovery.validate()
    }
}

/// Serde wrapper so `eta` lists accept `"3/2"` and integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Eta(#[serde(with = "ratio_serde")] pub Ratio<u64>);

/// Lists to cross. An empty list keeps the base value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepAxes {
    pub scenario: Vec<FaultSite>,
    pub k_f: Vec<usize>,
    pub strategy: Vec<Strategy>,
    pub local_solver: Vec<LocalSolver>,
    pub eta: Vec<Eta>,
    pub n_i: Vec<usize>,
    pub n_f: Vec<usize>,
}

impl SweepAxes {
    pub fn is_empty(&self) -> bool {
        self.scenario.is_empty()
            && self.k_f.is_empty()
            && self.strategy.is_empty()
            && self.local_solver.is_empty()
            && self.eta.is_empty()
            && self.n_i.is_empty()
            && self.n_f.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base: ScenarioConfig,
    pub axes: SweepAxes,
    /// Write one trace file per run.
    #[serde(default)]
    pub trace_regions: bool,
}

/// Default fault time when an axis needs a fault the base does not have.
pub const DEFAULT_FAULT_CYCLE: usize = 5;

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() {
            return Err(Error::config("axes", "at least one axis must be non-empty"));
        }
        self.base.validate()
    }

    /// Cross product in the fixed order scenario, k_f, strategy,
    /// local_solver, eta, n_i, n_f (last varies fastest). Runs are not
    /// validated here.
    pub fn expand(&self) -> Vec<ScenarioConfig> {
        fn axis<T: Clone>(v: &[T]) -> Vec<Option<T>> {
            if v.is_empty() {
                vec![None]
            } else {
                v.iter().cloned().map(Some).collect()
            }
        }
        let a = &self.axes;
        let mut runs = Vec::new();
        for sc in axis(&a.scenario) {
            for kf in axis(&a.k_f) {
                for st in axis(&a.strategy) {
                    for ls in axis(&a.local_solver) {
                        for eta in axis(&a.eta) {
                            for ni in axis(&a.n_i) {
                                for nf in axis(&a.n_f) {
                                    let mut cfg = self.base.clone();
                                    if (sc.is_some() || kf.is_some()) && cfg.faults.is_empty() {
                                        cfg.faults.push(FaultSpec {
                                            after_cycle: DEFAULT_FAULT_CYCLE,
                                            subdomains: FaultSite::Named(Scenario::Center),
                                        });
                                    }
                                    if let Some(s) = &sc {
                                        cfg.faults[0].subdomains = s.clone();
                                    }
                                    if let Some(k) = kf {
                                        cfg.faults[0].after_cycle = k;
                                    }
                                    if let Some(s) = st {
                                        cfg.recovery.strategy = s;
                                    }
                                    if let Some(l) = ls {
                                        cfg.recovery.local_solver = l;
                                    }
                                    if let Some(e) = eta {
                                        cfg.recovery.eta = e.0;
                                    }
                                    if let Some(n) = ni {
                                        cfg.recovery.n_i = n;
                                    }
                                    if let Some(n) = nf {
                                        cfg.recovery.n_f = Some(n);
                                    }
                                    runs.push(cfg);
                                }
                            }
                        }
                    }
                }
            }
        }
        runs
    }
}

/// Reads a JSON document, unwrapping a manifest's `config` member.
fn read_document(path: &Path) -> Result<serde_json::Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config("$", format!("{}: {e}", path.display())))?;
    let mut value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::config("$", format!("{}: {e}", path.display())))?;
    if let Some(obj) = value.as_object_mut() {
        if obj.contains_key("manifest_version") {
            if let Some(cfg) = obj.remove("config") {
                return Ok(cfg);
            }
            return Err(Error::config("config", "manifest has no config"));
        }
    }
    Ok(value)
}

/// Deserializes with the failing field path in the error.
pub fn from_value<T: DeserializeOwned>(value: serde_json::Value) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { "$".to_string() } else { path };
        Error::config(path, e.into_inner().to_string())
    })
}

pub fn parse_config(value: serde_json::Value) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig = from_value(value)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_sweep(value: serde_json::Value) -> Result<SweepSpec> {
    let spec: SweepSpec = from_value(value)?;
    spec.validate()?;
    Ok(spec)
}

/// Loads and validates a scenario file (or a manifest written by a run).
pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    parse_config(read_document(path)?)
}

/// Loads and validates a sweep file (or a manifest written by a sweep).
pub fn load_sweep(path: &Path) -> Result<SweepSpec> {
    parse_sweep(read_document(path)?)
}

/// Either kind of configuration file.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Document {
    Scenario(ScenarioConfig),
    Sweep(SweepSpec),
}

/// Loads a scenario or, if the document has `axes`, a sweep.
pub fn load_document(path: &Path) -> Result<Document> {
    let value = read_document(path)?;
    if value.get("axes").is_some() {
        parse_sweep(value).map(Document::Sweep)
    } else {
        parse_config(value).map(Document::Scenario)
    }
}
