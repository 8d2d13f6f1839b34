//! Fail-stop faults, recovery strategies, the logical clock and the cycle
//! advantage metric.

mod job;
mod recovery;

pub use job::{Experiment, FaultRecord, RecoveryReport};
pub use recovery::{
    compute_neumann_flux, inject_fault, neumann_rhs, recover, recover_dd, recover_dn,
    recover_local, Injection, PhaseLog, RecoveryContext,
};

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::grid::SubdomainId;
use crate::solvers::LocalSolver;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    /// Do-nothing: zero the lost values and keep cycling.
    None,
    /// Local Dirichlet solve on the faulty region, healthy side idle.
    LR,
    /// Decoupled Dirichlet solves on both sides with the interface frozen.
    DD,
    /// Healthy Neumann solve driving faulty Dirichlet solves.
    DN,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::None, Strategy::LR, Strategy::DD, Strategy::DN];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::None => "None",
            Strategy::LR => "LR",
            Strategy::DD => "DD",
            Strategy::DN => "DN",
        }
    }
}

/// How recovery work enters `k_faulty`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Accounting {
    /// Global cycles plus the recovery charge of every fault.
    #[default]
    Global,
    /// Global cycles only.
    Table1,
}

impl Accounting {
    pub fn name(self) -> &'static str {
        match self {
            Accounting::Global => "global",
            Accounting::Table1 => "table1",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultEvent {
    pub after_cycle: usize,
    pub faulty_subdomains: Vec<SubdomainId>,
}

impl FaultEvent {
    pub fn new(after_cycle: usize, faulty_subdomains: Vec<SubdomainId>) -> Self {
        Self {
            after_cycle,
            faulty_subdomains,
        }
    }
}

/// Checks ordering and ids of a fault schedule.
pub fn validate_schedule(schedule: &[FaultEvent], subdomains: usize) -> Result<()> {
    for (i, ev) in schedule.iter().enumerate() {
        if ev.after_cycle == 0 {
            return Err(Error::InvalidSchedule(format!(
                "event {i}: after_cycle must be at least 1"
            )));
        }
        if ev.faulty_subdomains.is_empty() {
            return Err(Error::InvalidSchedule(format!(
                "event {i}: empty faulty set"
            )));
        }
        if let Some(&id) = ev.faulty_subdomains.iter().find(|&&s| s >= subdomains) {
            return Err(Error::InvalidSubdomain {
                id,
                count: subdomains,
            });
        }
        if ev.faulty_subdomains.len() >= subdomains {
            let mut ids = ev.faulty_subdomains.clone();
            ids.sort_unstable();
            ids.dedup();
            if ids.len() == subdomains {
                return Err(Error::NoHealthyRegion);
            }
        }
        if i > 0 && ev.after_cycle <= schedule[i - 1].after_cycle {
            return Err(Error::InvalidSchedule(format!(
                "event {i}: after_cycle {} not after {}",
                ev.after_cycle,
                schedule[i - 1].after_cycle
            )));
        }
    }
    Ok(())
}

/// Serializes a ratio as `"p/q"` (or `"p"`) and accepts strings or integers.
pub mod ratio_serde {
    use super::*;

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Int(u64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(r: &Ratio<u64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&r.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Ratio<u64>, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Int(n) => Ok(Ratio::from_integer(n)),
            Repr::Text(t) => {
                let r: Ratio<u64> = t
                    .trim()
                    .parse()
                    .map_err(|_| serde::de::Error::custom(format!("not a ratio: {t:?}")))?;
                Ok(r)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecoveryConfig {
    pub strategy: Strategy,
    pub local_solver: LocalSolver,
    pub n_i: usize,
    /// Faulty-side steps; derived from `n_i` and `eta` when absent.
    pub n_f: Option<usize>,
    #[serde(with = "ratio_serde")]
    pub eta: Ratio<u64>,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::None,
            local_solver: LocalSolver::Vcycle,
            n_i: 0,
            n_f: None,
            eta: Ratio::from_integer(1),
        }
    }
}

impl RecoveryConfig {
    pub fn none() -> Self {
        Self::default()
    }

    /// Local recovery with an explicit step count.
    pub fn local(solver: LocalSolver, n_f: usize) -> Self {
        Self {
            strategy: Strategy::LR,
            local_solver: solver,
            n_f: Some(n_f),
            ..Self::default()
        }
    }

    /// Recovery with `n_f` derived from `n_i` and `eta`.
    pub fn with_superman(strategy: Strategy, n_i: usize, eta: u64) -> Self {
        Self {
            strategy,
            n_i,
            eta: Ratio::from_integer(eta),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if *self.eta.denom() == 0 || self.eta < Ratio::from_integer(1) {
            return Err(Error::config(
                "recovery.eta",
                format!("must be at least 1, got {}", self.eta),
            ));
        }
        if self.strategy == Strategy::None && (self.n_i > 0 || self.n_f.is_some_and(|n| n > 0)) {
            return Err(Error::config(
                "recovery.strategy",
                "None takes no recovery steps",
            ));
        }
        if matches!(self.strategy, Strategy::DD | Strategy::DN)
            && self.n_f.is_some_and(|n| n < self.n_i)
        {
            return Err(Error::config(
                "recovery.n_f",
                "must not be smaller than n_i",
            ));
        }
        Ok(())
    }

    pub fn n_i(&self) -> usize {
        match self.strategy {
            Strategy::None => 0,
            _ => self.n_i,
        }
    }

    /// Faulty-side step count, `ceil(n_i * eta)` unless given.
    pub fn n_f(&self) -> usize {
        match (self.strategy, self.n_f) {
            (Strategy::None, _) => 0,
            (_, Some(n)) => n,
            (_, None) => (Ratio::from_integer(self.n_i as u64) * self.eta)
                .ceil()
                .to_integer() as usize,
        }
    }

    /// Logical time of one recovery phase.
    pub fn recovery_time(&self) -> Ratio<u64> {
        match self.strategy {
            Strategy::None => Ratio::zero(),
            Strategy::LR => Ratio::from_integer(self.n_f() as u64) / self.eta,
            Strategy::DD | Strategy::DN => Ratio::from_integer(self.n_i as u64),
        }
    }

    /// Cycles added to `k_faulty` per fault.
    pub fn charge(&self, accounting: Accounting) -> usize {
        match (accounting, self.strategy) {
            (Accounting::Table1, _) | (_, Strategy::None) => 0,
            (Accounting::Global, Strategy::LR) if self.n_f.is_some() => {
                self.recovery_time().ceil().to_integer() as usize
            }
            (Accounting::Global, _) => self.n_i,
        }
    }
}

/// Simulation time in units of one global cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct LogicalClock {
    elapsed: Ratio<u64>,
}

impl LogicalClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn elapsed(&self) -> Ratio<u64> {
        self.elapsed
    }

    pub fn as_f64(&self) -> f64 {
        self.elapsed.to_f64().unwrap_or(f64::NAN)
    }

    pub fn advance(&mut self, by: Ratio<u64>) {
        self.elapsed += by;
    }

    pub fn tick(&mut self) {
        self.advance(Ratio::from_integer(1));
    }
}

/// `(k_faulty - k_free) / k_f`, exact.
pub fn cycle_advantage(k_faulty: usize, k_free: usize, k_f: usize) -> Result<Ratio<i64>> {
    if k_f == 0 {
        return Err(Error::ZeroFaultCycle);
    }
    Ok(Ratio::new(k_faulty as i64 - k_free as i64, k_f as i64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cycle_advantage_examples() {
        assert_eq!(cycle_advantage(25, 21, 5).unwrap(), Ratio::new(4, 5));
        assert_eq!(cycle_advantage(21, 11, 11).unwrap(), Ratio::new(10, 11));
        assert_eq!(cycle_advantage(17, 17, 3).unwrap(), Ratio::zero());
        assert_eq!(cycle_advantage(16, 17, 4).unwrap(), Ratio::new(-1, 4));
        assert!(matches!(
            cycle_advantage(1, 1, 0),
            Err(Error::ZeroFaultCycle)
        ));
    }

    #[test]
    fn n_f_is_ceiling_of_scaled_n_i() {
        let mut cfg = RecoveryConfig::with_superman(Strategy::DN, 3, 2);
        assert_eq!(cfg.n_f(), 6);
        cfg.eta = Ratio::new(3, 2);
        assert_eq!(cfg.n_f(), 5);
        cfg.n_i = 0;
        assert_eq!(cfg.n_f(), 0);
        assert_eq!(RecoveryConfig::none().n_f(), 0);
        assert_eq!(RecoveryConfig::local(LocalSolver::Vcycle, 4).n_f(), 4);
    }

    #[test]
    fn recovery_time_and_charges() {
        let dn = RecoveryConfig::with_superman(Strategy::DN, 2, 4);
        assert_eq!(dn.recovery_time(), Ratio::from_integer(2));
        assert_eq!(dn.charge(Accounting::Global), 2);
        assert_eq!(dn.charge(Accounting::Table1), 0);
        let mut lr = RecoveryConfig::local(LocalSolver::Vcycle, 5);
        lr.eta = Ratio::from_integer(2);
        assert_eq!(lr.recovery_time(), Ratio::new(5, 2));
        assert_eq!(lr.charge(Accounting::Global), 3);
        let lr_derived = RecoveryConfig::with_superman(Strategy::LR, 2, 2);
        assert_eq!(lr_derived.n_f(), 4);
        assert_eq!(lr_derived.charge(Accounting::Global), 2);
    }

    #[test]
    fn config_validation() {
        let mut cfg = RecoveryConfig::with_superman(Strategy::DD, 1, 1);
        cfg.eta = Ratio::new(1, 2);
        assert!(cfg.validate().unwrap_err().is_config());
        let mut none = RecoveryConfig::none();
        none.n_i = 2;
        assert!(none.validate().is_err());
        assert!(RecoveryConfig::with_superman(Strategy::DN, 3, 4)
            .validate()
            .is_ok());
    }

    #[test]
    fn eta_accepts_integers_and_fractions() {
        let cfg: RecoveryConfig =
            serde_json::from_str(r#"{"strategy":"DN","n_i":2,"eta":"3/2"}"#).unwrap();
        assert_eq!(cfg.eta, Ratio::new(3, 2));
        let cfg: RecoveryConfig =
            serde_json::from_str(r#"{"strategy":"DD","n_i":1,"eta":4}"#).unwrap();
        assert_eq!(cfg.eta, Ratio::from_integer(4));
        let back: RecoveryConfig =
            serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(serde_json::from_str::<RecoveryConfig>(r#"{"eta":"fast"}"#).is_err());
    }

    #[test]
    fn schedule_validation() {
        let ok = [FaultEvent::new(5, vec![0]), FaultEvent::new(9, vec![26])];
        assert!(validate_schedule(&ok, 27).is_ok());
        let unordered = [FaultEvent::new(9, vec![0]), FaultEvent::new(5, vec![1])];
        assert!(matches!(
            validate_schedule(&unordered, 27),
            Err(Error::InvalidSchedule(_))
        ));
        assert!(matches!(
            validate_schedule(&[FaultEvent::new(0, vec![0])], 27),
            Err(Error::InvalidSchedule(_))
        ));
        assert!(matches!(
            validate_schedule(&[FaultEvent::new(3, vec![27])], 27),
            Err(Error::InvalidSubdomain { .. })
        ));
        assert!(matches!(
            validate_schedule(&[FaultEvent::new(3, vec![0, 1])], 2),
            Err(Error::NoHealthyRegion)
        ));
    }

    #[test]
    fn clock_is_exact() {
        let mut c = LogicalClock::new();
        c.tick();
        c.advance(Ratio::new(5, 2));
        c.advance(Ratio::new(1, 2));
        assert_eq!(c.elapsed(), Ratio::from_integer(4));
        assert_eq!(c.as_f64(), 4.0);
    }
}
