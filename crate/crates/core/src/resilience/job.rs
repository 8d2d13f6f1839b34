use std::sync::Arc;

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;

use super::recovery::{inject_fault, recover, PhaseLog, RecoveryContext};
use super::{cycle_advantage, validate_schedule, Accounting, FaultEvent, RecoveryConfig};
use crate::error::{Error, Result};
use crate::grid::{GridHierarchy, RegionMask, SubdomainId};
use crate::operators::LevelRegion;
use crate::problem::ProblemSpec;
use crate::solvers::{
    solve_to_tol, CycleSpec, HookEvent, RegionMultigrid, SolveTrace, StoppingRule,
};

/// A problem on a fixed hierarchy with a fixed global solver.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub hierarchy: Arc<GridHierarchy>,
    pub problem: ProblemSpec,
    pub cycle: CycleSpec,
    pub stop: StoppingRule,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FaultRecord {
    pub event: FaultEvent,
    /// Global cycle after which the fault fired; `None` if the solve
    /// converged first.
    pub fired_after_cycle: Option<usize>,
    pub fired_at_time: f64,
    pub zeroed: usize,
    pub restored: usize,
    pub n_i: usize,
    pub n_f: usize,
    pub recovery_time: f64,
    pub healthy_residuals: Vec<f64>,
    pub faulty_residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryReport {
    pub recovery: RecoveryConfig,
    pub accounting: Accounting,
    pub k_free: usize,
    pub k_faulty: usize,
    /// Fault time used for the cycle advantage (the first event).
    pub k_f: Option<usize>,
    #[serde(serialize_with = "ratio_string")]
    pub kappa: Ratio<i64>,
    pub logical_time: f64,
    pub extra_logical_time: f64,
    pub converged: bool,
    pub faults: Vec<FaultRecord>,
    #[serde(skip)]
    pub trace: SolveTrace,
    #[serde(skip)]
    pub baseline: SolveTrace,
}

fn ratio_string<S: serde::Serializer>(
    r: &Ratio<i64>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&r.to_string())
}

impl RecoveryReport {
    pub fn kappa_f64(&self) -> f64 {
        self.kappa.to_f64().unwrap_or(f64::NAN)
    }
}

impl Experiment {
    pub fn new(
        hierarchy: Arc<GridHierarchy>,
        problem: ProblemSpec,
        cycle: CycleSpec,
        stop: StoppingRule,
        seed: u64,
    ) -> Self {
        Self {
            hierarchy,
            problem,
            cycle,
            stop,
            seed,
        }
    }

    /// Region split used for traces: the union of all faulty sets.
    pub fn trace_mask(&self, schedule: &[FaultEvent]) -> Result<Option<RegionMask>> {
        if schedule.is_empty() {
            return Ok(None);
        }
        let mut ids: Vec<SubdomainId> = schedule
            .iter()
            .flat_map(|e| e.faulty_subdomains.iter().copied())
            .collect();
        ids.sort_unstable();
        ids.dedup();
        self.hierarchy.region_masks(&ids).map(Some)
    }

    /// Fault-free solve.
    pub fn baseline(&self, mask: Option<&RegionMask>) -> Result<SolveTrace> {
        let h = &self.hierarchy;
        let (mut u, mut f) = self.problem.initial_state(h.grid(h.finest()), self.seed);
        let mut mg = RegionMultigrid::full(h, self.cycle)?;
        solve_to_tol(&mut mg, &mut u, &mut f, &self.stop, mask, |_| Ok(None))
    }

    /// Global cycling with the scheduled faults and recoveries.
    ///
    /// An event fires at the first cycle boundary where the logical clock has
    /// reached its `after_cycle`. A fault scheduled before the previous
    /// recovery has finished is a schedule conflict.
    pub fn run_faulty_job(
        &self,
        schedule: &[FaultEvent],
        cfg: &RecoveryConfig,
        accounting: Accounting,
        baseline: Option<&SolveTrace>,
    ) -> Result<RecoveryReport> {
        let h = &*self.hierarchy;
        cfg.validate()?;
        validate_schedule(schedule, h.subdomain_count())?;
        let trace_mask = self.trace_mask(schedule)?;
        let owned;
        let baseline = match baseline {
            Some(b) => b,
            None => {
                owned = self.baseline(trace_mask.as_ref())?;
                &owned
            }
        };
        let masks = schedule
            .iter()
            .map(|e| h.region_masks(&e.faulty_subdomains))
            .collect::<Result<Vec<_>>>()?;
        let full = LevelRegion::full(h, h.finest())?;
        let (mut u, mut f) = self.problem.initial_state(h.grid(h.finest()), self.seed);
        let mut mg = RegionMultigrid::full(h, self.cycle)?;

        let mut records: Vec<FaultRecord> = schedule
            .iter()
            .map(|e| FaultRecord {
                event: e.clone(),
                fired_after_cycle: None,
                fired_at_time: 0.0,
                zeroed: 0,
                restored: 0,
                n_i: cfg.n_i(),
                n_f: cfg.n_f(),
                recovery_time: cfg.recovery_time().to_f64().unwrap_or(f64::NAN),
                healthy_residuals: Vec::new(),
                faulty_residuals: Vec::new(),
            })
            .collect();
        let mut next = 0usize;
        let mut extra = Ratio::<u64>::zero();
        let mut busy_until = Ratio::<u64>::zero();

        let trace = solve_to_tol(
            &mut mg,
            &mut u,
            &mut f,
            &self.stop,
            trace_mask.as_ref(),
            |state| {
                let mut fired = false;
                let mut spent = Ratio::<u64>::zero();
                while next < schedule.len() {
                    let clock = Ratio::from_integer(state.cycle as u64) + extra;
                    let ev = &schedule[next];
                    let due = Ratio::from_integer(ev.after_cycle as u64);
                    if due > clock {
                        break;
                    }
                    if due < busy_until {
                        return Err(Error::ScheduleConflict {
                            after_cycle: ev.after_cycle,
                            busy_until: busy_until.to_f64().unwrap_or(f64::NAN),
                        });
                    }
                    let mask = &masks[next];
                    let injection = inject_fault(h, &self.problem, state.u, state.f, mask)?;
                    state.multigrid.reset();
                    let ctx = RecoveryContext {
                        hierarchy: h,
                        problem: &self.problem,
                        cycle: &self.cycle,
                        mask,
                        full: &full,
                    };
                    let PhaseLog { healthy, faulty } = recover(&ctx, cfg, state.u, state.f)?;
                    let rec = &mut records[next];
                    rec.fired_after_cycle = Some(state.cycle);
                    rec.fired_at_time = clock.to_f64().unwrap_or(f64::NAN);
                    rec.zeroed = injection.zeroed;
                    rec.restored = injection.restored;
                    rec.healthy_residuals = healthy;
                    rec.faulty_residuals = faulty;
                    let t = cfg.recovery_time();
                    extra += t;
                    spent += t;
                    busy_until = clock + t;
                    fired = true;
                    next += 1;
                }
                Ok(fired.then(|| HookEvent {
                    logical_time: spent.to_f64().unwrap_or(f64::NAN),
                }))
            },
        )?;

        let k_free = baseline.iterations.unwrap_or(baseline.cycles);
        let global = trace.iterations.unwrap_or(trace.cycles);
        let fired = records
            .iter()
            .filter(|r| r.fired_after_cycle.is_some())
            .count();
        let k_faulty = global + fired * cfg.charge(accounting);
        let k_f = records
            .first()
            .and_then(|r| r.fired_after_cycle.map(|_| r.event.after_cycle));
        let kappa = match k_f {
            Some(k) => cycle_advantage(k_faulty, k_free, k)?,
            None => Ratio::zero(),
        };
        let logical_time = trace.points.last().map_or(0.0, |p| p.logical_time);
        let baseline_time = baseline.points.last().map_or(0.0, |p| p.logical_time);
        Ok(RecoveryReport {
            recovery: cfg.clone(),
            accounting,
            k_free,
            k_faulty,
            k_f,
            kappa,
            logical_time,
            extra_logical_time: logical_time - baseline_time,
            converged: trace.converged() && baseline.converged(),
            faults: records,
            trace,
            baseline: baseline.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PartitionSpec;
    use crate::resilience::Strategy;
    use crate::solvers::LocalSolver;

    fn experiment(levels: usize) -> Experiment {
        let h = GridHierarchy::build(PartitionSpec::new([3, 3, 3], 2, levels)).unwrap();
        Experiment::new(
            Arc::new(h),
            ProblemSpec::default(),
            CycleSpec::default(),
            StoppingRule::default(),
            0,
        )
    }

    #[test]
    fn empty_schedule_has_zero_advantage() {
        let e = experiment(2);
        let r = e
            .run_faulty_job(&[], &RecoveryConfig::none(), Accounting::Global, None)
            .unwrap();
        assert_eq!(r.k_faulty, r.k_free);
        assert_eq!(r.kappa, Ratio::zero());
        assert!(r.converged);
        assert_eq!(r.trace, r.baseline);
    }

    #[test]
    fn do_nothing_costs_extra_cycles() {
        let e = experiment(2);
        let r = e
            .run_faulty_job(
                &[FaultEvent::new(4, vec![13])],
                &RecoveryConfig::none(),
                Accounting::Global,
                None,
            )
            .unwrap();
        assert!(r.k_faulty > r.k_free);
        assert_eq!(r.faults[0].fired_after_cycle, Some(4));
        assert_eq!(r.kappa, cycle_advantage(r.k_faulty, r.k_free, 4).unwrap());
    }

    #[test]
    fn runs_are_deterministic() {
        let e = experiment(2);
        let cfg = RecoveryConfig::with_superman(Strategy::DN, 2, 2);
        let a = e
            .run_faulty_job(
                &[FaultEvent::new(3, vec![0])],
                &cfg,
                Accounting::Global,
                None,
            )
            .unwrap();
        let b = e
            .run_faulty_job(
                &[FaultEvent::new(3, vec![0])],
                &cfg,
                Accounting::Global,
                None,
            )
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn overlapping_faults_conflict() {
        let e = experiment(2);
        let cfg = RecoveryConfig::with_superman(Strategy::DD, 4, 1);
        let schedule = [FaultEvent::new(3, vec![0]), FaultEvent::new(5, vec![26])];
        assert!(matches!(
            e.run_faulty_job(&schedule, &cfg, Accounting::Global, None),
            Err(Error::ScheduleConflict { after_cycle: 5, .. })
        ));
        // back-to-back is allowed
        let schedule = [FaultEvent::new(3, vec![0]), FaultEvent::new(7, vec![26])];
        let r = e
            .run_faulty_job(&schedule, &cfg, Accounting::Global, None)
            .unwrap();
        assert!(r.faults.iter().all(|f| f.fired_after_cycle.is_some()));
    }

    #[test]
    fn logical_time_includes_recovery() {
        let e = experiment(2);
        let mut cfg = RecoveryConfig::local(LocalSolver::Vcycle, 3);
        cfg.eta = Ratio::from_integer(2);
        let r = e
            .run_faulty_job(
                &[FaultEvent::new(3, vec![0])],
                &cfg,
                Accounting::Global,
                None,
            )
            .unwrap();
        let global = r.trace.iterations.unwrap() as f64;
        assert_eq!(r.logical_time, global + 1.5);
        assert_eq!(r.k_faulty, r.trace.iterations.unwrap() + 2);
        let t1 = e
            .run_faulty_job(
                &[FaultEvent::new(3, vec![0])],
                &cfg,
                Accounting::Table1,
                None,
            )
            .unwrap();
        assert_eq!(t1.k_faulty, r.trace.iterations.unwrap());
    }

    #[test]
    fn fault_after_convergence_never_fires() {
        let e = experiment(2);
        let r = e
            .run_faulty_job(
                &[FaultEvent::new(150, vec![0])],
                &RecoveryConfig::none(),
                Accounting::Global,
                None,
            )
            .unwrap();
        assert_eq!(r.faults[0].fired_after_cycle, None);
        assert_eq!(r.kappa, Ratio::zero());
    }
}
