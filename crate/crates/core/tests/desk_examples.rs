//! Behaviour on the default (3,3,3), n0 = 2, L = 4 geometry.

use std::sync::{Arc, OnceLock};

use ftmg::grid::{GridHierarchy, PartitionSpec};
use ftmg::harness::{
    read_table, read_trace, run_scenario, run_sweep, FaultSite, FaultSpec, RunOptions, Scenario,
    ScenarioConfig, SweepAxes, SweepSpec, TABLE_FILE,
};
use ftmg::problem::ProblemSpec;
use ftmg::resilience::{
    Accounting, Experiment, FaultEvent, RecoveryConfig, RecoveryReport, Strategy,
};
use ftmg::solvers::{CycleSpec, LocalSolver, SolveTrace, StoppingRule};
use num_rational::Ratio;

const DESK: PartitionSpec = PartitionSpec {
    subdomains: [3, 3, 3],
    base_cells: 2,
    levels: 4,
};

struct Desk {
    exp: Experiment,
    baseline: SolveTrace,
}

fn desk() -> &'static Desk {
    static DESK_RUN: OnceLock<Desk> = OnceLock::new();
    DESK_RUN.get_or_init(|| {
        let exp = Experiment::new(
            Arc::new(GridHierarchy::build(DESK).unwrap()),
            ProblemSpec::default(),
            CycleSpec::default(),
            StoppingRule::default(),
            0,
        );
        let baseline = exp.baseline(None).unwrap();
        Desk { exp, baseline }
    })
}

fn fault(k_f: usize, s: Scenario, cfg: &RecoveryConfig, acc: Accounting) -> RecoveryReport {
    let d = desk();
    d.exp
        .run_faulty_job(
            &[FaultEvent::new(k_f, vec![s.subdomain(&DESK)])],
            cfg,
            acc,
            Some(&d.baseline),
        )
        .unwrap()
}

fn near(kappa: Ratio<i64>, target: Ratio<i64>, k_f: i64) -> bool {
    let d = kappa - target;
    d <= Ratio::new(1, k_f) && -d <= Ratio::new(1, k_f)
}

fn zero() -> Ratio<i64> {
    Ratio::from_integer(0)
}

#[test]
fn fault_free_solve_converges_in_desk_range() {
    let t = &desk().baseline;
    let k = t.iterations.unwrap();
    assert!((10..=25).contains(&k), "{k}");
    let r: Vec<f64> = t.points.iter().map(|p| p.rel_residual).collect();
    assert!(r[2..].windows(2).all(|w| w[1] < w[0]), "{r:?}");
    assert_eq!(&desk().exp.baseline(None).unwrap(), t);
}

#[test]
fn local_v_cycles_match_table_one_pattern() {
    let r3 = fault(
        5,
        Scenario::Center,
        &RecoveryConfig::local(LocalSolver::Vcycle, 3),
        Accounting::Table1,
    );
    assert!(near(r3.kappa, zero(), 5), "{}", r3.kappa);
    let r2 = fault(
        5,
        Scenario::Center,
        &RecoveryConfig::local(LocalSolver::Vcycle, 2),
        Accounting::Table1,
    );
    assert!(near(r2.kappa, Ratio::new(1, 5), 5), "{}", r2.kappa);
    let r7 = fault(
        7,
        Scenario::Center,
        &RecoveryConfig::local(LocalSolver::Vcycle, 5),
        Accounting::Table1,
    );
    assert!(near(r7.kappa, zero(), 7), "{}", r7.kappa);
}

#[test]
fn local_recovery_is_monotone_in_steps() {
    let k: Vec<usize> = (1..=6)
        .map(|n| {
            fault(
                5,
                Scenario::Corner,
                &RecoveryConfig::local(LocalSolver::Vcycle, n),
                Accounting::Table1,
            )
            .k_faulty
        })
        .collect();
    assert!(k.windows(2).all(|w| w[1] <= w[0]), "{k:?}");
}

#[test]
fn floating_fault_strategy_ordering() {
    let kappa = |st| {
        fault(
            5,
            Scenario::Center,
            &RecoveryConfig::with_superman(st, 1, 2),
            Accounting::Global,
        )
        .kappa
    };
    let (lr, dd, dn) = (
        kappa(Strategy::LR),
        kappa(Strategy::DD),
        kappa(Strategy::DN),
    );
    assert!(dn <= dd && dd <= lr, "LR {lr} DD {dd} DN {dn}");
}

#[test]
fn dirichlet_dirichlet_floating_fault_bound() {
    let cfg = RecoveryConfig::with_superman(Strategy::DD, 1, 2);
    let r = fault(5, Scenario::Center, &cfg, Accounting::Global);
    assert!(r.kappa <= Ratio::new(2, 5), "DD kappa {}", r.kappa);
}

#[test]
fn strong_superman_compensates_the_fault() {
    for n_i in [2, 3] {
        let cfg = RecoveryConfig::with_superman(Strategy::DN, n_i, 4);
        assert!(cfg.n_f() >= 5);
        let r = fault(5, Scenario::Center, &cfg, Accounting::Global);
        assert!(near(r.kappa, zero(), 5), "n_I={n_i}: {}", r.kappa);
    }
}

#[test]
fn zero_interface_steps_is_do_nothing() {
    let none = fault(
        5,
        Scenario::Edge,
        &RecoveryConfig::none(),
        Accounting::Global,
    );
    for st in [Strategy::DD, Strategy::DN] {
        let r = fault(
            5,
            Scenario::Edge,
            &RecoveryConfig::with_superman(st, 0, 2),
            Accounting::Global,
        );
        assert_eq!(r.trace, none.trace);
        assert_eq!(r.k_faulty, none.k_faulty);
    }
}

fn opts(dir: &std::path::Path) -> RunOptions {
    RunOptions {
        output_dir: dir.to_path_buf(),
        jobs: 1,
    }
}

#[test]
fn do_nothing_trace_shows_pollution() {
    let mut cfg = ScenarioConfig::new(DESK);
    cfg.faults.push(FaultSpec {
        after_cycle: 5,
        subdomains: FaultSite::Named(Scenario::Center),
    });
    let dir = tempfile::tempdir().unwrap();
    run_scenario(&cfg, &opts(dir.path())).unwrap();
    let trace =
        read_trace(std::fs::File::open(dir.path().join("traces/run0000.csv")).unwrap()).unwrap();
    let at = trace.iter().rposition(|p| p.cycle == 5).unwrap();
    assert_eq!(trace[at - 1].cycle, 5);
    // injection leaves the healthy residual alone; the next cycle raises it
    assert_eq!(trace[at].res_healthy, trace[at - 1].res_healthy);
    assert!(trace[at + 1].res_healthy > trace[at].res_healthy);
    assert!(trace[at].res_faulty > trace[at - 1].res_faulty);
}

#[test]
fn local_cycle_sweep_has_similar_curves() {
    let mut base = ScenarioConfig::new(DESK);
    base.recovery.strategy = Strategy::LR;
    base.accounting = Accounting::Table1;
    let spec = SweepSpec {
        base,
        axes: SweepAxes {
            local_solver: vec![
                LocalSolver::Vcycle,
                LocalSolver::Wcycle,
                LocalSolver::Fcycle,
            ],
            n_f: vec![1, 2, 3, 4],
            k_f: vec![5],
            ..SweepAxes::default()
        },
        trace_regions: false,
    };
    let dir = tempfile::tempdir().unwrap();
    let out = run_sweep(&spec, &opts(dir.path())).unwrap();
    assert_eq!(out.rows.len(), 12);
    let free = out.rows[0].k_free;
    assert!(out.rows.iter().all(|r| r.is_ok() && r.k_free == free));
    for n in 0..4 {
        let k: Vec<usize> = (0..3)
            .map(|s| out.rows[4 * s + n].k_faulty.unwrap())
            .collect();
        assert!(
            k.iter().max().unwrap() - k.iter().min().unwrap() <= 1,
            "n_F={}: {k:?}",
            n + 1
        );
    }
    for r in &out.rows {
        let k_f = r.k_f.unwrap() as f64;
        let identity = (r.k_faulty.unwrap() as f64 - r.k_free.unwrap() as f64) / k_f;
        assert_eq!(r.kappa.unwrap(), identity);
    }
    let parsed = read_table(std::fs::File::open(dir.path().join(TABLE_FILE)).unwrap()).unwrap();
    assert_eq!(parsed, out.rows);
}

#[test]
fn single_point_sweep_equals_run() {
    let mut base = ScenarioConfig::new(DESK);
    base.faults.push(FaultSpec {
        after_cycle: 7,
        subdomains: FaultSite::Named(Scenario::Corner),
    });
    base.recovery = RecoveryConfig::local(LocalSolver::Vcycle, 7);
    base.accounting = Accounting::Table1;
    let spec = SweepSpec {
        base: base.clone(),
        axes: SweepAxes {
            n_f: vec![7],
            ..SweepAxes::default()
        },
        trace_regions: false,
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let run = run_scenario(&base, &opts(a.path())).unwrap();
    let sweep = run_sweep(&spec, &opts(b.path())).unwrap();
    assert_eq!(run.rows, sweep.rows);
    assert_eq!(
        std::fs::read(a.path().join(TABLE_FILE)).unwrap(),
        std::fs::read(b.path().join(TABLE_FILE)).unwrap()
    );
    assert!(near(
        Ratio::new(
            run.rows[0].k_faulty.unwrap() as i64 - run.rows[0].k_free.unwrap() as i64,
            7
        ),
        zero(),
        7
    ));
}

#[test]
fn dirichlet_neumann_row_is_minimal() {
    let mut base = ScenarioConfig::new(DESK);
    base.recovery = RecoveryConfig::with_superman(Strategy::LR, 2, 2);
    let spec = SweepSpec {
        base,
        axes: SweepAxes {
            strategy: vec![Strategy::LR, Strategy::DD, Strategy::DN],
            scenario: vec![FaultSite::Named(Scenario::Center)],
            k_f: vec![5],
            ..SweepAxes::default()
        },
        trace_regions: false,
    };
    let dir = tempfile::tempdir().unwrap();
    let out = run_sweep(&spec, &opts(dir.path())).unwrap();
    let k: Vec<usize> = out.rows.iter().map(|r| r.k_faulty.unwrap()).collect();
    assert_eq!(out.rows[2].strategy, "DN");
    assert_eq!(k[2], *k.iter().min().unwrap(), "{k:?}");
}
