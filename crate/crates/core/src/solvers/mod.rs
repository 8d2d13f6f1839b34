//! Multigrid cycles, Jacobi-PCG, smoother-only iteration and the traced
//! solve driver.

mod krylov;
mod multigrid;

pub use krylov::{pcg, KrylovSpec, LinearOperator, PcgOutcome, Preconditioner};
pub use multigrid::{CycleSpec, CycleType, RegionMultigrid};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::{GridHierarchy, Region, RegionMask};
use crate::operators::{LevelRegion, RegionKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoppingRule {
    pub rel_residual_tol: f64,
    pub max_cycles: usize,
}

impl Default for StoppingRule {
    fn default() -> Self {
        Self {
            rel_residual_tol: 1e-13,
            max_cycles: 200,
        }
    }
}

/// Iteration used on a recovery region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LocalSolver {
    Vcycle,
    Wcycle,
    Fcycle,
    #[serde(rename = "PCG")]
    Pcg,
    Smooth,
}

impl LocalSolver {
    pub const ALL: [LocalSolver; 5] = [
        LocalSolver::Vcycle,
        LocalSolver::Wcycle,
        LocalSolver::Fcycle,
        LocalSolver::Pcg,
        LocalSolver::Smooth,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LocalSolver::Vcycle => "Vcycle",
            LocalSolver::Wcycle => "Wcycle",
            LocalSolver::Fcycle => "Fcycle",
            LocalSolver::Pcg => "PCG",
            LocalSolver::Smooth => "Smooth",
        }
    }

    fn cycle_type(self) -> Option<CycleType> {
        match self {
            LocalSolver::Vcycle => Some(CycleType::V),
            LocalSolver::Wcycle => Some(CycleType::W),
            LocalSolver::Fcycle => Some(CycleType::F),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
enum Engine {
    Multigrid(RegionMultigrid),
    Single(LevelRegion),
}

/// A local solver bound to one region of the finest level.
#[derive(Debug, Clone)]
pub struct RegionSolver {
    kind: LocalSolver,
    krylov: KrylovSpec,
    engine: Engine,
}

impl RegionSolver {
    pub fn new(
        h: &GridHierarchy,
        region: RegionKind,
        mask: &RegionMask,
        kind: LocalSolver,
        base: &CycleSpec,
    ) -> Result<Self> {
        let engine = match kind.cycle_type() {
            Some(ct) => Engine::Multigrid(RegionMultigrid::build(
                h,
                region,
                mask,
                CycleSpec { kind: ct, ..*base },
            )?),
            None => Engine::Single(LevelRegion::build(h, h.finest(), region, mask)?),
        };
        Ok(Self {
            kind,
            krylov: base.coarse,
            engine,
        })
    }

    pub fn kind(&self) -> LocalSolver {
        self.kind
    }

    pub fn region(&self) -> &LevelRegion {
        match &self.engine {
            Engine::Multigrid(mg) => mg.finest(),
            Engine::Single(r) => r,
        }
    }

    /// `n` steps: cycles, PCG iterations (restarted per call) or smoothing
    /// sweeps.
    pub fn steps(&mut self, u: &mut [f64], f: &[f64], n: usize) -> Result<()> {
        if n == 0 {
            return Ok(());
        }
        match (&mut self.engine, self.kind) {
            (Engine::Multigrid(mg), _) => {
                for _ in 0..n {
                    mg.cycle(u, f)?;
                }
            }
            (Engine::Single(region), LocalSolver::Smooth) => smooth_only(region, u, f, n),
            (Engine::Single(region), _) => {
                let mut r = vec![0.0; u.len()];
                region.residual(u, f, &mut r);
                let mut b = vec![0.0; region.len()];
                region.gather(&r, &mut b);
                let mut e = vec![0.0; region.len()];
                let spec = KrylovSpec {
                    rel_tol: 0.0,
                    max_iter: n,
                    ..self.krylov
                };
                pcg(region, &b, &mut e, &spec)?;
                region.scatter_add(&e, u);
            }
        }
        Ok(())
    }
}

/// `n` hybrid Gauss-Seidel sweeps on a region.
pub fn smooth_only(region: &LevelRegion, u: &mut [f64], f: &[f64], n: usize) {
    region.smooth(u, f, n);
}

/// One row of a residual trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub cycle: usize,
    pub rel_residual: f64,
    pub res_healthy: f64,
    pub res_faulty: f64,
    pub res_interface: f64,
    pub logical_time: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SolveTrace {
    pub points: Vec<TracePoint>,
    /// First cycle at which the tolerance was met.
    pub iterations: Option<usize>,
    pub initial_residual: f64,
    pub cycles: usize,
}

impl SolveTrace {
    pub fn converged(&self) -> bool {
        self.iterations.is_some()
    }
}

/// Residual norms split by region: `(total, healthy, faulty, interface)`.
/// Without a mask everything counts as healthy.
pub fn residual_norms(
    full: &LevelRegion,
    mask: Option<&RegionMask>,
    u: &[f64],
    f: &[f64],
    scratch: &mut [f64],
) -> [f64; 4] {
    full.residual(u, f, scratch);
    let level = full.level();
    let mut sums = [0.0; 4];
    for &n in full.nodes() {
        let n = n as usize;
        let sq = scratch[n] * scratch[n];
        let slot = match mask.map_or(Region::Healthy, |m| m.region(level, n)) {
            Region::Faulty => 2,
            Region::Interface => 3,
            _ => 1,
        };
        sums[0] += sq;
        sums[slot] += sq;
    }
    sums.map(f64::sqrt)
}

/// State handed to the per-cycle hook.
pub struct HookState<'a> {
    pub cycle: usize,
    pub logical_time: f64,
    pub u: &'a mut [f64],
    pub f: &'a mut [f64],
    pub multigrid: &'a mut RegionMultigrid,
}

/// Returned by a hook that modified the state: logical time it consumed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HookEvent {
    pub logical_time: f64,
}

/// Global cycles until `||r_k|| <= tol * ||r_0||` or `max_cycles`.
///
/// The stopping test runs after every cycle; if it fails the hook is called.
/// When the hook reports an event, an extra trace row with the same cycle
/// index records the state after it.
pub fn solve_to_tol<H>(
    mg: &mut RegionMultigrid,
    u: &mut [f64],
    f: &mut [f64],
    stop: &StoppingRule,
    mask: Option<&RegionMask>,
    mut hook: H,
) -> Result<SolveTrace>
where
    H: FnMut(HookState<'_>) -> Result<Option<HookEvent>>,
{
    let full = mg.finest().clone();
    let mut scratch = vec![0.0; u.len()];
    let norms = residual_norms(&full, mask, u, f, &mut scratch);
    let r0 = norms[0];
    let scale = if r0 > 0.0 { r0 } else { 1.0 };
    let point = |cycle, time, n: [f64; 4]| TracePoint {
        cycle,
        rel_residual: n[0] / scale,
        res_healthy: n[1],
        res_faulty: n[2],
        res_interface: n[3],
        logical_time: time,
    };
    let mut trace = SolveTrace {
        points: vec![point(0, 0.0, norms)],
        iterations: None,
        initial_residual: r0,
        cycles: 0,
    };
    if norms[0] <= stop.rel_residual_tol * scale {
        trace.iterations = Some(0);
        return Ok(trace);
    }
    let mut time = 0.0;
    for k in 1..=stop.max_cycles {
        mg.cycle(u, f)?;
        time += 1.0;
        trace.cycles = k;
        let norms = residual_norms(&full, mask, u, f, &mut scratch);
        trace.points.push(point(k, time, norms));
        if norms[0] <= stop.rel_residual_tol * scale {
            trace.iterations = Some(k);
            break;
        }
        let state = HookState {
            cycle: k,
            logical_time: time,
            u,
            f,
            multigrid: mg,
        };
        if let Some(event) = hook(state)? {
            time += event.logical_time;
            let norms = residual_norms(&full, mask, u, f, &mut scratch);
            trace.points.push(point(k, time, norms));
        }
    }
    Ok(trace)
}
