use crate::error::{Error, Result};
use crate::field::FieldVector;
use crate::grid::{GridHierarchy, Region, RegionMask};
use crate::operators::{healthy_cell_fraction, split_row, LevelRegion, RegionKind};
use crate::problem::ProblemSpec;
use crate::solvers::{residual_norms, CycleSpec, CycleType, LocalSolver, RegionSolver};

use super::{RecoveryConfig, Strategy};

/// Everything a recovery phase needs besides the state itself.
#[derive(Debug, Clone, Copy)]
pub struct RecoveryContext<'a> {
    pub hierarchy: &'a GridHierarchy,
    pub problem: &'a ProblemSpec,
    pub cycle: &'a CycleSpec,
    pub mask: &'a RegionMask,
    /// Full-domain operator of the finest level, for residual logging.
    pub full: &'a LevelRegion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Injection {
    pub zeroed: usize,
    pub restored: usize,
}

/// Residual norms over the healthy region and the faulty region during a
/// recovery phase. Entry 0 is the state when the phase starts.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PhaseLog {
    pub healthy: Vec<f64>,
    pub faulty: Vec<f64>,
}

/// Destroys the finest-level state of the faulty subdomains and rebuilds
/// what redundancy allows.
///
/// Ghost copies are consistent at the end of every cycle, so the field is
/// wrapped and synchronized first. Faulty values and the ghost stores owned by
/// faulty subdomains are lost; interface values are restored from the healthy
/// volume ghosts, faulty values restart at zero and the source is regenerated.
pub fn inject_fault(
    h: &GridHierarchy,
    problem: &ProblemSpec,
    u: &mut [f64],
    f: &mut [f64],
    mask: &RegionMask,
) -> Result<Injection> {
    let level = h.finest();
    let mut field = FieldVector::from_values(h, level, u.to_vec());
    for c in h.containers() {
        if mask.is_faulty(c.owner) || mask.container_region(c.id) == Region::Faulty {
            field.ghosts_mut(c.id).fill(f64::NAN);
        }
    }
    let grid = h.grid(level);
    let mut zeroed = 0;
    for (n, region) in mask.level(level).iter().enumerate() {
        match region {
            Region::Faulty => {
                field.values_mut()[n] = 0.0;
                f[n] = problem.source(grid.position(n));
                zeroed += 1;
            }
            Region::Interface => {
                field.values_mut()[n] = f64::NAN;
                f[n] = problem.source(grid.position(n));
            }
            _ => {}
        }
    }
    let restored = h.restore_interface(&mut field, &mask.faulty_subdomains())?;
    u.copy_from_slice(field.values());
    Ok(Injection { zeroed, restored })
}

/// Flux unknown on the interface: `lambda = f_h - A_h u` rowwise, with the
/// healthy sub-stencil `A_h` and the healthy share `f_h` of the source.
/// Positive entries mean flux leaving the healthy region.
pub fn compute_neumann_flux(
    h: &GridHierarchy,
    mask: &RegionMask,
    u: &[f64],
    f: &[f64],
) -> Result<Vec<f64>> {
    let level = h.finest();
    let grid = h.grid(level);
    let mut lambda = vec![0.0; grid.node_count()];
    let mut any = false;
    for n in mask.nodes(level, Region::Interface) {
        let (row, _) = split_row(grid, mask.subdomain_flags(), n);
        let mut au = row[0] * u[n];
        for (k, q) in neighbors(grid, n).into_iter().enumerate() {
            if row[1 + k] != 0.0 {
                au += row[1 + k] * u[q];
            }
        }
        lambda[n] = healthy_cell_fraction(grid, mask.subdomain_flags(), n) * f[n] - au;
        any = true;
    }
    if !any {
        return Err(Error::MissingFlux);
    }
    Ok(lambda)
}

/// Right-hand side of the healthy Neumann problem: `f` inside the healthy
/// region and `f_h - lambda` on the interface.
pub fn neumann_rhs(h: &GridHierarchy, mask: &RegionMask, f: &[f64], lambda: &[f64]) -> Vec<f64> {
    let level = h.finest();
    let grid = h.grid(level);
    let mut out = f.to_vec();
    for n in mask.nodes(level, Region::Interface) {
        out[n] = healthy_cell_fraction(grid, mask.subdomain_flags(), n) * f[n] - lambda[n];
    }
    out
}

fn neighbors(grid: &crate::grid::LevelGrid, n: usize) -> [usize; 6] {
    crate::operators::neighbor_offsets(grid).map(|o| (n as isize + o) as usize)
}

fn global_solver(cycle: &CycleSpec) -> LocalSolver {
    match cycle.kind {
        CycleType::V => LocalSolver::Vcycle,
        CycleType::W => LocalSolver::Wcycle,
        CycleType::F => LocalSolver::Fcycle,
    }
}

fn log(
    ctx: &RecoveryContext<'_>,
    u: &[f64],
    f: &[f64],
    scratch: &mut [f64],
    healthy: Option<&mut Vec<f64>>,
    faulty: Option<&mut Vec<f64>>,
) {
    let norms = residual_norms(ctx.full, Some(ctx.mask), u, f, scratch);
    if let Some(h) = healthy {
        h.push(norms[1]);
    }
    if let Some(fl) = faulty {
        fl.push(norms[2]);
    }
}

/// Local recovery: `n_f` steps of the local solver on the faulty Dirichlet
/// problem while the healthy region waits.
pub fn recover_local(
    ctx: &RecoveryContext<'_>,
    cfg: &RecoveryConfig,
    u: &mut [f64],
    f: &[f64],
) -> Result<PhaseLog> {
    let mut out = PhaseLog::default();
    let mut scratch = vec![0.0; u.len()];
    log(
        ctx,
        u,
        f,
        &mut scratch,
        Some(&mut out.healthy),
        Some(&mut out.faulty),
    );
    let n_f = cfg.n_f();
    if n_f > 0 {
        let mut faulty = RegionSolver::new(
            ctx.hierarchy,
            RegionKind::FaultyDirichlet,
            ctx.mask,
            cfg.local_solver,
            ctx.cycle,
        )?;
        faulty.steps(u, f, n_f)?;
    }
    log(
        ctx,
        u,
        f,
        &mut scratch,
        Some(&mut out.healthy),
        Some(&mut out.faulty),
    );
    Ok(out)
}

/// Dirichlet-Dirichlet recovery: with the interface frozen, the healthy side
/// runs `n_i` cycles and the faulty side `n_f` local steps, independently.
pub fn recover_dd(
    ctx: &RecoveryContext<'_>,
    cfg: &RecoveryConfig,
    u: &mut [f64],
    f: &[f64],
) -> Result<PhaseLog> {
    let mut out = PhaseLog::default();
    let n_i = cfg.n_i();
    if n_i == 0 {
        return Ok(out);
    }
    let mut scratch = vec![0.0; u.len()];
    log(
        ctx,
        u,
        f,
        &mut scratch,
        Some(&mut out.healthy),
        Some(&mut out.faulty),
    );
    let mut healthy = RegionSolver::new(
        ctx.hierarchy,
        RegionKind::HealthyDirichlet,
        ctx.mask,
        global_solver(ctx.cycle),
        ctx.cycle,
    )?;
    for _ in 0..n_i {
        healthy.steps(u, f, 1)?;
        log(ctx, u, f, &mut scratch, Some(&mut out.healthy), None);
    }
    let mut faulty = RegionSolver::new(
        ctx.hierarchy,
        RegionKind::FaultyDirichlet,
        ctx.mask,
        cfg.local_solver,
        ctx.cycle,
    )?;
    faulty.steps(u, f, cfg.n_f())?;
    log(ctx, u, f, &mut scratch, None, Some(&mut out.faulty));
    Ok(out)
}

/// Batch sizes for spreading `n_f` faulty steps over `n_i` pushes, larger
/// batches first.
pub(crate) fn batches(n_f: usize, n_i: usize) -> Vec<usize> {
    (0..n_i)
        .map(|j| n_f / n_i + usize::from(j < n_f % n_i))
        .collect()
}

/// Dirichlet-Neumann recovery: the flux is frozen at fault time; after every
/// healthy Neumann cycle the new interface values are pushed and the faulty
/// side runs its next batch of Dirichlet steps.
pub fn recover_dn(
    ctx: &RecoveryContext<'_>,
    cfg: &RecoveryConfig,
    u: &mut [f64],
    f: &[f64],
) -> Result<PhaseLog> {
    let mut out = PhaseLog::default();
    let n_i = cfg.n_i();
    if n_i == 0 {
        return Ok(out);
    }
    let mut scratch = vec![0.0; u.len()];
    log(
        ctx,
        u,
        f,
        &mut scratch,
        Some(&mut out.healthy),
        Some(&mut out.faulty),
    );
    let lambda = compute_neumann_flux(ctx.hierarchy, ctx.mask, u, f)?;
    let f_neumann = neumann_rhs(ctx.hierarchy, ctx.mask, f, &lambda);
    let mut healthy = RegionSolver::new(
        ctx.hierarchy,
        RegionKind::HealthyNeumann,
        ctx.mask,
        global_solver(ctx.cycle),
        ctx.cycle,
    )?;
    let mut faulty = RegionSolver::new(
        ctx.hierarchy,
        RegionKind::FaultyDirichlet,
        ctx.mask,
        cfg.local_solver,
        ctx.cycle,
    )?;
    for batch in batches(cfg.n_f(), n_i) {
        healthy.steps(u, &f_neumann, 1)?;
        faulty.steps(u, f, batch)?;
        log(
            ctx,
            u,
            f,
            &mut scratch,
            Some(&mut out.healthy),
            Some(&mut out.faulty),
        );
    }
    Ok(out)
}

pub fn recover(
    ctx: &RecoveryContext<'_>,
    cfg: &RecoveryConfig,
    u: &mut [f64],
    f: &[f64],
) -> Result<PhaseLog> {
    match cfg.strategy {
        Strategy::None => Ok(PhaseLog::default()),
        Strategy::LR => recover_local(ctx, cfg, u, f),
        Strategy::DD => recover_dd(ctx, cfg, u, f),
        Strategy::DN => recover_dn(ctx, cfg, u, f),
    }
}
