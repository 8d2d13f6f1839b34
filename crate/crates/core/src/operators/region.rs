use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{neighbor_offsets, split_row, Stencil7, StencilOperator};
use crate::error::{Error, Result};
use crate::grid::{ContainerKind, GridHierarchy, LevelGrid, Region, RegionMask, NONE};

/// Which unknowns an operator acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegionKind {
    /// Every non-Dirichlet node.
    Full,
    /// The faulty subdomains, with the interface as Dirichlet data.
    FaultyDirichlet,
    /// The healthy region, with the interface as Dirichlet data.
    HealthyDirichlet,
    /// The healthy region plus the interface, whose rows use the healthy
    /// sub-stencil (natural boundary condition with a flux right-hand side).
    HealthyNeumann,
}

#[derive(Debug, Clone)]
struct RowGroup {
    range: Range<usize>,
    /// Per-row stencils; `None` means the constant Laplacian row.
    rows: Option<Vec<Stencil7>>,
}

/// The rows of one level that belong to a region, in hybrid smoothing order:
/// all volume containers (lexicographic inside each), then faces, edges and
/// vertices. Containers of one kind never couple to each other, so sweeping a
/// group container by container with ghosts refreshed between groups is the
/// same as a Gauss-Seidel pass in this order.
#[derive(Debug, Clone)]
pub struct LevelRegion {
    kind: RegionKind,
    grid: LevelGrid,
    offsets: [isize; 6],
    center: f64,
    off: f64,
    order: Vec<u32>,
    compact: Vec<u32>,
    groups: Vec<RowGroup>,
}

impl LevelRegion {
    pub fn full(h: &GridHierarchy, level: usize) -> Result<Self> {
        Self::assemble(h, level, RegionKind::Full, None)
    }

    pub fn build(
        h: &GridHierarchy,
        level: usize,
        kind: RegionKind,
        mask: &RegionMask,
    ) -> Result<Self> {
        Self::assemble(h, level, kind, Some(mask))
    }

    fn assemble(
        h: &GridHierarchy,
        level: usize,
        kind: RegionKind,
        mask: Option<&RegionMask>,
    ) -> Result<Self> {
        let lvl = h.try_level(level)?;
        let grid = lvl.grid.clone();
        let row = StencilOperator::new(&grid).row();
        let mut order = Vec::new();
        let mut groups = Vec::new();
        for ck in ContainerKind::ALL {
            let mut special_nodes = Vec::new();
            let mut special_rows = Vec::new();
            let start = order.len();
            for c in h.containers().iter().filter(|c| c.kind == ck) {
                let region = mask.map_or(Region::Healthy, |m| m.container_region(c.id));
                let (take, special) = match kind {
                    RegionKind::Full => (true, false),
                    RegionKind::FaultyDirichlet => (region == Region::Faulty, false),
                    RegionKind::HealthyDirichlet => (region == Region::Healthy, false),
                    RegionKind::HealthyNeumann => match region {
                        Region::Healthy => (true, false),
                        Region::Interface => (true, true),
                        _ => (false, false),
                    },
                };
                if !take {
                    continue;
                }
                if special {
                    let flags = mask
                        .expect("Neumann regions carry a mask")
                        .subdomain_flags();
                    for &p in lvl.masters(c.id) {
                        special_nodes.push(p);
                        special_rows.push(split_row(&grid, flags, p as usize).0);
                    }
                } else {
                    order.extend_from_slice(lvl.masters(c.id));
                }
            }
            if order.len() > start {
                groups.push(RowGroup {
                    range: start..order.len(),
                    rows: None,
                });
            }
            if !special_nodes.is_empty() {
                let start = order.len();
                order.extend(special_nodes);
                groups.push(RowGroup {
                    range: start..order.len(),
                    rows: Some(special_rows),
                });
            }
        }
        if order.is_empty() {
            return Err(Error::EmptyRegion(level));
        }
        let mut compact = vec![NONE; grid.node_count()];
        for (i, &n) in order.iter().enumerate() {
            compact[n as usize] = i as u32;
        }
        Ok(Self {
            kind,
            offsets: neighbor_offsets(&grid),
            center: row[0],
            off: -row[1],
            grid,
            order,
            compact,
            groups,
        })
    }

    pub fn kind(&self) -> RegionKind {
        self.kind
    }

    pub fn grid(&self) -> &LevelGrid {
        &self.grid
    }

    pub fn level(&self) -> usize {
        self.grid.level
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Unknowns in smoothing order.
    pub fn nodes(&self) -> &[u32] {
        &self.order
    }

    pub fn contains(&self, node: usize) -> bool {
        self.compact[node] != NONE
    }

    pub fn compact_index(&self, node: usize) -> Option<usize> {
        match self.compact[node] {
            NONE => None,
            i => Some(i as usize),
        }
    }

    pub fn neighbors(&self, node: usize) -> [usize; 6] {
        self.offsets.map(|o| (node as isize + o) as usize)
    }

    /// Every row with its stencil, in region order.
    pub fn stencil_rows(&self) -> impl Iterator<Item = (usize, Stencil7)> + '_ {
        let uniform = [
            self.center,
            -self.off,
            -self.off,
            -self.off,
            -self.off,
            -self.off,
            -self.off,
        ];
        self.groups.iter().flat_map(move |g| {
            g.range.clone().map(move |i| {
                let st = match &g.rows {
                    None => uniform,
                    Some(rows) => rows[i - g.range.start],
                };
                (self.order[i] as usize, st)
            })
        })
    }

    #[inline]
    fn uniform_row(&self, u: &[f64], n: usize) -> f64 {
        let o = &self.offsets;
        let idx = |k: usize| (n as isize + o[k]) as usize;
        self.center * u[n]
            - self.off * (u[idx(0)] + u[idx(1)] + u[idx(2)] + u[idx(3)] + u[idx(4)] + u[idx(5)])
    }

    /// Off-diagonal part of a special row. Zero couplings are skipped so that
    /// values on the far side of the interface are never read.
    #[inline]
    fn special_offdiag(&self, u: &[f64], n: usize, st: &Stencil7) -> f64 {
        let mut acc = 0.0;
        for k in 0..6 {
            let w = st[1 + k];
            if w != 0.0 {
                acc += w * u[(n as isize + self.offsets[k]) as usize];
            }
        }
        acc
    }

    /// `out = A u` on the region rows; other entries untouched.
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        for g in &self.groups {
            match &g.rows {
                None => {
                    for &n in &self.order[g.range.clone()] {
                        out[n as usize] = self.uniform_row(u, n as usize);
                    }
                }
                Some(rows) => {
                    for (&n, st) in self.order[g.range.clone()].iter().zip(rows) {
                        let n = n as usize;
                        out[n] = st[0] * u[n] + self.special_offdiag(u, n, st);
                    }
                }
            }
        }
    }

    /// `r = f - A u` on the region rows; other entries untouched.
    pub fn residual(&self, u: &[f64], f: &[f64], r: &mut [f64]) {
        for g in &self.groups {
            match &g.rows {
                None => {
                    for &n in &self.order[g.range.clone()] {
                        let n = n as usize;
                        r[n] = f[n] - self.uniform_row(u, n);
                    }
                }
                Some(rows) => {
                    for (&n, st) in self.order[g.range.clone()].iter().zip(rows) {
                        let n = n as usize;
                        r[n] = f[n] - st[0] * u[n] - self.special_offdiag(u, n, st);
                    }
                }
            }
        }
    }

    /// Hybrid Gauss-Seidel sweeps. Nodes outside the region are read as
    /// boundary data and never written.
    pub fn smooth(&self, u: &mut [f64], f: &[f64], sweeps: usize) {
        let inv = 1.0 / self.center;
        let o = self.offsets;
        for _ in 0..sweeps {
            for g in &self.groups {
                match &g.rows {
                    None => {
                        for &n in &self.order[g.range.clone()] {
                            let n = n as usize;
                            let idx = |k: usize| (n as isize + o[k]) as usize;
                            let s = u[idx(0)]
                                + u[idx(1)]
                                + u[idx(2)]
                                + u[idx(3)]
                                + u[idx(4)]
                                + u[idx(5)];
                            u[n] = (f[n] + self.off * s) * inv;
                        }
                    }
                    Some(rows) => {
                        for (&n, st) in self.order[g.range.clone()].iter().zip(rows) {
                            let n = n as usize;
                            u[n] = (f[n] - self.special_offdiag(u, n, st)) / st[0];
                        }
                    }
                }
            }
        }
    }

    /// Euclidean norm over the region rows.
    pub fn norm(&self, v: &[f64]) -> f64 {
        self.order
            .iter()
            .map(|&n| v[n as usize] * v[n as usize])
            .sum::<f64>()
            .sqrt()
    }

    pub fn gather(&self, full: &[f64], compact: &mut [f64]) {
        for (c, &n) in compact.iter_mut().zip(&self.order) {
            *c = full[n as usize];
        }
    }

    pub fn scatter_add(&self, compact: &[f64], full: &mut [f64]) {
        for (c, &n) in compact.iter().zip(&self.order) {
            full[n as usize] += c;
        }
    }

    /// `y = A x` on compact vectors; values outside the region count as zero.
    pub fn apply_compact(&self, x: &[f64], y: &mut [f64]) {
        let mut i = 0;
        for g in &self.groups {
            for k in g.range.clone() {
                let n = self.order[k] as usize;
                let st = match &g.rows {
                    None => None,
                    Some(rows) => Some(&rows[k - g.range.start]),
                };
                let (diag, mut acc) = match st {
                    None => (self.center, 0.0),
                    Some(st) => (st[0], 0.0),
                };
                for d in 0..6 {
                    let q = (n as isize + self.offsets[d]) as usize;
                    let c = self.compact[q];
                    if c != NONE {
                        let w = st.map_or(-self.off, |st| st[1 + d]);
                        acc += w * x[c as usize];
                    }
                }
                y[i] = diag * x[i] + acc;
                i += 1;
            }
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.stencil_rows().map(|(_, st)| st[0]).collect()
    }
}
