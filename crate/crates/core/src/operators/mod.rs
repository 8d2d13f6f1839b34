//! Seven-point Laplacian, grid transfers and the interface sub-stencil split.
//!
//! Stencil rows are stored as `[center, -x, +x, -y, +y, -z, +z]`.

mod region;

pub use region::{LevelRegion, RegionKind};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{GridHierarchy, LevelGrid, Region, RegionMask};

pub type Stencil7 = [f64; 7];

/// Scaling between restriction and the transpose of prolongation:
/// `<P u_c, v_f> = RESTRICTION_SCALE * <u_c, R v_f>`.
pub const RESTRICTION_SCALE: f64 = 8.0;

/// Largest system `assemble_dense` will build.
pub const DENSE_LIMIT: usize = 20_000;

/// Constant-coefficient 7-point Laplacian of one level, Dirichlet nodes
/// eliminated.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilOperator {
    pub level: usize,
    pub h: f64,
}

impl StencilOperator {
    pub fn new(grid: &LevelGrid) -> Self {
        Self {
            level: grid.level,
            h: grid.h,
        }
    }

    pub fn row(&self) -> Stencil7 {
        let o = 1.0 / (self.h * self.h);
        [6.0 * o, -o, -o, -o, -o, -o, -o]
    }
}

/// Neighbour offsets in stencil order.
pub fn neighbor_offsets(grid: &LevelGrid) -> [isize; 6] {
    let [sx, sy, sz] = grid.strides().map(|s| s as isize);
    [-sx, sx, -sy, sy, -sz, sz]
}

/// Healthy-side and faulty-side parts of the stencil row of an interface node.
///
/// Every grid edge `(p, q)` is shared by four cells; its coupling is split in
/// proportion to how many of those cells lie in faulty subdomains, and the
/// diagonal collects the matching share of every edge. The two parts add up to
/// the full row exactly.
pub fn split_row(grid: &LevelGrid, faulty: &[bool], node: usize) -> (Stencil7, Stencil7) {
    let o = 1.0 / (grid.h * grid.h);
    let p = grid.ijk(node);
    let mut healthy = [0.0; 7];
    let mut lost = [0.0; 7];
    for dir in 0..6 {
        let axis = dir / 2;
        let mut base = p;
        if dir % 2 == 0 {
            base[axis] -= 1;
        }
        let (b, c) = ((axis + 1) % 3, (axis + 2) % 3);
        let mut count = 0usize;
        for db in 0..2 {
            for dc in 0..2 {
                let mut cell = base;
                cell[b] = p[b] + db - 1;
                cell[c] = p[c] + dc - 1;
                if faulty[subdomain_of_cell(grid, cell)] {
                    count += 1;
                }
            }
        }
        let share = count as f64 / 4.0;
        lost[1 + dir] = -share * o;
        healthy[1 + dir] = -(1.0 - share) * o;
        lost[0] += share * o;
        healthy[0] += (1.0 - share) * o;
    }
    (healthy, lost)
}

/// Fraction of the eight cells around `node` that lie in healthy subdomains.
pub fn healthy_cell_fraction(grid: &LevelGrid, faulty: &[bool], node: usize) -> f64 {
    let p = grid.ijk(node);
    let mut healthy = 0usize;
    for dk in 0..2 {
        for dj in 0..2 {
            for di in 0..2 {
                let cell = [p[0] + di - 1, p[1] + dj - 1, p[2] + dk - 1];
                if !faulty[subdomain_of_cell(grid, cell)] {
                    healthy += 1;
                }
            }
        }
    }
    healthy as f64 / 8.0
}

fn subdomain_of_cell(grid: &LevelGrid, cell: [usize; 3]) -> usize {
    let s = grid.cell_subdomain(cell);
    (s[2] * grid.parts[1] + s[1]) * grid.parts[0] + s[0]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitRow {
    pub node: usize,
    pub healthy: Stencil7,
    pub faulty: Stencil7,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubStencilSplit {
    pub level: usize,
    pub rows: Vec<SplitRow>,
}

/// Sub-stencils of every interface node of a level.
pub fn sub_stencils(h: &GridHierarchy, level: usize, mask: &RegionMask) -> SubStencilSplit {
    let grid = h.grid(level);
    let rows = mask
        .nodes(level, Region::Interface)
        .map(|node| {
            let (healthy, faulty) = split_row(grid, mask.subdomain_flags(), node);
            SplitRow {
                node,
                healthy,
                faulty,
            }
        })
        .collect();
    SubStencilSplit { level, rows }
}

fn check_adjacent(fine: &LevelGrid, coarse: &LevelGrid) -> Result<()> {
    let nested = (0..3).all(|a| fine.dims[a] == 2 * coarse.dims[a] - 1);
    if fine.level != coarse.level + 1 || !nested {
        return Err(Error::LevelMismatch {
            fine: fine.level,
            coarse: coarse.level,
        });
    }
    Ok(())
}

/// Trilinear interpolation weights of a fine index along one axis.
#[inline]
fn axis_weights(i: usize) -> ([usize; 2], [f64; 2], usize) {
    if i % 2 == 0 {
        ([i / 2, 0], [1.0, 0.0], 1)
    } else {
        ([(i - 1) / 2, (i + 1) / 2], [0.5, 0.5], 2)
    }
}

/// Interpolated coarse value at fine index `ijk`.
#[inline]
pub(crate) fn interpolate_at(coarse: &LevelGrid, uc: &[f64], ijk: [usize; 3]) -> f64 {
    let (xi, xw, xn) = axis_weights(ijk[0]);
    let (yi, yw, yn) = axis_weights(ijk[1]);
    let (zi, zw, zn) = axis_weights(ijk[2]);
    let mut acc = 0.0;
    for c in 0..zn {
        for b in 0..yn {
            let row = (zi[c] * coarse.dims[1] + yi[b]) * coarse.dims[0];
            let w = zw[c] * yw[b];
            for a in 0..xn {
                acc += w * xw[a] * uc[row + xi[a]];
            }
        }
    }
    acc
}

/// Full weighting at coarse index `ijk`, truncated at the grid ends.
#[inline]
pub(crate) fn full_weight_at(fine: &LevelGrid, rf: &[f64], ijk: [usize; 3]) -> f64 {
    let mut acc = 0.0;
    let centre = ijk.map(|i| 2 * i);
    for dz in -1i64..=1 {
        let k = centre[2] as i64 + dz;
        if k < 0 || k >= fine.dims[2] as i64 {
            continue;
        }
        for dy in -1i64..=1 {
            let j = centre[1] as i64 + dy;
            if j < 0 || j >= fine.dims[1] as i64 {
                continue;
            }
            let row = (k as usize * fine.dims[1] + j as usize) * fine.dims[0];
            let wzy = if dz == 0 { 1.0 } else { 0.5 } * if dy == 0 { 1.0 } else { 0.5 };
            for dx in -1i64..=1 {
                let i = centre[0] as i64 + dx;
                if i < 0 || i >= fine.dims[0] as i64 {
                    continue;
                }
                let w = wzy * if dx == 0 { 1.0 } else { 0.5 };
                acc += w * rf[row + i as usize];
            }
        }
    }
    acc / RESTRICTION_SCALE
}

/// Trilinear prolongation to every node of the next finer level.
pub fn prolongate(coarse: &LevelGrid, fine: &LevelGrid, uc: &[f64], uf: &mut [f64]) -> Result<()> {
    check_adjacent(fine, coarse)?;
    for (n, v) in uf.iter_mut().enumerate() {
        *v = interpolate_at(coarse, uc, fine.ijk(n));
    }
    Ok(())
}

/// Full-weighting restriction to every node of the next coarser level; the
/// scaled transpose of [`prolongate`].
pub fn restrict(fine: &LevelGrid, coarse: &LevelGrid, rf: &[f64], rc: &mut [f64]) -> Result<()> {
    check_adjacent(fine, coarse)?;
    for (n, v) in rc.iter_mut().enumerate() {
        *v = full_weight_at(fine, rf, coarse.ijk(n));
    }
    Ok(())
}

/// Dense matrix of a region operator over its unknowns, in region order.
/// Test oracle only.
pub fn assemble_dense(region: &LevelRegion) -> Result<DMatrix<f64>> {
    let n = region.len();
    if n > DENSE_LIMIT {
        return Err(Error::TooLarge {
            unknowns: n,
            limit: DENSE_LIMIT,
        });
    }
    let mut a = DMatrix::zeros(n, n);
    for (row, (node, stencil)) in region.stencil_rows().enumerate() {
        a[(row, row)] = stencil[0];
        for (dir, q) in region.neighbors(node).into_iter().enumerate() {
            if let Some(col) = region.compact_index(q) {
                a[(row, col)] += stencil[1 + dir];
            }
        }
    }
    Ok(a)
}
