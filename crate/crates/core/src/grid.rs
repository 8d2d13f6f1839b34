//! Nested structured grids over a box partition of the domain, and the
//! container system that stores every node once as a master and again as
//! ghost copies in the neighbouring containers.
//!
//! The partition is described in "doubled" coordinates: along each axis an
//! odd value `2s + 1` denotes the open slab of subdomain `s` and an even
//! value `2p` the partition plane between slabs `p - 1` and `p`. A geometric
//! entity (volume, face, edge, vertex) is a triple of such values, and the
//! number of even entries is its codimension.

use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::FieldVector;

pub type SubdomainId = usize;
pub type ContainerId = usize;

/// Marker for "no container" in compact `u32` tables.
pub const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSpec {
    /// Subdomain counts `(P_x, P_y, P_z)`.
    pub subdomains: [usize; 3],
    /// Cells per axis per subdomain on level 0.
    pub base_cells: usize,
    /// Index of the finest level.
    pub levels: usize,
}

impl PartitionSpec {
    pub fn new(subdomains: [usize; 3], base_cells: usize, levels: usize) -> Self {
        Self {
            subdomains,
            base_cells,
            levels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.subdomains.iter().any(|&p| p == 0) {
            return Err(Error::InvalidPartition(format!(
                "subdomain counts must be at least 1, got {:?}",
                self.subdomains
            )));
        }
        if self.base_cells < 2 {
            return Err(Error::InvalidPartition(format!(
                "base_cells = {} leaves a subdomain without interior nodes on level 0",
                self.base_cells
            )));
        }
        if self.levels > 12 {
            return Err(Error::InvalidPartition(format!(
                "{} levels is beyond any sensible desk-scale size",
                self.levels
            )));
        }
        Ok(())
    }

    pub fn subdomain_count(&self) -> usize {
        self.subdomains.iter().product()
    }

    pub fn cells_per_subdomain(&self, level: usize) -> usize {
        self.base_cells << level
    }

    /// Total node count of a level, Dirichlet nodes included.
    pub fn node_count(&self, level: usize) -> usize {
        let m = self.cells_per_subdomain(level);
        self.subdomains.iter().map(|p| p * m + 1).product()
    }

    pub fn subdomain_id(&self, coords: [usize; 3]) -> SubdomainId {
        let [px, py, _] = self.subdomains;
        (coords[2] * py + coords[1]) * px + coords[0]
    }

    pub fn subdomain_coords(&self, id: SubdomainId) -> [usize; 3] {
        let [px, py, _] = self.subdomains;
        [id % px, (id / px) % py, id / (px * py)]
    }
}

/// Geometry of one level: a lexicographic (x fastest, z slowest) node array.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelGrid {
    pub level: usize,
    /// Cells per axis per subdomain.
    pub cells: usize,
    pub parts: [usize; 3],
    /// Nodes per axis.
    pub dims: [usize; 3],
    pub h: f64,
}

impl LevelGrid {
    fn new(spec: &PartitionSpec, level: usize) -> Self {
        let cells = spec.cells_per_subdomain(level);
        let parts = spec.subdomains;
        let dims = parts.map(|p| p * cells + 1);
        let longest = *parts.iter().max().expect("three axes");
        Self {
            level,
            cells,
            parts,
            dims,
            h: 1.0 / (longest * cells) as f64,
        }
    }

    pub fn node_count(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn strides(&self) -> [usize; 3] {
        [1, self.dims[0], self.dims[0] * self.dims[1]]
    }

    #[inline]
    pub fn index(&self, [i, j, k]: [usize; 3]) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    #[inline]
    pub fn ijk(&self, node: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [node % nx, (node / nx) % ny, node / (nx * ny)]
    }

    pub fn checked_index(&self, ijk: [usize; 3]) -> Result<usize> {
        if (0..3).all(|a| ijk[a] < self.dims[a]) {
            Ok(self.index(ijk))
        } else {
            Err(Error::IndexOutOfRange {
                level: self.level,
                index: ijk,
                dims: self.dims,
            })
        }
    }

    pub fn position(&self, node: usize) -> [f64; 3] {
        self.ijk(node).map(|i| i as f64 * self.h)
    }

    pub fn is_boundary(&self, ijk: [usize; 3]) -> bool {
        (0..3).any(|a| ijk[a] == 0 || ijk[a] + 1 == self.dims[a])
    }

    /// Doubled partition coordinates of an interior node.
    fn entity_key(&self, ijk: [usize; 3]) -> [usize; 3] {
        ijk.map(|i| {
            if i % self.cells == 0 {
                2 * (i / self.cells)
            } else {
                2 * (i / self.cells) + 1
            }
        })
    }

    /// Subdomain owning the cell whose lowest corner is `cell`.
    pub fn cell_subdomain(&self, cell: [usize; 3]) -> [usize; 3] {
        cell.map(|c| c / self.cells)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ContainerKind {
    Volume,
    Face,
    Edge,
    Vertex,
}

impl ContainerKind {
    pub const ALL: [ContainerKind; 4] = [
        ContainerKind::Volume,
        ContainerKind::Face,
        ContainerKind::Edge,
        ContainerKind::Vertex,
    ];

    fn from_codim(codim: usize) -> Self {
        Self::ALL[codim]
    }

    pub fn name(self) -> &'static str {
        match self {
            ContainerKind::Volume => "volume",
            ContainerKind::Face => "face",
            ContainerKind::Edge => "edge",
            ContainerKind::Vertex => "vertex",
        }
    }
}

/// Geometric class of a node. Interface classes carry the container id of
/// the entity they lie on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeClass {
    VolumeInterior(SubdomainId),
    FaceNode(ContainerId),
    EdgeNode(ContainerId),
    VertexNode(ContainerId),
    DomainBoundary,
}

/// Level-independent description of a container.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Container {
    pub id: ContainerId,
    pub kind: ContainerKind,
    /// Doubled partition coordinates of the entity.
    pub key: [usize; 3],
    /// Subdomains whose closure contains the entity, ascending.
    pub adjacent: Vec<SubdomainId>,
    /// Logical process holding the master copy. Interface containers are
    /// replicated on every other adjacent subdomain.
    pub owner: SubdomainId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GhostRef {
    pub node: u32,
    pub master: u32,
    pub master_index: u32,
}

/// Per-level container tables.
#[derive(Debug, Clone)]
pub struct Level {
    pub grid: LevelGrid,
    container_of: Vec<u32>,
    local_index: Vec<u32>,
    masters: Vec<Vec<u32>>,
    ghosts: Vec<Vec<GhostRef>>,
}

impl Level {
    pub fn container_of(&self, node: usize) -> Option<ContainerId> {
        match self.container_of[node] {
            NONE => None,
            c => Some(c as ContainerId),
        }
    }

    /// Position of `node` inside its master container.
    pub fn local_index(&self, node: usize) -> Option<usize> {
        match self.local_index[node] {
            NONE => None,
            i => Some(i as usize),
        }
    }

    pub fn masters(&self, c: ContainerId) -> &[u32] {
        &self.masters[c]
    }

    /// Ghosts of a container, sorted by node id.
    pub fn ghosts(&self, c: ContainerId) -> &[GhostRef] {
        &self.ghosts[c]
    }

    pub fn unknown_count(&self) -> usize {
        self.masters.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone)]
pub struct GridHierarchy {
    spec: PartitionSpec,
    containers: Vec<Container>,
    /// Doubled coordinates to container id.
    key_table: Vec<u32>,
    levels: Vec<Level>,
}

impl GridHierarchy {
    pub fn build(spec: PartitionSpec) -> Result<Self> {
        spec.validate()?;
        let containers = enumerate_containers(&spec);
        let key_dims = spec.subdomains.map(|p| 2 * p + 1);
        let mut key_table = vec![NONE; key_dims.iter().product()];
        for c in &containers {
            let [a, b, d] = c.key;
            key_table[(d * key_dims[1] + b) * key_dims[0] + a] = c.id as u32;
        }
        let mut h = GridHierarchy {
            spec,
            containers,
            key_table,
            levels: Vec::with_capacity(spec.levels + 1),
        };
        for level in 0..=spec.levels {
            let lvl = h.build_level(level);
            h.levels.push(lvl);
        }
        Ok(h)
    }

    fn container_for_key(&self, key: [usize; 3]) -> ContainerId {
        let kd = self.spec.subdomains.map(|p| 2 * p + 1);
        self.key_table[(key[2] * kd[1] + key[1]) * kd[0] + key[0]] as ContainerId
    }

    fn build_level(&self, level: usize) -> Level {
        let grid = LevelGrid::new(&self.spec, level);
        let n = grid.node_count();
        let mut container_of = vec![NONE; n];
        let mut local_index = vec![NONE; n];
        let mut masters: Vec<Vec<u32>> = vec![Vec::new(); self.containers.len()];
        for node in 0..n {
            let ijk = grid.ijk(node);
            if grid.is_boundary(ijk) {
                continue;
            }
            let c = self.container_for_key(grid.entity_key(ijk));
            container_of[node] = c as u32;
            local_index[node] = masters[c].len() as u32;
            masters[c].push(node as u32);
        }

        let strides = grid.strides();
        let mut ghosts = Vec::with_capacity(self.containers.len());
        for c in &self.containers {
            let mut set = BTreeSet::new();
            if c.kind == ContainerKind::Volume {
                // the whole closure shell of the subdomain box
                let s = self.spec.subdomain_coords(c.id);
                let m = grid.cells;
                for k in s[2] * m..=(s[2] + 1) * m {
                    for j in s[1] * m..=(s[1] + 1) * m {
                        for i in s[0] * m..=(s[0] + 1) * m {
                            let node = grid.index([i, j, k]);
                            if container_of[node] != NONE && container_of[node] != c.id as u32 {
                                set.insert(node as u32);
                            }
                        }
                    }
                }
            } else {
                for &p in &masters[c.id] {
                    let p = p as usize;
                    for a in 0..3 {
                        for q in [p - strides[a], p + strides[a]] {
                            if container_of[q] != NONE && container_of[q] != c.id as u32 {
                                set.insert(q as u32);
                            }
                        }
                    }
                }
            }
            ghosts.push(
                set.into_iter()
                    .map(|node| GhostRef {
                        node,
                        master: container_of[node as usize],
                        master_index: local_index[node as usize],
                    })
                    .collect(),
            );
        }

        Level {
            grid,
            container_of,
            local_index,
            masters,
            ghosts,
        }
    }

    pub fn spec(&self) -> &PartitionSpec {
        &self.spec
    }

    pub fn finest(&self) -> usize {
        self.spec.levels
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, level: usize) -> &Level {
        &self.levels[level]
    }

    pub fn try_level(&self, level: usize) -> Result<&Level> {
        self.levels.get(level).ok_or(Error::NoSuchLevel(level))
    }

    pub fn grid(&self, level: usize) -> &LevelGrid {
        &self.levels[level].grid
    }

    pub fn containers(&self) -> &[Container] {
        &self.containers
    }

    pub fn container(&self, id: ContainerId) -> &Container {
        &self.containers[id]
    }

    pub fn subdomain_count(&self) -> usize {
        self.spec.subdomain_count()
    }

    pub fn count_kind(&self, kind: ContainerKind) -> usize {
        self.containers.iter().filter(|c| c.kind == kind).count()
    }

    pub fn classify_node(&self, level: usize, ijk: [usize; 3]) -> Result<NodeClass> {
        let lvl = self.try_level(level)?;
        let node = lvl.grid.checked_index(ijk)?;
        Ok(self.class_of(level, node))
    }

    pub fn class_of(&self, level: usize, node: usize) -> NodeClass {
        match self.levels[level].container_of(node) {
            None => NodeClass::DomainBoundary,
            Some(c) => match self.containers[c].kind {
                ContainerKind::Volume => NodeClass::VolumeInterior(c),
                ContainerKind::Face => NodeClass::FaceNode(c),
                ContainerKind::Edge => NodeClass::EdgeNode(c),
                ContainerKind::Vertex => NodeClass::VertexNode(c),
            },
        }
    }

    /// Maps a coarse node to the coinciding node of the next finer level.
    pub fn inject_index(&self, coarse_level: usize, node: usize) -> Result<usize> {
        let fine = self.try_level(coarse_level + 1)?;
        let ijk = self.grid(coarse_level).ijk(node);
        fine.grid.checked_index(ijk.map(|i| 2 * i))
    }

    fn check_subdomains(&self, ids: &[SubdomainId]) -> Result<Vec<bool>> {
        let count = self.subdomain_count();
        let mut flags = vec![false; count];
        for &id in ids {
            if id >= count {
                return Err(Error::InvalidSubdomain { id, count });
            }
            flags[id] = true;
        }
        Ok(flags)
    }

    /// Copies every master value into all of its ghost slots.
    pub fn sync_ghosts(&self, u: &mut FieldVector) {
        let lvl = &self.levels[u.level()];
        let (values, ghosts) = u.split_mut();
        for (c, store) in ghosts.iter_mut().enumerate() {
            for (slot, g) in store.iter_mut().zip(&lvl.ghosts[c]) {
                *slot = values[g.node as usize];
            }
        }
    }

    /// Rebuilds the interface values between faulty and healthy subdomains
    /// from the ghost copies held by healthy volume containers. Returns the
    /// number of restored nodes.
    pub fn restore_interface(&self, u: &mut FieldVector, faulty: &[SubdomainId]) -> Result<usize> {
        let flags = self.check_subdomains(faulty)?;
        if faulty.is_empty() {
            return Ok(0);
        }
        let level = u.level();
        let lvl = &self.levels[level];
        let mut restored = 0;
        for c in &self.containers {
            if c.kind == ContainerKind::Volume || container_region(c, &flags) != Region::Interface {
                continue;
            }
            for &p in &lvl.masters[c.id] {
                let copy = c
                    .adjacent
                    .iter()
                    .filter(|&&s| !flags[s])
                    .find_map(|&s| {
                        let g = lvl.ghosts[s].binary_search_by_key(&p, |g| g.node).ok()?;
                        let v = u.ghosts(s)[g];
                        v.is_finite().then_some(v)
                    })
                    .ok_or(Error::UnrecoverableInterface {
                        level,
                        node: p as usize,
                    })?;
                u.values_mut()[p as usize] = copy;
                restored += 1;
            }
        }
        Ok(restored)
    }

    pub fn region_masks(&self, faulty: &[SubdomainId]) -> Result<RegionMask> {
        let flags = self.check_subdomains(faulty)?;
        if !flags.is_empty() && flags.iter().all(|&f| f) {
            return Err(Error::NoHealthyRegion);
        }
        let per_container: Vec<Region> = self
            .containers
            .iter()
            .map(|c| container_region(c, &flags))
            .collect();
        let levels = self
            .levels
            .iter()
            .map(|lvl| {
                lvl.container_of
                    .iter()
                    .map(|&c| match c {
                        NONE => Region::Dirichlet,
                        c => per_container[c as usize],
                    })
                    .collect()
            })
            .collect();
        Ok(RegionMask {
            faulty: flags,
            containers: per_container,
            levels,
        })
    }

    /// Debug dump of the container tables of one level.
    pub fn write_container_table<W: Write>(&self, level: usize, out: W) -> Result<()> {
        let lvl = self.try_level(level)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["container", "kind", "owner", "masters", "ghosts"])?;
        for c in &self.containers {
            w.write_record([
                c.id.to_string(),
                c.kind.name().to_string(),
                c.owner.to_string(),
                lvl.masters[c.id].len().to_string(),
                lvl.ghosts[c.id].len().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn container_region(c: &Container, faulty: &[bool]) -> Region {
    let lost = c.adjacent.iter().filter(|&&s| faulty[s]).count();
    if lost == 0 {
        Region::Healthy
    } else if lost == c.adjacent.len() {
        Region::Faulty
    } else {
        Region::Interface
    }
}

fn enumerate_containers(spec: &PartitionSpec) -> Vec<Container> {
    let [px, py, pz] = spec.subdomains;
    let mut keys: Vec<(usize, [usize; 3])> = Vec::new();
    for dz in 1..2 * pz {
        for dy in 1..2 * py {
            for dx in 1..2 * px {
                let key = [dx, dy, dz];
                let codim = key.iter().filter(|&&d| d % 2 == 0).count();
                keys.push((codim, key));
            }
        }
    }
    // volumes first, so that volume container ids coincide with subdomain ids
    keys.sort_by_key(|&(codim, key)| (codim, key[2], key[1], key[0]));
    keys.into_iter()
        .enumerate()
        .map(|(id, (codim, key))| {
            let ranges = key.map(|d| {
                if d % 2 == 1 {
                    [d / 2, d / 2]
                } else {
                    [d / 2 - 1, d / 2]
                }
            });
            let mut adjacent = BTreeSet::new();
            for sz in ranges[2][0]..=ranges[2][1] {
                for sy in ranges[1][0]..=ranges[1][1] {
                    for sx in ranges[0][0]..=ranges[0][1] {
                        adjacent.insert(spec.subdomain_id([sx, sy, sz]));
                    }
                }
            }
            let adjacent: Vec<_> = adjacent.into_iter().collect();
            Container {
                id,
                kind: ContainerKind::from_codim(codim),
                key,
                owner: adjacent[0],
                adjacent,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Region {
    Dirichlet,
    Healthy,
    Interface,
    Faulty,
}

/// Node partition into healthy region, interface and faulty region on every
/// level, for one set of faulty subdomains.
#[derive(Debug, Clone)]
pub struct RegionMask {
    faulty: Vec<bool>,
    containers: Vec<Region>,
    levels: Vec<Vec<Region>>,
}

impl RegionMask {
    pub fn region(&self, level: usize, node: usize) -> Region {
        self.levels[level][node]
    }

    pub fn level(&self, level: usize) -> &[Region] {
        &self.levels[level]
    }

    pub fn container_region(&self, c: ContainerId) -> Region {
        self.containers[c]
    }

    pub fn is_faulty(&self, s: SubdomainId) -> bool {
        self.faulty[s]
    }

    pub fn subdomain_flags(&self) -> &[bool] {
        &self.faulty
    }

    pub fn faulty_subdomains(&self) -> Vec<SubdomainId> {
        (0..self.faulty.len()).filter(|&s| self.faulty[s]).collect()
    }

    pub fn nodes(&self, level: usize, region: Region) -> impl Iterator<Item = usize> + '_ {
        self.levels[level]
            .iter()
            .enumerate()
            .filter(move |(_, &r)| r == region)
            .map(|(n, _)| n)
    }

    pub fn count(&self, level: usize, region: Region) -> usize {
        self.levels[level].iter().filter(|&&r| r == region).count()
    }
}
