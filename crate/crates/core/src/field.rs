//! Nodal values of one level with master and ghost storage.

use crate::grid::{ContainerId, GridHierarchy};

/// Values of one level. `values` is indexed by node id and holds the master
/// copy of every node (Dirichlet nodes included); `ghosts[c]` holds the
/// redundant copies kept by container `c`, in the order of its ghost table.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldVector {
    level: usize,
    values: Vec<f64>,
    ghosts: Vec<Vec<f64>>,
}

impl FieldVector {
    pub fn zeros(h: &GridHierarchy, level: usize) -> Self {
        let lvl = h.level(level);
        let ghosts = h
            .containers()
            .iter()
            .map(|c| vec![0.0; lvl.ghosts(c.id).len()])
            .collect();
        Self {
            level,
            values: vec![0.0; lvl.grid.node_count()],
            ghosts,
        }
    }

    /// Wraps a full master array; ghosts synchronized.
    pub fn from_values(h: &GridHierarchy, level: usize, values: Vec<f64>) -> Self {
        let mut u = Self::zeros(h, level);
        assert_eq!(
            values.len(),
            u.values.len(),
            "value count does not match level {level}"
        );
        u.values = values;
        h.sync_ghosts(&mut u);
        u
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Master values from a function of position; ghosts synchronized.
    pub fn from_fn(h: &GridHierarchy, level: usize, f: impl Fn([f64; 3]) -> f64) -> Self {
        let mut u = Self::zeros(h, level);
        let grid = h.grid(level);
        for (n, v) in u.values.iter_mut().enumerate() {
            *v = f(grid.position(n));
        }
        h.sync_ghosts(&mut u);
        u
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn ghosts(&self, c: ContainerId) -> &[f64] {
        &self.ghosts[c]
    }

    pub fn ghosts_mut(&mut self, c: ContainerId) -> &mut [f64] {
        &mut self.ghosts[c]
    }

    pub(crate) fn split_mut(&mut self) -> (&[f64], &mut [Vec<f64>]) {
        (&self.values, &mut self.ghosts)
    }

    /// Master value of the `index`-th master of container `c`.
    pub fn master(&self, h: &GridHierarchy, c: ContainerId, index: usize) -> f64 {
        self.values[h.level(self.level).masters(c)[index] as usize]
    }

    /// Largest |ghost - master| over all ghost slots; NaN if any slot is NaN.
    pub fn ghost_mismatch(&self, h: &GridHierarchy) -> f64 {
        let lvl = h.level(self.level);
        let mut worst = 0.0f64;
        for (c, store) in self.ghosts.iter().enumerate() {
            for (v, g) in store.iter().zip(lvl.ghosts(c)) {
                let d = (v - self.values[g.node as usize]).abs();
                if d.is_nan() {
                    return f64::NAN;
                }
                worst = worst.max(d);
            }
        }
        worst
    }
}
