use serde::{Deserialize, Serialize};

use super::krylov::{pcg, KrylovSpec};
use crate::error::Result;
use crate::grid::{GridHierarchy, RegionMask};
use crate::operators::{full_weight_at, interpolate_at, LevelRegion, RegionKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CycleType {
    V,
    W,
    F,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CycleSpec {
    pub kind: CycleType,
    pub pre_smooth: usize,
    pub post_smooth: usize,
    pub coarse: KrylovSpec,
}

impl Default for CycleSpec {
    fn default() -> Self {
        Self {
            kind: CycleType::V,
            pre_smooth: 3,
            post_smooth: 3,
            coarse: KrylovSpec::default(),
        }
    }
}

impl CycleSpec {
    pub fn with_kind(kind: CycleType) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }
}

/// Correction-scheme multigrid on one region, with the region rebuilt on
/// every level down to level 0, where a Jacobi-PCG solve replaces smoothing.
#[derive(Debug, Clone)]
pub struct RegionMultigrid {
    spec: CycleSpec,
    regions: Vec<LevelRegion>,
    u: Vec<Vec<f64>>,
    f: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
    visits: Vec<usize>,
}

impl RegionMultigrid {
    pub fn full(h: &GridHierarchy, spec: CycleSpec) -> Result<Self> {
        let regions = (0..h.num_levels())
            .map(|l| LevelRegion::full(h, l))
            .collect::<Result<_>>()?;
        Ok(Self::from_regions(regions, spec))
    }

    pub fn build(
        h: &GridHierarchy,
        kind: RegionKind,
        mask: &RegionMask,
        spec: CycleSpec,
    ) -> Result<Self> {
        let regions = (0..h.num_levels())
            .map(|l| LevelRegion::build(h, l, kind, mask))
            .collect::<Result<_>>()?;
        Ok(Self::from_regions(regions, spec))
    }

    fn from_regions(regions: Vec<LevelRegion>, spec: CycleSpec) -> Self {
        let sizes: Vec<usize> = regions.iter().map(|r| r.grid().node_count()).collect();
        let zeros = || sizes.iter().map(|&n| vec![0.0; n]).collect::<Vec<_>>();
        Self {
            spec,
            u: zeros(),
            f: zeros(),
            r: zeros(),
            visits: vec![0; regions.len()],
            regions,
        }
    }

    pub fn spec(&self) -> &CycleSpec {
        &self.spec
    }

    pub fn finest(&self) -> &LevelRegion {
        self.regions.last().expect("at least one level")
    }

    pub fn region(&self, level: usize) -> &LevelRegion {
        &self.regions[level]
    }

    /// Number of visits to each level since construction or the last reset.
    pub fn visits(&self) -> &[usize] {
        &self.visits
    }

    /// Clears all workspaces, as after losing the process state.
    pub fn reset(&mut self) {
        for v in self.u.iter_mut().chain(&mut self.f).chain(&mut self.r) {
            v.fill(0.0);
        }
        self.visits.fill(0);
    }

    /// One cycle on the finest level. `u` and `f` are full-level arrays; only
    /// region rows of `u` are written.
    pub fn cycle(&mut self, u: &mut [f64], f: &[f64]) -> Result<()> {
        let top = self.regions.len() - 1;
        self.visit(top, u, f, self.spec.kind)
    }

    fn visit(&mut self, l: usize, u: &mut [f64], f: &[f64], kind: CycleType) -> Result<()> {
        self.visits[l] += 1;
        if l == 0 {
            return self.coarse_solve(u, f);
        }
        let region = &self.regions[l];
        region.smooth(u, f, self.spec.pre_smooth);

        let mut r = std::mem::take(&mut self.r[l]);
        region.residual(u, f, &mut r);
        let mut fc = std::mem::take(&mut self.f[l - 1]);
        let mut uc = std::mem::take(&mut self.u[l - 1]);
        {
            let coarse = &self.regions[l - 1];
            let fine = region.grid();
            for &n in coarse.nodes() {
                let n = n as usize;
                fc[n] = full_weight_at(fine, &r, coarse.grid().ijk(n));
            }
        }
        uc.fill(0.0);
        match kind {
            CycleType::V => self.visit(l - 1, &mut uc, &fc, CycleType::V)?,
            CycleType::W => {
                self.visit(l - 1, &mut uc, &fc, CycleType::W)?;
                self.visit(l - 1, &mut uc, &fc, CycleType::W)?;
            }
            CycleType::F => {
                self.visit(l - 1, &mut uc, &fc, CycleType::F)?;
                self.visit(l - 1, &mut uc, &fc, CycleType::V)?;
            }
        }
        let region = &self.regions[l];
        let coarse_grid = self.regions[l - 1].grid();
        for &n in region.nodes() {
            let n = n as usize;
            u[n] += interpolate_at(coarse_grid, &uc, region.grid().ijk(n));
        }
        region.smooth(u, f, self.spec.post_smooth);

        self.r[l] = r;
        self.f[l - 1] = fc;
        self.u[l - 1] = uc;
        Ok(())
    }

    fn coarse_solve(&mut self, u: &mut [f64], f: &[f64]) -> Result<()> {
        let region = &self.regions[0];
        let mut r = vec![0.0; u.len()];
        region.residual(u, f, &mut r);
        let mut b = vec![0.0; region.len()];
        region.gather(&r, &mut b);
        let mut e = vec![0.0; region.len()];
        pcg(region, &b, &mut e, &self.spec.coarse)?;
        region.scatter_add(&e, u);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{PartitionSpec, Region};
    use crate::operators::assemble_dense;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(p: [usize; 3], levels: usize) -> GridHierarchy {
        GridHierarchy::build(PartitionSpec::new(p, 2, levels)).unwrap()
    }

    fn random_interior(region: &LevelRegion, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u = vec![0.0; region.grid().node_count()];
        for &n in region.nodes() {
            u[n as usize] = rng.gen_range(-1.0..1.0);
        }
        u
    }

    fn one_cycle_reduction(kind: CycleType) -> f64 {
        let h = setup([2, 2, 2], 3);
        let mut mg = RegionMultigrid::full(&h, CycleSpec::with_kind(kind)).unwrap();
        let mut u = random_interior(mg.finest(), 42);
        let f = vec![0.0; u.len()];
        let mut r = vec![0.0; u.len()];
        mg.finest().residual(&u, &f, &mut r);
        let r0 = mg.finest().norm(&r);
        mg.cycle(&mut u, &f).unwrap();
        mg.finest().residual(&u, &f, &mut r);
        mg.finest().norm(&r) / r0
    }

    #[test]
    fn v_cycle_contracts_strongly() {
        let h = setup([2, 2, 2], 3);
        let mut mg = RegionMultigrid::full(&h, CycleSpec::default()).unwrap();
        let mut u = random_interior(mg.finest(), 1);
        let f = vec![0.0; u.len()];
        let mut r = vec![0.0; u.len()];
        let mut prev = f64::INFINITY;
        let mut factor = 1.0;
        for _ in 0..10 {
            mg.cycle(&mut u, &f).unwrap();
            mg.finest().residual(&u, &f, &mut r);
            let now = mg.finest().norm(&r);
            factor = now / prev;
            prev = now;
        }
        assert!(factor <= 0.2, "factor {factor}");
    }

    #[test]
    fn w_cycle_beats_v_cycle_after_one_cycle() {
        assert!(one_cycle_reduction(CycleType::W) <= one_cycle_reduction(CycleType::V));
    }

    #[test]
    fn exact_solution_stays_put() {
        let h = setup([2, 1, 1], 2);
        let mut mg = RegionMultigrid::full(&h, CycleSpec::default()).unwrap();
        let u0 = random_interior(mg.finest(), 3);
        let mut f = vec![0.0; u0.len()];
        mg.finest().apply(&u0, &mut f);
        let mut u = u0.clone();
        mg.cycle(&mut u, &f).unwrap();
        let mut r = vec![0.0; u.len()];
        mg.finest().residual(&u, &f, &mut r);
        assert!(mg.finest().norm(&r) <= 1e-12 * mg.finest().norm(&f));
    }

    #[test]
    fn visit_counts_order_v_f_w() {
        let h = setup([1, 1, 1], 3);
        let counts = |kind| {
            let mut mg = RegionMultigrid::full(&h, CycleSpec::with_kind(kind)).unwrap();
            let mut u = vec![0.0; mg.finest().grid().node_count()];
            let f = vec![1.0; u.len()];
            mg.cycle(&mut u, &f).unwrap();
            mg.visits().to_vec()
        };
        assert_eq!(counts(CycleType::V), vec![1, 1, 1, 1]);
        assert_eq!(counts(CycleType::W), vec![8, 4, 2, 1]);
        assert_eq!(counts(CycleType::F), vec![4, 3, 2, 1]);
    }

    #[test]
    fn faulty_dirichlet_cycles_match_dense_local_solve() {
        let h = setup([3, 1, 1], 2);
        let mask = h.region_masks(&[1]).unwrap();
        let spec = CycleSpec::default();
        let mut mg = RegionMultigrid::build(&h, RegionKind::FaultyDirichlet, &mask, spec).unwrap();
        let g = h.grid(2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut u: Vec<f64> = (0..g.node_count())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let f: Vec<f64> = (0..g.node_count())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let outside = u.clone();
        let region = mg.finest().clone();
        // dense oracle: A_FF u_F = f_F - A_FG u_G
        let a = assemble_dense(&region).unwrap();
        let mut rhs = vec![0.0; u.len()];
        let mut masked = u.clone();
        for &n in region.nodes() {
            masked[n as usize] = 0.0;
        }
        region.residual(&masked, &f, &mut rhs);
        let mut b = vec![0.0; region.len()];
        region.gather(&rhs, &mut b);
        let exact = a.cholesky().unwrap().solve(&DVector::from_vec(b));
        for _ in 0..20 {
            mg.cycle(&mut u, &f).unwrap();
        }
        for (k, &n) in region.nodes().iter().enumerate() {
            assert!((u[n as usize] - exact[k]).abs() <= 1e-10 * exact.amax());
        }
        for n in 0..u.len() {
            if mask.region(2, n) != Region::Faulty {
                assert_eq!(u[n].to_bits(), outside[n].to_bits());
            }
        }
    }
}
