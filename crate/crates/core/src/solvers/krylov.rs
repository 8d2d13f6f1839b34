use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::LevelRegion;

/// A symmetric operator on compact vectors.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn diagonal(&self) -> Vec<f64>;
}

impl LinearOperator for LevelRegion {
    fn dim(&self) -> usize {
        self.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.apply_compact(x, y)
    }

    fn diagonal(&self) -> Vec<f64> {
        LevelRegion::diagonal(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preconditioner {
    Jacobi,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KrylovSpec {
    pub preconditioner: Preconditioner,
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for KrylovSpec {
    fn default() -> Self {
        Self {
            preconditioner: Preconditioner::Jacobi,
            rel_tol: 1e-10,
            max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcgOutcome {
    pub iterations: usize,
    pub converged: bool,
    /// `||r_k|| / ||r_0||` after every iteration.
    pub residuals: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Preconditioned conjugate gradients from the initial guess in `x`.
///
/// Stops when `||r_k|| <= rel_tol * ||r_0||` or after `max_iter` iterations.
/// With `rel_tol = 0` exactly `max_iter` iterations run unless the residual
/// vanishes.
pub fn pcg<A: LinearOperator + ?Sized>(
    a: &A,
    b: &[f64],
    x: &mut [f64],
    spec: &KrylovSpec,
) -> Result<PcgOutcome> {
    let n = a.dim();
    let inv_diag: Vec<f64> = match spec.preconditioner {
        Preconditioner::Jacobi => a.diagonal().iter().map(|d| 1.0 / d).collect(),
        Preconditioner::None => vec![1.0; n],
    };
    let mut r = vec![0.0; n];
    a.apply(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let r0 = dot(&r, &r).sqrt();
    let mut out = PcgOutcome {
        iterations: 0,
        converged: r0 == 0.0,
        residuals: Vec::new(),
    };
    if out.converged {
        return Ok(out);
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 1..=spec.max_iter {
        a.apply(&p, &mut ap);
        let curvature = dot(&p, &ap);
        if !(curvature > 0.0) {
            return Err(Error::Breakdown {
                iteration: it,
                curvature,
            });
        }
        let alpha = rz / curvature;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rel = dot(&r, &r).sqrt() / r0;
        out.iterations = it;
        out.residuals.push(rel);
        if rel <= spec.rel_tol {
            out.converged = true;
            break;
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridHierarchy, PartitionSpec};
    use crate::operators::assemble_dense;
    use nalgebra::DVector;

    struct Diagonal(Vec<f64>);

    impl LinearOperator for Diagonal {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn apply(&self, x: &[f64], y: &mut [f64]) {
            for i in 0..x.len() {
                y[i] = self.0[i] * x[i];
            }
        }
        fn diagonal(&self) -> Vec<f64> {
            self.0.clone()
        }
    }

    struct Negated(Diagonal);

    impl LinearOperator for Negated {
        fn dim(&self) -> usize {
            self.0.dim()
        }
        fn apply(&self, x: &[f64], y: &mut [f64]) {
            self.0.apply(x, y);
            y.iter_mut().for_each(|v| *v = -*v);
        }
        fn diagonal(&self) -> Vec<f64> {
            vec![1.0; self.dim()]
        }
    }

    #[test]
    fn diagonal_system_converges_in_one_iteration() {
        let a = Diagonal(vec![1.0, 2.0, 5.0, 0.5]);
        let b = [1.0, -1.0, 3.0, 2.0];
        let mut x = vec![0.0; 4];
        let out = pcg(&a, &b, &mut x, &KrylovSpec::default()).unwrap();
        assert_eq!(out.iterations, 1);
        assert!(out.converged);
        for (got, want) in x.iter().zip([1.0, -0.5, 0.6, 4.0]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_rhs_and_zero_guess_needs_no_iterations() {
        let a = Diagonal(vec![1.0; 3]);
        let mut x = vec![0.0; 3];
        let out = pcg(&a, &[0.0; 3], &mut x, &KrylovSpec::default()).unwrap();
        assert_eq!(out.iterations, 0);
        assert!(out.converged);
    }

    #[test]
    fn indefinite_operator_breaks_down() {
        let a = Negated(Diagonal(vec![1.0, 2.0]));
        let mut x = vec![0.0; 2];
        assert!(matches!(
            pcg(&a, &[1.0, 1.0], &mut x, &KrylovSpec::default()),
            Err(Error::Breakdown { iteration: 1, .. })
        ));
    }

    #[test]
    fn matches_dense_solve_on_small_dirichlet_problem() {
        let h = GridHierarchy::build(PartitionSpec::new([1, 1, 1], 2, 1)).unwrap();
        let region = LevelRegion::full(&h, 1).unwrap();
        let dense = assemble_dense(&region).unwrap();
        let b: Vec<f64> = (0..region.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let exact = dense
            .cholesky()
            .unwrap()
            .solve(&DVector::from_column_slice(&b));
        let mut x = vec![0.0; region.len()];
        let spec = KrylovSpec {
            rel_tol: 1e-14,
            ..KrylovSpec::default()
        };
        assert!(pcg(&region, &b, &mut x, &spec).unwrap().converged);
        let err = (DVector::from_vec(x) - &exact).amax() / exact.amax();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn error_energy_norm_decreases_monotonically() {
        let h = GridHierarchy::build(PartitionSpec::new([2, 1, 1], 2, 1)).unwrap();
        let region = LevelRegion::full(&h, 1).unwrap();
        let dense = assemble_dense(&region).unwrap();
        let b: Vec<f64> = (0..region.len())
            .map(|i| ((i * 7 % 11) as f64) - 5.0)
            .collect();
        let exact = dense
            .clone()
            .cholesky()
            .unwrap()
            .solve(&DVector::from_column_slice(&b));
        let energy = |x: &[f64]| {
            let e = DVector::from_column_slice(x) - &exact;
            (e.transpose() * &dense * &e)[(0, 0)].sqrt()
        };
        let mut prev = energy(&vec![0.0; region.len()]);
        for k in 1..=15 {
            let mut x = vec![0.0; region.len()];
            let spec = KrylovSpec {
                rel_tol: 0.0,
                max_iter: k,
                ..KrylovSpec::default()
            };
            pcg(&region, &b, &mut x, &spec).unwrap();
            let now = energy(&x);
            assert!(now < prev, "iteration {k}");
            prev = now;
        }
    }

    #[test]
    fn iteration_count_grows_with_grid_size() {
        let count = |levels| {
            let h = GridHierarchy::build(PartitionSpec::new([1, 1, 1], 2, levels)).unwrap();
            let region = LevelRegion::full(&h, levels).unwrap();
            let b = vec![1.0; region.len()];
            let mut x = vec![0.0; region.len()];
            pcg(&region, &b, &mut x, &KrylovSpec::default())
                .unwrap()
                .iterations
        };
        let (small, large) = (count(2), count(3));
        assert!(large > small, "9^3: {small}, 17^3: {large}");
    }
}
