//! Built-in boundary-value problems.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grid::LevelGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    /// Zero source, harmonic cubic boundary data. The discrete solution equals
    /// the polynomial at every node.
    Harmonic,
    /// `u = sin(pi x) sin(pi y) sin(pi z) + xyz` with the matching source.
    Manufactured,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialGuess {
    Zero,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub initial_guess: InitialGuess,
}

impl Default for ProblemSpec {
    fn default() -> Self {
        Self {
            kind: ProblemKind::Harmonic,
            initial_guess: InitialGuess::Zero,
        }
    }
}

impl ProblemSpec {
    pub fn boundary(&self, [x, y, z]: [f64; 3]) -> f64 {
        match self.kind {
            ProblemKind::Harmonic => x * x * x - 3.0 * x * y * y + 2.0 * z * z - x * x - y * y,
            ProblemKind::Manufactured => self.exact([x, y, z]).unwrap_or(0.0),
        }
    }

    pub fn source(&self, [x, y, z]: [f64; 3]) -> f64 {
        match self.kind {
            ProblemKind::Harmonic => 0.0,
            ProblemKind::Manufactured => {
                3.0 * PI * PI * (PI * x).sin() * (PI * y).sin() * (PI * z).sin()
            }
        }
    }

    /// Continuous solution, where known in closed form.
    pub fn exact(&self, [x, y, z]: [f64; 3]) -> Option<f64> {
        Some(match self.kind {
            ProblemKind::Harmonic => self.boundary([x, y, z]),
            ProblemKind::Manufactured => {
                (PI * x).sin() * (PI * y).sin() * (PI * z).sin() + x * y * z
            }
        })
    }

    /// Initial iterate and right-hand side on one level: boundary data on
    /// Dirichlet nodes, the chosen guess elsewhere.
    pub fn initial_state(&self, grid: &LevelGrid, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = grid.node_count();
        let mut u = vec![0.0; n];
        let mut f = vec![0.0; n];
        for node in 0..n {
            let p = grid.position(node);
            if grid.is_boundary(grid.ijk(node)) {
                u[node] = self.boundary(p);
            } else {
                f[node] = self.source(p);
                if self.initial_guess == InitialGuess::Random {
                    u[node] = rng.gen_range(-1.0..1.0);
                }
            }
        }
        (u, f)
    }
}
