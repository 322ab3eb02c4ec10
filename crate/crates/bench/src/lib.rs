//! Shared instance setup for the criterion benchmarks.

use lapsolve_core::SparseSymmetricMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub name: String,
    pub matrix: SparseSymmetricMatrix,
    pub rhs: Vec<f64>,
}

pub fn grid_instance(side: usize, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = lapsolve_core::generate::grid(side, side, &mut rng, 1.0);
    let matrix = g.laplacian();
    let n = matrix.dimension();
    let comps: Vec<Vec<usize>> = vec![(0..n).collect()];
    let rhs = lapsolve_core::generate::compatible_rhs(n, &comps, &[true], &mut rng);
    Instance { name: format!("grid-{side}x{side}"), matrix, rhs }
}

pub fn random_instance(n: usize, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = lapsolve_core::generate::connected_graph(n, 2 * n, &mut rng, 2.0);
    let matrix = g.laplacian();
    let comps: Vec<Vec<usize>> = vec![(0..n).collect()];
    let rhs = lapsolve_core::generate::compatible_rhs(n, &comps, &[true], &mut rng);
    Instance { name: format!("random-{n}"), matrix, rhs }
}
