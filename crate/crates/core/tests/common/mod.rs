#![allow(dead_code)]

use chainfilter::{apply_filter, simulate_chain, FilterMatrix, FilteredChain, SupportMask, TransitionMatrix};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn sim_p() -> TransitionMatrix {
    TransitionMatrix::from_rows(&[vec![0.2, 0.3, 0.5], vec![0.8, 0.1, 0.1], vec![0.7, 0.1, 0.2]]).unwrap()
}

pub fn sim_f() -> FilterMatrix {
    FilterMatrix::from_binary_rows(&[&[0, 1, 0], &[1, 1, 0], &[1, 0, 0]]).unwrap()
}

/// Rows drawn from a flat Dirichlet, kept away from zero.
pub fn random_p(k: usize, rng: &mut impl Rng) -> TransitionMatrix {
    let rows: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            let raw: Vec<f64> = (0..k).map(|_| 0.05 - rng.random::<f64>().ln()).collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|v| v / s).collect()
        })
        .collect();
    let mut m = nalgebra::DMatrix::from_row_slice(k, k, &rows.concat());
    // absorb rounding into the last column so rows sum to one
    for i in 0..k {
        let head: f64 = (0..k - 1).map(|j| m[(i, j)]).sum();
        m[(i, k - 1)] = 1.0 - head;
    }
    TransitionMatrix::new(m, SupportMask::full(k)).unwrap()
}

pub fn random_filter(k: usize, rng: &mut impl Rng) -> FilterMatrix {
    FilterMatrix::from_fn(k, |_, _| rng.random::<bool>())
}

/// A pattern that is consistent by construction.
pub fn random_pattern(p: &TransitionMatrix, f: &FilterMatrix, len: usize, rng: &mut impl Rng) -> FilteredChain {
    let initial = rng.random_range(0..p.k());
    let x = simulate_chain(p, initial, len - 1, rng.random()).unwrap();
    apply_filter(&x, f).unwrap()
}

pub fn approx_eq(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}
