//! Seeded low-rank rating matrices for tests, benchmarks and the demo.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{HdiDataset, RatingTriple};
use crate::error::DataError;

/// Shape and noise of a synthetic matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowRankSpec {
    pub n_users: usize,
    pub n_items: usize,
    pub rank: usize,
    /// Fraction of cells observed.
    pub density: f64,
    /// Standard deviation of the additive Gaussian noise.
    pub noise: f64,
}

/// Ground-truth factors are uniform on `[0, 1)`, so a clean rating is a sum of
/// `rank` products and averages `rank / 4`. Observed cells are drawn without
/// replacement and listed in row-major order.
pub fn low_rank(spec: LowRankSpec, seed: u64) -> Result<HdiDataset, DataError> {
    let LowRankSpec {
        n_users,
        n_items,
        rank,
        density,
        noise,
    } = spec;
    if !(density > 0.0 && density <= 1.0) || !(noise >= 0.0) || rank == 0 {
        return Err(DataError::Malformed {
            line: 0,
            reason: format!("invalid synthetic spec {spec:?}"),
        });
    }
    let cells = n_users * n_items;
    let known = ((cells as f64 * density).round() as usize).clamp(1, cells);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u: Vec<f64> = (0..n_users * rank).map(|_| rng.gen::<f64>()).collect();
    let v: Vec<f64> = (0..n_items * rank).map(|_| rng.gen::<f64>()).collect();
    let mut picked = index::sample(&mut rng, cells, known).into_vec();
    picked.sort_unstable();

    let gauss = Normal::new(0.0, noise).expect("noise is finite and >= 0");
    let entries = picked
        .into_iter()
        .map(|cell| {
            let (m, n) = (cell / n_items, cell % n_items);
            let clean: f64 = (0..rank).map(|d| u[m * rank + d] * v[n * rank + d]).sum();
            RatingTriple::new(m, n, clean + gauss.sample(&mut rng))
        })
        .collect();
    HdiDataset::from_triples(n_users, n_items, entries)
}
