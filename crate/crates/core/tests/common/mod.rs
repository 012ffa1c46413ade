#![allow(dead_code)]

use npalf_core::model::DEFAULT_INIT_SCALE;
use npalf_core::synth::{low_rank, LowRankSpec};
use npalf_core::{split_dataset, DataSplit, FactorModel, HdiDataset, RatingTriple};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct Fixture {
    pub ds: HdiDataset,
    pub split: DataSplit,
    pub train: Vec<RatingTriple>,
    pub valid: Vec<RatingTriple>,
    pub test: Vec<RatingTriple>,
    pub model: FactorModel,
}

/// 30x20 rank-2 matrix, 15% observed.
pub fn fixture(seed: u64) -> Fixture {
    let spec = LowRankSpec {
        n_users: 30,
        n_items: 20,
        rank: 2,
        density: 0.15,
        noise: 0.02,
    };
    let ds = low_rank(spec, seed).unwrap();
    let split = split_dataset(&ds, Default::default(), seed).unwrap();
    Fixture {
        train: ds.select(&split.train),
        valid: ds.select(&split.validation),
        test: ds.select(&split.test),
        model: FactorModel::init(30, 20, 2, seed, DEFAULT_INIT_SCALE).unwrap(),
        ds,
        split,
    }
}

/// `epochs` shuffled visit orders over `n` entries.
pub fn orders(n: usize, epochs: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    (0..epochs)
        .map(|_| {
            order.shuffle(&mut rng);
            order.clone()
        })
        .collect()
}

pub fn max_abs_diff(a: &FactorModel, b: &FactorModel) -> f64 {
    a.x()
        .iter()
        .chain(a.y())
        .zip(b.x().iter().chain(b.y()))
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max)
}
