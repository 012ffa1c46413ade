//! Epochs NPID needs to reach plain SGD's 300-epoch validation RMSE on the
//! 300x200 rank-5 synthetic benchmark, for five seeds.
//!
//! cargo run --release --example convergence -- [kp1 kp2 kp3 ki1 ki2 kd1 kd2 kd3 kd4]

use npalf_core::config::{OptimizerTag, RunConfig, TUNED_NPID_GAINS};
use npalf_core::synth::{low_rank, LowRankSpec};
use npalf_core::trainer::train_on;
use npalf_core::{split_dataset, NpidGains};

fn main() {
    let args: Vec<f64> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("number"))
        .collect();
    let gains = if args.is_empty() {
        TUNED_NPID_GAINS
    } else {
        NpidGains::from_array(args.try_into().expect("nine gains")).expect("valid gains")
    };
    let mut ratios = Vec::new();
    for seed in 0..5u64 {
        let spec = LowRankSpec {
            n_users: 300,
            n_items: 200,
            rank: 5,
            density: 0.03,
            noise: 0.05,
        };
        let ds = low_rank(spec, seed).unwrap();
        let split = split_dataset(&ds, Default::default(), seed).unwrap();
        let base = RunConfig {
            rank: 5,
            eta: 0.01,
            lambda: 0.03,
            seed,
            max_epochs: 300,
            tol: f64::MIN_POSITIVE,
            timing: false,
            npid: gains,
            ..RunConfig::default()
        };
        let sgd = train_on(
            &RunConfig {
                optimizer: OptimizerTag::Sgd,
                ..base.clone()
            },
            &ds,
            &split,
        )
        .unwrap();
        let target = sgd.records.last().unwrap().valid_rmse;
        let npid = train_on(
            &RunConfig {
                optimizer: OptimizerTag::Npid,
                ..base
            },
            &ds,
            &split,
        );
        let reached = match &npid {
            Ok(run) => run
                .records
                .iter()
                .find(|r| r.valid_rmse <= target)
                .map(|r| r.epoch),
            Err(e) => {
                println!("seed {seed}: npid failed: {e}");
                None
            }
        };
        let epochs = reached.unwrap_or(usize::MAX);
        let ratio = epochs as f64 / sgd.records.len() as f64;
        println!(
            "seed {seed}: sgd epochs {} target {target:.6} npid epochs {:?} ratio {ratio:.3}",
            sgd.records.len(),
            reached
        );
        ratios.push(ratio);
    }
    ratios.sort_by(f64::total_cmp);
    println!("median ratio {:.3}", ratios[2]);
}
