//! Latent factor analysis of high-dimensional, incomplete rating matrices.
//!
//! The crate trains `R ~ X Y^T` on the known entries only, with plain SGD,
//! linear and nonlinear PID-rebuilt SGD, a particle-swarm-adapted variant of
//! the nonlinear controller, and Adam / AdaDelta / RMSprop baselines.
//!
//! ```no_run
//! use npalf_core::config::{OptimizerTag, RunConfig};
//! use npalf_core::synth::{low_rank, LowRankSpec};
//! use npalf_core::{split_dataset, trainer};
//!
//! let ds = low_rank(LowRankSpec { n_users: 200, n_items: 150, rank: 3, density: 0.05, noise: 0.05 }, 7).unwrap();
//! let split = split_dataset(&ds, Default::default(), 7).unwrap();
//! let cfg = RunConfig { optimizer: OptimizerTag::Npalf, rank: 3, ..RunConfig::default() };
//! let run = trainer::train_on(&cfg, &ds, &split).unwrap();
//! println!("{:?}", run.summary);
//! ```

pub mod bench;
pub mod config;
pub mod data;
pub mod error;
pub mod model;
pub mod npid;
pub mod optim;
pub mod pso;
pub mod report;
pub mod synth;
pub mod trainer;

pub use data::{
    k_fold_partitions, parse_ratings, split_dataset, DataSplit, Format, HdiDataset, RatingTriple,
    SplitRatio,
};
pub use error::{ConfigError, DataError, ModelError, ParamError, TrainError};
pub use model::{FactorModel, Hyperparams};
pub use npid::{sech_stable, ControllerBank, EntryState, LinearPid, NpidGains};
pub use pso::{npalf_epoch, FitnessKind, NpalfParams, Swarm, SwarmSettings};
