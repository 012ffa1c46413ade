//! End-to-end runs: epoch loop with the two stopping rules, best-model
//! checkpointing, held-out evaluation and cross-validation.
//!
//! Generator streams derived from the run seed: factor initialization uses
//! `ChaCha8Rng::seed_from_u64(seed)`, the per-epoch visit order uses stream 2
//! of the same seed, and the swarm uses stream 1.

use std::fmt;
use std::fs::File;
use std::io::BufReader;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{RunConfig, VisitOrder};
use crate::data::{
    k_fold_partitions, parse_ratings, split_dataset, DataSplit, HdiDataset, RatingTriple,
};
use crate::error::{ModelError, TrainError};
use crate::model::FactorModel;
use crate::npid::ControllerBank;
use crate::optim::{
    adaptive_epoch, npid_sgd_epoch, pid_sgd_epoch, sgd_epoch, AdaptiveRule, MomentState,
    OptimizerKind,
};
use crate::pso::{npalf_epoch, NpalfParams, Swarm};

/// One row of a convergence curve.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_rmse: f64,
    pub valid_rmse: f64,
    /// Cumulative wall-clock seconds (update passes plus metric evaluation).
    pub seconds: f64,
    pub best_fitness: Option<f64>,
    pub best_params: Option<NpalfParams>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxEpochs,
    Diverged,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::Converged => "converged",
            Termination::MaxEpochs => "max_epochs",
            Termination::Diverged => "diverged",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub optimizer: String,
    /// Lowest validation RMSE seen; NaN if no epoch completed.
    pub best_valid_rmse: f64,
    /// Epoch of `best_valid_rmse`; 0 if no epoch completed.
    pub best_epoch: usize,
    /// Held-out RMSE of the best-validation model.
    pub test_rmse: f64,
    pub epochs: usize,
    pub total_seconds: f64,
    pub termination: Termination,
}

/// Everything a finished run produces.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub records: Vec<EpochRecord>,
    /// Model at the best validation epoch (the initial model if none completed).
    pub best_model: FactorModel,
    /// Diagnostic of a diverged run.
    pub divergence: Option<String>,
}

/// Held-out data the trainer may touch exactly once, after training ends.
pub trait HeldOut {
    fn evaluate(&mut self, model: &FactorModel) -> Result<f64, ModelError>;
}

/// RMSE on a slice of entries.
pub struct TestSet<'a>(pub &'a [RatingTriple]);

impl HeldOut for TestSet<'_> {
    fn evaluate(&mut self, model: &FactorModel) -> Result<f64, ModelError> {
        model.rmse(self.0)
    }
}

enum Stopwatch {
    Wall(std::time::Instant),
    Off,
}

impl Stopwatch {
    fn start(enabled: bool) -> Self {
        if enabled {
            Stopwatch::Wall(std::time::Instant::now())
        } else {
            Stopwatch::Off
        }
    }

    fn seconds(&self) -> f64 {
        match self {
            Stopwatch::Wall(t) => t.elapsed().as_secs_f64(),
            Stopwatch::Off => 0.0,
        }
    }
}

/// Per-optimizer mutable state beyond the factors.
enum Learner {
    Sgd,
    Pid(crate::npid::LinearPid, ControllerBank),
    Npid(crate::npid::NpidGains, ControllerBank),
    Npalf(Box<Swarm>, ControllerBank),
    Adaptive(AdaptiveRule, MomentState),
}

impl Learner {
    fn new(
        kind: &OptimizerKind,
        model: &FactorModel,
        n_train: usize,
        clamp: Option<f64>,
        seed: u64,
    ) -> Result<Self, TrainError> {
        let bank = || ControllerBank::new(n_train).with_integral_clamp(clamp);
        Ok(match kind {
            OptimizerKind::Sgd => Learner::Sgd,
            OptimizerKind::Pid(p) => Learner::Pid(*p, bank()),
            OptimizerKind::Npid(g) => Learner::Npid(*g, bank()),
            OptimizerKind::Npalf(settings) => {
                Learner::Npalf(Box::new(Swarm::new(settings.clone(), seed)?), bank())
            }
            OptimizerKind::Adam(p) => {
                Learner::Adaptive(AdaptiveRule::Adam(*p), MomentState::for_model(model))
            }
            OptimizerKind::AdaDelta(p) => {
                Learner::Adaptive(AdaptiveRule::AdaDelta(*p), MomentState::for_model(model))
            }
            OptimizerKind::RmsProp(p) => {
                Learner::Adaptive(AdaptiveRule::RmsProp(*p), MomentState::for_model(model))
            }
        })
    }
}

/// Trains on explicit train/validation entries and evaluates `held_out` once
/// on the best-validation model.
pub fn fit(
    config: &RunConfig,
    n_users: usize,
    n_items: usize,
    train: &[RatingTriple],
    validation: &[RatingTriple],
    held_out: &mut dyn HeldOut,
) -> Result<RunOutcome, TrainError> {
    let kind = config.optimizer_kind()?;
    fit_with(config, &kind, n_users, n_items, train, validation, held_out)
}

/// [`fit`] with an explicit optimizer instead of the one named in `config`.
pub fn fit_with(
    config: &RunConfig,
    kind: &OptimizerKind,
    n_users: usize,
    n_items: usize,
    train: &[RatingTriple],
    validation: &[RatingTriple],
    held_out: &mut dyn HeldOut,
) -> Result<RunOutcome, TrainError> {
    let hp = config.hyperparams()?;
    if train.is_empty() || validation.is_empty() {
        return Err(ModelError::EmptyEntries.into());
    }
    let mut model = FactorModel::init(
        n_users,
        n_items,
        config.rank,
        config.seed,
        config.init_scale,
    )?;
    let mut learner = Learner::new(
        kind,
        &model,
        train.len(),
        config.integral_clamp,
        config.seed,
    )?;

    let mut order_rng = ChaCha8Rng::seed_from_u64(config.seed);
    order_rng.set_stream(2);
    let mut order: Vec<usize> = (0..train.len()).collect();

    let clock = Stopwatch::start(config.timing);
    let mut records: Vec<EpochRecord> = Vec::new();
    let mut best_model = model.clone();
    let mut best = (f64::NAN, 0usize);
    let mut divergence = None;
    let mut termination = Termination::MaxEpochs;

    for epoch in 1..=config.max_epochs {
        if config.order == VisitOrder::Shuffled {
            order.shuffle(&mut order_rng);
        }
        let mut swarm_best = None;
        let step = match &mut learner {
            Learner::Sgd => sgd_epoch(&mut model, train, &order, hp.eta(), hp.lambda()),
            Learner::Pid(pid, bank) => {
                pid_sgd_epoch(&mut model, bank, train, &order, hp.eta(), hp.lambda(), pid)
            }
            Learner::Npid(gains, bank) => npid_sgd_epoch(
                &mut model,
                bank,
                train,
                &order,
                hp.eta(),
                hp.lambda(),
                gains,
            ),
            Learner::Npalf(swarm, bank) => {
                npalf_epoch(&mut model, bank, swarm, train, validation, &order).and_then(|r| {
                    swarm_best = Some((r.global_best_fitness, r.global_best));
                    // every pass was rolled back, so the model can no longer move
                    if r.diverged.len() == swarm.len() {
                        Err(TrainError::SwarmDiverged)
                    } else {
                        Ok(())
                    }
                })
            }
            Learner::Adaptive(rule, moments) => {
                adaptive_epoch(&mut model, moments, train, &order, *rule, hp.lambda())
            }
        };
        if let Err(e) = step {
            match e {
                TrainError::Diverged { .. } | TrainError::SwarmDiverged => {
                    divergence = Some(format!("epoch {epoch}: {e}"));
                    termination = Termination::Diverged;
                    break;
                }
                other => return Err(other),
            }
        }
        if !model.is_finite() {
            divergence = Some(format!("epoch {epoch}: non-finite factors"));
            termination = Termination::Diverged;
            break;
        }
        let train_rmse = model.rmse(train)?;
        let valid_rmse = model.rmse(validation)?;
        if !valid_rmse.is_finite() {
            divergence = Some(format!("epoch {epoch}: validation RMSE is {valid_rmse}"));
            termination = Termination::Diverged;
            break;
        }
        if best.0.is_nan() || valid_rmse < best.0 {
            best = (valid_rmse, epoch);
            best_model.clone_from(&model);
        }
        let prev = records.last().map(|r| r.valid_rmse);
        records.push(EpochRecord {
            epoch,
            train_rmse,
            valid_rmse,
            seconds: clock.seconds(),
            best_fitness: swarm_best.map(|b| b.0),
            best_params: swarm_best.map(|b| b.1),
        });
        if let Some(p) = prev {
            if (valid_rmse - p).abs() < config.tol {
                termination = Termination::Converged;
                break;
            }
        }
    }

    let test_rmse = if records.is_empty() {
        f64::NAN
    } else {
        held_out.evaluate(&best_model)?
    };
    let summary = RunSummary {
        optimizer: kind.tag().to_string(),
        best_valid_rmse: best.0,
        best_epoch: best.1,
        test_rmse,
        epochs: records.len(),
        total_seconds: records.last().map_or(0.0, |r| r.seconds),
        termination,
    };
    Ok(RunOutcome {
        summary,
        records,
        best_model,
        divergence,
    })
}

/// Trains on one seeded split of `dataset`.
pub fn train_on(
    config: &RunConfig,
    dataset: &HdiDataset,
    split: &DataSplit,
) -> Result<RunOutcome, TrainError> {
    let kind = config.optimizer_kind()?;
    train_split_with(config, &kind, dataset, split)
}

pub fn train_split_with(
    config: &RunConfig,
    kind: &OptimizerKind,
    dataset: &HdiDataset,
    split: &DataSplit,
) -> Result<RunOutcome, TrainError> {
    let train = dataset.select(&split.train);
    let valid = dataset.select(&split.validation);
    let test = dataset.select(&split.test);
    fit_with(
        config,
        kind,
        dataset.n_users(),
        dataset.n_items(),
        &train,
        &valid,
        &mut TestSet(&test),
    )
}

pub fn load_dataset(config: &RunConfig) -> Result<HdiDataset, TrainError> {
    let path = config
        .data
        .as_ref()
        .ok_or_else(|| crate::error::ParamError::Other("no data file configured".into()))?;
    let file = File::open(path)?;
    Ok(parse_ratings(BufReader::new(file), config.format)?)
}

/// Loads the configured dataset, splits it by `config.split` and trains.
pub fn train(config: &RunConfig) -> Result<RunOutcome, TrainError> {
    let dataset = load_dataset(config)?;
    let split = split_dataset(&dataset, config.split, config.seed)?;
    train_on(config, &dataset, &split)
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
        }
    }
}

impl fmt::Display for MeanStd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4} ± {:.1e}", self.mean, self.std)
    }
}

#[derive(Debug, Clone)]
pub struct CrossValidation {
    pub optimizer: String,
    /// One entry per split; failed splits carry their error text.
    pub folds: Vec<Result<RunSummary, String>>,
    pub best_valid_rmse: MeanStd,
    pub test_rmse: MeanStd,
    pub seconds: MeanStd,
}

impl CrossValidation {
    pub fn completed(&self) -> usize {
        self.folds.iter().filter(|f| f.is_ok()).count()
    }

    fn aggregate(optimizer: String, folds: Vec<Result<RunSummary, String>>) -> Self {
        // diverged folds and hard failures are both left out of the statistics
        let ok: Vec<&RunSummary> = folds
            .iter()
            .filter_map(|f| f.as_ref().ok())
            .filter(|s| s.termination != Termination::Diverged)
            .collect();
        let pick =
            |f: fn(&RunSummary) -> f64| MeanStd::of(&ok.iter().map(|s| f(s)).collect::<Vec<_>>());
        Self {
            optimizer,
            best_valid_rmse: pick(|s| s.best_valid_rmse),
            test_rmse: pick(|s| s.test_rmse),
            seconds: pick(|s| s.total_seconds),
            folds,
        }
    }
}

/// Runs one training per split of a repeated k-fold partition and aggregates
/// the summaries. `config.folds` defaults to 10.
pub fn cross_validate(
    config: &RunConfig,
    dataset: &HdiDataset,
) -> Result<CrossValidation, TrainError> {
    let kind = config.optimizer_kind()?;
    let k = config.folds.unwrap_or(10);
    let splits = k_fold_partitions(dataset, k, config.repeats, config.split, config.seed)?;
    let run = |split: &DataSplit| {
        train_split_with(config, &kind, dataset, split)
            .map(|o| o.summary)
            .map_err(|e| e.to_string())
    };
    #[cfg(feature = "parallel")]
    let folds: Vec<_> = {
        use rayon::prelude::*;
        splits.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let folds: Vec<_> = splits.iter().map(run).collect();
    Ok(CrossValidation::aggregate(kind.tag().to_string(), folds))
}
