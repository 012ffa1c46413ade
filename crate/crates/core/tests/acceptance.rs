//! Acceptance checks. Prints one PASS/FAIL/SKIP line per criterion and exits
//! non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use npalf_core::bench::bench;
use npalf_core::config::{OptimizerTag, RunConfig, TUNED_NPID_GAINS};
use npalf_core::model::DEFAULT_INIT_SCALE;
use npalf_core::optim::{npid_sgd_epoch, sgd_epoch};
use npalf_core::pso::Bounds;
use npalf_core::synth::{low_rank, LowRankSpec};
use npalf_core::trainer::{train_on, Termination};
use npalf_core::{
    npalf_epoch, split_dataset, ControllerBank, DataSplit, FactorModel, FitnessKind, HdiDataset,
    NpalfParams, NpidGains, RatingTriple, Swarm, SwarmSettings,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, start: Instant) -> Result<Duration, String> {
    let t = start.elapsed();
    check(t < limit, || format!("took {t:.2?}, limit {limit:?}"))?;
    Ok(t)
}

/// The 50x40 rank-3 matrix, 5% observed, noise 0.01.
fn small() -> (HdiDataset, DataSplit) {
    let spec = LowRankSpec {
        n_users: 50,
        n_items: 40,
        rank: 3,
        density: 0.05,
        noise: 0.01,
    };
    let ds = low_rank(spec, 11).unwrap();
    let split = split_dataset(&ds, Default::default(), 11).unwrap();
    (ds, split)
}

struct Parts {
    train: Vec<RatingTriple>,
    valid: Vec<RatingTriple>,
    init: FactorModel,
}

fn parts(ds: &HdiDataset, split: &DataSplit, rank: usize, seed: u64) -> Parts {
    Parts {
        train: ds.select(&split.train),
        valid: ds.select(&split.validation),
        init: FactorModel::init(ds.n_users(), ds.n_items(), rank, seed, DEFAULT_INIT_SCALE)
            .unwrap(),
    }
}

/// Runs `epochs` passes of `step` with a shared shuffled order and returns
/// the validation RMSE after each.
fn trajectory<F>(p: &Parts, epochs: usize, mut step: F) -> Vec<f64>
where
    F: FnMut(&mut FactorModel, &[usize]),
{
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut order: Vec<usize> = (0..p.train.len()).collect();
    let mut model = p.init.clone();
    (0..epochs)
        .map(|_| {
            order.shuffle(&mut rng);
            step(&mut model, &order);
            model.rmse(&p.valid).unwrap()
        })
        .collect()
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn degeneration_to_sgd() -> Outcome {
    let start = Instant::now();
    let (ds, split) = small();
    let p = parts(&ds, &split, 3, 5);
    let (eta, lambda) = (0.04, 0.05);
    let sgd = trajectory(&p, 50, |m, o| {
        sgd_epoch(m, &p.train, o, eta, lambda).unwrap()
    });

    let mut bank = ControllerBank::new(p.train.len());
    let npid = trajectory(&p, 50, |m, o| {
        npid_sgd_epoch(m, &mut bank, &p.train, o, eta, lambda, &NpidGains::IDENTITY).unwrap()
    });

    let mut s = [0.0; 10];
    s[0] = 0.002;
    s[1] = 0.04;
    let mut swarm = Swarm::frozen(NpalfParams::decode(s), 1, FitnessKind::Rmse).unwrap();
    let mut bank = ControllerBank::new(p.train.len());
    let npalf = trajectory(&p, 50, |m, o| {
        npalf_epoch(m, &mut bank, &mut swarm, &p.train, &p.valid, o).unwrap();
    });

    // the same property through the trainer: identical seeds give identical visit orders
    let cfg = RunConfig {
        rank: 3,
        max_epochs: 50,
        tol: f64::MIN_POSITIVE,
        timing: false,
        ..RunConfig::default()
    };
    let identity = RunConfig {
        optimizer: OptimizerTag::Npid,
        npid: NpidGains::IDENTITY,
        ..cfg.clone()
    };
    let trained_npid: Vec<f64> = train_on(&identity, &ds, &split)
        .unwrap()
        .records
        .iter()
        .map(|r| r.valid_rmse)
        .collect();
    let trained_sgd: Vec<f64> = train_on(
        &RunConfig {
            optimizer: OptimizerTag::Sgd,
            ..cfg
        },
        &ds,
        &split,
    )
    .unwrap()
    .records
    .iter()
    .map(|r| r.valid_rmse)
    .collect();

    let (g1, g2, g3) = (
        max_gap(&sgd, &npid),
        max_gap(&sgd, &npalf),
        max_gap(&trained_sgd, &trained_npid),
    );
    check(g1 <= 1e-10, || format!("npid identity deviates by {g1:e}"))?;
    check(g2 <= 1e-10, || format!("frozen npalf deviates by {g2:e}"))?;
    check(g3 <= 1e-10, || {
        format!("trainer npid identity deviates by {g3:e}")
    })?;
    let t = within(Duration::from_secs(5), start)?;
    Ok(format!(
        "max deviation npid {g1:.1e}, npalf {g2:.1e}, trainer {g3:.1e}; {t:.2?}"
    ))
}

fn linear_pid_equivalence() -> Outcome {
    let start = Instant::now();
    let (ds, split) = small();
    let p = parts(&ds, &split, 3, 6);
    let (eta, lambda) = (0.04, 0.05);
    // kp2, kd4 are inert once kp3 = kd3 = 0
    let gains = NpidGains::from_array([0.9, 0.7, 0.0, 0.02, 0.0, 0.05, 0.03, 0.0, 1.3]).unwrap();
    let (kp, ki, kd) = (0.9, 0.02, 0.05 + 0.03);

    let mut bank = ControllerBank::new(p.train.len());
    let npid = trajectory(&p, 20, |m, o| {
        npid_sgd_epoch(m, &mut bank, &p.train, o, eta, lambda, &gains).unwrap()
    });

    // textbook positional PID on each entry's error sequence
    let mut sum = vec![0.0; p.train.len()];
    let mut prev = vec![0.0; p.train.len()];
    let classical = trajectory(&p, 20, |m, o| {
        for &i in o {
            let t = p.train[i];
            let pred: f64 = m
                .user_factors(t.user)
                .iter()
                .zip(m.item_factors(t.item))
                .map(|(a, b)| a * b)
                .sum();
            let e = t.value - pred;
            sum[i] += e;
            let u = kp * e + ki * sum[i] + kd * (e - prev[i]);
            prev[i] = e;
            let x: Vec<f64> = m.user_factors(t.user).to_vec();
            let y: Vec<f64> = m.item_factors(t.item).to_vec();
            for (d, xd) in m.user_factors_mut(t.user).iter_mut().enumerate() {
                *xd += eta * (u * y[d] - lambda * x[d]);
            }
            for (d, yd) in m.item_factors_mut(t.item).iter_mut().enumerate() {
                *yd += eta * (u * x[d] - lambda * y[d]);
            }
        }
    });
    let g = max_gap(&npid, &classical);
    check(g <= 1e-10, || format!("deviation {g:e}"))?;
    let t = within(Duration::from_secs(5), start)?;
    Ok(format!("max deviation {g:.1e}; {t:.2?}"))
}

fn half_loss(m: &FactorModel, t: &RatingTriple, lambda: f64) -> f64 {
    let x = m.user_factors(t.user);
    let y = m.item_factors(t.item);
    let e = t.value - x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    let sq = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>();
    0.5 * (e * e + lambda * sq(x) + lambda * sq(y))
}

fn gradient_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (h, eta) = (1e-6, 0.01);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let f = [1, 2, 5][i % 3];
        let (users, items) = (3, 4);
        let x: Vec<f64> = (0..users * f).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..items * f).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let model = FactorModel::from_parts(users, items, f, x, y).unwrap();
        let t = RatingTriple::new(
            rng.gen_range(0..users),
            rng.gen_range(0..items),
            rng.gen_range(-2.0..2.0),
        );
        let lambda = rng.gen_range(0.0..0.5);

        let mut stepped = model.clone();
        sgd_epoch(&mut stepped, &[t], &[0], eta, lambda).unwrap();

        for (is_user, row) in [(true, t.user), (false, t.item)] {
            for d in 0..f {
                let probe = |delta: f64| {
                    let mut m = model.clone();
                    let r = if is_user {
                        m.user_factors_mut(row)
                    } else {
                        m.item_factors_mut(row)
                    };
                    r[d] += delta;
                    half_loss(&m, &t, lambda)
                };
                let grad = (probe(h) - probe(-h)) / (2.0 * h);
                let before = if is_user {
                    model.user_factors(row)[d]
                } else {
                    model.item_factors(row)[d]
                };
                let after = if is_user {
                    stepped.user_factors(row)[d]
                } else {
                    stepped.item_factors(row)[d]
                };
                let (step, want) = (after - before, -eta * grad);
                let scale = step.abs().max(want.abs());
                let rel = if scale == 0.0 {
                    0.0
                } else {
                    (step - want).abs() / scale
                };
                check(rel <= 1e-5, || {
                    format!(
                        "instance {i}, f={f}, coord {d}: step {step:e} vs {want:e} (rel {rel:e})"
                    )
                })?;
                worst = worst.max(rel);
            }
        }
    }
    Ok(format!("100 instances, worst relative error {worst:.1e}"))
}

fn metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let len = rng.gen_range(1..200);
        let scale = 10f64.powf(rng.gen_range(-3.0..3.0));
        let r: Vec<f64> = (0..len).map(|_| scale * rng.gen_range(-1.0..1.0)).collect();
        // zero factors predict 0, so every residual is the stored value
        let m = FactorModel::from_parts(1, len, 1, vec![0.0], vec![0.0; len]).unwrap();
        let entries: Vec<_> = r
            .iter()
            .enumerate()
            .map(|(j, &v)| RatingTriple::new(0, j, v))
            .collect();
        let (rmse, mae) = (m.rmse(&entries).unwrap(), m.mae(&entries).unwrap());

        let mut sq = 0.0;
        let mut abs = 0.0;
        for v in &r {
            sq += v * v;
            abs += v.abs();
        }
        let (want_rmse, want_mae) = ((sq / len as f64).sqrt(), abs / len as f64);
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
        let e = rel(rmse, want_rmse).max(rel(mae, want_mae));
        check(e <= 1e-12, || format!("vector {i}: relative error {e:e}"))?;
        check(rmse >= mae, || {
            format!("vector {i}: rmse {rmse} < mae {mae}")
        })?;
        worst = worst.max(e);
    }
    Ok(format!("1000 vectors, worst relative error {worst:.1e}"))
}

fn pso_invariants() -> Outcome {
    let default = swarm_invariants(SwarmSettings::default())?;
    // the invariants must not depend on the search box
    let wide = swarm_invariants(SwarmSettings {
        bounds: Bounds::wide(),
        ..SwarmSettings::default()
    })?;
    Ok(format!("default bounds: {default}; wide bounds: {wide}"))
}

fn swarm_invariants(settings: SwarmSettings) -> Outcome {
    let (ds, split) = small();
    let p = parts(&ds, &split, 3, 7);
    check(settings.size == 8, || {
        format!("default swarm size {}", settings.size)
    })?;
    let mut swarm = Swarm::new(settings, 7).unwrap();
    let mut bank = ControllerBank::new(p.train.len());
    let mut model = p.init.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut order: Vec<usize> = (0..p.train.len()).collect();
    let mut last = f64::INFINITY;
    let mut diverged_passes = 0;
    for epoch in 1..=200 {
        order.shuffle(&mut rng);
        let report = npalf_epoch(
            &mut model, &mut bank, &mut swarm, &p.train, &p.valid, &order,
        )
        .map_err(|e| format!("epoch {epoch}: {e}"))?;
        diverged_passes += report.diverged.len();
        let best = swarm.global_best_fitness();
        check(best <= last, || {
            format!("epoch {epoch}: global best rose from {last} to {best}")
        })?;
        last = best;
        let b = &swarm.settings().bounds;
        for (j, q) in swarm.particles().iter().enumerate() {
            check(b.contains_position(&q.position), || {
                format!("epoch {epoch}: particle {j} position out of bounds")
            })?;
            check(b.contains_velocity(&q.velocity), || {
                format!("epoch {epoch}: particle {j} velocity out of bounds")
            })?;
        }
    }
    Ok(format!(
        "final global best {last:.6}, {diverged_passes} passes rolled back"
    ))
}

fn convergence_speed() -> Outcome {
    let start = Instant::now();
    let pinned = NpidGains::from_array([1.4, 0.4, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
    check(TUNED_NPID_GAINS == pinned, || {
        format!("shipped gains changed: {TUNED_NPID_GAINS:?}")
    })?;
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
            npid: pinned,
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
        check(sgd.records.len() == 300, || {
            format!("seed {seed}: sgd stopped after {}", sgd.records.len())
        })?;
        let target = sgd.records[299].valid_rmse;
        let npid = train_on(
            &RunConfig {
                optimizer: OptimizerTag::Npid,
                ..base
            },
            &ds,
            &split,
        )
        .unwrap();
        let reached = npid
            .records
            .iter()
            .find(|r| r.valid_rmse <= target)
            .map_or(f64::INFINITY, |r| r.epoch as f64);
        ratios.push(reached / 300.0);
    }
    let mut sorted = ratios.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[2];
    check(median <= 0.8, || {
        format!("median epoch ratio {median:.3} (per seed {ratios:.3?})")
    })?;
    let t = within(Duration::from_secs(60), start)?;
    Ok(format!(
        "median epoch ratio {median:.3} (per seed {ratios:.3?}); {t:.2?}"
    ))
}

const MOVIELENS_ENV: &str = "NPALF_MOVIELENS_100K";

/// `None` when no MovieLens file is configured.
fn movielens_sanity() -> Option<Outcome> {
    let path = std::env::var_os(MOVIELENS_ENV)?;
    let start = Instant::now();
    Some((|| {
        let base = RunConfig {
            data: Some(Path::new(&path).to_path_buf()),
            timing: false,
            ..RunConfig::default()
        };
        let ds = npalf_core::trainer::load_dataset(&base).map_err(|e| e.to_string())?;
        let split = split_dataset(&ds, base.split, base.seed).map_err(|e| e.to_string())?;
        let run = |tag| {
            train_on(
                &RunConfig {
                    optimizer: tag,
                    ..base.clone()
                },
                &ds,
                &split,
            )
            .map_err(|e| e.to_string())
        };
        let (sgd, npalf) = (run(OptimizerTag::Sgd)?, run(OptimizerTag::Npalf)?);
        for s in [&sgd.summary, &npalf.summary] {
            check(s.test_rmse < 1.05, || {
                format!("{} test RMSE {}", s.optimizer, s.test_rmse)
            })?;
        }
        let (a, b) = (npalf.summary.best_valid_rmse, sgd.summary.best_valid_rmse);
        check(a <= b + 0.01, || {
            format!("npalf best validation {a} vs sgd {b}")
        })?;
        let t = within(Duration::from_secs(600), start)?;
        Ok(format!(
            "test rmse sgd {:.4} npalf {:.4}; {t:.2?}",
            sgd.summary.test_rmse, npalf.summary.test_rmse
        ))
    })())
}

fn protocol_conformance() -> Outcome {
    let triples: Vec<_> = (0..10)
        .map(|k| RatingTriple::new(k % 4, k, 1.0 + k as f64))
        .collect();
    let ds = HdiDataset::from_triples(4, 10, triples).unwrap();
    let s = split_dataset(&ds, "7:1:2".parse().unwrap(), 1).unwrap();
    let sizes = (s.train.len(), s.validation.len(), s.test.len());
    check(sizes == (7, 1, 2), || format!("split sizes {sizes:?}"))?;

    let defaults = RunConfig::default();
    check(defaults.tol == 1e-5 && defaults.max_epochs == 1000, || {
        format!(
            "default tol {} max_epochs {}",
            defaults.tol, defaults.max_epochs
        )
    })?;

    let (ds, split) = small();
    let cfg = RunConfig {
        rank: 3,
        timing: false,
        ..RunConfig::default()
    };
    let run = train_on(&cfg, &ds, &split).unwrap();
    let v: Vec<f64> = run.records.iter().map(|r| r.valid_rmse).collect();
    let first_small = (1..v.len()).find(|&k| (v[k] - v[k - 1]).abs() < 1e-5);
    match run.summary.termination {
        Termination::Converged => check(first_small == Some(v.len() - 1), || {
            format!(
                "stopped at {} but first small change at {first_small:?}",
                v.len()
            )
        })?,
        Termination::MaxEpochs => check(v.len() == 1000 && first_small.is_none(), || {
            format!("max_epochs stop after {} epochs", v.len())
        })?,
        Termination::Diverged => return Err("default sgd diverged".into()),
    }
    let converged_at = v.len();

    let capped = train_on(
        &RunConfig {
            tol: f64::MIN_POSITIVE,
            ..cfg
        },
        &ds,
        &split,
    )
    .unwrap();
    check(
        capped.records.len() == 1000 && capped.summary.termination == Termination::MaxEpochs,
        || {
            format!(
                "tiny tol ran {} epochs ({:?})",
                capped.records.len(),
                capped.summary.termination
            )
        },
    )?;
    Ok(format!(
        "split (7, 1, 2); converged after {converged_at} epochs; cap at 1000 with tiny tol"
    ))
}

fn bench_determinism() -> Outcome {
    let (ds, split) = small();
    let cfg = RunConfig {
        rank: 3,
        max_epochs: 60,
        timing: false,
        seed: 21,
        ..RunConfig::default()
    };
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        bench(&cfg, &ds, &split, d.path()).map_err(|e| e.to_string())?;
    }
    let mut files = vec!["summary.csv".to_string()];
    files.extend(
        OptimizerTag::BENCH
            .iter()
            .map(|t| format!("{}/curve.csv", t.as_str())),
    );
    for f in &files {
        let a = std::fs::read(dirs[0].path().join(f)).map_err(|e| format!("{f}: {e}"))?;
        let b = std::fs::read(dirs[1].path().join(f)).map_err(|e| format!("{f}: {e}"))?;
        check(a == b, || format!("{f} differs between runs"))?;
    }
    Ok(format!("{} files byte-identical", files.len()))
}

fn run(name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    match outcome {
        Ok(detail) => {
            println!("PASS {name}: {detail}");
            true
        }
        Err(why) => {
            println!("FAIL {name}: {why}");
            false
        }
    }
}

fn main() {
    let mut ok = true;
    ok &= run("1 degeneration to sgd", degeneration_to_sgd);
    ok &= run("2 linear pid equivalence", linear_pid_equivalence);
    ok &= run("3 gradient oracle", gradient_oracle);
    ok &= run("4 metric oracle", metric_oracle);
    ok &= run("5 pso invariants", pso_invariants);
    ok &= run("6 convergence speed", convergence_speed);
    match movielens_sanity() {
        Some(outcome) => ok &= run("7 movielens sanity", || outcome),
        None => {
            println!("SKIP 7 movielens sanity: set {MOVIELENS_ENV} to a MovieLens-100K u.data file")
        }
    }
    ok &= run("8 protocol conformance", protocol_conformance);
    ok &= run("9 bench determinism", bench_determinism);
    if !ok {
        std::process::exit(1);
    }
}
