//! Each controller collapses to a simpler one under a degenerate gain profile.

mod common;

use common::{fixture, max_abs_diff, orders};
use npalf_core::optim::{npid_sgd_epoch, pid_sgd_epoch, sgd_epoch};
use npalf_core::{
    npalf_epoch, ControllerBank, FitnessKind, LinearPid, NpalfParams, NpidGains, Swarm,
};

const ETA: f64 = 0.04;
const LAMBDA: f64 = 0.05;

#[test]
fn pid_with_unit_proportional_gain_is_sgd() {
    let fx = fixture(1);
    let (mut a, mut b) = (fx.model.clone(), fx.model.clone());
    let mut bank = ControllerBank::new(fx.train.len());
    let pid = LinearPid::new(1.0, 0.0, 0.0).unwrap();
    for order in orders(fx.train.len(), 20, 1) {
        sgd_epoch(&mut a, &fx.train, &order, ETA, LAMBDA).unwrap();
        pid_sgd_epoch(&mut b, &mut bank, &fx.train, &order, ETA, LAMBDA, &pid).unwrap();
        assert!(max_abs_diff(&a, &b) <= 1e-14);
    }
}

#[test]
fn linear_npid_is_pid() {
    let fx = fixture(2);
    let (kp, ki, kd) = (1.1, 0.05, 0.2);
    let (mut a, mut b) = (fx.model.clone(), fx.model.clone());
    let mut bank_a = ControllerBank::new(fx.train.len());
    let mut bank_b = ControllerBank::new(fx.train.len());
    let pid = LinearPid::new(kp, ki, kd).unwrap();
    let gains = NpidGains::linear(kp, ki, kd);
    for order in orders(fx.train.len(), 20, 2) {
        pid_sgd_epoch(&mut a, &mut bank_a, &fx.train, &order, ETA, LAMBDA, &pid).unwrap();
        npid_sgd_epoch(&mut b, &mut bank_b, &fx.train, &order, ETA, LAMBDA, &gains).unwrap();
        assert!(max_abs_diff(&a, &b) <= 1e-12, "{}", max_abs_diff(&a, &b));
    }
    assert_eq!(bank_a, bank_b);
}

#[test]
fn identity_npid_is_sgd() {
    let fx = fixture(3);
    let (mut a, mut b) = (fx.model.clone(), fx.model.clone());
    let mut bank = ControllerBank::new(fx.train.len());
    for order in orders(fx.train.len(), 20, 3) {
        sgd_epoch(&mut a, &fx.train, &order, ETA, LAMBDA).unwrap();
        npid_sgd_epoch(
            &mut b,
            &mut bank,
            &fx.train,
            &order,
            ETA,
            LAMBDA,
            &NpidGains::IDENTITY,
        )
        .unwrap();
        assert!(max_abs_diff(&a, &b) <= 1e-14);
    }
}

#[test]
fn two_degenerate_particles_are_two_sgd_passes() {
    let fx = fixture(4);
    let params = NpalfParams::sgd_equivalent(ETA, LAMBDA);
    assert_eq!(params.k_phi, 0.002);
    let mut swarm = Swarm::frozen(params, 2, FitnessKind::Rmse).unwrap();
    let mut bank = ControllerBank::new(fx.train.len());
    let (mut a, mut b) = (fx.model.clone(), fx.model.clone());
    for order in orders(fx.train.len(), 10, 4) {
        sgd_epoch(&mut a, &fx.train, &order, ETA, LAMBDA).unwrap();
        sgd_epoch(&mut a, &fx.train, &order, ETA, LAMBDA).unwrap();
        let report =
            npalf_epoch(&mut b, &mut bank, &mut swarm, &fx.train, &fx.valid, &order).unwrap();
        assert!(max_abs_diff(&a, &b) <= 1e-12, "{}", max_abs_diff(&a, &b));
        // identical particles still score differently, since each is scored
        // on the model after its own pass
        let lowest = swarm
            .particles()
            .iter()
            .map(|p| p.best_fitness)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(lowest, report.global_best_fitness);
    }
}

#[test]
fn sgd_descends_the_training_objective() {
    let fx = fixture(5);
    let mut m = fx.model.clone();
    let mut prev = m.objective(&fx.train, LAMBDA).unwrap();
    let start = prev;
    for order in orders(fx.train.len(), 30, 5) {
        sgd_epoch(&mut m, &fx.train, &order, 0.01, LAMBDA).unwrap();
        let now = m.objective(&fx.train, LAMBDA).unwrap();
        assert!(
            now <= prev * (1.0 + 1e-9),
            "objective rose from {prev} to {now}"
        );
        prev = now;
    }
    assert!(prev < start);
}
