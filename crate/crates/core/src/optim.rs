//! One-epoch update passes for every compared learning scheme.
//!
//! All passes visit the training entries in the given `order` (a permutation
//! of `0..train.len()`), compute the residual once per entry from the current
//! factors, and update `x_m` and `y_n` from each other's pre-update values.

use std::fmt;

use crate::data::RatingTriple;
use crate::error::{ParamError, TrainError};
use crate::model::FactorModel;
use crate::npid::{ControllerBank, LinearPid, NpidGains};
use crate::pso::SwarmSettings;

/// Which learning scheme a run uses, with its own parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Pid(LinearPid),
    Npid(NpidGains),
    Npalf(SwarmSettings),
    Adam(AdamParams),
    AdaDelta(AdaDeltaParams),
    RmsProp(RmsPropParams),
}

impl OptimizerKind {
    pub fn tag(&self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Pid(_) => "pid",
            OptimizerKind::Npid(_) => "npid",
            OptimizerKind::Npalf(_) => "npalf",
            OptimizerKind::Adam(_) => "adam",
            OptimizerKind::AdaDelta(_) => "adadelta",
            OptimizerKind::RmsProp(_) => "rmsprop",
        }
    }

    pub fn uses_controller(&self) -> bool {
        matches!(
            self,
            OptimizerKind::Pid(_) | OptimizerKind::Npid(_) | OptimizerKind::Npalf(_)
        )
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[inline]
fn diverged(train: &[RatingTriple], idx: usize) -> TrainError {
    let t = train[idx];
    TrainError::Diverged {
        entry: idx,
        user: t.user,
        item: t.item,
    }
}

#[inline]
fn all_finite(a: &[f64], b: &[f64]) -> bool {
    a.iter().chain(b).all(|v| v.is_finite())
}

/// `x <- x + eta*(err*y - lambda*x)`, `y <- y + eta*(err*x_old - lambda*y)`.
#[inline]
fn regularized_step(x: &mut [f64], y: &mut [f64], err: f64, eta: f64, lambda: f64) {
    for (xd, yd) in x.iter_mut().zip(y.iter_mut()) {
        let (x0, y0) = (*xd, *yd);
        *xd = x0 + eta * (err * y0 - lambda * x0);
        *yd = y0 + eta * (err * x0 - lambda * y0);
    }
}

/// `x <- (1 - phi)*x + err*y`, `y <- (1 - phi)*y + err*x_old`: the update with
/// the learning rate folded into `err` and the shrinkage merged into `phi`.
#[inline]
pub(crate) fn merged_step(x: &mut [f64], y: &mut [f64], err: f64, phi: f64) {
    let keep = 1.0 - phi;
    for (xd, yd) in x.iter_mut().zip(y.iter_mut()) {
        let (x0, y0) = (*xd, *yd);
        *xd = keep * x0 + err * y0;
        *yd = keep * y0 + err * x0;
    }
}

fn rebuilt_error_epoch<F>(
    model: &mut FactorModel,
    train: &[RatingTriple],
    order: &[usize],
    eta: f64,
    lambda: f64,
    mut rebuild: F,
) -> Result<(), TrainError>
where
    F: FnMut(usize, f64) -> f64,
{
    for &idx in order {
        let t = &train[idx];
        let e = rebuild(idx, model.residual(t));
        let (x, y) = model.rows_mut(t.user, t.item);
        regularized_step(x, y, e, eta, lambda);
        if !(e.is_finite() && all_finite(x, y)) {
            return Err(diverged(train, idx));
        }
    }
    Ok(())
}

/// Plain SGD over the regularized squared error.
pub fn sgd_epoch(
    model: &mut FactorModel,
    train: &[RatingTriple],
    order: &[usize],
    eta: f64,
    lambda: f64,
) -> Result<(), TrainError> {
    rebuilt_error_epoch(model, train, order, eta, lambda, |_, e| e)
}

/// SGD with each residual replaced by the linear PID output of its entry.
pub fn pid_sgd_epoch(
    model: &mut FactorModel,
    bank: &mut ControllerBank,
    train: &[RatingTriple],
    order: &[usize],
    eta: f64,
    lambda: f64,
    pid: &LinearPid,
) -> Result<(), TrainError> {
    rebuilt_error_epoch(model, train, order, eta, lambda, |idx, e| {
        bank.refine(idx, e, pid)
    })
}

/// SGD with each residual rebuilt by the nonlinear PID controller.
pub fn npid_sgd_epoch(
    model: &mut FactorModel,
    bank: &mut ControllerBank,
    train: &[RatingTriple],
    order: &[usize],
    eta: f64,
    lambda: f64,
    gains: &NpidGains,
) -> Result<(), TrainError> {
    rebuilt_error_epoch(model, train, order, eta, lambda, |idx, e| {
        bank.refine(idx, e, gains)
    })
}

/// One pass of the merged-form update with `eta`-absorbed gains.
pub(crate) fn merged_npid_epoch(
    model: &mut FactorModel,
    bank: &mut ControllerBank,
    train: &[RatingTriple],
    order: &[usize],
    phi: f64,
    gains: &NpidGains,
) -> Result<(), TrainError> {
    for &idx in order {
        let t = &train[idx];
        let e = bank.refine(idx, model.residual(t), gains);
        let (x, y) = model.rows_mut(t.user, t.item);
        merged_step(x, y, e, phi);
        if !(e.is_finite() && all_finite(x, y)) {
            return Err(diverged(train, idx));
        }
    }
    Ok(())
}

fn check_unit(name: &'static str, v: f64) -> Result<(), ParamError> {
    if (0.0..1.0).contains(&v) {
        Ok(())
    } else {
        Err(ParamError::Invalid {
            name,
            value: v,
            reason: "must lie in [0, 1)",
        })
    }
}

fn check_positive(name: &'static str, v: f64) -> Result<(), ParamError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ParamError::Invalid {
            name,
            value: v,
            reason: "must be positive",
        })
    }
}

/// Bias-corrected Adam.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamParams {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Result<Self, ParamError> {
        check_positive("lr", lr)?;
        check_unit("beta1", beta1)?;
        check_unit("beta2", beta2)?;
        check_positive("eps", eps)?;
        Ok(Self {
            lr,
            beta1,
            beta2,
            eps,
        })
    }

    pub fn with_lr(lr: f64) -> Result<Self, ParamError> {
        Self::new(lr, 0.9, 0.999, 1e-8)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmsPropParams {
    pub lr: f64,
    pub rho: f64,
    pub eps: f64,
}

impl RmsPropParams {
    pub fn new(lr: f64, rho: f64, eps: f64) -> Result<Self, ParamError> {
        check_positive("lr", lr)?;
        check_unit("rho", rho)?;
        check_positive("eps", eps)?;
        Ok(Self { lr, rho, eps })
    }

    pub fn with_lr(lr: f64) -> Result<Self, ParamError> {
        Self::new(lr, 0.9, 1e-8)
    }
}

/// AdaDelta has no learning rate; step sizes come from the ratio of the two
/// running averages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaDeltaParams {
    pub rho: f64,
    pub eps: f64,
}

impl AdaDeltaParams {
    pub fn new(rho: f64, eps: f64) -> Result<Self, ParamError> {
        check_unit("rho", rho)?;
        check_positive("eps", eps)?;
        Ok(Self { rho, eps })
    }
}

impl Default for AdaDeltaParams {
    fn default() -> Self {
        Self {
            rho: 0.95,
            eps: 1e-6,
        }
    }
}

/// The adaptive rules that share [`adaptive_epoch`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdaptiveRule {
    Adam(AdamParams),
    AdaDelta(AdaDeltaParams),
    RmsProp(RmsPropParams),
}

/// Per-coordinate accumulators shaped like `X` and `Y`.
///
/// Adam: `first` = m, `second` = v. RMSprop: `second` = E[g^2].
/// AdaDelta: `first` = E[dx^2], `second` = E[g^2].
/// Adam's bias correction counts updates per factor row.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentState {
    pub first_x: Vec<f64>,
    pub second_x: Vec<f64>,
    pub first_y: Vec<f64>,
    pub second_y: Vec<f64>,
    pub steps_x: Vec<u64>,
    pub steps_y: Vec<u64>,
}

impl MomentState {
    pub fn for_model(model: &FactorModel) -> Self {
        let (nx, ny) = (model.x().len(), model.y().len());
        Self {
            first_x: vec![0.0; nx],
            second_x: vec![0.0; nx],
            first_y: vec![0.0; ny],
            second_y: vec![0.0; ny],
            steps_x: vec![0; model.n_users()],
            steps_y: vec![0; model.n_items()],
        }
    }

    fn matches(&self, model: &FactorModel) -> bool {
        self.first_x.len() == model.x().len()
            && self.first_y.len() == model.y().len()
            && self.steps_x.len() == model.n_users()
            && self.steps_y.len() == model.n_items()
    }
}

impl AdaptiveRule {
    /// Applies one coordinate update in place and returns nothing; `step` is
    /// the 1-based update count of the owning row.
    #[inline]
    fn apply(&self, theta: &mut f64, g: f64, first: &mut f64, second: &mut f64, step: u64) {
        match *self {
            AdaptiveRule::Adam(p) => {
                *first = p.beta1 * *first + (1.0 - p.beta1) * g;
                *second = p.beta2 * *second + (1.0 - p.beta2) * g * g;
                let t = step as i32;
                let m_hat = *first / (1.0 - p.beta1.powi(t));
                let v_hat = *second / (1.0 - p.beta2.powi(t));
                *theta -= p.lr * m_hat / (v_hat.sqrt() + p.eps);
            }
            AdaptiveRule::RmsProp(p) => {
                *second = p.rho * *second + (1.0 - p.rho) * g * g;
                *theta -= p.lr * g / (second.sqrt() + p.eps);
            }
            AdaptiveRule::AdaDelta(p) => {
                *second = p.rho * *second + (1.0 - p.rho) * g * g;
                let dx = -((*first + p.eps).sqrt() / (*second + p.eps).sqrt()) * g;
                *first = p.rho * *first + (1.0 - p.rho) * dx * dx;
                *theta += dx;
            }
        }
    }
}

/// One pass of Adam, AdaDelta or RMSprop on the per-entry regularized loss,
/// with gradients `g_x = -(e*y_n - lambda*x_m)` and `g_y = -(e*x_m - lambda*y_n)`.
pub fn adaptive_epoch(
    model: &mut FactorModel,
    moments: &mut MomentState,
    train: &[RatingTriple],
    order: &[usize],
    rule: AdaptiveRule,
    lambda: f64,
) -> Result<(), TrainError> {
    if !moments.matches(model) {
        return Err(ParamError::Other("moment state does not match the model shape".into()).into());
    }
    let f = model.rank();
    for &idx in order {
        let t = &train[idx];
        let e = model.residual(t);
        let (m, n) = (t.user, t.item);
        moments.steps_x[m] += 1;
        moments.steps_y[n] += 1;
        let (sx, sy) = (moments.steps_x[m], moments.steps_y[n]);
        let (x, y) = model.rows_mut(m, n);
        for d in 0..f {
            let (x0, y0) = (x[d], y[d]);
            let gx = -(e * y0 - lambda * x0);
            let gy = -(e * x0 - lambda * y0);
            let (kx, ky) = (m * f + d, n * f + d);
            rule.apply(
                &mut x[d],
                gx,
                &mut moments.first_x[kx],
                &mut moments.second_x[kx],
                sx,
            );
            rule.apply(
                &mut y[d],
                gy,
                &mut moments.first_y[ky],
                &mut moments.second_y[ky],
                sy,
            );
        }
        if !(e.is_finite() && all_finite(x, y)) {
            return Err(diverged(train, idx));
        }
    }
    Ok(())
}
