//! Nonlinear PID rebuilding of the instant error.
//!
//! Each training entry owns a tiny controller state (running sum of its raw
//! errors and the previous error). Every visit turns the raw residual `e` into
//!
//! ```text
//! e~ = Kp(e)*e + Ki(e)*sum(e) + Kd(e)*(e - e_prev)
//! Kp(e) = kp1 + kp2*(1 - sech(kp3*e))
//! Ki(e) = ki1*sech(ki2*e)
//! Kd(e) = kd1 + kd2/(1 + kd3*exp(kd4*e))
//! ```
//!
//! and SGD uses `e~` in place of `e`.

use crate::error::ParamError;

/// `2/(e^x + e^-x)`, evaluated as `2e^-|x| / (1 + e^-2|x|)` so that large
/// arguments underflow to 0 instead of overflowing.
#[inline]
pub fn sech_stable(x: f64) -> f64 {
    let t = (-x.abs()).exp();
    2.0 * t / (1.0 + t * t)
}

/// Maps an instant error, its accumulated sum and its first difference to the
/// error fed into the factor update.
pub trait ErrorRule {
    fn rebuild(&self, e: f64, integral: f64, delta: f64) -> f64;
}

/// Plain SGD: the raw error is used unchanged.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Identity;

impl ErrorRule for Identity {
    #[inline]
    fn rebuild(&self, e: f64, _integral: f64, _delta: f64) -> f64 {
        e
    }
}

/// Classical discrete PID law with constant gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearPid {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

impl LinearPid {
    pub fn new(kp: f64, ki: f64, kd: f64) -> Result<Self, ParamError> {
        for (name, v) in [("kp", kp), ("ki", ki), ("kd", kd)] {
            if !v.is_finite() {
                return Err(ParamError::Invalid {
                    name,
                    value: v,
                    reason: "must be finite",
                });
            }
        }
        Ok(Self { kp, ki, kd })
    }
}

impl Default for LinearPid {
    fn default() -> Self {
        Self {
            kp: 1.0,
            ki: 0.01,
            kd: 0.01,
        }
    }
}

impl ErrorRule for LinearPid {
    #[inline]
    fn rebuild(&self, e: f64, integral: f64, delta: f64) -> f64 {
        self.kp * e + self.ki * integral + self.kd * delta
    }
}

/// The nine gain parameters of the nonlinear controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NpidGains {
    pub kp1: f64,
    pub kp2: f64,
    pub kp3: f64,
    pub ki1: f64,
    pub ki2: f64,
    pub kd1: f64,
    pub kd2: f64,
    pub kd3: f64,
    pub kd4: f64,
}

impl NpidGains {
    pub const NAMES: [&'static str; 9] = [
        "kp1", "kp2", "kp3", "ki1", "ki2", "kd1", "kd2", "kd3", "kd4",
    ];

    /// Gains that reduce the controller to the raw error.
    pub const IDENTITY: NpidGains = NpidGains {
        kp1: 1.0,
        kp2: 0.0,
        kp3: 0.0,
        ki1: 0.0,
        ki2: 0.0,
        kd1: 0.0,
        kd2: 0.0,
        kd3: 0.0,
        kd4: 0.0,
    };

    pub fn from_array(v: [f64; 9]) -> Result<Self, ParamError> {
        let g = Self {
            kp1: v[0],
            kp2: v[1],
            kp3: v[2],
            ki1: v[3],
            ki2: v[4],
            kd1: v[5],
            kd2: v[6],
            kd3: v[7],
            kd4: v[8],
        };
        g.validate()?;
        Ok(g)
    }

    pub fn to_array(&self) -> [f64; 9] {
        [
            self.kp1, self.kp2, self.kp3, self.ki1, self.ki2, self.kd1, self.kd2, self.kd3,
            self.kd4,
        ]
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        for (name, v) in Self::NAMES.iter().zip(self.to_array()) {
            if !v.is_finite() {
                return Err(ParamError::Invalid {
                    name,
                    value: v,
                    reason: "must be finite",
                });
            }
        }
        if self.kd3 < 0.0 {
            return Err(ParamError::Invalid {
                name: "kd3",
                value: self.kd3,
                reason: "must be >= 0 to keep the derivative gain denominator positive",
            });
        }
        Ok(())
    }

    /// Gains of the linear PID law `K_P = kp, K_I = ki, K_D = kd`, expressed in
    /// the nonlinear parameterization (shape parameters zeroed, `kd` split
    /// evenly between `kd1` and `kd2`).
    pub fn linear(kp: f64, ki: f64, kd: f64) -> Self {
        Self {
            kp1: kp,
            kp2: 0.0,
            kp3: 0.0,
            ki1: ki,
            ki2: 0.0,
            kd1: kd / 2.0,
            kd2: kd / 2.0,
            kd3: 0.0,
            kd4: 0.0,
        }
    }

    #[inline]
    pub fn gain_p(&self, e: f64) -> f64 {
        self.kp1 + self.kp2 * (1.0 - sech_stable(self.kp3 * e))
    }

    #[inline]
    pub fn gain_i(&self, e: f64) -> f64 {
        self.ki1 * sech_stable(self.ki2 * e)
    }

    #[inline]
    pub fn gain_d(&self, e: f64) -> f64 {
        // kd3*exp(kd4*e) may overflow to +inf; kd2/inf is then 0, the correct limit
        let denom = 1.0 + self.kd3 * (self.kd4 * e).exp();
        if denom.is_finite() {
            self.kd1 + self.kd2 / denom
        } else {
            self.kd1
        }
    }
}

impl Default for NpidGains {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl ErrorRule for NpidGains {
    #[inline]
    fn rebuild(&self, e: f64, integral: f64, delta: f64) -> f64 {
        self.gain_p(e) * e + self.gain_i(e) * integral + self.gain_d(e) * delta
    }
}

/// Per-entry controller memory.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EntryState {
    pub integral_sum: f64,
    pub prev_error: f64,
}

/// Pure form of one controller step: returns the rebuilt error and the state
/// after observing `e`. The sum includes `e` itself.
pub fn refine_error<R: ErrorRule + ?Sized>(
    state: EntryState,
    e: f64,
    rule: &R,
) -> (f64, EntryState) {
    let integral_sum = state.integral_sum + e;
    let refined = rule.rebuild(e, integral_sum, e - state.prev_error);
    (
        refined,
        EntryState {
            integral_sum,
            prev_error: e,
        },
    )
}

/// One [`EntryState`] per training entry, indexed like the training list.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerBank {
    states: Vec<EntryState>,
    visits: Vec<u64>,
    integral_clamp: Option<f64>,
}

impl ControllerBank {
    pub fn new(len: usize) -> Self {
        Self {
            states: vec![EntryState::default(); len],
            visits: vec![0; len],
            integral_clamp: None,
        }
    }

    /// Limits every running sum to `[-bound, bound]` (anti-windup).
    pub fn with_integral_clamp(mut self, bound: Option<f64>) -> Self {
        self.integral_clamp = bound.map(f64::abs);
        self
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, idx: usize) -> EntryState {
        self.states[idx]
    }

    pub fn states(&self) -> &[EntryState] {
        &self.states
    }

    /// Number of errors entry `idx` has observed so far.
    pub fn visits(&self, idx: usize) -> u64 {
        self.visits[idx]
    }

    /// Feeds `e` to entry `idx` and returns the rebuilt error.
    #[inline]
    pub fn refine<R: ErrorRule + ?Sized>(&mut self, idx: usize, e: f64, rule: &R) -> f64 {
        let s = &mut self.states[idx];
        let mut integral = s.integral_sum + e;
        if let Some(b) = self.integral_clamp {
            integral = integral.clamp(-b, b);
        }
        let refined = rule.rebuild(e, integral, e - s.prev_error);
        s.integral_sum = integral;
        s.prev_error = e;
        self.visits[idx] += 1;
        refined
    }
}
