//! Dense latent factor matrices, predictions, the regularized objective and
//! evaluation metrics.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::RatingTriple;
use crate::error::{ModelError, ParamError};

/// Default upper bound of the uniform factor initialization.
pub const DEFAULT_INIT_SCALE: f64 = 0.05;

/// User factors `X` (M x f) and item factors `Y` (N x f), both row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    n_users: usize,
    n_items: usize,
    rank: usize,
    seed: u64,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl FactorModel {
    /// Draws every factor uniformly from `(0, scale]`.
    pub fn init(
        n_users: usize,
        n_items: usize,
        rank: usize,
        seed: u64,
        scale: f64,
    ) -> Result<Self, ModelError> {
        if n_users == 0 || n_items == 0 || rank == 0 {
            return Err(ModelError::Shape(format!(
                "M = {n_users}, N = {n_items}, f = {rank}; all must be >= 1"
            )));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(ModelError::Shape(format!("init scale {scale} must be > 0")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // gen::<f64>() is in [0, 1); 1 - u maps it onto (0, 1]
        let mut draw = |len: usize| -> Vec<f64> {
            (0..len).map(|_| scale * (1.0 - rng.gen::<f64>())).collect()
        };
        let x = draw(n_users * rank);
        let y = draw(n_items * rank);
        Ok(Self {
            n_users,
            n_items,
            rank,
            seed,
            x,
            y,
        })
    }

    /// Builds a model from explicit row-major matrices.
    pub fn from_parts(
        n_users: usize,
        n_items: usize,
        rank: usize,
        x: Vec<f64>,
        y: Vec<f64>,
    ) -> Result<Self, ModelError> {
        if rank == 0 || x.len() != n_users * rank || y.len() != n_items * rank {
            return Err(ModelError::Shape(format!(
                "X has {} values, Y has {}, expected {}x{} and {}x{}",
                x.len(),
                y.len(),
                n_users,
                rank,
                n_items,
                rank
            )));
        }
        Ok(Self {
            n_users,
            n_items,
            rank,
            seed: 0,
            x,
            y,
        })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn user_factors(&self, m: usize) -> &[f64] {
        &self.x[m * self.rank..(m + 1) * self.rank]
    }

    pub fn item_factors(&self, n: usize) -> &[f64] {
        &self.y[n * self.rank..(n + 1) * self.rank]
    }

    pub fn user_factors_mut(&mut self, m: usize) -> &mut [f64] {
        &mut self.x[m * self.rank..(m + 1) * self.rank]
    }

    pub fn item_factors_mut(&mut self, n: usize) -> &mut [f64] {
        &mut self.y[n * self.rank..(n + 1) * self.rank]
    }

    /// Mutable views of `x_m` and `y_n` at once.
    pub fn rows_mut(&mut self, m: usize, n: usize) -> (&mut [f64], &mut [f64]) {
        let f = self.rank;
        (
            &mut self.x[m * f..(m + 1) * f],
            &mut self.y[n * f..(n + 1) * f],
        )
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.y).all(|v| v.is_finite())
    }

    fn check(&self, m: usize, n: usize) -> Result<(), ModelError> {
        if m >= self.n_users || n >= self.n_items {
            return Err(ModelError::IndexOutOfRange {
                user: m,
                item: n,
                rows: self.n_users,
                cols: self.n_items,
            });
        }
        Ok(())
    }

    /// `<x_m, y_n>`.
    pub fn predict(&self, m: usize, n: usize) -> Result<f64, ModelError> {
        self.check(m, n)?;
        Ok(self.dot(m, n))
    }

    #[inline]
    pub(crate) fn dot(&self, m: usize, n: usize) -> f64 {
        dot(self.user_factors(m), self.item_factors(n))
    }

    /// `r - <x_m, y_n>`.
    pub fn instant_error(&self, t: &RatingTriple) -> Result<f64, ModelError> {
        Ok(t.value - self.predict(t.user, t.item)?)
    }

    #[inline]
    pub(crate) fn residual(&self, t: &RatingTriple) -> f64 {
        t.value - self.dot(t.user, t.item)
    }

    fn check_entries(&self, entries: &[RatingTriple]) -> Result<(), ModelError> {
        if entries.is_empty() {
            return Err(ModelError::EmptyEntries);
        }
        entries.iter().try_for_each(|t| self.check(t.user, t.item))
    }

    /// `1/2 * sum((r - r_hat)^2 + lambda*|x_m|^2 + lambda*|y_n|^2)` over `entries`.
    pub fn objective(&self, entries: &[RatingTriple], lambda: f64) -> Result<f64, ModelError> {
        self.check_entries(entries)?;
        let sum: f64 = entries
            .iter()
            .map(|t| {
                let e = self.residual(t);
                let xm = self.user_factors(t.user);
                let yn = self.item_factors(t.item);
                e * e + lambda * (dot(xm, xm) + dot(yn, yn))
            })
            .sum();
        Ok(0.5 * sum)
    }

    pub fn rmse(&self, entries: &[RatingTriple]) -> Result<f64, ModelError> {
        self.check_entries(entries)?;
        let sq: f64 = entries.iter().map(|t| self.residual(t).powi(2)).sum();
        Ok((sq / entries.len() as f64).sqrt())
    }

    pub fn mae(&self, entries: &[RatingTriple]) -> Result<f64, ModelError> {
        self.check_entries(entries)?;
        let abs: f64 = entries.iter().map(|t| self.residual(t).abs()).sum();
        Ok(abs / entries.len() as f64)
    }

    /// Writes the checkpoint: a `M N f seed` header, then the M user rows and N
    /// item rows, `f` space-separated values each.
    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "{} {} {} {}",
            self.n_users, self.n_items, self.rank, self.seed
        )?;
        for row in self.x.chunks(self.rank).chain(self.y.chunks(self.rank)) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(src: R) -> Result<Self, ModelError> {
        let mut lines = src.lines();
        let header = lines
            .next()
            .ok_or_else(|| ModelError::Checkpoint("missing header".into()))??;
        let h: Vec<u64> = header
            .split_whitespace()
            .map(|s| s.parse::<u64>())
            .collect::<Result<_, _>>()
            .map_err(|e| ModelError::Checkpoint(format!("header: {e}")))?;
        if h.len() != 4 {
            return Err(ModelError::Checkpoint(format!(
                "header needs 4 fields, found {}",
                h.len()
            )));
        }
        let (m, n, f, seed) = (h[0] as usize, h[1] as usize, h[2] as usize, h[3]);
        let mut values = Vec::with_capacity((m + n) * f);
        for row in 0..m + n {
            let line = lines
                .next()
                .ok_or_else(|| ModelError::Checkpoint(format!("missing row {row}")))??;
            let before = values.len();
            for tok in line.split_whitespace() {
                values.push(
                    tok.parse::<f64>()
                        .map_err(|e| ModelError::Checkpoint(format!("row {row}: {e}")))?,
                );
            }
            if values.len() - before != f {
                return Err(ModelError::Checkpoint(format!(
                    "row {row} has {} values, expected {f}",
                    values.len() - before
                )));
            }
        }
        let y = values.split_off(m * f);
        let mut model = Self::from_parts(m, n, f, values, y)?;
        model.seed = seed;
        Ok(model)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// Learning rate and regularization, plus their product `phi = eta * lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    eta: f64,
    lambda: f64,
    phi: f64,
}

impl Hyperparams {
    pub fn new(eta: f64, lambda: f64) -> Result<Self, ParamError> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(ParamError::Invalid {
                name: "eta",
                value: eta,
                reason: "must be positive",
            });
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(ParamError::Invalid {
                name: "lambda",
                value: lambda,
                reason: "must be >= 0",
            });
        }
        Ok(Self {
            eta,
            lambda,
            phi: eta * lambda,
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }
}
