//! Particle swarm self-adaptation of the ten merged-form controller parameters.
//!
//! Each particle position is one candidate parameter vector
//! `[k_phi, k_p1, k_p2, k_p3, k_i1, k_i2, k_d1, k_d2, k_d3, k_d4]`. An epoch runs
//! one training pass per particle, in particle order, on the shared factor
//! matrices and the shared controller bank, scores each pass on the
//! validation set, then moves the swarm.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::RatingTriple;
use crate::error::{ModelError, ParamError, TrainError};
use crate::model::FactorModel;
use crate::npid::{ControllerBank, NpidGains};
use crate::optim::merged_npid_epoch;

/// Number of adapted parameters.
pub const DIM: usize = 10;

pub const PARAM_NAMES: [&str; DIM] = [
    "k_phi", "k_p1", "k_p2", "k_p3", "k_i1", "k_i2", "k_d1", "k_d2", "k_d3", "k_d4",
];

/// The learning-rate-absorbed controller gains plus the merged shrinkage
/// `k_phi` (`lambda * eta` in plain SGD terms).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NpalfParams {
    pub k_phi: f64,
    pub k_p1: f64,
    pub k_p2: f64,
    pub k_p3: f64,
    pub k_i1: f64,
    pub k_i2: f64,
    pub k_d1: f64,
    pub k_d2: f64,
    pub k_d3: f64,
    pub k_d4: f64,
}

impl NpalfParams {
    /// The profile under which one pass equals a plain SGD epoch with
    /// learning rate `eta` and regularization `lambda`.
    pub fn sgd_equivalent(eta: f64, lambda: f64) -> Self {
        Self::decode([eta * lambda, eta, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
    }

    pub fn decode(s: [f64; DIM]) -> Self {
        Self {
            k_phi: s[0],
            k_p1: s[1],
            k_p2: s[2],
            k_p3: s[3],
            k_i1: s[4],
            k_i2: s[5],
            k_d1: s[6],
            k_d2: s[7],
            k_d3: s[8],
            k_d4: s[9],
        }
    }

    pub fn encode(&self) -> [f64; DIM] {
        [
            self.k_phi, self.k_p1, self.k_p2, self.k_p3, self.k_i1, self.k_i2, self.k_d1,
            self.k_d2, self.k_d3, self.k_d4,
        ]
    }

    pub fn gains(&self) -> NpidGains {
        NpidGains {
            kp1: self.k_p1,
            kp2: self.k_p2,
            kp3: self.k_p3,
            ki1: self.k_i1,
            ki2: self.k_i2,
            kd1: self.k_d1,
            kd2: self.k_d2,
            kd3: self.k_d3,
            kd4: self.k_d4,
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if !(0.0..1.0).contains(&self.k_phi) {
            return Err(ParamError::Invalid {
                name: "k_phi",
                value: self.k_phi,
                reason: "must lie in [0, 1)",
            });
        }
        self.gains().validate()
    }
}

impl fmt::Display for NpalfParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = PARAM_NAMES
            .iter()
            .zip(self.encode())
            .map(|(n, v)| format!("{n}={v:.6}"))
            .collect();
        f.write_str(&parts.join(" "))
    }
}

/// Per-dimension position box `[lower, upper]` and velocity limit
/// `[-vmax, vmax]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: [f64; DIM],
    pub upper: [f64; DIM],
    pub vmax: [f64; DIM],
}

impl Bounds {
    /// Velocity limits at 1% of each position range.
    pub fn new(lower: [f64; DIM], upper: [f64; DIM]) -> Result<Self, ParamError> {
        let mut vmax = [0.0; DIM];
        for d in 0..DIM {
            vmax[d] = 0.01 * (upper[d] - lower[d]);
        }
        let b = Self { lower, upper, vmax };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        for d in 0..DIM {
            let (lo, hi, v) = (self.lower[d], self.upper[d], self.vmax[d]);
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(ParamError::Other(format!(
                    "bounds for {}: need finite lower < upper, got [{lo}, {hi}]",
                    PARAM_NAMES[d]
                )));
            }
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ParamError::Other(format!(
                    "velocity bound for {} must be finite and >= 0, got {v}",
                    PARAM_NAMES[d]
                )));
            }
        }
        if self.lower[0] < 0.0 || self.upper[0] >= 1.0 {
            return Err(ParamError::Other(
                "k_phi bounds must stay inside [0, 1)".into(),
            ));
        }
        if self.lower[8] < 0.0 {
            return Err(ParamError::Other("k_d3 lower bound must be >= 0".into()));
        }
        Ok(())
    }

    pub fn contains_position(&self, s: &[f64; DIM]) -> bool {
        (0..DIM).all(|d| s[d] >= self.lower[d] && s[d] <= self.upper[d])
    }

    pub fn contains_velocity(&self, v: &[f64; DIM]) -> bool {
        (0..DIM).all(|d| v[d].abs() <= self.vmax[d])
    }
}

impl Bounds {
    /// The broad search box: `k_p2` up to 1 and `k_i1` up to 0.05.
    ///
    /// `k_p2` multiplies the error like `k_p1` does, so at 1 a particle can
    /// step with an effective learning rate near 0.5 and blow the shared
    /// factors up in its first pass. The integral sum grows by one error per
    /// particle per epoch, so `k_i1` near 0.05 winds up within a few epochs.
    pub fn wide() -> Self {
        Self::new(
            [1e-4, 1e-4, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0],
            [0.05, 0.1, 1.0, 1.0, 0.05, 1.0, 0.05, 0.05, 10.0, 1.0],
        )
        .expect("wide bounds are valid")
    }
}

impl Default for Bounds {
    /// [`Bounds::wide`] with `k_p2 <= 0.1` and `k_i1 <= 5e-4`.
    fn default() -> Self {
        Self::new(
            [1e-4, 1e-4, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0],
            [0.05, 0.1, 0.1, 1.0, 5e-4, 1.0, 0.05, 0.05, 10.0, 1.0],
        )
        .expect("default bounds are valid")
    }
}

/// Validation score used to rank particles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FitnessKind {
    /// RMSE on the validation set.
    #[default]
    Rmse,
    /// MAE on the validation set.
    Mae,
}

impl FromStr for FitnessKind {
    type Err = ParamError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rmse" | "f1" => Ok(FitnessKind::Rmse),
            "mae" | "f2" => Ok(FitnessKind::Mae),
            other => Err(ParamError::Other(format!(
                "unknown fitness {other:?} (expected rmse or mae)"
            ))),
        }
    }
}

impl fmt::Display for FitnessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitnessKind::Rmse => "rmse",
            FitnessKind::Mae => "mae",
        })
    }
}

pub fn fitness(
    model: &FactorModel,
    validation: &[RatingTriple],
    kind: FitnessKind,
) -> Result<f64, ModelError> {
    match kind {
        FitnessKind::Rmse => model.rmse(validation),
        FitnessKind::Mae => model.mae(validation),
    }
}

/// Swarm configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SwarmSettings {
    pub size: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub bounds: Bounds,
    pub fitness: FitnessKind,
    /// Draw `r1`, `r2` per dimension instead of once per particle.
    pub per_dimension_random: bool,
}

impl Default for SwarmSettings {
    fn default() -> Self {
        Self {
            size: 8,
            inertia: 0.7298,
            cognitive: 1.4962,
            social: 1.4962,
            bounds: Bounds::default(),
            fitness: FitnessKind::Rmse,
            per_dimension_random: false,
        }
    }
}

impl SwarmSettings {
    pub fn validate(&self) -> Result<(), ParamError> {
        if self.size < 2 {
            return Err(ParamError::Other(format!(
                "swarm size {} is too small, need at least 2 particles",
                self.size
            )));
        }
        for (name, v) in [
            ("w", self.inertia),
            ("c1", self.cognitive),
            ("c2", self.social),
        ] {
            if !v.is_finite() {
                return Err(ParamError::Invalid {
                    name,
                    value: v,
                    reason: "must be finite",
                });
            }
        }
        self.bounds.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub position: [f64; DIM],
    pub velocity: [f64; DIM],
    pub best_position: [f64; DIM],
    /// `+inf` until the particle has produced a finite score.
    pub best_fitness: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Swarm {
    particles: Vec<Particle>,
    global_best_position: [f64; DIM],
    global_best_fitness: f64,
    settings: SwarmSettings,
    seed: u64,
    rng: ChaCha8Rng,
}

impl Swarm {
    /// Positions and velocities uniform inside their bounds.
    pub fn new(settings: SwarmSettings, seed: u64) -> Result<Self, ParamError> {
        settings.validate()?;
        let mut rng = swarm_rng(seed);
        let b = &settings.bounds;
        let particles: Vec<Particle> = (0..settings.size)
            .map(|_| {
                let mut position = [0.0; DIM];
                let mut velocity = [0.0; DIM];
                for d in 0..DIM {
                    position[d] = rng.gen_range(b.lower[d]..=b.upper[d]);
                    velocity[d] = if b.vmax[d] > 0.0 {
                        rng.gen_range(-b.vmax[d]..=b.vmax[d])
                    } else {
                        0.0
                    };
                }
                Particle {
                    position,
                    velocity,
                    best_position: position,
                    best_fitness: f64::INFINITY,
                }
            })
            .collect();
        Ok(Self {
            global_best_position: particles[0].position,
            global_best_fitness: f64::INFINITY,
            particles,
            settings,
            seed,
            rng,
        })
    }

    /// A swarm of `copies` identical particles that never move: zero velocity
    /// limits and zero PSO coefficients. Useful for running fixed parameters
    /// through the swarm epoch.
    pub fn frozen(
        params: NpalfParams,
        copies: usize,
        fitness: FitnessKind,
    ) -> Result<Self, ParamError> {
        params.validate()?;
        if copies == 0 {
            return Err(ParamError::Other(
                "frozen swarm needs at least one particle".into(),
            ));
        }
        let position = params.encode();
        let mut lower = [0.0; DIM];
        let mut upper = [0.0; DIM];
        for d in 0..DIM {
            lower[d] = position[d] - 1.0;
            upper[d] = position[d] + 1.0;
        }
        let bounds = Bounds {
            lower,
            upper,
            vmax: [0.0; DIM],
        };
        let particle = Particle {
            position,
            velocity: [0.0; DIM],
            best_position: position,
            best_fitness: f64::INFINITY,
        };
        Ok(Self {
            particles: vec![particle; copies],
            global_best_position: position,
            global_best_fitness: f64::INFINITY,
            settings: SwarmSettings {
                size: copies,
                inertia: 0.0,
                cognitive: 0.0,
                social: 0.0,
                bounds,
                fitness,
                per_dimension_random: false,
            },
            seed: 0,
            rng: ChaCha8Rng::seed_from_u64(0),
        })
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn particles_mut(&mut self) -> &mut [Particle] {
        &mut self.particles
    }

    pub fn settings(&self) -> &SwarmSettings {
        &self.settings
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn global_best_fitness(&self) -> f64 {
        self.global_best_fitness
    }

    pub fn global_best_position(&self) -> [f64; DIM] {
        self.global_best_position
    }

    pub fn global_best(&self) -> NpalfParams {
        NpalfParams::decode(self.global_best_position)
    }

    /// Records the score of particle `j`'s current position. Strict
    /// improvement is required; ties and non-finite scores keep the incumbent.
    pub fn update_bests(&mut self, j: usize, fitness: f64) {
        let p = &mut self.particles[j];
        if fitness < p.best_fitness {
            p.best_fitness = fitness;
            p.best_position = p.position;
        }
        if fitness < self.global_best_fitness {
            self.global_best_fitness = fitness;
            self.global_best_position = p.position;
        }
    }

    /// Moves every particle by inertia plus attraction to its own best and the
    /// global best, then clamps velocity and position to their bounds.
    /// A particle with no finite score yet keeps `best_position` at its
    /// starting point, so its cognitive pull is toward where it started.
    pub fn step(&mut self) {
        let SwarmSettings {
            inertia: w,
            cognitive: c1,
            social: c2,
            per_dimension_random,
            ref bounds,
            ..
        } = self.settings;
        let g = self.global_best_position;
        for p in &mut self.particles {
            let (mut r1, mut r2) = (self.rng.gen::<f64>(), self.rng.gen::<f64>());
            for d in 0..DIM {
                if per_dimension_random && d > 0 {
                    r1 = self.rng.gen::<f64>();
                    r2 = self.rng.gen::<f64>();
                }
                let s = p.position[d];
                let v =
                    w * p.velocity[d] + c1 * r1 * (p.best_position[d] - s) + c2 * r2 * (g[d] - s);
                let v = v.clamp(-bounds.vmax[d], bounds.vmax[d]);
                p.velocity[d] = v;
                p.position[d] = (s + v).clamp(bounds.lower[d], bounds.upper[d]);
            }
        }
    }

    /// Writes the swarm, including the generator position, as a versioned
    /// text file.
    pub fn write_state<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let s = &self.settings;
        writeln!(out, "npalf-swarm v1")?;
        writeln!(
            out,
            "{} {:e} {:e} {:e} {} {}",
            self.particles.len(),
            s.inertia,
            s.cognitive,
            s.social,
            s.fitness,
            u8::from(s.per_dimension_random)
        )?;
        writeln!(out, "{} {}", self.seed, self.rng.get_word_pos())?;
        write_row(&mut out, &s.bounds.lower)?;
        write_row(&mut out, &s.bounds.upper)?;
        write_row(&mut out, &s.bounds.vmax)?;
        writeln!(out, "{:e}", self.global_best_fitness)?;
        write_row(&mut out, &self.global_best_position)?;
        for p in &self.particles {
            writeln!(out, "{:e}", p.best_fitness)?;
            write_row(&mut out, &p.position)?;
            write_row(&mut out, &p.velocity)?;
            write_row(&mut out, &p.best_position)?;
        }
        Ok(())
    }

    pub fn read_state<R: BufRead>(src: R) -> Result<Self, ParamError> {
        let bad = |what: &str| ParamError::Other(format!("swarm state: {what}"));
        let mut lines = src.lines().map(|l| l.map_err(|e| bad(&e.to_string())));
        let mut next = |what: &str| -> Result<String, ParamError> {
            lines
                .next()
                .ok_or_else(|| bad(&format!("missing {what}")))?
        };
        if next("header")?.trim() != "npalf-swarm v1" {
            return Err(bad("unsupported header"));
        }
        let cfg = next("settings")?;
        let cfg: Vec<&str> = cfg.split_whitespace().collect();
        if cfg.len() != 6 {
            return Err(bad("settings line needs 6 fields"));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| bad(&format!("bad number {s:?}")))
        };
        let size: usize = cfg[0].parse().map_err(|_| bad("bad particle count"))?;
        let (inertia, cognitive, social) = (num(cfg[1])?, num(cfg[2])?, num(cfg[3])?);
        let fitness: FitnessKind = cfg[4].parse()?;
        let per_dimension_random = cfg[5] == "1";
        let rng_line = next("rng")?;
        let rng_fields: Vec<&str> = rng_line.split_whitespace().collect();
        if rng_fields.len() != 2 {
            return Err(bad("rng line needs seed and word position"));
        }
        let seed: u64 = rng_fields[0].parse().map_err(|_| bad("bad seed"))?;
        let word_pos: u128 = rng_fields[1]
            .parse()
            .map_err(|_| bad("bad word position"))?;
        let lower = parse_row(&next("lower bounds")?).ok_or_else(|| bad("lower bounds"))?;
        let upper = parse_row(&next("upper bounds")?).ok_or_else(|| bad("upper bounds"))?;
        let vmax = parse_row(&next("velocity bounds")?).ok_or_else(|| bad("velocity bounds"))?;
        let global_best_fitness = num(next("global best fitness")?.trim())?;
        let global_best_position =
            parse_row(&next("global best")?).ok_or_else(|| bad("global best position"))?;
        let mut particles = Vec::with_capacity(size);
        for _ in 0..size {
            let best_fitness = num(next("particle fitness")?.trim())?;
            let position = parse_row(&next("position")?).ok_or_else(|| bad("position"))?;
            let velocity = parse_row(&next("velocity")?).ok_or_else(|| bad("velocity"))?;
            let best_position =
                parse_row(&next("best position")?).ok_or_else(|| bad("best position"))?;
            particles.push(Particle {
                position,
                velocity,
                best_position,
                best_fitness,
            });
        }
        let mut rng = swarm_rng(seed);
        rng.set_word_pos(word_pos);
        Ok(Self {
            particles,
            global_best_position,
            global_best_fitness,
            settings: SwarmSettings {
                size,
                inertia,
                cognitive,
                social,
                bounds: Bounds { lower, upper, vmax },
                fitness,
                per_dimension_random,
            },
            seed,
            rng,
        })
    }
}

/// Stream 1 of the run seed, so swarm draws never replay the factor
/// initialization sequence.
fn swarm_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

fn write_row<W: Write>(out: &mut W, row: &[f64]) -> std::io::Result<()> {
    let parts: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
    writeln!(out, "{}", parts.join(" "))
}

fn parse_row(line: &str) -> Option<[f64; DIM]> {
    let vals: Vec<f64> = line
        .split_whitespace()
        .map(|t| t.parse().ok())
        .collect::<Option<_>>()?;
    vals.try_into().ok()
}

/// Outcome of one swarm epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct NpalfEpochReport {
    /// Validation score after each particle's pass; `+inf` for a diverged pass.
    pub particle_fitness: Vec<f64>,
    /// Particles whose pass diverged and was rolled back.
    pub diverged: Vec<usize>,
    pub global_best_fitness: f64,
    pub global_best: NpalfParams,
}

/// One epoch: a training pass per particle on the shared model and bank,
/// each followed by a validation score, then one swarm step.
///
/// A diverged pass restores the model and bank to their state before that
/// pass and scores the particle `+inf`. If no particle has ever scored a
/// finite value the epoch fails with [`TrainError::SwarmDiverged`].
pub fn npalf_epoch(
    model: &mut FactorModel,
    bank: &mut ControllerBank,
    swarm: &mut Swarm,
    train: &[RatingTriple],
    validation: &[RatingTriple],
    order: &[usize],
) -> Result<NpalfEpochReport, TrainError> {
    let kind = swarm.settings.fitness;
    let mut particle_fitness = Vec::with_capacity(swarm.len());
    let mut diverged = Vec::new();
    for j in 0..swarm.len() {
        let params = NpalfParams::decode(swarm.particles[j].position);
        let model_before = model.clone();
        let bank_before = bank.clone();
        let outcome =
            match merged_npid_epoch(model, bank, train, order, params.k_phi, &params.gains()) {
                Ok(()) => Some(fitness(model, validation, kind)?).filter(|f| f.is_finite()),
                Err(TrainError::Diverged { .. }) => None,
                Err(other) => return Err(other),
            };
        let score = match outcome {
            Some(f) => f,
            None => {
                *model = model_before;
                *bank = bank_before;
                diverged.push(j);
                f64::INFINITY
            }
        };
        swarm.update_bests(j, score);
        particle_fitness.push(score);
    }
    if !swarm.global_best_fitness.is_finite() {
        return Err(TrainError::SwarmDiverged);
    }
    swarm.step();
    Ok(NpalfEpochReport {
        particle_fitness,
        diverged,
        global_best_fitness: swarm.global_best_fitness,
        global_best: swarm.global_best(),
    })
}
