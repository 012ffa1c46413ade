//! WebAssembly bindings behind `www/index.html`.
//!
//! Two calls: [`gain_curves`] samples the three nonlinear gains over an error
//! range, and [`compare`] trains SGD, NPID and NPALF on one synthetic matrix.

use npalf_core::config::{OptimizerTag, RunConfig};
use npalf_core::synth::{low_rank, LowRankSpec};
use npalf_core::trainer::train_on;
use npalf_core::{split_dataset, NpidGains};
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// `[e, gain_p, gain_i, gain_d]` for `samples` errors evenly spaced on
/// `[e_min, e_max]`, flattened row by row.
#[wasm_bindgen]
pub fn gain_curves(
    gains: &[f64],
    e_min: f64,
    e_max: f64,
    samples: usize,
) -> Result<Vec<f64>, JsError> {
    let arr: [f64; 9] = gains.try_into().map_err(|_| js_err("expected 9 gains"))?;
    let g = NpidGains::from_array(arr).map_err(js_err)?;
    let n = samples.max(2);
    let mut out = Vec::with_capacity(4 * n);
    for k in 0..n {
        let e = e_min + (e_max - e_min) * k as f64 / (n - 1) as f64;
        out.extend([e, g.gain_p(e), g.gain_i(e), g.gain_d(e)]);
    }
    Ok(out)
}

/// Validation curves of one synthetic run per optimizer.
#[wasm_bindgen]
pub struct Comparison {
    sgd: Vec<f64>,
    npid: Vec<f64>,
    npalf: Vec<f64>,
    npalf_params: Vec<f64>,
    summary: String,
}

#[wasm_bindgen]
impl Comparison {
    /// Validation RMSE per epoch; a run that stopped early is shorter.
    pub fn sgd(&self) -> Vec<f64> {
        self.sgd.clone()
    }

    pub fn npid(&self) -> Vec<f64> {
        self.npid.clone()
    }

    pub fn npalf(&self) -> Vec<f64> {
        self.npalf.clone()
    }

    /// The swarm's global best after each epoch, 10 values per epoch in the
    /// order k_phi, k_p1, k_p2, k_p3, k_i1, k_i2, k_d1, k_d2, k_d3, k_d4.
    pub fn npalf_params(&self) -> Vec<f64> {
        self.npalf_params.clone()
    }

    /// One line per optimizer: best validation RMSE, its epoch, test RMSE.
    pub fn summary(&self) -> String {
        self.summary.clone()
    }
}

/// Trains SGD, NPID (shipped gains) and NPALF on a seeded synthetic matrix
/// with identical initial factors and visit orders.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn compare(
    users: usize,
    items: usize,
    rank: usize,
    density: f64,
    noise: f64,
    eta: f64,
    lambda: f64,
    epochs: usize,
    seed: u64,
) -> Result<Comparison, JsError> {
    let ds = low_rank(
        LowRankSpec {
            n_users: users,
            n_items: items,
            rank,
            density,
            noise,
        },
        seed,
    )
    .map_err(js_err)?;
    let split = split_dataset(&ds, Default::default(), seed).map_err(js_err)?;
    let base = RunConfig {
        rank,
        eta,
        lambda,
        seed,
        max_epochs: epochs.max(1),
        tol: 1e-9,
        timing: false,
        ..RunConfig::default()
    };
    let mut summary = String::new();
    let mut curves = Vec::new();
    let mut params = Vec::new();
    for tag in [OptimizerTag::Sgd, OptimizerTag::Npid, OptimizerTag::Npalf] {
        let run = train_on(
            &RunConfig {
                optimizer: tag,
                ..base.clone()
            },
            &ds,
            &split,
        )
        .map_err(js_err)?;
        let s = &run.summary;
        summary.push_str(&format!(
            "{:<6} best valid {:.5} at epoch {}, test {:.5}, {}\n",
            s.optimizer, s.best_valid_rmse, s.best_epoch, s.test_rmse, s.termination
        ));
        if tag == OptimizerTag::Npalf {
            params = run
                .records
                .iter()
                .filter_map(|r| r.best_params)
                .flat_map(|p| p.encode())
                .collect();
        }
        curves.push(run.records.iter().map(|r| r.valid_rmse).collect::<Vec<_>>());
    }
    let npalf = curves.pop().unwrap_or_default();
    let npid = curves.pop().unwrap_or_default();
    let sgd = curves.pop().unwrap_or_default();
    Ok(Comparison {
        sgd,
        npid,
        npalf,
        npalf_params: params,
        summary,
    })
}
