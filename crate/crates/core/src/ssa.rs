//! Exact stochastic simulation (Gillespie direct method) of the one-step
//! process, the independent oracle for the expected fraction at any `N`.
//!
//! # Randomness and reproducibility
//!
//! Paths are driven by the ChaCha8 generator from `rand_chacha`, seeded
//! with `SeedableRng::seed_from_u64`. Ensembles derive one seed per run
//! from the master seed with [`mix_seed`], a fixed splitmix64 finalizer,
//! so results are bit-reproducible for a given `(model, inputs,
//! master_seed)` regardless of how many threads execute the runs.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::io;

use crate::error::{Error, Result};
use crate::model::OneStepModel;
use crate::timeseries::{csv_value, TimeSeries};

/// Splitmix64 step: per-run seed for run `run_index` under `master_seed`.
///
/// The constants are the standard splitmix64 increment and finalizer
/// multipliers; the function is fixed so golden tests stay valid.
pub fn mix_seed(master_seed: u64, run_index: u64) -> u64 {
    let mut z = master_seed.wrapping_add((run_index + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn uniform01(rng: &mut ChaCha8Rng) -> f64 {
    // 53 random mantissa bits -> [0, 1)
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn exp_waiting_time(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    -(1.0 - uniform01(rng)).ln() / rate
}

/// A piecewise-constant trajectory: `states[i]` holds from `times[i]`
/// until the next jump (right-continuous convention).
#[derive(Debug, Clone, PartialEq)]
pub struct SsaPath {
    pub times: Vec<f64>,
    pub states: Vec<usize>,
}

impl SsaPath {
    /// State at time `t`: the value after the last jump at or before `t`.
    pub fn state_at(&self, t: f64) -> usize {
        match self.times.partition_point(|&s| s <= t) {
            0 => self.states[0],
            idx => self.states[idx - 1],
        }
    }

    pub fn n_jumps(&self) -> usize {
        self.times.len() - 1
    }
}

/// Simulates one path of the jump process up to time `t_max` (or until
/// absorption in a state with no outgoing rate).
pub fn simulate_path(
    model: &OneStepModel,
    initial_state: usize,
    t_max: f64,
    seed: u64,
) -> Result<SsaPath> {
    if initial_state > model.n() {
        return Err(Error::InvalidParameter(format!(
            "initial state {initial_state} outside 0..={}",
            model.n()
        )));
    }
    if !(t_max >= 0.0) || !t_max.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "t_max must be nonnegative and finite, got {t_max}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = model.n();
    let mut k = initial_state;
    let mut t = 0.0;
    let mut times = vec![0.0];
    let mut states = vec![k];
    loop {
        let up = model.birth_rate(k);
        let down = model.death_rate(k);
        let total = up + down;
        if total <= 0.0 {
            break; // absorbed
        }
        let t_next = t + exp_waiting_time(&mut rng, total);
        if t_next > t_max {
            break;
        }
        if uniform01(&mut rng) * total < up {
            k += 1;
        } else {
            k -= 1;
        }
        assert!(k <= n, "jump left the state space at t = {t_next}");
        t = t_next;
        times.push(t);
        states.push(k);
    }
    Ok(SsaPath { times, states })
}

/// Ensemble estimate of the mean fraction `E[X(t)/N]` with its standard
/// error at every grid time.
#[derive(Debug, Clone)]
pub struct SsaEnsemble {
    pub t: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_runs: usize,
    pub master_seed: u64,
}

impl SsaEnsemble {
    pub fn to_timeseries(&self) -> TimeSeries {
        let mut ts = TimeSeries::new(self.t.clone());
        ts.push_channel("ssa_mean", self.mean.clone())
            .expect("fresh series");
        ts.push_channel("ssa_stderr", self.stderr.clone())
            .expect("fresh series");
        ts
    }

    /// CSV columns `t, ssa_mean, ssa_stderr, n_runs`.
    pub fn write_csv<W: io::Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "t,ssa_mean,ssa_stderr,n_runs")?;
        for i in 0..self.t.len() {
            writeln!(
                w,
                "{},{},{},{}",
                csv_value(self.t[i]),
                csv_value(self.mean[i]),
                csv_value(self.stderr[i]),
                self.n_runs
            )?;
        }
        Ok(())
    }
}

/// One run sampled at the grid times without storing the full path.
fn sample_run(model: &OneStepModel, initial_state: usize, t_grid: &[f64], seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = model.n();
    let n_f = n as f64;
    let t_end = *t_grid.last().expect("grid validated non-empty");
    let mut out = Vec::with_capacity(t_grid.len());
    let mut k = initial_state;
    let mut t = 0.0;
    let mut gi = 0;
    loop {
        let up = model.birth_rate(k);
        let down = model.death_rate(k);
        let total = up + down;
        if total <= 0.0 {
            break;
        }
        let t_next = t + exp_waiting_time(&mut rng, total);
        // Grid times strictly before the jump see the pre-jump state.
        while gi < t_grid.len() && t_grid[gi] < t_next {
            out.push(k as f64 / n_f);
            gi += 1;
        }
        if t_next > t_end {
            break;
        }
        if uniform01(&mut rng) * total < up {
            k += 1;
        } else {
            k -= 1;
        }
        assert!(k <= n, "jump left the state space at t = {t_next}");
        t = t_next;
    }
    while gi < t_grid.len() {
        out.push(k as f64 / n_f);
        gi += 1;
    }
    out
}

/// Runs `n_runs` independent paths (in parallel) and reduces them in run
/// order, so the result is bit-identical for a fixed master seed no
/// matter the thread count.
pub fn estimate_mean(
    model: &OneStepModel,
    initial_state: usize,
    t_grid: &[f64],
    n_runs: usize,
    master_seed: u64,
) -> Result<SsaEnsemble> {
    if n_runs < 2 {
        return Err(Error::InvalidParameter(format!(
            "ensemble needs at least 2 runs, got {n_runs}"
        )));
    }
    if initial_state > model.n() {
        return Err(Error::InvalidParameter(format!(
            "initial state {initial_state} outside 0..={}",
            model.n()
        )));
    }
    if t_grid.is_empty()
        || !t_grid.windows(2).all(|w| w[0] < w[1])
        || t_grid.iter().any(|t| !t.is_finite() || *t < 0.0)
    {
        return Err(Error::InvalidInput(
            "SSA grid must be non-empty, nonnegative, and strictly increasing".into(),
        ));
    }

    let runs: Vec<Vec<f64>> = (0..n_runs)
        .into_par_iter()
        .map(|r| sample_run(model, initial_state, t_grid, mix_seed(master_seed, r as u64)))
        .collect();

    // Shifted accumulation about the first run keeps the reduction
    // order-stable and makes the spread exactly zero when every run agrees.
    let points = t_grid.len();
    let nf = n_runs as f64;
    let mut sum_d = vec![0.0; points];
    let mut sum_d2 = vec![0.0; points];
    for run in &runs {
        for i in 0..points {
            let d = run[i] - runs[0][i];
            sum_d[i] += d;
            sum_d2[i] += d * d;
        }
    }
    let mut mean = vec![0.0; points];
    let mut stderr = vec![0.0; points];
    for i in 0..points {
        mean[i] = runs[0][i] + sum_d[i] / nf;
        let var = ((sum_d2[i] - sum_d[i] * sum_d[i] / nf) / (nf - 1.0)).max(0.0);
        stderr[i] = (var / nf).sqrt();
    }

    Ok(SsaEnsemble {
        t: t_grid.to_vec(),
        mean,
        stderr,
        n_runs,
        master_seed,
    })
}
