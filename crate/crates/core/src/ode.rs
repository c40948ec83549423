//! Initial-value-problem integration.
//!
//! [`integrate`] is an adaptive Dormand-Prince 5(4) embedded pair with
//! proportional step control. It steps exactly onto every requested grid
//! time, never interpolating past one, so reported values carry full
//! integrator accuracy. [`integrate_fixed`] is classical fixed-step RK4,
//! kept as an independent cross-check.
//!
//! The method is explicit; stiffness is handled by step control alone.
//! That is adequate for the master equations at desk scale (N up to a few
//! thousand) and for the low-dimensional bound systems.

use crate::error::{Error, Result};
use crate::timeseries::TimeSeries;

/// An IVP `x' = rhs(t, x)`, `x(0) = x0`, evaluated on `t_grid`.
///
/// The right-hand side writes its output into the provided buffer.
pub struct IvpProblem<F> {
    pub dim: usize,
    pub rhs: F,
    pub x0: Vec<f64>,
    pub t_grid: Vec<f64>,
}

impl<F: Fn(f64, &[f64], &mut [f64])> IvpProblem<F> {
    pub fn new(dim: usize, rhs: F, x0: Vec<f64>, t_grid: Vec<f64>) -> Result<Self> {
        if dim == 0 || x0.len() != dim {
            return Err(Error::InvalidInput(format!(
                "state length {} does not match dimension {dim}",
                x0.len()
            )));
        }
        if t_grid.is_empty() || t_grid[0] != 0.0 {
            return Err(Error::InvalidInput("time grid must start at 0".into()));
        }
        if !t_grid.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidInput(
                "time grid must be strictly increasing".into(),
            ));
        }
        if t_grid.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidInput("time grid must be finite".into()));
        }
        Ok(IvpProblem {
            dim,
            rhs,
            x0,
            t_grid,
        })
    }
}

/// Integrator tolerances and limits. Defaults (`rtol = 1e-8`,
/// `atol = 1e-10`) keep integration error well below every verification
/// tolerance used in this crate (none tighter than 1e-6 at solver level).
#[derive(Debug, Clone)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// `None` selects the step automatically from the initial derivative.
    pub initial_step: Option<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rtol: 1e-8,
            atol: 1e-10,
            max_steps: 10_000_000,
            initial_step: None,
        }
    }
}

impl IntegratorConfig {
    fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0) || !(self.atol > 0.0) {
            return Err(Error::InvalidParameter(
                "rtol and atol must be positive".into(),
            ));
        }
        if let Some(h) = self.initial_step {
            if !(h > 0.0) {
                return Err(Error::InvalidParameter(
                    "initial step must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

// Dormand-Prince 5(4) tableau. The seventh stage equals the 5th-order
// solution (FSAL), so an accepted step costs six evaluations.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// Difference between the 5th- and embedded 4th-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const MIN_SCALE: f64 = 0.2;
const MAX_SCALE: f64 = 5.0;
const ERR_EXPONENT: f64 = -0.2; // 1/(order + 1) for the embedded order 4

/// Adaptive integration; returns the state at every grid point as channels
/// named `x0..x{dim-1}`.
pub fn integrate<F: Fn(f64, &[f64], &mut [f64])>(
    problem: &IvpProblem<F>,
    config: &IntegratorConfig,
) -> Result<TimeSeries> {
    config.validate()?;
    let dim = problem.dim;
    let grid = &problem.t_grid;
    let span = grid[grid.len() - 1] - grid[0];

    let mut t = grid[0];
    let mut y = problem.x0.clone();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; dim]; 7];
    let mut y_stage = vec![0.0; dim];
    let mut y_new = vec![0.0; dim];

    (problem.rhs)(t, &y, &mut k[0]);
    if k[0].iter().any(|v| !v.is_finite()) {
        return Err(Error::IntegrationFailure {
            t_last: t,
            reason: "non-finite right-hand side at the initial state".into(),
        });
    }

    let mut h = match config.initial_step {
        Some(h0) => h0.min(span),
        None => initial_step(problem, config, &y, &k[0]),
    };

    let mut recorded: Vec<Vec<f64>> = Vec::with_capacity(grid.len());
    recorded.push(y.clone());

    let mut steps = 0usize;
    for &target in &grid[1..] {
        while t < target {
            steps += 1;
            if steps > config.max_steps {
                return Err(Error::IntegrationFailure {
                    t_last: t,
                    reason: format!("exceeded max_steps = {}", config.max_steps),
                });
            }
            // Step exactly onto the grid point, never past it.
            let landing = h >= target - t;
            let h_try = if landing { target - t } else { h };

            let mut finite = true;
            for s in 1..7 {
                for i in 0..dim {
                    let mut acc = 0.0;
                    for (j, kj) in k.iter().enumerate().take(s) {
                        let a = A[s][j];
                        if a != 0.0 {
                            acc += a * kj[i];
                        }
                    }
                    y_stage[i] = y[i] + h_try * acc;
                }
                (problem.rhs)(t + C[s] * h_try, &y_stage, &mut k[s]);
                if k[s].iter().any(|v| !v.is_finite()) {
                    finite = false;
                    break;
                }
            }

            let mut err_sq = 0.0;
            if finite {
                // Stage 7 state equals the 5th-order solution.
                for i in 0..dim {
                    let mut acc = 0.0;
                    for (j, kj) in k.iter().enumerate().take(6) {
                        let a = A[6][j];
                        if a != 0.0 {
                            acc += a * kj[i];
                        }
                    }
                    y_new[i] = y[i] + h_try * acc;
                }
                for i in 0..dim {
                    let mut e = 0.0;
                    for (j, kj) in k.iter().enumerate() {
                        if E[j] != 0.0 {
                            e += E[j] * kj[i];
                        }
                    }
                    e *= h_try;
                    let scale = config.atol + config.rtol * y[i].abs().max(y_new[i].abs());
                    err_sq += (e / scale) * (e / scale);
                }
                if !err_sq.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
                    finite = false;
                }
            }
            let err = if finite {
                (err_sq / dim as f64).sqrt()
            } else {
                f64::INFINITY
            };

            if err <= 1.0 {
                t = if landing { target } else { t + h_try };
                std::mem::swap(&mut y, &mut y_new);
                k.swap(0, 6); // FSAL: stage 7 derivative becomes k1
                let scale = if err == 0.0 {
                    MAX_SCALE
                } else {
                    (SAFETY * err.powf(ERR_EXPONENT)).clamp(MIN_SCALE, MAX_SCALE)
                };
                h = h_try * scale;
            } else {
                let scale = if err.is_finite() {
                    (SAFETY * err.powf(ERR_EXPONENT)).clamp(MIN_SCALE, 1.0)
                } else {
                    MIN_SCALE
                };
                h = h_try * scale;
                if h < 16.0 * f64::EPSILON * t.abs().max(1.0) {
                    return Err(Error::IntegrationFailure {
                        t_last: t,
                        reason: "step size underflow".into(),
                    });
                }
            }
        }
        recorded.push(y.clone());
    }

    states_to_timeseries(grid.clone(), dim, recorded)
}

/// Automatic initial step from the scaled size of the state and derivative.
fn initial_step<F: Fn(f64, &[f64], &mut [f64])>(
    problem: &IvpProblem<F>,
    config: &IntegratorConfig,
    y0: &[f64],
    f0: &[f64],
) -> f64 {
    let dim = problem.dim;
    let grid = &problem.t_grid;
    let span = grid[grid.len() - 1] - grid[0];
    let scaled_rms = |v: &[f64]| -> f64 {
        let s: f64 = v
            .iter()
            .zip(y0)
            .map(|(vi, yi)| {
                let sc = config.atol + config.rtol * yi.abs();
                (vi / sc) * (vi / sc)
            })
            .sum();
        (s / dim as f64).sqrt()
    };
    let d0 = scaled_rms(y0);
    let d1 = scaled_rms(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    }
    .min(span);

    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    let mut f1 = vec![0.0; dim];
    (problem.rhs)(grid[0] + h0, &y1, &mut f1);
    if f1.iter().any(|v| !v.is_finite()) {
        return (h0 * 1e-3).max(f64::MIN_POSITIVE);
    }
    let df: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = scaled_rms(&df) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span)
}

/// Classical fixed-step RK4; each grid interval is covered by equal
/// substeps no longer than `step`. An independent cross-check for
/// [`integrate`], not a production path.
pub fn integrate_fixed<F: Fn(f64, &[f64], &mut [f64])>(
    problem: &IvpProblem<F>,
    step: f64,
) -> Result<TimeSeries> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "step must be positive and finite, got {step}"
        )));
    }
    let dim = problem.dim;
    let grid = &problem.t_grid;
    let mut y = problem.x0.clone();
    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut scratch = vec![0.0; dim];

    let mut recorded: Vec<Vec<f64>> = Vec::with_capacity(grid.len());
    recorded.push(y.clone());
    for w in grid.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let n_sub = ((t1 - t0) / step).ceil().max(1.0) as usize;
        let h = (t1 - t0) / n_sub as f64;
        let mut t = t0;
        for _ in 0..n_sub {
            (problem.rhs)(t, &y, &mut k1);
            for i in 0..dim {
                scratch[i] = y[i] + 0.5 * h * k1[i];
            }
            (problem.rhs)(t + 0.5 * h, &scratch, &mut k2);
            for i in 0..dim {
                scratch[i] = y[i] + 0.5 * h * k2[i];
            }
            (problem.rhs)(t + 0.5 * h, &scratch, &mut k3);
            for i in 0..dim {
                scratch[i] = y[i] + h * k3[i];
            }
            (problem.rhs)(t + h, &scratch, &mut k4);
            for i in 0..dim {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            t += h;
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::IntegrationFailure {
                    t_last: t,
                    reason: "non-finite state in fixed-step integration".into(),
                });
            }
        }
        recorded.push(y.clone());
    }
    states_to_timeseries(grid.clone(), dim, recorded)
}

fn states_to_timeseries(t: Vec<f64>, dim: usize, states: Vec<Vec<f64>>) -> Result<TimeSeries> {
    let mut ts = TimeSeries::new(t);
    for i in 0..dim {
        let column: Vec<f64> = states.iter().map(|row| row[i]).collect();
        ts.push_channel(format!("x{i}"), column)?;
    }
    Ok(ts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::time_grid;

    fn logistic_exact(x0: f64, t: f64) -> f64 {
        // closed form of x' = x - x^2
        x0 * t.exp() / (1.0 + x0 * (t.exp() - 1.0))
    }

    #[test]
    fn constant_rhs_stays_put() {
        let grid = time_grid(3.0, 7).unwrap();
        let p = IvpProblem::new(2, |_t, _x: &[f64], dx: &mut [f64]| dx.fill(0.0), vec![1.5, -2.0], grid).unwrap();
        let ts = integrate(&p, &IntegratorConfig::default()).unwrap();
        assert!(ts.channel("x0").unwrap().iter().all(|&v| v == 1.5));
        assert!(ts.channel("x1").unwrap().iter().all(|&v| v == -2.0));
    }

    #[test]
    fn exponential_decay_matches_closed_form() {
        let grid = time_grid(1.0, 11).unwrap();
        let p = IvpProblem::new(1, |_t, x: &[f64], dx: &mut [f64]| dx[0] = -x[0], vec![1.0], grid).unwrap();
        let cfg = IntegratorConfig::default();
        let ts = integrate(&p, &cfg).unwrap();
        let end = ts.channel("x0").unwrap()[10];
        assert!((end - (-1.0f64).exp()).abs() < 10.0 * cfg.rtol);
    }

    #[test]
    fn logistic_matches_closed_form() {
        let grid = time_grid(5.0, 51).unwrap();
        let p = IvpProblem::new(
            1,
            |_t, x: &[f64], dx: &mut [f64]| dx[0] = x[0] - x[0] * x[0],
            vec![0.01],
            grid.clone(),
        )
        .unwrap();
        let cfg = IntegratorConfig::default();
        let ts = integrate(&p, &cfg).unwrap();
        let y = ts.channel("x0").unwrap();
        for (i, &t) in grid.iter().enumerate() {
            let exact = logistic_exact(0.01, t);
            assert!(
                (y[i] - exact).abs() < 10.0 * cfg.rtol,
                "t = {t}: {} vs {exact}",
                y[i]
            );
        }
    }

    #[test]
    fn fixed_step_linear_growth_exact() {
        let grid = time_grid(2.0, 5).unwrap();
        let p = IvpProblem::new(1, |_t, _x: &[f64], dx: &mut [f64]| dx[0] = 1.0, vec![0.5], grid.clone()).unwrap();
        let ts = integrate_fixed(&p, 0.1).unwrap();
        let y = ts.channel("x0").unwrap();
        for (i, &t) in grid.iter().enumerate() {
            assert!((y[i] - (0.5 + t)).abs() < 1e-14);
        }
    }

    #[test]
    fn fixed_step_decay_accuracy() {
        let grid = time_grid(1.0, 2).unwrap();
        let p = IvpProblem::new(1, |_t, x: &[f64], dx: &mut [f64]| dx[0] = -x[0], vec![1.0], grid).unwrap();
        let ts = integrate_fixed(&p, 1e-3).unwrap();
        let end = ts.channel("x0").unwrap()[1];
        assert!((end - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn adaptive_and_fixed_agree_on_logistic() {
        let grid = time_grid(5.0, 26).unwrap();
        let make = || {
            IvpProblem::new(
                1,
                |_t, x: &[f64], dx: &mut [f64]| dx[0] = x[0] - x[0] * x[0],
                vec![0.01],
                grid.clone(),
            )
            .unwrap()
        };
        let cfg = IntegratorConfig::default();
        let a = integrate(&make(), &cfg).unwrap();
        let b = integrate_fixed(&make(), 1e-3).unwrap();
        let (ya, yb) = (a.channel("x0").unwrap(), b.channel("x0").unwrap());
        let worst = ya
            .iter()
            .zip(yb)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-6, "worst disagreement {worst}");
    }

    #[test]
    fn tightening_tolerance_stays_within_previous_error_envelope() {
        let grid = time_grid(5.0, 26).unwrap();
        let make = || {
            IvpProblem::new(
                1,
                |_t, x: &[f64], dx: &mut [f64]| dx[0] = x[0] - x[0] * x[0],
                vec![0.01],
                grid.clone(),
            )
            .unwrap()
        };
        let loose = IntegratorConfig::default();
        let tight = IntegratorConfig {
            rtol: loose.rtol / 2.0,
            atol: loose.atol / 2.0,
            ..IntegratorConfig::default()
        };
        let a = integrate(&make(), &loose).unwrap();
        let b = integrate(&make(), &tight).unwrap();
        let (ya, yb) = (a.channel("x0").unwrap(), b.channel("x0").unwrap());
        for i in 0..ya.len() {
            let envelope = loose.atol + loose.rtol * ya[i].abs();
            assert!(
                (ya[i] - yb[i]).abs() <= envelope,
                "point {i}: change {} exceeds envelope {envelope}",
                (ya[i] - yb[i]).abs()
            );
        }
    }

    #[test]
    fn max_steps_exceeded_reports_last_time() {
        let grid = time_grid(1.0, 2).unwrap();
        let p = IvpProblem::new(1, |_t, x: &[f64], dx: &mut [f64]| dx[0] = -x[0], vec![1.0], grid).unwrap();
        let cfg = IntegratorConfig {
            max_steps: 3,
            ..IntegratorConfig::default()
        };
        match integrate(&p, &cfg) {
            Err(Error::IntegrationFailure { t_last, .. }) => {
                assert!((0.0..1.0).contains(&t_last))
            }
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn nonfinite_initial_rhs_is_an_error() {
        let grid = time_grid(1.0, 2).unwrap();
        let p = IvpProblem::new(
            1,
            |_t, x: &[f64], dx: &mut [f64]| dx[0] = 1.0 / x[0],
            vec![0.0],
            grid,
        )
        .unwrap();
        assert!(matches!(
            integrate(&p, &IntegratorConfig::default()),
            Err(Error::IntegrationFailure { .. })
        ));
    }

    #[test]
    fn blowup_fails_with_underflow_before_singularity() {
        // x' = x^2 from 1 blows up at t = 1; the step must underflow near it.
        let grid = time_grid(2.0, 3).unwrap();
        let p = IvpProblem::new(
            1,
            |_t, x: &[f64], dx: &mut [f64]| dx[0] = x[0] * x[0],
            vec![1.0],
            grid,
        )
        .unwrap();
        match integrate(&p, &IntegratorConfig::default()) {
            Err(Error::IntegrationFailure { t_last, .. }) => {
                assert!(t_last <= 1.0 + 1e-6, "t_last = {t_last}")
            }
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn grid_validation() {
        assert!(IvpProblem::new(1, |_t, _x: &[f64], _dx: &mut [f64]| {}, vec![0.0], vec![1.0, 2.0]).is_err());
        assert!(IvpProblem::new(1, |_t, _x: &[f64], _dx: &mut [f64]| {}, vec![0.0], vec![0.0, 0.0]).is_err());
        assert!(IvpProblem::new(2, |_t, _x: &[f64], _dx: &mut [f64]| {}, vec![0.0], vec![0.0, 1.0]).is_err());
    }
}
