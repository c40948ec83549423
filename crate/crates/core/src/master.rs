//! Master-equation solver, moment extraction, and the moment-hierarchy
//! remainder audit.
//!
//! The master equations form a linear ODE system driven by the tridiagonal
//! generator: `p_k' = a_{k-1} p_{k-1} - (a_k + c_k) p_k + c_{k+1} p_{k+1}`.
//! Solving them is exact up to integrator tolerance, which makes them the
//! reference oracle for every bound computed elsewhere in the crate, but
//! only up to the desk-scale guard on `N`.

use std::io;

use crate::error::{Error, Result};
use crate::model::OneStepModel;
use crate::ode::{integrate, IntegratorConfig, IvpProblem};
use crate::timeseries::{csv_value, TimeSeries};

/// Largest `N` the master solver accepts by default. Above it the O(N) rhs
/// and the stiffness-limited step count make direct integration a poor
/// tool; callers are pointed at the bounds solver or simulation.
pub const DEFAULT_STATE_GUARD: usize = 5000;

/// Tolerance on `|sum(p) - 1|` at every reported grid point.
pub const CONSERVATION_TOLERANCE: f64 = 1e-9;

/// Most negative probability entry tolerated from integration undershoot.
pub const NEGATIVITY_TOLERANCE: f64 = -1e-12;

/// A probability distribution over states `0..=N` at one time instant.
#[derive(Debug, Clone)]
pub struct ProbabilityVector {
    pub p: Vec<f64>,
    pub t: f64,
}

impl ProbabilityVector {
    /// Point mass at state `i`, at time 0.
    pub fn point_mass(n: usize, i: usize) -> Result<Self> {
        if i > n {
            return Err(Error::InvalidParameter(format!(
                "initial state {i} outside 0..={n}"
            )));
        }
        let mut p = vec![0.0; n + 1];
        p[i] = 1.0;
        Ok(ProbabilityVector { p, t: 0.0 })
    }

    /// Number of states minus one.
    pub fn n(&self) -> usize {
        self.p.len() - 1
    }

    /// Checks conservation and nonnegativity within the read-out tolerances.
    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.p.iter().sum();
        if (sum - 1.0).abs() > CONSERVATION_TOLERANCE {
            return Err(Error::IntegrationFailure {
                t_last: self.t,
                reason: format!("probability mass drifted to {sum:.12e}"),
            });
        }
        if let Some((k, &v)) = self
            .p
            .iter()
            .enumerate()
            .find(|(_, &v)| v < NEGATIVITY_TOLERANCE)
        {
            return Err(Error::IntegrationFailure {
                t_last: self.t,
                reason: format!("probability of state {k} fell to {v:.3e}"),
            });
        }
        Ok(())
    }
}

/// Moments `y_n(t)` of `X/N` for `n = 1..=n_max` on a shared grid.
#[derive(Debug, Clone)]
pub struct MomentSeries {
    t: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl MomentSeries {
    pub fn t(&self) -> &[f64] {
        &self.t
    }

    /// Highest moment order stored.
    pub fn order(&self) -> usize {
        self.values.len()
    }

    /// The series for `y_n`; `n` is 1-based.
    pub fn y(&self, n: usize) -> &[f64] {
        &self.values[n - 1]
    }

    pub fn to_timeseries(&self) -> TimeSeries {
        let mut ts = TimeSeries::new(self.t.clone());
        for (idx, values) in self.values.iter().enumerate() {
            ts.push_channel(format!("y{}", idx + 1), values.clone())
                .expect("moment channels share the grid");
        }
        ts
    }

    /// CSV columns `t, y1, .., y{n_max}`.
    pub fn write_csv<W: io::Write>(&self, w: &mut W) -> io::Result<()> {
        write!(w, "t")?;
        for n in 1..=self.order() {
            write!(w, ",y{n}")?;
        }
        writeln!(w)?;
        for i in 0..self.t.len() {
            write!(w, "{}", csv_value(self.t[i]))?;
            for values in &self.values {
                write!(w, ",{}", csv_value(values[i]))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Options for [`solve_master`]; the guard is configurable for callers that
/// knowingly accept long runtimes.
#[derive(Debug, Clone)]
pub struct MasterOptions {
    pub integrator: IntegratorConfig,
    pub state_guard: usize,
}

impl Default for MasterOptions {
    fn default() -> Self {
        MasterOptions {
            integrator: IntegratorConfig::default(),
            state_guard: DEFAULT_STATE_GUARD,
        }
    }
}

/// One application of the generator, `O(N)` via the tridiagonal structure.
pub fn master_rhs(model: &OneStepModel, p: &[f64]) -> Vec<f64> {
    let (a, c) = model.per_state_rates();
    let mut dp = vec![0.0; p.len()];
    master_rhs_into(&a, &c, p, &mut dp);
    dp
}

fn master_rhs_into(a: &[f64], c: &[f64], p: &[f64], dp: &mut [f64]) {
    let n = p.len() - 1;
    for k in 0..=n {
        let mut v = -(a[k] + c[k]) * p[k];
        if k > 0 {
            v += a[k - 1] * p[k - 1];
        }
        if k < n {
            v += c[k + 1] * p[k + 1];
        }
        dp[k] = v;
    }
}

/// Integrates the master equations from a point mass at `initial_state`.
///
/// The returned distributions satisfy the conservation and nonnegativity
/// tolerances at every grid point; a violation is an integration failure.
pub fn solve_master(
    model: &OneStepModel,
    initial_state: usize,
    t_grid: &[f64],
    options: &MasterOptions,
) -> Result<Vec<ProbabilityVector>> {
    let p0 = ProbabilityVector::point_mass(model.n(), initial_state)?;
    solve_master_from(model, &p0, t_grid, options)
}

/// Secondary entry point: integrates from an arbitrary initial
/// distribution (used by tests; `solve_master` covers the common case).
pub fn solve_master_from(
    model: &OneStepModel,
    initial: &ProbabilityVector,
    t_grid: &[f64],
    options: &MasterOptions,
) -> Result<Vec<ProbabilityVector>> {
    let n = model.n();
    if n > options.state_guard {
        return Err(Error::DeskScaleExceeded {
            n,
            guard: options.state_guard,
        });
    }
    if initial.p.len() != n + 1 {
        return Err(Error::InvalidInput(format!(
            "initial distribution has {} entries for N = {n}",
            initial.p.len()
        )));
    }
    initial.validate()?;

    let (a, c) = model.per_state_rates();
    let rhs = move |_t: f64, p: &[f64], dp: &mut [f64]| master_rhs_into(&a, &c, p, dp);
    let problem = IvpProblem::new(n + 1, rhs, initial.p.clone(), t_grid.to_vec())?;
    let ts = integrate(&problem, &options.integrator)?;

    let mut out = Vec::with_capacity(t_grid.len());
    for (i, &t) in t_grid.iter().enumerate() {
        let p: Vec<f64> = (0..=n).map(|k| ts.channel_at(k).1[i]).collect();
        let pv = ProbabilityVector { p, t };
        pv.validate()?;
        out.push(pv);
    }
    Ok(out)
}

/// Moments `y_n = sum_k (k/N)^n p_k` for `n = 1..=n_max`. Entries in
/// `[-1e-12, 0)` are read as 0; larger negatives were already rejected by
/// the solve.
pub fn moments(pv: &ProbabilityVector, n_max: usize) -> Vec<f64> {
    let n = pv.n();
    let mut out = vec![0.0; n_max];
    for (k, &pk) in pv.p.iter().enumerate() {
        let pk = pk.max(0.0);
        if pk == 0.0 {
            continue;
        }
        let x = k as f64 / n as f64;
        let mut xp = 1.0;
        for yn in out.iter_mut() {
            xp *= x;
            *yn += xp * pk;
        }
    }
    out
}

/// Moments of every distribution in a master solution.
pub fn moment_series(solution: &[ProbabilityVector], n_max: usize) -> MomentSeries {
    let t = solution.iter().map(|pv| pv.t).collect();
    let mut values = vec![Vec::with_capacity(solution.len()); n_max];
    for pv in solution {
        let m = moments(pv, n_max);
        for (series, v) in values.iter_mut().zip(m) {
            series.push(v);
        }
    }
    MomentSeries { t, values }
}

/// Exact instantaneous derivative of `y_n` under the master dynamics:
/// `y_n' = N^-n * sum_k (a_k ((k+1)^n - k^n) + c_k ((k-1)^n - k^n)) p_k`.
pub fn exact_moment_derivative(model: &OneStepModel, pv: &ProbabilityVector, n: usize) -> f64 {
    assert!(n >= 1, "moment order must be at least 1");
    let nn = model.n() as f64;
    let order = n as i32;
    let mut acc = 0.0;
    for (k, &pk) in pv.p.iter().enumerate() {
        let pk = pk.max(0.0);
        if pk == 0.0 {
            continue;
        }
        let kf = k as f64;
        let up = (kf + 1.0).powi(order) - kf.powi(order);
        let down = (kf - 1.0).powi(order) - kf.powi(order);
        acc += (model.birth_rate(k) * up + model.death_rate(k) * down) * pk;
    }
    acc / nn.powi(order)
}

/// The size-`N` defect of the moment hierarchy,
/// `R_n = N * (y_n' - n * sum_j D_j y_{n+j-1})`, computed from the exact
/// derivative. `R_1 = 0` by convention (the first moment equation is
/// exact). Audits check `-tol <= R_n <= n(n-1)c/2 + tol`; a violation is a
/// finding for the caller, not an error here.
pub fn remainder_audit(model: &OneStepModel, pv: &ProbabilityVector, n: usize) -> f64 {
    assert!(n >= 1, "moment order must be at least 1");
    if n == 1 {
        return 0.0;
    }
    let drift = model.drift();
    let m = drift.degree();
    let y = moments(pv, n + m); // y_1 .. y_{n+m-1} needed; index j -> y[j-1]
    let mut hierarchy = 0.0;
    for (j, dj) in drift.d.iter().enumerate() {
        hierarchy += dj * y[n + j - 2]; // y_{n+j-1}
    }
    let exact = exact_moment_derivative(model, pv, n);
    model.n() as f64 * (exact - n as f64 * hierarchy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_sis_model, RatePolynomials};
    use crate::timeseries::time_grid;

    /// Two-state chain (N = 1) with birth rate `lambda` at 0 and death
    /// rate `mu` at 1.
    fn two_state(lambda: f64, mu: f64) -> OneStepModel {
        let rates =
            RatePolynomials::new(vec![lambda, -lambda], vec![0.0, mu]).unwrap();
        OneStepModel::new(1, rates, "two-state").unwrap()
    }

    /// Closed-form occupation probability of state 1 for the two-state chain.
    fn two_state_p1(lambda: f64, mu: f64, p1_0: f64, t: f64) -> f64 {
        let r = lambda + mu;
        lambda / r * (1.0 - (-r * t).exp()) + p1_0 * (-r * t).exp()
    }

    fn fig2_sis() -> OneStepModel {
        build_sis_model(100, 0.05, 1.0, 20, 1.0).unwrap()
    }

    #[test]
    fn rhs_vanishes_at_detailed_balance() {
        let m = two_state(2.0, 2.0);
        let rhs = master_rhs(&m, &[0.5, 0.5]);
        assert!(rhs.iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn rhs_conserves_mass_for_any_p() {
        let m = fig2_sis();
        let p: Vec<f64> = (0..=100).map(|k| ((k * 37 + 11) % 101) as f64).collect();
        let rhs = master_rhs(&m, &p);
        let total: f64 = rhs.iter().sum();
        let scale: f64 = rhs.iter().map(|v| v.abs()).sum();
        assert!(total.abs() <= 1e-12 * scale.max(1.0), "sum = {total}");
    }

    #[test]
    fn rhs_hand_evaluated_three_states() {
        // N = 2 with a = (1, 2, 0) and c = (0, 3, 4), realized by
        // A(x) = 0.5 + 2.5x - 3x^2 and C(x) = 4x - 2x^2.
        let rates =
            RatePolynomials::new(vec![0.5, 2.5, -3.0], vec![0.0, 4.0, -2.0]).unwrap();
        let m = OneStepModel::new(2, rates, "three-state").unwrap();
        let (a, c) = m.per_state_rates();
        assert_eq!(a, vec![1.0, 2.0, 0.0]);
        assert_eq!(c, vec![0.0, 3.0, 4.0]);
        assert_eq!(master_rhs(&m, &[1.0, 0.0, 0.0]), vec![-1.0, 1.0, 0.0]);
    }

    #[test]
    fn zero_rates_freeze_the_distribution() {
        let m = build_sis_model(10, 0.0, 0.0, 1, 0.0).unwrap();
        let grid = time_grid(4.0, 9).unwrap();
        let sol = solve_master(&m, 3, &grid, &MasterOptions::default()).unwrap();
        for pv in &sol {
            assert_eq!(pv.p[3], 1.0);
            assert_eq!(pv.p.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn two_state_matches_closed_form() {
        let (lambda, mu) = (2.0, 1.0);
        let m = two_state(lambda, mu);
        let grid = time_grid(3.0, 31).unwrap();
        let sol = solve_master(&m, 0, &grid, &MasterOptions::default()).unwrap();
        for pv in &sol {
            let expected = two_state_p1(lambda, mu, 0.0, pv.t);
            assert!(
                (pv.p[1] - expected).abs() < 1e-8,
                "t = {}: {} vs {expected}",
                pv.t,
                pv.p[1]
            );
        }
    }

    #[test]
    fn guard_refuses_large_n() {
        let m = build_sis_model(6000, 0.05, 1.0, 20, 1.0).unwrap();
        let grid = time_grid(1.0, 3).unwrap();
        let err = solve_master(&m, 1, &grid, &MasterOptions::default()).unwrap_err();
        assert!(matches!(err, Error::DeskScaleExceeded { n: 6000, guard: 5000 }));
        // ... but the guard is configurable.
        let opts = MasterOptions {
            state_guard: 10_000,
            integrator: IntegratorConfig {
                rtol: 1e-6,
                atol: 1e-8,
                ..IntegratorConfig::default()
            },
        };
        let grid = time_grid(0.01, 2).unwrap();
        assert!(solve_master(&m, 1, &grid, &opts).is_ok());
    }

    #[test]
    fn initial_state_out_of_range() {
        let m = fig2_sis();
        let grid = time_grid(1.0, 3).unwrap();
        assert!(solve_master(&m, 101, &grid, &MasterOptions::default()).is_err());
    }

    #[test]
    fn moments_of_point_mass() {
        let pv = ProbabilityVector::point_mass(100, 7).unwrap();
        let m = moments(&pv, 3);
        for (n, v) in m.iter().enumerate() {
            let expected = 0.07f64.powi(n as i32 + 1);
            assert!((v - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn moments_of_uniform_distribution() {
        let n = 50;
        let pv = ProbabilityVector {
            p: vec![1.0 / (n as f64 + 1.0); n + 1],
            t: 0.0,
        };
        let m = moments(&pv, 1);
        assert!((m[0] - 0.5).abs() < 1e-12);
    }

    /// Compensated (Kahan) summation oracle, independent of `moments`.
    fn moment_oracle(p: &[f64], n_states: usize, order: i32) -> f64 {
        let mut sum = 0.0;
        let mut comp = 0.0;
        for (k, &pk) in p.iter().enumerate() {
            let term = (k as f64 / n_states as f64).powi(order) * pk.max(0.0);
            let y = term - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
        }
        sum
    }

    #[test]
    fn moments_match_compensated_oracle() {
        let m = fig2_sis();
        let grid = time_grid(2.0, 5).unwrap();
        let sol = solve_master(&m, 1, &grid, &MasterOptions::default()).unwrap();
        for pv in &sol {
            let ms = moments(pv, 3);
            for n in 1..=3usize {
                let oracle = moment_oracle(&pv.p, pv.n(), n as i32);
                assert!(
                    (ms[n - 1] - oracle).abs() < 1e-14,
                    "y_{n} at t = {}: {} vs {oracle}",
                    pv.t,
                    ms[n - 1]
                );
            }
        }
    }

    #[test]
    fn moment_derivative_zero_when_frozen() {
        let m = build_sis_model(10, 0.0, 0.0, 1, 0.0).unwrap();
        let pv = ProbabilityVector::point_mass(10, 4).unwrap();
        assert_eq!(exact_moment_derivative(&m, &pv, 1), 0.0);
    }

    #[test]
    fn first_moment_derivative_equals_drift_route() {
        let m = fig2_sis();
        let drift = m.drift();
        let grid = time_grid(3.0, 7).unwrap();
        let sol = solve_master(&m, 1, &grid, &MasterOptions::default()).unwrap();
        for pv in &sol {
            let y = moments(pv, drift.degree());
            let via_drift: f64 = drift.d[0]
                + drift
                    .d
                    .iter()
                    .skip(1)
                    .zip(&y)
                    .map(|(dj, yj)| dj * yj)
                    .sum::<f64>();
            let exact = exact_moment_derivative(&m, pv, 1);
            assert!(
                (exact - via_drift).abs() < 1e-12,
                "t = {}: {exact} vs {via_drift}",
                pv.t
            );
        }
    }

    #[test]
    fn moment_derivative_matches_finite_differences() {
        // Central differences on a fine bracket around a handful of times.
        let m = fig2_sis();
        let delta = 1e-3;
        let samples = [0.5, 1.0, 2.0, 5.0];
        let mut grid = vec![0.0];
        for &s in &samples {
            grid.extend_from_slice(&[s - delta, s, s + delta]);
        }
        let opts = MasterOptions {
            integrator: IntegratorConfig {
                rtol: 1e-10,
                atol: 1e-12,
                ..IntegratorConfig::default()
            },
            ..MasterOptions::default()
        };
        let sol = solve_master(&m, 1, &grid, &opts).unwrap();
        for (s_idx, _) in samples.iter().enumerate() {
            let lo = &sol[1 + 3 * s_idx];
            let mid = &sol[2 + 3 * s_idx];
            let hi = &sol[3 + 3 * s_idx];
            for n in 1..=2usize {
                let fd =
                    (moments(hi, n)[n - 1] - moments(lo, n)[n - 1]) / (2.0 * delta);
                let exact = exact_moment_derivative(&m, mid, n);
                assert!(
                    (fd - exact).abs() < 1e-5,
                    "y_{n}' at t = {}: fd {fd} vs exact {exact}",
                    mid.t
                );
            }
        }
    }

    #[test]
    fn remainder_zero_for_frozen_model_and_first_order() {
        let m = build_sis_model(10, 0.0, 0.0, 1, 0.0).unwrap();
        let pv = ProbabilityVector::point_mass(10, 4).unwrap();
        assert_eq!(remainder_audit(&m, &pv, 2), 0.0);
        let live = fig2_sis();
        let pv = ProbabilityVector::point_mass(100, 1).unwrap();
        assert_eq!(remainder_audit(&live, &pv, 1), 0.0);
    }

    #[test]
    fn remainder_within_lemma_bound_along_fig2_solve() {
        let m = fig2_sis();
        let drift = m.drift();
        let grid = vec![0.0, 0.5, 1.0, 2.0];
        let sol = solve_master(&m, 1, &grid, &MasterOptions::default()).unwrap();
        let bound = 2.0 * 1.0 * drift.c / 2.0; // n(n-1)c/2 with n = 2
        assert_eq!(bound, 3.0);
        for pv in &sol[1..] {
            let r2 = remainder_audit(&m, pv, 2);
            assert!(
                (-1e-9..=bound + 1e-9).contains(&r2),
                "R_2 at t = {}: {r2}",
                pv.t
            );
        }
    }

    #[test]
    fn solve_invariants_hold_on_fig2() {
        let m = fig2_sis();
        let grid = time_grid(10.0, 101).unwrap();
        let sol = solve_master(&m, 1, &grid, &MasterOptions::default()).unwrap();
        for pv in &sol {
            pv.validate().unwrap();
            let y = moments(pv, 4);
            // monotone: y_{n+1} <= y_n <= 1, and Jensen: y_1^n <= y_n
            assert!(y[0] <= 1.0 + 1e-12);
            for n in 1..4 {
                assert!(y[n] <= y[n - 1] + 1e-12, "t = {}", pv.t);
            }
            for n in 2..=3usize {
                assert!(y[0].powi(n as i32) <= y[n - 1] + 1e-12, "t = {}", pv.t);
            }
        }
    }

    #[test]
    fn moment_csv_shape() {
        let m = two_state(1.0, 1.0);
        let grid = time_grid(1.0, 3).unwrap();
        let sol = solve_master(&m, 0, &grid, &MasterOptions::default()).unwrap();
        let series = moment_series(&sol, 2);
        let mut buf = Vec::new();
        series.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,y1,y2\n"));
        assert_eq!(text.lines().count(), 4);
    }
}
