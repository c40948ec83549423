//! Mean-field upper bound, auxiliary lower-bound system, and the heuristic
//! variant systems.
//!
//! For a model whose drift satisfies the sign condition (`D_0 >= 0`,
//! `D_j <= 0` for `j >= 2`), the scalar mean-field equation
//! `y' = sum_j D_j y^j` bounds the expected fraction `E[X/N]` from above,
//! and the first channel of the auxiliary system
//!
//! ```text
//! z_1' = sum_j D_j z_j                                   (z_0 = 1)
//! z_n' = n sum_j D_j z_n^{(n+j-1)/n} + n(n-1)c/(2N)      (2 <= n <= m)
//! ```
//!
//! bounds it from below, with a gap of order `1/N`. Both systems are
//! integrated jointly on one grid so the channels share step control.
//!
//! The q-variant and Cauchy-Schwarz-variant systems are *heuristic*
//! tighter lower bounds for quadratic models: they reproduce the observed
//! behaviour of the moments but carry no proof, so every output and doc
//! labels them heuristic.

use std::io;

use crate::error::{Error, Result};
use crate::model::DriftCoefficients;
use crate::ode::{integrate, IntegratorConfig, IvpProblem};
use crate::timeseries::{csv_value, TimeSeries};

/// Solver options for [`solve_bounds`].
#[derive(Debug, Clone, Default)]
pub struct BoundsOptions {
    pub integrator: IntegratorConfig,
    /// Heuristic q-variant channels to compute (quadratic models only).
    pub q_values: Vec<f64>,
    /// Compute the heuristic Cauchy-Schwarz variant channel.
    pub cs_variant: bool,
    /// Also record the mean-field powers `y^n` for `n = 2..=m`.
    pub mean_field_powers: bool,
    /// Integrate the auxiliary system with the `c/N` term removed; the
    /// trajectories then coincide with the mean-field powers.
    pub drop_size_term: bool,
}

/// Run metadata carried alongside the trajectories.
#[derive(Debug, Clone)]
pub struct BoundsMetadata {
    pub n: usize,
    pub u: f64,
    pub d: Vec<f64>,
    pub c: f64,
    pub rtol: f64,
    pub atol: f64,
    /// Set when `u = 0`: the solve ran but the bracketing guarantee
    /// requires a positive initial fraction.
    pub guarantee_void: bool,
    /// Set when the `c/N` term was dropped.
    pub size_term_dropped: bool,
}

/// Mean-field and auxiliary-system trajectories on a shared grid.
#[derive(Debug, Clone)]
pub struct BoundsResult {
    t: Vec<f64>,
    mean_field: Vec<f64>,
    z: Vec<Vec<f64>>,
    mean_field_powers: Option<Vec<Vec<f64>>>,
    variants: Vec<(String, Vec<f64>)>,
    pub metadata: BoundsMetadata,
}

impl BoundsResult {
    pub fn t(&self) -> &[f64] {
        &self.t
    }

    /// Mean-field trajectory `y` (the upper bound).
    pub fn mean_field(&self) -> &[f64] {
        &self.mean_field
    }

    /// Auxiliary channel `z_n` (1-based); `z_1` is the lower bound. It is
    /// reported exactly as integrated, including negative excursions --
    /// negativity is information about bound quality.
    pub fn z(&self, n: usize) -> &[f64] {
        &self.z[n - 1]
    }

    /// Mean-field power `y^n` (2-based order), when requested.
    pub fn mean_field_power(&self, n: usize) -> Option<&[f64]> {
        self.mean_field_powers.as_ref().map(|p| p[n - 2].as_slice())
    }

    /// Heuristic variant channels in emission order
    /// (`q{value}_z1` first, then `cs_z1`).
    pub fn variants(&self) -> &[(String, Vec<f64>)] {
        &self.variants
    }

    pub fn variant(&self, name: &str) -> Option<&[f64]> {
        self.variants
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn to_timeseries(&self) -> TimeSeries {
        let mut ts = TimeSeries::new(self.t.clone());
        ts.push_channel("y", self.mean_field.clone())
            .expect("fresh series");
        for (idx, zn) in self.z.iter().enumerate() {
            ts.push_channel(format!("z{}", idx + 1), zn.clone())
                .expect("fresh series");
        }
        for (name, values) in &self.variants {
            ts.push_channel(name.clone(), values.clone())
                .expect("fresh series");
        }
        ts
    }

    /// CSV columns `t, y, z1, .., zm`, then any heuristic variant columns.
    pub fn write_csv<W: io::Write>(&self, w: &mut W) -> io::Result<()> {
        write!(w, "t,y")?;
        for n in 1..=self.z.len() {
            write!(w, ",z{n}")?;
        }
        for (name, _) in &self.variants {
            write!(w, ",{name}")?;
        }
        writeln!(w)?;
        for i in 0..self.t.len() {
            write!(w, "{},{}", csv_value(self.t[i]), csv_value(self.mean_field[i]))?;
            for zn in &self.z {
                write!(w, ",{}", csv_value(zn[i]))?;
            }
            for (_, values) in &self.variants {
                write!(w, ",{}", csv_value(values[i]))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// `y' = sum_j D_j y^j` by Horner's scheme.
pub fn mean_field_rhs(drift: &DriftCoefficients, y: f64) -> f64 {
    drift.d.iter().rev().fold(0.0, |acc, &dj| acc * y + dj)
}

/// Fractional powers use base `max(x, 0)`: the true solution stays
/// positive, clamping only guards transient integrator undershoot.
fn frac_pow(x: f64, e: f64) -> f64 {
    x.max(0.0).powf(e)
}

/// Right-hand side of the auxiliary system; `z` holds `z_1..z_m` and the
/// size term uses `c/N`. `z_1'` is linear in the channels; each `z_n'`
/// (n >= 2) depends only on `z_n`.
pub fn z_system_rhs(drift: &DriftCoefficients, c: f64, n_size: usize, z: &[f64], dz: &mut [f64]) {
    let m = drift.degree();
    debug_assert_eq!(z.len(), m);
    debug_assert_eq!(dz.len(), m);
    // z_1' = D_0 + sum_{j>=1} D_j z_j
    let mut acc = drift.d[0];
    for (j, dj) in drift.d.iter().enumerate().skip(1) {
        acc += dj * z[j - 1];
    }
    dz[0] = acc;
    // z_n' = n sum_j D_j z_n^{(n+j-1)/n} + n(n-1)c/(2N)
    let n_size = n_size as f64;
    for n in 2..=m {
        let nf = n as f64;
        let zn = z[n - 1];
        let mut acc = 0.0;
        for (j, dj) in drift.d.iter().enumerate() {
            if *dj != 0.0 {
                acc += dj * frac_pow(zn, (nf + j as f64 - 1.0) / nf);
            }
        }
        dz[n - 1] = nf * acc + nf * (nf - 1.0) * c / (2.0 * n_size);
    }
}

fn require_quadratic(drift: &DriftCoefficients) -> Result<()> {
    if drift.degree() != 2 {
        return Err(Error::UnsupportedDegree {
            degree: drift.degree(),
        });
    }
    Ok(())
}

/// Heuristic q-variant right-hand side for quadratic models. `q = 2`
/// reproduces the original system; `q = 0` turns the `z_1` equation into
/// the mean-field form.
pub fn q_variant_rhs(
    drift: &DriftCoefficients,
    c: f64,
    n_size: usize,
    q: f64,
    z1: f64,
    z2: f64,
) -> Result<(f64, f64)> {
    require_quadratic(drift)?;
    if !(0.0..=2.0).contains(&q) {
        return Err(Error::InvalidParameter(format!(
            "q must lie in [0, 2], got {q}"
        )));
    }
    let d = &drift.d;
    let dz1 = d[0] + d[1] * z1 + d[2] * frac_pow(z2, q / 2.0) * frac_pow(z1, 2.0 - q);
    let dz2 = 2.0 * (d[0] * frac_pow(z2, 0.5) + d[1] * z2 + d[2] * frac_pow(z2, 1.5))
        + c / n_size as f64;
    Ok((dz1, dz2))
}

/// Floor applied to `z_1` in the Cauchy-Schwarz variant's division; the
/// lower bound can decay toward zero and the floor only prevents overflow.
pub const CS_DIVISION_FLOOR: f64 = 1e-12;

/// Heuristic Cauchy-Schwarz variant right-hand side for quadratic models:
/// the `z_2^{3/2}` term is replaced by `z_2^2 / z_1`.
pub fn cs_variant_rhs(
    drift: &DriftCoefficients,
    c: f64,
    n_size: usize,
    z1: f64,
    z2: f64,
) -> Result<(f64, f64)> {
    require_quadratic(drift)?;
    let d = &drift.d;
    let dz1 = d[0] + d[1] * z1 + d[2] * z2;
    let dz2 = 2.0 * (d[0] * frac_pow(z2, 0.5) + d[1] * z2 + d[2] * z2 * z2 / z1.max(CS_DIVISION_FLOOR))
        + c / n_size as f64;
    Ok((dz1, dz2))
}

/// Mean-field solve alone; the returned series has one channel `y`.
pub fn solve_mean_field(
    drift: &DriftCoefficients,
    u: f64,
    t_grid: &[f64],
    integrator: &IntegratorConfig,
) -> Result<TimeSeries> {
    check_initial_fraction(u)?;
    let problem = IvpProblem::new(
        1,
        |_t, y: &[f64], dy: &mut [f64]| dy[0] = mean_field_rhs(drift, y[0]),
        vec![u],
        t_grid.to_vec(),
    )?;
    let sol = integrate(&problem, integrator)?;
    let mut ts = TimeSeries::new(t_grid.to_vec());
    ts.push_channel("y", sol.channel("x0").expect("dimension 1").to_vec())?;
    Ok(ts)
}

fn check_initial_fraction(u: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::InvalidParameter(format!(
            "initial fraction u must lie in [0, 1], got {u}"
        )));
    }
    Ok(())
}

/// Solves the mean-field equation and the auxiliary system jointly from
/// `y(0) = z_1(0) = u`, `z_n(0) = u^n`, plus any requested heuristic
/// variant systems on the same grid.
///
/// Requires the sign condition; the error suggests flipping the labels
/// when it fails. `u = 0` is accepted but flagged `guarantee_void`.
pub fn solve_bounds(
    drift: &DriftCoefficients,
    n_size: usize,
    u: f64,
    t_grid: &[f64],
    options: &BoundsOptions,
) -> Result<BoundsResult> {
    drift.require_sign_condition()?;
    check_initial_fraction(u)?;
    if n_size == 0 {
        return Err(Error::InvalidParameter("N must be at least 1".into()));
    }
    let m = drift.degree();
    let c_eff = if options.drop_size_term { 0.0 } else { drift.c };

    // Joint state [y, z_1, .., z_m].
    let mut x0 = Vec::with_capacity(m + 1);
    x0.push(u);
    for n in 1..=m {
        x0.push(u.powi(n as i32));
    }
    let rhs = |_t: f64, x: &[f64], dx: &mut [f64]| {
        dx[0] = mean_field_rhs(drift, x[0]);
        z_system_rhs(drift, c_eff, n_size, &x[1..], &mut dx[1..]);
    };
    let problem = IvpProblem::new(m + 1, rhs, x0, t_grid.to_vec())?;
    let sol = integrate(&problem, &options.integrator)?;

    let mean_field = sol.channel("x0").expect("joint state").to_vec();
    let z: Vec<Vec<f64>> = (1..=m)
        .map(|n| sol.channel(&format!("x{n}")).expect("joint state").to_vec())
        .collect();

    let mean_field_powers = options.mean_field_powers.then(|| {
        (2..=m)
            .map(|n| mean_field.iter().map(|y| y.powi(n as i32)).collect())
            .collect()
    });

    let mut variants = Vec::new();
    if !options.q_values.is_empty() || options.cs_variant {
        require_quadratic(drift)?;
        for &q in &options.q_values {
            let rhs = |_t: f64, x: &[f64], dx: &mut [f64]| {
                let (d1, d2) = q_variant_rhs(drift, c_eff, n_size, q, x[0], x[1])
                    .expect("degree and q validated above");
                dx[0] = d1;
                dx[1] = d2;
            };
            // Validate q eagerly so a bad value fails before integration.
            q_variant_rhs(drift, c_eff, n_size, q, u, u * u)?;
            let problem = IvpProblem::new(2, rhs, vec![u, u * u], t_grid.to_vec())?;
            let sol = integrate(&problem, &options.integrator)?;
            variants.push((format!("q{q}_z1"), sol.channel("x0").unwrap().to_vec()));
        }
        if options.cs_variant {
            let rhs = |_t: f64, x: &[f64], dx: &mut [f64]| {
                let (d1, d2) = cs_variant_rhs(drift, c_eff, n_size, x[0], x[1])
                    .expect("degree validated above");
                dx[0] = d1;
                dx[1] = d2;
            };
            let problem = IvpProblem::new(2, rhs, vec![u, u * u], t_grid.to_vec())?;
            let sol = integrate(&problem, &options.integrator)?;
            variants.push(("cs_z1".into(), sol.channel("x0").unwrap().to_vec()));
        }
    }

    Ok(BoundsResult {
        t: t_grid.to_vec(),
        mean_field,
        z,
        mean_field_powers,
        variants,
        metadata: BoundsMetadata {
            n: n_size,
            u,
            d: drift.d.clone(),
            c: drift.c,
            rtol: options.integrator.rtol,
            atol: options.integrator.atol,
            guarantee_void: u == 0.0,
            size_term_dropped: options.drop_size_term,
        },
    })
}
