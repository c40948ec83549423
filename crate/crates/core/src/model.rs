//! One-step process models with density-dependent polynomial rates.
//!
//! A model on states `{0, .., N}` jumps up at rate `a_k = N*A(k/N)` and down
//! at rate `c_k = N*C(k/N)`, where the birth polynomial `A` and the death
//! polynomial `C` are fixed and independent of `N`. Construction enforces
//! `A(1) = 0` and `C(0) = 0` so the boundary states cannot be left outward,
//! and rejects any negative rate on the state grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance used when checking `A(1) = 0` and when clamping tiny
/// negative rates produced by floating-point cancellation.
pub const RATE_TOLERANCE: f64 = 1e-12;

/// A pair of rate polynomials `A` (birth) and `C` (death) with a shared
/// degree `m`; coefficient index `j` holds the `x^j` term.
#[derive(Debug, Clone, PartialEq)]
pub struct RatePolynomials {
    birth: Vec<f64>,
    death: Vec<f64>,
}

impl RatePolynomials {
    /// Builds the pair, padding the shorter coefficient list with zeros.
    ///
    /// Fails unless `sum(birth) = A(1)` vanishes within [`RATE_TOLERANCE`]
    /// and the death polynomial has a zero constant term.
    pub fn new(birth: Vec<f64>, death: Vec<f64>) -> Result<Self> {
        if birth.is_empty() || death.is_empty() {
            return Err(Error::InvalidPolynomial(
                "coefficient lists must be non-empty".into(),
            ));
        }
        if birth.iter().chain(death.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidPolynomial(
                "coefficients must be finite".into(),
            ));
        }
        let m = birth.len().max(death.len());
        let mut birth = birth;
        let mut death = death;
        birth.resize(m, 0.0);
        death.resize(m, 0.0);

        let a1: f64 = birth.iter().sum();
        if a1.abs() > RATE_TOLERANCE {
            return Err(Error::InvalidPolynomial(format!(
                "birth polynomial must vanish at 1, got A(1) = {a1:e}"
            )));
        }
        if death[0] != 0.0 {
            return Err(Error::InvalidPolynomial(format!(
                "death polynomial must have zero constant term, got C_0 = {:e}",
                death[0]
            )));
        }
        Ok(RatePolynomials { birth, death })
    }

    /// Polynomial degree `m` (both lists have length `m + 1`).
    pub fn degree(&self) -> usize {
        self.birth.len() - 1
    }

    pub fn birth_coeffs(&self) -> &[f64] {
        &self.birth
    }

    pub fn death_coeffs(&self) -> &[f64] {
        &self.death
    }

    /// `A(x)` by Horner's scheme.
    pub fn birth_at(&self, x: f64) -> f64 {
        horner(&self.birth, x)
    }

    /// `C(x)` by Horner's scheme.
    pub fn death_at(&self, x: f64) -> f64 {
        horner(&self.death, x)
    }

    /// The pair for the label-flipped process: `A'(x) = C(1-x)`,
    /// `C'(x) = A(1-x)`. Applying it twice returns the original
    /// coefficients (up to rounding in the binomial expansion).
    pub fn flipped(&self) -> RatePolynomials {
        let birth = compose_one_minus_x(&self.death);
        let mut death = compose_one_minus_x(&self.birth);
        // C'_0 = A(1), which is zero within RATE_TOLERANCE by construction;
        // snap it so the flipped pair passes the exact C(0) = 0 check.
        if death[0].abs() <= RATE_TOLERANCE {
            death[0] = 0.0;
        }
        RatePolynomials::new(birth, death)
            .expect("flip of a valid pair preserves the construction invariants")
    }
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Coefficients of `p(1 - x)` via the binomial theorem.
fn compose_one_minus_x(p: &[f64]) -> Vec<f64> {
    let mut q = vec![0.0; p.len()];
    for (j, &pj) in p.iter().enumerate() {
        let mut binom = 1.0; // C(j, i), starting at i = 0
        for (i, qi) in q.iter_mut().enumerate().take(j + 1) {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            *qi += pj * binom * sign;
            binom = binom * ((j - i) as f64) / ((i + 1) as f64);
        }
    }
    q
}

/// Drift data derived from a rate pair: `D_j = A_j - C_j`, the absolute-sum
/// constant `c`, the sign-condition verdict, and `D = sum_{j>=1} D_j`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftCoefficients {
    /// `D_j = A_j - C_j` for `j = 0..=m`.
    pub d: Vec<f64>,
    /// `c = sum_j (|A_j| + |C_j|)`.
    pub c: f64,
    /// `D_0 >= 0` and `D_j <= 0` for all `j >= 2` (`D_1` unconstrained).
    pub sign_ok: bool,
    /// `sum_{j>=1} D_j`, the rate in the a-priori lower bound `u e^{tD}`.
    pub d_sum: f64,
}

impl DriftCoefficients {
    pub fn degree(&self) -> usize {
        self.d.len() - 1
    }

    /// Error unless the sign condition holds.
    pub fn require_sign_condition(&self) -> Result<()> {
        if self.sign_ok {
            Ok(())
        } else {
            let detail = self
                .d
                .iter()
                .enumerate()
                .filter(|(j, dj)| (*j == 0 && **dj < 0.0) || (*j >= 2 && **dj > 0.0))
                .map(|(j, dj)| format!("D_{j} = {dj}"))
                .collect::<Vec<_>>()
                .join(", ");
            Err(Error::SignCondition { detail })
        }
    }
}

/// Componentwise drift of a rate pair.
pub fn drift_coefficients(rates: &RatePolynomials) -> DriftCoefficients {
    let d: Vec<f64> = rates
        .birth
        .iter()
        .zip(&rates.death)
        .map(|(a, c)| a - c)
        .collect();
    let c = rates
        .birth
        .iter()
        .chain(&rates.death)
        .map(|v| v.abs())
        .sum();
    let sign_ok = d[0] >= 0.0 && d.iter().skip(2).all(|&dj| dj <= 0.0);
    let d_sum = d.iter().skip(1).sum();
    DriftCoefficients {
        d,
        c,
        sign_ok,
        d_sum,
    }
}

/// A one-step (birth-death) process on `{0, .., N}`.
///
/// Immutable after construction; construction validates every per-state
/// rate, so accessors never fail.
#[derive(Debug, Clone)]
pub struct OneStepModel {
    n: usize,
    rates: RatePolynomials,
    label: String,
}

impl OneStepModel {
    pub fn new(n: usize, rates: RatePolynomials, label: impl Into<String>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("N must be at least 1".into()));
        }
        let model = OneStepModel {
            n,
            rates,
            label: label.into(),
        };
        // Rate nonnegativity is checked on the discrete grid k/N only;
        // values between grid points never enter the process.
        for k in 0..=n {
            model.raw_birth_rate(k)?;
            model.raw_death_rate(k)?;
        }
        Ok(model)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn rates(&self) -> &RatePolynomials {
        &self.rates
    }

    pub fn drift(&self) -> DriftCoefficients {
        drift_coefficients(&self.rates)
    }

    fn raw_birth_rate(&self, k: usize) -> Result<f64> {
        if k >= self.n {
            return Ok(0.0);
        }
        let v = self.n as f64 * self.rates.birth_at(k as f64 / self.n as f64);
        if v < -RATE_TOLERANCE {
            return Err(Error::NegativeRate { state: k, value: v });
        }
        Ok(v.max(0.0))
    }

    fn raw_death_rate(&self, k: usize) -> Result<f64> {
        if k == 0 || k > self.n {
            return Ok(0.0);
        }
        let v = self.n as f64 * self.rates.death_at(k as f64 / self.n as f64);
        if v < -RATE_TOLERANCE {
            return Err(Error::NegativeRate { state: k, value: v });
        }
        Ok(v.max(0.0))
    }

    /// `a_k = N*A(k/N)` with the boundary zero `a_N = 0` forced.
    pub fn birth_rate(&self, k: usize) -> f64 {
        self.raw_birth_rate(k)
            .expect("rates validated at construction")
    }

    /// `c_k = N*C(k/N)` with the boundary zero `c_0 = 0` forced.
    pub fn death_rate(&self, k: usize) -> f64 {
        self.raw_death_rate(k)
            .expect("rates validated at construction")
    }

    /// Materializes both rate vectors over `k = 0..=N`.
    pub fn per_state_rates(&self) -> (Vec<f64>, Vec<f64>) {
        let a = (0..=self.n).map(|k| self.birth_rate(k)).collect();
        let c = (0..=self.n).map(|k| self.death_rate(k)).collect();
        (a, c)
    }

    /// The label-flipped model (state `k` relabelled `N - k`), so that
    /// `a'_k = c_{N-k}` and `c'_k = a_{N-k}`.
    pub fn flipped(&self) -> OneStepModel {
        let label = match self.label.strip_suffix("-flipped") {
            Some(base) => base.to_string(),
            None => format!("{}-flipped", self.label),
        };
        OneStepModel::new(self.n, self.rates.flipped(), label)
            .expect("flip of a valid model is valid")
    }

    /// Canonical explicit config (outcome of builders and flips included).
    pub fn to_config(&self) -> ModelConfig {
        ModelConfig::Explicit(ExplicitParams {
            n: self.n,
            a: self.rates.birth.clone(),
            c: self.rates.death.clone(),
            label: Some(self.label.clone()),
        })
    }
}

/// Alias for [`OneStepModel::flipped`]; the free-function spelling mirrors
/// [`drift_coefficients`].
pub fn flip_states(model: &OneStepModel) -> OneStepModel {
    model.flipped()
}

fn check_nonneg(name: &str, v: f64) -> Result<f64> {
    if !v.is_finite() || v < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "{name} must be nonnegative and finite, got {v}"
        )));
    }
    Ok(v)
}

/// SIS epidemic on a `d`-regular graph with contact infection rate `tau`,
/// recovery rate `gamma`, and external (airborne) infection rate `beta`:
/// `A(x) = tau*d*x(1-x) + beta*(1-x)`, `C(x) = gamma*x`.
pub fn build_sis_model(
    n: usize,
    tau: f64,
    gamma: f64,
    d: u32,
    beta: f64,
) -> Result<OneStepModel> {
    check_nonneg("tau", tau)?;
    check_nonneg("gamma", gamma)?;
    check_nonneg("beta", beta)?;
    if d == 0 {
        return Err(Error::InvalidParameter("d must be a positive integer".into()));
    }
    let td = tau * d as f64;
    let rates = RatePolynomials::new(vec![beta, td - beta, -td], vec![0.0, gamma, 0.0])?;
    OneStepModel::new(n, rates, "sis")
}

/// Voter-like opinion model on a `d`-regular graph where opinion 1 invades
/// at rate `tau` and opinion 0 at rate `gamma`:
/// `A(x) = tau*d*x(1-x)`, `C(x) = gamma*d*x(1-x)`.
pub fn build_voter_model(n: usize, tau: f64, gamma: f64, d: u32) -> Result<OneStepModel> {
    check_nonneg("tau", tau)?;
    check_nonneg("gamma", gamma)?;
    if d == 0 {
        return Err(Error::InvalidParameter("d must be a positive integer".into()));
    }
    let td = tau * d as f64;
    let gd = gamma * d as f64;
    let rates = RatePolynomials::new(vec![0.0, td, -td], vec![0.0, gd, -gd])?;
    OneStepModel::new(n, rates, "voter")
}

/// JSON model config. Three accepted shapes:
///
/// ```json
/// {"N": 100, "A": [1.0, 0.0, -1.0], "C": [0.0, 1.0, 0.0], "label": "sis"}
/// {"sis": {"N": 100, "tau": 0.05, "gamma": 1.0, "d": 20, "beta": 1.0}}
/// {"voter": {"N": 200, "tau": 0.2, "gamma": 0.1, "d": 10}}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelConfig {
    Sis { sis: SisParams },
    Voter { voter: VoterParams },
    Explicit(ExplicitParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SisParams {
    #[serde(rename = "N")]
    pub n: usize,
    pub tau: f64,
    pub gamma: f64,
    pub d: u32,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoterParams {
    #[serde(rename = "N")]
    pub n: usize,
    pub tau: f64,
    pub gamma: f64,
    pub d: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitParams {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    #[serde(rename = "C")]
    pub c: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl ModelConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        serde_json::from_str(json)
            .map_err(|e| Error::InvalidInput(format!("model config: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model config serializes")
    }

    pub fn build(&self) -> Result<OneStepModel> {
        match self {
            ModelConfig::Sis { sis } => build_sis_model(sis.n, sis.tau, sis.gamma, sis.d, sis.beta),
            ModelConfig::Voter { voter } => {
                build_voter_model(voter.n, voter.tau, voter.gamma, voter.d)
            }
            ModelConfig::Explicit(p) => {
                let rates = RatePolynomials::new(p.a.clone(), p.c.clone())?;
                OneStepModel::new(p.n, rates, p.label.clone().unwrap_or_else(|| "model".into()))
            }
        }
    }
}
