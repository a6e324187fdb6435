//! Pedestrian volume-delay functions (pVDFs).
//!
//! Travel time on a footpath link depends on the flow in the link's own
//! direction `x` and on the opposing flow `x'` carried by its mirror, both in
//! pedestrians per metre per hour against a shared capacity `c`. Four
//! families are supported:
//!
//! * `det_symmetric`: `t = tau * (1 + alpha * u^beta)` with `u = (x + x') / c`.
//!   Directions are interchangeable; only total flow matters.
//! * `det_asymmetric`: the symmetric term plus a bidirectional interaction
//!   `tau * mu * exp(eta_r * (x/c - lambda_r)^2 + eta_c * (x'/c - lambda_c)^2)`,
//!   which lets the same total flow cost differently depending on its
//!   directional split.
//! * `stoch_symmetric` / `stoch_asymmetric`: travel time becomes a lognormal
//!   random variable whose mean is the deterministic value of the matching
//!   family and whose standard deviation is [`sigma`]. The two directions of
//!   a stream draw from one shared standard normal, making them comonotone.
//!
//! The spread model is `sigma = tau * phi * exp(-gamma * (u - lambda_t)^2)`:
//! widest where total flow sits near `lambda_t * c`, decaying on both sides.
//!
//! Path travel times under the stochastic families are sums of lognormals;
//! [`fenton_wilkinson`] folds them into a single lognormal by matching the
//! sum's exact mean and variance.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

/// Parameters of the symmetric family. Defaults are the calibrated values
/// for commercial-street footpaths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SymmetricParams {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for SymmetricParams {
    fn default() -> Self {
        SymmetricParams {
            alpha: 0.949,
            beta: 2.031,
        }
    }
}

impl SymmetricParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidInput(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::InvalidInput(format!(
                "beta must be positive, got {beta}"
            )));
        }
        Ok(SymmetricParams { alpha, beta })
    }
}

/// Parameters of the asymmetric family. `mu` sets the magnitude and sign of
/// the bidirectional interaction; `eta_r`, `eta_c` (both non-positive) set
/// how fast it decays away from the flow ratios `lambda_r`, `lambda_c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsymmetricParams {
    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
    pub eta_r: f64,
    pub eta_c: f64,
    pub lambda_r: f64,
    pub lambda_c: f64,
}

impl Default for AsymmetricParams {
    fn default() -> Self {
        AsymmetricParams {
            alpha: 1.658,
            beta: 0.997,
            mu: -0.836,
            eta_r: -5.447,
            eta_c: -5.737,
            lambda_r: 0.415,
            lambda_c: 0.394,
        }
    }
}

impl AsymmetricParams {
    pub fn new(
        alpha: f64,
        beta: f64,
        mu: f64,
        eta_r: f64,
        eta_c: f64,
        lambda_r: f64,
        lambda_c: f64,
    ) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidInput(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::InvalidInput(format!(
                "beta must be positive, got {beta}"
            )));
        }
        for (v, name) in [
            (mu, "mu"),
            (lambda_r, "lambda_r"),
            (lambda_c, "lambda_c"),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("{name} must be finite")));
            }
        }
        for (v, name) in [(eta_r, "eta_r"), (eta_c, "eta_c")] {
            if !(v <= 0.0) || !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "{name} must be non-positive (the interaction must decay), got {v}"
                )));
            }
        }
        Ok(AsymmetricParams {
            alpha,
            beta,
            mu,
            eta_r,
            eta_c,
            lambda_r,
            lambda_c,
        })
    }
}

/// Parameters of the travel time spread model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SigmaParams {
    pub phi: f64,
    pub gamma: f64,
    pub lambda_t: f64,
}

impl Default for SigmaParams {
    fn default() -> Self {
        SigmaParams {
            phi: 0.454,
            gamma: 1.439,
            lambda_t: 1.307,
        }
    }
}

impl SigmaParams {
    pub fn new(phi: f64, gamma: f64, lambda_t: f64) -> Result<Self> {
        if !(phi >= 0.0) || !phi.is_finite() {
            return Err(Error::InvalidInput(format!(
                "phi must be non-negative, got {phi}"
            )));
        }
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidInput(format!(
                "gamma must be non-negative, got {gamma}"
            )));
        }
        if !lambda_t.is_finite() {
            return Err(Error::InvalidInput("lambda_t must be finite".into()));
        }
        Ok(SigmaParams {
            phi,
            gamma,
            lambda_t,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PvdfFamily {
    DetSymmetric,
    DetAsymmetric,
    StochSymmetric,
    StochAsymmetric,
}

impl PvdfFamily {
    pub fn is_stochastic(self) -> bool {
        matches!(self, PvdfFamily::StochSymmetric | PvdfFamily::StochAsymmetric)
    }

    pub fn is_symmetric(self) -> bool {
        matches!(self, PvdfFamily::DetSymmetric | PvdfFamily::StochSymmetric)
    }
}

impl fmt::Display for PvdfFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PvdfFamily::DetSymmetric => "det_symmetric",
            PvdfFamily::DetAsymmetric => "det_asymmetric",
            PvdfFamily::StochSymmetric => "stoch_symmetric",
            PvdfFamily::StochAsymmetric => "stoch_asymmetric",
        };
        f.write_str(s)
    }
}

impl FromStr for PvdfFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "det_symmetric" => Ok(PvdfFamily::DetSymmetric),
            "det_asymmetric" => Ok(PvdfFamily::DetAsymmetric),
            "stoch_symmetric" => Ok(PvdfFamily::StochSymmetric),
            "stoch_asymmetric" => Ok(PvdfFamily::StochAsymmetric),
            other => Err(Error::InvalidInput(format!(
                "unknown pVDF family '{other}' (expected det_symmetric, det_asymmetric, stoch_symmetric or stoch_asymmetric)"
            ))),
        }
    }
}

/// A pVDF family plus every parameter set it may need.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PvdfConfig {
    pub family: PvdfFamily,
    pub symmetric: SymmetricParams,
    pub asymmetric: AsymmetricParams,
    pub sigma: SigmaParams,
}

impl PvdfConfig {
    pub fn new(family: PvdfFamily) -> Self {
        PvdfConfig {
            family,
            symmetric: SymmetricParams::default(),
            asymmetric: AsymmetricParams::default(),
            sigma: SigmaParams::default(),
        }
    }

    /// Expected travel time under this config. For stochastic families this
    /// is the mean of the lognormal, which equals the matching deterministic
    /// family's value.
    pub fn expected_time(&self, x: f64, x_counter: f64, tau: f64, capacity: f64) -> Result<f64> {
        if self.family.is_symmetric() {
            eval_det_symmetric(x, x_counter, tau, capacity, &self.symmetric)
        } else {
            eval_det_asymmetric(x, x_counter, tau, capacity, &self.asymmetric)
        }
    }

    /// Re-run the parameter checks. Deserialized configs bypass the
    /// constructors, so call this after loading one from a file.
    pub fn validate(&self) -> Result<()> {
        SymmetricParams::new(self.symmetric.alpha, self.symmetric.beta)?;
        AsymmetricParams::new(
            self.asymmetric.alpha,
            self.asymmetric.beta,
            self.asymmetric.mu,
            self.asymmetric.eta_r,
            self.asymmetric.eta_c,
            self.asymmetric.lambda_r,
            self.asymmetric.lambda_c,
        )?;
        SigmaParams::new(self.sigma.phi, self.sigma.gamma, self.sigma.lambda_t)?;
        Ok(())
    }
}

impl Default for PvdfConfig {
    fn default() -> Self {
        PvdfConfig::new(PvdfFamily::DetSymmetric)
    }
}

fn check_eval_inputs(x: f64, x_counter: f64, tau: f64, capacity: f64) -> Result<()> {
    for (v, name) in [(x, "flow"), (x_counter, "counter flow")] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidFlow(format!(
                "{name} must be finite and non-negative, got {v}"
            )));
        }
    }
    for (v, name) in [(tau, "free_flow_time"), (capacity, "capacity")] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidInput(format!(
                "{name} must be positive, got {v}"
            )));
        }
    }
    Ok(())
}

/// Symmetric travel time `tau * (1 + alpha * ((x + x') / c)^beta)` in the
/// units of `tau`.
pub fn eval_det_symmetric(
    x: f64,
    x_counter: f64,
    tau: f64,
    capacity: f64,
    params: &SymmetricParams,
) -> Result<f64> {
    check_eval_inputs(x, x_counter, tau, capacity)?;
    let u = (x + x_counter) / capacity;
    Ok(tau * (1.0 + params.alpha * u.powf(params.beta)))
}

/// First three derivatives of the symmetric travel time with respect to the
/// reference flow `x` (equivalently `x'`, or total flow, since the function
/// depends on `x + x'` only):
///
/// ```text
/// d1 = tau * alpha * beta / c * u^(beta - 1)
/// d2 = tau * alpha * beta * (beta - 1) / c^2 * u^(beta - 2)
/// d3 = tau * alpha * beta * (beta - 1) * (beta - 2) / c^3 * u^(beta - 3)
/// ```
///
/// so the function is increasing for any `beta > 0`, convex for `beta >= 1`,
/// and has non-negative third derivative for `beta >= 2`.
pub fn det_symmetric_derivatives(
    x: f64,
    x_counter: f64,
    tau: f64,
    capacity: f64,
    params: &SymmetricParams,
) -> Result<[f64; 3]> {
    check_eval_inputs(x, x_counter, tau, capacity)?;
    let u = (x + x_counter) / capacity;
    let (a, b, c) = (params.alpha, params.beta, capacity);
    Ok([
        tau * a * b / c * u.powf(b - 1.0),
        tau * a * b * (b - 1.0) / c.powi(2) * u.powf(b - 2.0),
        tau * a * b * (b - 1.0) * (b - 2.0) / c.powi(3) * u.powf(b - 3.0),
    ])
}

/// The two terms of the asymmetric travel time: the symmetric congestion
/// term (strictly increasing in total flow) and the bidirectional
/// interaction term (bounded by `tau * |mu|`, largest where the directional
/// flow ratios sit at `lambda_r`, `lambda_c`).
pub fn eval_asym_components(
    x: f64,
    x_counter: f64,
    tau: f64,
    capacity: f64,
    params: &AsymmetricParams,
) -> Result<(f64, f64)> {
    check_eval_inputs(x, x_counter, tau, capacity)?;
    let u = (x + x_counter) / capacity;
    let congestion = tau * (1.0 + params.alpha * u.powf(params.beta));
    let dr = x / capacity - params.lambda_r;
    let dc = x_counter / capacity - params.lambda_c;
    let interaction =
        tau * params.mu * (params.eta_r * dr * dr + params.eta_c * dc * dc).exp();
    Ok((congestion, interaction))
}

/// Asymmetric travel time: sum of [`eval_asym_components`].
pub fn eval_det_asymmetric(
    x: f64,
    x_counter: f64,
    tau: f64,
    capacity: f64,
    params: &AsymmetricParams,
) -> Result<f64> {
    let (congestion, interaction) = eval_asym_components(x, x_counter, tau, capacity, params)?;
    Ok(congestion + interaction)
}

/// Travel time standard deviation
/// `tau * phi * exp(-gamma * ((x + x') / c - lambda_t)^2)`.
pub fn sigma(
    x: f64,
    x_counter: f64,
    tau: f64,
    capacity: f64,
    params: &SigmaParams,
) -> Result<f64> {
    check_eval_inputs(x, x_counter, tau, capacity)?;
    let d = (x + x_counter) / capacity - params.lambda_t;
    Ok(tau * params.phi * (-params.gamma * d * d).exp())
}

/// A lognormal travel time, stored by its real-space mean and standard
/// deviation. `std_time == 0` denotes the degenerate point mass at
/// `mean_time` so deterministic links compose with stochastic ones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogNormalSpec {
    mean_time: f64,
    std_time: f64,
}

impl LogNormalSpec {
    pub fn new(mean_time: f64, std_time: f64) -> Result<Self> {
        if !(mean_time > 0.0) || !mean_time.is_finite() {
            return Err(Error::InvalidInput(format!(
                "lognormal mean must be positive, got {mean_time}"
            )));
        }
        if !(std_time >= 0.0) || !std_time.is_finite() {
            return Err(Error::InvalidInput(format!(
                "lognormal std must be non-negative, got {std_time}"
            )));
        }
        Ok(LogNormalSpec {
            mean_time,
            std_time,
        })
    }

    pub fn mean_time(&self) -> f64 {
        self.mean_time
    }

    pub fn std_time(&self) -> f64 {
        self.std_time
    }

    /// Variance of the underlying normal: `ln(1 + (s/m)^2)`.
    pub fn log_var(&self) -> f64 {
        let r = self.std_time / self.mean_time;
        (1.0 + r * r).ln()
    }

    /// Mean of the underlying normal, set so the lognormal's real-space mean
    /// is exactly `mean_time`: `ln(m) - log_var / 2`.
    pub fn log_mean(&self) -> f64 {
        self.mean_time.ln() - 0.5 * self.log_var()
    }

    /// Maps a standard normal draw to a travel time. Strictly increasing in
    /// `z`, always positive; degenerate specs return the mean regardless.
    pub fn sample(&self, z: f64) -> f64 {
        if self.std_time == 0.0 {
            self.mean_time
        } else {
            (self.log_mean() + self.log_var().sqrt() * z).exp()
        }
    }
}

/// Lognormal travel time spec for a link under a stochastic family: mean is
/// the matching deterministic family's value, spread is [`sigma`].
/// Deterministic families have no distribution and are rejected.
pub fn lognormal_spec(
    x: f64,
    x_counter: f64,
    tau: f64,
    capacity: f64,
    config: &PvdfConfig,
) -> Result<LogNormalSpec> {
    if !config.family.is_stochastic() {
        return Err(Error::InvalidInput(format!(
            "family {} is deterministic and has no travel time distribution",
            config.family
        )));
    }
    let mean = config.expected_time(x, x_counter, tau, capacity)?;
    let std = sigma(x, x_counter, tau, capacity, &config.sigma)?;
    LogNormalSpec::new(mean, std)
}

/// Samples both directions of a stream from one shared standard normal
/// draw, so a slow day in one direction is a slow day in the other.
pub fn stream_correlated_sample(
    spec: &LogNormalSpec,
    spec_mirror: &LogNormalSpec,
    unit_normal_draw: f64,
) -> (f64, f64) {
    (spec.sample(unit_normal_draw), spec_mirror.sample(unit_normal_draw))
}

/// Folds independent per-link lognormal travel times into one lognormal for
/// the whole path by matching the sum's exact mean and variance
/// (`mean = sum of means`, `var = sum of variances`). A single-link path
/// returns that link's spec unchanged.
pub fn fenton_wilkinson(path_specs: &[LogNormalSpec]) -> Result<LogNormalSpec> {
    if path_specs.is_empty() {
        return Err(Error::EmptyPath);
    }
    let mean: f64 = path_specs.iter().map(|s| s.mean_time).sum();
    let var: f64 = path_specs.iter().map(|s| s.std_time * s.std_time).sum();
    LogNormalSpec::new(mean, var.sqrt())
}
