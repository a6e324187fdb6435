//! Calibration of the walking speed law, the pVDF families, and the travel
//! time spread model from field observations.
//!
//! The chain mirrors how street data is actually reduced:
//!
//! 1. Fit the speed-density law `u = u_f * exp(-(k / theta)^gamma)`.
//! 2. Derive the critical density `k_c = theta * gamma^(-1/gamma)`, the
//!    capacity `c = u_f * exp(-1/gamma) * k_c * 3600` (ped/m/hr) and the
//!    free-flow pace `tau = 1 / u_f`.
//! 3. Map each observed density to a quasi-density flow `x = c * k / k_c`,
//!    splitting it across directions (measured split if the observations
//!    carry directional flows, 50/50 otherwise).
//! 4. Fit the chosen pVDF family to observed travel times against those
//!    flows, and the spread model to per-flow-bin travel time dispersion.
//!
//! All fits run the same damped least-squares core with positive parameters
//! handled in log space; reports carry both rmse conventions (`rmse` is the
//! root of the summed squared error, `rmse_mean` the root mean squared
//! error) plus an ordinary R².

use crate::error::Error;
use crate::optim::{least_squares, LmOptions};
use crate::pvdf::{
    eval_det_asymmetric, eval_det_symmetric, AsymmetricParams, PvdfFamily, SigmaParams,
    SymmetricParams,
};
use crate::Result;

/// One field observation. Density in ped/m², speed in m/s, travel time in
/// the unit the pVDF will be used in (pace per metre for corridor data).
/// Directional flows in ped/m/hr are optional; fits that need them can also
/// derive them from density via [`quasi_density`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub density: f64,
    pub speed: f64,
    pub travel_time: f64,
    pub ref_flow: Option<f64>,
    pub counter_flow: Option<f64>,
}

impl Observation {
    pub fn validate(&self) -> Result<()> {
        if !self.density.is_finite() || self.density < 0.0 {
            return Err(Error::InvalidInput(format!(
                "density must be finite and non-negative, got {}",
                self.density
            )));
        }
        if !self.speed.is_finite() || self.speed < 0.0 {
            return Err(Error::InvalidInput(format!(
                "speed must be finite and non-negative, got {}",
                self.speed
            )));
        }
        if !(self.travel_time > 0.0) || !self.travel_time.is_finite() {
            return Err(Error::InvalidInput(format!(
                "travel_time must be positive, got {}",
                self.travel_time
            )));
        }
        for (v, name) in [(self.ref_flow, "ref_flow"), (self.counter_flow, "counter_flow")] {
            if let Some(v) = v {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "{name} must be finite and non-negative, got {v}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn directional_flows(&self) -> Option<(f64, f64)> {
        match (self.ref_flow, self.counter_flow) {
            (Some(a), Some(b)) => Some((a, b)),
            _ => None,
        }
    }
}

/// Exponential speed-density law `u(k) = u_f * exp(-(k / theta)^gamma)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedLaw {
    pub u_f: f64,
    pub theta: f64,
    pub gamma: f64,
}

impl SpeedLaw {
    pub fn new(u_f: f64, theta: f64, gamma: f64) -> Result<Self> {
        for (v, name) in [(u_f, "u_f"), (theta, "theta"), (gamma, "gamma")] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(SpeedLaw { u_f, theta, gamma })
    }

    pub fn speed_at(&self, density: f64) -> f64 {
        self.u_f * (-(density / self.theta).powf(self.gamma)).exp()
    }
}

/// Fit quality in both rmse conventions plus R².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Goodness {
    /// Root of the summed squared error.
    pub rmse: f64,
    /// Root mean squared error.
    pub rmse_mean: f64,
    pub r_squared: f64,
}

/// Result of one calibration fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport<P> {
    pub params: P,
    pub rmse: f64,
    pub rmse_mean: f64,
    pub r_squared: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Compares predictions against observations. Arrays must have equal length
/// and at least two entries. With zero observation variance, R² is 1 for a
/// perfect fit and 0 otherwise.
pub fn goodness(predictions: &[f64], observations: &[f64]) -> Result<Goodness> {
    if predictions.len() != observations.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: observations.len(),
        });
    }
    if predictions.len() < 2 {
        return Err(Error::InsufficientData(
            "goodness needs at least two points".into(),
        ));
    }
    let n = predictions.len() as f64;
    let sse: f64 = predictions
        .iter()
        .zip(observations)
        .map(|(p, o)| (p - o) * (p - o))
        .sum();
    let mean = observations.iter().sum::<f64>() / n;
    let sst: f64 = observations.iter().map(|o| (o - mean) * (o - mean)).sum();
    let r_squared = if sst > 0.0 {
        1.0 - sse / sst
    } else if sse < 1e-18 {
        1.0
    } else {
        0.0
    };
    Ok(Goodness {
        rmse: sse.sqrt(),
        rmse_mean: (sse / n).sqrt(),
        r_squared,
    })
}

fn report_from<P>(
    params: P,
    predictions: &[f64],
    observations: &[f64],
    iterations: usize,
    converged: bool,
) -> Result<FitReport<P>> {
    let g = goodness(predictions, observations)?;
    Ok(FitReport {
        params,
        rmse: g.rmse,
        rmse_mean: g.rmse_mean,
        r_squared: g.r_squared,
        iterations,
        converged,
    })
}

/// Fits the speed law to (density, speed) pairs. Needs at least four
/// distinct densities. Initial guess: `u_f` at the fastest observed speed,
/// `theta` at the mean density, `gamma = 1`.
pub fn fit_speed_law(observations: &[Observation]) -> Result<FitReport<SpeedLaw>> {
    for o in observations {
        o.validate()?;
    }
    let mut densities: Vec<f64> = observations.iter().map(|o| o.density).collect();
    densities.sort_by(f64::total_cmp);
    densities.dedup();
    if densities.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "speed law fit needs at least 4 distinct densities, got {}",
            densities.len()
        )));
    }
    let max_speed = observations.iter().map(|o| o.speed).fold(0.0, f64::max);
    if max_speed <= 0.0 {
        return Err(Error::InsufficientData(
            "speed law fit needs at least one positive speed".into(),
        ));
    }
    let mean_density = observations.iter().map(|o| o.density).sum::<f64>()
        / observations.len() as f64;
    let p0 = [
        max_speed.ln(),
        mean_density.max(1e-6).ln(),
        0.0, // gamma = 1
    ];
    let out = least_squares(
        |p| {
            let (u_f, theta, gamma) = (p[0].exp(), p[1].exp(), p[2].exp());
            Some(
                observations
                    .iter()
                    .map(|o| u_f * (-(o.density / theta).powf(gamma)).exp() - o.speed)
                    .collect(),
            )
        },
        &p0,
        &LmOptions::default(),
    )?;
    let law = SpeedLaw::new(out.params[0].exp(), out.params[1].exp(), out.params[2].exp())?;
    let predictions: Vec<f64> = observations.iter().map(|o| law.speed_at(o.density)).collect();
    let speeds: Vec<f64> = observations.iter().map(|o| o.speed).collect();
    report_from(law, &predictions, &speeds, out.iterations, out.converged)
}

/// Density at which flow `k * u(k)` peaks: `theta * gamma^(-1/gamma)`.
pub fn critical_density(law: &SpeedLaw) -> f64 {
    law.theta * law.gamma.powf(-1.0 / law.gamma)
}

/// Peak flow of the speed law in ped/m/hr:
/// `u_f * exp(-1/gamma) * k_c * 3600`.
pub fn capacity(law: &SpeedLaw) -> f64 {
    law.u_f * (-1.0 / law.gamma).exp() * critical_density(law) * 3600.0
}

/// Maps a density to the flow the street would carry at that density if it
/// operated at capacity proportionally: `c * k / k_c`. This is the flow
/// surrogate the pVDF fits run on when only densities were measured.
pub fn quasi_density(density: f64, capacity: f64, critical_density: f64) -> Result<f64> {
    if !(capacity > 0.0) || !capacity.is_finite() {
        return Err(Error::InvalidInput(format!(
            "capacity must be positive, got {capacity}"
        )));
    }
    if !(critical_density > 0.0) || !critical_density.is_finite() {
        return Err(Error::InvalidInput(format!(
            "critical density must be positive, got {critical_density}"
        )));
    }
    if !density.is_finite() || density < 0.0 {
        return Err(Error::InvalidInput(format!(
            "density must be finite and non-negative, got {density}"
        )));
    }
    Ok(capacity * density / critical_density)
}

/// Which pVDF shape a fit produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FittedPvdf {
    Symmetric(SymmetricParams),
    Asymmetric(AsymmetricParams),
}

/// Fits a deterministic pVDF to observed travel times against directional
/// flows (every observation must carry `ref_flow` and `counter_flow`;
/// derive them first if only densities were measured). Stochastic family
/// names fit their deterministic mean. Initial guesses: `alpha=1, beta=2`
/// for the symmetric family, the street defaults for the asymmetric one.
pub fn fit_pvdf(
    observations: &[Observation],
    family: PvdfFamily,
    tau: f64,
    capacity: f64,
) -> Result<FitReport<FittedPvdf>> {
    for o in observations {
        o.validate()?;
    }
    let flows: Vec<(f64, f64)> = observations
        .iter()
        .map(|o| {
            o.directional_flows().ok_or_else(|| {
                Error::InvalidInput(
                    "pVDF fit needs directional flows on every observation".into(),
                )
            })
        })
        .collect::<Result<_>>()?;
    let times: Vec<f64> = observations.iter().map(|o| o.travel_time).collect();
    let free_params = if family.is_symmetric() { 2 } else { 7 };
    if observations.len() < free_params + 1 {
        return Err(Error::InsufficientData(format!(
            "pVDF fit needs at least {} observations, got {}",
            free_params + 1,
            observations.len()
        )));
    }

    if family.is_symmetric() {
        let out = least_squares(
            |p| {
                let params = SymmetricParams {
                    alpha: p[0].exp(),
                    beta: p[1].exp(),
                };
                flows
                    .iter()
                    .zip(&times)
                    .map(|(&(x, xc), t)| {
                        eval_det_symmetric(x, xc, tau, capacity, &params)
                            .ok()
                            .map(|v| v - t)
                    })
                    .collect()
            },
            &[0.0, 2f64.ln()],
            &LmOptions::default(),
        )?;
        let params = SymmetricParams::new(out.params[0].exp(), out.params[1].exp())?;
        let predictions: Vec<f64> = flows
            .iter()
            .map(|&(x, xc)| eval_det_symmetric(x, xc, tau, capacity, &params))
            .collect::<Result<_>>()?;
        report_from(
            FittedPvdf::Symmetric(params),
            &predictions,
            &times,
            out.iterations,
            out.converged,
        )
    } else {
        let d = AsymmetricParams::default();
        let p0 = [
            d.alpha.ln(),
            d.beta.ln(),
            d.mu,
            (-d.eta_r).ln(),
            (-d.eta_c).ln(),
            d.lambda_r,
            d.lambda_c,
        ];
        let out = least_squares(
            |p| {
                let params = AsymmetricParams {
                    alpha: p[0].exp(),
                    beta: p[1].exp(),
                    mu: p[2],
                    eta_r: -p[3].exp(),
                    eta_c: -p[4].exp(),
                    lambda_r: p[5],
                    lambda_c: p[6],
                };
                flows
                    .iter()
                    .zip(&times)
                    .map(|(&(x, xc), t)| {
                        eval_det_asymmetric(x, xc, tau, capacity, &params)
                            .ok()
                            .map(|v| v - t)
                    })
                    .collect()
            },
            &p0,
            &LmOptions::default(),
        )?;
        let params = AsymmetricParams::new(
            out.params[0].exp(),
            out.params[1].exp(),
            out.params[2],
            -out.params[3].exp(),
            -out.params[4].exp(),
            out.params[5],
            out.params[6],
        )?;
        let predictions: Vec<f64> = flows
            .iter()
            .map(|&(x, xc)| eval_det_asymmetric(x, xc, tau, capacity, &params))
            .collect::<Result<_>>()?;
        report_from(
            FittedPvdf::Asymmetric(params),
            &predictions,
            &times,
            out.iterations,
            out.converged,
        )
    }
}

/// One total-flow bin's dispersion, retained from [`fit_sigma`] for
/// reporting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaBin {
    pub flow: f64,
    pub std_time: f64,
    pub count: usize,
}

fn sigma_bins(observations: &[Observation], bins: usize) -> Result<Vec<SigmaBin>> {
    let mut totals = Vec::with_capacity(observations.len());
    for o in observations {
        o.validate()?;
        let (a, b) = o.directional_flows().ok_or_else(|| {
            Error::InvalidInput("spread fit needs directional flows on every observation".into())
        })?;
        totals.push(a + b);
    }
    let min = totals.iter().copied().fold(f64::INFINITY, f64::min);
    let max = totals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        return Err(Error::InsufficientData(
            "spread fit needs flow variation across observations".into(),
        ));
    }
    let width = (max - min) / bins as f64;
    let mut grouped: Vec<Vec<(f64, f64)>> = vec![Vec::new(); bins];
    for (o, &total) in observations.iter().zip(&totals) {
        let idx = (((total - min) / width) as usize).min(bins - 1);
        grouped[idx].push((total, o.travel_time));
    }
    let mut out = Vec::new();
    for grp in grouped {
        if grp.len() < 3 {
            continue;
        }
        let n = grp.len() as f64;
        let flow = grp.iter().map(|(f, _)| f).sum::<f64>() / n;
        let mean_t = grp.iter().map(|(_, t)| t).sum::<f64>() / n;
        let var = grp
            .iter()
            .map(|(_, t)| (t - mean_t) * (t - mean_t))
            .sum::<f64>()
            / (n - 1.0);
        out.push(SigmaBin {
            flow,
            std_time: var.sqrt(),
            count: grp.len(),
        });
    }
    Ok(out)
}

/// Fits the spread model `sigma = tau * phi * exp(-gamma * (x/c - lambda_t)^2)`
/// to per-bin travel time standard deviations. Observations are grouped into
/// `bins` equal-width total-flow bins; bins with fewer than three points are
/// dropped, and at least four usable bins are required.
pub fn fit_sigma(
    observations: &[Observation],
    tau: f64,
    capacity: f64,
    bins: usize,
) -> Result<FitReport<SigmaParams>> {
    if bins == 0 {
        return Err(Error::InvalidInput("bin count must be at least 1".into()));
    }
    if !(tau > 0.0) || !(capacity > 0.0) {
        return Err(Error::InvalidInput(
            "tau and capacity must be positive".into(),
        ));
    }
    let binned = sigma_bins(observations, bins)?;
    if binned.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "spread fit needs at least 4 flow bins with 3+ observations, got {}",
            binned.len()
        )));
    }
    let stds: Vec<f64> = binned.iter().map(|b| b.std_time).collect();
    let max_std = stds.iter().copied().fold(0.0, f64::max);
    if max_std <= 1e-12 {
        // No dispersion anywhere: the degenerate spread model fits exactly.
        let params = SigmaParams::new(0.0, 0.0, 0.0)?;
        return Ok(FitReport {
            params,
            rmse: 0.0,
            rmse_mean: 0.0,
            r_squared: 1.0,
            iterations: 0,
            converged: true,
        });
    }
    let peak_bin = binned
        .iter()
        .max_by(|a, b| a.std_time.total_cmp(&b.std_time))
        .unwrap();
    let p0 = [(max_std / tau).ln(), 0.0, peak_bin.flow / capacity];
    let out = least_squares(
        |p| {
            let (phi, gamma, lambda) = (p[0].exp(), p[1].exp(), p[2]);
            Some(
                binned
                    .iter()
                    .map(|b| {
                        let d = b.flow / capacity - lambda;
                        tau * phi * (-gamma * d * d).exp() - b.std_time
                    })
                    .collect(),
            )
        },
        &p0,
        &LmOptions::default(),
    )?;
    let params = SigmaParams::new(out.params[0].exp(), out.params[1].exp(), out.params[2])?;
    let predictions: Vec<f64> = binned
        .iter()
        .map(|b| {
            let d = b.flow / capacity - params.lambda_t;
            tau * params.phi * (-params.gamma * d * d).exp()
        })
        .collect();
    report_from(params, &predictions, &stds, out.iterations, out.converged)
}

/// Everything the full calibration chain produces.
#[derive(Debug, Clone)]
pub struct StreetCalibration {
    pub speed_law: FitReport<SpeedLaw>,
    pub critical_density: f64,
    /// Capacity in ped/m/hr.
    pub capacity: f64,
    /// Free-flow pace `1 / u_f`, the tau the fitted pVDF applies to.
    pub tau: f64,
    pub pvdf: FitReport<FittedPvdf>,
    /// None when the data cannot support a spread fit (with a warning).
    pub sigma: Option<FitReport<SigmaParams>>,
    pub warnings: Vec<String>,
}

/// Runs the whole chain described in the module docs on raw observations.
pub fn calibrate_chain(
    observations: &[Observation],
    family: PvdfFamily,
    sigma_bins: usize,
) -> Result<StreetCalibration> {
    let speed_law = fit_speed_law(observations)?;
    let k_c = critical_density(&speed_law.params);
    let cap = capacity(&speed_law.params);
    let tau = 1.0 / speed_law.params.u_f;
    let mut warnings = Vec::new();

    let transformed: Vec<Observation> = observations
        .iter()
        .map(|o| {
            let (x, xc) = match o.directional_flows() {
                Some(pair) => pair,
                None => {
                    let total = quasi_density(o.density, cap, k_c)?;
                    (total / 2.0, total / 2.0)
                }
            };
            Ok(Observation {
                ref_flow: Some(x),
                counter_flow: Some(xc),
                ..*o
            })
        })
        .collect::<Result<_>>()?;
    if observations.iter().any(|o| o.directional_flows().is_none()) {
        warnings.push(
            "observations lack directional flows; assumed a 50/50 split of the quasi-density"
                .into(),
        );
    }

    let pvdf = fit_pvdf(&transformed, family, tau, cap)?;
    let sigma = match fit_sigma(&transformed, tau, cap, sigma_bins) {
        Ok(report) => Some(report),
        Err(Error::InsufficientData(msg)) => {
            warnings.push(format!("spread model not fitted: {msg}"));
            None
        }
        Err(e) => return Err(e),
    };

    Ok(StreetCalibration {
        speed_law,
        critical_density: k_c,
        capacity: cap,
        tau,
        pvdf,
        sigma,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(density: f64, speed: f64, travel_time: f64) -> Observation {
        Observation {
            density,
            speed,
            travel_time,
            ref_flow: None,
            counter_flow: None,
        }
    }

    fn obs_flows(x: f64, xc: f64, travel_time: f64) -> Observation {
        Observation {
            density: 0.0,
            speed: 0.0,
            travel_time,
            ref_flow: Some(x),
            counter_flow: Some(xc),
        }
    }

    #[test]
    fn speed_law_round_trip() {
        let truth = SpeedLaw::new(1.5, 2.0, 2.0).unwrap();
        let data: Vec<Observation> = (0..30)
            .map(|i| {
                let k = 0.2 + i as f64 * 0.2;
                obs(k, truth.speed_at(k), 1.0)
            })
            .collect();
        let report = fit_speed_law(&data).unwrap();
        assert!(report.converged);
        let p = report.params;
        assert!((p.u_f - 1.5).abs() / 1.5 < 1e-6, "{p:?}");
        assert!((p.theta - 2.0).abs() / 2.0 < 1e-6, "{p:?}");
        assert!((p.gamma - 2.0).abs() / 2.0 < 1e-6, "{p:?}");
        assert!(report.rmse_mean < 1e-8);
        assert!(report.r_squared > 1.0 - 1e-9);
    }

    #[test]
    fn capacity_identities() {
        let law = SpeedLaw::new(1.5, 2.0, 2.0).unwrap();
        let k_c = critical_density(&law);
        assert!((k_c - 2f64.sqrt()).abs() < 1e-12);
        let c = capacity(&law);
        assert!((c - 4631.924978787816).abs() < 1e-9, "{c}");
        // Flow at the critical density really is the maximum.
        let flow = |k: f64| k * law.speed_at(k) * 3600.0;
        assert!((flow(k_c) - c).abs() < 1e-9);
        assert!(flow(k_c * 0.9) < c && flow(k_c * 1.1) < c);
    }

    #[test]
    fn quasi_density_is_linear_in_density() {
        let x = quasi_density(0.7, 4847.0, 1.4).unwrap();
        assert!((x - 4847.0 * 0.5).abs() < 1e-9);
        assert!(quasi_density(-0.1, 4847.0, 1.4).is_err());
        assert!(quasi_density(0.7, 0.0, 1.4).is_err());
    }

    #[test]
    fn symmetric_pvdf_round_trip() {
        let truth = SymmetricParams::default();
        let (tau, cap) = (0.685, 4847.0);
        let mut data = Vec::new();
        for i in 0..8 {
            for j in 0..8 {
                let x = 150.0 + 550.0 * i as f64;
                let xc = 100.0 + 500.0 * j as f64;
                let t = eval_det_symmetric(x, xc, tau, cap, &truth).unwrap();
                data.push(obs_flows(x, xc, t));
            }
        }
        let report = fit_pvdf(&data, PvdfFamily::DetSymmetric, tau, cap).unwrap();
        let FittedPvdf::Symmetric(p) = report.params else {
            panic!("wrong family")
        };
        assert!((p.alpha - truth.alpha).abs() / truth.alpha < 1e-4, "{p:?}");
        assert!((p.beta - truth.beta).abs() / truth.beta < 1e-4, "{p:?}");
        assert!(report.r_squared > 0.999999);
    }

    #[test]
    fn asymmetric_pvdf_round_trip() {
        let truth = AsymmetricParams::new(1.5, 1.1, -0.7, -5.0, -6.0, 0.45, 0.35).unwrap();
        let (tau, cap) = (0.685, 4847.0);
        let mut data = Vec::new();
        for i in 0..9 {
            for j in 0..9 {
                let x = 100.0 + 700.0 * i as f64;
                let xc = 130.0 + 650.0 * j as f64;
                let t = eval_det_asymmetric(x, xc, tau, cap, &truth).unwrap();
                data.push(obs_flows(x, xc, t));
            }
        }
        let report = fit_pvdf(&data, PvdfFamily::DetAsymmetric, tau, cap).unwrap();
        let FittedPvdf::Asymmetric(p) = report.params else {
            panic!("wrong family")
        };
        for (got, want, name) in [
            (p.alpha, truth.alpha, "alpha"),
            (p.beta, truth.beta, "beta"),
            (p.mu, truth.mu, "mu"),
            (p.eta_r, truth.eta_r, "eta_r"),
            (p.eta_c, truth.eta_c, "eta_c"),
            (p.lambda_r, truth.lambda_r, "lambda_r"),
            (p.lambda_c, truth.lambda_c, "lambda_c"),
        ] {
            assert!(
                (got - want).abs() / want.abs() < 1e-4,
                "{name}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn sigma_round_trip() {
        let truth = SigmaParams::default();
        let (tau, cap) = (0.685, 4847.0);
        let mut data = Vec::new();
        for b in 0..20 {
            let total = 200.0 + b as f64 * 450.0;
            let d = total / cap - truth.lambda_t;
            let sd = tau * truth.phi * (-truth.gamma * d * d).exp();
            let mean_t = 0.9;
            // Three points per bin whose sample std is exactly sd.
            for t in [mean_t - sd, mean_t, mean_t + sd] {
                data.push(obs_flows(total / 2.0, total / 2.0, t));
            }
        }
        let report = fit_sigma(&data, tau, cap, 20).unwrap();
        let p = report.params;
        assert!((p.phi - truth.phi).abs() / truth.phi < 1e-3, "{p:?}");
        assert!((p.gamma - truth.gamma).abs() / truth.gamma < 1e-3, "{p:?}");
        assert!(
            (p.lambda_t - truth.lambda_t).abs() / truth.lambda_t < 1e-3,
            "{p:?}"
        );
    }

    #[test]
    fn near_constant_travel_times_fit_at_least_as_well_as_the_mean() {
        let (tau, cap) = (0.685, 4847.0);
        let mut data = Vec::new();
        for i in 0..24 {
            let x = 100.0 + i as f64 * 180.0;
            let wiggle = 0.001 * ((i % 5) as f64 - 2.0);
            data.push(obs_flows(x, x * 0.8, 0.7 + wiggle));
        }
        let times: Vec<f64> = data.iter().map(|o| o.travel_time).collect();
        let mean = times.iter().sum::<f64>() / times.len() as f64;
        let std = (times.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>()
            / (times.len() as f64 - 1.0))
            .sqrt();
        let report = fit_pvdf(&data, PvdfFamily::DetSymmetric, tau, cap).unwrap();
        assert!(report.rmse_mean <= std, "{} vs {std}", report.rmse_mean);
    }

    #[test]
    fn insufficient_data_is_reported() {
        let three: Vec<Observation> = (0..3).map(|i| obs(i as f64, 1.0, 1.0)).collect();
        assert!(matches!(
            fit_speed_law(&three).unwrap_err(),
            Error::InsufficientData(_)
        ));
        let two = vec![obs_flows(1.0, 1.0, 1.0), obs_flows(2.0, 2.0, 1.1)];
        assert!(matches!(
            fit_pvdf(&two, PvdfFamily::DetSymmetric, 0.685, 4847.0).unwrap_err(),
            Error::InsufficientData(_)
        ));
        // Plenty of points but all in one bin once binned by flow.
        let same_flow: Vec<Observation> =
            (0..12).map(|i| obs_flows(500.0, 500.0, 1.0 + i as f64 * 0.01)).collect();
        assert!(fit_sigma(&same_flow, 0.685, 4847.0, 20).is_err());
    }

    #[test]
    fn goodness_edge_cases() {
        assert!(matches!(
            goodness(&[1.0], &[1.0, 2.0]).unwrap_err(),
            Error::LengthMismatch { .. }
        ));
        assert!(matches!(
            goodness(&[1.0], &[1.0]).unwrap_err(),
            Error::InsufficientData(_)
        ));
        let g = goodness(&[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(g.r_squared, 1.0);
        let g = goodness(&[1.0, 2.0], &[1.5, 1.5]).unwrap();
        assert_eq!(g.r_squared, 0.0);
        let g = goodness(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(g.rmse, 0.0);
        assert_eq!(g.r_squared, 1.0);
    }

    #[test]
    fn chain_reduces_raw_observations_end_to_end() {
        // Synthesize a street whose truth is known: speed law (1.46, 1.913,
        // 1.0) and symmetric pVDF on the implied quasi-density flows.
        let law = SpeedLaw::new(1.46, 1.913, 1.0).unwrap();
        let k_c = critical_density(&law);
        let cap = capacity(&law);
        let tau = 1.0 / law.u_f;
        let pvdf_truth = SymmetricParams::default();
        let mut data = Vec::new();
        for i in 0..40 {
            let k = 0.05 + i as f64 * 0.12;
            let total = quasi_density(k, cap, k_c).unwrap();
            let t =
                eval_det_symmetric(total / 2.0, total / 2.0, tau, cap, &pvdf_truth).unwrap();
            data.push(obs(k, law.speed_at(k), t));
        }
        let cal = calibrate_chain(&data, PvdfFamily::DetSymmetric, 20).unwrap();
        assert!((cal.speed_law.params.u_f - 1.46).abs() < 1e-6);
        assert!((cal.tau - 1.0 / 1.46).abs() < 1e-9);
        assert!((cal.capacity - cap).abs() / cap < 1e-6);
        let FittedPvdf::Symmetric(p) = cal.pvdf.params else {
            panic!("wrong family")
        };
        assert!((p.alpha - pvdf_truth.alpha).abs() / pvdf_truth.alpha < 1e-3);
        assert!((p.beta - pvdf_truth.beta).abs() / pvdf_truth.beta < 1e-3);
        // Exact travel times per flow leave nothing for the spread model.
        assert!(cal.sigma.is_none() || cal.sigma.unwrap().params.phi < 1e-3);
        assert!(!cal.warnings.is_empty());
    }
}
