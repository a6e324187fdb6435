//! Dense Levenberg-Marquardt least squares for the handful-of-parameters
//! fits in [`crate::calibrate`]. Jacobians come from central differences;
//! the residual closure returns `None` for out-of-domain parameters, which
//! is treated like a rejected step.

use crate::error::Error;
use crate::Result;

pub(crate) struct LmOptions {
    pub max_iterations: usize,
    pub rel_step_tol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iterations: 500,
            rel_step_tol: 1e-10,
        }
    }
}

#[derive(Debug)]
pub(crate) struct LmOutcome {
    pub params: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn cost_of(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Solves `(A + lambda * diag(A)) x = -g` in place for a small symmetric
/// system. Returns None when the damped matrix is numerically singular.
fn solve_damped(a: &[Vec<f64>], g: &[f64], lambda: f64) -> Option<Vec<f64>> {
    let n = g.len();
    let mut m = vec![vec![0.0; n + 1]; n];
    for i in 0..n {
        for j in 0..n {
            m[i][j] = a[i][j];
        }
        m[i][i] += lambda * a[i][i].max(1e-12);
        m[i][n] = -g[i];
    }
    for col in 0..n {
        let (pivot_row, pivot) = (col..n)
            .map(|r| (r, m[r][col].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))?;
        if pivot < 1e-300 {
            return None;
        }
        m.swap(col, pivot_row);
        let lead: Vec<f64> = m[col][col..].to_vec();
        for (r, row) in m.iter_mut().enumerate() {
            if r == col {
                continue;
            }
            let f = row[col] / lead[0];
            for (x, &p) in row[col..].iter_mut().zip(&lead) {
                *x -= f * p;
            }
        }
    }
    Some((0..n).map(|i| m[i][n] / m[i][i]).collect())
}

pub(crate) fn least_squares<F>(residuals: F, p0: &[f64], opts: &LmOptions) -> Result<LmOutcome>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let n = p0.len();
    let mut p = p0.to_vec();
    let mut r = residuals(&p)
        .filter(|r| r.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::FitDiverged("residuals undefined at the initial guess".into()))?;
    let mut cost = cost_of(&r);
    let mut lambda = 1e-3;
    let mut iterations = 0;

    for _ in 0..opts.max_iterations {
        iterations += 1;

        // Central-difference Jacobian, column per parameter.
        let m = r.len();
        let mut jac = vec![vec![0.0; m]; n];
        for j in 0..n {
            let h = 1e-6 * (1.0 + p[j].abs());
            let mut hi = p.clone();
            hi[j] += h;
            let mut lo = p.clone();
            lo[j] -= h;
            match (residuals(&hi), residuals(&lo)) {
                (Some(rh), Some(rl)) => {
                    for k in 0..m {
                        jac[j][k] = (rh[k] - rl[k]) / (2.0 * h);
                    }
                }
                (Some(rh), None) => {
                    for k in 0..m {
                        jac[j][k] = (rh[k] - r[k]) / h;
                    }
                }
                (None, Some(rl)) => {
                    for k in 0..m {
                        jac[j][k] = (r[k] - rl[k]) / h;
                    }
                }
                (None, None) => {
                    return Err(Error::FitDiverged(
                        "residuals undefined around the current parameters".into(),
                    ))
                }
            }
        }

        let mut a = vec![vec![0.0; n]; n];
        let mut g = vec![0.0; n];
        for i in 0..n {
            for j in i..n {
                let s: f64 = (0..m).map(|k| jac[i][k] * jac[j][k]).sum();
                a[i][j] = s;
                a[j][i] = s;
            }
            g[i] = (0..m).map(|k| jac[i][k] * r[k]).sum();
        }

        let grad_small = g.iter().all(|v| v.abs() <= 1e-12 * (1.0 + cost));
        if grad_small {
            return Ok(LmOutcome {
                params: p,
                iterations,
                converged: true,
            });
        }

        let mut stepped = false;
        while lambda <= 1e14 {
            let Some(delta) = solve_damped(&a, &g, lambda) else {
                lambda *= 10.0;
                continue;
            };
            let candidate: Vec<f64> = p.iter().zip(&delta).map(|(a, d)| a + d).collect();
            let trial = residuals(&candidate)
                .filter(|r| r.iter().all(|v| v.is_finite()))
                .map(|r| (cost_of(&r), r));
            match trial {
                Some((new_cost, new_r)) if new_cost <= cost => {
                    let small_step = delta
                        .iter()
                        .zip(&p)
                        .all(|(d, pj)| d.abs() <= opts.rel_step_tol * (1.0 + pj.abs()));
                    let small_gain = cost - new_cost <= 1e-15 * cost.max(1e-300);
                    p = candidate;
                    r = new_r;
                    cost = new_cost;
                    lambda = (lambda / 3.0).max(1e-12);
                    stepped = true;
                    if small_step || small_gain || cost <= 1e-30 {
                        return Ok(LmOutcome {
                            params: p,
                            iterations,
                            converged: true,
                        });
                    }
                    break;
                }
                _ => lambda *= 10.0,
            }
        }

        if !stepped {
            // No damping level improves the fit: either we are at a minimum
            // or the problem is hopeless.
            if g.iter().all(|v| v.abs() <= 1e-6 * (1.0 + cost)) {
                return Ok(LmOutcome {
                    params: p,
                    iterations,
                    converged: true,
                });
            }
            return Err(Error::FitDiverged(
                "no step reduces the residuals and the gradient is not small".into(),
            ));
        }
    }

    Ok(LmOutcome {
        params: p,
        iterations,
        converged: false,
    })
}
