//! Derivative-free simplex minimization (Nelder-Mead) with deterministic
//! restarts from perturbed simplices.

use crate::error::{Error, Result};

/// Optimizer settings; tolerances are relative.
#[derive(Clone, Debug)]
pub struct OptimizerOptions {
    pub max_iters: usize,
    /// Relative scale of the initial simplex edges.
    pub init_scale: f64,
    pub f_tol: f64,
    pub x_tol: f64,
    /// Additional runs from perturbed simplices around the incumbent; the
    /// best point wins.
    pub restarts: usize,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions { max_iters: 400, init_scale: 0.1, f_tol: 1e-9, x_tol: 1e-7, restarts: 2 }
    }
}

#[derive(Clone, Debug)]
pub struct NmResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub n_evals: usize,
    pub converged: bool,
    pub reason: String,
}

/// Minimize `f` from `x0`. Deterministic given inputs; errors if the
/// objective is non-finite at the starting point.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    opts: &OptimizerOptions,
) -> Result<NmResult> {
    let n = x0.len();
    if n == 0 {
        return Err(Error::Optimizer("empty parameter vector".into()));
    }
    let f0 = f(x0);
    if !f0.is_finite() {
        return Err(Error::Optimizer(format!("objective not finite at the initial point: {f0}")));
    }

    let mut best = NmResult {
        x: x0.to_vec(),
        value: f0,
        iterations: 0,
        n_evals: 1,
        converged: false,
        reason: String::new(),
    };
    for run in 0..=opts.restarts {
        // Perturbed simplex around the incumbent: shrink the edge length and
        // alternate its sign between restarts.
        let scale = opts.init_scale * 0.6f64.powi(run as i32);
        let sign = if run % 2 == 0 { 1.0 } else { -1.0 };
        let start = best.x.clone();
        let res = nm_single(&mut f, &start, best.value, sign * scale, opts)?;
        best.iterations += res.iterations;
        best.n_evals += res.n_evals;
        if res.value <= best.value {
            best.x = res.x;
            best.value = res.value;
            best.converged = res.converged;
            best.reason = res.reason;
        }
    }
    Ok(best)
}

fn nm_single<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    x0: &[f64],
    f0: f64,
    scale: f64,
    opts: &OptimizerOptions,
) -> Result<NmResult> {
    let n = x0.len();
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut values: Vec<f64> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    values.push(f0);
    let mut n_evals = 0usize;
    for i in 0..n {
        let mut v = x0.to_vec();
        let step = scale * v[i].abs().max(1.0);
        v[i] += step;
        let fv = f(&v);
        n_evals += 1;
        simplex.push(v);
        values.push(if fv.is_finite() { fv } else { f64::INFINITY });
    }

    let mut iterations = 0usize;
    let mut converged = false;
    let reason;
    loop {
        // stable sort keeps the incumbent first among ties
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let f_best = values[0];
        let f_worst = values[n];
        let f_spread = (f_worst - f_best).abs();
        let x_spread = (0..n)
            .map(|i| {
                simplex[1..]
                    .iter()
                    .map(|v| (v[i] - simplex[0][i]).abs())
                    .fold(0.0f64, f64::max)
            })
            .fold(0.0f64, f64::max);
        // both criteria: an f-plateau alone still leaves the simplex wide
        let f_ok = f_spread <= opts.f_tol * (1.0 + f_best.abs());
        let x_ok =
            x_spread <= opts.x_tol * (1.0 + simplex[0].iter().fold(0.0f64, |a, v| a.max(v.abs())));
        if f_ok && x_ok {
            converged = true;
            reason = "simplex collapsed within tolerance".into();
            break;
        }
        if iterations >= opts.max_iters {
            reason = "iteration budget".into();
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|i| simplex[..n].iter().map(|v| v[i]).sum::<f64>() / n as f64)
            .collect();
        let reflect: Vec<f64> =
            (0..n).map(|i| centroid[i] + alpha * (centroid[i] - simplex[n][i])).collect();
        let f_reflect = f(&reflect);
        n_evals += 1;

        if f_reflect < values[0] {
            let expand: Vec<f64> =
                (0..n).map(|i| centroid[i] + gamma * (reflect[i] - centroid[i])).collect();
            let f_expand = f(&expand);
            n_evals += 1;
            if f_expand < f_reflect {
                simplex[n] = expand;
                values[n] = f_expand;
            } else {
                simplex[n] = reflect;
                values[n] = f_reflect;
            }
        } else if f_reflect < values[n - 1] {
            simplex[n] = reflect;
            values[n] = f_reflect;
        } else {
            let contract: Vec<f64> = if f_reflect < values[n] {
                (0..n).map(|i| centroid[i] + rho * (reflect[i] - centroid[i])).collect()
            } else {
                (0..n).map(|i| centroid[i] + rho * (simplex[n][i] - centroid[i])).collect()
            };
            let f_contract = f(&contract);
            n_evals += 1;
            if f_contract < values[n].min(f_reflect) {
                simplex[n] = contract;
                values[n] = f_contract;
            } else {
                // shrink toward the best vertex
                for k in 1..=n {
                    let v: Vec<f64> = (0..n)
                        .map(|i| simplex[0][i] + sigma * (simplex[k][i] - simplex[0][i]))
                        .collect();
                    let fv = f(&v);
                    n_evals += 1;
                    simplex[k] = v;
                    values[k] = if fv.is_finite() { fv } else { f64::INFINITY };
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..=n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    Ok(NmResult {
        x: simplex[order[0]].clone(),
        value: values[order[0]],
        iterations,
        n_evals,
        converged,
        reason,
    })
}
