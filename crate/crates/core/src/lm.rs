//! Levenberg-Marquardt for small dense curve-fitting problems.
//!
//! Models supply their value and analytic gradient per sample; the normal
//! matrix is accumulated directly so no Jacobian is ever stored.

use nalgebra::{DMatrix, DVector};

pub trait CurveModel {
    /// Total parameter count, including any held fixed.
    fn n_params(&self) -> usize;

    /// Value at `x`; writes `df/dp` into `grad` (length `n_params`).
    fn eval(&self, x: f64, p: &[f64], grad: &mut [f64]) -> f64;
}

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Converged once an accepted step lowers the residual sum of squares
    /// by less than this fraction.
    pub rel_tolerance: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iterations: 200,
            rel_tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    /// One-sigma uncertainties scaled by the residual variance; zero for
    /// fixed parameters, infinite when the normal matrix is singular.
    pub uncertainties: Vec<f64>,
    pub rss: f64,
    pub iterations: usize,
    pub converged: bool,
}

struct Normal {
    jtj: DMatrix<f64>,
    jtr: DVector<f64>,
    rss: f64,
}

fn accumulate<M: CurveModel>(model: &M, xs: &[f64], ys: &[f64], p: &[f64], free: &[usize]) -> Normal {
    let m = free.len();
    let mut tri = vec![0.0; m * (m + 1) / 2];
    let mut jtr = vec![0.0; m];
    let mut grad = vec![0.0; model.n_params()];
    let mut g = vec![0.0; m];
    let mut rss = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let r = y - model.eval(x, p, &mut grad);
        rss += r * r;
        for (gi, &j) in g.iter_mut().zip(free) {
            *gi = grad[j];
        }
        let mut idx = 0;
        for a in 0..m {
            let ga = g[a];
            jtr[a] += ga * r;
            for (t, gb) in tri[idx..idx + a + 1].iter_mut().zip(&g[..=a]) {
                *t += ga * gb;
            }
            idx += a + 1;
        }
    }
    let mut jtj = DMatrix::zeros(m, m);
    let mut idx = 0;
    for a in 0..m {
        for b in 0..=a {
            jtj[(a, b)] = tri[idx];
            jtj[(b, a)] = tri[idx];
            idx += 1;
        }
    }
    Normal {
        jtj,
        jtr: DVector::from_vec(jtr),
        rss,
    }
}

/// Minimises `sum (y - f(x; p))^2` over the parameters not marked `fixed`.
pub fn levenberg_marquardt<M: CurveModel>(
    model: &M,
    xs: &[f64],
    ys: &[f64],
    init: &[f64],
    fixed: &[bool],
    opts: &LmOptions,
) -> LmOutcome {
    let n_p = model.n_params();
    assert_eq!(init.len(), n_p);
    assert_eq!(fixed.len(), n_p);
    let free: Vec<usize> = (0..n_p).filter(|&j| !fixed[j]).collect();
    let m = free.len();

    let mut p = init.to_vec();
    let mut normal = accumulate(model, xs, ys, &p, &free);
    let scale_floor = normal.rss.max(ys.iter().map(|y| y * y).sum::<f64>()) * 1e-300;
    let mut lambda = 1e-3;
    let mut nu = 2.0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        if normal.rss <= scale_floor {
            converged = true;
            break;
        }
        // Solve in column-normalised coordinates; the raw normal matrix can
        // span tens of orders of magnitude between parameters.
        let d = column_scales(&normal.jtj);
        let mut a = DMatrix::from_fn(m, m, |i, j| normal.jtj[(i, j)] / (d[i] * d[j]));
        for i in 0..m {
            a[(i, i)] += lambda * (normal.jtj[(i, i)] / (d[i] * d[i]));
        }
        let rhs = DVector::from_fn(m, |i, _| normal.jtr[i] / d[i]);
        let step = match a.cholesky() {
            Some(c) => {
                let z = c.solve(&rhs);
                DVector::from_fn(m, |i, _| z[i] / d[i])
            }
            None => {
                lambda *= nu;
                nu *= 2.0;
                continue;
            }
        };
        let mut trial = p.clone();
        for (s, &j) in step.iter().zip(&free) {
            trial[j] += s;
        }
        // Accepted steps dominate, so the normal equations are built at the
        // trial point in the same pass as its residual.
        let trial_normal = accumulate(model, xs, ys, &trial, &free);
        let trial_rss = trial_normal.rss;
        let predicted = step.dot(&(lambda * DVector::from_fn(m, |i, _| normal.jtj[(i, i)] * step[i]) + &normal.jtr));
        if trial_rss.is_finite() && trial_rss < normal.rss {
            let rho = if predicted > 0.0 {
                (normal.rss - trial_rss) / predicted
            } else {
                1.0
            };
            let old = normal.rss;
            p = trial;
            normal = trial_normal;
            lambda *= (1.0f64 / 3.0).max(1.0 - (2.0 * rho - 1.0).powi(3));
            nu = 2.0;
            if old - normal.rss <= opts.rel_tolerance * old {
                converged = true;
                break;
            }
        } else {
            let tiny = step
                .iter()
                .zip(&free)
                .all(|(s, &j)| s.abs() <= 1e-14 * (p[j].abs() + 1e-300));
            if tiny {
                converged = true;
                break;
            }
            lambda *= nu;
            nu *= 2.0;
            if lambda > 1e20 {
                break;
            }
        }
    }

    let dof = xs.len().saturating_sub(m);
    let s2 = if dof > 0 { normal.rss / dof as f64 } else { f64::NAN };
    let mut uncertainties = vec![0.0; n_p];
    let d = column_scales(&normal.jtj);
    let scaled = DMatrix::from_fn(m, m, |i, j| normal.jtj[(i, j)] / (d[i] * d[j]));
    match scaled.try_inverse() {
        Some(inv) if inv.iter().all(|v| v.is_finite()) => {
            for (a, &j) in free.iter().enumerate() {
                let v = inv[(a, a)] / (d[a] * d[a]) * s2;
                uncertainties[j] = if v >= 0.0 { v.sqrt() } else { f64::INFINITY };
            }
        }
        _ => {
            for &j in &free {
                uncertainties[j] = f64::INFINITY;
            }
        }
    }

    LmOutcome {
        params: p,
        uncertainties,
        rss: normal.rss,
        iterations,
        converged,
    }
}

/// Square roots of the normal-matrix diagonal, floored so that a parameter
/// with no influence still yields a finite scale.
fn column_scales(jtj: &DMatrix<f64>) -> Vec<f64> {
    let m = jtj.nrows();
    let diag_max = (0..m).map(|a| jtj[(a, a)]).fold(0.0, f64::max);
    (0..m)
        .map(|a| jtj[(a, a)].max(diag_max * 1e-30).max(f64::MIN_POSITIVE).sqrt())
        .collect()
}
