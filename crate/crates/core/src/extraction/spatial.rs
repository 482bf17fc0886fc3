use std::cell::RefCell;
use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use nalgebra::{Matrix4, Vector4};
use rustfft::FftPlanner;

use super::{FitKind, FitResult, FitStatus, DEGENERATE_CONTRAST, DEGENERATE_PHASE_SIGMA};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::lm::{levenberg_marquardt, CurveModel, LmOptions, LmOutcome};
use crate::physics::wrap_phase;
use crate::synthesis::DensityProfile;

/// Residual ratio under which a fringe adds nothing over the envelope.
const ENVELOPE_ONLY_MARGIN: f64 = 1.01;

const A: usize = 0;
const X0: usize = 1;
const SIGMA: usize = 2;
const B: usize = 3;
const K: usize = 4;
const PHI: usize = 5;
const C: usize = 6;

/// `A exp(-(x-x0)^2 / 2 sigma^2) [1 - B sin(k x - phi)] + C`, parameters in
/// that order: `[A, x0, sigma, B, k, phi, C]`.
pub struct SpatialFringeModel;

impl CurveModel for SpatialFringeModel {
    fn n_params(&self) -> usize {
        7
    }

    #[inline]
    fn eval(&self, x: f64, p: &[f64], g: &mut [f64]) -> f64 {
        let u = x - p[X0];
        let inv_s = 1.0 / p[SIGMA];
        let z = u * inv_s;
        let env = (-0.5 * z * z).exp();
        let (s, c) = (p[K] * x - p[PHI]).sin_cos();
        let m = 1.0 - p[B] * s;
        let aenv = p[A] * env;
        let base = aenv * m;
        g[A] = env * m;
        g[X0] = base * z * inv_s;
        g[SIGMA] = base * z * z * inv_s;
        g[B] = -aenv * s;
        g[K] = -aenv * p[B] * c * x;
        g[PHI] = aenv * p[B] * c;
        g[C] = 1.0;
        base + p[C]
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Boxcar smoothing with a centred window of `2 h + 1` samples, shrinking at
/// the ends.
fn boxcar(values: &[f64], h: usize) -> Vec<f64> {
    let n = values.len();
    let mut prefix = vec![0.0; n + 1];
    for (i, v) in values.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(h);
            let hi = (i + h + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Envelope starting point `[A, x0, sigma, C]` from moments of a heavily
/// smoothed profile.
fn envelope_moments(xs: &[f64], ys: &[f64], step: f64) -> [f64; 4] {
    let smooth = boxcar(ys, (ys.len() / 32).max(2));
    let c0 = smooth.iter().copied().fold(f64::INFINITY, f64::min);
    let (mut w0, mut w1) = (0.0, 0.0);
    for (x, s) in xs.iter().zip(&smooth) {
        let w = (s - c0).max(0.0);
        w0 += w;
        w1 += w * x;
    }
    let span = xs[xs.len() - 1] - xs[0];
    if w0 <= 0.0 {
        return [0.0, 0.5 * (xs[0] + xs[xs.len() - 1]), span / 4.0, c0];
    }
    let x0 = w1 / w0;
    let var = xs
        .iter()
        .zip(&smooth)
        .map(|(x, s)| (s - c0).max(0.0) * (x - x0).powi(2))
        .sum::<f64>()
        / w0;
    let sigma = var.sqrt().max(2.0 * step);
    let a = w0 * step / (sigma * (2.0 * PI).sqrt());
    [a, x0, sigma, c0]
}

fn fft(values: impl Iterator<Item = f64>, m: usize) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = values.map(|v| Complex::new(v, 0.0)).collect();
    buf.resize(m, Complex::new(0.0, 0.0));
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(m).process(&mut buf));
    buf
}

/// Scans the fringe wavenumber with the envelope centre and width held:
/// at each `k` on a zero-padded FFT grid above `k_min`, the model is linear
/// in `A`, `A B cos(phi)`, `A B sin(phi)` and `C`, and every sum the normal
/// equations need is a Fourier coefficient. Returns the `k` with the smallest
/// linear residual and that residual.
fn projection_scan(xs: &[f64], ys: &[f64], step: f64, x0: f64, sigma: f64, k_min: f64) -> Option<(f64, f64)> {
    let n = xs.len();
    let m = (2 * n).next_power_of_two();
    let g: Vec<f64> = xs
        .iter()
        .map(|x| {
            let u = (x - x0) / sigma;
            (-0.5 * u * u).exp()
        })
        .collect();
    let fg = fft(g.iter().copied(), m);
    let fg2 = fft(g.iter().map(|v| v * v), m);
    let fyg = fft(g.iter().zip(ys).map(|(a, b)| a * b), m);
    let (sg, sg2, syg, sy, yy) = (
        g.iter().sum::<f64>(),
        g.iter().map(|v| v * v).sum::<f64>(),
        fyg[0].re,
        ys.iter().sum::<f64>(),
        ys.iter().map(|v| v * v).sum::<f64>(),
    );
    let dk = 2.0 * PI / (m as f64 * step);
    let start = xs[0];
    // sum f cos(kx) and sum f sin(kx) from the DFT bin j, whose sample phase
    // is referenced to the first sample.
    let trig = |f: &[Complex<f64>], j: usize| {
        let z = f[j % m] * Complex::from_polar(1.0, -(j as f64) * dk * start);
        (z.re, -z.im)
    };
    let j_min = ((k_min / dk).ceil() as usize).max(1);
    // At least four samples per fringe period.
    let j_max = m / 4;
    if j_min >= j_max {
        return None;
    }
    let rss_at = |j: usize| -> f64 {
        let (gc, gs) = trig(&fg, j);
        let (g2c, g2s) = trig(&fg2, j);
        let (g2c2, g2s2) = trig(&fg2, 2 * j);
        let (yc, ys_) = trig(&fyg, j);
        let ata = Matrix4::new(
            sg2, g2s, g2c, sg,
            g2s, 0.5 * (sg2 - g2c2), 0.5 * g2s2, gs,
            g2c, 0.5 * g2s2, 0.5 * (sg2 + g2c2), gc,
            sg, gs, gc, n as f64,
        );
        let aty = Vector4::new(syg, ys_, yc, sy);
        match ata.cholesky() {
            Some(c) => yy - c.solve(&aty).dot(&aty),
            None => f64::INFINITY,
        }
    };
    let rss: Vec<f64> = (j_min..=j_max).map(rss_at).collect();
    let (i, &best) = rss.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1))?;
    if !best.is_finite() {
        return None;
    }
    let offset = if i > 0 && i + 1 < rss.len() {
        let (l, c, r) = (rss[i - 1], rss[i], rss[i + 1]);
        let den = l - 2.0 * c + r;
        if den > 0.0 {
            (0.5 * (l - r) / den).clamp(-0.5, 0.5)
        } else {
            0.0
        }
    } else {
        0.0
    };
    Some((((j_min + i) as f64 + offset) * dk, best))
}

/// Gaussian-envelope x sinusoid fit. With `fixed_k` the wavenumber is held
/// and six parameters are fitted.
///
/// Returns [`Error::FringeUnresolvable`] when the fitted fringe wavelength
/// exceeds four envelope sigmas. A vanishing contrast is reported as
/// [`FitStatus::Degenerate`].
pub fn fit_spatial_fringe(profile: &DensityProfile, fixed_k: Option<f64>) -> Result<FitResult> {
    let xs: Vec<f64> = profile.positions().collect();
    let ys = profile.values();
    if xs.len() < 16 {
        return Err(Error::InsufficientData("spatial fit needs at least 16 samples".into()));
    }
    if let Some(k) = fixed_k {
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::InvalidParameter(format!("fixed k must be > 0, got {k}")));
        }
    }
    let step = profile.step();
    let opts = LmOptions::default();

    let [a0, x00, s0, c0] = envelope_moments(&xs, ys, step);
    let p = [a0, x00, s0, 0.0, 0.0, 0.0, c0];

    let Some((seed_rss, mut start)) = seed(&xs, ys, step, &p, fixed_k) else {
        return Ok(FitResult::failed(FitKind::SpatialFringe));
    };
    if start[B] < DEGENERATE_CONTRAST {
        // No modulation to lock onto; k and phi are meaningless.
        let mut unc = vec![0.0; 7];
        unc[PHI] = f64::INFINITY;
        unc[K] = f64::INFINITY;
        return Ok(FitResult {
            kind: FitKind::SpatialFringe,
            params: start.to_vec(),
            uncertainties: unc,
            rss: seed_rss,
            iterations: 0,
            status: FitStatus::Degenerate,
        });
    }
    start[B] = start[B].min(1.0);
    let mut mask = [false; 7];
    mask[K] = fixed_k.is_some();
    let mut out = levenberg_marquardt(&SpatialFringeModel, &xs, ys, &start, &mask, &opts);
    if !plausible(&out) {
        // Rotated phase seeds; keep the best residual.
        for shift in [0.5 * PI, PI, 1.5 * PI] {
            let mut q = start;
            q[PHI] += shift;
            q[B] = q[B].max(0.1);
            let cand = levenberg_marquardt(&SpatialFringeModel, &xs, ys, &q, &mask, &opts);
            let rank = |o: &LmOutcome| (plausible(o), -o.rss);
            if rank(&cand) > rank(&out) {
                out = cand;
            }
        }
    }
    let mut params = out.params;
    let mut unc = out.uncertainties;
    if params.iter().any(|v| !v.is_finite()) {
        return Ok(FitResult::failed(FitKind::SpatialFringe));
    }
    params[SIGMA] = params[SIGMA].abs();
    if params[B] < 0.0 {
        params[B] = -params[B];
        params[PHI] += PI;
    }
    params[PHI] = wrap_phase(params[PHI]);
    if params[A] < 0.0 {
        // A negative amplitude is not a density profile.
        return Ok(FitResult {
            kind: FitKind::SpatialFringe,
            params,
            uncertainties: unc,
            rss: out.rss,
            iterations: out.iterations,
            status: FitStatus::NotConverged,
        });
    }

    let mut degenerate = params[B] < DEGENERATE_CONTRAST || !(unc[PHI] < DEGENERATE_PHASE_SIGMA);
    if !degenerate && 2.0 * PI / params[K].abs() > 4.0 * params[SIGMA] {
        // A fringe longer than the envelope either is real but unresolvable
        // or is the fit bending a plain Gaussian; only the first beats the
        // envelope alone by a clear margin.
        let env_mask = [false, false, false, true, true, true, false];
        let env = levenberg_marquardt(&SpatialFringeModel, &xs, ys, &p, &env_mask, &opts);
        degenerate = env.rss.is_finite() && env.rss <= ENVELOPE_ONLY_MARGIN * out.rss;
    }
    let status = if degenerate {
        FitStatus::Degenerate
    } else if out.converged {
        FitStatus::Converged
    } else {
        FitStatus::NotConverged
    };
    if status == FitStatus::Degenerate {
        unc[PHI] = f64::INFINITY;
    } else {
        let wavelength = 2.0 * PI / params[K].abs();
        if wavelength > 4.0 * params[SIGMA] {
            return Err(Error::FringeUnresolvable {
                wavelength,
                sigma: params[SIGMA],
            });
        }
    }
    Ok(FitResult {
        kind: FitKind::SpatialFringe,
        params,
        uncertainties: unc,
        rss: out.rss,
        iterations: out.iterations,
        status,
    })
}

fn plausible(out: &LmOutcome) -> bool {
    out.converged
        && out.params.iter().all(|v| v.is_finite())
        && out.params[A] > 0.0
        && out.params[B].abs() <= 1.0
}

/// Linear least squares at fixed `x0`, `sigma` and `k`: the model is linear
/// in `A`, `A B cos(phi)`, `A B sin(phi)` and `C`. Returns the residual and
/// the equivalent parameter vector.
fn linear_fit(xs: &[f64], ys: &[f64], x0: f64, sigma: f64, k: f64) -> Option<(f64, [f64; 7])> {
    let mut ata = Matrix4::<f64>::zeros();
    let mut aty = Vector4::<f64>::zeros();
    let mut yy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let u = (x - x0) / sigma;
        let g = (-0.5 * u * u).exp();
        let (sn, cs) = (k * x).sin_cos();
        let row = Vector4::new(g, g * sn, g * cs, 1.0);
        ata += row * row.transpose();
        aty += row * y;
        yy += y * y;
    }
    let coef = ata.cholesky()?.solve(&aty);
    let amp = coef[0];
    if !(amp > 0.0) {
        return None;
    }
    let b = coef[1].hypot(coef[2]) / amp;
    let phi = coef[2].atan2(-coef[1]);
    Some((yy - coef.dot(&aty), [amp, x0, sigma, b, k, phi, coef[3]]))
}

/// Starting point for the full fit from the envelope estimate `p`: the
/// wavenumber from a projection scan over a few envelope widths, then the
/// linear parameters solved exactly.
fn seed(xs: &[f64], ys: &[f64], step: f64, p: &[f64; 7], fixed_k: Option<f64>) -> Option<(f64, [f64; 7])> {
    let widths = [0.7, 1.0, 1.4];
    let (k, sigma) = match fixed_k {
        Some(k) => (k, p[SIGMA]),
        None => widths
            .iter()
            .filter_map(|w| {
                let s = w * p[SIGMA];
                projection_scan(xs, ys, step, p[X0], s, 2.0 * PI / (6.0 * s)).map(|(k, r)| (k, s, r))
            })
            .min_by(|a, b| a.2.total_cmp(&b.2))
            .map(|(k, s, _)| (k, s))?,
    };
    widths
        .iter()
        .filter_map(|w| linear_fit(xs, ys, p[X0], w * sigma, k))
        .min_by(|a, b| a.0.total_cmp(&b.0))
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

#[derive(Debug, Clone)]
pub struct BatchFit {
    /// Free fits; failed fits are `NotConverged` with NaN parameters.
    pub stage1: Vec<FitResult>,
    pub median_k: f64,
    /// Refits with `k` held at `median_k`, in input order.
    pub results: Vec<FitResult>,
}

/// Two-stage fit of a batch of nominally identical shots: free fits, then
/// refits with `k` fixed at the median of the converged stage-1 values.
pub fn fit_batch_median_k(profiles: &[DensityProfile], exec: Execution) -> Result<BatchFit> {
    if profiles.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "median-k batch needs at least 3 profiles, got {}",
            profiles.len()
        )));
    }
    let stage1: Vec<FitResult> = exec.map(profiles, |p| {
        fit_spatial_fringe(p, None).unwrap_or_else(|_| FitResult::failed(FitKind::SpatialFringe))
    });
    let mut ks: Vec<f64> = stage1.iter().filter(|f| f.converged()).map(|f| f.wavenumber()).collect();
    let failed = profiles.len() - ks.len();
    if 2 * failed > profiles.len() {
        return Err(Error::BatchFailure {
            failed,
            total: profiles.len(),
        });
    }
    let median_k = median(&mut ks).expect("at least half the fits converged");
    let results = exec.map(profiles, |p| {
        fit_spatial_fringe(p, Some(median_k)).unwrap_or_else(|_| FitResult::failed(FitKind::SpatialFringe))
    });
    Ok(BatchFit {
        stage1,
        median_k,
        results,
    })
}
