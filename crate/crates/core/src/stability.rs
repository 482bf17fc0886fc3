//! Allan deviation of phase series and white-noise extrapolation.
//!
//! Averaging times are counted in runs. A series sampled every
//! `runs_per_sample` runs only supports taus that are multiples of that
//! spacing.

use std::io::Write;

use log::warn;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::extraction::PhaseSeries;

/// One-sigma tails of a normal distribution.
const ONE_SIGMA_TAIL: f64 = 0.158_655_253_931_457_05;
/// Two-sided confidence of extrapolated noise densities.
pub const DENSITY_CONFIDENCE: f64 = 0.95;
/// Family-wise confidence of the ratio intervals in [`compare_schemes`].
pub const COMPARISON_CONFIDENCE: f64 = 0.95;
/// Largest tau (runs) that enters the equivalence verdict.
pub const COMPARISON_MAX_TAU: u64 = 10;
/// Minimum series length (runs) for a scheme comparison.
pub const COMPARISON_MIN_RUNS: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AllanEstimator {
    /// Consecutive non-overlapping block means.
    #[default]
    NonOverlapping,
    /// Fully overlapping block means; tighter intervals, not the classic
    /// two-sample definition.
    Overlapping,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllanPoint {
    pub tau_runs: u64,
    pub tau_seconds: f64,
    pub adev_rad: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub pairs: u64,
    #[serde(skip)]
    pub edf: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllanCurve {
    pub points: Vec<AllanPoint>,
    pub estimator: AllanEstimator,
}

impl AllanCurve {
    pub fn taus(&self) -> Vec<u64> {
        self.points.iter().map(|p| p.tau_runs).collect()
    }

    pub fn deviations(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.adev_rad).collect()
    }

    pub fn at(&self, tau_runs: u64) -> Option<&AllanPoint> {
        self.points.iter().find(|p| p.tau_runs == tau_runs)
    }

    /// CSV with columns `tau_runs,tau_seconds,adev_rad,ci_low,ci_high,pairs`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for p in &self.points {
            wtr.serialize(p)?;
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// 1, 2, 5, 10, 20, 50, ... up to `max`.
pub fn decade_taus(max: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut decade = 1u64;
    'outer: loop {
        for m in [1, 2, 5] {
            let t = m * decade;
            if t > max {
                break 'outer;
            }
            out.push(t);
        }
        decade *= 10;
    }
    out
}

/// Taus (runs) usable with `series`: multiples of its spacing leaving at
/// least two blocks.
pub fn default_taus(series: &PhaseSeries) -> Vec<u64> {
    let rps = series.runs_per_sample as u64;
    decade_taus(series.len() as u64 / 2)
        .into_iter()
        .map(|t| t * rps)
        .collect()
}

fn chi_square_interval(dev: f64, edf: f64) -> (f64, f64) {
    match ChiSquared::new(edf) {
        Ok(chi) => {
            let hi_q = chi.inverse_cdf(1.0 - ONE_SIGMA_TAIL);
            let lo_q = chi.inverse_cdf(ONE_SIGMA_TAIL);
            (dev * (edf / hi_q).sqrt(), dev * (edf / lo_q).sqrt())
        }
        Err(_) => (0.0, f64::INFINITY),
    }
}

/// Equivalent degrees of freedom of the overlapping estimator for white
/// noise on `n` samples averaged `m` at a time.
fn overlapping_edf(n: usize, m: usize) -> f64 {
    let pairs = (n - 2 * m + 1) as f64;
    if m == 1 {
        return pairs;
    }
    let l = (n + 1) as f64;
    let m = m as f64;
    let edf = (3.0 * (l - 1.0) / (2.0 * m) - 2.0 * (l - 2.0) / l) * (4.0 * m * m) / (4.0 * m * m + 5.0);
    edf.clamp(1.0, pairs)
}

/// `mean(d^2) / 2` with a running mean, which is exact when every
/// difference has the same magnitude.
fn half_mean_square(diffs: impl Iterator<Item = f64>) -> f64 {
    let mut mean = 0.0;
    for (i, d) in diffs.enumerate() {
        mean += (0.5 * d * d - mean) / (i + 1) as f64;
    }
    mean
}

pub fn allan_deviation(series: &PhaseSeries, taus: &[u64]) -> AllanCurve {
    allan_deviation_with(series, taus, AllanEstimator::NonOverlapping)
}

/// Allan deviation at each requested tau. Taus that are not multiples of
/// the sample spacing, or leave fewer than two blocks, are skipped with a
/// warning.
pub fn allan_deviation_with(series: &PhaseSeries, taus: &[u64], estimator: AllanEstimator) -> AllanCurve {
    let y = series.phases();
    let n = y.len();
    let rps = series.runs_per_sample as u64;
    let mut taus = taus.to_vec();
    taus.sort_unstable();
    taus.dedup();

    let block_mean = |start: usize, m: usize| y[start..start + m].iter().sum::<f64>() / m as f64;

    let mut points = Vec::new();
    for tau in taus {
        if tau == 0 || tau % rps != 0 {
            warn!("tau {tau} runs is not a multiple of the sample spacing {rps}; skipped");
            continue;
        }
        let m = (tau / rps) as usize;
        if n < 2 * m {
            warn!("series of {n} samples too short for tau {tau} runs; skipped");
            continue;
        }
        let (var, pairs, edf) = match estimator {
            AllanEstimator::NonOverlapping => {
                let blocks = n / m;
                let means: Vec<f64> = (0..blocks).map(|i| block_mean(i * m, m)).collect();
                let pairs = blocks - 1;
                (half_mean_square(means.windows(2).map(|w| w[1] - w[0])), pairs, pairs as f64)
            }
            AllanEstimator::Overlapping => {
                let pairs = n - 2 * m + 1;
                let var = half_mean_square((0..pairs).map(|j| block_mean(j + m, m) - block_mean(j, m)));
                (var, pairs, overlapping_edf(n, m))
            }
        };
        let dev = var.sqrt();
        let (ci_low, ci_high) = chi_square_interval(dev, edf);
        points.push(AllanPoint {
            tau_runs: tau,
            tau_seconds: tau as f64 * series.duty_cycle,
            adev_rad: dev,
            ci_low,
            ci_high,
            pairs: pairs as u64,
            edf,
        });
    }
    AllanCurve { points, estimator }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSummary {
    /// Log-log slope of deviation against tau.
    pub slope: f64,
    pub slope_sigma: f64,
    /// Deviation at one run from the fit intercept (rad).
    pub sigma_at_1_run: f64,
    /// Standard error of `ln(sigma_at_1_run)`.
    pub ln_sigma_error: f64,
    /// `sigma_at_1_run * sqrt(duty_cycle)` (rad/sqrt(Hz)).
    pub density: f64,
    /// Two-sided [`DENSITY_CONFIDENCE`] interval on `density`.
    pub density_ci_low: f64,
    pub density_ci_high: f64,
    pub duty_cycle: f64,
    pub taus_used: usize,
}

impl NoiseSummary {
    pub fn overlaps(&self, other: &NoiseSummary) -> bool {
        self.density_ci_low <= other.density_ci_high && other.density_ci_low <= self.density_ci_high
    }
}

/// Weighted straight-line fit of `ln(adev)` against `ln(tau)` over taus in
/// `[tau_min, tau_max]` runs. Each point is weighted by `2 edf`, the inverse
/// variance of `ln(adev)`, with edf corrected for correlated differences.
/// Parameter errors are inflated by the reduced chi-square when it exceeds
/// one. Zero deviations are excluded.
pub fn fit_noise_slope(curve: &AllanCurve, tau_min: u64, tau_max: u64, duty_cycle: f64) -> Result<NoiseSummary> {
    if !(duty_cycle > 0.0) {
        return Err(Error::InvalidParameter("duty cycle must be > 0".into()));
    }
    let in_range: Vec<&AllanPoint> = curve
        .points
        .iter()
        .filter(|p| p.tau_runs >= tau_min && p.tau_runs <= tau_max)
        .collect();
    if in_range.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "slope fit needs >= 3 taus in [{tau_min}, {tau_max}], got {}",
            in_range.len()
        )));
    }
    let pts: Vec<(f64, f64, f64)> = in_range
        .iter()
        .filter(|p| p.adev_rad > 0.0)
        .map(|p| ((p.tau_runs as f64).ln(), p.adev_rad.ln(), 2.0 * p.edf.min(difference_edf(p.pairs)).max(1.0)))
        .collect();
    if pts.len() < 2 {
        return Err(Error::InsufficientData("fewer than 2 non-zero deviations in range".into()));
    }
    let (mut s, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y, w) in &pts {
        s += w;
        sx += w * x;
        sy += w * y;
        sxx += w * x * x;
        sxy += w * x * y;
    }
    let det = s * sxx - sx * sx;
    if det <= 0.0 {
        return Err(Error::InsufficientData("degenerate tau spread".into()));
    }
    let slope = (s * sxy - sx * sy) / det;
    let intercept = (sy - slope * sx) / s;
    let chi2: f64 = pts.iter().map(|&(x, y, w)| w * (y - intercept - slope * x).powi(2)).sum();
    let dof = pts.len().saturating_sub(2);
    let inflate = if dof > 0 { (chi2 / dof as f64).max(1.0) } else { 1.0 };
    let slope_sigma = (inflate * s / det).sqrt();
    let ln_err = (inflate * sxx / det).sqrt();

    let tail = 0.5 + DENSITY_CONFIDENCE / 2.0;
    // Residual-scaled errors carry the uncertainty of the scale itself.
    let z = match StudentsT::new(0.0, 1.0, dof as f64) {
        Ok(t) if inflate > 1.0 => t.inverse_cdf(tail),
        _ => Normal::standard().inverse_cdf(tail),
    };
    let sigma1 = intercept.exp();
    let root = duty_cycle.sqrt();
    Ok(NoiseSummary {
        slope,
        slope_sigma,
        sigma_at_1_run: sigma1,
        ln_sigma_error: ln_err,
        density: sigma1 * root,
        density_ci_low: (intercept - z * ln_err).exp() * root,
        density_ci_high: (intercept + z * ln_err).exp() * root,
        duty_cycle,
        taus_used: pts.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioRow {
    pub tau_runs: u64,
    pub ratio: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl RatioRow {
    pub fn contains_one(&self) -> bool {
        self.ci_low <= 1.0 && 1.0 <= self.ci_high
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    pub rows: Vec<RatioRow>,
    /// Every ratio interval with tau <= 10 runs contains 1.
    pub equivalent: bool,
}

/// Degrees of freedom of a sum of `pairs` squared adjacent differences of
/// white block means. Neighbouring differences share a block and correlate
/// at -1/2, which inflates the variance of the sum by about 3/2.
fn difference_edf(pairs: u64) -> f64 {
    let n = pairs as f64;
    (2.0 * n * n / (3.0 * n - 1.0)).max(1.0)
}

/// Ratio `adev_a / adev_b` at every common tau. Under equal noise the
/// squared ratio follows an F distribution in the two estimators' degrees
/// of freedom; intervals are Bonferroni-corrected over the taus that enter
/// the verdict so the family-wise level is [`COMPARISON_CONFIDENCE`].
pub fn compare_schemes(a: &PhaseSeries, b: &PhaseSeries) -> Result<EquivalenceReport> {
    for (name, s) in [("a", a), ("b", b)] {
        let runs = s.len() as u64 * s.runs_per_sample as u64;
        if runs < COMPARISON_MIN_RUNS {
            return Err(Error::InsufficientData(format!(
                "series {name} spans {runs} runs, comparison needs {COMPARISON_MIN_RUNS}"
            )));
        }
    }
    let ca = allan_deviation(a, &default_taus(a));
    let cb = allan_deviation(b, &default_taus(b));
    let common: Vec<(&AllanPoint, &AllanPoint)> = ca
        .points
        .iter()
        .filter_map(|pa| cb.at(pa.tau_runs).map(|pb| (pa, pb)))
        .collect();
    let tested = common.iter().filter(|(p, _)| p.tau_runs <= COMPARISON_MAX_TAU).count().max(1);
    let alpha = (1.0 - COMPARISON_CONFIDENCE) / tested as f64;

    let rows: Vec<RatioRow> = common
        .iter()
        .map(|(pa, pb)| {
            let ratio = pa.adev_rad / pb.adev_rad;
            let (ci_low, ci_high) = match FisherSnedecor::new(difference_edf(pa.pairs), difference_edf(pb.pairs)) {
                Ok(f) => {
                    let lo_q = f.inverse_cdf(alpha / 2.0);
                    let hi_q = f.inverse_cdf(1.0 - alpha / 2.0);
                    (ratio / hi_q.sqrt(), ratio / lo_q.sqrt())
                }
                Err(_) => (0.0, f64::INFINITY),
            };
            RatioRow {
                tau_runs: pa.tau_runs,
                ratio,
                ci_low,
                ci_high,
            }
        })
        .collect();
    let verdict_rows: Vec<&RatioRow> = rows.iter().filter(|r| r.tau_runs <= COMPARISON_MAX_TAU).collect();
    let equivalent = !verdict_rows.is_empty() && verdict_rows.iter().all(|r| r.contains_one());
    Ok(EquivalenceReport { rows, equivalent })
}
