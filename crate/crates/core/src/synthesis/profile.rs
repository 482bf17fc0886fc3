use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::SequenceTiming;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ImagingMode {
    #[default]
    Absorption,
    Fmi,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ProfileMeta {
    pub shot_id: u64,
    pub timing: Option<SequenceTiming>,
    pub mode: ImagingMode,
}

/// Uniformly sampled 1D density.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityProfile {
    start: f64,
    step: f64,
    values: Vec<f64>,
    pub meta: ProfileMeta,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    position_m: f64,
    density: f64,
}

impl DensityProfile {
    pub fn new(start: f64, step: f64, values: Vec<f64>) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) || !start.is_finite() {
            return Err(Error::InvalidParameter(format!("bad axis start={start} step={step}")));
        }
        if values.len() < 2 {
            return Err(Error::InsufficientData("profile needs at least 2 samples".into()));
        }
        Ok(DensityProfile {
            start,
            step,
            values,
            meta: ProfileMeta::default(),
        })
    }

    /// Builds a profile from explicit positions, which must be strictly
    /// increasing and uniformly spaced (relative tolerance 1e-6).
    pub fn from_samples(positions: &[f64], values: Vec<f64>) -> Result<Self> {
        if positions.len() != values.len() {
            return Err(Error::InvalidParameter("positions and values differ in length".into()));
        }
        if positions.len() < 2 {
            return Err(Error::InsufficientData("profile needs at least 2 samples".into()));
        }
        let n = positions.len();
        let step = (positions[n - 1] - positions[0]) / (n - 1) as f64;
        for (i, w) in positions.windows(2).enumerate() {
            let d = w[1] - w[0];
            if !(d > 0.0) || (d - step).abs() > 1e-6 * step {
                return Err(Error::InvalidParameter(format!(
                    "axis not uniformly increasing at sample {}",
                    i + 1
                )));
            }
        }
        Self::new(positions[0], step, values)
    }

    pub fn with_meta(mut self, meta: ProfileMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn end(&self) -> f64 {
        self.position(self.len() - 1)
    }

    pub fn position(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn positions(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.len()).map(move |i| self.position(i))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Trapezoidal integral over the whole axis.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.values, self.step)
    }

    /// Trapezoidal integral over `[lo, hi]`, interpolating linearly at the
    /// interval ends.
    pub fn integrate_between(&self, lo: f64, hi: f64) -> f64 {
        let (lo, hi) = (lo.max(self.start), hi.min(self.end()));
        if hi <= lo {
            return 0.0;
        }
        let fi = |x: f64| (x - self.start) / self.step;
        let (a, b) = (fi(lo), fi(hi));
        let ia = a.ceil() as usize;
        let ib = b.floor() as usize;
        if ia > ib {
            return 0.5 * (self.interpolate(lo) + self.interpolate(hi)) * (hi - lo);
        }
        let mut total = trapezoid(&self.values[ia..=ib], self.step);
        let xa = self.position(ia);
        let xb = self.position(ib);
        total += 0.5 * (self.interpolate(lo) + self.values[ia]) * (xa - lo);
        total += 0.5 * (self.values[ib] + self.interpolate(hi)) * (hi - xb);
        total
    }

    /// Linear interpolation, clamped to the end samples outside the axis.
    pub fn interpolate(&self, x: f64) -> f64 {
        let f = (x - self.start) / self.step;
        if f <= 0.0 {
            return self.values[0];
        }
        let last = self.len() - 1;
        if f >= last as f64 {
            return self.values[last];
        }
        let i = f.floor() as usize;
        let t = f - i as f64;
        self.values[i] * (1.0 - t) + self.values[i + 1] * t
    }

    /// Sub-profile covering `[lo, hi]` (inclusive of the bracketing samples
    /// that fall inside).
    pub fn crop(&self, lo: f64, hi: f64) -> Result<DensityProfile> {
        let i0 = ((lo - self.start) / self.step).ceil().max(0.0) as usize;
        let i1 = (((hi - self.start) / self.step).floor() as isize).min(self.len() as isize - 1);
        if i1 < 0 || (i1 as usize) < i0 + 1 {
            return Err(Error::InsufficientData(format!("crop [{lo}, {hi}] leaves < 2 samples")));
        }
        let mut p = DensityProfile::new(
            self.position(i0),
            self.step,
            self.values[i0..=i1 as usize].to_vec(),
        )?;
        p.meta = self.meta.clone();
        Ok(p)
    }

    /// Same samples with the axis moved by `dx`.
    pub fn translated_axis(&self, dx: f64) -> DensityProfile {
        DensityProfile {
            start: self.start + dx,
            ..self.clone()
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for (x, &d) in self.positions().zip(&self.values) {
            wtr.serialize(CsvRow {
                position_m: x,
                density: d,
            })?;
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<DensityProfile> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for row in rdr.deserialize() {
            let row: CsvRow = row?;
            xs.push(row.position_m);
            ys.push(row.density);
        }
        Self::from_samples(&xs, ys)
    }
}

pub(crate) fn trapezoid(values: &[f64], step: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => {
            let inner: f64 = values[1..n - 1].iter().sum();
            step * (inner + 0.5 * (values[0] + values[n - 1]))
        }
    }
}
