use std::f64::consts::PI;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::wrap_phase;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub run: u64,
    #[serde(rename = "timestamp_s")]
    pub timestamp: f64,
    #[serde(rename = "phase_rad")]
    pub phase: f64,
    #[serde(default)]
    pub contrast: f64,
    #[serde(default = "yes")]
    pub converged: bool,
    #[serde(default)]
    pub rss: f64,
}

fn yes() -> bool {
    true
}

impl PhaseRecord {
    pub fn new(run: u64, timestamp: f64, phase: f64) -> Self {
        PhaseRecord {
            run,
            timestamp,
            phase,
            contrast: f64::NAN,
            converged: true,
            rss: f64::NAN,
        }
    }
}

/// Per-run phases, unwrapped, with strictly increasing run indices.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSeries {
    records: Vec<PhaseRecord>,
    /// Runs between consecutive samples (20 for a symmetric fringe scan).
    pub runs_per_sample: u32,
    /// Wall-clock time per run (s).
    pub duty_cycle: f64,
}

/// Removes `2 pi` jumps: each phase is moved to the branch nearest the
/// previous one. The first phase fixes the branch.
pub fn unwrap_phases(phases: &mut [f64]) {
    for i in 1..phases.len() {
        let d = phases[i] - phases[i - 1];
        phases[i] -= 2.0 * PI * (d / (2.0 * PI)).round();
    }
}

impl PhaseSeries {
    pub fn new(mut records: Vec<PhaseRecord>, runs_per_sample: u32, duty_cycle: f64) -> Result<Self> {
        if runs_per_sample == 0 {
            return Err(Error::InvalidParameter("runs per sample must be >= 1".into()));
        }
        if !(duty_cycle > 0.0 && duty_cycle.is_finite()) {
            return Err(Error::InvalidParameter("duty cycle must be > 0".into()));
        }
        if records.windows(2).any(|w| w[1].run <= w[0].run) {
            return Err(Error::InvalidParameter("run indices must be strictly increasing".into()));
        }
        if records.iter().any(|r| !r.phase.is_finite()) {
            return Err(Error::InvalidParameter("non-finite phase in series".into()));
        }
        let mut phases: Vec<f64> = records.iter().map(|r| r.phase).collect();
        unwrap_phases(&mut phases);
        for (r, p) in records.iter_mut().zip(phases) {
            r.phase = p;
        }
        Ok(PhaseSeries {
            records,
            runs_per_sample,
            duty_cycle,
        })
    }

    /// One phase per run, runs numbered from 0.
    pub fn from_phases(phases: &[f64], duty_cycle: f64) -> Result<Self> {
        let records = phases
            .iter()
            .enumerate()
            .map(|(i, &p)| PhaseRecord::new(i as u64, i as f64 * duty_cycle, p))
            .collect();
        Self::new(records, 1, duty_cycle)
    }

    pub fn records(&self) -> &[PhaseRecord] {
        &self.records
    }

    pub fn phases(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.phase).collect()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for r in &self.records {
            wtr.serialize(r)?;
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Reads a phase CSV. Requires `run` and `phase_rad`; `timestamp_s`
    /// defaults to `run * duty_cycle`.
    pub fn read_csv<R: Read>(r: R, runs_per_sample: u32, duty_cycle: f64) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            run: u64,
            phase_rad: f64,
            timestamp_s: Option<f64>,
        }
        let mut rdr = csv::Reader::from_reader(r);
        let mut records = Vec::new();
        for row in rdr.deserialize() {
            let row: Row = row?;
            let mut rec = PhaseRecord::new(row.run, row.timestamp_s.unwrap_or(row.run as f64 * duty_cycle), row.phase_rad);
            rec.contrast = f64::NAN;
            records.push(rec);
        }
        Self::new(records, runs_per_sample, duty_cycle)
    }
}

/// Removes a commanded laser phase ramp of `ramp` rad/run: subtracts
/// `ramp * run`, rewraps into `(-pi, pi]`, then unwraps.
pub fn subtract_laser_ramp(series: &PhaseSeries, ramp: f64) -> PhaseSeries {
    let records = series
        .records
        .iter()
        .map(|r| PhaseRecord {
            phase: wrap_phase(r.phase - ramp * r.run as f64),
            ..*r
        })
        .collect();
    PhaseSeries::new(records, series.runs_per_sample, series.duty_cycle)
        .expect("ramp subtraction preserves series invariants")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unwrap_removes_jumps() {
        let mut p = vec![3.0, -3.0, 3.1, -3.1];
        unwrap_phases(&mut p);
        for w in p.windows(2) {
            assert!((w[1] - w[0]).abs() < PI);
        }
        assert_eq!(p[0], 3.0);
    }

    #[test]
    fn rejects_non_increasing_runs() {
        let recs = vec![PhaseRecord::new(1, 0.0, 0.0), PhaseRecord::new(1, 1.0, 0.0)];
        assert!(PhaseSeries::new(recs, 1, 11.4).is_err());
    }

    #[test]
    fn zero_ramp_is_identity_up_to_branch() {
        let s = PhaseSeries::from_phases(&[0.1, 0.3, -0.2, 0.05], 11.4).unwrap();
        let t = subtract_laser_ramp(&s, 0.0);
        for (a, b) in s.phases().iter().zip(t.phases()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn full_turn_ramp_aliases_to_identity() {
        let s = PhaseSeries::from_phases(&[0.1, 0.3, -0.2, 0.05, 0.4], 11.4).unwrap();
        let t = subtract_laser_ramp(&s, 2.0 * PI);
        for (a, b) in s.phases().iter().zip(t.phases()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn removes_sixteen_degree_ramp() {
        let ramp = 16f64.to_radians();
        let raw: Vec<f64> = (0..200).map(|i| wrap_phase(0.7 + ramp * i as f64)).collect();
        let s = PhaseSeries::from_phases(&raw, 11.4).unwrap();
        let t = subtract_laser_ramp(&s, ramp);
        for p in t.phases() {
            assert!((p - 0.7).abs() < 1e-9);
        }
    }
}
