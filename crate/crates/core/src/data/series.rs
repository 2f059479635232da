use nalgebra::DVector;

use crate::error::{Error, Result};

/// Multivariate time series with a missing-value mask (`NaN`) and optional
/// binary anomaly labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSeries {
    /// Value column names.
    pub names: Vec<String>,
    /// Timestamps as they appeared in the source, kept for lossless output.
    pub raw_timestamps: Vec<String>,
    pub times: Vec<f64>,
    /// One length-D observation per time step.
    pub values: Vec<DVector<f64>>,
    pub labels: Option<Vec<bool>>,
}

/// Which quantity drives the elapsed time between observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeAxis {
    /// Parsed timestamps (numbers as-is, dates as seconds since the epoch).
    #[default]
    Timestamp,
    /// Row index `0, 1, 2, …`.
    Index,
}

impl std::str::FromStr for TimeAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "timestamp" => Ok(TimeAxis::Timestamp),
            "index" => Ok(TimeAxis::Index),
            other => Err(Error::Config(format!(
                "unknown time axis `{other}` (expected `timestamp` or `index`)"
            ))),
        }
    }
}

pub fn default_names(dims: usize) -> Vec<String> {
    (0..dims).map(|i| format!("dim_{i}")).collect()
}

impl LabeledSeries {
    /// Build from numeric timestamps; names default to `dim_i`.
    pub fn new(times: Vec<f64>, values: Vec<DVector<f64>>, labels: Option<Vec<bool>>) -> Result<Self> {
        let dims = values.first().map_or(0, |v| v.len());
        let raw = times.iter().map(|t| format!("{t}")).collect();
        let s = Self {
            names: default_names(dims),
            raw_timestamps: raw,
            times,
            values,
            labels,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.names.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.times.len();
        if self.values.len() != n || self.raw_timestamps.len() != n {
            return Err(Error::Shape(format!(
                "{n} timestamps, {} raw timestamps, {} observations",
                self.raw_timestamps.len(),
                self.values.len()
            )));
        }
        if let Some(l) = &self.labels {
            if l.len() != n {
                return Err(Error::Shape(format!("{} labels for {n} observations", l.len())));
            }
        }
        if let Some(i) = self.values.iter().position(|v| v.len() != self.names.len()) {
            return Err(Error::Shape(format!(
                "observation {i} has {} values, expected {}",
                self.values[i].len(),
                self.names.len()
            )));
        }
        for i in 0..n {
            crate::kalman::check_time(i.checked_sub(1).map(|j| self.times[j]), self.times[i], i)?;
        }
        Ok(())
    }

    /// Replace the time axis by the row index.
    pub fn with_time_axis(mut self, axis: TimeAxis) -> Self {
        if axis == TimeAxis::Index {
            self.times = (0..self.len()).map(|i| i as f64).collect();
        }
        self
    }

    /// Split into `[0, at)` and `[at, T)`.
    pub fn split_at(&self, at: usize) -> (Self, Self) {
        let at = at.min(self.len());
        let part = |r: std::ops::Range<usize>| Self {
            names: self.names.clone(),
            raw_timestamps: self.raw_timestamps[r.clone()].to_vec(),
            times: self.times[r.clone()].to_vec(),
            values: self.values[r.clone()].to_vec(),
            labels: self.labels.as_ref().map(|l| l[r].to_vec()),
        };
        (part(0..at), part(at..self.len()))
    }

    /// Values of dimension `i` over time.
    pub fn column(&self, i: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[i]).collect()
    }
}
