//! Time series of per-timestep values, with CSV import and export.
//!
//! Series carry a native resolution: sources sampled coarser than the
//! simulation timestep (e.g. 5-minute solar readings on a 1-minute grid)
//! hold each value constant for `native_resolution` timesteps. Lookups past
//! the end of a series are an error, never zero.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace exhausted: timestep {timestep} outside [{start}, {end})")]
    TraceExhausted { timestep: u64, start: u64, end: u64 },
    #[error("trace value at row {row} is negative or not finite")]
    InvalidValue { row: usize },
    #[error("trace rows must advance by a constant positive stride (row {row})")]
    IrregularStride { row: usize },
    #[error("trace is empty")]
    Empty,
    #[error("no trace registered for {key}")]
    UnknownSeries { key: String },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// A non-negative per-timestep series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSeries {
    pub start_timestep: u64,
    pub values: Vec<f64>,
    /// Timesteps covered by each stored value (hold-constant upsampling).
    pub native_resolution: u32,
}

impl TraceSeries {
    pub fn new(start_timestep: u64, values: Vec<f64>, native_resolution: u32) -> Self {
        assert!(native_resolution >= 1, "native_resolution must be >= 1");
        debug_assert!(values.iter().all(|v| *v >= 0.0));
        TraceSeries {
            start_timestep,
            values,
            native_resolution,
        }
    }

    /// Constant series covering `[start, start + len)`.
    pub fn constant(start_timestep: u64, value: f64, len: usize) -> Self {
        TraceSeries::new(start_timestep, vec![value; len], 1)
    }

    /// First timestep past the end of the series.
    pub fn end_timestep(&self) -> u64 {
        self.start_timestep + self.values.len() as u64 * self.native_resolution as u64
    }

    pub fn value_at(&self, timestep: u64) -> Result<f64, TraceError> {
        if timestep < self.start_timestep || timestep >= self.end_timestep() {
            return Err(TraceError::TraceExhausted {
                timestep,
                start: self.start_timestep,
                end: self.end_timestep(),
            });
        }
        let idx = ((timestep - self.start_timestep) / self.native_resolution as u64) as usize;
        Ok(self.values[idx])
    }

    /// Values for `[t0, t0 + horizon)`, failing if the window is not covered.
    pub fn window(&self, t0: u64, horizon: u32) -> Result<Vec<f64>, TraceError> {
        let mut out = Vec::with_capacity(horizon as usize);
        for t in t0..t0 + horizon as u64 {
            out.push(self.value_at(t)?);
        }
        Ok(out)
    }

    /// Reads a `timestep,value` CSV. The native resolution is inferred from
    /// the (constant) stride between consecutive rows.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, TraceError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let mut timesteps: Vec<u64> = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        for (row, record) in rdr.deserialize::<(u64, f64)>().enumerate() {
            let (t, v) = record?;
            if !v.is_finite() || v < 0.0 {
                return Err(TraceError::InvalidValue { row });
            }
            timesteps.push(t);
            values.push(v);
        }
        if values.is_empty() {
            return Err(TraceError::Empty);
        }
        let stride = if timesteps.len() >= 2 {
            timesteps[1].saturating_sub(timesteps[0])
        } else {
            1
        };
        if stride == 0 {
            return Err(TraceError::IrregularStride { row: 1 });
        }
        for (row, pair) in timesteps.windows(2).enumerate() {
            if pair[1].saturating_sub(pair[0]) != stride {
                return Err(TraceError::IrregularStride { row: row + 1 });
            }
        }
        Ok(TraceSeries::new(timesteps[0], values, stride as u32))
    }

    pub fn read_csv_file(path: &Path) -> Result<Self, TraceError> {
        Self::read_csv(BufReader::new(File::open(path)?))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), TraceError> {
        let mut w = BufWriter::new(writer);
        writeln!(w, "timestep,value")?;
        for (i, v) in self.values.iter().enumerate() {
            let t = self.start_timestep + i as u64 * self.native_resolution as u64;
            writeln!(w, "{t},{v}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<(), TraceError> {
        self.write_csv(File::create(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hold_constant_upsampling() {
        let series = TraceSeries::new(10, vec![1.0, 2.0], 5);
        assert_eq!(series.value_at(10).unwrap(), 1.0);
        assert_eq!(series.value_at(14).unwrap(), 1.0);
        assert_eq!(series.value_at(15).unwrap(), 2.0);
        assert_eq!(series.end_timestep(), 20);
    }

    #[test]
    fn lookup_outside_series_is_an_error() {
        let series = TraceSeries::new(5, vec![1.0], 1);
        assert!(matches!(
            series.value_at(6),
            Err(TraceError::TraceExhausted { .. })
        ));
        assert!(matches!(
            series.value_at(4),
            Err(TraceError::TraceExhausted { .. })
        ));
        assert!(matches!(
            series.window(5, 2),
            Err(TraceError::TraceExhausted { .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let series = TraceSeries::new(0, vec![0.0, 800.0, 12.5], 5);
        let mut bytes = Vec::new();
        series.write_csv(&mut bytes).unwrap();
        let back = TraceSeries::read_csv(bytes.as_slice()).unwrap();
        assert_eq!(series, back);
    }

    #[test]
    fn csv_rejects_negative_values() {
        let data = "timestep,value\n0,1.0\n1,-2.0\n";
        assert!(matches!(
            TraceSeries::read_csv(data.as_bytes()),
            Err(TraceError::InvalidValue { row: 1 })
        ));
    }

    #[test]
    fn csv_rejects_irregular_stride() {
        let data = "timestep,value\n0,1.0\n5,2.0\n7,3.0\n";
        assert!(matches!(
            TraceSeries::read_csv(data.as_bytes()),
            Err(TraceError::IrregularStride { .. })
        ));
    }
}
