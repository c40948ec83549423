//! Time grids and named value channels.

use std::io;

use crate::error::{Error, Result};

/// A time grid paired with one or more named value channels of equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    t: Vec<f64>,
    channels: Vec<(String, Vec<f64>)>,
}

impl TimeSeries {
    pub fn new(t: Vec<f64>) -> Self {
        TimeSeries {
            t,
            channels: Vec::new(),
        }
    }

    /// Appends a channel; its length must match the time grid.
    pub fn push_channel(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        if values.len() != self.t.len() {
            return Err(Error::InvalidInput(format!(
                "channel '{name}' has {} values for {} grid points",
                values.len(),
                self.t.len()
            )));
        }
        if self.channel(&name).is_some() {
            return Err(Error::InvalidInput(format!("duplicate channel '{name}'")));
        }
        self.channels.push((name, values));
        Ok(())
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.channels
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn channel_at(&self, idx: usize) -> (&str, &[f64]) {
        let (name, values) = &self.channels[idx];
        (name, values)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.channels.iter().map(|(n, _)| n.as_str())
    }

    /// Moves every channel of `other` into `self`. The grids must be
    /// bit-identical: merged outputs are only meaningful on a shared grid.
    pub fn merge(&mut self, other: TimeSeries) -> Result<()> {
        if self.t != other.t {
            return Err(Error::InvalidInput(
                "cannot merge time series with different grids".into(),
            ));
        }
        for (name, values) in other.channels {
            self.push_channel(name, values)?;
        }
        Ok(())
    }

    /// Writes `t,<name>,...` as CSV with 13 significant digits per value.
    pub fn write_csv<W: io::Write>(&self, w: &mut W) -> io::Result<()> {
        write!(w, "t")?;
        for name in self.names() {
            write!(w, ",{name}")?;
        }
        writeln!(w)?;
        for i in 0..self.t.len() {
            write!(w, "{}", csv_value(self.t[i]))?;
            for (_, values) in &self.channels {
                write!(w, ",{}", csv_value(values[i]))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }
}

/// Formats a value in scientific notation with 13 significant digits.
pub fn csv_value(v: f64) -> String {
    format!("{v:.12e}")
}

/// Uniform grid of `points` times over `[0, t_end]`.
pub fn time_grid(t_end: f64, points: usize) -> Result<Vec<f64>> {
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "horizon must be positive and finite, got {t_end}"
        )));
    }
    if points < 2 {
        return Err(Error::InvalidParameter(format!(
            "grid needs at least 2 points, got {points}"
        )));
    }
    let n = points - 1;
    Ok((0..points)
        .map(|k| t_end * (k as f64) / (n as f64))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints_exact() {
        let g = time_grid(10.0, 501).unwrap();
        assert_eq!(g.len(), 501);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[500], 10.0);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(time_grid(0.0, 10).is_err());
        assert!(time_grid(-1.0, 10).is_err());
        assert!(time_grid(1.0, 1).is_err());
        assert!(time_grid(f64::NAN, 10).is_err());
    }

    #[test]
    fn csv_has_header_and_digits() {
        let mut ts = TimeSeries::new(vec![0.0, 0.5, 1.0]);
        ts.push_channel("y", vec![1.0, 0.25, 1.0 / 3.0]).unwrap();
        let csv = ts.to_csv_string();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,y");
        let row = lines.nth(2).unwrap();
        assert!(row.contains("3.333333333333e-1"), "row was {row}");
    }

    #[test]
    fn merge_requires_identical_grid() {
        let mut a = TimeSeries::new(vec![0.0, 1.0]);
        a.push_channel("y", vec![0.0, 1.0]).unwrap();
        let mut b = TimeSeries::new(vec![0.0, 1.0]);
        b.push_channel("z1", vec![0.0, 2.0]).unwrap();
        a.merge(b).unwrap();
        assert_eq!(a.n_channels(), 2);

        let c = TimeSeries::new(vec![0.0, 2.0]);
        assert!(a.merge(c.clone()).is_err() || c.n_channels() == 0);
    }

    #[test]
    fn channel_length_mismatch_rejected() {
        let mut ts = TimeSeries::new(vec![0.0, 1.0]);
        assert!(ts.push_channel("y", vec![1.0]).is_err());
        assert!(ts.push_channel("y", vec![1.0, 2.0]).is_ok());
        assert!(ts.push_channel("y", vec![1.0, 2.0]).is_err());
    }
}
