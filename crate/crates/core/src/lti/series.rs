use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Sample times (seconds) with named value columns of equal length.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TimeSeries {
    t: Vec<f64>,
    channels: Vec<(String, Vec<f64>)>,
}

pub const TIME_COLUMN: &str = "t_seconds";

impl TimeSeries {
    pub fn new(t: Vec<f64>) -> Result<Self> {
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::validation(
                "t",
                "sample times must increase strictly",
            ));
        }
        Ok(TimeSeries {
            t,
            channels: Vec::new(),
        })
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

    pub fn push_channel(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        if values.len() != self.t.len() {
            return Err(Error::DimensionMismatch(format!(
                "channel '{name}' has {} samples, time axis has {}",
                values.len(),
                self.t.len()
            )));
        }
        if name == TIME_COLUMN || self.channel(&name).is_some() {
            return Err(Error::validation(name, "duplicate channel name"));
        }
        self.channels.push((name, values));
        Ok(())
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.channels
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn channels(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.channels
            .iter()
            .map(|(n, v)| (n.as_str(), v.as_slice()))
    }

    pub fn channel_names(&self) -> Vec<&str> {
        self.channels.iter().map(|(n, _)| n.as_str()).collect()
    }

    /// CSV with a `t_seconds` column followed by the channels in insertion
    /// order. Values use the shortest round-trip decimal form.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec![TIME_COLUMN.to_string()];
        header.extend(self.channels.iter().map(|(n, _)| n.clone()));
        out.write_record(&header)?;
        let mut row = Vec::with_capacity(header.len());
        for i in 0..self.t.len() {
            row.clear();
            row.push(self.t[i].to_string());
            row.extend(self.channels.iter().map(|(_, v)| v[i].to_string()));
            out.write_record(&row)?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header: Vec<String> = rdr
            .headers()?
            .iter()
            .map(|s| s.trim().to_string())
            .collect();
        if header.first().map(String::as_str) != Some(TIME_COLUMN) {
            return Err(Error::validation(
                "header",
                format!("first column must be '{TIME_COLUMN}'"),
            ));
        }
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); header.len()];
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != header.len() {
                return Err(Error::validation(
                    format!("row {}", line + 2),
                    format!("expected {} fields, found {}", header.len(), rec.len()),
                ));
            }
            for (k, field) in rec.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::validation(
                        format!("row {}, column '{}'", line + 2, header[k]),
                        format!("'{field}' is not a number"),
                    )
                })?;
                cols[k].push(v);
            }
        }
        let mut cols = cols.into_iter();
        let mut ts = TimeSeries::new(cols.next().unwrap_or_default())?;
        for (name, values) in header.into_iter().skip(1).zip(cols) {
            ts.push_channel(name, values)?;
        }
        Ok(ts)
    }
}
