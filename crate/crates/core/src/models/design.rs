//! Exact designs and design regions.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Region {
    /// `[-1, 1]^q`.
    Cube { factors: usize },
    /// Sampling times `[0, ∞)`; a single factor.
    TimeAxis,
}

impl Region {
    pub fn factors(&self) -> usize {
        match self {
            Region::Cube { factors } => *factors,
            Region::TimeAxis => 1,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        match self {
            Region::Cube { .. } => v.is_finite() && (-1.0..=1.0).contains(&v),
            Region::TimeAxis => v.is_finite() && v >= 0.0,
        }
    }

    /// Compact search interval for one coordinate; `time_upper` closes the
    /// time axis.
    pub fn search_bounds(&self, time_upper: f64) -> (f64, f64) {
        match self {
            Region::Cube { .. } => (-1.0, 1.0),
            Region::TimeAxis => (0.0, time_upper),
        }
    }
}

/// An exact design: `n` points stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    region: Region,
    coords: Vec<f64>,
}

impl Design {
    pub fn new(region: Region, points: &[Vec<f64>]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidDesign(
                "a design needs at least one run".into(),
            ));
        }
        let q = region.factors();
        let mut coords = Vec::with_capacity(points.len() * q);
        for (i, p) in points.iter().enumerate() {
            if p.len() != q {
                return Err(Error::Dimension {
                    expected: q,
                    got: p.len(),
                });
            }
            for &v in p {
                if !region.contains(v) {
                    return Err(Error::OutOfRegion {
                        index: i,
                        detail: format!("coordinate {v} outside region"),
                    });
                }
            }
            coords.extend_from_slice(p);
        }
        Ok(Self { region, coords })
    }

    /// Single-factor design from a list of values.
    pub fn from_values(region: Region, values: &[f64]) -> Result<Self> {
        let pts: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
        Self::new(region, &pts)
    }

    pub fn region(&self) -> Region {
        self.region
    }

    pub fn factors(&self) -> usize {
        self.region.factors()
    }

    pub fn n(&self) -> usize {
        self.coords.len() / self.factors()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let q = self.factors();
        &self.coords[i * q..(i + 1) * q]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks(self.factors())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.coords[i * self.factors() + j]
    }

    /// Sets one coordinate; the caller keeps it inside the region.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(self.region.contains(v));
        let q = self.factors();
        self.coords[i * q + j] = v;
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.points().map(|p| p.to_vec()).collect()
    }

    /// Rows reordered by `perm`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let rows: Vec<Vec<f64>> = perm.iter().map(|&i| self.point(i).to_vec()).collect();
        Self {
            region: self.region,
            coords: rows.concat(),
        }
    }

    /// CSV with header `run,x1,...,xq` and 6-decimal fixed point.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["run".to_string()];
        header.extend((1..=self.factors()).map(|j| format!("x{j}")));
        wr.write_record(&header)?;
        for (i, p) in self.points().enumerate() {
            let mut rec = vec![(i + 1).to_string()];
            rec.extend(p.iter().map(|v| format!("{:.6}", v)));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// Reads the `run,x1,...` layout; extra precision and fewer decimals are
    /// both accepted.
    pub fn read_csv<R: Read>(r: R, region: Region) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let headers = rd.headers()?.clone();
        let cols: Vec<usize> = (1..=region.factors())
            .map(|j| {
                let name = format!("x{j}");
                headers
                    .iter()
                    .position(|h| h.trim() == name)
                    .ok_or_else(|| Error::Parse(format!("design file lacks column `{name}`")))
            })
            .collect::<Result<_>>()?;
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let row = cols
                .iter()
                .map(|&c| {
                    let s = rec.get(c).unwrap_or("").trim();
                    s.parse::<f64>()
                        .map_err(|_| Error::Parse(format!("bad number `{s}` in design file")))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Self::new(region, &rows)
    }
}
