use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Result};

/// Uniformly sampled states, inputs and (optionally) state derivatives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// N×J states.
    pub x: DMatrix<f64>,
    /// N×S inputs.
    pub u: DMatrix<f64>,
    pub xdot: Option<DMatrix<f64>>,
    pub dt: f64,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, x: DMatrix<f64>, u: DMatrix<f64>, xdot: Option<DMatrix<f64>>) -> Result<Self> {
        let n = times.len();
        if x.nrows() != n || u.nrows() != n {
            return Err(shape(format!("{n} times but {} state rows and {} input rows", x.nrows(), u.nrows())));
        }
        if let Some(d) = &xdot {
            if d.shape() != x.shape() {
                return Err(shape("derivative matrix must match the state matrix"));
            }
        }
        let dt = if n >= 2 { times[1] - times[0] } else { 0.0 };
        if n >= 2 {
            if !(dt > 0.0) {
                return Err(invalid("times must be strictly increasing"));
            }
            for w in times.windows(2) {
                if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt {
                    return Err(invalid("times must be uniformly spaced"));
                }
            }
        }
        Ok(Self { times, x, u, xdot, dt })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.u.ncols()
    }

    /// The first `n` samples.
    pub fn head(&self, n: usize) -> Trajectory {
        let n = n.min(self.len());
        Trajectory {
            times: self.times[..n].to_vec(),
            x: self.x.rows(0, n).into_owned(),
            u: self.u.rows(0, n).into_owned(),
            xdot: self.xdot.as_ref().map(|d| d.rows(0, n).into_owned()),
            dt: self.dt,
        }
    }

    /// Writes `t, x_1.., u_1.., xdot_1..` (derivative columns only when present).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let j = self.state_dim();
        let s = self.input_dim();
        let mut header = vec!["t".to_string()];
        header.extend((1..=j).map(|i| format!("x_{i}")));
        header.extend((1..=s).map(|i| format!("u_{i}")));
        if self.xdot.is_some() {
            header.extend((1..=j).map(|i| format!("xdot_{i}")));
        }
        wr.write_record(&header)?;
        for r in 0..self.len() {
            let mut row = vec![self.times[r].to_string()];
            row.extend((0..j).map(|c| self.x[(r, c)].to_string()));
            row.extend((0..s).map(|c| self.u[(r, c)].to_string()));
            if let Some(d) = &self.xdot {
                row.extend((0..j).map(|c| d[(r, c)].to_string()));
            }
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let headers = rd.headers()?.clone();
        let kind = |h: &str| -> Result<(u8, usize)> {
            if h == "t" {
                return Ok((0, 0));
            }
            for (p, k) in [("xdot_", 3u8), ("x_", 1), ("u_", 2)] {
                if let Some(rest) = h.strip_prefix(p) {
                    let i: usize = rest.parse().map_err(|_| invalid(format!("bad column name {h}")))?;
                    return Ok((k, i));
                }
            }
            Err(invalid(format!("unknown column {h}")))
        };
        let kinds: Vec<(u8, usize)> = headers.iter().map(kind).collect::<Result<_>>()?;
        if kinds.first() != Some(&(0, 0)) {
            return Err(invalid("first column must be t"));
        }
        let count = |k: u8| kinds.iter().filter(|c| c.0 == k).count();
        let (j, s, jd) = (count(1), count(2), count(3));
        if jd != 0 && jd != j {
            return Err(invalid("derivative columns must match state columns"));
        }
        let mut times = Vec::new();
        let (mut xs, mut us, mut ds) = (Vec::new(), Vec::new(), Vec::new());
        for rec in rd.records() {
            let rec = rec?;
            for (v, &(k, i)) in rec.iter().zip(&kinds) {
                let v: f64 = v.trim().parse().map_err(|_| invalid(format!("non-numeric cell {v:?}")))?;
                match k {
                    0 => times.push(v),
                    1 => xs.push((i, v)),
                    2 => us.push((i, v)),
                    _ => ds.push((i, v)),
                }
            }
        }
        let n = times.len();
        let build = |vals: &[(usize, f64)], cols: usize| -> Result<DMatrix<f64>> {
            let mut m = DMatrix::zeros(n, cols);
            for (idx, &(i, v)) in vals.iter().enumerate() {
                if i == 0 || i > cols {
                    return Err(invalid(format!("column index {i} out of range")));
                }
                m[(idx / cols, i - 1)] = v;
            }
            Ok(m)
        };
        let x = build(&xs, j)?;
        let u = build(&us, s)?;
        let xdot = if jd > 0 { Some(build(&ds, jd)?) } else { None };
        Trajectory::new(times, x, u, xdot)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip() {
        let times: Vec<f64> = (0..5).map(|i| i as f64 * 0.1).collect();
        let x = DMatrix::from_fn(5, 2, |i, j| (i * 10 + j) as f64 / 3.0);
        let u = DMatrix::from_fn(5, 1, |i, _| -(i as f64));
        let d = DMatrix::from_fn(5, 2, |i, j| (i + j) as f64 * 1e-7);
        let t = Trajectory::new(times, x, u, Some(d)).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = Trajectory::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, t);
        let head = String::from_utf8(buf).unwrap();
        assert!(head.starts_with("t,x_1,x_2,u_1,xdot_1,xdot_2\n"));
    }

    #[test]
    fn rejects_bad_grids() {
        let x = DMatrix::zeros(3, 1);
        let u = DMatrix::zeros(3, 0);
        assert!(Trajectory::new(vec![0.0, 0.1, 0.3], x.clone(), u.clone(), None).is_err());
        assert!(Trajectory::new(vec![0.0, 0.1], x, u, None).is_err());
    }
}
