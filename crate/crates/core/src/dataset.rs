//! CSV files: measured datasets and convergence histories.
//!
//! A dataset has one row per sample `k` and the columns `k`, `u0_1..`,
//! `y0_1..`, optionally followed by every node output `y_1..` (the hidden ones
//! included) for oracle checks.

use std::io::{Read, Write};

use crate::admm::IterationRecord;
use crate::error::{NetidError, Result};
use crate::simulate::SimulationOutput;

/// Measured signals, each stored signal-major (`N` samples per channel).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n_samples: usize,
    pub u0: Vec<f64>,
    pub y0: Vec<f64>,
    /// All node outputs, when recorded.
    pub y: Option<Vec<f64>>,
}

impl Dataset {
    pub fn from_simulation(out: &SimulationOutput, emit_hidden: bool) -> Self {
        Self {
            n_samples: out.n_samples,
            u0: out.u0.clone(),
            y0: out.y0.clone(),
            y: emit_hidden.then(|| out.y.clone()),
        }
    }

    pub fn input_count(&self) -> usize {
        self.u0.len() / self.n_samples.max(1)
    }

    pub fn measured_count(&self) -> usize {
        self.y0.len() / self.n_samples.max(1)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let n = self.n_samples;
        let groups: Vec<(&str, &[f64])> = [("u0", Some(&self.u0)), ("y0", Some(&self.y0)), ("y", self.y.as_ref())]
            .into_iter()
            .filter_map(|(name, v)| Some((name, v?.as_slice())))
            .collect();
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["k".to_string()];
        for (name, v) in &groups {
            header.extend((1..=v.len() / n.max(1)).map(|c| format!("{name}_{c}")));
        }
        out.write_record(&header)?;
        for k in 0..n {
            let mut row = vec![k.to_string()];
            for (_, v) in &groups {
                row.extend((0..v.len() / n).map(|c| format!("{:e}", v[c * n + k])));
            }
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        let mut columns: [Vec<(usize, usize)>; 3] = Default::default();
        for (pos, name) in header.iter().enumerate() {
            if name == "k" {
                continue;
            }
            let (prefix, index) = name
                .rsplit_once('_')
                .and_then(|(p, i)| Some((p, i.parse::<usize>().ok()?)))
                .ok_or_else(|| NetidError::Config(format!("unexpected dataset column {name:?}")))?;
            let group = match prefix {
                "u0" => 0,
                "y0" => 1,
                "y" => 2,
                _ => return Err(NetidError::Config(format!("unexpected dataset column {name:?}"))),
            };
            columns[group].push((index, pos));
        }
        for (group, cols) in columns.iter_mut().enumerate() {
            cols.sort_unstable();
            if cols.iter().enumerate().any(|(c, &(index, _))| index != c + 1) {
                let name = ["u0", "y0", "y"][group];
                return Err(NetidError::Config(format!("{name}_* columns must be numbered 1, 2, ...")));
            }
        }
        let rows: Vec<Vec<f64>> = rdr
            .records()
            .map(|rec| {
                let rec = rec?;
                rec.iter()
                    .map(|s| s.trim().parse::<f64>().map_err(|e| NetidError::Config(format!("bad value {s:?}: {e}"))))
                    .collect()
            })
            .collect::<Result<_>>()?;
        let n = rows.len();
        let gather = |cols: &[(usize, usize)]| -> Vec<f64> {
            cols.iter().flat_map(|&(_, pos)| rows.iter().map(move |r| r[pos])).collect()
        };
        Ok(Self {
            n_samples: n,
            u0: gather(&columns[0]),
            y0: gather(&columns[1]),
            y: (!columns[2].is_empty()).then(|| gather(&columns[2])),
        })
    }
}

/// Writes the convergence history with columns `iter, r_p, r_d, eps_p, eps_d, rho`.
pub fn write_history<W: Write>(history: &[IterationRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for rec in history {
        out.serialize(rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_history<R: Read>(r: R) -> Result<Vec<IterationRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_round_trip() {
        let ds = Dataset {
            n_samples: 3,
            u0: vec![1.0, -1.0, 1.0],
            y0: vec![0.5, 0.25, -0.125, 2.0, 3.0, 4.0],
            y: Some(vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]),
        };
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("k,u0_1,y0_1,y0_2,y_1,y_2,y_3\n"));
        assert_eq!(Dataset::read_csv(buf.as_slice()).unwrap(), ds);
    }

    #[test]
    fn history_columns() {
        let h = vec![IterationRecord { iter: 1, r_p: 0.5, r_d: 0.25, eps_p: 0.1, eps_d: 0.2, rho: 1.0 }];
        let mut buf = Vec::new();
        write_history(&h, &mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("iter,r_p,r_d,eps_p,eps_d,rho\n"));
        assert_eq!(read_history(buf.as_slice()).unwrap(), h);
    }

    #[test]
    fn unknown_columns_are_rejected() {
        assert!(Dataset::read_csv("k,w_1\n0,1\n".as_bytes()).is_err());
        assert!(Dataset::read_csv("k,u0_2\n0,1\n".as_bytes()).is_err());
    }
}
