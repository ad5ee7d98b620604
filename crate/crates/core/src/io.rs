//! Output formatting shared by every CSV and JSON writer, and the
//! trajectory file format.

use std::io::{Read, Write};

use crate::dynamics::ParticleState;
use crate::error::{Error, Result};

/// Seventeen significant digits; round-trips every `f64` exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub const TRAJECTORY_CSV_HEADER: [&str; 5] = ["t", "i", "x_i", "m_i", "cluster_id"];

/// One row per particle per snapshot; indices and cluster ids are zero-based.
pub fn write_trajectory_csv<W: Write>(states: &[ParticleState], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(TRAJECTORY_CSV_HEADER)?;
    for s in states {
        let ids = s.cluster_ids();
        for i in 0..s.n() {
            wtr.write_record([
                fmt_f64(s.t()),
                i.to_string(),
                fmt_f64(s.x()[i]),
                fmt_f64(s.m()[i]),
                ids[i].to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Reads snapshots written by [`write_trajectory_csv`]. Rows of one
/// snapshot must be contiguous and ordered by particle index.
pub fn read_trajectory_csv<R: Read>(r: R) -> Result<Vec<ParticleState>> {
    let mut rdr = csv::Reader::from_reader(r);
    if rdr.headers()?.iter().collect::<Vec<_>>() != TRAJECTORY_CSV_HEADER {
        return Err(Error::Parse(format!("trajectory header must be {}", TRAJECTORY_CSV_HEADER.join(","))));
    }
    let num = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("bad number {s:?}: {e}")));
    let int = |s: &str| s.trim().parse::<usize>().map_err(|e| Error::Parse(format!("bad index {s:?}: {e}")));
    let mut out = Vec::new();
    let mut cur: Option<(f64, Vec<f64>, Vec<f64>, Vec<usize>)> = None;
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 5 {
            return Err(Error::Parse(format!("row {}: expected 5 fields", row + 2)));
        }
        let (t, i, x, m, c) = (num(&rec[0])?, int(&rec[1])?, num(&rec[2])?, num(&rec[3])?, int(&rec[4])?);
        if i == 0 {
            if let Some((t, x, m, ids)) = cur.take() {
                out.push(ParticleState::from_snapshot(t, x, m, &ids)?);
            }
            cur = Some((t, Vec::new(), Vec::new(), Vec::new()));
        }
        let Some((t0, xs, ms, ids)) = cur.as_mut() else {
            return Err(Error::Parse(format!("row {}: snapshot does not start at particle 0", row + 2)));
        };
        if *t0 != t || xs.len() != i {
            return Err(Error::Parse(format!("row {}: particle rows out of order", row + 2)));
        }
        xs.push(x);
        ms.push(m);
        ids.push(c);
    }
    if let Some((t, x, m, ids)) = cur {
        out.push(ParticleState::from_snapshot(t, x, m, &ids)?);
    }
    if out.is_empty() {
        return Err(Error::Parse("trajectory file has no rows".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 6.02e23, 0.0] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn trajectory_round_trip() {
        let a = ParticleState::new(vec![-0.3, 0.1, 0.7], vec![0.5, 1.7, 0.8]).unwrap();
        let b = ParticleState::from_snapshot(1.5, vec![0.2, 0.2, 0.9], vec![0.4, 1.9, 0.7], &[0, 0, 1]).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&[a.clone(), b.clone()], &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,i,x_i,m_i,cluster_id\n"));
        let back = read_trajectory_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        for (s, r) in [a, b].iter().zip(&back) {
            assert_eq!((s.t(), s.x(), s.m(), s.cluster_ids()), (r.t(), r.x(), r.m(), r.cluster_ids()));
        }
        assert!(read_trajectory_csv("t,i\n".as_bytes()).is_err());
    }
}
