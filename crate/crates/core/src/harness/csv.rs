//! Curve CSVs: `step,value` per seed and `step,mean,std` aggregates.
//!
//! Values are written with Rust's shortest round-trip float formatting, so
//! identical runs give identical bytes and files parse back exactly.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::Curve;

pub fn curve_text(curve: &Curve) -> String {
    let mut s = String::from("step,value\n");
    for (step, v) in curve {
        s += &format!("{step},{v}\n");
    }
    s
}

pub fn write_curve(path: &Path, curve: &Curve) -> Result<()> {
    fs::write(path, curve_text(curve))?;
    Ok(())
}

/// Parse `step,value` text.
pub fn parse_curve(text: &str) -> Result<Curve> {
    let mut lines = text.lines();
    if lines.next() != Some("step,value") {
        return Err(Error::config("curve csv must start with 'step,value'"));
    }
    lines
        .map(|l| {
            let (a, b) = l.split_once(',').ok_or_else(|| Error::config(format!("bad csv row '{l}'")))?;
            let step = a.parse().map_err(|_| Error::config(format!("bad step '{a}'")))?;
            let v = b.parse().map_err(|_| Error::config(format!("bad value '{b}'")))?;
            Ok((step, v))
        })
        .collect()
}

/// One aggregate row.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub step: u64,
    pub mean: f64,
    /// Sample standard deviation; 0 with a single seed.
    pub std: f64,
    pub count: usize,
}

/// Per step, mean and std over the curves that have a point at that step.
pub fn aggregate(curves: &[&Curve]) -> Vec<Aggregate> {
    let mut by_step: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for c in curves {
        for &(step, v) in c.iter() {
            by_step.entry(step).or_default().push(v);
        }
    }
    by_step
        .into_iter()
        .map(|(step, xs)| {
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let std = if xs.len() > 1 {
                (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            Aggregate { step, mean, std, count: xs.len() }
        })
        .collect()
}

pub fn write_aggregate(path: &Path, rows: &[Aggregate]) -> Result<()> {
    let mut s = String::from("step,mean,std\n");
    for r in rows {
        s += &format!("{},{},{}\n", r.step, r.mean, r.std);
    }
    fs::write(path, s)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_round_trip_is_exact() {
        let c: Curve = vec![(0, 0.1), (1000, 1.0 / 3.0), (2000, 7.0)];
        assert_eq!(parse_curve(&curve_text(&c)).unwrap(), c);
    }

    #[test]
    fn aggregate_handles_ragged_curves() {
        let a: Curve = vec![(0, 1.0), (10, 3.0)];
        let b: Curve = vec![(0, 3.0)];
        let rows = aggregate(&[&a, &b]);
        assert_eq!(rows[0], Aggregate { step: 0, mean: 2.0, std: 2f64.sqrt(), count: 2 });
        assert_eq!(rows[1], Aggregate { step: 10, mean: 3.0, std: 0.0, count: 1 });
    }
}
