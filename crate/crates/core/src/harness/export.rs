//! Grid-aligned CSV exports: one row per map row, one field per map column.
//! Walls and cells without a value are empty fields.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::spectral::{build_laplacian, eigendecompose};

pub fn grid_csv(env: &Environment, value: impl Fn(usize) -> Option<f64>) -> Result<String> {
    let grid =
        env.as_grid().ok_or_else(|| Error::Unsupported(format!("{} has no grid layout to export", env.name())))?;
    let map = grid.map();
    let mut s = String::new();
    for r in 0..map.height {
        let row: Vec<String> = (0..map.width)
            .map(|c| grid.id_of((r, c)).and_then(&value).map_or(String::new(), |v| v.to_string()))
            .collect();
        s += &row.join(",");
        s.push('\n');
    }
    Ok(s)
}

/// Write `values[k]` at the cell of tabular id `ids[k]`.
pub fn export_heatmap(env: &Environment, ids: &[usize], values: &[f64], path: &Path) -> Result<()> {
    if ids.len() != values.len() {
        return Err(Error::usage(format!("{} ids but {} values", ids.len(), values.len())));
    }
    let by_id: BTreeMap<usize, f64> = ids.iter().copied().zip(values.iter().copied()).collect();
    fs::write(path, grid_csv(env, |id| by_id.get(&id).copied())?)?;
    Ok(())
}

/// Write visit counts, indexed by tabular id.
pub fn export_visitation(counts: &[u64], env: &Environment, path: &Path) -> Result<()> {
    fs::write(path, grid_csv(env, |id| counts.get(id).map(|&n| n as f64))?)?;
    Ok(())
}

/// Oracle eigenfunction `index` (0-based, ascending eigenvalue) over the
/// reachable ids, signed non-negative at the start state.
pub fn oracle_values(env: &Environment, index: usize) -> Result<(Vec<usize>, Vec<f64>)> {
    let lap = build_laplacian(env)?;
    let eig = eigendecompose(&lap, index + 1, env.start_id())?;
    Ok((eig.ids.clone(), eig.eigenfunctions[index].clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::make_env;

    #[test]
    fn cube_export_is_unsupported() {
        let env = make_env("rubiks2x2").unwrap();
        assert!(matches!(grid_csv(&env, |_| Some(0.0)), Err(Error::Unsupported(_))));
    }

    #[test]
    fn csv_shape_matches_map() {
        let env = make_env("maze").unwrap();
        let text = grid_csv(&env, |id| Some(id as f64)).unwrap();
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows.len(), 13);
        assert!(rows.iter().all(|r| r.split(',').count() == 12));
        assert_eq!(rows[0], ",,,,,,,,,,,");
    }
}
