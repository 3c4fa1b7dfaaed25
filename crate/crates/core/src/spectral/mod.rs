//! Exact graph Laplacian of a tabular environment and its eigenfunctions.
//!
//! The adjacency is the unweighted, undirected skeleton graph: states `s`
//! and `s'` are joined when some action moves one into the other with the
//! overwrite noise switched off. Self-loops (bumping into a wall) are
//! dropped. The Laplacian is the combinatorial `L = Deg - W`.

pub mod eigensolver;

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use crate::env::Environment;
use crate::error::{Error, Result};

pub use eigensolver::symmetric_eigen;

/// Which Laplacian to form from the adjacency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LaplacianKind {
    /// `Deg - W`.
    #[default]
    Combinatorial,
    /// `I - Deg^{-1/2} W Deg^{-1/2}`.
    Normalized,
}

#[derive(Debug, Clone)]
pub struct GraphLaplacian {
    pub n: usize,
    /// Row-major `n × n`.
    pub matrix: Vec<f64>,
    /// Tabular id of each row.
    pub ids: Vec<usize>,
    pub adjacency_source: String,
}

impl GraphLaplacian {
    /// Laplacian from an undirected edge list over local indices `0..ids.len()`.
    /// Self-loops and duplicate edges are ignored.
    pub fn from_edges(
        ids: Vec<usize>,
        edges: impl IntoIterator<Item = (usize, usize)>,
        kind: LaplacianKind,
        source: &str,
    ) -> Result<Self> {
        let n = ids.len();
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::Internal(format!("edge ({a}, {b}) outside 0..{n}")));
            }
            if a != b {
                set.insert((a.min(b), a.max(b)));
            }
        }
        let mut adjacency = vec![0.0; n * n];
        for &(a, b) in &set {
            adjacency[a * n + b] = 1.0;
            adjacency[b * n + a] = 1.0;
        }
        if !connected(&adjacency, n) {
            return Err(Error::config(format!("graph '{source}' is not connected")));
        }
        let degree: Vec<f64> = (0..n).map(|i| adjacency[i * n..(i + 1) * n].iter().sum()).collect();
        let mut matrix = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                matrix[i * n + j] = match kind {
                    LaplacianKind::Combinatorial => {
                        if i == j {
                            degree[i]
                        } else {
                            -adjacency[i * n + j]
                        }
                    }
                    LaplacianKind::Normalized => {
                        if i == j {
                            if degree[i] > 0.0 {
                                1.0
                            } else {
                                0.0
                            }
                        } else if adjacency[i * n + j] != 0.0 {
                            -adjacency[i * n + j] / (degree[i] * degree[j]).sqrt()
                        } else {
                            0.0
                        }
                    }
                };
            }
        }
        Ok(GraphLaplacian { n, matrix, ids, adjacency_source: source.to_string() })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.n + j]
    }

    /// Row index of a tabular id.
    pub fn row_of(&self, id: usize) -> Option<usize> {
        self.ids.binary_search(&id).ok().or_else(|| self.ids.iter().position(|&x| x == id))
    }
}

fn connected(adjacency: &[f64], n: usize) -> bool {
    if n == 0 {
        return true;
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    let mut count = 1;
    while let Some(i) = queue.pop_front() {
        for j in 0..n {
            if adjacency[i * n + j] != 0.0 && !seen[j] {
                seen[j] = true;
                count += 1;
                queue.push_back(j);
            }
        }
    }
    count == n
}

/// Combinatorial Laplacian of the environment's deterministic skeleton.
pub fn build_laplacian(env: &Environment) -> Result<GraphLaplacian> {
    build_laplacian_with(env, LaplacianKind::Combinatorial)
}

pub fn build_laplacian_with(env: &Environment, kind: LaplacianKind) -> Result<GraphLaplacian> {
    let ids = env.reachable_ids();
    let mut edges = Vec::new();
    for (row, &id) in ids.iter().enumerate() {
        for a in 0..env.num_actions() {
            let next = env.skeleton_next(id, a);
            let col = ids
                .binary_search(&next)
                .map_err(|_| Error::Internal(format!("skeleton move from {id} leaves the reachable set")))?;
            edges.push((row, col));
        }
    }
    GraphLaplacian::from_edges(ids, edges, kind, "deterministic-skeleton")
}

/// The `d` smallest eigenpairs of a Laplacian.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// `eigenfunctions[i][row]`, unit norm.
    pub eigenfunctions: Vec<Vec<f64>>,
    /// Tabular id of each row.
    pub ids: Vec<usize>,
    lookup: Vec<Option<usize>>,
}

impl EigenSystem {
    pub fn d(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    /// `e_i(s)` for tabular id `s`, or `None` for states outside the graph.
    pub fn value(&self, i: usize, id: usize) -> Option<f64> {
        let row = (*self.lookup.get(id)?)?;
        Some(self.eigenfunctions[i][row])
    }

    pub fn contains(&self, id: usize) -> bool {
        matches!(self.lookup.get(id), Some(Some(_)))
    }
}

/// The `d` smallest eigenpairs, ascending, each signed so that its entry at
/// `anchor` (a tabular id, usually the start state) is non-negative. When
/// that entry vanishes the first clearly non-zero entry decides the sign.
pub fn eigendecompose(laplacian: &GraphLaplacian, d: usize, anchor: usize) -> Result<EigenSystem> {
    let n = laplacian.n;
    if d > n {
        return Err(Error::usage(format!("asked for {d} eigenpairs of a {n}-state graph")));
    }
    for i in 0..n {
        for j in 0..i {
            if (laplacian.get(i, j) - laplacian.get(j, i)).abs() > 1e-12 {
                return Err(Error::Internal(format!("Laplacian is not symmetric at ({i}, {j})")));
            }
        }
    }
    let (values, vectors) = symmetric_eigen(&laplacian.matrix, n);
    let anchor_row = laplacian.row_of(anchor);
    let mut eigenfunctions: Vec<Vec<f64>> = vectors.into_iter().take(d).collect();
    for v in &mut eigenfunctions {
        let decider = anchor_row
            .map(|r| v[r])
            .filter(|x| x.abs() > 1e-12)
            .or_else(|| v.iter().copied().find(|x| x.abs() > 1e-12))
            .unwrap_or(0.0);
        if decider < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
    let max_id = laplacian.ids.iter().copied().max().map_or(0, |m| m + 1);
    let mut lookup = vec![None; max_id];
    for (row, &id) in laplacian.ids.iter().enumerate() {
        lookup[id] = Some(row);
    }
    Ok(EigenSystem {
        eigenvalues: values.into_iter().take(d).collect(),
        eigenfunctions,
        ids: laplacian.ids.clone(),
        lookup,
    })
}

/// `e_i(s') - e_i(s)`. States outside the graph count as zero.
pub fn tabular_intrinsic_reward(eig: &EigenSystem, i: usize, s: usize, s_next: usize) -> f64 {
    eig.value(i, s_next).unwrap_or(0.0) - eig.value(i, s).unwrap_or(0.0)
}

/// Per-state table `tabular_id,x,y,e1..ed`. Coordinates are the grid column
/// and row; they are left empty for non-grid environments.
pub fn eigen_table_csv(eig: &EigenSystem, env: &Environment) -> String {
    let mut out = String::from("tabular_id,x,y");
    for i in 1..=eig.d() {
        let _ = write!(out, ",e{i}");
    }
    out.push('\n');
    for (row, &id) in eig.ids.iter().enumerate() {
        match env.coordinates(id) {
            Some((r, c)) => {
                let _ = write!(out, "{id},{c},{r}");
            }
            None => {
                let _ = write!(out, "{id},,");
            }
        }
        for f in &eig.eigenfunctions {
            let _ = write!(out, ",{}", f[row]);
        }
        out.push('\n');
    }
    out
}

pub fn export_eigen_table(eig: &EigenSystem, env: &Environment, path: &Path) -> Result<()> {
    std::fs::write(path, eigen_table_csv(eig, env))?;
    Ok(())
}
