//! Interference graphs: named topologies, maximal-clique extraction and the
//! spectral quantities (Perron root, spectral norm) that feed the margin.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest dimension solved with a dense eigensolver; power iteration above.
pub const DENSE_EIGEN_MAX_N: usize = 16;

const POWER_MAX_ITER: usize = 100_000;
const POWER_TOL: f64 = 1e-13;

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("unknown topology `{0}` (expected pair2, line4 or ring8)")]
    UnknownName(String),
    #[error("coupling weight must be positive and finite, got {0}")]
    BadWeight(f64),
    #[error("matrix is not square: row {row} has {len} entries, expected {n}")]
    NotSquare { row: usize, len: usize, n: usize },
    #[error("matrix is empty")]
    Empty,
    #[error("invalid entry w[{i}][{j}] = {value}: weights must be finite and non-negative")]
    BadEntry { i: usize, j: usize, value: f64 },
    #[error("diagonal entry w[{i}][{i}] = {value} must be zero")]
    NonZeroDiagonal { i: usize, value: f64 },
    #[error("cannot parse `{token}` on line {line}")]
    Parse { line: usize, token: String },
    #[error(
        "power iteration did not converge after {iterations} iterations \
         (last estimate {estimate}, last change {change:e})"
    )]
    NoConvergence {
        iterations: usize,
        estimate: f64,
        change: f64,
    },
}

/// The three symmetric study topologies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyName {
    Pair2,
    Line4,
    Ring8,
}

impl TopologyName {
    pub const ALL: [TopologyName; 3] = [TopologyName::Pair2, TopologyName::Line4, TopologyName::Ring8];

    pub fn as_str(self) -> &'static str {
        match self {
            TopologyName::Pair2 => "pair2",
            TopologyName::Line4 => "line4",
            TopologyName::Ring8 => "ring8",
        }
    }

    pub fn node_count(self) -> usize {
        match self {
            TopologyName::Pair2 => 2,
            TopologyName::Line4 => 4,
            TopologyName::Ring8 => 8,
        }
    }
}

impl fmt::Display for TopologyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TopologyName {
    type Err = TopologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pair2" => Ok(TopologyName::Pair2),
            "line4" => Ok(TopologyName::Line4),
            "ring8" => Ok(TopologyName::Ring8),
            other => Err(TopologyError::UnknownName(other.to_string())),
        }
    }
}

/// Which quantity stands in for the Perron root in the margin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateKind {
    /// Spectral radius ρ(W).
    #[default]
    Rho,
    /// Largest singular value ‖W‖₂, conservative for non-normal W.
    TwoNorm,
}

/// Non-negative coupling matrix between bearers together with its maximal
/// cliques. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceGraph {
    n: usize,
    weights: Vec<f64>,
    cliques: Vec<Vec<usize>>,
    edge_count: usize,
}

impl InterferenceGraph {
    /// Build one of the named study topologies with uniform edge weight `w`.
    pub fn build_named(name: TopologyName, w: f64) -> Result<Self, TopologyError> {
        if !(w.is_finite() && w > 0.0) {
            return Err(TopologyError::BadWeight(w));
        }
        let n = name.node_count();
        let edges: Vec<(usize, usize)> = match name {
            TopologyName::Pair2 | TopologyName::Line4 => (0..n - 1).map(|i| (i, i + 1)).collect(),
            TopologyName::Ring8 => (0..n).map(|i| (i, (i + 1) % n)).collect(),
        };
        let mut rows = vec![vec![0.0; n]; n];
        for (i, j) in edges {
            rows[i][j] = w;
            rows[j][i] = w;
        }
        Self::from_rows(rows)
    }

    /// Convenience wrapper parsing the topology name first.
    pub fn build_named_str(name: &str, w: f64) -> Result<Self, TopologyError> {
        Self::build_named(name.parse()?, w)
    }

    /// Build a graph from explicit matrix rows. Adjacency for clique purposes
    /// is `w[i][j] > 0 || w[j][i] > 0`.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, TopologyError> {
        let n = rows.len();
        if n == 0 {
            return Err(TopologyError::Empty);
        }
        let mut weights = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(TopologyError::NotSquare { row: i, len: row.len(), n });
            }
            for (j, &value) in row.iter().enumerate() {
                if !value.is_finite() || value < 0.0 {
                    return Err(TopologyError::BadEntry { i, j, value });
                }
                if i == j && value != 0.0 {
                    return Err(TopologyError::NonZeroDiagonal { i, value });
                }
                weights.push(value);
            }
        }
        let adjacent = |i: usize, j: usize| weights[i * n + j] > 0.0 || weights[j * n + i] > 0.0;
        let mut edge_count = 0;
        for i in 0..n {
            for j in i + 1..n {
                if adjacent(i, j) {
                    edge_count += 1;
                }
            }
        }
        let adjacency: Vec<Vec<bool>> = (0..n)
            .map(|i| (0..n).map(|j| i != j && adjacent(i, j)).collect())
            .collect();
        let cliques = maximal_cliques(&adjacency);
        Ok(Self { n, weights, cliques, edge_count })
    }

    /// Parse a whitespace-separated matrix, one row per line. Blank lines and
    /// lines starting with `#` are skipped.
    pub fn parse_matrix(text: &str) -> Result<Self, TopologyError> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>().map_err(|_| TopologyError::Parse {
                        line: lineno + 1,
                        token: tok.to_string(),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Self::from_rows(rows)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.n..(i + 1) * self.n]
    }

    pub fn cliques(&self) -> &[Vec<usize>] {
        &self.cliques
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    /// Edges per cell with one cell per bearer.
    pub fn edges_per_cell(&self) -> f64 {
        self.edge_count as f64 / self.n as f64
    }

    pub fn is_adjacent(&self, i: usize, j: usize) -> bool {
        i != j && (self.weight(i, j) > 0.0 || self.weight(j, i) > 0.0)
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (i + 1..self.n).all(|j| self.weight(i, j) == self.weight(j, i)))
    }

    /// `(W · s)_i = Σ_j w_ij s_j` for a binary vector.
    pub fn apply_binary(&self, s: &[bool]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(s)
                    .filter(|(_, &on)| on)
                    .map(|(w, _)| w)
                    .sum()
            })
            .collect()
    }

    /// A copy with every weight multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self, TopologyError> {
        let rows = (0..self.n)
            .map(|i| self.row(i).iter().map(|w| w * c).collect())
            .collect();
        Self::from_rows(rows)
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.weights)
    }

    /// ρ(W). Dense eigensolve for small graphs, shifted power iteration above
    /// [`DENSE_EIGEN_MAX_N`].
    pub fn spectral_radius(&self) -> Result<f64, TopologyError> {
        if self.weights.iter().all(|&w| w == 0.0) {
            return Ok(0.0);
        }
        if self.n <= DENSE_EIGEN_MAX_N {
            Ok(self.dense_spectral_radius())
        } else {
            self.power_spectral_radius()
        }
    }

    fn dense_spectral_radius(&self) -> f64 {
        let m = self.to_dmatrix();
        if self.is_symmetric() {
            m.symmetric_eigen()
                .eigenvalues
                .iter()
                .fold(0.0_f64, |acc, l| acc.max(l.abs()))
        } else {
            m.complex_eigenvalues()
                .iter()
                .fold(0.0_f64, |acc, l| acc.max(l.norm()))
        }
    }

    /// Power iteration on `W + I`. For non-negative W the shift keeps the
    /// Perron root dominant even when W is periodic (e.g. bipartite rings),
    /// and ρ(W + I) = ρ(W) + 1.
    pub fn power_spectral_radius(&self) -> Result<f64, TopologyError> {
        let n = self.n;
        let mut x = vec![1.0 / (n as f64).sqrt(); n];
        let mut estimate = 0.0;
        let mut change = f64::INFINITY;
        for _ in 0..POWER_MAX_ITER {
            let mut y: Vec<f64> = (0..n)
                .map(|i| x[i] + self.row(i).iter().zip(&x).map(|(w, xj)| w * xj).sum::<f64>())
                .collect();
            let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            // Rayleigh-type estimate for the shifted operator.
            let next = y.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
            y.iter_mut().for_each(|v| *v /= norm);
            change = (next - estimate).abs();
            estimate = next;
            x = y;
            if change <= POWER_TOL * estimate.max(1.0) {
                return Ok((estimate - 1.0).max(0.0));
            }
        }
        Err(TopologyError::NoConvergence {
            iterations: POWER_MAX_ITER,
            estimate: estimate - 1.0,
            change,
        })
    }

    /// Largest singular value ‖W‖₂.
    pub fn two_norm(&self) -> f64 {
        self.to_dmatrix()
            .singular_values()
            .iter()
            .fold(0.0_f64, |acc, &s| acc.max(s))
    }

    pub fn spectral_surrogate(&self, kind: SurrogateKind) -> Result<f64, TopologyError> {
        match kind {
            SurrogateKind::Rho => self.spectral_radius(),
            SurrogateKind::TwoNorm => Ok(self.two_norm()),
        }
    }
}

/// Bron–Kerbosch with pivoting. Every vertex ends up in at least one clique
/// (isolated vertices form singletons). Output is sorted for determinism.
fn maximal_cliques(adj: &[Vec<bool>]) -> Vec<Vec<usize>> {
    fn expand(
        adj: &[Vec<bool>],
        r: &mut Vec<usize>,
        mut p: Vec<usize>,
        mut x: Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if p.is_empty() && x.is_empty() {
            let mut c = r.clone();
            c.sort_unstable();
            out.push(c);
            return;
        }
        let pivot = p
            .iter()
            .chain(x.iter())
            .copied()
            .max_by_key(|&u| p.iter().filter(|&&v| adj[u][v]).count())
            .expect("p or x non-empty");
        let candidates: Vec<usize> = p.iter().copied().filter(|&v| !adj[pivot][v]).collect();
        for v in candidates {
            r.push(v);
            let np = p.iter().copied().filter(|&u| adj[v][u]).collect();
            let nx = x.iter().copied().filter(|&u| adj[v][u]).collect();
            expand(adj, r, np, nx, out);
            r.pop();
            p.retain(|&u| u != v);
            x.push(v);
        }
    }

    let mut out = Vec::new();
    expand(adj, &mut Vec::new(), (0..adj.len()).collect(), Vec::new(), &mut out);
    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pair2_matrix_and_cliques() {
        let g = InterferenceGraph::build_named(TopologyName::Pair2, 0.6).unwrap();
        assert_eq!(g.n(), 2);
        assert_eq!(g.weight(0, 1), 0.6);
        assert_eq!(g.weight(1, 0), 0.6);
        assert_eq!(g.weight(0, 0), 0.0);
        assert_eq!(g.cliques(), &[vec![0, 1]]);
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn line4_is_a_path() {
        let g = InterferenceGraph::build_named(TopologyName::Line4, 0.6).unwrap();
        assert_eq!(g.edge_count(), 3);
        assert_eq!(g.cliques(), &[vec![0, 1], vec![1, 2], vec![2, 3]]);
        assert!(!g.is_adjacent(0, 2));
    }

    #[test]
    fn ring8_is_a_cycle() {
        let g = InterferenceGraph::build_named(TopologyName::Ring8, 0.6).unwrap();
        assert_eq!(g.edge_count(), 8);
        assert_eq!(g.cliques().len(), 8);
        assert!(g.is_adjacent(7, 0));
        for c in g.cliques() {
            assert_eq!(c.len(), 2);
        }
    }

    #[test]
    fn unknown_name_is_rejected() {
        assert_eq!(
            InterferenceGraph::build_named_str("star5", 0.6),
            Err(TopologyError::UnknownName("star5".into()))
        );
        assert!(InterferenceGraph::build_named(TopologyName::Pair2, 0.0).is_err());
    }

    #[test]
    fn triangle_plus_pendant_cliques() {
        let rows = vec![
            vec![0.0, 1.0, 1.0, 0.0],
            vec![1.0, 0.0, 1.0, 0.0],
            vec![1.0, 1.0, 0.0, 1.0],
            vec![0.0, 0.0, 1.0, 0.0],
        ];
        let g = InterferenceGraph::from_rows(rows).unwrap();
        assert_eq!(g.cliques(), &[vec![0, 1, 2], vec![2, 3]]);
    }

    #[test]
    fn isolated_bearer_gets_singleton_clique() {
        let g = InterferenceGraph::from_rows(vec![vec![0.0; 3]; 3]).unwrap();
        assert_eq!(g.cliques(), &[vec![0], vec![1], vec![2]]);
        assert_eq!(g.spectral_radius().unwrap(), 0.0);
    }

    #[test]
    fn validation_errors() {
        assert!(matches!(
            InterferenceGraph::from_rows(vec![vec![0.0, -1.0], vec![0.0, 0.0]]),
            Err(TopologyError::BadEntry { .. })
        ));
        assert!(matches!(
            InterferenceGraph::from_rows(vec![vec![1.0, 0.0], vec![0.0, 0.0]]),
            Err(TopologyError::NonZeroDiagonal { .. })
        ));
        assert!(matches!(
            InterferenceGraph::from_rows(vec![vec![0.0, 1.0], vec![0.0]]),
            Err(TopologyError::NotSquare { .. })
        ));
    }

    #[test]
    fn parse_matrix_file_format() {
        let text = "# two nodes\n0 0.5\n\n0.5   0\n";
        let g = InterferenceGraph::parse_matrix(text).unwrap();
        assert_eq!(g.weight(0, 1), 0.5);
        assert!(matches!(
            InterferenceGraph::parse_matrix("0 x\n1 0"),
            Err(TopologyError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn named_spectral_radii() {
        let rho = |name| {
            InterferenceGraph::build_named(name, 0.6)
                .unwrap()
                .spectral_radius()
                .unwrap()
        };
        assert_abs_diff_eq!(rho(TopologyName::Pair2), 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(rho(TopologyName::Line4), 1.2 * (std::f64::consts::PI / 5.0).cos(), epsilon = 1e-9);
        assert_abs_diff_eq!(rho(TopologyName::Ring8), 1.2, epsilon = 1e-9);
    }

    #[test]
    fn power_iteration_agrees_with_dense_solve() {
        for name in TopologyName::ALL {
            let g = InterferenceGraph::build_named(name, 0.6).unwrap();
            let dense = g.spectral_radius().unwrap();
            let power = g.power_spectral_radius().unwrap();
            assert_abs_diff_eq!(dense, power, epsilon = 1e-9);
        }
    }

    #[test]
    fn large_ring_uses_power_iteration() {
        let n = 40;
        let mut rows = vec![vec![0.0; n]; n];
        for i in 0..n {
            rows[i][(i + 1) % n] = 0.5;
            rows[(i + 1) % n][i] = 0.5;
        }
        let g = InterferenceGraph::from_rows(rows).unwrap();
        assert_abs_diff_eq!(g.spectral_radius().unwrap(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn two_norm_examples() {
        let pair = InterferenceGraph::build_named(TopologyName::Pair2, 0.6).unwrap();
        assert_abs_diff_eq!(pair.spectral_surrogate(SurrogateKind::TwoNorm).unwrap(), 0.6, epsilon = 1e-12);
        let ring = InterferenceGraph::build_named(TopologyName::Ring8, 0.6).unwrap();
        assert_abs_diff_eq!(ring.spectral_surrogate(SurrogateKind::TwoNorm).unwrap(), 1.2, epsilon = 1e-9);

        // [[0,1],[0,0]]: singular values {1, 0}, eigenvalues {0, 0}.
        let nilpotent = InterferenceGraph::from_rows(vec![vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert_abs_diff_eq!(nilpotent.two_norm(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(nilpotent.spectral_radius().unwrap(), 0.0, epsilon = 1e-9);
    }
}
