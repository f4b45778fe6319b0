//! Bernoulli realizations of a model and empirical degree diagnostics.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;
use crate::models::PfmModel;
use crate::par::{derive_seed, map_indexed, Execution};

/// One undirected graph drawn from a model.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledGraph {
    /// Symmetric 0/1 adjacency; a self-loop is stored once on the diagonal.
    pub adjacency: CsrMatrix,
    pub degrees: Vec<f64>,
    pub d_hat_min: f64,
    pub seed: u64,
    pub model_hash: Option<String>,
}

impl SampledGraph {
    /// Build from undirected edges `(i, j)` with `i <= j`.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], seed: u64, model_hash: Option<String>) -> Result<Self> {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: i.max(j) + 1,
                });
            }
            adj[i].push(j);
            if i != j {
                adj[j].push(i);
            }
        }
        let mut indptr = Vec::with_capacity(n + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        for row in &mut adj {
            row.sort_unstable();
            row.dedup();
            indices.extend_from_slice(row);
            indptr.push(indices.len());
        }
        let degrees: Vec<f64> = adj.iter().map(|r| r.len() as f64).collect();
        let d_hat_min = degrees.iter().copied().fold(f64::INFINITY, f64::min);
        let nnz = indices.len();
        Ok(Self {
            adjacency: CsrMatrix {
                n,
                indptr,
                indices,
                values: vec![1.0; nnz],
            },
            degrees,
            d_hat_min: if n == 0 { 0.0 } else { d_hat_min },
            seed,
            model_hash,
        })
    }

    pub fn n(&self) -> usize {
        self.adjacency.n
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency.indices[self.adjacency.indptr[i]..self.adjacency.indptr[i + 1]]
    }

    /// Undirected edges with `i <= j`, in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.n())
            .flat_map(|i| self.neighbors(i).iter().filter(move |&&j| j >= i).map(move |&j| (i, j)))
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        (0..self.n())
            .map(|i| self.neighbors(i).iter().filter(|&&j| j >= i).count())
            .sum()
    }

    /// Sparse `D̂^{-1/2} A D̂^{-1/2}`.
    pub fn laplacian(&self) -> Result<CsrMatrix> {
        let zero: Vec<usize> = (0..self.n()).filter(|&i| self.degrees[i] == 0.0).collect();
        if !zero.is_empty() {
            return Err(Error::ZeroDegreeNode { nodes: zero });
        }
        let inv: Vec<f64> = self.degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
        let a = &self.adjacency;
        let mut values = Vec::with_capacity(a.nnz());
        for i in 0..a.n {
            for p in a.indptr[i]..a.indptr[i + 1] {
                values.push(inv[i] * inv[a.indices[p]]);
            }
        }
        Ok(CsrMatrix {
            values,
            ..a.clone()
        })
    }
}

/// Draw `A_ij ~ Bernoulli(S_ij)` for `i < j` (and `i = j` when the model
/// allows self-loops), consuming one uniform per pair in row-major order.
pub fn sample_adjacency(model: &PfmModel, seed: u64) -> SampledGraph {
    let mut g = sample_matrix(&model.s, model.allow_self_loops, seed);
    g.model_hash = Some(model.content_hash().to_string());
    g
}

/// As [`sample_adjacency`] for any symmetric matrix of probabilities,
/// including ones that do not form a valid model (e.g. all zeros).
pub fn sample_matrix(s: &DMatrix<f64>, allow_self_loops: bool, seed: u64) -> SampledGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    visit_pairs(s, allow_self_loops, &mut rng, |i, j| edges.push((i, j)));
    SampledGraph::from_edges(s.nrows(), &edges, seed, None).expect("sampled edges are in range")
}

/// Degrees of the graph [`sample_adjacency`] would draw with the same seed,
/// without storing edges.
pub fn sample_degrees(model: &PfmModel, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut deg = vec![0.0; model.n()];
    visit_pairs(&model.s, model.allow_self_loops, &mut rng, |i, j| {
        deg[i] += 1.0;
        if i != j {
            deg[j] += 1.0;
        }
    });
    deg
}

fn visit_pairs(s: &DMatrix<f64>, allow_self_loops: bool, rng: &mut ChaCha8Rng, mut on_edge: impl FnMut(usize, usize)) {
    let n = s.nrows();
    let first = usize::from(!allow_self_loops);
    for i in 0..n {
        // column i of the symmetric S holds row i contiguously
        let col = s.column(i);
        for j in (i + first)..n {
            if rng.random::<f64>() < col[j] {
                on_edge(i, j);
            }
        }
    }
}

/// Chernoff-type failure probability `2 exp(−ε² / (2 + ε/√d))` for
/// `|√d̂ − √d| > ε`.
pub fn degree_failure_bound(epsilon: f64, degree: f64) -> f64 {
    (2.0 * (-epsilon * epsilon / (2.0 + epsilon / degree.sqrt())).exp()).min(1.0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DegreeConcentrationReport {
    pub epsilon: f64,
    /// `|√d̂_i − √d_i|` per node.
    pub deviations: Vec<f64>,
    /// Failure probability bound per node.
    pub failure_bound: Vec<f64>,
    /// Nodes whose deviation exceeds `epsilon`.
    pub violations: usize,
}

pub fn degree_concentration_check(model: &PfmModel, graph: &SampledGraph, epsilon: f64) -> DegreeConcentrationReport {
    let deviations: Vec<f64> = model
        .degrees
        .iter()
        .zip(&graph.degrees)
        .map(|(d, dh)| (dh.sqrt() - d.sqrt()).abs())
        .collect();
    DegreeConcentrationReport {
        epsilon,
        violations: deviations.iter().filter(|&&x| x > epsilon).count(),
        failure_bound: model.degrees.iter().map(|&d| degree_failure_bound(epsilon, d)).collect(),
        deviations,
    }
}

/// Monte-Carlo estimate of the per-node failure frequency.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConcentrationMonteCarlo {
    pub epsilon: f64,
    pub seeds: usize,
    pub failure_fraction: Vec<f64>,
    pub failure_bound: Vec<f64>,
    /// Binomial standard error `√(b(1−b)/N)` evaluated at the bound.
    pub standard_error: Vec<f64>,
    /// `max_i (fraction_i − bound_i) / se_i` over nodes with `se_i > 0`.
    pub worst_excess_in_se: f64,
}

impl ConcentrationMonteCarlo {
    /// True when no node's empirical failure fraction exceeds its bound by
    /// more than `k` standard errors.
    pub fn within(&self, k: f64) -> bool {
        self.failure_fraction
            .iter()
            .zip(&self.failure_bound)
            .zip(&self.standard_error)
            .all(|((f, b), se)| *f <= b + k * se)
    }
}

/// Mean empirical degrees and per-`ε` failure frequencies over `seeds`
/// graphs whose seeds are derived from `master_seed`.
pub fn degree_concentration_monte_carlo(
    model: &PfmModel,
    epsilons: &[f64],
    seeds: usize,
    master_seed: u64,
    exec: Execution,
) -> (Vec<f64>, Vec<ConcentrationMonteCarlo>) {
    let n = model.n();
    let draws = map_indexed(seeds, exec, |r| sample_degrees(model, derive_seed(master_seed, r as u64)));
    let mut mean = vec![0.0; n];
    for d in &draws {
        mean.iter_mut().zip(d).for_each(|(m, x)| *m += x / seeds as f64);
    }
    let reports = epsilons
        .iter()
        .map(|&eps| {
            let mut fails = vec![0usize; n];
            for d in &draws {
                for i in 0..n {
                    if (d[i].sqrt() - model.degrees[i].sqrt()).abs() > eps {
                        fails[i] += 1;
                    }
                }
            }
            let failure_fraction: Vec<f64> = fails.iter().map(|&f| f as f64 / seeds as f64).collect();
            let failure_bound: Vec<f64> = model.degrees.iter().map(|&d| degree_failure_bound(eps, d)).collect();
            let standard_error: Vec<f64> = failure_bound
                .iter()
                .map(|&b| (b * (1.0 - b) / seeds as f64).sqrt())
                .collect();
            let worst_excess_in_se = (0..n)
                .filter(|&i| standard_error[i] > 0.0)
                .map(|i| (failure_fraction[i] - failure_bound[i]) / standard_error[i])
                .fold(f64::NEG_INFINITY, f64::max);
            ConcentrationMonteCarlo {
                epsilon: eps,
                seeds,
                failure_fraction,
                failure_bound,
                standard_error,
                worst_excess_in_se,
            }
        })
        .collect();
    (mean, reports)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSidecar {
    pub seed: u64,
    pub n: usize,
    pub model_hash: Option<String>,
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Write the graph as an `i,j` edge list plus a JSON sidecar next to it.
pub fn write_edge_list(graph: &SampledGraph, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["i", "j"])?;
    for (i, j) in graph.edges() {
        w.write_record(&[i.to_string(), j.to_string()])?;
    }
    w.flush()?;
    let side = GraphSidecar {
        seed: graph.seed,
        n: graph.n(),
        model_hash: graph.model_hash.clone(),
    };
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&side)? + "\n")?;
    Ok(())
}

/// Read an edge list. The node count comes from the sidecar when present,
/// otherwise from `n`, otherwise from the largest index seen.
pub fn read_edge_list(path: &Path, n: Option<usize>) -> Result<SampledGraph> {
    let side: Option<GraphSidecar> = match std::fs::read_to_string(sidecar_path(path)) {
        Ok(text) => Some(serde_json::from_str(&text)?),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(e.into()),
    };
    let mut edges = Vec::new();
    let mut rdr = csv::Reader::from_path(path)?;
    for rec in rdr.deserialize() {
        let (i, j): (usize, usize) = rec?;
        edges.push(if i <= j { (i, j) } else { (j, i) });
    }
    let max_index = edges.iter().map(|&(_, j)| j + 1).max().unwrap_or(0);
    let n = side.as_ref().map(|s| s.n).or(n).unwrap_or(max_index);
    let (seed, hash) = side.map(|s| (s.seed, s.model_hash)).unwrap_or((0, None));
    SampledGraph::from_edges(n, &edges, seed, hash)
}
