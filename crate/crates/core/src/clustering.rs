//! K-means on embedding rows, the misclustering rate, and the separation
//! constant of a frame.

use std::collections::HashSet;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::PreferenceFrame;
use crate::models::{Partition, PfmModel};
use crate::par::{derive_seed, map_indexed, Execution};

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub labels: Vec<usize>,
    /// One center per row.
    pub centers: DMatrix<f64>,
    /// Within-cluster sum of squared distances.
    pub objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KmeansOptions {
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
    /// Scale every row to unit length before clustering.
    pub row_normalize: bool,
    pub execution: Execution,
}

impl Default for KmeansOptions {
    fn default() -> Self {
        Self {
            restarts: 50,
            max_iter: 300,
            seed: 0,
            row_normalize: false,
            execution: Execution::default(),
        }
    }
}

fn dist2(points: &DMatrix<f64>, i: usize, centers: &DMatrix<f64>, c: usize) -> f64 {
    (0..points.ncols()).map(|d| (points[(i, d)] - centers[(c, d)]).powi(2)).sum()
}

fn count_distinct_rows(points: &DMatrix<f64>, cap: usize) -> usize {
    let mut seen = HashSet::new();
    for i in 0..points.nrows() {
        let key: Vec<u64> = points.row(i).iter().map(|v| (v + 0.0).to_bits()).collect();
        seen.insert(key);
        if seen.len() >= cap {
            break;
        }
    }
    seen.len()
}

/// Nearest center for each point (ties go to the lower index) and the objective.
pub fn assign(points: &DMatrix<f64>, centers: &DMatrix<f64>) -> (Vec<usize>, f64) {
    let mut objective = 0.0;
    let labels = (0..points.nrows())
        .map(|i| {
            let (best, d) = (0..centers.nrows())
                .map(|c| (c, dist2(points, i, centers, c)))
                .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
            objective += d;
            best
        })
        .collect();
    (labels, objective)
}

/// Sum of squared distances from each point to the center of its label.
pub fn objective(points: &DMatrix<f64>, labels: &[usize], centers: &DMatrix<f64>) -> f64 {
    labels.iter().enumerate().map(|(i, &c)| dist2(points, i, centers, c)).sum()
}

fn means(points: &DMatrix<f64>, labels: &[usize], k: usize) -> (DMatrix<f64>, Vec<usize>) {
    let dim = points.ncols();
    let mut centers = DMatrix::zeros(k, dim);
    let mut counts = vec![0usize; k];
    for (i, &c) in labels.iter().enumerate() {
        counts[c] += 1;
        for d in 0..dim {
            centers[(c, d)] += points[(i, d)];
        }
    }
    for (c, &count) in counts.iter().enumerate() {
        if count > 0 {
            centers.row_mut(c).scale_mut(1.0 / count as f64);
        }
    }
    (centers, counts)
}

/// Seeding by squared-distance weighted sampling.
fn seed_centers(points: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let n = points.nrows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut closest: Vec<f64> = (0..n)
        .map(|i| (0..points.ncols()).map(|d| (points[(i, d)] - points[(chosen[0], d)]).powi(2)).sum())
        .collect();
    while chosen.len() < k {
        let total: f64 = closest.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in closest.iter().enumerate() {
                if w > 0.0 && target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            // guard against rounding leaving `pick` on a chosen point
            if closest[pick] == 0.0 {
                pick = closest.iter().enumerate().fold(0, |b, (i, w)| if *w > closest[b] { i } else { b });
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        chosen.push(next);
        for (i, c) in closest.iter_mut().enumerate() {
            let d: f64 = (0..points.ncols()).map(|d| (points[(i, d)] - points[(next, d)]).powi(2)).sum();
            *c = c.min(d);
        }
    }
    DMatrix::from_fn(k, points.ncols(), |c, d| points[(chosen[c], d)])
}

/// Lloyd iterations from `centers`. Empty clusters take the point farthest
/// from its current center. Returns the clustering and the objective after
/// each iteration.
pub fn lloyd(points: &DMatrix<f64>, mut centers: DMatrix<f64>, max_iter: usize) -> (Clustering, Vec<f64>) {
    let k = centers.nrows();
    let (mut labels, _) = assign(points, &centers);
    let mut trace = Vec::new();
    for _ in 0..max_iter.max(1) {
        let (mut new_centers, mut counts) = means(points, &labels, k);
        while let Some(empty) = counts.iter().position(|&c| c == 0) {
            let far = (0..points.nrows())
                .filter(|&i| counts[labels[i]] > 1)
                .map(|i| (i, dist2(points, i, &new_centers, labels[i])))
                .fold((usize::MAX, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc })
                .0;
            if far == usize::MAX {
                break;
            }
            labels[far] = empty;
            (new_centers, counts) = means(points, &labels, k);
        }
        centers = new_centers;
        let obj = objective(points, &labels, &centers);
        trace.push(obj);
        let (next, _) = assign(points, &centers);
        if next == labels {
            break;
        }
        labels = next;
    }
    let objective = *trace.last().expect("at least one iteration");
    (
        Clustering {
            labels,
            centers,
            objective,
        },
        trace,
    )
}

/// Best of `opts.restarts` seeded Lloyd runs (lowest objective, ties to the
/// lowest restart index).
pub fn kmeans(points: &DMatrix<f64>, k: usize, opts: &KmeansOptions) -> Result<Clustering> {
    let n = points.nrows();
    if k == 0 || n < k {
        return Err(Error::DegenerateInput { k, distinct: n });
    }
    if opts.restarts == 0 {
        return Err(Error::Config("kmeans needs at least one restart".into()));
    }
    let owned;
    let points = if opts.row_normalize {
        let mut p = points.clone();
        for mut row in p.row_iter_mut() {
            let norm = row.norm();
            if norm > 0.0 {
                row.scale_mut(1.0 / norm);
            }
        }
        owned = p;
        &owned
    } else {
        points
    };
    let distinct = count_distinct_rows(points, k);
    if distinct < k {
        return Err(Error::DegenerateInput { k, distinct });
    }
    let runs = map_indexed(opts.restarts, opts.execution, |r| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, r as u64));
        let init = seed_centers(points, k, &mut rng);
        lloyd(points, init, opts.max_iter).0
    });
    let best = runs
        .into_iter()
        .reduce(|best, c| if c.objective < best.objective { c } else { best })
        .expect("restarts >= 1");
    Ok(best)
}

/// `K×K` overlap counts: entry `(a, b)` is `|{i : found_i = a, truth_i = b}|`.
pub fn confusion_matrix(found: &[usize], truth: &Partition) -> Result<Vec<Vec<usize>>> {
    if found.len() != truth.n() {
        return Err(Error::SizeMismatch(found.len(), truth.n()));
    }
    let k = truth.k().max(found.iter().map(|l| l + 1).max().unwrap_or(0));
    let mut m = vec![vec![0usize; k]; k];
    for (i, &f) in found.iter().enumerate() {
        m[f][truth.label(i)] += 1;
    }
    Ok(m)
}

/// Largest total overlap over bijections, by enumeration.
fn best_overlap_brute(m: &[Vec<usize>]) -> usize {
    fn go(m: &[Vec<usize>], row: usize, used: &mut [bool]) -> usize {
        if row == m.len() {
            return 0;
        }
        let mut best = 0;
        for c in 0..m.len() {
            if !used[c] {
                used[c] = true;
                best = best.max(m[row][c] + go(m, row + 1, used));
                used[c] = false;
            }
        }
        best
    }
    go(m, 0, &mut vec![false; m.len()])
}

/// Maximum-weight perfect matching on a square matrix (Hungarian method,
/// run on the negated weights). Returns the column assigned to each row.
pub fn max_weight_assignment(w: &[Vec<f64>]) -> Vec<usize> {
    let n = w.len();
    // 1-based potentials, as in the classic O(n³) formulation
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = -w[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// `1 − max_φ Σ_k |C_φ(k) ∩ Ĉ_k| / n`, exact: enumeration for `K <= 8`,
/// the Hungarian method above that.
pub fn misclustering_rate(found: &[usize], truth: &Partition) -> Result<f64> {
    let m = confusion_matrix(found, truth)?;
    let n = found.len();
    if n == 0 {
        return Ok(0.0);
    }
    let best = if m.len() <= 8 {
        best_overlap_brute(&m)
    } else {
        let w: Vec<Vec<f64>> = m.iter().map(|r| r.iter().map(|&x| x as f64).collect()).collect();
        max_weight_assignment(&w).iter().enumerate().map(|(r, &c)| m[r][c]).sum()
    };
    Ok((n - best) as f64 / n as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairSeparation {
    pub k: usize,
    pub m: usize,
    pub g: f64,
}

/// Lower-bound constants on the squared distance between embedding rows of
/// different clusters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeparationReport {
    /// `c_k = d_{C_k} / (d_tot ρ_k)`.
    pub c: Vec<f64>,
    pub c_max: f64,
    pub c_min: f64,
    pub pairs: Vec<PairSeparation>,
    /// Minimum over pairs.
    pub g_max: f64,
    /// Same formula with `c_k = d_{C_k} / (n ρ_k)`.
    pub g_max_n_normalized: f64,
    /// Same formula with `c̃_k = n_k / (n ρ_k)`.
    pub g_max_size_normalized: f64,
    pub d_tot: f64,
    /// Smallest squared distance between rows of `V` in different clusters.
    pub min_observed_distance2: Option<f64>,
}

fn pair_g(rho: &[f64], c_max: f64, c_min: f64, k: usize, m: usize) -> f64 {
    (1.0 / c_max) * (1.0 / rho[k] + 1.0 / rho[m]) - (1.0 / (rho[k] * rho[m]).sqrt()) * (1.0 / c_min - 1.0 / c_max)
}

fn min_pair_g(rho: &[f64], c: &[f64]) -> (f64, Vec<PairSeparation>) {
    let c_max = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let c_min = c.iter().copied().fold(f64::INFINITY, f64::min);
    let k = rho.len();
    let mut pairs = Vec::new();
    for a in 0..k {
        for b in (a + 1)..k {
            pairs.push(PairSeparation {
                k: a,
                m: b,
                g: pair_g(rho, c_max, c_min, a, b),
            });
        }
    }
    let g = pairs.iter().map(|p| p.g).fold(f64::INFINITY, f64::min);
    (g, pairs)
}

/// Separation constants of `model` with respect to `frame`. With `K = 1`
/// there are no pairs and `g_max` is `+∞`.
pub fn separation_gmax(frame: &PreferenceFrame, model: &PfmModel) -> Result<SeparationReport> {
    if frame.k() != model.k() {
        return Err(Error::DimensionMismatch {
            expected: frame.k(),
            found: model.k(),
        });
    }
    let rho = frame.rho();
    let n = model.n() as f64;
    let c: Vec<f64> = (0..model.k())
        .map(|k| model.cluster_volumes[k] / (model.d_tot * rho[k]))
        .collect();
    let c_n: Vec<f64> = (0..model.k()).map(|k| model.cluster_volumes[k] / (n * rho[k])).collect();
    let sizes = model.partition.sizes();
    let c_size: Vec<f64> = (0..model.k()).map(|k| sizes[k] as f64 / (n * rho[k])).collect();
    let (g_max, pairs) = min_pair_g(rho, &c);
    Ok(SeparationReport {
        c_max: c.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        c_min: c.iter().copied().fold(f64::INFINITY, f64::min),
        c,
        pairs,
        g_max,
        g_max_n_normalized: min_pair_g(rho, &c_n).0,
        g_max_size_normalized: min_pair_g(rho, &c_size).0,
        d_tot: model.d_tot,
        min_observed_distance2: None,
    })
}

/// Smallest squared distance between rows of `v` lying in different clusters.
pub fn min_cross_cluster_distance2(v: &DMatrix<f64>, partition: &Partition) -> f64 {
    let labels = partition.labels();
    let n = v.nrows();
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            if labels[i] != labels[j] {
                let d: f64 = (0..v.ncols()).map(|c| (v[(i, c)] - v[(j, c)]).powi(2)).sum();
                best = best.min(d);
            }
        }
    }
    best
}

/// `node,label` rows.
pub fn write_clustering_csv(labels: &[usize], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["node", "label"])?;
    for (i, l) in labels.iter().enumerate() {
        w.write_record(&[i.to_string(), l.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Confusion matrix with found clusters as rows and true communities as columns.
pub fn write_confusion_csv(m: &[Vec<usize>], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["found".to_string()];
    header.extend((0..m.first().map_or(0, Vec::len)).map(|c| format!("true_{c}")));
    w.write_record(&header)?;
    for (r, row) in m.iter().enumerate() {
        let mut rec = vec![r.to_string()];
        rec.extend(row.iter().map(|x| x.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
