#![allow(dead_code)]

use nalgebra::DMatrix;
use pfm_core::models::{perturb_blocks, DegreeSpec, ModelOptions, NodeWeights, Partition, PfmModel, Scale};
use pfm_core::{build_preference_frame, hpfm_matrix, pfm_from_degrees, FrameOptions, PreferenceFrame};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Reversible frame `R = D⁻¹W` from a diagonally dominant symmetric `W`;
/// `R` is similar to a positive definite matrix, hence nonsingular.
pub fn random_frame(k: usize, rng: &mut ChaCha8Rng) -> PreferenceFrame {
    let mut w = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in (a + 1)..k {
            let v = rng.random_range(0.05..1.0);
            w[(a, b)] = v;
            w[(b, a)] = v;
        }
    }
    for a in 0..k {
        let off: f64 = w.row(a).sum();
        w[(a, a)] = off + rng.random_range(0.2..2.0);
    }
    let r = DMatrix::from_fn(k, k, |i, j| w[(i, j)] / w.row(i).sum());
    build_preference_frame(&r, &FrameOptions::default()).expect("valid random frame")
}

pub fn random_sizes(k: usize, low: usize, high: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..k).map(|_| rng.random_range(low..=high)).collect()
}

/// Per-community node distributions with entries in `[1, 3]` before
/// normalization.
pub fn random_pi(sizes: &[usize], rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    sizes
        .iter()
        .map(|&s| {
            let raw: Vec<f64> = (0..s).map(|_| rng.random_range(1.0..3.0)).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / total).collect()
        })
        .collect()
}

/// Largest `d_tot` keeping every `S_ij = d_tot ρ_k r_kl π_i π_j` at or
/// below `cap`.
pub fn max_d_tot(frame: &PreferenceFrame, pi: &[Vec<f64>], cap: f64) -> f64 {
    let k = frame.k();
    let top: Vec<f64> = pi.iter().map(|p| p.iter().fold(0.0f64, |m, v| m.max(*v))).collect();
    let peak = (0..k)
        .flat_map(|a| (0..k).map(move |b| (a, b)))
        .map(|(a, b)| frame.rho()[a] * frame.r()[(a, b)] * top[a] * top[b])
        .fold(0.0f64, f64::max);
    cap / peak
}

pub fn random_pfm(k: usize, low: usize, high: usize, rng: &mut ChaCha8Rng) -> PfmModel {
    let frame = random_frame(k, rng);
    let sizes = random_sizes(k, low, high, rng);
    let partition = Partition::from_sizes(&sizes).unwrap();
    let pi = random_pi(&sizes, rng);
    let n = partition.n() as f64;
    let d_tot = (rng.random_range(0.2..0.5) * n).min(max_d_tot(&frame, &pi, 0.9));
    pfm_from_degrees(&frame, &partition, &DegreeSpec { pi, d_tot }).expect("valid pfm")
}

/// Homogeneous model with the smallest expected degree at `target`, halved
/// until every probability fits.
pub fn hpfm_with_target(
    frame: &PreferenceFrame,
    partition: &Partition,
    weights: &NodeWeights,
    mut target: f64,
    opts: ModelOptions,
) -> pfm_core::Result<PfmModel> {
    loop {
        match hpfm_matrix(frame, partition, weights, Scale::TargetMinDegree(target), opts) {
            Err(pfm_core::Error::ProbabilityOverflow { .. }) => target *= 0.5,
            other => return other,
        }
    }
}

pub fn random_hpfm(k: usize, low: usize, high: usize, rng: &mut ChaCha8Rng) -> PfmModel {
    let frame = random_frame(k, rng);
    let sizes = random_sizes(k, low, high, rng);
    let partition = Partition::from_sizes(&sizes).unwrap();
    let weights = NodeWeights::uniform(partition.n(), 0.3, 1.0, rng).unwrap();
    let target = 0.2 * *sizes.iter().min().unwrap() as f64;
    hpfm_with_target(&frame, &partition, &weights, target, ModelOptions::default()).expect("valid hpfm")
}

pub fn random_general(k: usize, low: usize, high: usize, rng: &mut ChaCha8Rng) -> PfmModel {
    let base = random_pfm(k, low, high, rng);
    let mut amplitude = rng.random_range(0.2..0.9);
    loop {
        match perturb_blocks(&base, amplitude, rng) {
            Err(pfm_core::Error::ProbabilityOverflow { .. }) => amplitude *= 0.5,
            other => return other.expect("valid perturbation"),
        }
    }
}

/// Eigenvalues sorted by decreasing magnitude, computed directly.
pub fn eigenvalues_by_magnitude(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(|a, b| b.abs().total_cmp(&a.abs()).then(b.total_cmp(a)));
    v
}

/// `D^{-1/2} S D^{-1/2}` with `D = diag(row sums)`.
pub fn laplacian_of(s: &DMatrix<f64>) -> DMatrix<f64> {
    let d: Vec<f64> = (0..s.nrows()).map(|i| s.row(i).sum()).collect();
    DMatrix::from_fn(s.nrows(), s.ncols(), |i, j| s[(i, j)] / (d[i] * d[j]).sqrt())
}

pub fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |a, b| m[(rows[a], cols[b])])
}

/// All permutations of `0..k`.
pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}
