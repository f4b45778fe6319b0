//! Dense and matrix-free symmetric eigensolvers.
//!
//! Every spectrum in this crate is ordered by decreasing magnitude, with a
//! positive eigenvalue placed before a negative one of equal magnitude.
//! Eigenvectors are sign-normalized so that their entry of largest magnitude
//! is positive (first such entry on ties).

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector, DVectorView, DVectorViewMut, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Total order used for every spectrum: larger |λ| first, then positive first.
pub fn magnitude_order(a: f64, b: f64) -> Ordering {
    b.abs().total_cmp(&a.abs()).then_with(|| b.total_cmp(&a))
}

/// Indices of `values` sorted by [`magnitude_order`].
pub fn magnitude_permutation(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| magnitude_order(values[i], values[j]).then(i.cmp(&j)));
    idx
}

/// Flip `v` so its largest-magnitude entry is positive.
pub fn normalize_sign(v: &mut [f64]) {
    let mut best = 0usize;
    let mut best_abs = -1.0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best_abs {
            best_abs = x.abs();
            best = i;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Complete eigendecomposition of a dense symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricSpectrum {
    pub values: Vec<f64>,
    /// Column `j` is the unit eigenvector for `values[j]`.
    pub vectors: DMatrix<f64>,
}

fn eigen_decompose(m: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    let n = m.nrows();
    SymmetricEigen::try_new(m.clone(), f64::EPSILON, 1000 * n.max(10))
        .ok_or_else(|| Error::EigensolverFailure(format!("dense QR iteration did not converge (n={n})")))
}

/// Full symmetric eigendecomposition, magnitude-ordered and sign-normalized.
pub fn symmetric_spectrum(m: &DMatrix<f64>) -> Result<SymmetricSpectrum> {
    let eig = eigen_decompose(m)?;
    let n = m.nrows();
    let raw: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let perm = magnitude_permutation(&raw);
    let mut vectors = DMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (dst, &src) in perm.iter().enumerate() {
        values.push(raw[src]);
        let mut col: Vec<f64> = eig.eigenvectors.column(src).iter().copied().collect();
        normalize_sign(&mut col);
        vectors.set_column(dst, &DVector::from_vec(col));
    }
    Ok(SymmetricSpectrum { values, vectors })
}

/// Eigenvalues only, magnitude-ordered.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    let mut values: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigensolverFailure("non-finite eigenvalue".into()));
    }
    values.sort_by(|a, b| magnitude_order(*a, *b));
    Ok(values)
}

/// A symmetric linear operator `y = A x`.
pub trait SymOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl SymOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.nrows();
        let xv = DVectorView::from_slice(x, n);
        let mut yv = DVectorViewMut::from_slice(y, n);
        yv.gemv(1.0, self, &xv, 0.0);
    }
}

/// Compressed sparse row matrix (square).
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for p in self.indptr[i]..self.indptr[i + 1] {
                m[(i, self.indices[p])] += self.values[p];
            }
        }
        m
    }
}

impl SymOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            *yi = (self.indptr[i]..self.indptr[i + 1])
                .map(|p| self.values[p] * x[self.indices[p]])
                .sum();
        }
    }
}

/// `A - B` without materializing it.
pub struct Difference<'a> {
    pub a: &'a dyn SymOperator,
    pub b: &'a dyn SymOperator,
}

impl SymOperator for Difference<'_> {
    fn dim(&self) -> usize {
        self.a.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let mut tmp = vec![0.0; y.len()];
        self.a.apply(x, y);
        self.b.apply(x, &mut tmp);
        y.iter_mut().zip(&tmp).for_each(|(a, b)| *a -= b);
    }
}

/// Settings for [`krylov_top_eigen`].
#[derive(Debug, Clone)]
pub struct KrylovOptions {
    pub block_size: usize,
    pub max_dim: usize,
    /// Residual tolerance `‖A y - θ y‖` for the strictly converged pairs.
    pub tol: f64,
    /// How many of the leading pairs must meet `tol`; the remainder only need
    /// their Ritz values to stagnate to `ritz_rel_tol`, and are returned as
    /// they stand if `max_dim` is reached first.
    pub strict: usize,
    pub ritz_rel_tol: f64,
    /// Blocks added between convergence checks.
    pub check_every: usize,
    pub seed: u64,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self {
            block_size: 8,
            max_dim: 600,
            tol: 1e-9,
            strict: usize::MAX,
            ritz_rel_tol: 1e-7,
            check_every: 4,
            seed: 0x5eed_1a7c,
        }
    }
}

/// Leading (by magnitude) eigenpairs from a Krylov computation.
#[derive(Debug, Clone)]
pub struct PartialSpectrum {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
    pub residuals: Vec<f64>,
    pub subspace_dim: usize,
    /// True when the Krylov space reached the full dimension (exact result).
    pub exhaustive: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

struct KrylovBasis {
    n: usize,
    q: Vec<Vec<f64>>,
    aq: Vec<Vec<f64>>,
    /// Upper triangle of `Qᵀ A Q`, column-wise: `t[j][i] = q_i · A q_j` for `i <= j`.
    t: Vec<Vec<f64>>,
}

impl KrylovBasis {
    fn orthogonalize(&self, v: &mut [f64]) -> f64 {
        let before = dot(v, v).sqrt();
        for _ in 0..2 {
            for qi in &self.q {
                let c = dot(qi, v);
                axpy(-c, qi, v);
            }
        }
        let after = dot(v, v).sqrt();
        if before > 0.0 {
            after / before
        } else {
            0.0
        }
    }

    /// Append `candidate` (orthogonalized); replaces it by random directions if
    /// it is already in the span. Returns false when the space is exhausted.
    fn push(&mut self, op: &dyn SymOperator, mut candidate: Vec<f64>, rng: &mut ChaCha8Rng) -> bool {
        if self.q.len() >= self.n {
            return false;
        }
        let mut tries = 0;
        loop {
            let ratio = self.orthogonalize(&mut candidate);
            let norm = dot(&candidate, &candidate).sqrt();
            if ratio > 1e-8 && norm > 0.0 {
                candidate.iter_mut().for_each(|x| *x /= norm);
                break;
            }
            tries += 1;
            if tries > 8 {
                return false;
            }
            candidate = (0..self.n).map(|_| standard_normal(rng)).collect();
        }
        let mut image = vec![0.0; self.n];
        op.apply(&candidate, &mut image);
        let mut col = Vec::with_capacity(self.q.len() + 1);
        for qi in &self.q {
            col.push(dot(qi, &image));
        }
        col.push(dot(&candidate, &image));
        self.q.push(candidate);
        self.aq.push(image);
        self.t.push(col);
        true
    }

    fn projected(&self) -> DMatrix<f64> {
        let m = self.q.len();
        let mut t = DMatrix::zeros(m, m);
        for j in 0..m {
            for i in 0..=j {
                t[(i, j)] = self.t[j][i];
                t[(j, i)] = self.t[j][i];
            }
        }
        t
    }
}

/// Leading `nev` eigenpairs (by magnitude) of a symmetric operator, by block
/// Krylov subspace iteration with full reorthogonalization and explicit
/// Rayleigh–Ritz projection. Deterministic for a fixed `opts.seed`.
pub fn krylov_top_eigen(op: &dyn SymOperator, nev: usize, opts: &KrylovOptions) -> Result<PartialSpectrum> {
    let n = op.dim();
    if nev == 0 || nev > n {
        return Err(Error::DimensionMismatch { expected: n, found: nev });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let block = opts.block_size.max(nev.min(n)).max(1).min(n);
    let max_dim = opts.max_dim.max(block * 2).min(n);
    let mut basis = KrylovBasis {
        n,
        q: Vec::new(),
        aq: Vec::new(),
        t: Vec::new(),
    };

    let mut frontier: Vec<Vec<f64>> = (0..block)
        .map(|_| (0..n).map(|_| standard_normal(&mut rng)).collect())
        .collect();
    let mut prev_ritz: Option<Vec<f64>> = None;
    let mut blocks_since_check = 0;
    loop {
        let start = basis.q.len();
        let mut exhausted = false;
        for cand in frontier.drain(..) {
            if !basis.push(op, cand, &mut rng) {
                exhausted = true;
                break;
            }
        }
        blocks_since_check += 1;
        let m = basis.q.len();
        let full = exhausted || m >= n;
        let at_cap = m >= max_dim;

        if blocks_since_check >= opts.check_every || full || at_cap {
            blocks_since_check = 0;
            let t = basis.projected();
            let eig = eigen_decompose(&t)?;
            let raw: Vec<f64> = eig.eigenvalues.iter().copied().collect();
            let perm = magnitude_permutation(&raw);
            let take = nev.min(m);
            let mut values = Vec::with_capacity(take);
            let mut vectors = DMatrix::zeros(n, take);
            let mut residuals = Vec::with_capacity(take);
            for (c, &src) in perm.iter().take(take).enumerate() {
                let theta = raw[src];
                let s = eig.eigenvectors.column(src);
                let mut y = vec![0.0; n];
                let mut ay = vec![0.0; n];
                for k in 0..m {
                    axpy(s[k], &basis.q[k], &mut y);
                    axpy(s[k], &basis.aq[k], &mut ay);
                }
                let res = ay.iter().zip(&y).map(|(a, b)| (a - theta * b).powi(2)).sum::<f64>().sqrt();
                normalize_sign(&mut y);
                values.push(theta);
                residuals.push(res);
                vectors.set_column(c, &DVector::from_vec(y));
            }
            let strict = opts.strict.min(take);
            let strict_ok = residuals[..strict].iter().all(|r| *r <= opts.tol);
            let loose_ok = match &prev_ritz {
                Some(prev) if prev.len() == values.len() => (strict..take).all(|i| {
                    residuals[i] <= opts.tol
                        || (values[i] - prev[i]).abs() <= opts.ritz_rel_tol * values[i].abs().max(1e-300)
                }),
                _ => (strict..take).all(|i| residuals[i] <= opts.tol),
            };
            // at the cap, pairs outside the strict set are accepted as they are
            if full || (take == nev && strict_ok && (loose_ok || at_cap)) {
                if at_cap && !loose_ok && !full {
                    log::debug!("Krylov cap {m} reached with unconverged trailing Ritz values");
                }
                return Ok(PartialSpectrum {
                    values,
                    vectors,
                    residuals,
                    subspace_dim: m,
                    exhaustive: full,
                });
            }
            if at_cap {
                return Err(Error::NoConvergence(format!(
                    "Krylov dimension {m} reached; residuals {residuals:?}"
                )));
            }
            prev_ritz = Some(values);
        }
        // next block: images of the block just added
        frontier = basis.aq[start..].to_vec();
        if frontier.is_empty() {
            frontier = (0..block)
                .map(|_| (0..n).map(|_| standard_normal(&mut rng)).collect())
                .collect();
        }
    }
}

/// Spectral norm of a symmetric operator. Dense matrices up to `dense_limit`
/// are decomposed exactly; larger operators use a Krylov estimate whose
/// leading Ritz value has stagnated to `opts.ritz_rel_tol` (or the Krylov
/// dimension cap was reached; Ritz values never overestimate the norm).
pub fn spectral_norm(op: &dyn SymOperator, dense_limit: usize, opts: &KrylovOptions) -> Result<f64> {
    let n = op.dim();
    if n == 0 {
        return Ok(0.0);
    }
    if n <= dense_limit {
        let mut m = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            op.apply(&e, &mut col);
            e[j] = 0.0;
            m.set_column(j, &DVector::from_column_slice(&col));
        }
        let sym = (&m + m.transpose()) * 0.5;
        let values = symmetric_eigenvalues(&sym)?;
        return Ok(values.first().map(|v| v.abs()).unwrap_or(0.0));
    }
    let opts = KrylovOptions {
        strict: 0,
        ..opts.clone()
    };
    let spec = krylov_top_eigen(op, 1, &opts)?;
    Ok(spec.values[0].abs())
}

/// Frobenius norm of `a - b`.
pub fn frobenius_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm()
}

/// Orthogonal polar factor of a square matrix (`U Vᵀ` from its SVD).
pub fn polar_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    u * vt
}
