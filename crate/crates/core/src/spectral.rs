//! Normalized Laplacians, spectral embeddings, block-level eigen-analysis and
//! perturbation diagnostics.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{frame_factor, PreferenceFrame};
use crate::linalg::{
    krylov_top_eigen, polar_factor, spectral_norm, symmetric_eigenvalues, symmetric_spectrum, Difference,
    KrylovOptions, SymOperator, SymmetricSpectrum,
};
use crate::models::Partition;

/// `D^{-1/2} M D^{-1/2}` and the row sums `D` of a symmetric nonnegative matrix.
pub fn normalized_laplacian(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>)> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    let n = m.nrows();
    let degrees: Vec<f64> = (0..n).map(|i| m.row(i).sum()).collect();
    let zero: Vec<usize> = (0..n).filter(|&i| degrees[i] <= 0.0).collect();
    if !zero.is_empty() {
        return Err(Error::ZeroDegreeNode { nodes: zero });
    }
    let l = DMatrix::from_fn(n, n, |i, j| {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        m[(a, b)] / (degrees[a] * degrees[b]).sqrt()
    });
    Ok((l, degrees))
}

/// Leading `K` eigenvectors of a Laplacian and the points handed to k-means.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralEmbedding {
    /// Ordered by decreasing magnitude. Complete for dense solves, the
    /// leading `K + 1` values for Krylov solves.
    pub eigenvalues: Vec<f64>,
    pub full_spectrum: bool,
    pub k: usize,
    #[serde(skip)]
    pub y: DMatrix<f64>,
    /// `V_ik = Y_ik / √d_i`, when degrees were supplied.
    #[serde(skip)]
    pub v: Option<DMatrix<f64>>,
    /// `|λ_K| − |λ_{K+1}|` (`|λ_K|` when `K = n`).
    pub eigengap_sigma: f64,
    /// Raised when `σ` is zero to within the eigen tolerance.
    pub degenerate_gap: bool,
}

impl SpectralEmbedding {
    fn assemble(eigenvalues: Vec<f64>, full: bool, y: DMatrix<f64>, k: usize, degrees: Option<&[f64]>) -> Self {
        let lk = eigenvalues[k - 1].abs();
        let next = eigenvalues.get(k).map(|v| v.abs()).unwrap_or(0.0);
        let sigma = (lk - next).max(0.0);
        let scale = eigenvalues[0].abs().max(1.0);
        let v = degrees.map(|d| {
            let mut v = y.clone();
            for (i, di) in d.iter().enumerate() {
                v.row_mut(i).scale_mut(1.0 / di.sqrt());
            }
            v
        });
        Self {
            eigenvalues,
            full_spectrum: full,
            k,
            y,
            v,
            eigengap_sigma: sigma,
            degenerate_gap: sigma <= 1e-9 * scale,
        }
    }

    /// Build from a complete decomposition.
    pub fn from_spectrum(spec: &SymmetricSpectrum, k: usize, degrees: Option<&[f64]>) -> Result<Self> {
        let n = spec.values.len();
        check_k(k, n)?;
        check_degrees(degrees, n)?;
        let y = spec.vectors.columns(0, k).into_owned();
        Ok(Self::assemble(spec.values.clone(), true, y, k, degrees))
    }

    pub fn lambda_k(&self) -> f64 {
        self.eigenvalues[self.k - 1]
    }

    /// Eigenvalues beyond the first `K` (only meaningful for full spectra).
    pub fn spurious(&self) -> &[f64] {
        &self.eigenvalues[self.k..]
    }
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::DimensionMismatch { expected: n, found: k });
    }
    Ok(())
}

fn check_degrees(degrees: Option<&[f64]>, n: usize) -> Result<()> {
    if let Some(d) = degrees {
        if d.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: d.len(),
            });
        }
    }
    Ok(())
}

/// Dense path: full decomposition, then the top `K` by magnitude.
pub fn top_k_eigen(l: &DMatrix<f64>, k: usize, degrees: Option<&[f64]>) -> Result<SpectralEmbedding> {
    let spec = symmetric_spectrum(l)?;
    SpectralEmbedding::from_spectrum(&spec, k, degrees)
}

/// Krylov path for large sparse or structured operators: the leading
/// `K + 1` eigenpairs, with residuals enforced on the first `K`.
pub fn top_k_eigen_krylov(
    op: &dyn SymOperator,
    k: usize,
    degrees: Option<&[f64]>,
    opts: &KrylovOptions,
) -> Result<SpectralEmbedding> {
    let n = op.dim();
    check_k(k, n)?;
    check_degrees(degrees, n)?;
    let nev = (k + 1).min(n);
    let opts = KrylovOptions {
        strict: k,
        ..opts.clone()
    };
    let part = krylov_top_eigen(op, nev, &opts)?;
    let y = part.vectors.columns(0, k).into_owned();
    let full = part.exhaustive && nev == n;
    Ok(SpectralEmbedding::assemble(part.values, full, y, k, degrees))
}

/// Largest within-cluster distance between two rows of `v`.
pub fn piecewise_constant_check(v: &DMatrix<f64>, partition: &Partition) -> f64 {
    let mut worst: f64 = 0.0;
    for c in 0..partition.k() {
        let members = partition.members(c);
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                worst = worst.max((v.row(i) - v.row(j)).norm());
            }
        }
    }
    worst
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagonalBlock {
    pub cluster: usize,
    pub size: usize,
    pub lambda_max: f64,
    /// `r_kk` of the frame.
    pub expected: f64,
    /// Largest-magnitude eigenvalue of `L_kk` other than `λ_max`.
    pub lambda_2: f64,
    pub ratio: f64,
    /// Single-node block: no second eigenvalue, contributes 0 to `c`.
    pub trivial: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OffDiagonalBlock {
    pub k: usize,
    pub l: usize,
    /// Largest eigenvalue of `M_kl = [[0, L_kl], [L_lk, 0]]`.
    pub lambda_max: f64,
    /// `√(r_kl r_lk)`.
    pub expected: f64,
    /// Largest-magnitude eigenvalue once the `±λ_max` pair is removed.
    pub lambda_3: f64,
    pub ratio: f64,
    /// Largest `|μ_i + μ_{m−1−i}|` over the ascending spectrum of `M_kl`.
    pub pm_asymmetry: f64,
    pub trivial: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockAnalysis {
    pub diagonal: Vec<DiagonalBlock>,
    pub off_diagonal: Vec<OffDiagonalBlock>,
    /// Largest ratio over all blocks.
    pub c: f64,
}

fn submatrix(l: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |a, b| l[(rows[a], cols[b])])
}

/// Remove the entry closest to `target` from `values`.
fn remove_nearest(values: &mut Vec<f64>, target: f64) {
    if let Some((idx, _)) = values
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - target).abs().total_cmp(&(b.1 - target).abs()))
    {
        values.remove(idx);
    }
}

fn largest_magnitude(values: &[f64]) -> f64 {
    values
        .iter()
        .copied()
        .max_by(|a, b| a.abs().total_cmp(&b.abs()).then(a.total_cmp(b)))
        .unwrap_or(0.0)
}

/// Eigen-analysis of the diagonal blocks `L_kk` and the paired off-diagonal
/// operators `M_kl` of a dense expected Laplacian.
///
/// Fails with [`Error::FrameMismatch`] when a block's leading eigenvalue
/// deviates from the frame by more than `tol`.
pub fn block_analysis(
    l: &DMatrix<f64>,
    partition: &Partition,
    frame: &PreferenceFrame,
    tol: f64,
) -> Result<BlockAnalysis> {
    if frame.k() != partition.k() {
        return Err(Error::DimensionMismatch {
            expected: frame.k(),
            found: partition.k(),
        });
    }
    if l.nrows() != partition.n() {
        return Err(Error::DimensionMismatch {
            expected: partition.n(),
            found: l.nrows(),
        });
    }
    let r = frame.r();
    let k = partition.k();
    let mut diagonal = Vec::with_capacity(k);
    for c in 0..k {
        let idx = partition.members(c);
        let block = submatrix(l, idx, idx);
        let mut values = symmetric_eigenvalues(&block)?;
        let lambda_max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let expected = r[(c, c)];
        if (lambda_max - expected).abs() > tol {
            return Err(Error::FrameMismatch(format!(
                "lambda_max(L_{c}{c}) = {lambda_max} but r_{c}{c} = {expected}"
            )));
        }
        remove_nearest(&mut values, lambda_max);
        let trivial = values.is_empty();
        let lambda_2 = largest_magnitude(&values);
        let ratio = if trivial || lambda_max <= tol { 0.0 } else { lambda_2.abs() / lambda_max };
        diagonal.push(DiagonalBlock {
            cluster: c,
            size: idx.len(),
            lambda_max,
            expected,
            lambda_2,
            ratio,
            trivial,
        });
    }
    let mut off_diagonal = Vec::new();
    for a in 0..k {
        for b in (a + 1)..k {
            let ia = partition.members(a);
            let ib = partition.members(b);
            let (na, nb) = (ia.len(), ib.len());
            let mut m = DMatrix::zeros(na + nb, na + nb);
            let lab = submatrix(l, ia, ib);
            m.view_mut((0, na), (na, nb)).copy_from(&lab);
            m.view_mut((na, 0), (nb, na)).copy_from(&lab.transpose());
            let mut values = symmetric_eigenvalues(&m)?;
            let mut ascending = values.clone();
            ascending.sort_by(f64::total_cmp);
            let len = ascending.len();
            let pm_asymmetry = (0..len)
                .map(|i| (ascending[i] + ascending[len - 1 - i]).abs())
                .fold(0.0, f64::max);
            let lambda_max = ascending[len - 1];
            let expected = (r[(a, b)] * r[(b, a)]).sqrt();
            if (lambda_max - expected).abs() > tol {
                return Err(Error::FrameMismatch(format!(
                    "lambda_max(M_{a}{b}) = {lambda_max} but sqrt(r_{a}{b} r_{b}{a}) = {expected}"
                )));
            }
            remove_nearest(&mut values, lambda_max);
            remove_nearest(&mut values, -lambda_max);
            let trivial = values.is_empty();
            let lambda_3 = largest_magnitude(&values);
            let ratio = if trivial || lambda_max <= tol { 0.0 } else { lambda_3.abs() / lambda_max };
            off_diagonal.push(OffDiagonalBlock {
                k: a,
                l: b,
                lambda_max,
                expected,
                lambda_3,
                ratio,
                pm_asymmetry,
                trivial,
            });
        }
    }
    let c = diagonal
        .iter()
        .map(|d| d.ratio)
        .chain(off_diagonal.iter().map(|o| o.ratio))
        .fold(0.0, f64::max);
    Ok(BlockAnalysis {
        diagonal,
        off_diagonal,
        c,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpuriousCertificate {
    pub max_spurious: f64,
    pub c: f64,
    pub frame_factor: f64,
    pub bound: f64,
    pub tol: f64,
}

/// Check `max_{j>K} |λ_j| <= c · frame_factor + tol`.
pub fn spurious_bound_certificate(
    analysis: &BlockAnalysis,
    frame: &PreferenceFrame,
    spectrum: &SpectralEmbedding,
    tol: f64,
) -> Result<SpuriousCertificate> {
    if !spectrum.full_spectrum {
        return Err(Error::Config("the spurious-eigenvalue certificate needs the full spectrum".into()));
    }
    let max_spurious = spectrum.spurious().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let factor = frame_factor(frame);
    let bound = analysis.c * factor;
    if max_spurious > bound + tol {
        return Err(Error::CertificateViolation {
            observed: max_spurious,
            bound,
        });
    }
    Ok(SpuriousCertificate {
        max_spurious,
        c: analysis.c,
        frame_factor: factor,
        bound,
        tol,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrthogonalityReport {
    /// `max |x_kᵀ s_k|` over spurious eigenvectors `x` and clusters `k`.
    pub max_abs: f64,
    /// Same, divided by `‖s_k‖`.
    pub max_relative: f64,
}

/// Blockwise inner products of the spurious eigenvectors (columns `K..n`
/// of `spectrum`) with `s_i = √d_i`.
pub fn spurious_orthogonality_check(
    spectrum: &SymmetricSpectrum,
    partition: &Partition,
    degrees: &[f64],
) -> Result<OrthogonalityReport> {
    let n = partition.n();
    if spectrum.vectors.nrows() != n || degrees.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: spectrum.vectors.nrows(),
        });
    }
    let k = partition.k();
    let s: Vec<f64> = degrees.iter().map(|d| d.sqrt()).collect();
    let norms: Vec<f64> = (0..k)
        .map(|c| partition.members(c).iter().map(|&i| s[i] * s[i]).sum::<f64>().sqrt())
        .collect();
    let mut max_abs: f64 = 0.0;
    let mut max_relative: f64 = 0.0;
    for col in k..spectrum.vectors.ncols() {
        let x = spectrum.vectors.column(col);
        for (c, norm) in norms.iter().enumerate() {
            let dot: f64 = partition.members(c).iter().map(|&i| x[i] * s[i]).sum();
            max_abs = max_abs.max(dot.abs());
            max_relative = max_relative.max(dot.abs() / norm);
        }
    }
    Ok(OrthogonalityReport { max_abs, max_relative })
}

/// `‖A − B‖₂`; exact for `n <= dense_limit`, Krylov estimate otherwise.
pub fn spectral_norm_diff(
    a: &dyn SymOperator,
    b: &dyn SymOperator,
    dense_limit: usize,
    opts: &KrylovOptions,
) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    spectral_norm(&Difference { a, b }, dense_limit, opts)
}

/// `Ψ γ² / √(ln n)`.
pub fn concentration_rhs(psi: f64, gamma: f64, n: usize) -> f64 {
    psi * gamma * gamma / (n as f64).ln().sqrt()
}

fn check_same_shape(y: &DMatrix<f64>, y_hat: &DMatrix<f64>) -> Result<()> {
    if y.shape() != y_hat.shape() {
        return Err(Error::DimensionMismatch {
            expected: y.ncols(),
            found: y_hat.ncols(),
        });
    }
    Ok(())
}

/// `min_O ‖Ŷ − Y O‖_F` over orthogonal `O`, attained at the polar factor of `YᵀŶ`.
pub fn subspace_distance(y: &DMatrix<f64>, y_hat: &DMatrix<f64>) -> Result<f64> {
    check_same_shape(y, y_hat)?;
    let o = polar_factor(&(y.transpose() * y_hat));
    Ok((y_hat - y * o).norm())
}

/// `‖Ŷ Λ̂ Ŷᵀ − Y Λ Yᵀ‖_F`, computed in the `2K`-dimensional joint span.
pub fn projection_distance(y: &DMatrix<f64>, lam: &[f64], y_hat: &DMatrix<f64>, lam_hat: &[f64]) -> Result<f64> {
    check_same_shape(y, y_hat)?;
    let k = y.ncols();
    let n = y.nrows();
    let mut g = DMatrix::zeros(n, 2 * k);
    g.view_mut((0, 0), (n, k)).copy_from(y_hat);
    g.view_mut((0, k), (n, k)).copy_from(y);
    let gram = g.transpose() * &g;
    let weights: Vec<f64> = lam_hat.iter().take(k).copied().chain(lam.iter().take(k).map(|v| -v)).collect();
    // ‖G W Gᵀ‖²_F = tr(GᵀG W GᵀG W)
    let mut gw = gram.clone();
    for (c, w) in weights.iter().enumerate() {
        gw.column_mut(c).scale_mut(*w);
    }
    let prod = &gw * &gw;
    Ok(prod.trace().max(0.0).sqrt())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DavisKahanReport {
    pub k: usize,
    pub norm_diff: f64,
    pub delta: f64,
    /// `min_O ‖Ŷ − Y O‖_F`.
    pub distance: f64,
    /// `√(32K) ‖L̂ − L‖ / Δ`.
    pub distance_bound: f64,
    pub distance_holds: bool,
    /// `‖Ŷ Λ̂ Ŷᵀ − Y Λ Yᵀ‖_F`.
    pub projection: f64,
    /// `√(8K) ‖L̂ − L‖`.
    pub projection_bound: f64,
    pub projection_holds: bool,
}

/// Compare observed subspace and projection distances with their
/// perturbation bounds. `delta` is the gap parameter (`λ_K/2` or `σ/2`).
pub fn davis_kahan_report(
    expected: &SpectralEmbedding,
    sampled: &SpectralEmbedding,
    norm_diff: f64,
    delta: f64,
) -> Result<DavisKahanReport> {
    let k = expected.k;
    let distance = subspace_distance(&expected.y, &sampled.y)?;
    let projection = projection_distance(&expected.y, &expected.eigenvalues, &sampled.y, &sampled.eigenvalues)?;
    let distance_bound = (32.0 * k as f64).sqrt() * norm_diff / delta;
    let projection_bound = (8.0 * k as f64).sqrt() * norm_diff;
    Ok(DavisKahanReport {
        k,
        norm_diff,
        delta,
        distance,
        distance_bound,
        distance_holds: distance <= distance_bound,
        projection,
        projection_bound,
        projection_holds: projection <= projection_bound,
    })
}

/// `index,eigenvalue` rows.
pub fn write_spectrum_csv(values: &[f64], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", "eigenvalue"])?;
    for (i, v) in values.iter().enumerate() {
        w.write_record(&[(i + 1).to_string(), format!("{v:.17e}")])?;
    }
    w.flush()?;
    Ok(())
}

/// `node,label,V_1..V_K` rows; `labels` are the true communities for
/// scatter plots.
pub fn write_embedding_csv(v: &DMatrix<f64>, labels: &[usize], path: &Path) -> Result<()> {
    if labels.len() != v.nrows() {
        return Err(Error::SizeMismatch(labels.len(), v.nrows()));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["node".to_string(), "label".to_string()];
    header.extend((1..=v.ncols()).map(|c| format!("V_{c}")));
    w.write_record(&header)?;
    for (i, label) in labels.iter().enumerate() {
        let mut rec = vec![i.to_string(), label.to_string()];
        rec.extend(v.row(i).iter().map(|x| format!("{x:.17e}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
