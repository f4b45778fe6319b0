//! Preference frames: reversible, nonsingular stochastic matrices on `K`
//! communities, together with their stationary distribution and spectrum.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{magnitude_permutation, normalize_sign, symmetric_spectrum};

/// How a detailed-balance violation is treated during validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Reversibility {
    #[default]
    Strict,
    /// Record the violation and continue. Used for printed frames that are
    /// only reversible up to rounding.
    Warn,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOptions {
    pub row_normalize: bool,
    /// Row-sum tolerance once the matrix is (or is required to be) stochastic.
    pub tol_stoch: f64,
    /// Largest raw row-sum deviation accepted before normalization;
    /// `None` accepts any positive row sums.
    pub tol_stoch_raw: Option<f64>,
    pub tol_rev: f64,
    pub reversibility: Reversibility,
    pub tol_sing: f64,
    pub tol_eig: f64,
}

impl Default for FrameOptions {
    fn default() -> Self {
        Self {
            row_normalize: true,
            tol_stoch: 1e-12,
            tol_stoch_raw: Some(2e-2),
            tol_rev: 1e-8,
            reversibility: Reversibility::Strict,
            tol_sing: 1e-10,
            tol_eig: 1e-9,
        }
    }
}

/// A validated `K`-preference frame.
#[derive(Debug, Clone)]
pub struct PreferenceFrame {
    r: DMatrix<f64>,
    rho: Vec<f64>,
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
    /// max_k |raw row sum - 1| before normalization.
    pub row_correction: f64,
    /// max_{k,l} |ρ_k r_kl − ρ_l r_lk|.
    pub reversibility_violation: f64,
    pub min_singular_value: f64,
}

/// Serialized form of a frame. Derived quantities are always recomputed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSpec {
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
    #[serde(default = "default_true")]
    pub row_normalize: bool,
    #[serde(default)]
    pub reversibility: Reversibility,
}

fn default_true() -> bool {
    true
}

impl FrameSpec {
    pub fn build(&self) -> Result<PreferenceFrame> {
        let k = self.r.len();
        let mut m = DMatrix::zeros(k, k);
        for (i, row) in self.r.iter().enumerate() {
            if row.len() != k {
                return Err(Error::NotSquare { rows: k, cols: row.len() });
            }
            for (j, v) in row.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        let opts = FrameOptions {
            row_normalize: self.row_normalize,
            reversibility: self.reversibility,
            ..FrameOptions::default()
        };
        build_preference_frame(&m, &opts)
    }
}

pub(crate) fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Validate `r_raw` and build a frame from it.
pub fn build_preference_frame(r_raw: &DMatrix<f64>, opts: &FrameOptions) -> Result<PreferenceFrame> {
    if !r_raw.is_square() || r_raw.nrows() == 0 {
        return Err(Error::NotSquare {
            rows: r_raw.nrows(),
            cols: r_raw.ncols(),
        });
    }
    let k = r_raw.nrows();
    for i in 0..k {
        for j in 0..k {
            let v = r_raw[(i, j)];
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidEntry { row: i, col: j, value: v });
            }
        }
    }
    let mut r = r_raw.clone();
    let mut row_correction: f64 = 0.0;
    for i in 0..k {
        let sum: f64 = r.row(i).sum();
        if sum <= 0.0 {
            return Err(Error::NotStochastic {
                row: i,
                sum,
                tol: opts.tol_stoch,
            });
        }
        let dev = (sum - 1.0).abs();
        row_correction = row_correction.max(dev);
        if opts.row_normalize {
            if let Some(raw_tol) = opts.tol_stoch_raw {
                if dev > raw_tol {
                    return Err(Error::NotStochastic { row: i, sum, tol: raw_tol });
                }
            }
            r.row_mut(i).iter_mut().for_each(|x| *x /= sum);
        } else if dev > opts.tol_stoch {
            return Err(Error::NotStochastic {
                row: i,
                sum,
                tol: opts.tol_stoch,
            });
        }
    }
    if opts.row_normalize && row_correction > 1e-9 {
        warn!("frame rows renormalized (max row-sum correction {row_correction:.3e})");
    }

    let min_singular_value = r.clone().svd(false, false).singular_values.min();
    if min_singular_value <= opts.tol_sing {
        return Err(Error::Singular {
            min_singular: min_singular_value,
        });
    }

    let rho = stationary_distribution(&r)?;

    let mut violation: f64 = 0.0;
    for a in 0..k {
        for b in 0..k {
            violation = violation.max((rho[a] * r[(a, b)] - rho[b] * r[(b, a)]).abs());
        }
    }
    if violation > opts.tol_rev {
        match opts.reversibility {
            Reversibility::Strict => {
                return Err(Error::NotReversible {
                    violation,
                    tol: opts.tol_rev,
                })
            }
            Reversibility::Warn => warn!("frame violates detailed balance by {violation:.3e}"),
        }
    }

    let (eigenvalues, eigenvectors) = if violation <= opts.tol_rev {
        reversible_eigen(&r, &rho)?
    } else {
        general_real_eigen(&r)?
    };

    let unit = eigenvalues.iter().filter(|l| (l.abs() - 1.0).abs() <= opts.tol_sing).count();
    if unit > 1 {
        return Err(Error::DisconnectedFrame { multiplicity: unit });
    }

    Ok(PreferenceFrame {
        r,
        rho,
        eigenvalues,
        eigenvectors,
        row_correction,
        reversibility_violation: violation,
        min_singular_value,
    })
}

fn reversible_eigen(r: &DMatrix<f64>, rho: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let k = r.nrows();
    let b = symmetrize(r, rho);
    let spec = symmetric_spectrum(&b)?;
    let mut vecs = DMatrix::zeros(k, k);
    for c in 0..k {
        let mut nu: Vec<f64> = (0..k).map(|i| spec.vectors[(i, c)] / rho[i].sqrt()).collect();
        let norm = nu.iter().map(|x| x * x).sum::<f64>().sqrt();
        nu.iter_mut().for_each(|x| *x /= norm);
        normalize_sign(&mut nu);
        vecs.set_column(c, &DVector::from_vec(nu));
    }
    Ok((spec.values, vecs))
}

/// Eigenpairs of a stochastic matrix that is only approximately reversible.
/// Eigenvalues come from the real Schur form; each eigenvector is the right
/// singular vector of `R - λI` with smallest singular value.
fn general_real_eigen(r: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let k = r.nrows();
    let complex = r.complex_eigenvalues();
    let mut values = Vec::with_capacity(k);
    for z in complex.iter() {
        if z.im.abs() > 1e-8 {
            return Err(Error::NotReversible {
                violation: z.im.abs(),
                tol: 1e-8,
            });
        }
        values.push(z.re);
    }
    let perm = magnitude_permutation(&values);
    let values: Vec<f64> = perm.iter().map(|&i| values[i]).collect();
    let mut vecs = DMatrix::zeros(k, k);
    for (c, &lambda) in values.iter().enumerate() {
        let shifted = r - DMatrix::identity(k, k) * lambda;
        let svd = shifted.svd(false, true);
        let vt = svd.v_t.expect("v_t requested");
        let (idx, _) = svd.singular_values.argmin();
        let mut nu: Vec<f64> = vt.row(idx).iter().copied().collect();
        normalize_sign(&mut nu);
        vecs.set_column(c, &DVector::from_vec(nu));
    }
    Ok((values, vecs))
}

/// `diag(ρ)^{1/2} R diag(ρ)^{-1/2}`, averaged with its transpose to remove
/// rounding asymmetry.
pub fn symmetrize(r: &DMatrix<f64>, rho: &[f64]) -> DMatrix<f64> {
    let k = r.nrows();
    let b = DMatrix::from_fn(k, k, |i, j| rho[i].sqrt() * r[(i, j)] / rho[j].sqrt());
    (&b + b.transpose()) * 0.5
}

/// Left principal eigenvector of a row-stochastic matrix, normalized to sum
/// one. Solves `(Rᵀ − I) x = 0` with the normalization row appended.
pub fn stationary_distribution(r: &DMatrix<f64>) -> Result<Vec<f64>> {
    if !r.is_square() {
        return Err(Error::NotSquare {
            rows: r.nrows(),
            cols: r.ncols(),
        });
    }
    let k = r.nrows();
    let shifted = r.transpose() - DMatrix::identity(k, k);
    let sv = shifted.clone().svd(false, false).singular_values;
    let scale = 1e-10 * r.norm().max(1.0);
    let null_dim = sv.iter().filter(|s| **s <= scale).count();
    if null_dim > 1 {
        return Err(Error::DisconnectedFrame {
            multiplicity: null_dim,
        });
    }
    let mut system = DMatrix::zeros(k + 1, k);
    system.view_mut((0, 0), (k, k)).copy_from(&shifted);
    system.row_mut(k).fill(1.0);
    let mut rhs = DVector::zeros(k + 1);
    rhs[k] = 1.0;
    let svd = system.svd(true, true);
    let x = svd
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::NoConvergence(format!("stationary solve: {e}")))?;
    let mut rho: Vec<f64> = x.iter().copied().collect();
    if rho.iter().any(|v| *v < -1e-10) {
        return Err(Error::NoConvergence(format!("stationary vector has negative entries: {rho:?}")));
    }
    rho.iter_mut().for_each(|v| *v = v.max(0.0));
    let sum: f64 = rho.iter().sum();
    rho.iter_mut().for_each(|v| *v /= sum);
    Ok(rho)
}

impl PreferenceFrame {
    pub fn k(&self) -> usize {
        self.r.nrows()
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Right eigenvectors of `R`, one per column, aligned with [`Self::eigenvalues`].
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn is_reversible(&self, tol: f64) -> bool {
        self.reversibility_violation <= tol
    }

    pub fn symmetrized(&self) -> DMatrix<f64> {
        symmetrize(&self.r, &self.rho)
    }

    /// `‖ρᵀR − ρᵀ‖∞`.
    pub fn stationarity_residual(&self) -> f64 {
        let k = self.k();
        (0..k)
            .map(|l| ((0..k).map(|m| self.rho[m] * self.r[(m, l)]).sum::<f64>() - self.rho[l]).abs())
            .fold(0.0, f64::max)
    }

    pub fn spec(&self) -> FrameSpec {
        FrameSpec {
            r: matrix_to_rows(&self.r),
            row_normalize: false,
            reversibility: if self.reversibility_violation > FrameOptions::default().tol_rev {
                Reversibility::Warn
            } else {
                Reversibility::Strict
            },
        }
    }
}

/// `max_k ( r_kk + Σ_{l≠k} √(r_kl r_lk) )`, the frame-dependent factor in
/// the spurious-eigenvalue bound.
pub fn frame_factor(frame: &PreferenceFrame) -> f64 {
    frame_factor_of(frame.r())
}

pub fn frame_factor_of(r: &DMatrix<f64>) -> f64 {
    let k = r.nrows();
    (0..k)
        .map(|a| {
            r[(a, a)]
                + (0..k)
                    .filter(|&b| b != a)
                    .map(|b| (r[(a, b)] * r[(b, a)]).sqrt())
                    .sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Cauchy–Schwarz relaxation of [`frame_factor`]: `max_k √(Σ_l r_lk)`.
pub fn column_sum_bound(frame: &PreferenceFrame) -> f64 {
    let r = frame.r();
    (0..r.ncols())
        .map(|c| r.column(c).sum().sqrt())
        .fold(f64::NEG_INFINITY, f64::max)
}
