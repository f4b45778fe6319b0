//! Edge-probability matrices that admit a preference frame: homogeneous
//! (weight-based) models, degree-specified models, stochastic block models,
//! and a block-preserving perturbation that produces general members of the
//! class.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::frame::{build_preference_frame, FrameOptions, PreferenceFrame, Reversibility};
use crate::linalg::SymOperator;

/// Assignment of `n` nodes to `K` nonempty communities.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    labels: Vec<usize>,
    #[serde(skip)]
    members: Vec<Vec<usize>>,
    k: usize,
}

impl Partition {
    pub fn from_labels(labels: Vec<usize>, k: usize) -> Result<Self> {
        let mut members = vec![Vec::new(); k];
        for (node, &l) in labels.iter().enumerate() {
            if l >= k {
                return Err(Error::InvalidLabel { node, label: l, k });
            }
            members[l].push(node);
        }
        if let Some(empty) = members.iter().position(|m| m.is_empty()) {
            return Err(Error::EmptyCluster(empty));
        }
        Ok(Self { labels, members, k })
    }

    /// Contiguous communities: the first `sizes[0]` nodes form community 0, etc.
    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::EmptyCluster(empty));
        }
        let labels = sizes.iter().enumerate().flat_map(|(k, &s)| std::iter::repeat_n(k, s)).collect();
        Self::from_labels(labels, sizes.len())
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, node: usize) -> usize {
        self.labels[node]
    }

    pub fn members(&self, community: usize) -> &[usize] {
        &self.members[community]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }
}

/// Positive node propensities `w_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeWeights(Vec<f64>);

impl NodeWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if let Some((node, &value)) = w.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidWeight { node, value });
        }
        Ok(Self(w))
    }

    /// `n` independent draws from `U(low, high)`.
    pub fn uniform(n: usize, low: f64, high: f64, rng: &mut ChaCha8Rng) -> Result<Self> {
        if !(low > 0.0 && high >= low) {
            return Err(Error::Config(format!("uniform weights need 0 < low <= high, got ({low}, {high})")));
        }
        Self::new((0..n).map(|_| low + (high - low) * rng.random::<f64>()).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn cluster_sums(&self, partition: &Partition) -> Vec<f64> {
        (0..partition.k())
            .map(|k| partition.members(k).iter().map(|&i| self.0[i]).sum())
            .collect()
    }
}

/// Per-community node distributions `π_{C_k}` and total volume `d_tot`.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeSpec {
    pub pi: Vec<Vec<f64>>,
    pub d_tot: f64,
}

impl DegreeSpec {
    pub fn uniform(partition: &Partition, d_tot: f64) -> Self {
        let pi = partition.sizes().iter().map(|&s| vec![1.0 / s as f64; s]).collect();
        Self { pi, d_tot }
    }

    fn validate(&self, partition: &Partition) -> Result<()> {
        if !(self.d_tot.is_finite() && self.d_tot > 0.0) {
            return Err(Error::InvalidSpec(format!("d_tot must be positive, got {}", self.d_tot)));
        }
        if self.pi.len() != partition.k() {
            return Err(Error::InvalidSpec(format!(
                "{} distributions for {} communities",
                self.pi.len(),
                partition.k()
            )));
        }
        for (k, dist) in self.pi.iter().enumerate() {
            if dist.len() != partition.members(k).len() {
                return Err(Error::InvalidSpec(format!(
                    "community {k} has {} nodes but its distribution has {} entries",
                    partition.members(k).len(),
                    dist.len()
                )));
            }
            if dist.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::InvalidSpec(format!("community {k} has a negative entry")));
            }
            let sum: f64 = dist.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidSpec(format!("community {k} distribution sums to {sum}")));
            }
        }
        Ok(())
    }
}

/// Which constructor produced a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Hpfm,
    Pfm,
    Sbm,
    General,
}

/// `S_ij = coeff[c(i), c(j)] · f_i · f_j`, with a zero diagonal when
/// self-loops are excluded. Every closed-form constructor produces this shape.
#[derive(Debug, Clone)]
pub struct BlockRankOne {
    pub coeff: DMatrix<f64>,
    pub factor: Vec<f64>,
    pub zero_diagonal: bool,
}

/// Options shared by all model constructors.
#[derive(Debug, Clone, Copy)]
pub struct ModelOptions {
    pub allow_self_loops: bool,
    pub tol_block: f64,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            allow_self_loops: true,
            tol_block: 1e-9,
        }
    }
}

/// Global multiplier applied to a homogeneous model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scale {
    Fixed(f64),
    /// Choose the multiplier so the smallest expected degree equals the target.
    TargetMinDegree(f64),
}

/// An expected edge-probability matrix together with the frame it admits.
#[derive(Debug, Clone)]
pub struct PfmModel {
    /// The frame `S` admits: `R_lm = Σ_{j∈C_m} P_ij` for `i ∈ C_l`.
    pub frame: PreferenceFrame,
    /// The frame the model was generated from, when it differs in role from
    /// [`Self::frame`] (homogeneous models with arbitrary weights).
    pub generating_frame: Option<PreferenceFrame>,
    pub partition: Partition,
    pub s: DMatrix<f64>,
    pub degrees: Vec<f64>,
    pub d_tot: f64,
    pub cluster_volumes: Vec<f64>,
    pub d_min: f64,
    /// `max_ij n · S_ij`.
    pub d_max_scaled: f64,
    pub allow_self_loops: bool,
    pub kind: ModelKind,
    pub structure: Option<BlockRankOne>,
    /// Largest deviation found by [`verify_block_stochastic`].
    pub block_residual: f64,
    /// Multiplier applied to homogeneous models (1 otherwise).
    pub scale: f64,
    hash: OnceLock<String>,
}

impl PfmModel {
    /// Validate `s` against `partition` and derive the admitted frame.
    pub fn from_matrix(
        s: DMatrix<f64>,
        partition: Partition,
        kind: ModelKind,
        opts: ModelOptions,
        structure: Option<BlockRankOne>,
    ) -> Result<Self> {
        let n = partition.n();
        if s.nrows() != n || s.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: s.nrows(),
            });
        }
        let mut worst = (0, 0, f64::NEG_INFINITY);
        for j in 0..n {
            for i in 0..n {
                let v = s[(i, j)];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidEntry { row: i, col: j, value: v });
                }
                if v != s[(j, i)] {
                    return Err(Error::InvalidEntry { row: i, col: j, value: v });
                }
                if v > worst.2 {
                    worst = (i, j, v);
                }
            }
        }
        if worst.2 > 1.0 {
            return Err(Error::ProbabilityOverflow {
                row: worst.0,
                col: worst.1,
                max_value: worst.2,
            });
        }
        let (r_hat, residual) = verify_block_stochastic(&s, &partition)?;
        if residual > opts.tol_block {
            return Err(Error::NotBlockStochastic {
                residual,
                tol: opts.tol_block,
            });
        }
        let frame_opts = FrameOptions {
            row_normalize: true,
            tol_stoch_raw: Some(1e-6),
            ..FrameOptions::default()
        };
        let frame = build_preference_frame(&r_hat, &frame_opts)?;
        let degrees: Vec<f64> = (0..n).map(|i| s.column(i).sum()).collect();
        let d_tot = degrees.iter().sum();
        let cluster_volumes = (0..partition.k())
            .map(|k| partition.members(k).iter().map(|&i| degrees[i]).sum())
            .collect();
        let d_min = degrees.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Self {
            frame,
            generating_frame: None,
            partition,
            d_max_scaled: n as f64 * worst.2,
            s,
            degrees,
            d_tot,
            cluster_volumes,
            d_min,
            allow_self_loops: opts.allow_self_loops,
            kind,
            structure,
            block_residual: residual,
            scale: 1.0,
            hash: OnceLock::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.partition.n()
    }

    pub fn k(&self) -> usize {
        self.partition.k()
    }

    pub fn max_probability(&self) -> f64 {
        self.d_max_scaled / self.n() as f64
    }

    /// Row-stochastic `P = D⁻¹ S` (dense).
    pub fn transition_matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| self.s[(i, j)] / self.degrees[i])
    }

    /// Dense expected Laplacian `L = D^{-1/2} S D^{-1/2}`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.n();
        let inv: Vec<f64> = self.degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
        DMatrix::from_fn(n, n, |i, j| inv[i] * self.s[(i, j)] * inv[j])
    }

    /// Expected Laplacian as a matrix-free operator (`O(nK)` per product when
    /// the model has block rank-one structure).
    pub fn laplacian_operator(&self) -> ExpectedLaplacian<'_> {
        ExpectedLaplacian {
            model: self,
            inv_sqrt_deg: self.degrees.iter().map(|d| 1.0 / d.sqrt()).collect(),
        }
    }

    /// SHA-256 of the partition and the little-endian bytes of `S`.
    pub fn content_hash(&self) -> &str {
        self.hash.get_or_init(|| {
            let mut h = Sha256::new();
            h.update((self.n() as u64).to_le_bytes());
            for &l in self.partition.labels() {
                h.update((l as u64).to_le_bytes());
            }
            for v in self.s.iter() {
                h.update(v.to_le_bytes());
            }
            h.finalize().iter().map(|b| format!("{b:02x}")).collect()
        })
    }
}

/// Matrix-free expected Laplacian of a [`PfmModel`].
pub struct ExpectedLaplacian<'a> {
    model: &'a PfmModel,
    inv_sqrt_deg: Vec<f64>,
}

impl SymOperator for ExpectedLaplacian<'_> {
    fn dim(&self) -> usize {
        self.model.n()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let scaled: Vec<f64> = x.iter().zip(&self.inv_sqrt_deg).map(|(a, b)| a * b).collect();
        match &self.model.structure {
            Some(st) => {
                let labels = self.model.partition.labels();
                let k = self.model.k();
                let mut agg = vec![0.0; k];
                for (i, &l) in labels.iter().enumerate() {
                    agg[l] += st.factor[i] * scaled[i];
                }
                let mixed: Vec<f64> = (0..k)
                    .map(|a| (0..k).map(|b| st.coeff[(a, b)] * agg[b]).sum())
                    .collect();
                for (i, &l) in labels.iter().enumerate() {
                    let mut v = st.factor[i] * mixed[l];
                    if st.zero_diagonal {
                        v -= st.coeff[(l, l)] * st.factor[i] * st.factor[i] * scaled[i];
                    }
                    y[i] = v * self.inv_sqrt_deg[i];
                }
            }
            None => {
                self.model.s.apply(&scaled, y);
                y.iter_mut().zip(&self.inv_sqrt_deg).for_each(|(a, b)| *a *= b);
            }
        }
    }
}

fn structured_matrix(partition: &Partition, st: &BlockRankOne) -> DMatrix<f64> {
    let n = partition.n();
    let labels = partition.labels();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j && st.zero_diagonal {
            0.0
        } else {
            // order the product so S is bitwise symmetric
            let (a, b) = if i <= j { (i, j) } else { (j, i) };
            st.coeff[(labels[a], labels[b])] * st.factor[a] * st.factor[b]
        }
    })
}

/// `K×K` symmetric coefficients from the upper triangle of `entry(l, m)`.
fn upper_symmetric(k: usize, entry: impl Fn(usize, usize) -> f64) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(k, k);
    for l in 0..k {
        for m in l..k {
            let v = entry(l, m);
            c[(l, m)] = v;
            c[(m, l)] = v;
        }
    }
    c
}

fn check_partition(frame: &PreferenceFrame, partition: &Partition) -> Result<()> {
    if frame.k() != partition.k() {
        return Err(Error::DimensionMismatch {
            expected: frame.k(),
            found: partition.k(),
        });
    }
    Ok(())
}

/// Homogeneous model: `S_ij = α · R_ml w_i w_j / ρ_l` for `i ∈ C_l`, `j ∈ C_m`,
/// `l <= m`, mirrored below the diagonal.
///
/// The result admits the frame `R'_lm ∝ R_lm w_{C_m} / ρ_m`, which equals the
/// generating frame exactly when `w_{C_l} ∝ ρ_l`. The admitted frame is
/// stored in [`PfmModel::frame`], the input in [`PfmModel::generating_frame`].
pub fn hpfm_matrix(
    frame: &PreferenceFrame,
    partition: &Partition,
    weights: &NodeWeights,
    scale: Scale,
    opts: ModelOptions,
) -> Result<PfmModel> {
    check_partition(frame, partition)?;
    let n = partition.n();
    if weights.values().len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: weights.values().len(),
        });
    }
    let r = frame.r();
    let rho = frame.rho();
    let base = upper_symmetric(frame.k(), |l, m| r[(m, l)] / rho[l]);
    let w = weights.values();
    let alpha = match scale {
        Scale::Fixed(a) => a,
        Scale::TargetMinDegree(target) => {
            let sums = weights.cluster_sums(partition);
            let labels = partition.labels();
            let unscaled_min = (0..n)
                .map(|i| {
                    let l = labels[i];
                    let mut d = w[i] * (0..frame.k()).map(|m| base[(l, m)] * sums[m]).sum::<f64>();
                    if !opts.allow_self_loops {
                        d -= base[(l, l)] * w[i] * w[i];
                    }
                    d
                })
                .fold(f64::INFINITY, f64::min);
            target / unscaled_min
        }
    };
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::Config(format!("invalid scale {alpha}")));
    }
    let structure = BlockRankOne {
        coeff: base * alpha,
        factor: w.to_vec(),
        zero_diagonal: !opts.allow_self_loops,
    };
    let s = structured_matrix(partition, &structure);
    let mut model = PfmModel::from_matrix(s, partition.clone(), ModelKind::Hpfm, opts, Some(structure))?;
    model.generating_frame = Some(frame.clone());
    model.scale = alpha;
    Ok(model)
}

/// Degree-specified model: `P_ij = R_kl π_{C_l,j}` for `i ∈ C_k`, `j ∈ C_l`,
/// `d_i = d_tot ρ_k π_{C_k,i}`, `S = D P`.
pub fn pfm_from_degrees(frame: &PreferenceFrame, partition: &Partition, spec: &DegreeSpec) -> Result<PfmModel> {
    check_partition(frame, partition)?;
    spec.validate(partition)?;
    let r = frame.r();
    let rho = frame.rho();
    let coeff = upper_symmetric(frame.k(), |l, m| spec.d_tot * rho[l] * r[(l, m)]);
    let mut factor = vec![0.0; partition.n()];
    for k in 0..partition.k() {
        for (pos, &i) in partition.members(k).iter().enumerate() {
            factor[i] = spec.pi[k][pos];
        }
    }
    if let Some(i) = factor.iter().position(|p| *p == 0.0) {
        return Err(Error::ZeroDegreeRow { nodes: vec![i] });
    }
    let structure = BlockRankOne {
        coeff,
        factor,
        zero_diagonal: false,
    };
    let s = structured_matrix(partition, &structure);
    let mut model = PfmModel::from_matrix(
        s,
        partition.clone(),
        ModelKind::Pfm,
        ModelOptions::default(),
        Some(structure),
    )?;
    model.generating_frame = Some(frame.clone());
    Ok(model)
}

/// Stochastic block model with symmetric connectivity matrix `B`.
pub fn sbm_model(b: &DMatrix<f64>, partition: &Partition, allow_self_loops: bool) -> Result<PfmModel> {
    let k = partition.k();
    if b.nrows() != k || b.ncols() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: b.nrows(),
        });
    }
    for i in 0..k {
        for j in 0..k {
            let v = b[(i, j)];
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidProbability(format!("B[{i},{j}] = {v}")));
            }
            if v != b[(j, i)] {
                return Err(Error::InvalidProbability(format!("B is not symmetric at ({i},{j})")));
            }
        }
    }
    let structure = BlockRankOne {
        coeff: b.clone(),
        factor: vec![1.0; partition.n()],
        zero_diagonal: !allow_self_loops,
    };
    let s = structured_matrix(partition, &structure);
    let opts = ModelOptions {
        allow_self_loops,
        ..ModelOptions::default()
    };
    PfmModel::from_matrix(s, partition.clone(), ModelKind::Sbm, opts, Some(structure))
}

/// Closed-form frame of SBM(p, q) without self-loops:
/// `d_{C_l} = p(n_l − 1) + q(n − n_l)`, `R_ll = p(n_l − 1)/d_{C_l}`,
/// `R_lm = q n_m / d_{C_l}`.
pub fn sbm_pq_frame(p: f64, q: f64, sizes: &[usize]) -> Result<PreferenceFrame> {
    for (name, v) in [("p", p), ("q", q)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidProbability(format!("{name} = {v}")));
        }
    }
    let r = sbm_pq_transition(p, q, sizes)?;
    build_preference_frame(&r, &FrameOptions::default())
}

/// The raw SBM(p, q) frame matrix, before validation.
pub fn sbm_pq_transition(p: f64, q: f64, sizes: &[usize]) -> Result<DMatrix<f64>> {
    let n: usize = sizes.iter().sum();
    let k = sizes.len();
    let degree: Vec<f64> = sizes
        .iter()
        .map(|&nl| p * (nl as f64 - 1.0) + q * (n - nl) as f64)
        .collect();
    if let Some(l) = degree.iter().position(|d| *d <= 0.0) {
        return Err(Error::ZeroDegreeRow { nodes: vec![l] });
    }
    Ok(DMatrix::from_fn(k, k, |l, m| {
        if l == m {
            p * (sizes[l] as f64 - 1.0) / degree[l]
        } else {
            q * sizes[m] as f64 / degree[l]
        }
    }))
}

/// Per-node, per-community transition mass `Σ_{j∈C_m} P_ij`, averaged into
/// `R̂_lm` over `i ∈ C_l`, and the largest deviation of any node from its
/// community average.
pub fn verify_block_stochastic(s: &DMatrix<f64>, partition: &Partition) -> Result<(DMatrix<f64>, f64)> {
    let n = partition.n();
    let k = partition.k();
    if s.nrows() != n || s.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: s.nrows(),
        });
    }
    let labels = partition.labels();
    // column i of S is row i (S symmetric is not assumed here: use rows)
    let mut mass = vec![0.0; n * k];
    let mut zero = Vec::new();
    for i in 0..n {
        let row = s.row(i);
        let d: f64 = row.sum();
        if d <= 0.0 {
            zero.push(i);
            continue;
        }
        for (j, v) in row.iter().enumerate() {
            mass[i * k + labels[j]] += v;
        }
        for m in 0..k {
            mass[i * k + m] /= d;
        }
    }
    if !zero.is_empty() {
        return Err(Error::ZeroDegreeRow { nodes: zero });
    }
    let mut r_hat = DMatrix::zeros(k, k);
    for l in 0..k {
        let members = partition.members(l);
        for m in 0..k {
            r_hat[(l, m)] = members.iter().map(|&i| mass[i * k + m]).sum::<f64>() / members.len() as f64;
        }
    }
    let mut residual: f64 = 0.0;
    for i in 0..n {
        for m in 0..k {
            residual = residual.max((mass[i * k + m] - r_hat[(labels[i], m)]).abs());
        }
    }
    Ok((r_hat, residual))
}

fn centered_unit(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let mean = v.iter().sum::<f64>() / len as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    let amax = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if amax > 0.0 {
        v.iter_mut().for_each(|x| *x /= amax);
    }
    v
}

/// Add to every block `S_kl` a rank-one (rank-two on diagonal blocks) term
/// with zero row and column sums. Degrees, block sums and therefore the
/// admitted frame are unchanged, but blocks stop being rank one, so the
/// expected Laplacian acquires nonzero spurious eigenvalues.
///
/// `amplitude ∈ [0, 1)` bounds each perturbation relative to the smallest
/// entry of its block, which keeps `S` nonnegative.
pub fn perturb_blocks(model: &PfmModel, amplitude: f64, rng: &mut ChaCha8Rng) -> Result<PfmModel> {
    if !(0.0..1.0).contains(&amplitude) {
        return Err(Error::Config(format!("perturbation amplitude must be in [0, 1), got {amplitude}")));
    }
    let p = &model.partition;
    let k = p.k();
    let mut s = model.s.clone();
    for a in 0..k {
        for b in a..k {
            let rows = p.members(a);
            let cols = p.members(b);
            if rows.len() < 2 || cols.len() < 2 {
                continue;
            }
            let u = centered_unit(rows.len(), rng);
            let v = centered_unit(cols.len(), rng);
            let term = |x: usize, y: usize| {
                if a == b {
                    u[x] * v[y] + v[x] * u[y]
                } else {
                    u[x] * v[y]
                }
            };
            let mut min_entry = f64::INFINITY;
            let mut max_term: f64 = 0.0;
            for (x, &i) in rows.iter().enumerate() {
                for (y, &j) in cols.iter().enumerate() {
                    if i == j && !model.allow_self_loops {
                        continue;
                    }
                    min_entry = min_entry.min(s[(i, j)]);
                    max_term = max_term.max(term(x, y).abs());
                }
            }
            if max_term == 0.0 || min_entry <= 0.0 {
                continue;
            }
            let eps = amplitude * min_entry / max_term;
            for (x, &i) in rows.iter().enumerate() {
                for (y, &j) in cols.iter().enumerate() {
                    if a == b && y < x {
                        continue;
                    }
                    let delta = eps * term(x, y);
                    s[(i, j)] += delta;
                    if i != j {
                        s[(j, i)] = s[(i, j)];
                    }
                }
            }
        }
    }
    let opts = ModelOptions {
        allow_self_loops: model.allow_self_loops,
        tol_block: 1e-9,
    };
    let mut out = PfmModel::from_matrix(s, p.clone(), ModelKind::General, opts, None)?;
    out.generating_frame = model.generating_frame.clone();
    Ok(out)
}

/// Options for frames that are only approximately reversible.
pub fn lenient_frame_options() -> FrameOptions {
    FrameOptions {
        reversibility: Reversibility::Warn,
        ..FrameOptions::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    fn frame2() -> PreferenceFrame {
        let r = DMatrix::from_row_slice(2, 2, &[0.8, 0.2, 0.2, 0.8]);
        build_preference_frame(&r, &FrameOptions::default()).unwrap()
    }

    #[test]
    fn single_community_is_outer_product() {
        let f = build_preference_frame(&DMatrix::from_element(1, 1, 1.0), &FrameOptions::default()).unwrap();
        let p = Partition::from_sizes(&[2]).unwrap();
        let w = NodeWeights::new(vec![0.3, 0.5]).unwrap();
        let m = hpfm_matrix(&f, &p, &w, Scale::Fixed(1.0), ModelOptions::default()).unwrap();
        assert_abs_diff_eq!(m.s[(0, 0)], 0.09, epsilon = 1e-15);
        assert_abs_diff_eq!(m.s[(0, 1)], 0.15, epsilon = 1e-15);
        assert_abs_diff_eq!(m.s[(1, 1)], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn uniform_degree_spec_gives_constant_blocks() {
        let p = Partition::from_sizes(&[4, 4]).unwrap();
        let m = pfm_from_degrees(&frame2(), &p, &DegreeSpec::uniform(&p, 16.0)).unwrap();
        for d in &m.degrees {
            assert_abs_diff_eq!(*d, 2.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(m.s[(0, 1)], 0.4, epsilon = 1e-14);
        assert_abs_diff_eq!(m.s[(0, 5)], 0.1, epsilon = 1e-14);
    }

    #[test]
    fn overflow_is_reported() {
        let p = Partition::from_sizes(&[2, 2]).unwrap();
        let err = pfm_from_degrees(&frame2(), &p, &DegreeSpec::uniform(&p, 100.0)).unwrap_err();
        assert!(matches!(err, Error::ProbabilityOverflow { .. }));
    }

    #[test]
    fn invalid_spec_rejected() {
        let p = Partition::from_sizes(&[2, 2]).unwrap();
        let spec = DegreeSpec {
            pi: vec![vec![0.5, 0.6], vec![0.5, 0.5]],
            d_tot: 1.0,
        };
        assert!(matches!(pfm_from_degrees(&frame2(), &p, &spec), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn empty_cluster_rejected() {
        assert!(matches!(Partition::from_sizes(&[3, 0]), Err(Error::EmptyCluster(1))));
        assert!(matches!(Partition::from_labels(vec![0, 0, 2], 3), Err(Error::EmptyCluster(1))));
    }

    #[test]
    fn sbm_pq_closed_form() {
        // d = 0.5·9 + 0.1·10 = 5.5
        let r = sbm_pq_transition(0.5, 0.1, &[10, 10]).unwrap();
        assert_abs_diff_eq!(r[(0, 0)], 4.5 / 5.5, epsilon = 1e-15);
        assert_abs_diff_eq!(r[(0, 1)], 1.0 / 5.5, epsilon = 1e-15);
        let p = Partition::from_sizes(&[10, 10]).unwrap();
        let b = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.5]);
        let m = sbm_model(&b, &p, false).unwrap();
        for d in &m.degrees {
            assert_abs_diff_eq!(*d, 5.5, epsilon = 1e-12);
        }
        assert!((m.frame.r() - &r).amax() < 1e-12);
    }

    #[test]
    fn sbm_equal_pq_with_self_loops_is_singular() {
        let p = Partition::from_sizes(&[5, 5]).unwrap();
        let b = DMatrix::from_element(2, 2, 0.3);
        assert!(matches!(sbm_model(&b, &p, true), Err(Error::Singular { .. })));
    }

    #[test]
    fn perturbed_entry_breaks_block_stochasticity() {
        let p = Partition::from_sizes(&[3, 3]).unwrap();
        let m = pfm_from_degrees(&frame2(), &p, &DegreeSpec::uniform(&p, 6.0)).unwrap();
        let mut s = m.s.clone();
        s[(0, 1)] += 0.1;
        s[(1, 0)] += 0.1;
        let (_, residual) = verify_block_stochastic(&s, &p).unwrap();
        assert!(residual > 1e-2);
        let err = PfmModel::from_matrix(s, p, ModelKind::General, ModelOptions::default(), None).unwrap_err();
        assert!(matches!(err, Error::NotBlockStochastic { .. }));
    }

    #[test]
    fn zero_row_reported() {
        let p = Partition::from_sizes(&[1, 1]).unwrap();
        let s = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            verify_block_stochastic(&s, &p),
            Err(Error::ZeroDegreeRow { nodes }) if nodes == vec![0]
        ));
    }

    #[test]
    fn perturbation_preserves_degrees_and_frame() {
        let p = Partition::from_sizes(&[6, 8]).unwrap();
        let m = pfm_from_degrees(&frame2(), &p, &DegreeSpec::uniform(&p, 20.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = perturb_blocks(&m, 0.5, &mut rng).unwrap();
        for (a, b) in g.degrees.iter().zip(&m.degrees) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        assert!((g.frame.r() - m.frame.r()).amax() < 1e-12);
        assert!((&g.s - &m.s).amax() > 1e-3);
    }

    #[test]
    fn operator_matches_dense_laplacian() {
        let p = Partition::from_sizes(&[3, 4]).unwrap();
        let b = DMatrix::from_row_slice(2, 2, &[0.6, 0.2, 0.2, 0.7]);
        let m = sbm_model(&b, &p, false).unwrap();
        let x: Vec<f64> = (0..7).map(|i| (i as f64).sin()).collect();
        let mut y1 = vec![0.0; 7];
        let mut y2 = vec![0.0; 7];
        m.laplacian_operator().apply(&x, &mut y1);
        m.laplacian().apply(&x, &mut y2);
        for (a, b) in y1.iter().zip(&y2) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
    }
}
