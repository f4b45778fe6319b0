//! End-to-end experiments: build a model, draw replicate graphs, cluster
//! them, and evaluate every diagnostic. Output files are written once, after
//! all replicates finish.

use std::io::Write;
use std::path::{Path, PathBuf};

use log::info;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::clustering::{kmeans, Clustering, min_cross_cluster_distance2, misclustering_rate, separation_gmax, KmeansOptions, SeparationReport};
use crate::config::{ModelConfig, ModelType, WeightsConfig, Distribution};
use crate::error::{Error, Result};
use crate::frame::{FrameSpec, PreferenceFrame, Reversibility};
use crate::linalg::{symmetric_spectrum, CsrMatrix, KrylovOptions};
use crate::models::{ModelKind, PfmModel};
use crate::par::{derive_seed, map_indexed, with_jobs, Execution};
use crate::sampling::{degree_concentration_check, sample_adjacency, SampledGraph};
use crate::spectral::{
    block_analysis, concentration_rhs, davis_kahan_report, piecewise_constant_check, spectral_norm_diff,
    spurious_bound_certificate, spurious_orthogonality_check, top_k_eigen, top_k_eigen_krylov, write_embedding_csv,
    BlockAnalysis, DavisKahanReport, OrthogonalityReport, SpectralEmbedding, SpuriousCertificate,
};
use crate::theory::{
    check_assumptions, related_work, theorem3_bound, AssumptionInputs, AssumptionReport, BoundInputs, BoundReport,
    BoundVariant, RelatedWorkReport, TheoryConstants, Verdict,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KmeansSettings {
    pub restarts: usize,
    pub max_iter: usize,
    pub row_normalize: bool,
}

impl Default for KmeansSettings {
    fn default() -> Self {
        Self {
            restarts: 50,
            max_iter: 300,
            row_normalize: false,
        }
    }
}

/// Eigensolver selection: dense decompositions up to `dense_limit` nodes,
/// Krylov iterations above.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub dense_limit: usize,
    pub krylov_max_dim: usize,
    pub krylov_tol: f64,
    /// Ritz-value stagnation tolerance for norms and trailing eigenvalues.
    pub ritz_rel_tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            dense_limit: 600,
            krylov_max_dim: 600,
            krylov_tol: 1e-9,
            ritz_rel_tol: 1e-6,
        }
    }
}

impl SolverSettings {
    fn krylov(&self) -> KrylovOptions {
        KrylovOptions {
            max_dim: self.krylov_max_dim,
            tol: self.krylov_tol,
            ritz_rel_tol: self.ritz_rel_tol,
            ..KrylovOptions::default()
        }
    }
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    /// Number of clusters sought; must match the model when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub seed: u64,
    #[serde(default = "one")]
    pub replicates: usize,
    #[serde(default)]
    pub kmeans: KmeansSettings,
    #[serde(default)]
    pub constants: TheoryConstants,
    /// Cluster the expected embedding instead of sampled graphs.
    #[serde(default)]
    pub expected_model: bool,
    /// Defaults to the homogeneous variant for homogeneous models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound_variant: Option<BoundVariant>,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.kmeans.restarts == 0 {
            return Err(Error::Config("kmeans.restarts must be at least 1".into()));
        }
        if let Some(k) = self.k {
            if k != self.model.sizes.len() {
                return Err(Error::Config(format!(
                    "k = {k} but the model has {} communities",
                    self.model.sizes.len()
                )));
            }
        }
        Ok(())
    }
}

/// Read a model config, either bare or as the `model` field of an
/// experiment config.
pub fn load_model_config(path: &Path) -> Result<ModelConfig> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    match value.get("model") {
        Some(inner) if value.get("seed").is_some() => Ok(serde_json::from_value(inner.clone())?),
        _ => Ok(serde_json::from_value(value)?),
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub execution: Execution,
    /// Thread limit for replicate-level parallelism.
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSummary {
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
    pub rho: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub reversibility_violation: f64,
    pub row_correction: f64,
}

impl From<&PreferenceFrame> for FrameSummary {
    fn from(f: &PreferenceFrame) -> Self {
        Self {
            r: f.spec().r,
            rho: f.rho().to_vec(),
            eigenvalues: f.eigenvalues().to_vec(),
            reversibility_violation: f.reversibility_violation,
            row_correction: f.row_correction,
        }
    }
}

/// Noiseless quantities of a model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSummary {
    pub kind: ModelKind,
    pub n: usize,
    pub k: usize,
    pub sizes: Vec<usize>,
    pub log_n: f64,
    pub d_min: f64,
    pub d_tot: f64,
    pub d_max_scaled: f64,
    pub max_probability: f64,
    pub scale: f64,
    pub block_residual: f64,
    pub model_hash: String,
    /// The frame the model admits.
    pub frame: FrameSummary,
    pub generating_frame: Option<FrameSummary>,
    /// Leading eigenvalues of the expected Laplacian (all of them when
    /// `expected_full_spectrum`).
    pub expected_eigenvalues: Vec<f64>,
    pub expected_full_spectrum: bool,
    pub sigma: f64,
    pub lambda_k: f64,
    pub separation: SeparationReport,
    /// Separation constants evaluated against the generating frame.
    pub generating_separation: Option<SeparationReport>,
    /// Largest within-cluster row distance of the expected `V`.
    pub piecewise_spread: f64,
    pub block_analysis: Option<BlockAnalysis>,
    pub certificate: Option<SpuriousCertificate>,
    pub certificate_error: Option<String>,
    pub orthogonality: Option<OrthogonalityReport>,
}

/// A model together with its expected embedding.
#[derive(Debug, Clone)]
pub struct ModelAnalysis {
    pub model: PfmModel,
    pub embedding: SpectralEmbedding,
    pub summary: ModelSummary,
}

/// Expected-model diagnostics. Block-level checks need dense matrices and
/// run only when `n <= solver.dense_limit`.
pub fn analyze_model(model: PfmModel, solver: &SolverSettings) -> Result<ModelAnalysis> {
    let n = model.n();
    let k = model.k();
    let mut block = None;
    let mut certificate = None;
    let mut certificate_error = None;
    let mut orthogonality = None;
    let embedding = if n <= solver.dense_limit {
        let l = model.laplacian();
        let spec = symmetric_spectrum(&l)?;
        let emb = SpectralEmbedding::from_spectrum(&spec, k, Some(&model.degrees))?;
        let tol = 1e-8 * l.norm().max(1.0);
        match block_analysis(&l, &model.partition, &model.frame, tol) {
            Ok(ba) => {
                match spurious_bound_certificate(&ba, &model.frame, &emb, tol) {
                    Ok(c) => certificate = Some(c),
                    Err(e) => certificate_error = Some(e.to_string()),
                }
                block = Some(ba);
            }
            Err(e) => certificate_error = Some(e.to_string()),
        }
        orthogonality = Some(spurious_orthogonality_check(&spec, &model.partition, &model.degrees)?);
        emb
    } else {
        top_k_eigen_krylov(&model.laplacian_operator(), k, Some(&model.degrees), &solver.krylov())?
    };
    let v = embedding.v.as_ref().expect("degrees supplied");
    let mut separation = separation_gmax(&model.frame, &model)?;
    separation.min_observed_distance2 = Some(min_cross_cluster_distance2(v, &model.partition));
    let generating_separation = match &model.generating_frame {
        Some(f) => Some(separation_gmax(f, &model)?),
        None => None,
    };
    let summary = ModelSummary {
        kind: model.kind,
        n,
        k,
        sizes: model.partition.sizes(),
        log_n: (n as f64).ln(),
        d_min: model.d_min,
        d_tot: model.d_tot,
        d_max_scaled: model.d_max_scaled,
        max_probability: model.max_probability(),
        scale: model.scale,
        block_residual: model.block_residual,
        model_hash: model.content_hash().to_string(),
        frame: (&model.frame).into(),
        generating_frame: model.generating_frame.as_ref().map(Into::into),
        expected_eigenvalues: embedding.eigenvalues.clone(),
        expected_full_spectrum: embedding.full_spectrum,
        sigma: embedding.eigengap_sigma,
        lambda_k: embedding.lambda_k(),
        piecewise_spread: piecewise_constant_check(v, &model.partition),
        separation,
        generating_separation,
        block_analysis: block,
        certificate,
        certificate_error,
        orthogonality,
    };
    Ok(ModelAnalysis {
        model,
        embedding,
        summary,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub index: usize,
    pub seed: u64,
    pub p_err: f64,
    pub kmeans_objective: f64,
    pub d_hat_min: f64,
    pub edges: usize,
    /// Leading eigenvalues of `L̂` (of `L` in expected-model mode).
    pub eigenvalues: Vec<f64>,
    pub sigma_hat: f64,
    /// `‖L̂ − L‖`.
    pub norm_diff: f64,
    /// `‖L̂ − L‖ √(ln n)`.
    pub norm_diff_scaled: f64,
    /// `‖L̂ − L‖ / (Ψ γ² / √(ln n))`.
    pub concentration_ratio: f64,
    pub davis_kahan: Option<DavisKahanReport>,
    /// Nodes with `|√d̂_i − √d_i| > ε`.
    pub degree_violations: usize,
    pub assumptions: AssumptionReport,
    pub bound: Option<BoundReport>,
    pub bound_error: Option<String>,
    pub related_work: Option<RelatedWorkReport>,
    #[serde(skip)]
    pub labels: Vec<usize>,
    #[serde(skip)]
    pub embedding: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Order statistics with linear interpolation between closest ranks.
pub fn quartiles(values: &[f64]) -> Option<Quartiles> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let at = |q: f64| {
        let pos = q * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    Some(Quartiles {
        min: v[0],
        q1: at(0.25),
        median: at(0.5),
        q3: at(0.75),
        max: v[v.len() - 1],
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Aggregate {
    pub replicates: usize,
    pub p_err: Quartiles,
    pub norm_diff: Quartiles,
    pub norm_diff_scaled: Quartiles,
    pub concentration_ratio: Quartiles,
    pub sigma_hat: Quartiles,
    pub d_hat_min: Quartiles,
    pub bound: Option<Quartiles>,
    pub balcan_outward: Option<Quartiles>,
    pub njw_epsilon: Option<Quartiles>,
    pub njw_delta_required: Option<Quartiles>,
    /// Fraction of replicates passing each assumption, by id.
    pub assumption_pass_fraction: Vec<(u8, f64)>,
}

impl Aggregate {
    pub fn from_replicates(reps: &[ReplicateResult]) -> Self {
        let col = |f: &dyn Fn(&ReplicateResult) -> Option<f64>| -> Vec<f64> { reps.iter().filter_map(f).collect() };
        let q = |f: &dyn Fn(&ReplicateResult) -> Option<f64>| quartiles(&col(f));
        let req = |f: &dyn Fn(&ReplicateResult) -> Option<f64>| q(f).expect("at least one replicate");
        let ids: Vec<u8> = reps
            .first()
            .map(|r| r.assumptions.records.iter().map(|a| a.id).collect())
            .unwrap_or_default();
        let assumption_pass_fraction = ids
            .iter()
            .map(|&id| {
                let pass = reps
                    .iter()
                    .filter(|r| r.assumptions.get(id).is_some_and(|a| a.pass))
                    .count();
                (id, pass as f64 / reps.len() as f64)
            })
            .collect();
        Self {
            replicates: reps.len(),
            p_err: req(&|r| Some(r.p_err)),
            norm_diff: req(&|r| Some(r.norm_diff)),
            norm_diff_scaled: req(&|r| Some(r.norm_diff_scaled)),
            concentration_ratio: req(&|r| Some(r.concentration_ratio)),
            sigma_hat: req(&|r| Some(r.sigma_hat)),
            d_hat_min: req(&|r| Some(r.d_hat_min)),
            bound: q(&|r| r.bound.as_ref().map(|b| b.bound)),
            balcan_outward: q(&|r| r.related_work.as_ref().map(|w| w.balcan.outward_nodes as f64)),
            njw_epsilon: q(&|r| r.related_work.as_ref().map(|w| w.ng_jordan_weiss.epsilon)),
            njw_delta_required: q(&|r| r.related_work.as_ref().map(|w| w.ng_jordan_weiss.delta_required)),
            assumption_pass_fraction,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub model: ModelSummary,
    pub replicates: Vec<ReplicateResult>,
    pub aggregate: Aggregate,
}

fn default_variant(model: &PfmModel, requested: Option<BoundVariant>) -> BoundVariant {
    requested.unwrap_or(if model.kind == ModelKind::Hpfm {
        BoundVariant::Hpfm
    } else {
        BoundVariant::Pfm
    })
}

/// Spectral embedding of a graph's normalized Laplacian followed by k-means
/// on the rows of `V̂`.
pub fn cluster_graph(
    graph: &SampledGraph,
    k: usize,
    kmeans_opts: &KmeansOptions,
    solver: &SolverSettings,
) -> Result<(SpectralEmbedding, Clustering)> {
    let lhat = graph.laplacian()?;
    let emb = embed_operator(&lhat, k, &graph.degrees, solver, kmeans_opts.seed)?;
    let clustering = kmeans(emb.v.as_ref().expect("degrees supplied"), k, kmeans_opts)?;
    Ok((emb, clustering))
}

fn embed_operator(lhat: &CsrMatrix, k: usize, degrees: &[f64], solver: &SolverSettings, seed: u64) -> Result<SpectralEmbedding> {
    if lhat.n <= solver.dense_limit {
        top_k_eigen(&lhat.to_dense(), k, Some(degrees))
    } else {
        let opts = KrylovOptions {
            seed,
            ..solver.krylov()
        };
        top_k_eigen_krylov(lhat, k, Some(degrees), &opts)
    }
}

/// Assumption report and misclustering bound for a model, with `d̂_min`
/// taken from a graph when one is available and `d_min` otherwise.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundEvaluation {
    pub variant: BoundVariant,
    pub assumptions: AssumptionReport,
    pub bound: Option<BoundReport>,
    pub bound_error: Option<String>,
}

pub fn evaluate_bound(
    analysis: &ModelAnalysis,
    constants: &TheoryConstants,
    variant: Option<BoundVariant>,
    d_hat_min: Option<f64>,
    p_err: Option<f64>,
) -> Result<BoundEvaluation> {
    let model = &analysis.model;
    let summary = &analysis.summary;
    let variant = default_variant(model, variant);
    let d_hat_min = d_hat_min.unwrap_or(model.d_min);
    let assumptions = check_assumptions(
        &AssumptionInputs {
            is_hpfm: model.kind == ModelKind::Hpfm,
            n: model.n(),
            max_probability: summary.max_probability,
            d_hat_min,
            d_min: model.d_min,
            d_max_scaled: model.d_max_scaled,
            g_max: summary.separation.g_max,
            sigma: summary.sigma,
        },
        constants,
    );
    let inputs = BoundInputs {
        k: model.k(),
        n: model.n(),
        d_tot: model.d_tot,
        d_min: model.d_min,
        d_hat_min,
        g_max: summary.separation.g_max,
        sigma: summary.sigma,
        lambda_k: summary.lambda_k,
    };
    let (bound, bound_error) = match theorem3_bound(&inputs, variant, assumptions.kappa, constants, p_err) {
        Ok(b) => (Some(b), None),
        Err(Error::AssumptionViolated(msg)) => (None, Some(msg)),
        Err(e) => return Err(e),
    };
    Ok(BoundEvaluation {
        variant,
        assumptions,
        bound,
        bound_error,
    })
}

fn run_replicate(
    index: usize,
    analysis: &ModelAnalysis,
    config: &ExperimentConfig,
    exec: Execution,
) -> Result<ReplicateResult> {
    let model = &analysis.model;
    let truth = &model.partition;
    let k = model.k();
    let n = model.n();
    let seed = derive_seed(config.seed, index as u64);
    let solver = &config.solver;
    let constants = &config.constants;
    let kopts = KmeansOptions {
        restarts: config.kmeans.restarts,
        max_iter: config.kmeans.max_iter,
        seed,
        row_normalize: config.kmeans.row_normalize,
        execution: exec,
    };
    let variant = default_variant(model, config.bound_variant);
    let expected = &analysis.embedding;
    let summary = &analysis.summary;

    let (emb, clustering, graph) = if config.expected_model {
        let c = kmeans(expected.v.as_ref().expect("degrees supplied"), k, &kopts)?;
        (expected.clone(), c, None)
    } else {
        let graph = sample_adjacency(model, seed);
        let (emb, c) = cluster_graph(&graph, k, &kopts, solver)?;
        (emb, c, Some(graph))
    };
    let p_err = misclustering_rate(&clustering.labels, truth)?;

    let (norm_diff, davis_kahan, d_hat_min, edges, degree_violations) = match &graph {
        None => (0.0, None, model.d_min, 0, 0),
        Some(g) => {
            let lhat = g.laplacian()?;
            let opts = KrylovOptions {
                seed: seed ^ 0x9e37_79b9,
                ..solver.krylov()
            };
            let norm = spectral_norm_diff(&lhat, &model.laplacian_operator(), solver.dense_limit, &opts)?;
            let delta = match variant {
                BoundVariant::Hpfm => summary.lambda_k.abs() / 2.0,
                BoundVariant::Pfm => summary.sigma / 2.0,
            };
            let dk = if delta > 0.0 {
                Some(davis_kahan_report(expected, &emb, norm, delta)?)
            } else {
                None
            };
            let conc = degree_concentration_check(model, g, constants.epsilon);
            (norm, dk, g.d_hat_min, g.edge_count(), conc.violations)
        }
    };
    let eval = evaluate_bound(analysis, constants, Some(variant), Some(d_hat_min), Some(p_err))?;
    let related = match &graph {
        Some(g) => Some(related_work(k, model.d_min, g, truth, constants)?),
        None => None,
    };
    let rhs = concentration_rhs(constants.psi, constants.gamma, n);
    info!("replicate {index}: p_err = {p_err}, |L_hat - L| = {norm_diff:.4}");
    Ok(ReplicateResult {
        index,
        seed,
        p_err,
        kmeans_objective: clustering.objective,
        d_hat_min,
        edges,
        sigma_hat: emb.eigengap_sigma,
        eigenvalues: emb.eigenvalues.iter().take(k + 1).copied().collect(),
        norm_diff,
        norm_diff_scaled: norm_diff * (n as f64).ln().sqrt(),
        concentration_ratio: norm_diff / rhs,
        davis_kahan,
        degree_violations,
        assumptions: eval.assumptions,
        bound: eval.bound,
        bound_error: eval.bound_error,
        related_work: related,
        labels: clustering.labels,
        embedding: if index == 0 { emb.v.clone() } else { None },
    })
}

/// Run every replicate of `config`; writes output files when
/// `config.out_dir` is set.
pub fn run_experiment(config: &ExperimentConfig, opts: RunOptions) -> Result<ExperimentResult> {
    config.validate()?;
    let model = config.model.build()?;
    let analysis = analyze_model(model, &config.solver)?;
    run_with_model(config, analysis, opts)
}

/// As [`run_experiment`], with a prebuilt model analysis.
pub fn run_with_model(config: &ExperimentConfig, analysis: ModelAnalysis, opts: RunOptions) -> Result<ExperimentResult> {
    config.validate()?;
    let replicates: Vec<ReplicateResult> = with_jobs(opts.jobs, || {
        map_indexed(config.replicates, opts.execution, |i| {
            run_replicate(i, &analysis, config, opts.execution).map_err(|e| Error::Replicate {
                index: i,
                source: Box::new(e),
            })
        })
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let aggregate = Aggregate::from_replicates(&replicates);
    let result = ExperimentResult {
        config: config.clone(),
        model: analysis.summary,
        replicates,
        aggregate,
    };
    if let Some(dir) = &config.out_dir {
        write_outputs(&result, &analysis.model, dir)?;
    }
    Ok(result)
}

fn verdict_str(v: Verdict) -> &'static str {
    match v {
        Verdict::Satisfied => "satisfied",
        Verdict::Violated => "violated",
    }
}

fn opt_num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Column names of `replicates.csv`.
pub const REPLICATE_COLUMNS: [&str; 27] = [
    "replicate",
    "seed",
    "p_err",
    "norm_diff",
    "norm_diff_scaled",
    "concentration_ratio",
    "sigma",
    "sigma_hat",
    "lambda_k_hat",
    "gmax",
    "d_min",
    "d_hat_min",
    "bound",
    "bound_holds",
    "a1",
    "a2",
    "a3",
    "a4",
    "a5",
    "a6",
    "a7",
    "qin_rohe",
    "rohe_chatterjee_yu",
    "balcan",
    "balcan_outward",
    "ng_jordan_weiss",
    "chaudhuri_chung_tsiatas",
];

pub fn write_replicates_csv(result: &ExperimentResult, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(REPLICATE_COLUMNS)?;
    let k = result.model.k;
    for r in &result.replicates {
        let mut rec = vec![
            r.index.to_string(),
            r.seed.to_string(),
            r.p_err.to_string(),
            r.norm_diff.to_string(),
            r.norm_diff_scaled.to_string(),
            r.concentration_ratio.to_string(),
            result.model.sigma.to_string(),
            r.sigma_hat.to_string(),
            opt_num(r.eigenvalues.get(k - 1).copied()),
            result.model.separation.g_max.to_string(),
            result.model.d_min.to_string(),
            r.d_hat_min.to_string(),
            opt_num(r.bound.as_ref().map(|b| b.bound)),
            r.bound
                .as_ref()
                .and_then(|b| b.holds)
                .map(|h| h.to_string())
                .unwrap_or_default(),
        ];
        for id in 1..=7u8 {
            rec.push(r.assumptions.get(id).map(|a| a.pass.to_string()).unwrap_or_default());
        }
        match &r.related_work {
            Some(w) => rec.extend([
                verdict_str(w.qin_rohe.verdict).to_string(),
                verdict_str(w.rohe_chatterjee_yu.verdict).to_string(),
                verdict_str(w.balcan.verdict).to_string(),
                w.balcan.outward_nodes.to_string(),
                verdict_str(w.ng_jordan_weiss.verdict).to_string(),
                verdict_str(w.chaudhuri_chung_tsiatas.verdict).to_string(),
            ]),
            None => rec.extend(std::iter::repeat_n(String::new(), 6)),
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `index,expected,sampled`: expected-Laplacian eigenvalues against those of
/// replicate 0.
pub fn write_scree_csv(result: &ExperimentResult, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", "expected", "sampled"])?;
    let exp = &result.model.expected_eigenvalues;
    let smp = result.replicates.first().map(|r| r.eigenvalues.as_slice()).unwrap_or(&[]);
    for i in 0..exp.len().max(smp.len()) {
        w.write_record(&[
            (i + 1).to_string(),
            opt_num(exp.get(i).copied()),
            opt_num(smp.get(i).copied()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_results_json(result: &ExperimentResult, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut out, result)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

/// `results.json`, `replicates.csv`, `scree.csv` and `embedding.csv`
/// (replicate 0, with true labels).
pub fn write_outputs(result: &ExperimentResult, model: &PfmModel, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_results_json(result, &dir.join("results.json"))?;
    write_replicates_csv(result, &dir.join("replicates.csv"))?;
    write_scree_csv(result, &dir.join("scree.csv"))?;
    if let Some(v) = result.replicates.first().and_then(|r| r.embedding.as_ref()) {
        write_embedding_csv(v, model.partition.labels(), &dir.join("embedding.csv"))?;
    }
    Ok(())
}

/// The five-community frame of the reproduction, as printed (rows do not
/// sum exactly to one and it is only approximately reversible).
pub const SEC42_FRAME: [[f64; 5]; 5] = [
    [0.80, 0.07, 0.02, 0.02, 0.09],
    [0.04, 0.52, 0.24, 0.12, 0.08],
    [0.01, 0.20, 0.65, 0.15, 0.00],
    [0.01, 0.08, 0.12, 0.70, 0.08],
    [0.13, 0.21, 0.02, 0.32, 0.33],
];
pub const SEC42_SIZES: [usize; 5] = [500, 1000, 1500, 1000, 1000];
/// Smallest expected degree the overall scale is calibrated to.
pub const SEC42_D_MIN: f64 = 77.4;

/// Built-in reproduction config. `variant` swaps the weight distribution
/// `U(0.5, 1)` for the wider `U(0.05, 1)`.
pub fn sec42_config(seed: u64, replicates: usize, variant: bool) -> ExperimentConfig {
    let (low, high) = if variant { (0.05, 1.0) } else { (0.5, 1.0) };
    ExperimentConfig {
        model: ModelConfig {
            kind: ModelType::Hpfm,
            frame: Some(FrameSpec {
                r: SEC42_FRAME.iter().map(|r| r.to_vec()).collect(),
                row_normalize: true,
                reversibility: Reversibility::Warn,
            }),
            sizes: SEC42_SIZES.to_vec(),
            weights: Some(WeightsConfig::Uniform {
                dist: Distribution::Uniform,
                low,
                high,
            }),
            degree_spec: None,
            d_tot: None,
            allow_self_loops: Some(true),
            seed,
            b: None,
            p: None,
            q: None,
            scale: None,
            target_d_min: Some(SEC42_D_MIN),
            block_noise: None,
        },
        k: Some(5),
        seed,
        replicates,
        kmeans: KmeansSettings::default(),
        constants: TheoryConstants::default(),
        expected_model: false,
        bound_variant: Some(BoundVariant::Hpfm),
        solver: SolverSettings::default(),
        out_dir: None,
    }
}

/// One line of the reproduction table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub quantity: String,
    /// Printed value, verbatim.
    pub published: String,
    pub observed: f64,
    pub verdict: Option<String>,
}

fn row(quantity: &str, published: &str, observed: f64, verdict: Option<&str>) -> ComparisonRow {
    ComparisonRow {
        quantity: quantity.to_string(),
        published: published.to_string(),
        observed,
        verdict: verdict.map(str::to_string),
    }
}

/// Observed counterparts of every printed number. Sampled quantities are
/// medians over replicates.
pub fn comparison_table(result: &ExperimentResult, variant: bool) -> Vec<ComparisonRow> {
    let m = &result.model;
    let a = &result.aggregate;
    let mut rows = vec![
        row("d_min", "77.4", m.d_min, None),
        row("d_hat_min (median)", "63", a.d_hat_min.median, None),
        row("log n", "8.52", m.log_n, None),
        row("d_max = max n S_ij", "2500", m.d_max_scaled, None),
        row("g_max (admitted frame)", "1.82", m.separation.g_max, None),
    ];
    if let Some(g) = &m.generating_separation {
        rows.push(row("g_max (generating frame)", "1.82", g.g_max, None));
        rows.push(row("g_max (generating frame, n_k/(n rho_k))", "1.82", g.g_max_size_normalized, None));
    }
    rows.push(row("p_err (median)", "0.0008", a.p_err.median, None));
    if let Some(b) = a.bound {
        rows.push(row("misclustering bound (median)", "", b.median, None));
    }
    let printed = ["1", "0.8", "0.6", "0.4", "0.2"];
    if let Some(g) = &m.generating_frame {
        for (i, v) in g.eigenvalues.iter().enumerate() {
            rows.push(row(&format!("generating frame eigenvalue {}", i + 1), printed.get(i).unwrap_or(&""), *v, None));
        }
    }
    for (i, v) in m.frame.eigenvalues.iter().enumerate() {
        rows.push(row(&format!("admitted frame eigenvalue {}", i + 1), printed.get(i).unwrap_or(&""), *v, None));
    }
    if let Some(w) = result.replicates.first().and_then(|r| r.related_work.as_ref()) {
        let v = |x: Verdict| Some(verdict_str(x));
        let (qr, rcy, bal, njw) = if variant {
            ("17.32", "2422", "1609", "175.35")
        } else {
            ("12.3", "2422", "1296", "125.28")
        };
        rows.push(row("Qin-Rohe required lambda_K", qr, w.qin_rohe.required_lambda_k, v(w.qin_rohe.verdict)));
        rows.push(row("Qin-Rohe required d_min", "11718", w.qin_rohe.required_d_min, None));
        rows.push(row(
            "Rohe-Chatterjee-Yu required d_min",
            rcy,
            w.rohe_chatterjee_yu.required_d_min,
            v(w.rohe_chatterjee_yu.verdict),
        ));
        if let Some(b) = a.balcan_outward {
            rows.push(row("Balcan outward nodes (median)", bal, b.median, v(w.balcan.verdict)));
        }
        if let Some(e) = a.njw_epsilon {
            rows.push(row("Ng-Jordan-Weiss epsilon (median)", "36.69", e.median, None));
        }
        if let Some(d) = a.njw_delta_required {
            rows.push(row("Ng-Jordan-Weiss delta required (median)", njw, d.median, v(w.ng_jordan_weiss.verdict)));
        }
        rows.push(row(
            "Chaudhuri-Chung-Tsiatas threshold",
            "212.11",
            w.chaudhuri_chung_tsiatas.threshold,
            v(w.chaudhuri_chung_tsiatas.verdict),
        ));
    }
    rows
}

pub fn write_comparison_csv(rows: &[ComparisonRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["quantity", "published", "observed", "verdict"])?;
    for r in rows {
        w.write_record(&[
            r.quantity.clone(),
            r.published.clone(),
            r.observed.to_string(),
            r.verdict.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Run the built-in reproduction and build its comparison table.
pub fn reproduce_sec42(
    seed: u64,
    replicates: usize,
    variant: bool,
    out_dir: Option<&Path>,
    opts: RunOptions,
) -> Result<(ExperimentResult, Vec<ComparisonRow>)> {
    let mut config = sec42_config(seed, replicates, variant);
    config.out_dir = out_dir.map(Path::to_path_buf);
    let result = run_experiment(&config, opts)?;
    let table = comparison_table(&result, variant);
    if let Some(dir) = out_dir {
        write_comparison_csv(&table, &dir.join("comparison.csv"))?;
    }
    Ok((result, table))
}
