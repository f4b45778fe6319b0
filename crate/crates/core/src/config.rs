//! JSON model configuration.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::FrameSpec;
use crate::models::{
    hpfm_matrix, perturb_blocks, pfm_from_degrees, sbm_model, sbm_pq_transition, DegreeSpec, ModelOptions,
    NodeWeights, Partition, PfmModel, Scale,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelType {
    Hpfm,
    Pfm,
    Sbm,
    SbmPq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightsConfig {
    Values { values: Vec<f64> },
    Uniform { dist: Distribution, low: f64, high: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distribution {
    Uniform,
}

/// Per-community node distributions. `Uniform` gives every node of a
/// community the same share; `Random` draws shares from `U(low, high)` and
/// normalizes them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DegreeSpecConfig {
    Values { values: Vec<Vec<f64>> },
    Random { dist: SpecDistribution, low: f64, high: f64 },
    Uniform { dist: SpecDistribution },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpecDistribution {
    Uniform,
    Random,
}

/// A model description, as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(rename = "type")]
    pub kind: ModelType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<FrameSpec>,
    pub sizes: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree_spec: Option<DegreeSpecConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_tot: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allow_self_loops: Option<bool>,
    #[serde(default)]
    pub seed: u64,
    /// SBM connectivity matrix.
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    /// Homogeneous models: fixed multiplier applied to `S`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    /// Homogeneous models: choose the multiplier so that `d_min` hits this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_d_min: Option<f64>,
    /// Apply [`perturb_blocks`] with this amplitude after construction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_noise: Option<f64>,
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let k = rows.len();
    if let Some(bad) = rows.iter().find(|r| r.len() != k) {
        return Err(Error::NotSquare { rows: k, cols: bad.len() });
    }
    Ok(DMatrix::from_fn(k, k, |i, j| rows[i][j]))
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn frame_spec(&self) -> Result<&FrameSpec> {
        self.frame
            .as_ref()
            .ok_or_else(|| Error::Config(format!("{:?} model needs a \"frame\"", self.kind)))
    }

    /// Build the model. Random ingredients (weights, degree shares, block
    /// noise) are drawn from a generator seeded with `self.seed`.
    pub fn build(&self) -> Result<PfmModel> {
        let partition = Partition::from_sizes(&self.sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let model = match self.kind {
            ModelType::Hpfm => {
                let frame = self.frame_spec()?.build()?;
                let weights = match &self.weights {
                    Some(WeightsConfig::Values { values }) => NodeWeights::new(values.clone())?,
                    Some(WeightsConfig::Uniform { low, high, .. }) => {
                        NodeWeights::uniform(partition.n(), *low, *high, &mut rng)?
                    }
                    None => return Err(Error::Config("hpfm model needs \"weights\"".into())),
                };
                let scale = match (self.scale, self.target_d_min) {
                    (Some(_), Some(_)) => {
                        return Err(Error::Config("give at most one of \"scale\" and \"target_d_min\"".into()))
                    }
                    (Some(s), None) => Scale::Fixed(s),
                    (None, Some(t)) => Scale::TargetMinDegree(t),
                    (None, None) => Scale::Fixed(1.0),
                };
                let opts = ModelOptions {
                    allow_self_loops: self.allow_self_loops.unwrap_or(true),
                    ..ModelOptions::default()
                };
                hpfm_matrix(&frame, &partition, &weights, scale, opts)?
            }
            ModelType::Pfm => {
                let frame = self.frame_spec()?.build()?;
                let d_tot = self
                    .d_tot
                    .ok_or_else(|| Error::Config("pfm model needs \"d_tot\"".into()))?;
                let pi = match &self.degree_spec {
                    Some(DegreeSpecConfig::Values { values }) => values.clone(),
                    Some(DegreeSpecConfig::Random { low, high, .. }) => {
                        if !(*low > 0.0 && high >= low) {
                            return Err(Error::InvalidSpec(format!("need 0 < low <= high, got ({low}, {high})")));
                        }
                        partition
                            .sizes()
                            .iter()
                            .map(|&s| {
                                let raw: Vec<f64> = (0..s).map(|_| low + (high - low) * rng.random::<f64>()).collect();
                                let total: f64 = raw.iter().sum();
                                raw.into_iter().map(|x| x / total).collect()
                            })
                            .collect()
                    }
                    Some(DegreeSpecConfig::Uniform { .. }) | None => DegreeSpec::uniform(&partition, d_tot).pi,
                };
                pfm_from_degrees(&frame, &partition, &DegreeSpec { pi, d_tot })?
            }
            ModelType::Sbm => {
                let b = self
                    .b
                    .as_ref()
                    .ok_or_else(|| Error::Config("sbm model needs \"B\"".into()))?;
                sbm_model(&rows_to_matrix(b)?, &partition, self.allow_self_loops.unwrap_or(false))?
            }
            ModelType::SbmPq => {
                let (p, q) = match (self.p, self.q) {
                    (Some(p), Some(q)) => (p, q),
                    _ => return Err(Error::Config("sbm_pq model needs \"p\" and \"q\"".into())),
                };
                // validates the closed form before building the matrix
                sbm_pq_transition(p, q, &self.sizes)?;
                let k = self.sizes.len();
                let b = DMatrix::from_fn(k, k, |i, j| if i == j { p } else { q });
                sbm_model(&b, &partition, self.allow_self_loops.unwrap_or(false))?
            }
        };
        match self.block_noise {
            Some(a) if a > 0.0 => perturb_blocks(&model, a, &mut rng),
            _ => Ok(model),
        }
    }
}

/// Write `S` as CSV: a `n,K` header line followed by `n` comma-separated rows.
pub fn write_matrix_csv(model: &PfmModel, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "n,K")?;
    writeln!(out, "{},{}", model.n(), model.k())?;
    for i in 0..model.n() {
        let row: Vec<String> = model.s.row(i).iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Read a matrix written by [`write_matrix_csv`]. Returns `(K, S)`.
pub fn read_matrix_csv(path: &Path) -> Result<(usize, DMatrix<f64>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let bad = |msg: &str| Error::Config(format!("{}: {msg}", path.display()));
    lines.next().ok_or_else(|| bad("missing header"))?;
    let dims: Vec<usize> = lines
        .next()
        .ok_or_else(|| bad("missing dimensions"))?
        .split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| bad("bad dimension")))
        .collect::<Result<_>>()?;
    let [n, k] = dims[..] else {
        return Err(bad("expected n,K"));
    };
    let mut s = DMatrix::zeros(n, n);
    for i in 0..n {
        let line = lines.next().ok_or_else(|| bad("too few rows"))?;
        let vals: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| bad("bad entry")))
            .collect::<Result<_>>()?;
        if vals.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: vals.len(),
            });
        }
        for (j, v) in vals.into_iter().enumerate() {
            s[(i, j)] = v;
        }
    }
    Ok((k, s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_hpfm_config() {
        let text = r#"{"type": "hpfm", "frame": {"R": [[0.8, 0.2], [0.2, 0.8]], "row_normalize": true},
            "sizes": [5, 5], "weights": {"dist": "uniform", "low": 0.5, "high": 1.0}, "scale": 0.5, "seed": 3}"#;
        let cfg = ModelConfig::from_json(text).unwrap();
        let a = cfg.build().unwrap();
        let b = cfg.build().unwrap();
        assert_eq!(a.s, b.s);
        assert_eq!(a.n(), 10);
    }

    #[test]
    fn parses_other_kinds() {
        let pfm = r#"{"type": "pfm", "frame": {"R": [[0.7, 0.3], [0.3, 0.7]]}, "sizes": [4, 6],
            "d_tot": 10.0, "degree_spec": {"dist": "random", "low": 0.5, "high": 1.5}}"#;
        assert_eq!(ModelConfig::from_json(pfm).unwrap().build().unwrap().k(), 2);
        let sbm = r#"{"type": "sbm", "B": [[0.5, 0.1], [0.1, 0.4]], "sizes": [3, 3]}"#;
        let m = ModelConfig::from_json(sbm).unwrap().build().unwrap();
        assert_eq!(m.s[(0, 0)], 0.0);
        let pq = r#"{"type": "sbm_pq", "p": 0.5, "q": 0.1, "sizes": [3, 3], "allow_self_loops": true}"#;
        let m = ModelConfig::from_json(pq).unwrap().build().unwrap();
        assert_eq!(m.s[(0, 0)], 0.5);
        let values = r#"{"type": "hpfm", "frame": {"R": [[1.0]]}, "sizes": [2], "weights": {"values": [0.3, 0.5]}}"#;
        let m = ModelConfig::from_json(values).unwrap().build().unwrap();
        assert!((m.s[(0, 1)] - 0.15).abs() < 1e-15);
    }

    #[test]
    fn missing_fields_are_config_errors() {
        let text = r#"{"type": "hpfm", "sizes": [2]}"#;
        assert!(matches!(ModelConfig::from_json(text).unwrap().build(), Err(Error::Config(_))));
    }

    #[test]
    fn matrix_csv_round_trip() {
        let text = r#"{"type": "sbm", "B": [[0.5, 0.125], [0.125, 0.25]], "sizes": [2, 3]}"#;
        let m = ModelConfig::from_json(text).unwrap().build().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        write_matrix_csv(&m, &path).unwrap();
        let (k, s) = read_matrix_csv(&path).unwrap();
        assert_eq!(k, 2);
        assert_eq!(s, m.s);
    }
}
