//! Run configuration: a flat, sectioned key-value text format (diff-friendly
//! for run manifests) with a JSON alternative. Unknown sections or keys are
//! rejected, with line numbers in the diagnostics for the text form.

use serde::{Deserialize, Serialize};

use crate::eikonal::{AugmentationKind, TrainingConfig};
use crate::error::{Error, Result};
use crate::manifold::{GmmComponent, Manifold};
use crate::sampling::{MhConfig, SamplerConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<String>,
    pub manifold: ManifoldBlock,
    #[serde(default)]
    pub network: NetworkBlock,
    #[serde(default)]
    pub training: TrainingBlock,
    #[serde(default)]
    pub sampler: SamplerBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldBlock {
    pub name: String,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default)]
    pub bounds_low: Option<Vec<f64>>,
    #[serde(default)]
    pub bounds_high: Option<Vec<f64>>,
    #[serde(default)]
    pub gmm_components: Vec<GmmComponent>,
}

fn default_dim() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkBlock {
    pub width: usize,
    pub depth: usize,
    pub fourier: usize,
}

impl Default for NetworkBlock {
    fn default() -> Self {
        NetworkBlock {
            width: 128,
            depth: 4,
            fourier: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingBlock {
    pub updates: usize,
    pub batch: usize,
    pub lr: f64,
    pub decay_factor: f64,
    pub decay_interval: u64,
    /// `single-point`, `global` or `global-upper`.
    pub augmentation: String,
    /// Source point, required for `single-point`.
    pub source: Option<Vec<f64>>,
    /// Quadrature nodes for the `global-upper` bound.
    pub quad_nodes: usize,
    pub log_every: usize,
    pub enforce_p_side: bool,
}

impl Default for TrainingBlock {
    fn default() -> Self {
        TrainingBlock {
            updates: 10_000,
            batch: 1024,
            lr: 1e-3,
            decay_factor: 0.9,
            decay_interval: 2000,
            augmentation: "global".to_string(),
            source: None,
            quad_nodes: 129,
            log_every: 100,
            enforce_p_side: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerBlock {
    /// `uniform`, `curvature-mh` or `mixture`.
    pub kind: String,
    pub delta: Option<f64>,
    pub burn_in: usize,
    pub chains: usize,
    pub weight: f64,
}

impl Default for SamplerBlock {
    fn default() -> Self {
        SamplerBlock {
            kind: "uniform".to_string(),
            delta: None,
            burn_in: 1000,
            chains: 4,
            weight: 0.5,
        }
    }
}

impl RunConfig {
    pub fn build_manifold(&self) -> Result<Manifold> {
        let block = &self.manifold;
        let gmm = if block.gmm_components.is_empty() {
            None
        } else {
            Some(block.gmm_components.clone())
        };
        let man = Manifold::builtin(&block.name, block.dim, gmm)?;
        match (&block.bounds_low, &block.bounds_high) {
            (None, None) => Ok(man),
            (Some(low), Some(high)) => man.with_bounds(low.clone(), high.clone()),
            _ => Err(Error::config(
                "bounds_low and bounds_high must be given together",
            )),
        }
    }

    pub fn augmentation(&self) -> Result<AugmentationKind> {
        match self.training.augmentation.as_str() {
            "global" => Ok(AugmentationKind::Global),
            "global-upper" => Ok(AugmentationKind::GlobalUpperBounded {
                quad_nodes: self.training.quad_nodes,
            }),
            "single-point" => {
                let source = self.training.source.clone().ok_or_else(|| {
                    Error::config("single-point augmentation requires training.source")
                })?;
                Ok(AugmentationKind::SinglePoint { source })
            }
            other => Err(Error::config(format!("unknown augmentation '{other}'"))),
        }
    }

    pub fn sampler_config(&self) -> Result<SamplerConfig> {
        let mh = MhConfig {
            delta: self.sampler.delta,
            burn_in: self.sampler.burn_in,
            chains: self.sampler.chains,
        };
        let config = match self.sampler.kind.as_str() {
            "uniform" => SamplerConfig::Uniform,
            "curvature-mh" => SamplerConfig::CurvatureMh(mh),
            "mixture" => SamplerConfig::Mixture {
                weight: self.sampler.weight,
                mh,
            },
            other => return Err(Error::config(format!("unknown sampler kind '{other}'"))),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn training_config(&self) -> Result<TrainingConfig> {
        let config = TrainingConfig {
            updates: self.training.updates,
            batch: self.training.batch,
            lr: self.training.lr,
            decay_factor: self.training.decay_factor,
            decay_interval: self.training.decay_interval,
            augmentation: self.augmentation()?,
            width: self.network.width,
            depth: self.network.depth,
            fourier_features: self.network.fourier,
            log_every: self.training.log_every,
            sampler: self.sampler_config()?,
            enforce_p_side: self.training.enforce_p_side,
        };
        config.validate()?;
        Ok(config)
    }
}

/// Parse either format: JSON when the first non-space byte is `{`, the
/// sectioned text format otherwise.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    if text.trim_start().starts_with('{') {
        serde_json::from_str(text).map_err(|e| Error::config(format!("json: {e}")))
    } else {
        parse_text(text)
    }
}

fn parse_scalar<T: std::str::FromStr>(value: &str, line: usize, key: &str) -> Result<T> {
    value.trim().parse().map_err(|_| {
        Error::config(format!("line {line}: invalid value '{value}' for key '{key}'"))
    })
}

fn parse_vector(value: &str, line: usize, key: &str) -> Result<Vec<f64>> {
    let v: Vec<f64> = value
        .split_whitespace()
        .map(|tok| parse_scalar::<f64>(tok, line, key))
        .collect::<Result<_>>()?;
    if v.is_empty() {
        return Err(Error::config(format!("line {line}: empty vector for '{key}'")));
    }
    Ok(v)
}

fn parse_gmm_component(value: &str, line: usize) -> Result<GmmComponent> {
    let parts: Vec<&str> = value.split(';').collect();
    if parts.len() != 3 {
        return Err(Error::config(format!(
            "line {line}: gmm_component needs 'alpha ; mean ; cov' separated by ';'"
        )));
    }
    let alpha = parse_scalar::<f64>(parts[0], line, "gmm_component.alpha")?;
    let mean = parse_vector(parts[1], line, "gmm_component.mean")?;
    let cov = parse_vector(parts[2], line, "gmm_component.cov")?;
    if cov.len() != mean.len() * mean.len() {
        return Err(Error::config(format!(
            "line {line}: covariance needs {} entries, got {}",
            mean.len() * mean.len(),
            cov.len()
        )));
    }
    Ok(GmmComponent { alpha, mean, cov })
}

fn parse_text(text: &str) -> Result<RunConfig> {
    let mut seed: Option<u64> = None;
    let mut out: Option<String> = None;
    let mut manifold: Option<ManifoldBlock> = None;
    let mut network = NetworkBlock::default();
    let mut training = TrainingBlock::default();
    let mut sampler = SamplerBlock::default();
    let mut section = String::new();
    let mut seen: std::collections::HashSet<String> = Default::default();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| Error::config(format!("line {line_no}: unterminated section")))?
                .trim();
            match name {
                "manifold" => {
                    manifold.get_or_insert(ManifoldBlock {
                        name: String::new(),
                        dim: default_dim(),
                        bounds_low: None,
                        bounds_high: None,
                        gmm_components: Vec::new(),
                    });
                }
                "network" | "training" | "sampler" => {}
                other => {
                    return Err(Error::config(format!(
                        "line {line_no}: unknown section '[{other}]'"
                    )))
                }
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::config(format!("line {line_no}: expected 'key = value'"))
        })?;
        let key = key.trim();
        let value = value.trim();
        let qualified = format!("{section}.{key}");
        if key != "gmm_component" && !seen.insert(qualified.clone()) {
            return Err(Error::config(format!(
                "line {line_no}: duplicate key '{key}'"
            )));
        }
        match (section.as_str(), key) {
            ("", "seed") => seed = Some(parse_scalar(value, line_no, key)?),
            ("", "out") => out = Some(value.to_string()),
            ("manifold", _) => {
                let block = manifold.as_mut().ok_or_else(|| {
                    Error::config(format!("line {line_no}: key outside a section"))
                })?;
                match key {
                    "name" => block.name = value.to_string(),
                    "dim" => block.dim = parse_scalar(value, line_no, key)?,
                    "bounds_low" => block.bounds_low = Some(parse_vector(value, line_no, key)?),
                    "bounds_high" => block.bounds_high = Some(parse_vector(value, line_no, key)?),
                    "gmm_component" => block
                        .gmm_components
                        .push(parse_gmm_component(value, line_no)?),
                    other => {
                        return Err(Error::config(format!(
                            "line {line_no}: unknown key '{other}' in [manifold]"
                        )))
                    }
                }
            }
            ("network", _) => match key {
                "width" => network.width = parse_scalar(value, line_no, key)?,
                "depth" => network.depth = parse_scalar(value, line_no, key)?,
                "fourier" => network.fourier = parse_scalar(value, line_no, key)?,
                other => {
                    return Err(Error::config(format!(
                        "line {line_no}: unknown key '{other}' in [network]"
                    )))
                }
            },
            ("training", _) => match key {
                "updates" => training.updates = parse_scalar(value, line_no, key)?,
                "batch" => training.batch = parse_scalar(value, line_no, key)?,
                "lr" => training.lr = parse_scalar(value, line_no, key)?,
                "decay_factor" => training.decay_factor = parse_scalar(value, line_no, key)?,
                "decay_interval" => training.decay_interval = parse_scalar(value, line_no, key)?,
                "augmentation" => training.augmentation = value.to_string(),
                "source" => training.source = Some(parse_vector(value, line_no, key)?),
                "quad_nodes" => training.quad_nodes = parse_scalar(value, line_no, key)?,
                "log_every" => training.log_every = parse_scalar(value, line_no, key)?,
                "enforce_p_side" => {
                    training.enforce_p_side = parse_scalar(value, line_no, key)?
                }
                other => {
                    return Err(Error::config(format!(
                        "line {line_no}: unknown key '{other}' in [training]"
                    )))
                }
            },
            ("sampler", _) => match key {
                "kind" => sampler.kind = value.to_string(),
                "delta" => sampler.delta = Some(parse_scalar(value, line_no, key)?),
                "burn_in" => sampler.burn_in = parse_scalar(value, line_no, key)?,
                "chains" => sampler.chains = parse_scalar(value, line_no, key)?,
                "weight" => sampler.weight = parse_scalar(value, line_no, key)?,
                other => {
                    return Err(Error::config(format!(
                        "line {line_no}: unknown key '{other}' in [sampler]"
                    )))
                }
            },
            ("", other) => {
                return Err(Error::config(format!(
                    "line {line_no}: unknown top-level key '{other}'"
                )))
            }
            (section, _) => {
                return Err(Error::config(format!(
                    "line {line_no}: key in unknown section '{section}'"
                )))
            }
        }
    }
    let manifold =
        manifold.ok_or_else(|| Error::config("missing [manifold] section"))?;
    if manifold.name.is_empty() {
        return Err(Error::config("missing manifold.name"));
    }
    Ok(RunConfig {
        seed: seed.unwrap_or(0),
        out,
        manifold,
        network,
        training,
        sampler,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# desk-scale euclidean run
seed = 42
out = runs/euclid

[manifold]
name = euclidean
dim = 2

[network]
width = 64
depth = 3

[training]
updates = 500
batch = 128
lr = 1e-3
augmentation = global

[sampler]
kind = uniform
";

    #[test]
    fn text_config_parses_with_defaults() {
        let config = parse_config(SAMPLE).unwrap();
        assert_eq!(config.seed, 42);
        assert_eq!(config.manifold.name, "euclidean");
        assert_eq!(config.network.width, 64);
        assert_eq!(config.network.fourier, 0);
        assert_eq!(config.training.decay_interval, 2000);
        let tc = config.training_config().unwrap();
        assert_eq!(tc.batch, 128);
        config.build_manifold().unwrap();
    }

    #[test]
    fn json_config_parses_to_the_same_struct() {
        let json = r#"{
            "seed": 42,
            "out": "runs/euclid",
            "manifold": {"name": "euclidean", "dim": 2},
            "network": {"width": 64, "depth": 3, "fourier": 0},
            "training": {"updates": 500, "batch": 128, "lr": 1e-3,
                          "decay_factor": 0.9, "decay_interval": 2000,
                          "augmentation": "global", "source": null,
                          "quad_nodes": 129, "log_every": 100,
                          "enforce_p_side": false},
            "sampler": {"kind": "uniform", "delta": null, "burn_in": 1000,
                        "chains": 4, "weight": 0.5}
        }"#;
        let a = parse_config(SAMPLE).unwrap();
        let b = parse_config(json).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unknown_keys_are_rejected_with_line_numbers() {
        let bad = SAMPLE.replace("width = 64", "width = 64\nwobble = 3");
        let err = parse_config(&bad).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("wobble"), "{msg}");
        assert!(msg.contains("line"), "{msg}");
        // unknown key in JSON too
        let bad_json = r#"{"seed": 1, "manifold": {"name": "peaks"}, "wobble": 2}"#;
        assert!(parse_config(bad_json).is_err());
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        let bad = SAMPLE.replace("seed = 42", "seed = 42\nseed = 43");
        assert!(parse_config(&bad).is_err());
    }

    #[test]
    fn single_point_requires_source() {
        let config =
            parse_config(&SAMPLE.replace("augmentation = global", "augmentation = single-point"))
                .unwrap();
        assert!(config.training_config().is_err());
        let with_source = parse_config(&SAMPLE.replace(
            "augmentation = global",
            "augmentation = single-point\nsource = 0.0 0.0",
        ))
        .unwrap();
        let tc = with_source.training_config().unwrap();
        assert!(matches!(
            tc.augmentation,
            AugmentationKind::SinglePoint { .. }
        ));
    }

    #[test]
    fn gmm_components_parse() {
        let text = "\
seed = 1
[manifold]
name = gmm
dim = 2
gmm_component = 0.5 ; 0.5 1.0 ; 0.2 0.0 0.0 0.2
gmm_component = 0.5 ; -0.5 -1.0 ; 0.3 0.05 0.05 0.3
";
        let config = parse_config(text).unwrap();
        assert_eq!(config.manifold.gmm_components.len(), 2);
        config.build_manifold().unwrap();
    }

    #[test]
    fn bounds_override_must_be_paired() {
        let text = "\
seed = 1
[manifold]
name = euclidean
dim = 2
bounds_low = -1 -1
";
        let config = parse_config(text).unwrap();
        assert!(config.build_manifold().is_err());
    }
}
