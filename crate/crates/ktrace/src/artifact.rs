//! On-disk artifact format.
//!
//! Every model, chain checkpoint, and metrics report is written as a single
//! self-describing JSON document with a `kind` tag and a run stamp recording
//! the command, configuration, seed, and toolkit version that produced it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::abilities::AbilityGrid;
use crate::bkt::BktParams;
use crate::data::Partition;
use crate::dkt::DktModel;
use crate::error::{Error, Result};
use crate::eval::MetricsReport;
use crate::skill_discovery::WcrpSample;

/// Provenance stamp attached to every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStamp {
    pub toolkit_version: String,
    pub command: String,
    pub seed: u64,
    pub created_unix: u64,
    /// Full effective configuration of the producing run.
    pub config: serde_json::Value,
}

impl RunStamp {
    pub fn new(command: &str, seed: u64, config: serde_json::Value) -> Self {
        RunStamp {
            toolkit_version: env!("CARGO_PKG_VERSION").to_owned(),
            command: command.to_owned(),
            seed,
            created_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            config,
        }
    }
}

/// Any fitted model, tagged by kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelArtifact {
    /// Per-skill knowledge-tracing parameters under a fixed partition
    /// (covers both the classic model and the forgetting variant).
    BktModel {
        stamp: RunStamp,
        label_vocab: Vec<String>,
        partition: Partition,
        forgetting: bool,
        skill_params: Vec<BktParams>,
    },
    /// Per-skill parameters plus the ability grid for online inference.
    AbilityModel {
        stamp: RunStamp,
        label_vocab: Vec<String>,
        partition: Partition,
        forgetting: bool,
        grid: AbilityGrid,
        skill_params: Vec<BktParams>,
    },
    /// Retained posterior samples of a skill-discovery chain.
    WcrpChain {
        stamp: RunStamp,
        label_vocab: Vec<String>,
        forgetting: bool,
        samples: Vec<WcrpSample>,
        /// Index into `samples` of the highest-likelihood state.
        map_index: usize,
    },
    /// Recurrent baseline weights.
    DktModel {
        stamp: RunStamp,
        label_vocab: Vec<String>,
        model: DktModel,
    },
}

impl ModelArtifact {
    pub fn label_vocab(&self) -> &[String] {
        match self {
            ModelArtifact::BktModel { label_vocab, .. }
            | ModelArtifact::AbilityModel { label_vocab, .. }
            | ModelArtifact::WcrpChain { label_vocab, .. }
            | ModelArtifact::DktModel { label_vocab, .. } => label_vocab,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ModelArtifact::BktModel { .. } => "bkt-model",
            ModelArtifact::AbilityModel { .. } => "ability-model",
            ModelArtifact::WcrpChain { .. } => "wcrp-chain",
            ModelArtifact::DktModel { .. } => "dkt-model",
        }
    }
}

/// Metrics wrapper with the same envelope as models.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsArtifact {
    pub kind: String,
    pub stamp: RunStamp,
    pub report: MetricsReport,
}

impl MetricsArtifact {
    pub fn new(stamp: RunStamp, report: MetricsReport) -> Self {
        MetricsArtifact { kind: "metrics".to_owned(), stamp, report }
    }
}

pub fn save_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Serialization(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    serde_json::from_str(&text).map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_artifact_roundtrip() {
        let stamp = RunStamp::new("fit", 7, serde_json::json!({"model": "bkt"}));
        let artifact = ModelArtifact::BktModel {
            stamp,
            label_vocab: vec!["a".into(), "b".into()],
            partition: Partition::per_label(2),
            forgetting: false,
            skill_params: vec![
                BktParams::new(0.3, 0.2, 0.0, 0.2, 0.1).unwrap(),
                BktParams::new(0.4, 0.25, 0.0, 0.25, 0.15).unwrap(),
            ],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_json(&artifact, &path).unwrap();
        let loaded: ModelArtifact = load_json(&path).unwrap();
        assert_eq!(loaded, artifact);
        // The document self-describes through the kind tag.
        let raw: serde_json::Value = load_json(&path).unwrap();
        assert_eq!(raw["kind"], "bkt-model");
        assert_eq!(raw["stamp"]["seed"], 7);
        assert!(raw["stamp"]["toolkit_version"].is_string());
    }

    #[test]
    fn chain_and_dkt_artifacts_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let chain = ModelArtifact::WcrpChain {
            stamp: RunStamp::new("discover", 3, serde_json::json!({})),
            label_vocab: vec!["a".into(), "b".into(), "c".into()],
            forgetting: false,
            samples: vec![WcrpSample {
                partition: Partition::from_assignment(&[0, 0, 1]),
                skill_params: vec![
                    BktParams::new(0.3, 0.2, 0.0, 0.2, 0.1).unwrap(),
                    BktParams::new(0.4, 0.25, 0.0, 0.25, 0.15).unwrap(),
                ],
                loglik: -12.5,
            }],
            map_index: 0,
        };
        let path = dir.path().join("chain.json");
        save_json(&chain, &path).unwrap();
        let loaded: ModelArtifact = load_json(&path).unwrap();
        assert_eq!(loaded, chain);

        let config = crate::dkt::DktConfig { epochs: 0, ..crate::dkt::DktConfig::new(2) };
        let model = DktModel::init(&config).unwrap();
        let dkt = ModelArtifact::DktModel {
            stamp: RunStamp::new("train-dkt", 4, serde_json::json!({})),
            label_vocab: vec!["a".into(), "b".into()],
            model,
        };
        let path = dir.path().join("dkt.json");
        save_json(&dkt, &path).unwrap();
        let loaded: ModelArtifact = load_json(&path).unwrap();
        assert_eq!(loaded, dkt);
    }

    #[test]
    fn load_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, "{not json").unwrap();
        let r: Result<ModelArtifact> = load_json(&path);
        assert!(matches!(r, Err(Error::Serialization(_))));
    }
}
