//! On-disk layout of a run and the records passed between stages.

use std::fs;
use std::path::{Path, PathBuf};

use fedwind_core::features::{BehaviourFingerprint, FEATURE_NAMES, N_FEATURES};
use fedwind_core::forecast::ExclusionReason;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Method, RunConfig};
use crate::{CliError, StageResult};

pub const MANIFEST: &str = "manifest.json";

/// Paths of every artifact below an output directory. The fleet itself may
/// live elsewhere so that several methods can share one generated fleet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workspace {
    pub out: PathBuf,
    pub data: PathBuf,
}

impl Workspace {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        let out = out.into();
        let data = out.join("data");
        Self { out, data }
    }

    pub fn with_data(out: impl Into<PathBuf>, data: impl Into<PathBuf>) -> Self {
        Self {
            out: out.into(),
            data: data.into(),
        }
    }

    pub fn series(&self) -> PathBuf {
        self.data.join("series.csv")
    }
    pub fn meta(&self) -> PathBuf {
        self.data.join("meta.csv")
    }
    pub fn truth(&self) -> PathBuf {
        self.data.join("truth.csv")
    }
    pub fn fingerprints(&self) -> PathBuf {
        self.out.join("fingerprints.csv")
    }
    pub fn grouping(&self) -> PathBuf {
        self.out.join("grouping.json")
    }
    pub fn labels(&self) -> PathBuf {
        self.out.join("labels.csv")
    }
    pub fn tree(&self) -> PathBuf {
        self.out.join("tree.json")
    }
    pub fn centroids(&self) -> PathBuf {
        self.out.join("centroids.json")
    }
    pub fn audit(&self) -> PathBuf {
        self.out.join("audit.jsonl")
    }
    pub fn pca(&self) -> PathBuf {
        self.out.join("pca.csv")
    }
    pub fn training(&self) -> PathBuf {
        self.out.join("training.json")
    }
    pub fn model_dir(&self, group: usize) -> PathBuf {
        self.out.join("models").join(format!("cluster_{group}"))
    }
    pub fn config(&self) -> PathBuf {
        self.out.join("config.toml")
    }
    pub fn manifest(&self) -> PathBuf {
        self.out.join(MANIFEST)
    }

    /// Fails with [`CliError::MissingArtifact`] unless `path` exists.
    pub fn require(&self, path: PathBuf, stage: &'static str, producer: &'static str) -> Result<PathBuf, CliError> {
        if path.is_file() {
            Ok(path)
        } else {
            Err(CliError::MissingArtifact { stage, path, producer })
        }
    }
}

pub(crate) fn read_text(path: &Path, stage: &'static str) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::MalformedArtifact {
        stage,
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, stage: &'static str) -> Result<T, CliError> {
    serde_json::from_str(&read_text(path, stage)?).map_err(|e| CliError::MalformedArtifact {
        stage,
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub(crate) fn write(path: &Path, contents: &str, stage: &'static str) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Stage {
        stage,
        source: format!("{}: {e}", path.display()).into(),
    };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io)?;
    }
    fs::write(path, contents).map_err(io)
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T, stage: &'static str) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value).expect("artifact serialises");
    s.push('\n');
    write(path, &s, stage)
}

/// The grouping chosen by the `cluster` stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupingArtifact {
    pub method: Method,
    pub k: usize,
    pub quality: Option<f64>,
    pub ids: Vec<String>,
    /// Dense group of every turbine, aligned with `ids`.
    pub labels: Vec<usize>,
    /// Per group: whether it is an outlier leaf.
    pub outlier_groups: Vec<bool>,
    /// Groups that get a forecasting model.
    pub forecast_groups: Vec<usize>,
    /// Train one non-federated model on the pooled windows of each group.
    pub pooled: bool,
}

impl GroupingArtifact {
    pub fn members(&self, group: usize) -> Vec<&str> {
        self.ids
            .iter()
            .zip(&self.labels)
            .filter(|(_, &l)| l == group)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn labels_csv(&self) -> String {
        let mut s = String::from("id,cluster,outlier_flag\n");
        for (id, &l) in self.ids.iter().zip(&self.labels) {
            s.push_str(&format!("{id},{l},{}\n", u8::from(self.outlier_groups[l])));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedClient {
    pub id: String,
    pub reason: ExclusionReason,
}

/// One group's training outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedGroup {
    pub group: usize,
    /// Model path relative to the output directory; `None` when every client
    /// was filtered out.
    pub model: Option<String>,
    pub clients: Vec<String>,
    pub excluded: Vec<ExcludedClient>,
    pub pooled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingArtifact {
    pub method: Method,
    pub n_groups: usize,
    pub groups: Vec<TrainedGroup>,
}

pub fn fingerprints_csv(ids: &[String], fps: &[BehaviourFingerprint]) -> String {
    let mut s = format!("id,{}\n", FEATURE_NAMES.join(","));
    for (id, fp) in ids.iter().zip(fps) {
        let cells: Vec<String> = fp.to_array().iter().map(f64::to_string).collect();
        s.push_str(&format!("{id},{}\n", cells.join(",")));
    }
    s
}

pub fn read_fingerprints(path: &Path, stage: &'static str) -> Result<(Vec<String>, Vec<BehaviourFingerprint>), CliError> {
    let bad = |reason: String| CliError::MalformedArtifact {
        stage,
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let expected: Vec<&str> = std::iter::once("id").chain(FEATURE_NAMES).collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(bad(format!("header must be {}", expected.join(","))));
    }
    let (mut ids, mut fps) = (Vec::new(), Vec::new());
    for rec in reader.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let mut a = [0.0; N_FEATURES];
        for (j, v) in a.iter_mut().enumerate() {
            *v = rec[j + 1].parse().map_err(|e| bad(format!("{}: {e}", &rec[j + 1])))?;
        }
        ids.push(rec[0].to_string());
        fps.push(BehaviourFingerprint::from_array(a));
    }
    Ok((ids, fps))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Hashes of every file of a run. Carries no timestamps, so reruns with the
/// same configuration reproduce it byte for byte.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub core_version: String,
    pub method: Method,
    pub seed: u64,
    pub config_sha256: String,
    pub files: Vec<ManifestEntry>,
}

impl Manifest {
    /// Digest of the manifest document itself.
    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("manifest serialises").as_bytes())
    }
}

/// Configuration as written to `config.toml`: the output directory is
/// dropped so that runs into different directories stay comparable.
pub fn portable_config(cfg: &RunConfig) -> String {
    let mut c = cfg.clone();
    c.out = PathBuf::from(".");
    c.to_toml()
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let p = e.path();
        if e.file_type()?.is_dir() {
            collect_files(root, &p, out)?;
        } else if p != root.join(MANIFEST) {
            out.push(p);
        }
    }
    Ok(())
}

/// Rewrites `manifest.json` over the current contents of the output dir.
pub fn write_manifest(ws: &Workspace, cfg: &RunConfig, stage: &'static str) -> Result<Manifest, CliError> {
    let mut files = Vec::new();
    collect_files(&ws.out, &ws.out, &mut files).at(stage)?;
    let mut entries = Vec::with_capacity(files.len());
    for f in files {
        let bytes = fs::read(&f).at(stage)?;
        let rel = f.strip_prefix(&ws.out).expect("file below out dir");
        let path: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
        entries.push(ManifestEntry {
            path: path.join("/"),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(&bytes),
        });
    }
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = Manifest {
        tool: "fedwind".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        core_version: fedwind_core::VERSION.into(),
        method: cfg.method,
        seed: cfg.seed,
        config_sha256: sha256_hex(portable_config(cfg).as_bytes()),
        files: entries,
    };
    write_json(&ws.manifest(), &manifest, stage)?;
    Ok(manifest)
}
