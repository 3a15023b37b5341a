//! Batch pipeline: ingest, snapshot tree, projection and export.

use std::fmt::Write as _;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use dgsnap_core::ingest::DatasetConfig;
use dgsnap_core::model::TreeRecord;
use dgsnap_core::projection::{project, ProjectionConfig, ProjectionPoint};
use dgsnap_core::session::SessionLog;
use dgsnap_core::{ChangeThresholds, Error, GenerationSession, SCHEMA_VERSION};
use dgsnap_service::dataset::{Dataset, DatasetFiles};
use dgsnap_service::store::write_atomic;
use dgsnap_service::views::{self, DatasetDescriptor, MatrixAggregate};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub exit_code: u8,
    pub code: String,
    pub message: String,
}

impl CliError {
    pub fn config(code: &str, message: impl Into<String>) -> Self {
        CliError {
            exit_code: EXIT_CONFIG,
            code: code.into(),
            message: message.into(),
        }
    }

    pub fn runtime(code: &str, message: impl Into<String>) -> Self {
        CliError {
            exit_code: EXIT_RUNTIME,
            code: code.into(),
            message: message.into(),
        }
    }

    /// Machine-readable form written to stderr.
    pub fn to_json(&self) -> Value {
        json!({
            "schema_version": SCHEMA_VERSION,
            "error": { "code": self.code, "message": self.message },
            "exit_code": self.exit_code,
        })
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let exit_code = match e {
            Error::InvalidThresholds(_)
            | Error::InvalidProjectionConfig(_)
            | Error::SelectionOutOfRange { .. } => EXIT_CONFIG,
            _ => EXIT_RUNTIME,
        };
        CliError {
            exit_code,
            code: e.code().into(),
            message: e.to_string(),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::runtime("Io", format!("{}: {e}", path.display()))
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// Everything a pipeline run needs. Paths in a config file are relative to
/// that file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub tracking: Option<PathBuf>,
    #[serde(default)]
    pub links: Option<PathBuf>,
    #[serde(default)]
    pub events: Option<PathBuf>,
    #[serde(default)]
    pub dataset: DatasetConfig,
    /// Inclusive frame range; the whole dataset when absent.
    #[serde(default)]
    pub selection: Option<[usize; 2]>,
    /// One entry per layer to build above layer 0.
    #[serde(default)]
    pub schedule: Vec<ChangeThresholds>,
    #[serde(default)]
    pub projection: ProjectionConfig,
    #[serde(default)]
    pub skip_projection: bool,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            tracking: None,
            links: None,
            events: None,
            dataset: DatasetConfig::default(),
            selection: None,
            schedule: Vec::new(),
            projection: ProjectionConfig::default(),
            skip_projection: false,
            output: default_output(),
        }
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, o) => *b = o,
    }
}

impl RunConfig {
    /// Overlay a TOML or JSON config file on `self`; keys in the file win.
    pub fn overlay_file(&self, path: &Path) -> Result<RunConfig, CliError> {
        let text = fs::read_to_string(path).map_err(|e| {
            CliError::config("ConfigUnreadable", format!("{}: {e}", path.display()))
        })?;
        let bad = |e: String| CliError::config("InvalidConfig", format!("{}: {e}", path.display()));
        let mut file: Value = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?
        } else {
            let t: toml::Value = toml::from_str(&text).map_err(|e| bad(e.to_string()))?;
            serde_json::to_value(t).map_err(|e| bad(e.to_string()))?
        };
        let dir = path.parent().unwrap_or(Path::new(""));
        if let Value::Object(m) = &mut file {
            for key in ["tracking", "links", "events", "output"] {
                if let Some(Value::String(p)) = m.get_mut(key) {
                    if Path::new(p.as_str()).is_relative() {
                        *p = dir.join(&*p).to_string_lossy().into_owned();
                    }
                }
            }
        }
        let mut merged = serde_json::to_value(self).map_err(|e| bad(e.to_string()))?;
        merge(&mut merged, file);
        serde_json::from_value(merged).map_err(|e| bad(e.to_string()))
    }

    /// Checks that hold before any input is read. `needs_schedule` is set for
    /// commands that build a tree.
    pub fn validate(&self, needs_schedule: bool) -> Result<(), CliError> {
        if self.tracking.is_none() {
            return Err(CliError::config("MissingInput", "no tracking file given"));
        }
        if needs_schedule && self.schedule.is_empty() {
            return Err(CliError::config(
                "EmptySchedule",
                "the threshold schedule needs at least one layer",
            ));
        }
        for th in &self.schedule {
            th.validate()?;
        }
        if !self.skip_projection {
            self.projection.validate()?;
        }
        self.dataset
            .links
            .validate()
            .map_err(|e| CliError::config("InvalidConfig", e.to_string()))?;
        if let Some([from, to]) = self.selection {
            if from > to {
                return Err(CliError::config(
                    "InvalidConfig",
                    format!("empty selection {from}..={to}"),
                ));
            }
        }
        Ok(())
    }

    fn read(path: &Path) -> Result<Vec<u8>, CliError> {
        fs::read(path).map_err(|e| io_error(path, e))
    }

    pub fn load_dataset(&self) -> Result<Dataset, CliError> {
        let tracking = self
            .tracking
            .as_deref()
            .ok_or_else(|| CliError::config("MissingInput", "no tracking file given"))?;
        let files = DatasetFiles {
            tracking: Self::read(tracking)?,
            links: self.links.as_deref().map(Self::read).transpose()?,
            events: self.events.as_deref().map(Self::read).transpose()?,
            config: self.dataset.clone(),
        };
        Ok(Dataset::build(&files)?)
    }

    fn frame_range(&self, frames: usize) -> Result<Range<usize>, CliError> {
        let [from, to] = self.selection.unwrap_or([0, frames.saturating_sub(1)]);
        if to >= frames {
            return Err(Error::SelectionOutOfRange {
                start: from,
                end: to + 1,
                len: frames,
            }
            .into());
        }
        Ok(from..to + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeArtifact {
    pub schema_version: u32,
    pub dataset: DatasetDescriptor,
    /// Replaying this log over the dataset reproduces `tree`.
    pub history: SessionLog,
    pub tree: TreeRecord,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionArtifact {
    pub schema_version: u32,
    pub dataset_id: String,
    pub config: ProjectionConfig,
    pub points: Vec<ProjectionPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixArtifact {
    pub schema_version: u32,
    pub dataset_id: String,
    #[serde(flatten)]
    pub matrix: MatrixAggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetArtifact {
    pub schema_version: u32,
    #[serde(flatten)]
    pub descriptor: DatasetDescriptor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSummary {
    pub layer: usize,
    pub snapshots: usize,
    /// Selected frames per snapshot.
    pub compression: f64,
    pub mean_graph_stability: f64,
}

pub fn build_tree(cfg: &RunConfig, d: &Dataset) -> Result<GenerationSession, CliError> {
    let range = cfg.frame_range(d.frames.len())?;
    let mut s = GenerationSession::new(
        d.frames.clone(),
        d.universe.clone(),
        range,
        &cfg.dataset.features,
    )?;
    for th in &cfg.schedule {
        s.generate(s.tree().top_index(), *th)?;
    }
    Ok(s)
}

pub fn tree_artifact(d: &Dataset, s: &GenerationSession) -> TreeArtifact {
    let tree = s.tree().record();
    TreeArtifact {
        schema_version: SCHEMA_VERSION,
        dataset: d.descriptor.clone(),
        history: s.log_record(),
        digest: tree.digest.clone(),
        tree,
    }
}

pub fn summarize(s: &GenerationSession) -> Vec<LayerSummary> {
    let tree = s.tree();
    let frames = tree.selection().len() as f64;
    tree.layers()
        .iter()
        .enumerate()
        .map(|(k, layer)| LayerSummary {
            layer: k,
            snapshots: layer.len(),
            compression: frames / layer.len() as f64,
            mean_graph_stability: layer
                .iter()
                .map(|s| s.indicators().graph_stability)
                .sum::<f64>()
                / layer.len() as f64,
        })
        .collect()
}

pub fn summary_table(rows: &[LayerSummary]) -> String {
    let mut out = format!(
        "{:<6} {:>10} {:>12} {:>22}\n",
        "layer", "snapshots", "compression", "mean_graph_stability"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<6} {:>10} {:>12.3} {:>22.6}",
            r.layer, r.snapshots, r.compression, r.mean_graph_stability
        );
    }
    out
}

pub fn projection_artifact(cfg: &RunConfig, d: &Dataset) -> Result<ProjectionArtifact, CliError> {
    let range = cfg.frame_range(d.frames.len())?;
    let vectors = &d.vectors()?[range.clone()];
    let ids: Vec<String> = range.map(|i| format!("F{i}")).collect();
    Ok(ProjectionArtifact {
        schema_version: SCHEMA_VERSION,
        dataset_id: d.id().to_string(),
        config: cfg.projection,
        points: project(vectors, &ids, &cfg.projection)?,
    })
}

pub fn matrix_artifact(cfg: &RunConfig, d: &Dataset) -> Result<MatrixArtifact, CliError> {
    let range = cfg.frame_range(d.frames.len())?;
    let matrix = views::matrix(&d.frames, &d.universe, range.start, range.end - 1)
        .ok_or_else(|| CliError::config("RangeInvalid", "selection outside dataset"))?;
    Ok(MatrixArtifact {
        schema_version: SCHEMA_VERSION,
        dataset_id: d.id().to_string(),
        matrix,
    })
}

/// Pretty JSON with a trailing newline, written atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| CliError::runtime("Serialize", e.to_string()))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes).map_err(|e| io_error(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    write_atomic(path, text.as_bytes()).map_err(|e| io_error(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Tree,
    Project,
    Export,
}

/// Files written by a run, relative to the output directory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunReport {
    pub written: Vec<PathBuf>,
    pub summary: Option<String>,
}

/// Run `stage` of the pipeline, writing its artifacts under `cfg.output`.
pub fn run_stage(cfg: &RunConfig, stage: Stage) -> Result<RunReport, CliError> {
    let tree_stage = matches!(stage, Stage::Tree | Stage::Export);
    cfg.validate(tree_stage)?;
    let d = cfg.load_dataset()?;
    let out = &cfg.output;
    let mut report = RunReport::default();
    let mut put = |name: &str, r: Result<(), CliError>| -> Result<(), CliError> {
        r?;
        report.written.push(PathBuf::from(name));
        Ok(())
    };
    put(
        "dataset.json",
        write_json(
            &out.join("dataset.json"),
            &DatasetArtifact {
                schema_version: SCHEMA_VERSION,
                descriptor: d.descriptor.clone(),
            },
        ),
    )?;
    if tree_stage {
        let s = build_tree(cfg, &d)?;
        put(
            "tree.json",
            write_json(&out.join("tree.json"), &tree_artifact(&d, &s)),
        )?;
        let table = summary_table(&summarize(&s));
        put("summary.txt", write_text(&out.join("summary.txt"), &table))?;
        report.summary = Some(table);
    }
    if stage == Stage::Export {
        put(
            "matrix.json",
            write_json(&out.join("matrix.json"), &matrix_artifact(cfg, &d)?),
        )?;
    }
    if matches!(stage, Stage::Project | Stage::Export) && !cfg.skip_projection {
        put(
            "projection.json",
            write_json(&out.join("projection.json"), &projection_artifact(cfg, &d)?),
        )?;
    }
    Ok(report)
}

/// Full pipeline: dataset, tree, matrix and projection artifacts.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunReport, CliError> {
    run_stage(cfg, Stage::Export)
}

/// Replay a tree artifact's history over the configured inputs and check
/// that it reproduces the recorded digest.
pub fn verify_tree(cfg: &RunConfig, tree_path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(tree_path).map_err(|e| io_error(tree_path, e))?;
    let art: TreeArtifact = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::runtime("InvalidArtifact", e.to_string()))?;
    if art.schema_version != SCHEMA_VERSION {
        return Err(CliError::runtime(
            "SchemaVersion",
            format!(
                "artifact schema {} but this build reads {SCHEMA_VERSION}",
                art.schema_version
            ),
        ));
    }
    let mut dcfg = cfg.clone();
    dcfg.dataset = art.dataset.config.clone();
    let d = dcfg.load_dataset()?;
    if d.id() != art.dataset.id {
        return Err(CliError::runtime(
            "DatasetMismatch",
            format!(
                "inputs hash to dataset {} but the artifact was built from {}",
                d.id(),
                art.dataset.id
            ),
        ));
    }
    let s = GenerationSession::replay(d.frames.clone(), d.universe.clone(), &art.history)?;
    let digest = s.tree().digest();
    if digest != art.digest || s.tree().record() != art.tree {
        return Err(CliError::runtime(
            "ReplayDivergence",
            "replayed tree differs from the artifact",
        ));
    }
    Ok(digest)
}
