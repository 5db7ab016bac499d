//! Stage drivers and the end-to-end run.
//!
//! Everything filesystem-shaped lives here: the pure stages in the other
//! modules know nothing about paths, images on disk, or config files. Each
//! driver reads its inputs, calls the pure stage, and writes its outputs;
//! [`run_pipeline`] chains cluster, attribute, and report for each requested
//! task and drops a bundle summary next to the per-task files.
//!
//! Outputs are deterministic: rerunning any driver on the same inputs writes
//! byte-identical files. Nothing here embeds timestamps, hostnames, or hash
//! seeds, collections serialize in sorted order, and floats render with a
//! fixed shortest-round-trip encoding.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::rc::Rc;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

use crate::align::{align_face, parse_detections, PixelGrid};
use crate::attribute::{
    attribute_clustering, label_map, read_attributions, record_label_map, write_attributions,
    AttributionOptions, Task,
};
use crate::corpus::{parse_filename, render_manifest, Corpus, PaintingRecord};
use crate::dbscan::{
    cluster_embeddings_full, elbow_eps, kdistance_profile, write_assignments, Backend,
    ClusterParams, ClusteringResult, Labels, DEFAULT_EPS, DEFAULT_MIN_PTS,
};
use crate::embed::{
    mock_embed, read_store_auto, renormalized, write_store, EmbeddingVector,
};
use crate::metrics::{
    build_task_report, render_csv, Convention, ReportOptions, TaskReport, UniverseScope,
};
use crate::synth::{generate, write_truth, SynthSpec};

/// Environment variable fixing the rayon thread count for this process.
pub const THREADS_ENV: &str = "ATELIER_THREADS";

/// Image extensions the scan ingest accepts.
const SCAN_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Debug, Error)]
pub enum PipelineError {
    /// The filesystem refused an operation on a named path.
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    /// A named input file exists but its content is unusable.
    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },
    /// The config file or a config value is unusable.
    #[error("config: {0}")]
    Config(String),
    /// Arguments or cross-file state do not add up.
    #[error("{0}")]
    Invalid(String),
    /// A bug: an invariant the pipeline itself guarantees was violated.
    #[error("internal error: {0}")]
    Internal(String),
}

impl PipelineError {
    /// Process exit code: 2 for anything the caller can fix, 3 for bugs.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Internal(_) => 3,
            _ => 2,
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> PipelineError {
    PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn input_err(path: &Path, message: impl ToString) -> PipelineError {
    PipelineError::Input {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

pub fn read_text(path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, PipelineError> {
    std::fs::read(path).map_err(|e| io_err(path, e))
}

/// Writes a file, creating parent directories as needed.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
    }
    std::fs::write(path, bytes).map_err(|e| io_err(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    write_bytes(path, text.as_bytes())
}

/// Parses the thread-count override. Pure so the validation is testable
/// without touching process state.
pub fn parse_thread_count(raw: &str) -> Result<usize, String> {
    match raw.trim().parse::<usize>() {
        Ok(0) | Err(_) => Err(format!(
            "{THREADS_ENV} must be a positive integer, got {raw:?}"
        )),
        Ok(n) => Ok(n),
    }
}

/// Applies `ATELIER_THREADS` to the global rayon pool. Call once at process
/// start; unset means rayon's own default. A pool that is already built is
/// left alone, which only happens if something else initialized rayon first.
pub fn init_threads_from_env() -> Result<(), PipelineError> {
    let raw = match std::env::var(THREADS_ENV) {
        Err(std::env::VarError::NotPresent) => return Ok(()),
        Err(e) => return Err(PipelineError::Config(format!("{THREADS_ENV}: {e}"))),
        Ok(raw) => raw,
    };
    let threads = parse_thread_count(&raw).map_err(PipelineError::Config)?;
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();
    Ok(())
}

// ---------------------------------------------------------------------------
// Image glue

/// Loads an image into a 3-channel pixel grid.
pub fn load_grid(path: &Path) -> Result<PixelGrid, PipelineError> {
    let img = image::open(path).map_err(|e| input_err(path, e))?;
    let rgb = img.to_rgb8();
    let (width, height) = (rgb.width(), rgb.height());
    PixelGrid::new(width, height, 3, rgb.into_raw()).map_err(|e| input_err(path, e))
}

/// Saves a crop as PNG.
pub fn save_grid_png(path: &Path, grid: &PixelGrid) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
    }
    let (w, h) = (grid.width(), grid.height());
    let samples = grid.samples().to_vec();
    let saved = match grid.channels() {
        3 => image::RgbImage::from_raw(w, h, samples)
            .ok_or_else(|| PipelineError::Internal("crop buffer length mismatch".into()))?
            .save(path),
        1 => image::GrayImage::from_raw(w, h, samples)
            .ok_or_else(|| PipelineError::Internal("crop buffer length mismatch".into()))?
            .save(path),
        c => return Err(PipelineError::Internal(format!("{c}-channel crop"))),
    };
    saved.map_err(|e| input_err(path, e))
}

// ---------------------------------------------------------------------------
// Ingest

/// Builds records by scanning `<root>/<style>/<image>` for image files.
///
/// The immediate parent directory names the style, the file name carries
/// artist, title, and optional year, and the painting id is
/// `<style>--<stem>`. Paths are canonicalized so the manifest does not
/// depend on the working directory. Files are visited in sorted path order.
pub fn ingest_scan(root: &Path) -> Result<Vec<PaintingRecord>, PipelineError> {
    let root_canon = root.canonicalize().map_err(|e| io_err(root, e))?;
    let mut files: Vec<PathBuf> = Vec::new();
    for entry in WalkDir::new(&root_canon) {
        let entry = entry.map_err(|e| input_err(&root_canon, e))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let path = entry.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        if ext.as_deref().is_some_and(|e| SCAN_EXTENSIONS.contains(&e)) {
            files.push(path.to_path_buf());
        }
    }
    files.sort();
    let mut records = Vec::with_capacity(files.len());
    for path in files {
        let parent = path.parent().unwrap_or(&root_canon);
        if parent == root_canon {
            return Err(input_err(
                &path,
                "sits directly under the scan root; expected <root>/<style>/<image>",
            ));
        }
        let style_dir = parent
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| input_err(parent, "style directory name is not valid UTF-8"))?;
        let file_name = path
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| input_err(&path, "file name is not valid UTF-8"))?;
        let stem = path
            .file_stem()
            .and_then(|n| n.to_str())
            .ok_or_else(|| input_err(&path, "file stem is not valid UTF-8"))?
            .to_lowercase();
        let parsed =
            parse_filename(&format!("{style_dir}/{file_name}")).map_err(|e| input_err(&path, e))?;
        records.push(PaintingRecord {
            painting_id: format!("{}--{stem}", parsed.style),
            artist: parsed.artist,
            title: parsed.title,
            style: parsed.style,
            year: parsed.year,
            source_path: path.to_string_lossy().into_owned(),
        });
    }
    // Runs the shared validation (unique ids, sane fields) before anything
    // is written.
    Corpus::new(records.clone()).map_err(|e| input_err(&root_canon, e))?;
    Ok(records)
}

/// Normalizes an existing manifest: parse, validate, re-render.
pub fn ingest_manifest(path: &Path) -> Result<Vec<PaintingRecord>, PipelineError> {
    let text = read_text(path)?;
    let corpus = Corpus::from_manifest_text(&text).map_err(|e| input_err(path, e))?;
    Ok(corpus.records().to_vec())
}

pub fn run_ingest(
    manifest: Option<&Path>,
    scan: Option<&Path>,
    out: &Path,
) -> Result<usize, PipelineError> {
    let records = match (manifest, scan) {
        (Some(m), None) => ingest_manifest(m)?,
        (None, Some(root)) => ingest_scan(root)?,
        _ => {
            return Err(PipelineError::Invalid(
                "ingest needs exactly one of --manifest or --scan".into(),
            ))
        }
    };
    write_text(out, &render_manifest(&records))?;
    Ok(records.len())
}

// ---------------------------------------------------------------------------
// Align

#[derive(Debug)]
pub struct AlignSummary {
    pub crops: usize,
    pub paintings: usize,
}

/// Crops every detected face to `<out_dir>/<painting_id>__<index>.png`.
pub fn run_align(
    manifest: &Path,
    detections: &Path,
    out_dir: &Path,
    margin: u32,
    size: u32,
) -> Result<AlignSummary, PipelineError> {
    let corpus =
        Corpus::from_manifest_text(&read_text(manifest)?).map_err(|e| input_err(manifest, e))?;
    let dets = parse_detections(&read_text(detections)?).map_err(|e| input_err(detections, e))?;
    std::fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;

    let mut cached: Option<(String, PixelGrid)> = None;
    let mut seen_faces = std::collections::BTreeSet::new();
    let mut paintings = std::collections::BTreeSet::new();
    for det in &dets {
        let record = corpus.get(&det.painting_id).ok_or_else(|| {
            input_err(
                detections,
                format!("unknown painting {:?}", det.painting_id),
            )
        })?;
        let grid = match &cached {
            Some((id, grid)) if *id == det.painting_id => grid,
            _ => {
                let grid = load_grid(Path::new(&record.source_path))?;
                &cached.insert((det.painting_id.clone(), grid)).1
            }
        };
        let face = align_face(grid, &det.painting_id, det.face_index, det.bbox(), margin, size)
            .map_err(|e| {
                input_err(
                    detections,
                    format!("painting {:?} face {}: {e}", det.painting_id, det.face_index),
                )
            })?;
        if !seen_faces.insert(face.face_id.clone()) {
            return Err(input_err(
                detections,
                format!("duplicate detection for face {:?}", face.face_id),
            ));
        }
        paintings.insert(det.painting_id.clone());
        save_grid_png(&out_dir.join(format!("{}.png", face.face_id)), &face.crop)?;
    }
    Ok(AlignSummary {
        crops: seen_faces.len(),
        paintings: paintings.len(),
    })
}

// ---------------------------------------------------------------------------
// Embed

fn store_bytes(vectors: &[EmbeddingVector]) -> Result<Vec<u8>, PipelineError> {
    let mut bytes = Vec::new();
    write_store(vectors, &mut bytes)
        .map_err(|e| PipelineError::Internal(format!("store serialization: {e}")))?;
    Ok(bytes)
}

/// Embeds every `.png` crop in a directory with the deterministic mock
/// embedder, in sorted file-name order. The file stem is the face id.
pub fn run_embed_mock(crops_dir: &Path, out: &Path) -> Result<usize, PipelineError> {
    let mut crops = Vec::new();
    let entries = std::fs::read_dir(crops_dir).map_err(|e| io_err(crops_dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| io_err(crops_dir, e))?;
        let path = entry.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if entry.file_type().map_err(|e| io_err(&path, e))?.is_file() && is_png {
            crops.push(path);
        }
    }
    if crops.is_empty() {
        return Err(input_err(crops_dir, "no .png crops to embed"));
    }
    crops.sort();
    let mut vectors = Vec::with_capacity(crops.len());
    for path in crops {
        let face_id = path
            .file_stem()
            .and_then(|n| n.to_str())
            .ok_or_else(|| input_err(&path, "crop name is not valid UTF-8"))?
            .to_string();
        let grid = load_grid(&path)?;
        let values = mock_embed(&grid).map_err(|e| input_err(&path, e))?;
        vectors.push(EmbeddingVector::new(face_id, values));
    }
    write_bytes(out, &store_bytes(&vectors)?)?;
    Ok(vectors.len())
}

/// Imports an existing store (text or binary), re-normalizing every vector,
/// and writes it in the binary format.
pub fn run_embed_import(input: &Path, out: &Path) -> Result<usize, PipelineError> {
    let bytes = read_bytes(input)?;
    let vectors = read_store_auto(&bytes).map_err(|e| input_err(input, e))?;
    let vectors = renormalized(vectors).map_err(|e| input_err(input, e))?;
    write_bytes(out, &store_bytes(&vectors)?)?;
    Ok(vectors.len())
}

// ---------------------------------------------------------------------------
// Synth

#[derive(Debug)]
pub struct SynthSummary {
    pub faces: usize,
    pub identities: usize,
    pub manifest: PathBuf,
    pub embeddings: PathBuf,
    pub truth: PathBuf,
}

/// Materializes a generated corpus: manifest, binary embedding store, truth.
pub fn run_synth(spec: &SynthSpec, out_dir: &Path) -> Result<SynthSummary, PipelineError> {
    let output = generate(spec).map_err(|e| PipelineError::Invalid(e.to_string()))?;
    let manifest = out_dir.join("manifest.jsonl");
    let embeddings = out_dir.join("embeddings.femb");
    let truth = out_dir.join("truth.jsonl");
    write_text(&manifest, &output.manifest)?;
    let vectors: Vec<EmbeddingVector> = output
        .embeddings
        .into_iter()
        .map(|(face_id, values)| EmbeddingVector::new(face_id, values))
        .collect();
    write_bytes(&embeddings, &store_bytes(&vectors)?)?;
    write_text(&truth, &write_truth(&output.truth))?;
    Ok(SynthSummary {
        faces: vectors.len(),
        identities: spec.n_identities,
        manifest,
        embeddings,
        truth,
    })
}

// ---------------------------------------------------------------------------
// Cluster

/// Radius setting: a fixed value or a strategy name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpsSetting {
    Value(f64),
    Strategy(String),
}

impl EpsSetting {
    pub const ELBOW: &'static str = "elbow";
}

impl std::fmt::Display for EpsSetting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EpsSetting::Value(v) => write!(f, "{v}"),
            EpsSetting::Strategy(s) => f.write_str(s),
        }
    }
}

impl std::str::FromStr for EpsSetting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Ok(v) = s.parse::<f64>() {
            return Ok(EpsSetting::Value(v));
        }
        if s == Self::ELBOW {
            return Ok(EpsSetting::Strategy(s.to_string()));
        }
        Err(format!("eps must be a number or {:?}, got {s:?}", Self::ELBOW))
    }
}

/// Fully resolved clustering plan for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterPlan {
    pub eps: EpsSetting,
    pub min_pts: usize,
    /// Defaults to `min_pts` when absent.
    pub min_cluster_size: Option<usize>,
    pub backend: Backend,
}

impl Default for ClusterPlan {
    fn default() -> Self {
        ClusterPlan {
            eps: EpsSetting::Value(DEFAULT_EPS),
            min_pts: DEFAULT_MIN_PTS,
            min_cluster_size: None,
            backend: Backend::Auto,
        }
    }
}

pub struct ClusterStageOutput {
    /// Face ids in store order.
    pub ids: Vec<String>,
    /// Per-point labels in store order.
    pub labels: Labels,
    pub result: ClusteringResult,
    pub resolved: ClusterParams,
    pub backend: Backend,
    /// `"fixed"` or `"elbow"`.
    pub eps_source: &'static str,
}

/// Clusters loaded embeddings under a plan, resolving an elbow radius from
/// the k-distance profile (k = min_pts - 1, the neighborhood size without
/// the point itself) when asked.
pub fn cluster_stage(
    vectors: &[EmbeddingVector],
    plan: &ClusterPlan,
) -> Result<ClusterStageOutput, PipelineError> {
    let min_pts = plan.min_pts;
    let (eps, eps_source) = match &plan.eps {
        EpsSetting::Value(v) => (*v, "fixed"),
        EpsSetting::Strategy(name) if name == EpsSetting::ELBOW => {
            let points: Vec<&[f64]> = vectors.iter().map(|v| v.values.as_slice()).collect();
            let k = min_pts.saturating_sub(1).max(1);
            let profile = kdistance_profile(&points, k)
                .map_err(|e| PipelineError::Invalid(format!("eps = elbow: {e}")))?;
            let eps = elbow_eps(&profile).ok_or_else(|| {
                PipelineError::Invalid("eps = elbow: empty distance profile".into())
            })?;
            (eps, "elbow")
        }
        EpsSetting::Strategy(name) => {
            return Err(PipelineError::Config(format!(
                "unknown eps strategy {name:?} (use a number or {:?})",
                EpsSetting::ELBOW
            )))
        }
    };
    let params = ClusterParams {
        eps,
        min_pts,
        min_cluster_size: plan.min_cluster_size.unwrap_or(min_pts),
    };
    let (labels, result) = cluster_embeddings_full(vectors, params, plan.backend)
        .map_err(|e| PipelineError::Invalid(e.to_string()))?;
    Ok(ClusterStageOutput {
        ids: vectors.iter().map(|v| v.face_id.clone()).collect(),
        labels,
        result,
        resolved: params,
        backend: plan.backend,
        eps_source,
    })
}

#[derive(Debug)]
pub struct ClusterSummary {
    pub points: usize,
    pub clusters: usize,
    pub noise: usize,
    pub eps: f64,
    pub eps_source: &'static str,
}

/// The standalone cluster subcommand: store in, assignments file out.
pub fn run_cluster(
    embeddings: &Path,
    plan: &ClusterPlan,
    out: &Path,
) -> Result<ClusterSummary, PipelineError> {
    let bytes = read_bytes(embeddings)?;
    let vectors = read_store_auto(&bytes).map_err(|e| input_err(embeddings, e))?;
    let stage = cluster_stage(&vectors, plan)?;
    let text = write_assignments(&stage.ids, &stage.labels)
        .map_err(|e| PipelineError::Internal(e.to_string()))?;
    write_text(out, &text)?;
    Ok(ClusterSummary {
        points: stage.ids.len(),
        clusters: stage.result.clusters.len(),
        noise: stage.result.noise.len(),
        eps: stage.resolved.eps,
        eps_source: stage.eps_source,
    })
}

// ---------------------------------------------------------------------------
// Attribute

#[derive(Debug)]
pub struct AttributeSummary {
    pub clusters: usize,
    pub attributed: usize,
}

pub fn run_attribute(
    clusters: &Path,
    manifest: &Path,
    task: Task,
    options: AttributionOptions,
    out: &Path,
) -> Result<AttributeSummary, PipelineError> {
    let assignments = crate::dbscan::read_assignments(&read_text(clusters)?)
        .map_err(|e| input_err(clusters, e))?;
    let corpus =
        Corpus::from_manifest_text(&read_text(manifest)?).map_err(|e| input_err(manifest, e))?;
    let attrs = attribute_clustering(&assignments, task, &corpus, options)
        .map_err(|e| PipelineError::Invalid(e.to_string()))?;
    let text = write_attributions(&attrs, &assignments)
        .map_err(|e| PipelineError::Internal(e.to_string()))?;
    write_text(out, &text)?;
    Ok(AttributeSummary {
        clusters: assignments.clusters.len(),
        attributed: attrs.len(),
    })
}

// ---------------------------------------------------------------------------
// Report

fn report_json(report: &TaskReport) -> Result<String, PipelineError> {
    let mut json = serde_json::to_string_pretty(report)
        .map_err(|e| PipelineError::Internal(format!("report serialization: {e}")))?;
    json.push('\n');
    Ok(json)
}

#[allow(clippy::too_many_arguments)]
pub fn run_report(
    clusters: &Path,
    attributions: &Path,
    manifest: &Path,
    task: Task,
    options: &ReportOptions,
    out: &Path,
    csv: Option<&Path>,
) -> Result<TaskReport, PipelineError> {
    let assignments = crate::dbscan::read_assignments(&read_text(clusters)?)
        .map_err(|e| input_err(clusters, e))?;
    let corpus =
        Corpus::from_manifest_text(&read_text(manifest)?).map_err(|e| input_err(manifest, e))?;
    let records =
        read_attributions(&read_text(attributions)?).map_err(|e| input_err(attributions, e))?;
    if let Some(bad) = records.iter().find(|r| r.task != task) {
        return Err(input_err(
            attributions,
            format!(
                "cluster {} was attributed for task {}, but this report is for task {task}",
                bad.cluster_id, bad.task
            ),
        ));
    }
    let labels = record_label_map(&records);
    let report = build_task_report(&assignments, &labels, &corpus, task, options)
        .map_err(|e| PipelineError::Invalid(e.to_string()))?;
    write_text(out, &report_json(&report)?)?;
    if let Some(csv_path) = csv {
        write_text(csv_path, &render_csv(&report))?;
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Config for `run`

/// Per-task clustering overrides in the config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterKnobs {
    pub eps: Option<EpsSetting>,
    pub min_pts: Option<usize>,
    pub min_cluster_size: Option<usize>,
    pub index: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSection {
    pub eps: Option<EpsSetting>,
    pub min_pts: Option<usize>,
    pub min_cluster_size: Option<usize>,
    pub index: Option<String>,
    pub artist: Option<ClusterKnobs>,
    pub style: Option<ClusterKnobs>,
    pub year: Option<ClusterKnobs>,
}

impl ClusterSection {
    fn knobs_for(&self, task: Task) -> Option<&ClusterKnobs> {
        match task {
            Task::Artist => self.artist.as_ref(),
            Task::Style => self.style.as_ref(),
            Task::Year => self.year.as_ref(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputSection {
    pub manifest: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttributionSection {
    pub threshold: Option<f64>,
    pub dedupe_paintings: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    pub convention: Option<String>,
    pub universe: Option<String>,
    pub include_noise: Option<bool>,
    pub csv: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

/// The `run` config file. Every field is optional; CLI flags override file
/// values, per-task `[cluster.<task>]` tables override `[cluster]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: InputSection,
    pub cluster: ClusterSection,
    pub attribution: AttributionSection,
    pub report: ReportSection,
    pub output: OutputSection,
    /// Tasks to run, default all three.
    pub tasks: Option<Vec<String>>,
}

pub fn parse_config(text: &str, path: &Path) -> Result<PipelineConfig, PipelineError> {
    toml::from_str(text).map_err(|e| input_err(path, e))
}

/// CLI-level overrides for `run`. `None` means "keep the config value".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOverrides {
    pub manifest: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub tasks: Option<Vec<Task>>,
    pub eps: Option<EpsSetting>,
    pub min_pts: Option<usize>,
    pub min_cluster_size: Option<usize>,
    pub backend: Option<Backend>,
    pub threshold: Option<f64>,
    pub dedupe_paintings: Option<bool>,
    pub convention: Option<Convention>,
    pub include_noise: Option<bool>,
    pub csv: Option<bool>,
}

/// A run plan with every knob resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedRun {
    pub manifest: PathBuf,
    pub embeddings: PathBuf,
    pub out_dir: PathBuf,
    /// Always in artist, style, year order regardless of how they were
    /// requested, so outputs do not depend on flag order.
    pub tasks: Vec<Task>,
    pub plans: BTreeMap<Task, ClusterPlan>,
    pub attribution: AttributionOptions,
    pub convention: Convention,
    pub universe: UniverseScope,
    pub include_noise: bool,
    pub csv: bool,
}

fn parse_config_value<T: std::str::FromStr<Err = String>>(
    what: &str,
    raw: &str,
) -> Result<T, PipelineError> {
    raw.parse()
        .map_err(|e: String| PipelineError::Config(format!("{what}: {e}")))
}

/// Layers defaults, the config file, and CLI overrides into a run plan.
/// Precedence per field: CLI flag, then `[cluster.<task>]`, then the base
/// section, then the built-in default.
pub fn resolve_run(
    config: &PipelineConfig,
    overrides: &RunOverrides,
) -> Result<ResolvedRun, PipelineError> {
    let manifest = overrides
        .manifest
        .clone()
        .or_else(|| config.input.manifest.clone())
        .ok_or_else(|| {
            PipelineError::Config("input.manifest is required (file or --manifest)".into())
        })?;
    let embeddings = overrides
        .embeddings
        .clone()
        .or_else(|| config.input.embeddings.clone())
        .ok_or_else(|| {
            PipelineError::Config("input.embeddings is required (file or --embeddings)".into())
        })?;
    let out_dir = overrides
        .out_dir
        .clone()
        .or_else(|| config.output.dir.clone())
        .ok_or_else(|| {
            PipelineError::Config("output.dir is required (file or --out-dir)".into())
        })?;

    let mut tasks: Vec<Task> = match (&overrides.tasks, &config.tasks) {
        (Some(t), _) => t.clone(),
        (None, Some(names)) => names
            .iter()
            .map(|n| parse_config_value::<Task>("tasks", n))
            .collect::<Result<_, _>>()?,
        (None, None) => Task::ALL.to_vec(),
    };
    if tasks.is_empty() {
        return Err(PipelineError::Config("tasks must not be empty".into()));
    }
    tasks.sort();
    tasks.dedup();

    let mut plans = BTreeMap::new();
    for &task in &tasks {
        let knobs = config.cluster.knobs_for(task);
        let defaults = ClusterPlan::default();
        let eps = overrides
            .eps
            .clone()
            .or_else(|| knobs.and_then(|k| k.eps.clone()))
            .or_else(|| config.cluster.eps.clone())
            .unwrap_or(defaults.eps);
        if let EpsSetting::Strategy(name) = &eps {
            if name != EpsSetting::ELBOW {
                return Err(PipelineError::Config(format!(
                    "unknown eps strategy {name:?} (use a number or {:?})",
                    EpsSetting::ELBOW
                )));
            }
        }
        let min_pts = overrides
            .min_pts
            .or_else(|| knobs.and_then(|k| k.min_pts))
            .or(config.cluster.min_pts)
            .unwrap_or(defaults.min_pts);
        let min_cluster_size = overrides
            .min_cluster_size
            .or_else(|| knobs.and_then(|k| k.min_cluster_size))
            .or(config.cluster.min_cluster_size);
        let backend = match overrides.backend {
            Some(b) => b,
            None => {
                let raw = knobs
                    .and_then(|k| k.index.clone())
                    .or_else(|| config.cluster.index.clone());
                match raw {
                    Some(raw) => parse_config_value::<Backend>("cluster.index", &raw)?,
                    None => defaults.backend,
                }
            }
        };
        plans.insert(
            task,
            ClusterPlan {
                eps,
                min_pts,
                min_cluster_size,
                backend,
            },
        );
    }

    let attribution = AttributionOptions {
        threshold: overrides
            .threshold
            .or(config.attribution.threshold)
            .unwrap_or_else(|| AttributionOptions::default().threshold),
        dedupe_paintings: overrides
            .dedupe_paintings
            .or(config.attribution.dedupe_paintings)
            .unwrap_or(false),
    };
    let convention = match overrides.convention {
        Some(c) => c,
        None => match &config.report.convention {
            Some(raw) => parse_config_value::<Convention>("report.convention", raw)?,
            None => Convention::default(),
        },
    };
    let universe = match &config.report.universe {
        Some(raw) => parse_config_value::<UniverseScope>("report.universe", raw)?,
        None => UniverseScope::default(),
    };
    Ok(ResolvedRun {
        manifest,
        embeddings,
        out_dir,
        tasks,
        plans,
        attribution,
        convention,
        universe,
        include_noise: overrides
            .include_noise
            .or(config.report.include_noise)
            .unwrap_or(false),
        csv: overrides.csv.or(config.report.csv).unwrap_or(true),
    })
}

// ---------------------------------------------------------------------------
// The full run

/// Per-task slice of the bundle summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleTask {
    /// Output file names, relative to the bundle.
    pub files: BTreeMap<String, String>,
    pub cluster_params: ClusterParams,
    pub backend: String,
    pub eps_source: String,
    pub faces: usize,
    pub clusters: usize,
    pub noise: usize,
    pub attributed: usize,
    pub merged_accuracy: Option<f64>,
    pub purity: f64,
    pub nmi: f64,
    pub rand_index: f64,
}

/// Echo of the effective run settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleConfig {
    pub manifest: String,
    pub embeddings: String,
    pub tasks: Vec<String>,
    pub convention: String,
    pub threshold: f64,
    pub dedupe_paintings: bool,
    pub include_noise: bool,
    pub csv: bool,
}

/// `bundle.json`: what a run produced and under which settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Bundle {
    pub config: BundleConfig,
    pub tasks: BTreeMap<String, BundleTask>,
}

#[derive(Debug)]
pub struct RunSummary {
    pub bundle_path: PathBuf,
    pub bundle: Bundle,
}

/// Clusters, attributes, and reports each requested task, writing
/// `clusters_<task>.jsonl`, `attributions_<task>.jsonl`,
/// `report_<task>.json` (plus `.csv` when enabled) and `bundle.json` into
/// the output directory. Tasks sharing one clustering plan share the
/// computation.
pub fn run_pipeline(run: &ResolvedRun) -> Result<RunSummary, PipelineError> {
    let corpus = Corpus::from_manifest_text(&read_text(&run.manifest)?)
        .map_err(|e| input_err(&run.manifest, e))?;
    let bytes = read_bytes(&run.embeddings)?;
    let vectors = read_store_auto(&bytes).map_err(|e| input_err(&run.embeddings, e))?;

    let mut stage_cache: Vec<(ClusterPlan, Rc<ClusterStageOutput>)> = Vec::new();
    let mut bundle_tasks = BTreeMap::new();
    for &task in &run.tasks {
        let plan = &run.plans[&task];
        let stage = match stage_cache.iter().find(|(p, _)| p == plan) {
            Some((_, cached)) => Rc::clone(cached),
            None => {
                let stage = Rc::new(cluster_stage(&vectors, plan)?);
                stage_cache.push((plan.clone(), Rc::clone(&stage)));
                stage
            }
        };

        let assignments = stage.result.assignments();
        let attrs = attribute_clustering(&assignments, task, &corpus, run.attribution)
            .map_err(|e| PipelineError::Invalid(e.to_string()))?;
        let report_options = ReportOptions {
            convention: run.convention,
            universe: run.universe,
            include_noise_as_singletons: run.include_noise,
            attribution_threshold: Some(run.attribution.threshold),
            cluster_params: Some(stage.resolved),
        };
        let report = build_task_report(&assignments, &label_map(&attrs), &corpus, task, &report_options)
            .map_err(|e| PipelineError::Invalid(e.to_string()))?;

        let clusters_name = format!("clusters_{task}.jsonl");
        let attrs_name = format!("attributions_{task}.jsonl");
        let report_name = format!("report_{task}.json");
        let assignments_text = write_assignments(&stage.ids, &stage.labels)
            .map_err(|e| PipelineError::Internal(e.to_string()))?;
        write_text(&run.out_dir.join(&clusters_name), &assignments_text)?;
        let attrs_text = write_attributions(&attrs, &assignments)
            .map_err(|e| PipelineError::Internal(e.to_string()))?;
        write_text(&run.out_dir.join(&attrs_name), &attrs_text)?;
        write_text(&run.out_dir.join(&report_name), &report_json(&report)?)?;
        let mut files = BTreeMap::from([
            ("clusters".to_string(), clusters_name),
            ("attributions".to_string(), attrs_name),
            ("report".to_string(), report_name),
        ]);
        if run.csv {
            let csv_name = format!("report_{task}.csv");
            write_text(&run.out_dir.join(&csv_name), &render_csv(&report))?;
            files.insert("csv".to_string(), csv_name);
        }

        bundle_tasks.insert(
            task.to_string(),
            BundleTask {
                files,
                cluster_params: stage.resolved,
                backend: stage.backend.to_string(),
                eps_source: stage.eps_source.to_string(),
                faces: stage.ids.len(),
                clusters: stage.result.clusters.len(),
                noise: stage.result.noise.len(),
                attributed: attrs.len(),
                merged_accuracy: report.merged_accuracy,
                purity: report.partition.purity,
                nmi: report.partition.nmi,
                rand_index: report.partition.rand_index,
            },
        );
    }

    let bundle = Bundle {
        config: BundleConfig {
            manifest: run.manifest.to_string_lossy().into_owned(),
            embeddings: run.embeddings.to_string_lossy().into_owned(),
            tasks: run.tasks.iter().map(|t| t.to_string()).collect(),
            convention: run.convention.to_string(),
            threshold: run.attribution.threshold,
            dedupe_paintings: run.attribution.dedupe_paintings,
            include_noise: run.include_noise,
            csv: run.csv,
        },
        tasks: bundle_tasks,
    };
    let bundle_path = run.out_dir.join("bundle.json");
    let mut json = serde_json::to_string_pretty(&bundle)
        .map_err(|e| PipelineError::Internal(format!("bundle serialization: {e}")))?;
    json.push('\n');
    write_text(&bundle_path, &json)?;
    Ok(RunSummary {
        bundle_path,
        bundle,
    })
}
