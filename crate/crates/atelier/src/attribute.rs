//! Cluster attribution: naming a cluster by the majority label of its
//! members.
//!
//! A cluster of faces is attributed to an artist, a style, or a 50-year bin
//! when one label holds a strict majority among the labeled members. "Strict"
//! means two things: the winning count must exceed the threshold share
//! (default one half) of labeled members, and it must beat every competing
//! label outright. A cluster with no winner is left unattributed, which is
//! the honest outcome for a mixed cluster.
//!
//! Faces are the counting unit: a painting contributing three faces to a
//! cluster votes three times. Pass `dedupe_paintings` to count each painting
//! once instead.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{year_bin, Corpus, CorpusError, PaintingRecord};
use crate::dbscan::ClusterAssignments;

/// Default majority threshold: a label must cover more than half of a
/// cluster's labeled members.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum AttributeError {
    #[error("face id {face_id:?} does not resolve to a painting record")]
    UnknownFace { face_id: String },
    #[error("threshold must be in [0, 1), got {0}")]
    BadThreshold(f64),
    #[error("attribution list mixes tasks {a} and {b}")]
    MixedTasks { a: Task, b: Task },
    #[error("attribution names cluster {cluster_id} which the clustering does not contain")]
    UnknownCluster { cluster_id: usize },
    #[error("painting {painting_id:?}: {source}")]
    BadRecord {
        painting_id: String,
        source: CorpusError,
    },
    #[error("attributions line {line}: {message}")]
    MalformedAttribution { line: usize, message: String },
}

/// What a cluster is attributed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Artist,
    Style,
    Year,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Artist, Task::Style, Task::Year];

    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Artist => "artist",
            Task::Style => "style",
            Task::Year => "year",
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "artist" => Ok(Task::Artist),
            "style" => Ok(Task::Style),
            "year" => Ok(Task::Year),
            other => Err(format!("unknown task {other:?} (artist, style, year)")),
        }
    }
}

/// The label a record contributes to a task, if it has one. Artist and style
/// are always present; the year task labels only dated paintings, with the
/// 50-year bin label.
pub fn task_label(record: &PaintingRecord, task: Task) -> Result<Option<String>, AttributeError> {
    match task {
        Task::Artist => Ok(Some(record.artist.clone())),
        Task::Style => Ok(Some(record.style.clone())),
        Task::Year => match record.year {
            None => Ok(None),
            Some(y) => match year_bin(y) {
                Ok(bin) => Ok(Some(bin.label())),
                Err(source) => Err(AttributeError::BadRecord {
                    painting_id: record.painting_id.clone(),
                    source,
                }),
            },
        },
    }
}

/// Attribution counting options.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttributionOptions {
    /// Majority share a winning label must exceed.
    pub threshold: f64,
    /// Count each painting once per cluster instead of once per face.
    pub dedupe_paintings: bool,
}

impl Default for AttributionOptions {
    fn default() -> Self {
        AttributionOptions {
            threshold: DEFAULT_THRESHOLD,
            dedupe_paintings: false,
        }
    }
}

impl AttributionOptions {
    fn validate(&self) -> Result<(), AttributeError> {
        if !self.threshold.is_finite() || !(0.0..1.0).contains(&self.threshold) {
            return Err(AttributeError::BadThreshold(self.threshold));
        }
        Ok(())
    }
}

/// A cluster's winning label.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAttribution {
    pub cluster_id: usize,
    pub task: Task,
    pub label: String,
    /// Winning share of the labeled members, in (threshold, 1].
    pub majority_fraction: f64,
    /// Members that carried a label for this task.
    pub labeled_count: usize,
}

/// Label histogram of a cluster for one task. Faces without a label for the
/// task (undated paintings under the year task) are left out. With
/// `dedupe_paintings`, distinct paintings are counted instead of faces.
pub fn label_distribution(
    members: &BTreeSet<String>,
    task: Task,
    corpus: &Corpus,
    dedupe_paintings: bool,
) -> Result<BTreeMap<String, usize>, AttributeError> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut seen_paintings: BTreeSet<&str> = BTreeSet::new();
    for face_id in members {
        let record = corpus
            .resolve_face(face_id)
            .ok_or_else(|| AttributeError::UnknownFace {
                face_id: face_id.clone(),
            })?;
        if dedupe_paintings && !seen_paintings.insert(&record.painting_id) {
            continue;
        }
        if let Some(label) = task_label(record, task)? {
            *counts.entry(label).or_insert(0) += 1;
        }
    }
    Ok(counts)
}

/// Attributes one cluster, or returns `None` when no strict majority exists.
///
/// The winning label's count must strictly exceed `threshold` times the
/// labeled-member count and strictly exceed every other label's count. At the
/// default threshold the second condition is implied; it matters for lower
/// thresholds, where a tie must not attribute. A cluster with no labeled
/// members is never attributed.
pub fn attribute_cluster(
    cluster_id: usize,
    members: &BTreeSet<String>,
    task: Task,
    corpus: &Corpus,
    options: AttributionOptions,
) -> Result<Option<ClusterAttribution>, AttributeError> {
    options.validate()?;
    let counts = label_distribution(members, task, corpus, options.dedupe_paintings)?;
    let labeled: usize = counts.values().sum();
    if labeled == 0 {
        return Ok(None);
    }
    let best = counts.values().copied().max().expect("non-empty counts");
    let mut winners = counts.iter().filter(|(_, &c)| c == best);
    let (label, &count) = winners.next().expect("max exists");
    if winners.next().is_some() {
        return Ok(None);
    }
    let fraction = count as f64 / labeled as f64;
    if fraction <= options.threshold {
        return Ok(None);
    }
    Ok(Some(ClusterAttribution {
        cluster_id,
        task,
        label: label.clone(),
        majority_fraction: fraction,
        labeled_count: labeled,
    }))
}

/// Attributes every cluster in ascending id order, keeping the winners.
pub fn attribute_clustering(
    assignments: &ClusterAssignments,
    task: Task,
    corpus: &Corpus,
    options: AttributionOptions,
) -> Result<Vec<ClusterAttribution>, AttributeError> {
    let mut out = Vec::new();
    for (&cluster_id, members) in &assignments.clusters {
        if let Some(attr) = attribute_cluster(cluster_id, members, task, corpus, options)? {
            out.push(attr);
        }
    }
    Ok(out)
}

/// Unions the member sets of clusters that share a label. Downstream
/// accuracy treats same-label clusters as one attributed group.
pub fn merge_by_label(
    attributions: &[ClusterAttribution],
    assignments: &ClusterAssignments,
) -> Result<BTreeMap<String, BTreeSet<String>>, AttributeError> {
    if let Some(first) = attributions.first() {
        for a in attributions {
            if a.task != first.task {
                return Err(AttributeError::MixedTasks {
                    a: first.task,
                    b: a.task,
                });
            }
        }
    }
    merge_label_map(&label_map(attributions), assignments)
}

/// [`merge_by_label`] on a bare cluster-id-to-label view.
pub fn merge_label_map(
    labels: &BTreeMap<usize, String>,
    assignments: &ClusterAssignments,
) -> Result<BTreeMap<String, BTreeSet<String>>, AttributeError> {
    let mut merged: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (&cluster_id, label) in labels {
        let members = assignments
            .clusters
            .get(&cluster_id)
            .ok_or(AttributeError::UnknownCluster { cluster_id })?;
        merged
            .entry(label.clone())
            .or_default()
            .extend(members.iter().cloned());
    }
    Ok(merged)
}

/// Attribution file line: `{cluster_id, task, label, fraction, size}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionRecord {
    pub cluster_id: usize,
    pub task: Task,
    pub label: String,
    /// Majority share among labeled members.
    pub fraction: f64,
    /// Total cluster size, labeled or not.
    pub size: usize,
}

/// Renders attribution lines, one per attributed cluster.
pub fn write_attributions(
    attributions: &[ClusterAttribution],
    assignments: &ClusterAssignments,
) -> Result<String, AttributeError> {
    let mut out = String::new();
    for a in attributions {
        let members =
            assignments
                .clusters
                .get(&a.cluster_id)
                .ok_or(AttributeError::UnknownCluster {
                    cluster_id: a.cluster_id,
                })?;
        let record = AttributionRecord {
            cluster_id: a.cluster_id,
            task: a.task,
            label: a.label.clone(),
            fraction: a.majority_fraction,
            size: members.len(),
        };
        out.push_str(&serde_json::to_string(&record).expect("attribution serializes"));
        out.push('\n');
    }
    Ok(out)
}

/// Parses an attributions file.
pub fn read_attributions(text: &str) -> Result<Vec<AttributionRecord>, AttributeError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let record: AttributionRecord =
            serde_json::from_str(raw).map_err(|e| AttributeError::MalformedAttribution {
                line: idx + 1,
                message: e.to_string(),
            })?;
        out.push(record);
    }
    Ok(out)
}

/// Cluster id to label view shared by the report builder.
pub fn label_map(attributions: &[ClusterAttribution]) -> BTreeMap<usize, String> {
    attributions
        .iter()
        .map(|a| (a.cluster_id, a.label.clone()))
        .collect()
}

/// Same view built from parsed attribution records.
pub fn record_label_map(records: &[AttributionRecord]) -> BTreeMap<usize, String> {
    records
        .iter()
        .map(|r| (r.cluster_id, r.label.clone()))
        .collect()
}
