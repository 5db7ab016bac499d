//! Scoring for clusterings and their attributions.
//!
//! Two families live here. Per-cluster scores treat one attributed cluster as
//! a binary retrieval problem over a universe of faces: counts of true and
//! false positives and negatives, then accuracy, precision, recall, and F.
//! Partition scores compare the whole clustering against the ground-truth
//! labeling: purity, normalized mutual information, and the Rand index.
//!
//! # Ratio conventions
//!
//! Published face-attribution tables swap the textbook roles of precision and
//! recall: what they print as precision is tp / (tp + fn) and what they print
//! as recall is tp / (tp + fp). [`Convention::Paper`] reproduces those tables;
//! [`Convention::Standard`] uses the textbook definitions. The F measure is
//! the harmonic mean of the two ratios either way, so it is identical under
//! both conventions, as is accuracy. Reports carry a note naming the
//! convention in force so nobody mistakes one set of numbers for the other.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attribute::{merge_label_map, task_label, AttributeError, Task};
use crate::corpus::Corpus;
use crate::dbscan::{ClusterAssignments, ClusterParams};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("nothing to score: {0}")]
    EmptyInput(String),
    #[error("need at least 2 items for pair counting, got {0}")]
    TooFewItems(usize),
    #[error("cluster member {face_id:?} is not in the universe")]
    OutsideUniverse { face_id: String },
    #[error("cluster at index {0} is empty")]
    EmptyCluster(usize),
    #[error("id {id} appears in more than one cluster")]
    DuplicateId { id: String },
    #[error("clustered id {id} has no ground-truth label")]
    UnlabeledId { id: String },
    #[error(transparent)]
    Attribute(#[from] AttributeError),
}

/// Binary confusion counts for one cluster against one label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    /// Cluster members carrying the label.
    pub true_pos: u64,
    /// Cluster members not carrying it.
    pub false_pos: u64,
    /// Non-members not carrying it.
    pub true_neg: u64,
    /// Label carriers the cluster missed.
    pub false_neg: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }
}

/// Which way precision and recall point. See the module docs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    /// Ratios as printed in published attribution tables: precision
    /// tp / (tp + fn), recall tp / (tp + fp).
    #[default]
    Paper,
    /// Textbook ratios: precision tp / (tp + fp), recall tp / (tp + fn).
    Standard,
}

impl Convention {
    pub fn as_str(&self) -> &'static str {
        match self {
            Convention::Paper => "paper",
            Convention::Standard => "standard",
        }
    }

    /// One-line description of the ratio directions, embedded in reports.
    pub fn note(&self) -> &'static str {
        match self {
            Convention::Paper => {
                "precision = tp/(tp+fn) and recall = tp/(tp+fp), mirroring published \
                 attribution tables, which swap the textbook roles of the two names"
            }
            Convention::Standard => {
                "precision = tp/(tp+fp) and recall = tp/(tp+fn), the textbook definitions"
            }
        }
    }
}

impl std::fmt::Display for Convention {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Convention {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper" => Ok(Convention::Paper),
            "standard" => Ok(Convention::Standard),
            other => Err(format!("unknown convention {other:?} (paper, standard)")),
        }
    }
}

/// Per-cluster ratios under a fixed convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub convention: Convention,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f_measure(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Derives the four ratios from confusion counts. Zero denominators yield
/// 0, never NaN.
pub fn cluster_metrics(
    counts: &ConfusionCounts,
    convention: Convention,
) -> Result<ClusterMetrics, MetricsError> {
    let total = counts.total();
    if total == 0 {
        return Err(MetricsError::EmptyInput("confusion counts sum to zero".into()));
    }
    let tp = counts.true_pos;
    let (precision, recall) = match convention {
        Convention::Paper => (
            ratio(tp, tp + counts.false_neg),
            ratio(tp, tp + counts.false_pos),
        ),
        Convention::Standard => (
            ratio(tp, tp + counts.false_pos),
            ratio(tp, tp + counts.false_neg),
        ),
    };
    Ok(ClusterMetrics {
        accuracy: ratio(counts.true_pos + counts.true_neg, total),
        precision,
        recall,
        f_measure: f_measure(precision, recall),
        convention,
    })
}

/// Confusion counts for one cluster against the faces carrying `label`.
///
/// The universe fixes the denominator population: every universe face is
/// counted exactly once. Under the year task an undated painting carries no
/// bin label, so its faces can only land in the false-positive or
/// true-negative cells. The cluster must be a subset of the universe.
pub fn confusion_counts(
    cluster: &BTreeSet<String>,
    label: &str,
    task: Task,
    universe: &BTreeSet<String>,
    corpus: &Corpus,
) -> Result<ConfusionCounts, MetricsError> {
    if universe.is_empty() {
        return Err(MetricsError::EmptyInput("empty universe".into()));
    }
    if let Some(outside) = cluster.iter().find(|id| !universe.contains(*id)) {
        return Err(MetricsError::OutsideUniverse {
            face_id: outside.clone(),
        });
    }
    let mut counts = ConfusionCounts {
        true_pos: 0,
        false_pos: 0,
        true_neg: 0,
        false_neg: 0,
    };
    for face_id in universe {
        let record = corpus
            .resolve_face(face_id)
            .ok_or_else(|| AttributeError::UnknownFace {
                face_id: face_id.clone(),
            })?;
        let carries = task_label(record, task)?.as_deref() == Some(label);
        match (cluster.contains(face_id), carries) {
            (true, true) => counts.true_pos += 1,
            (true, false) => counts.false_pos += 1,
            (false, true) => counts.false_neg += 1,
            (false, false) => counts.true_neg += 1,
        }
    }
    Ok(counts)
}

/// Joint cluster/class counts shared by the partition metrics. Classes are
/// indexed in sorted label order; ids in `labels` but absent from every
/// cluster are ignored, so the scored population is exactly the clustered one.
struct Contingency {
    n: u64,
    cluster_sizes: Vec<u64>,
    class_sizes: Vec<u64>,
    /// Per cluster: (class index, joint count), ascending by class.
    cells: Vec<Vec<(usize, u64)>>,
}

fn contingency<T, L>(
    clusters: &[BTreeSet<T>],
    labels: &BTreeMap<T, L>,
) -> Result<Contingency, MetricsError>
where
    T: Ord + std::fmt::Debug,
    L: Ord,
{
    if clusters.is_empty() {
        return Err(MetricsError::EmptyInput("no clusters".into()));
    }
    let class_index: BTreeMap<&L, usize> = labels
        .values()
        .collect::<BTreeSet<&L>>()
        .into_iter()
        .enumerate()
        .map(|(i, l)| (l, i))
        .collect();
    let mut seen: BTreeSet<&T> = BTreeSet::new();
    let mut class_sizes = vec![0u64; class_index.len()];
    let mut cluster_sizes = Vec::with_capacity(clusters.len());
    let mut cells = Vec::with_capacity(clusters.len());
    let mut n = 0u64;
    for (idx, cluster) in clusters.iter().enumerate() {
        if cluster.is_empty() {
            return Err(MetricsError::EmptyCluster(idx));
        }
        let mut row: BTreeMap<usize, u64> = BTreeMap::new();
        for id in cluster {
            if !seen.insert(id) {
                return Err(MetricsError::DuplicateId {
                    id: format!("{id:?}"),
                });
            }
            let label = labels.get(id).ok_or_else(|| MetricsError::UnlabeledId {
                id: format!("{id:?}"),
            })?;
            let class = class_index[label];
            *row.entry(class).or_insert(0) += 1;
            class_sizes[class] += 1;
            n += 1;
        }
        cluster_sizes.push(cluster.len() as u64);
        cells.push(row.into_iter().collect());
    }
    Ok(Contingency {
        n,
        cluster_sizes,
        class_sizes,
        cells,
    })
}

/// Fraction of items whose cluster's plurality class is their own class.
/// 1 exactly when every cluster is pure, however many clusters there are.
pub fn purity<T, L>(clusters: &[BTreeSet<T>], labels: &BTreeMap<T, L>) -> Result<f64, MetricsError>
where
    T: Ord + std::fmt::Debug,
    L: Ord,
{
    let c = contingency(clusters, labels)?;
    let agreeing: u64 = c
        .cells
        .iter()
        .map(|row| row.iter().map(|&(_, count)| count).max().unwrap_or(0))
        .sum();
    Ok(agreeing as f64 / c.n as f64)
}

/// Normalized mutual information with natural logarithms and the arithmetic
/// mean of the two entropies as normalizer.
///
/// Identical partitions score exactly 1 and a single cluster spanning two or
/// more classes scores exactly 0; both fall out of computing the mutual
/// information from the same log terms as the entropies, so the boundary
/// cases hold bit for bit rather than up to rounding.
pub fn nmi<T, L>(clusters: &[BTreeSet<T>], labels: &BTreeMap<T, L>) -> Result<f64, MetricsError>
where
    T: Ord + std::fmt::Debug,
    L: Ord,
{
    let c = contingency(clusters, labels)?;
    if c.cluster_sizes.len() == 1 && c.class_sizes.len() == 1 {
        return Ok(1.0);
    }
    let n = c.n as f64;
    let cluster_log_p: Vec<f64> = c
        .cluster_sizes
        .iter()
        .map(|&s| (s as f64 / n).ln())
        .collect();
    let class_log_p: Vec<f64> = c
        .class_sizes
        .iter()
        .map(|&s| (s as f64 / n).ln())
        .collect();
    let mut information = 0.0;
    for (k, row) in c.cells.iter().enumerate() {
        for &(j, count) in row {
            let p = count as f64 / n;
            information += p * (p.ln() - cluster_log_p[k] - class_log_p[j]);
        }
    }
    let h_clusters: f64 = -c
        .cluster_sizes
        .iter()
        .zip(&cluster_log_p)
        .map(|(&s, &lp)| (s as f64 / n) * lp)
        .sum::<f64>();
    let h_classes: f64 = -c
        .class_sizes
        .iter()
        .zip(&class_log_p)
        .map(|(&s, &lp)| (s as f64 / n) * lp)
        .sum::<f64>();
    Ok(information / ((h_clusters + h_classes) / 2.0))
}

/// Pair-level confusion: over all unordered item pairs, whether the two
/// items share a cluster and whether they share a class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    /// Same cluster, same class.
    pub true_pos: u64,
    /// Same cluster, different class.
    pub false_pos: u64,
    /// Different cluster, different class.
    pub true_neg: u64,
    /// Different cluster, same class.
    pub false_neg: u64,
}

impl PairCounts {
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }
}

fn choose2(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

/// Raw pair counts behind the Rand index.
pub fn pair_counts<T, L>(
    clusters: &[BTreeSet<T>],
    labels: &BTreeMap<T, L>,
) -> Result<PairCounts, MetricsError>
where
    T: Ord + std::fmt::Debug,
    L: Ord,
{
    let c = contingency(clusters, labels)?;
    if c.n < 2 {
        return Err(MetricsError::TooFewItems(c.n as usize));
    }
    let total = choose2(c.n);
    let same_cluster: u64 = c.cluster_sizes.iter().map(|&s| choose2(s)).sum();
    let same_class: u64 = c.class_sizes.iter().map(|&s| choose2(s)).sum();
    let true_pos: u64 = c
        .cells
        .iter()
        .flat_map(|row| row.iter().map(|&(_, count)| choose2(count)))
        .sum();
    let false_pos = same_cluster - true_pos;
    let false_neg = same_class - true_pos;
    Ok(PairCounts {
        true_pos,
        false_pos,
        true_neg: total - true_pos - false_pos - false_neg,
        false_neg,
    })
}

/// Fraction of unordered pairs on which clustering and labeling agree.
pub fn rand_index<T, L>(
    clusters: &[BTreeSet<T>],
    labels: &BTreeMap<T, L>,
) -> Result<f64, MetricsError>
where
    T: Ord + std::fmt::Debug,
    L: Ord,
{
    let pairs = pair_counts(clusters, labels)?;
    Ok((pairs.true_pos + pairs.true_neg) as f64 / pairs.total() as f64)
}

/// Which faces form the denominator population for per-cluster confusion
/// counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UniverseScope {
    /// Every face the clustering run saw, noise included.
    #[default]
    AllFaces,
    /// Only faces that landed in some cluster.
    ClusteredOnly,
}

impl std::str::FromStr for UniverseScope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all-faces" => Ok(UniverseScope::AllFaces),
            "clustered-only" => Ok(UniverseScope::ClusteredOnly),
            other => Err(format!(
                "unknown universe {other:?} (all-faces, clustered-only)"
            )),
        }
    }
}

/// Report construction knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportOptions {
    pub convention: Convention,
    pub universe: UniverseScope,
    /// Score labeled noise faces as singleton clusters in the partition
    /// metrics instead of leaving them out.
    pub include_noise_as_singletons: bool,
    /// Attribution threshold in force, echoed into the report.
    pub attribution_threshold: Option<f64>,
    /// Clustering parameters in force, echoed into the report.
    pub cluster_params: Option<ClusterParams>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            convention: Convention::Paper,
            universe: UniverseScope::AllFaces,
            include_noise_as_singletons: false,
            attribution_threshold: None,
            cluster_params: None,
        }
    }
}

/// One attributed cluster's scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub cluster_id: usize,
    pub label: String,
    /// Cluster size, labeled or not.
    pub size: usize,
    pub counts: ConfusionCounts,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

/// Column means over the report rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricAverages {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

/// Whole-partition scores against the ground-truth labeling, over labeled
/// clustered faces (plus labeled noise as singletons when requested).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionScores {
    /// Faces that entered the comparison.
    pub scored_faces: usize,
    /// Cluster sets compared, after restriction to labeled faces.
    pub scored_sets: usize,
    pub include_noise_as_singletons: bool,
    pub purity: f64,
    pub nmi: f64,
    pub rand_index: f64,
    pub pair_counts: PairCounts,
}

/// Full evaluation of one task: per-cluster rows, their averages, merged
/// accuracy over same-label clusters, and partition scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task: Task,
    pub convention: Convention,
    /// Names the ratio directions in force; see [`Convention::note`].
    pub convention_note: String,
    pub attribution_threshold: Option<f64>,
    pub universe: UniverseScope,
    pub universe_size: usize,
    pub cluster_params: Option<ClusterParams>,
    pub n_clusters_total: usize,
    pub n_clusters_attributed: usize,
    pub rows: Vec<ReportRow>,
    pub averages: Option<MetricAverages>,
    /// Mean accuracy over merged same-label groups.
    pub merged_accuracy: Option<f64>,
    pub partition: PartitionScores,
}

/// Scores a clustering for one task given its attributed labels
/// (cluster id to label).
pub fn build_task_report(
    assignments: &ClusterAssignments,
    labels: &BTreeMap<usize, String>,
    corpus: &Corpus,
    task: Task,
    options: &ReportOptions,
) -> Result<TaskReport, MetricsError> {
    let universe = match options.universe {
        UniverseScope::AllFaces => assignments.all_faces(),
        UniverseScope::ClusteredOnly => assignments.clustered_faces(),
    };

    let mut rows = Vec::with_capacity(labels.len());
    for (&cluster_id, label) in labels {
        let members = assignments
            .clusters
            .get(&cluster_id)
            .ok_or(AttributeError::UnknownCluster { cluster_id })?;
        let counts = confusion_counts(members, label, task, &universe, corpus)?;
        let m = cluster_metrics(&counts, options.convention)?;
        rows.push(ReportRow {
            cluster_id,
            label: label.clone(),
            size: members.len(),
            counts,
            accuracy: m.accuracy,
            precision: m.precision,
            recall: m.recall,
            f_measure: m.f_measure,
        });
    }

    let averages = if rows.is_empty() {
        None
    } else {
        let n = rows.len() as f64;
        Some(MetricAverages {
            accuracy: rows.iter().map(|r| r.accuracy).sum::<f64>() / n,
            precision: rows.iter().map(|r| r.precision).sum::<f64>() / n,
            recall: rows.iter().map(|r| r.recall).sum::<f64>() / n,
            f_measure: rows.iter().map(|r| r.f_measure).sum::<f64>() / n,
        })
    };

    let merged = merge_label_map(labels, assignments)?;
    let merged_accuracy = if merged.is_empty() {
        None
    } else {
        let mut sum = 0.0;
        for (label, members) in &merged {
            let counts = confusion_counts(members, label, task, &universe, corpus)?;
            sum += cluster_metrics(&counts, options.convention)?.accuracy;
        }
        Some(sum / merged.len() as f64)
    };

    let partition = partition_scores(assignments, corpus, task, options)?;

    Ok(TaskReport {
        task,
        convention: options.convention,
        convention_note: options.convention.note().to_string(),
        attribution_threshold: options.attribution_threshold,
        universe: options.universe,
        universe_size: universe.len(),
        cluster_params: options.cluster_params,
        n_clusters_total: assignments.clusters.len(),
        n_clusters_attributed: rows.len(),
        rows,
        averages,
        merged_accuracy,
        partition,
    })
}

/// Partition scores over the labeled clustered faces. Faces without a task
/// label drop out; clusters emptied by that restriction drop with them.
fn partition_scores(
    assignments: &ClusterAssignments,
    corpus: &Corpus,
    task: Task,
    options: &ReportOptions,
) -> Result<PartitionScores, MetricsError> {
    let mut sets: Vec<BTreeSet<&str>> = Vec::new();
    let mut truth: BTreeMap<&str, String> = BTreeMap::new();
    for members in assignments.clusters.values() {
        let mut labeled = BTreeSet::new();
        for face_id in members {
            let record =
                corpus
                    .resolve_face(face_id)
                    .ok_or_else(|| AttributeError::UnknownFace {
                        face_id: face_id.clone(),
                    })?;
            if let Some(label) = task_label(record, task)? {
                labeled.insert(face_id.as_str());
                truth.insert(face_id.as_str(), label);
            }
        }
        if !labeled.is_empty() {
            sets.push(labeled);
        }
    }
    if options.include_noise_as_singletons {
        for face_id in &assignments.noise {
            let record =
                corpus
                    .resolve_face(face_id)
                    .ok_or_else(|| AttributeError::UnknownFace {
                        face_id: face_id.clone(),
                    })?;
            if let Some(label) = task_label(record, task)? {
                truth.insert(face_id.as_str(), label);
                sets.push(BTreeSet::from([face_id.as_str()]));
            }
        }
    }
    let scored_faces = sets.iter().map(|s| s.len()).sum();
    if sets.is_empty() {
        return Err(MetricsError::EmptyInput(format!(
            "no labeled faces for task {task} among scored clusters"
        )));
    }
    let pairs = pair_counts(&sets, &truth)?;
    Ok(PartitionScores {
        scored_faces,
        scored_sets: sets.len(),
        include_noise_as_singletons: options.include_noise_as_singletons,
        purity: purity(&sets, &truth)?,
        nmi: nmi(&sets, &truth)?,
        rand_index: (pairs.true_pos + pairs.true_neg) as f64 / pairs.total() as f64,
        pair_counts: pairs,
    })
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Renders the two-block CSV view of a report: per-cluster rows with their
/// column means, then a summary line mirroring the merged-accuracy table.
/// Floats are fixed to six decimals so reruns are byte-identical.
pub fn render_csv(report: &TaskReport) -> String {
    let mut out = String::new();
    out.push_str("label,accuracy,precision,recall,f_measure\n");
    for row in &report.rows {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6}\n",
            csv_field(&row.label),
            row.accuracy,
            row.precision,
            row.recall,
            row.f_measure
        ));
    }
    if let Some(avg) = &report.averages {
        out.push_str(&format!(
            "average,{:.6},{:.6},{:.6},{:.6}\n",
            avg.accuracy, avg.precision, avg.recall, avg.f_measure
        ));
    }
    out.push('\n');
    out.push_str("n_clusters,accuracy,purity,nmi,rand_index\n");
    let merged = report
        .merged_accuracy
        .map(|a| format!("{a:.6}"))
        .unwrap_or_default();
    out.push_str(&format!(
        "{},{},{:.6},{:.6},{:.6}\n",
        report.n_clusters_total,
        merged,
        report.partition.purity,
        report.partition.nmi,
        report.partition.rand_index
    ));
    out
}
