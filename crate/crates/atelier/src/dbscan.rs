//! Density clustering of face embeddings.
//!
//! DBSCAN in its classic form: a point with at least `min_pts` neighbors
//! within `eps` (itself included, boundary included) is a core point;
//! clusters are the maximal sets of core points reachable through
//! overlapping neighborhoods, plus the non-core "border" points those
//! neighborhoods touch. Everything else is noise, and noise is a first-class
//! outcome here: faces the embedder could not place near anything else stay
//! unassigned rather than polluting a cluster.
//!
//! Two choices are pinned down so runs are reproducible:
//!
//! * Seeds are tried in input order and expansion is breadth-first over
//!   sorted neighbor lists, so a border point reachable from two clusters
//!   goes to the cluster that reaches it first. Identical input order means
//!   identical output, bit for bit.
//! * After expansion, clusters smaller than `min_cluster_size` are dissolved
//!   into noise. Tiny islands of near-duplicate faces are rarely a usable
//!   identity group.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{euclidean, EmbeddingVector};
use crate::index::{IndexError, NeighborIndex};

/// Default neighborhood radius, sized for unit-norm 128-d embeddings where
/// squared distance is `2 - 2 cos`. No single radius suits every embedder;
/// pick one from [`kdistance_profile`] when in doubt.
pub const DEFAULT_EPS: f64 = 0.9;
/// Default minimum neighborhood size for a core point.
pub const DEFAULT_MIN_PTS: usize = 25;
/// Below this many points a brute-force neighbor scan beats the tree.
pub const BRUTE_THRESHOLD: usize = 2000;

#[derive(Debug, Error)]
pub enum DbscanError {
    #[error("bad clustering parameters: {0}")]
    BadParams(String),
    #[error("point {0} has a non-finite component")]
    NonFinite(usize),
    #[error("point {index} has {got} components, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("k = {k} needs at least k + 1 points, got {n}")]
    KOutOfRange { k: usize, n: usize },
    #[error("duplicate face id {id:?} in clustering input")]
    DuplicateFaceId { id: String },
    #[error("{ids} face ids for {labels} points")]
    IdCountMismatch { ids: usize, labels: usize },
    #[error("assignments line {line}: {message}")]
    MalformedAssignment { line: usize, message: String },
    #[error(transparent)]
    Index(#[from] IndexError),
}

/// DBSCAN parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    /// Neighborhood radius (closed ball).
    pub eps: f64,
    /// Minimum neighborhood size (self included) for a core point.
    pub min_pts: usize,
    /// Clusters smaller than this dissolve into noise after expansion.
    pub min_cluster_size: usize,
}

impl ClusterParams {
    /// `min_cluster_size` defaults to `min_pts`.
    pub fn new(eps: f64, min_pts: usize) -> Self {
        ClusterParams {
            eps,
            min_pts,
            min_cluster_size: min_pts,
        }
    }

    fn validate(&self) -> Result<(), DbscanError> {
        if !self.eps.is_finite() || self.eps <= 0.0 {
            return Err(DbscanError::BadParams(format!(
                "eps must be finite and positive, got {}",
                self.eps
            )));
        }
        if self.min_pts == 0 {
            return Err(DbscanError::BadParams("min_pts must be at least 1".into()));
        }
        if self.min_cluster_size == 0 {
            return Err(DbscanError::BadParams(
                "min_cluster_size must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams::new(DEFAULT_EPS, DEFAULT_MIN_PTS)
    }
}

/// How region queries are answered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// Brute force below [`BRUTE_THRESHOLD`] points, tree above.
    #[default]
    Auto,
    Brute,
    Tree,
}

impl Backend {
    pub fn as_str(&self) -> &'static str {
        match self {
            Backend::Auto => "auto",
            Backend::Brute => "brute",
            Backend::Tree => "tree",
        }
    }
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto" => Ok(Backend::Auto),
            "brute" => Ok(Backend::Brute),
            "tree" => Ok(Backend::Tree),
            other => Err(format!("unknown index backend {other:?} (auto, brute, tree)")),
        }
    }
}

/// Per-point clustering outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assignment {
    Cluster(usize),
    Noise,
}

impl Assignment {
    pub fn cluster(&self) -> Option<usize> {
        match self {
            Assignment::Cluster(c) => Some(*c),
            Assignment::Noise => None,
        }
    }
}

/// Index-level clustering result: one assignment per input point, cluster
/// ids contiguous from 0 in order of first appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct Labels {
    pub assignments: Vec<Assignment>,
    /// Core flags, in input order. Border and noise points are `false`.
    pub core: Vec<bool>,
    pub n_clusters: usize,
}

/// Clustering result over named faces.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringResult {
    /// Face-id sets, indexed by cluster id.
    pub clusters: Vec<BTreeSet<String>>,
    pub noise: BTreeSet<String>,
    pub params: ClusterParams,
}

/// Cluster membership keyed by cluster id, as read back from an assignments
/// file. The attribution and report stages consume this view.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClusterAssignments {
    pub clusters: BTreeMap<usize, BTreeSet<String>>,
    pub noise: BTreeSet<String>,
}

impl ClusterAssignments {
    /// All face ids the clustering saw (clustered and noise alike).
    pub fn all_faces(&self) -> BTreeSet<String> {
        let mut all = self.noise.clone();
        for members in self.clusters.values() {
            all.extend(members.iter().cloned());
        }
        all
    }

    pub fn clustered_faces(&self) -> BTreeSet<String> {
        let mut all = BTreeSet::new();
        for members in self.clusters.values() {
            all.extend(members.iter().cloned());
        }
        all
    }
}

impl ClusteringResult {
    pub fn from_labels(
        ids: &[String],
        labels: &Labels,
        params: ClusterParams,
    ) -> Result<Self, DbscanError> {
        if ids.len() != labels.assignments.len() {
            return Err(DbscanError::IdCountMismatch {
                ids: ids.len(),
                labels: labels.assignments.len(),
            });
        }
        let mut clusters = vec![BTreeSet::new(); labels.n_clusters];
        let mut noise = BTreeSet::new();
        for (id, a) in ids.iter().zip(&labels.assignments) {
            match a {
                Assignment::Cluster(c) => {
                    clusters[*c].insert(id.clone());
                }
                Assignment::Noise => {
                    noise.insert(id.clone());
                }
            }
        }
        Ok(ClusteringResult {
            clusters,
            noise,
            params,
        })
    }

    pub fn assignments(&self) -> ClusterAssignments {
        ClusterAssignments {
            clusters: self
                .clusters
                .iter()
                .enumerate()
                .map(|(i, m)| (i, m.clone()))
                .collect(),
            noise: self.noise.clone(),
        }
    }
}

fn validate_points<P: AsRef<[f64]>>(points: &[P]) -> Result<(), DbscanError> {
    let dim = points.first().map(|p| p.as_ref().len()).unwrap_or(0);
    for (i, p) in points.iter().enumerate() {
        let p = p.as_ref();
        if p.len() != dim {
            return Err(DbscanError::DimensionMismatch {
                index: i,
                expected: dim,
                got: p.len(),
            });
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(DbscanError::NonFinite(i));
        }
    }
    Ok(())
}

/// Indices of every point within `eps` of point `i`, `i` itself included.
/// The ball is closed: a neighbor at exactly `eps` counts.
pub fn region_query<P: AsRef<[f64]>>(points: &[P], i: usize, eps: f64) -> Vec<usize> {
    let center = points[i].as_ref();
    points
        .iter()
        .enumerate()
        .filter(|(_, p)| euclidean(center, p.as_ref()).expect("equal dims") <= eps)
        .map(|(j, _)| j)
        .collect()
}

/// One sorted neighbor list per point, computed up front so expansion order
/// never depends on the backend or on thread scheduling.
fn neighborhoods<P: AsRef<[f64]> + Sync>(
    points: &[P],
    eps: f64,
    backend: Backend,
) -> Result<Vec<Vec<usize>>, DbscanError> {
    let use_tree = match backend {
        Backend::Brute => false,
        Backend::Tree => true,
        Backend::Auto => points.len() >= BRUTE_THRESHOLD,
    };
    if use_tree {
        let index = NeighborIndex::build(points)?;
        (0..points.len())
            .into_par_iter()
            .map(|i| Ok(index.query_radius(points[i].as_ref(), eps)?))
            .collect()
    } else {
        Ok((0..points.len())
            .into_par_iter()
            .map(|i| region_query(points, i, eps))
            .collect())
    }
}

/// Clusters raw points. See the module docs for the exact semantics.
pub fn cluster_points<P: AsRef<[f64]> + Sync>(
    points: &[P],
    params: ClusterParams,
    backend: Backend,
) -> Result<Labels, DbscanError> {
    params.validate()?;
    validate_points(points)?;
    let n = points.len();
    let neighbors = neighborhoods(points, params.eps, backend)?;
    let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= params.min_pts).collect();

    let mut assignment: Vec<Option<usize>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut next_cluster = 0usize;
    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        visited[seed] = true;
        if !core[seed] {
            continue;
        }
        let cid = next_cluster;
        next_cluster += 1;
        assignment[seed] = Some(cid);
        let mut queue: VecDeque<usize> = neighbors[seed].iter().copied().collect();
        while let Some(j) = queue.pop_front() {
            if assignment[j].is_none() {
                // First cluster to reach a border point keeps it.
                assignment[j] = Some(cid);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            if core[j] {
                queue.extend(neighbors[j].iter().copied());
            }
        }
    }

    // Dissolve undersized clusters into noise, then renumber the survivors
    // in order of first appearance.
    let mut sizes = vec![0usize; next_cluster];
    for a in assignment.iter().flatten() {
        sizes[*a] += 1;
    }
    let mut remap: Vec<Option<usize>> = vec![None; next_cluster];
    let mut kept = 0usize;
    for (cid, &size) in sizes.iter().enumerate() {
        if size >= params.min_cluster_size {
            remap[cid] = Some(kept);
            kept += 1;
        }
    }
    let assignments: Vec<Assignment> = assignment
        .iter()
        .map(|a| match a.and_then(|c| remap[c]) {
            Some(c) => Assignment::Cluster(c),
            None => Assignment::Noise,
        })
        .collect();
    Ok(Labels {
        assignments,
        core,
        n_clusters: kept,
    })
}

/// Clusters embeddings by face id. Ids must be unique; vectors are used as
/// given (load paths re-normalize, see [`crate::embed::renormalized`]).
pub fn cluster_embeddings(
    vectors: &[EmbeddingVector],
    params: ClusterParams,
    backend: Backend,
) -> Result<ClusteringResult, DbscanError> {
    cluster_embeddings_full(vectors, params, backend).map(|(_, result)| result)
}

/// [`cluster_embeddings`], also returning the per-point labels in input
/// order. The assignments file format needs that order.
pub fn cluster_embeddings_full(
    vectors: &[EmbeddingVector],
    params: ClusterParams,
    backend: Backend,
) -> Result<(Labels, ClusteringResult), DbscanError> {
    let mut seen = BTreeSet::new();
    for v in vectors {
        if !seen.insert(v.face_id.as_str()) {
            return Err(DbscanError::DuplicateFaceId {
                id: v.face_id.clone(),
            });
        }
    }
    let points: Vec<&[f64]> = vectors.iter().map(|v| v.values.as_slice()).collect();
    let labels = cluster_points(&points, params, backend)?;
    let ids: Vec<String> = vectors.iter().map(|v| v.face_id.clone()).collect();
    let result = ClusteringResult::from_labels(&ids, &labels, params)?;
    Ok((labels, result))
}

/// Sorted (ascending) distances from each point to its k-th nearest other
/// point. The standard way to choose `eps`: plot the profile and take the
/// value at the elbow, where within-cluster neighborhoods end and sparse
/// space begins.
pub fn kdistance_profile<P: AsRef<[f64]>>(points: &[P], k: usize) -> Result<Vec<f64>, DbscanError> {
    validate_points(points)?;
    let n = points.len();
    if k == 0 || k >= n {
        return Err(DbscanError::KOutOfRange { k, n });
    }
    let mut profile: Vec<f64> = (0..n)
        .map(|i| {
            let mut dists: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| euclidean(points[i].as_ref(), points[j].as_ref()).expect("equal dims"))
                .collect();
            let (_, kth, _) = dists.select_nth_unstable_by(k - 1, |a, b| {
                a.partial_cmp(b).expect("finite distances")
            });
            *kth
        })
        .collect();
    profile.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    Ok(profile)
}

/// Value at the elbow of an ascending k-distance profile: the sample with
/// the largest perpendicular distance to the chord between the first and
/// last samples. For a profile with no bend (collinear, including constant)
/// the median value is returned. `None` on an empty profile.
pub fn elbow_eps(profile: &[f64]) -> Option<f64> {
    let n = profile.len();
    if n == 0 {
        return None;
    }
    if n <= 2 {
        return Some(profile[n / 2]);
    }
    let rise = profile[n - 1] - profile[0];
    let run = (n - 1) as f64;
    let mut best_idx = None;
    let mut best = 0.0;
    for (i, &y) in profile.iter().enumerate() {
        let dev = (rise * i as f64 - run * (y - profile[0])).abs();
        if dev > best {
            best = dev;
            best_idx = Some(i);
        }
    }
    match best_idx {
        Some(i) => Some(profile[i]),
        None => Some(profile[n / 2]),
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum ClusterIdValue {
    Id(usize),
    Tag(String),
}

#[derive(Debug, Serialize, Deserialize)]
struct AssignmentLine {
    face_id: String,
    cluster_id: ClusterIdValue,
}

/// Renders per-face assignment lines in input order: a cluster id for
/// clustered faces, the string `"noise"` otherwise.
pub fn write_assignments(ids: &[String], labels: &Labels) -> Result<String, DbscanError> {
    if ids.len() != labels.assignments.len() {
        return Err(DbscanError::IdCountMismatch {
            ids: ids.len(),
            labels: labels.assignments.len(),
        });
    }
    let mut out = String::new();
    for (id, a) in ids.iter().zip(&labels.assignments) {
        let line = AssignmentLine {
            face_id: id.clone(),
            cluster_id: match a {
                Assignment::Cluster(c) => ClusterIdValue::Id(*c),
                Assignment::Noise => ClusterIdValue::Tag("noise".into()),
            },
        };
        out.push_str(&serde_json::to_string(&line).expect("assignment serializes"));
        out.push('\n');
    }
    Ok(out)
}

/// Parses an assignments file back into cluster membership sets.
pub fn read_assignments(text: &str) -> Result<ClusterAssignments, DbscanError> {
    let mut result = ClusterAssignments::default();
    let mut seen = BTreeSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let parsed: AssignmentLine =
            serde_json::from_str(raw).map_err(|e| DbscanError::MalformedAssignment {
                line,
                message: e.to_string(),
            })?;
        if !seen.insert(parsed.face_id.clone()) {
            return Err(DbscanError::MalformedAssignment {
                line,
                message: format!("face id {:?} appears twice", parsed.face_id),
            });
        }
        match parsed.cluster_id {
            ClusterIdValue::Id(c) => {
                result.clusters.entry(c).or_default().insert(parsed.face_id);
            }
            ClusterIdValue::Tag(tag) if tag == "noise" => {
                result.noise.insert(parsed.face_id);
            }
            ClusterIdValue::Tag(tag) => {
                return Err(DbscanError::MalformedAssignment {
                    line,
                    message: format!("cluster_id must be an integer or \"noise\", got {tag:?}"),
                });
            }
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(eps: f64, min_pts: usize, mcs: usize) -> ClusterParams {
        ClusterParams {
            eps,
            min_pts,
            min_cluster_size: mcs,
        }
    }

    fn points_1d(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn region_query_includes_self_and_boundary() {
        let pts = points_1d(&[0.0, 1.0, 3.0]);
        assert_eq!(region_query(&pts, 0, 1.0), vec![0, 1]);
        assert_eq!(region_query(&pts, 1, 2.0), vec![0, 1, 2]);
        // Two points at distance 2 with eps 1: each sees only itself.
        let far = points_1d(&[0.0, 2.0]);
        assert_eq!(region_query(&far, 0, 1.0), vec![0]);
        assert_eq!(region_query(&far, 1, 1.0), vec![1]);
    }

    #[test]
    fn region_query_identical_points_see_everything() {
        let pts = points_1d(&[5.0; 7]);
        for i in 0..7 {
            assert_eq!(region_query(&pts, i, 1e-12).len(), 7);
        }
    }

    #[test]
    fn empty_input_yields_empty_result() {
        let labels = cluster_points::<Vec<f64>>(&[], ClusterParams::default(), Backend::Auto).unwrap();
        assert_eq!(labels.n_clusters, 0);
        assert!(labels.assignments.is_empty());
    }

    #[test]
    fn copies_of_one_point_form_a_single_cluster() {
        let n = 25;
        let pts = points_1d(&vec![1.5; n]);
        let labels = cluster_points(&pts, params(0.5, n, n), Backend::Auto).unwrap();
        assert_eq!(labels.n_clusters, 1);
        assert!(labels
            .assignments
            .iter()
            .all(|a| *a == Assignment::Cluster(0)));
        assert!(labels.core.iter().all(|&c| c));
    }

    #[test]
    fn undersized_clusters_dissolve_into_noise() {
        // 30 points near 0, 10 points near 100. min_cluster_size 20 keeps
        // only the first group.
        let mut xs: Vec<f64> = (0..30).map(|i| i as f64 * 0.01).collect();
        xs.extend((0..10).map(|i| 100.0 + i as f64 * 0.01));
        let pts = points_1d(&xs);
        let labels = cluster_points(&pts, params(0.5, 5, 20), Backend::Auto).unwrap();
        assert_eq!(labels.n_clusters, 1);
        let noise: Vec<usize> = labels
            .assignments
            .iter()
            .enumerate()
            .filter(|(_, a)| **a == Assignment::Noise)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(noise, (30..40).collect::<Vec<_>>());
    }

    #[test]
    fn contested_border_point_goes_to_first_cluster() {
        // Two dense runs with a lone point exactly eps from the nearest core
        // of each. It has only three neighbors (two cores plus itself), so it
        // stays border and cannot bridge the runs.
        let mut xs: Vec<f64> = vec![0.0, 0.1, 0.2, 0.3, 0.4];
        xs.push(0.85);
        xs.extend([1.3, 1.4, 1.5, 1.6, 1.7]);
        let pts = points_1d(&xs);
        let labels = cluster_points(&pts, params(0.45, 5, 1), Backend::Auto).unwrap();
        assert_eq!(labels.n_clusters, 2);
        assert!(!labels.core[5]);
        assert_eq!(labels.assignments[5], Assignment::Cluster(0));
        let rerun = cluster_points(&pts, params(0.45, 5, 1), Backend::Auto).unwrap();
        assert_eq!(labels, rerun);
    }

    #[test]
    fn rejects_bad_params_and_bad_points() {
        let pts = points_1d(&[0.0, 1.0]);
        assert!(cluster_points(&pts, params(0.0, 1, 1), Backend::Auto).is_err());
        assert!(cluster_points(&pts, params(1.0, 0, 1), Backend::Auto).is_err());
        assert!(cluster_points(&pts, params(1.0, 1, 0), Backend::Auto).is_err());
        let bad = vec![vec![0.0], vec![f64::NAN]];
        assert!(matches!(
            cluster_points(&bad, params(1.0, 1, 1), Backend::Auto).unwrap_err(),
            DbscanError::NonFinite(1)
        ));
        let mixed = vec![vec![0.0], vec![0.0, 1.0]];
        assert!(matches!(
            cluster_points(&mixed, params(1.0, 1, 1), Backend::Auto).unwrap_err(),
            DbscanError::DimensionMismatch { index: 1, .. }
        ));
    }

    #[test]
    fn kdistance_profile_collinear_example() {
        let pts = points_1d(&[0.0, 1.0, 3.0]);
        assert_eq!(kdistance_profile(&pts, 1).unwrap(), vec![1.0, 1.0, 2.0]);
    }

    #[test]
    fn kdistance_profile_identical_points_are_zero() {
        let pts = points_1d(&[4.0; 4]);
        for k in 1..=3 {
            assert_eq!(kdistance_profile(&pts, k).unwrap(), vec![0.0; 4]);
        }
    }

    #[test]
    fn kdistance_profile_is_sorted() {
        let pts: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![((i * 17) % 7) as f64, ((i * 5) % 11) as f64])
            .collect();
        let profile = kdistance_profile(&pts, 3).unwrap();
        assert!(profile.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn kdistance_rejects_out_of_range_k() {
        let pts = points_1d(&[0.0, 1.0]);
        assert!(matches!(
            kdistance_profile(&pts, 2).unwrap_err(),
            DbscanError::KOutOfRange { k: 2, n: 2 }
        ));
        assert!(matches!(
            kdistance_profile(&pts, 0).unwrap_err(),
            DbscanError::KOutOfRange { k: 0, n: 2 }
        ));
    }

    #[test]
    fn elbow_picks_the_bend_before_a_jump() {
        let mut profile = vec![0.1; 8];
        profile.push(0.15);
        profile.extend([0.8, 0.85, 0.9]);
        let eps = elbow_eps(&profile).unwrap();
        assert!((0.1..=0.2).contains(&eps), "eps = {eps}");
        assert_eq!(elbow_eps(&[]), None);
        assert_eq!(elbow_eps(&[0.4]), Some(0.4));
        // Flat profile: no bend, median returned.
        assert_eq!(elbow_eps(&[0.3; 9]), Some(0.3));
    }

    #[test]
    fn cluster_embeddings_rejects_duplicate_ids() {
        let vs = vec![
            EmbeddingVector::new("a", vec![1.0]),
            EmbeddingVector::new("a", vec![0.9]),
        ];
        assert!(matches!(
            cluster_embeddings(&vs, params(1.0, 1, 1), Backend::Auto).unwrap_err(),
            DbscanError::DuplicateFaceId { .. }
        ));
    }

    #[test]
    fn clustering_result_partitions_input_ids() {
        let vs: Vec<EmbeddingVector> = (0..30)
            .map(|i| {
                let x = if i < 20 { i as f64 * 0.01 } else { 50.0 + i as f64 * 0.01 };
                EmbeddingVector::new(format!("f{i}"), vec![x])
            })
            .collect();
        let result = cluster_embeddings(&vs, params(0.5, 5, 15), Backend::Auto).unwrap();
        assert_eq!(result.clusters.len(), 1);
        let mut all: BTreeSet<String> = result.noise.clone();
        for c in &result.clusters {
            assert!(all.is_disjoint(c));
            all.extend(c.iter().cloned());
        }
        assert_eq!(all.len(), 30);
        assert_eq!(result.noise.len(), 10);
    }

    #[test]
    fn assignments_round_trip() {
        let ids: Vec<String> = (0..12).map(|i| format!("f{i}")).collect();
        let pts = points_1d(
            &(0..12)
                .map(|i| if i < 6 { 0.0 } else { 9.0 })
                .collect::<Vec<_>>(),
        );
        let labels = cluster_points(&pts, params(1.0, 3, 1), Backend::Auto).unwrap();
        let text = write_assignments(&ids, &labels).unwrap();
        let back = read_assignments(&text).unwrap();
        assert_eq!(back.clusters.len(), 2);
        assert!(back.noise.is_empty());
        assert_eq!(back.all_faces().len(), 12);
        assert!(text.contains("\"cluster_id\":0"));

        let err = read_assignments("{\"face_id\":\"x\",\"cluster_id\":\"stray\"}\n").unwrap_err();
        assert!(matches!(err, DbscanError::MalformedAssignment { line: 1, .. }), "{err}");
    }

    #[test]
    fn backends_agree() {
        let pts: Vec<Vec<f64>> = (0..80)
            .map(|i| {
                let group = (i % 4) as f64 * 10.0;
                vec![group + (i % 5) as f64 * 0.1, (i % 3) as f64 * 0.1]
            })
            .collect();
        let p = params(1.0, 4, 1);
        let brute = cluster_points(&pts, p, Backend::Brute).unwrap();
        let tree = cluster_points(&pts, p, Backend::Tree).unwrap();
        assert_eq!(brute, tree);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn core_co_membership_survives_permutation(
            xs in proptest::collection::vec(0.0f64..10.0, 8..40),
            eps in 0.2f64..2.0,
            min_pts in 2usize..6,
            seed in 0u64..1000,
        ) {
            let pts = points_1d(&xs);
            let p = params(eps, min_pts, 1);
            let base = cluster_points(&pts, p, Backend::Brute).unwrap();

            // Deterministic shuffle of the input order.
            let n = xs.len();
            let mut perm: Vec<usize> = (0..n).collect();
            let mut state = seed.wrapping_add(1);
            for i in (1..n).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let j = (state >> 33) as usize % (i + 1);
                perm.swap(i, j);
            }
            let shuffled: Vec<Vec<f64>> = perm.iter().map(|&i| pts[i].clone()).collect();
            let shuf = cluster_points(&shuffled, p, Backend::Brute).unwrap();

            // Core flags are order-independent, as is noise membership.
            for (new_pos, &old_pos) in perm.iter().enumerate() {
                prop_assert_eq!(base.core[old_pos], shuf.core[new_pos]);
                prop_assert_eq!(
                    base.assignments[old_pos] == Assignment::Noise,
                    shuf.assignments[new_pos] == Assignment::Noise
                );
            }
            // Same pairs of core points share a cluster.
            for a in 0..n {
                for b in (a + 1)..n {
                    if !(base.core[a] && base.core[b]) {
                        continue;
                    }
                    let before = base.assignments[a] == base.assignments[b];
                    let pa = perm.iter().position(|&x| x == a).unwrap();
                    let pb = perm.iter().position(|&x| x == b).unwrap();
                    let after = shuf.assignments[pa] == shuf.assignments[pb];
                    prop_assert_eq!(before, after);
                }
            }
        }
    }
}
