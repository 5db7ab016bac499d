//! Building blocks for attributing paintings by the faces they contain.
//!
//! The pipeline runs in stages, each usable on its own:
//!
//! 1. [`corpus`] loads a painting manifest (artist, style, year) and maps
//!    years into 50-year bins.
//! 2. [`align`] cuts fixed-size face crops out of painting images from
//!    externally supplied detection boxes.
//! 3. [`embed`] turns crops into unit-length feature vectors and stores them
//!    in a compact binary format.
//! 4. [`dbscan`] groups embeddings by density; faces that never reach a dense
//!    region stay unassigned ("noise").
//! 5. [`attribute`] names each cluster by the majority label of its members,
//!    per task (artist, style, or year bin).
//! 6. [`metrics`] scores the attributed clusters: per-cluster confusion
//!    counts, purity, normalized mutual information, and the Rand index.
//!
//! [`synth`] generates corpora with a known planted clustering so the whole
//! chain can be exercised end to end, and [`pipeline`] wires the stages into
//! the `atelier` command-line tool.
//!
//! ```
//! use atelier::corpus::year_bin;
//!
//! let bin = year_bin(1642).unwrap();
//! assert_eq!(bin.label(), "1600-1650");
//! ```

pub mod align;
pub mod attribute;
pub mod corpus;
pub mod dbscan;
pub mod embed;
pub mod index;
pub mod metrics;
pub mod pipeline;
pub mod synth;

pub use align::{crop_resize, expand_and_clamp, BBox, FaceInstance, PixelGrid};
pub use attribute::{attribute_cluster, merge_by_label, ClusterAttribution, Task};
pub use corpus::{parse_filename, parse_manifest, year_bin, Corpus, PaintingRecord, YearBin};
pub use dbscan::{cluster_embeddings, cluster_points, ClusterParams, ClusteringResult};
pub use embed::{euclidean, mock_embed, normalize, EmbeddingVector};
pub use index::NeighborIndex;
pub use metrics::{
    build_task_report, cluster_metrics, confusion_counts, nmi, pair_counts, purity, rand_index,
    ClusterMetrics, ConfusionCounts, Convention, TaskReport,
};
pub use synth::{generate, SynthSpec};
