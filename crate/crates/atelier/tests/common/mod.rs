//! Brute-force reference implementations the test suites compare against.
//!
//! Everything here is written from the textbook definitions, on purpose by
//! a different route than the library takes: union-find instead of BFS,
//! base-2 logs instead of natural, pair enumeration instead of contingency
//! sums. Agreement between the two paths is the point of the comparison.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Reference density clustering, reduced to its order-free core: core flags,
/// connected components over core points, and for every non-core point the
/// set of components it touches.
pub struct RefDensity {
    pub core: Vec<bool>,
    /// Component id per point; `None` for non-core points.
    pub core_comp: Vec<Option<usize>>,
    /// For each point, the components of its core neighbors. Empty for a
    /// noise point, possibly plural for a contested border point.
    pub adjacent: Vec<BTreeSet<usize>>,
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, i: usize) -> usize {
        if self.0[i] != i {
            let root = self.find(self.0[i]);
            self.0[i] = root;
        }
        self.0[i]
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        self.0[ra] = rb;
    }
}

pub fn reference_density(points: &[Vec<f64>], eps: f64, min_pts: usize) -> RefDensity {
    let n = points.len();
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if dist(&points[i], &points[j]) <= eps {
                neighbors[i].push(j);
            }
        }
    }
    let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= min_pts).collect();

    let mut uf = UnionFind::new(n);
    for i in 0..n {
        if !core[i] {
            continue;
        }
        for &j in &neighbors[i] {
            if core[j] {
                uf.union(i, j);
            }
        }
    }
    // Normalize component ids to 0.. in order of the lowest member index.
    let mut comp_of_root: BTreeMap<usize, usize> = BTreeMap::new();
    let mut core_comp: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        if core[i] {
            let root = uf.find(i);
            let next = comp_of_root.len();
            let comp = *comp_of_root.entry(root).or_insert(next);
            core_comp[i] = Some(comp);
        }
    }
    let adjacent: Vec<BTreeSet<usize>> = (0..n)
        .map(|i| {
            neighbors[i]
                .iter()
                .filter_map(|&j| core_comp[j])
                .collect()
        })
        .collect();
    RefDensity {
        core,
        core_comp,
        adjacent,
    }
}

/// A labeled partition: every item sits in exactly one cluster and carries a
/// class label.
pub struct LabeledPartition {
    pub clusters: Vec<BTreeSet<String>>,
    pub labels: BTreeMap<String, usize>,
}

pub fn random_partition(rng: &mut ChaCha8Rng) -> LabeledPartition {
    let n = rng.random_range(2..=200);
    let k = rng.random_range(1..=10usize);
    let classes = rng.random_range(2..=8usize);
    let mut clusters: Vec<BTreeSet<String>> = vec![BTreeSet::new(); k];
    let mut labels = BTreeMap::new();
    for i in 0..n {
        let id = format!("f{i:03}");
        clusters[rng.random_range(0..k)].insert(id.clone());
        labels.insert(id, rng.random_range(0..classes));
    }
    clusters.retain(|c| !c.is_empty());
    LabeledPartition { clusters, labels }
}

pub fn purity_oracle(clusters: &[BTreeSet<String>], labels: &BTreeMap<String, usize>) -> f64 {
    let mut total = 0usize;
    let mut agree = 0usize;
    for cluster in clusters {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for id in cluster {
            *counts.entry(labels[id]).or_insert(0) += 1;
        }
        agree += counts.values().copied().max().unwrap_or(0);
        total += cluster.len();
    }
    agree as f64 / total as f64
}

pub fn nmi_oracle(clusters: &[BTreeSet<String>], labels: &BTreeMap<String, usize>) -> f64 {
    let n: usize = clusters.iter().map(|c| c.len()).sum();
    let nf = n as f64;
    let mut class_sizes: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cells: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (k, cluster) in clusters.iter().enumerate() {
        for id in cluster {
            let j = labels[id];
            *class_sizes.entry(j).or_insert(0) += 1;
            *cells.entry((k, j)).or_insert(0) += 1;
        }
    }
    let mut info = 0.0;
    for (&(k, j), &nkj) in &cells {
        let joint = nkj as f64 / nf;
        let ratio = (nf * nkj as f64) / (clusters[k].len() as f64 * class_sizes[&j] as f64);
        info += joint * ratio.log2();
    }
    let entropy = |sizes: &mut dyn Iterator<Item = usize>| -> f64 {
        -sizes
            .map(|s| {
                let p = s as f64 / nf;
                p * p.log2()
            })
            .sum::<f64>()
    };
    let hk = entropy(&mut clusters.iter().map(|c| c.len()));
    let hc = entropy(&mut class_sizes.values().copied());
    let denom = (hk + hc) / 2.0;
    if denom == 0.0 {
        1.0
    } else {
        info / denom
    }
}

pub fn rand_oracle(clusters: &[BTreeSet<String>], labels: &BTreeMap<String, usize>) -> f64 {
    let mut cluster_of: BTreeMap<&str, usize> = BTreeMap::new();
    for (k, cluster) in clusters.iter().enumerate() {
        for id in cluster {
            cluster_of.insert(id, k);
        }
    }
    let items: Vec<&str> = cluster_of.keys().copied().collect();
    let mut agree = 0u64;
    let mut total = 0u64;
    for i in 0..items.len() {
        for j in (i + 1)..items.len() {
            let same_cluster = cluster_of[items[i]] == cluster_of[items[j]];
            let same_class = labels[items[i]] == labels[items[j]];
            if same_cluster == same_class {
                agree += 1;
            }
            total += 1;
        }
    }
    agree as f64 / total as f64
}

/// Unit-norm vector from uniform coordinates; fine as test data.
pub fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-3 {
            return v.iter().map(|x| x / norm).collect();
        }
    }
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
