//! Exact radius search over embedding vectors.
//!
//! A vantage-point tree partitions points by distance to a chosen vantage:
//! everything within the split radius goes to the inside child, the rest
//! outside. The triangle inequality then bounds which side a radius query
//! can reach, and both sides are visited whenever the query ball straddles
//! the split, so results always equal a brute-force scan. Construction uses
//! no randomness: the vantage is the first point of each subset and ties are
//! broken by index, making the tree a pure function of the input order.
//!
//! Pruning saves work only once collections get large; below a few thousand
//! points a linear scan is faster in practice, so the clustering stage keeps
//! brute force as its default backend at that scale.

use thiserror::Error;

use crate::embed::euclidean;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("expected {expected}-d vectors, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("point {0} has a non-finite component")]
    NonFinite(usize),
    #[error("radius must be finite and non-negative, got {0}")]
    BadRadius(f64),
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(Vec<u32>),
    Split {
        vantage: u32,
        radius: f64,
        inside: Box<Node>,
        outside: Box<Node>,
    },
}

/// Metric tree over a fixed set of vectors, queried by closed-ball radius.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborIndex {
    dim: Option<usize>,
    points: Vec<Vec<f64>>,
    root: Option<Node>,
}

impl NeighborIndex {
    /// Builds the tree. Deterministic for a fixed input order.
    pub fn build<P: AsRef<[f64]>>(points: &[P]) -> Result<Self, IndexError> {
        let dim = points.first().map(|p| p.as_ref().len());
        for (i, p) in points.iter().enumerate() {
            let p = p.as_ref();
            if Some(p.len()) != dim {
                return Err(IndexError::DimensionMismatch {
                    expected: dim.unwrap_or(0),
                    got: p.len(),
                });
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(IndexError::NonFinite(i));
            }
        }
        let points: Vec<Vec<f64>> = points.iter().map(|p| p.as_ref().to_vec()).collect();
        let idxs: Vec<u32> = (0..points.len() as u32).collect();
        let root = if idxs.is_empty() {
            None
        } else {
            Some(build_node(&points, idxs))
        };
        Ok(NeighborIndex { dim, points, root })
    }

    /// Number of indexed vectors.
    pub fn size(&self) -> usize {
        self.points.len()
    }

    /// Indices of every stored point within distance `eps` of `query`
    /// (closed ball, boundary included), ascending.
    pub fn query_radius(&self, query: &[f64], eps: f64) -> Result<Vec<usize>, IndexError> {
        if !eps.is_finite() || eps < 0.0 {
            return Err(IndexError::BadRadius(eps));
        }
        if let Some(dim) = self.dim {
            if query.len() != dim {
                return Err(IndexError::DimensionMismatch {
                    expected: dim,
                    got: query.len(),
                });
            }
        }
        let mut hits = Vec::new();
        if let Some(root) = &self.root {
            self.search(root, query, eps, &mut hits);
        }
        hits.sort_unstable();
        Ok(hits)
    }

    fn distance(&self, i: u32, query: &[f64]) -> f64 {
        euclidean(&self.points[i as usize], query).expect("dimensions checked at entry")
    }

    fn search(&self, node: &Node, query: &[f64], eps: f64, hits: &mut Vec<usize>) {
        match node {
            Node::Leaf(idxs) => {
                for &i in idxs {
                    if self.distance(i, query) <= eps {
                        hits.push(i as usize);
                    }
                }
            }
            Node::Split {
                vantage,
                radius,
                inside,
                outside,
            } => {
                let d = self.distance(*vantage, query);
                if d <= eps {
                    hits.push(*vantage as usize);
                }
                // Inside child holds points at distance <= radius from the
                // vantage, outside holds >= radius; both bounds are kept
                // inclusive so boundary ties are never pruned away.
                if d - eps <= *radius {
                    self.search(inside, query, eps, hits);
                }
                if d + eps >= *radius {
                    self.search(outside, query, eps, hits);
                }
            }
        }
    }
}

fn build_node(points: &[Vec<f64>], idxs: Vec<u32>) -> Node {
    if idxs.len() <= LEAF_SIZE {
        return Node::Leaf(idxs);
    }
    let vantage = idxs[0];
    let mut rest: Vec<(f64, u32)> = idxs[1..]
        .iter()
        .map(|&i| {
            let d = euclidean(&points[vantage as usize], &points[i as usize])
                .expect("dimensions checked at build entry");
            (d, i)
        })
        .collect();
    rest.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let mid = rest.len() / 2;
    let radius = rest[mid].0;
    let inside: Vec<u32> = rest[..mid].iter().map(|&(_, i)| i).collect();
    let outside: Vec<u32> = rest[mid..].iter().map(|&(_, i)| i).collect();
    Node::Split {
        vantage,
        radius,
        inside: Box::new(build_node(points, inside)),
        outside: Box::new(build_node(points, outside)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(points: &[Vec<f64>], query: &[f64], eps: f64) -> Vec<usize> {
        points
            .iter()
            .enumerate()
            .filter(|(_, p)| euclidean(p, query).unwrap() <= eps)
            .map(|(i, _)| i)
            .collect()
    }

    #[test]
    fn empty_index_returns_nothing() {
        let idx = NeighborIndex::build::<Vec<f64>>(&[]).unwrap();
        assert_eq!(idx.size(), 0);
        assert_eq!(idx.query_radius(&[1.0, 2.0], 5.0).unwrap(), Vec::<usize>::new());
    }

    #[test]
    fn single_point_always_found_at_itself() {
        let idx = NeighborIndex::build(&[vec![0.25, -1.5]]).unwrap();
        assert_eq!(idx.size(), 1);
        for eps in [0.0, 0.5, 10.0] {
            assert_eq!(idx.query_radius(&[0.25, -1.5], eps).unwrap(), vec![0]);
        }
    }

    #[test]
    fn boundary_distance_is_included() {
        let points = vec![vec![0.0], vec![1.0], vec![3.0]];
        let idx = NeighborIndex::build(&points).unwrap();
        assert_eq!(idx.query_radius(&[0.0], 1.0).unwrap(), vec![0, 1]);
        assert_eq!(idx.query_radius(&[0.0], 3.0).unwrap(), vec![0, 1, 2]);
        assert_eq!(idx.query_radius(&[0.0], 0.999).unwrap(), vec![0]);
    }

    #[test]
    fn build_rejects_mixed_dimensions_and_non_finite() {
        let err = NeighborIndex::build(&[vec![1.0], vec![1.0, 2.0]]).unwrap_err();
        assert!(matches!(err, IndexError::DimensionMismatch { expected: 1, got: 2 }));
        let err = NeighborIndex::build(&[vec![f64::INFINITY]]).unwrap_err();
        assert!(matches!(err, IndexError::NonFinite(0)));
    }

    #[test]
    fn query_rejects_mismatched_dimension_and_bad_radius() {
        let idx = NeighborIndex::build(&[vec![1.0, 0.0]]).unwrap();
        assert!(matches!(
            idx.query_radius(&[1.0], 1.0).unwrap_err(),
            IndexError::DimensionMismatch { expected: 2, got: 1 }
        ));
        assert!(matches!(
            idx.query_radius(&[1.0, 0.0], -0.5).unwrap_err(),
            IndexError::BadRadius(_)
        ));
    }

    #[test]
    fn build_is_deterministic() {
        let points: Vec<Vec<f64>> = (0..50)
            .map(|i| vec![(i * 37 % 17) as f64, (i * 11 % 13) as f64])
            .collect();
        let a = NeighborIndex::build(&points).unwrap();
        let b = NeighborIndex::build(&points).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn tree_matches_brute_force(
            (points, queries) in (2usize..6).prop_flat_map(|dim| {
                (
                    proptest::collection::vec(
                        proptest::collection::vec(-2.0f64..2.0, dim),
                        1..60,
                    ),
                    proptest::collection::vec(
                        proptest::collection::vec(-2.0f64..2.0, dim),
                        1..8,
                    ),
                )
            }),
            eps in 0.0f64..3.0,
        ) {
            let idx = NeighborIndex::build(&points).unwrap();
            for q in &queries {
                prop_assert_eq!(idx.query_radius(q, eps).unwrap(), brute(&points, q, eps));
            }
        }

        #[test]
        fn every_indexed_point_finds_itself(
            points in proptest::collection::vec(
                proptest::collection::vec(-1.0f64..1.0, 3),
                1..40,
            ),
        ) {
            let idx = NeighborIndex::build(&points).unwrap();
            for (i, p) in points.iter().enumerate() {
                let hits = idx.query_radius(p, 0.0).unwrap();
                prop_assert!(hits.contains(&i));
            }
        }
    }
}
