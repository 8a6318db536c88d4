//! The lower-bound reduction: expand a cubic graph into a triangle graph,
//! and turn any (3q:q) set coloring of the expansion into a sinkless
//! orientation of the base graph. Round-complexity lower bounds for sinkless
//! orientation therefore transfer to weight-3 fractional coloring.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coloring::{verify_set_coloring, SetColoring};
use crate::graph::Graph;

#[derive(Debug, Error)]
pub enum ReductionError {
    #[error("base graph must be 3-regular; vertex {0} has degree {1}")]
    NotCubic(usize, usize),
    #[error("coloring invalid on the expansion: {0}")]
    BadColoring(String),
    #[error("coloring has p = {p}, q = {q}; expected p = 3q")]
    WrongWeight { p: u64, q: u64 },
    #[error("triangle of base vertex {0} does not use all 3q colors")]
    BrokenTriangle(usize),
}

/// Replace every vertex of a cubic graph by a triangle; the i-th corner of
/// v's triangle carries v's i-th external edge (ports in sorted neighbor
/// order). Corner i of vertex v is 3v + i. The expansion is 3-regular and
/// contains no K4.
pub fn triangle_expand(base: &Graph) -> Result<Graph, ReductionError> {
    for v in 0..base.n() {
        if base.degree(v) != 3 {
            return Err(ReductionError::NotCubic(v, base.degree(v)));
        }
    }
    let mut edges = Vec::with_capacity(base.n() * 3 + base.edge_count());
    for v in 0..base.n() {
        edges.push((3 * v, 3 * v + 1));
        edges.push((3 * v, 3 * v + 2));
        edges.push((3 * v + 1, 3 * v + 2));
        for (i, &w) in base.neighbors(v).iter().enumerate() {
            if v < w {
                let j = base.neighbors(w).binary_search(&v).expect("symmetric adjacency");
                edges.push((3 * v + i, 3 * w + j));
            }
        }
    }
    Ok(Graph::new(base.n() * 3, &edges).expect("triangle expansion"))
}

/// An orientation as (tail, head) pairs, one per edge.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Orientation(pub Vec<(usize, usize)>);

impl Orientation {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.0).expect("orientation serialization")
    }

    pub fn from_json(text: &str) -> Result<Orientation, crate::graph::GraphError> {
        let pairs: Vec<(usize, usize)> =
            serde_json::from_str(text).map_err(|e| crate::graph::GraphError::Json(e.to_string()))?;
        Ok(Orientation(pairs))
    }
}

/// Extract a sinkless orientation of the cubic base graph from any (3q:q)
/// set coloring of its triangle expansion.
///
/// Adjacent corners hold disjoint q-sets, so the three corners of a triangle
/// partition the whole palette of size 3q; exactly one corner holds color 0,
/// and its external edge leaves the triangle's base vertex. The corner
/// across that external edge cannot hold color 0 as well, so no edge is
/// claimed by both ends; unclaimed edges are oriented low-to-high.
pub fn extract_sinkless(base: &Graph, coloring: &SetColoring) -> Result<Orientation, ReductionError> {
    let h = triangle_expand(base)?;
    if coloring.p != 3 * coloring.q || coloring.q == 0 {
        return Err(ReductionError::WrongWeight { p: coloring.p, q: coloring.q });
    }
    let verdict = verify_set_coloring(&h, coloring);
    if !verdict.is_valid() {
        return Err(ReductionError::BadColoring(format!("{verdict:?}")));
    }
    let mut oriented: std::collections::HashMap<(usize, usize), (usize, usize)> =
        std::collections::HashMap::new();
    for v in 0..base.n() {
        // the corners partition the palette: find the unique holder of color 0
        let holders: Vec<usize> = (0..3)
            .filter(|&i| coloring.colors[3 * v + i].contains(&0))
            .collect();
        if holders.len() != 1 {
            return Err(ReductionError::BrokenTriangle(v));
        }
        let w = base.neighbors(v)[holders[0]];
        let key = (v.min(w), v.max(w));
        if let Some(prev) = oriented.insert(key, (v, w)) {
            debug_assert!(false, "edge {key:?} claimed twice: {prev:?}");
            return Err(ReductionError::BrokenTriangle(v));
        }
    }
    let arcs = base
        .edges()
        .into_iter()
        .map(|(u, w)| *oriented.get(&(u, w)).unwrap_or(&(u, w)))
        .collect();
    Ok(Orientation(arcs))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OrientationVerdict {
    Valid,
    NotAnOrientation(String),
    Sink(usize),
}

/// Check that the arcs orient every edge of g exactly once and that every
/// vertex has an outgoing arc.
pub fn verify_sinkless(g: &Graph, orientation: &Orientation) -> OrientationVerdict {
    let mut seen: std::collections::HashSet<(usize, usize)> = std::collections::HashSet::new();
    let mut outdeg = vec![0usize; g.n()];
    for &(t, h) in &orientation.0 {
        if t >= g.n() || h >= g.n() || !g.has_edge(t.min(h), t.max(h)) {
            return OrientationVerdict::NotAnOrientation(format!("({t}, {h}) is not an edge"));
        }
        if !seen.insert((t.min(h), t.max(h))) {
            return OrientationVerdict::NotAnOrientation(format!("edge ({t}, {h}) oriented twice"));
        }
        outdeg[t] += 1;
    }
    if seen.len() != g.edge_count() {
        return OrientationVerdict::NotAnOrientation(format!(
            "{} of {} edges oriented",
            seen.len(),
            g.edge_count()
        ));
    }
    match (0..g.n()).find(|&v| outdeg[v] == 0) {
        Some(v) => OrientationVerdict::Sink(v),
        None => OrientationVerdict::Valid,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coloring::{kneser_hom_exists, HomSearch};
    use crate::graph::{complete_graph, girth, petersen};

    #[test]
    fn expansion_is_cubic_and_k4_free() {
        let base = petersen();
        let h = triangle_expand(&base).unwrap();
        assert_eq!(h.n(), 30);
        assert!((0..30).all(|v| h.degree(v) == 3));
        assert_eq!(girth(&h), Some(3));
        // K4-free: no edge lies in two triangles; check every edge's
        // endpoints share at most one common neighbor, and no 4-clique
        for (u, v) in h.edges() {
            let common: Vec<usize> = h
                .neighbors(u)
                .iter()
                .filter(|w| h.neighbors(v).contains(w))
                .copied()
                .collect();
            assert!(common.len() <= 1, "edge ({u},{v}) in two triangles");
        }
        assert!(matches!(triangle_expand(&complete_graph(5)), Err(ReductionError::NotCubic(..))));
    }

    #[test]
    fn coloring_to_sinkless_end_to_end() {
        let base = petersen();
        let h = triangle_expand(&base).unwrap();
        for q in [1u64, 2] {
            let coloring = match kneser_hom_exists(&h, 3 * q, q, 5_000_000_000) {
                HomSearch::Found(c) => c,
                other => panic!("expansion admits a (3q:q) coloring: {other:?}"),
            };
            let orientation = extract_sinkless(&base, &coloring).unwrap();
            assert_eq!(verify_sinkless(&base, &orientation), OrientationVerdict::Valid);
        }
    }

    #[test]
    fn verifier_catches_defects() {
        let base = petersen();
        // all edges low-to-high: vertex with locally maximal index is a sink
        let arcs = Orientation(base.edges());
        assert!(matches!(verify_sinkless(&base, &arcs), OrientationVerdict::Sink(_)));
        let mut missing = base.edges();
        missing.pop();
        assert!(matches!(
            verify_sinkless(&base, &Orientation(missing)),
            OrientationVerdict::NotAnOrientation(_)
        ));
        let mut doubled = base.edges();
        doubled[0] = doubled[1];
        assert!(matches!(
            verify_sinkless(&base, &Orientation(doubled)),
            OrientationVerdict::NotAnOrientation(_)
        ));
        // weight must be exactly 3
        let bad = SetColoring { p: 4, q: 1, colors: vec![vec![0]; 30] };
        assert!(matches!(
            extract_sinkless(&base, &bad),
            Err(ReductionError::WrongWeight { .. })
        ));
    }
}
