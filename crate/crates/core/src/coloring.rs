//! Set colorings: assignments of q-subsets of a palette [0, p) with disjoint
//! sets on adjacent vertices, their exact verifier, Kneser graphs, and a
//! homomorphism oracle for deciding whether a given (p:q) value is feasible.

use serde::{Deserialize, Serialize};

use crate::graph::{Graph, GraphError};

/// A (p:q) set coloring: every vertex holds q distinct colors from [0, p) and
/// adjacent vertices hold disjoint sets. The weight of the coloring is p/q.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetColoring {
    pub p: u64,
    pub q: u64,
    pub colors: Vec<Vec<u64>>,
}

impl SetColoring {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("coloring serialization")
    }

    pub fn from_json(text: &str) -> Result<SetColoring, GraphError> {
        serde_json::from_str(text).map_err(|e| GraphError::Json(e.to_string()))
    }
}

/// Outcome of verification; invalid outcomes name the first violation found
/// (vertices in index order, then edges in lexicographic order).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColoringVerdict {
    Valid,
    WrongLength { expected: usize, got: usize },
    BadSet { vertex: usize, reason: String },
    Conflict { u: usize, v: usize, shared: u64 },
}

impl ColoringVerdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, ColoringVerdict::Valid)
    }
}

pub fn verify_set_coloring(g: &Graph, c: &SetColoring) -> ColoringVerdict {
    if c.colors.len() != g.n() {
        return ColoringVerdict::WrongLength { expected: g.n(), got: c.colors.len() };
    }
    let mut sorted: Vec<Vec<u64>> = Vec::with_capacity(g.n());
    for (v, set) in c.colors.iter().enumerate() {
        if set.len() as u64 != c.q {
            return ColoringVerdict::BadSet {
                vertex: v,
                reason: format!("expected {} colors, got {}", c.q, set.len()),
            };
        }
        let mut s = set.clone();
        s.sort_unstable();
        if s.windows(2).any(|w| w[0] == w[1]) {
            return ColoringVerdict::BadSet { vertex: v, reason: "repeated color".into() };
        }
        if let Some(&hi) = s.last() {
            if hi >= c.p {
                return ColoringVerdict::BadSet {
                    vertex: v,
                    reason: format!("color {hi} outside palette [0, {})", c.p),
                };
            }
        }
        sorted.push(s);
    }
    for (u, v) in g.edges() {
        if let Some(&x) = sorted[u].iter().find(|x| sorted[v].binary_search(x).is_ok()) {
            return ColoringVerdict::Conflict { u, v, shared: x };
        }
    }
    ColoringVerdict::Valid
}

/// The Kneser graph KG(p, q): vertices are the q-subsets of [0, p) in
/// lexicographic order of their sorted element lists; edges join disjoint
/// subsets. A (p:q) set coloring of G is exactly a homomorphism G -> KG(p, q).
pub fn kneser_graph(p: u64, q: u64) -> Graph {
    let subsets = q_subsets(p, q);
    let n = subsets.len();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if subsets[i] & subsets[j] == 0 {
                edges.push((i, j));
            }
        }
    }
    Graph::new(n, &edges).expect("kneser construction")
}

/// The q-subsets of [0, p) as bitmasks, in lexicographic order of the sorted
/// element lists.
pub fn q_subsets(p: u64, q: u64) -> Vec<u128> {
    assert!(p <= 128, "palette too large for subset masks");
    let mut out = Vec::new();
    let mut cur: Vec<u64> = (0..q).collect();
    if q == 0 || q > p {
        if q == 0 {
            out.push(0);
        }
        return out;
    }
    loop {
        out.push(cur.iter().fold(0u128, |m, &b| m | (1 << b)));
        // next combination
        let mut i = q as usize;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] + (q - i as u64) <= p - 1 {
                cur[i] += 1;
                for j in i + 1..q as usize {
                    cur[j] = cur[j - 1] + 1;
                }
                break;
            }
        }
    }
}

pub fn mask_to_set(mask: u128) -> Vec<u64> {
    (0..128).filter(|&b| mask >> b & 1 == 1).collect()
}

/// Result of the bounded homomorphism search. `Unknown` means the node budget
/// ran out before the search space was exhausted.
#[derive(Debug, Clone)]
pub enum HomSearch {
    Found(SetColoring),
    NotFound,
    Unknown { nodes_spent: u64 },
}

/// Decide whether G admits a (p:q) set coloring by exhaustive backtracking
/// over q-subsets (vertices in descending degree order, subsets in
/// lexicographic order, so the witness is canonical for the search order).
///
/// Pruning: a candidate must be disjoint from the union of its assigned
/// neighbors' sets, and after placing it every unassigned neighbor must still
/// have p - |union| >= q free colors.
pub fn kneser_hom_exists(g: &Graph, p: u64, q: u64, node_budget: u64) -> HomSearch {
    let n = g.n();
    if q == 0 || n == 0 {
        return HomSearch::Found(SetColoring { p, q, colors: vec![Vec::new(); n] });
    }
    if q > p {
        return HomSearch::NotFound;
    }
    let subsets = q_subsets(p, q);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&v| std::cmp::Reverse(g.degree(v)));
    let mut assigned: Vec<Option<u128>> = vec![None; n];
    let mut nb_union: Vec<u128> = vec![0; n];
    // choice[i] = index into `subsets` currently tried for order[i]
    let mut choice: Vec<usize> = vec![0; n];
    let mut depth = 0usize;
    let mut nodes = 0u64;
    while depth < n {
        let v = order[depth];
        let mut found = None;
        let start = choice[depth];
        for (k, &mask) in subsets.iter().enumerate().skip(start) {
            nodes += 1;
            if nodes > node_budget {
                return HomSearch::Unknown { nodes_spent: nodes };
            }
            if mask & nb_union[v] != 0 {
                continue;
            }
            // forward check on unassigned neighbors
            let ok = g.neighbors(v).iter().all(|&w| {
                assigned[w].is_some()
                    || (p as u32) - (nb_union[w] | mask).count_ones() >= q as u32
            });
            if ok {
                found = Some((k, mask));
                break;
            }
        }
        match found {
            Some((k, mask)) => {
                choice[depth] = k;
                assigned[v] = Some(mask);
                for &w in g.neighbors(v) {
                    nb_union[w] |= mask;
                }
                depth += 1;
                if depth < n {
                    choice[depth] = 0;
                }
            }
            None => {
                if depth == 0 {
                    return HomSearch::NotFound;
                }
                depth -= 1;
                let u = order[depth];
                let mask = assigned[u].take().expect("backtrack over assigned vertex");
                for &w in g.neighbors(u) {
                    // recompute: unions are not invertible via XOR when sets overlap
                    nb_union[w] = g
                        .neighbors(w)
                        .iter()
                        .filter_map(|&x| assigned[x])
                        .fold(0, |m, s| m | s);
                }
                let _ = mask;
                choice[depth] += 1;
            }
        }
    }
    let colors = assigned
        .into_iter()
        .map(|m| mask_to_set(m.expect("complete assignment")))
        .collect();
    let c = SetColoring { p, q, colors };
    debug_assert!(verify_set_coloring(g, &c).is_valid());
    HomSearch::Found(c)
}

/// Lift a proper k-coloring (values in [0, k)) to a (kq:q) set coloring:
/// class c receives the block {cq, ..., cq+q-1}.
pub fn lift_proper_coloring(proper: &[u64], k: u64, q: u64) -> SetColoring {
    let colors = proper
        .iter()
        .map(|&c| {
            assert!(c < k, "color {c} outside [0, {k})");
            (c * q..(c + 1) * q).collect()
        })
        .collect();
    SetColoring { p: k * q, q, colors }
}

/// Collapse a set coloring to a proper coloring by ranking the distinct sets;
/// the palette is the number of distinct sets used (at most C(p, q)).
pub fn proper_from_fractional(c: &SetColoring) -> (Vec<u64>, u64) {
    let mut seen: Vec<Vec<u64>> = Vec::new();
    let mut out = Vec::with_capacity(c.colors.len());
    for set in &c.colors {
        let mut s = set.clone();
        s.sort_unstable();
        let idx = match seen.iter().position(|t| *t == s) {
            Some(i) => i,
            None => {
                seen.push(s);
                seen.len() - 1
            }
        };
        out.push(idx as u64);
    }
    (out, seen.len() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{complete_graph, cycle_graph, petersen, Graph};

    /// Independent oracle: generic homomorphism search G -> H by plain
    /// backtracking in vertex index order, no subset structure involved.
    fn graph_hom_exists(g: &Graph, h: &Graph) -> bool {
        fn rec(g: &Graph, h: &Graph, map: &mut Vec<Option<usize>>, v: usize) -> bool {
            if v == g.n() {
                return true;
            }
            'cand: for t in 0..h.n() {
                for &w in g.neighbors(v) {
                    if let Some(tw) = map[w] {
                        let (a, b) = (t.min(tw), t.max(tw));
                        if a == b || !h.has_edge(a, b) {
                            continue 'cand;
                        }
                    }
                }
                map[v] = Some(t);
                if rec(g, h, map, v + 1) {
                    return true;
                }
                map[v] = None;
            }
            false
        }
        rec(g, h, &mut vec![None; g.n()], 0)
    }

    #[test]
    fn kneser_5_2_is_petersen() {
        let kg = kneser_graph(5, 2);
        assert_eq!(kg.n(), 10);
        assert_eq!(kg.edge_count(), 15);
        assert!((0..10).all(|v| kg.degree(v) == 3));
        assert_eq!(crate::graph::girth(&kg), Some(5));
        // the unique 3-regular girth-5 graph on 10 vertices
        assert!(graph_hom_exists(&petersen(), &kg));
    }

    #[test]
    fn verifier_catches_first_violation() {
        let g = cycle_graph(5);
        let good = SetColoring {
            p: 5,
            q: 2,
            colors: vec![vec![0, 1], vec![2, 3], vec![4, 0], vec![1, 2], vec![3, 4]],
        };
        assert_eq!(verify_set_coloring(&g, &good), ColoringVerdict::Valid);

        let mut short = good.clone();
        short.colors[2] = vec![4];
        assert_eq!(
            verify_set_coloring(&g, &short),
            ColoringVerdict::BadSet { vertex: 2, reason: "expected 2 colors, got 1".into() }
        );

        let mut out_of_range = good.clone();
        out_of_range.colors[3] = vec![1, 5];
        assert!(matches!(
            verify_set_coloring(&g, &out_of_range),
            ColoringVerdict::BadSet { vertex: 3, .. }
        ));

        let mut clash = good.clone();
        clash.colors[1] = vec![1, 3];
        assert_eq!(
            verify_set_coloring(&g, &clash),
            ColoringVerdict::Conflict { u: 0, v: 1, shared: 1 }
        );

        let wrong_n = SetColoring { p: 5, q: 2, colors: vec![vec![0, 1]] };
        assert_eq!(
            verify_set_coloring(&g, &wrong_n),
            ColoringVerdict::WrongLength { expected: 5, got: 1 }
        );
    }

    #[test]
    fn odd_cycle_thresholds() {
        // C_{2k+1} has fractional chromatic number 2 + 1/k: (2k+1 : k) is
        // feasible and nothing below it is.
        for k in 2..=4u64 {
            let g = cycle_graph((2 * k + 1) as usize);
            match kneser_hom_exists(&g, 2 * k + 1, k, 1_000_000) {
                HomSearch::Found(c) => assert!(verify_set_coloring(&g, &c).is_valid()),
                other => panic!("expected witness for C{}: {:?}", 2 * k + 1, other),
            }
            // below threshold: weight (2k+1-1)/k = 2 < 2 + 1/k
            assert!(matches!(
                kneser_hom_exists(&g, 2 * k, k, 5_000_000_000),
                HomSearch::NotFound
            ));
        }
    }

    #[test]
    fn clique_and_petersen_thresholds() {
        let k4 = complete_graph(4);
        assert!(matches!(kneser_hom_exists(&k4, 8, 2, 5_000_000_000), HomSearch::Found(_)));
        assert!(matches!(kneser_hom_exists(&k4, 7, 2, 5_000_000_000), HomSearch::NotFound));
        // Petersen: fractional chromatic number 5/2
        let pet = petersen();
        match kneser_hom_exists(&pet, 5, 2, 5_000_000_000) {
            HomSearch::Found(c) => assert!(verify_set_coloring(&pet, &c).is_valid()),
            other => panic!("expected (5:2) witness: {:?}", other),
        }
    }

    #[test]
    fn hom_search_agrees_with_generic_backtracker() {
        // cross-check on assorted small graphs and (p, q) values
        let cases: Vec<(Graph, u64, u64)> = vec![
            (cycle_graph(5), 5, 2),
            (cycle_graph(5), 4, 2),
            (cycle_graph(7), 7, 3),
            (cycle_graph(7), 9, 4),
            (complete_graph(3), 6, 2),
            (complete_graph(3), 5, 2),
            (crate::graph::path_graph(4), 2, 1),
        ];
        for (g, p, q) in cases {
            let direct = match kneser_hom_exists(&g, p, q, 5_000_000_000) {
                HomSearch::Found(_) => true,
                HomSearch::NotFound => false,
                HomSearch::Unknown { .. } => panic!("budget too small for test case"),
            };
            let kg = kneser_graph(p, q);
            assert_eq!(direct, graph_hom_exists(&g, &kg), "disagreement at p={p} q={q}");
        }
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let g = petersen();
        assert!(matches!(
            kneser_hom_exists(&g, 5, 2, 3),
            HomSearch::Unknown { .. }
        ));
    }

    #[test]
    fn lift_and_collapse() {
        let g = cycle_graph(6);
        let proper = vec![0, 1, 0, 1, 0, 1];
        let lifted = lift_proper_coloring(&proper, 2, 3);
        assert_eq!(lifted.p, 6);
        assert_eq!(lifted.q, 3);
        assert!(verify_set_coloring(&g, &lifted).is_valid());
        let (collapsed, palette) = proper_from_fractional(&lifted);
        assert_eq!(palette, 2);
        assert_eq!(collapsed, vec![0, 1, 0, 1, 0, 1]);
    }

    #[test]
    fn coloring_json_round_trip() {
        let c = SetColoring { p: 5, q: 2, colors: vec![vec![0, 1], vec![2, 3]] };
        let back = SetColoring::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        assert!(SetColoring::from_json("{\"p\": 3}").is_err());
    }

    #[test]
    fn subset_enumeration_is_lexicographic() {
        let subs = q_subsets(4, 2);
        let sets: Vec<Vec<u64>> = subs.iter().map(|&m| mask_to_set(m)).collect();
        assert_eq!(
            sets,
            vec![
                vec![0, 1],
                vec![0, 2],
                vec![0, 3],
                vec![1, 2],
                vec![1, 3],
                vec![2, 3]
            ]
        );
    }
}
