//! Term-sparsity graphs and their chordal clique decompositions.
//!
//! Nodes are basis monomials; an edge joins b and g exactly when b+g occurs
//! in the constraint support or as a basis square. A PSD Gram matrix can
//! then be replaced by one PSD block per maximal clique of a chordal
//! extension, which is where all block-size savings downstream come from.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::basis::MonomialBasis;
use crate::poly::Support;

#[derive(Debug, Error)]
pub enum TsGraphError {
    #[error("elimination order is not perfect for the graph (node {node})")]
    NotPerfectElimination { node: usize },
    #[error("elimination order has {got} nodes, graph has {want}")]
    BadOrderLength { got: usize, want: usize },
}

/// Undirected graph on basis monomials.
#[derive(Debug, Clone)]
pub struct TspGraph {
    nodes: MonomialBasis,
    adj: Vec<BTreeSet<usize>>,
    num_edges: usize,
}

impl TspGraph {
    pub fn nodes(&self) -> &MonomialBasis {
        &self.nodes
    }

    /// Node count.
    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i].contains(&j)
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.adj[i].iter().copied()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    /// All edges as (i, j) with i < j, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.num_edges);
        for (i, nbrs) in self.adj.iter().enumerate() {
            for &j in nbrs.iter().filter(|&&j| j > i) {
                out.push((i, j));
            }
        }
        out
    }

    /// True if newly inserted.
    fn add_edge(&mut self, i: usize, j: usize) -> bool {
        debug_assert_ne!(i, j);
        if self.adj[i].insert(j) {
            self.adj[j].insert(i);
            self.num_edges += 1;
            true
        } else {
            false
        }
    }
}

/// Edge {b, g} iff b != g and b+g lies in the support or equals a doubled
/// basis monomial.
pub fn tsp_graph(support: &Support, basis: &MonomialBasis) -> TspGraph {
    let doubles: BTreeSet<_> = basis.exponents().iter().map(|b| b.double()).collect();
    let r = basis.len();
    let mut g = TspGraph {
        nodes: basis.clone(),
        adj: vec![BTreeSet::new(); r],
        num_edges: 0,
    };
    for i in 0..r {
        for j in (i + 1)..r {
            let sum = basis.exponents()[i].add(&basis.exponents()[j]);
            if support.contains(&sum) || doubles.contains(&sum) {
                g.add_edge(i, j);
            }
        }
    }
    g
}

/// A chordal supergraph with the elimination order that witnesses it.
#[derive(Debug, Clone)]
pub struct ChordalExtension {
    pub graph: TspGraph,
    /// order\[k\] = node eliminated k-th; a perfect elimination ordering of
    /// `graph`.
    pub elimination_order: Vec<usize>,
    pub fill_edges: Vec<(usize, usize)>,
}

/// Greedy minimum-degree elimination (ties to the lowest node index): pick a
/// node of minimum remaining degree, complete its neighborhood into a
/// clique, remove it. The insertion of exactly those completion edges makes
/// the recorded order a perfect elimination ordering of the output.
pub fn chordal_extension(g: &TspGraph) -> ChordalExtension {
    let n = g.len();
    let mut ext = g.clone();
    let mut work = g.adj.clone();
    let mut alive = vec![true; n];
    let mut order = Vec::with_capacity(n);
    let mut fill = Vec::new();

    for _ in 0..n {
        let v = (0..n)
            .filter(|&i| alive[i])
            .min_by_key(|&i| (work[i].len(), i))
            .expect("alive node");
        order.push(v);
        let nbrs: Vec<usize> = work[v].iter().copied().collect();
        for (a_idx, &a) in nbrs.iter().enumerate() {
            for &b in &nbrs[a_idx + 1..] {
                if ext.add_edge(a, b) {
                    fill.push((a.min(b), a.max(b)));
                    work[a].insert(b);
                    work[b].insert(a);
                }
            }
        }
        alive[v] = false;
        for &w in &nbrs {
            work[w].remove(&v);
        }
        work[v].clear();
    }

    ChordalExtension {
        graph: ext,
        elimination_order: order,
        fill_edges: fill,
    }
}

/// None when the order is a perfect elimination ordering, else an offending
/// node: some node whose later neighborhood is not a clique.
fn peo_violation(g: &TspGraph, order: &[usize]) -> Option<usize> {
    let n = g.len();
    let mut pos = vec![0usize; n];
    for (k, &v) in order.iter().enumerate() {
        pos[v] = k;
    }
    for (k, &v) in order.iter().enumerate() {
        let later: Vec<usize> = g.neighbors(v).filter(|&w| pos[w] > k).collect();
        if later.len() <= 1 {
            continue;
        }
        let &u = later.iter().min_by_key(|&&w| pos[w]).expect("nonempty");
        for &w in &later {
            if w != u && !g.has_edge(u, w) {
                return Some(v);
            }
        }
    }
    None
}

/// Chordality by maximum cardinality search: MCS visits (ties to the lowest
/// index), reversed, form a perfect elimination ordering iff the graph is
/// chordal. Independent of how the extension was built, so tests can use it
/// as an oracle against `chordal_extension`.
pub fn is_chordal(g: &TspGraph) -> bool {
    let n = g.len();
    let mut weight = vec![0usize; n];
    let mut visited = vec![false; n];
    let mut visit_order = Vec::with_capacity(n);
    for _ in 0..n {
        let v = (0..n)
            .filter(|&i| !visited[i])
            .max_by_key(|&i| (weight[i], std::cmp::Reverse(i)))
            .expect("unvisited node");
        visited[v] = true;
        visit_order.push(v);
        for w in g.neighbors(v) {
            if !visited[w] {
                weight[w] += 1;
            }
        }
    }
    visit_order.reverse();
    peo_violation(g, &visit_order).is_none()
}

/// Maximal cliques of a chordal graph plus the numbers reports care about.
#[derive(Debug, Clone)]
pub struct CliqueDecomposition {
    /// Sorted node-index lists, pairwise non-contained, ordered so that the
    /// running-intersection property holds.
    pub cliques: Vec<Vec<usize>>,
    pub elimination_order: Vec<usize>,
    pub fill_edges: Vec<(usize, usize)>,
    /// Largest clique size = largest PSD block side.
    pub mb: usize,
}

/// Candidate cliques are {v} plus the later neighbors of v along the
/// elimination order; keeping the maximal ones and listing them by
/// descending representative position yields a running-intersection order.
/// The order is re-verified first and a non-perfect one is an error: it can
/// only mean the extension step is broken.
pub fn maximal_cliques(ext: &ChordalExtension) -> Result<CliqueDecomposition, TsGraphError> {
    let g = &ext.graph;
    let order = &ext.elimination_order;
    let n = g.len();
    if order.len() != n {
        return Err(TsGraphError::BadOrderLength {
            got: order.len(),
            want: n,
        });
    }
    if let Some(node) = peo_violation(g, order) {
        return Err(TsGraphError::NotPerfectElimination { node });
    }
    let mut pos = vec![0usize; n];
    for (k, &v) in order.iter().enumerate() {
        pos[v] = k;
    }

    // Representatives in reverse elimination order.
    let mut candidates: Vec<Vec<usize>> = Vec::with_capacity(n);
    for (k, &v) in order.iter().enumerate().rev() {
        let mut c: Vec<usize> = g.neighbors(v).filter(|&w| pos[w] > k).collect();
        c.push(v);
        c.sort_unstable();
        candidates.push(c);
    }
    let mut keep = vec![true; candidates.len()];
    for i in 0..candidates.len() {
        for j in 0..candidates.len() {
            if i != j
                && keep[j]
                && candidates[i].len() <= candidates[j].len()
                && candidates[i].iter().all(|v| candidates[j].binary_search(v).is_ok())
                && (candidates[i].len() < candidates[j].len() || j < i)
            {
                keep[i] = false;
                break;
            }
        }
    }
    let cliques: Vec<Vec<usize>> = candidates
        .into_iter()
        .zip(keep)
        .filter_map(|(c, k)| k.then_some(c))
        .collect();
    let mb = cliques.iter().map(Vec::len).max().unwrap_or(0);
    Ok(CliqueDecomposition {
        cliques,
        elimination_order: order.clone(),
        fill_edges: ext.fill_edges.clone(),
        mb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::standard_basis;
    use crate::poly::{self, ComposeMode, Exponent};

    fn exp(p: &[u32]) -> Exponent {
        Exponent::new(p.to_vec())
    }

    fn support_of(degree: u32, members: &[&[u32]]) -> Support {
        let n = members[0].len();
        Support::from_exponents(n, degree, members.iter().map(|p| exp(p))).unwrap()
    }

    /// x1^4 + x2^4 + x3^4 + x1 x2 x3^2 + x1 x2^2 x3 over the full quadratic
    /// basis.
    fn coupled_quartic() -> (Support, MonomialBasis) {
        let s = support_of(
            4,
            &[&[4, 0, 0], &[0, 4, 0], &[0, 0, 4], &[1, 1, 2], &[1, 2, 1]],
        );
        (s, standard_basis(3, 2).unwrap())
    }

    #[test]
    fn coupled_quartic_graph_has_exactly_seven_edges() {
        let (s, b) = coupled_quartic();
        let g = tsp_graph(&s, &b);
        let at = |p: &[u32]| b.position(&exp(p)).unwrap();
        let expect: BTreeSet<(usize, usize)> = [
            (at(&[2, 0, 0]), at(&[0, 2, 0])),
            (at(&[2, 0, 0]), at(&[0, 0, 2])),
            (at(&[0, 2, 0]), at(&[0, 0, 2])),
            (at(&[0, 0, 2]), at(&[1, 1, 0])),
            (at(&[1, 1, 0]), at(&[0, 1, 1])),
            (at(&[0, 1, 1]), at(&[1, 0, 1])),
            (at(&[1, 0, 1]), at(&[0, 2, 0])),
        ]
        .iter()
        .map(|&(i, j)| (i.min(j), i.max(j)))
        .collect();
        let got: BTreeSet<(usize, usize)> = g.edges().into_iter().collect();
        assert_eq!(got, expect);
        assert_eq!(g.num_edges(), 7);
    }

    #[test]
    fn full_support_gives_the_complete_graph() {
        let s = Support::from_exponents(2, 4, poly::exponents_of_degree(2, 4)).unwrap();
        let b = standard_basis(2, 2).unwrap();
        let g = tsp_graph(&s, &b);
        assert_eq!(g.num_edges(), 3);
    }

    #[test]
    fn square_only_support_is_edgeless() {
        let s = support_of(2, &[&[2, 0], &[0, 2]]);
        let b = standard_basis(2, 1).unwrap();
        let g = tsp_graph(&s, &b);
        assert_eq!(g.num_edges(), 0);
    }

    #[test]
    fn coupled_quartic_extension_stays_small() {
        let (s, b) = coupled_quartic();
        let g = tsp_graph(&s, &b);
        let ext = chordal_extension(&g);
        assert!(ext.fill_edges.len() <= 2, "fills: {:?}", ext.fill_edges);
        assert!(is_chordal(&ext.graph));
        // Supergraph check.
        for (i, j) in g.edges() {
            assert!(ext.graph.has_edge(i, j));
        }
        let dec = maximal_cliques(&ext).unwrap();
        assert_eq!(dec.mb, 3);
        assert_eq!(dec.cliques.len(), 4);
        assert!(dec.cliques.iter().all(|c| c.len() == 3));
    }

    #[test]
    fn chordal_inputs_need_no_fill() {
        // Star: x1 sums with everything, nothing else pairs up.
        let s = support_of(2, &[&[2, 0], &[1, 1]]);
        let b = standard_basis(2, 1).unwrap();
        let star = tsp_graph(&s, &b);
        assert_eq!(chordal_extension(&star).fill_edges.len(), 0);

        let full = Support::from_exponents(3, 2, poly::exponents_of_degree(3, 2)).unwrap();
        let complete = tsp_graph(&full, &standard_basis(3, 1).unwrap());
        assert_eq!(complete.num_edges(), 3);
        let ext = chordal_extension(&complete);
        assert_eq!(ext.fill_edges.len(), 0);
        let dec = maximal_cliques(&ext).unwrap();
        assert_eq!(dec.cliques.len(), 1);
        assert_eq!(dec.mb, 3);
    }

    #[test]
    fn four_cycle_needs_exactly_one_fill() {
        let s = support_of(2, &[&[1, 1, 0, 0], &[0, 1, 1, 0], &[0, 0, 1, 1], &[1, 0, 0, 1]]);
        let b = standard_basis(4, 1).unwrap();
        let g = tsp_graph(&s, &b);
        assert_eq!(g.num_edges(), 4);
        assert!(!is_chordal(&g));
        let ext = chordal_extension(&g);
        assert_eq!(ext.fill_edges.len(), 1);
        assert!(is_chordal(&ext.graph));
        let dec = maximal_cliques(&ext).unwrap();
        assert_eq!(dec.mb, 3);
        assert_eq!(dec.cliques.len(), 2);
    }

    #[test]
    fn edgeless_graph_decomposes_into_singletons() {
        let s = support_of(2, &[&[2, 0, 0, 0]]);
        let b = standard_basis(4, 1).unwrap();
        let g = tsp_graph(&s, &b);
        assert_eq!(g.num_edges(), 0);
        let dec = maximal_cliques(&chordal_extension(&g)).unwrap();
        assert_eq!(dec.cliques.len(), 4);
        assert_eq!(dec.mb, 1);
    }

    #[test]
    fn bad_elimination_order_is_reported() {
        // Path x1 - x2 - x3; eliminating the middle first leaves its two
        // neighbors unconnected.
        let s = support_of(2, &[&[1, 1, 0], &[0, 1, 1]]);
        let b = standard_basis(3, 1).unwrap();
        let g = tsp_graph(&s, &b);
        let broken = ChordalExtension {
            graph: g,
            elimination_order: vec![1, 0, 2],
            fill_edges: vec![],
        };
        assert!(matches!(
            maximal_cliques(&broken),
            Err(TsGraphError::NotPerfectElimination { node: 1 })
        ));
    }

    fn assert_decomposition_invariants(g: &TspGraph, ext: &ChordalExtension) {
        assert!(is_chordal(&ext.graph));
        for (i, j) in g.edges() {
            assert!(ext.graph.has_edge(i, j), "lost edge ({i},{j})");
        }
        let dec = maximal_cliques(ext).unwrap();
        // Every node and extended edge is covered by some clique.
        let mut node_cover = vec![false; g.len()];
        for c in &dec.cliques {
            for &v in c {
                node_cover[v] = true;
            }
        }
        assert!(node_cover.iter().all(|&c| c));
        for (i, j) in ext.graph.edges() {
            assert!(
                dec.cliques
                    .iter()
                    .any(|c| c.binary_search(&i).is_ok() && c.binary_search(&j).is_ok()),
                "edge ({i},{j}) not inside any clique"
            );
        }
        // Cliques really are cliques, pairwise non-contained.
        for c in &dec.cliques {
            for (ai, &a) in c.iter().enumerate() {
                for &b in &c[ai + 1..] {
                    assert!(ext.graph.has_edge(a, b));
                }
            }
        }
        for (x, cx) in dec.cliques.iter().enumerate() {
            for (y, cy) in dec.cliques.iter().enumerate() {
                if x != y {
                    assert!(!cx.iter().all(|v| cy.binary_search(v).is_ok()));
                }
            }
        }
        // Running intersection.
        for k in 1..dec.cliques.len() {
            let seen: BTreeSet<usize> = dec.cliques[..k].iter().flatten().copied().collect();
            let inter: Vec<usize> = dec.cliques[k]
                .iter()
                .copied()
                .filter(|v| seen.contains(v))
                .collect();
            if inter.is_empty() {
                continue;
            }
            assert!(
                dec.cliques[..k]
                    .iter()
                    .any(|c| inter.iter().all(|v| c.binary_search(v).is_ok())),
                "running intersection fails at clique {k}"
            );
        }
        assert_eq!(dec.mb, dec.cliques.iter().map(Vec::len).max().unwrap());
    }

    #[test]
    fn random_supports_yield_valid_decompositions() {
        let mut rng = crate::rng::Rng::from_seed(14);
        for _ in 0..20 {
            let n = 8;
            let all = poly::exponents_of_degree(n, 2);
            let picked: Vec<Exponent> = all
                .iter()
                .filter(|_| rng.next_f64() < 0.25)
                .cloned()
                .collect();
            let s = Support::from_exponents(n, 2, picked).unwrap();
            let b = standard_basis(n, 1).unwrap();
            let g = tsp_graph(&s, &b);
            let ext = chordal_extension(&g);
            assert_decomposition_invariants(&g, &ext);
        }
    }

    #[test]
    fn benchmark_sized_blocks_stay_well_below_dense() {
        for seed in 0..20u64 {
            let set = crate::matio::random_sparse_set(20, 2, 30, seed).unwrap();
            let h =
                poly::support_hierarchy(&set.dense_all(), 1, 1, ComposeMode::Symbolic).unwrap();
            let b = standard_basis(20, 1).unwrap();
            let g = tsp_graph(&h.levels[1], &b);
            let dec = maximal_cliques(&chordal_extension(&g)).unwrap();
            assert!(dec.mb < 20, "seed {seed}: mb {}", dec.mb);
            assert!(dec.mb <= 16, "seed {seed}: mb {}", dec.mb);
        }
    }
}
