//! Relation-typed code hierarchy with jump connections.
//!
//! Every code is a fixed-width string whose `k`-th character refines the
//! concept named by its first `k - 1` characters. Internal nodes are the
//! distinct proper prefixes; the empty prefix is the root (level 1). A tree
//! edge between a level-`k` node and its child has relation `k`. Jump edges
//! link each leaf to every ancestor: the edge to the ancestor at level `l`
//! has relation `d + l`, where `d` is the code width.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::numeric::Rng;
use crate::{Error, Result};

/// Relation id, `1..=2d`.
pub type Relation = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeNode {
    pub id: usize,
    /// Prefix spelled by the path from the root; the full code for leaves.
    pub prefix: String,
    /// Root is level 1.
    pub level: usize,
    pub is_leaf: bool,
    pub parent: Option<usize>,
}

impl CodeNode {
    /// The observable code, for leaves only.
    pub fn code(&self) -> Option<&str> {
        self.is_leaf.then_some(self.prefix.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct TypedEdge {
    pub src: usize,
    pub dst: usize,
    pub relation: Relation,
}

/// Immutable hierarchy graph.
#[derive(Debug, Clone, PartialEq)]
pub struct OntologyGraph {
    nodes: Vec<CodeNode>,
    edges: Vec<TypedEdge>,
    children: Vec<Vec<usize>>,
    depth: usize,
    has_jumps: bool,
    leaf_index: BTreeMap<String, usize>,
    leaves: Vec<usize>,
    /// Per node: `(relation, sorted neighbours)` for every relation with at
    /// least one neighbour, ascending by relation.
    adjacency: Vec<Vec<(Relation, Vec<usize>)>>,
}

impl OntologyGraph {
    /// Builds the tree (no jump connections) from leaf codes.
    pub fn build_tree<S: AsRef<str>>(codes: &[S]) -> Result<Self> {
        let first = codes
            .first()
            .ok_or_else(|| Error::Ontology("empty code list".to_string()))?;
        let depth = first.as_ref().chars().count();
        if depth == 0 {
            return Err(Error::Ontology("empty code string".to_string()));
        }
        let mut leaf_set = BTreeSet::new();
        for code in codes {
            let code = code.as_ref();
            let len = code.chars().count();
            if len != depth {
                return Err(Error::Ontology(format!(
                    "code {code:?} has length {len}, expected {depth}"
                )));
            }
            if !leaf_set.insert(code.to_string()) {
                return Err(Error::Ontology(format!("duplicate code {code:?}")));
            }
        }

        // prefixes per level, sorted; level index 0 is the root
        let mut levels: Vec<BTreeSet<String>> = vec![BTreeSet::new(); depth + 1];
        levels[0].insert(String::new());
        for code in &leaf_set {
            let mut prefix = String::new();
            for (k, ch) in code.chars().enumerate() {
                prefix.push(ch);
                levels[k + 1].insert(prefix.clone());
            }
        }

        let mut nodes = Vec::new();
        let mut id_of: BTreeMap<String, usize> = BTreeMap::new();
        for (k, level) in levels.iter().enumerate() {
            for prefix in level {
                let id = nodes.len();
                let parent = if k == 0 {
                    None
                } else {
                    let mut p = prefix.clone();
                    p.pop();
                    Some(id_of[&p])
                };
                nodes.push(CodeNode {
                    id,
                    prefix: prefix.clone(),
                    level: k + 1,
                    is_leaf: k == depth,
                    parent,
                });
                id_of.insert(prefix.clone(), id);
            }
        }

        let mut children = vec![Vec::new(); nodes.len()];
        let mut edges = Vec::new();
        for node in &nodes {
            if let Some(p) = node.parent {
                children[p].push(node.id);
                edges.push(TypedEdge {
                    src: p,
                    dst: node.id,
                    relation: nodes[p].level,
                });
            }
        }
        let leaves: Vec<usize> = nodes.iter().filter(|n| n.is_leaf).map(|n| n.id).collect();
        let leaf_index = leaves
            .iter()
            .map(|&id| (nodes[id].prefix.clone(), id))
            .collect();

        let mut g = OntologyGraph {
            nodes,
            edges,
            children,
            depth,
            has_jumps: false,
            leaf_index,
            leaves,
            adjacency: Vec::new(),
        };
        g.rebuild_adjacency();
        Ok(g)
    }

    /// Adds one edge from each leaf to each of its ancestors.
    pub fn add_jump_connections(mut self) -> Result<Self> {
        if self.has_jumps {
            return Err(Error::Ontology("jumps already present".to_string()));
        }
        for &leaf in &self.leaves {
            let mut cursor = self.nodes[leaf].parent;
            while let Some(anc) = cursor {
                self.edges.push(TypedEdge {
                    src: leaf,
                    dst: anc,
                    relation: self.depth + self.nodes[anc].level,
                });
                cursor = self.nodes[anc].parent;
            }
        }
        self.has_jumps = true;
        self.rebuild_adjacency();
        Ok(self)
    }

    /// `build_tree` followed by `add_jump_connections`.
    pub fn build<S: AsRef<str>>(codes: &[S]) -> Result<Self> {
        Self::build_tree(codes)?.add_jump_connections()
    }

    fn rebuild_adjacency(&mut self) {
        let mut adj: Vec<BTreeMap<Relation, BTreeSet<usize>>> =
            vec![BTreeMap::new(); self.nodes.len()];
        for e in &self.edges {
            adj[e.src].entry(e.relation).or_default().insert(e.dst);
            adj[e.dst].entry(e.relation).or_default().insert(e.src);
        }
        self.adjacency = adj
            .into_iter()
            .map(|m| {
                m.into_iter()
                    .map(|(r, set)| (r, set.into_iter().collect()))
                    .collect()
            })
            .collect();
    }

    pub fn nodes(&self) -> &[CodeNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &CodeNode {
        &self.nodes[id]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edges(&self) -> &[TypedEdge] {
        &self.edges
    }

    /// Number of edge levels `d` (code width).
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Size of the relation space, `2d`, whether or not jumps are present.
    pub fn relation_count(&self) -> usize {
        2 * self.depth
    }

    pub fn has_jumps(&self) -> bool {
        self.has_jumps
    }

    pub fn root(&self) -> usize {
        0
    }

    /// Leaf ids, ascending.
    pub fn leaves(&self) -> &[usize] {
        &self.leaves
    }

    pub fn leaf_index(&self) -> &BTreeMap<String, usize> {
        &self.leaf_index
    }

    pub fn leaf_id(&self, code: &str) -> Option<usize> {
        self.leaf_index.get(code).copied()
    }

    pub fn children(&self, id: usize) -> &[usize] {
        &self.children[id]
    }

    /// Every relation incident to `u` with its (non-empty) neighbour list.
    pub fn relations_of(&self, u: usize) -> &[(Relation, Vec<usize>)] {
        &self.adjacency[u]
    }

    /// `N_u^r`: neighbours of `u` under relation `r`, ascending. Edges are
    /// traversed in both directions.
    pub fn neighbors_by_relation(&self, u: usize, r: Relation) -> Result<&[usize]> {
        if u >= self.nodes.len() {
            return Err(Error::Ontology(format!("node id {u} out of range")));
        }
        if r == 0 || r > self.relation_count() {
            return Err(Error::Ontology(format!(
                "relation {r} outside 1..={}",
                self.relation_count()
            )));
        }
        Ok(self.adjacency[u]
            .iter()
            .find(|(rel, _)| *rel == r)
            .map_or(&[][..], |(_, n)| n.as_slice()))
    }

    /// Leaves in the subtree rooted at `id`, ascending.
    pub fn leaves_under(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            if self.nodes[n].is_leaf {
                out.push(n);
            }
            stack.extend_from_slice(&self.children[n]);
        }
        out.sort_unstable();
        out
    }

    /// Nodes at a given level (root = 1), ascending.
    pub fn nodes_at_level(&self, level: usize) -> Vec<usize> {
        self.nodes
            .iter()
            .filter(|n| n.level == level)
            .map(|n| n.id)
            .collect()
    }

    /// Breadth-first hop counts from `src`, treating every edge as undirected.
    pub fn hop_distances(&self, src: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.nodes.len()];
        let mut queue = alloc::collections::VecDeque::new();
        dist[src] = Some(0);
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            for (_, nbrs) in &self.adjacency[u] {
                for &v in nbrs {
                    if dist[v].is_none() {
                        dist[v] = Some(du + 1);
                        queue.push_back(v);
                    }
                }
            }
        }
        dist
    }

    /// Same graph with node ids permuted by `perm` (old id -> new id). Only
    /// message-passing structure is relabelled; prefixes are kept.
    pub fn relabeled(&self, perm: &[usize]) -> OntologyGraph {
        assert_eq!(perm.len(), self.nodes.len());
        let mut nodes = self.nodes.clone();
        for n in &mut nodes {
            n.id = perm[n.id];
            n.parent = n.parent.map(|p| perm[p]);
        }
        nodes.sort_by_key(|n| n.id);
        let mut children = vec![Vec::new(); nodes.len()];
        for (old, ch) in self.children.iter().enumerate() {
            children[perm[old]] = ch.iter().map(|&c| perm[c]).collect();
        }
        let edges = self
            .edges
            .iter()
            .map(|e| TypedEdge {
                src: perm[e.src],
                dst: perm[e.dst],
                relation: e.relation,
            })
            .collect();
        let mut leaves: Vec<usize> = self.leaves.iter().map(|&l| perm[l]).collect();
        leaves.sort_unstable();
        let leaf_index = self
            .leaf_index
            .iter()
            .map(|(k, &v)| (k.clone(), perm[v]))
            .collect();
        let mut g = OntologyGraph {
            nodes,
            edges,
            children,
            depth: self.depth,
            has_jumps: self.has_jumps,
            leaf_index,
            leaves,
            adjacency: Vec::new(),
        };
        g.rebuild_adjacency();
        g
    }
}

const SYMBOLS: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

/// Random prefix-structured code list. A node at level `k` gets between
/// `ceil(b_k / 2)` and `b_k` children, with symbols drawn without
/// replacement; `branching.len()` is the code width.
pub fn generate_codes(branching: &[usize], seed: u64) -> Result<Vec<String>> {
    if branching.is_empty() {
        return Err(Error::Ontology("depth must be at least 1".to_string()));
    }
    if let Some(&b) = branching
        .iter()
        .find(|&&b| b == 0 || b > SYMBOLS.len())
    {
        return Err(Error::Ontology(format!(
            "branching factor {b} outside 1..={}",
            SYMBOLS.len()
        )));
    }
    let mut rng = Rng::new(seed, 0x6f6e746f);
    let mut frontier = vec![String::new()];
    for &b in branching {
        let mut next = Vec::new();
        for prefix in &frontier {
            let count = rng.int_inclusive(b.div_ceil(2), b);
            let mut symbols: Vec<u8> = SYMBOLS[..b].to_vec();
            rng.shuffle(&mut symbols);
            let mut chosen: Vec<u8> = symbols[..count].to_vec();
            chosen.sort_unstable();
            for s in chosen {
                let mut p = prefix.clone();
                p.push(s as char);
                next.push(p);
            }
        }
        frontier = next;
    }
    Ok(frontier)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf_pair_max_distance(g: &OntologyGraph) -> usize {
        let mut worst = 0;
        for &u in g.leaves() {
            let d = g.hop_distances(u);
            for &v in g.leaves() {
                if u != v {
                    worst = worst.max(d[v].expect("connected"));
                }
            }
        }
        worst
    }

    #[test]
    fn small_tree() {
        let g = OntologyGraph::build_tree(&["AA", "AB", "BA"]).unwrap();
        assert_eq!(g.node_count(), 6);
        let prefixes: Vec<&str> = g.nodes().iter().map(|n| n.prefix.as_str()).collect();
        assert_eq!(prefixes, ["", "A", "B", "AA", "AB", "BA"]);
        let mut rels: Vec<usize> = g.edges().iter().map(|e| e.relation).collect();
        rels.sort_unstable();
        assert_eq!(rels, [1, 1, 2, 2, 2]);
        assert_eq!(g.leaf_id("AB"), Some(4));
        assert_eq!(g.node(4).code(), Some("AB"));
        assert_eq!(g.node(1).code(), None);
    }

    #[test]
    fn single_code() {
        let g = OntologyGraph::build_tree(&["X"]).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edges(), &[TypedEdge { src: 0, dst: 1, relation: 1 }]);
    }

    #[test]
    fn seven_character_codes_give_eight_levels() {
        let g = OntologyGraph::build_tree(&["0016070", "0016071", "02H633Z"]).unwrap();
        let max_level = g.nodes().iter().map(|n| n.level).max().unwrap();
        assert_eq!(max_level, 8);
        assert_eq!(g.relation_count(), 14);
    }

    #[test]
    fn rejects_bad_input() {
        let empty: [&str; 0] = [];
        assert!(OntologyGraph::build_tree(&empty).is_err());
        let e = OntologyGraph::build_tree(&["AB", "AB"]).unwrap_err();
        assert!(format!("{e}").contains("\"AB\""));
        let e = OntologyGraph::build_tree(&["AB", "ABC"]).unwrap_err();
        assert!(format!("{e}").contains("\"ABC\""));
    }

    #[test]
    fn jump_relations_for_icd10_width() {
        let g = OntologyGraph::build(&["0016070", "0DB58ZX"]).unwrap();
        let leaf = g.leaf_id("0016070").unwrap();
        let jumps: Vec<&TypedEdge> = g.edges().iter().filter(|e| e.src == leaf && e.relation > 7).collect();
        assert_eq!(jumps.len(), 7);
        let to_root = jumps.iter().find(|e| e.dst == g.root()).unwrap();
        assert_eq!(to_root.relation, 8);
        let level3 = jumps.iter().find(|e| g.node(e.dst).level == 3).unwrap();
        assert_eq!(level3.relation, 10);
        assert_eq!(g.node(level3.dst).prefix, "00");
    }

    #[test]
    fn depth_two_jumps_by_hand() {
        let codes = ["AA", "AB", "BA", "BB", "CA", "CB", "CC"];
        let g = OntologyGraph::build(&codes).unwrap();
        for &leaf in g.leaves() {
            let mut jumps: Vec<(usize, usize)> = g
                .edges()
                .iter()
                .filter(|e| e.src == leaf && e.relation > 2)
                .map(|e| (e.relation, e.dst))
                .collect();
            jumps.sort_unstable();
            let parent = g.node(leaf).parent.unwrap();
            assert_eq!(jumps, [(3, 0), (4, parent)]);
        }
        assert!(OntologyGraph::build(&codes).unwrap().add_jump_connections().is_err());
    }

    #[test]
    fn neighbours_by_relation() {
        let g = OntologyGraph::build(&["AAA", "AAB", "ABA", "BAA"]).unwrap();
        let d = g.depth();
        let level2 = g.nodes_at_level(2);
        assert_eq!(g.neighbors_by_relation(0, 1).unwrap(), level2.as_slice());
        assert_eq!(g.neighbors_by_relation(0, d + 1).unwrap(), g.leaves());
        let leaf = g.leaf_id("ABA").unwrap();
        // hand enumeration: ancestors "", "A", "AB"
        let a = g.nodes().iter().find(|n| n.prefix == "A").unwrap().id;
        let ab = g.nodes().iter().find(|n| n.prefix == "AB").unwrap().id;
        assert_eq!(g.neighbors_by_relation(leaf, d + 1).unwrap(), &[0]);
        assert_eq!(g.neighbors_by_relation(leaf, d + 2).unwrap(), &[a]);
        assert_eq!(g.neighbors_by_relation(leaf, d + 3).unwrap(), &[ab]);
        assert_eq!(g.neighbors_by_relation(leaf, d).unwrap(), &[ab]);
        assert!(g.neighbors_by_relation(leaf, 1).unwrap().is_empty());
        assert!(g.neighbors_by_relation(leaf, 0).is_err());
        assert!(g.neighbors_by_relation(leaf, 2 * d + 1).is_err());
        assert!(g.neighbors_by_relation(99, 1).is_err());
    }

    #[test]
    fn leaf_distance_is_two_with_jumps() {
        let codes = generate_codes(&[3, 3, 2, 2], 4).unwrap();
        let tree = OntologyGraph::build_tree(&codes).unwrap();
        assert!(leaf_pair_max_distance(&tree) > 2);
        let g = tree.add_jump_connections().unwrap();
        assert_eq!(leaf_pair_max_distance(&g), 2);
    }

    #[test]
    fn relation_histogram() {
        let codes = generate_codes(&[4, 3, 3], 1).unwrap();
        let g = OntologyGraph::build(&codes).unwrap();
        let d = g.depth();
        let mut hist = vec![0usize; 2 * d + 1];
        for e in g.edges() {
            hist[e.relation] += 1;
        }
        for k in 1..=d {
            assert_eq!(hist[k], g.nodes_at_level(k + 1).len());
            assert_eq!(hist[d + k], g.leaves().len());
        }
    }

    #[test]
    fn deterministic_construction() {
        let codes = generate_codes(&[3, 4, 2], 9).unwrap();
        assert_eq!(codes, generate_codes(&[3, 4, 2], 9).unwrap());
        let mut shuffled = codes.clone();
        shuffled.reverse();
        assert_eq!(
            OntologyGraph::build(&codes).unwrap(),
            OntologyGraph::build(&shuffled).unwrap()
        );
    }

    #[test]
    fn generator_respects_branching_bounds() {
        let codes = generate_codes(&[5, 4], 2).unwrap();
        let g = OntologyGraph::build_tree(&codes).unwrap();
        for n in g.nodes().iter().filter(|n| !n.is_leaf) {
            let b: usize = [5, 4][n.level - 1];
            let c = g.children(n.id).len();
            assert!(c >= b.div_ceil(2) && c <= b, "{c} children under branching {b}");
        }
        assert!(generate_codes(&[], 0).is_err());
        assert!(generate_codes(&[0], 0).is_err());
    }
}
