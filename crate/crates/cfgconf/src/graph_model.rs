//! The validated in-memory CFG: nodes, edges, loop forest, function
//! partition, and back-edge annotations.
//!
//! Loop membership always comes from the specification (typically an
//! analysis file); loops are never detected from scratch. Headers may be
//! declared or inferred as the unique member with a predecessor outside the
//! loop. Irreducible loops (zero or several external entries) are reported
//! as errors unless the header or back edges are declared explicitly.

use std::collections::{BTreeMap, BTreeSet};

use crate::diagnostics::Diagnostics;
use crate::spec_model::{CfgInputs, LoopDecl, StyleMap};

pub type NodeId = usize;
pub type EdgeId = usize;

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: String,
    pub label: Option<String>,
    pub style: StyleMap,
    pub css_class: Option<String>,
    pub function_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub source: NodeId,
    pub target: NodeId,
    pub label: Option<String>,
    pub style: StyleMap,
    pub css_class: Option<String>,
    pub is_back_edge: bool,
    /// The loop whose header this back edge targets.
    pub back_edge_loop: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Loop {
    pub id: String,
    /// Resolved by `identify_back_edges`.
    pub header: Option<NodeId>,
    pub members: BTreeSet<NodeId>,
    pub back_edges: BTreeSet<EdgeId>,
    pub parent: Option<String>,
    pub children: Vec<String>,
    pub depth: u32,
    declared_header: Option<String>,
    declared_back_edges: Option<Vec<(String, String)>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoopTree {
    pub loops: BTreeMap<String, Loop>,
}

impl LoopTree {
    pub fn is_empty(&self) -> bool {
        self.loops.is_empty()
    }

    /// Loop ids ordered innermost first (deepest depth, then id).
    pub fn innermost_first(&self) -> Vec<&Loop> {
        let mut all: Vec<&Loop> = self.loops.values().collect();
        all.sort_by(|a, b| b.depth.cmp(&a.depth).then_with(|| a.id.cmp(&b.id)));
        all
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionInfo {
    pub name: String,
    pub members: BTreeSet<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Cfg {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub loop_tree: LoopTree,
    pub functions: BTreeMap<String, FunctionInfo>,
    node_index: BTreeMap<String, NodeId>,
}

impl Cfg {
    pub fn node_id(&self, id: &str) -> Option<NodeId> {
        self.node_index.get(id).copied()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Innermost declared loop containing the node, if any.
    pub fn innermost_loop_of(&self, node: NodeId) -> Option<&Loop> {
        self.loop_tree
            .loops
            .values()
            .filter(|l| l.members.contains(&node))
            .max_by_key(|l| (l.depth, std::cmp::Reverse(l.id.clone())))
    }
}

/// Assemble nodes, edges, and the function partition. Node and edge indexing
/// is deterministic: lexicographic by id, edges by (source, target) id pair.
pub fn build_graph(inputs: &CfgInputs) -> (Option<Cfg>, Diagnostics) {
    let mut diags = Diagnostics::new();

    let mut decls = inputs.nodes.clone();
    decls.sort_by(|a, b| a.id.cmp(&b.id));
    let mut node_index = BTreeMap::new();
    let mut nodes = Vec::new();
    for d in decls {
        if node_index.contains_key(&d.id) {
            diags.error("/data/nodes", format!("duplicate node id \"{}\" after merge", d.id));
            continue;
        }
        node_index.insert(d.id.clone(), nodes.len());
        nodes.push(Node {
            id: d.id,
            label: d.label,
            style: d.style,
            css_class: d.css_class,
            function_id: None,
        });
    }

    let mut functions = BTreeMap::new();
    for f in &inputs.functions {
        let mut members = BTreeSet::new();
        for nid in &f.nodes {
            match node_index.get(nid) {
                Some(&idx) => {
                    members.insert(idx);
                }
                None => diags.error(
                    "/data/functions",
                    format!("function \"{}\" references unknown node \"{nid}\"", f.name),
                ),
            }
        }
        for &idx in &members {
            let node: &mut Node = &mut nodes[idx];
            match &node.function_id {
                Some(other) if other != &f.id => diags.error(
                    "/data/functions",
                    format!(
                        "node \"{}\" claimed by both function \"{other}\" and \"{}\"",
                        node.id, f.id
                    ),
                ),
                _ => node.function_id = Some(f.id.clone()),
            }
        }
        functions.insert(f.id.clone(), FunctionInfo { name: f.name.clone(), members });
    }

    let mut edge_decls = inputs.edges.clone();
    edge_decls.sort_by(|a, b| (&a.source, &a.target).cmp(&(&b.source, &b.target)));
    let mut edges = Vec::new();
    for e in edge_decls {
        let src = node_index.get(&e.source).copied();
        let tgt = node_index.get(&e.target).copied();
        match (src, tgt) {
            (Some(s), Some(t)) => edges.push(Edge {
                source: s,
                target: t,
                label: e.label,
                style: e.style,
                css_class: e.css_class,
                is_back_edge: false,
                back_edge_loop: None,
            }),
            _ => {
                let missing = if src.is_none() { &e.source } else { &e.target };
                diags.error(
                    "/data/edges",
                    format!("edge {} -> {} references unknown node \"{missing}\"", e.source, e.target),
                );
            }
        }
    }

    if diags.has_errors() {
        return (None, diags);
    }
    (
        Some(Cfg {
            nodes,
            edges,
            loop_tree: LoopTree::default(),
            functions,
            node_index,
        }),
        diags,
    )
}

/// Build the loop forest from declared member sets. The parent of a loop is
/// the smallest strictly-containing loop; overlapping non-nested sets are an
/// error. Flat lists with containment and explicit nesting produce identical
/// trees.
pub fn infer_loop_nesting(loops: &[LoopDecl], cfg: &Cfg) -> Result<LoopTree, Diagnostics> {
    let mut diags = Diagnostics::new();
    let mut resolved: Vec<(String, BTreeSet<NodeId>, &LoopDecl)> = Vec::new();
    let mut seen_ids = BTreeSet::new();

    for decl in loops {
        if !seen_ids.insert(decl.id.clone()) {
            diags.error("/data/loops", format!("duplicate loop id \"{}\"", decl.id));
            continue;
        }
        let mut members = BTreeSet::new();
        for nid in &decl.nodes {
            match cfg.node_id(nid) {
                Some(idx) => {
                    members.insert(idx);
                }
                None => diags.error(
                    "/data/loops",
                    format!("loop \"{}\" references unknown node \"{nid}\"", decl.id),
                ),
            }
        }
        if members.is_empty() {
            diags.error("/data/loops", format!("loop \"{}\" has no known nodes", decl.id));
            continue;
        }
        resolved.push((decl.id.clone(), members, decl));
    }

    // forest condition: any two member sets are disjoint or strictly nested
    for i in 0..resolved.len() {
        for j in (i + 1)..resolved.len() {
            let (a_id, a, _) = &resolved[i];
            let (b_id, b, _) = &resolved[j];
            let inter = a.intersection(b).count();
            if inter == 0 {
                continue;
            }
            let nested = (inter == a.len() && a.len() < b.len())
                || (inter == b.len() && b.len() < a.len());
            if !nested {
                diags.error(
                    "/data/loops",
                    format!("loops \"{a_id}\" and \"{b_id}\" overlap without nesting"),
                );
            }
        }
    }
    if diags.has_errors() {
        return Err(diags);
    }

    let mut tree = LoopTree::default();
    for (id, members, decl) in &resolved {
        // parent = smallest strictly containing member set
        let parent = resolved
            .iter()
            .filter(|(oid, other, _)| {
                oid != id && members.len() < other.len() && members.is_subset(other)
            })
            .min_by_key(|(oid, other, _)| (other.len(), oid.clone()))
            .map(|(oid, _, _)| oid.clone());
        tree.loops.insert(
            id.clone(),
            Loop {
                id: id.clone(),
                header: None,
                members: members.clone(),
                back_edges: BTreeSet::new(),
                parent,
                children: Vec::new(),
                depth: 0,
                declared_header: decl.header.clone(),
                declared_back_edges: decl.back_edges.clone(),
            },
        );
    }

    let ids: Vec<String> = tree.loops.keys().cloned().collect();
    for id in &ids {
        if let Some(parent) = tree.loops[id].parent.clone() {
            tree.loops.get_mut(&parent).unwrap().children.push(id.clone());
        }
    }
    for id in &ids {
        let mut depth = 0;
        let mut cur = tree.loops[id].parent.clone();
        while let Some(p) = cur {
            depth += 1;
            cur = tree.loops[&p].parent.clone();
        }
        tree.loops.get_mut(id).unwrap().depth = depth;
    }
    Ok(tree)
}

/// Resolve each loop's header and mark its back edges on the graph.
///
/// Precedence per loop: declared back edges, then declared header, then the
/// unique-external-entry inference. Each edge becomes a back edge of at most
/// one loop (innermost first).
pub fn identify_back_edges(cfg: &mut Cfg, mut tree: LoopTree) -> Diagnostics {
    let mut diags = Diagnostics::new();
    let order: Vec<String> = tree.innermost_first().iter().map(|l| l.id.clone()).collect();

    for loop_id in order {
        let lp = tree.loops.get(&loop_id).unwrap().clone();
        let mut header: Option<NodeId> = None;
        let mut back_edges: BTreeSet<EdgeId> = BTreeSet::new();

        if let Some(declared) = &lp.declared_back_edges {
            for (src, tgt) in declared {
                let (s, t) = match (cfg.node_id(src), cfg.node_id(tgt)) {
                    (Some(s), Some(t)) => (s, t),
                    _ => {
                        diags.error(
                            "/data/loops",
                            format!("loop \"{loop_id}\": back edge {src} -> {tgt} names an unknown node"),
                        );
                        continue;
                    }
                };
                match header {
                    None => header = Some(t),
                    Some(h) if h != t => {
                        diags.error(
                            "/data/loops",
                            format!("loop \"{loop_id}\": declared back edges target different headers"),
                        );
                        continue;
                    }
                    _ => {}
                }
                let matching: Vec<EdgeId> = cfg
                    .edges
                    .iter()
                    .enumerate()
                    .filter(|(_, e)| e.source == s && e.target == t)
                    .map(|(i, _)| i)
                    .collect();
                if matching.is_empty() {
                    diags.error(
                        "/data/loops",
                        format!("loop \"{loop_id}\": declared back edge {src} -> {tgt} is not an edge"),
                    );
                }
                back_edges.extend(matching);
            }
            if let (Some(h), Some(declared_h)) = (header, lp.declared_header.as_ref()) {
                if cfg.node_id(declared_h) != Some(h) {
                    diags.error(
                        "/data/loops",
                        format!(
                            "loop \"{loop_id}\": declared header \"{declared_h}\" does not match back edge targets"
                        ),
                    );
                }
            }
        } else {
            header = match &lp.declared_header {
                Some(h) => cfg.node_id(h),
                None => {
                    // unique member with a predecessor outside the loop
                    let mut entries: Vec<NodeId> = Vec::new();
                    for e in &cfg.edges {
                        if lp.members.contains(&e.target) && !lp.members.contains(&e.source) {
                            if !entries.contains(&e.target) {
                                entries.push(e.target);
                            }
                        }
                    }
                    entries.sort();
                    if entries.len() == 1 {
                        Some(entries[0])
                    } else {
                        let names: Vec<&str> =
                            entries.iter().map(|&n| cfg.nodes[n].id.as_str()).collect();
                        diags.error(
                            "/data/loops",
                            format!(
                                "loop \"{loop_id}\": ambiguous header ({} external-entry candidates: [{}]); declare \"header\" or \"backEdges\"",
                                entries.len(),
                                names.join(", ")
                            ),
                        );
                        None
                    }
                }
            };
            if let Some(h) = header {
                for (i, e) in cfg.edges.iter().enumerate() {
                    if e.target == h && lp.members.contains(&e.source) && !e.is_back_edge {
                        back_edges.insert(i);
                    }
                }
            }
        }

        for &ei in &back_edges {
            // innermost loop wins; an edge is a back edge of one loop only
            if !cfg.edges[ei].is_back_edge {
                cfg.edges[ei].is_back_edge = true;
                cfg.edges[ei].back_edge_loop = Some(loop_id.clone());
            }
        }
        let lp = tree.loops.get_mut(&loop_id).unwrap();
        lp.header = header;
        lp.back_edges = back_edges
            .into_iter()
            .filter(|&ei| cfg.edges[ei].back_edge_loop.as_deref() == Some(loop_id.as_str()))
            .collect();
    }

    cfg.loop_tree = tree;
    diags
}

/// Full graph construction: assembly, loop nesting, back-edge analysis.
pub fn build_cfg(inputs: &CfgInputs) -> (Option<Cfg>, Diagnostics) {
    let (cfg, mut diags) = build_graph(inputs);
    let mut cfg = match cfg {
        Some(c) => c,
        None => return (None, diags),
    };
    let tree = match infer_loop_nesting(&inputs.loops, &cfg) {
        Ok(t) => t,
        Err(d) => {
            diags.extend(d);
            return (None, diags);
        }
    };
    diags.extend(identify_back_edges(&mut cfg, tree));
    if diags.has_errors() {
        return (None, diags);
    }
    (Some(cfg), diags)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec_model::{EdgeDecl, NodeDecl};

    fn node(id: &str) -> NodeDecl {
        NodeDecl { id: id.into(), ..Default::default() }
    }

    fn edge(s: &str, t: &str) -> EdgeDecl {
        EdgeDecl { source: s.into(), target: t.into(), ..Default::default() }
    }

    fn loop_decl(id: &str, nodes: &[&str]) -> LoopDecl {
        LoopDecl {
            id: id.into(),
            nodes: nodes.iter().map(|s| s.to_string()).collect(),
            header: None,
            back_edges: None,
        }
    }

    fn while_loop_inputs() -> CfgInputs {
        CfgInputs {
            nodes: vec![node("n1"), node("n2"), node("n3"), node("n4")],
            edges: vec![edge("n1", "n2"), edge("n2", "n3"), edge("n3", "n2"), edge("n2", "n4")],
            loops: vec![loop_decl("L0", &["n2", "n3"])],
            functions: vec![],
        }
    }

    #[test]
    fn two_nodes_one_edge() {
        let inputs = CfgInputs {
            nodes: vec![node("a"), node("b")],
            edges: vec![edge("a", "b")],
            ..Default::default()
        };
        let (cfg, diags) = build_cfg(&inputs);
        let cfg = cfg.unwrap();
        assert!(diags.is_empty());
        assert_eq!(cfg.node_count(), 2);
        assert_eq!(cfg.edge_count(), 1);
    }

    #[test]
    fn while_loop_counts() {
        let (cfg, _) = build_cfg(&while_loop_inputs());
        let cfg = cfg.unwrap();
        assert_eq!(cfg.node_count(), 4);
        assert_eq!(cfg.edge_count(), 4);
    }

    #[test]
    fn unknown_edge_endpoint_fails() {
        let inputs = CfgInputs {
            nodes: vec![node("a")],
            edges: vec![edge("a", "zz")],
            ..Default::default()
        };
        let (cfg, diags) = build_cfg(&inputs);
        assert!(cfg.is_none());
        assert!(diags.iter().any(|d| d.message.contains("zz")));
    }

    #[test]
    fn node_in_two_functions_fails() {
        let inputs = CfgInputs {
            nodes: vec![node("a"), node("b")],
            edges: vec![edge("a", "b")],
            loops: vec![],
            functions: vec![
                crate::spec_model::FunctionDecl { id: "f".into(), name: "f".into(), nodes: vec!["a".into()] },
                crate::spec_model::FunctionDecl { id: "g".into(), name: "g".into(), nodes: vec!["a".into()] },
            ],
        };
        let (cfg, diags) = build_cfg(&inputs);
        assert!(cfg.is_none());
        assert!(diags.has_errors());
    }

    #[test]
    fn nesting_by_containment() {
        let inputs = CfgInputs {
            nodes: vec![node("a"), node("b"), node("c"), node("d")],
            edges: vec![],
            ..Default::default()
        };
        let (cfg, _) = build_graph(&inputs);
        let cfg = cfg.unwrap();
        let tree = infer_loop_nesting(
            &[loop_decl("L1", &["a", "b", "c", "d"]), loop_decl("L2", &["b", "c"])],
            &cfg,
        )
        .unwrap();
        assert_eq!(tree.loops["L2"].parent.as_deref(), Some("L1"));
        assert_eq!(tree.loops["L2"].depth, 1);
        assert_eq!(tree.loops["L1"].depth, 0);
    }

    #[test]
    fn disjoint_loops_are_roots() {
        let inputs = CfgInputs {
            nodes: vec![node("a"), node("b"), node("c"), node("d")],
            ..Default::default()
        };
        let (cfg, _) = build_graph(&inputs);
        let cfg = cfg.unwrap();
        let tree =
            infer_loop_nesting(&[loop_decl("L1", &["a", "b"]), loop_decl("L2", &["c", "d"])], &cfg)
                .unwrap();
        assert!(tree.loops["L1"].parent.is_none());
        assert!(tree.loops["L2"].parent.is_none());
        assert_eq!(tree.loops["L1"].depth, 0);
    }

    #[test]
    fn overlapping_loops_fail() {
        let inputs = CfgInputs {
            nodes: vec![node("a"), node("b"), node("c")],
            ..Default::default()
        };
        let (cfg, _) = build_graph(&inputs);
        let cfg = cfg.unwrap();
        let err = infer_loop_nesting(&[loop_decl("L1", &["a", "b"]), loop_decl("L2", &["b", "c"])], &cfg)
            .unwrap_err();
        assert!(err.iter().any(|d| d.message.contains("overlap")));
    }

    #[test]
    fn while_loop_header_and_back_edge_inferred() {
        let (cfg, diags) = build_cfg(&while_loop_inputs());
        let cfg = cfg.unwrap();
        assert!(!diags.has_errors());
        let lp = &cfg.loop_tree.loops["L0"];
        assert_eq!(lp.header, cfg.node_id("n2"));
        assert_eq!(lp.back_edges.len(), 1);
        let be = &cfg.edges[*lp.back_edges.iter().next().unwrap()];
        assert_eq!(cfg.nodes[be.source].id, "n3");
        assert_eq!(cfg.nodes[be.target].id, "n2");
        assert!(be.is_back_edge);
    }

    #[test]
    fn declared_header_marks_member_edges() {
        let inputs = CfgInputs {
            nodes: vec![node("h"), node("x")],
            edges: vec![edge("x", "h")],
            loops: vec![LoopDecl {
                id: "L".into(),
                nodes: vec!["h".into(), "x".into()],
                header: Some("h".into()),
                back_edges: None,
            }],
            functions: vec![],
        };
        let (cfg, diags) = build_cfg(&inputs);
        let cfg = cfg.unwrap();
        assert!(!diags.has_errors());
        assert!(cfg.edges[0].is_back_edge);
    }

    #[test]
    fn ambiguous_header_is_error() {
        let inputs = CfgInputs {
            nodes: vec![node("a"), node("b"), node("p"), node("q")],
            edges: vec![edge("p", "a"), edge("q", "b"), edge("a", "b"), edge("b", "a")],
            loops: vec![loop_decl("L", &["a", "b"])],
            functions: vec![],
        };
        let (cfg, diags) = build_cfg(&inputs);
        assert!(cfg.is_none());
        assert!(diags.iter().any(|d| d.message.contains("ambiguous header")));
    }

    #[test]
    fn back_edge_belongs_to_innermost_loop() {
        // inner {b,c} with back edge c->b; outer {a,b,c} with back edge c->a
        let inputs = CfgInputs {
            nodes: vec![node("a"), node("b"), node("c"), node("z")],
            edges: vec![
                edge("z", "a"),
                edge("a", "b"),
                edge("b", "c"),
                edge("c", "b"),
                edge("c", "a"),
            ],
            loops: vec![loop_decl("outer", &["a", "b", "c"]), loop_decl("inner", &["b", "c"])],
            functions: vec![],
        };
        let (cfg, diags) = build_cfg(&inputs);
        let cfg = cfg.unwrap();
        assert!(!diags.has_errors(), "{:?}", diags);
        let inner = &cfg.loop_tree.loops["inner"];
        let outer = &cfg.loop_tree.loops["outer"];
        assert_eq!(inner.back_edges.len(), 1);
        assert_eq!(outer.back_edges.len(), 1);
        let inner_be = &cfg.edges[*inner.back_edges.iter().next().unwrap()];
        assert_eq!(inner_be.back_edge_loop.as_deref(), Some("inner"));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        /// Random nested loop forests: recursively split a node range into
        /// child loops. Returns (decls, parent relation by id).
        fn forest_strategy() -> impl Strategy<Value = (Vec<LoopDecl>, BTreeMap<String, Option<String>>)>
        {
            // node universe 0..24, up to 3 roots each with up to 2 children
            (1usize..4, proptest::collection::vec(1usize..3, 3))
                .prop_map(|(roots, child_counts)| {
                    let mut decls = Vec::new();
                    let mut parents = BTreeMap::new();
                    let span = 24 / roots;
                    for r in 0..roots {
                        let lo = r * span;
                        let hi = lo + span;
                        let root_id = format!("r{r}");
                        let nodes: Vec<String> = (lo..hi).map(|i| format!("n{i:02}")).collect();
                        decls.push(LoopDecl { id: root_id.clone(), nodes, header: None, back_edges: None });
                        parents.insert(root_id.clone(), None);
                        let kids = child_counts[r % child_counts.len()];
                        let child_span = span / (kids + 1);
                        for c in 0..kids {
                            if child_span == 0 {
                                continue;
                            }
                            let clo = lo + c * child_span;
                            let chi = clo + child_span;
                            let cid = format!("r{r}c{c}");
                            let nodes: Vec<String> =
                                (clo..chi).map(|i| format!("n{i:02}")).collect();
                            decls.push(LoopDecl { id: cid.clone(), nodes, header: None, back_edges: None });
                            parents.insert(cid, Some(root_id.clone()));
                        }
                    }
                    (decls, parents)
                })
        }

        proptest! {
            #[test]
            fn nesting_reconstructs_generated_forest((decls, parents) in forest_strategy()) {
                let inputs = CfgInputs {
                    nodes: (0..24).map(|i| NodeDecl { id: format!("n{i:02}"), ..Default::default() }).collect(),
                    ..Default::default()
                };
                let (cfg, _) = build_graph(&inputs);
                let cfg = cfg.unwrap();
                let tree = infer_loop_nesting(&decls, &cfg).unwrap();
                for (id, parent) in &parents {
                    prop_assert_eq!(&tree.loops[id].parent, parent);
                }
            }
        }

        proptest! {
            /// Removing marked back edges leaves each loop's induced
            /// subgraph acyclic (reducible single-entry fixtures).
            #[test]
            fn loop_minus_back_edges_is_acyclic(extra in proptest::collection::vec((0usize..6, 0usize..6), 0..8)) {
                // chain 0->1->...->5, loop {1..4} with back edge 4->1
                let mut edges = vec![
                    edge("n0", "n1"), edge("n1", "n2"), edge("n2", "n3"),
                    edge("n3", "n4"), edge("n4", "n1"), edge("n4", "n5"),
                ];
                // extra forward-only edges keep the fixture reducible
                for (a, b) in extra {
                    if a < b {
                        edges.push(edge(&format!("n{a}"), &format!("n{b}")));
                    }
                }
                let inputs = CfgInputs {
                    nodes: (0..6).map(|i| node(&format!("n{i}"))).collect(),
                    edges,
                    loops: vec![loop_decl("L", &["n1", "n2", "n3", "n4"])],
                    functions: vec![],
                };
                let (cfg, diags) = build_cfg(&inputs);
                prop_assume!(!diags.has_errors());
                let cfg = cfg.unwrap();
                let lp = &cfg.loop_tree.loops["L"];
                // cycle check on loop-induced subgraph minus back edges
                let members: Vec<NodeId> = lp.members.iter().copied().collect();
                let mut adj: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
                for e in &cfg.edges {
                    if !e.is_back_edge && lp.members.contains(&e.source) && lp.members.contains(&e.target) {
                        adj.entry(e.source).or_default().push(e.target);
                    }
                }
                // Kahn's algorithm
                let mut indeg: BTreeMap<NodeId, usize> = members.iter().map(|&m| (m, 0)).collect();
                for targets in adj.values() {
                    for &t in targets {
                        *indeg.get_mut(&t).unwrap() += 1;
                    }
                }
                let mut queue: Vec<NodeId> =
                    indeg.iter().filter(|(_, &d)| d == 0).map(|(&n, _)| n).collect();
                let mut visited = 0;
                while let Some(n) = queue.pop() {
                    visited += 1;
                    for &t in adj.get(&n).map(Vec::as_slice).unwrap_or(&[]) {
                        let d = indeg.get_mut(&t).unwrap();
                        *d -= 1;
                        if *d == 0 {
                            queue.push(t);
                        }
                    }
                }
                prop_assert_eq!(visited, members.len());
            }
        }

        proptest! {
            /// Every marked back edge stays inside its loop and targets the
            /// loop's header.
            #[test]
            fn back_edges_target_their_header(seed in 0u64..500) {
                let n = 8usize;
                let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
                let mut edges = Vec::new();
                // random forward edges + a loop over {2,3,4} with latch 4
                for _ in 0..10 {
                    x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    let a = (x >> 33) as usize % n;
                    x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    let b = (x >> 33) as usize % n;
                    if a < b {
                        edges.push(edge(&format!("n{a}"), &format!("n{b}")));
                    }
                }
                edges.push(edge("n1", "n2"));
                edges.push(edge("n2", "n3"));
                edges.push(edge("n3", "n4"));
                edges.push(edge("n4", "n2"));
                let inputs = CfgInputs {
                    nodes: (0..n).map(|i| node(&format!("n{i}"))).collect(),
                    edges,
                    loops: vec![LoopDecl {
                        id: "L".into(),
                        nodes: vec!["n2".into(), "n3".into(), "n4".into()],
                        header: Some("n2".into()),
                        back_edges: None,
                    }],
                    functions: vec![],
                };
                let (cfg, diags) = build_cfg(&inputs);
                prop_assume!(!diags.has_errors());
                let cfg = cfg.unwrap();
                for lp in cfg.loop_tree.loops.values() {
                    for &ei in &lp.back_edges {
                        let e = &cfg.edges[ei];
                        prop_assert!(lp.members.contains(&e.source));
                        prop_assert!(lp.members.contains(&e.target));
                        prop_assert_eq!(Some(e.target), lp.header);
                    }
                }
            }
        }
    }
}
