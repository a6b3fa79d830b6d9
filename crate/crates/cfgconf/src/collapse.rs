//! Function collapsing: pick functions to collapse by rule and heuristic,
//! then rewrite the graph with per-call-site proxy nodes.
//!
//! A collapsed function's drawn nodes disappear; each call site gets a small
//! proxy node (rendered as a dashed box) carrying at most one incoming call
//! edge and one outgoing return edge. Call and return edges are paired when
//! their external endpoints belong to the same function; unpaired edges get
//! singleton proxies.

use std::collections::{BTreeMap, BTreeSet};

use crate::diagnostics::Diagnostics;
use crate::filter::{BoundaryGroup, FilteredGraph};
use crate::graph_model::{Cfg, EdgeId, NodeId};
use crate::spec_model::{CollapseSize, CollapsingRules};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollapseReason {
    AlwaysList,
    DegreeHeuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExemptReason {
    NeverList,
    ContainsLoop,
    TooLarge,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CollapsePlan {
    /// Function ids, ordered.
    pub collapsed: Vec<String>,
    pub reason: BTreeMap<String, CollapseReason>,
    pub exempted: BTreeMap<String, ExemptReason>,
}

/// One drawn stand-in for a collapsed function at a call site.
#[derive(Debug, Clone, PartialEq)]
pub struct Proxy {
    pub id: String,
    pub function_id: String,
    /// Drawn label: the function name.
    pub label: String,
    pub call_edge: Option<EdgeId>,
    pub return_edge: Option<EdgeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Endpoint {
    Node(NodeId),
    /// Index into `CollapsedGraph::proxies`.
    Proxy(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewrittenEdge {
    pub source: Endpoint,
    pub target: Endpoint,
    /// Originating cfg edge (carries style and back-edge flag).
    pub cfg_edge: EdgeId,
}

/// Boundary group re-anchored after collapsing.
#[derive(Debug, Clone, PartialEq)]
pub struct CollapsedBoundary {
    pub anchor: Endpoint,
    pub group: BoundaryGroup,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CollapsedGraph {
    pub surviving: BTreeSet<NodeId>,
    pub removed_nodes: BTreeSet<NodeId>,
    pub proxies: Vec<Proxy>,
    pub rewritten_edges: Vec<RewrittenEdge>,
    pub boundary_groups: Vec<CollapsedBoundary>,
}

/// Decide which functions to collapse.
///
/// Precedence: neverCollapseList > alwaysCollapseList > loop exemption >
/// size cap > degree heuristic. Explicit lists are user overrides; a
/// function forced to collapse despite containing a loop gets a warning.
pub fn plan_collapse(
    filtered: &FilteredGraph,
    cfg: &Cfg,
    rules: &CollapsingRules,
) -> (CollapsePlan, Diagnostics) {
    let mut plan = CollapsePlan::default();
    let mut diags = Diagnostics::new();

    let loop_nodes: BTreeSet<NodeId> = cfg
        .loop_tree
        .loops
        .values()
        .flat_map(|l| l.members.iter().copied())
        .collect();

    let active: Vec<(&String, BTreeSet<NodeId>)> = cfg
        .functions
        .iter()
        .map(|(id, info)| {
            (id, info.members.intersection(&filtered.included).copied().collect::<BTreeSet<_>>())
        })
        .filter(|(_, members)| !members.is_empty())
        .collect();

    let active_names: BTreeSet<&str> = active
        .iter()
        .map(|(id, _)| cfg.functions[id.as_str()].name.as_str())
        .collect();
    for name in rules.always_collapse.iter().chain(&rules.never_collapse) {
        if !active_names.contains(name.as_str()) {
            diags.warning(
                "/rendering/function/collapsingRules",
                format!("collapsing rule names function \"{name}\" which is absent from the drawn graph"),
            );
        }
    }

    let graph_size = filtered.included.len();
    for (fid, members) in active {
        let name = cfg.functions[fid.as_str()].name.as_str();
        if rules.never_collapse.iter().any(|n| n == name) {
            plan.exempted.insert(fid.clone(), ExemptReason::NeverList);
            continue;
        }
        let contains_loop = members.iter().any(|m| loop_nodes.contains(m));
        if rules.always_collapse.iter().any(|n| n == name) {
            if contains_loop {
                diags.warning(
                    "/rendering/function/collapsingRules",
                    format!("function \"{name}\" contains a loop but is collapsed because it is in alwaysCollapseList"),
                );
            }
            plan.collapsed.push(fid.clone());
            plan.reason.insert(fid.clone(), CollapseReason::AlwaysList);
            continue;
        }
        if contains_loop {
            plan.exempted.insert(fid.clone(), ExemptReason::ContainsLoop);
            continue;
        }
        let too_large = match &rules.max_collapse_size {
            Some(CollapseSize::Absolute(k)) => members.len() > *k as usize,
            Some(CollapseSize::Percent(p)) => {
                // "25p" collapses only functions under 25% of the filtered graph
                (members.len() as f64) * 100.0 >= *p * graph_size as f64
            }
            None => false,
        };
        if too_large {
            plan.exempted.insert(fid.clone(), ExemptReason::TooLarge);
            continue;
        }
        if rules.min_incoming_edges.is_none() && rules.min_outgoing_edges.is_none() {
            continue; // untouched: no heuristic configured
        }
        let mut in_deg: BTreeMap<NodeId, usize> = BTreeMap::new();
        let mut out_deg: BTreeMap<NodeId, usize> = BTreeMap::new();
        for &ei in &filtered.induced_edges {
            let e = &cfg.edges[ei];
            if members.contains(&e.target) && !members.contains(&e.source) {
                *in_deg.entry(e.target).or_default() += 1;
            }
            if members.contains(&e.source) && !members.contains(&e.target) {
                *out_deg.entry(e.source).or_default() += 1;
            }
        }
        let hit_in = rules
            .min_incoming_edges
            .map(|k| in_deg.values().any(|&d| d >= k as usize))
            .unwrap_or(false);
        let hit_out = rules
            .min_outgoing_edges
            .map(|k| out_deg.values().any(|&d| d >= k as usize))
            .unwrap_or(false);
        if hit_in || hit_out {
            plan.collapsed.push(fid.clone());
            plan.reason.insert(fid.clone(), CollapseReason::DegreeHeuristic);
        }
    }

    (plan, diags)
}

/// Rewrite the filtered graph according to a collapse plan.
pub fn apply_collapse(
    filtered: &FilteredGraph,
    cfg: &Cfg,
    plan: &CollapsePlan,
) -> (CollapsedGraph, Diagnostics) {
    let mut diags = Diagnostics::new();

    let mut removed: BTreeSet<NodeId> = BTreeSet::new();
    for fid in &plan.collapsed {
        removed.extend(
            cfg.functions[fid.as_str()].members.intersection(&filtered.included).copied(),
        );
    }
    let surviving: BTreeSet<NodeId> =
        filtered.included.difference(&removed).copied().collect();

    let mut out = CollapsedGraph {
        surviving: surviving.clone(),
        removed_nodes: removed.clone(),
        ..Default::default()
    };

    // untouched edges first
    for &ei in &filtered.induced_edges {
        let e = &cfg.edges[ei];
        if surviving.contains(&e.source) && surviving.contains(&e.target) {
            out.rewritten_edges.push(RewrittenEdge {
                source: Endpoint::Node(e.source),
                target: Endpoint::Node(e.target),
                cfg_edge: ei,
            });
        }
    }

    // proxy that absorbed an edge incident to each removed node, for
    // boundary-group transfer
    let mut absorbed_at: BTreeMap<NodeId, usize> = BTreeMap::new();
    let mut dropped_cross_edges = 0usize;

    for fid in &plan.collapsed {
        let members: BTreeSet<NodeId> = cfg.functions[fid.as_str()]
            .members
            .intersection(&filtered.included)
            .copied()
            .collect();
        let fn_name = cfg.functions[fid.as_str()].name.clone();

        let mut call_edges: Vec<EdgeId> = Vec::new();
        let mut return_edges: Vec<EdgeId> = Vec::new();
        for &ei in &filtered.induced_edges {
            let e = &cfg.edges[ei];
            let src_in = members.contains(&e.source);
            let tgt_in = members.contains(&e.target);
            if tgt_in && !src_in {
                if surviving.contains(&e.source) {
                    call_edges.push(ei);
                } else if removed.contains(&e.source) {
                    dropped_cross_edges += 1;
                }
            }
            if src_in && !tgt_in {
                if surviving.contains(&e.target) {
                    return_edges.push(ei);
                } else if removed.contains(&e.target) {
                    dropped_cross_edges += 1;
                }
            }
        }
        // pairing depends only on ids, not declaration order
        call_edges.sort_by_key(|&ei| (cfg.nodes[cfg.edges[ei].source].id.clone(), ei));
        return_edges.sort_by_key(|&ei| (cfg.nodes[cfg.edges[ei].target].id.clone(), ei));

        let mut return_taken = vec![false; return_edges.len()];
        let mut pairs: Vec<(Option<EdgeId>, Option<EdgeId>)> = Vec::new();
        for &call in &call_edges {
            let caller_fn = cfg.nodes[cfg.edges[call].source].function_id.as_deref();
            let slot = return_edges.iter().enumerate().find(|&(i, &ret)| {
                !return_taken[i]
                    && cfg.nodes[cfg.edges[ret].target].function_id.as_deref() == caller_fn
            });
            match slot {
                Some((i, &ret)) => {
                    return_taken[i] = true;
                    pairs.push((Some(call), Some(ret)));
                }
                None => pairs.push((Some(call), None)),
            }
        }
        for (i, &ret) in return_edges.iter().enumerate() {
            if !return_taken[i] {
                pairs.push((None, Some(ret)));
            }
        }

        for (k, (call, ret)) in pairs.iter().enumerate() {
            let proxy_idx = out.proxies.len();
            out.proxies.push(Proxy {
                id: format!("proxy:{fid}:{k}"),
                function_id: fid.clone(),
                label: fn_name.clone(),
                call_edge: *call,
                return_edge: *ret,
            });
            if let Some(ei) = call {
                let e = &cfg.edges[*ei];
                out.rewritten_edges.push(RewrittenEdge {
                    source: Endpoint::Node(e.source),
                    target: Endpoint::Proxy(proxy_idx),
                    cfg_edge: *ei,
                });
                absorbed_at.entry(e.target).or_insert(proxy_idx);
            }
            if let Some(ei) = ret {
                let e = &cfg.edges[*ei];
                out.rewritten_edges.push(RewrittenEdge {
                    source: Endpoint::Proxy(proxy_idx),
                    target: Endpoint::Node(e.target),
                    cfg_edge: *ei,
                });
                absorbed_at.entry(e.source).or_insert(proxy_idx);
            }
        }
    }

    if dropped_cross_edges > 0 {
        diags.warning(
            "/rendering/function/collapsingRules",
            format!("{dropped_cross_edges} edge(s) between collapsed functions were dropped"),
        );
    }

    for group in &filtered.boundary_groups {
        if surviving.contains(&group.anchor) {
            out.boundary_groups.push(CollapsedBoundary {
                anchor: Endpoint::Node(group.anchor),
                group: group.clone(),
            });
        } else if let Some(&proxy_idx) = absorbed_at.get(&group.anchor) {
            out.boundary_groups.push(CollapsedBoundary {
                anchor: Endpoint::Proxy(proxy_idx),
                group: group.clone(),
            });
        } else {
            diags.warning(
                "/rendering/function/collapsingRules",
                format!(
                    "boundary group on collapsed node \"{}\" has no absorbing proxy and was dropped",
                    cfg.nodes[group.anchor].id
                ),
            );
        }
    }

    (out, diags)
}
