//! End-to-end wiring: spec text → resolved graph → filter → collapse →
//! drawn graph → layout → SVG/dot.
//!
//! The stages are exposed separately so embedders (and the CLI) can stop at
//! any point: `prepare` runs everything up to the drawn graph, and the
//! emit helpers serialize from there. The pipeline order is fixed:
//! filtering always precedes collapsing, which precedes layout.

use std::cell::RefCell;
use std::collections::BTreeMap;

use serde_json::{json, Value};
use thiserror::Error;

use crate::collapse::{apply_collapse, plan_collapse, CollapsePlan, CollapsedGraph, Endpoint};
use crate::diagnostics::{Diagnostic, Diagnostics};
use crate::dot_io::{emit_graph, AttrMap, EmitConfig, EmitEdge, EmitFunction, EmitGraph, EmitLoop, EmitMode};
use crate::filter::{apply_filter, Direction, FilteredGraph};
use crate::graph_model::{build_cfg, Cfg, NodeId};
use crate::layout::{
    layout, DrawBoundary, DrawEdge, DrawFunction, DrawGraph, DrawLoop, DrawNode, LayoutConfig,
    LayoutError, LayoutGeometry,
};
use crate::render::{options_from_spec, render_svg};
use crate::spec_model::{apply_defaults, parse_spec, resolve_files, FileLoader, LabelFrom, Spec};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("spec validation failed with {} error(s)", .0.iter().filter(|d| d.severity == crate::Severity::Error).count())]
    Validation(Vec<Diagnostic>),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    TooLarge(#[from] LayoutError),
}

impl PipelineError {
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        match self {
            PipelineError::Validation(d) => d.clone(),
            PipelineError::Io { path, message } => {
                vec![Diagnostic::error(path.clone(), message.clone())]
            }
            PipelineError::TooLarge(e) => vec![Diagnostic::error("/data", e.to_string())],
        }
    }
}

#[derive(Debug)]
pub struct Prepared {
    pub spec: Spec,
    pub cfg: Cfg,
    pub filtered: FilteredGraph,
    pub plan: CollapsePlan,
    pub collapsed: CollapsedGraph,
    pub draw: DrawGraph,
    /// Non-fatal diagnostics gathered along the way.
    pub diagnostics: Diagnostics,
}

/// Run every stage before layout.
pub fn prepare(spec_text: &str, loader: FileLoader) -> Result<Prepared, PipelineError> {
    let (spec, mut diags) = parse_spec(spec_text);
    let spec = match spec {
        Some(s) if !diags.has_errors() => apply_defaults(s),
        _ => return Err(PipelineError::Validation(diags.into_vec())),
    };

    // distinguish I/O failures from validation failures
    let io_failure: RefCell<Option<(String, String)>> = RefCell::new(None);
    let wrapped = |path: &str| -> std::io::Result<String> {
        let r = loader(path);
        if let Err(e) = &r {
            io_failure
                .borrow_mut()
                .get_or_insert_with(|| (path.to_string(), e.to_string()));
        }
        r
    };
    let (inputs, d) = resolve_files(&spec, &wrapped);
    diags.extend(d);
    if let Some((path, message)) = io_failure.into_inner() {
        return Err(PipelineError::Io { path, message });
    }
    if diags.has_errors() {
        return Err(PipelineError::Validation(diags.into_vec()));
    }

    let (cfg, d) = build_cfg(&inputs);
    diags.extend(d);
    let cfg = match cfg {
        Some(c) if !diags.has_errors() => c,
        _ => return Err(PipelineError::Validation(diags.into_vec())),
    };

    let (filtered, d) = apply_filter(&cfg, &spec.filtering);
    diags.extend(d);
    let filtered = match filtered {
        Some(f) if !diags.has_errors() => f,
        _ => return Err(PipelineError::Validation(diags.into_vec())),
    };

    let (plan, collapsed) = match &spec.rendering.function.collapsing_rules {
        Some(rules) => {
            let (plan, d) = plan_collapse(&filtered, &cfg, rules);
            diags.extend(d);
            let (collapsed, d) = apply_collapse(&filtered, &cfg, &plan);
            diags.extend(d);
            (plan, collapsed)
        }
        None => {
            let plan = CollapsePlan::default();
            let (collapsed, _) = apply_collapse(&filtered, &cfg, &plan);
            (plan, collapsed)
        }
    };
    if diags.has_errors() {
        return Err(PipelineError::Validation(diags.into_vec()));
    }

    let draw = build_draw_graph(&spec, &cfg, &collapsed);
    Ok(Prepared { spec, cfg, filtered, plan, collapsed, draw, diagnostics: diags })
}

/// Layout + SVG for a prepared pipeline.
pub fn render(prepared: &mut Prepared) -> Result<String, PipelineError> {
    let config = LayoutConfig {
        show_boundaries: prepared.spec.show_function_boundaries(),
        ..Default::default()
    };
    let (geometry, d) = layout(&prepared.draw, &config)?;
    prepared.diagnostics.extend(d);
    Ok(render_svg(&prepared.draw, &geometry, &options_from_spec(&prepared.spec)))
}

pub fn layout_prepared(prepared: &mut Prepared) -> Result<LayoutGeometry, PipelineError> {
    let config = LayoutConfig {
        show_boundaries: prepared.spec.show_function_boundaries(),
        ..Default::default()
    };
    let (geometry, d) = layout(&prepared.draw, &config)?;
    prepared.diagnostics.extend(d);
    Ok(geometry)
}

/// Translate the collapsed graph into the layout engine's input.
fn build_draw_graph(spec: &Spec, cfg: &Cfg, collapsed: &CollapsedGraph) -> DrawGraph {
    let label_from = spec.node_label_from();

    let mut real: Vec<NodeId> = collapsed.surviving.iter().copied().collect();
    real.sort_by(|&a, &b| cfg.nodes[a].id.cmp(&cfg.nodes[b].id));
    let mut proxy_order: Vec<usize> = (0..collapsed.proxies.len()).collect();
    proxy_order.sort_by(|&a, &b| collapsed.proxies[a].id.cmp(&collapsed.proxies[b].id));

    let node_index: BTreeMap<NodeId, usize> =
        real.iter().enumerate().map(|(i, &n)| (n, i)).collect();
    let proxy_index: BTreeMap<usize, usize> = proxy_order
        .iter()
        .enumerate()
        .map(|(i, &p)| (p, real.len() + i))
        .collect();

    // loops with at least one drawn member, in id order
    let mut loop_ids: Vec<&String> = Vec::new();
    let mut loop_index: BTreeMap<&str, usize> = BTreeMap::new();
    for (lid, l) in &cfg.loop_tree.loops {
        if l.members.iter().any(|m| collapsed.surviving.contains(m)) {
            loop_index.insert(lid.as_str(), loop_ids.len());
            loop_ids.push(lid);
        }
    }

    let loop_path_of = |n: NodeId| -> Vec<usize> {
        let mut chain: Vec<usize> = Vec::new();
        let mut cur = cfg.innermost_loop_of(n);
        while let Some(l) = cur {
            if let Some(&idx) = loop_index.get(l.id.as_str()) {
                chain.push(idx);
            }
            cur = l.parent.as_deref().and_then(|p| cfg.loop_tree.loops.get(p));
        }
        chain.reverse();
        chain
    };

    let mut nodes: Vec<DrawNode> = Vec::with_capacity(real.len() + proxy_order.len());
    for &n in &real {
        let node = &cfg.nodes[n];
        let label = match label_from {
            LabelFrom::Id => node.id.clone(),
            LabelFrom::Label => node.label.clone().unwrap_or_else(|| node.id.clone()),
        };
        nodes.push(DrawNode {
            id: node.id.clone(),
            label,
            function_id: node.function_id.clone(),
            loop_path: loop_path_of(n),
            is_proxy: false,
            style: node.style.clone(),
            css_class: node.css_class.clone(),
        });
    }
    for &p in &proxy_order {
        let proxy = &collapsed.proxies[p];
        // group the proxy with its caller so it sits near the call site
        let caller_fn = proxy
            .call_edge
            .map(|e| cfg.edges[e].source)
            .or_else(|| proxy.return_edge.map(|e| cfg.edges[e].target))
            .and_then(|n| cfg.nodes[n].function_id.clone());
        nodes.push(DrawNode {
            id: proxy.id.clone(),
            label: proxy.label.clone(),
            function_id: caller_fn,
            loop_path: Vec::new(),
            is_proxy: true,
            style: BTreeMap::new(),
            css_class: None,
        });
    }

    let map_endpoint = |ep: Endpoint| -> usize {
        match ep {
            Endpoint::Node(n) => node_index[&n],
            Endpoint::Proxy(p) => proxy_index[&p],
        }
    };

    let mut edges: Vec<DrawEdge> = collapsed
        .rewritten_edges
        .iter()
        .map(|re| {
            let e = &cfg.edges[re.cfg_edge];
            let both_real =
                matches!(re.source, Endpoint::Node(_)) && matches!(re.target, Endpoint::Node(_));
            DrawEdge {
                source: map_endpoint(re.source),
                target: map_endpoint(re.target),
                is_back_edge: e.is_back_edge && both_real,
                loop_id: e
                    .back_edge_loop
                    .as_deref()
                    .and_then(|l| loop_index.get(l))
                    .copied(),
                label: e.label.clone(),
                style: e.style.clone(),
                css_class: e.css_class.clone(),
            }
        })
        .collect();
    edges.sort_by_key(|e| (e.source, e.target));

    let loops: Vec<DrawLoop> = loop_ids
        .iter()
        .map(|lid| {
            let l = &cfg.loop_tree.loops[lid.as_str()];
            DrawLoop {
                id: l.id.clone(),
                header: l.header.and_then(|h| node_index.get(&h).copied()),
                members: l
                    .members
                    .iter()
                    .filter_map(|m| node_index.get(m).copied())
                    .collect(),
                parent: l
                    .parent
                    .as_deref()
                    .and_then(|p| loop_index.get(p))
                    .copied(),
                depth: l.depth as usize,
            }
        })
        .collect();

    let functions: Vec<DrawFunction> = cfg
        .functions
        .iter()
        .filter_map(|(fid, info)| {
            let members: std::collections::BTreeSet<usize> = info
                .members
                .iter()
                .filter_map(|m| node_index.get(m).copied())
                .collect();
            if members.is_empty() {
                None
            } else {
                Some(DrawFunction { id: fid.clone(), name: info.name.clone(), members })
            }
        })
        .collect();

    let boundary: Vec<DrawBoundary> = collapsed
        .boundary_groups
        .iter()
        .map(|b| DrawBoundary {
            anchor: map_endpoint(b.anchor),
            direction: b.group.direction,
            count: b.group.count(),
        })
        .collect();

    DrawGraph { nodes, edges, loops, functions, boundary }
}

/// Dot text (plain or annotated) of the drawn graph.
pub fn emit_dot(prepared: &Prepared, annotated: bool) -> String {
    let draw = &prepared.draw;
    let mut nodes: Vec<(String, AttrMap)> = Vec::with_capacity(draw.nodes.len());
    for n in &draw.nodes {
        let mut attrs = n.style.clone();
        if n.label != n.id {
            attrs.insert("label".into(), n.label.clone());
        }
        if n.is_proxy {
            attrs.insert("style".into(), "dashed".into());
        }
        if let Some(c) = &n.css_class {
            attrs.insert("class".into(), c.clone());
        }
        nodes.push((n.id.clone(), attrs));
    }
    let edges: Vec<EmitEdge> = draw
        .edges
        .iter()
        .map(|e| {
            let mut attrs = e.style.clone();
            if let Some(l) = &e.label {
                attrs.insert("label".into(), l.clone());
            }
            EmitEdge {
                source: draw.nodes[e.source].id.clone(),
                target: draw.nodes[e.target].id.clone(),
                attrs,
                is_back_edge: e.is_back_edge,
            }
        })
        .collect();
    let loops: Vec<EmitLoop> = draw
        .loops
        .iter()
        .filter(|l| !l.members.is_empty())
        .map(|l| EmitLoop {
            id: l.id.clone(),
            header: l
                .header
                .or_else(|| l.members.iter().next().copied())
                .map(|h| draw.nodes[h].id.clone())
                .unwrap_or_default(),
            members: l.members.iter().map(|&m| draw.nodes[m].id.clone()).collect(),
            parent: l.parent.map(|p| draw.loops[p].id.clone()),
        })
        .collect();
    let functions: Vec<EmitFunction> = draw
        .functions
        .iter()
        .map(|f| EmitFunction {
            id: f.id.clone(),
            name: f.name.clone(),
            members: f.members.iter().map(|&m| draw.nodes[m].id.clone()).collect(),
        })
        .collect();
    let graph = EmitGraph { nodes, edges, loops, functions };
    let mode = if annotated { EmitMode::Annotated } else { EmitMode::Plain };
    emit_graph(&graph, mode, &EmitConfig::default())
}

/// JSON view of the filter stage: included nodes, induced edges, boundary
/// groups.
pub fn filter_json(prepared: &Prepared) -> String {
    let cfg = &prepared.cfg;
    let f = &prepared.filtered;
    let nodes: Vec<Value> = f.included.iter().map(|&n| json!(cfg.nodes[n].id)).collect();
    let edges: Vec<Value> = f
        .induced_edges
        .iter()
        .map(|&e| {
            json!({
                "source": cfg.nodes[cfg.edges[e].source].id,
                "target": cfg.nodes[cfg.edges[e].target].id,
            })
        })
        .collect();
    let groups: Vec<Value> = f
        .boundary_groups
        .iter()
        .map(|g| {
            json!({
                "anchor": cfg.nodes[g.anchor].id,
                "direction": match g.direction {
                    Direction::Incoming => "incoming",
                    Direction::Outgoing => "outgoing",
                },
                "count": g.count(),
                "excluded": g.excluded_members.iter().map(|&m| cfg.nodes[m].id.clone()).collect::<Vec<_>>(),
            })
        })
        .collect();
    let seeds: Vec<Value> = f.seeds.iter().map(|&n| json!(cfg.nodes[n].id)).collect();
    serde_json::to_string_pretty(&json!({
        "nodes": nodes,
        "edges": edges,
        "boundaryGroups": groups,
        "seeds": seeds,
    }))
    .expect("json serialization cannot fail")
        + "\n"
}

/// Dot text of the filter stage (pre-collapse): included nodes, induced
/// edges, and the loop/function structure restricted to them.
pub fn filter_dot(prepared: &Prepared) -> String {
    let cfg = &prepared.cfg;
    let f = &prepared.filtered;
    let mut included: Vec<NodeId> = f.included.iter().copied().collect();
    included.sort_by(|&a, &b| cfg.nodes[a].id.cmp(&cfg.nodes[b].id));
    let nodes: Vec<(String, AttrMap)> = included
        .iter()
        .map(|&n| (cfg.nodes[n].id.clone(), cfg.nodes[n].style.clone()))
        .collect();
    let edges: Vec<EmitEdge> = f
        .induced_edges
        .iter()
        .map(|&e| EmitEdge {
            source: cfg.nodes[cfg.edges[e].source].id.clone(),
            target: cfg.nodes[cfg.edges[e].target].id.clone(),
            attrs: cfg.edges[e].style.clone(),
            is_back_edge: cfg.edges[e].is_back_edge,
        })
        .collect();
    let loops: Vec<EmitLoop> = cfg
        .loop_tree
        .loops
        .values()
        .filter_map(|l| {
            let members: Vec<String> = l
                .members
                .iter()
                .filter(|m| f.included.contains(m))
                .map(|&m| cfg.nodes[m].id.clone())
                .collect();
            if members.is_empty() {
                return None;
            }
            Some(EmitLoop {
                id: l.id.clone(),
                header: l
                    .header
                    .filter(|h| f.included.contains(h))
                    .map(|h| cfg.nodes[h].id.clone())
                    .unwrap_or_else(|| members[0].clone()),
                members,
                parent: l.parent.clone(),
            })
        })
        .collect();
    let functions: Vec<EmitFunction> = cfg
        .functions
        .iter()
        .filter_map(|(fid, info)| {
            let members: Vec<String> = info
                .members
                .iter()
                .filter(|m| f.included.contains(m))
                .map(|&m| cfg.nodes[m].id.clone())
                .collect();
            if members.is_empty() {
                None
            } else {
                Some(EmitFunction { id: fid.clone(), name: info.name.clone(), members })
            }
        })
        .collect();
    emit_graph(&EmitGraph { nodes, edges, loops, functions }, EmitMode::Plain, &EmitConfig::default())
}

/// Stage-by-stage node sets, for checking pipeline order from outside.
pub fn debug_dump(prepared: &Prepared) -> String {
    let cfg = &prepared.cfg;
    let filtered: Vec<&str> = prepared
        .filtered
        .included
        .iter()
        .map(|&n| cfg.nodes[n].id.as_str())
        .collect();
    let drawn: Vec<&str> = prepared.draw.nodes.iter().map(|n| n.id.as_str()).collect();
    serde_json::to_string(&json!({
        "filteredNodes": filtered,
        "collapsedFunctions": prepared.plan.collapsed,
        "drawnNodes": drawn,
    }))
    .expect("json serialization cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_files(path: &str) -> std::io::Result<String> {
        Err(std::io::Error::new(std::io::ErrorKind::NotFound, format!("{path} not found")))
    }

    const HELLO: &str = r#"{
        "data": {
            "nodes": [{"id": "start"}, {"id": "end"}],
            "edges": [{"source": "start", "target": "end"}]
        }
    }"#;

    #[test]
    fn hello_world_renders() {
        let mut p = prepare(HELLO, &no_files).unwrap();
        let svg = render(&mut p).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("node-start"));
        assert!(svg.contains("node-end"));
        crate::render::check_xml(&svg).unwrap();
    }

    #[test]
    fn malformed_spec_is_validation_error() {
        let err = prepare("{ not json", &no_files).unwrap_err();
        match err {
            PipelineError::Validation(diags) => {
                assert!(diags[0].message.contains("line"), "{}", diags[0].message);
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn missing_graph_file_is_io_error() {
        let spec = r#"{"data": {"graphFile": "nope.dot"}}"#;
        let err = prepare(spec, &no_files).unwrap_err();
        assert!(matches!(err, PipelineError::Io { .. }), "{err:?}");
    }

    #[test]
    fn filter_precedes_collapse() {
        let spec = r#"{
            "data": {
                "nodes": [{"id": "m1"}, {"id": "m2"}, {"id": "m3"},
                          {"id": "p1"}, {"id": "p2"}],
                "edges": [
                    {"source": "m1", "target": "p1"}, {"source": "p2", "target": "m1"},
                    {"source": "m2", "target": "p1"}, {"source": "p2", "target": "m2"},
                    {"source": "m3", "target": "p1"}, {"source": "p2", "target": "m3"},
                    {"source": "p1", "target": "p2"},
                    {"source": "m1", "target": "m2"}, {"source": "m2", "target": "m3"}
                ],
                "functions": [
                    {"id": "main", "name": "main", "nodes": ["m1", "m2", "m3"]},
                    {"id": "printf", "name": "printf", "nodes": ["p1", "p2"]}
                ]
            },
            "rendering": {
                "function": {"collapsingRules": {"minIncomingEdges": 3}}
            }
        }"#;
        let p = prepare(spec, &no_files).unwrap();
        // filter stage still holds the whole graph
        assert_eq!(p.filtered.included.len(), 5);
        // collapse removed printf's nodes, added proxies
        assert_eq!(p.plan.collapsed, vec!["printf".to_string()]);
        let dump: Value = serde_json::from_str(&debug_dump(&p)).unwrap();
        assert_eq!(dump["filteredNodes"].as_array().unwrap().len(), 5);
        let drawn: Vec<&str> = dump["drawnNodes"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_str().unwrap())
            .collect();
        assert!(!drawn.contains(&"p1"));
        assert!(drawn.iter().any(|d| d.starts_with("proxy:")));
    }

    #[test]
    fn emit_dot_round_trips_through_parser() {
        let mut p = prepare(HELLO, &no_files).unwrap();
        let dot = emit_dot(&p, false);
        let parsed = crate::dot_io::parse_dot(&dot).unwrap();
        assert_eq!(parsed.nodes.len(), 2);
        assert_eq!(parsed.edges.len(), 1);
        let _ = render(&mut p);
    }

    #[test]
    fn annotated_dot_marks_back_edges() {
        let spec = r#"{
            "data": {
                "nodes": [{"id": "n1"}, {"id": "n2"}, {"id": "n3"}, {"id": "n4"}],
                "edges": [
                    {"source": "n1", "target": "n2"},
                    {"source": "n2", "target": "n3"},
                    {"source": "n3", "target": "n2"},
                    {"source": "n2", "target": "n4"}
                ],
                "loops": [{"id": "L", "nodes": ["n2", "n3"], "header": "n2"}]
            }
        }"#;
        let p = prepare(spec, &no_files).unwrap();
        let dot = emit_dot(&p, true);
        assert!(dot.contains("constraint=false"), "{dot}");
        assert!(dot.contains(":s"), "{dot}");
    }

    #[test]
    fn filter_json_lists_boundary_groups() {
        let spec = r#"{
            "data": {
                "nodes": [{"id": "a"}, {"id": "b"}, {"id": "c"}],
                "edges": [
                    {"source": "a", "target": "b"},
                    {"source": "b", "target": "c"}
                ]
            },
            "filtering": {
                "isHopFilterOn": true,
                "selectedNodes": ["a"],
                "maxHops": 0,
                "minNodes": 0
            }
        }"#;
        let p = prepare(spec, &no_files).unwrap();
        let v: Value = serde_json::from_str(&filter_json(&p)).unwrap();
        assert_eq!(v["nodes"], json!(["a"]));
        assert_eq!(v["seeds"], json!(["a"]));
        assert_eq!(v["boundaryGroups"][0]["direction"], json!("outgoing"));
    }

    #[test]
    fn svg_output_is_deterministic() {
        let mut p1 = prepare(HELLO, &no_files).unwrap();
        let mut p2 = prepare(HELLO, &no_files).unwrap();
        assert_eq!(render(&mut p1).unwrap(), render(&mut p2).unwrap());
    }
}
