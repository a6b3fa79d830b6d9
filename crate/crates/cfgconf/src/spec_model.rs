//! Parsing, validation, default-filling, and file resolution for the CFGConf
//! JSON specification.
//!
//! A specification has three top-level sections: `data` (nodes, edges, loops,
//! functions, or references to external graph/analysis files), `rendering`
//! (global styles for nodes, edges, loops, and functions), and `filtering`
//! (loop-preserving k-hop subgraph selection).
//!
//! Parsing is total: every problem becomes a [`Diagnostic`](crate::Diagnostic)
//! and the walk continues, so one run reports everything wrong with a file.
//! Unrecognized keys are warnings, never errors.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{Map, Value};

use crate::diagnostics::Diagnostics;
use crate::dot_io;

pub type StyleMap = BTreeMap<String, String>;

/// Where a node's drawn label comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelFrom {
    /// Use the node id (paper-style block ids like `B4052`).
    #[default]
    Id,
    /// Use the node's `label` field, falling back to the id when absent.
    Label,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NodeDecl {
    pub id: String,
    pub label: Option<String>,
    pub style: StyleMap,
    pub css_class: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EdgeDecl {
    pub source: String,
    pub target: String,
    pub label: Option<String>,
    pub style: StyleMap,
    pub css_class: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoopDecl {
    pub id: String,
    pub nodes: Vec<String>,
    pub header: Option<String>,
    pub back_edges: Option<Vec<(String, String)>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FunctionDecl {
    pub id: String,
    pub name: String,
    pub nodes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DataSection {
    pub nodes: Vec<NodeDecl>,
    pub edges: Vec<EdgeDecl>,
    pub loops: Vec<LoopDecl>,
    pub functions: Vec<FunctionDecl>,
    pub graph_file: Option<String>,
    pub structure_file: Option<String>,
    pub analysis_file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NodeRender {
    pub label_from: Option<LabelFrom>,
    pub style: StyleMap,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EdgeRender {
    pub style: StyleMap,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoopRender {
    pub show_background: Option<bool>,
    pub background_color: Option<String>,
    pub back_edge_color: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FunctionRender {
    pub show_boundaries: Option<bool>,
    pub collapsing_rules: Option<CollapsingRules>,
}

/// Size cap for collapsible functions: an absolute node count or a
/// percentage of the filtered graph (written with a `p` suffix, e.g. `"25p"`).
#[derive(Debug, Clone, PartialEq)]
pub enum CollapseSize {
    Absolute(u32),
    Percent(f64),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CollapsingRules {
    pub min_incoming_edges: Option<u32>,
    pub min_outgoing_edges: Option<u32>,
    pub max_collapse_size: Option<CollapseSize>,
    pub always_collapse: Vec<String>,
    pub never_collapse: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RenderSection {
    pub node: NodeRender,
    pub edge: EdgeRender,
    pub loop_style: LoopRender,
    pub function: FunctionRender,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FilterSection {
    pub hop_filter_on: Option<bool>,
    pub selected_nodes: Vec<String>,
    pub loop_filter_on: Option<bool>,
    pub max_hops: Option<u32>,
    pub min_nodes: Option<u32>,
    pub max_nodes: Option<u32>,
}

/// An unrecognized key, retained verbatim so canonical serialization
/// round-trips and warnings can point at it.
#[derive(Debug, Clone, PartialEq)]
pub struct UnknownKey {
    /// JSON pointer of the object holding the key.
    pub path: String,
    pub key: String,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Spec {
    pub data: DataSection,
    pub rendering: RenderSection,
    pub filtering: FilterSection,
    pub unknown_keys: Vec<UnknownKey>,
}

/// Documented defaults filled in by [`apply_defaults`].
pub mod defaults {
    pub const MAX_HOPS: u32 = 3;
    pub const MIN_NODES: u32 = 25;
    pub const LOOP_BACKGROUND_COLOR: &str = "#FDC086";
    pub const BACK_EDGE_COLOR: &str = "#E66101";
    pub const NODE_SHAPE: &str = "box";
}

impl Spec {
    pub fn hop_filter_on(&self) -> bool {
        self.filtering.hop_filter_on.unwrap_or(false)
    }
    pub fn loop_filter_on(&self) -> bool {
        self.filtering.loop_filter_on.unwrap_or(self.hop_filter_on())
    }
    pub fn max_hops(&self) -> u32 {
        self.filtering.max_hops.unwrap_or(defaults::MAX_HOPS)
    }
    pub fn min_nodes(&self) -> u32 {
        self.filtering.min_nodes.unwrap_or(defaults::MIN_NODES)
    }
    pub fn show_loop_background(&self) -> bool {
        self.rendering.loop_style.show_background.unwrap_or(true)
    }
    pub fn loop_background_color(&self) -> &str {
        self.rendering
            .loop_style
            .background_color
            .as_deref()
            .unwrap_or(defaults::LOOP_BACKGROUND_COLOR)
    }
    pub fn back_edge_color(&self) -> &str {
        self.rendering
            .loop_style
            .back_edge_color
            .as_deref()
            .unwrap_or(defaults::BACK_EDGE_COLOR)
    }
    pub fn show_function_boundaries(&self) -> bool {
        self.rendering.function.show_boundaries.unwrap_or(true)
    }
    pub fn node_label_from(&self) -> LabelFrom {
        self.rendering.node.label_from.unwrap_or_default()
    }
}

fn escape_pointer_token(key: &str) -> String {
    key.replace('~', "~0").replace('/', "~1")
}

fn ptr(parent: &str, key: &str) -> String {
    format!("{parent}/{}", escape_pointer_token(key))
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

/// Scalar JSON values are accepted wherever dot-style attribute strings are
/// expected; numbers and booleans are stringified.
fn scalar_to_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn expect_string(v: &Value, path: &str, diags: &mut Diagnostics) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        other => {
            diags.error(path, format!("expected a string, found {}", type_name(other)));
            None
        }
    }
}

fn expect_bool(v: &Value, path: &str, diags: &mut Diagnostics) -> Option<bool> {
    match v {
        Value::Bool(b) => Some(*b),
        other => {
            diags.error(path, format!("expected a boolean, found {}", type_name(other)));
            None
        }
    }
}

fn expect_uint(v: &Value, path: &str, diags: &mut Diagnostics) -> Option<u32> {
    match v.as_u64() {
        Some(n) if n <= u32::MAX as u64 => Some(n as u32),
        _ => {
            diags.error(
                path,
                format!("expected a nonnegative integer, found {}", type_name(v)),
            );
            None
        }
    }
}

fn expect_array<'v>(v: &'v Value, path: &str, diags: &mut Diagnostics) -> Option<&'v Vec<Value>> {
    match v {
        Value::Array(a) => Some(a),
        other => {
            diags.error(path, format!("expected an array, found {}", type_name(other)));
            None
        }
    }
}

fn expect_object<'v>(
    v: &'v Value,
    path: &str,
    diags: &mut Diagnostics,
) -> Option<&'v Map<String, Value>> {
    match v {
        Value::Object(m) => Some(m),
        other => {
            diags.error(path, format!("expected an object, found {}", type_name(other)));
            None
        }
    }
}

fn string_list(v: &Value, path: &str, diags: &mut Diagnostics) -> Vec<String> {
    let mut out = Vec::new();
    if let Some(arr) = expect_array(v, path, diags) {
        for (i, item) in arr.iter().enumerate() {
            if let Some(s) = expect_string(item, &format!("{path}/{i}"), diags) {
                out.push(s);
            }
        }
    }
    out
}

/// Parse a CFGConf specification from JSON text.
///
/// Returns `None` only when no usable document can be produced (malformed
/// JSON, non-object root, or a missing/ill-typed `data` section). All other
/// problems are reported as diagnostics on a best-effort `Spec`.
pub fn parse_spec(text: &str) -> (Option<Spec>, Diagnostics) {
    let mut diags = Diagnostics::new();
    let value: Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) => {
            diags.error(
                "",
                format!("malformed JSON at line {} column {}: {e}", e.line(), e.column()),
            );
            return (None, diags);
        }
    };
    parse_spec_value(&value, &mut diags).map_or((None, diags.clone()), |s| (Some(s), diags))
}

/// Parse from an already-decoded JSON value (used by `--set` overrides).
pub fn parse_spec_value(root: &Value, diags: &mut Diagnostics) -> Option<Spec> {
    let obj = match root {
        Value::Object(m) => m,
        other => {
            diags.error("", format!("specification must be a JSON object, found {}", type_name(other)));
            return None;
        }
    };

    let mut spec = Spec::default();

    for (key, val) in obj {
        match key.as_str() {
            "data" => {}
            "rendering" => {
                if let Some(m) = expect_object(val, "/rendering", diags) {
                    spec.rendering = parse_rendering(m, "/rendering", diags, &mut spec.unknown_keys);
                }
            }
            "filtering" => {
                if let Some(m) = expect_object(val, "/filtering", diags) {
                    spec.filtering = parse_filtering(m, "/filtering", diags, &mut spec.unknown_keys);
                }
            }
            other => {
                diags.warning(ptr("", other), format!("unrecognized key \"{other}\" ignored"));
                spec.unknown_keys.push(UnknownKey {
                    path: "".into(),
                    key: other.to_string(),
                    value: val.clone(),
                });
            }
        }
    }

    match obj.get("data") {
        Some(v) => {
            let m = expect_object(v, "/data", diags)?;
            spec.data = parse_data(m, "/data", diags, &mut spec.unknown_keys);
        }
        None => {
            diags.error("/data", "required \"data\" section is missing");
            return None;
        }
    }

    validate_local(&spec, diags);
    Some(spec)
}

fn parse_data(
    obj: &Map<String, Value>,
    base: &str,
    diags: &mut Diagnostics,
    unknown: &mut Vec<UnknownKey>,
) -> DataSection {
    let mut data = DataSection::default();
    for (key, val) in obj {
        let path = ptr(base, key);
        match key.as_str() {
            "nodes" => {
                if let Some(arr) = expect_array(val, &path, diags) {
                    for (i, item) in arr.iter().enumerate() {
                        let p = format!("{path}/{i}");
                        if let Some(m) = expect_object(item, &p, diags) {
                            if let Some(n) = parse_node(m, &p, diags, unknown) {
                                data.nodes.push(n);
                            }
                        }
                    }
                }
            }
            "edges" => {
                if let Some(arr) = expect_array(val, &path, diags) {
                    for (i, item) in arr.iter().enumerate() {
                        let p = format!("{path}/{i}");
                        if let Some(m) = expect_object(item, &p, diags) {
                            if let Some(e) = parse_edge(m, &p, diags, unknown) {
                                data.edges.push(e);
                            }
                        }
                    }
                }
            }
            "loops" => {
                if let Some(arr) = expect_array(val, &path, diags) {
                    parse_loop_list(arr, &path, diags, &mut data.loops, unknown);
                }
            }
            "functions" => {
                if let Some(arr) = expect_array(val, &path, diags) {
                    for (i, item) in arr.iter().enumerate() {
                        let p = format!("{path}/{i}");
                        if let Some(m) = expect_object(item, &p, diags) {
                            if let Some(f) = parse_function(m, &p, diags, unknown) {
                                data.functions.push(f);
                            }
                        }
                    }
                }
            }
            "graphFile" => data.graph_file = expect_string(val, &path, diags),
            "structureFile" => data.structure_file = expect_string(val, &path, diags),
            "analysisFile" => data.analysis_file = expect_string(val, &path, diags),
            other => {
                diags.warning(path.clone(), format!("unrecognized key \"{other}\" ignored"));
                unknown.push(UnknownKey {
                    path: base.to_string(),
                    key: other.to_string(),
                    value: val.clone(),
                });
            }
        }
    }
    data
}

fn parse_node(
    obj: &Map<String, Value>,
    base: &str,
    diags: &mut Diagnostics,
    unknown: &mut Vec<UnknownKey>,
) -> Option<NodeDecl> {
    let mut node = NodeDecl::default();
    let mut has_id = false;
    for (key, val) in obj {
        let path = ptr(base, key);
        match key.as_str() {
            "id" => {
                if let Some(s) = expect_string(val, &path, diags) {
                    node.id = s;
                    has_id = true;
                }
            }
            "label" => node.label = expect_string(val, &path, diags),
            "class" => node.css_class = expect_string(val, &path, diags),
            other => match scalar_to_string(val) {
                // dot-style attributes ride along unstructured
                Some(s) => {
                    node.style.insert(other.to_string(), s);
                }
                None => {
                    diags.warning(path, format!("unrecognized key \"{other}\" ignored"));
                    unknown.push(UnknownKey {
                        path: base.to_string(),
                        key: other.to_string(),
                        value: val.clone(),
                    });
                }
            },
        }
    }
    if !has_id {
        diags.error(ptr(base, "id"), "node is missing required \"id\"");
        return None;
    }
    Some(node)
}

fn parse_edge(
    obj: &Map<String, Value>,
    base: &str,
    diags: &mut Diagnostics,
    unknown: &mut Vec<UnknownKey>,
) -> Option<EdgeDecl> {
    let mut edge = EdgeDecl::default();
    let (mut has_src, mut has_tgt) = (false, false);
    for (key, val) in obj {
        let path = ptr(base, key);
        match key.as_str() {
            "source" => {
                if let Some(s) = expect_string(val, &path, diags) {
                    edge.source = s;
                    has_src = true;
                }
            }
            "target" => {
                if let Some(s) = expect_string(val, &path, diags) {
                    edge.target = s;
                    has_tgt = true;
                }
            }
            "label" => edge.label = expect_string(val, &path, diags),
            "class" => edge.css_class = expect_string(val, &path, diags),
            other => match scalar_to_string(val) {
                Some(s) => {
                    edge.style.insert(other.to_string(), s);
                }
                None => {
                    diags.warning(path, format!("unrecognized key \"{other}\" ignored"));
                    unknown.push(UnknownKey {
                        path: base.to_string(),
                        key: other.to_string(),
                        value: val.clone(),
                    });
                }
            },
        }
    }
    if !has_src {
        diags.error(ptr(base, "source"), "edge is missing required \"source\"");
    }
    if !has_tgt {
        diags.error(ptr(base, "target"), "edge is missing required \"target\"");
    }
    (has_src && has_tgt).then_some(edge)
}

/// Loops accept both `id` and `name`, and nested `loops` lists are flattened
/// (the analysis-file shape from dyninst-style tooling).
fn parse_loop_list(
    arr: &[Value],
    base: &str,
    diags: &mut Diagnostics,
    out: &mut Vec<LoopDecl>,
    unknown: &mut Vec<UnknownKey>,
) {
    for (i, item) in arr.iter().enumerate() {
        let p = format!("{base}/{i}");
        if let Some(m) = expect_object(item, &p, diags) {
            parse_loop(m, &p, diags, out, unknown);
        }
    }
}

fn parse_loop(
    obj: &Map<String, Value>,
    base: &str,
    diags: &mut Diagnostics,
    out: &mut Vec<LoopDecl>,
    unknown: &mut Vec<UnknownKey>,
) {
    let mut decl = LoopDecl::default();
    let mut has_id = false;
    let mut nested: Vec<Value> = Vec::new();
    for (key, val) in obj {
        let path = ptr(base, key);
        match key.as_str() {
            "id" | "name" => {
                if let Some(s) = expect_string(val, &path, diags) {
                    if !has_id {
                        decl.id = s;
                        has_id = true;
                    }
                }
            }
            "nodes" => decl.nodes = string_list(val, &path, diags),
            "header" => decl.header = expect_string(val, &path, diags),
            "backEdges" => {
                if let Some(arr) = expect_array(val, &path, diags) {
                    let mut pairs = Vec::new();
                    for (i, pair) in arr.iter().enumerate() {
                        let pp = format!("{path}/{i}");
                        match pair.as_array() {
                            Some(xs) if xs.len() == 2 => {
                                let s = expect_string(&xs[0], &format!("{pp}/0"), diags);
                                let t = expect_string(&xs[1], &format!("{pp}/1"), diags);
                                if let (Some(s), Some(t)) = (s, t) {
                                    pairs.push((s, t));
                                }
                            }
                            _ => diags.error(pp, "back edge must be a [source, target] pair"),
                        }
                    }
                    decl.back_edges = Some(pairs);
                }
            }
            "loops" => {
                if let Some(arr) = expect_array(val, &path, diags) {
                    nested = arr.clone();
                }
            }
            other => {
                diags.warning(path, format!("unrecognized key \"{other}\" ignored"));
                unknown.push(UnknownKey {
                    path: base.to_string(),
                    key: other.to_string(),
                    value: val.clone(),
                });
            }
        }
    }
    if !has_id {
        diags.error(ptr(base, "id"), "loop is missing required \"id\" (or \"name\")");
        return;
    }
    if decl.nodes.is_empty() {
        diags.error(ptr(base, "nodes"), format!("loop \"{}\" has no nodes", decl.id));
        return;
    }
    if let Some(h) = &decl.header {
        if !decl.nodes.contains(h) {
            diags.error(
                ptr(base, "header"),
                format!("loop \"{}\" header \"{h}\" is not among its nodes", decl.id),
            );
        }
    }
    out.push(decl);
    if !nested.is_empty() {
        parse_loop_list(&nested, &ptr(base, "loops"), diags, out, unknown);
    }
}

fn parse_function(
    obj: &Map<String, Value>,
    base: &str,
    diags: &mut Diagnostics,
    unknown: &mut Vec<UnknownKey>,
) -> Option<FunctionDecl> {
    let mut f = FunctionDecl::default();
    let mut has_name = false;
    for (key, val) in obj {
        let path = ptr(base, key);
        match key.as_str() {
            "id" => {
                if let Some(s) = expect_string(val, &path, diags) {
                    f.id = s;
                }
            }
            "name" => {
                if let Some(s) = expect_string(val, &path, diags) {
                    f.name = s;
                    has_name = true;
                }
            }
            "nodes" => f.nodes = string_list(val, &path, diags),
            other => {
                diags.warning(path, format!("unrecognized key \"{other}\" ignored"));
                unknown.push(UnknownKey {
                    path: base.to_string(),
                    key: other.to_string(),
                    value: val.clone(),
                });
            }
        }
    }
    if !has_name {
        diags.error(ptr(base, "name"), "function is missing required \"name\"");
        return None;
    }
    if f.id.is_empty() {
        f.id = f.name.clone();
    }
    Some(f)
}

fn parse_rendering(
    obj: &Map<String, Value>,
    base: &str,
    diags: &mut Diagnostics,
    unknown: &mut Vec<UnknownKey>,
) -> RenderSection {
    let mut section = RenderSection::default();
    for (key, val) in obj {
        let path = ptr(base, key);
        match key.as_str() {
            "node" => {
                if let Some(m) = expect_object(val, &path, diags) {
                    for (k, v) in m {
                        let kp = ptr(&path, k);
                        if k == "label" {
                            match v.as_str() {
                                Some("id") => section.node.label_from = Some(LabelFrom::Id),
                                Some("label") => section.node.label_from = Some(LabelFrom::Label),
                                _ => diags.error(kp, "node label source must be \"id\" or \"label\""),
                            }
                        } else if let Some(s) = scalar_to_string(v) {
                            section.node.style.insert(k.clone(), s);
                        } else {
                            diags.warning(kp, format!("unrecognized key \"{k}\" ignored"));
                            unknown.push(UnknownKey {
                                path: path.clone(),
                                key: k.clone(),
                                value: v.clone(),
                            });
                        }
                    }
                }
            }
            "edge" => {
                if let Some(m) = expect_object(val, &path, diags) {
                    for (k, v) in m {
                        if let Some(s) = scalar_to_string(v) {
                            section.edge.style.insert(k.clone(), s);
                        } else {
                            diags.warning(ptr(&path, k), format!("unrecognized key \"{k}\" ignored"));
                            unknown.push(UnknownKey {
                                path: path.clone(),
                                key: k.clone(),
                                value: v.clone(),
                            });
                        }
                    }
                }
            }
            "loop" => {
                if let Some(m) = expect_object(val, &path, diags) {
                    for (k, v) in m {
                        let kp = ptr(&path, k);
                        match k.as_str() {
                            "showBackground" => {
                                section.loop_style.show_background = expect_bool(v, &kp, diags)
                            }
                            "backgroundColor" => {
                                section.loop_style.background_color = expect_string(v, &kp, diags)
                            }
                            "backEdgeColor" => {
                                section.loop_style.back_edge_color = expect_string(v, &kp, diags)
                            }
                            other => {
                                diags.warning(kp, format!("unrecognized key \"{other}\" ignored"));
                                unknown.push(UnknownKey {
                                    path: path.clone(),
                                    key: other.to_string(),
                                    value: v.clone(),
                                });
                            }
                        }
                    }
                }
            }
            "function" => {
                if let Some(m) = expect_object(val, &path, diags) {
                    for (k, v) in m {
                        let kp = ptr(&path, k);
                        match k.as_str() {
                            "showBoundaries" => {
                                section.function.show_boundaries = expect_bool(v, &kp, diags)
                            }
                            "collapsingRules" => {
                                if let Some(rm) = expect_object(v, &kp, diags) {
                                    section.function.collapsing_rules =
                                        Some(parse_collapsing_rules(rm, &kp, diags, unknown));
                                }
                            }
                            other => {
                                diags.warning(kp, format!("unrecognized key \"{other}\" ignored"));
                                unknown.push(UnknownKey {
                                    path: path.clone(),
                                    key: other.to_string(),
                                    value: v.clone(),
                                });
                            }
                        }
                    }
                }
            }
            other => {
                diags.warning(path.clone(), format!("unrecognized key \"{other}\" ignored"));
                unknown.push(UnknownKey {
                    path: base.to_string(),
                    key: other.to_string(),
                    value: val.clone(),
                });
            }
        }
    }
    section
}

fn parse_collapsing_rules(
    obj: &Map<String, Value>,
    base: &str,
    diags: &mut Diagnostics,
    unknown: &mut Vec<UnknownKey>,
) -> CollapsingRules {
    let mut rules = CollapsingRules::default();
    for (key, val) in obj {
        let path = ptr(base, key);
        match key.as_str() {
            "minIncomingEdges" => rules.min_incoming_edges = expect_uint(val, &path, diags),
            "minOutgoingEdges" => rules.min_outgoing_edges = expect_uint(val, &path, diags),
            "maxCollapseSize" => rules.max_collapse_size = parse_collapse_size(val, &path, diags),
            "alwaysCollapseList" => rules.always_collapse = string_list(val, &path, diags),
            "neverCollapseList" => rules.never_collapse = string_list(val, &path, diags),
            other => {
                diags.warning(path, format!("unrecognized key \"{other}\" ignored"));
                unknown.push(UnknownKey {
                    path: base.to_string(),
                    key: other.to_string(),
                    value: val.clone(),
                });
            }
        }
    }
    rules
}

fn parse_collapse_size(v: &Value, path: &str, diags: &mut Diagnostics) -> Option<CollapseSize> {
    match v {
        Value::Number(n) => match n.as_u64() {
            Some(k) if k <= u32::MAX as u64 => Some(CollapseSize::Absolute(k as u32)),
            _ => {
                diags.error(path, "absolute maxCollapseSize must be a nonnegative integer");
                None
            }
        },
        Value::String(s) => {
            if let Some(num) = s.strip_suffix('p') {
                match num.parse::<f64>() {
                    Ok(p) if p > 0.0 && p <= 100.0 => Some(CollapseSize::Percent(p)),
                    _ => {
                        diags.error(path, format!("percentage \"{s}\" must be in (0, 100]"));
                        None
                    }
                }
            } else if let Ok(k) = s.parse::<u32>() {
                Some(CollapseSize::Absolute(k))
            } else {
                diags.error(
                    path,
                    format!("maxCollapseSize \"{s}\" must be a count or a percentage like \"25p\""),
                );
                None
            }
        }
        other => {
            diags.error(
                path,
                format!("expected a count or \"<N>p\" string, found {}", type_name(other)),
            );
            None
        }
    }
}

fn parse_filtering(
    obj: &Map<String, Value>,
    base: &str,
    diags: &mut Diagnostics,
    unknown: &mut Vec<UnknownKey>,
) -> FilterSection {
    let mut f = FilterSection::default();
    for (key, val) in obj {
        let path = ptr(base, key);
        match key.as_str() {
            "isHopFilterOn" => f.hop_filter_on = expect_bool(val, &path, diags),
            "selectedNodes" => f.selected_nodes = string_list(val, &path, diags),
            "isLoopFilterOn" => f.loop_filter_on = expect_bool(val, &path, diags),
            "maxHops" => f.max_hops = expect_uint(val, &path, diags),
            "minNodes" => f.min_nodes = expect_uint(val, &path, diags),
            "maxNodes" => match expect_uint(val, &path, diags) {
                Some(0) => diags.error(path, "maxNodes must be positive"),
                other => f.max_nodes = other,
            },
            other => {
                diags.warning(path, format!("unrecognized key \"{other}\" ignored"));
                unknown.push(UnknownKey {
                    path: base.to_string(),
                    key: other.to_string(),
                    value: val.clone(),
                });
            }
        }
    }
    f
}

/// Semantic checks that need no external files.
fn validate_local(spec: &Spec, diags: &mut Diagnostics) {
    if spec.data.nodes.is_empty() && spec.data.graph_file.is_none() {
        diags.error(
            "/data",
            "data must provide nodes (inline \"nodes\" or a \"graphFile\")",
        );
    }

    let mut seen = BTreeSet::new();
    for (i, n) in spec.data.nodes.iter().enumerate() {
        if !seen.insert(n.id.as_str()) {
            diags.error(
                format!("/data/nodes/{i}/id"),
                format!("duplicate node id \"{}\"", n.id),
            );
        }
    }

    if spec.filtering.hop_filter_on == Some(true) && spec.filtering.selected_nodes.is_empty() {
        diags.error(
            "/filtering/selectedNodes",
            "hop filtering is on but selectedNodes is empty",
        );
    }
    if let (Some(min), Some(max)) = (spec.filtering.min_nodes, spec.filtering.max_nodes) {
        if min > max {
            diags.error(
                "/filtering/minNodes",
                format!("minNodes ({min}) exceeds maxNodes ({max})"),
            );
        }
    }

    if let Some(rules) = &spec.rendering.function.collapsing_rules {
        for name in &rules.always_collapse {
            if rules.never_collapse.contains(name) {
                diags.error(
                    "/rendering/function/collapsingRules",
                    format!("function \"{name}\" is in both alwaysCollapseList and neverCollapseList"),
                );
            }
        }
    }
}

/// Fill every absent optional field with its documented default. Idempotent.
pub fn apply_defaults(mut spec: Spec) -> Spec {
    let f = &mut spec.filtering;
    if f.hop_filter_on.is_none() {
        f.hop_filter_on = Some(false);
    }
    if f.loop_filter_on.is_none() {
        f.loop_filter_on = f.hop_filter_on;
    }
    if f.max_hops.is_none() {
        f.max_hops = Some(defaults::MAX_HOPS);
    }
    if f.min_nodes.is_none() {
        f.min_nodes = Some(defaults::MIN_NODES);
    }
    // max_nodes stays absent: unbounded

    let r = &mut spec.rendering;
    if r.loop_style.show_background.is_none() {
        r.loop_style.show_background = Some(true);
    }
    if r.loop_style.background_color.is_none() {
        r.loop_style.background_color = Some(defaults::LOOP_BACKGROUND_COLOR.to_string());
    }
    if r.loop_style.back_edge_color.is_none() {
        r.loop_style.back_edge_color = Some(defaults::BACK_EDGE_COLOR.to_string());
    }
    if r.function.show_boundaries.is_none() {
        r.function.show_boundaries = Some(true);
    }
    if r.node.label_from.is_none() {
        r.node.label_from = Some(LabelFrom::Id);
    }
    r.node
        .style
        .entry("shape".to_string())
        .or_insert_with(|| defaults::NODE_SHAPE.to_string());

    spec
}

/// Canonical serialization of a spec back to JSON. `parse_spec` of the output
/// reproduces the same `Spec` structurally.
pub fn serialize_spec(spec: &Spec) -> Value {
    let mut root = Map::new();

    let mut data = Map::new();
    if !spec.data.nodes.is_empty() {
        data.insert(
            "nodes".into(),
            Value::Array(spec.data.nodes.iter().map(node_to_json).collect()),
        );
    }
    if !spec.data.edges.is_empty() {
        data.insert(
            "edges".into(),
            Value::Array(spec.data.edges.iter().map(edge_to_json).collect()),
        );
    }
    if !spec.data.loops.is_empty() {
        data.insert(
            "loops".into(),
            Value::Array(spec.data.loops.iter().map(loop_to_json).collect()),
        );
    }
    if !spec.data.functions.is_empty() {
        data.insert(
            "functions".into(),
            Value::Array(spec.data.functions.iter().map(function_to_json).collect()),
        );
    }
    if let Some(p) = &spec.data.graph_file {
        data.insert("graphFile".into(), Value::String(p.clone()));
    }
    if let Some(p) = &spec.data.structure_file {
        data.insert("structureFile".into(), Value::String(p.clone()));
    }
    if let Some(p) = &spec.data.analysis_file {
        data.insert("analysisFile".into(), Value::String(p.clone()));
    }
    root.insert("data".into(), Value::Object(data));

    let mut rendering = Map::new();
    let mut node = Map::new();
    if let Some(lf) = spec.rendering.node.label_from {
        node.insert(
            "label".into(),
            Value::String(match lf {
                LabelFrom::Id => "id".into(),
                LabelFrom::Label => "label".into(),
            }),
        );
    }
    for (k, v) in &spec.rendering.node.style {
        node.insert(k.clone(), Value::String(v.clone()));
    }
    if !node.is_empty() {
        rendering.insert("node".into(), Value::Object(node));
    }
    if !spec.rendering.edge.style.is_empty() {
        let edge: Map<String, Value> = spec
            .rendering
            .edge
            .style
            .iter()
            .map(|(k, v)| (k.clone(), Value::String(v.clone())))
            .collect();
        rendering.insert("edge".into(), Value::Object(edge));
    }
    let ls = &spec.rendering.loop_style;
    let mut lp = Map::new();
    if let Some(b) = ls.show_background {
        lp.insert("showBackground".into(), Value::Bool(b));
    }
    if let Some(c) = &ls.background_color {
        lp.insert("backgroundColor".into(), Value::String(c.clone()));
    }
    if let Some(c) = &ls.back_edge_color {
        lp.insert("backEdgeColor".into(), Value::String(c.clone()));
    }
    if !lp.is_empty() {
        rendering.insert("loop".into(), Value::Object(lp));
    }
    let fs = &spec.rendering.function;
    let mut fp = Map::new();
    if let Some(b) = fs.show_boundaries {
        fp.insert("showBoundaries".into(), Value::Bool(b));
    }
    if let Some(rules) = &fs.collapsing_rules {
        let mut rm = Map::new();
        if let Some(n) = rules.min_incoming_edges {
            rm.insert("minIncomingEdges".into(), Value::from(n));
        }
        if let Some(n) = rules.min_outgoing_edges {
            rm.insert("minOutgoingEdges".into(), Value::from(n));
        }
        if let Some(sz) = &rules.max_collapse_size {
            rm.insert(
                "maxCollapseSize".into(),
                match sz {
                    CollapseSize::Absolute(k) => Value::from(*k),
                    CollapseSize::Percent(p) => Value::String(format!("{p}p")),
                },
            );
        }
        if !rules.always_collapse.is_empty() {
            rm.insert(
                "alwaysCollapseList".into(),
                Value::Array(rules.always_collapse.iter().map(|s| Value::String(s.clone())).collect()),
            );
        }
        if !rules.never_collapse.is_empty() {
            rm.insert(
                "neverCollapseList".into(),
                Value::Array(rules.never_collapse.iter().map(|s| Value::String(s.clone())).collect()),
            );
        }
        fp.insert("collapsingRules".into(), Value::Object(rm));
    }
    if !fp.is_empty() {
        rendering.insert("function".into(), Value::Object(fp));
    }
    if !rendering.is_empty() {
        root.insert("rendering".into(), Value::Object(rendering));
    }

    let f = &spec.filtering;
    let mut filtering = Map::new();
    if let Some(b) = f.hop_filter_on {
        filtering.insert("isHopFilterOn".into(), Value::Bool(b));
    }
    if !f.selected_nodes.is_empty() {
        filtering.insert(
            "selectedNodes".into(),
            Value::Array(f.selected_nodes.iter().map(|s| Value::String(s.clone())).collect()),
        );
    }
    if let Some(b) = f.loop_filter_on {
        filtering.insert("isLoopFilterOn".into(), Value::Bool(b));
    }
    if let Some(n) = f.max_hops {
        filtering.insert("maxHops".into(), Value::from(n));
    }
    if let Some(n) = f.min_nodes {
        filtering.insert("minNodes".into(), Value::from(n));
    }
    if let Some(n) = f.max_nodes {
        filtering.insert("maxNodes".into(), Value::from(n));
    }
    if !filtering.is_empty() {
        root.insert("filtering".into(), Value::Object(filtering));
    }

    // reinsert retained unknown keys at their original locations
    let mut value = Value::Object(root);
    for uk in &spec.unknown_keys {
        if let Some(Value::Object(m)) = value.pointer_mut(&uk.path) {
            m.insert(uk.key.clone(), uk.value.clone());
        }
    }
    value
}

fn style_entries(style: &StyleMap, obj: &mut Map<String, Value>) {
    for (k, v) in style {
        obj.insert(k.clone(), Value::String(v.clone()));
    }
}

fn node_to_json(n: &NodeDecl) -> Value {
    let mut m = Map::new();
    m.insert("id".into(), Value::String(n.id.clone()));
    if let Some(l) = &n.label {
        m.insert("label".into(), Value::String(l.clone()));
    }
    if let Some(c) = &n.css_class {
        m.insert("class".into(), Value::String(c.clone()));
    }
    style_entries(&n.style, &mut m);
    Value::Object(m)
}

fn edge_to_json(e: &EdgeDecl) -> Value {
    let mut m = Map::new();
    m.insert("source".into(), Value::String(e.source.clone()));
    m.insert("target".into(), Value::String(e.target.clone()));
    if let Some(l) = &e.label {
        m.insert("label".into(), Value::String(l.clone()));
    }
    if let Some(c) = &e.css_class {
        m.insert("class".into(), Value::String(c.clone()));
    }
    style_entries(&e.style, &mut m);
    Value::Object(m)
}

fn loop_to_json(l: &LoopDecl) -> Value {
    let mut m = Map::new();
    m.insert("id".into(), Value::String(l.id.clone()));
    if let Some(h) = &l.header {
        m.insert("header".into(), Value::String(h.clone()));
    }
    if let Some(be) = &l.back_edges {
        m.insert(
            "backEdges".into(),
            Value::Array(
                be.iter()
                    .map(|(s, t)| {
                        Value::Array(vec![Value::String(s.clone()), Value::String(t.clone())])
                    })
                    .collect(),
            ),
        );
    }
    m.insert(
        "nodes".into(),
        Value::Array(l.nodes.iter().map(|s| Value::String(s.clone())).collect()),
    );
    Value::Object(m)
}

fn function_to_json(f: &FunctionDecl) -> Value {
    let mut m = Map::new();
    if f.id != f.name {
        m.insert("id".into(), Value::String(f.id.clone()));
    }
    m.insert("name".into(), Value::String(f.name.clone()));
    m.insert(
        "nodes".into(),
        Value::Array(f.nodes.iter().map(|s| Value::String(s.clone())).collect()),
    );
    Value::Object(m)
}

/// Fully resolved graph inputs: inline declarations merged with the contents
/// of `graphFile` / `structureFile` / `analysisFile`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CfgInputs {
    pub nodes: Vec<NodeDecl>,
    pub edges: Vec<EdgeDecl>,
    pub loops: Vec<LoopDecl>,
    pub functions: Vec<FunctionDecl>,
}

/// Injected file access so embedders control I/O.
pub type FileLoader<'a> = &'a dyn Fn(&str) -> std::io::Result<String>;

/// Merge external files into the inline declarations.
///
/// Inline declarations win on id collision (with a warning). Loop and
/// function node references are checked against the final node set.
pub fn resolve_files(spec: &Spec, loader: FileLoader) -> (CfgInputs, Diagnostics) {
    let mut diags = Diagnostics::new();
    let mut inputs = CfgInputs {
        nodes: spec.data.nodes.clone(),
        edges: spec.data.edges.clone(),
        loops: spec.data.loops.clone(),
        functions: spec.data.functions.clone(),
    };

    if let Some(path) = &spec.data.graph_file {
        match loader(path) {
            Ok(text) => merge_graph_file(path, &text, &mut inputs, &mut diags),
            Err(e) => diags.error("/data/graphFile", format!("cannot read \"{path}\": {e}")),
        }
    }

    for (key, file) in [
        ("/data/structureFile", &spec.data.structure_file),
        ("/data/analysisFile", &spec.data.analysis_file),
    ] {
        if let Some(path) = file {
            match loader(path) {
                Ok(text) => merge_analysis_file(key, path, &text, &mut inputs, &mut diags),
                Err(e) => diags.error(key, format!("cannot read \"{path}\": {e}")),
            }
        }
    }

    // cross-reference checks on the merged inputs
    let ids: BTreeSet<&str> = inputs.nodes.iter().map(|n| n.id.as_str()).collect();
    for e in &inputs.edges {
        for endpoint in [&e.source, &e.target] {
            if !ids.contains(endpoint.as_str()) {
                diags.error(
                    "/data/edges",
                    format!("edge {} -> {} references unknown node \"{endpoint}\"", e.source, e.target),
                );
            }
        }
    }
    for l in &inputs.loops {
        for n in &l.nodes {
            if !ids.contains(n.as_str()) {
                diags.error(
                    "/data/loops",
                    format!("loop \"{}\" references unknown node \"{n}\"", l.id),
                );
            }
        }
    }
    for f in &inputs.functions {
        for n in &f.nodes {
            if !ids.contains(n.as_str()) {
                diags.error(
                    "/data/functions",
                    format!("function \"{}\" references unknown node \"{n}\"", f.name),
                );
            }
        }
    }

    (inputs, diags)
}

fn looks_like_dot(path: &str, text: &str) -> bool {
    let lower = path.to_ascii_lowercase();
    if lower.ends_with(".dot") || lower.ends_with(".gv") {
        return true;
    }
    if lower.ends_with(".json") {
        return false;
    }
    let head = text.trim_start();
    head.starts_with("digraph") || head.starts_with("strict") || head.starts_with("graph")
}

fn merge_graph_file(path: &str, text: &str, inputs: &mut CfgInputs, diags: &mut Diagnostics) {
    if looks_like_dot(path, text) {
        match dot_io::parse_dot(text) {
            Ok(g) => {
                let (nodes, edges) = dot_graph_to_decls(&g);
                merge_nodes_edges(path, nodes, edges, inputs, diags);
            }
            Err(e) => diags.error("/data/graphFile", format!("\"{path}\": {e}")),
        }
    } else {
        let value: Value = match serde_json::from_str(text) {
            Ok(v) => v,
            Err(e) => {
                diags.error(
                    "/data/graphFile",
                    format!("\"{path}\": malformed JSON at line {} column {}: {e}", e.line(), e.column()),
                );
                return;
            }
        };
        let mut sub = Diagnostics::new();
        let mut unknown = Vec::new();
        let obj = match expect_object(&value, "", &mut sub) {
            Some(m) => m,
            None => {
                relabel(sub, "/data/graphFile", path, diags);
                return;
            }
        };
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        if let Some(arr) = obj.get("nodes").and_then(Value::as_array) {
            for (i, item) in arr.iter().enumerate() {
                let p = format!("/nodes/{i}");
                if let Some(m) = expect_object(item, &p, &mut sub) {
                    if let Some(n) = parse_node(m, &p, &mut sub, &mut unknown) {
                        nodes.push(n);
                    }
                }
            }
        }
        if let Some(arr) = obj.get("edges").and_then(Value::as_array) {
            for (i, item) in arr.iter().enumerate() {
                let p = format!("/edges/{i}");
                if let Some(m) = expect_object(item, &p, &mut sub) {
                    if let Some(e) = parse_edge(m, &p, &mut sub, &mut unknown) {
                        edges.push(e);
                    }
                }
            }
        }
        relabel(sub, "/data/graphFile", path, diags);
        merge_nodes_edges(path, nodes, edges, inputs, diags);
    }
}

/// Convert a parsed dot graph into declaration form. The `label` and `class`
/// attributes map onto the dedicated fields; everything else is style.
fn dot_graph_to_decls(g: &dot_io::DotGraph) -> (Vec<NodeDecl>, Vec<EdgeDecl>) {
    let split = |attrs: &dot_io::AttrMap| {
        let mut style = StyleMap::new();
        let mut label = None;
        let mut css_class = None;
        for (k, v) in attrs {
            match k.as_str() {
                "label" => label = Some(v.clone()),
                "class" => css_class = Some(v.clone()),
                _ => {
                    style.insert(k.clone(), v.clone());
                }
            }
        }
        (label, css_class, style)
    };
    let nodes = g
        .nodes
        .iter()
        .map(|(id, attrs)| {
            let (label, css_class, style) = split(attrs);
            NodeDecl { id: id.clone(), label, style, css_class }
        })
        .collect();
    let edges = g
        .edges
        .iter()
        .map(|(s, t, attrs)| {
            let (label, css_class, style) = split(attrs);
            EdgeDecl {
                source: s.clone(),
                target: t.clone(),
                label,
                style,
                css_class,
            }
        })
        .collect();
    (nodes, edges)
}

fn merge_nodes_edges(
    path: &str,
    nodes: Vec<NodeDecl>,
    edges: Vec<EdgeDecl>,
    inputs: &mut CfgInputs,
    diags: &mut Diagnostics,
) {
    let inline_ids: BTreeSet<String> = inputs.nodes.iter().map(|n| n.id.clone()).collect();
    for n in nodes {
        if inline_ids.contains(&n.id) {
            diags.warning(
                "/data/graphFile",
                format!("\"{path}\": node \"{}\" also declared inline; inline declaration wins", n.id),
            );
        } else {
            inputs.nodes.push(n);
        }
    }
    inputs.edges.extend(edges);
}

fn merge_analysis_file(
    key: &str,
    path: &str,
    text: &str,
    inputs: &mut CfgInputs,
    diags: &mut Diagnostics,
) {
    let value: Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) => {
            diags.error(
                key,
                format!("\"{path}\": malformed JSON at line {} column {}: {e}", e.line(), e.column()),
            );
            return;
        }
    };
    let mut sub = Diagnostics::new();
    let mut unknown = Vec::new();
    let obj = match expect_object(&value, "", &mut sub) {
        Some(m) => m,
        None => {
            relabel(sub, key, path, diags);
            return;
        }
    };

    let mut loops = Vec::new();
    if let Some(arr) = obj.get("loops").and_then(Value::as_array) {
        parse_loop_list(arr, "/loops", &mut sub, &mut loops, &mut unknown);
    }
    let mut functions = Vec::new();
    if let Some(arr) = obj.get("functions").and_then(Value::as_array) {
        for (i, item) in arr.iter().enumerate() {
            let p = format!("/functions/{i}");
            if let Some(m) = expect_object(item, &p, &mut sub) {
                if let Some(f) = parse_function(m, &p, &mut sub, &mut unknown) {
                    functions.push(f);
                }
            }
        }
    }
    relabel(sub, key, path, diags);

    let inline_loop_ids: BTreeSet<String> = inputs.loops.iter().map(|l| l.id.clone()).collect();
    for l in loops {
        if inline_loop_ids.contains(&l.id) {
            diags.warning(
                key,
                format!("\"{path}\": loop \"{}\" also declared inline; inline declaration wins", l.id),
            );
        } else {
            inputs.loops.push(l);
        }
    }
    let inline_fn_ids: BTreeSet<String> = inputs.functions.iter().map(|f| f.id.clone()).collect();
    for f in functions {
        if inline_fn_ids.contains(&f.id) {
            diags.warning(
                key,
                format!("\"{path}\": function \"{}\" also declared inline; inline declaration wins", f.id),
            );
        } else {
            inputs.functions.push(f);
        }
    }
}

/// Prefix diagnostics from a sub-document with the referencing spec key.
fn relabel(sub: Diagnostics, key: &str, path: &str, diags: &mut Diagnostics) {
    for mut d in sub {
        d.path = format!("{key} ({path}{})", d.path);
        diags.push(d);
    }
}
