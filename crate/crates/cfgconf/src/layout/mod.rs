//! Loop-aware layered layout.
//!
//! The drawing pipeline is the classic Sugiyama scheme with two hard
//! constraints folded into every stage: members of a loop stay contiguous
//! per layer (child runs nested inside parent runs), and members of a
//! function stay grouped when boundaries are shown. Declared back edges are
//! reversed before layering so loop headers land on top, then restored and
//! routed around the loop hull.
//!
//! All pixel metrics are plain constants on [`LayoutConfig`]; nothing here
//! measures real fonts — node width is `8px * chars + 16px` so the renderer
//! and the layout agree by construction.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::diagnostics::Diagnostics;
use crate::filter::Direction;

/// Input to the layout engine: the drawn graph after filtering/collapsing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DrawGraph {
    pub nodes: Vec<DrawNode>,
    pub edges: Vec<DrawEdge>,
    pub loops: Vec<DrawLoop>,
    pub functions: Vec<DrawFunction>,
    pub boundary: Vec<DrawBoundary>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DrawNode {
    pub id: String,
    pub label: String,
    pub function_id: Option<String>,
    /// Loop ids containing this node, outermost first.
    pub loop_path: Vec<usize>,
    pub is_proxy: bool,
    /// Per-element style overrides (dot attribute names).
    pub style: std::collections::BTreeMap<String, String>,
    pub css_class: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DrawEdge {
    pub source: usize,
    pub target: usize,
    pub is_back_edge: bool,
    /// Loop the back edge belongs to, if known.
    pub loop_id: Option<usize>,
    pub label: Option<String>,
    pub style: std::collections::BTreeMap<String, String>,
    pub css_class: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DrawLoop {
    pub id: String,
    pub header: Option<usize>,
    pub members: BTreeSet<usize>,
    pub parent: Option<usize>,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DrawFunction {
    pub id: String,
    pub name: String,
    pub members: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrawBoundary {
    pub anchor: usize,
    pub direction: Direction,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayoutConfig {
    pub char_width: f64,
    pub label_pad: f64,
    pub node_height: f64,
    pub layer_spacing: f64,
    pub x_gap: f64,
    /// Extra gap inserted at loop/function group borders.
    pub group_gap: f64,
    pub hull_pad: f64,
    pub disc_radius: f64,
    pub disc_offset: f64,
    pub disc_nudge: f64,
    /// Function grouping is a hard ordering constraint only when on.
    pub show_boundaries: bool,
    /// Guard: refuse graphs larger than this instead of stalling.
    pub max_drawn_nodes: usize,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        LayoutConfig {
            char_width: 8.0,
            label_pad: 16.0,
            node_height: 28.0,
            layer_spacing: 60.0,
            x_gap: 24.0,
            group_gap: 12.0,
            hull_pad: 10.0,
            disc_radius: 5.0,
            disc_offset: 18.0,
            disc_nudge: 6.0,
            show_boundaries: true,
            max_drawn_nodes: 2000,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum LayoutError {
    #[error("graph has {count} drawn nodes, above the layout limit of {limit}; filter the graph down first")]
    TooLarge { count: usize, limit: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    pub fn right(&self) -> f64 {
        self.x + self.w
    }
    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }
    pub fn cx(&self) -> f64 {
        self.x + self.w / 2.0
    }
    pub fn cy(&self) -> f64 {
        self.y + self.h / 2.0
    }
}

pub type Point = (f64, f64);

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeRoute {
    pub edge: usize,
    pub points: Vec<Point>,
    pub is_back_edge: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopHull {
    pub loop_idx: usize,
    pub polygon: Vec<Point>,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscPlacement {
    pub group: usize,
    pub center: Point,
    pub radius: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LayoutGeometry {
    pub node_boxes: Vec<Rect>,
    pub layer_of: Vec<usize>,
    pub order_in_layer: Vec<usize>,
    pub edge_routes: Vec<EdgeRoute>,
    pub loop_hulls: Vec<LoopHull>,
    pub function_rects: Vec<(usize, Rect)>,
    pub disc_placements: Vec<DiscPlacement>,
    /// Edges whose direction was reversed for layering (declared back
    /// edges plus DFS-broken retreat edges).
    pub reversed_edges: BTreeSet<usize>,
    pub bounds: Rect,
}

/// Lay out a drawn graph. Deterministic: identical input gives identical
/// geometry.
pub fn layout(
    graph: &DrawGraph,
    config: &LayoutConfig,
) -> Result<(LayoutGeometry, Diagnostics), LayoutError> {
    if graph.nodes.len() > config.max_drawn_nodes {
        return Err(LayoutError::TooLarge {
            count: graph.nodes.len(),
            limit: config.max_drawn_nodes,
        });
    }
    let mut diags = Diagnostics::new();

    if graph.nodes.is_empty() {
        return Ok((LayoutGeometry::default(), diags));
    }

    let reversed = break_cycles(graph);
    let layer_of = assign_layers(graph, &reversed);

    let v = VirtualGraph::build(graph, &reversed, &layer_of, config);
    let orders = order_layers(graph, &v, config, &mut diags);
    let (boxes, layer_y) = assign_coordinates(graph, &v, &orders, config);

    let mut geometry = LayoutGeometry {
        node_boxes: boxes[..graph.nodes.len()].to_vec(),
        layer_of: layer_of.clone(),
        order_in_layer: vec![0; graph.nodes.len()],
        reversed_edges: reversed.clone(),
        ..Default::default()
    };
    for order in &orders {
        for (pos, &vn) in order.iter().enumerate() {
            if vn < graph.nodes.len() {
                geometry.order_in_layer[vn] = pos;
            }
        }
    }

    geometry.loop_hulls = compute_hulls(graph, &v, &boxes, config);
    geometry.function_rects = compute_function_rects(graph, &boxes, config);
    geometry.edge_routes = route_edges(graph, &v, &boxes, &geometry.loop_hulls, &reversed, config);
    geometry.disc_placements = place_boundary_discs(graph, &geometry.node_boxes, config);

    geometry.bounds = overall_bounds(&geometry, &layer_y);
    Ok((geometry, diags))
}

/// Reverse declared back edges, then break any remaining cycles by DFS,
/// reversing retreat edges. Returns the reversed edge set.
pub fn break_cycles(graph: &DrawGraph) -> BTreeSet<usize> {
    let n = graph.nodes.len();
    let mut reversed: BTreeSet<usize> = graph
        .edges
        .iter()
        .enumerate()
        .filter(|(_, e)| e.is_back_edge)
        .map(|(i, _)| i)
        .collect();

    // adjacency in id order so breaking is deterministic
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n]; // (target, edge)
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| graph.nodes[a].id.cmp(&graph.nodes[b].id));
    for (ei, e) in graph.edges.iter().enumerate() {
        let (s, t) = if reversed.contains(&ei) { (e.target, e.source) } else { (e.source, e.target) };
        if s != t {
            adj[s].push((t, ei));
        } else if !reversed.contains(&ei) {
            reversed.insert(ei); // undeclared self loop: treat as back edge
        }
    }
    for a in &mut adj {
        a.sort_by(|x, y| graph.nodes[x.0].id.cmp(&graph.nodes[y.0].id).then(x.1.cmp(&y.1)));
    }

    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        White,
        Gray,
        Black,
    }
    let mut mark = vec![Mark::White; n];
    let mut extra: BTreeSet<usize> = BTreeSet::new();
    // iterative DFS; (node, next child index)
    for &root in &order {
        if mark[root] != Mark::White {
            continue;
        }
        let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
        mark[root] = Mark::Gray;
        while let Some(&mut (u, ref mut next)) = stack.last_mut() {
            if *next < adj[u].len() {
                let (t, ei) = adj[u][*next];
                *next += 1;
                if reversed.contains(&ei) || extra.contains(&ei) {
                    continue;
                }
                match mark[t] {
                    Mark::White => {
                        mark[t] = Mark::Gray;
                        stack.push((t, 0));
                    }
                    Mark::Gray => {
                        extra.insert(ei); // retreat edge
                    }
                    Mark::Black => {}
                }
            } else {
                mark[u] = Mark::Black;
                stack.pop();
            }
        }
    }
    reversed.extend(extra);
    reversed
}

/// Longest-path layering with loop-header repair: every loop header ends
/// up on the minimum layer among its members.
pub fn assign_layers(graph: &DrawGraph, reversed: &BTreeSet<usize>) -> Vec<usize> {
    let n = graph.nodes.len();
    let mut layer = vec![0usize; n];
    let forward: Vec<(usize, usize)> = graph
        .edges
        .iter()
        .enumerate()
        .map(|(ei, e)| if reversed.contains(&ei) { (e.target, e.source) } else { (e.source, e.target) })
        .filter(|(s, t)| s != t)
        .collect();

    let mut changed = true;
    let mut rounds = 0usize;
    while changed && rounds <= n * n + 2 {
        changed = false;
        rounds += 1;
        for &(s, t) in &forward {
            if layer[t] < layer[s] + 1 {
                layer[t] = layer[s] + 1;
                changed = true;
            }
        }
        for l in &graph.loops {
            if let Some(h) = l.header {
                for &m in &l.members {
                    if layer[m] < layer[h] {
                        layer[m] = layer[h];
                        changed = true;
                    }
                }
            }
        }
    }
    layer
}

/// Real nodes plus the dummy nodes inserted on multi-layer forward edges.
struct VirtualGraph {
    /// id string per vnode, for tie-breaking.
    ids: Vec<String>,
    loop_paths: Vec<Vec<usize>>,
    functions: Vec<Option<String>>,
    widths: Vec<f64>,
    heights: Vec<f64>,
    layer_of: Vec<usize>,
    /// vnode chain per edge (forward direction), source..=target.
    edge_chains: Vec<Vec<usize>>,
    /// segments between adjacent layers: (upper vnode, lower vnode).
    segments: Vec<(usize, usize)>,
    layers: Vec<Vec<usize>>,
}

impl VirtualGraph {
    fn build(
        graph: &DrawGraph,
        reversed: &BTreeSet<usize>,
        layer_of: &[usize],
        config: &LayoutConfig,
    ) -> VirtualGraph {
        let mut v = VirtualGraph {
            ids: graph.nodes.iter().map(|nd| nd.id.clone()).collect(),
            loop_paths: graph.nodes.iter().map(|nd| nd.loop_path.clone()).collect(),
            functions: graph.nodes.iter().map(|nd| nd.function_id.clone()).collect(),
            widths: graph.nodes.iter().map(|nd| node_width(&nd.label, config)).collect(),
            heights: graph.nodes.iter().map(|nd| node_height(&nd.label, config)).collect(),
            layer_of: layer_of.to_vec(),
            edge_chains: Vec::with_capacity(graph.edges.len()),
            segments: Vec::new(),
            layers: Vec::new(),
        };
        for (ei, e) in graph.edges.iter().enumerate() {
            let (s, t) = if reversed.contains(&ei) { (e.target, e.source) } else { (e.source, e.target) };
            if s == t || layer_of[t] <= layer_of[s] {
                v.edge_chains.push(vec![s, t]);
                continue;
            }
            let common_loop = common_prefix(&graph.nodes[s].loop_path, &graph.nodes[t].loop_path);
            let common_fn = if graph.nodes[s].function_id == graph.nodes[t].function_id {
                graph.nodes[s].function_id.clone()
            } else {
                None
            };
            let mut chain = vec![s];
            for l in layer_of[s] + 1..layer_of[t] {
                let idx = v.ids.len();
                v.ids.push(format!("~{ei}@{l}"));
                v.loop_paths.push(common_loop.clone());
                v.functions.push(common_fn.clone());
                v.widths.push(0.0);
                v.heights.push(0.0);
                v.layer_of.push(l);
                chain.push(idx);
            }
            chain.push(t);
            for w in chain.windows(2) {
                v.segments.push((w[0], w[1]));
            }
            v.edge_chains.push(chain);
        }
        let depth = v.layer_of.iter().copied().max().unwrap_or(0) + 1;
        v.layers = vec![Vec::new(); depth];
        let mut by_id: Vec<usize> = (0..v.ids.len()).collect();
        by_id.sort_by(|&a, &b| v.ids[a].cmp(&v.ids[b]));
        for vn in by_id {
            v.layers[v.layer_of[vn]].push(vn);
        }
        v
    }
}

fn common_prefix(a: &[usize], b: &[usize]) -> Vec<usize> {
    a.iter().zip(b).take_while(|(x, y)| x == y).map(|(x, _)| *x).collect()
}

pub fn node_width(label: &str, config: &LayoutConfig) -> f64 {
    let chars = label.lines().map(|l| l.chars().count()).max().unwrap_or(0).max(1);
    config.char_width * chars as f64 + config.label_pad
}

pub fn node_height(label: &str, config: &LayoutConfig) -> f64 {
    let lines = label.lines().count().max(1);
    config.node_height + (lines as f64 - 1.0) * 16.0
}

/// One ordering unit in a layer: a free node, or a contiguous group.
enum Unit {
    Leaf(usize),
    /// Function group of free nodes (ordered internally by barycenter).
    FnGroup(Vec<usize>),
    /// Loop run, ordered recursively.
    LoopRun(Vec<Unit>),
}

impl Unit {
    fn leaves(&self, out: &mut Vec<usize>) {
        match self {
            Unit::Leaf(v) => out.push(*v),
            Unit::FnGroup(vs) => out.extend(vs),
            Unit::LoopRun(us) => {
                for u in us {
                    u.leaves(out);
                }
            }
        }
    }
}

/// Build the constraint tree for a set of vnodes at a given loop-path depth
/// and flatten it by barycenter order.
fn order_group(
    vnodes: &[usize],
    depth: usize,
    v: &VirtualGraph,
    bary: &BTreeMap<usize, f64>,
    use_functions: bool,
) -> Vec<Unit> {
    let mut loop_groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut free: Vec<usize> = Vec::new();
    for &vn in vnodes {
        match v.loop_paths[vn].get(depth) {
            Some(&l) => loop_groups.entry(l).or_default().push(vn),
            None => free.push(vn),
        }
    }
    let mut units: Vec<Unit> = Vec::new();
    if use_functions {
        let mut fn_groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut singles: Vec<usize> = Vec::new();
        for vn in free {
            match &v.functions[vn] {
                Some(f) => fn_groups.entry(f.clone()).or_default().push(vn),
                None => singles.push(vn),
            }
        }
        for (_, mut vs) in fn_groups {
            sort_leaves(&mut vs, v, bary);
            units.push(Unit::FnGroup(vs));
        }
        units.extend(singles.into_iter().map(Unit::Leaf));
    } else {
        units.extend(free.into_iter().map(Unit::Leaf));
    }
    for (_, vs) in loop_groups {
        units.push(Unit::LoopRun(order_group(&vs, depth + 1, v, bary, use_functions)));
    }
    // order units by (group barycenter, min id)
    let key = |u: &Unit| -> (f64, String) {
        let mut leaves = Vec::new();
        u.leaves(&mut leaves);
        let vals: Vec<f64> = leaves.iter().map(|vn| bary[vn]).collect();
        let b = vals.iter().sum::<f64>() / vals.len() as f64;
        let min_id = leaves.iter().map(|&vn| v.ids[vn].clone()).min().unwrap();
        (b, min_id)
    };
    units.sort_by(|a, b| {
        let (ba, ia) = key(a);
        let (bb, ib) = key(b);
        ba.partial_cmp(&bb).unwrap().then(ia.cmp(&ib))
    });
    units
}

fn sort_leaves(vs: &mut [usize], v: &VirtualGraph, bary: &BTreeMap<usize, f64>) {
    vs.sort_by(|&a, &b| {
        bary[&a].partial_cmp(&bary[&b]).unwrap().then(v.ids[a].cmp(&v.ids[b]))
    });
}

fn flatten_units(units: &[Unit]) -> Vec<usize> {
    let mut out = Vec::new();
    for u in units {
        u.leaves(&mut out);
    }
    out
}

/// Crossings between two adjacent layers given their orders.
fn crossings_between(upper: &[usize], lower: &[usize], segments: &[(usize, usize)]) -> usize {
    let upos: BTreeMap<usize, usize> = upper.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let lpos: BTreeMap<usize, usize> = lower.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let pairs: Vec<(usize, usize)> = segments
        .iter()
        .filter_map(|&(u, l)| Some((*upos.get(&u)?, *lpos.get(&l)?)))
        .collect();
    let mut count = 0;
    for i in 0..pairs.len() {
        for j in i + 1..pairs.len() {
            let (a, b) = (pairs[i], pairs[j]);
            if (a.0 < b.0 && a.1 > b.1) || (a.0 > b.0 && a.1 < b.1) {
                count += 1;
            }
        }
    }
    count
}

fn total_crossings(orders: &[Vec<usize>], segments: &[(usize, usize)]) -> usize {
    orders
        .windows(2)
        .map(|w| crossings_between(&w[0], &w[1], segments))
        .sum()
}

/// Barycenter sweeps under the contiguity constraints, then per-layer
/// exhaustive polish on small layers. Keeps the best order seen; never
/// worse than the initial id order.
fn order_layers(
    graph: &DrawGraph,
    v: &VirtualGraph,
    config: &LayoutConfig,
    diags: &mut Diagnostics,
) -> Vec<Vec<usize>> {
    warn_on_conflicts(graph, config, diags);

    // canonicalize the starting order: the raw id order may interleave a
    // free node with loop members, and `best` must always honor the
    // contiguity constraints
    let mut orders: Vec<Vec<usize>> = v.layers.clone();
    for layer in &mut orders {
        let bary: BTreeMap<usize, f64> =
            layer.iter().enumerate().map(|(i, &vn)| (vn, i as f64)).collect();
        *layer = flatten_units(&order_group(layer, 0, v, &bary, config.show_boundaries));
    }
    let mut best = orders.clone();
    let mut best_cost = total_crossings(&best, &v.segments);

    let neighbors = |vn: usize, other_layer: &[usize], up: bool| -> Vec<usize> {
        let pos: BTreeMap<usize, usize> =
            other_layer.iter().enumerate().map(|(i, &x)| (x, i)).collect();
        v.segments
            .iter()
            .filter_map(|&(a, b)| {
                let (me, other) = if up { (b, a) } else { (a, b) };
                if me == vn {
                    pos.get(&other).copied()
                } else {
                    None
                }
            })
            .collect()
    };

    let reorder = |layer: &[usize], adjacent: &[usize], up: bool| -> Vec<usize> {
        let mut bary: BTreeMap<usize, f64> = BTreeMap::new();
        for (i, &vn) in layer.iter().enumerate() {
            let ns = neighbors(vn, adjacent, up);
            let b = if ns.is_empty() {
                i as f64
            } else {
                ns.iter().sum::<usize>() as f64 / ns.len() as f64
            };
            bary.insert(vn, b);
        }
        flatten_units(&order_group(layer, 0, v, &bary, config.show_boundaries))
    };

    for pass in 0..8 {
        let before = orders.clone();
        for l in 1..orders.len() {
            let upper = orders[l - 1].clone();
            orders[l] = reorder(&orders[l], &upper, true);
        }
        for l in (0..orders.len().saturating_sub(1)).rev() {
            let lower = orders[l + 1].clone();
            orders[l] = reorder(&orders[l], &lower, false);
        }
        let cost = total_crossings(&orders, &v.segments);
        if cost < best_cost {
            best_cost = cost;
            best = orders.clone();
        }
        if orders == before && pass >= 3 {
            break;
        }
    }
    orders = best.clone();

    // Exhaustive polish: on layers with few nodes, try every
    // constraint-respecting permutation against the fixed neighbors.
    // Repeats until no single layer improves, so small layers end at the
    // per-layer optimum.
    for _ in 0..20 {
        let mut improved = false;
        for l in 0..orders.len() {
            if orders[l].len() > 6 || orders[l].len() < 2 {
                continue;
            }
            let mut best_layer = orders[l].clone();
            let mut best_local = layer_cost(&orders, l, &orders[l], &v.segments);
            for perm in constrained_permutations(&orders[l], v, config.show_boundaries) {
                let c = layer_cost(&orders, l, &perm, &v.segments);
                if c < best_local {
                    best_local = c;
                    best_layer = perm;
                    improved = true;
                }
            }
            orders[l] = best_layer;
        }
        if !improved {
            break;
        }
    }

    let final_cost = total_crossings(&orders, &v.segments);
    if final_cost > best_cost {
        return best;
    }
    orders
}

fn layer_cost(orders: &[Vec<usize>], l: usize, candidate: &[usize], segs: &[(usize, usize)]) -> usize {
    let mut c = 0;
    if l > 0 {
        c += crossings_between(&orders[l - 1], candidate, segs);
    }
    if l + 1 < orders.len() {
        c += crossings_between(candidate, &orders[l + 1], segs);
    }
    c
}

/// All permutations of a layer keeping loop runs contiguous/nested and
/// function groups contiguous.
fn constrained_permutations(
    layer: &[usize],
    v: &VirtualGraph,
    use_functions: bool,
) -> Vec<Vec<usize>> {
    fn blocks(vnodes: &[usize], depth: usize, v: &VirtualGraph, use_fns: bool) -> Vec<Vec<Vec<usize>>> {
        // returns, per block, its list of possible internal orders
        let mut loop_groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        let mut free: Vec<usize> = Vec::new();
        for &vn in vnodes {
            match v.loop_paths[vn].get(depth) {
                Some(&l) => loop_groups.entry(l).or_default().push(vn),
                None => free.push(vn),
            }
        }
        let mut out: Vec<Vec<Vec<usize>>> = Vec::new();
        if use_fns {
            let mut fn_groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
            for vn in free {
                let key = v.functions[vn].clone().unwrap_or_else(|| format!("\u{0}{}", v.ids[vn]));
                fn_groups.entry(key).or_default().push(vn);
            }
            for (_, vs) in fn_groups {
                out.push(permutations(&vs));
            }
        } else {
            for vn in free {
                out.push(vec![vec![vn]]);
            }
        }
        for (_, vs) in loop_groups {
            let inner = blocks(&vs, depth + 1, v, use_fns);
            out.push(arrangements(&inner));
        }
        out
    }
    fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
        if items.len() <= 1 {
            return vec![items.to_vec()];
        }
        let mut out = Vec::new();
        for i in 0..items.len() {
            let mut rest = items.to_vec();
            let x = rest.remove(i);
            for mut p in permutations(&rest) {
                p.insert(0, x);
                out.push(p);
            }
        }
        out
    }
    /// All orderings of blocks x all internal orders.
    fn arrangements(block_orders: &[Vec<Vec<usize>>]) -> Vec<Vec<usize>> {
        let k = block_orders.len();
        let mut out = Vec::new();
        let idx: Vec<usize> = (0..k).collect();
        for block_perm in permutations(&idx) {
            // cartesian product of internal orders
            let mut partial: Vec<Vec<usize>> = vec![Vec::new()];
            for &bi in &block_perm {
                let mut next = Vec::new();
                for p in &partial {
                    for internal in &block_orders[bi] {
                        let mut q = p.clone();
                        q.extend(internal);
                        next.push(q);
                    }
                }
                partial = next;
            }
            out.extend(partial);
        }
        out
    }
    arrangements(&blocks(layer, 0, v, use_functions))
}

/// A loop spanning two functions breaks function contiguity; the loop
/// constraint wins and we say so once.
fn warn_on_conflicts(graph: &DrawGraph, config: &LayoutConfig, diags: &mut Diagnostics) {
    if !config.show_boundaries {
        return;
    }
    for f in &graph.functions {
        let mut split = false;
        for l in &graph.loops {
            let inside = f.members.intersection(&l.members).count();
            if inside > 0 && inside < f.members.len() && f.members.iter().any(|m| !l.members.contains(m)) {
                // some members in the loop, some out: contiguity can break
                let outside_has_loopless = f
                    .members
                    .iter()
                    .any(|m| !l.members.contains(m));
                if outside_has_loopless {
                    split = true;
                }
            }
        }
        if split {
            diags.warning(
                "/rendering/function",
                format!(
                    "function \"{}\" straddles a loop boundary; loop contiguity takes precedence over function grouping",
                    f.name
                ),
            );
        }
    }
}

/// Place boxes: left-to-right per layer with gaps, then one median
/// alignment pass that preserves ordering.
fn assign_coordinates(
    graph: &DrawGraph,
    v: &VirtualGraph,
    orders: &[Vec<usize>],
    config: &LayoutConfig,
) -> (Vec<Rect>, Vec<f64>) {
    let mut boxes = vec![Rect::default(); v.ids.len()];
    let mut layer_y = Vec::with_capacity(orders.len());
    let mut y = 0.0;
    for order in orders {
        layer_y.push(y);
        let max_h = order
            .iter()
            .map(|&vn| v.heights[vn])
            .fold(config.node_height, f64::max);
        let mut x = 0.0;
        let mut prev: Option<usize> = None;
        for &vn in order {
            if let Some(p) = prev {
                x += config.x_gap;
                if group_border(graph, v, p, vn) {
                    x += config.group_gap;
                }
            }
            boxes[vn] = Rect { x, y, w: v.widths[vn], h: v.heights[vn] };
            x += v.widths[vn];
            prev = Some(vn);
        }
        y += max_h + config.layer_spacing;
    }

    // median alignment: pull each node toward the median x of its upper
    // neighbors, then restore minimum gaps left to right
    for l in 1..orders.len() {
        let mut desired: Vec<f64> = Vec::with_capacity(orders[l].len());
        for &vn in &orders[l] {
            let mut xs: Vec<f64> = v
                .segments
                .iter()
                .filter(|&&(_, b)| b == vn)
                .map(|&(a, _)| boxes[a].cx())
                .collect();
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let center = if xs.is_empty() {
                boxes[vn].cx()
            } else {
                xs[xs.len() / 2]
            };
            desired.push(center - boxes[vn].w / 2.0);
        }
        let mut cursor = f64::NEG_INFINITY;
        let mut prev: Option<usize> = None;
        for (i, &vn) in orders[l].iter().enumerate() {
            let mut gap = 0.0;
            if let Some(p) = prev {
                gap = config.x_gap + if group_border(graph, v, p, vn) { config.group_gap } else { 0.0 };
            }
            let x = desired[i].max(if cursor.is_finite() { cursor + gap } else { desired[i] });
            boxes[vn].x = x;
            cursor = x + boxes[vn].w;
            prev = Some(vn);
        }
    }
    (boxes, layer_y)
}

fn group_border(_graph: &DrawGraph, v: &VirtualGraph, a: usize, b: usize) -> bool {
    v.loop_paths[a] != v.loop_paths[b] || v.functions[a] != v.functions[b]
}

/// Convex hull (with padding) of a loop's member boxes, dummy boxes of
/// internal edges included so routes stay covered.
fn compute_hulls(
    graph: &DrawGraph,
    v: &VirtualGraph,
    boxes: &[Rect],
    config: &LayoutConfig,
) -> Vec<LoopHull> {
    let mut hulls = Vec::new();
    for (li, l) in graph.loops.iter().enumerate() {
        let mut pts: Vec<Point> = Vec::new();
        let mut push_box = |r: &Rect| {
            let p = config.hull_pad;
            pts.push((r.x - p, r.y - p));
            pts.push((r.right() + p, r.y - p));
            pts.push((r.right() + p, r.bottom() + p));
            pts.push((r.x - p, r.bottom() + p));
        };
        for &m in &l.members {
            push_box(&boxes[m]);
        }
        for vn in graph.nodes.len()..v.ids.len() {
            if v.loop_paths[vn].contains(&li) {
                push_box(&boxes[vn]);
            }
        }
        if pts.is_empty() {
            continue;
        }
        hulls.push(LoopHull { loop_idx: li, polygon: convex_hull(&pts), depth: l.depth });
    }
    hulls
}

/// Monotone-chain convex hull; output counter-clockwise in screen
/// coordinates (y down), starting from the lexicographically smallest point.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() <= 2 {
        return pts;
    }
    let cross = |o: Point, a: Point, b: Point| -> f64 {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut lower: Vec<Point> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn compute_function_rects(
    graph: &DrawGraph,
    boxes: &[Rect],
    config: &LayoutConfig,
) -> Vec<(usize, Rect)> {
    let mut out = Vec::new();
    for (fi, f) in graph.functions.iter().enumerate() {
        if f.members.is_empty() {
            continue;
        }
        let p = config.hull_pad;
        let mut min_x = f64::INFINITY;
        let mut min_y = f64::INFINITY;
        let mut max_x = f64::NEG_INFINITY;
        let mut max_y = f64::NEG_INFINITY;
        for &m in &f.members {
            min_x = min_x.min(boxes[m].x);
            min_y = min_y.min(boxes[m].y);
            max_x = max_x.max(boxes[m].right());
            max_y = max_y.max(boxes[m].bottom());
        }
        out.push((
            fi,
            Rect { x: min_x - p, y: min_y - p, w: max_x - min_x + 2.0 * p, h: max_y - min_y + 2.0 * p },
        ));
    }
    out
}

/// Routes: forward edges thread their dummy nodes; reversed edges are
/// restored and swung around the right side of the loop hull, entering the
/// header from above.
fn route_edges(
    graph: &DrawGraph,
    v: &VirtualGraph,
    boxes: &[Rect],
    hulls: &[LoopHull],
    reversed: &BTreeSet<usize>,
    config: &LayoutConfig,
) -> Vec<EdgeRoute> {
    let hull_max_x: BTreeMap<usize, f64> = hulls
        .iter()
        .map(|h| {
            (h.loop_idx, h.polygon.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max))
        })
        .collect();

    let mut per_loop_ordinal: BTreeMap<Option<usize>, usize> = BTreeMap::new();
    let mut routes = Vec::with_capacity(graph.edges.len());
    for (ei, e) in graph.edges.iter().enumerate() {
        if !reversed.contains(&ei) {
            let chain = &v.edge_chains[ei];
            let mut points = Vec::with_capacity(chain.len());
            let src = &boxes[chain[0]];
            points.push((src.cx(), src.bottom()));
            for &d in &chain[1..chain.len() - 1] {
                points.push((boxes[d].cx(), boxes[d].cy()));
            }
            let tgt = &boxes[*chain.last().unwrap()];
            points.push((tgt.cx(), tgt.y));
            routes.push(EdgeRoute { edge: ei, points, is_back_edge: false });
            continue;
        }
        // reversed edge, original direction source -> target
        let src = &boxes[e.source];
        let tgt = &boxes[e.target];
        let ordinal = per_loop_ordinal.entry(e.loop_id).or_insert(0);
        let base_x = match e.loop_id.and_then(|l| hull_max_x.get(&l)) {
            Some(&hx) => hx,
            None => src.right().max(tgt.right()) + config.hull_pad,
        };
        let xr = base_x + 16.0 + 8.0 * *ordinal as f64;
        *ordinal += 1;
        let y_above = tgt.y - config.hull_pad - 6.0;
        let entry_x = tgt.cx() + tgt.w / 4.0;
        let points = vec![
            (src.right(), src.cy()),
            (xr, src.cy()),
            (xr, y_above),
            (entry_x, y_above),
            (entry_x, tgt.y),
        ];
        routes.push(EdgeRoute { edge: ei, points, is_back_edge: true });
    }
    routes
}

/// Discs sit 18px off the anchor (above for incoming context, below for
/// outgoing), nudged sideways in 6px steps away from boxes and other discs.
fn place_boundary_discs(
    graph: &DrawGraph,
    boxes: &[Rect],
    config: &LayoutConfig,
) -> Vec<DiscPlacement> {
    let mut order: Vec<usize> = (0..graph.boundary.len()).collect();
    order.sort_by(|&a, &b| {
        let (ga, gb) = (&graph.boundary[a], &graph.boundary[b]);
        graph.nodes[ga.anchor]
            .id
            .cmp(&graph.nodes[gb.anchor].id)
            .then(dir_rank(ga.direction).cmp(&dir_rank(gb.direction)))
    });
    let r = config.disc_radius;
    let mut placed: Vec<DiscPlacement> = Vec::new();
    for gi in order {
        let g = &graph.boundary[gi];
        let anchor = &boxes[g.anchor];
        let cy = match g.direction {
            Direction::Incoming => anchor.y - config.disc_offset,
            Direction::Outgoing => anchor.bottom() + config.disc_offset,
        };
        let base_cx = anchor.cx();
        let mut chosen = base_cx;
        'nudge: for step in 0..=20 {
            for sign in if step == 0 { vec![1.0] } else { vec![1.0, -1.0] } {
                let cx = base_cx + sign * step as f64 * config.disc_nudge;
                let clear_boxes = boxes
                    .iter()
                    .all(|b| !circle_hits_rect((cx, cy), r, b));
                let clear_discs = placed
                    .iter()
                    .all(|d| {
                        let dx = d.center.0 - cx;
                        let dy = d.center.1 - cy;
                        dx * dx + dy * dy >= (2.0 * r) * (2.0 * r)
                    });
                if clear_boxes && clear_discs {
                    chosen = cx;
                    break 'nudge;
                }
            }
        }
        placed.push(DiscPlacement { group: gi, center: (chosen, cy), radius: r, count: g.count });
    }
    placed.sort_by_key(|d| d.group);
    placed
}

fn dir_rank(d: Direction) -> u8 {
    match d {
        Direction::Incoming => 0,
        Direction::Outgoing => 1,
    }
}

fn circle_hits_rect(c: Point, r: f64, rect: &Rect) -> bool {
    if rect.w <= 0.0 || rect.h <= 0.0 {
        return false;
    }
    let nx = c.0.clamp(rect.x, rect.right());
    let ny = c.1.clamp(rect.y, rect.bottom());
    let dx = c.0 - nx;
    let dy = c.1 - ny;
    dx * dx + dy * dy < r * r
}

fn overall_bounds(geometry: &LayoutGeometry, _layer_y: &[f64]) -> Rect {
    let mut min_x = f64::INFINITY;
    let mut min_y = f64::INFINITY;
    let mut max_x = f64::NEG_INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    let mut feed = |x: f64, y: f64| {
        min_x = min_x.min(x);
        min_y = min_y.min(y);
        max_x = max_x.max(x);
        max_y = max_y.max(y);
    };
    for b in &geometry.node_boxes {
        feed(b.x, b.y);
        feed(b.right(), b.bottom());
    }
    for r in &geometry.edge_routes {
        for &(x, y) in &r.points {
            feed(x, y);
        }
    }
    for h in &geometry.loop_hulls {
        for &(x, y) in &h.polygon {
            feed(x, y);
        }
    }
    for (_, r) in &geometry.function_rects {
        feed(r.x, r.y);
        feed(r.right(), r.bottom());
    }
    for d in &geometry.disc_placements {
        feed(d.center.0 - d.radius, d.center.1 - d.radius);
        feed(d.center.0 + d.radius, d.center.1 + d.radius);
    }
    if !min_x.is_finite() {
        return Rect::default();
    }
    Rect { x: min_x, y: min_y, w: max_x - min_x, h: max_y - min_y }
}

/// Point-in-polygon (strict interior) for layout checks in tests.
pub fn point_in_polygon(p: Point, poly: &[Point]) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let (x1, y1) = poly[i];
        let (x2, y2) = poly[(i + 1) % n];
        if (y1 > p.1) != (y2 > p.1) {
            let xint = x1 + (p.1 - y1) / (y2 - y1) * (x2 - x1);
            if p.0 < xint {
                inside = !inside;
            }
        }
    }
    inside
}

#[cfg(test)]
mod tests;
