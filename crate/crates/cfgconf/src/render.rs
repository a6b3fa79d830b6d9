//! SVG serialization of a laid-out graph.
//!
//! Output is a standalone SVG 1.1 subset (rect, polygon, ellipse, path,
//! circle, text, g) with a fixed layer order: loop hulls (outermost first),
//! function rectangles, edges, node boxes, boundary discs, labels. Styles
//! resolve field by field: built-in default, then the rendering section's
//! global style, then the element's own overrides.

use std::fmt::Write as _;

use crate::filter::Direction;
use crate::layout::{DrawGraph, LayoutGeometry, Point, Rect};
use crate::spec_model::StyleMap;

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOptions {
    pub show_loop_background: bool,
    pub loop_background_color: String,
    pub back_edge_color: String,
    pub show_function_boundaries: bool,
    pub global_node_style: StyleMap,
    pub global_edge_style: StyleMap,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            show_loop_background: true,
            loop_background_color: crate::spec_model::defaults::LOOP_BACKGROUND_COLOR.into(),
            back_edge_color: crate::spec_model::defaults::BACK_EDGE_COLOR.into(),
            show_function_boundaries: true,
            global_node_style: StyleMap::new(),
            global_edge_style: StyleMap::new(),
        }
    }
}

/// Final per-element style after the three-level resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleResolved {
    pub shape: String,
    pub fill: String,
    pub stroke: String,
    pub stroke_width: f64,
    pub dashed: bool,
    pub font_color: String,
}

impl Default for StyleResolved {
    fn default() -> Self {
        StyleResolved {
            shape: "box".into(),
            fill: "#FFFFFF".into(),
            stroke: "#000000".into(),
            stroke_width: 1.0,
            dashed: false,
            font_color: "#000000".into(),
        }
    }
}

/// Layer the overrides onto the defaults, field by field.
pub fn resolve_style(global: &StyleMap, local: &StyleMap) -> StyleResolved {
    let mut s = StyleResolved::default();
    for map in [global, local] {
        if let Some(v) = map.get("shape") {
            s.shape = v.clone();
        }
        if let Some(v) = map.get("fillcolor") {
            s.fill = v.clone();
        }
        if let Some(v) = map.get("color") {
            s.stroke = v.clone();
        }
        if let Some(v) = map.get("penwidth") {
            if let Ok(w) = v.parse::<f64>() {
                s.stroke_width = w;
            }
        }
        if let Some(v) = map.get("fontcolor") {
            s.font_color = v.clone();
        }
        if let Some(v) = map.get("style") {
            s.dashed = v.split(',').any(|p| p.trim() == "dashed");
        }
    }
    s
}

const FONT: &str = "monospace";
const FONT_SIZE: f64 = 13.0;
const MARGIN: f64 = 20.0;

fn esc(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Shortest unambiguous decimal for coordinates.
fn num(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

fn points_attr(points: &[Point]) -> String {
    points
        .iter()
        .map(|&(x, y)| format!("{},{}", num(x), num(y)))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn render_svg(graph: &DrawGraph, geometry: &LayoutGeometry, options: &RenderOptions) -> String {
    let b = geometry.bounds;
    let (vx, vy, vw, vh) = (
        b.x - MARGIN,
        b.y - MARGIN,
        b.w + 2.0 * MARGIN,
        b.h + 2.0 * MARGIN,
    );
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{} {} {} {}\" width=\"{}\" height=\"{}\" font-family=\"{FONT}\" font-size=\"{FONT_SIZE}\">",
        num(vx), num(vy), num(vw.max(1.0)), num(vh.max(1.0)), num(vw.max(1.0)), num(vh.max(1.0)),
    );

    // loop hulls, outermost first
    out.push_str("  <g id=\"hulls\">\n");
    if options.show_loop_background {
        let mut hulls: Vec<_> = geometry.loop_hulls.iter().collect();
        hulls.sort_by_key(|h| (h.depth, h.loop_idx));
        for h in hulls {
            let opacity = (0.35 + 0.15 * h.depth as f64).min(0.8);
            let _ = writeln!(
                out,
                "    <polygon id=\"loop-{}\" points=\"{}\" fill=\"{}\" fill-opacity=\"{}\" stroke=\"none\"/>",
                esc(&graph.loops[h.loop_idx].id),
                points_attr(&h.polygon),
                esc(&options.loop_background_color),
                opacity,
            );
        }
    }
    out.push_str("  </g>\n");

    // function boundary rectangles
    out.push_str("  <g id=\"functions\">\n");
    if options.show_function_boundaries {
        for (fi, rect) in &geometry.function_rects {
            let f = &graph.functions[*fi];
            let _ = writeln!(
                out,
                "    <rect id=\"fn-{}\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#888888\" stroke-dasharray=\"2,2\"/>",
                esc(&f.id), num(rect.x), num(rect.y), num(rect.w), num(rect.h),
            );
            let _ = writeln!(
                out,
                "    <text x=\"{}\" y=\"{}\" fill=\"#888888\" font-size=\"{}\">{}</text>",
                num(rect.x + 4.0),
                num(rect.y - 4.0),
                FONT_SIZE - 2.0,
                esc(&f.name),
            );
        }
    }
    out.push_str("  </g>\n");

    // edges
    out.push_str("  <g id=\"edges\">\n");
    for route in &geometry.edge_routes {
        let e = &graph.edges[route.edge];
        let mut style = resolve_style(&options.global_edge_style, &e.style);
        if route.is_back_edge {
            style.stroke = options.back_edge_color.clone();
            style.stroke_width += 1.0;
        }
        let class = e
            .css_class
            .as_ref()
            .map(|c| format!(" class=\"{}\"", esc(c)))
            .unwrap_or_default();
        let dash = if style.dashed { " stroke-dasharray=\"4,3\"" } else { "" };
        let mut d = String::new();
        for (i, &(x, y)) in route.points.iter().enumerate() {
            let cmd = if i == 0 { 'M' } else { 'L' };
            let _ = write!(d, "{}{} {} ", cmd, num(x), num(y));
        }
        let _ = writeln!(
            out,
            "    <path id=\"edge-{}\" d=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"{}\"{}{}/>",
            route.edge,
            d.trim_end(),
            esc(&style.stroke),
            num(style.stroke_width),
            dash,
            class,
        );
        if route.points.len() >= 2 {
            out.push_str(&arrow_head(route.points[route.points.len() - 2], route.points[route.points.len() - 1], &style.stroke));
        }
        if let Some(label) = &e.label {
            let mid = route.points[route.points.len() / 2];
            let _ = writeln!(
                out,
                "    <text x=\"{}\" y=\"{}\" fill=\"{}\">{}</text>",
                num(mid.0 + 4.0),
                num(mid.1 - 4.0),
                esc(&style.font_color),
                esc(label),
            );
        }
    }
    out.push_str("  </g>\n");

    // node boxes and proxies
    out.push_str("  <g id=\"nodes\">\n");
    for (ni, node) in graph.nodes.iter().enumerate() {
        let rect = &geometry.node_boxes[ni];
        let mut style = resolve_style(&options.global_node_style, &node.style);
        if node.is_proxy {
            style.dashed = true;
        }
        out.push_str(&shape_element(ni, node, rect, &style));
    }
    out.push_str("  </g>\n");

    // boundary discs
    out.push_str("  <g id=\"discs\">\n");
    for d in &geometry.disc_placements {
        let group = &graph.boundary[d.group];
        let anchor = &geometry.node_boxes[group.anchor];
        let (cx, cy) = d.center;
        // stub from disc to anchor edge
        let ay = match group.direction {
            Direction::Incoming => anchor.y,
            Direction::Outgoing => anchor.bottom(),
        };
        let _ = writeln!(
            out,
            "    <path d=\"M{} {} L{} {}\" stroke=\"#555555\" stroke-width=\"1\" fill=\"none\"/>",
            num(cx), num(cy), num(anchor.cx()), num(ay),
        );
        if d.count >= 2 {
            let _ = writeln!(
                out,
                "    <circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"#FFFFFF\" stroke=\"#000000\"/>",
                num(cx + 3.0), num(cy - 3.0), num(d.radius),
            );
        }
        let _ = writeln!(
            out,
            "    <circle id=\"disc-{}\" cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"#FFFFFF\" stroke=\"#000000\"/>",
            d.group, num(cx), num(cy), num(d.radius),
        );
        if d.count >= 2 {
            let _ = writeln!(
                out,
                "    <text x=\"{}\" y=\"{}\" font-size=\"8\" text-anchor=\"middle\">{}</text>",
                num(cx + d.radius + 5.0), num(cy + 3.0), d.count,
            );
        }
    }
    out.push_str("  </g>\n");

    // labels last so nothing covers them
    out.push_str("  <g id=\"labels\">\n");
    for (ni, node) in graph.nodes.iter().enumerate() {
        let rect = &geometry.node_boxes[ni];
        let style = resolve_style(&options.global_node_style, &node.style);
        let lines: Vec<&str> = node.label.lines().collect();
        let n = lines.len().max(1);
        for (li, line) in lines.iter().enumerate() {
            let y = rect.cy() + FONT_SIZE / 3.0 + (li as f64 - (n as f64 - 1.0) / 2.0) * 16.0;
            let _ = writeln!(
                out,
                "    <text x=\"{}\" y=\"{}\" text-anchor=\"middle\" fill=\"{}\">{}</text>",
                num(rect.cx()),
                num(y),
                esc(&style.font_color),
                esc(line),
            );
        }
    }
    out.push_str("  </g>\n");

    out.push_str("</svg>\n");
    out
}

fn arrow_head(from: Point, to: Point, color: &str) -> String {
    let (dx, dy) = (to.0 - from.0, to.1 - from.1);
    let len = (dx * dx + dy * dy).sqrt();
    if len < 1e-9 {
        return String::new();
    }
    let (ux, uy) = (dx / len, dy / len);
    let (px, py) = (-uy, ux);
    let l = 8.0;
    let w = 3.0;
    let base = (to.0 - ux * l, to.1 - uy * l);
    let p1 = (base.0 + px * w, base.1 + py * w);
    let p2 = (base.0 - px * w, base.1 - py * w);
    format!(
        "    <polygon points=\"{}\" fill=\"{}\" stroke=\"none\"/>\n",
        points_attr(&[to, p1, p2]),
        esc(color),
    )
}

fn shape_element(ni: usize, node: &crate::layout::DrawNode, rect: &Rect, style: &StyleResolved) -> String {
    let _ = ni;
    let class = node
        .css_class
        .as_ref()
        .map(|c| format!(" class=\"{}\"", esc(c)))
        .unwrap_or_default();
    let dash = if style.dashed { " stroke-dasharray=\"4,3\"" } else { "" };
    let common = format!(
        "id=\"node-{}\" fill=\"{}\" stroke=\"{}\" stroke-width=\"{}\"{}{}",
        esc(&node.id),
        esc(&style.fill),
        esc(&style.stroke),
        num(style.stroke_width),
        dash,
        class,
    );
    match style.shape.as_str() {
        "diamond" => {
            let pts = [
                (rect.cx(), rect.y - rect.h * 0.25),
                (rect.right() + rect.w * 0.25, rect.cy()),
                (rect.cx(), rect.bottom() + rect.h * 0.25),
                (rect.x - rect.w * 0.25, rect.cy()),
            ];
            format!("    <polygon {} points=\"{}\"/>\n", common, points_attr(&pts))
        }
        "ellipse" => format!(
            "    <ellipse {} cx=\"{}\" cy=\"{}\" rx=\"{}\" ry=\"{}\"/>\n",
            common,
            num(rect.cx()),
            num(rect.cy()),
            num(rect.w / 2.0 + 4.0),
            num(rect.h / 2.0 + 4.0),
        ),
        _ => format!(
            "    <rect {} x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\"/>\n",
            common,
            num(rect.x),
            num(rect.y),
            num(rect.w),
            num(rect.h),
        ),
    }
}

/// Build [`RenderOptions`] from a spec's rendering section.
pub fn options_from_spec(spec: &crate::spec_model::Spec) -> RenderOptions {
    RenderOptions {
        show_loop_background: spec.show_loop_background(),
        loop_background_color: spec.loop_background_color().to_string(),
        back_edge_color: spec.back_edge_color().to_string(),
        show_function_boundaries: spec.show_function_boundaries(),
        global_node_style: spec.rendering.node.style.clone(),
        global_edge_style: spec.rendering.edge.style.clone(),
    }
}

/// Minimal well-formedness scan used by tests: tags balance and attribute
/// quoting is sane. Not a full XML parser.
pub fn check_xml(text: &str) -> Result<(), String> {
    let mut stack: Vec<String> = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'<' {
            i += 1;
            continue;
        }
        let end = text[i..]
            .find('>')
            .map(|e| i + e)
            .ok_or_else(|| format!("unclosed tag at byte {i}"))?;
        let inner = &text[i + 1..end];
        if let Some(name) = inner.strip_prefix('/') {
            let expect = stack.pop().ok_or_else(|| format!("stray closing tag </{name}>"))?;
            if name != expect {
                return Err(format!("mismatched tag: <{expect}> closed by </{name}>"));
            }
        } else if !inner.ends_with('/') && !inner.starts_with('?') && !inner.starts_with('!') {
            let name: String = inner
                .chars()
                .take_while(|c| c.is_alphanumeric() || *c == '-' || *c == '_')
                .collect();
            if inner.matches('"').count() % 2 != 0 {
                return Err(format!("odd number of quotes in tag <{name}>"));
            }
            stack.push(name);
        }
        i = end + 1;
    }
    if stack.is_empty() {
        Ok(())
    } else {
        Err(format!("unclosed tags: {stack:?}"))
    }
}
