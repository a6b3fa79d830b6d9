//! Parser and emitter for the dot subset used for CFG interchange.
//!
//! Supported input: `digraph { ... }` (optionally `strict`), node statements
//! with attribute lists, edge statements including chains (`a -> b -> c`),
//! quoted ids, `subgraph` blocks, `graph`/`node`/`edge` default attribute
//! statements, top-level `key = value` assignments, and `//`, `/* */`, and
//! `#` comments. Anything outside this subset is a parse error with a
//! line/column, never a silent skip. Undirected graphs and ports on input
//! are rejected.
//!
//! Emission is byte-deterministic: 2-space indent, attributes sorted
//! lexicographically, ids quoted iff they are not plain identifiers or
//! numerals.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;

pub type AttrMap = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DotSubgraph {
    pub id: Option<String>,
    pub attrs: AttrMap,
    /// Node ids mentioned directly inside this block.
    pub nodes: Vec<String>,
    pub subgraphs: Vec<DotSubgraph>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DotGraph {
    pub directed: bool,
    pub id: Option<String>,
    pub graph_attrs: AttrMap,
    /// First-mention order, preserved exactly.
    pub nodes: Vec<(String, AttrMap)>,
    pub edges: Vec<(String, String, AttrMap)>,
    pub subgraphs: Vec<DotSubgraph>,
}

impl Default for DotGraph {
    fn default() -> Self {
        DotGraph {
            directed: true,
            id: None,
            graph_attrs: AttrMap::new(),
            nodes: Vec::new(),
            edges: Vec::new(),
            subgraphs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DotError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for DotError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)
    }
}

impl std::error::Error for DotError {}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Id(String),
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Semi,
    Comma,
    Equals,
    Arrow,     // ->
    UndirEdge, // --
    Colon,
    Eof,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col: usize,
}

struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src: src.as_bytes(), pos: 0, line: 1, col: 1 }
    }

    fn err(&self, line: usize, col: usize, message: impl Into<String>) -> DotError {
        DotError { line, column: col, message: message.into() }
    }

    fn bump(&mut self) -> Option<u8> {
        let b = *self.src.get(self.pos)?;
        self.pos += 1;
        if b == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(b)
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn peek2(&self) -> Option<u8> {
        self.src.get(self.pos + 1).copied()
    }

    fn skip_trivia(&mut self) -> Result<(), DotError> {
        loop {
            match self.peek() {
                Some(b) if b.is_ascii_whitespace() => {
                    self.bump();
                }
                Some(b'#') => {
                    while let Some(b) = self.peek() {
                        if b == b'\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                Some(b'/') if self.peek2() == Some(b'/') => {
                    while let Some(b) = self.peek() {
                        if b == b'\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                Some(b'/') if self.peek2() == Some(b'*') => {
                    let (line, col) = (self.line, self.col);
                    self.bump();
                    self.bump();
                    loop {
                        match self.peek() {
                            None => return Err(self.err(line, col, "unterminated block comment")),
                            Some(b'*') if self.peek2() == Some(b'/') => {
                                self.bump();
                                self.bump();
                                break;
                            }
                            _ => {
                                self.bump();
                            }
                        }
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    fn next(&mut self) -> Result<Spanned, DotError> {
        self.skip_trivia()?;
        let (line, col) = (self.line, self.col);
        let tok = match self.peek() {
            None => Tok::Eof,
            Some(b'{') => {
                self.bump();
                Tok::LBrace
            }
            Some(b'}') => {
                self.bump();
                Tok::RBrace
            }
            Some(b'[') => {
                self.bump();
                Tok::LBracket
            }
            Some(b']') => {
                self.bump();
                Tok::RBracket
            }
            Some(b';') => {
                self.bump();
                Tok::Semi
            }
            Some(b',') => {
                self.bump();
                Tok::Comma
            }
            Some(b'=') => {
                self.bump();
                Tok::Equals
            }
            Some(b':') => {
                self.bump();
                Tok::Colon
            }
            Some(b'-') if self.peek2() == Some(b'>') => {
                self.bump();
                self.bump();
                Tok::Arrow
            }
            Some(b'-') if self.peek2() == Some(b'-') => {
                self.bump();
                self.bump();
                Tok::UndirEdge
            }
            Some(b'"') => {
                self.bump();
                let mut s = String::new();
                loop {
                    match self.bump() {
                        None => return Err(self.err(line, col, "unterminated quoted string")),
                        Some(b'"') => break,
                        Some(b'\\') => match self.bump() {
                            Some(b'"') => s.push('"'),
                            Some(b'\\') => s.push('\\'),
                            Some(b'\n') => {} // line continuation
                            Some(other) => {
                                s.push('\\');
                                s.push(other as char);
                            }
                            None => return Err(self.err(line, col, "unterminated quoted string")),
                        },
                        Some(b) if b < 0x80 => s.push(b as char),
                        Some(b) => {
                            // reassemble multi-byte UTF-8
                            let start = self.pos - 1;
                            let len = utf8_len(b);
                            for _ in 1..len {
                                self.bump();
                            }
                            match std::str::from_utf8(&self.src[start..start + len]) {
                                Ok(chunk) => s.push_str(chunk),
                                Err(_) => return Err(self.err(line, col, "invalid UTF-8 in string")),
                            }
                        }
                    }
                }
                Tok::Id(s)
            }
            Some(b'<') => {
                return Err(self.err(line, col, "HTML-like labels are not supported"));
            }
            Some(b) if b == b'-' || b == b'.' || b.is_ascii_digit() => {
                let mut s = String::new();
                s.push(self.bump().unwrap() as char);
                while let Some(b) = self.peek() {
                    if b.is_ascii_digit() || b == b'.' {
                        s.push(self.bump().unwrap() as char);
                    } else {
                        break;
                    }
                }
                Tok::Id(s)
            }
            Some(b) if b.is_ascii_alphabetic() || b == b'_' || b >= 0x80 => {
                let start = self.pos;
                while let Some(b) = self.peek() {
                    if b.is_ascii_alphanumeric() || b == b'_' || b >= 0x80 {
                        self.bump();
                    } else {
                        break;
                    }
                }
                match std::str::from_utf8(&self.src[start..self.pos]) {
                    Ok(s) => Tok::Id(s.to_string()),
                    Err(_) => return Err(self.err(line, col, "invalid UTF-8 in identifier")),
                }
            }
            Some(b) => {
                return Err(self.err(line, col, format!("unexpected character {:?}", b as char)));
            }
        };
        Ok(Spanned { tok, line, col })
    }
}

fn utf8_len(first: u8) -> usize {
    match first {
        b if b >= 0xF0 => 4,
        b if b >= 0xE0 => 3,
        b if b >= 0xC0 => 2,
        _ => 1,
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    current: Spanned,
    graph: DotGraph,
    node_seen: BTreeMap<String, usize>,
}

/// Defaults inherited into nested scopes.
#[derive(Clone, Default)]
struct Scope {
    node_defaults: AttrMap,
    edge_defaults: AttrMap,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Result<Self, DotError> {
        let mut lexer = Lexer::new(src);
        let current = lexer.next()?;
        Ok(Parser {
            lexer,
            current,
            graph: DotGraph::default(),
            node_seen: BTreeMap::new(),
        })
    }

    fn err_here(&self, message: impl Into<String>) -> DotError {
        DotError {
            line: self.current.line,
            column: self.current.col,
            message: message.into(),
        }
    }

    fn advance(&mut self) -> Result<(), DotError> {
        self.current = self.lexer.next()?;
        Ok(())
    }

    fn eat(&mut self, tok: &Tok, what: &str) -> Result<(), DotError> {
        if &self.current.tok == tok {
            self.advance()
        } else {
            Err(self.err_here(format!("expected {what}")))
        }
    }

    fn keyword(&self) -> Option<String> {
        match &self.current.tok {
            Tok::Id(s) => Some(s.to_ascii_lowercase()),
            _ => None,
        }
    }

    fn parse(mut self) -> Result<DotGraph, DotError> {
        if self.keyword().as_deref() == Some("strict") {
            self.advance()?;
        }
        match self.keyword().as_deref() {
            Some("digraph") => {
                self.advance()?;
            }
            Some("graph") => {
                return Err(self.err_here("CFGs must be directed; use \"digraph\""));
            }
            _ => return Err(self.err_here("expected \"digraph\"")),
        }
        if let Tok::Id(name) = &self.current.tok {
            self.graph.id = Some(name.clone());
            self.advance()?;
        }
        self.eat(&Tok::LBrace, "\"{\"")?;
        let scope = Scope::default();
        let mut top = DotSubgraph::default();
        self.parse_stmts(&scope, &mut top, true)?;
        self.graph.subgraphs = top.subgraphs;
        match self.current.tok {
            Tok::Eof => Ok(self.graph),
            _ => Err(self.err_here("unexpected trailing content after graph body")),
        }
    }

    fn parse_stmts(
        &mut self,
        outer: &Scope,
        container: &mut DotSubgraph,
        top_level: bool,
    ) -> Result<(), DotError> {
        let mut scope = outer.clone();
        loop {
            match &self.current.tok {
                Tok::RBrace => {
                    self.advance()?;
                    return Ok(());
                }
                Tok::Eof => return Err(self.err_here("unexpected end of input; missing \"}\"")),
                Tok::Semi => {
                    self.advance()?;
                }
                Tok::Id(_) => {
                    self.parse_stmt(&mut scope, container, top_level)?;
                }
                Tok::LBrace => {
                    // anonymous subgraph
                    self.advance()?;
                    let mut sub = DotSubgraph::default();
                    self.parse_stmts(&scope, &mut sub, false)?;
                    container.subgraphs.push(sub);
                }
                _ => return Err(self.err_here("expected a statement")),
            }
        }
    }

    fn parse_stmt(
        &mut self,
        scope: &mut Scope,
        container: &mut DotSubgraph,
        top_level: bool,
    ) -> Result<(), DotError> {
        let kw = self.keyword();
        match kw.as_deref() {
            Some("node") => {
                self.advance()?;
                let attrs = self.parse_attr_list()?;
                scope.node_defaults.extend(attrs);
                return Ok(());
            }
            Some("edge") => {
                self.advance()?;
                let attrs = self.parse_attr_list()?;
                scope.edge_defaults.extend(attrs);
                return Ok(());
            }
            Some("graph") => {
                self.advance()?;
                let attrs = self.parse_attr_list()?;
                if top_level {
                    self.graph.graph_attrs.extend(attrs);
                } else {
                    container.attrs.extend(attrs);
                }
                return Ok(());
            }
            Some("subgraph") => {
                self.advance()?;
                let mut sub = DotSubgraph::default();
                if let Tok::Id(name) = &self.current.tok {
                    sub.id = Some(name.clone());
                    self.advance()?;
                }
                self.eat(&Tok::LBrace, "\"{\"")?;
                self.parse_stmts(scope, &mut sub, false)?;
                container.subgraphs.push(sub);
                return Ok(());
            }
            _ => {}
        }

        let first = match &self.current.tok {
            Tok::Id(s) => s.clone(),
            _ => return Err(self.err_here("expected an identifier")),
        };
        self.advance()?;

        if self.current.tok == Tok::Equals {
            // graph attribute assignment: key = value
            self.advance()?;
            let value = match &self.current.tok {
                Tok::Id(s) => s.clone(),
                _ => return Err(self.err_here("expected a value after \"=\"")),
            };
            self.advance()?;
            if top_level {
                self.graph.graph_attrs.insert(first, value);
            } else {
                container.attrs.insert(first, value);
            }
            return Ok(());
        }

        if self.current.tok == Tok::Colon {
            return Err(self.err_here("ports are not supported in input"));
        }

        // edge chain
        let mut chain = vec![first.clone()];
        while self.current.tok == Tok::Arrow || self.current.tok == Tok::UndirEdge {
            if self.current.tok == Tok::UndirEdge {
                return Err(self.err_here("undirected edges are not supported; CFGs must be directed"));
            }
            self.advance()?;
            match &self.current.tok {
                Tok::Id(s) => {
                    chain.push(s.clone());
                    self.advance()?;
                    if self.current.tok == Tok::Colon {
                        return Err(self.err_here("ports are not supported in input"));
                    }
                }
                _ => return Err(self.err_here("expected a node id after \"->\"")),
            }
        }

        let attrs = self.parse_attr_list()?;

        if chain.len() == 1 {
            // node statement
            let mut merged = scope.node_defaults.clone();
            merged.extend(attrs);
            self.declare_node(&first, merged, container);
        } else {
            for id in &chain {
                self.declare_node(id, scope.node_defaults.clone(), container);
            }
            for pair in chain.windows(2) {
                let mut merged = scope.edge_defaults.clone();
                merged.extend(attrs.clone());
                self.graph.edges.push((pair[0].clone(), pair[1].clone(), merged));
            }
        }
        Ok(())
    }

    fn declare_node(&mut self, id: &str, attrs: AttrMap, container: &mut DotSubgraph) {
        match self.node_seen.get(id) {
            Some(&idx) => {
                let existing = &mut self.graph.nodes[idx].1;
                existing.extend(attrs);
            }
            None => {
                self.node_seen.insert(id.to_string(), self.graph.nodes.len());
                self.graph.nodes.push((id.to_string(), attrs));
            }
        }
        if !container.nodes.iter().any(|n| n == id) {
            container.nodes.push(id.to_string());
        }
    }

    fn parse_attr_list(&mut self) -> Result<AttrMap, DotError> {
        let mut attrs = AttrMap::new();
        while self.current.tok == Tok::LBracket {
            self.advance()?;
            loop {
                match &self.current.tok {
                    Tok::RBracket => {
                        self.advance()?;
                        break;
                    }
                    Tok::Id(key) => {
                        let key = key.clone();
                        self.advance()?;
                        self.eat(&Tok::Equals, "\"=\" in attribute")?;
                        let value = match &self.current.tok {
                            Tok::Id(v) => v.clone(),
                            _ => return Err(self.err_here("expected an attribute value")),
                        };
                        self.advance()?;
                        attrs.insert(key, value);
                        if self.current.tok == Tok::Comma || self.current.tok == Tok::Semi {
                            self.advance()?;
                        }
                    }
                    _ => return Err(self.err_here("expected an attribute name or \"]\"")),
                }
            }
        }
        Ok(attrs)
    }
}

/// Parse dot text into a [`DotGraph`].
pub fn parse_dot(text: &str) -> Result<DotGraph, DotError> {
    Parser::new(text)?.parse()
}

/// True when the id can be emitted without quotes.
fn is_bare_id(s: &str) -> bool {
    if s.is_empty() {
        return false;
    }
    let keyword = matches!(
        s.to_ascii_lowercase().as_str(),
        "graph" | "digraph" | "subgraph" | "node" | "edge" | "strict"
    );
    if keyword {
        return false;
    }
    let mut chars = s.chars();
    let first = chars.next().unwrap();
    let alpha = (first.is_ascii_alphabetic() || first == '_')
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    let numeral = s.parse::<f64>().is_ok() && !s.contains(|c: char| c.is_ascii_whitespace());
    alpha || numeral
}

pub fn quote_id(s: &str) -> String {
    if is_bare_id(s) {
        s.to_string()
    } else {
        let escaped = s.replace('\\', "\\\\").replace('"', "\\\"");
        format!("\"{escaped}\"")
    }
}

fn fmt_attrs(attrs: &AttrMap) -> String {
    if attrs.is_empty() {
        return String::new();
    }
    let body: Vec<String> = attrs
        .iter()
        .map(|(k, v)| format!("{}={}", quote_id(k), quote_id(v)))
        .collect();
    format!(" [{}]", body.join(", "))
}

/// Serialize a [`DotGraph`] back to text. `parse_dot` of the output yields a
/// graph with identical node/edge multisets and attributes.
pub fn emit_dot_graph(g: &DotGraph) -> String {
    let mut out = String::new();
    match &g.id {
        Some(id) => {
            let _ = writeln!(out, "digraph {} {{", quote_id(id));
        }
        None => out.push_str("digraph {\n"),
    }
    for (k, v) in &g.graph_attrs {
        let _ = writeln!(out, "  {}={};", quote_id(k), quote_id(v));
    }
    for (id, attrs) in &g.nodes {
        let _ = writeln!(out, "  {}{};", quote_id(id), fmt_attrs(attrs));
    }
    for (s, t, attrs) in &g.edges {
        let _ = writeln!(out, "  {} -> {}{};", quote_id(s), quote_id(t), fmt_attrs(attrs));
    }
    out.push_str("}\n");
    out
}

/// Emission mode for [`emit_graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmitMode {
    /// The graph with style attributes and loop/function clusters.
    Plain,
    /// Additionally compile loop semantics for an external layered engine:
    /// back edges get `constraint=false` and `:s`/`:n` port routing, and
    /// invisible ordering edges pin each back-edge source below its header.
    Annotated,
}

/// Tunables for annotated emission.
#[derive(Debug, Clone)]
pub struct EmitConfig {
    pub invisible_edge_weight: u32,
    pub back_edge_constraint: bool,
}

impl Default for EmitConfig {
    fn default() -> Self {
        EmitConfig {
            invisible_edge_weight: 10,
            back_edge_constraint: false,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct EmitEdge {
    pub source: String,
    pub target: String,
    pub attrs: AttrMap,
    pub is_back_edge: bool,
}

#[derive(Debug, Clone, Default)]
pub struct EmitLoop {
    pub id: String,
    pub header: String,
    /// Drawn members only.
    pub members: Vec<String>,
    pub parent: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct EmitFunction {
    pub id: String,
    pub name: String,
    /// Drawn members not claimed by a loop cluster.
    pub members: Vec<String>,
}

/// Graph handed to the emitter by the pipeline: already filtered/collapsed,
/// with resolved per-node attributes.
#[derive(Debug, Clone, Default)]
pub struct EmitGraph {
    pub nodes: Vec<(String, AttrMap)>,
    pub edges: Vec<EmitEdge>,
    pub loops: Vec<EmitLoop>,
    pub functions: Vec<EmitFunction>,
}

fn emit_loop_cluster(
    out: &mut String,
    g: &EmitGraph,
    lp: &EmitLoop,
    node_attrs: &BTreeMap<&str, &AttrMap>,
    claimed: &mut Vec<String>,
    indent: usize,
) {
    let pad = "  ".repeat(indent);
    let _ = writeln!(out, "{pad}subgraph {} {{", quote_id(&format!("cluster_loop_{}", lp.id)));
    let inner = "  ".repeat(indent + 1);
    for child in g.loops.iter().filter(|c| c.parent.as_deref() == Some(lp.id.as_str())) {
        emit_loop_cluster(out, g, child, node_attrs, claimed, indent + 1);
    }
    for m in &lp.members {
        if !claimed.contains(m) {
            claimed.push(m.clone());
            let attrs = node_attrs.get(m.as_str()).copied();
            let _ = writeln!(
                out,
                "{inner}{}{};",
                quote_id(m),
                attrs.map(|a| fmt_attrs(a)).unwrap_or_default()
            );
        }
    }
    let _ = writeln!(out, "{pad}}}");
}

/// Emit the drawn graph as dot.
pub fn emit_graph(g: &EmitGraph, mode: EmitMode, config: &EmitConfig) -> String {
    let mut out = String::from("digraph {\n");
    let node_attrs: BTreeMap<&str, &AttrMap> =
        g.nodes.iter().map(|(id, a)| (id.as_str(), a)).collect();
    let mut claimed: Vec<String> = Vec::new();

    for lp in g.loops.iter().filter(|l| l.parent.is_none()) {
        emit_loop_cluster(&mut out, g, lp, &node_attrs, &mut claimed, 1);
    }
    for f in &g.functions {
        let free: Vec<&String> = f.members.iter().filter(|m| !claimed.contains(m)).collect();
        if free.is_empty() {
            continue;
        }
        let _ = writeln!(out, "  subgraph {} {{", quote_id(&format!("cluster_fn_{}", f.id)));
        let _ = writeln!(out, "    label={};", quote_id(&f.name));
        for m in free {
            claimed.push(m.clone());
            let attrs = node_attrs.get(m.as_str()).copied();
            let _ = writeln!(
                out,
                "    {}{};",
                quote_id(m),
                attrs.map(|a| fmt_attrs(a)).unwrap_or_default()
            );
        }
        out.push_str("  }\n");
    }
    for (id, attrs) in &g.nodes {
        if !claimed.contains(id) {
            let _ = writeln!(out, "  {}{};", quote_id(id), fmt_attrs(attrs));
        }
    }

    for e in &g.edges {
        let mut attrs = e.attrs.clone();
        let (mut src, mut tgt) = (quote_id(&e.source), quote_id(&e.target));
        if e.is_back_edge && mode == EmitMode::Annotated {
            // route the back edge from the source's south port around to the
            // header's north port, outside the loop body
            src.push_str(":s");
            tgt.push_str(":n");
            attrs.insert("constraint".into(), config.back_edge_constraint.to_string());
        }
        let _ = writeln!(out, "  {src} -> {tgt}{};", fmt_attrs(&attrs));
    }

    if mode == EmitMode::Annotated {
        // invisible ordering edges keep each back-edge source below its header
        for lp in &g.loops {
            let mut latches: Vec<&String> = g
                .edges
                .iter()
                .filter(|e| e.is_back_edge && e.target == lp.header && lp.members.contains(&e.source))
                .map(|e| &e.source)
                .collect();
            latches.sort();
            latches.dedup();
            for latch in latches {
                if *latch != lp.header {
                    let mut attrs = AttrMap::new();
                    attrs.insert("style".into(), "invis".into());
                    attrs.insert("weight".into(), config.invisible_edge_weight.to_string());
                    let _ = writeln!(
                        out,
                        "  {} -> {}{};",
                        quote_id(&lp.header),
                        quote_id(latch),
                        fmt_attrs(&attrs)
                    );
                }
            }
        }
    }

    out.push_str("}\n");
    out
}
