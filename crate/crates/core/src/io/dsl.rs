//! The textual graph language:
//!
//! ```text
//! graph NAME {
//!   vertices: ID (, ID)* ;
//!   (edge ID : ID -> ID ;)*
//!   (order ID <= ID ;)*
//!   (indexing : ID (, ID)* ;)?
//! }
//! ```
//!
//! `#` starts a line comment and `→` may replace `->`.

use std::collections::HashMap;
use std::fmt;

use crate::graph::{GraphError, GraphSpec, LearningGraph};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Location {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DslError {
    #[error("{at}: syntax error: expected {expected}, found {found}")]
    Syntax {
        at: Location,
        expected: String,
        found: String,
    },
    #[error("{at}: {error}")]
    Graph { at: Location, error: GraphError },
}

impl DslError {
    pub fn location(&self) -> Location {
        match self {
            DslError::Syntax { at, .. } | DslError::Graph { at, .. } => *at,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    LBrace,
    RBrace,
    Colon,
    Semi,
    Comma,
    Arrow,
    Leq,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::LBrace => write!(f, "`{{`"),
            Tok::RBrace => write!(f, "`}}`"),
            Tok::Colon => write!(f, "`:`"),
            Tok::Semi => write!(f, "`;`"),
            Tok::Comma => write!(f, "`,`"),
            Tok::Arrow => write!(f, "`->`"),
            Tok::Leq => write!(f, "`<=`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, Location)>, DslError> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    let (mut line, mut col) = (1, 1);
    while let Some(&c) = chars.peek() {
        let at = Location { line, col };
        let mut bump = |chars: &mut std::iter::Peekable<std::str::Chars<'_>>| {
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            c
        };
        match c {
            c if c.is_whitespace() => {
                bump(&mut chars);
            }
            '#' => {
                while chars.peek().is_some_and(|&c| c != '\n') {
                    bump(&mut chars);
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        s.push(c);
                        bump(&mut chars);
                    } else {
                        break;
                    }
                }
                out.push((Tok::Ident(s), at));
            }
            '{' | '}' | ':' | ';' | ',' | '→' => {
                bump(&mut chars);
                let t = match c {
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    ':' => Tok::Colon,
                    ';' => Tok::Semi,
                    ',' => Tok::Comma,
                    _ => Tok::Arrow,
                };
                out.push((t, at));
            }
            '-' | '<' => {
                bump(&mut chars);
                let (want, tok) = if c == '-' { ('>', Tok::Arrow) } else { ('=', Tok::Leq) };
                if chars.peek() == Some(&want) {
                    bump(&mut chars);
                    out.push((tok, at));
                } else {
                    return Err(DslError::Syntax {
                        at,
                        expected: if c == '-' { "`->`" } else { "`<=`" }.into(),
                        found: format!("`{c}`"),
                    });
                }
            }
            other => {
                return Err(DslError::Syntax {
                    at,
                    expected: "a token".into(),
                    found: format!("`{other}`"),
                })
            }
        }
    }
    out.push((Tok::Eof, Location { line, col }));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, Location)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn at(&self) -> Location {
        self.toks[self.pos].1
    }

    fn error(&self, expected: &str) -> DslError {
        DslError::Syntax {
            at: self.at(),
            expected: expected.into(),
            found: self.peek().to_string(),
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<(), DslError> {
        if *self.peek() == tok {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&tok.to_string()))
        }
    }

    fn ident(&mut self) -> Result<(String, Location), DslError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                let at = self.at();
                self.pos += 1;
                Ok((s, at))
            }
            _ => Err(self.error("an identifier")),
        }
    }

    fn keyword(&self, word: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == word)
    }

    fn ident_list(&mut self) -> Result<Vec<(String, Location)>, DslError> {
        let mut out = vec![self.ident()?];
        while *self.peek() == Tok::Comma {
            self.pos += 1;
            out.push(self.ident()?);
        }
        Ok(out)
    }
}

/// Where each label occurs in the source, for diagnostics.
#[derive(Default)]
struct Sites {
    vertex_decl: HashMap<String, Vec<Location>>,
    edge_decl: HashMap<String, Vec<Location>>,
    /// (edge label, endpoint label) -> endpoint location
    endpoint: HashMap<(String, String), Location>,
    edge_ref: HashMap<String, Location>,
    vertex_ref: HashMap<String, Location>,
    first_edge: HashMap<String, Location>,
}

fn locate(err: &GraphError, sites: &Sites, fallback: Location) -> Location {
    match err {
        GraphError::DuplicateLabel { kind, label } => {
            let m = if *kind == "vertex" { &sites.vertex_decl } else { &sites.edge_decl };
            m.get(label).and_then(|v| v.get(1).copied()).unwrap_or(fallback)
        }
        GraphError::UnknownEndpoint { edge, endpoint } => sites
            .endpoint
            .get(&(edge.clone(), endpoint.clone()))
            .copied()
            .unwrap_or(fallback),
        GraphError::UnknownEdge(l) => sites.edge_ref.get(l).copied().unwrap_or(fallback),
        GraphError::UnknownVertex(l) => sites.vertex_ref.get(l).copied().unwrap_or(fallback),
        GraphError::PolarityViolation(edges) => edges
            .first()
            .and_then(|e| sites.first_edge.get(e))
            .copied()
            .unwrap_or(fallback),
        GraphError::CycleDetected(_) | GraphError::EmptyLabel => fallback,
    }
}

/// Parses a graph block into its label-level description.
pub fn parse_graph_spec(text: &str) -> Result<GraphSpec, DslError> {
    parse_with_sites(text).map(|(spec, _, _)| spec)
}

fn parse_with_sites(text: &str) -> Result<(GraphSpec, Sites, Location), DslError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    let mut sites = Sites::default();
    if !p.keyword("graph") {
        return Err(p.error("`graph`"));
    }
    let start = p.at();
    p.pos += 1;
    let (name, _) = p.ident()?;
    p.expect(Tok::LBrace)?;
    if !p.keyword("vertices") {
        return Err(p.error("`vertices`"));
    }
    p.pos += 1;
    p.expect(Tok::Colon)?;
    let mut spec = GraphSpec::new().named(&name);
    for (v, at) in p.ident_list()? {
        sites.vertex_decl.entry(v.clone()).or_default().push(at);
        spec.vertices.push(v);
    }
    p.expect(Tok::Semi)?;
    while p.keyword("edge") {
        p.pos += 1;
        let (label, at) = p.ident()?;
        p.expect(Tok::Colon)?;
        let (src, sat) = p.ident()?;
        p.expect(Tok::Arrow)?;
        let (tgt, tat) = p.ident()?;
        p.expect(Tok::Semi)?;
        sites.edge_decl.entry(label.clone()).or_default().push(at);
        sites.first_edge.entry(label.clone()).or_insert(at);
        sites.endpoint.entry((label.clone(), src.clone())).or_insert(sat);
        sites.endpoint.entry((label.clone(), tgt.clone())).or_insert(tat);
        spec = spec.edge(&label, &src, &tgt);
    }
    while p.keyword("order") {
        p.pos += 1;
        let (a, aat) = p.ident()?;
        p.expect(Tok::Leq)?;
        let (b, bat) = p.ident()?;
        p.expect(Tok::Semi)?;
        sites.edge_ref.entry(a.clone()).or_insert(aat);
        sites.edge_ref.entry(b.clone()).or_insert(bat);
        spec = spec.order(&a, &b);
    }
    if p.keyword("indexing") {
        p.pos += 1;
        p.expect(Tok::Colon)?;
        // `indexing: ;` marks a labeled graph without indexing vertices
        let list = if *p.peek() == Tok::Semi { Vec::new() } else { p.ident_list()? };
        p.expect(Tok::Semi)?;
        for (v, at) in &list {
            sites.vertex_ref.entry(v.clone()).or_insert(*at);
        }
        spec.indexing = Some(list.into_iter().map(|(v, _)| v).collect());
    }
    if *p.peek() != Tok::RBrace {
        let expected = if spec.indexing.is_some() {
            "`}`"
        } else if spec.order.is_empty() {
            "`edge`, `order`, `indexing` or `}`"
        } else {
            "`order`, `indexing` or `}`"
        };
        return Err(p.error(expected));
    }
    p.pos += 1;
    if *p.peek() != Tok::Eof {
        return Err(p.error("end of input"));
    }
    Ok((spec, sites, start))
}

/// Parses and validates a graph; validation errors carry the location of
/// the offending declaration.
pub fn parse_graph(text: &str) -> Result<LearningGraph, DslError> {
    let (spec, sites, start) = parse_with_sites(text)?;
    LearningGraph::build(&spec).map_err(|error| DslError::Graph {
        at: locate(&error, &sites, start),
        error,
    })
}

/// Graph names are free text in the interchange form; the DSL needs an
/// identifier.
fn ident(name: &str) -> String {
    let mut out: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect();
    if !out.starts_with(|c: char| c.is_ascii_alphabetic() || c == '_') {
        out.insert(0, '_');
    }
    out
}

/// Prints a graph in the DSL; [`parse_graph`] reads it back.
pub fn format_graph(graph: &LearningGraph) -> String {
    let spec = graph.to_spec();
    let mut s = format!("graph {} {{\n", ident(spec.name.as_deref().unwrap_or("g")));
    s.push_str(&format!("  vertices: {};\n", spec.vertices.join(", ")));
    for e in &spec.edges {
        s.push_str(&format!("  edge {}: {} -> {};\n", e.label, e.src, e.tgt));
    }
    for (a, b) in &spec.order {
        s.push_str(&format!("  order {a} <= {b};\n"));
    }
    if let Some(ix) = &spec.indexing {
        s.push_str(&format!("  indexing: {};\n", ix.join(", ")));
    }
    s.push_str("}\n");
    s
}
