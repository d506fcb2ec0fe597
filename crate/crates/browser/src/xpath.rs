//! XPath 1.0 over an HTML tree.
//!
//! Covers location paths on every axis except `namespace`, predicates,
//! unions, the arithmetic/comparison operators, and the core function
//! library minus `id()` and `lang()`. Element and attribute names are matched
//! ASCII-case-insensitively, as browsers do for HTML documents.

use std::collections::HashMap;
use std::fmt;

use ego_tree::{NodeId, NodeRef};
use scraper::{Html, Node};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid xpath {expression:?}: {message}")]
pub struct XPathError {
    pub expression: String,
    pub message: String,
}

/// A node in the XPath data model. Attributes are addressed by their owner
/// element and their index in its attribute list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum XNode {
    Node(NodeId),
    Attr(NodeId, usize),
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Nodes(Vec<XNode>),
    Str(String),
    Num(f64),
    Bool(bool),
}

// ---------------------------------------------------------------------------
// Tokens

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Slash,
    DoubleSlash,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Dot,
    DotDot,
    At,
    Comma,
    ColonColon,
    Pipe,
    Plus,
    Minus,
    Eq,
    Neq,
    Lt,
    Le,
    Gt,
    Ge,
    Star,
    Multiply,
    And,
    Or,
    Div,
    Mod,
    Name(String),
    Literal(String),
    Number(f64),
}

impl Tok {
    /// Whether a following `*` or name must be read as an operator.
    fn leaves_operand(&self) -> bool {
        !matches!(
            self,
            Tok::At
                | Tok::ColonColon
                | Tok::LParen
                | Tok::LBracket
                | Tok::Comma
                | Tok::Slash
                | Tok::DoubleSlash
                | Tok::Pipe
                | Tok::Plus
                | Tok::Minus
                | Tok::Eq
                | Tok::Neq
                | Tok::Lt
                | Tok::Le
                | Tok::Gt
                | Tok::Ge
                | Tok::Multiply
                | Tok::And
                | Tok::Or
                | Tok::Div
                | Tok::Mod
        )
    }
}

fn is_name_start(c: char) -> bool {
    c.is_alphabetic() || c == '_'
}

fn is_name_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '-' | '.')
}

fn tokenize(input: &str) -> Result<Vec<Tok>, String> {
    let chars: Vec<char> = input.chars().collect();
    let mut toks: Vec<Tok> = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let operator_context = toks.last().is_some_and(Tok::leaves_operand);
        let tok = match c {
            ' ' | '\t' | '\n' | '\r' => {
                i += 1;
                continue;
            }
            '/' if chars.get(i + 1) == Some(&'/') => {
                i += 2;
                Tok::DoubleSlash
            }
            '/' => {
                i += 1;
                Tok::Slash
            }
            '(' => {
                i += 1;
                Tok::LParen
            }
            ')' => {
                i += 1;
                Tok::RParen
            }
            '[' => {
                i += 1;
                Tok::LBracket
            }
            ']' => {
                i += 1;
                Tok::RBracket
            }
            '@' => {
                i += 1;
                Tok::At
            }
            ',' => {
                i += 1;
                Tok::Comma
            }
            '|' => {
                i += 1;
                Tok::Pipe
            }
            '+' => {
                i += 1;
                Tok::Plus
            }
            '-' => {
                i += 1;
                Tok::Minus
            }
            '=' => {
                i += 1;
                Tok::Eq
            }
            '!' if chars.get(i + 1) == Some(&'=') => {
                i += 2;
                Tok::Neq
            }
            '<' if chars.get(i + 1) == Some(&'=') => {
                i += 2;
                Tok::Le
            }
            '<' => {
                i += 1;
                Tok::Lt
            }
            '>' if chars.get(i + 1) == Some(&'=') => {
                i += 2;
                Tok::Ge
            }
            '>' => {
                i += 1;
                Tok::Gt
            }
            ':' if chars.get(i + 1) == Some(&':') => {
                i += 2;
                Tok::ColonColon
            }
            '*' => {
                i += 1;
                if operator_context {
                    Tok::Multiply
                } else {
                    Tok::Star
                }
            }
            '"' | '\'' => {
                let end = chars[i + 1..]
                    .iter()
                    .position(|&q| q == c)
                    .ok_or("unterminated string literal")?;
                let lit: String = chars[i + 1..i + 1 + end].iter().collect();
                i += end + 2;
                Tok::Literal(lit)
            }
            '.' if chars.get(i + 1) == Some(&'.') => {
                i += 2;
                Tok::DotDot
            }
            '.' if !chars.get(i + 1).is_some_and(char::is_ascii_digit) => {
                i += 1;
                Tok::Dot
            }
            d if d.is_ascii_digit() || d == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                Tok::Number(text.parse().map_err(|_| format!("bad number {text:?}"))?)
            }
            n if is_name_start(n) => {
                let start = i;
                while i < chars.len() && is_name_char(chars[i]) {
                    i += 1;
                }
                // prefix:local or prefix:*
                if chars.get(i) == Some(&':') && chars.get(i + 1) != Some(&':') {
                    i += 1;
                    if chars.get(i) == Some(&'*') {
                        i += 1;
                    } else {
                        while i < chars.len() && is_name_char(chars[i]) {
                            i += 1;
                        }
                    }
                }
                let name: String = chars[start..i].iter().collect();
                if operator_context {
                    match name.as_str() {
                        "and" => Tok::And,
                        "or" => Tok::Or,
                        "div" => Tok::Div,
                        "mod" => Tok::Mod,
                        _ => return Err(format!("unexpected name {name:?}")),
                    }
                } else {
                    Tok::Name(name)
                }
            }
            other => return Err(format!("unexpected character {other:?}")),
        };
        toks.push(tok);
    }
    Ok(toks)
}

// ---------------------------------------------------------------------------
// Syntax tree

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[allow(clippy::enum_variant_names)]
enum Axis {
    Child,
    Descendant,
    DescendantOrSelf,
    Parent,
    Ancestor,
    AncestorOrSelf,
    FollowingSibling,
    PrecedingSibling,
    Following,
    Preceding,
    Attribute,
    SelfAxis,
}

impl Axis {
    fn from_name(name: &str) -> Option<Axis> {
        Some(match name {
            "child" => Axis::Child,
            "descendant" => Axis::Descendant,
            "descendant-or-self" => Axis::DescendantOrSelf,
            "parent" => Axis::Parent,
            "ancestor" => Axis::Ancestor,
            "ancestor-or-self" => Axis::AncestorOrSelf,
            "following-sibling" => Axis::FollowingSibling,
            "preceding-sibling" => Axis::PrecedingSibling,
            "following" => Axis::Following,
            "preceding" => Axis::Preceding,
            "attribute" => Axis::Attribute,
            "self" => Axis::SelfAxis,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum NodeTest {
    Any,
    Name(String),
    Text,
    Node,
    Comment,
}

#[derive(Debug, Clone, PartialEq)]
struct Step {
    axis: Axis,
    test: NodeTest,
    predicates: Vec<Expr>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum BinOp {
    Or,
    And,
    Eq,
    Neq,
    Lt,
    Le,
    Gt,
    Ge,
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Union,
}

#[derive(Debug, Clone, PartialEq)]
enum Expr {
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Negate(Box<Expr>),
    Literal(String),
    Number(f64),
    Call(String, Vec<Expr>),
    /// Absolute (from the document root) or relative location path.
    Path {
        absolute: bool,
        steps: Vec<Step>,
    },
    /// A primary expression filtered by predicates and followed by steps.
    Filter {
        primary: Box<Expr>,
        predicates: Vec<Expr>,
        steps: Vec<Step>,
    },
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn peek_at(&self, offset: usize) -> Option<&Tok> {
        self.toks.get(self.pos + offset)
    }

    fn next(&mut self) -> Option<Tok> {
        let tok = self.toks.get(self.pos).cloned();
        self.pos += 1;
        tok
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: &Tok) -> Result<(), String> {
        if self.eat(tok) {
            Ok(())
        } else {
            Err(format!("expected {tok:?}, found {:?}", self.peek()))
        }
    }

    fn expr(&mut self) -> Result<Expr, String> {
        self.binary_level(0)
    }

    fn binary_level(&mut self, level: usize) -> Result<Expr, String> {
        const LEVELS: &[&[(Tok, BinOp)]] = &[
            &[(Tok::Or, BinOp::Or)],
            &[(Tok::And, BinOp::And)],
            &[(Tok::Eq, BinOp::Eq), (Tok::Neq, BinOp::Neq)],
            &[
                (Tok::Lt, BinOp::Lt),
                (Tok::Le, BinOp::Le),
                (Tok::Gt, BinOp::Gt),
                (Tok::Ge, BinOp::Ge),
            ],
            &[(Tok::Plus, BinOp::Add), (Tok::Minus, BinOp::Sub)],
            &[
                (Tok::Multiply, BinOp::Mul),
                (Tok::Div, BinOp::Div),
                (Tok::Mod, BinOp::Mod),
            ],
        ];
        if level == LEVELS.len() {
            return self.unary();
        }
        let mut lhs = self.binary_level(level + 1)?;
        'outer: loop {
            for (tok, op) in LEVELS[level] {
                if self.eat(tok) {
                    let rhs = self.binary_level(level + 1)?;
                    lhs = Expr::Binary(*op, Box::new(lhs), Box::new(rhs));
                    continue 'outer;
                }
            }
            return Ok(lhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, String> {
        if self.eat(&Tok::Minus) {
            return Ok(Expr::Negate(Box::new(self.unary()?)));
        }
        let mut lhs = self.path_expr()?;
        while self.eat(&Tok::Pipe) {
            let rhs = self.path_expr()?;
            lhs = Expr::Binary(BinOp::Union, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn starts_primary(&self) -> bool {
        match self.peek() {
            Some(Tok::LParen | Tok::Literal(_) | Tok::Number(_)) => true,
            Some(Tok::Name(name)) => {
                self.peek_at(1) == Some(&Tok::LParen)
                    && !matches!(
                        name.as_str(),
                        "text" | "node" | "comment" | "processing-instruction"
                    )
            }
            _ => false,
        }
    }

    fn path_expr(&mut self) -> Result<Expr, String> {
        if self.starts_primary() {
            let primary = self.primary()?;
            let mut predicates = Vec::new();
            while self.peek() == Some(&Tok::LBracket) {
                predicates.push(self.predicate()?);
            }
            let mut steps = Vec::new();
            loop {
                if self.eat(&Tok::Slash) {
                    steps.push(self.step()?);
                } else if self.eat(&Tok::DoubleSlash) {
                    steps.push(descendant_or_self());
                    steps.push(self.step()?);
                } else {
                    break;
                }
            }
            if predicates.is_empty() && steps.is_empty() {
                return Ok(primary);
            }
            return Ok(Expr::Filter {
                primary: Box::new(primary),
                predicates,
                steps,
            });
        }
        self.location_path()
    }

    fn primary(&mut self) -> Result<Expr, String> {
        match self.next() {
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                self.expect(&Tok::RParen)?;
                Ok(inner)
            }
            Some(Tok::Literal(s)) => Ok(Expr::Literal(s)),
            Some(Tok::Number(n)) => Ok(Expr::Number(n)),
            Some(Tok::Name(name)) => {
                self.expect(&Tok::LParen)?;
                let mut args = Vec::new();
                if !self.eat(&Tok::RParen) {
                    loop {
                        args.push(self.expr()?);
                        if self.eat(&Tok::RParen) {
                            break;
                        }
                        self.expect(&Tok::Comma)?;
                    }
                }
                Ok(Expr::Call(name, args))
            }
            other => Err(format!("unexpected token {other:?}")),
        }
    }

    fn location_path(&mut self) -> Result<Expr, String> {
        let mut steps = Vec::new();
        let absolute = match self.peek() {
            Some(Tok::Slash) => {
                self.pos += 1;
                if !self.starts_step() {
                    return Ok(Expr::Path {
                        absolute: true,
                        steps,
                    });
                }
                true
            }
            Some(Tok::DoubleSlash) => {
                self.pos += 1;
                steps.push(descendant_or_self());
                true
            }
            _ => false,
        };
        steps.push(self.step()?);
        loop {
            if self.eat(&Tok::Slash) {
                steps.push(self.step()?);
            } else if self.eat(&Tok::DoubleSlash) {
                steps.push(descendant_or_self());
                steps.push(self.step()?);
            } else {
                break;
            }
        }
        Ok(Expr::Path { absolute, steps })
    }

    fn starts_step(&self) -> bool {
        matches!(
            self.peek(),
            Some(Tok::Dot | Tok::DotDot | Tok::At | Tok::Star | Tok::Name(_))
        )
    }

    fn step(&mut self) -> Result<Step, String> {
        if self.eat(&Tok::Dot) {
            return Ok(Step {
                axis: Axis::SelfAxis,
                test: NodeTest::Node,
                predicates: Vec::new(),
            });
        }
        if self.eat(&Tok::DotDot) {
            return Ok(Step {
                axis: Axis::Parent,
                test: NodeTest::Node,
                predicates: Vec::new(),
            });
        }
        let mut axis = Axis::Child;
        if self.eat(&Tok::At) {
            axis = Axis::Attribute;
        } else if let (Some(Tok::Name(name)), Some(Tok::ColonColon)) =
            (self.peek(), self.peek_at(1))
        {
            axis = Axis::from_name(name).ok_or_else(|| format!("unknown axis {name:?}"))?;
            self.pos += 2;
        }
        let test = match self.next() {
            Some(Tok::Star) => NodeTest::Any,
            Some(Tok::Name(name)) => {
                if self.peek() == Some(&Tok::LParen) {
                    self.pos += 1;
                    let test = match name.as_str() {
                        "text" => NodeTest::Text,
                        "node" => NodeTest::Node,
                        "comment" => NodeTest::Comment,
                        other => return Err(format!("unsupported node type {other:?}")),
                    };
                    self.expect(&Tok::RParen)?;
                    test
                } else {
                    let local = name.rsplit(':').next().unwrap_or(&name);
                    if local == "*" {
                        NodeTest::Any
                    } else {
                        NodeTest::Name(local.to_ascii_lowercase())
                    }
                }
            }
            other => return Err(format!("expected a node test, found {other:?}")),
        };
        let mut predicates = Vec::new();
        while self.peek() == Some(&Tok::LBracket) {
            predicates.push(self.predicate()?);
        }
        Ok(Step {
            axis,
            test,
            predicates,
        })
    }

    fn predicate(&mut self) -> Result<Expr, String> {
        self.expect(&Tok::LBracket)?;
        let inner = self.expr()?;
        self.expect(&Tok::RBracket)?;
        Ok(inner)
    }
}

fn descendant_or_self() -> Step {
    Step {
        axis: Axis::DescendantOrSelf,
        test: NodeTest::Node,
        predicates: Vec::new(),
    }
}

/// A compiled XPath expression.
#[derive(Debug, Clone, PartialEq)]
pub struct XPath {
    source: String,
    expr: Expr,
}

impl fmt::Display for XPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl XPath {
    pub fn compile(source: &str) -> Result<XPath, XPathError> {
        let err = |message: String| XPathError {
            expression: source.to_string(),
            message,
        };
        let toks = tokenize(source).map_err(err)?;
        if toks.is_empty() {
            return Err(err("empty expression".into()));
        }
        let mut parser = Parser { toks, pos: 0 };
        let expr = parser.expr().map_err(err)?;
        if parser.pos != parser.toks.len() {
            return Err(err(format!("unexpected trailing {:?}", parser.peek())));
        }
        Ok(XPath {
            source: source.to_string(),
            expr,
        })
    }

    /// Elements selected by the expression with `context` as context node,
    /// in document order. Non-element results (text, attributes) are
    /// dropped; a non-node-set result is an error.
    pub fn select_elements(&self, html: &Html, context: NodeId) -> Result<Vec<NodeId>, XPathError> {
        match self.evaluate(html, context)? {
            Value::Nodes(nodes) => Ok(nodes
                .into_iter()
                .filter_map(|n| match n {
                    XNode::Node(id)
                        if html.tree.get(id).is_some_and(|r| r.value().is_element()) =>
                    {
                        Some(id)
                    }
                    _ => None,
                })
                .collect()),
            other => Err(XPathError {
                expression: self.source.clone(),
                message: format!("expression yields {other:?}, not a node-set"),
            }),
        }
    }

    /// String value of the expression's result.
    pub fn evaluate_string(&self, html: &Html, context: NodeId) -> Result<String, XPathError> {
        let value = self.evaluate(html, context)?;
        let eval = Evaluator::new(html);
        Ok(eval.to_string(&value))
    }

    fn evaluate(&self, html: &Html, context: NodeId) -> Result<Value, XPathError> {
        let eval = Evaluator::new(html);
        let ctx = Context {
            node: XNode::Node(context),
            position: 1,
            size: 1,
        };
        eval.eval(&self.expr, &ctx).map_err(|message| XPathError {
            expression: self.source.clone(),
            message,
        })
    }
}

// ---------------------------------------------------------------------------
// Evaluation

#[derive(Clone, Copy)]
struct Context {
    node: XNode,
    position: usize,
    size: usize,
}

struct Evaluator<'a> {
    html: &'a Html,
    order: HashMap<NodeId, usize>,
}

impl<'a> Evaluator<'a> {
    fn new(html: &'a Html) -> Self {
        let order = html
            .tree
            .root()
            .descendants()
            .enumerate()
            .map(|(i, n)| (n.id(), i))
            .collect();
        Evaluator { html, order }
    }

    fn node(&self, id: NodeId) -> NodeRef<'a, Node> {
        self.html
            .tree
            .get(id)
            .expect("node ids come from this tree")
    }

    fn doc_key(&self, n: &XNode) -> (usize, usize) {
        match n {
            XNode::Node(id) => (self.order[id], 0),
            XNode::Attr(id, i) => (self.order[id], i + 1),
        }
    }

    fn sort_dedup(&self, nodes: &mut Vec<XNode>) {
        nodes.sort_by_key(|n| self.doc_key(n));
        nodes.dedup();
    }

    fn eval(&self, expr: &Expr, ctx: &Context) -> Result<Value, String> {
        Ok(match expr {
            Expr::Literal(s) => Value::Str(s.clone()),
            Expr::Number(n) => Value::Num(*n),
            Expr::Negate(inner) => Value::Num(-self.to_number(&self.eval(inner, ctx)?)),
            Expr::Call(name, args) => self.call(name, args, ctx)?,
            Expr::Path { absolute, steps } => {
                let start = if *absolute {
                    XNode::Node(self.html.tree.root().id())
                } else {
                    ctx.node
                };
                Value::Nodes(self.apply_steps(vec![start], steps)?)
            }
            Expr::Filter {
                primary,
                predicates,
                steps,
            } => {
                let Value::Nodes(mut nodes) = self.eval(primary, ctx)? else {
                    return Err("predicates and steps need a node-set".into());
                };
                self.sort_dedup(&mut nodes);
                for predicate in predicates {
                    nodes = self.filter(nodes, predicate)?;
                }
                Value::Nodes(self.apply_steps(nodes, steps)?)
            }
            Expr::Binary(op, lhs, rhs) => self.binary(*op, lhs, rhs, ctx)?,
        })
    }

    fn binary(&self, op: BinOp, lhs: &Expr, rhs: &Expr, ctx: &Context) -> Result<Value, String> {
        match op {
            BinOp::Or => {
                let l = self.to_bool(&self.eval(lhs, ctx)?);
                Ok(Value::Bool(l || self.to_bool(&self.eval(rhs, ctx)?)))
            }
            BinOp::And => {
                let l = self.to_bool(&self.eval(lhs, ctx)?);
                Ok(Value::Bool(l && self.to_bool(&self.eval(rhs, ctx)?)))
            }
            BinOp::Union => {
                let (Value::Nodes(mut a), Value::Nodes(b)) =
                    (self.eval(lhs, ctx)?, self.eval(rhs, ctx)?)
                else {
                    return Err("`|` needs node-sets on both sides".into());
                };
                a.extend(b);
                self.sort_dedup(&mut a);
                Ok(Value::Nodes(a))
            }
            BinOp::Eq | BinOp::Neq | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                let l = self.eval(lhs, ctx)?;
                let r = self.eval(rhs, ctx)?;
                Ok(Value::Bool(self.compare(op, &l, &r)))
            }
            BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Mod => {
                let l = self.to_number(&self.eval(lhs, ctx)?);
                let r = self.to_number(&self.eval(rhs, ctx)?);
                Ok(Value::Num(match op {
                    BinOp::Add => l + r,
                    BinOp::Sub => l - r,
                    BinOp::Mul => l * r,
                    BinOp::Div => l / r,
                    _ => l % r,
                }))
            }
        }
    }

    fn compare(&self, op: BinOp, l: &Value, r: &Value) -> bool {
        match (l, r) {
            (Value::Nodes(a), Value::Nodes(b)) => a.iter().any(|x| {
                let xs = self.string_value(x);
                b.iter().any(|y| {
                    self.compare_atoms(
                        op,
                        &Value::Str(xs.clone()),
                        &Value::Str(self.string_value(y)),
                    )
                })
            }),
            (Value::Nodes(a), other) => {
                if let Value::Bool(_) = other {
                    return self.compare_atoms(op, &Value::Bool(!a.is_empty()), other);
                }
                a.iter().any(|x| {
                    let s = Value::Str(self.string_value(x));
                    self.compare_atoms(op, &s, other)
                })
            }
            (other, Value::Nodes(b)) => {
                if let Value::Bool(_) = other {
                    return self.compare_atoms(op, other, &Value::Bool(!b.is_empty()));
                }
                b.iter().any(|y| {
                    let s = Value::Str(self.string_value(y));
                    self.compare_atoms(op, other, &s)
                })
            }
            _ => self.compare_atoms(op, l, r),
        }
    }

    fn compare_atoms(&self, op: BinOp, l: &Value, r: &Value) -> bool {
        match op {
            BinOp::Eq | BinOp::Neq => {
                let equal = match (l, r) {
                    (Value::Bool(_), _) | (_, Value::Bool(_)) => self.to_bool(l) == self.to_bool(r),
                    (Value::Num(_), _) | (_, Value::Num(_)) => {
                        self.to_number(l) == self.to_number(r)
                    }
                    _ => self.to_string(l) == self.to_string(r),
                };
                (op == BinOp::Eq) == equal
            }
            _ => {
                let (a, b) = (self.to_number(l), self.to_number(r));
                match op {
                    BinOp::Lt => a < b,
                    BinOp::Le => a <= b,
                    BinOp::Gt => a > b,
                    _ => a >= b,
                }
            }
        }
    }

    fn apply_steps(&self, mut nodes: Vec<XNode>, steps: &[Step]) -> Result<Vec<XNode>, String> {
        for step in steps {
            let mut next = Vec::new();
            for node in &nodes {
                let mut candidates: Vec<XNode> = self
                    .axis(node, step.axis)
                    .into_iter()
                    .filter(|n| self.matches(n, step.axis, &step.test))
                    .collect();
                for predicate in &step.predicates {
                    candidates = self.filter(candidates, predicate)?;
                }
                next.extend(candidates);
            }
            self.sort_dedup(&mut next);
            nodes = next;
        }
        Ok(nodes)
    }

    /// Keeps the nodes for which `predicate` holds. `nodes` must be in axis
    /// order; positions are counted in that order.
    fn filter(&self, nodes: Vec<XNode>, predicate: &Expr) -> Result<Vec<XNode>, String> {
        let size = nodes.len();
        let mut kept = Vec::new();
        for (i, node) in nodes.into_iter().enumerate() {
            let ctx = Context {
                node,
                position: i + 1,
                size,
            };
            let keep = match self.eval(predicate, &ctx)? {
                Value::Num(n) => n == (i + 1) as f64,
                other => self.to_bool(&other),
            };
            if keep {
                kept.push(node);
            }
        }
        Ok(kept)
    }

    /// Nodes on `axis` from `node`, in axis order (reverse axes nearest
    /// first).
    fn axis(&self, node: &XNode, axis: Axis) -> Vec<XNode> {
        let id = match node {
            XNode::Node(id) => *id,
            XNode::Attr(owner, _) => {
                return match axis {
                    Axis::SelfAxis => vec![*node],
                    Axis::Parent => vec![XNode::Node(*owner)],
                    Axis::Ancestor | Axis::AncestorOrSelf => {
                        let mut out = if axis == Axis::AncestorOrSelf {
                            vec![*node]
                        } else {
                            vec![]
                        };
                        out.push(XNode::Node(*owner));
                        out.extend(self.node(*owner).ancestors().map(|a| XNode::Node(a.id())));
                        out
                    }
                    _ => Vec::new(),
                };
            }
        };
        let r = self.node(id);
        let wrap = |n: NodeRef<'a, Node>| XNode::Node(n.id());
        match axis {
            Axis::Child => r.children().map(wrap).collect(),
            Axis::Descendant => r.descendants().skip(1).map(wrap).collect(),
            Axis::DescendantOrSelf => r.descendants().map(wrap).collect(),
            Axis::Parent => r.parent().map(wrap).into_iter().collect(),
            Axis::Ancestor => r.ancestors().map(wrap).collect(),
            Axis::AncestorOrSelf => std::iter::once(r).chain(r.ancestors()).map(wrap).collect(),
            Axis::FollowingSibling => r.next_siblings().map(wrap).collect(),
            Axis::PrecedingSibling => r.prev_siblings().map(wrap).collect(),
            Axis::SelfAxis => vec![*node],
            Axis::Attribute => match r.value().as_element() {
                Some(el) => (0..el.attrs().count())
                    .map(|i| XNode::Attr(id, i))
                    .collect(),
                None => Vec::new(),
            },
            Axis::Following => {
                let mut out = Vec::new();
                let mut cur = Some(r);
                while let Some(n) = cur {
                    for sib in n.next_siblings() {
                        out.extend(sib.descendants().map(wrap));
                    }
                    cur = n.parent();
                }
                out
            }
            Axis::Preceding => {
                let ancestors: Vec<NodeId> = r.ancestors().map(|a| a.id()).collect();
                let own = self.order[&id];
                let mut out: Vec<XNode> = self
                    .html
                    .tree
                    .root()
                    .descendants()
                    .filter(|n| self.order[&n.id()] < own && !ancestors.contains(&n.id()))
                    .map(wrap)
                    .collect();
                out.reverse();
                out
            }
        }
    }

    fn matches(&self, node: &XNode, axis: Axis, test: &NodeTest) -> bool {
        match node {
            XNode::Attr(owner, i) => {
                if axis != Axis::Attribute && !matches!(test, NodeTest::Node | NodeTest::Any) {
                    return false;
                }
                match test {
                    NodeTest::Any | NodeTest::Node => true,
                    NodeTest::Name(name) => self
                        .attr(*owner, *i)
                        .is_some_and(|(n, _)| n.eq_ignore_ascii_case(name)),
                    _ => false,
                }
            }
            XNode::Node(id) => {
                let value = self.node(*id).value();
                match test {
                    NodeTest::Node => true,
                    NodeTest::Text => value.is_text(),
                    NodeTest::Comment => value.is_comment(),
                    NodeTest::Any => value.is_element(),
                    NodeTest::Name(name) => value
                        .as_element()
                        .is_some_and(|el| el.name().eq_ignore_ascii_case(name)),
                }
            }
        }
    }

    fn attr(&self, owner: NodeId, index: usize) -> Option<(&'a str, &'a str)> {
        self.node(owner).value().as_element()?.attrs().nth(index)
    }

    fn string_value(&self, node: &XNode) -> String {
        match node {
            XNode::Attr(owner, i) => self
                .attr(*owner, *i)
                .map(|(_, v)| v.to_string())
                .unwrap_or_default(),
            XNode::Node(id) => {
                let r = self.node(*id);
                match r.value() {
                    Node::Text(t) => t.to_string(),
                    Node::Comment(c) => c.to_string(),
                    _ => r
                        .descendants()
                        .filter_map(|d| d.value().as_text().map(|t| t.to_string()))
                        .collect(),
                }
            }
        }
    }

    fn to_string(&self, v: &Value) -> String {
        match v {
            Value::Str(s) => s.clone(),
            Value::Bool(b) => b.to_string(),
            Value::Num(n) => format_number(*n),
            Value::Nodes(nodes) => nodes
                .first()
                .map(|n| self.string_value(n))
                .unwrap_or_default(),
        }
    }

    fn to_number(&self, v: &Value) -> f64 {
        match v {
            Value::Num(n) => *n,
            Value::Bool(b) => f64::from(u8::from(*b)),
            other => self.to_string(other).trim().parse().unwrap_or(f64::NAN),
        }
    }

    fn to_bool(&self, v: &Value) -> bool {
        match v {
            Value::Bool(b) => *b,
            Value::Num(n) => *n != 0.0 && !n.is_nan(),
            Value::Str(s) => !s.is_empty(),
            Value::Nodes(n) => !n.is_empty(),
        }
    }

    fn call(&self, name: &str, args: &[Expr], ctx: &Context) -> Result<Value, String> {
        let arity = |min: usize, max: usize| {
            if args.len() < min || args.len() > max {
                Err(format!(
                    "{name}() takes {min}..={max} arguments, got {}",
                    args.len()
                ))
            } else {
                Ok(())
            }
        };
        let string_arg = |i: usize| -> Result<String, String> {
            match args.get(i) {
                Some(e) => Ok(self.to_string(&self.eval(e, ctx)?)),
                None => Ok(self.string_value(&ctx.node)),
            }
        };
        let number_arg =
            |i: usize| -> Result<f64, String> { Ok(self.to_number(&self.eval(&args[i], ctx)?)) };
        Ok(match name {
            "last" => {
                arity(0, 0)?;
                Value::Num(ctx.size as f64)
            }
            "position" => {
                arity(0, 0)?;
                Value::Num(ctx.position as f64)
            }
            "count" => {
                arity(1, 1)?;
                match self.eval(&args[0], ctx)? {
                    Value::Nodes(n) => Value::Num(n.len() as f64),
                    _ => return Err("count() needs a node-set".into()),
                }
            }
            "string" => {
                arity(0, 1)?;
                Value::Str(string_arg(0)?)
            }
            "concat" => {
                if args.len() < 2 {
                    return Err("concat() takes at least 2 arguments".into());
                }
                let mut out = String::new();
                for i in 0..args.len() {
                    out.push_str(&string_arg(i)?);
                }
                Value::Str(out)
            }
            "starts-with" => {
                arity(2, 2)?;
                Value::Bool(string_arg(0)?.starts_with(&string_arg(1)?))
            }
            "ends-with" => {
                arity(2, 2)?;
                Value::Bool(string_arg(0)?.ends_with(&string_arg(1)?))
            }
            "contains" => {
                arity(2, 2)?;
                Value::Bool(string_arg(0)?.contains(&string_arg(1)?))
            }
            "substring-before" => {
                arity(2, 2)?;
                let (s, pat) = (string_arg(0)?, string_arg(1)?);
                Value::Str(s.find(&pat).map(|i| s[..i].to_string()).unwrap_or_default())
            }
            "substring-after" => {
                arity(2, 2)?;
                let (s, pat) = (string_arg(0)?, string_arg(1)?);
                Value::Str(
                    s.find(&pat)
                        .map(|i| s[i + pat.len()..].to_string())
                        .unwrap_or_default(),
                )
            }
            "substring" => {
                arity(2, 3)?;
                let s: Vec<char> = string_arg(0)?.chars().collect();
                let start = number_arg(1)?.round();
                let end = if args.len() == 3 {
                    start + number_arg(2)?.round()
                } else {
                    f64::INFINITY
                };
                Value::Str(
                    s.iter()
                        .enumerate()
                        .filter(|(i, _)| {
                            let p = (*i + 1) as f64;
                            p >= start && p < end
                        })
                        .map(|(_, c)| c)
                        .collect(),
                )
            }
            "string-length" => {
                arity(0, 1)?;
                Value::Num(string_arg(0)?.chars().count() as f64)
            }
            "normalize-space" => {
                arity(0, 1)?;
                Value::Str(
                    string_arg(0)?
                        .split_whitespace()
                        .collect::<Vec<_>>()
                        .join(" "),
                )
            }
            "translate" => {
                arity(3, 3)?;
                let (s, from, to) = (string_arg(0)?, string_arg(1)?, string_arg(2)?);
                let from: Vec<char> = from.chars().collect();
                let to: Vec<char> = to.chars().collect();
                Value::Str(
                    s.chars()
                        .filter_map(|c| match from.iter().position(|&f| f == c) {
                            Some(i) => to.get(i).copied(),
                            None => Some(c),
                        })
                        .collect(),
                )
            }
            "not" => {
                arity(1, 1)?;
                Value::Bool(!self.to_bool(&self.eval(&args[0], ctx)?))
            }
            "boolean" => {
                arity(1, 1)?;
                Value::Bool(self.to_bool(&self.eval(&args[0], ctx)?))
            }
            "true" => Value::Bool(true),
            "false" => Value::Bool(false),
            "number" => {
                arity(0, 1)?;
                match args.first() {
                    Some(e) => Value::Num(self.to_number(&self.eval(e, ctx)?)),
                    None => Value::Num(self.to_number(&Value::Str(self.string_value(&ctx.node)))),
                }
            }
            "sum" => {
                arity(1, 1)?;
                match self.eval(&args[0], ctx)? {
                    Value::Nodes(n) => Value::Num(
                        n.iter()
                            .map(|x| self.to_number(&Value::Str(self.string_value(x))))
                            .sum(),
                    ),
                    _ => return Err("sum() needs a node-set".into()),
                }
            }
            "floor" => Value::Num(number_arg(0)?.floor()),
            "ceiling" => Value::Num(number_arg(0)?.ceil()),
            "round" => Value::Num((number_arg(0)? + 0.5).floor()),
            "name" | "local-name" => {
                arity(0, 1)?;
                let target = match args.first() {
                    Some(e) => match self.eval(e, ctx)? {
                        Value::Nodes(n) => n.first().copied(),
                        _ => return Err(format!("{name}() needs a node-set")),
                    },
                    None => Some(ctx.node),
                };
                Value::Str(match target {
                    Some(XNode::Node(id)) => self
                        .node(id)
                        .value()
                        .as_element()
                        .map(|e| e.name().to_string())
                        .unwrap_or_default(),
                    Some(XNode::Attr(owner, i)) => self
                        .attr(owner, i)
                        .map(|(n, _)| n.to_string())
                        .unwrap_or_default(),
                    None => String::new(),
                })
            }
            other => return Err(format!("unsupported function {other}()")),
        })
    }
}

fn format_number(n: f64) -> String {
    if n.is_nan() {
        "NaN".into()
    } else if n.is_infinite() {
        if n > 0.0 {
            "Infinity".into()
        } else {
            "-Infinity".into()
        }
    } else if n.fract() == 0.0 && n.abs() < 1e15 {
        format!("{}", n as i64)
    } else {
        n.to_string()
    }
}
