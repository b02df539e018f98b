//! Concrete `.cril` text format: AST, parser and pretty-printer.
//!
//! A program is a sequence of blocks separated by blank lines. An instruction
//! block is three lines (entry, instruction, exit); a call statement is a
//! single line `l <- call l1,...,ln -> l'`. `#` starts a comment.

use std::collections::HashMap;
use std::fmt::{self, Write as _};

use thiserror::Error;

/// Interned variable name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub u32);

/// Interned label name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LabelId(pub u32);

/// Ordinal of a block in its source file (0-based; displayed as `b1`, `b2`, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockId(pub usize);

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "b{}", self.0 + 1)
    }
}

impl serde::Serialize for BlockId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Xor,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Xor => "^",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    /// C binding strength; larger binds tighter.
    fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Xor => 3,
            BinOp::Eq | BinOp::Ne => 4,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 5,
            BinOp::Add | BinOp::Sub => 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Const(i64),
    Var(VarId),
    /// `M[x]`
    Heap(VarId),
    Not(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    /// Calls `f` for every variable occurrence, including heap index variables.
    pub fn for_each_var(&self, f: &mut impl FnMut(VarId)) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(x) | Expr::Heap(x) => f(*x),
            Expr::Not(e) => e.for_each_var(f),
            Expr::Binary(_, a, b) => {
                a.for_each_var(f);
                b.for_each_var(f);
            }
        }
    }

    pub fn mentions_var(&self, x: VarId) -> bool {
        let mut found = false;
        self.for_each_var(&mut |y| found |= y == x);
        found
    }

    pub fn mentions_heap(&self) -> bool {
        match self {
            Expr::Heap(_) => true,
            Expr::Const(_) | Expr::Var(_) => false,
            Expr::Not(e) => e.mentions_heap(),
            Expr::Binary(_, a, b) => a.mentions_heap() || b.mentions_heap(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LeftValue {
    Var(VarId),
    Heap(VarId),
}

impl LeftValue {
    /// The variable named on this side (the index variable for `M[x]`).
    pub fn var(self) -> VarId {
        match self {
            LeftValue::Var(x) | LeftValue::Heap(x) => x,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UpdateOp {
    Add,
    Sub,
    Xor,
}

impl UpdateOp {
    pub fn symbol(self) -> &'static str {
        match self {
            UpdateOp::Add => "+=",
            UpdateOp::Sub => "-=",
            UpdateOp::Xor => "^=",
        }
    }

    pub fn inverse(self) -> UpdateOp {
        match self {
            UpdateOp::Add => UpdateOp::Sub,
            UpdateOp::Sub => UpdateOp::Add,
            UpdateOp::Xor => UpdateOp::Xor,
        }
    }

    pub fn apply(self, current: i64, operand: i64) -> i64 {
        match self {
            UpdateOp::Add => current.wrapping_add(operand),
            UpdateOp::Sub => current.wrapping_sub(operand),
            UpdateOp::Xor => current ^ operand,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Instruction {
    Update {
        target: LeftValue,
        op: UpdateOp,
        value: Expr,
    },
    Exchange(LeftValue, LeftValue),
    V(VarId),
    P(VarId),
    Assert(Expr),
    Skip,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum EntryPoint {
    /// `l <-`
    Uncond(LabelId),
    /// `l1;l2 <- e`
    Cond(LabelId, LabelId, Expr),
    /// `begin l`
    Begin(LabelId),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ExitPoint {
    /// `-> l`
    Uncond(LabelId),
    /// `e -> l1;l2`
    Cond(Expr, LabelId, LabelId),
    /// `end l`
    End(LabelId),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BlockKind {
    Instruction {
        entry: EntryPoint,
        inst: Instruction,
        exit: ExitPoint,
    },
    /// `from <- call targets -> to`
    Call {
        from: LabelId,
        targets: Vec<LabelId>,
        to: LabelId,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BasicBlock {
    pub id: BlockId,
    pub kind: BlockKind,
}

impl BasicBlock {
    pub fn is_call(&self) -> bool {
        matches!(self.kind, BlockKind::Call { .. })
    }
}

/// A parsed program. Block order only matters for ids and diagnostics.
#[derive(Debug, Clone)]
pub struct Program {
    pub blocks: Vec<BasicBlock>,
    vars: Vec<String>,
    labels: Vec<String>,
    /// 1-based source line of each block's first line.
    lines: Vec<usize>,
}

/// Source lines are not part of program identity.
impl PartialEq for Program {
    fn eq(&self, other: &Self) -> bool {
        self.blocks == other.blocks && self.vars == other.vars && self.labels == other.labels
    }
}

impl Eq for Program {}

impl Program {
    pub fn vars(&self) -> impl ExactSizeIterator<Item = VarId> + '_ {
        (0..self.vars.len() as u32).map(VarId)
    }

    pub fn var_count(&self) -> usize {
        self.vars.len()
    }

    pub fn var_name(&self, x: VarId) -> &str {
        &self.vars[x.0 as usize]
    }

    pub fn var_id(&self, name: &str) -> Option<VarId> {
        self.vars.iter().position(|v| v == name).map(|i| VarId(i as u32))
    }

    pub fn label_name(&self, l: LabelId) -> &str {
        &self.labels[l.0 as usize]
    }

    pub fn label_id(&self, name: &str) -> Option<LabelId> {
        self.labels.iter().position(|v| v == name).map(|i| LabelId(i as u32))
    }

    pub fn label_count(&self) -> usize {
        self.labels.len()
    }

    pub fn block(&self, id: BlockId) -> &BasicBlock {
        &self.blocks[id.0]
    }

    pub fn source_line(&self, id: BlockId) -> usize {
        self.lines.get(id.0).copied().unwrap_or(0)
    }

    pub fn render_expr(&self, e: &Expr) -> String {
        let mut out = String::new();
        self.write_expr(&mut out, e, 0);
        out
    }

    fn write_expr(&self, out: &mut String, e: &Expr, min_prec: u8) {
        match e {
            Expr::Const(k) => {
                let _ = write!(out, "{k}");
            }
            Expr::Var(x) => out.push_str(self.var_name(*x)),
            Expr::Heap(x) => {
                let _ = write!(out, "M[{}]", self.var_name(*x));
            }
            Expr::Not(inner) => {
                out.push('!');
                self.write_expr(out, inner, u8::MAX);
            }
            Expr::Binary(op, a, b) => {
                let prec = op.precedence();
                let paren = prec < min_prec;
                if paren {
                    out.push('(');
                }
                self.write_expr(out, a, prec);
                let _ = write!(out, " {} ", op.symbol());
                // left-associative: an equal-precedence right operand needs parentheses
                self.write_expr(out, b, prec + 1);
                if paren {
                    out.push(')');
                }
            }
        }
    }

    fn render_left(&self, left: LeftValue) -> String {
        match left {
            LeftValue::Var(x) => self.var_name(x).to_string(),
            LeftValue::Heap(x) => format!("M[{}]", self.var_name(x)),
        }
    }

    pub fn render_entry(&self, entry: &EntryPoint) -> String {
        match entry {
            EntryPoint::Uncond(l) => format!("{} <-", self.label_name(*l)),
            EntryPoint::Cond(l1, l2, e) => format!(
                "{};{} <- {}",
                self.label_name(*l1),
                self.label_name(*l2),
                self.render_expr(e)
            ),
            EntryPoint::Begin(l) => format!("begin {}", self.label_name(*l)),
        }
    }

    pub fn render_exit(&self, exit: &ExitPoint) -> String {
        match exit {
            ExitPoint::Uncond(l) => format!("-> {}", self.label_name(*l)),
            ExitPoint::Cond(e, l1, l2) => format!(
                "{} -> {};{}",
                self.render_expr(e),
                self.label_name(*l1),
                self.label_name(*l2)
            ),
            ExitPoint::End(l) => format!("end {}", self.label_name(*l)),
        }
    }

    pub fn render_instruction(&self, inst: &Instruction) -> String {
        match inst {
            Instruction::Update { target, op, value } => format!(
                "{} {} {}",
                self.render_left(*target),
                op.symbol(),
                self.render_expr(value)
            ),
            Instruction::Exchange(a, b) => {
                format!("{} <-> {}", self.render_left(*a), self.render_left(*b))
            }
            Instruction::V(x) => format!("V {}", self.var_name(*x)),
            Instruction::P(x) => format!("P {}", self.var_name(*x)),
            Instruction::Assert(e) => format!("assert {}", self.render_expr(e)),
            Instruction::Skip => "skip".to_string(),
        }
    }

    /// One-line summary of a block, used in traces and diagnostics.
    pub fn describe_block(&self, id: BlockId) -> String {
        match &self.block(id).kind {
            BlockKind::Instruction { entry, inst, exit } => format!(
                "{} | {} | {}",
                self.render_entry(entry),
                self.render_instruction(inst),
                self.render_exit(exit)
            ),
            BlockKind::Call { .. } => self.render_block(self.block(id)),
        }
    }

    fn render_block(&self, b: &BasicBlock) -> String {
        match &b.kind {
            BlockKind::Instruction { entry, inst, exit } => format!(
                "{}\n{}\n{}",
                self.render_entry(entry),
                self.render_instruction(inst),
                self.render_exit(exit)
            ),
            BlockKind::Call { from, targets, to } => {
                let targets: Vec<&str> = targets.iter().map(|l| self.label_name(*l)).collect();
                format!(
                    "{} <- call {} -> {}",
                    self.label_name(*from),
                    targets.join(","),
                    self.label_name(*to)
                )
            }
        }
    }
}

/// Renders a program in the `.cril` text format.
pub fn render_program(p: &Program) -> String {
    let mut out = String::new();
    for (i, b) in p.blocks.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&p.render_block(b));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(u64),
    Op(&'static str),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(k) => write!(f, "`{k}`"),
            Tok::Op(o) => write!(f, "`{o}`"),
        }
    }
}

// longest first so that maximal munch works with a linear scan
const OPERATORS: &[&str] = &[
    "<->", "<-", "->", "+=", "-=", "^=", "==", "!=", "<=", ">=", "&&", "||", "<", ">", "!", "+", "-", "^", "(", ")",
    "[", "]", ";", ",",
];

const KEYWORDS: &[&str] = &["begin", "end", "call", "skip", "assert", "P", "V", "M"];

fn lex(line: &str, lineno: usize) -> Result<Vec<Tok>, ParseError> {
    let mut toks = Vec::new();
    let bytes = line.as_bytes();
    let mut i = 0;
    'outer: while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            toks.push(Tok::Ident(line[start..i].to_string()));
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let text = &line[start..i];
            let k = text.parse::<u64>().map_err(|_| ParseError {
                line: lineno,
                message: format!("integer literal {text} out of range"),
            })?;
            toks.push(Tok::Int(k));
            continue;
        }
        for op in OPERATORS {
            if line[i..].starts_with(op) {
                toks.push(Tok::Op(op));
                i += op.len();
                continue 'outer;
            }
        }
        let ch = line[i..].chars().next().unwrap_or('?');
        return Err(ParseError {
            line: lineno,
            message: format!("unexpected character `{ch}`"),
        });
    }
    Ok(toks)
}

#[derive(Default)]
struct Interner {
    names: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Interner {
    fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_string());
        self.ids.insert(name.to_string(), id);
        id
    }
}

struct Builder {
    vars: Interner,
    labels: Interner,
}

struct LineParser<'a> {
    toks: Vec<Tok>,
    pos: usize,
    line: usize,
    b: &'a mut Builder,
}

impl<'a> LineParser<'a> {
    fn new(text: &str, line: usize, b: &'a mut Builder) -> Result<Self, ParseError> {
        Ok(LineParser {
            toks: lex(text, line)?,
            pos: 0,
            line,
            b,
        })
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            line: self.line,
            message: message.into(),
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn peek_at(&self, off: usize) -> Option<&Tok> {
        self.toks.get(self.pos + off)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn at_op(&self, op: &str) -> bool {
        matches!(self.peek(), Some(Tok::Op(o)) if *o == op)
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    fn expect_op(&mut self, op: &str) -> Result<(), ParseError> {
        match self.next() {
            Some(Tok::Op(o)) if o == op => Ok(()),
            Some(t) => self.err(format!("expected `{op}`, found {t}")),
            None => self.err(format!("expected `{op}`, found end of line")),
        }
    }

    fn expect_end(&self) -> Result<(), ParseError> {
        match self.peek() {
            None => Ok(()),
            Some(t) => self.err(format!("unexpected {t} at end of line")),
        }
    }

    fn name(&mut self, what: &str) -> Result<String, ParseError> {
        match self.next() {
            Some(Tok::Ident(s)) if KEYWORDS.contains(&s.as_str()) => {
                self.err(format!("keyword `{s}` cannot be used as a {what}"))
            }
            Some(Tok::Ident(s)) => Ok(s),
            Some(t) => self.err(format!("expected {what}, found {t}")),
            None => self.err(format!("expected {what}, found end of line")),
        }
    }

    fn label(&mut self) -> Result<LabelId, ParseError> {
        let s = self.name("label")?;
        Ok(LabelId(self.b.labels.intern(&s)))
    }

    fn var(&mut self) -> Result<VarId, ParseError> {
        let s = self.name("variable")?;
        Ok(VarId(self.b.vars.intern(&s)))
    }

    fn left_value(&mut self) -> Result<LeftValue, ParseError> {
        if self.at_keyword("M") && matches!(self.peek_at(1), Some(Tok::Op("["))) {
            self.pos += 2;
            let x = self.var()?;
            self.expect_op("]")?;
            Ok(LeftValue::Heap(x))
        } else {
            Ok(LeftValue::Var(self.var()?))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.binary(1)
    }

    fn peek_binop(&self) -> Option<BinOp> {
        let Some(Tok::Op(o)) = self.peek() else {
            return None;
        };
        Some(match *o {
            "+" => BinOp::Add,
            "-" => BinOp::Sub,
            "^" => BinOp::Xor,
            "==" => BinOp::Eq,
            "!=" => BinOp::Ne,
            "<" => BinOp::Lt,
            "<=" => BinOp::Le,
            ">" => BinOp::Gt,
            ">=" => BinOp::Ge,
            "&&" => BinOp::And,
            "||" => BinOp::Or,
            _ => return None,
        })
    }

    fn binary(&mut self, min_prec: u8) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.peek_binop() {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.pos += 1;
            let rhs = self.binary(prec + 1)?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.at_op("!") {
            self.pos += 1;
            return Ok(Expr::Not(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn int_literal(&self, magnitude: u64, negative: bool) -> Result<Expr, ParseError> {
        let value = if negative {
            if magnitude > i64::MAX as u64 + 1 {
                None
            } else {
                Some((magnitude as i64).wrapping_neg())
            }
        } else {
            i64::try_from(magnitude).ok()
        };
        match value {
            Some(k) => Ok(Expr::Const(k)),
            None => self.err("integer literal out of 64-bit range"),
        }
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.next() {
            Some(Tok::Int(k)) => self.int_literal(k, false),
            Some(Tok::Op("-")) => match self.next() {
                Some(Tok::Int(k)) => self.int_literal(k, true),
                _ => self.err("unary `-` is only allowed on integer literals"),
            },
            Some(Tok::Op("(")) => {
                let e = self.expr()?;
                self.expect_op(")")?;
                Ok(e)
            }
            Some(Tok::Ident(s)) if s == "M" && self.at_op("[") => {
                self.pos += 1;
                let x = self.var()?;
                self.expect_op("]")?;
                Ok(Expr::Heap(x))
            }
            Some(Tok::Ident(_)) => {
                self.pos -= 1;
                Ok(Expr::Var(self.var()?))
            }
            Some(t) => self.err(format!("expected expression, found {t}")),
            None => self.err("expected expression, found end of line"),
        }
    }

    fn entry(&mut self) -> Result<EntryPoint, ParseError> {
        if self.at_keyword("begin") {
            self.pos += 1;
            let l = self.label()?;
            self.expect_end()?;
            return Ok(EntryPoint::Begin(l));
        }
        if self.at_keyword("end") || self.at_op("->") {
            return self.err("expected an entry point (`l <-`, `l1;l2 <- e` or `begin l`)");
        }
        let l1 = self.label()?;
        if self.at_op(";") {
            self.pos += 1;
            let l2 = self.label()?;
            self.expect_op("<-")?;
            let e = self.expr()?;
            self.expect_end()?;
            return Ok(EntryPoint::Cond(l1, l2, e));
        }
        self.expect_op("<-")?;
        if self.at_keyword("call") {
            return self.err("a call statement must be a block of its own");
        }
        self.expect_end()?;
        Ok(EntryPoint::Uncond(l1))
    }

    fn exit(&mut self) -> Result<ExitPoint, ParseError> {
        if self.at_keyword("end") {
            self.pos += 1;
            let l = self.label()?;
            self.expect_end()?;
            return Ok(ExitPoint::End(l));
        }
        if self.at_op("->") {
            self.pos += 1;
            let l = self.label()?;
            self.expect_end()?;
            return Ok(ExitPoint::Uncond(l));
        }
        if self.at_keyword("begin") {
            return self.err("expected an exit point (`-> l`, `e -> l1;l2` or `end l`)");
        }
        let e = self.expr()?;
        self.expect_op("->")?;
        let l1 = self.label()?;
        self.expect_op(";")?;
        let l2 = self.label()?;
        self.expect_end()?;
        Ok(ExitPoint::Cond(e, l1, l2))
    }

    fn instruction(&mut self) -> Result<Instruction, ParseError> {
        let inst = if self.at_keyword("skip") {
            self.pos += 1;
            Instruction::Skip
        } else if self.at_keyword("assert") {
            self.pos += 1;
            Instruction::Assert(self.expr()?)
        } else if self.at_keyword("P") {
            self.pos += 1;
            Instruction::P(self.var()?)
        } else if self.at_keyword("V") {
            self.pos += 1;
            Instruction::V(self.var()?)
        } else if self.at_keyword("call") {
            return self.err("a call statement must be a block of its own");
        } else {
            let target = self.left_value()?;
            match self.next() {
                Some(Tok::Op("<->")) => {
                    let other = self.left_value()?;
                    if target.var() == other.var() {
                        return self.err(format!(
                            "variable `{}` occurs on both sides of `<->`",
                            self.b.vars.names[target.var().0 as usize]
                        ));
                    }
                    Instruction::Exchange(target, other)
                }
                Some(Tok::Op(o)) if matches!(o, "+=" | "-=" | "^=") => {
                    let op = match o {
                        "+=" => UpdateOp::Add,
                        "-=" => UpdateOp::Sub,
                        _ => UpdateOp::Xor,
                    };
                    let value = self.expr()?;
                    match target {
                        LeftValue::Var(x) if value.mentions_var(x) => {
                            return self.err(format!(
                                "updated variable `{}` must not occur in its own update expression",
                                self.b.vars.names[x.0 as usize]
                            ));
                        }
                        LeftValue::Heap(_) if value.mentions_heap() => {
                            return self.err("a heap update expression must not contain heap references");
                        }
                        _ => {}
                    }
                    Instruction::Update { target, op, value }
                }
                Some(t) => return self.err(format!("expected `+=`, `-=`, `^=` or `<->`, found {t}")),
                None => return self.err("incomplete instruction"),
            }
        };
        self.expect_end()?;
        Ok(inst)
    }

    fn call(&mut self) -> Result<BlockKind, ParseError> {
        let from = self.label()?;
        self.expect_op("<-")?;
        if !self.at_keyword("call") {
            return self.err("a single-line block must be a call statement");
        }
        self.pos += 1;
        let mut targets = vec![self.label()?];
        while self.at_op(",") {
            self.pos += 1;
            targets.push(self.label()?);
        }
        self.expect_op("->")?;
        let to = self.label()?;
        self.expect_end()?;
        Ok(BlockKind::Call { from, targets, to })
    }
}

/// Parses `.cril` source text.
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    // (line number, content without comment)
    let mut groups: Vec<Vec<(usize, &str)>> = Vec::new();
    let mut current: Vec<(usize, &str)> = Vec::new();
    for (i, raw) in text.split('\n').enumerate() {
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        let (content, had_comment) = match raw.find('#') {
            Some(pos) => (&raw[..pos], true),
            None => (raw, false),
        };
        let content = content.trim();
        if content.is_empty() {
            // a comment-only line does not separate blocks
            if !had_comment && !current.is_empty() {
                groups.push(std::mem::take(&mut current));
            }
            continue;
        }
        current.push((i + 1, content));
    }
    if !current.is_empty() {
        groups.push(current);
    }
    if groups.is_empty() {
        return Err(ParseError {
            line: 1,
            message: "program contains no blocks".to_string(),
        });
    }

    let mut builder = Builder {
        vars: Interner::default(),
        labels: Interner::default(),
    };
    let mut blocks = Vec::with_capacity(groups.len());
    let mut lines = Vec::with_capacity(groups.len());
    for group in groups {
        let id = BlockId(blocks.len());
        let first_line = group[0].0;
        let kind = match group.as_slice() {
            [(n, text)] => LineParser::new(text, *n, &mut builder)?.call()?,
            [(n1, t1), (n2, t2), (n3, t3)] => {
                let entry = LineParser::new(t1, *n1, &mut builder)?.entry()?;
                let inst = LineParser::new(t2, *n2, &mut builder)?.instruction()?;
                let exit = LineParser::new(t3, *n3, &mut builder)?.exit()?;
                BlockKind::Instruction { entry, inst, exit }
            }
            _ => {
                return Err(ParseError {
                    line: first_line,
                    message: format!(
                        "a block has either 1 line (call) or 3 lines (entry, instruction, exit); found {}",
                        group.len()
                    ),
                })
            }
        };
        blocks.push(BasicBlock { id, kind });
        lines.push(first_line);
    }
    Ok(Program {
        blocks,
        vars: builder.vars.names,
        labels: builder.labels.names,
        lines,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn begin_block() {
        let p = parse_program("begin main\nskip\n-> l1").unwrap();
        assert_eq!(p.blocks.len(), 1);
        let main = p.label_id("main").unwrap();
        let l1 = p.label_id("l1").unwrap();
        assert_eq!(
            p.blocks[0].kind,
            BlockKind::Instruction {
                entry: EntryPoint::Begin(main),
                inst: Instruction::Skip,
                exit: ExitPoint::Uncond(l1),
            }
        );
    }

    #[test]
    fn call_statement() {
        let p = parse_program("l1 <- call sub0,sub1,sub2 -> l2").unwrap();
        let ids: Vec<LabelId> = ["sub0", "sub1", "sub2"]
            .iter()
            .map(|n| p.label_id(n).unwrap())
            .collect();
        assert_eq!(
            p.blocks[0].kind,
            BlockKind::Call {
                from: p.label_id("l1").unwrap(),
                targets: ids,
                to: p.label_id("l2").unwrap(),
            }
        );
    }

    #[test]
    fn self_update_rejected() {
        let err = parse_program("l <-\nx += x\n-> l2").unwrap_err();
        assert_eq!(err.line, 2);
        assert!(err.message.contains("own update"), "{}", err.message);
        assert!(parse_program("l <-\nx += y + (1 ^ x)\n-> l2").is_err());
    }

    #[test]
    fn heap_update_restrictions() {
        assert!(parse_program("l <-\nM[x] += x + 1\n-> l2").is_ok());
        assert!(parse_program("l <-\nM[x] += M[y]\n-> l2").is_err());
        assert!(parse_program("l <-\nz -= M[x] + y\n-> l2").is_ok());
    }

    #[test]
    fn exchange_same_variable_rejected() {
        assert!(parse_program("l <-\nx <-> x\n-> l2").is_err());
        assert!(parse_program("l <-\nx <-> M[x]\n-> l2").is_err());
        assert!(parse_program("l <-\nM[y] <-> M[y]\n-> l2").is_err());
        assert!(parse_program("l <-\nx <-> M[y]\n-> l2").is_ok());
    }

    #[test]
    fn empty_program_rejected() {
        assert!(parse_program("").is_err());
        assert!(parse_program("\n  \n# only a comment\n").is_err());
    }

    #[test]
    fn unknown_operator_rejected() {
        let err = parse_program("l <-\nx += y * 2\n-> l2").unwrap_err();
        assert!(err.message.contains("unexpected character"), "{}", err.message);
        assert!(parse_program("l <-\nx *= 2\n-> l2").is_err());
    }

    #[test]
    fn literal_range() {
        assert!(parse_program("l <-\nx += 9223372036854775807\n-> l2").is_ok());
        assert!(parse_program("l <-\nx += -9223372036854775808\n-> l2").is_ok());
        assert!(parse_program("l <-\nx += 9223372036854775808\n-> l2").is_err());
        assert!(parse_program("l <-\nx += 99999999999999999999\n-> l2").is_err());
    }

    #[test]
    fn wrong_group_size() {
        let err = parse_program("begin main\nskip").unwrap_err();
        assert_eq!(err.line, 1);
        assert!(parse_program("begin main\nskip\nend main\nskip").is_err());
        assert!(parse_program("begin main").is_err());
    }

    #[test]
    fn comments_and_crlf() {
        let text = "# header\r\nbegin main # entry\r\n# interior comment\r\nskip\r\nend main\r\n";
        let p = parse_program(text).unwrap();
        assert_eq!(p.blocks.len(), 1);
        assert_eq!(p.source_line(BlockId(0)), 2);
    }

    #[test]
    fn precedence_follows_c() {
        let p = parse_program("l <-\nz += a + b < c == d ^ e && f || !g\n-> l2").unwrap();
        let BlockKind::Instruction {
            inst: Instruction::Update { value, .. },
            ..
        } = &p.blocks[0].kind
        else {
            panic!()
        };
        assert_eq!(p.render_expr(value), "a + b < c == d ^ e && f || !g");
        let Expr::Binary(BinOp::Or, lhs, _) = value else {
            panic!("{value:?}")
        };
        let Expr::Binary(BinOp::And, lhs, _) = lhs.as_ref() else {
            panic!()
        };
        let Expr::Binary(BinOp::Xor, lhs, _) = lhs.as_ref() else {
            panic!()
        };
        let Expr::Binary(BinOp::Eq, lhs, _) = lhs.as_ref() else {
            panic!()
        };
        assert!(matches!(lhs.as_ref(), Expr::Binary(BinOp::Lt, _, _)));
    }

    #[test]
    fn render_single_skip_block() {
        let p = parse_program("begin main\n  skip  \nend main\n").unwrap();
        assert_eq!(render_program(&p), "begin main\nskip\nend main\n");
    }

    #[test]
    fn render_keeps_needed_parentheses() {
        let p = parse_program("l <-\nz += a - (b - c) + (x || y)\n-> l2").unwrap();
        let text = render_program(&p);
        assert!(text.contains("a - (b - c) + (x || y)"), "{text}");
        assert_eq!(parse_program(&text).unwrap(), p);
    }

    #[test]
    fn conditional_entry_and_exit() {
        let p = parse_program("a;b <- x > 0\ny ^= 3\nx != 0 -> c;d").unwrap();
        let BlockKind::Instruction { entry, exit, .. } = &p.blocks[0].kind else {
            panic!()
        };
        assert!(matches!(entry, EntryPoint::Cond(..)));
        assert!(matches!(exit, ExitPoint::Cond(..)));
        assert_eq!(render_program(&p), "a;b <- x > 0\ny ^= 3\nx != 0 -> c;d\n");
    }

    #[test]
    fn keywords_are_not_names() {
        assert!(parse_program("begin call\nskip\nend call").is_err());
        assert!(parse_program("l <-\nM += 1\n-> l2").is_err());
    }
}
