use std::fmt;

use serde::Serialize;

/// 1-based source position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Default)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    RetrieveNode,
    NodeInfo,
    NodeFeature,
    NodeDegree,
    NeighbourCheck,
    Len,
    Set,
    List,
    Sorted,
    Sum,
    Min,
    Max,
}

impl Builtin {
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "RetrieveNode" => Builtin::RetrieveNode,
            "NodeInfo" => Builtin::NodeInfo,
            "NodeFeature" => Builtin::NodeFeature,
            "NodeDegree" => Builtin::NodeDegree,
            "NeighbourCheck" | "neighbourCheck" => Builtin::NeighbourCheck,
            "len" => Builtin::Len,
            "set" => Builtin::Set,
            "list" => Builtin::List,
            "sorted" => Builtin::Sorted,
            "sum" => Builtin::Sum,
            "min" => Builtin::Min,
            "max" => Builtin::Max,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Builtin::RetrieveNode => "RetrieveNode",
            Builtin::NodeInfo => "NodeInfo",
            Builtin::NodeFeature => "NodeFeature",
            Builtin::NodeDegree => "NodeDegree",
            Builtin::NeighbourCheck => "NeighbourCheck",
            Builtin::Len => "len",
            Builtin::Set => "set",
            Builtin::List => "list",
            Builtin::Sorted => "sorted",
            Builtin::Sum => "sum",
            Builtin::Min => "min",
            Builtin::Max => "max",
        }
    }

    pub fn is_graph_function(self) -> bool {
        matches!(
            self,
            Builtin::RetrieveNode
                | Builtin::NodeInfo
                | Builtin::NodeFeature
                | Builtin::NodeDegree
                | Builtin::NeighbourCheck
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    In,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::In => "in",
            BinOp::And => "&",
            BinOp::Or => "|",
        }
    }

    /// Binding strength; higher binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::In => 1,
            BinOp::Or => 2,
            BinOp::And => 3,
            BinOp::Add | BinOp::Sub => 4,
            BinOp::Mul | BinOp::Div => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Num(f64),
    Str(String),
    Bool(bool),
    Var(String),
    List(Vec<Expr>),
    Set(Vec<Expr>),
    Dict(Vec<(Expr, Expr)>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Call(Builtin, Vec<Expr>),
    Index(Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Assign(String, Expr),
    For {
        var: String,
        iter: Expr,
        body: Vec<Stmt>,
    },
    If {
        branches: Vec<(Expr, Vec<Stmt>)>,
        else_body: Option<Vec<Stmt>>,
    },
    Print(Vec<Expr>),
    Expr(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub pos: Pos,
}

/// A parsed snippet. Only [`super::parse`] constructs one.
#[derive(Debug, Clone, PartialEq)]
pub struct SnippetProgram {
    pub(crate) statements: Vec<Stmt>,
}

impl SnippetProgram {
    pub fn statements(&self) -> &[Stmt] {
        &self.statements
    }
}

// Canonical source printer. parse(to_string(p)) reproduces p up to positions.

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

pub(crate) fn quote_literal(s: &str) -> String {
    quote(s)
}

fn write_list(f: &mut fmt::Formatter<'_>, items: &[Expr]) -> fmt::Result {
    for (i, e) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{e}")?;
    }
    Ok(())
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ExprKind::Num(n) => {
                if n.fract() == 0.0 && n.abs() < 1e15 {
                    write!(f, "{}", *n as i64)
                } else {
                    write!(f, "{n:?}")
                }
            }
            ExprKind::Str(s) => f.write_str(&quote(s)),
            ExprKind::Bool(true) => f.write_str("True"),
            ExprKind::Bool(false) => f.write_str("False"),
            ExprKind::Var(v) => f.write_str(v),
            ExprKind::List(items) => {
                f.write_str("[")?;
                write_list(f, items)?;
                f.write_str("]")
            }
            ExprKind::Set(items) => {
                f.write_str("{")?;
                write_list(f, items)?;
                f.write_str("}")
            }
            ExprKind::Dict(pairs) => {
                f.write_str("{")?;
                for (i, (k, v)) in pairs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{k}: {v}")?;
                }
                f.write_str("}")
            }
            // Fully parenthesised so precedence never has to be reconstructed.
            ExprKind::Binary(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            ExprKind::Neg(e) => write!(f, "(-{e})"),
            ExprKind::Call(b, args) => {
                write!(f, "{}(", b.name())?;
                write_list(f, args)?;
                f.write_str(")")
            }
            ExprKind::Index(e, i) => write!(f, "{e}[{i}]"),
        }
    }
}

fn write_block(f: &mut fmt::Formatter<'_>, stmts: &[Stmt], depth: usize) -> fmt::Result {
    for s in stmts {
        write_stmt(f, s, depth)?;
    }
    Ok(())
}

fn write_stmt(f: &mut fmt::Formatter<'_>, stmt: &Stmt, depth: usize) -> fmt::Result {
    let pad = "    ".repeat(depth);
    match &stmt.kind {
        StmtKind::Assign(name, e) => writeln!(f, "{pad}{name} = {e}"),
        StmtKind::Print(args) => {
            write!(f, "{pad}print(")?;
            write_list(f, args)?;
            writeln!(f, ")")
        }
        StmtKind::Expr(e) => writeln!(f, "{pad}{e}"),
        StmtKind::For { var, iter, body } => {
            writeln!(f, "{pad}for {var} in {iter}:")?;
            write_block(f, body, depth + 1)
        }
        StmtKind::If {
            branches,
            else_body,
        } => {
            for (i, (cond, body)) in branches.iter().enumerate() {
                let kw = if i == 0 { "if" } else { "elif" };
                writeln!(f, "{pad}{kw} {cond}:")?;
                write_block(f, body, depth + 1)?;
            }
            if let Some(body) = else_body {
                writeln!(f, "{pad}else:")?;
                write_block(f, body, depth + 1)?;
            }
            Ok(())
        }
    }
}

impl fmt::Display for SnippetProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_block(f, &self.statements, 0)
    }
}
