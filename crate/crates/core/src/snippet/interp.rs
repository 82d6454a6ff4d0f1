use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::Serialize;

use super::ast::{BinOp, Builtin, Expr, ExprKind, Pos, SnippetProgram, Stmt, StmtKind};
use super::value::{Key, Value};
use crate::graph::NodeId;
use crate::retriever::{GraphApi, RetrievalError};

pub const DEFAULT_STEP_BUDGET: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecErrorKind {
    CodeExecution,
    RetrievalProcess,
    StepBudgetExceeded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExecError {
    pub kind: ExecErrorKind,
    pub message: String,
    pub pos: Pos,
}

impl fmt::Display for ExecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at {}: {}", self.kind, self.pos, self.message)
    }
}

/// One graph function invocation made by a snippet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RetrievalCall {
    pub function: String,
    pub args: Vec<String>,
    pub result: Result<String, String>,
    pub cache_hit: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExecutionResult {
    pub stdout: String,
    pub retrieval_calls: Vec<RetrievalCall>,
    pub steps_used: usize,
    pub error: Option<ExecError>,
}

impl ExecutionResult {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ExecOptions {
    pub step_budget: usize,
}

impl Default for ExecOptions {
    fn default() -> Self {
        ExecOptions {
            step_budget: DEFAULT_STEP_BUDGET,
        }
    }
}

struct Interp<'a> {
    api: &'a dyn GraphApi,
    budget: usize,
    steps: usize,
    env: HashMap<String, Value>,
    stdout: String,
    calls: Vec<RetrievalCall>,
}

type Eval<T> = Result<T, ExecError>;

fn code_err(pos: Pos, message: impl Into<String>) -> ExecError {
    ExecError {
        kind: ExecErrorKind::CodeExecution,
        message: message.into(),
        pos,
    }
}

fn type_err(pos: Pos, op: &str, a: &Value, b: &Value) -> ExecError {
    code_err(
        pos,
        format!("unsupported operand types for {op}: {} and {}", a.type_name(), b.type_name()),
    )
}

impl<'a> Interp<'a> {
    fn tick(&mut self, pos: Pos) -> Eval<()> {
        if self.steps >= self.budget {
            return Err(ExecError {
                kind: ExecErrorKind::StepBudgetExceeded,
                message: format!("step budget of {} exhausted", self.budget),
                pos,
            });
        }
        self.steps += 1;
        Ok(())
    }

    fn block(&mut self, stmts: &[Stmt]) -> Eval<()> {
        stmts.iter().try_for_each(|s| self.stmt(s))
    }

    fn stmt(&mut self, stmt: &Stmt) -> Eval<()> {
        self.tick(stmt.pos)?;
        match &stmt.kind {
            StmtKind::Assign(name, e) => {
                let v = self.expr(e)?;
                self.env.insert(name.clone(), v);
            }
            StmtKind::Expr(e) => {
                self.expr(e)?;
            }
            StmtKind::Print(args) => {
                let mut parts = Vec::with_capacity(args.len());
                for a in args {
                    parts.push(self.expr(a)?.to_string());
                }
                self.stdout.push_str(&parts.join(" "));
                self.stdout.push('\n');
            }
            StmtKind::For { var, iter, body } => {
                let items = self.iterate(iter.pos, iter)?;
                for item in items {
                    self.env.insert(var.clone(), item);
                    self.block(body)?;
                }
            }
            StmtKind::If {
                branches,
                else_body,
            } => {
                for (cond, body) in branches {
                    if self.expr(cond)?.truthy() {
                        return self.block(body);
                    }
                }
                if let Some(body) = else_body {
                    self.block(body)?;
                }
            }
        }
        Ok(())
    }

    fn iterate(&mut self, pos: Pos, e: &Expr) -> Eval<Vec<Value>> {
        Ok(match self.expr(e)? {
            Value::List(items) => items,
            Value::Set(items) => items.into_iter().map(Value::from).collect(),
            Value::Dict(map) => map.into_keys().map(Value::Str).collect(),
            Value::Str(s) => s.chars().map(|c| Value::Str(c.to_string())).collect(),
            other => return Err(code_err(pos, format!("{} is not iterable", other.type_name()))),
        })
    }

    fn expr(&mut self, e: &Expr) -> Eval<Value> {
        self.tick(e.pos)?;
        let pos = e.pos;
        match &e.kind {
            ExprKind::Num(n) => Ok(Value::Num(*n)),
            ExprKind::Str(s) => Ok(Value::Str(s.clone())),
            ExprKind::Bool(b) => Ok(Value::Bool(*b)),
            ExprKind::Var(name) => self
                .env
                .get(name)
                .cloned()
                .ok_or_else(|| code_err(pos, format!("name `{name}` is not defined"))),
            ExprKind::List(items) => {
                let mut out = Vec::with_capacity(items.len());
                for i in items {
                    out.push(self.expr(i)?);
                }
                Ok(Value::List(out))
            }
            ExprKind::Set(items) => {
                let mut out = BTreeSet::new();
                for i in items {
                    let v = self.expr(i)?;
                    out.insert(key_of(i.pos, &v)?);
                }
                Ok(Value::Set(out))
            }
            ExprKind::Dict(pairs) => {
                let mut out = BTreeMap::new();
                for (k, v) in pairs {
                    let key = self.expr(k)?;
                    let key = key
                        .as_text()
                        .ok_or_else(|| code_err(k.pos, format!("dict keys must be strings, not {}", key.type_name())))?
                        .to_string();
                    let val = self.expr(v)?;
                    out.insert(key, val);
                }
                Ok(Value::Dict(out))
            }
            ExprKind::Neg(inner) => match self.expr(inner)? {
                Value::Num(n) => Ok(Value::Num(-n)),
                other => Err(code_err(pos, format!("cannot negate {}", other.type_name()))),
            },
            ExprKind::Binary(op, l, r) => {
                let a = self.expr(l)?;
                let b = self.expr(r)?;
                binary(pos, *op, a, b)
            }
            ExprKind::Index(target, idx) => {
                let t = self.expr(target)?;
                let i = self.expr(idx)?;
                index(pos, t, i)
            }
            ExprKind::Call(b, args) => {
                let mut vals = Vec::with_capacity(args.len());
                for a in args {
                    vals.push(self.expr(a)?);
                }
                self.call(pos, *b, vals)
            }
        }
    }

    fn record(&mut self, b: Builtin, args: &[Value], result: Result<String, String>, cache_hit: Option<bool>) {
        self.calls.push(RetrievalCall {
            function: b.name().to_string(),
            args: args.iter().map(ToString::to_string).collect(),
            result,
            cache_hit,
        });
    }

    fn graph_result<T>(
        &mut self,
        pos: Pos,
        b: Builtin,
        args: &[Value],
        r: Result<T, RetrievalError>,
        cache_hit: Option<bool>,
        render: impl Fn(&T) -> String,
    ) -> Eval<T> {
        match r {
            Ok(v) => {
                self.record(b, args, Ok(render(&v)), cache_hit);
                Ok(v)
            }
            Err(e) => {
                self.record(b, args, Err(e.to_string()), cache_hit);
                Err(ExecError {
                    kind: ExecErrorKind::RetrievalProcess,
                    message: format!("{}: {e}", b.name()),
                    pos,
                })
            }
        }
    }

    fn call(&mut self, pos: Pos, b: Builtin, args: Vec<Value>) -> Eval<Value> {
        let arity = |n: usize| -> Eval<()> {
            if args.len() == n {
                Ok(())
            } else {
                Err(code_err(
                    pos,
                    format!("{}() takes {n} argument(s), {} given", b.name(), args.len()),
                ))
            }
        };
        let text_arg = |v: &Value, what: &str| -> Eval<String> {
            v.as_text()
                .map(str::to_string)
                .ok_or_else(|| code_err(pos, format!("{}() expects a string {what}, got {}", b.name(), v.type_name())))
        };
        match b {
            Builtin::RetrieveNode => {
                arity(1)?;
                let text = text_arg(&args[0], "query")?;
                let r = self.api.retrieve_node(&text);
                let hit = r.as_ref().ok().map(|r| r.cache_hit);
                let got = self.graph_result(pos, b, &args, r, hit, |r| r.id.clone())?;
                Ok(Value::NodeId(got.id))
            }
            Builtin::NodeInfo => {
                arity(1)?;
                match &args[0] {
                    Value::List(_) | Value::Set(_) => {
                        let ids = id_list(pos, b, &args[0])?;
                        let mut out = Vec::with_capacity(ids.len());
                        for id in ids {
                            let r = self.api.node_info(&id);
                            let c = self.graph_result(pos, b, &args, r, None, |c| c.render())?;
                            out.push(Value::Str(c.render()));
                        }
                        Ok(Value::List(out))
                    }
                    v => {
                        let id = text_arg(v, "node id")?;
                        let r = self.api.node_info(&id);
                        let c = self.graph_result(pos, b, &args, r, None, |c| c.render())?;
                        Ok(Value::Str(c.render()))
                    }
                }
            }
            Builtin::NodeFeature => {
                arity(2)?;
                let ids = id_list(pos, b, &args[0])?;
                let name = text_arg(&args[1], "feature name")?;
                let r = self.api.node_feature(&ids, &name);
                let vals = self.graph_result(pos, b, &args, r, None, |vs| {
                    Value::List(vs.iter().cloned().map(Value::from_attr).collect()).to_string()
                })?;
                Ok(Value::List(vals.into_iter().map(Value::from_attr).collect()))
            }
            Builtin::NodeDegree => {
                arity(2)?;
                let id = text_arg(&args[0], "node id")?;
                let t = text_arg(&args[1], "neighbour type")?;
                let r = self.api.node_degree(&id, &t);
                let d = self.graph_result(pos, b, &args, r, None, |d| d.to_string())?;
                Ok(Value::Num(d as f64))
            }
            Builtin::NeighbourCheck => {
                arity(2)?;
                let id = text_arg(&args[0], "node id")?;
                let t = text_arg(&args[1], "neighbour type")?;
                let r = self.api.neighbour_check(&id, &t);
                let ids = self.graph_result(pos, b, &args, r, None, |ids| format!("[{}]", ids.join(", ")))?;
                Ok(Value::List(ids.into_iter().map(Value::NodeId).collect()))
            }
            Builtin::Len => {
                arity(1)?;
                let n = match &args[0] {
                    Value::List(l) => l.len(),
                    Value::Set(s) => s.len(),
                    Value::Dict(d) => d.len(),
                    Value::Str(s) | Value::NodeId(s) => s.chars().count(),
                    other => return Err(code_err(pos, format!("len() of {}", other.type_name()))),
                };
                Ok(Value::Num(n as f64))
            }
            Builtin::Set => {
                if args.is_empty() {
                    return Ok(Value::Set(BTreeSet::new()));
                }
                arity(1)?;
                let items = collection(pos, b, args.into_iter().next().expect("arity checked"))?;
                let mut out = BTreeSet::new();
                for v in &items {
                    out.insert(key_of(pos, v)?);
                }
                Ok(Value::Set(out))
            }
            Builtin::List => {
                if args.is_empty() {
                    return Ok(Value::List(Vec::new()));
                }
                arity(1)?;
                Ok(Value::List(collection(pos, b, args.into_iter().next().expect("arity checked"))?))
            }
            Builtin::Sorted => {
                arity(1)?;
                let items = collection(pos, b, args.into_iter().next().expect("arity checked"))?;
                let mut keyed = Vec::with_capacity(items.len());
                for v in items {
                    keyed.push((key_of(pos, &v)?, v));
                }
                keyed.sort_by(|a, b| a.0.cmp(&b.0));
                Ok(Value::List(keyed.into_iter().map(|(_, v)| v).collect()))
            }
            Builtin::Sum => {
                arity(1)?;
                let items = collection(pos, b, args.into_iter().next().expect("arity checked"))?;
                let mut total = 0.0;
                for v in items {
                    match v {
                        Value::Num(n) => total += n,
                        other => {
                            return Err(code_err(pos, format!("sum() over {}", other.type_name())))
                        }
                    }
                }
                Ok(Value::Num(total))
            }
            Builtin::Min | Builtin::Max => {
                let items = if args.len() == 1 {
                    collection(pos, b, args.into_iter().next().expect("len checked"))?
                } else {
                    args
                };
                extremum(pos, b, items)
            }
        }
    }
}

fn key_of(pos: Pos, v: &Value) -> Eval<Key> {
    v.as_key()
        .ok_or_else(|| code_err(pos, format!("{} is not hashable", v.type_name())))
}

fn collection(pos: Pos, b: Builtin, v: Value) -> Eval<Vec<Value>> {
    Ok(match v {
        Value::List(items) => items,
        Value::Set(items) => items.into_iter().map(Value::from).collect(),
        Value::Dict(map) => map.into_keys().map(Value::Str).collect(),
        Value::Str(s) | Value::NodeId(s) => s.chars().map(|c| Value::Str(c.to_string())).collect(),
        other => {
            return Err(code_err(
                pos,
                format!("{}() expects a collection, got {}", b.name(), other.type_name()),
            ))
        }
    })
}

fn id_list(pos: Pos, b: Builtin, v: &Value) -> Eval<Vec<NodeId>> {
    let items: Vec<&Value> = match v {
        Value::List(items) => items.iter().collect(),
        Value::Str(_) | Value::NodeId(_) => vec![v],
        Value::Set(keys) => {
            return keys
                .iter()
                .map(|k| match k {
                    Key::Text(s) => Ok(s.clone()),
                    other => Err(code_err(pos, format!("{}() expects node ids, got {other}", b.name()))),
                })
                .collect()
        }
        other => {
            return Err(code_err(
                pos,
                format!("{}() expects node ids, got {}", b.name(), other.type_name()),
            ))
        }
    };
    items
        .into_iter()
        .map(|i| {
            i.as_text()
                .map(str::to_string)
                .ok_or_else(|| code_err(pos, format!("{}() expects node ids, got {}", b.name(), i.type_name())))
        })
        .collect()
}

fn extremum(pos: Pos, b: Builtin, items: Vec<Value>) -> Eval<Value> {
    let mut iter = items.into_iter();
    let mut best = iter
        .next()
        .ok_or_else(|| code_err(pos, format!("{}() of an empty sequence", b.name())))?;
    for v in iter {
        let ord = compare(pos, &v, &best)?;
        let better = match b {
            Builtin::Min => ord == std::cmp::Ordering::Less,
            _ => ord == std::cmp::Ordering::Greater,
        };
        if better {
            best = v;
        }
    }
    Ok(best)
}

fn compare(pos: Pos, a: &Value, b: &Value) -> Eval<std::cmp::Ordering> {
    match (a, b) {
        (Value::Num(x), Value::Num(y)) => x
            .partial_cmp(y)
            .ok_or_else(|| code_err(pos, "comparison of NaN")),
        _ => match (a.as_text(), b.as_text()) {
            (Some(x), Some(y)) => Ok(x.cmp(y)),
            _ => Err(type_err(pos, "comparison", a, b)),
        },
    }
}

fn binary(pos: Pos, op: BinOp, a: Value, b: Value) -> Eval<Value> {
    use BinOp::*;
    match op {
        Eq => Ok(Value::Bool(a.loose_eq(&b))),
        Ne => Ok(Value::Bool(
            !matches!(a, Value::Missing) && !matches!(b, Value::Missing) && !a.loose_eq(&b),
        )),
        Lt | Le | Gt | Ge => {
            if matches!(a, Value::Missing) || matches!(b, Value::Missing) {
                return Ok(Value::Bool(false));
            }
            let ord = compare(pos, &a, &b)?;
            Ok(Value::Bool(match op {
                Lt => ord.is_lt(),
                Le => ord.is_le(),
                Gt => ord.is_gt(),
                _ => ord.is_ge(),
            }))
        }
        In => {
            if matches!(a, Value::Missing) {
                return Ok(Value::Bool(false));
            }
            Ok(Value::Bool(match &b {
                Value::List(items) => items.iter().any(|i| i.loose_eq(&a)),
                Value::Set(keys) => a.as_key().is_some_and(|k| keys.contains(&k)),
                Value::Dict(map) => a.as_text().is_some_and(|k| map.contains_key(k)),
                Value::Str(s) | Value::NodeId(s) => match a.as_text() {
                    Some(needle) => s.contains(needle),
                    None => return Err(type_err(pos, "in", &a, &b)),
                },
                _ => return Err(type_err(pos, "in", &a, &b)),
            }))
        }
        Add | Sub | Mul | Div => {
            if matches!(a, Value::Missing) || matches!(b, Value::Missing) {
                return Err(code_err(pos, format!("arithmetic with Missing value ({})", op.symbol())));
            }
            match (op, &a, &b) {
                (Add, Value::Num(x), Value::Num(y)) => Ok(Value::Num(x + y)),
                (Sub, Value::Num(x), Value::Num(y)) => Ok(Value::Num(x - y)),
                (Mul, Value::Num(x), Value::Num(y)) => Ok(Value::Num(x * y)),
                (Div, Value::Num(_), Value::Num(y)) if *y == 0.0 => Err(code_err(pos, "division by zero")),
                (Div, Value::Num(x), Value::Num(y)) => Ok(Value::Num(x / y)),
                (Add, Value::List(x), Value::List(y)) => {
                    Ok(Value::List(x.iter().chain(y).cloned().collect()))
                }
                (Sub, Value::Set(x), Value::Set(y)) => Ok(Value::Set(x.difference(y).cloned().collect())),
                (Add, _, _) => match (a.as_text(), b.as_text()) {
                    (Some(x), Some(y)) => Ok(Value::Str(format!("{x}{y}"))),
                    _ => Err(type_err(pos, op.symbol(), &a, &b)),
                },
                _ => Err(type_err(pos, op.symbol(), &a, &b)),
            }
        }
        And | Or => match (&a, &b) {
            (Value::Set(x), Value::Set(y)) => Ok(Value::Set(if op == And {
                x.intersection(y).cloned().collect()
            } else {
                x.union(y).cloned().collect()
            })),
            (Value::Bool(x), Value::Bool(y)) => Ok(Value::Bool(if op == And { *x && *y } else { *x || *y })),
            _ => Err(type_err(pos, op.symbol(), &a, &b)),
        },
    }
}

fn index(pos: Pos, target: Value, idx: Value) -> Eval<Value> {
    let position = |len: usize, i: &Value| -> Eval<usize> {
        let Value::Num(n) = i else {
            return Err(code_err(pos, format!("indices must be numbers, not {}", i.type_name())));
        };
        if n.fract() != 0.0 {
            return Err(code_err(pos, "indices must be integers"));
        }
        let n = *n as i64;
        let resolved = if n < 0 { n + len as i64 } else { n };
        if resolved < 0 || resolved >= len as i64 {
            return Err(code_err(pos, format!("index {n} out of range for length {len}")));
        }
        Ok(resolved as usize)
    };
    match target {
        Value::List(items) => {
            let i = position(items.len(), &idx)?;
            Ok(items.into_iter().nth(i).expect("index checked"))
        }
        Value::Dict(map) => {
            let k = idx
                .as_text()
                .ok_or_else(|| code_err(pos, format!("dict keys must be strings, not {}", idx.type_name())))?;
            map.get(k)
                .cloned()
                .ok_or_else(|| code_err(pos, format!("key `{k}` not found")))
        }
        Value::Str(s) | Value::NodeId(s) => {
            let chars: Vec<char> = s.chars().collect();
            let i = position(chars.len(), &idx)?;
            Ok(Value::Str(chars[i].to_string()))
        }
        other => Err(code_err(pos, format!("{} is not indexable", other.type_name()))),
    }
}

/// Runs a parsed program against the graph functions in `api`.
pub fn execute(program: &SnippetProgram, api: &dyn GraphApi, options: ExecOptions) -> ExecutionResult {
    let mut interp = Interp {
        api,
        budget: options.step_budget,
        steps: 0,
        env: HashMap::new(),
        stdout: String::new(),
        calls: Vec::new(),
    };
    let error = interp.block(&program.statements).err();
    ExecutionResult {
        stdout: interp.stdout,
        retrieval_calls: interp.calls,
        steps_used: interp.steps,
        error,
    }
}
