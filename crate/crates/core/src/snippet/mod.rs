//! Snippet language: a small indentation-based imperative language whose
//! only side effects are `print` and the five graph functions.

mod ast;
mod interp;
mod lexer;
mod parser;
mod value;

use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

pub use ast::{BinOp, Builtin, Expr, ExprKind, Pos, SnippetProgram, Stmt, StmtKind};
pub use interp::{
    execute, ExecError, ExecErrorKind, ExecOptions, ExecutionResult, RetrievalCall, DEFAULT_STEP_BUDGET,
};
pub use lexer::INDENT_WIDTH;
pub use parser::{parse_with_depth, MAX_LOOP_DEPTH};
pub use value::{Key, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

/// Renders `s` as a double-quoted snippet string literal.
pub fn quote_str(s: &str) -> String {
    ast::quote_literal(s)
}

pub fn parse(source: &str) -> Result<SnippetProgram, ParseError> {
    parse_with_depth(source, MAX_LOOP_DEPTH)
}

fn retrieve_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r#"RetrieveNode\(\s*(?:"((?:[^"\\]|\\.)*)"|'((?:[^'\\]|\\.)*)')\s*\)"#)
            .expect("static regex")
    })
}

/// A `RetrieveNode` call with a literal argument found in a single line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetrieveLiteral {
    pub query: String,
    /// Byte span of the whole call within the line.
    pub span: (usize, usize),
}

/// Finds the first complete `RetrieveNode("...")` call in `line`. Comment
/// text after `#` is ignored.
pub fn detect_retrieve_call(line: &str) -> Option<RetrieveLiteral> {
    let code = strip_comment(line);
    let caps = retrieve_re().captures(code)?;
    let whole = caps.get(0)?;
    let raw = caps.get(1).or_else(|| caps.get(2))?.as_str();
    Some(RetrieveLiteral {
        query: unescape(raw),
        span: (whole.start(), whole.end()),
    })
}

fn strip_comment(line: &str) -> &str {
    let mut quote = None;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        match quote {
            Some(q) => {
                if escaped {
                    escaped = false;
                } else if c == '\\' {
                    escaped = true;
                } else if c == q {
                    quote = None;
                }
            }
            None => match c {
                '"' | '\'' => quote = Some(c),
                '#' => return &line[..i],
                _ => {}
            },
        }
    }
    line
}

fn unescape(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut chars = raw.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('n') => out.push('\n'),
                Some('t') => out.push('\t'),
                Some(other) => out.push(other),
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

/// Replaces every `RetrieveNode(<literal>)` whose literal equals `query`
/// with the quoted node id, so the snippet no longer needs the index.
pub fn substitute_retrieve(snippet: &str, query: &str, id: &str) -> String {
    let replacement = ast::quote_literal(id);
    let mut out = String::with_capacity(snippet.len());
    for (i, line) in snippet.split('\n').enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let mut rest = line;
        loop {
            match detect_retrieve_call(rest) {
                Some(hit) if hit.query == query => {
                    out.push_str(&rest[..hit.span.0]);
                    out.push_str(&replacement);
                    rest = &rest[hit.span.1..];
                }
                Some(hit) => {
                    out.push_str(&rest[..hit.span.1]);
                    rest = &rest[hit.span.1..];
                }
                None => {
                    out.push_str(rest);
                    break;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    use super::*;
    use crate::embed::{IndexConfig, VectorIndex};
    use crate::graph::{AttrValue, NodeId, PropertyGraph};
    use crate::retriever::{GraphApi, RetrievalError, Retrieved, Retriever, RetrieverConfig, VertexChunk};

    fn retriever() -> Retriever {
        let g = Arc::new(PropertyGraph::from_jsonl(include_str!("../../../../fixtures/tiny.jsonl")).unwrap());
        let idx = Arc::new(VectorIndex::build(&g, &IndexConfig::default()));
        Retriever::new(g, idx, RetrieverConfig::default())
    }

    fn run(src: &str) -> ExecutionResult {
        execute(&parse(src).unwrap(), &retriever(), ExecOptions::default())
    }

    #[test]
    fn feature_lookup() {
        let r = run("n = RetrieveNode(\"alpha widget\")\nprint(NodeFeature([n], \"price\"))\n");
        assert!(r.is_ok(), "{:?}", r.error);
        assert_eq!(r.stdout, "[10]\n");
        assert_eq!(r.retrieval_calls.len(), 2);
        assert_eq!(r.retrieval_calls[0].result, Ok("n1".to_string()));
    }

    #[test]
    fn neighbours_and_loops() {
        let r = run("print(NeighbourCheck(\"n1\", \"also_viewed\"))\n");
        assert_eq!(r.stdout, "[n3]\n");
        let src = "\
total = 0
for u in [\"u1\"]:
    for v in NeighbourCheck(u, \"viewed\"):
        total = total + NodeDegree(v, \"also_viewed\")
print(total + len(NeighbourCheck(\"n1\", \"also_viewed\")))
";
        assert_eq!(run(src).stdout, "3\n");
    }

    #[test]
    fn parse_error_has_position() {
        let e = parse("x = ").unwrap_err();
        assert_eq!(e.line, 1);
        assert!(parse("for a in x:\n    for b in a:\n        for c in b:\n            for d in c:\n                print(d)\n").is_err());
        assert!(parse("print = 3\n").is_err());
        assert!(parse("y = print(1)\n").is_err());
    }

    #[test]
    fn printer_round_trips() {
        let src = "a = set(NeighbourCheck(\"n1\", \"also_viewed\"))\nb = set(NeighbourCheck(\"n2\", \"also_viewed\"))\nprint(a & b)\n";
        let p = parse(src).unwrap();
        let again = parse(&p.to_string()).unwrap();
        assert_eq!(again.to_string(), p.to_string());
        assert_eq!(run(src).stdout, "{n3}\n");
    }

    #[test]
    fn node_ids_iterate_like_strings() {
        let src = "n = NeighbourCheck(\"n1\", \"also_viewed\")[0]\nprint(len(n), n[0], list(n), sorted(n))\n";
        assert_eq!(run(src).stdout, "2 n [n, 3] [3, n]\n");
    }

    #[test]
    fn missing_semantics() {
        let r = run("m = NodeFeature([\"u1\"], \"price\")[0]\nprint(m == m, m != 1, m < 1, m > 1)\n");
        assert_eq!(r.stdout, "False False False False\n");
        let r = run("m = NodeFeature([\"u1\"], \"price\")[0]\nprint(m + 1)\n");
        assert_eq!(r.error.unwrap().kind, ExecErrorKind::CodeExecution);
    }

    #[test]
    fn errors_classified() {
        let r = run("print(NodeDegree(\"zz\", \"viewed\"))\n");
        assert_eq!(r.error.unwrap().kind, ExecErrorKind::RetrievalProcess);
        let r = run("print(undefined_name)\n");
        assert_eq!(r.error.unwrap().kind, ExecErrorKind::CodeExecution);
        let p = parse("x = 0\nfor a in [1, 2, 3, 4, 5, 6, 7, 8, 9]:\n    x = x + a\n").unwrap();
        let r = execute(&p, &retriever(), ExecOptions { step_budget: 20 });
        assert_eq!(r.error.unwrap().kind, ExecErrorKind::StepBudgetExceeded);
        assert_eq!(r.steps_used, 20);
    }

    struct Counting {
        inner: Retriever,
        calls: AtomicUsize,
    }

    impl GraphApi for Counting {
        fn retrieve_node(&self, text: &str) -> Result<Retrieved, RetrievalError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.inner.retrieve_node(text)
        }
        fn node_info(&self, id: &str) -> Result<VertexChunk, RetrievalError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.inner.node_info(id)
        }
        fn node_feature(&self, ids: &[NodeId], name: &str) -> Result<Vec<Option<AttrValue>>, RetrievalError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.inner.node_feature(ids, name)
        }
        fn node_degree(&self, id: &str, edge_type: &str) -> Result<usize, RetrievalError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.inner.node_degree(id, edge_type)
        }
        fn neighbour_check(&self, id: &str, edge_type: &str) -> Result<Vec<NodeId>, RetrievalError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.inner.neighbour_check(id, edge_type)
        }
    }

    #[test]
    fn every_graph_access_goes_through_the_api() {
        let api = Counting {
            inner: retriever(),
            calls: AtomicUsize::new(0),
        };
        let src = "n = RetrieveNode(\"gamma widget\")\nfor v in neighbourCheck(\"u1\", \"viewed\"):\n    print(NodeInfo(v))\n";
        let r = execute(&parse(src).unwrap(), &api, ExecOptions::default());
        assert!(r.is_ok());
        assert_eq!(api.calls.load(Ordering::SeqCst), r.retrieval_calls.len());
        assert_eq!(r.retrieval_calls.len(), 4);
        let again = execute(&parse(src).unwrap(), &api, ExecOptions::default());
        assert_eq!(again.stdout, r.stdout);
    }

    #[test]
    fn detects_and_substitutes_literal_retrieval() {
        let hit = detect_retrieve_call("n = RetrieveNode('alpha widget')  # RetrieveNode(\"x\")").unwrap();
        assert_eq!(hit.query, "alpha widget");
        assert!(detect_retrieve_call("n = RetrieveNode(q)").is_none());
        assert!(detect_retrieve_call("n = RetrieveNode(\"open").is_none());
        let s = substitute_retrieve("n = RetrieveNode(\"alpha widget\")\nprint(n)", "alpha widget", "n1");
        assert_eq!(s, "n = \"n1\"\nprint(n)");
    }
}
