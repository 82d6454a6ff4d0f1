use super::ast::{BinOp, Builtin, Expr, ExprKind, Pos, SnippetProgram, Stmt, StmtKind};
use super::lexer::{tokenize, Tok, Token};
use super::ParseError;

/// Maximum nesting depth of `for` loops.
pub const MAX_LOOP_DEPTH: usize = 3;

struct Parser {
    toks: Vec<Token>,
    i: usize,
    loop_depth: usize,
    max_loop_depth: usize,
}

fn err(pos: Pos, message: impl Into<String>) -> ParseError {
    ParseError {
        line: pos.line,
        col: pos.col,
        message: message.into(),
    }
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].tok
    }

    fn pos(&self) -> Pos {
        self.toks[self.i].pos
    }

    fn advance(&mut self) -> Token {
        let t = self.toks[self.i].clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<Token, ParseError> {
        if *self.peek() == tok {
            Ok(self.advance())
        } else {
            Err(err(
                self.pos(),
                format!("expected {what}, found {}", self.peek().describe()),
            ))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.advance();
                Ok(s)
            }
            other => Err(err(self.pos(), format!("expected identifier, found {}", other.describe()))),
        }
    }

    fn program(&mut self) -> Result<SnippetProgram, ParseError> {
        let mut statements = Vec::new();
        while *self.peek() != Tok::Eof {
            statements.push(self.stmt()?);
        }
        if statements.is_empty() {
            return Err(err(self.pos(), "program contains no statements"));
        }
        Ok(SnippetProgram { statements })
    }

    fn block(&mut self) -> Result<Vec<Stmt>, ParseError> {
        self.expect(Tok::Newline, "end of line after `:`")?;
        self.expect(Tok::Indent, "an indented block")?;
        let mut body = Vec::new();
        while !matches!(self.peek(), Tok::Dedent | Tok::Eof) {
            body.push(self.stmt()?);
        }
        self.expect(Tok::Dedent, "end of block")?;
        Ok(body)
    }

    fn end_of_stmt(&mut self) -> Result<(), ParseError> {
        self.expect(Tok::Newline, "end of line").map(|_| ())
    }

    fn stmt(&mut self) -> Result<Stmt, ParseError> {
        let pos = self.pos();
        let kind = match self.peek().clone() {
            Tok::For => {
                self.advance();
                if self.loop_depth >= self.max_loop_depth {
                    return Err(err(
                        pos,
                        format!("loops may be nested at most {} deep", self.max_loop_depth),
                    ));
                }
                let var = self.ident()?;
                if Builtin::from_name(&var).is_some() || var == "print" {
                    return Err(err(pos, format!("cannot bind builtin name `{var}`")));
                }
                self.expect(Tok::In, "`in`")?;
                let iter = self.expr()?;
                self.expect(Tok::Colon, "`:`")?;
                self.loop_depth += 1;
                let body = self.block();
                self.loop_depth -= 1;
                StmtKind::For {
                    var,
                    iter,
                    body: body?,
                }
            }
            Tok::If => {
                self.advance();
                let mut branches = Vec::new();
                let cond = self.expr()?;
                self.expect(Tok::Colon, "`:`")?;
                branches.push((cond, self.block()?));
                let mut else_body = None;
                loop {
                    if self.eat(&Tok::Elif) {
                        let cond = self.expr()?;
                        self.expect(Tok::Colon, "`:`")?;
                        branches.push((cond, self.block()?));
                    } else if self.eat(&Tok::Else) {
                        self.expect(Tok::Colon, "`:`")?;
                        else_body = Some(self.block()?);
                        break;
                    } else {
                        break;
                    }
                }
                StmtKind::If {
                    branches,
                    else_body,
                }
            }
            Tok::Ident(name) if name == "print" => {
                self.advance();
                self.expect(Tok::LParen, "`(` after print")?;
                let args = self.args(Tok::RParen)?;
                self.end_of_stmt()?;
                StmtKind::Print(args)
            }
            Tok::Ident(name) if self.toks.get(self.i + 1).map(|t| &t.tok) == Some(&Tok::Assign) => {
                if Builtin::from_name(&name).is_some() {
                    return Err(err(pos, format!("cannot assign to builtin `{name}`")));
                }
                self.advance();
                self.advance();
                let value = self.expr()?;
                self.end_of_stmt()?;
                StmtKind::Assign(name, value)
            }
            _ => {
                let e = self.expr()?;
                self.end_of_stmt()?;
                StmtKind::Expr(e)
            }
        };
        Ok(Stmt { kind, pos })
    }

    fn args(&mut self, close: Tok) -> Result<Vec<Expr>, ParseError> {
        let mut args = Vec::new();
        if self.eat(&close) {
            return Ok(args);
        }
        loop {
            args.push(self.expr()?);
            if self.eat(&Tok::Comma) {
                if self.eat(&close) {
                    return Ok(args);
                }
                continue;
            }
            let what = match close {
                Tok::RParen => "`,` or `)`",
                Tok::RBracket => "`,` or `]`",
                _ => "`,` or `}`",
            };
            self.expect(close, what)?;
            return Ok(args);
        }
    }

    fn binop(&self) -> Option<BinOp> {
        Some(match self.peek() {
            Tok::Plus => BinOp::Add,
            Tok::Minus => BinOp::Sub,
            Tok::Star => BinOp::Mul,
            Tok::Slash => BinOp::Div,
            Tok::EqEq => BinOp::Eq,
            Tok::NotEq => BinOp::Ne,
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            Tok::Gt => BinOp::Gt,
            Tok::Ge => BinOp::Ge,
            Tok::In => BinOp::In,
            Tok::Amp => BinOp::And,
            Tok::Pipe => BinOp::Or,
            _ => return None,
        })
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.binary(1)
    }

    /// Precedence climbing; all binary operators are left-associative.
    fn binary(&mut self, min_prec: u8) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binop() {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            let pos = self.pos();
            self.advance();
            let rhs = self.binary(prec + 1)?;
            lhs = Expr {
                kind: ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)),
                pos,
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Minus {
            let pos = self.pos();
            self.advance();
            let inner = self.unary()?;
            return Ok(Expr {
                kind: ExprKind::Neg(Box::new(inner)),
                pos,
            });
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.primary()?;
        while *self.peek() == Tok::LBracket {
            let pos = self.pos();
            self.advance();
            let idx = self.expr()?;
            self.expect(Tok::RBracket, "`]`")?;
            e = Expr {
                kind: ExprKind::Index(Box::new(e), Box::new(idx)),
                pos,
            };
        }
        Ok(e)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let pos = self.pos();
        let kind = match self.peek().clone() {
            Tok::Num(n) => {
                self.advance();
                ExprKind::Num(n)
            }
            Tok::Str(s) => {
                self.advance();
                ExprKind::Str(s)
            }
            Tok::True => {
                self.advance();
                ExprKind::Bool(true)
            }
            Tok::False => {
                self.advance();
                ExprKind::Bool(false)
            }
            Tok::LParen => {
                self.advance();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                return Ok(e);
            }
            Tok::LBracket => {
                self.advance();
                ExprKind::List(self.args(Tok::RBracket)?)
            }
            Tok::LBrace => {
                self.advance();
                self.brace()?
            }
            Tok::Ident(name) => {
                self.advance();
                if *self.peek() == Tok::LParen {
                    if name == "print" {
                        return Err(err(pos, "print is a statement, not an expression"));
                    }
                    let builtin = Builtin::from_name(&name)
                        .ok_or_else(|| err(pos, format!("unknown function `{name}`")))?;
                    self.advance();
                    ExprKind::Call(builtin, self.args(Tok::RParen)?)
                } else {
                    ExprKind::Var(name)
                }
            }
            other => {
                return Err(err(
                    pos,
                    format!("expected an expression, found {}", other.describe()),
                ))
            }
        };
        Ok(Expr { kind, pos })
    }

    /// After `{`: dict literal, set literal, or `{}` (empty dict).
    fn brace(&mut self) -> Result<ExprKind, ParseError> {
        if self.eat(&Tok::RBrace) {
            return Ok(ExprKind::Dict(Vec::new()));
        }
        let first = self.expr()?;
        if self.eat(&Tok::Colon) {
            let v = self.expr()?;
            let mut pairs = vec![(first, v)];
            while self.eat(&Tok::Comma) {
                if *self.peek() == Tok::RBrace {
                    break;
                }
                let k = self.expr()?;
                self.expect(Tok::Colon, "`:` in dict literal")?;
                let v = self.expr()?;
                pairs.push((k, v));
            }
            self.expect(Tok::RBrace, "`}`")?;
            Ok(ExprKind::Dict(pairs))
        } else {
            let mut items = vec![first];
            if self.eat(&Tok::Comma) {
                items.extend(self.args(Tok::RBrace)?);
            } else {
                self.expect(Tok::RBrace, "`,` or `}`")?;
            }
            Ok(ExprKind::Set(items))
        }
    }
}

pub fn parse_with_depth(source: &str, max_loop_depth: usize) -> Result<SnippetProgram, ParseError> {
    let toks = tokenize(source)?;
    Parser {
        toks,
        i: 0,
        loop_depth: 0,
        max_loop_depth,
    }
    .program()
}
