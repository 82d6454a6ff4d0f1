use super::ast::Pos;
use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Num(f64),
    Str(String),
    For,
    In,
    If,
    Elif,
    Else,
    True,
    False,
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Comma,
    Colon,
    Assign,
    Plus,
    Minus,
    Star,
    Slash,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    Amp,
    Pipe,
    Newline,
    Indent,
    Dedent,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Num(n) => format!("number {n}"),
            Tok::Str(_) => "string literal".into(),
            Tok::Newline => "end of line".into(),
            Tok::Indent => "indent".into(),
            Tok::Dedent => "dedent".into(),
            Tok::Eof => "end of input".into(),
            other => format!("{other:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

pub const INDENT_WIDTH: usize = 4;

struct Lexer {
    chars: Vec<char>,
    i: usize,
    line: usize,
    col: usize,
    out: Vec<Token>,
    indents: Vec<usize>,
    depth: usize,
}

fn err(pos: Pos, message: impl Into<String>) -> ParseError {
    ParseError {
        line: pos.line,
        col: pos.col,
        message: message.into(),
    }
}

impl Lexer {
    fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            col: self.col,
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.i).copied()
    }

    fn peek2(&self) -> Option<char> {
        self.chars.get(self.i + 1).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.i).copied()?;
        self.i += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn push(&mut self, tok: Tok, pos: Pos) {
        self.out.push(Token { tok, pos });
    }

    fn last_is_newline(&self) -> bool {
        matches!(
            self.out.last().map(|t| &t.tok),
            None | Some(Tok::Newline) | Some(Tok::Indent) | Some(Tok::Dedent)
        )
    }

    /// Handles indentation at the start of a logical line. Returns false
    /// when the line is blank or a comment and was consumed entirely.
    fn line_start(&mut self) -> Result<bool, ParseError> {
        let mut width = 0;
        while let Some(c) = self.peek() {
            match c {
                ' ' => {
                    width += 1;
                    self.bump();
                }
                '\t' => return Err(err(self.pos(), "tabs are not allowed in indentation")),
                '\r' => {
                    self.bump();
                }
                _ => break,
            }
        }
        match self.peek() {
            None => return Ok(false),
            Some('\n') => {
                self.bump();
                return Ok(false);
            }
            Some('#') => {
                while let Some(c) = self.peek() {
                    if c == '\n' {
                        break;
                    }
                    self.bump();
                }
                self.bump();
                return Ok(false);
            }
            _ => {}
        }
        let pos = self.pos();
        let top = *self.indents.last().expect("indent stack never empty");
        if width > top {
            if width != top + INDENT_WIDTH {
                return Err(err(pos, format!("indentation must increase by {INDENT_WIDTH} spaces")));
            }
            self.indents.push(width);
            self.push(Tok::Indent, pos);
        } else if width < top {
            while width < *self.indents.last().expect("indent stack never empty") {
                self.indents.pop();
                self.push(Tok::Dedent, pos);
            }
            if width != *self.indents.last().expect("indent stack never empty") {
                return Err(err(pos, "dedent does not match any outer indentation level"));
            }
        }
        Ok(true)
    }

    fn string(&mut self, quote: char) -> Result<Tok, ParseError> {
        let start = self.pos();
        self.bump();
        let mut s = String::new();
        loop {
            match self.bump() {
                None | Some('\n') => return Err(err(start, "unterminated string literal")),
                Some(c) if c == quote => return Ok(Tok::Str(s)),
                Some('\\') => match self.bump() {
                    Some('n') => s.push('\n'),
                    Some('t') => s.push('\t'),
                    Some('\\') => s.push('\\'),
                    Some('"') => s.push('"'),
                    Some('\'') => s.push('\''),
                    _ => return Err(err(start, "invalid escape sequence")),
                },
                Some(c) => s.push(c),
            }
        }
    }

    fn number(&mut self) -> Result<Tok, ParseError> {
        let start = self.pos();
        let mut s = String::new();
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() || c == '_' {
                if c != '_' {
                    s.push(c);
                }
                self.bump();
            } else {
                break;
            }
        }
        if self.peek() == Some('.') && self.peek2().is_some_and(|c| c.is_ascii_digit()) {
            s.push('.');
            self.bump();
            while let Some(c) = self.peek().filter(char::is_ascii_digit) {
                s.push(c);
                self.bump();
            }
        }
        s.parse::<f64>()
            .map(Tok::Num)
            .map_err(|_| err(start, "invalid number literal"))
    }

    fn run(mut self) -> Result<Vec<Token>, ParseError> {
        let mut at_line_start = true;
        loop {
            if at_line_start && self.depth == 0 {
                if self.peek().is_none() {
                    break;
                }
                if !self.line_start()? {
                    continue;
                }
                at_line_start = false;
            }
            let pos = self.pos();
            let Some(c) = self.peek() else { break };
            match c {
                '\n' => {
                    self.bump();
                    if self.depth == 0 {
                        if !self.last_is_newline() {
                            self.push(Tok::Newline, pos);
                        }
                        at_line_start = true;
                    }
                }
                ' ' | '\t' | '\r' => {
                    self.bump();
                }
                '#' => {
                    while self.peek().is_some_and(|c| c != '\n') {
                        self.bump();
                    }
                }
                '"' | '\'' => {
                    let t = self.string(c)?;
                    self.push(t, pos);
                }
                c if c.is_ascii_digit() => {
                    let t = self.number()?;
                    self.push(t, pos);
                }
                c if c.is_alphabetic() || c == '_' => {
                    let mut s = String::new();
                    while let Some(c) = self.peek().filter(|c| c.is_alphanumeric() || *c == '_') {
                        s.push(c);
                        self.bump();
                    }
                    let t = match s.as_str() {
                        "for" => Tok::For,
                        "in" => Tok::In,
                        "if" => Tok::If,
                        "elif" => Tok::Elif,
                        "else" => Tok::Else,
                        "True" => Tok::True,
                        "False" => Tok::False,
                        _ => Tok::Ident(s),
                    };
                    self.push(t, pos);
                }
                _ => {
                    self.bump();
                    let two = |l: &mut Self, next: char, yes: Tok, no: Tok| {
                        if l.peek() == Some(next) {
                            l.bump();
                            yes
                        } else {
                            no
                        }
                    };
                    let t = match c {
                        '(' | '[' | '{' => {
                            self.depth += 1;
                            match c {
                                '(' => Tok::LParen,
                                '[' => Tok::LBracket,
                                _ => Tok::LBrace,
                            }
                        }
                        ')' | ']' | '}' => {
                            self.depth = self
                                .depth
                                .checked_sub(1)
                                .ok_or_else(|| err(pos, format!("unmatched `{c}`")))?;
                            match c {
                                ')' => Tok::RParen,
                                ']' => Tok::RBracket,
                                _ => Tok::RBrace,
                            }
                        }
                        ',' => Tok::Comma,
                        ':' => Tok::Colon,
                        '+' => Tok::Plus,
                        '-' => Tok::Minus,
                        '*' => Tok::Star,
                        '/' => Tok::Slash,
                        '&' => Tok::Amp,
                        '|' => Tok::Pipe,
                        '=' => two(&mut self, '=', Tok::EqEq, Tok::Assign),
                        '<' => two(&mut self, '=', Tok::Le, Tok::Lt),
                        '>' => two(&mut self, '=', Tok::Ge, Tok::Gt),
                        '!' => {
                            if self.peek() == Some('=') {
                                self.bump();
                                Tok::NotEq
                            } else {
                                return Err(err(pos, "unexpected `!`"));
                            }
                        }
                        other => return Err(err(pos, format!("unexpected character `{other}`"))),
                    };
                    self.push(t, pos);
                }
            }
        }
        let pos = self.pos();
        if self.depth > 0 {
            return Err(err(pos, "unclosed bracket at end of input"));
        }
        if !self.last_is_newline() {
            self.push(Tok::Newline, pos);
        }
        while self.indents.len() > 1 {
            self.indents.pop();
            self.push(Tok::Dedent, pos);
        }
        self.push(Tok::Eof, pos);
        Ok(self.out)
    }
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    Lexer {
        chars: src.chars().collect(),
        i: 0,
        line: 1,
        col: 1,
        out: Vec::new(),
        indents: vec![0],
        depth: 0,
    }
    .run()
}
