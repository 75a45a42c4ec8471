//! Recursive-descent parser for boolean query strings.
//!
//! ```text
//! query  := or
//! or     := and ("OR" and)*
//! and    := unary ("AND" unary)*
//! unary  := "NOT" unary | "(" query ")" | PHRASE
//! PHRASE := quoted string | bare word
//! ```
//!
//! Keywords are case-insensitive. Phrases go through the corpus tokenizer,
//! so `"Black Ice"` and `black ice` name the same 2-gram.

use crate::corpus::{tokenize, Phrase, MAX_NGRAM};

use super::QueryError;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum QueryAst {
    Phrase(Phrase),
    Not(Box<QueryAst>),
    And(Vec<QueryAst>),
    Or(Vec<QueryAst>),
}

impl QueryAst {
    /// Leaf from raw text; panics if it does not tokenize to 1-3 tokens.
    pub fn phrase(text: &str) -> Self {
        QueryAst::Phrase(Phrase::parse(text).unwrap_or_else(|| panic!("invalid phrase `{text}`")))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(child: QueryAst) -> Self {
        QueryAst::Not(Box::new(child))
    }

    /// Truth value given which phrases are present.
    pub fn eval(&self, present: &impl Fn(&Phrase) -> bool) -> bool {
        match self {
            QueryAst::Phrase(p) => present(p),
            QueryAst::Not(c) => !c.eval(present),
            QueryAst::And(cs) => cs.iter().all(|c| c.eval(present)),
            QueryAst::Or(cs) => cs.iter().any(|c| c.eval(present)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    LParen,
    RParen,
    And,
    Or,
    Not,
    Word(String),
    Quoted(String),
}

fn syntax(offset: usize, message: impl Into<String>) -> QueryError {
    QueryError::Syntax { offset, message: message.into() }
}

fn lex(input: &str) -> Result<Vec<(usize, Tok)>, QueryError> {
    let mut out = Vec::new();
    let mut it = input.char_indices().peekable();
    while let Some(&(start, c)) = it.peek() {
        match c {
            c if c.is_whitespace() => {
                it.next();
            }
            '(' => {
                it.next();
                out.push((start, Tok::LParen));
            }
            ')' => {
                it.next();
                out.push((start, Tok::RParen));
            }
            '"' => {
                it.next();
                let mut end = None;
                for (i, c) in it.by_ref() {
                    if c == '"' {
                        end = Some(i);
                        break;
                    }
                }
                let end = end.ok_or_else(|| syntax(start, "unterminated quote"))?;
                out.push((start, Tok::Quoted(input[start + 1..end].to_string())));
            }
            _ => {
                let mut end = input.len();
                while let Some(&(i, c)) = it.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == '"' {
                        end = i;
                        break;
                    }
                    it.next();
                }
                let word = &input[start..end];
                let tok = match word.to_ascii_uppercase().as_str() {
                    "AND" => Tok::And,
                    "OR" => Tok::Or,
                    "NOT" => Tok::Not,
                    _ => Tok::Word(word.to_string()),
                };
                out.push((start, tok));
            }
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: &'a [(usize, Tok)],
    pos: usize,
    depth: usize,
    end: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |&(o, _)| o)
    }

    fn or(&mut self) -> Result<QueryAst, QueryError> {
        let mut children = vec![self.and()?];
        while self.peek() == Some(&Tok::Or) {
            self.pos += 1;
            children.push(self.and()?);
        }
        Ok(if children.len() == 1 { children.pop().unwrap() } else { QueryAst::Or(children) })
    }

    fn and(&mut self) -> Result<QueryAst, QueryError> {
        let mut children = vec![self.unary()?];
        while self.peek() == Some(&Tok::And) {
            self.pos += 1;
            children.push(self.unary()?);
        }
        Ok(if children.len() == 1 { children.pop().unwrap() } else { QueryAst::And(children) })
    }

    fn unary(&mut self) -> Result<QueryAst, QueryError> {
        let offset = self.offset();
        let Some(tok) = self.peek().cloned() else {
            return Err(if self.depth > 0 {
                syntax(self.end, "unbalanced parenthesis")
            } else if self.pos == 0 {
                syntax(self.end, "empty query")
            } else {
                syntax(self.end, "dangling operator")
            });
        };
        self.pos += 1;
        match tok {
            Tok::Not => Ok(QueryAst::not(self.unary()?)),
            Tok::LParen => {
                self.depth += 1;
                let inner = self.or()?;
                match self.peek() {
                    Some(Tok::RParen) => {
                        self.pos += 1;
                        self.depth -= 1;
                        Ok(inner)
                    }
                    None => Err(syntax(self.end, "unbalanced parenthesis")),
                    Some(_) => Err(syntax(self.offset(), "expected AND, OR or ')'")),
                }
            }
            Tok::RParen if self.depth == 0 => Err(syntax(offset, "unbalanced parenthesis")),
            Tok::RParen => Err(syntax(offset, "expected a phrase before ')'")),
            Tok::And | Tok::Or => Err(syntax(offset, "dangling operator")),
            Tok::Word(w) => leaf(&w, offset),
            Tok::Quoted(q) => {
                if q.trim().is_empty() {
                    return Err(syntax(offset, "empty quotes"));
                }
                leaf(&q, offset)
            }
        }
    }
}

fn leaf(text: &str, offset: usize) -> Result<QueryAst, QueryError> {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(syntax(offset, format!("`{text}` contains no searchable characters")));
    }
    if tokens.len() > MAX_NGRAM {
        return Err(syntax(offset, format!("phrase longer than {MAX_NGRAM} tokens")));
    }
    Ok(QueryAst::Phrase(Phrase::new(tokens).expect("1-3 clean tokens")))
}

pub fn parse(input: &str) -> Result<QueryAst, QueryError> {
    let toks = lex(input)?;
    let mut p = Parser { toks: &toks, pos: 0, depth: 0, end: input.len() };
    let ast = p.or()?;
    match p.peek() {
        None => Ok(ast),
        Some(Tok::RParen) => Err(syntax(p.offset(), "unbalanced parenthesis")),
        Some(_) => Err(syntax(p.offset(), "expected AND, OR or end of query")),
    }
}
