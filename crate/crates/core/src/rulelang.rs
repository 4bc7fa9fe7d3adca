//! The textual rule language.
//!
//! A rule file is a sequence of rules, each introduced by the `rule` keyword:
//!
//! ```text
//! ruleset     := { rule } ;
//! rule        := "rule" IDENT ":" body [ "weight" NUM ] [ "penalty" pkind ] ;
//! body        := bound | implication ;
//! bound       := "output" "[" INT "]" cmp NUM ;
//! implication := "if" atom { "and" atom } "then" "class" INT [ "margin" NUM ] ;
//! atom        := "feature" "[" INT "]" cmp NUM ;
//! cmp         := "<=" | ">=" | "<" | ">" ;
//! pkind       := "relu" | "softplus" "k" "=" NUM ;
//! ```
//!
//! `#` starts a comment that runs to the end of the line. Newlines are plain
//! whitespace. Keywords are reserved and cannot be used as rule names.
//! Omitted clauses take their defaults: `weight 1`, `penalty relu`,
//! `margin 0.5`.

use std::collections::HashSet;
use std::fmt::{self, Write as _};

use thiserror::Error;

pub const DEFAULT_WEIGHT: f64 = 1.0;
pub const DEFAULT_MARGIN: f64 = 0.5;

/// 1-based line/column position in the source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

/// Half-open source range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Span {
    pub start: Pos,
    pub end: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleError {
    #[error("lex error at {pos}: unexpected character {ch:?}")]
    Lex { pos: Pos, ch: char },
    #[error("parse error at {pos}: expected {expected}, found {found}")]
    Parse {
        pos: Pos,
        expected: String,
        found: String,
    },
    #[error("invalid rule at {pos}: {message}")]
    Validation { pos: Pos, message: String },
}

impl RuleError {
    pub fn pos(&self) -> Pos {
        match self {
            RuleError::Lex { pos, .. }
            | RuleError::Parse { pos, .. }
            | RuleError::Validation { pos, .. } => *pos,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Comparator {
    Lt,
    Le,
    Gt,
    Ge,
}

impl Comparator {
    /// Exact evaluation of `lhs <cmp> rhs`.
    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Comparator::Lt => lhs < rhs,
            Comparator::Le => lhs <= rhs,
            Comparator::Gt => lhs > rhs,
            Comparator::Ge => lhs >= rhs,
        }
    }

    /// True for `<` and `<=`.
    pub fn is_upper_bound(self) -> bool {
        matches!(self, Comparator::Lt | Comparator::Le)
    }

    pub fn is_strict(self) -> bool {
        matches!(self, Comparator::Lt | Comparator::Gt)
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
        }
    }
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// `feature[i] <cmp> threshold`, tested on raw inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureAtom {
    pub feature_index: usize,
    pub comparator: Comparator,
    pub threshold: f64,
}

impl FeatureAtom {
    pub fn holds(&self, features: &[f64]) -> bool {
        self.comparator
            .holds(features[self.feature_index], self.threshold)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PenaltyKind {
    Relu,
    /// Smooth relaxation with sharpness `k > 0`.
    Softplus {
        k: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum RuleBody {
    /// `output[j] <cmp> constant`.
    Bound {
        output_index: usize,
        comparator: Comparator,
        constant: f64,
    },
    /// `if a1 and a2 ... then class c margin m`.
    Implication {
        antecedent: Vec<FeatureAtom>,
        target_class: usize,
        margin: f64,
    },
}

#[derive(Debug, Clone)]
pub struct RuleAst {
    pub name: String,
    pub body: RuleBody,
    pub weight: f64,
    pub penalty: PenaltyKind,
    pub span: Span,
}

// Spans record where a rule came from, not what it means.
impl PartialEq for RuleAst {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.body == other.body
            && self.weight == other.weight
            && self.penalty == other.penalty
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RuleSet {
    pub rules: Vec<RuleAst>,
}

impl RuleSet {
    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, RuleAst> {
        self.rules.iter()
    }

    /// Every rule with its weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> RuleSet {
        RuleSet {
            rules: self
                .rules
                .iter()
                .map(|r| RuleAst {
                    weight: r.weight * factor,
                    ..r.clone()
                })
                .collect(),
        }
    }
}

impl<'a> IntoIterator for &'a RuleSet {
    type Item = &'a RuleAst;
    type IntoIter = std::slice::Iter<'a, RuleAst>;

    fn into_iter(self) -> Self::IntoIter {
        self.rules.iter()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Rule,
    If,
    Then,
    And,
    Class,
    Margin,
    Weight,
    Penalty,
    Relu,
    Softplus,
    K,
    Output,
    Feature,
    Ident(String),
    Int(u64),
    Num(f64),
    Colon,
    LBrack,
    RBrack,
    Eq,
    Lt,
    Le,
    Gt,
    Ge,
}

impl TokenKind {
    fn keyword(word: &str) -> Option<TokenKind> {
        Some(match word {
            "rule" => TokenKind::Rule,
            "if" => TokenKind::If,
            "then" => TokenKind::Then,
            "and" => TokenKind::And,
            "class" => TokenKind::Class,
            "margin" => TokenKind::Margin,
            "weight" => TokenKind::Weight,
            "penalty" => TokenKind::Penalty,
            "relu" => TokenKind::Relu,
            "softplus" => TokenKind::Softplus,
            "k" => TokenKind::K,
            "output" => TokenKind::Output,
            "feature" => TokenKind::Feature,
            _ => return None,
        })
    }
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Rule => f.write_str("`rule`"),
            TokenKind::If => f.write_str("`if`"),
            TokenKind::Then => f.write_str("`then`"),
            TokenKind::And => f.write_str("`and`"),
            TokenKind::Class => f.write_str("`class`"),
            TokenKind::Margin => f.write_str("`margin`"),
            TokenKind::Weight => f.write_str("`weight`"),
            TokenKind::Penalty => f.write_str("`penalty`"),
            TokenKind::Relu => f.write_str("`relu`"),
            TokenKind::Softplus => f.write_str("`softplus`"),
            TokenKind::K => f.write_str("`k`"),
            TokenKind::Output => f.write_str("`output`"),
            TokenKind::Feature => f.write_str("`feature`"),
            TokenKind::Ident(s) => write!(f, "identifier `{s}`"),
            TokenKind::Int(i) => write!(f, "integer {i}"),
            TokenKind::Num(x) => write!(f, "number {x}"),
            TokenKind::Colon => f.write_str("`:`"),
            TokenKind::LBrack => f.write_str("`[`"),
            TokenKind::RBrack => f.write_str("`]`"),
            TokenKind::Eq => f.write_str("`=`"),
            TokenKind::Lt => f.write_str("`<`"),
            TokenKind::Le => f.write_str("`<=`"),
            TokenKind::Gt => f.write_str("`>`"),
            TokenKind::Ge => f.write_str("`>=`"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Span,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    src: &'a str,
    line: usize,
    column: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            chars: src.char_indices().peekable(),
            src,
            line: 1,
            column: 1,
        }
    }

    fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            column: self.column,
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().map(|&(_, c)| c)
    }

    fn bump(&mut self) -> Option<(usize, char)> {
        let next = self.chars.next();
        if let Some((_, c)) = next {
            if c == '\n' {
                self.line += 1;
                self.column = 1;
            } else {
                self.column += 1;
            }
        }
        next
    }

    fn offset(&mut self) -> usize {
        self.chars.peek().map_or(self.src.len(), |&(i, _)| i)
    }

    fn take_while(&mut self, pred: impl Fn(char) -> bool) {
        while self.peek().is_some_and(&pred) {
            self.bump();
        }
    }

    fn number(&mut self, start: Pos) -> Result<TokenKind, RuleError> {
        let from = self.offset();
        if matches!(self.peek(), Some('+' | '-')) {
            self.bump();
        }
        self.take_while(|c| c.is_ascii_digit());
        let mut integral = true;
        if self.peek() == Some('.') {
            integral = false;
            self.bump();
            self.take_while(|c| c.is_ascii_digit());
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            integral = false;
            self.bump();
            if matches!(self.peek(), Some('+' | '-')) {
                self.bump();
            }
            match self.peek() {
                Some(c) if c.is_ascii_digit() => self.take_while(|c| c.is_ascii_digit()),
                Some(c) => {
                    return Err(RuleError::Lex {
                        pos: self.pos(),
                        ch: c,
                    })
                }
                None => {
                    return Err(RuleError::Parse {
                        pos: self.pos(),
                        expected: "exponent digits".into(),
                        found: "end of input".into(),
                    })
                }
            }
        }
        let text = &self.src[from..self.offset()];
        let unsigned = !text.starts_with(['+', '-']);
        if integral && unsigned {
            if let Ok(i) = text.parse::<u64>() {
                return Ok(TokenKind::Int(i));
            }
        }
        text.parse::<f64>()
            .map(TokenKind::Num)
            .map_err(|_| RuleError::Parse {
                pos: start,
                expected: "a number".into(),
                found: format!("`{text}`"),
            })
    }

    fn next_token(&mut self) -> Result<Option<Token>, RuleError> {
        loop {
            match self.peek() {
                None => return Ok(None),
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some('#') => self.take_while(|c| c != '\n'),
                Some(_) => break,
            }
        }
        let start = self.pos();
        let c = self.peek().expect("checked above");
        let kind = match c {
            ':' => {
                self.bump();
                TokenKind::Colon
            }
            '[' => {
                self.bump();
                TokenKind::LBrack
            }
            ']' => {
                self.bump();
                TokenKind::RBrack
            }
            '=' => {
                self.bump();
                TokenKind::Eq
            }
            '<' | '>' => {
                self.bump();
                let or_equal = self.peek() == Some('=');
                if or_equal {
                    self.bump();
                }
                match (c, or_equal) {
                    ('<', false) => TokenKind::Lt,
                    ('<', true) => TokenKind::Le,
                    ('>', false) => TokenKind::Gt,
                    _ => TokenKind::Ge,
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let from = self.offset();
                self.take_while(|c| c.is_ascii_alphanumeric() || c == '_');
                let word = &self.src[from..self.offset()];
                TokenKind::keyword(word).unwrap_or_else(|| TokenKind::Ident(word.to_owned()))
            }
            c if c.is_ascii_digit() || c == '.' || c == '-' || c == '+' => self.number(start)?,
            c => return Err(RuleError::Lex { pos: start, ch: c }),
        };
        Ok(Some(Token {
            kind,
            span: Span {
                start,
                end: self.pos(),
            },
        }))
    }
}

/// Splits `source` into tokens, dropping whitespace and comments.
pub fn tokenize(source: &str) -> Result<Vec<Token>, RuleError> {
    let mut lexer = Lexer::new(source);
    let mut tokens = Vec::new();
    while let Some(t) = lexer.next_token()? {
        tokens.push(t);
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    at: usize,
    eof: Pos,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.at)
    }

    fn here(&self) -> Pos {
        self.peek().map_or(self.eof, |t| t.span.start)
    }

    fn last_end(&self) -> Pos {
        self.at
            .checked_sub(1)
            .map_or(self.eof, |i| self.tokens[i].span.end)
    }

    fn unexpected(&self, expected: &str) -> RuleError {
        RuleError::Parse {
            pos: self.here(),
            expected: expected.to_owned(),
            found: self
                .peek()
                .map_or_else(|| "end of input".to_owned(), |t| t.kind.to_string()),
        }
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.peek().is_some_and(|t| &t.kind == kind) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, kind: TokenKind) -> Result<(), RuleError> {
        if self.eat(&kind) {
            Ok(())
        } else {
            Err(self.unexpected(&kind.to_string()))
        }
    }

    fn ident(&mut self) -> Result<String, RuleError> {
        match self.peek().map(|t| &t.kind) {
            Some(TokenKind::Ident(s)) => {
                let s = s.clone();
                self.at += 1;
                Ok(s)
            }
            _ => Err(self.unexpected("a rule name")),
        }
    }

    fn index(&mut self) -> Result<usize, RuleError> {
        let pos = self.here();
        match self.peek().map(|t| &t.kind) {
            Some(&TokenKind::Int(i)) => {
                self.at += 1;
                usize::try_from(i).map_err(|_| RuleError::Validation {
                    pos,
                    message: format!("index {i} is too large"),
                })
            }
            _ => Err(self.unexpected("a non-negative integer")),
        }
    }

    fn number(&mut self) -> Result<f64, RuleError> {
        let pos = self.here();
        let value = match self.peek().map(|t| &t.kind) {
            Some(&TokenKind::Int(i)) => i as f64,
            Some(&TokenKind::Num(x)) => x,
            _ => return Err(self.unexpected("a number")),
        };
        self.at += 1;
        if !value.is_finite() {
            return Err(RuleError::Validation {
                pos,
                message: "number is not finite".into(),
            });
        }
        Ok(value)
    }

    fn comparator(&mut self) -> Result<Comparator, RuleError> {
        let cmp = match self.peek().map(|t| &t.kind) {
            Some(TokenKind::Lt) => Comparator::Lt,
            Some(TokenKind::Le) => Comparator::Le,
            Some(TokenKind::Gt) => Comparator::Gt,
            Some(TokenKind::Ge) => Comparator::Ge,
            _ => return Err(self.unexpected("a comparator (<, <=, >, >=)")),
        };
        self.at += 1;
        Ok(cmp)
    }

    fn atom(&mut self) -> Result<FeatureAtom, RuleError> {
        self.expect(TokenKind::Feature)?;
        self.expect(TokenKind::LBrack)?;
        let feature_index = self.index()?;
        self.expect(TokenKind::RBrack)?;
        let comparator = self.comparator()?;
        let threshold = self.number()?;
        Ok(FeatureAtom {
            feature_index,
            comparator,
            threshold,
        })
    }

    fn body(&mut self) -> Result<RuleBody, RuleError> {
        if self.eat(&TokenKind::Output) {
            self.expect(TokenKind::LBrack)?;
            let output_index = self.index()?;
            self.expect(TokenKind::RBrack)?;
            let comparator = self.comparator()?;
            let constant = self.number()?;
            return Ok(RuleBody::Bound {
                output_index,
                comparator,
                constant,
            });
        }
        if !self.eat(&TokenKind::If) {
            return Err(self.unexpected("`output` or `if`"));
        }
        let mut antecedent = vec![self.atom()?];
        while self.eat(&TokenKind::And) {
            antecedent.push(self.atom()?);
        }
        self.expect(TokenKind::Then)?;
        self.expect(TokenKind::Class)?;
        let target_class = self.index()?;
        let margin = if self.eat(&TokenKind::Margin) {
            let pos = self.here();
            let m = self.number()?;
            if !(m > 0.0 && m <= 1.0) {
                return Err(RuleError::Validation {
                    pos,
                    message: format!("margin {m} is outside (0, 1]"),
                });
            }
            m
        } else {
            DEFAULT_MARGIN
        };
        Ok(RuleBody::Implication {
            antecedent,
            target_class,
            margin,
        })
    }

    fn rule(&mut self) -> Result<RuleAst, RuleError> {
        let start = self.here();
        self.expect(TokenKind::Rule)?;
        let name = self.ident()?;
        self.expect(TokenKind::Colon)?;
        let body = self.body()?;
        let weight = if self.eat(&TokenKind::Weight) {
            let pos = self.here();
            let w = self.number()?;
            if w <= 0.0 {
                return Err(RuleError::Validation {
                    pos,
                    message: format!("weight {w} must be positive"),
                });
            }
            w
        } else {
            DEFAULT_WEIGHT
        };
        let penalty = if self.eat(&TokenKind::Penalty) {
            if self.eat(&TokenKind::Relu) {
                PenaltyKind::Relu
            } else if self.eat(&TokenKind::Softplus) {
                self.expect(TokenKind::K)?;
                self.expect(TokenKind::Eq)?;
                let pos = self.here();
                let k = self.number()?;
                if k <= 0.0 {
                    return Err(RuleError::Validation {
                        pos,
                        message: format!("softplus sharpness k = {k} must be positive"),
                    });
                }
                PenaltyKind::Softplus { k }
            } else {
                return Err(self.unexpected("`relu` or `softplus`"));
            }
        } else {
            PenaltyKind::Relu
        };
        Ok(RuleAst {
            name,
            body,
            weight,
            penalty,
            span: Span {
                start,
                end: self.last_end(),
            },
        })
    }
}

/// Parses a whole rule file, stopping at the first error.
pub fn parse_rules(source: &str) -> Result<RuleSet, RuleError> {
    let tokens = tokenize(source)?;
    let eof = {
        let mut lexer = Lexer::new(source);
        while lexer.bump().is_some() {}
        lexer.pos()
    };
    let mut parser = Parser { tokens, at: 0, eof };
    let mut rules = Vec::new();
    let mut seen = HashSet::new();
    while parser.peek().is_some() {
        let rule = parser.rule()?;
        if !seen.insert(rule.name.clone()) {
            return Err(RuleError::Validation {
                pos: rule.span.start,
                message: format!("duplicate rule name `{}`", rule.name),
            });
        }
        rules.push(rule);
    }
    Ok(RuleSet { rules })
}

impl fmt::Display for RuleAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "rule {}: ", self.name)?;
        match &self.body {
            RuleBody::Bound {
                output_index,
                comparator,
                constant,
            } => write!(f, "output[{output_index}] {comparator} {constant}")?,
            RuleBody::Implication {
                antecedent,
                target_class,
                margin,
            } => {
                f.write_str("if ")?;
                for (i, atom) in antecedent.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" and ")?;
                    }
                    write!(
                        f,
                        "feature[{}] {} {}",
                        atom.feature_index, atom.comparator, atom.threshold
                    )?;
                }
                write!(f, " then class {target_class} margin {margin}")?;
            }
        }
        write!(f, " weight {}", self.weight)?;
        match self.penalty {
            PenaltyKind::Relu => f.write_str(" penalty relu"),
            PenaltyKind::Softplus { k } => write!(f, " penalty softplus k={k}"),
        }
    }
}

/// Canonical text: one rule per line with every clause spelled out.
///
/// `f64` is printed in its shortest round-trip decimal form, so parsing the
/// output gives back the same rule set.
pub fn format_rules(rules: &RuleSet) -> String {
    let mut out = String::new();
    for rule in rules {
        writeln!(out, "{rule}").expect("writing to a String cannot fail");
    }
    out
}
