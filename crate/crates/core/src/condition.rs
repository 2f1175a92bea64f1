//! Guard-expression language used by `dataCondition`, `given`, `makes`,
//! `requires` and `provides`.
//!
//! ```text
//! or        := and ("||" and)*
//! and       := unary ("&&" unary)*
//! unary     := "!" unary | "(" or ")" | "true" | "false" | predicate
//! predicate := ident "(" [ident ("," ident)*] ")" | ident
//! ident     := [A-Za-z_][A-Za-z0-9_]*
//! ```
//!
//! A bare identifier is shorthand for a zero-argument predicate, so `ready`
//! and `ready()` parse to the same node. `true` and `false` are reserved.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum Condition {
    True,
    False,
    Predicate {
        name: String,
        args: Vec<String>,
    },
    Not {
        child: Box<Condition>,
    },
    And {
        left: Box<Condition>,
        right: Box<Condition>,
    },
    Or {
        left: Box<Condition>,
        right: Box<Condition>,
    },
}

impl Condition {
    pub fn pred(name: &str, args: &[&str]) -> Self {
        Condition::Predicate {
            name: name.to_string(),
            args: args.iter().map(|a| a.to_string()).collect(),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(child: Condition) -> Self {
        Condition::Not { child: Box::new(child) }
    }

    pub fn and(left: Condition, right: Condition) -> Self {
        Condition::And {
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn or(left: Condition, right: Condition) -> Self {
        Condition::Or {
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// Distinct predicate signatures, in first-occurrence order.
    pub fn predicates(&self) -> Vec<PredicateSig> {
        let mut out = Vec::new();
        self.collect_predicates(&mut out);
        out
    }

    fn collect_predicates(&self, out: &mut Vec<PredicateSig>) {
        match self {
            Condition::True | Condition::False => {}
            Condition::Predicate { name, args } => {
                let sig = PredicateSig {
                    name: name.clone(),
                    args: args.clone(),
                };
                if !out.contains(&sig) {
                    out.push(sig);
                }
            }
            Condition::Not { child } => child.collect_predicates(out),
            Condition::And { left, right } | Condition::Or { left, right } => {
                left.collect_predicates(out);
                right.collect_predicates(out);
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Condition::Or { .. } => 1,
            Condition::And { .. } => 2,
            _ => 3,
        }
    }
}

/// A predicate applied to concrete argument names, e.g. `greaterThan(a, b)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PredicateSig {
    pub name: String,
    pub args: Vec<String>,
}

impl PredicateSig {
    pub fn new(name: &str, args: &[&str]) -> Self {
        Self {
            name: name.into(),
            args: args.iter().map(|a| a.to_string()).collect(),
        }
    }

    /// Parse signature text such as `p(x, y)` or `p`.
    pub fn parse(text: &str) -> Result<Self, ConditionParseError> {
        match parse_condition(text)? {
            Condition::Predicate { name, args } => Ok(Self { name, args }),
            _ => Err(ConditionParseError {
                position: 0,
                message: format!("`{text}` is not a single predicate"),
            }),
        }
    }
}

impl fmt::Display for PredicateSig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.args.is_empty() {
            f.write_str(&self.name)
        } else {
            write!(f, "{}({})", self.name, self.args.join(", "))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{message} at position {position}")]
pub struct ConditionParseError {
    /// Byte offset into the source text.
    pub position: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Ident(String),
    LParen,
    RParen,
    Comma,
    And,
    Or,
    Not,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Ident(s) => write!(f, "`{s}`"),
            Token::LParen => f.write_str("`(`"),
            Token::RParen => f.write_str("`)`"),
            Token::Comma => f.write_str("`,`"),
            Token::And => f.write_str("`&&`"),
            Token::Or => f.write_str("`||`"),
            Token::Not => f.write_str("`!`"),
        }
    }
}

fn tokenize(text: &str) -> Result<Vec<(usize, Token)>, ConditionParseError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'(' => tokens.push((start, Token::LParen)),
            b')' => tokens.push((start, Token::RParen)),
            b',' => tokens.push((start, Token::Comma)),
            b'!' => tokens.push((start, Token::Not)),
            b'&' | b'|' => {
                if bytes.get(i + 1) != Some(&c) {
                    return Err(ConditionParseError {
                        position: start,
                        message: format!("expected `{0}{0}`", c as char),
                    });
                }
                tokens.push((start, if c == b'&' { Token::And } else { Token::Or }));
                i += 1;
            }
            c if c == b'_' || c.is_ascii_alphabetic() => {
                while i + 1 < bytes.len() && (bytes[i + 1] == b'_' || bytes[i + 1].is_ascii_alphanumeric()) {
                    i += 1;
                }
                tokens.push((start, Token::Ident(text[start..=i].to_string())));
            }
            _ => {
                let ch = text[start..].chars().next().unwrap_or('?');
                return Err(ConditionParseError {
                    position: start,
                    message: format!("illegal character `{ch}`"),
                });
            }
        }
        i += 1;
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |(p, _)| *p)
    }

    fn error(&self, message: impl Into<String>) -> ConditionParseError {
        ConditionParseError {
            position: self.offset(),
            message: message.into(),
        }
    }

    fn unexpected(&self, expected: &str) -> ConditionParseError {
        match self.peek() {
            Some(t) => self.error(format!("expected {expected}, found {t}")),
            None => self.error(format!("expected {expected}, found end of input")),
        }
    }

    fn eat(&mut self, token: &Token) -> bool {
        if self.peek() == Some(token) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn or(&mut self) -> Result<Condition, ConditionParseError> {
        let mut left = self.and()?;
        while self.eat(&Token::Or) {
            let right = self.and()?;
            left = Condition::or(left, right);
        }
        Ok(left)
    }

    fn and(&mut self) -> Result<Condition, ConditionParseError> {
        let mut left = self.unary()?;
        while self.eat(&Token::And) {
            let right = self.unary()?;
            left = Condition::and(left, right);
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<Condition, ConditionParseError> {
        match self.peek().cloned() {
            Some(Token::Not) => {
                self.pos += 1;
                Ok(Condition::not(self.unary()?))
            }
            Some(Token::LParen) => {
                self.pos += 1;
                let inner = self.or()?;
                if !self.eat(&Token::RParen) {
                    return Err(self.unexpected("`)`"));
                }
                Ok(inner)
            }
            Some(Token::Ident(name)) => {
                self.pos += 1;
                match name.as_str() {
                    "true" | "false" if self.peek() == Some(&Token::LParen) => {
                        Err(self.error(format!("`{name}` is reserved and cannot be a predicate")))
                    }
                    "true" => Ok(Condition::True),
                    "false" => Ok(Condition::False),
                    _ => {
                        let mut args = Vec::new();
                        if self.eat(&Token::LParen) && !self.eat(&Token::RParen) {
                            loop {
                                match self.peek().cloned() {
                                    Some(Token::Ident(arg)) => {
                                        self.pos += 1;
                                        args.push(arg);
                                    }
                                    _ => return Err(self.unexpected("an argument name")),
                                }
                                if self.eat(&Token::RParen) {
                                    break;
                                }
                                if !self.eat(&Token::Comma) {
                                    return Err(self.unexpected("`,` or `)`"));
                                }
                            }
                        }
                        Ok(Condition::Predicate { name, args })
                    }
                }
            }
            _ => Err(self.unexpected("a condition")),
        }
    }
}

/// Parse guard text into a [`Condition`].
pub fn parse_condition(text: &str) -> Result<Condition, ConditionParseError> {
    let tokens = tokenize(text)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        end: text.len(),
    };
    let cond = parser.or()?;
    if parser.pos != parser.tokens.len() {
        return Err(parser.unexpected("`&&`, `||` or end of input"));
    }
    Ok(cond)
}

fn write_with_min(cond: &Condition, min: u8, out: &mut String) {
    let wrap = cond.precedence() < min;
    if wrap {
        out.push('(');
    }
    match cond {
        Condition::True => out.push_str("true"),
        Condition::False => out.push_str("false"),
        Condition::Predicate { name, args } => {
            out.push_str(name);
            if !args.is_empty() {
                out.push('(');
                out.push_str(&args.join(", "));
                out.push(')');
            }
        }
        Condition::Not { child } => {
            out.push('!');
            write_with_min(child, 3, out);
        }
        // both operators associate to the left, so a right operand of equal
        // precedence needs parentheses
        Condition::And { left, right } => {
            write_with_min(left, 2, out);
            out.push_str(" && ");
            write_with_min(right, 3, out);
        }
        Condition::Or { left, right } => {
            write_with_min(left, 1, out);
            out.push_str(" || ");
            write_with_min(right, 2, out);
        }
    }
    if wrap {
        out.push(')');
    }
}

/// Canonical text with the fewest parentheses that preserve the tree.
pub fn print_condition(cond: &Condition) -> String {
    let mut out = String::new();
    write_with_min(cond, 0, &mut out);
    out
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_condition(self))
    }
}

/// Truth assignment for predicates.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PredicateEnv {
    pub values: BTreeMap<PredicateSig, bool>,
    /// Strict environments reject predicates they do not define; lenient ones
    /// read them as false.
    pub strict: bool,
}

impl PredicateEnv {
    pub fn strict() -> Self {
        Self {
            values: BTreeMap::new(),
            strict: true,
        }
    }

    pub fn lenient() -> Self {
        Self::default()
    }

    pub fn with(mut self, sig: PredicateSig, value: bool) -> Self {
        self.values.insert(sig, value);
        self
    }

    pub fn set(&mut self, sig: PredicateSig, value: bool) {
        self.values.insert(sig, value);
    }

    pub fn lookup(&self, sig: &PredicateSig) -> Result<bool, EvalError> {
        match self.values.get(sig) {
            Some(v) => Ok(*v),
            None if self.strict => Err(EvalError::UnknownPredicate(sig.to_string())),
            None => Ok(false),
        }
    }
}

/// JSON form: `{"strict": true, "predicates": {"p(x)": true, "q": false}}`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PredicateEnvDoc {
    #[serde(default)]
    pub strict: bool,
    #[serde(default)]
    pub predicates: BTreeMap<String, bool>,
}

impl TryFrom<PredicateEnvDoc> for PredicateEnv {
    type Error = ConditionParseError;

    fn try_from(doc: PredicateEnvDoc) -> Result<Self, Self::Error> {
        let mut env = PredicateEnv {
            values: BTreeMap::new(),
            strict: doc.strict,
        };
        for (key, value) in doc.predicates {
            env.set(PredicateSig::parse(&key)?, value);
        }
        Ok(env)
    }
}

impl From<&PredicateEnv> for PredicateEnvDoc {
    fn from(env: &PredicateEnv) -> Self {
        PredicateEnvDoc {
            strict: env.strict,
            predicates: env.values.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum EvalError {
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
}

/// Evaluate left to right with short-circuiting.
pub fn evaluate(cond: &Condition, env: &PredicateEnv) -> Result<bool, EvalError> {
    match cond {
        Condition::True => Ok(true),
        Condition::False => Ok(false),
        Condition::Predicate { name, args } => env.lookup(&PredicateSig {
            name: name.clone(),
            args: args.clone(),
        }),
        Condition::Not { child } => Ok(!evaluate(child, env)?),
        Condition::And { left, right } => Ok(evaluate(left, env)? && evaluate(right, env)?),
        Condition::Or { left, right } => Ok(evaluate(left, env)? || evaluate(right, env)?),
    }
}

pub const DEFAULT_TRIVIAL_PREFIXES: &[&str] = &["exists", "has", "ispresent", "notnull", "isdefined", "isset"];

/// Which single-predicate guards count as mere existence checks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrivialityRules {
    /// Lowercase name prefixes.
    pub prefixes: Vec<String>,
}

impl Default for TrivialityRules {
    fn default() -> Self {
        Self {
            prefixes: DEFAULT_TRIVIAL_PREFIXES.iter().map(|p| p.to_string()).collect(),
        }
    }
}

impl TrivialityRules {
    pub fn is_trivial(&self, cond: &Condition) -> bool {
        match cond {
            Condition::True | Condition::False => true,
            Condition::Predicate { name, .. } => {
                let lower = name.to_lowercase();
                self.prefixes.iter().any(|p| lower.starts_with(p.as_str()))
            }
            _ => false,
        }
    }
}

/// Literal guards and lone existence-check predicates are trivial.
pub fn is_trivial(cond: &Condition) -> bool {
    TrivialityRules::default().is_trivial(cond)
}
