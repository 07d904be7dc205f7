use super::XPathError;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Or(Box<Expr>, Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Compare(CmpOp, Box<Expr>, Box<Expr>),
    Arith(ArithOp, Box<Expr>, Box<Expr>),
    Negate(Box<Expr>),
    Union(Box<Expr>, Box<Expr>),
    Literal(String),
    Number(f64),
    Function(Function, Vec<Expr>),
    /// A filter expression followed by optional location steps.
    Path { start: PathStart, steps: Vec<Step> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum PathStart {
    Root,
    Context,
    Filter(Box<Expr>, Vec<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
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
    Namespace,
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
            "namespace" => Axis::Namespace,
            "self" => Axis::SelfAxis,
            _ => return None,
        })
    }

    pub fn is_reverse(self) -> bool {
        matches!(
            self,
            Axis::Parent | Axis::Ancestor | Axis::AncestorOrSelf | Axis::PrecedingSibling | Axis::Preceding
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeTest {
    /// `*` or `prefix:*`
    Any,
    Name(String),
    Text,
    Comment,
    Node,
    ProcessingInstruction(Option<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub axis: Axis,
    pub test: NodeTest,
    pub predicates: Vec<Expr>,
}

impl Step {
    fn descendant_or_self() -> Step {
        Step { axis: Axis::DescendantOrSelf, test: NodeTest::Node, predicates: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Function {
    Last,
    Position,
    Count,
    Id,
    LocalName,
    NamespaceUri,
    Name,
    String,
    Concat,
    StartsWith,
    Contains,
    SubstringBefore,
    SubstringAfter,
    Substring,
    StringLength,
    NormalizeSpace,
    Translate,
    Boolean,
    Not,
    True,
    False,
    Lang,
    Number,
    Sum,
    Floor,
    Ceiling,
    Round,
}

impl Function {
    fn lookup(name: &str) -> Option<(Function, usize, Option<usize>)> {
        use Function::*;
        // (function, min arity, max arity)
        Some(match name {
            "last" => (Last, 0, Some(0)),
            "position" => (Position, 0, Some(0)),
            "count" => (Count, 1, Some(1)),
            "id" => (Id, 1, Some(1)),
            "local-name" => (LocalName, 0, Some(1)),
            "namespace-uri" => (NamespaceUri, 0, Some(1)),
            "name" => (Name, 0, Some(1)),
            "string" => (String, 0, Some(1)),
            "concat" => (Concat, 2, None),
            "starts-with" => (StartsWith, 2, Some(2)),
            "contains" => (Contains, 2, Some(2)),
            "substring-before" => (SubstringBefore, 2, Some(2)),
            "substring-after" => (SubstringAfter, 2, Some(2)),
            "substring" => (Substring, 2, Some(3)),
            "string-length" => (StringLength, 0, Some(1)),
            "normalize-space" => (NormalizeSpace, 0, Some(1)),
            "translate" => (Translate, 3, Some(3)),
            "boolean" => (Boolean, 1, Some(1)),
            "not" => (Not, 1, Some(1)),
            "true" => (True, 0, Some(0)),
            "false" => (False, 0, Some(0)),
            "lang" => (Lang, 1, Some(1)),
            "number" => (Number, 0, Some(1)),
            "sum" => (Sum, 1, Some(1)),
            "floor" => (Floor, 1, Some(1)),
            "ceiling" => (Ceiling, 1, Some(1)),
            "round" => (Round, 1, Some(1)),
            _ => return None,
        })
    }
}

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
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Star,
    Literal(String),
    Number(f64),
    Name(String),
    Variable(String),
}

struct Lexed {
    tok: Tok,
    pos: usize,
}

fn is_name_start(c: char) -> bool {
    c.is_alphabetic() || c == '_'
}

fn is_name_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '-' | '.')
}

fn lex(src: &str) -> Result<Vec<Lexed>, XPathError> {
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |pos: usize, msg: &str| XPathError::Syntax { pos, message: msg.to_string() };
    while i < chars.len() {
        let (pos, c) = chars[i];
        let next = chars.get(i + 1).map(|&(_, c)| c);
        let mut push = |tok: Tok, width: usize, i: &mut usize| {
            out.push(Lexed { tok, pos });
            *i += width;
        };
        match c {
            c if c.is_whitespace() => i += 1,
            '/' if next == Some('/') => push(Tok::DoubleSlash, 2, &mut i),
            '/' => push(Tok::Slash, 1, &mut i),
            '(' => push(Tok::LParen, 1, &mut i),
            ')' => push(Tok::RParen, 1, &mut i),
            '[' => push(Tok::LBracket, 1, &mut i),
            ']' => push(Tok::RBracket, 1, &mut i),
            '@' => push(Tok::At, 1, &mut i),
            ',' => push(Tok::Comma, 1, &mut i),
            '|' => push(Tok::Pipe, 1, &mut i),
            '+' => push(Tok::Plus, 1, &mut i),
            '-' => push(Tok::Minus, 1, &mut i),
            '=' => push(Tok::Eq, 1, &mut i),
            '*' => push(Tok::Star, 1, &mut i),
            '!' if next == Some('=') => push(Tok::Ne, 2, &mut i),
            '<' if next == Some('=') => push(Tok::Le, 2, &mut i),
            '<' => push(Tok::Lt, 1, &mut i),
            '>' if next == Some('=') => push(Tok::Ge, 2, &mut i),
            '>' => push(Tok::Gt, 1, &mut i),
            ':' if next == Some(':') => push(Tok::ColonColon, 2, &mut i),
            '.' if next == Some('.') => push(Tok::DotDot, 2, &mut i),
            '.' if next.is_some_and(|n| n.is_ascii_digit()) || c.is_ascii_digit() => {
                let start = i;
                while i < chars.len() && (chars[i].1.is_ascii_digit() || chars[i].1 == '.') {
                    i += 1;
                }
                let text: String = chars[start..i].iter().map(|&(_, c)| c).collect();
                let value = text.parse::<f64>().map_err(|_| err(pos, "malformed number"))?;
                out.push(Lexed { tok: Tok::Number(value), pos });
            }
            '.' => push(Tok::Dot, 1, &mut i),
            c if c.is_ascii_digit() => {
                let start = i;
                while i < chars.len() && (chars[i].1.is_ascii_digit() || chars[i].1 == '.') {
                    i += 1;
                }
                let text: String = chars[start..i].iter().map(|&(_, c)| c).collect();
                let value = text.parse::<f64>().map_err(|_| err(pos, "malformed number"))?;
                out.push(Lexed { tok: Tok::Number(value), pos });
            }
            '"' | '\'' => {
                let quote = c;
                let start = i + 1;
                let mut j = start;
                while j < chars.len() && chars[j].1 != quote {
                    j += 1;
                }
                if j >= chars.len() {
                    return Err(err(pos, "unterminated string literal"));
                }
                let text: String = chars[start..j].iter().map(|&(_, c)| c).collect();
                out.push(Lexed { tok: Tok::Literal(text), pos });
                i = j + 1;
            }
            '$' => {
                let start = i + 1;
                let mut j = start;
                while j < chars.len() && is_name_char(chars[j].1) {
                    j += 1;
                }
                let text: String = chars[start..j].iter().map(|&(_, c)| c).collect();
                out.push(Lexed { tok: Tok::Variable(text), pos });
                i = j;
            }
            c if is_name_start(c) => {
                let start = i;
                while i < chars.len() && is_name_char(chars[i].1) {
                    i += 1;
                }
                // QName prefix (`svg:rect`) or `prefix:*`; `::` is an axis separator.
                if i + 1 < chars.len() && chars[i].1 == ':' && chars[i + 1].1 != ':' {
                    if chars[i + 1].1 == '*' {
                        i += 2;
                    } else if is_name_start(chars[i + 1].1) {
                        i += 1;
                        while i < chars.len() && is_name_char(chars[i].1) {
                            i += 1;
                        }
                    }
                }
                let text: String = chars[start..i].iter().map(|&(_, c)| c).collect();
                out.push(Lexed { tok: Tok::Name(text), pos });
            }
            other => return Err(err(pos, &format!("unexpected character {other:?}"))),
        }
    }
    Ok(out)
}

/// Resolves the operator-name ambiguity: `*`, `and`, `or`, `div`, `mod` are
/// operators only when the preceding token can end an operand.
fn preceding_ends_operand(prev: Option<&Tok>, prev_is_op: bool) -> bool {
    match prev {
        None => false,
        Some(Tok::Star) => !prev_is_op,
        Some(Tok::Name(n)) if is_operator_name(n) => !prev_is_op,
        Some(t) => !matches!(
            t,
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
                | Tok::Ne
                | Tok::Lt
                | Tok::Le
                | Tok::Gt
                | Tok::Ge
        ),
    }
}

fn is_operator_name(n: &str) -> bool {
    matches!(n, "and" | "or" | "div" | "mod")
}

pub struct Parser {
    toks: Vec<Lexed>,
    /// Whether the token at each index is an operator (resolved once up front).
    operator: Vec<bool>,
    pos: usize,
    src_len: usize,
}

impl Parser {
    pub fn parse(src: &str) -> Result<Expr, XPathError> {
        let toks = lex(src)?;
        if toks.is_empty() {
            return Err(XPathError::Syntax { pos: 0, message: "empty expression".into() });
        }
        let mut operator = Vec::with_capacity(toks.len());
        for i in 0..toks.len() {
            let prev = if i == 0 { None } else { Some(&toks[i - 1].tok) };
            let prev_is_op = i > 0 && operator[i - 1];
            let ends = preceding_ends_operand(prev, prev_is_op);
            let is_op = match &toks[i].tok {
                Tok::Star => ends,
                Tok::Name(n) if is_operator_name(n) => ends,
                _ => false,
            };
            operator.push(is_op);
        }
        let mut p = Parser { toks, operator, pos: 0, src_len: src.len() };
        let expr = p.or_expr()?;
        if p.pos < p.toks.len() {
            return Err(p.error("unexpected trailing tokens"));
        }
        Ok(expr)
    }

    fn error(&self, message: &str) -> XPathError {
        let pos = self.toks.get(self.pos).map(|t| t.pos).unwrap_or(self.src_len);
        XPathError::Syntax { pos, message: message.to_string() }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn peek_at(&self, offset: usize) -> Option<&Tok> {
        self.toks.get(self.pos + offset).map(|t| &t.tok)
    }

    fn is_op_name(&self, name: &str) -> bool {
        matches!(self.peek(), Some(Tok::Name(n)) if n == name) && self.operator[self.pos]
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: &Tok, what: &str) -> Result<(), XPathError> {
        if self.eat(tok) {
            Ok(())
        } else {
            Err(self.error(&format!("expected {what}")))
        }
    }

    fn or_expr(&mut self) -> Result<Expr, XPathError> {
        let mut lhs = self.and_expr()?;
        while self.is_op_name("or") {
            self.pos += 1;
            let rhs = self.and_expr()?;
            lhs = Expr::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, XPathError> {
        let mut lhs = self.equality_expr()?;
        while self.is_op_name("and") {
            self.pos += 1;
            let rhs = self.equality_expr()?;
            lhs = Expr::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn equality_expr(&mut self) -> Result<Expr, XPathError> {
        let mut lhs = self.relational_expr()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Eq) => CmpOp::Eq,
                Some(Tok::Ne) => CmpOp::Ne,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.relational_expr()?;
            lhs = Expr::Compare(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn relational_expr(&mut self) -> Result<Expr, XPathError> {
        let mut lhs = self.additive_expr()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Lt) => CmpOp::Lt,
                Some(Tok::Le) => CmpOp::Le,
                Some(Tok::Gt) => CmpOp::Gt,
                Some(Tok::Ge) => CmpOp::Ge,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.additive_expr()?;
            lhs = Expr::Compare(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn additive_expr(&mut self) -> Result<Expr, XPathError> {
        let mut lhs = self.multiplicative_expr()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => ArithOp::Add,
                Some(Tok::Minus) => ArithOp::Sub,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.multiplicative_expr()?;
            lhs = Expr::Arith(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn multiplicative_expr(&mut self) -> Result<Expr, XPathError> {
        let mut lhs = self.unary_expr()?;
        loop {
            let op = if self.peek() == Some(&Tok::Star) && self.operator[self.pos] {
                ArithOp::Mul
            } else if self.is_op_name("div") {
                ArithOp::Div
            } else if self.is_op_name("mod") {
                ArithOp::Mod
            } else {
                break;
            };
            self.pos += 1;
            let rhs = self.unary_expr()?;
            lhs = Expr::Arith(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary_expr(&mut self) -> Result<Expr, XPathError> {
        if self.eat(&Tok::Minus) {
            let inner = self.unary_expr()?;
            return Ok(Expr::Negate(Box::new(inner)));
        }
        self.union_expr()
    }

    fn union_expr(&mut self) -> Result<Expr, XPathError> {
        let mut lhs = self.path_expr()?;
        while self.eat(&Tok::Pipe) {
            let rhs = self.path_expr()?;
            lhs = Expr::Union(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn starts_primary(&self) -> bool {
        match self.peek() {
            Some(Tok::LParen | Tok::Literal(_) | Tok::Number(_) | Tok::Variable(_)) => true,
            Some(Tok::Name(n)) => {
                self.peek_at(1) == Some(&Tok::LParen)
                    && !matches!(n.as_str(), "node" | "text" | "comment" | "processing-instruction")
            }
            _ => false,
        }
    }

    fn path_expr(&mut self) -> Result<Expr, XPathError> {
        if self.starts_primary() {
            let primary = self.primary_expr()?;
            let mut predicates = Vec::new();
            while self.peek() == Some(&Tok::LBracket) {
                predicates.push(self.predicate()?);
            }
            let mut steps = Vec::new();
            self.continue_path(&mut steps)?;
            if predicates.is_empty() && steps.is_empty() {
                return Ok(primary);
            }
            return Ok(Expr::Path { start: PathStart::Filter(Box::new(primary), predicates), steps });
        }
        let mut steps = Vec::new();
        let start = match self.peek() {
            Some(Tok::Slash) => {
                self.pos += 1;
                if self.starts_step() {
                    self.relative_path(&mut steps)?;
                }
                PathStart::Root
            }
            Some(Tok::DoubleSlash) => {
                self.pos += 1;
                steps.push(Step::descendant_or_self());
                self.relative_path(&mut steps)?;
                PathStart::Root
            }
            _ => {
                self.relative_path(&mut steps)?;
                PathStart::Context
            }
        };
        Ok(Expr::Path { start, steps })
    }

    fn continue_path(&mut self, steps: &mut Vec<Step>) -> Result<(), XPathError> {
        loop {
            match self.peek() {
                Some(Tok::Slash) => {
                    self.pos += 1;
                    steps.push(self.step()?);
                }
                Some(Tok::DoubleSlash) => {
                    self.pos += 1;
                    steps.push(Step::descendant_or_self());
                    steps.push(self.step()?);
                }
                _ => return Ok(()),
            }
        }
    }

    fn relative_path(&mut self, steps: &mut Vec<Step>) -> Result<(), XPathError> {
        steps.push(self.step()?);
        self.continue_path(steps)
    }

    fn starts_step(&self) -> bool {
        match self.peek() {
            Some(Tok::Dot | Tok::DotDot | Tok::At) => true,
            Some(Tok::Star) => !self.operator[self.pos],
            Some(Tok::Name(_)) => !self.operator[self.pos],
            _ => false,
        }
    }

    fn step(&mut self) -> Result<Step, XPathError> {
        if self.eat(&Tok::Dot) {
            return Ok(Step { axis: Axis::SelfAxis, test: NodeTest::Node, predicates: Vec::new() });
        }
        if self.eat(&Tok::DotDot) {
            return Ok(Step { axis: Axis::Parent, test: NodeTest::Node, predicates: Vec::new() });
        }
        let axis = if self.eat(&Tok::At) {
            Axis::Attribute
        } else if let (Some(Tok::Name(n)), Some(Tok::ColonColon)) = (self.peek(), self.peek_at(1)) {
            let axis = Axis::from_name(n).ok_or_else(|| self.error(&format!("unknown axis {n}")))?;
            self.pos += 2;
            axis
        } else {
            Axis::Child
        };
        let test = self.node_test()?;
        let mut predicates = Vec::new();
        while self.peek() == Some(&Tok::LBracket) {
            predicates.push(self.predicate()?);
        }
        Ok(Step { axis, test, predicates })
    }

    fn node_test(&mut self) -> Result<NodeTest, XPathError> {
        match self.peek().cloned() {
            Some(Tok::Star) => {
                self.pos += 1;
                Ok(NodeTest::Any)
            }
            Some(Tok::Name(n)) => {
                self.pos += 1;
                if self.peek() == Some(&Tok::LParen) {
                    self.pos += 1;
                    let test = match n.as_str() {
                        "node" => NodeTest::Node,
                        "text" => NodeTest::Text,
                        "comment" => NodeTest::Comment,
                        "processing-instruction" => {
                            let target = match self.peek().cloned() {
                                Some(Tok::Literal(l)) => {
                                    self.pos += 1;
                                    Some(l)
                                }
                                _ => None,
                            };
                            NodeTest::ProcessingInstruction(target)
                        }
                        _ => return Err(self.error(&format!("{n}() is not a node test"))),
                    };
                    self.expect(&Tok::RParen, "')'")?;
                    return Ok(test);
                }
                if n.ends_with(":*") {
                    return Ok(NodeTest::Any);
                }
                Ok(NodeTest::Name(n))
            }
            _ => Err(self.error("expected a node test")),
        }
    }

    fn predicate(&mut self) -> Result<Expr, XPathError> {
        self.expect(&Tok::LBracket, "'['")?;
        let e = self.or_expr()?;
        self.expect(&Tok::RBracket, "']'")?;
        Ok(e)
    }

    fn primary_expr(&mut self) -> Result<Expr, XPathError> {
        match self.peek().cloned() {
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.or_expr()?;
                self.expect(&Tok::RParen, "')'")?;
                Ok(e)
            }
            Some(Tok::Literal(s)) => {
                self.pos += 1;
                Ok(Expr::Literal(s))
            }
            Some(Tok::Number(n)) => {
                self.pos += 1;
                Ok(Expr::Number(n))
            }
            Some(Tok::Variable(v)) => Err(self.error(&format!("unbound variable ${v}"))),
            Some(Tok::Name(name)) => {
                let (func, min, max) = Function::lookup(&name)
                    .ok_or_else(|| self.error(&format!("unknown function {name}()")))?;
                self.pos += 2;
                let mut args = Vec::new();
                if !self.eat(&Tok::RParen) {
                    loop {
                        args.push(self.or_expr()?);
                        if self.eat(&Tok::Comma) {
                            continue;
                        }
                        self.expect(&Tok::RParen, "')' or ','")?;
                        break;
                    }
                }
                if args.len() < min || max.is_some_and(|m| args.len() > m) {
                    return Err(self.error(&format!("wrong number of arguments to {name}()")));
                }
                Ok(Expr::Function(func, args))
            }
            _ => Err(self.error("expected an expression")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn star_is_operator_after_operand() {
        let e = Parser::parse("2 * 3").unwrap();
        assert!(matches!(e, Expr::Arith(ArithOp::Mul, _, _)));
        let e = Parser::parse("//*").unwrap();
        assert!(matches!(e, Expr::Path { .. }));
    }

    #[test]
    fn name_can_be_element_called_div() {
        let e = Parser::parse("//div[@class='a' and div]").unwrap();
        let Expr::Path { steps, .. } = e else { panic!() };
        assert_eq!(steps[1].test, NodeTest::Name("div".into()));
        assert!(matches!(steps[1].predicates[0], Expr::And(_, _)));
    }

    #[test]
    fn rejects_malformed() {
        for bad in ["//li[", "", "//", "foo(", "//a[@href=]", "'x", "//li]", "bogus()", "nope::x"] {
            assert!(Parser::parse(bad).is_err(), "{bad} should not parse");
        }
    }

    #[test]
    fn filter_expression_with_steps() {
        let e = Parser::parse("(//ul/li)[2]/a/@href").unwrap();
        let Expr::Path { start: PathStart::Filter(_, preds), steps } = e else { panic!() };
        assert_eq!(preds.len(), 1);
        assert_eq!(steps.len(), 2);
    }
}
