//! Reader and writer for the BIF 0.3 interchange format (discrete variables).
//!
//! `table` entries list the child state fastest within each parent row, with
//! rows ordered last-parent-fastest; labeled `(s1, s2) p...;` entries may
//! appear in any order.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::{validate_with_tolerance, BayesianNetwork, Cpt, Variable, PARSE_ROW_TOLERANCE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Quoted,
    Punct(char),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn is_punct(c: char) -> bool {
    matches!(c, '{' | '}' | '[' | ']' | '(' | ')' | '|' | ',' | ';')
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let advance = |i: &mut usize, line: &mut usize, col: &mut usize, c: char| {
        *i += 1;
        if c == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, c);
        } else if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                let d = chars[i];
                advance(&mut i, &mut line, &mut col, d);
            }
        } else if c == '/' && chars.get(i + 1) == Some(&'*') {
            let (l0, c0) = (line, col);
            advance(&mut i, &mut line, &mut col, '/');
            advance(&mut i, &mut line, &mut col, '*');
            loop {
                if i + 1 >= chars.len() {
                    return Err(syntax(l0, c0, "unterminated block comment"));
                }
                if chars[i] == '*' && chars[i + 1] == '/' {
                    advance(&mut i, &mut line, &mut col, '*');
                    advance(&mut i, &mut line, &mut col, '/');
                    break;
                }
                let d = chars[i];
                advance(&mut i, &mut line, &mut col, d);
            }
        } else if c == '"' {
            let (l0, c0) = (line, col);
            advance(&mut i, &mut line, &mut col, c);
            while i < chars.len() && chars[i] != '"' {
                let d = chars[i];
                advance(&mut i, &mut line, &mut col, d);
            }
            if i >= chars.len() {
                return Err(syntax(l0, c0, "unterminated string"));
            }
            advance(&mut i, &mut line, &mut col, '"');
            tokens.push(Token { tok: Tok::Quoted, line: l0, column: c0 });
        } else if is_punct(c) {
            tokens.push(Token { tok: Tok::Punct(c), line, column: col });
            advance(&mut i, &mut line, &mut col, c);
        } else {
            let (l0, c0) = (line, col);
            let mut word = String::new();
            while i < chars.len() {
                let d = chars[i];
                if d.is_whitespace() || is_punct(d) || d == '"' {
                    break;
                }
                if d == '/' && matches!(chars.get(i + 1), Some('/') | Some('*')) {
                    break;
                }
                word.push(d);
                advance(&mut i, &mut line, &mut col, d);
            }
            tokens.push(Token { tok: Tok::Word(word), line: l0, column: c0 });
        }
    }
    Ok(tokens)
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Syntax { line, column, message: message.into() }
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    end: (usize, usize),
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn here(&self) -> (usize, usize) {
        self.peek().map(|t| (t.line, t.column)).unwrap_or(self.end)
    }

    fn error(&self, message: impl Into<String>) -> Error {
        let (l, c) = self.here();
        syntax(l, c, message)
    }

    fn next(&mut self) -> Result<Token> {
        let t = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| syntax(self.end.0, self.end.1, "unexpected end of input"))?;
        self.pos += 1;
        Ok(t)
    }

    fn word(&mut self) -> Result<String> {
        let here = self.here();
        match self.next()?.tok {
            Tok::Word(w) => Ok(w),
            other => Err(syntax(here.0, here.1, format!("expected identifier, found {other:?}"))),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<()> {
        let here = self.here();
        let w = self.word()?;
        if w == kw {
            Ok(())
        } else {
            Err(syntax(here.0, here.1, format!("expected `{kw}`, found `{w}`")))
        }
    }

    fn punct(&mut self, c: char) -> Result<()> {
        let here = self.here();
        match self.next()?.tok {
            Tok::Punct(p) if p == c => Ok(()),
            other => Err(syntax(here.0, here.1, format!("expected `{c}`, found {other:?}"))),
        }
    }

    fn at_punct(&self, c: char) -> bool {
        matches!(self.peek(), Some(Token { tok: Tok::Punct(p), .. }) if *p == c)
    }

    fn at_word(&self, w: &str) -> bool {
        matches!(self.peek(), Some(Token { tok: Tok::Word(x), .. }) if x == w)
    }

    /// Skips tokens up to and including the next `;`.
    fn skip_statement(&mut self) -> Result<()> {
        while !self.at_punct(';') {
            self.next()?;
        }
        self.punct(';')
    }

    /// Skips a balanced `{ ... }` block; the opening brace must be next.
    fn skip_block(&mut self) -> Result<()> {
        self.punct('{')?;
        let mut depth = 1;
        while depth > 0 {
            match self.next()?.tok {
                Tok::Punct('{') => depth += 1,
                Tok::Punct('}') => depth -= 1,
                _ => {}
            }
        }
        Ok(())
    }

    fn number(&mut self) -> Result<f64> {
        let here = self.here();
        let w = self.word()?;
        w.parse::<f64>()
            .map_err(|_| syntax(here.0, here.1, format!("expected number, found `{w}`")))
    }

    /// Numbers separated by commas or whitespace, terminated by `;`.
    fn numbers(&mut self) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        loop {
            if self.at_punct(';') {
                self.punct(';')?;
                return Ok(out);
            }
            if self.at_punct(',') {
                self.punct(',')?;
                continue;
            }
            out.push(self.number()?);
        }
    }
}

struct ProbBlock {
    child: String,
    parents: Vec<String>,
    table: Option<Vec<f64>>,
    default: Option<Vec<f64>>,
    rows: Vec<(Vec<String>, Vec<f64>, (usize, usize))>,
    at: (usize, usize),
}

pub fn parse_bif(text: &str) -> Result<BayesianNetwork> {
    let tokens = tokenize(text)?;
    let end = tokens.last().map(|t| (t.line, t.column + 1)).unwrap_or((1, 1));
    let mut p = Parser { tokens, pos: 0, end };
    let mut name = String::from("unknown");
    let mut variables: Vec<Variable> = Vec::new();
    let mut blocks: Vec<ProbBlock> = Vec::new();

    while p.peek().is_some() {
        let here = p.here();
        let kw = p.word()?;
        match kw.as_str() {
            "network" => {
                let mut parts = Vec::new();
                while !p.at_punct('{') {
                    match p.next()?.tok {
                        Tok::Word(w) => parts.push(w),
                        Tok::Quoted => {}
                        Tok::Punct(c) => return Err(syntax(here.0, here.1, format!("unexpected `{c}`"))),
                    }
                }
                if !parts.is_empty() {
                    name = parts.join(" ");
                }
                p.skip_block()?;
            }
            "variable" => variables.push(parse_variable(&mut p)?),
            "probability" => blocks.push(parse_probability(&mut p, here)?),
            other => return Err(syntax(here.0, here.1, format!("unexpected `{other}`"))),
        }
    }
    build_network(name, variables, blocks)
}

fn parse_variable(p: &mut Parser) -> Result<Variable> {
    let name = p.word()?;
    p.punct('{')?;
    let mut states = None;
    while !p.at_punct('}') {
        if p.at_word("type") {
            p.keyword("type")?;
            let kind = p.word()?;
            if kind != "discrete" {
                return Err(Error::UnsupportedVariable(name));
            }
            p.punct('[')?;
            let here = p.here();
            let n: usize = p
                .word()?
                .parse()
                .map_err(|_| syntax(here.0, here.1, "expected state count"))?;
            p.punct(']')?;
            p.punct('{')?;
            let mut labels = Vec::new();
            while !p.at_punct('}') {
                if p.at_punct(',') {
                    p.punct(',')?;
                    continue;
                }
                labels.push(p.word()?);
            }
            p.punct('}')?;
            p.punct(';')?;
            if labels.len() != n {
                return Err(syntax(
                    here.0,
                    here.1,
                    format!("variable `{name}` declares {n} states but lists {}", labels.len()),
                ));
            }
            states = Some(labels);
        } else if p.at_word("property") {
            p.skip_statement()?;
        } else {
            return Err(p.error("expected `type` or `property`"));
        }
    }
    p.punct('}')?;
    let states = states.ok_or_else(|| p.error(format!("variable `{name}` has no type")))?;
    Ok(Variable { name, states })
}

fn parse_probability(p: &mut Parser, at: (usize, usize)) -> Result<ProbBlock> {
    p.punct('(')?;
    let child = p.word()?;
    let mut parents = Vec::new();
    if p.at_punct('|') {
        p.punct('|')?;
        while !p.at_punct(')') {
            if p.at_punct(',') {
                p.punct(',')?;
                continue;
            }
            parents.push(p.word()?);
        }
    }
    p.punct(')')?;
    p.punct('{')?;
    let mut block = ProbBlock { child, parents, table: None, default: None, rows: Vec::new(), at };
    while !p.at_punct('}') {
        if p.at_word("table") {
            p.keyword("table")?;
            block.table = Some(p.numbers()?);
        } else if p.at_word("default") {
            p.keyword("default")?;
            block.default = Some(p.numbers()?);
        } else if p.at_word("property") {
            p.skip_statement()?;
        } else if p.at_punct('(') {
            let here = p.here();
            p.punct('(')?;
            let mut labels = Vec::new();
            while !p.at_punct(')') {
                if p.at_punct(',') {
                    p.punct(',')?;
                    continue;
                }
                labels.push(p.word()?);
            }
            p.punct(')')?;
            let values = p.numbers()?;
            block.rows.push((labels, values, here));
        } else {
            return Err(p.error("expected `table`, `default`, `property` or `(`"));
        }
    }
    p.punct('}')?;
    Ok(block)
}

fn build_network(
    name: String,
    variables: Vec<Variable>,
    blocks: Vec<ProbBlock>,
) -> Result<BayesianNetwork> {
    let index: HashMap<&str, usize> = variables
        .iter()
        .enumerate()
        .map(|(i, v)| (v.name.as_str(), i))
        .collect();
    if index.len() != variables.len() {
        return Err(Error::InvalidNetwork("duplicate variable names".into()));
    }
    let cards: Vec<usize> = variables.iter().map(Variable::cardinality).collect();
    let mut cpts: Vec<Option<Cpt>> = vec![None; variables.len()];

    for block in blocks {
        let (line, column) = block.at;
        let lookup = |n: &str| {
            index
                .get(n)
                .copied()
                .ok_or_else(|| syntax(line, column, format!("unknown variable `{n}`")))
        };
        let child = lookup(&block.child)?;
        let parents = block.parents.iter().map(|n| lookup(n)).collect::<Result<Vec<_>>>()?;
        if cpts[child].is_some() {
            return Err(syntax(line, column, format!("second probability block for `{}`", block.child)));
        }
        let k = cards[child];
        let rows: usize = parents.iter().map(|&q| cards[q]).product();
        let mut table = vec![f64::NAN; rows * k];
        let check_len = |values: &[f64], want: usize| {
            if values.len() == want {
                Ok(())
            } else {
                Err(syntax(
                    line,
                    column,
                    format!("`{}` expects {want} values, found {}", block.child, values.len()),
                ))
            }
        };
        if let Some(d) = &block.default {
            check_len(d, k)?;
            for row in table.chunks_mut(k) {
                row.copy_from_slice(d);
            }
        }
        if let Some(t) = &block.table {
            check_len(t, rows * k)?;
            table.copy_from_slice(t);
        }
        for (labels, values, (l, c)) in &block.rows {
            if labels.len() != parents.len() {
                return Err(syntax(*l, *c, "parent configuration has the wrong arity"));
            }
            check_len(values, k)?;
            let mut row = 0;
            for (label, &q) in labels.iter().zip(&parents) {
                let s = variables[q]
                    .states
                    .iter()
                    .position(|x| x == label)
                    .ok_or_else(|| syntax(*l, *c, format!("unknown state `{label}` of `{}`", variables[q].name)))?;
                row = row * cards[q] + s;
            }
            table[row * k..(row + 1) * k].copy_from_slice(values);
        }
        if let Some(r) = table.chunks(k).position(|row| row.iter().any(|x| x.is_nan())) {
            return Err(syntax(line, column, format!("`{}` leaves row {r} unspecified", block.child)));
        }
        for (r, row) in table.chunks(k).enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > PARSE_ROW_TOLERANCE || row.iter().any(|x| *x < 0.0) {
                return Err(Error::RowSum {
                    variable: block.child.clone(),
                    row: r,
                    sum,
                    tolerance: PARSE_ROW_TOLERANCE,
                });
            }
        }
        cpts[child] = Some(Cpt { child, parents, table });
    }

    let cpts = cpts
        .into_iter()
        .enumerate()
        .map(|(i, c)| c.ok_or_else(|| Error::MissingCpt(variables[i].name.clone())))
        .collect::<Result<Vec<_>>>()?;
    let mut net = BayesianNetwork::from_parts_unchecked(name, variables, cpts);
    net.renormalize();
    let report = validate_with_tolerance(&net, PARSE_ROW_TOLERANCE);
    if !report.is_valid() {
        return Err(Error::InvalidNetwork(report.summary()));
    }
    Ok(net)
}

/// Serializes with labeled rows; values are printed with round-trip precision.
pub fn write_bif(network: &BayesianNetwork) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "network {} {{\n}}", network.name.replace(' ', "_"));
    for v in &network.variables {
        let _ = writeln!(
            out,
            "variable {} {{\n  type discrete [ {} ] {{ {} }};\n}}",
            v.name,
            v.states.len(),
            v.states.join(", ")
        );
    }
    let cards = network.cardinalities();
    for cpt in &network.cpts {
        let child = &network.variables[cpt.child];
        let k = cards[cpt.child];
        let fmt_row = |row: &[f64]| row.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        if cpt.parents.is_empty() {
            let _ = writeln!(
                out,
                "probability ( {} ) {{\n  table {};\n}}",
                child.name,
                fmt_row(&cpt.table)
            );
            continue;
        }
        let names: Vec<&str> = cpt.parents.iter().map(|&q| network.variables[q].name.as_str()).collect();
        let _ = writeln!(out, "probability ( {} | {} ) {{", child.name, names.join(", "));
        let mut states = vec![0usize; cpt.parents.len()];
        for row in cpt.table.chunks(k) {
            let labels: Vec<&str> = cpt
                .parents
                .iter()
                .zip(&states)
                .map(|(&q, &s)| network.variables[q].states[s].as_str())
                .collect();
            let _ = writeln!(out, "  ({}) {};", labels.join(", "), fmt_row(row));
            for i in (0..states.len()).rev() {
                states[i] += 1;
                if states[i] < cards[cpt.parents[i]] {
                    break;
                }
                states[i] = 0;
            }
        }
        out.push_str("}\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SINGLE: &str = "network one {\n}\nvariable X {\n  type discrete [ 2 ] { a, b };\n}\nprobability ( X ) {\n  table 0.5, 0.5;\n}\n";

    #[test]
    fn single_variable() {
        let net = parse_bif(SINGLE).unwrap();
        assert_eq!(net.len(), 1);
        assert_eq!(net.edge_count(), 0);
        assert_eq!(net.cpt(0).table, vec![0.5, 0.5]);
        assert_eq!(net.name, "one");
    }

    #[test]
    fn comments_properties_and_default() {
        let text = r#"
            // header comment
            network "demo" { property version 1 ; }
            variable A { type discrete [ 2 ] { t f }; property position = (1, 2) ; }
            /* block
               comment */
            variable B { type discrete [ 3 ] { x, y, z }; }
            probability ( A ) { table 0.25 0.75 ; }
            probability ( B | A ) {
              default 0.2, 0.3, 0.5;
              (f) 1.0, 0.0, 0.0;
            }
        "#;
        let net = parse_bif(text).unwrap();
        assert_eq!(net.variables[0].states, vec!["t", "f"]);
        assert_eq!(net.cpt(1).table, vec![0.2, 0.3, 0.5, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn labeled_rows_last_parent_fastest() {
        let text = "variable A { type discrete [ 2 ] { a0, a1 }; }
            variable B { type discrete [ 2 ] { b0, b1 }; }
            variable C { type discrete [ 2 ] { c0, c1 }; }
            probability ( A ) { table 0.5, 0.5; }
            probability ( B ) { table 0.5, 0.5; }
            probability ( C | A, B ) {
              (a1, b0) 0.3, 0.7;
              (a0, b0) 0.1, 0.9;
              (a1, b1) 0.4, 0.6;
              (a0, b1) 0.2, 0.8;
            }";
        let net = parse_bif(text).unwrap();
        assert_eq!(net.cpt(2).table, vec![0.1, 0.9, 0.2, 0.8, 0.3, 0.7, 0.4, 0.6]);
    }

    #[test]
    fn syntax_error_position() {
        let text = "variable A {\n  type discrete [ 2 ] { a, b }\n}";
        match parse_bif(text) {
            Err(Error::Syntax { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn continuous_rejected() {
        let text = "variable A { type continuous; }";
        assert!(matches!(parse_bif(text), Err(Error::UnsupportedVariable(_))));
    }

    #[test]
    fn missing_cpt_rejected() {
        let text = "variable A { type discrete [ 2 ] { a, b }; }";
        assert!(matches!(parse_bif(text), Err(Error::MissingCpt(_))));
    }

    #[test]
    fn row_sum_rejected() {
        let text = "variable A { type discrete [ 2 ] { a, b }; } probability ( A ) { table 0.6, 0.6; }";
        assert!(matches!(parse_bif(text), Err(Error::RowSum { .. })));
    }

    #[test]
    fn rounded_rows_are_renormalized() {
        let text = "variable A { type discrete [ 2 ] { a, b }; } probability ( A ) { table 0.5000004, 0.5; }";
        let net = parse_bif(text).unwrap();
        let s: f64 = net.cpt(0).table.iter().sum();
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cycle_rejected() {
        let text = "variable A { type discrete [ 2 ] { a, b }; }
            variable B { type discrete [ 2 ] { a, b }; }
            probability ( A | B ) { table 0.5, 0.5, 0.5, 0.5; }
            probability ( B | A ) { table 0.5, 0.5, 0.5, 0.5; }";
        assert!(matches!(parse_bif(text), Err(Error::InvalidNetwork(_))));
    }
}
