//! UAI `MARKOV` model files and `.evid` evidence files.

use std::fmt::Write as _;

use super::{FactorGraph, FactorKind, FactorNode, GraphError, VariableNode};

struct Tokens<'a> {
    toks: Vec<(usize, &'a str)>,
    pos: usize,
    last_line: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let toks = text
            .lines()
            .enumerate()
            .flat_map(|(i, l)| l.split_whitespace().map(move |t| (i + 1, t)))
            .collect::<Vec<_>>();
        let last_line = toks.last().map_or(1, |t| t.0);
        Self {
            toks,
            pos: 0,
            last_line,
        }
    }

    fn next(&mut self, what: &str) -> Result<(usize, &'a str), GraphError> {
        let t = self
            .toks
            .get(self.pos)
            .copied()
            .ok_or_else(|| GraphError::Syntax {
                line: self.last_line,
                msg: format!("unexpected end of input, expected {what}"),
            })?;
        self.pos += 1;
        Ok(t)
    }

    fn usize(&mut self, what: &str) -> Result<usize, GraphError> {
        let (line, t) = self.next(what)?;
        t.parse().map_err(|_| GraphError::Syntax {
            line,
            msg: format!("expected {what}, found {t:?}"),
        })
    }

    fn f64(&mut self, what: &str) -> Result<(usize, f64), GraphError> {
        let (line, t) = self.next(what)?;
        let x: f64 = t.parse().map_err(|_| GraphError::Syntax {
            line,
            msg: format!("expected {what}, found {t:?}"),
        })?;
        if !x.is_finite() || x < 0.0 {
            return Err(GraphError::Syntax {
                line,
                msg: format!("table entry {t} is not a non-negative number"),
            });
        }
        Ok((line, x))
    }

    fn rest(&self) -> Option<(usize, &'a str)> {
        self.toks.get(self.pos).copied()
    }
}

/// Parses a UAI MARKOV network into a validated graph of TABLE factors.
pub fn parse_uai(text: &str) -> Result<FactorGraph, GraphError> {
    let mut t = Tokens::new(text);
    let (line, head) = t.next("MARKOV header")?;
    if head != "MARKOV" {
        return Err(GraphError::Syntax {
            line,
            msg: format!("expected MARKOV, found {head:?}"),
        });
    }
    let n = t.usize("variable count")?;
    let mut variables = Vec::with_capacity(n);
    for id in 0..n {
        let card = t.usize("cardinality")?;
        if card < 2 {
            return Err(GraphError::Cardinality { var: id, card });
        }
        variables.push(VariableNode::new(id, card));
    }
    let nf = t.usize("factor count")?;
    let mut scopes = Vec::with_capacity(nf);
    for fid in 0..nf {
        let arity = t.usize("factor arity")?;
        let mut scope = Vec::with_capacity(arity);
        for _ in 0..arity {
            let v = t.usize("variable id")?;
            if v >= n {
                return Err(GraphError::DanglingVariable {
                    factor: fid,
                    var: v,
                });
            }
            scope.push(v);
        }
        scopes.push(scope);
    }
    let mut factors = Vec::with_capacity(nf);
    for (fid, scope) in scopes.into_iter().enumerate() {
        let size = t.usize("table size")?;
        let expected: usize = scope.iter().map(|&v| variables[v].cardinality).product();
        if size != expected {
            return Err(GraphError::TableLength {
                factor: fid,
                expected,
                found: size,
            });
        }
        let values = (0..size)
            .map(|_| t.f64("table entry").map(|x| x.1))
            .collect::<Result<Vec<_>, _>>()?;
        factors.push(FactorNode::table(fid, scope, values));
    }
    if let Some((line, tok)) = t.rest() {
        return Err(GraphError::Syntax {
            line,
            msg: format!("trailing token {tok:?}"),
        });
    }
    FactorGraph::new(variables, factors).validated()
}

/// Renders a table-only graph in UAI MARKOV form.
///
/// Numbers use the shortest representation that parses back to the same `f64`.
pub fn serialize_uai(graph: &FactorGraph) -> Result<String, GraphError> {
    if let Some(f) = graph.factors.iter().find(|f| f.kind.is_builtin()) {
        return Err(GraphError::UnexpandedBuiltin { factor: f.id });
    }
    let mut s = String::new();
    let cards: Vec<String> = graph
        .variables
        .iter()
        .map(|v| v.cardinality.to_string())
        .collect();
    let _ = writeln!(
        s,
        "MARKOV\n{}\n{}\n{}",
        graph.variables.len(),
        cards.join(" "),
        graph.factors.len()
    );
    for f in &graph.factors {
        let ids: Vec<String> = f.scope.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{} {}", f.scope.len(), ids.join(" "));
    }
    for f in &graph.factors {
        if let FactorKind::Table(values) = &f.kind {
            let vals: Vec<String> = values.iter().map(|x| format!("{x}")).collect();
            let _ = writeln!(s, "{}\n{}", values.len(), vals.join(" "));
        }
    }
    Ok(s)
}

/// Parses a `.evid` file: a count followed by that many `var value` pairs.
pub fn parse_evidence(text: &str) -> Result<Vec<(usize, usize)>, GraphError> {
    let mut t = Tokens::new(text);
    if t.rest().is_none() {
        return Ok(Vec::new());
    }
    let count = t.usize("evidence count")?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let var = t.usize("evidence variable")?;
        let value = t.usize("evidence value")?;
        out.push((var, value));
    }
    if let Some((line, tok)) = t.rest() {
        return Err(GraphError::Syntax {
            line,
            msg: format!("trailing token {tok:?}"),
        });
    }
    Ok(out)
}

pub fn serialize_evidence(evidence: &[(usize, usize)]) -> String {
    let mut s = evidence.len().to_string();
    for (v, x) in evidence {
        let _ = write!(s, " {v} {x}");
    }
    s.push('\n');
    s
}
