use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{AppError, Benchmark, Oracle};
use crate::golden::argmax;
use crate::graph::expand_builtin;
use crate::graph::{
    parse_evidence, parse_uai, serialize_evidence, serialize_uai, FactorGraph, GraphError,
};
use crate::image::Mode;

/// Per-variable results read from a results file, indexed by variable id.
#[derive(Debug, Clone, PartialEq)]
pub enum Results {
    Assignment(Vec<Option<usize>>),
    Marginals(Vec<Option<Vec<f64>>>),
}

impl Results {
    /// The value of `v`, taking the argmax of a marginal.
    pub fn value(&self, v: usize) -> Option<usize> {
        match self {
            Results::Assignment(a) => a.get(v).copied().flatten(),
            Results::Marginals(m) => m.get(v).and_then(|x| x.as_ref()).map(|x| argmax(x)),
        }
    }

    pub fn marginal(&self, v: usize) -> Option<&[f64]> {
        match self {
            Results::Assignment(_) => None,
            Results::Marginals(m) => m.get(v).and_then(|x| x.as_deref()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> AppError {
    AppError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    }
}

/// Reads `var value` lines (an assignment) or `var p0 p1 ...` lines (marginals).
pub fn parse_results(text: &str) -> Result<Results, AppError> {
    let mut assignment: Vec<Option<usize>> = Vec::new();
    let mut marginals: Vec<Option<Vec<f64>>> = Vec::new();
    let mut kind = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let toks: Vec<&str> = body.split_whitespace().collect();
        let syntax = |msg: String| AppError::Syntax { line, msg };
        let v: usize = toks[0]
            .parse()
            .map_err(|_| syntax(format!("bad variable id '{}'", toks[0])))?;
        let is_marginal = toks.len() > 2;
        if toks.len() < 2 {
            return Err(syntax("expected a value after the variable id".into()));
        }
        if *kind.get_or_insert(is_marginal) != is_marginal {
            return Err(syntax("mixed assignment and marginal lines".into()));
        }
        if is_marginal {
            let p: Vec<f64> = toks[1..]
                .iter()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| syntax(format!("bad probability '{t}'")))
                })
                .collect::<Result<_, _>>()?;
            if marginals.len() <= v {
                marginals.resize(v + 1, None);
            }
            marginals[v] = Some(p);
        } else {
            let x: usize = toks[1]
                .parse()
                .map_err(|_| syntax(format!("bad value '{}'", toks[1])))?;
            if assignment.len() <= v {
                assignment.resize(v + 1, None);
            }
            assignment[v] = Some(x);
        }
    }
    Ok(match kind {
        Some(true) => Results::Marginals(marginals),
        _ => Results::Assignment(assignment),
    })
}

/// Same graph with every builtin replaced by its table at zero violation weight.
fn tabulated(graph: &FactorGraph) -> Result<FactorGraph, GraphError> {
    let mut g = graph.clone();
    for f in &mut g.factors {
        if f.kind.is_builtin() {
            let cards = graph.scope_cards(f);
            *f = expand_builtin(f, &cards, 0.0)?;
        }
    }
    Ok(g)
}

/// Writes `<stem>.uai`, `<stem>.evid` and `<stem>.manifest` into `dir`; returns the manifest path.
/// Builtin factors are stored as their exact tables.
pub fn write_manifest(bench: &Benchmark, dir: &Path, stem: &str) -> Result<PathBuf, AppError> {
    let uai = serialize_uai(&tabulated(&bench.graph)?)?;
    let write = |name: String, text: &str| -> Result<(), AppError> {
        let p = dir.join(name);
        fs::write(&p, text).map_err(|e| io_err(&p, e))
    };
    write(format!("{stem}.uai"), &uai)?;
    write(
        format!("{stem}.evid"),
        &serialize_evidence(&bench.evidence()),
    )?;
    let mut m = String::new();
    let _ = writeln!(m, "name {}", bench.name);
    let _ = writeln!(m, "mode {}", bench.mode);
    let _ = writeln!(m, "graph {stem}.uai");
    let _ = writeln!(m, "evidence {stem}.evid");
    let _ = writeln!(m, "tolerance {}", bench.tolerance);
    let _ = writeln!(m, "oracle_description {}", bench.oracle_description);
    match &bench.oracle {
        Oracle::Assignment(a) => {
            let vals: Vec<String> = a.iter().map(usize::to_string).collect();
            let _ = writeln!(m, "oracle assignment {}", vals.join(" "));
        }
        Oracle::Marginals(ms) => {
            let _ = writeln!(m, "oracle marginals");
            for (v, p) in ms.iter().enumerate() {
                let ps: Vec<String> = p.iter().map(f64::to_string).collect();
                let _ = writeln!(m, "marginal {v} {}", ps.join(" "));
            }
        }
        Oracle::ProperColoring(edges) => {
            let _ = writeln!(m, "oracle coloring");
            for (a, b) in edges {
                let _ = writeln!(m, "edge {a} {b}");
            }
        }
    }
    let path = dir.join(format!("{stem}.manifest"));
    fs::write(&path, m).map_err(|e| io_err(&path, e))?;
    Ok(path)
}

/// Reads a manifest of `key value...` lines. Graph and evidence paths are
/// relative to the manifest's directory.
pub fn load_manifest(path: &Path) -> Result<Benchmark, AppError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let (mut name, mut mode, mut graph_path, mut evid_path) = (None, None, None, None);
    let mut tolerance = 0.0;
    let mut description = String::new();
    let mut oracle_kind = None;
    let mut assignment = Vec::new();
    let mut marginals: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut edges = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let syntax = |msg: String| AppError::Syntax { line, msg };
        let (key, rest) = body.split_once(char::is_whitespace).unwrap_or((body, ""));
        let rest = rest.trim();
        let nums = |s: &str| -> Result<Vec<usize>, AppError> {
            s.split_whitespace()
                .map(|t| t.parse().map_err(|_| syntax(format!("bad integer '{t}'"))))
                .collect()
        };
        match key {
            "name" => name = Some(rest.to_string()),
            "mode" => mode = Some(rest.parse::<Mode>().map_err(|e| syntax(e.to_string()))?),
            "graph" => graph_path = Some(dir.join(rest)),
            "evidence" => evid_path = Some(dir.join(rest)),
            "tolerance" => {
                tolerance = rest
                    .parse()
                    .map_err(|_| syntax(format!("bad tolerance '{rest}'")))?
            }
            "oracle_description" => description = rest.to_string(),
            "oracle" => {
                let (kind, vals) = rest.split_once(char::is_whitespace).unwrap_or((rest, ""));
                if kind == "assignment" {
                    assignment = nums(vals)?;
                }
                if !matches!(kind, "assignment" | "marginals" | "coloring") {
                    return Err(syntax(format!("unknown oracle kind '{kind}'")));
                }
                oracle_kind = Some(kind.to_string());
            }
            "marginal" => {
                let mut toks = rest.split_whitespace();
                let v = toks
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| syntax("bad marginal line".into()))?;
                let p = toks
                    .map(|t| {
                        t.parse::<f64>()
                            .map_err(|_| syntax(format!("bad probability '{t}'")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                marginals.push((v, p));
            }
            "edge" => match nums(rest)?[..] {
                [a, b] => edges.push((a, b)),
                _ => return Err(syntax("edge needs two vertices".into())),
            },
            _ => return Err(syntax(format!("unknown key '{key}'"))),
        }
    }
    let missing = |k: &str| AppError::Invalid(format!("{}: missing '{k}'", path.display()));
    let graph_path = graph_path.ok_or_else(|| missing("graph"))?;
    let uai = fs::read_to_string(&graph_path).map_err(|e| io_err(&graph_path, e))?;
    let mut graph = parse_uai(&uai)?;
    if let Some(p) = evid_path {
        let text = fs::read_to_string(&p).map_err(|e| io_err(&p, e))?;
        for (v, x) in parse_evidence(&text)? {
            graph.set_evidence(v, x)?;
        }
    }
    let oracle = match oracle_kind.as_deref().ok_or_else(|| missing("oracle"))? {
        "assignment" => Oracle::Assignment(assignment),
        "marginals" => {
            marginals.sort_by_key(|m| m.0);
            if marginals.iter().enumerate().any(|(i, m)| m.0 != i) {
                return Err(AppError::Invalid(
                    "marginal lines must cover variables 0..n once each".into(),
                ));
            }
            Oracle::Marginals(marginals.into_iter().map(|m| m.1).collect())
        }
        _ => Oracle::ProperColoring(edges),
    };
    let n = graph.variables.len();
    let covered = match &oracle {
        Oracle::Assignment(a) => a.len(),
        Oracle::Marginals(m) => m.len(),
        Oracle::ProperColoring(_) => n,
    };
    if covered != n {
        return Err(AppError::Invalid(format!(
            "oracle covers {covered} variables, graph has {n}"
        )));
    }
    Ok(Benchmark {
        name: name.unwrap_or_else(|| path.display().to_string()),
        graph,
        oracle,
        oracle_description: description,
        mode: mode.ok_or_else(|| missing("mode"))?,
        tolerance,
    })
}
